#include "mmcs/fusion.hpp"

#include <cmath>

namespace mmcs {

namespace {

int modality_dim(const FusionDims& dims, const std::string& modality) {
    if (modality == "audio") return dims.d_audio;
    if (modality == "visual") return dims.d_visual;
    if (modality == "personal") return dims.d_personal;
    throw ConfigError("unknown modality: " + modality);
}

} // namespace

void register_fusion_params(ParamStore& store, const FusionDims& dims, Lcg64& rng) {
    const int d = dims.d;
    store.add("fusion.w_q", xavier_uniform(d, d, rng));
    store.add("fusion.w_k", xavier_uniform(d, d, rng));
    store.add("fusion.w_v", xavier_uniform(d, d, rng));
    for (const char* m : kFusionModalities) {
        const std::string p = std::string("fusion.") + m + ".";
        const int dm = modality_dim(dims, m);
        store.add(p + "u_k", xavier_uniform(dm, d, rng));
        store.add(p + "u_v", xavier_uniform(dm, d, rng));
        store.add(p + "w_k1", xavier_uniform(d, 1, rng));
        store.add(p + "w_k2", xavier_uniform(d, 1, rng));
        store.add(p + "w_v1", xavier_uniform(d, 1, rng));
        store.add(p + "w_v2", xavier_uniform(d, 1, rng));
        store.add(p + "gate_w", xavier_uniform(2 * d, d, rng));
        store.add(p + "gate_b", Tensor({1, d}));
    }
}

QkvIds project_qkv(Tape& tape, ValueId h, BoundParams& params) {
    return {tape.matmul(h, params["fusion.w_q"]),
            tape.matmul(h, params["fusion.w_k"]),
            tape.matmul(h, params["fusion.w_v"])};
}

LambdaIds gate_lambdas(Tape& tape, ValueId k, ValueId v, ValueId m_row,
                       BoundParams& params, const std::string& modality) {
    const std::string p = "fusion." + modality + ".";
    const int l = tape.val(k).rows();

    auto lam = [&](ValueId kv, const char* w1, const char* w2, const char* u) {
        ValueId text_term = tape.matmul(kv, params[p + w1]);          // l x 1
        ValueId mu = tape.matmul(m_row, params[p + u]);               // 1 x d
        ValueId mod_term = tape.matmul(mu, params[p + w2]);           // 1 x 1
        ValueId pre = tape.add(text_term, tape.broadcast_row(mod_term, l));
        return tape.sigmoid(pre);
    };
    return {lam(k, "w_k1", "w_k2", "u_k"), lam(v, "w_v1", "w_v2", "u_v")};
}

KvIds contextual_kv(Tape& tape, ValueId k, ValueId v, ValueId m_row,
                    ValueId lam_k, ValueId lam_v, BoundParams& params,
                    const std::string& modality) {
    const std::string p = "fusion." + modality + ".";
    const int l = tape.val(k).rows();
    const int d = tape.val(k).cols();
    ValueId ones = tape.leaf(Tensor::full({l, 1}, 1.0));

    auto mix = [&](ValueId kv, ValueId lam, const char* u) {
        ValueId keep = tape.broadcast_col(tape.sub(ones, lam), d);    // (1-lam) over cols
        ValueId take = tape.broadcast_col(lam, d);
        ValueId mu = tape.broadcast_row(tape.matmul(m_row, params[p + u]), l);
        return tape.add(tape.mul(keep, kv), tape.mul(take, mu));
    };
    return {mix(k, lam_k, "u_k"), mix(v, lam_v, "u_v")};
}

ValueId modality_attention(Tape& tape, ValueId q, ValueId khat, ValueId vhat,
                           ValueId* attn_probs) {
    const int d = tape.val(q).cols();
    ValueId scores = tape.scale(tape.matmul_nt(q, khat), 1.0 / std::sqrt(double(d)));
    ValueId probs = tape.softmax_rows(scores);
    if (attn_probs) *attn_probs = probs;
    return tape.matmul(probs, vhat);
}

namespace {

ValueId compound_gate_one(Tape& tape, ValueId h, ValueId h_m, BoundParams& params,
                          const std::string& modality, bool gate_sigmoid) {
    const std::string p = "fusion." + modality + ".";
    const int l = tape.val(h).rows();
    ValueId cat = tape.concat_cols(h, h_m);
    ValueId g = tape.add(tape.matmul(cat, params[p + "gate_w"]),
                         tape.broadcast_row(params[p + "gate_b"], l));
    return gate_sigmoid ? tape.sigmoid(g) : g;
}

} // namespace

GateIds compound_gates(Tape& tape, ValueId h, ValueId h_a, ValueId h_v, ValueId h_p,
                       BoundParams& params, bool gate_sigmoid) {
    return {compound_gate_one(tape, h, h_a, params, "audio", gate_sigmoid),
            compound_gate_one(tape, h, h_v, params, "visual", gate_sigmoid),
            compound_gate_one(tape, h, h_p, params, "personal", gate_sigmoid)};
}

ValueId fuse(Tape& tape, ValueId h, ValueId h_a, ValueId h_v, ValueId h_p,
             ValueId g_a, ValueId g_v, ValueId g_p) {
    ValueId acc = tape.add(h, tape.mul(g_p, h_p));
    acc = tape.add(acc, tape.mul(g_a, h_a));
    return tape.add(acc, tape.mul(g_v, h_v));
}

ValueId fusion_forward(Tape& tape, ValueId h, const FusionInputs& inputs,
                       BoundParams& params, const FusionConfig& config,
                       FusionTrace* trace) {
    const Tensor& hv = tape.val(h);
    require_rank2(hv, "fusion_forward");
    const int l = hv.rows();
    const int d = hv.cols();
    if (d != config.dims.d)
        throw DimError("fusion_forward: hidden width " + std::to_string(d) +
                       " does not match configured d " + std::to_string(config.dims.d));

    FusionTrace local;
    FusionTrace& tr = trace ? *trace : local;

    QkvIds qkv = project_qkv(tape, h, params);
    tr.q = qkv.q;
    tr.k = qkv.k;
    tr.v = qkv.v;

    struct Slot {
        const char* name;
        bool enabled;
        const Tensor* m;
        int dm;
        FusionModalityTrace* tr;
    };
    Slot slots[3] = {
        {"audio", config.use_audio, &inputs.audio, config.dims.d_audio, &tr.audio},
        {"visual", config.use_visual, &inputs.video, config.dims.d_visual, &tr.visual},
        {"personal", config.use_personal, &inputs.personal, config.dims.d_personal, &tr.personal},
    };

    ValueId h_m[3];
    ValueId g_m[3];
    for (auto& s : slots) {
        s.tr->enabled = s.enabled;
        const int idx = int(&s - slots);
        if (!s.enabled) {
            // Disabled modality: zero attended state and zero gate keep the
            // fused sum on one code path without training its parameters.
            h_m[idx] = tape.leaf(Tensor({l, d}));
            g_m[idx] = tape.leaf(Tensor({l, d}));
            s.tr->h_m = h_m[idx];
            s.tr->gate = g_m[idx];
            continue;
        }
        try {
            if (s.m->rank() != 2 || s.m->rows() != 1 || s.m->cols() != s.dm)
                throw DimError("modality vector is " + s.m->shape_str() +
                               ", expected [1x" + std::to_string(s.dm) + "]");
            ValueId m_row = tape.leaf(*s.m);
            LambdaIds lams = gate_lambdas(tape, qkv.k, qkv.v, m_row, params, s.name);
            s.tr->lam_k = lams.lam_k;
            s.tr->lam_v = lams.lam_v;
            KvIds kv = contextual_kv(tape, qkv.k, qkv.v, m_row, lams.lam_k,
                                     lams.lam_v, params, s.name);
            s.tr->khat = kv.khat;
            s.tr->vhat = kv.vhat;
            h_m[idx] = modality_attention(tape, qkv.q, kv.khat, kv.vhat, &s.tr->attn_probs);
            s.tr->h_m = h_m[idx];
            g_m[idx] = compound_gate_one(tape, h, h_m[idx], params, s.name,
                                         config.gate_sigmoid);
            s.tr->gate = g_m[idx];
        } catch (const DimError& e) {
            throw DimError(std::string(s.name) + ": " + e.what());
        }
    }

    tr.hhat = fuse(tape, h, h_m[0], h_m[1], h_m[2], g_m[0], g_m[1], g_m[2]);
    return tr.hhat;
}

} // namespace mmcs
