#include "mmcs/model.hpp"

#include <cmath>

namespace mmcs {

using nlohmann::json;

namespace {
constexpr double kMaskValue = -1e30;
}

void ModelConfig::validate() const {
    if (vocab_size < 5) throw ConfigError("vocab_size must be at least 5 (4 reserved ids)");
    if (d_model <= 0 || n_heads <= 0 || d_ff <= 0)
        throw ConfigError("model dimensions must be positive");
    if (d_model % n_heads != 0)
        throw ConfigError("d_model " + std::to_string(d_model) +
                          " not divisible by n_heads " + std::to_string(n_heads));
    if (n_encoder_layers < 1 || n_decoder_layers < 1)
        throw ConfigError("need at least one encoder and one decoder layer");
    if (max_src_len < 3 || max_tgt_len < 2)
        throw ConfigError("sequence length limits too small");
    if (n_intents < 2) throw ConfigError("n_intents must be at least 2");
    if (d_audio < 1 || d_visual < 1 || d_personal < 1)
        throw ConfigError("modality dims must be positive");
    if (gate_activation != "none" && gate_activation != "sigmoid")
        throw ConfigError("gate_activation must be \"none\" or \"sigmoid\"");
    if (std::abs(loss_alpha1 + loss_alpha2 - 1.0) > 1e-12)
        throw ConfigError("loss_alpha1 + loss_alpha2 must equal 1");
    if (loss_alpha1 < 0.0 || loss_alpha2 < 0.0)
        throw ConfigError("loss weights must be non-negative");
}

json ModelConfig::to_json() const {
    json j;
    j["vocab_size"] = vocab_size;
    j["d_model"] = d_model;
    j["n_heads"] = n_heads;
    j["d_ff"] = d_ff;
    j["n_encoder_layers"] = n_encoder_layers;
    j["n_decoder_layers"] = n_decoder_layers;
    j["max_src_len"] = max_src_len;
    j["max_tgt_len"] = max_tgt_len;
    j["n_intents"] = n_intents;
    j["d_audio"] = d_audio;
    j["d_visual"] = d_visual;
    j["d_personal"] = d_personal;
    j["gate_activation"] = gate_activation;
    j["loss_alpha1"] = loss_alpha1;
    j["loss_alpha2"] = loss_alpha2;
    j["seed"] = seed;
    j["use_audio"] = use_audio;
    j["use_visual"] = use_visual;
    j["use_personal"] = use_personal;
    return j;
}

ModelConfig ModelConfig::from_json(const json& j) {
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.n_encoder_layers = j.at("n_encoder_layers").get<int>();
    c.n_decoder_layers = j.at("n_decoder_layers").get<int>();
    c.max_src_len = j.at("max_src_len").get<int>();
    c.max_tgt_len = j.at("max_tgt_len").get<int>();
    c.n_intents = j.at("n_intents").get<int>();
    c.d_audio = j.at("d_audio").get<int>();
    c.d_visual = j.at("d_visual").get<int>();
    c.d_personal = j.at("d_personal").get<int>();
    c.gate_activation = j.at("gate_activation").get<std::string>();
    c.loss_alpha1 = j.at("loss_alpha1").get<double>();
    c.loss_alpha2 = j.at("loss_alpha2").get<double>();
    c.seed = j.at("seed").get<uint64_t>();
    c.use_audio = j.at("use_audio").get<bool>();
    c.use_visual = j.at("use_visual").get<bool>();
    c.use_personal = j.at("use_personal").get<bool>();
    c.validate();
    return c;
}

FusionConfig ModelConfig::fusion_config() const {
    FusionConfig f;
    f.dims = {d_model, d_audio, d_visual, d_personal};
    f.use_audio = use_audio;
    f.use_visual = use_visual;
    f.use_personal = use_personal;
    f.gate_sigmoid = gate_activation == "sigmoid";
    return f;
}

namespace {

void add_attention_spec(std::vector<ParamSpecEntry>& spec, const std::string& prefix, int d) {
    for (const char* w : {"w_q", "w_k", "w_v", "w_o"})
        spec.push_back({prefix + w, {d, d}, InitKind::Xavier});
    for (const char* b : {"b_q", "b_k", "b_v", "b_o"})
        spec.push_back({prefix + b, {1, d}, InitKind::Zero});
}

void add_norm_spec(std::vector<ParamSpecEntry>& spec, const std::string& prefix, int d) {
    spec.push_back({prefix + "gamma", {1, d}, InitKind::One});
    spec.push_back({prefix + "beta", {1, d}, InitKind::Zero});
}

void add_ffn_spec(std::vector<ParamSpecEntry>& spec, const std::string& prefix,
                  int d, int d_ff) {
    spec.push_back({prefix + "w1", {d, d_ff}, InitKind::Xavier});
    spec.push_back({prefix + "b1", {1, d_ff}, InitKind::Zero});
    spec.push_back({prefix + "w2", {d_ff, d}, InitKind::Xavier});
    spec.push_back({prefix + "b2", {1, d}, InitKind::Zero});
}

} // namespace

std::vector<ParamSpecEntry> param_spec(const ModelConfig& c) {
    std::vector<ParamSpecEntry> spec;
    const int d = c.d_model;
    spec.push_back({"embed.tok", {c.vocab_size, d}, InitKind::Xavier});

    for (int i = 0; i < c.n_encoder_layers; ++i) {
        const std::string p = "enc." + std::to_string(i) + ".";
        add_norm_spec(spec, p + "ln1.", d);
        add_attention_spec(spec, p + "attn.", d);
        add_norm_spec(spec, p + "ln2.", d);
        add_ffn_spec(spec, p + "ffn.", d, c.d_ff);
    }
    add_norm_spec(spec, "enc.ln_f.", d);

    spec.push_back({"fusion.w_q", {d, d}, InitKind::Xavier});
    spec.push_back({"fusion.w_k", {d, d}, InitKind::Xavier});
    spec.push_back({"fusion.w_v", {d, d}, InitKind::Xavier});
    const int dm[3] = {c.d_audio, c.d_visual, c.d_personal};
    for (int m = 0; m < 3; ++m) {
        const std::string p = std::string("fusion.") + kFusionModalities[m] + ".";
        spec.push_back({p + "u_k", {dm[m], d}, InitKind::Xavier});
        spec.push_back({p + "u_v", {dm[m], d}, InitKind::Xavier});
        spec.push_back({p + "w_k1", {d, 1}, InitKind::Xavier});
        spec.push_back({p + "w_k2", {d, 1}, InitKind::Xavier});
        spec.push_back({p + "w_v1", {d, 1}, InitKind::Xavier});
        spec.push_back({p + "w_v2", {d, 1}, InitKind::Xavier});
        spec.push_back({p + "gate_w", {2 * d, d}, InitKind::Xavier});
        spec.push_back({p + "gate_b", {1, d}, InitKind::Zero});
    }

    for (int i = 0; i < c.n_decoder_layers; ++i) {
        const std::string p = "dec." + std::to_string(i) + ".";
        add_norm_spec(spec, p + "ln1.", d);
        add_attention_spec(spec, p + "self.", d);
        add_norm_spec(spec, p + "ln2.", d);
        add_attention_spec(spec, p + "cross.", d);
        add_norm_spec(spec, p + "ln3.", d);
        add_ffn_spec(spec, p + "ffn.", d, c.d_ff);
    }
    add_norm_spec(spec, "dec.ln_f.", d);

    spec.push_back({"intent.w", {d, c.n_intents}, InitKind::Xavier});
    spec.push_back({"intent.b", {1, c.n_intents}, InitKind::Zero});
    spec.push_back({"lm.w", {d, c.vocab_size}, InitKind::Xavier});
    spec.push_back({"lm.b", {1, c.vocab_size}, InitKind::Zero});
    return spec;
}

ParamStore build_params(const ModelConfig& config) {
    config.validate();
    Lcg64 rng(config.seed);
    ParamStore store;
    for (const auto& e : param_spec(config)) {
        switch (e.init) {
        case InitKind::Xavier:
            store.add(e.name, xavier_uniform(e.shape[0], e.shape[1], rng));
            break;
        case InitKind::Zero:
            store.add(e.name, Tensor(e.shape));
            break;
        case InitKind::One:
            store.add(e.name, Tensor::full(e.shape, 1.0));
            break;
        }
    }
    return store;
}

Tensor positional_table(int len, int d_model) {
    Tensor t({len, d_model});
    for (int pos = 0; pos < len; ++pos) {
        for (int j = 0; j < d_model; j += 2) {
            const double freq = std::pow(10000.0, -double(j) / d_model);
            t.at(pos, j) = std::sin(pos * freq);
            if (j + 1 < d_model) t.at(pos, j + 1) = std::cos(pos * freq);
        }
    }
    return t;
}

namespace {

// Multi-head attention with pre-normed inputs. add_mask, when >= 0, is an
// additive logit mask broadcast to every head.
ValueId mha(Tape& tape, ValueId q_in, ValueId kv_in, const std::string& prefix,
            int n_heads, ValueId add_mask, BoundParams& params,
            std::vector<ValueId>* probs_out = nullptr) {
    const int d = tape.val(q_in).cols();
    const int d_head = d / n_heads;
    const int lq = tape.val(q_in).rows();
    const int lk = tape.val(kv_in).rows();

    auto proj = [&](ValueId x, const char* w, const char* b, int rows) {
        ValueId y = tape.matmul(x, params[prefix + w]);
        return tape.add(y, tape.broadcast_row(params[prefix + b], rows));
    };
    ValueId q = proj(q_in, "w_q", "b_q", lq);
    ValueId k = proj(kv_in, "w_k", "b_k", lk);
    ValueId v = proj(kv_in, "w_v", "b_v", lk);

    ValueId merged = -1;
    for (int h = 0; h < n_heads; ++h) {
        ValueId qh = tape.slice_cols(q, h * d_head, d_head);
        ValueId kh = tape.slice_cols(k, h * d_head, d_head);
        ValueId vh = tape.slice_cols(v, h * d_head, d_head);
        ValueId scores = tape.scale(tape.matmul_nt(qh, kh),
                                    1.0 / std::sqrt(double(d_head)));
        if (add_mask >= 0) scores = tape.add(scores, add_mask);
        ValueId probs = tape.softmax_rows(scores);
        if (probs_out) probs_out->push_back(probs);
        ValueId oh = tape.matmul(probs, vh);
        merged = h == 0 ? oh : tape.concat_cols(merged, oh);
    }
    ValueId out = tape.matmul(merged, params[prefix + "w_o"]);
    return tape.add(out, tape.broadcast_row(params[prefix + "b_o"], lq));
}

ValueId ffn(Tape& tape, ValueId x, const std::string& prefix, BoundParams& params) {
    const int rows = tape.val(x).rows();
    ValueId h = tape.add(tape.matmul(x, params[prefix + "w1"]),
                         tape.broadcast_row(params[prefix + "b1"], rows));
    h = tape.relu(h);
    return tape.add(tape.matmul(h, params[prefix + "w2"]),
                    tape.broadcast_row(params[prefix + "b2"], rows));
}

ValueId norm(Tape& tape, ValueId x, const std::string& prefix, BoundParams& params) {
    return tape.layer_norm(x, params[prefix + "gamma"], params[prefix + "beta"]);
}

// Additive key mask: 0 for real positions, a large negative for pads,
// repeated for each of the n_query rows.
Tensor key_mask_tensor(const std::vector<double>& pad_mask, int n_query) {
    Tensor m({n_query, static_cast<int>(pad_mask.size())});
    for (int i = 0; i < n_query; ++i)
        for (size_t j = 0; j < pad_mask.size(); ++j)
            m.at(i, static_cast<int>(j)) = pad_mask[j] > 0.0 ? 0.0 : kMaskValue;
    return m;
}

Tensor causal_mask_tensor(int t) {
    Tensor m({t, t});
    for (int i = 0; i < t; ++i)
        for (int j = i + 1; j < t; ++j) m.at(i, j) = kMaskValue;
    return m;
}

ValueId embed(Tape& tape, const std::vector<int>& ids, BoundParams& params,
              const ModelConfig& config) {
    ValueId e = tape.lookup_rows(params["embed.tok"], ids);
    Tensor pos = positional_table(static_cast<int>(ids.size()), config.d_model);
    return tape.add(e, tape.leaf(std::move(pos)));
}

} // namespace

EncodeResult encoder_forward(Tape& tape, const std::vector<int>& src_ids_in,
                             const FusionInputs& inputs, BoundParams& params,
                             const ModelConfig& config, const EncodeOptions& options) {
    EncodeResult res;
    if (src_ids_in.empty()) throw InputError("empty source");
    res.src_ids = src_ids_in;
    if (static_cast<int>(res.src_ids.size()) > config.max_src_len) {
        res.src_ids.resize(static_cast<size_t>(config.max_src_len));
        res.truncated = true;
    }
    bool any_real = false;
    for (int id : res.src_ids) {
        if (id < 0 || id >= config.vocab_size)
            throw InputError("source id " + std::to_string(id) + " outside vocabulary of " +
                             std::to_string(config.vocab_size));
        if (id != VocabSpec::kPad) any_real = true;
    }
    if (!any_real) throw InputError("empty source");

    res.pad_mask.reserve(res.src_ids.size());
    for (int id : res.src_ids) res.pad_mask.push_back(id == VocabSpec::kPad ? 0.0 : 1.0);

    const int l = static_cast<int>(res.src_ids.size());
    ValueId x = embed(tape, res.src_ids, params, config);
    ValueId attn_mask = tape.leaf(key_mask_tensor(res.pad_mask, l));

    for (int i = 0; i < config.n_encoder_layers; ++i) {
        const std::string p = "enc." + std::to_string(i) + ".";
        ValueId n1 = norm(tape, x, p + "ln1.", params);
        ValueId a = mha(tape, n1, n1, p + "attn.", config.n_heads, attn_mask, params);
        x = tape.add(x, a);
        ValueId f = ffn(tape, norm(tape, x, p + "ln2.", params), p + "ffn.", params);
        x = tape.add(x, f);
    }
    res.h = norm(tape, x, "enc.ln_f.", params);

    if (options.fusion_bypass) {
        res.hhat = res.h;
    } else {
        res.hhat = fusion_forward(tape, res.h, inputs, params, config.fusion_config(),
                                  &res.fusion);
    }
    return res;
}

ValueId intent_logits(Tape& tape, ValueId hhat, const std::vector<double>& pad_mask,
                      BoundParams& params, const ModelConfig& config) {
    const int l = tape.val(hhat).rows();
    if (tape.val(hhat).cols() != config.d_model)
        throw DimError("intent_logits: hidden width " +
                       std::to_string(tape.val(hhat).cols()) + " vs configured d_model " +
                       std::to_string(config.d_model));
    if (static_cast<int>(pad_mask.size()) != l)
        throw DimError("intent_logits: mask length " + std::to_string(pad_mask.size()) +
                       " vs sequence length " + std::to_string(l));
    double total = 0.0;
    for (double m : pad_mask) total += m;
    if (total <= 0.0) throw InputError("intent_logits: all positions are pads");

    Tensor w({1, l});
    for (int j = 0; j < l; ++j) w[j] = pad_mask[static_cast<size_t>(j)] / total;
    ValueId pooled = tape.matmul(tape.leaf(std::move(w)), hhat); // 1 x d
    ValueId logits = tape.matmul(pooled, params["intent.w"]);
    return tape.add(logits, tape.broadcast_row(params["intent.b"], 1));
}

DecodeResult decoder_forward(Tape& tape, const std::vector<int>& tgt_in_ids,
                             ValueId hhat, const std::vector<double>& src_pad_mask,
                             BoundParams& params, const ModelConfig& config) {
    if (tgt_in_ids.empty()) throw InputError("decoder input is empty");
    if (tgt_in_ids.front() != VocabSpec::kBos)
        throw InputError("decoder input must begin with BOS");
    if (static_cast<int>(tgt_in_ids.size()) > config.max_tgt_len)
        throw InputError("decoder input longer than max_tgt_len " +
                         std::to_string(config.max_tgt_len));
    for (int id : tgt_in_ids)
        if (id < 0 || id >= config.vocab_size)
            throw InputError("target id " + std::to_string(id) + " outside vocabulary");

    const int t = static_cast<int>(tgt_in_ids.size());
    DecodeResult res;
    ValueId x = embed(tape, tgt_in_ids, params, config);
    ValueId causal = tape.leaf(causal_mask_tensor(t));
    ValueId cross_mask = tape.leaf(key_mask_tensor(src_pad_mask, t));

    for (int i = 0; i < config.n_decoder_layers; ++i) {
        const std::string p = "dec." + std::to_string(i) + ".";
        ValueId n1 = norm(tape, x, p + "ln1.", params);
        ValueId a = mha(tape, n1, n1, p + "self.", config.n_heads, causal, params);
        x = tape.add(x, a);
        ValueId c = mha(tape, norm(tape, x, p + "ln2.", params), hhat, p + "cross.",
                        config.n_heads, cross_mask, params, &res.cross_probs);
        x = tape.add(x, c);
        ValueId f = ffn(tape, norm(tape, x, p + "ln3.", params), p + "ffn.", params);
        x = tape.add(x, f);
    }
    x = norm(tape, x, "dec.ln_f.", params);
    ValueId logits = tape.matmul(x, params["lm.w"]);
    res.logits = tape.add(logits, tape.broadcast_row(params["lm.b"], t));
    return res;
}

LossIds joint_loss(Tape& tape, ValueId intent_logit_id, int intent_label,
                   ValueId lm_logits, const std::vector<int>& tgt_full_ids,
                   const ModelConfig& config) {
    if (intent_label < 0 || intent_label >= config.n_intents)
        throw InputError("intent label " + std::to_string(intent_label) +
                         " outside [0," + std::to_string(config.n_intents) + ")");
    if (tgt_full_ids.size() < 2)
        throw InputError("target sequence needs at least BOS and EOS");

    LossIds out;
    ValueId intent_logp = tape.log_softmax_rows(intent_logit_id);
    out.intent = tape.nll_mean(intent_logp, {intent_label}, {1.0});

    // Labels: the target shifted left; the row count of lm_logits must match.
    const int t = tape.val(lm_logits).rows();
    if (t != static_cast<int>(tgt_full_ids.size()) - 1)
        throw DimError("joint_loss: lm logits rows " + std::to_string(t) +
                       " vs shifted target length " +
                       std::to_string(tgt_full_ids.size() - 1));
    std::vector<int> labels(tgt_full_ids.begin() + 1, tgt_full_ids.end());
    std::vector<double> weights(labels.size());
    for (size_t i = 0; i < labels.size(); ++i)
        weights[i] = labels[i] == VocabSpec::kPad ? 0.0 : 1.0;
    ValueId lm_logp = tape.log_softmax_rows(lm_logits);
    out.generation = tape.nll_mean(lm_logp, labels, weights);

    out.total = tape.add(tape.scale(out.intent, config.loss_alpha1),
                         tape.scale(out.generation, config.loss_alpha2));
    return out;
}

FusionInputs bundle_inputs(const ModalityBundle& bundle) {
    return {bundle.audio_vec, bundle.video_vec, bundle.personal_vec};
}

namespace {

const std::vector<int>& select_target(const ModalityBundle& bundle,
                                      const std::string& target) {
    if (target == "mcs") return bundle.tgt_ids;
    if (target == "doctor") {
        if (!bundle.doctor_tgt_ids)
            throw InputError("session " + bundle.session_id + " has no doctor summary");
        return *bundle.doctor_tgt_ids;
    }
    throw ConfigError("unknown target: " + target);
}

struct ForwardIds {
    LossIds loss;
    EncodeResult enc;
};

ForwardIds full_forward(Tape& tape, BoundParams& params, const ModalityBundle& bundle,
                        const ModelConfig& config, const std::string& target) {
    ForwardIds out;
    out.enc = encoder_forward(tape, bundle.src_ids, bundle_inputs(bundle), params, config);
    ValueId il = intent_logits(tape, out.enc.hhat, out.enc.pad_mask, params, config);

    const std::vector<int>& tgt = select_target(bundle, target);
    if (tgt.size() < 2) throw InputError("target sequence needs at least BOS and EOS");
    std::vector<int> tgt_in(tgt.begin(), tgt.end() - 1);
    DecodeResult dec = decoder_forward(tape, tgt_in, out.enc.hhat, out.enc.pad_mask,
                                       params, config);
    out.loss = joint_loss(tape, il, bundle.intent, dec.logits, tgt, config);
    return out;
}

} // namespace

ForwardBackwardResult model_forward_backward(const ModalityBundle& bundle,
                                             const ParamStore& store,
                                             const ModelConfig& config,
                                             const std::string& target) {
    Tape tape;
    BoundParams params(tape, store);
    ForwardIds f = full_forward(tape, params, bundle, config, target);
    ForwardBackwardResult res;
    res.loss = tape.val(f.loss.total)[0];
    res.intent_loss = tape.val(f.loss.intent)[0];
    res.generation_loss = tape.val(f.loss.generation)[0];
    res.truncated = f.enc.truncated;
    if (!std::isfinite(res.loss)) {
        throw NumericError("non-finite loss for session " + bundle.session_id);
    }
    tape.backward(f.loss.total);
    res.grads = params.collect_grads();
    return res;
}

double model_forward_loss(const ModalityBundle& bundle, const ParamStore& store,
                          const ModelConfig& config, const std::string& target) {
    Tape tape;
    BoundParams params(tape, store);
    ForwardIds f = full_forward(tape, params, bundle, config, target);
    return tape.val(f.loss.total)[0];
}

std::vector<int> greedy_decode(const ParamStore& store, const ModelConfig& config,
                               const std::vector<int>& src_ids,
                               const FusionInputs& inputs, int max_len,
                               const EncodeOptions& options) {
    std::vector<int> out;
    std::vector<int> prefix = {VocabSpec::kBos};
    const int budget = std::min(max_len, config.max_tgt_len);
    // One tape for the whole decode: the encoder runs once and each step
    // appends a fresh decoder pass over the grown prefix.
    Tape tape;
    BoundParams params(tape, store);
    EncodeResult enc = encoder_forward(tape, src_ids, inputs, params, config, options);
    for (int step = 0; step < budget; ++step) {
        DecodeResult dec = decoder_forward(tape, prefix, enc.hhat, enc.pad_mask,
                                           params, config);
        const Tensor& logits = tape.val(dec.logits);
        const int last = logits.rows() - 1;
        int best = 0;
        double best_v = logits.at(last, 0);
        for (int j = 1; j < logits.cols(); ++j) {
            if (logits.at(last, j) > best_v) { // strict: ties keep the lowest id
                best_v = logits.at(last, j);
                best = j;
            }
        }
        if (best == VocabSpec::kEos) break;
        out.push_back(best);
        prefix.push_back(best);
        if (static_cast<int>(prefix.size()) >= config.max_tgt_len) break;
    }
    return out;
}

} // namespace mmcs
