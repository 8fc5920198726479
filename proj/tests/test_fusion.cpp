#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mmcs/fusion.hpp"
#include "mmcs/reference.hpp"

using namespace mmcs;

namespace {

Tensor random_tensor(std::vector<int> shape, Lcg64& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

ParamStore make_store(const FusionDims& dims, uint64_t seed) {
    Lcg64 rng(seed);
    ParamStore store;
    register_fusion_params(store, dims, rng);
    return store;
}

void set_all(ParamStore& store, const std::string& name, double v) {
    store.value(name).fill(v);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.same_shape(b));
    double m = 0;
    for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

FusionInputs random_inputs(const FusionDims& dims, Lcg64& rng) {
    return {random_tensor({1, dims.d_audio}, rng),
            random_tensor({1, dims.d_visual}, rng),
            random_tensor({1, dims.d_personal}, rng)};
}

} // namespace

TEST_CASE("project_qkv identity and zero cases, oracle on random input") {
    FusionDims dims{8, 3, 3, 3};
    ParamStore store = make_store(dims, 1);
    Lcg64 rng(2);

    SUBCASE("identity projections return H") {
        store.value("fusion.w_q") = Tensor::identity(8);
        store.value("fusion.w_k") = Tensor::identity(8);
        store.value("fusion.w_v") = Tensor::identity(8);
        Tape tape;
        BoundParams params(tape, store);
        Tensor hv = random_tensor({4, 8}, rng);
        ValueId h = tape.leaf(hv);
        QkvIds qkv = project_qkv(tape, h, params);
        CHECK(tape.val(qkv.q).bit_equal(hv));
        CHECK(tape.val(qkv.k).bit_equal(hv));
        CHECK(tape.val(qkv.v).bit_equal(hv));
    }

    SUBCASE("zero H gives zero projections") {
        Tape tape;
        BoundParams params(tape, store);
        ValueId h = tape.leaf(Tensor({4, 8}));
        QkvIds qkv = project_qkv(tape, h, params);
        for (ValueId id : {qkv.q, qkv.k, qkv.v})
            for (int64_t i = 0; i < tape.val(id).size(); ++i) CHECK(tape.val(id)[i] == 0.0);
    }

    SUBCASE("random instance matches the naive matmul oracle") {
        Tape tape;
        BoundParams params(tape, store);
        Tensor hv = random_tensor({4, 8}, rng);
        ValueId h = tape.leaf(hv);
        QkvIds qkv = project_qkv(tape, h, params);
        CHECK(tape.val(qkv.q).shape() == std::vector<int>{4, 8});
        CHECK(max_abs_diff(tape.val(qkv.q), ref::matmul(hv, store.value("fusion.w_q"))) == 0.0);
        CHECK(max_abs_diff(tape.val(qkv.k), ref::matmul(hv, store.value("fusion.w_k"))) == 0.0);
        CHECK(max_abs_diff(tape.val(qkv.v), ref::matmul(hv, store.value("fusion.w_v"))) == 0.0);
    }
}

TEST_CASE("gate_lambdas zero weights, monotone limit, scalar-loop oracle") {
    FusionDims dims{6, 4, 4, 4};
    Lcg64 rng(3);

    SUBCASE("all-zero weights give lambda 0.5 everywhere") {
        ParamStore store = make_store(dims, 1);
        for (const char* w : {"w_k1", "w_k2", "w_v1", "w_v2", "u_k", "u_v"})
            set_all(store, std::string("fusion.audio.") + w, 0.0);
        Tape tape;
        BoundParams params(tape, store);
        ValueId k = tape.leaf(random_tensor({5, 6}, rng));
        ValueId v = tape.leaf(random_tensor({5, 6}, rng));
        ValueId m = tape.leaf(random_tensor({1, 4}, rng));
        LambdaIds lam = gate_lambdas(tape, k, v, m, params, "audio");
        for (int i = 0; i < 5; ++i) {
            CHECK(tape.val(lam.lam_k).at(i, 0) == 0.5);
            CHECK(tape.val(lam.lam_v).at(i, 0) == 0.5);
        }
    }

    SUBCASE("scaling w_k1 drives lambda monotonically toward 1") {
        Tensor kv = Tensor::full({3, 6}, 0.7); // positive k.w_k1 per row
        double prev = 0.0;
        for (double s : {0.25, 1.0, 4.0, 8.0}) {
            ParamStore store = make_store(dims, 1);
            set_all(store, "fusion.audio.w_k1", s);
            set_all(store, "fusion.audio.w_k2", 0.0);
            Tape tape;
            BoundParams params(tape, store);
            ValueId k = tape.leaf(kv);
            ValueId v = tape.leaf(kv);
            ValueId m = tape.leaf(Tensor({1, 4}));
            LambdaIds lam = gate_lambdas(tape, k, v, m, params, "audio");
            const double cur = tape.val(lam.lam_k).at(0, 0);
            CHECK(cur > prev);
            prev = cur;
        }
        CHECK(prev > 1.0 - 1e-9);
    }

    SUBCASE("random instance matches the scalar-loop oracle to 1e-12") {
        ParamStore store = make_store(dims, 7);
        Tape tape;
        BoundParams params(tape, store);
        Tensor kv = random_tensor({5, 6}, rng);
        Tensor vv = random_tensor({5, 6}, rng);
        Tensor mv = random_tensor({1, 4}, rng);
        LambdaIds lam = gate_lambdas(tape, tape.leaf(kv), tape.leaf(vv), tape.leaf(mv),
                                     params, "visual");
        Tensor want_k = ref::sigmoid(ref::gate_preact(kv, store.value("fusion.visual.w_k1"),
                                                      mv, store.value("fusion.visual.u_k"),
                                                      store.value("fusion.visual.w_k2")));
        Tensor want_v = ref::sigmoid(ref::gate_preact(vv, store.value("fusion.visual.w_v1"),
                                                      mv, store.value("fusion.visual.u_v"),
                                                      store.value("fusion.visual.w_v2")));
        CHECK(max_abs_diff(tape.val(lam.lam_k), want_k) < 1e-12);
        CHECK(max_abs_diff(tape.val(lam.lam_v), want_v) < 1e-12);
    }

    SUBCASE("mismatched modality vector raises a dimension error") {
        ParamStore store = make_store(dims, 1);
        Tape tape;
        BoundParams params(tape, store);
        ValueId k = tape.leaf(random_tensor({5, 6}, rng));
        ValueId m_bad = tape.leaf(random_tensor({1, 3}, rng)); // d_m is 4
        CHECK_THROWS_AS(gate_lambdas(tape, k, k, m_bad, params, "audio"), DimError);
    }
}

TEST_CASE("contextual_kv interpolation endpoints and hand case") {
    FusionDims dims{4, 2, 2, 2};
    ParamStore store = make_store(dims, 5);
    Lcg64 rng(11);

    Tensor kv = random_tensor({3, 4}, rng);
    Tensor vv = random_tensor({3, 4}, rng);
    Tensor mv = random_tensor({1, 2}, rng);

    auto run = [&](double lam_value) {
        Tape tape;
        BoundParams params(tape, store);
        ValueId lam = tape.leaf(Tensor::full({3, 1}, lam_value));
        KvIds out = contextual_kv(tape, tape.leaf(kv), tape.leaf(vv), tape.leaf(mv),
                                  lam, lam, params, "audio");
        return std::pair<Tensor, Tensor>(tape.val(out.khat), tape.val(out.vhat));
    };

    SUBCASE("lambda 0 returns K exactly") {
        auto [khat, vhat] = run(0.0);
        CHECK(khat.bit_equal(kv));
        CHECK(vhat.bit_equal(vv));
    }

    SUBCASE("lambda 1 repeats M.U on every row") {
        auto [khat, vhat] = run(1.0);
        Tensor mu_k = ref::matmul(mv, store.value("fusion.audio.u_k"));
        Tensor mu_v = ref::matmul(mv, store.value("fusion.audio.u_v"));
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 4; ++j) {
                CHECK(khat.at(i, j) == mu_k.at(0, j));
                CHECK(vhat.at(i, j) == mu_v.at(0, j));
            }
    }

    SUBCASE("lambda 0.25 with K=1 and M.U=5 gives 2") {
        ParamStore unit = make_store(dims, 1);
        set_all(unit, "fusion.audio.u_k", 0.0);
        set_all(unit, "fusion.audio.u_v", 0.0);
        // m = [5, 0], u_k[0][j] = 1 -> every component of M.U equals 5
        for (int j = 0; j < 4; ++j) {
            unit.value("fusion.audio.u_k").at(0, j) = 1.0;
            unit.value("fusion.audio.u_v").at(0, j) = 1.0;
        }
        Tape tape;
        BoundParams params(tape, unit);
        ValueId lam = tape.leaf(Tensor::full({3, 1}, 0.25));
        KvIds out = contextual_kv(tape, tape.leaf(Tensor::full({3, 4}, 1.0)),
                                  tape.leaf(Tensor::full({3, 4}, 1.0)),
                                  tape.leaf(Tensor::from({1, 2}, {5.0, 0.0})), lam, lam,
                                  params, "audio");
        for (int64_t i = 0; i < tape.val(out.khat).size(); ++i)
            CHECK(tape.val(out.khat)[i] == doctest::Approx(2.0).epsilon(1e-14));
    }

    SUBCASE("random instance matches the interpolation oracle") {
        Tape tape;
        BoundParams params(tape, store);
        Tensor lam_k = random_tensor({3, 1}, rng, 0.05, 0.95);
        Tensor lam_v = random_tensor({3, 1}, rng, 0.05, 0.95);
        KvIds out = contextual_kv(tape, tape.leaf(kv), tape.leaf(vv), tape.leaf(mv),
                                  tape.leaf(lam_k), tape.leaf(lam_v), params, "audio");
        Tensor want_k = ref::lerp_rows(kv, lam_k, mv, store.value("fusion.audio.u_k"));
        Tensor want_v = ref::lerp_rows(vv, lam_v, mv, store.value("fusion.audio.u_v"));
        CHECK(max_abs_diff(tape.val(out.khat), want_k) < 1e-12);
        CHECK(max_abs_diff(tape.val(out.vhat), want_v) < 1e-12);
    }
}

TEST_CASE("modality_attention degenerate and oracle cases") {
    Lcg64 rng(13);

    SUBCASE("single position attends to itself exactly") {
        Tape tape;
        Tensor q = random_tensor({1, 4}, rng);
        Tensor k = random_tensor({1, 4}, rng);
        Tensor v = random_tensor({1, 4}, rng);
        ValueId probs = -1;
        ValueId h = modality_attention(tape, tape.leaf(q), tape.leaf(k), tape.leaf(v), &probs);
        CHECK(tape.val(probs).at(0, 0) == 1.0);
        CHECK(tape.val(h).bit_equal(v));
    }

    SUBCASE("zero values give zero output") {
        Tape tape;
        ValueId h = modality_attention(tape, tape.leaf(random_tensor({3, 4}, rng)),
                                       tape.leaf(random_tensor({3, 4}, rng)),
                                       tape.leaf(Tensor({3, 4})));
        for (int64_t i = 0; i < tape.val(h).size(); ++i) CHECK(tape.val(h)[i] == 0.0);
    }

    SUBCASE("3x4 random instance matches the three-loop oracle to 1e-12") {
        Tensor q = random_tensor({3, 4}, rng);
        Tensor k = random_tensor({3, 4}, rng);
        Tensor v = random_tensor({3, 4}, rng);
        Tape tape;
        ValueId h = modality_attention(tape, tape.leaf(q), tape.leaf(k), tape.leaf(v));
        CHECK(max_abs_diff(tape.val(h), ref::attention(q, k, v)) < 1e-12);
    }

    SUBCASE("attention rows sum to one") {
        Tape tape;
        ValueId probs = -1;
        modality_attention(tape, tape.leaf(random_tensor({5, 4}, rng)),
                           tape.leaf(random_tensor({5, 4}, rng)),
                           tape.leaf(random_tensor({5, 4}, rng)), &probs);
        for (int i = 0; i < 5; ++i) {
            double s = 0;
            for (int j = 0; j < 5; ++j) s += tape.val(probs).at(i, j);
            CHECK(std::abs(s - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("compound_gates zero map, bias only, concat oracle") {
    FusionDims dims{4, 2, 2, 2};
    Lcg64 rng(17);
    Tensor hv = random_tensor({3, 4}, rng);
    Tensor ha = random_tensor({3, 4}, rng);
    Tensor hv2 = random_tensor({3, 4}, rng);
    Tensor hp = random_tensor({3, 4}, rng);

    SUBCASE("zero weights and bias give zero gates") {
        ParamStore store = make_store(dims, 3);
        for (const char* m : kFusionModalities) {
            set_all(store, std::string("fusion.") + m + ".gate_w", 0.0);
            set_all(store, std::string("fusion.") + m + ".gate_b", 0.0);
        }
        Tape tape;
        BoundParams params(tape, store);
        GateIds g = compound_gates(tape, tape.leaf(hv), tape.leaf(ha), tape.leaf(hv2),
                                   tape.leaf(hp), params, false);
        for (ValueId id : {g.g_a, g.g_v, g.g_p})
            for (int64_t i = 0; i < tape.val(id).size(); ++i) CHECK(tape.val(id)[i] == 0.0);
    }

    SUBCASE("bias-only gates broadcast the bias over rows") {
        ParamStore store = make_store(dims, 3);
        for (const char* m : kFusionModalities) {
            set_all(store, std::string("fusion.") + m + ".gate_w", 0.0);
            set_all(store, std::string("fusion.") + m + ".gate_b", 1.0);
        }
        Tape tape;
        BoundParams params(tape, store);
        GateIds g = compound_gates(tape, tape.leaf(hv), tape.leaf(ha), tape.leaf(hv2),
                                   tape.leaf(hp), params, false);
        for (int64_t i = 0; i < tape.val(g.g_a).size(); ++i)
            CHECK(tape.val(g.g_a)[i] == 1.0);
    }

    SUBCASE("random instance matches the concat-then-matmul oracle to 1e-12") {
        ParamStore store = make_store(dims, 9);
        Tape tape;
        BoundParams params(tape, store);
        GateIds g = compound_gates(tape, tape.leaf(hv), tape.leaf(ha), tape.leaf(hv2),
                                   tape.leaf(hp), params, false);
        Tensor want = ref::concat_affine(hv, ha, store.value("fusion.audio.gate_w"),
                                         store.value("fusion.audio.gate_b"));
        CHECK(max_abs_diff(tape.val(g.g_a), want) < 1e-12);
    }
}

TEST_CASE("fuse gate-zero fallback and reductions") {
    Lcg64 rng(19);
    Tensor hv = random_tensor({3, 4}, rng);
    Tensor ha = random_tensor({3, 4}, rng);
    Tensor hvv = random_tensor({3, 4}, rng);
    Tensor hp = random_tensor({3, 4}, rng);

    SUBCASE("all gates zero returns H bit-identically") {
        Tape tape;
        ValueId zero = tape.leaf(Tensor({3, 4}));
        ValueId out = fuse(tape, tape.leaf(hv), tape.leaf(ha), tape.leaf(hvv),
                           tape.leaf(hp), zero, zero, zero);
        CHECK(tape.val(out).bit_equal(hv));
    }

    SUBCASE("unit gates with zero audio/visual reduce to H + H_p") {
        Tape tape;
        ValueId one = tape.leaf(Tensor::full({3, 4}, 1.0));
        ValueId zero = tape.leaf(Tensor({3, 4}));
        ValueId out = fuse(tape, tape.leaf(hv), zero, zero, tape.leaf(hp), one, one, one);
        for (int64_t i = 0; i < hv.size(); ++i)
            CHECK(tape.val(out)[i] == hv[i] + hp[i]);
    }

    SUBCASE("random instance matches the elementwise oracle") {
        Tensor ga = random_tensor({3, 4}, rng);
        Tensor gv = random_tensor({3, 4}, rng);
        Tensor gp = random_tensor({3, 4}, rng);
        Tape tape;
        ValueId out = fuse(tape, tape.leaf(hv), tape.leaf(ha), tape.leaf(hvv),
                           tape.leaf(hp), tape.leaf(ga), tape.leaf(gv), tape.leaf(gp));
        for (int64_t i = 0; i < hv.size(); ++i) {
            const double want = hv[i] + gp[i] * hp[i] + ga[i] * ha[i] + gv[i] * hvv[i];
            CHECK(std::abs(tape.val(out)[i] - want) < 1e-12);
        }
    }
}

TEST_CASE("fusion_forward ablations and composition oracle") {
    FusionDims dims{8, 3, 3, 3};
    Lcg64 rng(23);
    ParamStore store = make_store(dims, 21);

    FusionConfig config;
    config.dims = dims;

    SUBCASE("all modalities disabled leaves H untouched") {
        FusionConfig off = config;
        off.use_audio = off.use_visual = off.use_personal = false;
        Tape tape;
        BoundParams params(tape, store);
        Tensor hv = random_tensor({4, 8}, rng);
        FusionInputs in = random_inputs(dims, rng);
        ValueId out = fusion_forward(tape, tape.leaf(hv), in, params, off);
        CHECK(tape.val(out).bit_equal(hv));
    }

    SUBCASE("audio-only run leaves the other modality terms at zero") {
        FusionConfig audio_only = config;
        audio_only.use_visual = audio_only.use_personal = false;
        Tape tape;
        BoundParams params(tape, store);
        FusionTrace trace;
        Tensor hv = random_tensor({4, 8}, rng);
        FusionInputs in = random_inputs(dims, rng);
        fusion_forward(tape, tape.leaf(hv), in, params, audio_only, &trace);
        CHECK(trace.audio.enabled);
        CHECK_FALSE(trace.visual.enabled);
        for (int64_t i = 0; i < tape.val(trace.visual.h_m).size(); ++i) {
            CHECK(tape.val(trace.visual.h_m)[i] == 0.0);
            CHECK(tape.val(trace.visual.gate)[i] == 0.0);
            CHECK(tape.val(trace.personal.h_m)[i] == 0.0);
            CHECK(tape.val(trace.personal.gate)[i] == 0.0);
        }
    }

    SUBCASE("full forward composes the five sub-op oracles") {
        Tape tape;
        BoundParams params(tape, store);
        FusionTrace trace;
        Tensor hv = random_tensor({4, 8}, rng);
        FusionInputs in = random_inputs(dims, rng);
        ValueId out = fusion_forward(tape, tape.leaf(hv), in, params, config, &trace);

        // Recompute everything with the serial reference oracles.
        Tensor q = ref::matmul(hv, store.value("fusion.w_q"));
        Tensor k = ref::matmul(hv, store.value("fusion.w_k"));
        Tensor v = ref::matmul(hv, store.value("fusion.w_v"));

        Tensor want = hv;
        struct Slot {
            const char* name;
            const Tensor* m;
        };
        const Slot slots[3] = {{"personal", &in.personal}, {"audio", &in.audio},
                               {"visual", &in.video}};
        for (const auto& s : slots) {
            const std::string p = std::string("fusion.") + s.name + ".";
            Tensor lam_k = ref::sigmoid(ref::gate_preact(k, store.value(p + "w_k1"), *s.m,
                                                         store.value(p + "u_k"),
                                                         store.value(p + "w_k2")));
            Tensor lam_v = ref::sigmoid(ref::gate_preact(v, store.value(p + "w_v1"), *s.m,
                                                         store.value(p + "u_v"),
                                                         store.value(p + "w_v2")));
            Tensor khat = ref::lerp_rows(k, lam_k, *s.m, store.value(p + "u_k"));
            Tensor vhat = ref::lerp_rows(v, lam_v, *s.m, store.value(p + "u_v"));
            Tensor scores({4, 4});
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j) {
                    double acc = 0;
                    for (int c = 0; c < 8; ++c) acc += q.at(i, c) * khat.at(j, c);
                    scores.at(i, j) = acc / std::sqrt(8.0);
                }
            Tensor hm = ref::matmul(ref::softmax_rows(scores), vhat);
            Tensor gate = ref::concat_affine(hv, hm, store.value(p + "gate_w"),
                                             store.value(p + "gate_b"));
            for (int64_t i = 0; i < want.size(); ++i) want[i] += gate[i] * hm[i];
        }
        CHECK(max_abs_diff(tape.val(out), want) < 1e-12);
    }
}

TEST_CASE("gate-zero identity through the full adapter") {
    FusionDims dims{8, 3, 5, 4};
    ParamStore store = make_store(dims, 31);
    for (const char* m : kFusionModalities) {
        set_all(store, std::string("fusion.") + m + ".gate_w", 0.0);
        set_all(store, std::string("fusion.") + m + ".gate_b", 0.0);
    }
    FusionConfig config;
    config.dims = dims;
    Lcg64 rng(37);
    Tape tape;
    BoundParams params(tape, store);
    Tensor hv = random_tensor({6, 8}, rng);
    ValueId out = fusion_forward(tape, tape.leaf(hv), random_inputs(dims, rng), params, config);
    CHECK(tape.val(out).bit_equal(hv));
}

TEST_CASE("lambda endpoint reduces to plain attention bit for bit") {
    FusionDims dims{8, 3, 3, 3};
    ParamStore store = make_store(dims, 41);
    Lcg64 rng(43);
    Tape tape;
    BoundParams params(tape, store);
    Tensor hv = random_tensor({5, 8}, rng);
    ValueId h = tape.leaf(hv);
    QkvIds qkv = project_qkv(tape, h, params);
    ValueId m_row = tape.leaf(random_tensor({1, 3}, rng));
    ValueId lam0 = tape.leaf(Tensor({5, 1}));

    KvIds kv = contextual_kv(tape, qkv.k, qkv.v, m_row, lam0, lam0, params, "audio");
    CHECK(tape.val(kv.khat).bit_equal(tape.val(qkv.k)));
    CHECK(tape.val(kv.vhat).bit_equal(tape.val(qkv.v)));

    ValueId with_modality = modality_attention(tape, qkv.q, kv.khat, kv.vhat);
    ValueId plain = modality_attention(tape, qkv.q, qkv.k, qkv.v);
    CHECK(tape.val(with_modality).bit_equal(tape.val(plain)));
}

TEST_CASE("permutation equivariance of the adapter") {
    FusionDims dims{8, 3, 3, 3};
    ParamStore store = make_store(dims, 53);
    FusionConfig config;
    config.dims = dims;
    Lcg64 rng(59);
    Tensor hv = random_tensor({6, 8}, rng);
    FusionInputs in = random_inputs(dims, rng);

    const int perm[6] = {4, 2, 0, 5, 1, 3};
    Tensor hp({6, 8});
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 8; ++j) hp.at(i, j) = hv.at(perm[i], j);

    auto run = [&](const Tensor& h) {
        Tape tape;
        BoundParams params(tape, store);
        ValueId out = fusion_forward(tape, tape.leaf(h), in, params, config);
        return tape.val(out);
    };
    Tensor base = run(hv);
    Tensor permuted = run(hp);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 8; ++j)
            CHECK(permuted.at(i, j) == doctest::Approx(base.at(perm[i], j)).epsilon(1e-12));
}

TEST_CASE("fusion gradients match finite differences over random configurations") {
    const int ls[4] = {1, 2, 4, 8};
    const int ds[2] = {4, 8};
    const int dms[2] = {3, 5};
    Lcg64 rng(61);
    int config_count = 0;

    for (int li = 0; li < 4; ++li) {
        for (int di = 0; di < 2; ++di) {
            for (int mi = 0; mi < 2; ++mi) {
                if (config_count >= 20) break;
                ++config_count;
                const int l = ls[li], d = ds[di], dm = dms[mi];
                FusionDims dims{d, dm, dm, dm};
                ParamStore store = make_store(dims, 100 + static_cast<uint64_t>(config_count));
                FusionConfig config;
                config.dims = dims;
                Tensor hv = random_tensor({l, d}, rng);
                FusionInputs in = random_inputs(dims, rng);
                Tensor weights = random_tensor({l, d}, rng);

                auto readout = [&]() {
                    Tape tape;
                    BoundParams params(tape, store);
                    ValueId out = fusion_forward(tape, tape.leaf(hv), in, params, config);
                    ValueId s = tape.sum_all(tape.mul(out, tape.leaf(weights)));
                    return std::pair<double, Tape>(tape.val(s)[0], std::move(tape));
                };

                GradMap analytic;
                {
                    Tape tape;
                    BoundParams params(tape, store);
                    ValueId out = fusion_forward(tape, tape.leaf(hv), in, params, config);
                    ValueId s = tape.sum_all(tape.mul(out, tape.leaf(weights)));
                    tape.backward(s);
                    analytic = params.collect_grads();
                }

                constexpr double h = 1e-6;
                for (const auto& name : store.names()) {
                    Tensor& p = store.value(name);
                    // Sample a few coordinates per parameter per configuration.
                    const int n_check = static_cast<int>(std::min<int64_t>(p.size(), 3));
                    for (int c = 0; c < n_check; ++c) {
                        const int64_t i = static_cast<int64_t>(rng.below(
                            static_cast<uint64_t>(p.size())));
                        const double saved = p[i];
                        p[i] = saved + h;
                        const double up = readout().first;
                        p[i] = saved - h;
                        const double down = readout().first;
                        p[i] = saved;
                        const double fd = (up - down) / (2 * h);
                        const double a = analytic.at(name)[i];
                        const double denom = std::max({std::abs(a), std::abs(fd), 1e-4});
                        INFO("config ", config_count, " ", name, "[", i, "]");
                        CHECK(std::abs(a - fd) / denom < 1e-4);
                    }
                }
            }
        }
    }
    CHECK(config_count >= 16); // 4*2*2 grid
}
