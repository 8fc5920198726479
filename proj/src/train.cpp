#include "mmcs/train.hpp"

#include <algorithm>
#include <cmath>

#include "mmcs/kernels.hpp"
#include "mmcs/metrics.hpp"

namespace mmcs {

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0)
        throw ConfigError("adam betas must lie in [0,1)");
    if (adam_eps <= 0.0) throw ConfigError("adam_eps must be positive");
    if (grad_clip_norm <= 0.0) throw ConfigError("grad_clip_norm must be positive");
    if (target != "mcs" && target != "doctor")
        throw ConfigError("target must be \"mcs\" or \"doctor\"");
}

AdamState AdamState::init(const ParamStore& store) {
    AdamState s;
    s.m.reserve(store.count());
    s.v.reserve(store.count());
    for (const auto& name : store.names()) {
        s.m.emplace_back(store.value(name).shape());
        s.v.emplace_back(store.value(name).shape());
    }
    return s;
}

void adam_step(ParamStore& store, const GradMap& grads, AdamState& state,
               const TrainConfig& config) {
    if (state.m.size() != store.count())
        throw ConfigError("adam state does not match the parameter registry");
    ++state.step;
    const double b1 = config.adam_beta1;
    const double b2 = config.adam_beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));

    const auto& names = store.names();
    for (size_t k = 0; k < names.size(); ++k) {
        auto it = grads.find(names[k]);
        if (it == grads.end())
            throw ConfigError("missing gradient for parameter " + names[k]);
        Tensor& p = store.value(names[k]);
        const Tensor& g = it->second;
        require_same_shape(p, g, "adam_step");
        Tensor& m = state.m[k];
        Tensor& v = state.v[k];
        for (int64_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.adam_eps);
        }
    }
}

double clip_global_norm(GradMap& grads, const ParamStore& store, double max_norm) {
    double sq = 0.0;
    for (const auto& name : store.names()) {
        const Tensor& g = grads.at(name);
        for (int64_t i = 0; i < g.size(); ++i) sq += g[i] * g[i];
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (const auto& name : store.names()) {
            Tensor& g = grads.at(name);
            for (int64_t i = 0; i < g.size(); ++i) g[i] *= s;
        }
    }
    return norm;
}

namespace {

const std::vector<int>& bundle_target(const ModalityBundle& b, const std::string& target) {
    if (target == "doctor") {
        if (!b.doctor_tgt_ids)
            throw InputError("session " + b.session_id + " has no doctor summary");
        return *b.doctor_tgt_ids;
    }
    return b.tgt_ids;
}

std::vector<int> strip_specials(const std::vector<int>& ids) {
    std::vector<int> out;
    out.reserve(ids.size());
    for (int id : ids)
        if (id != VocabSpec::kPad && id != VocabSpec::kBos && id != VocabSpec::kEos)
            out.push_back(id);
    return out;
}

} // namespace

double intent_accuracy(const ParamStore& store, const ModelConfig& config,
                       const std::vector<ModalityBundle>& set) {
    if (set.empty()) throw InputError("intent_accuracy: empty set");
    int correct = 0;
    for (const auto& b : set) {
        Tape tape;
        BoundParams params(tape, store);
        EncodeResult enc = encoder_forward(tape, b.src_ids, bundle_inputs(b), params, config);
        ValueId il = intent_logits(tape, enc.hhat, enc.pad_mask, params, config);
        const Tensor& logits = tape.val(il);
        int best = 0;
        for (int j = 1; j < logits.cols(); ++j)
            if (logits.at(0, j) > logits.at(0, best)) best = j;
        if (best == b.intent) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(set.size());
}

TrainResult train_model(ParamStore& store, const ModelConfig& model_config,
                        const std::vector<ModalityBundle>& train_set,
                        const std::vector<ModalityBundle>& val_set,
                        const TrainConfig& config) {
    config.validate();
    if (train_set.empty()) throw InputError("train_model: empty training set");

    TrainResult result;
    AdamState adam = AdamState::init(store);
    Lcg64 shuffle_rng(config.seed);
    int global_step = 0;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::vector<int> order(train_set.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
            const int j = static_cast<int>(shuffle_rng.below(static_cast<uint64_t>(i + 1)));
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
        }

        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
            const double inv_n = 1.0 / static_cast<double>(end - start);

            GradMap sum;
            for (const auto& name : store.names()) sum[name] = Tensor(store.value(name).shape());
            double loss = 0, cl = 0, gl = 0;
            for (size_t k = start; k < end; ++k) {
                const auto& bundle = train_set[static_cast<size_t>(order[k])];
                ForwardBackwardResult fb =
                    model_forward_backward(bundle, store, model_config, config.target);
                loss += fb.loss;
                cl += fb.intent_loss;
                gl += fb.generation_loss;
                for (const auto& name : store.names())
                    kern::accumulate(sum.at(name), fb.grads.at(name));
            }
            for (const auto& name : store.names()) {
                Tensor& g = sum.at(name);
                for (int64_t i = 0; i < g.size(); ++i) g[i] *= inv_n;
            }
            loss *= inv_n;
            cl *= inv_n;
            gl *= inv_n;
            if (!std::isfinite(loss))
                throw NumericError("non-finite batch loss at epoch " + std::to_string(epoch) +
                                   " step " + std::to_string(global_step + 1));

            clip_global_norm(sum, store, config.grad_clip_norm);
            adam_step(store, sum, adam, config);
            ++global_step;
            result.steps.push_back({epoch, global_step, loss, cl, gl});
        }

        if (config.validate_each_epoch && !val_set.empty()) {
            EpochVal v;
            v.epoch = epoch;
            v.intent_accuracy = intent_accuracy(store, model_config, val_set);
            double f1 = 0.0;
            for (const auto& b : val_set) {
                std::vector<int> hyp = greedy_decode(store, model_config, b.src_ids,
                                                     bundle_inputs(b),
                                                     model_config.max_tgt_len);
                const std::vector<int> ref = strip_specials(bundle_target(b, config.target));
                f1 += rouge_n(hyp, ref, 1).f1;
            }
            v.token_f1 = f1 / static_cast<double>(val_set.size());
            result.vals.push_back(v);
        }
    }
    return result;
}

double central_diff(double (*f)(double, void*), void* ctx, double x, double h) {
    return (f(x + h, ctx) - f(x - h, ctx)) / (2.0 * h);
}

GradCheckReport grad_check(const ModelConfig& config, double tolerance, int trials,
                           const std::string& corrupt_substr, double corrupt_scale) {
    config.validate();
    GradCheckReport report;
    report.tolerance = tolerance;

    const auto spec = param_spec(config);
    report.entries.reserve(spec.size());
    for (const auto& e : spec) report.entries.push_back({e.name, 0.0, 0});

    constexpr double kStep = 1e-6;
    constexpr double kDenomFloor = 1e-4;

    for (int trial = 0; trial < std::max(1, trials); ++trial) {
        // Fresh probe per trial: new parameter draw and new modality vectors.
        ModelConfig probe_cfg = config;
        probe_cfg.seed = config.seed + static_cast<uint64_t>(trial);
        ParamStore store = build_params(probe_cfg);
        Lcg64 rng(probe_cfg.seed ^ 0x9e3779b97f4a7c15ull);

        ModalityBundle bundle;
        bundle.session_id = "probe" + std::to_string(trial);
        const int src_len = 4 + static_cast<int>(rng.below(3));
        bundle.src_ids = {VocabSpec::kBos};
        for (int i = 0; i < src_len; ++i)
            bundle.src_ids.push_back(4 + static_cast<int>(rng.below(
                static_cast<uint64_t>(config.vocab_size - 4))));
        bundle.src_ids.push_back(VocabSpec::kEos);
        bundle.tgt_ids = {VocabSpec::kBos};
        const int tgt_len = 3 + static_cast<int>(rng.below(2));
        for (int i = 0; i < tgt_len; ++i)
            bundle.tgt_ids.push_back(4 + static_cast<int>(rng.below(
                static_cast<uint64_t>(config.vocab_size - 4))));
        bundle.tgt_ids.push_back(VocabSpec::kEos);
        bundle.intent = static_cast<int>(rng.below(static_cast<uint64_t>(config.n_intents)));
        auto random_row = [&](int d) {
            Tensor t({1, d});
            for (int j = 0; j < d; ++j) t[j] = rng.uniform(-1.0, 1.0);
            return t;
        };
        bundle.audio_vec = random_row(config.d_audio);
        bundle.video_vec = random_row(config.d_visual);
        bundle.personal_vec = random_row(config.d_personal);

        ForwardBackwardResult fb = model_forward_backward(bundle, store, config);

        for (size_t pi = 0; pi < spec.size(); ++pi) {
            const auto& name = spec[pi].name;
            Tensor& p = store.value(name);
            const Tensor& analytic = fb.grads.at(name);

            std::vector<int64_t> coords;
            if (trial == 0) {
                coords.resize(static_cast<size_t>(p.size()));
                for (int64_t i = 0; i < p.size(); ++i) coords[static_cast<size_t>(i)] = i;
            } else {
                const int n_probe = static_cast<int>(std::min<int64_t>(4, p.size()));
                for (int i = 0; i < n_probe; ++i)
                    coords.push_back(static_cast<int64_t>(rng.below(
                        static_cast<uint64_t>(p.size()))));
            }

            for (int64_t i : coords) {
                const double saved = p[i];
                p[i] = saved + kStep;
                const double up = model_forward_loss(bundle, store, config);
                p[i] = saved - kStep;
                const double down = model_forward_loss(bundle, store, config);
                p[i] = saved;
                const double fd = (up - down) / (2.0 * kStep);
                double a = analytic[i];
                if (!corrupt_substr.empty() && name.find(corrupt_substr) != std::string::npos)
                    a *= corrupt_scale;
                const double denom = std::max({std::abs(a), std::abs(fd), kDenomFloor});
                const double rel = std::abs(a - fd) / denom;
                report.entries[pi].max_rel_err = std::max(report.entries[pi].max_rel_err, rel);
                ++report.entries[pi].checked_coords;
            }
        }
    }

    report.pass = std::all_of(report.entries.begin(), report.entries.end(),
                              [&](const GradCheckEntry& e) {
                                  return e.max_rel_err < tolerance;
                              });
    return report;
}

} // namespace mmcs
