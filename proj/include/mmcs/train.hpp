#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmcs/model.hpp"

namespace mmcs {

struct TrainConfig {
    double learning_rate = 3e-5;
    int batch_size = 16;
    int epochs = 1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_clip_norm = 1.0;
    uint64_t seed = 0;
    std::string target = "mcs"; // "mcs" | "doctor"
    bool validate_each_epoch = true;

    void validate() const;
};

struct AdamState {
    std::vector<Tensor> m, v; // aligned with the store's registry order
    int64_t step = 0;

    static AdamState init(const ParamStore& store);
};

// One Adam update with bias correction. Every registered parameter must have
// a gradient; a missing name is a consistency error.
void adam_step(ParamStore& store, const GradMap& grads, AdamState& state,
               const TrainConfig& config);

// Scales all gradients so the global L2 norm does not exceed max_norm.
// Returns the pre-clip norm.
double clip_global_norm(GradMap& grads, const ParamStore& store, double max_norm);

struct StepLog {
    int epoch = 0;
    int step = 0;
    double loss = 0, intent_loss = 0, generation_loss = 0;
};

struct EpochVal {
    int epoch = 0;
    double intent_accuracy = 0;
    double token_f1 = 0;
};

struct TrainResult {
    std::vector<StepLog> steps;
    std::vector<EpochVal> vals;
};

TrainResult train_model(ParamStore& store, const ModelConfig& model_config,
                        const std::vector<ModalityBundle>& train_set,
                        const std::vector<ModalityBundle>& val_set,
                        const TrainConfig& config);

// Validation helpers, also used by evaluation.
double intent_accuracy(const ParamStore& store, const ModelConfig& config,
                       const std::vector<ModalityBundle>& set);

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0;
    int checked_coords = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries; // registry order, one per parameter
    double tolerance = 0;
    bool pass = false;
};

// Compares analytic gradients against central differences (step 1e-6) on a
// deterministic probe bundle. Trial 0 sweeps every coordinate; later trials
// re-randomize the probe and sample a few coordinates per parameter.
// `corrupt_substr` (test hook) scales the analytic gradient of matching
// parameters so the harness's sensitivity can itself be verified.
GradCheckReport grad_check(const ModelConfig& config, double tolerance = 1e-4,
                           int trials = 20, const std::string& corrupt_substr = "",
                           double corrupt_scale = 1.0);

// Central difference (f(x+h)-f(x-h))/2h.
double central_diff(double (*f)(double, void*), void* ctx, double x, double h = 1e-6);

} // namespace mmcs
