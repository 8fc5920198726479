#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmcs/features.hpp"
#include "mmcs/fusion.hpp"
#include "mmcs/params.hpp"
#include "mmcs/tape.hpp"

namespace mmcs {

struct ModelConfig {
    int vocab_size = 0;
    int d_model = 32;
    int n_heads = 4;
    int d_ff = 64;
    int n_encoder_layers = 2;
    int n_decoder_layers = 2;
    int max_src_len = 480;
    int max_tgt_len = 50;
    int n_intents = 7;
    int d_audio = 16;
    int d_visual = 16;
    int d_personal = 8;
    std::string gate_activation = "none"; // "none" | "sigmoid"
    double loss_alpha1 = 0.2;
    double loss_alpha2 = 0.8;
    uint64_t seed = 0;
    bool use_audio = true;
    bool use_visual = true;
    bool use_personal = true;

    void validate() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
    FusionConfig fusion_config() const;
};

enum class InitKind { Xavier, Zero, One };

struct ParamSpecEntry {
    std::string name;
    std::vector<int> shape;
    InitKind init;
};

// Ordered parameter layout; a pure function of the configuration.
std::vector<ParamSpecEntry> param_spec(const ModelConfig& config);

// Fresh parameters drawn from Lcg64(config.seed) in registry order.
ParamStore build_params(const ModelConfig& config);

// Fixed sinusoidal position table, rows 0..len-1.
Tensor positional_table(int len, int d_model);

struct EncodeOptions {
    // Skip the fusion adapter entirely and use H as the decoder memory.
    // This is the plain text-only forward used in ablation-identity checks.
    bool fusion_bypass = false;
};

struct EncodeResult {
    ValueId h = -1;    // final encoder states, after the last norm
    ValueId hhat = -1; // fused states fed to the heads and the decoder
    FusionTrace fusion;
    std::vector<int> src_ids;     // after truncation
    std::vector<double> pad_mask; // 1 = real token, 0 = pad
    bool truncated = false;
};

EncodeResult encoder_forward(Tape& tape, const std::vector<int>& src_ids,
                             const FusionInputs& inputs, BoundParams& params,
                             const ModelConfig& config,
                             const EncodeOptions& options = {});

// Masked mean pool over non-pad positions, then the intent linear head.
ValueId intent_logits(Tape& tape, ValueId hhat, const std::vector<double>& pad_mask,
                      BoundParams& params, const ModelConfig& config);

struct DecodeResult {
    ValueId logits = -1;              // t x vocab, next-token logits per position
    std::vector<ValueId> cross_probs; // per layer, per head attention rows
};

DecodeResult decoder_forward(Tape& tape, const std::vector<int>& tgt_in_ids,
                             ValueId hhat, const std::vector<double>& src_pad_mask,
                             BoundParams& params, const ModelConfig& config);

struct LossIds {
    ValueId total = -1, intent = -1, generation = -1;
};

// L = alpha1*CL + alpha2*GL. lm_logits rows align with tgt_in_ids; labels are
// the same sequence shifted left plus the closing EOS; pad labels are skipped.
LossIds joint_loss(Tape& tape, ValueId intent_logit_id, int intent_label,
                   ValueId lm_logits, const std::vector<int>& tgt_full_ids,
                   const ModelConfig& config);

struct ForwardBackwardResult {
    double loss = 0, intent_loss = 0, generation_loss = 0;
    GradMap grads;
    bool truncated = false;
};

FusionInputs bundle_inputs(const ModalityBundle& bundle);

// Full forward (encoder, fusion, both heads) and backward for one example.
// `target` selects the mcs or the doctor-summary sequence.
ForwardBackwardResult model_forward_backward(const ModalityBundle& bundle,
                                             const ParamStore& store,
                                             const ModelConfig& config,
                                             const std::string& target = "mcs");

// Loss only, no gradient bookkeeping; used by finite differences.
double model_forward_loss(const ModalityBundle& bundle, const ParamStore& store,
                          const ModelConfig& config,
                          const std::string& target = "mcs");

// Deterministic argmax decoding; ties break toward the lowest token id. The
// returned ids exclude BOS/EOS and hold at most max_len tokens.
std::vector<int> greedy_decode(const ParamStore& store, const ModelConfig& config,
                               const std::vector<int>& src_ids,
                               const FusionInputs& inputs, int max_len,
                               const EncodeOptions& options = {});

} // namespace mmcs
