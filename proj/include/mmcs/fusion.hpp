#pragma once

#include <string>

#include "mmcs/params.hpp"
#include "mmcs/tape.hpp"

namespace mmcs {

// Contextualized modality fusion adapter. Text hidden states H (l x d) are
// projected to Q/K/V; per modality, a session-level row vector M (1 x d_m)
// is mixed into the keys and values through learned sigmoid lambdas, a
// single-head scaled dot-product attention produces the modality-aware state
// H_m, and affine compound gates control how much of each H_m is added back
// onto H.

struct FusionDims {
    int d = 0;
    int d_audio = 0;
    int d_visual = 0;
    int d_personal = 0;
};

struct FusionConfig {
    FusionDims dims;
    bool use_audio = true;
    bool use_visual = true;
    bool use_personal = true;
    bool gate_sigmoid = false; // squash the compound gates (affine by default)
};

// Session-level modality vectors, one row each.
struct FusionInputs {
    Tensor audio;    // 1 x d_audio
    Tensor video;    // 1 x d_visual
    Tensor personal; // 1 x d_personal
};

inline const char* kFusionModalities[3] = {"audio", "visual", "personal"};

// Registers fusion.w_q/w_k/w_v plus, per modality m:
//   fusion.m.u_k, fusion.m.u_v      (d_m x d)
//   fusion.m.w_k1, .w_k2, .w_v1, .w_v2  (d x 1)
//   fusion.m.gate_w (2d x d), fusion.m.gate_b (1 x d)
void register_fusion_params(ParamStore& store, const FusionDims& dims, Lcg64& rng);

struct FusionModalityTrace {
    bool enabled = false;
    ValueId lam_k = -1, lam_v = -1;
    ValueId khat = -1, vhat = -1;
    ValueId attn_probs = -1;
    ValueId h_m = -1;
    ValueId gate = -1;
};

struct FusionTrace {
    ValueId q = -1, k = -1, v = -1;
    FusionModalityTrace audio, visual, personal;
    ValueId hhat = -1;
};

struct QkvIds {
    ValueId q, k, v;
};
struct LambdaIds {
    ValueId lam_k, lam_v;
};
struct KvIds {
    ValueId khat, vhat;
};
struct GateIds {
    ValueId g_a, g_v, g_p;
};

// Q = H w_q, K = H w_k, V = H w_v.
QkvIds project_qkv(Tape& tape, ValueId h, BoundParams& params);

// lam_k = sigmoid(K w_k1 + (M u_k) w_k2), lam_v analogous; both l x 1.
LambdaIds gate_lambdas(Tape& tape, ValueId k, ValueId v, ValueId m_row,
                       BoundParams& params, const std::string& modality);

// khat = (1-lam_k).K + lam_k.(M u_k) with M broadcast over rows; vhat analogous.
KvIds contextual_kv(Tape& tape, ValueId k, ValueId v, ValueId m_row,
                    ValueId lam_k, ValueId lam_v, BoundParams& params,
                    const std::string& modality);

// softmax(Q khat^T / sqrt(d)) vhat, single head with d_k = d.
ValueId modality_attention(Tape& tape, ValueId q, ValueId khat, ValueId vhat,
                           ValueId* attn_probs = nullptr);

// g_m = [H (+) H_m] gate_w + gate_b per modality (sigmoid optional).
GateIds compound_gates(Tape& tape, ValueId h, ValueId h_a, ValueId h_v, ValueId h_p,
                       BoundParams& params, bool gate_sigmoid);

// hhat = H + g_p.H_p + g_a.H_a + g_v.H_v.
ValueId fuse(Tape& tape, ValueId h, ValueId h_a, ValueId h_v, ValueId h_p,
             ValueId g_a, ValueId g_v, ValueId g_p);

// Whole adapter. Disabled modalities contribute zero tensors for H_m and g_m
// so the fused sum keeps one code path. Errors from sub-ops are rethrown with
// the modality name attached.
ValueId fusion_forward(Tape& tape, ValueId h, const FusionInputs& inputs,
                       BoundParams& params, const FusionConfig& config,
                       FusionTrace* trace = nullptr);

} // namespace mmcs
