#pragma once

#include <vector>

#include "mmcs/errors.hpp"

namespace mmcs {

// Text-generation metrics over token-id sequences, single reference each.
// All values live in [0,1]; reports scale by 100.

// Clipped (modified) n-gram precision; 0 when the candidate has no n-grams.
double bleu_n(const std::vector<int>& candidate, const std::vector<int>& reference, int n);

// Geometric mean of p_1..p_4 with brevity penalty min(1, e^{1-r/c}). A zero
// p_n is smoothed to 1/(2*candidate n-gram count); when the candidate has no
// n-grams of that order the floor 1e-9 is used. Empty candidate scores 0.
double bleu_composite(const std::vector<int>& candidate, const std::vector<int>& reference);

struct Prf {
    double precision = 0, recall = 0, f1 = 0;
};

Prf rouge_n(const std::vector<int>& candidate, const std::vector<int>& reference, int n);

// Longest common subsequence via dynamic programming.
Prf rouge_l(const std::vector<int>& candidate, const std::vector<int>& reference);

// Fleiss' kappa over an items x categories matrix of rater counts. Every row
// must sum to the same rater count n >= 2.
double fleiss_kappa(const std::vector<std::vector<int>>& ratings);

struct WelchResult {
    double t = 0;
    double df = 0;
};

// Welch's unequal-variance t statistic with Welch-Satterthwaite df.
WelchResult welch_t(const std::vector<double>& a, const std::vector<double>& b);

// Two-sided 5% critical value. Integer df 1..30 come from the standard t
// table (external reference data); fractional df floors to the next lower
// row, and df > 30 falls back to the normal approximation 1.96.
double welch_critical_5pct(double df);

struct MetricsReport {
    double bleu_1 = 0, bleu_2 = 0, bleu_3 = 0, bleu_4 = 0, bleu = 0;
    Prf rouge_1, rouge_2, rouge_l;
};

// Mean of per-session sentence-level scores.
MetricsReport score_corpus(const std::vector<std::vector<int>>& candidates,
                           const std::vector<std::vector<int>>& references);

} // namespace mmcs
