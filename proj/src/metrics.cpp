#include "mmcs/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace mmcs {

namespace {

using NgramCounts = std::map<std::vector<int>, int>;

NgramCounts count_ngrams(const std::vector<int>& tokens, int n) {
    NgramCounts counts;
    if (n < 1 || tokens.size() < static_cast<size_t>(n)) return counts;
    for (size_t i = 0; i + n <= tokens.size(); ++i)
        ++counts[std::vector<int>(tokens.begin() + i, tokens.begin() + i + n)];
    return counts;
}

int clipped_overlap(const NgramCounts& cand, const NgramCounts& ref) {
    int overlap = 0;
    for (const auto& [gram, c] : cand) {
        auto it = ref.find(gram);
        if (it != ref.end()) overlap += std::min(c, it->second);
    }
    return overlap;
}

int ngram_total(const std::vector<int>& tokens, int n) {
    return tokens.size() >= static_cast<size_t>(n)
               ? static_cast<int>(tokens.size()) - n + 1
               : 0;
}

} // namespace

double bleu_n(const std::vector<int>& candidate, const std::vector<int>& reference, int n) {
    if (n < 1) throw InputError("bleu_n: n must be >= 1");
    const int total = ngram_total(candidate, n);
    if (total == 0) return 0.0;
    const int overlap = clipped_overlap(count_ngrams(candidate, n), count_ngrams(reference, n));
    return static_cast<double>(overlap) / total;
}

double bleu_composite(const std::vector<int>& candidate, const std::vector<int>& reference) {
    if (candidate.empty()) return 0.0;
    const double c = static_cast<double>(candidate.size());
    const double r = static_cast<double>(reference.size());
    const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);

    double log_sum = 0.0;
    for (int n = 1; n <= 4; ++n) {
        double p = bleu_n(candidate, reference, n);
        if (p == 0.0) {
            const int total = ngram_total(candidate, n);
            p = total > 0 ? std::max(1.0 / (2.0 * total), 1e-9) : 1e-9;
        }
        log_sum += std::log(p);
    }
    return bp * std::exp(0.25 * log_sum);
}

Prf rouge_n(const std::vector<int>& candidate, const std::vector<int>& reference, int n) {
    if (n < 1) throw InputError("rouge_n: n must be >= 1");
    const int cand_total = ngram_total(candidate, n);
    const int ref_total = ngram_total(reference, n);
    if (cand_total == 0 || ref_total == 0) return {};
    const int overlap = clipped_overlap(count_ngrams(candidate, n), count_ngrams(reference, n));
    Prf out;
    out.precision = static_cast<double>(overlap) / cand_total;
    out.recall = static_cast<double>(overlap) / ref_total;
    out.f1 = (out.precision + out.recall) > 0.0
                 ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                 : 0.0;
    return out;
}

Prf rouge_l(const std::vector<int>& candidate, const std::vector<int>& reference) {
    if (candidate.empty() || reference.empty()) return {};
    const size_t m = candidate.size(), n = reference.size();
    std::vector<int> prev(n + 1, 0), cur(n + 1, 0);
    for (size_t i = 1; i <= m; ++i) {
        for (size_t j = 1; j <= n; ++j) {
            cur[j] = candidate[i - 1] == reference[j - 1]
                         ? prev[j - 1] + 1
                         : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    const double lcs = prev[n];
    Prf out;
    out.precision = lcs / static_cast<double>(m);
    out.recall = lcs / static_cast<double>(n);
    out.f1 = (out.precision + out.recall) > 0.0
                 ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                 : 0.0;
    return out;
}

double fleiss_kappa(const std::vector<std::vector<int>>& ratings) {
    if (ratings.empty()) throw InputError("fleiss_kappa: no items");
    const size_t n_cat = ratings[0].size();
    if (n_cat < 2) throw InputError("fleiss_kappa: need at least two categories");

    int raters = 0;
    for (int c : ratings[0]) raters += c;
    if (raters < 2) throw InputError("fleiss_kappa: need at least two raters");

    const double n_items = static_cast<double>(ratings.size());
    std::vector<double> cat_share(n_cat, 0.0);
    double p_bar = 0.0;
    for (const auto& row : ratings) {
        if (row.size() != n_cat)
            throw InputError("fleiss_kappa: ragged ratings matrix");
        int row_sum = 0;
        double agree = 0.0;
        for (size_t j = 0; j < n_cat; ++j) {
            if (row[j] < 0) throw InputError("fleiss_kappa: negative count");
            row_sum += row[j];
            agree += static_cast<double>(row[j]) * row[j];
            cat_share[j] += row[j];
        }
        if (row_sum != raters)
            throw InputError("fleiss_kappa: row sums differ (" + std::to_string(row_sum) +
                             " vs " + std::to_string(raters) + ")");
        p_bar += (agree - raters) / (static_cast<double>(raters) * (raters - 1));
    }
    p_bar /= n_items;

    double p_e = 0.0;
    for (double s : cat_share) {
        const double share = s / (n_items * raters);
        p_e += share * share;
    }
    if (p_e >= 1.0) {
        if (p_bar >= 1.0) return 1.0;
        throw InputError("fleiss_kappa: chance agreement is 1, kappa undefined");
    }
    return (p_bar - p_e) / (1.0 - p_e);
}

WelchResult welch_t(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2)
        throw InputError("welch_t: both samples need at least two values");

    auto mean_var = [](const std::vector<double>& x) {
        const double n = static_cast<double>(x.size());
        double mean = 0.0;
        for (double v : x) mean += v;
        mean /= n;
        double var = 0.0;
        for (double v : x) var += (v - mean) * (v - mean);
        var /= (n - 1.0);
        return std::pair<double, double>(mean, var);
    };
    const auto [ma, va] = mean_var(a);
    const auto [mb, vb] = mean_var(b);
    if (va == 0.0 && vb == 0.0)
        throw InputError("welch_t: both sample variances are zero");

    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double sa = va / na;
    const double sb = vb / nb;
    WelchResult out;
    out.t = (ma - mb) / std::sqrt(sa + sb);
    out.df = (sa + sb) * (sa + sb) /
             (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    return out;
}

double welch_critical_5pct(double df) {
    // Two-sided 5% critical values for Student's t, df 1..30 (standard table).
    static const double kTable[30] = {
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
        2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
        2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
    if (df < 1.0) throw InputError("welch_critical_5pct: df must be >= 1");
    if (df > 30.0) return 1.96;
    return kTable[static_cast<int>(std::floor(df)) - 1];
}

MetricsReport score_corpus(const std::vector<std::vector<int>>& candidates,
                           const std::vector<std::vector<int>>& references) {
    if (candidates.size() != references.size())
        throw InputError("score_corpus: candidate/reference count mismatch");
    if (candidates.empty()) throw InputError("score_corpus: empty evaluation set");

    MetricsReport mean;
    auto add_prf = [](Prf& acc, const Prf& x) {
        acc.precision += x.precision;
        acc.recall += x.recall;
        acc.f1 += x.f1;
    };
    for (size_t i = 0; i < candidates.size(); ++i) {
        const auto& c = candidates[i];
        const auto& r = references[i];
        mean.bleu_1 += bleu_n(c, r, 1);
        mean.bleu_2 += bleu_n(c, r, 2);
        mean.bleu_3 += bleu_n(c, r, 3);
        mean.bleu_4 += bleu_n(c, r, 4);
        mean.bleu += bleu_composite(c, r);
        add_prf(mean.rouge_1, rouge_n(c, r, 1));
        add_prf(mean.rouge_2, rouge_n(c, r, 2));
        add_prf(mean.rouge_l, rouge_l(c, r));
    }
    const double n = static_cast<double>(candidates.size());
    mean.bleu_1 /= n;
    mean.bleu_2 /= n;
    mean.bleu_3 /= n;
    mean.bleu_4 /= n;
    mean.bleu /= n;
    for (Prf* p : {&mean.rouge_1, &mean.rouge_2, &mean.rouge_l}) {
        p->precision /= n;
        p->recall /= n;
        p->f1 /= n;
    }
    return mean;
}

} // namespace mmcs
