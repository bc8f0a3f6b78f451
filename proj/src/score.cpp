#include "drift/score.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace drift {

namespace {

inline double log_binom_pmf(int K, int b, double log_p, double log_q) {
    return std::lgamma(K + 1.0) - std::lgamma(b + 1.0) - std::lgamma(K - b + 1.0) +
           b * log_p + (K - b) * log_q;
}

}  // namespace

double binomial_tail_neglog(int K, double p, int b_obs) {
    if (!(p > 0.0 && p < 1.0)) throw std::runtime_error("InvalidProbability");
    if (b_obs < 0 || b_obs > K) throw std::runtime_error("CountOutOfRange");
    if (b_obs == 0) return 0.0;

    const double log_p = std::log(p);
    const double log_q = std::log1p(-p);
    // log-sum-exp over the tail terms, anchored at the largest one
    double max_term = -std::numeric_limits<double>::infinity();
    for (int b = b_obs; b <= K; ++b)
        max_term = std::max(max_term, log_binom_pmf(K, b, log_p, log_q));
    double acc = 0.0;
    for (int b = b_obs; b <= K; ++b)
        acc += std::exp(log_binom_pmf(K, b, log_p, log_q) - max_term);
    const double log_sf = max_term + std::log(acc);
    if (log_sf < -std::log(2.0)) return -log_sf;

    // Tail above 1/2: -log(sf) is tiny and loses all relative precision when
    // computed from the upper sum, so go through the complementary cdf.
    double max_lo = -std::numeric_limits<double>::infinity();
    for (int b = 0; b < b_obs; ++b)
        max_lo = std::max(max_lo, log_binom_pmf(K, b, log_p, log_q));
    double acc_lo = 0.0;
    for (int b = 0; b < b_obs; ++b)
        acc_lo += std::exp(log_binom_pmf(K, b, log_p, log_q) - max_lo);
    const double cdf_below = std::exp(max_lo + std::log(acc_lo));
    return std::max(0.0, -std::log1p(-std::min(1.0, cdf_below)));
}

ScoreTable::ScoreTable(int K_M, double p) : K_M_(K_M), p_(p) {
    if (!(p > 0.0 && p < 1.0)) throw std::runtime_error("InvalidProbability");
    if (K_M < 1) throw std::runtime_error("CountOutOfRange");
    offset_.resize(static_cast<size_t>(K_M) + 1, 0);
    std::size_t total = 0;
    for (int K = 1; K <= K_M; ++K) {
        offset_[K] = total;
        total += static_cast<size_t>(K) + 1;
    }
    table_.resize(total);

    const double log_p = std::log(p);
    const double log_q = std::log1p(-p);
    std::vector<double> log_pmf;
    for (int K = 1; K <= K_M; ++K) {
        log_pmf.resize(static_cast<size_t>(K) + 1);
        for (int b = 0; b <= K; ++b) log_pmf[b] = log_binom_pmf(K, b, log_p, log_q);
        // backward log-cumsum-exp: log_sf(b) = log sum_{j>=b} pmf(j)
        double log_sf = -std::numeric_limits<double>::infinity();
        for (int b = K; b >= 0; --b) {
            const double hi = std::max(log_sf, log_pmf[b]);
            log_sf = hi + std::log(std::exp(log_sf - hi) + std::exp(log_pmf[b] - hi));
            table_[offset_[K] + b] = std::max(0.0, -log_sf);
        }
        // forward pass repairs the near-1 tails (-log sf tiny) through the
        // complementary cdf, where the upper sum has no relative precision
        double log_cdf = -std::numeric_limits<double>::infinity();
        for (int b = 0; b < K; ++b) {
            const double hi = std::max(log_cdf, log_pmf[b]);
            log_cdf = hi + std::log(std::exp(log_cdf - hi) + std::exp(log_pmf[b] - hi));
            if (table_[offset_[K] + b + 1] < std::log(2.0)) {
                const double cdf_below = std::min(1.0, std::exp(log_cdf));
                table_[offset_[K] + b + 1] = std::max(0.0, -std::log1p(-cdf_below));
            }
        }
        table_[offset_[K]] = 0.0;  // b = 0: whole support, sf = 1
    }
}

AnomalyScore score_sequence(const std::vector<std::uint8_t>& bits, const ScoreTable& table,
                            Origin direction) {
    if (bits.empty()) throw std::runtime_error("EmptySequence");
    const int len = std::min<int>(static_cast<int>(bits.size()), table.K_M());
    int B = 0;
    double best = -1.0;
    int best_k = 1;
    for (int K = 1; K <= len; ++K) {
        B += bits[K - 1];
        const double v = table.neglog_sf(K, B);
        if (v > best) {
            best = v;
            best_k = K;
        }
    }
    return {best, best_k, direction};
}

std::vector<std::pair<int, AnomalyScore>> score_cohort(const PooledIndex& idx, Origin test,
                                                       int K_M) {
    if (idx.active_count(Origin::X) < 1 || idx.active_count(Origin::Y) < 1)
        throw std::runtime_error("EmptyCohort");
    if (K_M < 1) throw std::runtime_error("CountOutOfRange");
    const int total = idx.active_count();
    if (K_M > total / 10)
        std::cerr << "warning: K_M=" << K_M << " exceeds a tenth of the pooled active count ("
                  << total << "); the binomial null may be biased\n";
    const double p = static_cast<double>(idx.active_count(test)) / static_cast<double>(total);
    const int k_eff = std::min(K_M, total - 1);
    ScoreTable table(k_eff, p);

    std::vector<int> queries;
    for (int i = 0; i < idx.size(); ++i)
        if (idx.is_active(i) && idx.origin(i) == test) queries.push_back(i);

    auto lists = idx.knn_batch(queries, k_eff);
    std::vector<std::pair<int, AnomalyScore>> out;
    out.reserve(queries.size());
    std::vector<std::uint8_t> bits;
    for (size_t qi = 0; qi < queries.size(); ++qi) {
        bits.clear();
        for (const auto& nb : lists[qi]) bits.push_back(nb.origin == test ? 1 : 0);
        out.emplace_back(queries[qi], score_sequence(bits, table, test));
    }
    return out;
}

double NullModel::quantile(double q) const {
    if (!(q >= 0.0 && q <= 1.0)) throw std::runtime_error("InvalidLevel");
    const auto n = samples.size();
    auto idx = static_cast<size_t>(q * static_cast<double>(n));
    if (idx >= n) idx = n - 1;
    return samples[idx];
}

NullModel calibrate_null(int K_M, double p, int n_mc, std::uint64_t seed) {
    if (n_mc < 1000) throw std::runtime_error("TooFewSamples: n_mc must be >= 1000");
    ScoreTable table(K_M, p);
    NullModel null{p, K_M, {}, n_mc, seed};
    null.samples.resize(static_cast<size_t>(n_mc));
    for (int i = 0; i < n_mc; ++i) {
        // per-draw sub-stream: results do not depend on evaluation order
        std::uint64_t state = seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(i + 1));
        int B = 0;
        double best = 0.0;
        for (int K = 1; K <= K_M; ++K) {
            B += uniform01(state) < p ? 1 : 0;
            best = std::max(best, table.neglog_sf(K, B));
        }
        null.samples[static_cast<size_t>(i)] = best;
    }
    std::sort(null.samples.begin(), null.samples.end());
    return null;
}

double flag_threshold(const NullModel& null, double p_ext) {
    if (!(p_ext > 0.0 && p_ext < 1.0)) throw std::runtime_error("InvalidLevel");
    if (static_cast<double>(null.n_mc) < 10.0 / p_ext)
        std::cerr << "warning: n_mc=" << null.n_mc << " is below the recommended 10/p_ext="
                  << 10.0 / p_ext << " for a stable threshold\n";
    return null.quantile(1.0 - p_ext);
}

}  // namespace drift
