#pragma once

#include <cstdint>
#include <vector>

#include "drift/dataset.hpp"

namespace drift {

/// -log Pr[Binomial(K, p) >= b_obs], exact summation in log space.
/// Accurate for tail probabilities down to at least 1e-300.
double binomial_tail_neglog(int K, double p, int b_obs);

/// Precomputed -log survival values for all (K <= K_M, b <= K) at a fixed p.
/// score_sequence over long sequences is O(K_M) lookups instead of O(K_M^2)
/// tail summations.
class ScoreTable {
  public:
    ScoreTable(int K_M, double p);

    int K_M() const { return K_M_; }
    double p() const { return p_; }
    double neglog_sf(int K, int b) const { return table_[offset_[K] + b]; }

  private:
    int K_M_;
    double p_;
    std::vector<std::size_t> offset_;  // offset_[K] indexes (K, b=0)
    std::vector<double> table_;
};

struct AnomalyScore {
    double value;       // Upsilon, natural-log units, >= 0
    int argmax_k;       // smallest K attaining the maximum
    Origin direction;   // which cohort's overdensity this score measures
};

/// Binary neighbor-membership sequence: bits[k] = 1 if the (k+1)-th neighbor
/// belongs to the test cohort.
AnomalyScore score_sequence(const std::vector<std::uint8_t>& bits, const ScoreTable& table,
                            Origin direction);

/// One score per active point of the test cohort, p taken from the current
/// active counts. Truncates sequences when fewer than K_M active neighbors
/// remain.
std::vector<std::pair<int, AnomalyScore>> score_cohort(const PooledIndex& idx, Origin test,
                                                       int K_M);

struct NullModel {
    double p_hat;
    int K_M;
    std::vector<double> samples;  // sorted ascending
    int n_mc;
    std::uint64_t seed;

    /// Empirical quantile, lower-index convention: samples[floor(q * n_mc)].
    double quantile(double q) const;
};

/// Monte-Carlo null of the max-over-K score: n_mc i.i.d. Bernoulli(p)
/// sequences of length K_M, each scored by score_sequence. Deterministic
/// given seed, independent of scheduling (per-draw derived sub-streams).
NullModel calibrate_null(int K_M, double p, int n_mc, std::uint64_t seed);

/// (1 - p_ext) empirical null quantile; warns to stderr when n_mc < 10/p_ext.
double flag_threshold(const NullModel& null, double p_ext);

/// splitmix64 step; the counter-based RNG used for Monte-Carlo draws.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline double uniform01(std::uint64_t& state) {
    return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
}

}  // namespace drift
