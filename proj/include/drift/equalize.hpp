#pragma once

#include <cstdint>
#include <vector>

#include "drift/dataset.hpp"
#include "drift/score.hpp"

namespace drift {

struct EqualizeParams {
    int K_M = 400;
    double q_tail = 0.97;
    double alpha = 0.05;
    int prune_batch = 10;
    int max_outer_iters = 50;
    int n_mc_null = 100000;   // Monte-Carlo draws per direction null
    int min_tail_size = 8;    // below this a KS rejection is suppressed
};

struct TailTestResult {
    double statistic = 0.0;   // D+ = sup_x (F_null - F_obs)
    double p_value = 1.0;
    bool reject = false;
    double tail_threshold = 0.0;
    int n_obs_tail = 0;
    int n_null_tail = 0;
    double mass_p_value = 1.0;  // P[Bin(n_active, null tail prob) >= n_obs_tail]
    bool mass_reject = false;

    /// Equalization prunes while either the tail shape (KS) or the tail mass
    /// (binomial exceedance) shows a significant excess.
    bool any_reject() const { return reject || mass_reject; }
};

/// One-sided two-sample KS on the score tails. H1: the observed tail is
/// stochastically larger than the null tail. Asymptotic p-value
/// exp(-2 m_eff D+^2). Inputs must be sorted ascending.
TailTestResult ks_one_sided(const std::vector<double>& obs_tail,
                            const std::vector<double>& null_tail, double alpha,
                            int min_tail_size = 8);

/// Exact one-sided binomial exceedance probability P[Bin(n, p) >= k]: the
/// chance that at least k of n active points land in a score tail of null
/// probability p. Complements the shape-only KS test with a tail-mass test.
double tail_mass_pvalue(int n, double p, int k);

/// Empirical q_tail quantile of the null samples (lower-index convention).
double tail_threshold(const NullModel& null, double q_tail);

struct TraceStep {
    int outer_iter;
    int inner_step;        // 0 = the global-recompute test at iteration start
    TailTestResult ks_Y;   // Y-overdensity side
    TailTestResult ks_X;   // X-overdensity side
    int candidates_Y;
    int candidates_X;
    std::vector<int> removed_Y;
    std::vector<int> removed_X;
};

struct EqualizationResult {
    std::vector<int> pruned_X;     // in pruning order
    std::vector<int> pruned_Y;
    std::vector<bool> eq_mask_X;   // length n_X, true = retained
    std::vector<bool> eq_mask_Y;   // length n_Y
    std::vector<TraceStep> trace;
    int outer_iters = 0;
    bool max_iters_exceeded = false;
};

/// Prunes one tail candidate: the candidate plus its consecutive same-cohort
/// nearest neighbors, walking outward in rank order until the first active
/// opposite-cohort point (exclusive). Returns the ids removed (the candidate
/// first). Already-inactive neighbors are skipped, never double-removed.
std::vector<int> prune_step(PooledIndex& idx, int candidate);

/// Algorithm: score both directions, compare both score tails against their
/// Monte-Carlo nulls (one-sided KS on the tail shape plus a binomial
/// exceedance test on the tail mass), and while either direction shows a
/// significant excess prune the most extreme tail candidates, re-scoring only
/// the remaining candidates between steps. On inner convergence all scores
/// are recomputed globally and the tests repeated; terminates when both
/// directions pass right after a global recomputation (or at max_outer_iters,
/// flagged).
/// Inputs are expected to be standardized.
EqualizationResult equalize(const FeatureMatrix& X, const FeatureMatrix& Y,
                            const EqualizeParams& params, std::uint64_t seed);

struct ModePartition {
    std::vector<std::vector<int>> modes;  // disjoint, ordered by decreasing size
    int graph_k;
};

/// Connected components of the mutual-kNN graph over the pruned point set.
ModePartition partition_modes(const std::vector<int>& pruned, const PooledIndex& idx,
                              int graph_k);

}  // namespace drift
