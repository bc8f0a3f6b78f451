#pragma once

#include <cstdint>
#include <vector>

#include "drift/dataset.hpp"
#include "drift/equalize.hpp"

namespace drift {

struct SubspaceMasks {
    std::vector<bool> target_mask;  // length n: desired neighbors ("hits")
    std::vector<bool> query_mask;   // length n: anchors to enrich; defaults to target_mask
};

struct WeightVector {
    Eigen::VectorXd theta;  // unconstrained parameters, one per feature
    Eigen::VectorXd w_raw;  // softplus(theta)
    Eigen::VectorXd w_eff;  // w_raw * d / (stopgrad(sum w_raw) + 1e-8)
};

struct TrainConfig {
    int K = 100;
    double beta = 0.2;
    int epochs = 3000;
    int batch_size = 200;
    double pos_frac = 0.5;
    double tau_start = 1.0;
    double tau_end = 0.1;
    double lr = 1e-2;
    double l1 = 1e-2;
    int n_splits = 5;
    std::uint64_t seed = 0;
};

/// theta -> (w_raw, w_eff) per the softplus / scale-normalized map. The
/// gradient contract treats the normalizing sum as a constant.
WeightVector effective_weights(const Eigen::VectorXd& theta);

/// Row-stochastic soft-KNN probabilities for one batch: logits
/// -D_w(u_i,u_j)/max(1e-6, tau), diagonal excluded, softmax restricted to the
/// K largest logits per row (full non-diagonal softmax when K >= B).
Eigen::MatrixXd soft_knn_probs(const Eigen::MatrixXd& batch, const Eigen::VectorXd& w_eff,
                               double tau, int K);

/// obj = mean soft target mass over batch queries; loss = -obj + l1 * sum(w_raw).
/// Throws NoQueriesInBatch when the batch holds no queries (callers skip the step).
std::pair<double, double> batch_objective(const Eigen::MatrixXd& P,
                                          const std::vector<bool>& target_in_batch,
                                          const std::vector<bool>& query_in_batch,
                                          const Eigen::VectorXd& w_raw, double lambda);

/// Loss of one batch with the effective-weight scale frozen at scale_c; the
/// finite-difference oracle differentiates this stop-grad forward map.
double batch_loss_fixed_scale(const Eigen::MatrixXd& batch,
                              const std::vector<bool>& target_in_batch,
                              const std::vector<bool>& query_in_batch,
                              const Eigen::VectorXd& theta, double tau, int K, double lambda,
                              double scale_c);

/// Loss and its analytic gradient wrt theta for one batch at one temperature,
/// under the stop-grad normalization contract. Exposed for the
/// finite-difference oracle.
double batch_loss_grad(const Eigen::MatrixXd& batch, const std::vector<bool>& target_in_batch,
                       const std::vector<bool>& query_in_batch, const Eigen::VectorXd& theta,
                       double tau, int K, double lambda, Eigen::VectorXd* grad);

/// Adam over theta (init zeros) on stratified per-epoch mini-batches with
/// geometric temperature annealing. Deterministic given cfg.seed.
WeightVector train_weights(const FeatureMatrix& U, const SubspaceMasks& masks,
                           const TrainConfig& cfg);

struct SubsetScore {
    int m = 0;
    double mean_score = 0.0;
    double purity_only = 0.0;
    std::vector<double> per_fold;
};

/// Rank-sensitivity term q_i: DCG with gain 1 per hit and discount
/// 1/log2(rank+1) over the ranked neighbor list, normalized by the ideal
/// ordering; 0 when no rank holds a hit.
double ndcg(const std::vector<bool>& hit_at_rank);

/// Leakage-safe stratified K-fold evaluation of a feature subset: hard KNN of
/// each validation query among training points in the subset coordinates;
/// s_i = phi_i + beta * (1 - phi_i) * q_i with nDCG rank sensitivity q_i.
SubsetScore cv_subset_score(const FeatureMatrix& U, const SubspaceMasks& masks,
                            const std::vector<int>& subset, int K, double beta, int n_splits,
                            std::uint64_t seed);

/// Candidate subset sizes: d, then down to 150 in steps of 50, to 50 in steps
/// of 5, to 16 in steps of 2, then every integer from 15 to 1; clipped to <= d.
std::vector<int> subset_size_grid(int d);

/// TopM(w_eff, m) features, ties by ascending index.
std::vector<int> top_m_features(const Eigen::VectorXd& w_eff, int m);

struct SubsetSelection {
    int m_star = 0;
    std::vector<int> features;
    std::vector<SubsetScore> curve;
};

SubsetSelection select_subset(const FeatureMatrix& U, const SubspaceMasks& masks,
                              const WeightVector& w, const TrainConfig& cfg);

/// |a ∩ b| / |a ∪ b|; 1 when both empty.
double jaccard(const std::vector<int>& a, const std::vector<int>& b);

struct ModeAttribution {
    Origin direction;
    std::vector<int> mode_ids;       // pooled point ids of the mode
    std::vector<int> support;        // selected feature indices (original space)
    int m_star = 0;
    std::vector<SubsetScore> curve;  // CV curve of the final refinement
    Eigen::VectorXd w_eff;           // final effective weights in the support space
    int refine_iters = 0;
};

/// Per-mode attribution: queries = mode points, target = the mode's cohort;
/// alternates training + subset selection restricted to the previously
/// selected subspace until consecutive supports reach Jaccard >= 0.95 or
/// max_refine_iters.
std::vector<ModeAttribution> refine_loop(const FeatureMatrix& X, const FeatureMatrix& Y,
                                         const EqualizationResult& eq, const TrainConfig& cfg,
                                         int graph_k = 10, int max_refine_iters = 5,
                                         int min_mode_size = 10);

}  // namespace drift
