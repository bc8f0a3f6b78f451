#include "drift/subspace.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>

namespace drift {

namespace {

inline double softplus(double x) {
    return x > 30.0 ? x : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    return 1.0 / (1.0 + std::exp(-x));
}

constexpr double kScaleStabilizer = 1e-8;
constexpr double kTauFloor = 1e-6;
constexpr double kDiagPenalty = 1e9;

// Retained (top-K) column indices per row of the logit matrix; ties broken by
// ascending column index. Full non-diagonal row when K >= B.
std::vector<std::vector<int>> topk_columns(const Eigen::MatrixXd& logits, int K) {
    const int B = static_cast<int>(logits.rows());
    std::vector<std::vector<int>> retained(static_cast<size_t>(B));
    for (int i = 0; i < B; ++i) {
        auto& cols = retained[static_cast<size_t>(i)];
        if (K >= B) {
            for (int j = 0; j < B; ++j)
                if (j != i) cols.push_back(j);
            continue;
        }
        std::vector<int> order(static_cast<size_t>(B));
        std::iota(order.begin(), order.end(), 0);
        std::nth_element(order.begin(), order.begin() + K, order.end(), [&](int a, int b) {
            if (logits(i, a) != logits(i, b)) return logits(i, a) > logits(i, b);
            return a < b;
        });
        cols.assign(order.begin(), order.begin() + K);
        std::sort(cols.begin(), cols.end());
    }
    return retained;
}

Eigen::MatrixXd weighted_sq_dists(const Eigen::MatrixXd& batch, const Eigen::VectorXd& w_eff) {
    Eigen::MatrixXd Zt = batch * w_eff.asDiagonal();
    Eigen::VectorXd sq = Zt.rowwise().squaredNorm();
    Eigen::MatrixXd D2 = (-2.0 * Zt * Zt.transpose());
    D2.colwise() += sq;
    D2.rowwise() += sq.transpose();
    return D2.cwiseMax(0.0);
}

Eigen::MatrixXd probs_from_logits(const Eigen::MatrixXd& logits,
                                  const std::vector<std::vector<int>>& retained) {
    const int B = static_cast<int>(logits.rows());
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(B, B);
    for (int i = 0; i < B; ++i) {
        const auto& cols = retained[static_cast<size_t>(i)];
        double hi = -std::numeric_limits<double>::infinity();
        for (int j : cols) hi = std::max(hi, logits(i, j));
        double z = 0.0;
        for (int j : cols) z += std::exp(logits(i, j) - hi);
        for (int j : cols) P(i, j) = std::exp(logits(i, j) - hi) / z;
    }
    return P;
}

}  // namespace

WeightVector effective_weights(const Eigen::VectorXd& theta) {
    if (!theta.allFinite()) throw std::runtime_error("NonFiniteParameter");
    WeightVector w;
    w.theta = theta;
    w.w_raw = theta.unaryExpr([](double x) { return softplus(x); });
    const double d = static_cast<double>(theta.size());
    w.w_eff = w.w_raw * (d / (w.w_raw.sum() + kScaleStabilizer));
    return w;
}

Eigen::MatrixXd soft_knn_probs(const Eigen::MatrixXd& batch, const Eigen::VectorXd& w_eff,
                               double tau, int K) {
    const int B = static_cast<int>(batch.rows());
    if (B < 2) throw std::runtime_error("DegenerateBatch");
    const double taug = std::max(kTauFloor, tau);
    Eigen::MatrixXd logits = -weighted_sq_dists(batch, w_eff) / taug;
    logits.diagonal().array() -= kDiagPenalty;
    return probs_from_logits(logits, topk_columns(logits, K));
}

std::pair<double, double> batch_objective(const Eigen::MatrixXd& P,
                                          const std::vector<bool>& target_in_batch,
                                          const std::vector<bool>& query_in_batch,
                                          const Eigen::VectorXd& w_raw, double lambda) {
    const int B = static_cast<int>(P.rows());
    int n_q = 0;
    double sum_m = 0.0;
    for (int i = 0; i < B; ++i) {
        if (!query_in_batch[static_cast<size_t>(i)]) continue;
        ++n_q;
        for (int j = 0; j < B; ++j)
            if (target_in_batch[static_cast<size_t>(j)]) sum_m += P(i, j);
    }
    if (n_q == 0) throw std::runtime_error("NoQueriesInBatch");
    const double obj = sum_m / static_cast<double>(n_q);
    return {obj, -obj + lambda * w_raw.sum()};
}

double batch_loss_fixed_scale(const Eigen::MatrixXd& batch,
                              const std::vector<bool>& target_in_batch,
                              const std::vector<bool>& query_in_batch,
                              const Eigen::VectorXd& theta, double tau, int K, double lambda,
                              double scale_c) {
    Eigen::VectorXd w_raw = theta.unaryExpr([](double x) { return softplus(x); });
    Eigen::VectorXd w_eff = w_raw * scale_c;
    Eigen::MatrixXd P = soft_knn_probs(batch, w_eff, tau, K);
    return batch_objective(P, target_in_batch, query_in_batch, w_raw, lambda).second;
}

double batch_loss_grad(const Eigen::MatrixXd& batch, const std::vector<bool>& target_in_batch,
                       const std::vector<bool>& query_in_batch, const Eigen::VectorXd& theta,
                       double tau, int K, double lambda, Eigen::VectorXd* grad) {
    const int B = static_cast<int>(batch.rows());
    if (B < 2) throw std::runtime_error("DegenerateBatch");
    const Eigen::Index d = batch.cols();

    WeightVector w = effective_weights(theta);
    const double scale_c = static_cast<double>(d) / (w.w_raw.sum() + kScaleStabilizer);
    const double taug = std::max(kTauFloor, tau);

    Eigen::MatrixXd logits = -weighted_sq_dists(batch, w.w_eff) / taug;
    logits.diagonal().array() -= kDiagPenalty;
    auto retained = topk_columns(logits, K);
    Eigen::MatrixXd P = probs_from_logits(logits, retained);

    int n_q = 0;
    for (int i = 0; i < B; ++i)
        if (query_in_batch[static_cast<size_t>(i)]) ++n_q;
    if (n_q == 0) throw std::runtime_error("NoQueriesInBatch");

    double sum_m = 0.0;
    for (int i = 0; i < B; ++i) {
        if (!query_in_batch[static_cast<size_t>(i)]) continue;
        for (int j = 0; j < B; ++j)
            if (target_in_batch[static_cast<size_t>(j)]) sum_m += P(i, j);
    }
    const double obj = sum_m / static_cast<double>(n_q);
    const double loss = -obj + lambda * w.w_raw.sum();

    // dL/dP_ij = -query_i * target_j / n_q; softmax backward per retained row
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(B, B);  // dL/d(D2)_ij
    const double inv_nq = 1.0 / static_cast<double>(n_q);
    for (int i = 0; i < B; ++i) {
        if (!query_in_batch[static_cast<size_t>(i)]) continue;
        const auto& cols = retained[static_cast<size_t>(i)];
        double s_i = 0.0;
        for (int j : cols)
            if (target_in_batch[static_cast<size_t>(j)]) s_i += P(i, j) * (-inv_nq);
        for (int j : cols) {
            const double g = target_in_batch[static_cast<size_t>(j)] ? -inv_nq : 0.0;
            const double dl = P(i, j) * (g - s_i);  // dL/dlogit_ij
            M(i, j) = dl * (-1.0 / taug);
        }
    }

    // dL/dw_eff_f = 2 w_eff_f * sum_ij M_ij (u_if - u_jf)^2 via the quadratic
    // expansion (row sums, column sums, and the bilinear term).
    Eigen::VectorXd r = M.rowwise().sum();
    Eigen::RowVectorXd cc = M.colwise().sum();
    Eigen::MatrixXd U2 = batch.cwiseAbs2();
    Eigen::RowVectorXd quad = r.transpose() * U2;
    quad += cc * U2;
    quad -= 2.0 * batch.cwiseProduct(M * batch).colwise().sum();
    Eigen::VectorXd grad_w_eff = 2.0 * w.w_eff.cwiseProduct(quad.transpose());

    // stop-grad through the normalizing sum: w_eff = w_raw * const
    Eigen::VectorXd grad_w_raw = scale_c * grad_w_eff;
    grad_w_raw.array() += lambda;
    *grad = grad_w_raw.cwiseProduct(theta.unaryExpr([](double x) { return sigmoid(x); }));
    return loss;
}

WeightVector train_weights(const FeatureMatrix& U, const SubspaceMasks& masks,
                           const TrainConfig& cfg) {
    const int n = static_cast<int>(U.n_rows());
    const Eigen::Index d = U.n_cols();
    const std::vector<bool>& target = masks.target_mask;
    const std::vector<bool>& query = masks.query_mask.empty() ? masks.target_mask
                                                              : masks.query_mask;
    if (static_cast<int>(target.size()) != n || static_cast<int>(query.size()) != n)
        throw std::runtime_error("MaskSizeMismatch");

    std::vector<int> q_idx, nq_idx;
    for (int i = 0; i < n; ++i) (query[static_cast<size_t>(i)] ? q_idx : nq_idx).push_back(i);
    if (q_idx.empty()) throw std::runtime_error("InsufficientQueries: no query points");

    const int B = std::min(cfg.batch_size, n);
    int n_qb = static_cast<int>(std::lround(B * cfg.pos_frac));
    n_qb = std::clamp(n_qb, 1, B);
    const int n_nqb = B - n_qb;
    const bool q_replace = static_cast<int>(q_idx.size()) < n_qb;
    const bool nq_replace = static_cast<int>(nq_idx.size()) < n_nqb;
    if (q_replace)
        std::cerr << "warning: only " << q_idx.size() << " queries for batches of " << n_qb
                  << "; sampling queries with replacement\n";

    std::mt19937_64 rng(cfg.seed);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd m1 = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd m2 = Eigen::VectorXd::Zero(d);
    const double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;

    std::vector<int> batch_ids;
    Eigen::MatrixXd batch(B, d);
    std::vector<bool> t_b(static_cast<size_t>(B)), q_b(static_cast<size_t>(B));
    Eigen::VectorXd grad(d);

    const double log_ratio = cfg.epochs > 1 ? std::log(cfg.tau_end / cfg.tau_start) /
                                                  static_cast<double>(cfg.epochs - 1)
                                            : 0.0;
    // Polyak-Ruppert tail averaging: the late low-temperature epochs make the
    // SGD iterates very noisy, so the returned weights are the parameter
    // average over the second half of training rather than the last iterate.
    Eigen::VectorXd theta_avg = Eigen::VectorXd::Zero(d);
    int n_avg = 0;
    const int avg_start = cfg.epochs / 2;
    for (int t = 0; t < cfg.epochs; ++t) {
        const double tau = cfg.tau_start * std::exp(log_ratio * t);

        batch_ids.clear();
        if (q_replace) {
            std::uniform_int_distribution<size_t> pick(0, q_idx.size() - 1);
            for (int i = 0; i < n_qb; ++i) batch_ids.push_back(q_idx[pick(rng)]);
        } else {
            std::sample(q_idx.begin(), q_idx.end(), std::back_inserter(batch_ids), n_qb, rng);
        }
        if (nq_replace) {
            if (!nq_idx.empty()) {
                std::uniform_int_distribution<size_t> pick(0, nq_idx.size() - 1);
                for (int i = 0; i < n_nqb; ++i) batch_ids.push_back(nq_idx[pick(rng)]);
            }
        } else {
            std::sample(nq_idx.begin(), nq_idx.end(), std::back_inserter(batch_ids), n_nqb, rng);
        }
        std::shuffle(batch_ids.begin(), batch_ids.end(), rng);

        const int Bt = static_cast<int>(batch_ids.size());
        if (Bt < 2) continue;
        for (int i = 0; i < Bt; ++i) {
            batch.row(i) = U.values.row(batch_ids[static_cast<size_t>(i)]);
            t_b[static_cast<size_t>(i)] = target[static_cast<size_t>(batch_ids[static_cast<size_t>(i)])];
            q_b[static_cast<size_t>(i)] = query[static_cast<size_t>(batch_ids[static_cast<size_t>(i)])];
        }

        batch_loss_grad(batch.topRows(Bt), t_b, q_b, theta, tau, cfg.K, cfg.l1, &grad);

        m1 = b1 * m1 + (1.0 - b1) * grad;
        m2 = b2 * m2 + (1.0 - b2) * grad.cwiseAbs2();
        const double bc1 = 1.0 - std::pow(b1, t + 1);
        const double bc2 = 1.0 - std::pow(b2, t + 1);
        theta.array() -= cfg.lr * (m1.array() / bc1) /
                         ((m2.array() / bc2).sqrt() + adam_eps);
        if (t >= avg_start) {
            theta_avg += theta;
            ++n_avg;
        }
    }
    if (n_avg > 0) theta = theta_avg / static_cast<double>(n_avg);
    return effective_weights(theta);
}

std::vector<int> subset_size_grid(int d) {
    std::vector<int> grid{d};
    for (int v = (d - 1) / 50 * 50; v >= 150; v -= 50) grid.push_back(v);
    for (int v = 145; v >= 50; v -= 5)
        if (v < d) grid.push_back(v);
    for (int v = 48; v >= 16; v -= 2)
        if (v < d) grid.push_back(v);
    for (int v = 15; v >= 1; --v)
        if (v < d) grid.push_back(v);
    return grid;
}

std::vector<int> top_m_features(const Eigen::VectorXd& w_eff, int m) {
    std::vector<int> order(static_cast<size_t>(w_eff.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (w_eff[a] != w_eff[b]) return w_eff[a] > w_eff[b];
        return a < b;
    });
    order.resize(static_cast<size_t>(m));
    std::sort(order.begin(), order.end());
    return order;
}

double ndcg(const std::vector<bool>& hit_at_rank) {
    int hits = 0;
    double dcg = 0.0;
    for (size_t r = 0; r < hit_at_rank.size(); ++r) {
        if (hit_at_rank[r]) {
            ++hits;
            dcg += 1.0 / std::log2(static_cast<double>(r + 2));
        }
    }
    if (hits == 0) return 0.0;
    double idcg = 0.0;
    for (int r = 0; r < hits; ++r) idcg += 1.0 / std::log2(static_cast<double>(r + 2));
    return dcg / idcg;
}

SubsetScore cv_subset_score(const FeatureMatrix& U, const SubspaceMasks& masks,
                            const std::vector<int>& subset, int K, double beta, int n_splits,
                            std::uint64_t seed) {
    const int n = static_cast<int>(U.n_rows());
    if (subset.empty()) throw std::runtime_error("SubsetOutOfRange: empty subset");
    for (int f : subset)
        if (f < 0 || f >= U.n_cols()) throw std::runtime_error("SubsetOutOfRange");
    if (n_splits < 2) throw std::runtime_error("TooFewSamplesPerFold: n_splits < 2");
    if (n < n_splits) throw std::runtime_error("TooFewSamplesPerFold");

    const std::vector<bool>& target = masks.target_mask;
    const std::vector<bool>& query = masks.query_mask.empty() ? masks.target_mask
                                                              : masks.query_mask;

    // stratified folds: shuffle each stratum, deal round-robin
    std::vector<int> q_idx, nq_idx;
    for (int i = 0; i < n; ++i) (query[static_cast<size_t>(i)] ? q_idx : nq_idx).push_back(i);
    std::mt19937_64 rng(seed);
    std::shuffle(q_idx.begin(), q_idx.end(), rng);
    std::shuffle(nq_idx.begin(), nq_idx.end(), rng);
    std::vector<int> fold_of(static_cast<size_t>(n));
    for (size_t i = 0; i < q_idx.size(); ++i)
        fold_of[static_cast<size_t>(q_idx[i])] = static_cast<int>(i % static_cast<size_t>(n_splits));
    for (size_t i = 0; i < nq_idx.size(); ++i)
        fold_of[static_cast<size_t>(nq_idx[i])] = static_cast<int>(i % static_cast<size_t>(n_splits));

    const int m = static_cast<int>(subset.size());
    RowMatrixXd sub(n, m);
    for (int j = 0; j < m; ++j) sub.col(j) = U.values.col(subset[static_cast<size_t>(j)]);

    SubsetScore score;
    score.m = m;
    std::vector<double> fold_means, fold_purity;
    std::vector<int> train_ids;
    std::vector<std::pair<double, int>> cand;
    for (int f = 0; f < n_splits; ++f) {
        train_ids.clear();
        for (int i = 0; i < n; ++i)
            if (fold_of[static_cast<size_t>(i)] != f) train_ids.push_back(i);
        const int k_used = std::min<int>(K, static_cast<int>(train_ids.size()));
        if (k_used < 1) continue;

        double sum_s = 0.0, sum_phi = 0.0;
        int n_vq = 0;
        for (int i = 0; i < n; ++i) {
            if (fold_of[static_cast<size_t>(i)] != f || !query[static_cast<size_t>(i)]) continue;
            ++n_vq;
            cand.clear();
            cand.reserve(train_ids.size());
            for (int tid : train_ids)
                cand.emplace_back((sub.row(i) - sub.row(tid)).squaredNorm(), tid);
            std::nth_element(cand.begin(), cand.begin() + k_used, cand.end());
            std::sort(cand.begin(), cand.begin() + k_used);

            std::vector<bool> hit_at_rank(static_cast<size_t>(k_used));
            int hits = 0;
            for (int r = 0; r < k_used; ++r) {
                const bool h = target[static_cast<size_t>(cand[static_cast<size_t>(r)].second)];
                hit_at_rank[static_cast<size_t>(r)] = h;
                hits += h ? 1 : 0;
            }
            const double phi = static_cast<double>(hits) / static_cast<double>(k_used);
            const double q_i = ndcg(hit_at_rank);
            sum_s += phi + beta * (1.0 - phi) * q_i;
            sum_phi += phi;
        }
        if (n_vq == 0) continue;
        fold_means.push_back(sum_s / n_vq);
        fold_purity.push_back(sum_phi / n_vq);
    }
    if (fold_means.empty()) throw std::runtime_error("TooFewSamplesPerFold: no validation queries");
    score.per_fold = fold_means;
    score.mean_score = std::accumulate(fold_means.begin(), fold_means.end(), 0.0) /
                       static_cast<double>(fold_means.size());
    score.purity_only = std::accumulate(fold_purity.begin(), fold_purity.end(), 0.0) /
                        static_cast<double>(fold_purity.size());
    return score;
}

SubsetSelection select_subset(const FeatureMatrix& U, const SubspaceMasks& masks,
                              const WeightVector& w, const TrainConfig& cfg) {
    SubsetSelection sel;
    double best = -1.0;
    for (int m : subset_size_grid(static_cast<int>(U.n_cols()))) {
        auto features = top_m_features(w.w_eff, m);
        SubsetScore s = cv_subset_score(U, masks, features, cfg.K, cfg.beta, cfg.n_splits,
                                        cfg.seed);
        if (s.mean_score >= best) {  // grid is descending, so ties pick smaller m
            best = s.mean_score;
            sel.m_star = m;
            sel.features = std::move(features);
        }
        sel.curve.push_back(std::move(s));
    }
    return sel;
}

double jaccard(const std::vector<int>& a, const std::vector<int>& b) {
    std::vector<int> sa(a), sb(b);
    std::sort(sa.begin(), sa.end());
    sa.erase(std::unique(sa.begin(), sa.end()), sa.end());
    std::sort(sb.begin(), sb.end());
    sb.erase(std::unique(sb.begin(), sb.end()), sb.end());
    if (sa.empty() && sb.empty()) return 1.0;
    std::vector<int> inter;
    std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(inter));
    const double uni = static_cast<double>(sa.size() + sb.size() - inter.size());
    return static_cast<double>(inter.size()) / uni;
}

std::vector<ModeAttribution> refine_loop(const FeatureMatrix& X, const FeatureMatrix& Y,
                                         const EqualizationResult& eq, const TrainConfig& cfg,
                                         int graph_k, int max_refine_iters, int min_mode_size) {
    if (eq.pruned_X.empty() && eq.pruned_Y.empty())
        throw std::runtime_error("EmptyPrunedSet");

    const int n_X = static_cast<int>(X.n_rows());
    const int n = n_X + static_cast<int>(Y.n_rows());
    FeatureMatrix U{Eigen::MatrixXd(n, X.n_cols()), X.feature_names};
    U.values.topRows(X.n_rows()) = X.values;
    U.values.bottomRows(Y.n_rows()) = Y.values;
    PooledIndex idx(X, Y);

    std::vector<ModeAttribution> out;
    for (Origin dir : {Origin::Y, Origin::X}) {
        const auto& pruned = dir == Origin::Y ? eq.pruned_Y : eq.pruned_X;
        if (pruned.empty()) continue;
        ModePartition part = partition_modes(pruned, idx, graph_k);

        int mode_no = 0;
        for (const auto& mode : part.modes) {
            ++mode_no;
            if (static_cast<int>(mode.size()) < min_mode_size) continue;

            SubspaceMasks masks;
            masks.target_mask.assign(static_cast<size_t>(n), false);
            masks.query_mask.assign(static_cast<size_t>(n), false);
            for (int i = 0; i < n; ++i)
                masks.target_mask[static_cast<size_t>(i)] = idx.origin(i) == dir;
            for (int id : mode) masks.query_mask[static_cast<size_t>(id)] = true;

            ModeAttribution attr;
            attr.direction = dir;
            attr.mode_ids = mode;

            std::vector<int> support(static_cast<size_t>(U.n_cols()));
            std::iota(support.begin(), support.end(), 0);
            std::vector<int> prev_selected;
            for (int r = 0; r < max_refine_iters; ++r) {
                FeatureMatrix Usub{Eigen::MatrixXd(n, static_cast<Eigen::Index>(support.size())),
                                   {}};
                for (size_t j = 0; j < support.size(); ++j) {
                    Usub.values.col(static_cast<Eigen::Index>(j)) =
                        U.values.col(support[j]);
                    Usub.feature_names.push_back(U.feature_names[static_cast<size_t>(support[j])]);
                }
                TrainConfig rcfg = cfg;
                rcfg.seed = cfg.seed ^ (0x9e3779b97f4a7c15ULL *
                                        (static_cast<std::uint64_t>(mode_no) * 16 +
                                         static_cast<std::uint64_t>(r) * 2 +
                                         (dir == Origin::Y ? 0 : 1) + 1));
                WeightVector w = train_weights(Usub, masks, rcfg);
                SubsetSelection sel = select_subset(Usub, masks, w, rcfg);

                std::vector<int> selected;
                for (int f : sel.features) selected.push_back(support[static_cast<size_t>(f)]);
                std::sort(selected.begin(), selected.end());

                attr.m_star = sel.m_star;
                attr.curve = sel.curve;
                attr.w_eff.resize(static_cast<Eigen::Index>(sel.features.size()));
                for (size_t j = 0; j < sel.features.size(); ++j)
                    attr.w_eff[static_cast<Eigen::Index>(j)] = w.w_eff[sel.features[j]];
                attr.refine_iters = r + 1;

                const bool stable = !prev_selected.empty() &&
                                    drift::jaccard(selected, prev_selected) >= 0.95;
                prev_selected = selected;
                support = std::move(selected);
                if (stable) break;
            }
            attr.support = support;
            out.push_back(std::move(attr));
        }
    }
    return out;
}

}  // namespace drift
