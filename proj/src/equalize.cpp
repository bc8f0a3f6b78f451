#include "drift/equalize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace drift {

double tail_threshold(const NullModel& null, double q_tail) {
    if (!(q_tail >= 0.0 && q_tail < 1.0)) throw std::runtime_error("InvalidLevel");
    return null.quantile(q_tail);
}

TailTestResult ks_one_sided(const std::vector<double>& obs_tail,
                            const std::vector<double>& null_tail, double alpha,
                            int min_tail_size) {
    if (null_tail.empty()) throw std::runtime_error("EmptyNullTail");
    TailTestResult res;
    res.n_obs_tail = static_cast<int>(obs_tail.size());
    res.n_null_tail = static_cast<int>(null_tail.size());
    if (obs_tail.empty()) return res;  // nothing to prune: statistic 0, no rejection

    // D+ = sup_x (F_null(x) - F_obs(x)); both CDFs are right-continuous step
    // functions, so the sup is attained on the plateau right of a jump.
    const double n_obs = static_cast<double>(obs_tail.size());
    const double n_null = static_cast<double>(null_tail.size());
    size_t io = 0, in = 0;
    double d_plus = 0.0;
    while (io < obs_tail.size() || in < null_tail.size()) {
        double v;
        if (in == null_tail.size())
            v = obs_tail[io];
        else if (io == obs_tail.size())
            v = null_tail[in];
        else
            v = std::min(obs_tail[io], null_tail[in]);
        while (in < null_tail.size() && null_tail[in] <= v) ++in;
        while (io < obs_tail.size() && obs_tail[io] <= v) ++io;
        d_plus = std::max(d_plus, static_cast<double>(in) / n_null -
                                      static_cast<double>(io) / n_obs);
    }
    const double m_eff = n_obs * n_null / (n_obs + n_null);
    res.statistic = d_plus;
    res.p_value = std::exp(-2.0 * m_eff * d_plus * d_plus);
    res.reject = res.p_value < alpha && res.n_obs_tail >= min_tail_size;
    return res;
}

double tail_mass_pvalue(int n, double p, int k) {
    if (k <= 0) return 1.0;
    if (k > n) return 0.0;
    if (p <= 0.0) return 0.0;
    if (p >= 1.0) return 1.0;
    // log-space summation of the upper binomial tail; terms past the mode
    // decay geometrically, so accumulate until they stop contributing
    const double lp = std::log(p), lq = std::log1p(-p);
    auto log_pmf = [&](int j) {
        return std::lgamma(n + 1.0) - std::lgamma(j + 1.0) - std::lgamma(n - j + 1.0) +
               j * lp + (n - j) * lq;
    };
    double lmax = log_pmf(k);
    double acc = 1.0;  // relative to exp(lmax)
    double prev = 1.0;
    for (int j = k + 1; j <= n; ++j) {
        // pmf(j)/pmf(j-1) = (n-j+1)/j * p/(1-p)
        prev *= (static_cast<double>(n - j + 1) / j) * (p / (1.0 - p));
        acc += prev;
        if (prev < acc * 1e-16 && j > static_cast<int>(n * p)) break;
    }
    const double log_sf = lmax + std::log(acc);
    return log_sf >= 0.0 ? 1.0 : std::exp(log_sf);
}

namespace {

// Walks the candidate's neighbor ids in rank order, deactivating consecutive
// active same-cohort points until the first active opposite-cohort point.
// Returns the removed ids, candidate first; empty list means the walk ran off
// the supplied neighbor ids without meeting an active opposite point.
std::vector<int> prune_walk(PooledIndex& idx, int candidate, const std::vector<int>& neighbor_ids,
                            bool* exhausted) {
    const Origin own = idx.origin(candidate);
    std::vector<int> removed;
    removed.push_back(candidate);
    idx.deactivate(candidate);
    *exhausted = true;
    for (int id : neighbor_ids) {
        if (!idx.is_active(id)) continue;
        if (idx.origin(id) != own) {
            *exhausted = false;
            break;
        }
        idx.deactivate(id);
        removed.push_back(id);
    }
    return removed;
}

std::vector<int> full_neighbor_ids(const PooledIndex& idx, int candidate) {
    auto nbs = idx.knn_query(candidate, idx.active_count());
    std::vector<int> ids;
    ids.reserve(nbs.size());
    for (const auto& nb : nbs) ids.push_back(nb.id);
    return ids;
}

}  // namespace

std::vector<int> prune_step(PooledIndex& idx, int candidate) {
    if (!idx.is_active(candidate)) throw std::runtime_error("InactiveCandidate");
    auto ids = full_neighbor_ids(idx, candidate);
    bool exhausted = false;
    return prune_walk(idx, candidate, ids, &exhausted);
}

namespace {

struct Candidate {
    int id;
    double score;
    std::vector<int> neighbor_ids;  // stored ranked list, ~2*K_M deep
};

struct Side {
    Origin test;
    double p_hat = 0.0;
    double tau = 0.0;
    std::vector<double> null_tail;
    std::vector<Candidate> cands;
    TailTestResult ks;

    std::vector<double> obs_tail(const PooledIndex& idx) const {
        std::vector<double> t;
        for (const auto& c : cands)
            if (idx.is_active(c.id) && c.score >= tau) t.push_back(c.score);
        std::sort(t.begin(), t.end());
        return t;
    }

    // KS on the tail shape plus binomial exceedance on the tail mass; the
    // null tail probability is the empirical exceedance of the stored MC null
    void run_tests(const PooledIndex& idx, const EqualizeParams& params) {
        const auto obs = obs_tail(idx);
        ks = ks_one_sided(obs, null_tail, params.alpha, params.min_tail_size);
        ks.tail_threshold = tau;
        const double p0 =
            static_cast<double>(null_tail.size()) / static_cast<double>(params.n_mc_null);
        ks.mass_p_value =
            tail_mass_pvalue(idx.active_count(test), p0, static_cast<int>(obs.size()));
        ks.mass_reject = ks.mass_p_value < params.alpha &&
                         static_cast<int>(obs.size()) >= params.min_tail_size;
    }
};

double rescore_from_list(const PooledIndex& idx, const Candidate& cand, const ScoreTable& table,
                         Origin test, int k_cap, bool* exhausted) {
    std::vector<std::uint8_t> bits;
    bits.reserve(static_cast<size_t>(k_cap));
    for (int id : cand.neighbor_ids) {
        if (!idx.is_active(id)) continue;
        bits.push_back(idx.origin(id) == test ? 1 : 0);
        if (static_cast<int>(bits.size()) == k_cap) break;
    }
    *exhausted = static_cast<int>(bits.size()) < k_cap;
    if (bits.empty()) {
        *exhausted = true;
        return 0.0;
    }
    return score_sequence(bits, table, test).value;
}

}  // namespace

EqualizationResult equalize(const FeatureMatrix& X, const FeatureMatrix& Y,
                            const EqualizeParams& params, std::uint64_t seed) {
    if (X.n_rows() == 0 || Y.n_rows() == 0) throw std::runtime_error("EmptyCohort");
    PooledIndex idx(X, Y);
    EqualizationResult result;

    constexpr size_t kChunk = 2048;
    bool converged = false;

    for (int iter = 1; iter <= params.max_outer_iters; ++iter) {
        result.outer_iters = iter;
        if (idx.active_count(Origin::X) == 0 || idx.active_count(Origin::Y) == 0) break;

        const int total = idx.active_count();
        const int k_eff = std::min(params.K_M, total - 1);
        const int k_store = std::min(2 * params.K_M, total - 1);

        Side sides[2] = {Side{Origin::Y}, Side{Origin::X}};
        ScoreTable* tables[2] = {nullptr, nullptr};
        std::vector<ScoreTable> table_store;
        table_store.reserve(2);
        for (int s = 0; s < 2; ++s) {
            Side& side = sides[s];
            side.p_hat = static_cast<double>(idx.active_count(side.test)) /
                         static_cast<double>(total);
            // per-iteration sub-stream, identical for both sides so that
            // swapping the cohorts swaps the direction nulls exactly
            std::uint64_t sub = seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(iter));
            NullModel null = calibrate_null(k_eff, side.p_hat, params.n_mc_null, sub);
            side.tau = tail_threshold(null, params.q_tail);
            auto lo = std::lower_bound(null.samples.begin(), null.samples.end(), side.tau);
            side.null_tail.assign(lo, null.samples.end());
            table_store.emplace_back(k_eff, side.p_hat);
            tables[s] = &table_store.back();
        }

        // Global pass: score every active point in its own direction and keep
        // ranked neighbor lists for the tail candidates only.
        {
            std::vector<int> actives;
            actives.reserve(static_cast<size_t>(total));
            for (int i = 0; i < idx.size(); ++i)
                if (idx.is_active(i)) actives.push_back(i);

            std::vector<std::uint8_t> bits;
            for (size_t c0 = 0; c0 < actives.size(); c0 += kChunk) {
                const size_t c1 = std::min(c0 + kChunk, actives.size());
                std::vector<int> chunk(actives.begin() + static_cast<long>(c0),
                                       actives.begin() + static_cast<long>(c1));
                auto lists = idx.knn_batch(chunk, k_store);
                for (size_t qi = 0; qi < chunk.size(); ++qi) {
                    const int id = chunk[qi];
                    const int s = idx.origin(id) == Origin::Y ? 0 : 1;
                    Side& side = sides[s];
                    bits.clear();
                    for (const auto& nb : lists[qi]) {
                        bits.push_back(nb.origin == side.test ? 1 : 0);
                        if (static_cast<int>(bits.size()) == k_eff) break;
                    }
                    const double v = score_sequence(bits, *tables[s], side.test).value;
                    if (v >= side.tau) {
                        Candidate cand;
                        cand.id = id;
                        cand.score = v;
                        cand.neighbor_ids.reserve(lists[qi].size());
                        for (const auto& nb : lists[qi]) cand.neighbor_ids.push_back(nb.id);
                        side.cands.push_back(std::move(cand));
                    }
                }
            }
        }

        for (int s = 0; s < 2; ++s) sides[s].run_tests(idx, params);

        {
            TraceStep step{iter, 0, sides[0].ks, sides[1].ks,
                           static_cast<int>(sides[0].cands.size()),
                           static_cast<int>(sides[1].cands.size()),
                           {}, {}};
            result.trace.push_back(std::move(step));
        }

        if (!sides[0].ks.any_reject() && !sides[1].ks.any_reject()) {
            converged = true;
            break;
        }

        // Inner pruning loop against the candidates fixed at iteration start.
        int inner = 0;
        while (sides[0].ks.any_reject() || sides[1].ks.any_reject()) {
            ++inner;
            TraceStep step{iter, inner, {}, {}, 0, 0, {}, {}};
            for (int s = 0; s < 2; ++s) {
                Side& side = sides[s];
                if (!side.ks.any_reject()) continue;
                // most extreme first: highest current score, ties by low id
                std::vector<const Candidate*> active_cands;
                for (const auto& c : side.cands)
                    if (idx.is_active(c.id)) active_cands.push_back(&c);
                std::sort(active_cands.begin(), active_cands.end(),
                          [](const Candidate* a, const Candidate* b) {
                              if (a->score != b->score) return a->score > b->score;
                              return a->id < b->id;
                          });
                const int n_prune = std::min<int>(params.prune_batch,
                                                  static_cast<int>(active_cands.size()));
                auto& removed_log = side.test == Origin::Y ? step.removed_Y : step.removed_X;
                auto& pruned_set = side.test == Origin::Y ? result.pruned_Y : result.pruned_X;
                for (int pi = 0; pi < n_prune; ++pi) {
                    const Candidate* cand = active_cands[static_cast<size_t>(pi)];
                    if (!idx.is_active(cand->id)) continue;  // removed by an earlier walk
                    bool exhausted = false;
                    auto removed = prune_walk(idx, cand->id, cand->neighbor_ids, &exhausted);
                    if (exhausted && idx.active_count(side.test == Origin::Y ? Origin::X
                                                                            : Origin::Y) > 0) {
                        // stored list ran out of active points before an
                        // opposite-cohort stop: continue from a fresh query
                        for (int id : removed) idx.activate(id);
                        idx.activate(cand->id);
                        auto ids = full_neighbor_ids(idx, cand->id);
                        removed = prune_walk(idx, cand->id, ids, &exhausted);
                    }
                    for (int id : removed) {
                        pruned_set.push_back(id);
                        removed_log.push_back(id);
                    }
                }
            }

            const int k_inner = std::min(params.K_M, idx.active_count() - 1);
            for (int s = 0; s < 2; ++s) {
                Side& side = sides[s];
                std::vector<Candidate> kept;
                kept.reserve(side.cands.size());
                for (auto& c : side.cands) {
                    if (!idx.is_active(c.id)) continue;
                    bool exhausted = false;
                    c.score = rescore_from_list(idx, c, *tables[s], side.test, k_inner,
                                                &exhausted);
                    if (exhausted) {
                        auto ids = full_neighbor_ids(idx, c.id);
                        c.neighbor_ids = std::move(ids);
                        c.score = rescore_from_list(idx, c, *tables[s], side.test, k_inner,
                                                    &exhausted);
                    }
                    kept.push_back(std::move(c));
                }
                side.cands = std::move(kept);
                side.run_tests(idx, params);
            }

            step.ks_Y = sides[0].ks;
            step.ks_X = sides[1].ks;
            step.candidates_Y = static_cast<int>(sides[0].cands.size());
            step.candidates_X = static_cast<int>(sides[1].cands.size());
            result.trace.push_back(std::move(step));

            if (idx.active_count(Origin::X) == 0 || idx.active_count(Origin::Y) == 0) break;
        }
    }

    result.max_iters_exceeded = !converged;
    result.eq_mask_X.resize(static_cast<size_t>(idx.n_X()));
    result.eq_mask_Y.resize(static_cast<size_t>(idx.n_Y()));
    for (int i = 0; i < idx.n_X(); ++i) result.eq_mask_X[static_cast<size_t>(i)] = idx.is_active(i);
    for (int i = 0; i < idx.n_Y(); ++i)
        result.eq_mask_Y[static_cast<size_t>(i)] = idx.is_active(idx.n_X() + i);
    return result;
}

ModePartition partition_modes(const std::vector<int>& pruned, const PooledIndex& idx,
                              int graph_k) {
    if (pruned.empty()) throw std::runtime_error("EmptyPrunedSet");
    ModePartition part;
    part.graph_k = graph_k;
    const int n = static_cast<int>(pruned.size());
    if (n == 1) {
        part.modes.push_back({pruned[0]});
        return part;
    }

    std::vector<int> subset(pruned);
    std::sort(subset.begin(), subset.end());
    const int k = std::min(graph_k, n - 1);
    auto lists = idx.knn_within(subset, k);

    std::vector<int> pos(static_cast<size_t>(idx.size()), -1);
    for (int i = 0; i < n; ++i) pos[static_cast<size_t>(subset[static_cast<size_t>(i)])] = i;
    std::vector<std::vector<int>> nb(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        for (const auto& e : lists[static_cast<size_t>(i)])
            nb[static_cast<size_t>(i)].push_back(pos[static_cast<size_t>(e.id)]);
        std::sort(nb[static_cast<size_t>(i)].begin(), nb[static_cast<size_t>(i)].end());
    }
    auto has_nb = [&](int a, int b) {
        const auto& v = nb[static_cast<size_t>(a)];
        return std::binary_search(v.begin(), v.end(), b);
    };

    // union-find over mutual edges
    std::vector<int> parent(static_cast<size_t>(n));
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int a) {
        while (parent[static_cast<size_t>(a)] != a) {
            parent[static_cast<size_t>(a)] = parent[static_cast<size_t>(parent[static_cast<size_t>(a)])];
            a = parent[static_cast<size_t>(a)];
        }
        return a;
    };
    for (int i = 0; i < n; ++i)
        for (int j : nb[static_cast<size_t>(i)])
            if (j > i && has_nb(j, i)) {
                int ra = find(i), rb = find(j);
                if (ra != rb) parent[static_cast<size_t>(std::max(ra, rb))] = std::min(ra, rb);
            }

    std::vector<std::vector<int>> comp(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        comp[static_cast<size_t>(find(i))].push_back(subset[static_cast<size_t>(i)]);
    for (auto& c : comp)
        if (!c.empty()) part.modes.push_back(std::move(c));
    std::sort(part.modes.begin(), part.modes.end(),
              [](const std::vector<int>& a, const std::vector<int>& b) {
                  if (a.size() != b.size()) return a.size() > b.size();
                  return a.front() < b.front();
              });
    return part;
}

}  // namespace drift
