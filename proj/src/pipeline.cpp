#include "drift/pipeline.hpp"

#include <algorithm>
#include <chrono>

namespace drift {

SeedRunResult run_pipeline_seed(const FeatureMatrix& X, const FeatureMatrix& Y,
                                const PipelineParams& params, std::uint64_t seed,
                                const std::vector<int>* injected_ids) {
    const auto t0 = std::chrono::steady_clock::now();
    SeedRunResult res;
    res.seed = seed;

    StandardizationStats stats;
    auto [Xs, Ys] = standardize(X, Y, stats);

    res.eq = equalize(Xs, Ys, params.eq, seed);
    const double n_total = static_cast<double>(X.n_rows() + Y.n_rows());
    res.pruned_to_total =
        static_cast<double>(res.eq.pruned_X.size() + res.eq.pruned_Y.size()) / n_total;

    if (injected_ids && !injected_ids->empty()) {
        // injected ids are Y row indices; pruned ids are pooled (offset n_X)
        const int n_X = static_cast<int>(X.n_rows());
        std::vector<int> inj(*injected_ids);
        std::sort(inj.begin(), inj.end());
        int hits = 0;
        for (int id : res.eq.pruned_Y)
            if (std::binary_search(inj.begin(), inj.end(), id - n_X)) ++hits;
        res.pruned_to_injected = static_cast<double>(hits) / static_cast<double>(inj.size());
    }

    if (!res.eq.pruned_X.empty() || !res.eq.pruned_Y.empty()) {
        TrainConfig tcfg = params.train;
        tcfg.seed = params.train.seed ^ seed;
        res.attributions = refine_loop(Xs, Ys, res.eq, tcfg, params.graph_k,
                                       params.max_refine_iters, params.min_mode_size);
        // A mode whose support never compresses below the full feature space
        // has no identified coordinate subset and contributes nothing to the
        // shift set (a shift supported everywhere is not feature-localized).
        const size_t d_full = static_cast<size_t>(X.n_cols());
        for (const auto& attr : res.attributions) {
            if (attr.support.size() == d_full) continue;
            res.shift_set.insert(res.shift_set.end(), attr.support.begin(), attr.support.end());
        }
        std::sort(res.shift_set.begin(), res.shift_set.end());
        res.shift_set.erase(std::unique(res.shift_set.begin(), res.shift_set.end()),
                            res.shift_set.end());
    }

    res.walltime_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

}  // namespace drift
