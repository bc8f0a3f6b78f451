#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "drift/equalize.hpp"
#include "drift/subspace.hpp"

namespace drift {

struct PipelineParams {
    EqualizeParams eq;
    TrainConfig train;
    int graph_k = 10;
    int max_refine_iters = 5;
    int min_mode_size = 10;  // smaller modes are kept in the partition but not attributed
};

struct SeedRunResult {
    std::uint64_t seed = 0;
    EqualizationResult eq;
    std::vector<ModeAttribution> attributions;
    std::vector<int> shift_set;       // union of mode supports, sorted
    double pruned_to_total = 0.0;     // (|pruned_X| + |pruned_Y|) / (n_X + n_Y)
    std::optional<double> pruned_to_injected;  // |pruned_Y ∩ injected| / |injected|
    double walltime_sec = 0.0;
};

/// standardize → equalize → partition → per-mode attribution, one seed.
/// Inputs are raw cohorts; standardization happens inside (pooled stats).
SeedRunResult run_pipeline_seed(const FeatureMatrix& X, const FeatureMatrix& Y,
                                const PipelineParams& params, std::uint64_t seed,
                                const std::vector<int>* injected_ids = nullptr);

}  // namespace drift
