#pragma once

#include <cstdint>
#include <vector>

#include "drift/dataset.hpp"

namespace drift {
namespace bench {

inline constexpr int kDim = 20;

/// Four-component diagonal Gaussian mixture in R^20.
struct MixtureSpec {
    Eigen::Vector4d weights;
    Eigen::Matrix<double, 4, kDim> means;
    Eigen::Matrix<double, 4, kDim> variances;  // diagonal entries
};

/// The fixed background mixture of the 20D benchmark.
const MixtureSpec& background_mixture();

struct GlobalShiftSpec {
    double sigma = 0.0;
    int shifted_component = 2;          // 1-based, as in the construction
    std::vector<int> coords{0, 1, 3};
};

struct LocalShiftSpec {
    int n_inject = 0;
    std::vector<int> active_dims{2, 4, 6, 8, 9};
    std::vector<double> anchor_offsets{1.1, -0.4, 0.4, -0.2, 0.3};  // component-stddev units
    std::vector<double> scales{0.11, 0.08, 0.04, 0.04, 0.03};       // component-stddev units
    double shrinkage = 0.7;
    int base_component = 1;             // 1-based
};

FeatureMatrix sample_mixture(const MixtureSpec& spec, int n, std::uint64_t seed,
                             std::vector<int>* components = nullptr);

FeatureMatrix sample_background(int n, std::uint64_t seed,
                                std::vector<int>* components = nullptr);

/// X = background; Y = mixture with component 2 displaced by sigma along
/// coordinates {0,1,3}. Independent sub-seeds per cohort.
std::pair<FeatureMatrix, FeatureMatrix> make_global_pair(double sigma, int n,
                                                         std::uint64_t seed,
                                                         GlobalShiftSpec* truth = nullptr);

struct LocalPair {
    FeatureMatrix X;
    FeatureMatrix Y;                 // n background rows + n_inject appended
    std::vector<int> injected_ids;   // row indices into Y (the last n_inject)
    LocalShiftSpec truth;
};

/// X = background; Y = background plus an injected anisotropic cluster tied to
/// component 1, supported on dims {2,4,6,8,9} with a seeded random rotation in
/// the active subspace and 0.7-shrunk component noise elsewhere.
LocalPair make_local_pair(int n_inject, int n, std::uint64_t seed);

}  // namespace bench
}  // namespace drift
