#include "drift/benchgen.hpp"

#include <cmath>
#include <random>

namespace drift {
namespace bench {

namespace {

std::vector<std::string> feature_names() {
    std::vector<std::string> names;
    for (int j = 0; j < kDim; ++j) names.push_back("f" + std::to_string(j));
    return names;
}

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

const MixtureSpec& background_mixture() {
    static const MixtureSpec spec = [] {
        MixtureSpec s;
        s.weights << 0.35, 0.30, 0.20, 0.15;
        s.means << 0.0, 0.0, 0.5, -0.5, 0.0, 0.3, 0.0, 0.0, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 0.0, 0.0,  //
            2.5, -1.0, -0.5, 1.0, 0.5, -0.3, 0.0, 0.2, -0.2, 0.0, 0.0, 0.1, 0.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 0.0,  //
            -2.0, 1.5, 0.0, 0.5, -1.0, 0.0, 0.3, -0.2, 0.0, 0.0, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 0.0,  //
            1.0, 2.0, -1.0, -1.0, 0.0, 0.5, -0.5, 0.0, 0.0, 0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 0.0;
        s.variances << 1.2, 1.0, 0.8, 0.9, 0.7, 0.8, 1.0, 1.0, 0.9, 1.0, 1.0, 1.0, 1.0, 0.8, 0.8,
            0.8, 0.9, 0.9, 0.9, 0.9,  //
            0.9, 1.1, 0.7, 0.8, 0.8, 0.7, 1.0, 0.9, 1.0, 1.0, 1.0, 0.9, 1.0, 0.8, 0.8, 0.8, 1.0,
            1.0, 0.9, 0.9,  //
            1.0, 0.8, 1.0, 0.9, 0.7, 1.1, 0.8, 0.9, 1.0, 1.0, 0.9, 1.0, 1.0, 0.9, 0.8, 0.8, 0.8,
            0.9, 0.9, 1.0,  //
            1.1, 0.9, 0.8, 1.0, 0.8, 0.8, 0.9, 1.0, 1.0, 0.9, 1.0, 1.0, 0.9, 0.8, 0.8, 0.8, 0.9,
            0.9, 1.0, 1.0;
        return s;
    }();
    return spec;
}

FeatureMatrix sample_mixture(const MixtureSpec& spec, int n, std::uint64_t seed,
                             std::vector<int>* components) {
    if (n < 0) throw std::runtime_error("InvalidCount");
    FeatureMatrix fm{Eigen::MatrixXd(n, kDim), feature_names()};
    if (components) components->assign(static_cast<size_t>(n), -1);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::Vector4d cum;
    double acc = 0.0;
    for (int m = 0; m < 4; ++m) {
        acc += spec.weights[m];
        cum[m] = acc;
    }
    for (int i = 0; i < n; ++i) {
        const double u = unif(rng);
        int m = 0;
        while (m < 3 && u > cum[m]) ++m;
        if (components) (*components)[static_cast<size_t>(i)] = m;
        for (int j = 0; j < kDim; ++j)
            fm.values(i, j) = spec.means(m, j) + std::sqrt(spec.variances(m, j)) * normal(rng);
    }
    return fm;
}

FeatureMatrix sample_background(int n, std::uint64_t seed, std::vector<int>* components) {
    return sample_mixture(background_mixture(), n, seed, components);
}

std::pair<FeatureMatrix, FeatureMatrix> make_global_pair(double sigma, int n,
                                                         std::uint64_t seed,
                                                         GlobalShiftSpec* truth) {
    if (sigma < 0.0) throw std::runtime_error("InvalidSpec: sigma must be >= 0");
    GlobalShiftSpec spec;
    spec.sigma = sigma;
    if (truth) *truth = spec;

    FeatureMatrix X = sample_background(n, sub_seed(seed, 0));
    MixtureSpec shifted = background_mixture();
    for (int j : spec.coords) shifted.means(spec.shifted_component - 1, j) += sigma;
    FeatureMatrix Y = sample_mixture(shifted, n, sub_seed(seed, 1));
    return {std::move(X), std::move(Y)};
}

LocalPair make_local_pair(int n_inject, int n, std::uint64_t seed) {
    if (n_inject < 1) throw std::runtime_error("InvalidSpec: n_inject must be >= 1");
    LocalPair pair;
    pair.truth.n_inject = n_inject;
    const LocalShiftSpec& spec = pair.truth;
    const MixtureSpec& mix = background_mixture();
    const int comp = spec.base_component - 1;
    const int n_active = static_cast<int>(spec.active_dims.size());

    pair.X = sample_background(n, sub_seed(seed, 0));
    FeatureMatrix Ybg = sample_background(n, sub_seed(seed, 1));

    // random orthogonal rotation of the active subspace: QR of a seeded
    // Gaussian matrix, diagonal of R sign-fixed
    std::mt19937_64 rot_rng(sub_seed(seed, 2));
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd G(n_active, n_active);
    for (int i = 0; i < n_active; ++i)
        for (int j = 0; j < n_active; ++j) G(i, j) = normal(rot_rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
    Eigen::MatrixXd Q = qr.householderQ();
    Eigen::MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < n_active; ++j)
        if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);

    std::mt19937_64 inj_rng(sub_seed(seed, 3));
    pair.Y.values.resize(n + n_inject, kDim);
    pair.Y.values.topRows(n) = Ybg.values;
    pair.Y.feature_names = Ybg.feature_names;

    Eigen::VectorXd center(n_active), axis_scale(n_active);
    for (int a = 0; a < n_active; ++a) {
        const int dim = spec.active_dims[static_cast<size_t>(a)];
        const double std_dim = std::sqrt(mix.variances(comp, dim));
        center[a] = mix.means(comp, dim) + spec.anchor_offsets[static_cast<size_t>(a)] * std_dim;
        axis_scale[a] = spec.scales[static_cast<size_t>(a)] * std_dim;
    }

    Eigen::VectorXd e(n_active);
    for (int i = 0; i < n_inject; ++i) {
        const int row = n + i;
        for (int a = 0; a < n_active; ++a) e[a] = axis_scale[a] * normal(inj_rng);
        Eigen::VectorXd active_vals = center + Q * e;
        for (int j = 0; j < kDim; ++j)
            pair.Y.values(row, j) =
                mix.means(comp, j) +
                spec.shrinkage * std::sqrt(mix.variances(comp, j)) * normal(inj_rng);
        for (int a = 0; a < n_active; ++a)
            pair.Y.values(row, spec.active_dims[static_cast<size_t>(a)]) = active_vals[a];
        pair.injected_ids.push_back(row);
    }
    return pair;
}

}  // namespace bench
}  // namespace drift
