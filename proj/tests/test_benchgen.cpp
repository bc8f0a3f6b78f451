#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "drift/benchgen.hpp"

using namespace drift;
using namespace drift::bench;

TEST_CASE("background mixture equals the literal parameter tables") {
    const MixtureSpec& s = background_mixture();
    Eigen::Vector4d w;
    w << 0.35, 0.30, 0.20, 0.15;
    CHECK(s.weights == w);
    const double mu[4][kDim] = {
        {0.0, 0.0, 0.5, -0.5, 0.0, 0.3, 0.0, 0.0, 0.2, 0.0,
         0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
        {2.5, -1.0, -0.5, 1.0, 0.5, -0.3, 0.0, 0.2, -0.2, 0.0,
         0.0, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
        {-2.0, 1.5, 0.0, 0.5, -1.0, 0.0, 0.3, -0.2, 0.0, 0.0,
         0.2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
        {1.0, 2.0, -1.0, -1.0, 0.0, 0.5, -0.5, 0.0, 0.0, 0.3,
         0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0}};
    const double var[4][kDim] = {
        {1.2, 1.0, 0.8, 0.9, 0.7, 0.8, 1.0, 1.0, 0.9, 1.0,
         1.0, 1.0, 1.0, 0.8, 0.8, 0.8, 0.9, 0.9, 0.9, 0.9},
        {0.9, 1.1, 0.7, 0.8, 0.8, 0.7, 1.0, 0.9, 1.0, 1.0,
         1.0, 0.9, 1.0, 0.8, 0.8, 0.8, 1.0, 1.0, 0.9, 0.9},
        {1.0, 0.8, 1.0, 0.9, 0.7, 1.1, 0.8, 0.9, 1.0, 1.0,
         0.9, 1.0, 1.0, 0.9, 0.8, 0.8, 0.8, 0.9, 0.9, 1.0},
        {1.1, 0.9, 0.8, 1.0, 0.8, 0.8, 0.9, 1.0, 1.0, 0.9,
         1.0, 1.0, 0.9, 0.8, 0.8, 0.8, 0.9, 0.9, 1.0, 1.0}};
    for (int m = 0; m < 4; ++m)
        for (int j = 0; j < kDim; ++j) {
            CHECK(s.means(m, j) == mu[m][j]);
            CHECK(s.variances(m, j) == var[m][j]);
        }
}

TEST_CASE("sample_background component frequencies within 4-sigma multinomial bounds") {
    const int n = 200000;
    std::vector<int> comps;
    sample_background(n, 123, &comps);
    const double pis[4] = {0.35, 0.30, 0.20, 0.15};
    int counts[4] = {0, 0, 0, 0};
    for (int c : comps) counts[c]++;
    for (int m = 0; m < 4; ++m) {
        const double sd = std::sqrt(n * pis[m] * (1 - pis[m]));
        CHECK(std::abs(counts[m] - n * pis[m]) < 4 * sd);
    }
}

TEST_CASE("sample_background per-coordinate means match the analytic mixture mean") {
    const int n = 200000;
    FeatureMatrix fm = sample_background(n, 321);
    const MixtureSpec& s = background_mixture();
    for (int j = 0; j < kDim; ++j) {
        double want = 0.0, var_mix = 0.0;
        for (int m = 0; m < 4; ++m) want += s.weights(m) * s.means(m, j);
        for (int m = 0; m < 4; ++m)
            var_mix += s.weights(m) * (s.variances(m, j) + std::pow(s.means(m, j) - want, 2));
        const double got = fm.values.col(j).mean();
        CHECK(std::abs(got - want) < 4 * std::sqrt(var_mix / n));
    }
}

TEST_CASE("generation is a pure function of the seed") {
    FeatureMatrix a = sample_background(500, 9);
    FeatureMatrix b = sample_background(500, 9);
    CHECK(a.values == b.values);
    FeatureMatrix c = sample_background(500, 10);
    CHECK(a.values != c.values);

    auto [gx1, gy1] = make_global_pair(0.3, 400, 4);
    auto [gx2, gy2] = make_global_pair(0.3, 400, 4);
    CHECK(gx1.values == gx2.values);
    CHECK(gy1.values == gy2.values);

    auto l1 = make_local_pair(50, 400, 4);
    auto l2 = make_local_pair(50, 400, 4);
    CHECK(l1.Y.values == l2.Y.values);
    CHECK(l1.injected_ids == l2.injected_ids);
}

TEST_CASE("global pair cohorts use independent sub-seeds") {
    auto [X, Y] = make_global_pair(0.0, 300, 8);
    CHECK(X.values != Y.values);  // sigma = 0 means equal law, not equal draws
}

TEST_CASE("global shift moves only component 2 along coords {0,1,3}") {
    const int n = 200000;
    const double sigma = 0.5;
    auto [X, Y] = make_global_pair(sigma, n, 15);
    const MixtureSpec& s = background_mixture();
    for (int j = 0; j < kDim; ++j) {
        double var_mix = 0.0, mean_mix = 0.0;
        for (int m = 0; m < 4; ++m) mean_mix += s.weights(m) * s.means(m, j);
        for (int m = 0; m < 4; ++m)
            var_mix +=
                s.weights(m) * (s.variances(m, j) + std::pow(s.means(m, j) - mean_mix, 2));
        const double diff = Y.values.col(j).mean() - X.values.col(j).mean();
        const double se = std::sqrt(2.0 * var_mix / n);
        const bool shifted = j == 0 || j == 1 || j == 3;
        const double want = shifted ? s.weights(1) * sigma : 0.0;  // pi_2 = 0.30
        CHECK(std::abs(diff - want) < 4 * se);
    }
}

TEST_CASE("local pair: injected ids are the trailing Y rows") {
    auto pair = make_local_pair(120, 1000, 3);
    CHECK(pair.Y.n_rows() == 1120);
    REQUIRE(pair.injected_ids.size() == 120);
    for (int i = 0; i < 120; ++i) CHECK(pair.injected_ids[static_cast<size_t>(i)] == 1000 + i);
    CHECK(pair.X.n_rows() == 1000);
    CHECK(pair.truth.n_inject == 120);
    CHECK(pair.truth.active_dims == std::vector<int>{2, 4, 6, 8, 9});
}

TEST_CASE("local pair: injected moments match the construction") {
    const int n_inj = 10000;
    auto pair = make_local_pair(n_inj, 100, 77);
    const MixtureSpec& s = background_mixture();
    Eigen::MatrixXd inj = pair.Y.values.bottomRows(n_inj);

    // center on dim 2: mu_1[2] + 1.1 * sqrt(var_1[2]) = 0.5 + 1.1 * sqrt(0.8)
    const double want_c2 = 0.5 + 1.1 * std::sqrt(0.8);
    CHECK(inj.col(2).mean() == doctest::Approx(want_c2).epsilon(0.02));

    // active-subspace covariance eigenvalues = (scale_k * sigma_1[dim_k])^2 sorted
    const std::vector<int> dims{2, 4, 6, 8, 9};
    const std::vector<double> scales{0.11, 0.08, 0.04, 0.04, 0.03};
    Eigen::MatrixXd A(n_inj, 5);
    for (int k = 0; k < 5; ++k) A.col(k) = inj.col(dims[static_cast<size_t>(k)]);
    Eigen::RowVectorXd mu = A.colwise().mean();
    Eigen::MatrixXd C = (A.rowwise() - mu).transpose() * (A.rowwise() - mu) / n_inj;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(C);
    std::vector<double> want_ev;
    for (int k = 0; k < 5; ++k)
        want_ev.push_back(std::pow(scales[static_cast<size_t>(k)] *
                                       std::sqrt(s.variances(0, dims[static_cast<size_t>(k)])),
                                   2));
    std::sort(want_ev.begin(), want_ev.end());
    for (int k = 0; k < 5; ++k)
        CHECK(eig.eigenvalues()(k) == doctest::Approx(want_ev[static_cast<size_t>(k)]).epsilon(0.1));

    // inactive dims: variance shrunk by 0.7^2
    for (int j : {0, 1, 3, 5, 7}) {
        const double want_var = 0.49 * s.variances(0, j);
        const double got_mu = inj.col(j).mean();
        const double got_var = (inj.col(j).array() - got_mu).square().mean();
        CHECK(got_var == doctest::Approx(want_var).epsilon(0.08));
        CHECK(got_mu == doctest::Approx(s.means(0, j)).epsilon(0.05).scale(1.0));
    }
}

TEST_CASE("truth spec defaults") {
    GlobalShiftSpec g;
    CHECK(g.shifted_component == 2);
    CHECK(g.coords == std::vector<int>{0, 1, 3});
    LocalShiftSpec l;
    CHECK(l.anchor_offsets == std::vector<double>{1.1, -0.4, 0.4, -0.2, 0.3});
    CHECK(l.scales == std::vector<double>{0.11, 0.08, 0.04, 0.04, 0.03});
    CHECK(l.shrinkage == 0.7);
    CHECK(l.base_component == 1);
}
