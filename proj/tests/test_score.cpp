#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "drift/score.hpp"

using namespace drift;

namespace {

// Independent oracle: -log of the binomial upper tail by direct long-double
// summation with a multiplicative pmf recursion, always summing the smaller
// of the two tails so no relative precision is lost near probability 1.
// Valid for small K only.
long double neglog_tail_oracle(int K, long double p, int b_obs) {
    if (b_obs == 0) return 0.0L;
    // pmf(0) = (1-p)^K, pmf(b+1) = pmf(b) * (K-b)/(b+1) * p/(1-p)
    long double pmf = std::pow(1.0L - p, static_cast<long double>(K));
    long double upper = 0.0L, lower = 0.0L;
    for (int b = 0; b <= K; ++b) {
        (b >= b_obs ? upper : lower) += pmf;
        pmf *= static_cast<long double>(K - b) / static_cast<long double>(b + 1) * p /
               (1.0L - p);
    }
    return upper < 0.5L ? -std::log(upper) : -std::log1p(-lower);
}

FeatureMatrix mat1d(std::initializer_list<double> vals) {
    FeatureMatrix fm;
    fm.values.resize(static_cast<Eigen::Index>(vals.size()), 1);
    Eigen::Index i = 0;
    for (double v : vals) fm.values(i++, 0) = v;
    fm.feature_names = {"f0"};
    return fm;
}

}  // namespace

TEST_CASE("binomial tail hand examples") {
    CHECK(binomial_tail_neglog(5, 0.5, 5) == doctest::Approx(5.0 * std::log(2.0)).epsilon(1e-12));
    CHECK(binomial_tail_neglog(10, 0.5, 0) == 0.0);
    CHECK(binomial_tail_neglog(4, 0.25, 3) ==
          doctest::Approx(-std::log(0.05078125)).epsilon(1e-12));
}

TEST_CASE("binomial tail input validation") {
    CHECK_THROWS_WITH_AS(binomial_tail_neglog(5, -0.1, 1), doctest::Contains("InvalidProbability"),
                         std::runtime_error);
    CHECK_THROWS_WITH_AS(binomial_tail_neglog(5, 1.1, 1), doctest::Contains("InvalidProbability"),
                         std::runtime_error);
    CHECK_THROWS_WITH_AS(binomial_tail_neglog(5, 0.5, 6), doctest::Contains("CountOutOfRange"),
                         std::runtime_error);
    CHECK_THROWS_WITH_AS(binomial_tail_neglog(5, 0.5, -1), doctest::Contains("CountOutOfRange"),
                         std::runtime_error);
}

TEST_CASE("binomial tail matches long-double oracle to 1e-10 relative") {
    for (double p : {0.1, 0.25, 0.5, 0.75}) {
        for (int K = 1; K <= 25; ++K) {
            for (int b = 0; b <= K; ++b) {
                const long double want = neglog_tail_oracle(K, static_cast<long double>(p), b);
                const double got = binomial_tail_neglog(K, p, b);
                if (want == 0.0L) {
                    CHECK(got == 0.0);
                } else {
                    CHECK(std::abs(static_cast<long double>(got) - want) / want < 1e-10L);
                }
            }
        }
    }
}

TEST_CASE("binomial tail nondecreasing in b_obs") {
    for (double p : {0.2, 0.5, 0.9}) {
        double prev = -1.0;
        for (int b = 0; b <= 30; ++b) {
            double v = binomial_tail_neglog(30, p, b);
            CHECK(v >= prev);
            prev = v;
        }
    }
}

TEST_CASE("binomial tail stays finite deep in the tail") {
    const double v = binomial_tail_neglog(400, 0.01, 400);
    CHECK(std::isfinite(v));
    CHECK(v == doctest::Approx(-400.0 * std::log(0.01)).epsilon(1e-10));
    CHECK(v > 690.0);  // tail probability below 1e-300
}

TEST_CASE("ScoreTable agrees with direct evaluation") {
    ScoreTable table(30, 0.37);
    for (int K = 1; K <= 30; ++K)
        for (int b = 0; b <= K; ++b)
            CHECK(table.neglog_sf(K, b) ==
                  doctest::Approx(binomial_tail_neglog(K, 0.37, b)).epsilon(1e-9));
}

TEST_CASE("score_sequence hand example (1,1,0) at p=0.5") {
    ScoreTable table(3, 0.5);
    auto s = score_sequence({1, 1, 0}, table, Origin::Y);
    CHECK(s.value == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(s.argmax_k == 2);
    CHECK(s.direction == Origin::Y);
}

TEST_CASE("score_sequence all zeros scores 0") {
    ScoreTable table(10, 0.3);
    auto s = score_sequence(std::vector<std::uint8_t>(10, 0), table, Origin::X);
    CHECK(s.value == 0.0);
}

TEST_CASE("score_sequence rejects empty input") {
    ScoreTable table(5, 0.5);
    CHECK_THROWS_WITH_AS(score_sequence({}, table, Origin::Y),
                         doctest::Contains("EmptySequence"), std::runtime_error);
}

TEST_CASE("score_sequence matches per-K enumeration oracle on random bits") {
    const int K_M = 50;
    std::mt19937_64 rng(42);
    for (double p : {0.2, 0.5, 0.7}) {
        ScoreTable table(K_M, p);
        std::bernoulli_distribution bit(0.5);
        for (int trial = 0; trial < 334; ++trial) {
            std::vector<std::uint8_t> bits(K_M);
            for (auto& b : bits) b = bit(rng) ? 1 : 0;
            // oracle: explicit max over K of the long-double tail evaluation
            long double best = -1.0L, second = -1.0L;
            int best_k = 0, cum = 0;
            for (int K = 1; K <= K_M; ++K) {
                cum += bits[static_cast<size_t>(K - 1)];
                const long double v =
                    neglog_tail_oracle(K, static_cast<long double>(p), cum);
                if (v > best) {
                    second = best;
                    best = v;
                    best_k = K;
                } else if (v > second) {
                    second = v;
                }
            }
            auto s = score_sequence(bits, table, Origin::Y);
            CHECK(s.value == doctest::Approx(static_cast<double>(best)).epsilon(1e-9));
            // smallest-K tie-break is only well defined away from float ties
            if (best - second > 1e-9L) CHECK(s.argmax_k == best_k);
        }
    }
}

TEST_CASE("score_cohort boundary: single Y point") {
    auto X = mat1d({0, 1, 2, 3});
    auto Y = mat1d({1.5});
    PooledIndex idx(X, Y);
    auto scores = score_cohort(idx, Origin::Y, 4);
    REQUIRE(scores.size() == 1);
    CHECK(scores[0].first == 4);
    // p_hat = 1/5 and all 4 neighbors are X: score must equal the all-miss tail
    ScoreTable table(4, 0.2);
    auto want = score_sequence({0, 0, 0, 0}, table, Origin::Y);
    CHECK(scores[0].second.value == doctest::Approx(want.value));
}

TEST_CASE("score_cohort far tight cluster saturates at cluster scale") {
    // Y = 30 points clustered far from 200 X points: every cluster point sees
    // 29 Y neighbors first, so Upsilon >= the 29-success tail at p_hat.
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g;
    FeatureMatrix X, Y;
    X.values.resize(200, 2);
    Y.values.resize(30, 2);
    for (int i = 0; i < 200; ++i) X.values.row(i) << g(rng), g(rng);
    for (int i = 0; i < 30; ++i) Y.values.row(i) << 100.0 + 0.01 * g(rng), 0.01 * g(rng);
    X.feature_names = Y.feature_names = {"f0", "f1"};
    PooledIndex idx(X, Y);
    const double p_hat = 30.0 / 230.0;
    const double floor_val = binomial_tail_neglog(29, p_hat, 29);
    auto scores = score_cohort(idx, Origin::Y, 100);
    REQUIRE(scores.size() == 30);
    for (const auto& [id, s] : scores) CHECK(s.value >= floor_val - 1e-9);
}

TEST_CASE("score_cohort empty cohort is an error") {
    auto X = mat1d({0, 1});
    FeatureMatrix Y;
    Y.values.resize(0, 1);
    Y.feature_names = {"f0"};
    PooledIndex idx(X, Y);
    CHECK_THROWS_WITH_AS(score_cohort(idx, Origin::Y, 2), doctest::Contains("EmptyCohort"),
                         std::runtime_error);
}

TEST_CASE("calibrate_null determinism and sample count") {
    auto a = calibrate_null(50, 0.4, 2000, 123);
    auto b = calibrate_null(50, 0.4, 2000, 123);
    CHECK(a.samples == b.samples);
    CHECK(a.samples.size() == 2000);
    CHECK(std::is_sorted(a.samples.begin(), a.samples.end()));
    auto c = calibrate_null(50, 0.4, 2000, 124);
    CHECK(a.samples != c.samples);
}

TEST_CASE("calibrate_null exact two-point null at K_M=1, p=0.5") {
    auto null = calibrate_null(1, 0.5, 20000, 7);
    int zeros = 0, log2s = 0;
    for (double v : null.samples) {
        if (v == 0.0)
            ++zeros;
        else if (std::abs(v - std::log(2.0)) < 1e-12)
            ++log2s;
    }
    CHECK(zeros + log2s == 20000);
    // 3 sigma binomial band around 10000
    CHECK(std::abs(zeros - 10000) < 3 * std::sqrt(20000 * 0.25));
}

TEST_CASE("calibrate_null requires enough samples") {
    CHECK_THROWS_WITH_AS(calibrate_null(10, 0.5, 500, 0), doctest::Contains("TooFewSamples"),
                         std::runtime_error);
}

TEST_CASE("quantile lower-index convention") {
    NullModel null;
    null.n_mc = 100;
    for (int i = 0; i < 100; ++i) null.samples.push_back(static_cast<double>(i));
    CHECK(null.quantile(0.97) == 97.0);
    CHECK(null.quantile(0.0) == 0.0);
    CHECK(null.quantile(0.5) == 50.0);
    CHECK(null.quantile(1.0) == 99.0);  // clamped to the maximum
}

TEST_CASE("null quantile self-consistency at K_M=400") {
    auto null = calibrate_null(400, 0.5, 20000, 31);
    const double thr = null.quantile(0.97);
    CHECK(thr > 0.0);
    auto fresh = calibrate_null(400, 0.5, 20000, 32);
    int above = 0;
    for (double v : fresh.samples) above += v > thr ? 1 : 0;
    const double frac = above / 20000.0;
    CHECK(std::abs(frac - 0.03) < 4 * std::sqrt(0.03 * 0.97 / 20000.0));
}

TEST_CASE("flag_threshold conventions") {
    NullModel null;
    null.n_mc = 1000;
    for (int i = 0; i < 1000; ++i) null.samples.push_back(static_cast<double>(i));
    CHECK(flag_threshold(null, 1.0 / 1000) == 999.0);  // maximum sample
    CHECK(flag_threshold(null, 0.5) == 500.0);         // empirical median
    CHECK_THROWS_WITH_AS(flag_threshold(null, 0.0), doctest::Contains("InvalidLevel"),
                         std::runtime_error);
    CHECK_THROWS_WITH_AS(flag_threshold(null, 1.0), doctest::Contains("InvalidLevel"),
                         std::runtime_error);
}
