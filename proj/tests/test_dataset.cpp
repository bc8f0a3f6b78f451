#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>

#include "drift/dataset.hpp"

using namespace drift;

namespace {

std::string write_tmp(const std::string& name, const std::string& content) {
    std::string path = "/tmp/drift_test_" + name;
    std::ofstream out(path);
    out << content;
    return path;
}

FeatureMatrix from_values(const Eigen::MatrixXd& v) {
    FeatureMatrix fm;
    fm.values = v;
    for (Eigen::Index j = 0; j < v.cols(); ++j) fm.feature_names.push_back("f" + std::to_string(j));
    return fm;
}

// Independent oracle: all pairwise distances, full sort by (distance, id).
std::vector<Neighbor> brute_knn(const PooledIndex& idx, int q, int k) {
    std::vector<std::pair<double, int>> all;
    for (int j = 0; j < idx.size(); ++j) {
        if (j == q || !idx.is_active(j)) continue;
        all.emplace_back((idx.points().row(q) - idx.points().row(j)).norm(), j);
    }
    std::sort(all.begin(), all.end());
    std::vector<Neighbor> out;
    for (int i = 0; i < std::min<int>(k, static_cast<int>(all.size())); ++i)
        out.push_back({all[i].second, idx.origin(all[i].second), all[i].first});
    return out;
}

}  // namespace

TEST_CASE("load_csv parses a simple two-column file") {
    auto path = write_tmp("basic.csv", "a,b\n1,2\n3,4\n");
    FeatureMatrix fm = load_csv(path);
    CHECK(fm.n_rows() == 2);
    CHECK(fm.n_cols() == 2);
    CHECK(fm.feature_names == std::vector<std::string>{"a", "b"});
    CHECK(fm.values(0, 0) == 1.0);
    CHECK(fm.values(1, 1) == 4.0);
}

TEST_CASE("load_csv error cases") {
    CHECK_THROWS_WITH_AS(load_csv("/tmp/definitely_missing_drift.csv"),
                         doctest::Contains("MissingFile"), std::runtime_error);
    CHECK_THROWS_WITH_AS(load_csv(write_tmp("ragged.csv", "a,b\n1,2\n3\n")),
                         doctest::Contains("RaggedRow"), std::runtime_error);
    CHECK_THROWS_WITH_AS(load_csv(write_tmp("nonnum.csv", "a,b\n1,x\n")),
                         doctest::Contains("NonNumericCell"), std::runtime_error);
    CHECK_THROWS_WITH_AS(load_csv(write_tmp("nan.csv", "a,b\n1,NaN\n")),
                         doctest::Contains("NonFiniteValue"), std::runtime_error);
}

TEST_CASE("load_csv empty data section yields zero rows") {
    FeatureMatrix fm = load_csv(write_tmp("empty.csv", "a,b,c\n"));
    CHECK(fm.n_rows() == 0);
    CHECK(fm.n_cols() == 3);
}

TEST_CASE("write_csv round-trips exactly") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    Eigen::MatrixXd v(5, 3);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 3; ++j) v(i, j) = g(rng);
    FeatureMatrix fm = from_values(v);
    std::string path = "/tmp/drift_test_rt.csv";
    write_csv(path, fm);
    FeatureMatrix back = load_csv(path);
    CHECK(back.feature_names == fm.feature_names);
    CHECK(back.values == fm.values);  // 17 significant digits => bit-exact
}

TEST_CASE("standardize hand example, population convention") {
    Eigen::MatrixXd xv(2, 1), yv(2, 1);
    xv << 0, 2;
    yv << 0, 2;
    StandardizationStats stats;
    auto [Xs, Ys] = standardize(from_values(xv), from_values(yv), stats);
    CHECK(stats.means(0) == doctest::Approx(1.0));
    CHECK(stats.stddevs(0) == doctest::Approx(1.0));
    CHECK(Xs.values(0, 0) == doctest::Approx(-1.0));
    CHECK(Xs.values(1, 0) == doctest::Approx(1.0));
    CHECK(Ys.values(0, 0) == doctest::Approx(-1.0));
    CHECK(Ys.values(1, 0) == doctest::Approx(1.0));
}

TEST_CASE("standardize zeroes constant columns and records them") {
    Eigen::MatrixXd xv(3, 2), yv(2, 2);
    xv << 5, 1, 5, 2, 5, 3;
    yv << 5, 4, 5, 5;
    StandardizationStats stats;
    auto [Xs, Ys] = standardize(from_values(xv), from_values(yv), stats);
    CHECK(stats.constant_features == std::vector<int>{0});
    CHECK(Xs.values.col(0).cwiseAbs().maxCoeff() == 0.0);
    CHECK(Ys.values.col(0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("standardize is idempotent and recenters to pooled moments") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(2.0, 5.0);
    Eigen::MatrixXd xv(40, 4), yv(60, 4);
    for (int i = 0; i < 40; ++i)
        for (int j = 0; j < 4; ++j) xv(i, j) = g(rng);
    for (int i = 0; i < 60; ++i)
        for (int j = 0; j < 4; ++j) yv(i, j) = g(rng);
    StandardizationStats s1;
    auto [Xs, Ys] = standardize(from_values(xv), from_values(yv), s1);
    for (int j = 0; j < 4; ++j) {
        double mean = (Xs.values.col(j).sum() + Ys.values.col(j).sum()) / 100.0;
        double var = (Xs.values.col(j).cwiseAbs2().sum() + Ys.values.col(j).cwiseAbs2().sum()) /
                         100.0 -
                     mean * mean;
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(var - 1.0) < 1e-6);
    }
    StandardizationStats s2;
    auto [Xs2, Ys2] = standardize(Xs, Ys, s2);
    CHECK((Xs2.values - Xs.values).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((Ys2.values - Ys.values).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("standardize rejects mismatched dimensions") {
    StandardizationStats stats;
    CHECK_THROWS_WITH_AS(
        standardize(from_values(Eigen::MatrixXd::Zero(2, 2)),
                    from_values(Eigen::MatrixXd::Zero(2, 3)), stats),
        doctest::Contains("DimensionMismatch"), std::runtime_error);
}

TEST_CASE("PooledIndex origins and counts") {
    auto X = from_values(Eigen::MatrixXd::Random(2, 3));
    auto Y = from_values(Eigen::MatrixXd::Random(3, 3));
    PooledIndex idx(X, Y);
    CHECK(idx.size() == 5);
    CHECK(idx.origin(0) == Origin::X);
    CHECK(idx.origin(1) == Origin::X);
    CHECK(idx.origin(2) == Origin::Y);
    CHECK(idx.origin(4) == Origin::Y);
    CHECK(idx.active_count() == 5);
    CHECK(idx.active_count(Origin::X) == 2);
    CHECK(idx.active_count(Origin::Y) == 3);
}

TEST_CASE("knn_query collinear points, ordered by distance") {
    Eigen::MatrixXd xv(3, 1);
    xv << 0, 1, 3;
    PooledIndex idx(from_values(xv), from_values(Eigen::MatrixXd(0, 1)));
    auto nb = idx.knn_query(1, 2);
    REQUIRE(nb.size() == 2);
    CHECK(nb[0].id == 0);
    CHECK(nb[0].distance == doctest::Approx(1.0));
    CHECK(nb[1].id == 2);
    CHECK(nb[1].distance == doctest::Approx(2.0));
}

TEST_CASE("knn_query truncates when k exceeds active count") {
    Eigen::MatrixXd xv(3, 1);
    xv << 0, 1, 3;
    PooledIndex idx(from_values(xv), from_values(Eigen::MatrixXd(0, 1)));
    CHECK(idx.knn_query(0, 50).size() == 2);
}

TEST_CASE("knn distance ties break by ascending id") {
    Eigen::MatrixXd xv(3, 2);
    xv << 0, 0, 1, 0, 0, 1;  // ids 1 and 2 both at distance 1 from id 0
    PooledIndex idx(from_values(xv), from_values(Eigen::MatrixXd(0, 2)));
    auto nb = idx.knn_query(0, 2);
    CHECK(nb[0].id == 1);
    CHECK(nb[1].id == 2);
}

TEST_CASE("knn matches brute-force oracle on random instances") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g;
    Eigen::MatrixXd xv(500, 5), yv(500, 5);
    for (int i = 0; i < 500; ++i)
        for (int j = 0; j < 5; ++j) {
            xv(i, j) = g(rng);
            yv(i, j) = g(rng);
        }
    PooledIndex idx(from_values(xv), from_values(yv));
    std::vector<int> queries{0, 3, 499, 500, 777, 999};
    auto batched = idx.knn_batch(queries, 50);
    for (size_t qi = 0; qi < queries.size(); ++qi) {
        auto oracle = brute_knn(idx, queries[qi], 50);
        auto single = idx.knn_query(queries[qi], 50);
        REQUIRE(single.size() == oracle.size());
        REQUIRE(batched[qi].size() == oracle.size());
        for (size_t r = 0; r < oracle.size(); ++r) {
            CHECK(single[r].id == oracle[r].id);
            CHECK(single[r].distance == doctest::Approx(oracle[r].distance).epsilon(1e-12));
            CHECK(batched[qi][r].id == oracle[r].id);
        }
    }
}

TEST_CASE("deactivation removes points; reactivation restores lists exactly") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    Eigen::MatrixXd xv(100, 3), yv(100, 3);
    for (int i = 0; i < 100; ++i)
        for (int j = 0; j < 3; ++j) {
            xv(i, j) = g(rng);
            yv(i, j) = g(rng);
        }
    PooledIndex idx(from_values(xv), from_values(yv));
    auto before = idx.knn_query(7, 30);
    idx.deactivate(before[0].id);
    idx.deactivate(before[4].id);
    auto during = idx.knn_query(7, 30);
    for (const auto& nb : during) {
        CHECK(nb.id != before[0].id);
        CHECK(nb.id != before[4].id);
    }
    auto oracle = brute_knn(idx, 7, 30);
    REQUIRE(during.size() == oracle.size());
    for (size_t r = 0; r < oracle.size(); ++r) CHECK(during[r].id == oracle[r].id);
    idx.activate(before[0].id);
    idx.activate(before[4].id);
    auto after = idx.knn_query(7, 30);
    REQUIRE(after.size() == before.size());
    for (size_t r = 0; r < before.size(); ++r) {
        CHECK(after[r].id == before[r].id);
        CHECK(after[r].distance == before[r].distance);
    }
}

TEST_CASE("knn_query on an inactive point is an error") {
    Eigen::MatrixXd xv(3, 1);
    xv << 0, 1, 3;
    PooledIndex idx(from_values(xv), from_values(Eigen::MatrixXd(0, 1)));
    idx.deactivate(1);
    CHECK_THROWS_WITH_AS(idx.knn_query(1, 1), doctest::Contains("InactiveQuery"),
                         std::runtime_error);
}

TEST_CASE("knn_within restricts candidates to the given subset") {
    Eigen::MatrixXd xv(6, 1);
    xv << 0, 1, 2, 10, 11, 12;
    PooledIndex idx(from_values(xv), from_values(Eigen::MatrixXd(0, 1)));
    std::vector<int> subset{0, 2, 4};
    auto lists = idx.knn_within(subset, 2);
    REQUIRE(lists.size() == 3);
    CHECK(lists[0][0].id == 2);  // nearest in-subset neighbor of id 0
    CHECK(lists[0][1].id == 4);
    CHECK(lists[2][0].id == 2);
}

TEST_CASE("load_mask reads 0/1 lines") {
    auto path = write_tmp("mask.txt", "1\n0\n1\n");
    auto m = load_mask(path);
    CHECK(m == std::vector<bool>{true, false, true});
}
