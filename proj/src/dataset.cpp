#include "drift/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace drift {

namespace {

std::vector<std::string> split_line(const std::string& line, char delimiter) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, delimiter)) out.push_back(cell);
    if (!line.empty() && line.back() == delimiter) out.emplace_back();
    return out;
}

}  // namespace

FeatureMatrix load_csv(const std::string& path, char delimiter) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("MissingFile: cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("MissingFile: empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();

    FeatureMatrix fm;
    fm.feature_names = split_line(line, delimiter);
    const size_t d = fm.feature_names.size();
    for (size_t i = 0; i < d; ++i)
        for (size_t j = i + 1; j < d; ++j)
            if (fm.feature_names[i] == fm.feature_names[j])
                throw std::runtime_error("DuplicateFeatureName: " + fm.feature_names[i]);

    std::vector<double> buf;
    size_t n = 0;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_line(line, delimiter);
        if (cells.size() != d)
            throw std::runtime_error("RaggedRow: line " + std::to_string(line_no) + " has " +
                                     std::to_string(cells.size()) + " cells, expected " +
                                     std::to_string(d));
        for (size_t j = 0; j < d; ++j) {
            const std::string& cell = cells[j];
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0')
                throw std::runtime_error("NonNumericCell: line " + std::to_string(line_no) +
                                         ", column " + std::to_string(j));
            if (!std::isfinite(v))
                throw std::runtime_error("NonFiniteValue: line " + std::to_string(line_no) +
                                         ", column " + std::to_string(j));
            buf.push_back(v);
        }
        ++n;
    }
    fm.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < d; ++j)
            fm.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = buf[i * d + j];
    return fm;
}

void write_csv(const std::string& path, const FeatureMatrix& fm, char delimiter) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("IoError: cannot write " + path);
    for (size_t j = 0; j < fm.feature_names.size(); ++j) {
        if (j) out << delimiter;
        out << fm.feature_names[j];
    }
    out << '\n';
    out.precision(17);
    for (Eigen::Index i = 0; i < fm.n_rows(); ++i) {
        for (Eigen::Index j = 0; j < fm.n_cols(); ++j) {
            if (j) out << delimiter;
            out << fm.values(i, j);
        }
        out << '\n';
    }
}

std::vector<bool> load_mask(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("MissingFile: cannot open " + path);
    std::vector<bool> mask;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line == "0")
            mask.push_back(false);
        else if (line == "1")
            mask.push_back(true);
        else
            throw std::runtime_error("BadMaskValue: line " + std::to_string(line_no));
    }
    return mask;
}

std::pair<FeatureMatrix, FeatureMatrix> standardize(const FeatureMatrix& X,
                                                    const FeatureMatrix& Y,
                                                    StandardizationStats& stats) {
    if (X.n_cols() != Y.n_cols())
        throw std::runtime_error("DimensionMismatch: X has " + std::to_string(X.n_cols()) +
                                 " columns, Y has " + std::to_string(Y.n_cols()));
    const Eigen::Index n = X.n_rows() + Y.n_rows();
    const Eigen::Index d = X.n_cols();
    if (n < 2) throw std::runtime_error("EmptyInput: need at least 2 pooled rows");

    stats.means = (X.values.colwise().sum() + Y.values.colwise().sum()).transpose() /
                  static_cast<double>(n);
    Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        double s = (X.values.col(j).array() - stats.means[j]).square().sum() +
                   (Y.values.col(j).array() - stats.means[j]).square().sum();
        var[j] = s / static_cast<double>(n);
    }
    stats.stddevs = var.array().sqrt();
    stats.constant_features.clear();

    FeatureMatrix Xs{Eigen::MatrixXd(X.n_rows(), d), X.feature_names};
    FeatureMatrix Ys{Eigen::MatrixXd(Y.n_rows(), d), Y.feature_names};
    for (Eigen::Index j = 0; j < d; ++j) {
        if (stats.stddevs[j] <= 0.0) {
            stats.constant_features.push_back(static_cast<int>(j));
            Xs.values.col(j).setZero();
            Ys.values.col(j).setZero();
        } else {
            Xs.values.col(j) = (X.values.col(j).array() - stats.means[j]) / stats.stddevs[j];
            Ys.values.col(j) = (Y.values.col(j).array() - stats.means[j]) / stats.stddevs[j];
        }
    }
    return {std::move(Xs), std::move(Ys)};
}

PooledIndex::PooledIndex(const FeatureMatrix& X, const FeatureMatrix& Y)
    : n_X_(static_cast<int>(X.n_rows())), n_Y_(static_cast<int>(Y.n_rows())) {
    if (X.n_cols() != Y.n_cols()) throw std::runtime_error("DimensionMismatch in pool");
    points_.resize(X.n_rows() + Y.n_rows(), X.n_cols());
    points_.topRows(X.n_rows()) = X.values;
    points_.bottomRows(Y.n_rows()) = Y.values;
    active_.assign(static_cast<size_t>(size()), 1);
    active_total_ = size();
    active_X_ = n_X_;
    active_Y_ = n_Y_;
}

void PooledIndex::deactivate(int i) {
    if (!active_[i]) return;
    active_[i] = 0;
    --active_total_;
    (origin(i) == Origin::X ? active_X_ : active_Y_)--;
}

void PooledIndex::activate(int i) {
    if (active_[i]) return;
    active_[i] = 1;
    ++active_total_;
    (origin(i) == Origin::X ? active_X_ : active_Y_)++;
}

namespace {

// Bounded max-heap of (squared distance, id) keeping the k smallest pairs.
struct TopK {
    std::vector<std::pair<double, int>> heap;
    size_t k;

    explicit TopK(size_t k_) : k(k_) { heap.reserve(k_ + 1); }

    void push(double d2, int id) {
        if (heap.size() < k) {
            heap.emplace_back(d2, id);
            std::push_heap(heap.begin(), heap.end());
        } else if (std::make_pair(d2, id) < heap.front()) {
            std::pop_heap(heap.begin(), heap.end());
            heap.back() = {d2, id};
            std::push_heap(heap.begin(), heap.end());
        }
    }

    std::vector<std::pair<double, int>> sorted() {
        std::sort(heap.begin(), heap.end());
        return std::move(heap);
    }
};

inline double sq_dist(const RowMatrixXd& pts, int a, int b) {
    return (pts.row(a) - pts.row(b)).squaredNorm();
}

}  // namespace

std::vector<Neighbor> PooledIndex::knn_query(int q, int k) const {
    if (!is_active(q)) throw std::runtime_error("InactiveQuery: point " + std::to_string(q));
    if (k < 1) throw std::runtime_error("InvalidK");
    if (active_total_ <= 1) throw std::runtime_error("EmptyIndex: no other active points");
    auto lists = knn_batch({q}, k);
    return std::move(lists[0]);
}

std::vector<std::vector<Neighbor>> PooledIndex::knn_batch(const std::vector<int>& queries,
                                                          int k) const {
    const int n = size();
    const size_t kk = static_cast<size_t>(k);
    std::vector<TopK> heaps;
    heaps.reserve(queries.size());
    for (size_t i = 0; i < queries.size(); ++i) heaps.emplace_back(kk);

    // Block over query rows so the streamed pass over all points stays in
    // cache for the whole block.
    constexpr size_t kBlock = 32;
    for (size_t b = 0; b < queries.size(); b += kBlock) {
        const size_t be = std::min(b + kBlock, queries.size());
        for (int j = 0; j < n; ++j) {
            if (!active_[j]) continue;
            const auto row_j = points_.row(j);
            for (size_t qi = b; qi < be; ++qi) {
                const int q = queries[qi];
                if (j == q) continue;
                const double d2 = (points_.row(q) - row_j).squaredNorm();
                heaps[qi].push(d2, j);
            }
        }
    }

    std::vector<std::vector<Neighbor>> out(queries.size());
    for (size_t qi = 0; qi < queries.size(); ++qi) {
        auto sorted = heaps[qi].sorted();
        out[qi].reserve(sorted.size());
        for (const auto& [d2, id] : sorted)
            out[qi].push_back({id, origin(id), std::sqrt(d2)});
    }
    return out;
}

std::vector<std::vector<Neighbor>> PooledIndex::knn_within(const std::vector<int>& subset,
                                                           int k) const {
    std::vector<std::vector<Neighbor>> out(subset.size());
    for (size_t qi = 0; qi < subset.size(); ++qi) {
        TopK heap(static_cast<size_t>(k));
        for (size_t j = 0; j < subset.size(); ++j) {
            if (j == qi) continue;
            heap.push(sq_dist(points_, subset[qi], subset[j]), subset[j]);
        }
        auto sorted = heap.sorted();
        out[qi].reserve(sorted.size());
        for (const auto& [d2, id] : sorted)
            out[qi].push_back({id, origin(id), std::sqrt(d2)});
    }
    return out;
}

}  // namespace drift
