#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace drift {

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// n x d feature matrix with named columns. Values are finite by construction.
struct FeatureMatrix {
    Eigen::MatrixXd values;                  // n_rows x n_cols
    std::vector<std::string> feature_names;  // length n_cols

    Eigen::Index n_rows() const { return values.rows(); }
    Eigen::Index n_cols() const { return values.cols(); }
};

struct StandardizationStats {
    Eigen::VectorXd means;
    Eigen::VectorXd stddevs;  // population convention (divide by n)
    std::vector<int> constant_features;
};

enum class Origin : std::uint8_t { X = 0, Y = 1 };

struct Neighbor {
    int id;
    Origin origin;
    double distance;  // Euclidean
};

FeatureMatrix load_csv(const std::string& path, char delimiter = ',');
void write_csv(const std::string& path, const FeatureMatrix& fm, char delimiter = ',');

/// Reads a sidecar mask file: one 0/1 per line.
std::vector<bool> load_mask(const std::string& path);

/// Standardizes both cohorts with pooled mean / population stddev.
/// Constant columns are zeroed and recorded in stats.constant_features.
std::pair<FeatureMatrix, FeatureMatrix> standardize(const FeatureMatrix& X,
                                                    const FeatureMatrix& Y,
                                                    StandardizationStats& stats);

/// Pooled X-then-Y point set with origin labels, an active mask, and exact
/// ordered kNN queries over the active points. Queries are read-only; mask
/// mutation must not race with queries.
class PooledIndex {
  public:
    PooledIndex(const FeatureMatrix& X, const FeatureMatrix& Y);

    int size() const { return static_cast<int>(points_.rows()); }
    int n_X() const { return n_X_; }
    int n_Y() const { return n_Y_; }
    int dim() const { return static_cast<int>(points_.cols()); }
    Origin origin(int i) const { return i < n_X_ ? Origin::X : Origin::Y; }
    bool is_active(int i) const { return active_[i] != 0; }
    int active_count() const { return active_total_; }
    int active_count(Origin o) const { return o == Origin::X ? active_X_ : active_Y_; }
    const RowMatrixXd& points() const { return points_; }
    const std::vector<std::uint8_t>& active_mask() const { return active_; }

    void deactivate(int i);
    void activate(int i);

    /// Ordered exact kNN of point q among the other active points.
    /// Ties in distance are broken by ascending point id. Returns at most
    /// min(k, actives-1) entries.
    std::vector<Neighbor> knn_query(int q, int k) const;

    /// Batched kNN over many query ids; same contract per query, computed
    /// with a cache-blocked sweep over the active set.
    std::vector<std::vector<Neighbor>> knn_batch(const std::vector<int>& queries, int k) const;

    /// kNN restricted to a caller-supplied subset of point ids (the subset
    /// need not be active). Used for mode partitioning over pruned points.
    std::vector<std::vector<Neighbor>> knn_within(const std::vector<int>& subset, int k) const;

  private:
    RowMatrixXd points_;  // (n_X + n_Y) x d
    int n_X_;
    int n_Y_;
    std::vector<std::uint8_t> active_;
    int active_total_;
    int active_X_;
    int active_Y_;
};

}  // namespace drift
