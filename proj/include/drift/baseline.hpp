#pragma once

#include <cstdint>
#include <vector>

#include "drift/dataset.hpp"

namespace drift {

struct MlpConfig {
    std::vector<int> hidden{128, 64, 32};
    double lr = 1e-3;
    double l2 = 1e-4;
    int batch_size = 256;
    int max_iters = 300;  // epochs
    std::uint64_t seed = 0;
};

/// Fully connected ReLU network with a sigmoid output, trained by Adam on
/// cross-entropy (X labeled 0, Y labeled 1) with an L2 weight penalty.
class MlpClassifier {
  public:
    /// Expects standardized cohorts.
    void train(const FeatureMatrix& X, const FeatureMatrix& Y, const MlpConfig& cfg);

    /// p(y = Y | x) per row.
    Eigen::VectorXd predict_proba(const Eigen::MatrixXd& rows) const;

    bool trained() const { return trained_; }

  private:
    std::vector<Eigen::MatrixXd> W_;
    std::vector<Eigen::VectorXd> b_;
    bool trained_ = false;
};

struct RankedSample {
    int id;        // row index into Y
    double score;  // posterior odds p / (1 - p)
};

/// Y rows ranked by the posterior-odds density-ratio score, descending,
/// ties by ascending id. Probabilities clipped to [1e-7, 1 - 1e-7].
std::vector<RankedSample> rank_by_ratio(const MlpClassifier& model, const FeatureMatrix& Y);

/// |top-k of ranking ∩ injected| / |injected|.
double injected_recall_at(const std::vector<RankedSample>& ranking,
                          const std::vector<int>& injected, int k);

}  // namespace drift
