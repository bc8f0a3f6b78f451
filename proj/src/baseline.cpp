#include "drift/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace drift {

namespace {

constexpr double kProbClip = 1e-7;

}  // namespace

void MlpClassifier::train(const FeatureMatrix& X, const FeatureMatrix& Y, const MlpConfig& cfg) {
    const int n_X = static_cast<int>(X.n_rows());
    const int n_Y = static_cast<int>(Y.n_rows());
    if (n_X == 0 || n_Y == 0) throw std::runtime_error("EmptyCohort");
    const int n = n_X + n_Y;
    const int d = static_cast<int>(X.n_cols());

    Eigen::MatrixXd data(n, d);
    data.topRows(n_X) = X.values;
    data.bottomRows(n_Y) = Y.values;
    Eigen::VectorXd labels(n);
    labels.head(n_X).setZero();
    labels.tail(n_Y).setOnes();

    std::vector<int> sizes{d};
    for (int h : cfg.hidden) sizes.push_back(h);
    sizes.push_back(1);
    const size_t L = sizes.size() - 1;

    std::mt19937_64 rng(cfg.seed);
    W_.clear();
    b_.clear();
    for (size_t l = 0; l < L; ++l) {
        const double a = 1.0 / std::sqrt(static_cast<double>(sizes[l]));
        std::uniform_real_distribution<double> unif(-a, a);
        Eigen::MatrixXd W(sizes[l], sizes[l + 1]);
        for (Eigen::Index i = 0; i < W.size(); ++i) W(i) = unif(rng);
        W_.push_back(std::move(W));
        b_.push_back(Eigen::VectorXd::Zero(sizes[l + 1]));
    }

    std::vector<Eigen::MatrixXd> mW(L), vW(L);
    std::vector<Eigen::VectorXd> mb(L), vb(L);
    for (size_t l = 0; l < L; ++l) {
        mW[l] = Eigen::MatrixXd::Zero(W_[l].rows(), W_[l].cols());
        vW[l] = mW[l];
        mb[l] = Eigen::VectorXd::Zero(b_[l].size());
        vb[l] = mb[l];
    }
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    long step = 0;

    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::vector<Eigen::MatrixXd> acts(L + 1);

    for (int epoch = 0; epoch < cfg.max_iters; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int bs = std::min(cfg.batch_size, n - start);
            Eigen::MatrixXd xb(bs, d);
            Eigen::VectorXd yb(bs);
            for (int i = 0; i < bs; ++i) {
                xb.row(i) = data.row(order[static_cast<size_t>(start + i)]);
                yb[i] = labels[order[static_cast<size_t>(start + i)]];
            }

            acts[0] = std::move(xb);
            for (size_t l = 0; l < L; ++l) {
                acts[l + 1] = (acts[l] * W_[l]).rowwise() + b_[l].transpose();
                if (l + 1 < L) acts[l + 1] = acts[l + 1].cwiseMax(0.0);
            }
            Eigen::VectorXd p =
                acts[L].col(0).unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });

            // d(BCE)/dz for sigmoid output
            Eigen::MatrixXd delta = (p - yb) / static_cast<double>(bs);
            ++step;
            const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step));
            for (size_t l = L; l-- > 0;) {
                Eigen::MatrixXd gW = acts[l].transpose() * delta + cfg.l2 * W_[l];
                Eigen::VectorXd gb = delta.colwise().sum().transpose();
                if (l > 0) {
                    delta = (delta * W_[l].transpose())
                                .cwiseProduct((acts[l].array() > 0.0).cast<double>().matrix());
                }
                mW[l] = b1 * mW[l] + (1.0 - b1) * gW;
                vW[l] = b2 * vW[l] + (1.0 - b2) * gW.cwiseAbs2();
                mb[l] = b1 * mb[l] + (1.0 - b1) * gb;
                vb[l] = b2 * vb[l] + (1.0 - b2) * gb.cwiseAbs2();
                W_[l].array() -=
                    cfg.lr * (mW[l].array() / bc1) / ((vW[l].array() / bc2).sqrt() + eps);
                b_[l].array() -=
                    cfg.lr * (mb[l].array() / bc1) / ((vb[l].array() / bc2).sqrt() + eps);
            }
        }
    }
    trained_ = true;
}

Eigen::VectorXd MlpClassifier::predict_proba(const Eigen::MatrixXd& rows) const {
    if (!trained_) throw std::runtime_error("UntrainedModel");
    Eigen::MatrixXd a = rows;
    for (size_t l = 0; l < W_.size(); ++l) {
        a = (a * W_[l]).rowwise() + b_[l].transpose();
        if (l + 1 < W_.size()) a = a.cwiseMax(0.0);
    }
    return a.col(0).unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });
}

std::vector<RankedSample> rank_by_ratio(const MlpClassifier& model, const FeatureMatrix& Y) {
    Eigen::VectorXd p = model.predict_proba(Y.values);
    std::vector<RankedSample> out;
    out.reserve(static_cast<size_t>(p.size()));
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double pc = std::clamp(p[i], kProbClip, 1.0 - kProbClip);
        out.push_back({static_cast<int>(i), pc / (1.0 - pc)});
    }
    std::sort(out.begin(), out.end(), [](const RankedSample& a, const RankedSample& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    return out;
}

double injected_recall_at(const std::vector<RankedSample>& ranking,
                          const std::vector<int>& injected, int k) {
    if (injected.empty()) throw std::runtime_error("EmptyInjectedSet");
    if (k < 1) throw std::runtime_error("InvalidK");
    std::vector<int> inj(injected);
    std::sort(inj.begin(), inj.end());
    int hits = 0;
    const int top = std::min<int>(k, static_cast<int>(ranking.size()));
    for (int i = 0; i < top; ++i)
        if (std::binary_search(inj.begin(), inj.end(), ranking[static_cast<size_t>(i)].id)) ++hits;
    return static_cast<double>(hits) / static_cast<double>(inj.size());
}

}  // namespace drift
