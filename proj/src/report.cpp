#include "drift/report.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

namespace drift {

using nlohmann::json;

json mask_to_rle(const std::vector<bool>& mask) {
    json rle = json::array();
    size_t i = 0;
    while (i < mask.size()) {
        size_t j = i;
        while (j < mask.size() && mask[j] == mask[i]) ++j;
        rle.push_back({mask[i] ? 1 : 0, j - i});
        i = j;
    }
    return rle;
}

std::vector<bool> rle_to_mask(const json& rle) {
    std::vector<bool> mask;
    for (const auto& run : rle) {
        const bool bit = run.at(0).get<int>() != 0;
        mask.insert(mask.end(), run.at(1).get<size_t>(), bit);
    }
    return mask;
}

json to_json(const TailTestResult& r) {
    return {{"statistic", r.statistic}, {"p_value", r.p_value},   {"reject", r.reject},
            {"tail_threshold", r.tail_threshold}, {"n_obs_tail", r.n_obs_tail},
            {"n_null_tail", r.n_null_tail}};
}

json to_json(const TraceStep& s) {
    return {{"outer_iter", s.outer_iter}, {"inner_step", s.inner_step},
            {"ks_Y", to_json(s.ks_Y)},    {"ks_X", to_json(s.ks_X)},
            {"candidates_Y", s.candidates_Y}, {"candidates_X", s.candidates_X},
            {"removed_Y", s.removed_Y},   {"removed_X", s.removed_X}};
}

json to_json(const EqualizationResult& r) {
    json trace = json::array();
    for (const auto& s : r.trace) trace.push_back(to_json(s));
    return {{"pruned_X", r.pruned_X},
            {"pruned_Y", r.pruned_Y},
            {"eq_mask_X_rle", mask_to_rle(r.eq_mask_X)},
            {"eq_mask_Y_rle", mask_to_rle(r.eq_mask_Y)},
            {"outer_iters", r.outer_iters},
            {"max_iters_exceeded", r.max_iters_exceeded},
            {"trace", trace}};
}

json to_json(const SubsetScore& s) {
    return {{"m", s.m}, {"mean_score", s.mean_score}, {"purity_only", s.purity_only},
            {"per_fold", s.per_fold}};
}

json to_json(const ModeAttribution& a, const std::vector<std::string>& feature_names) {
    json curve = json::array();
    for (const auto& s : a.curve) curve.push_back(to_json(s));
    json ranked = json::array();
    for (size_t i = 0; i < a.support.size(); ++i) {
        const int f = a.support[i];
        ranked.push_back({{"feature", f},
                          {"name", feature_names[static_cast<size_t>(f)]},
                          {"w_eff", a.w_eff[static_cast<Eigen::Index>(i)]}});
    }
    return {{"direction", a.direction == Origin::Y ? "Y" : "X"},
            {"mode_size", a.mode_ids.size()},
            {"mode_ids", a.mode_ids},
            {"support", a.support},
            {"ranked_features", ranked},
            {"m_star", a.m_star},
            {"refine_iters", a.refine_iters},
            {"cv_curve", curve}};
}

void write_trace_csv(const std::string& path, const EqualizationResult& r) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("IoError: cannot write " + path);
    out << "outer_iter,inner_step,ks_Y_stat,ks_Y_p,ks_Y_reject,mass_Y_p,mass_Y_reject,"
           "ks_X_stat,ks_X_p,ks_X_reject,mass_X_p,mass_X_reject,"
           "candidates_Y,candidates_X,removed_Y,removed_X\n";
    for (const auto& s : r.trace) {
        out << s.outer_iter << ',' << s.inner_step << ',' << s.ks_Y.statistic << ','
            << s.ks_Y.p_value << ',' << s.ks_Y.reject << ',' << s.ks_Y.mass_p_value << ','
            << s.ks_Y.mass_reject << ',' << s.ks_X.statistic << ',' << s.ks_X.p_value << ','
            << s.ks_X.reject << ',' << s.ks_X.mass_p_value << ',' << s.ks_X.mass_reject << ','
            << s.candidates_Y << ',' << s.candidates_X << ',' << s.removed_Y.size() << ','
            << s.removed_X.size() << '\n';
    }
}

void write_curve_csv(const std::string& path, const std::vector<SubsetScore>& curve) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("IoError: cannot write " + path);
    out << "m,mean_score,purity_only\n";
    for (const auto& s : curve)
        out << s.m << ',' << s.mean_score << ',' << s.purity_only << '\n';
}

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("IoError: cannot write " + path);
    out << j.dump(2) << '\n';
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("MissingFile: cannot open " + path);
    json j;
    in >> j;
    return j;
}

}  // namespace drift
