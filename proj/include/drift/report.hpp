#pragma once

#include <nlohmann/json_fwd.hpp>
#include <string>
#include <vector>

#include "drift/equalize.hpp"
#include "drift/subspace.hpp"

namespace drift {

inline constexpr int kReportSchemaVersion = 1;

/// Run-length encoding of a boolean mask: [[bit, count], ...].
nlohmann::json mask_to_rle(const std::vector<bool>& mask);
std::vector<bool> rle_to_mask(const nlohmann::json& rle);

nlohmann::json to_json(const TailTestResult& r);
nlohmann::json to_json(const TraceStep& s);
nlohmann::json to_json(const EqualizationResult& r);
nlohmann::json to_json(const SubsetScore& s);
nlohmann::json to_json(const ModeAttribution& a, const std::vector<std::string>& feature_names);

void write_trace_csv(const std::string& path, const EqualizationResult& r);
void write_curve_csv(const std::string& path, const std::vector<SubsetScore>& curve);
void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

}  // namespace drift
