#pragma once

#include "nlcausal/core.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string>

namespace nlcausal {

/// 17 significant digits ("%.17g"); nan and inf are spelled out.
std::string format17(double value);

/// JSON text with every number rendered by format17. Non-finite numbers become null.
std::string dump17(const nlohmann::json& value, int indent = 2);

StageOneData read_stage_one_csv(std::istream& in);
StageOneData load_stage_one(const std::string& path);
/// Writes Z and x as stored (shifts are not added back).
void write_stage_one_csv(std::ostream& out, const StageOneData& data);
void save_stage_one(const std::string& path, const StageOneData& data);
/// Copy with the recorded shifts added back, i.e. the data on its original scale.
StageOneData uncentered(const StageOneData& data);

nlohmann::json to_json(const SummaryStats& stats);
/// Validates the schema (keys n2, p, s_zz, s_zy, s_yy only) and normalizes s_yy to 1.
SummaryStats summary_from_json(const nlohmann::json& j);
SummaryStats load_summary(const std::string& path);
void save_summary(const std::string& path, const SummaryStats& stats);

void write_transform_csv(std::ostream& out, const TransformEstimate& est);

nlohmann::json to_json(const CausalFit& fit);
nlohmann::json to_json(const TestResult& result);
nlohmann::json to_json(const ConfidenceInterval& ci);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace nlcausal
