#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "gridfm/eval.hpp"
#include "gridfm/ppo.hpp"

namespace gridfm::report {

// RFC 4180 quoting when the field holds a comma, quote or newline.
std::string csv_field(const std::string& value);
std::string format_number(double value);

// model,template,n,total,correct,accuracy
std::string probe_accuracy_csv(const std::vector<ProbeReport>& reports);
// One row per probe, enumeration order.
std::string probe_ledger_csv(const ProbeReport& report);
std::string probe_json(const ProbeReport& report);
// Grid shaded by errors per state with an arrow from each failing state to the
// predicted cell.
std::string probe_error_svg(const ProbeReport& report);

// x,y,count
std::string distribution_csv(const DistributionReport& report);
std::string distribution_json(const DistributionReport& report);
std::string density_svg(const DistributionReport& report);

// source,requested_p1,requested_p2,observed_1,observed_0,discrepancy,
// requested_discrepancy
std::string binary_table_csv(const std::vector<BinaryRow>& rows);
// Observed frequency of outcome 1 per requested p1 for every source, with the
// requested values as a dotted reference line.
std::string binary_sweep_svg(const std::vector<BinaryRow>& rows);

std::string curve_json(const LearningCurve& curve);

struct CurveSeries {
  std::string label;
  const LearningCurve* curve = nullptr;
};
// Seed-mean success per step for every series, plus a horizontal line per FA
// result (success rate in [0,1]).
std::string learning_curve_svg(
    const std::vector<CurveSeries>& series,
    const std::vector<std::pair<std::string, double>>& fa_lines);

// Writes `content` to `path`, creating parent directories.
void write_file(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

}  // namespace gridfm::report
