#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "darn/data.hpp"
#include "darn/image.hpp"

namespace darn {

// Per-component values of one two-sided metric family.
struct ComponentPair {
  double albedo = 0.0;
  double shading = 0.0;
  double average() const { return (albedo + shading) / 2.0; }
};

struct MetricsRow {
  std::string image_id;
  ComponentPair si_mse;
  ComponentPair si_lmse;
  ComponentPair dssim;
  ComponentPair mse;
  double rs_mse = 0.0;
};

// Per-image rows and their arithmetic mean.
struct MetricsReport {
  std::vector<MetricsRow> rows;
  MetricsRow aggregate;
  std::size_t count() const { return rows.size(); }
};

MetricsRow evaluate_prediction(const std::string& image_id, const Image& albedo_gt, const Image& shading_gt,
                               const Image& albedo, const Image& shading);

// Recomputes `aggregate` as the mean of `rows` (label "mean").
void finalize(MetricsReport& report);

// Cell-wise mean of two reports' aggregates; rows are concatenated.
MetricsReport average_reports(const MetricsReport& a, const MetricsReport& b);

enum class ConstantComponent { shading, albedo };

// Predicts the chosen component as its per-channel ground-truth mean and the
// other as image / constant, then scores the pair.
MetricsReport baseline_constant(ConstantComponent component, const std::vector<Sample>& samples);

// CSV: one row per image plus the aggregate row. Columns image_id, the nine
// metric columns scaled x100 with two decimals, then the same nine columns
// unscaled at full precision (suffix _raw).
void write_report_csv(std::ostream& out, const MetricsReport& report);
void write_report_csv(const std::filesystem::path& path, const MetricsReport& report);
std::vector<std::string> report_columns();

}  // namespace darn
