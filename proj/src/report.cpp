#include "darn/report.hpp"

#include <array>
#include <cstdio>
#include <fstream>

#include "darn/errors.hpp"
#include "darn/metrics.hpp"

namespace darn {

namespace {

std::array<double, 9> cells(const MetricsRow& r) {
  return {r.si_mse.albedo, r.si_mse.shading, r.si_lmse.albedo, r.si_lmse.shading, r.dssim.albedo,
          r.dssim.shading, r.mse.albedo,     r.mse.shading,     r.rs_mse};
}

const std::array<const char*, 9> kNames{"si_mse_A", "si_mse_S", "si_lmse_A", "si_lmse_S", "dssim_A",
                                        "dssim_S",  "mse_A",    "mse_S",     "rs_mse"};

void write_row(std::ostream& out, const MetricsRow& r) {
  char buf[64];
  out << r.image_id;
  for (double v : cells(r)) {
    std::snprintf(buf, sizeof buf, ",%.2f", v * 100.0);
    out << buf;
  }
  for (double v : cells(r)) {
    std::snprintf(buf, sizeof buf, ",%.17g", v);
    out << buf;
  }
  out << '\n';
}

void accumulate(MetricsRow& into, const MetricsRow& r, double w) {
  for (auto [dst, src] : {std::pair{&into.si_mse, &r.si_mse}, std::pair{&into.si_lmse, &r.si_lmse},
                          std::pair{&into.dssim, &r.dssim}, std::pair{&into.mse, &r.mse}}) {
    dst->albedo += w * src->albedo;
    dst->shading += w * src->shading;
  }
  into.rs_mse += w * r.rs_mse;
}

}  // namespace

MetricsRow evaluate_prediction(const std::string& image_id, const Image& albedo_gt, const Image& shading_gt,
                               const Image& albedo, const Image& shading) {
  MetricsRow r;
  r.image_id = image_id;
  r.si_mse = {metrics::si_mse(albedo_gt, albedo), metrics::si_mse(shading_gt, shading)};
  r.si_lmse = {metrics::si_lmse(albedo_gt, albedo), metrics::si_lmse(shading_gt, shading)};
  r.dssim = {metrics::dssim(albedo_gt, albedo), metrics::dssim(shading_gt, shading)};
  r.mse = {metrics::mse(albedo_gt, albedo), metrics::mse(shading_gt, shading)};
  r.rs_mse = metrics::rs_mse(albedo_gt, albedo, shading_gt, shading);
  return r;
}

void finalize(MetricsReport& report) {
  MetricsRow agg;
  agg.image_id = "mean";
  if (!report.rows.empty()) {
    const double w = 1.0 / static_cast<double>(report.rows.size());
    for (const auto& r : report.rows) accumulate(agg, r, w);
  }
  report.aggregate = agg;
}

MetricsReport average_reports(const MetricsReport& a, const MetricsReport& b) {
  MetricsReport out;
  out.rows = a.rows;
  out.rows.insert(out.rows.end(), b.rows.begin(), b.rows.end());
  out.aggregate.image_id = "mean";
  accumulate(out.aggregate, a.aggregate, 0.5);
  accumulate(out.aggregate, b.aggregate, 0.5);
  return out;
}

MetricsReport baseline_constant(ConstantComponent component, const std::vector<Sample>& samples) {
  MetricsReport report;
  for (const auto& s : samples) {
    const Image& gt = component == ConstantComponent::shading ? s.shading : s.albedo;
    std::array<double, 3> mean{};
    for (std::size_t i = 0; i < gt.pixels(); ++i) {
      for (std::size_t c = 0; c < 3; ++c) mean[c] += gt.data()[i * 3 + c];
    }
    Image constant(gt.height(), gt.width());
    for (std::size_t c = 0; c < 3; ++c) {
      mean[c] /= static_cast<double>(gt.pixels());
      if (!(mean[c] > 0.0)) throw NumericError("baseline: component mean is zero for " + s.id);
    }
    Image other(gt.height(), gt.width());
    for (std::size_t i = 0; i < gt.pixels(); ++i) {
      for (std::size_t c = 0; c < 3; ++c) {
        constant.data()[i * 3 + c] = mean[c];
        other.data()[i * 3 + c] = s.image.data()[i * 3 + c] / mean[c];
      }
    }
    if (component == ConstantComponent::shading) {
      report.rows.push_back(evaluate_prediction(s.id, s.albedo, s.shading, other, constant));
    } else {
      report.rows.push_back(evaluate_prediction(s.id, s.albedo, s.shading, constant, other));
    }
  }
  finalize(report);
  return report;
}

std::vector<std::string> report_columns() {
  std::vector<std::string> cols{"image_id"};
  for (const char* n : kNames) cols.emplace_back(n);
  for (const char* n : kNames) cols.push_back(std::string(n) + "_raw");
  return cols;
}

void write_report_csv(std::ostream& out, const MetricsReport& report) {
  const auto cols = report_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : report.rows) write_row(out, r);
  write_row(out, report.aggregate);
}

void write_report_csv(const std::filesystem::path& path, const MetricsReport& report) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report " + path.string());
  write_report_csv(out, report);
}

}  // namespace darn
