#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "nilm/metrics.hpp"
#include "nilm/power_series.hpp"
#include "nilm/synthetic.hpp"
#include "nilm/tensor.hpp"
#include "nilm/training.hpp"

namespace nilm {

// All CSV output uses one fixed number format so identical results produce
// byte-identical files.
inline std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

}  // namespace detail

inline void write_predictions_csv(const std::filesystem::path& path,
                                  const PowerSeries& series) {
  auto out = detail::open_out(path);
  out << "timestamp,watts\n";
  for (std::size_t i = 0; i < series.size(); ++i)
    out << series.timestamps[i] << "," << fmt_g(series.values[i]) << "\n";
}

inline void write_history_csv(const std::filesystem::path& path,
                              const TrainHistory& history) {
  auto out = detail::open_out(path);
  out << "epoch,train_loss,val_loss\n";
  for (std::size_t i = 0; i < history.train_loss.size(); ++i)
    out << (i + 1) << "," << fmt_g(history.train_loss[i]) << ","
        << fmt_g(history.val_loss[i]) << "\n";
}

inline std::string cell(const std::optional<double>& v) {
  return v ? fmt_g(*v) : "invalid";
}

inline void write_report_csv(const std::filesystem::path& path,
                             const MetricsReport& report) {
  auto out = detail::open_out(path);
  out << "appliance,mae_watts,sae,epd_wh,nde\n";
  for (const auto& [name, row] : report.rows)
    out << name << "," << cell(row.mae) << "," << cell(row.sae) << ","
        << cell(row.epd) << "," << cell(row.nde) << "\n";
  out << "overall," << cell(report.overall.mae) << ","
      << cell(report.overall.sae) << "," << cell(report.overall.epd) << ","
      << cell(report.overall.nde) << "\n";
  out << "std," << cell(report.dispersion.mae) << ","
      << cell(report.dispersion.sae) << "," << cell(report.dispersion.epd)
      << "," << cell(report.dispersion.nde) << "\n";
  const auto& inv = report.invalid_cells;
  if (inv[0] + inv[1] + inv[2] + inv[3] > 0)
    out << "# invalid cells excluded from overall/std: mae=" << inv[0]
        << " sae=" << inv[1] << " epd=" << inv[2] << " nde=" << inv[3]
        << "\n";
}

inline void write_energy_share_csv(const std::filesystem::path& path,
                                   const EnergyShare& share) {
  auto out = detail::open_out(path);
  out << "appliance,predicted_wh,actual_wh,predicted_share,actual_share\n";
  for (std::size_t i = 0; i < share.appliances.size(); ++i)
    out << share.appliances[i] << "," << fmt_g(share.predicted_wh[i]) << ","
        << fmt_g(share.actual_wh[i]) << "," << fmt_g(share.predicted_share[i])
        << "," << fmt_g(share.actual_share[i]) << "\n";
}

// Long-format dump of last-conv feature maps: one row per
// (window, position, channel).
inline void write_features_csv(const std::filesystem::path& path,
                               const Tensor<float>& features,
                               std::size_t first_window_index) {
  if (features.rank() != 3)
    throw ShapeError("write_features_csv: want [B x L x C]");
  auto out = detail::open_out(path);
  out << "window,position,channel,activation\n";
  for (std::size_t b = 0; b < features.extent(0); ++b)
    for (std::size_t l = 0; l < features.extent(1); ++l)
      for (std::size_t c = 0; c < features.extent(2); ++c)
        out << (first_window_index + b) << "," << l << "," << c << ","
            << fmt_g(features.at3(b, l, c)) << "\n";
}

// Synthetic household dump: timestamp, mains, then one column per appliance.
inline void write_household_csv(const std::filesystem::path& path,
                                const SyntheticHousehold& household) {
  auto out = detail::open_out(path);
  out << "timestamp,mains";
  for (const auto& a : household.appliances) out << "," << a.channel;
  out << "\n";
  for (std::size_t i = 0; i < household.mains.size(); ++i) {
    out << household.mains.timestamps[i] << ","
        << fmt_g(household.mains.values[i]);
    for (const auto& a : household.appliances)
      out << "," << fmt_g(a.values[i]);
    out << "\n";
  }
}

}  // namespace nilm
