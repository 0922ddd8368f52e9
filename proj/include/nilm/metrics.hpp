#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nilm/errors.hpp"

namespace nilm {

// Mean absolute error in watts.
inline double mae(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw ShapeError("mae: length mismatch");
  if (pred.empty()) throw ShapeError("mae: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    acc += std::abs(pred[i] - truth[i]);
  return acc / static_cast<double>(pred.size());
}

// Normalized signal aggregate error: |r_hat - r| / r over total energy.
inline double sae(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw ShapeError("sae: length mismatch");
  if (pred.empty()) throw ShapeError("sae: empty input");
  double r_hat = 0.0, r = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    r_hat += pred[i];
    r += truth[i];
  }
  if (!(r > 0.0))
    throw DataError("sae: total truth energy is zero (undefined denominator)");
  return std::abs(r_hat - r) / r;
}

// Normalized disaggregation error: sum (x - x_hat)^2 / sum x^2.
inline double nde(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw ShapeError("nde: length mismatch");
  if (pred.empty()) throw ShapeError("nde: empty input");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = truth[i] - pred[i];
    num += d * d;
    den += truth[i] * truth[i];
  }
  if (!(den > 0.0))
    throw DataError("nde: truth is identically zero (undefined denominator)");
  return num / den;
}

namespace detail {

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace detail

// Absolute per-day energy errors in Wh, one entry per complete UTC day.
// A day is complete when every grid slot of the series' own sampling grid
// inside [midnight, midnight+24h) carries a sample; partial edge days and
// days interrupted by gaps are excluded.
inline std::vector<double> epd_day_errors(std::span<const std::int64_t> ts,
                                          std::span<const double> pred,
                                          std::span<const double> truth,
                                          std::int64_t period_s) {
  if (ts.size() != pred.size() || ts.size() != truth.size())
    throw ShapeError("epd: length mismatch");
  if (ts.empty()) throw ShapeError("epd: empty input");
  if (period_s < 1) throw SpecError("epd: period must be >= 1");

  const double to_wh = static_cast<double>(period_s) / 3600.0;
  const std::int64_t t0 = ts.front();

  struct DayAcc {
    double pred_wh = 0.0;
    double truth_wh = 0.0;
    std::size_t samples = 0;
  };
  std::map<std::int64_t, DayAcc> days;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    auto& d = days[detail::floor_div(ts[i], 86400)];
    d.pred_wh += pred[i] * to_wh;
    d.truth_wh += truth[i] * to_wh;
    d.samples += 1;
  }

  std::vector<double> errors;
  for (const auto& [day, acc] : days) {
    const std::int64_t day_start = day * 86400;
    const std::int64_t day_end = day_start + 86400;
    // Grid slots of this series within the day: t0 + k*period in
    // [day_start, day_end).
    const std::int64_t k_first =
        detail::floor_div(day_start - t0 + period_s - 1, period_s);
    const std::int64_t k_last = detail::floor_div(day_end - 1 - t0, period_s);
    const std::int64_t expected = k_last - k_first + 1;
    if (expected < 1 ||
        acc.samples != static_cast<std::size_t>(expected))
      continue;  // partial or gappy day
    errors.push_back(std::abs(acc.pred_wh - acc.truth_wh));
  }
  return errors;
}

// Energy per day: mean absolute error of daily energy in Wh over complete
// UTC days.
inline double epd(std::span<const std::int64_t> ts,
                  std::span<const double> pred,
                  std::span<const double> truth, std::int64_t period_s) {
  const auto errors = epd_day_errors(ts, pred, truth, period_s);
  if (errors.empty())
    throw DataError("epd: no complete day in the evaluation span");
  double acc = 0.0;
  for (double e : errors) acc += e;
  return acc / static_cast<double>(errors.size());
}

// One evaluation segment: aligned timestamps, predictions, ground truth.
struct EvalSegment {
  std::vector<std::int64_t> timestamps;
  std::vector<double> pred;
  std::vector<double> truth;
};

struct ApplianceEval {
  std::string name;
  std::vector<EvalSegment> segments;
};

struct MetricsRow {
  std::optional<double> mae;
  std::optional<double> sae;
  std::optional<double> epd;
  std::optional<double> nde;
};

// Per-appliance metric rows plus the cross-appliance mean and population
// standard deviation. Cells whose metric is undefined on the data (zero
// denominators, no complete day) are invalid and excluded from the
// aggregate rows; `invalid_cells` counts them per metric.
struct MetricsReport {
  std::vector<std::pair<std::string, MetricsRow>> rows;
  MetricsRow overall;
  MetricsRow dispersion;
  std::size_t invalid_cells[4] = {0, 0, 0, 0};
};

namespace detail {

template <typename F>
std::optional<double> try_metric(F&& f) {
  try {
    return f();
  } catch (const DataError&) {
    return std::nullopt;
  }
}

inline void aggregate_column(
    const std::vector<std::pair<std::string, MetricsRow>>& rows,
    std::optional<double> MetricsRow::*field, std::optional<double>& mean_out,
    std::optional<double>& std_out, std::size_t& invalid_out) {
  std::vector<double> vals;
  for (const auto& [name, row] : rows)
    if (row.*field) vals.push_back(*(row.*field));
  invalid_out = rows.size() - vals.size();
  if (vals.empty()) return;
  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= static_cast<double>(vals.size());
  double var = 0.0;
  for (double v : vals) var += (v - mean) * (v - mean);
  var /= static_cast<double>(vals.size());
  mean_out = mean;
  std_out = std::sqrt(var);
}

inline void concat_segments(const ApplianceEval& a, std::vector<double>& pred,
                            std::vector<double>& truth) {
  for (const auto& seg : a.segments) {
    pred.insert(pred.end(), seg.pred.begin(), seg.pred.end());
    truth.insert(truth.end(), seg.truth.begin(), seg.truth.end());
  }
}

}  // namespace detail

// MAE/SAE/NDE pool samples across segments; EpD pools complete days across
// segments. Rows are ordered by appliance name.
inline MetricsReport compute_report(std::vector<ApplianceEval> appliances,
                                    std::int64_t period_s) {
  if (appliances.empty()) throw DataError("compute_report: no appliances");
  std::sort(appliances.begin(), appliances.end(),
            [](const auto& a, const auto& b) { return a.name < b.name; });

  MetricsReport report;
  for (const auto& a : appliances) {
    std::vector<double> pred, truth;
    detail::concat_segments(a, pred, truth);
    MetricsRow row;
    row.mae = detail::try_metric([&] { return mae(pred, truth); });
    row.sae = detail::try_metric([&] { return sae(pred, truth); });
    row.nde = detail::try_metric([&] { return nde(pred, truth); });
    row.epd = detail::try_metric([&]() -> double {
      std::vector<double> errors;
      for (const auto& seg : a.segments) {
        auto e = epd_day_errors(seg.timestamps, seg.pred, seg.truth, period_s);
        errors.insert(errors.end(), e.begin(), e.end());
      }
      if (errors.empty())
        throw DataError("epd: no complete day in the evaluation span");
      double acc = 0.0;
      for (double e : errors) acc += e;
      return acc / static_cast<double>(errors.size());
    });
    report.rows.emplace_back(a.name, row);
  }

  detail::aggregate_column(report.rows, &MetricsRow::mae, report.overall.mae,
                           report.dispersion.mae, report.invalid_cells[0]);
  detail::aggregate_column(report.rows, &MetricsRow::sae, report.overall.sae,
                           report.dispersion.sae, report.invalid_cells[1]);
  detail::aggregate_column(report.rows, &MetricsRow::epd, report.overall.epd,
                           report.dispersion.epd, report.invalid_cells[2]);
  detail::aggregate_column(report.rows, &MetricsRow::nde, report.overall.nde,
                           report.dispersion.nde, report.invalid_cells[3]);
  return report;
}

// Predicted and actual energy totals per appliance with shares normalized
// within each group.
struct EnergyShare {
  std::vector<std::string> appliances;
  std::vector<double> predicted_wh;
  std::vector<double> actual_wh;
  std::vector<double> predicted_share;
  std::vector<double> actual_share;
};

inline EnergyShare energy_share(const std::vector<ApplianceEval>& appliances,
                                std::int64_t period_s) {
  if (appliances.empty()) throw DataError("energy_share: no appliances");
  const double to_wh = static_cast<double>(period_s) / 3600.0;

  EnergyShare share;
  double pred_total = 0.0, actual_total = 0.0;
  for (const auto& a : appliances) {
    double p = 0.0, t = 0.0;
    for (const auto& seg : a.segments) {
      for (double v : seg.pred) p += v;
      for (double v : seg.truth) t += v;
    }
    share.appliances.push_back(a.name);
    share.predicted_wh.push_back(p * to_wh);
    share.actual_wh.push_back(t * to_wh);
    pred_total += p * to_wh;
    actual_total += t * to_wh;
  }
  if (!(pred_total > 0.0) && !(actual_total > 0.0))
    throw DataError("energy_share: all energy totals are zero");
  for (std::size_t i = 0; i < share.appliances.size(); ++i) {
    share.predicted_share.push_back(
        pred_total > 0.0 ? share.predicted_wh[i] / pred_total : 0.0);
    share.actual_share.push_back(
        actual_total > 0.0 ? share.actual_wh[i] / actual_total : 0.0);
  }
  return share;
}

}  // namespace nilm
