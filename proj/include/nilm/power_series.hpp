#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nilm/errors.hpp"

namespace nilm {

// Timestamped active-power readings for one channel (mains or one
// appliance). Timestamps are integer UNIX seconds, strictly increasing;
// values are watts, finite and non-negative. `period_s` is the nominal
// sampling period: after resampling every delta within a segment equals it,
// for raw data it is the median observed delta (0 if unknown).
struct PowerSeries {
  std::vector<std::int64_t> timestamps;
  std::vector<double> values;
  std::int64_t period_s = 0;
  std::string channel;

  std::size_t size() const { return timestamps.size(); }
  bool empty() const { return timestamps.empty(); }
};

// Mains and one appliance on identical timestamps.
struct AlignedPair {
  PowerSeries mains;
  PowerSeries appliance;
};

enum class TimestampFormat { unix_seconds, datetime };

// Column reference: by header name when `name` is non-empty, otherwise by
// zero-based index.
struct ColumnRef {
  std::string name;
  int index = -1;

  bool by_name() const { return !name.empty(); }
};

struct ChannelLayout {
  ColumnRef timestamp;
  std::vector<std::pair<std::string, ColumnRef>> channels;  // role -> column
  TimestampFormat ts_format = TimestampFormat::unix_seconds;
};

struct ParseResult {
  std::vector<PowerSeries> series;  // one per layout channel, same order
  std::size_t skipped_rows = 0;
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

// Days since 1970-01-01 for a proleptic Gregorian date.
inline std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline bool parse_timestamp(std::string_view field, TimestampFormat fmt,
                            std::int64_t& out) {
  if (fmt == TimestampFormat::unix_seconds) {
    errno = 0;
    char* end = nullptr;
    std::string buf(field);
    const double v = std::strtod(buf.c_str(), &end);
    if (end == buf.c_str() || *end != '\0' || errno != 0 || !std::isfinite(v))
      return false;
    out = static_cast<std::int64_t>(std::llround(v));
    return true;
  }
  // "YYYY-MM-DD HH:MM:SS", interpreted as UTC.
  int y, mo, d, h, mi, s;
  std::string buf(field);
  if (std::sscanf(buf.c_str(), "%d-%d-%d %d:%d:%d", &y, &mo, &d, &h, &mi,
                  &s) != 6)
    return false;
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 ||
      mi > 59 || s < 0 || s > 60)
    return false;
  out = days_from_civil(y, static_cast<unsigned>(mo),
                        static_cast<unsigned>(d)) *
            86400 +
        h * 3600 + mi * 60 + s;
  return true;
}

inline bool parse_power(std::string_view field, double& out) {
  std::string buf(field);
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(buf.c_str(), &end);
  if (end == buf.c_str() || *end != '\0' || errno != 0) return false;
  if (!std::isfinite(v) || v < 0.0) return false;
  out = v;
  return true;
}

inline std::int64_t median_delta(const std::vector<std::int64_t>& ts) {
  if (ts.size() < 2) return 0;
  std::vector<std::int64_t> deltas;
  deltas.reserve(ts.size() - 1);
  for (std::size_t i = 1; i < ts.size(); ++i)
    deltas.push_back(ts[i] - ts[i - 1]);
  auto mid = deltas.begin() + deltas.size() / 2;
  std::nth_element(deltas.begin(), mid, deltas.end());
  return *mid;
}

}  // namespace detail

// Parse a CSV channel file into one PowerSeries per layout channel.
// Rows with an unparseable timestamp or power field (including negative or
// non-finite power) are skipped and counted; a header row, if present, is
// consumed for name resolution or skipped like any other unparseable row.
// Duplicate timestamps collapse to the last value seen.
inline ParseResult parse_channel_file(std::istream& in,
                                      const ChannelLayout& layout) {
  if (layout.channels.empty())
    throw LayoutError("layout names no power columns");

  const bool needs_header =
      layout.timestamp.by_name() ||
      std::any_of(layout.channels.begin(), layout.channels.end(),
                  [](const auto& c) { return c.second.by_name(); });

  int ts_col = layout.timestamp.index;
  std::vector<int> chan_cols(layout.channels.size());
  for (std::size_t i = 0; i < layout.channels.size(); ++i)
    chan_cols[i] = layout.channels[i].second.index;

  std::string line;
  bool header_resolved = !needs_header;
  std::size_t skipped = 0;

  // (timestamp, value) per channel; sorted and deduplicated at the end.
  std::vector<std::vector<std::pair<std::int64_t, double>>> rows(
      layout.channels.size());

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv_line(line);

    if (!header_resolved) {
      // First non-empty line is the header; resolve named columns.
      auto find_col = [&](const ColumnRef& ref) -> int {
        if (!ref.by_name()) return ref.index;
        for (std::size_t i = 0; i < fields.size(); ++i)
          if (detail::trim(fields[i]) == ref.name)
            return static_cast<int>(i);
        throw LayoutError("column \"" + ref.name + "\" not present in header");
      };
      ts_col = find_col(layout.timestamp);
      for (std::size_t i = 0; i < layout.channels.size(); ++i)
        chan_cols[i] = find_col(layout.channels[i].second);
      header_resolved = true;
      continue;
    }

    bool ok = ts_col >= 0 && static_cast<std::size_t>(ts_col) < fields.size();
    std::int64_t ts = 0;
    if (ok)
      ok = detail::parse_timestamp(detail::trim(fields[ts_col]),
                                   layout.ts_format, ts);
    std::vector<double> vals(layout.channels.size());
    for (std::size_t i = 0; ok && i < chan_cols.size(); ++i) {
      ok = chan_cols[i] >= 0 &&
           static_cast<std::size_t>(chan_cols[i]) < fields.size() &&
           detail::parse_power(detail::trim(fields[chan_cols[i]]), vals[i]);
    }
    if (!ok) {
      ++skipped;
      continue;
    }
    for (std::size_t i = 0; i < vals.size(); ++i) rows[i].push_back({ts, vals[i]});
  }

  if (!rows.empty() && rows[0].empty())
    throw EmptyInputError("no parseable rows in channel file");

  ParseResult result;
  result.skipped_rows = skipped;
  for (std::size_t i = 0; i < layout.channels.size(); ++i) {
    auto& r = rows[i];
    std::stable_sort(r.begin(), r.end(), [](const auto& a, const auto& b) {
      return a.first < b.first;
    });
    PowerSeries s;
    s.channel = layout.channels[i].first;
    s.timestamps.reserve(r.size());
    s.values.reserve(r.size());
    for (const auto& [ts, v] : r) {
      if (!s.timestamps.empty() && s.timestamps.back() == ts) {
        s.values.back() = v;  // duplicate timestamp: last value wins
      } else {
        s.timestamps.push_back(ts);
        s.values.push_back(v);
      }
    }
    s.period_s = detail::median_delta(s.timestamps);
    result.series.push_back(std::move(s));
  }
  return result;
}

// Resample onto the regular grid {t0, t0+p, ...} spanning the input, taking
// for each grid point the last observed value at-or-before it (forward
// fill). Grid points whose most recent observation is older than `max_gap_s`
// are omitted; split_on_gaps cuts the series there.
inline PowerSeries resample(const PowerSeries& series,
                            std::int64_t target_period_s,
                            std::int64_t max_gap_s = 3600) {
  if (series.empty()) throw EmptyInputError("resample: empty series");
  if (target_period_s < series.period_s)
    throw UpsampleError("resample: target period " +
                        std::to_string(target_period_s) +
                        "s is shorter than source period " +
                        std::to_string(series.period_s) + "s");
  if (target_period_s <= 0) throw SpecError("resample: period must be > 0");
  // A series already at the target period is returned as-is; this is the
  // identity contract and it makes resampling idempotent.
  if (target_period_s == series.period_s) return series;

  PowerSeries out;
  out.channel = series.channel;
  out.period_s = target_period_s;
  const std::int64_t t0 = series.timestamps.front();
  const std::int64_t t_end = series.timestamps.back();
  std::size_t src = 0;
  for (std::int64_t t = t0; t <= t_end; t += target_period_s) {
    while (src + 1 < series.size() && series.timestamps[src + 1] <= t) ++src;
    if (t - series.timestamps[src] <= max_gap_s) {
      out.timestamps.push_back(t);
      out.values.push_back(series.values[src]);
    }
  }
  return out;
}

// Cut the series wherever consecutive timestamps differ by more than
// `max_gap_s`. Gaps at or below the threshold were already forward-filled by
// resample and stay in place.
inline std::vector<PowerSeries> split_on_gaps(const PowerSeries& series,
                                              std::int64_t max_gap_s) {
  if (series.period_s > 0 && max_gap_s <= series.period_s)
    throw SpecError("split_on_gaps: max_gap must exceed the sampling period");
  std::vector<PowerSeries> segments;
  if (series.empty()) return segments;

  std::size_t start = 0;
  auto emit = [&](std::size_t begin, std::size_t end) {
    PowerSeries seg;
    seg.channel = series.channel;
    seg.period_s = series.period_s;
    seg.timestamps.assign(series.timestamps.begin() + begin,
                          series.timestamps.begin() + end);
    seg.values.assign(series.values.begin() + begin,
                      series.values.begin() + end);
    segments.push_back(std::move(seg));
  };
  for (std::size_t i = 1; i < series.size(); ++i) {
    if (series.timestamps[i] - series.timestamps[i - 1] > max_gap_s) {
      emit(start, i);
      start = i;
    }
  }
  emit(start, series.size());
  return segments;
}

// Restrict both series to the intersection of their timestamp sets.
inline AlignedPair align(const PowerSeries& mains,
                         const PowerSeries& appliance) {
  if (mains.period_s != appliance.period_s)
    throw SpecError("align: series have different periods");
  AlignedPair pair;
  pair.mains.channel = mains.channel;
  pair.mains.period_s = mains.period_s;
  pair.appliance.channel = appliance.channel;
  pair.appliance.period_s = appliance.period_s;

  std::size_t i = 0, j = 0;
  while (i < mains.size() && j < appliance.size()) {
    const std::int64_t a = mains.timestamps[i];
    const std::int64_t b = appliance.timestamps[j];
    if (a == b) {
      pair.mains.timestamps.push_back(a);
      pair.mains.values.push_back(mains.values[i]);
      pair.appliance.timestamps.push_back(b);
      pair.appliance.values.push_back(appliance.values[j]);
      ++i, ++j;
    } else if (a < b) {
      ++i;
    } else {
      ++j;
    }
  }
  if (pair.mains.empty())
    throw NoOverlapError("align: timestamp sets do not intersect");
  return pair;
}

}  // namespace nilm
