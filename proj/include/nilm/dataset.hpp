#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "nilm/power_series.hpp"
#include "nilm/windowing.hpp"

namespace nilm {

// Dataset description: where each house's CSV lives, which columns hold the
// timestamp/mains/appliances, and the per-appliance train/validation/test
// house splits. JSON, e.g.:
//
//   {
//     "period_s": 8,
//     "max_gap_s": 3600,
//     "timestamp_format": "unix",
//     "houses": {
//       "2": {"file": "house2.csv",
//              "columns": {"timestamp": "Time", "mains": "Aggregate",
//                          "kettle": "Appliance1"}}
//     },
//     "splits": {
//       "kettle": {"train": ["3", "4"], "validation": ["5"], "test": ["2"]}
//     }
//   }
//
// Column references are header names (strings) or zero-based indices
// (integers). Paths are resolved relative to the config file.

struct HouseFiles {
  std::filesystem::path file;
  std::map<std::string, ColumnRef> columns;  // role -> column
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
};

struct DatasetConfig {
  std::int64_t period_s = 8;
  std::int64_t max_gap_s = 3600;
  TimestampFormat ts_format = TimestampFormat::unix_seconds;
  std::map<std::string, HouseFiles> houses;
  std::map<std::string, DatasetSplit> splits;
};

namespace detail {

inline ColumnRef column_ref_from_json(const nlohmann::json& j,
                                      const std::string& role) {
  ColumnRef ref;
  if (j.is_string()) {
    ref.name = j.get<std::string>();
  } else if (j.is_number_integer()) {
    ref.index = j.get<int>();
    if (ref.index < 0)
      throw LayoutError("column index for \"" + role + "\" must be >= 0");
  } else {
    throw LayoutError("column for \"" + role +
                      "\" must be a header name or index");
  }
  return ref;
}

inline std::vector<std::string> ids_from_json(const nlohmann::json& j) {
  std::vector<std::string> ids;
  for (const auto& v : j)
    ids.push_back(v.is_string() ? v.get<std::string>()
                                : std::to_string(v.get<std::int64_t>()));
  return ids;
}

}  // namespace detail

inline void validate_split(const DatasetSplit& split,
                           const std::string& appliance) {
  std::set<std::string> seen;
  auto check = [&](const std::vector<std::string>& ids) {
    for (const auto& id : ids)
      if (!seen.insert(id).second)
        throw LayoutError("split for \"" + appliance + "\": house " + id +
                          " appears in more than one of train/validation/test");
  };
  check(split.train);
  check(split.validation);
  check(split.test);
}

inline DatasetConfig load_dataset_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LayoutError("cannot open dataset config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw LayoutError("dataset config " + path.string() + ": " + e.what());
  }

  try {
    DatasetConfig config;
    config.period_s = j.value("period_s", std::int64_t{8});
    config.max_gap_s = j.value("max_gap_s", std::int64_t{3600});
    const std::string fmt = j.value("timestamp_format", std::string("unix"));
    if (fmt == "unix") {
      config.ts_format = TimestampFormat::unix_seconds;
    } else if (fmt == "datetime") {
      config.ts_format = TimestampFormat::datetime;
    } else {
      throw LayoutError("timestamp_format must be \"unix\" or \"datetime\"");
    }
    if (config.period_s < 1) throw LayoutError("period_s must be >= 1");
    if (config.max_gap_s <= config.period_s)
      throw LayoutError("max_gap_s must exceed period_s");

    const auto base = path.parent_path();
    for (const auto& [id, hj] : j.at("houses").items()) {
      HouseFiles h;
      std::filesystem::path file = hj.at("file").get<std::string>();
      h.file = file.is_absolute() ? file : base / file;
      for (const auto& [role, cj] : hj.at("columns").items())
        h.columns[role] = detail::column_ref_from_json(cj, role);
      if (!h.columns.count("timestamp"))
        throw LayoutError("house " + id + ": no timestamp column");
      if (!h.columns.count("mains"))
        throw LayoutError("house " + id + ": no mains column");
      config.houses[id] = std::move(h);
    }
    if (j.contains("splits")) {
      for (const auto& [appliance, sj] : j.at("splits").items()) {
        DatasetSplit split;
        if (sj.contains("train")) split.train = detail::ids_from_json(sj.at("train"));
        if (sj.contains("validation"))
          split.validation = detail::ids_from_json(sj.at("validation"));
        if (sj.contains("test")) split.test = detail::ids_from_json(sj.at("test"));
        validate_split(split, appliance);
        config.splits[appliance] = std::move(split);
      }
    }
    return config;
  } catch (const nlohmann::json::exception& e) {
    throw LayoutError("dataset config " + path.string() + ": " + e.what());
  }
}

// Normalization constants per channel role: built-in defaults, optionally
// extended/overridden by a JSON file {"role": {"mean": m, "std": s}, ...}.
using NormTable = std::map<std::string, NormalizationParams>;

inline NormTable load_norm_table(const std::filesystem::path& path) {
  NormTable table = default_normalization();
  if (path.empty()) return table;
  std::ifstream in(path);
  if (!in) throw LayoutError("cannot open norm config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    for (const auto& [role, pj] : j.items()) {
      NormalizationParams p{pj.at("mean").get<double>(),
                            pj.at("std").get<double>()};
      if (!(p.std > 0.0))
        throw LayoutError("norm config: std for \"" + role +
                          "\" must be > 0");
      table[canonical_channel_name(role)] = p;
    }
  } catch (const nlohmann::json::exception& e) {
    throw LayoutError("norm config " + path.string() + ": " + e.what());
  }
  return table;
}

inline NormalizationParams norm_for(const NormTable& table,
                                    const std::string& role) {
  const auto it = table.find(canonical_channel_name(role));
  if (it == table.end())
    throw LayoutError("no normalization constants for channel \"" + role +
                      "\"; add them to the norm config");
  return it->second;
}

// Ingestion pipeline for one house: parse, resample both channels onto the
// common grid, intersect timestamps, split on gaps. Returns one AlignedPair
// per contiguous segment.
inline std::vector<AlignedPair> load_house_pairs(const DatasetConfig& config,
                                                 const std::string& house_id,
                                                 const std::string& appliance) {
  const auto hit = config.houses.find(house_id);
  if (hit == config.houses.end())
    throw LayoutError("house \"" + house_id + "\" not in dataset config");
  const auto& house = hit->second;
  const auto ait = house.columns.find(appliance);
  if (ait == house.columns.end())
    throw LayoutError("house \"" + house_id + "\" has no \"" + appliance +
                      "\" column");

  ChannelLayout layout;
  layout.timestamp = house.columns.at("timestamp");
  layout.ts_format = config.ts_format;
  layout.channels = {{"mains", house.columns.at("mains")},
                     {appliance, ait->second}};

  std::ifstream in(house.file);
  if (!in) throw DataError("cannot open channel file " + house.file.string());
  const auto parsed = parse_channel_file(in, layout);

  const auto mains =
      resample(parsed.series[0], config.period_s, config.max_gap_s);
  const auto appl =
      resample(parsed.series[1], config.period_s, config.max_gap_s);
  const auto joined = align(mains, appl);

  // Cut both channels at the same places: gaps in the aligned timestamps.
  const auto mains_segments = split_on_gaps(joined.mains, config.max_gap_s);
  const auto appl_segments = split_on_gaps(joined.appliance, config.max_gap_s);

  std::vector<AlignedPair> pairs;
  for (std::size_t i = 0; i < mains_segments.size(); ++i) {
    AlignedPair p;
    p.mains = mains_segments[i];
    p.appliance = appl_segments[i];
    pairs.push_back(std::move(p));
  }
  return pairs;
}

inline std::vector<AlignedPair> load_split_pairs(
    const DatasetConfig& config, const std::string& appliance,
    const std::vector<std::string>& houses) {
  std::vector<AlignedPair> pairs;
  for (const auto& id : houses) {
    auto house_pairs = load_house_pairs(config, id, appliance);
    for (auto& p : house_pairs) pairs.push_back(std::move(p));
  }
  if (pairs.empty())
    throw DataError("no data for appliance \"" + appliance + "\"");
  return pairs;
}

inline WindowBatch batch_from_pairs(const std::vector<AlignedPair>& pairs,
                                    std::size_t window_length,
                                    const NormalizationParams& mains_norm,
                                    const NormalizationParams& appliance_norm) {
  std::vector<WindowBatch> parts;
  for (const auto& p : pairs)
    parts.push_back(
        make_training_pairs(p, window_length, mains_norm, appliance_norm));
  return merge_batches(std::move(parts));
}

}  // namespace nilm
