#include "nilm/dataset.hpp"

#include <gtest/gtest.h>

#include "testutil.hpp"

using namespace nilm;

namespace {

// Two houses on an 8 s grid with a large gap in house 1.
void write_fixture(const std::filesystem::path& dir) {
  std::string h1 = "Time,Aggregate,Appliance1\n";
  for (int i = 0; i < 40; ++i)
    h1 += std::to_string(i * 8) + "," + std::to_string(500 + i) + "," +
          std::to_string(i % 2 ? 2000 : 0) + "\n";
  for (int i = 0; i < 40; ++i)
    h1 += std::to_string(100000 + i * 8) + "," + std::to_string(600 + i) +
          "," + "0\n";
  testutil::write_file(dir / "house1.csv", h1);

  std::string h2 = "Time,Aggregate,Appliance1\n";
  for (int i = 0; i < 50; ++i)
    h2 += std::to_string(i * 8) + "," + std::to_string(700 + i) + "," +
          std::to_string(i % 3 ? 1500 : 0) + "\n";
  testutil::write_file(dir / "house2.csv", h2);

  std::string h3 = "Time,Aggregate,Appliance1\n";
  for (int i = 0; i < 30; ++i)
    h3 += std::to_string(i * 8) + "," + std::to_string(800 + i) + ",0\n";
  testutil::write_file(dir / "house3.csv", h3);

  testutil::write_file(dir / "dataset.json", R"({
    "period_s": 8,
    "max_gap_s": 3600,
    "timestamp_format": "unix",
    "houses": {
      "1": {"file": "house1.csv",
            "columns": {"timestamp": "Time", "mains": "Aggregate",
                        "kettle": "Appliance1"}},
      "2": {"file": "house2.csv",
            "columns": {"timestamp": "Time", "mains": "Aggregate",
                        "kettle": "Appliance1"}},
      "3": {"file": "house3.csv",
            "columns": {"timestamp": "Time", "mains": "Aggregate",
                        "kettle": "Appliance1"}}
    },
    "splits": {
      "kettle": {"train": ["1"], "validation": ["2"], "test": ["3"]}
    }
  })");
}

}  // namespace

TEST(DatasetConfig, ParsesAndResolvesRelativePaths) {
  testutil::TempDir dir("ds");
  write_fixture(dir.path());
  const auto config = load_dataset_config(dir.path() / "dataset.json");
  EXPECT_EQ(config.period_s, 8);
  EXPECT_EQ(config.houses.at("1").file, dir.path() / "house1.csv");
  EXPECT_EQ(config.splits.at("kettle").train,
            (std::vector<std::string>{"1"}));
}

TEST(DatasetConfig, OverlappingSplitRejected) {
  testutil::TempDir dir("ds");
  testutil::write_file(dir.path() / "bad.json", R"({
    "houses": {"1": {"file": "x.csv",
                     "columns": {"timestamp": 0, "mains": 1}}},
    "splits": {"kettle": {"train": ["1"], "test": ["1"]}}
  })");
  EXPECT_THROW(load_dataset_config(dir.path() / "bad.json"), LayoutError);
}

TEST(DatasetConfig, MissingMainsColumnRejected) {
  testutil::TempDir dir("ds");
  testutil::write_file(dir.path() / "bad.json", R"({
    "houses": {"1": {"file": "x.csv", "columns": {"timestamp": 0}}}
  })");
  EXPECT_THROW(load_dataset_config(dir.path() / "bad.json"), LayoutError);
}

TEST(DatasetConfig, MalformedJsonRejected) {
  testutil::TempDir dir("ds");
  testutil::write_file(dir.path() / "bad.json", "{");
  EXPECT_THROW(load_dataset_config(dir.path() / "bad.json"), LayoutError);
}

TEST(NormTable, DefaultsMatchShippedConstants) {
  const auto table = load_norm_table("");
  EXPECT_EQ(norm_for(table, "aggregate").mean, 522.0);
  EXPECT_EQ(norm_for(table, "aggregate").std, 814.0);
  EXPECT_EQ(norm_for(table, "kettle").mean, 700.0);
  EXPECT_EQ(norm_for(table, "microwave").std, 800.0);
  EXPECT_EQ(norm_for(table, "fridge").mean, 200.0);
  EXPECT_EQ(norm_for(table, "dishwasher").std, 1000.0);
  EXPECT_EQ(norm_for(table, "washing machine").std, 700.0);
  // Aliases.
  EXPECT_EQ(norm_for(table, "mains").mean, 522.0);
  EXPECT_EQ(norm_for(table, "Washing_Machine").mean, 400.0);
  EXPECT_THROW(norm_for(table, "toaster"), LayoutError);
}

TEST(NormTable, FileOverridesAndExtends) {
  testutil::TempDir dir("norm");
  testutil::write_file(dir.path() / "norm.json", R"({
    "kettle": {"mean": 650, "std": 900},
    "target": {"mean": 200, "std": 400}
  })");
  const auto table = load_norm_table(dir.path() / "norm.json");
  EXPECT_EQ(norm_for(table, "kettle").mean, 650.0);
  EXPECT_EQ(norm_for(table, "target").std, 400.0);
  EXPECT_EQ(norm_for(table, "fridge").mean, 200.0);  // default retained
}

TEST(LoadHousePairs, SplitsOnGapAndAligns) {
  testutil::TempDir dir("ds");
  write_fixture(dir.path());
  const auto config = load_dataset_config(dir.path() / "dataset.json");
  const auto pairs = load_house_pairs(config, "1", "kettle");
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].mains.size(), 40u);
  EXPECT_EQ(pairs[1].mains.size(), 40u);
  EXPECT_EQ(pairs[0].mains.timestamps, pairs[0].appliance.timestamps);
}

TEST(LoadHousePairs, UnknownHouseOrChannelRejected) {
  testutil::TempDir dir("ds");
  write_fixture(dir.path());
  const auto config = load_dataset_config(dir.path() / "dataset.json");
  EXPECT_THROW(load_house_pairs(config, "9", "kettle"), LayoutError);
  EXPECT_THROW(load_house_pairs(config, "1", "fridge"), LayoutError);
}

TEST(BatchFromPairs, MergesSegments) {
  testutil::TempDir dir("ds");
  write_fixture(dir.path());
  const auto config = load_dataset_config(dir.path() / "dataset.json");
  const auto pairs = load_split_pairs(config, "kettle", {"1", "2"});
  const auto batch =
      batch_from_pairs(pairs, 9, {522.0, 814.0}, {700.0, 1000.0});
  EXPECT_EQ(batch.size(), 130u);  // 40 + 40 + 50 windows
  EXPECT_EQ(batch.window_length(), 9u);
}
