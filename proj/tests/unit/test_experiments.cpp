#include <gtest/gtest.h>

#include <filesystem>

#include <nlohmann/json.hpp>

#include "gridfm/config.hpp"
#include "gridfm/errors.hpp"
#include "gridfm/experiments.hpp"
#include "gridfm/report.hpp"

using namespace gridfm;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "gridfm_unit" / name;
  fs::remove_all(p);
  return p;
}

ExperimentConfig parse(nlohmann::json j) { return ExperimentConfig::parse(j.dump()); }

nlohmann::json fidelity_doc() {
  return {{"experiment", "fidelity"},
          {"seed", 3},
          {"grid", {{"n", 5}}},
          {"backend", {{"kind", "oracle_mock"}}},
          {"fidelity", {{"templates", {"T", "T_plus_R", "T_minimal", "T_minimal_plus_R"}}}}};
}

}  // namespace

TEST(Config, ParsesCheckedInConfigs) {
  for (const auto& entry : fs::directory_iterator(GRIDFM_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    EXPECT_NO_THROW(ExperimentConfig::load(entry.path())) << entry.path();
  }
}

TEST(Config, RejectsUnknownKeysWithPath) {
  auto doc = fidelity_doc();
  doc["grid"]["colour"] = "blue";
  try {
    parse(doc);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("grid.colour"), std::string::npos);
  }
}

TEST(Config, RejectsBadDocuments) {
  EXPECT_THROW(ExperimentConfig::parse("{not json"), ConfigError);
  EXPECT_THROW(parse({{"experiment", "dance"}}), ConfigError);
  EXPECT_THROW(parse({{"experiment", "train"}}), ConfigError);  // no train section
  auto doc = fidelity_doc();
  doc["grid"]["n"] = "five";
  EXPECT_THROW(parse(doc), ConfigError);
  doc = fidelity_doc();
  doc["fidelity"]["templates"] = {"RewardSample"};
  EXPECT_THROW(parse(doc), ConfigError);
  doc = fidelity_doc();
  doc["backend"] = {{"kind", "noisy_mock"}, {"error_rate", 2.0}};
  EXPECT_THROW(parse(doc), ConfigError);
  doc["backend"]["error_rate"] = 1.0;
  EXPECT_THROW(parse(doc), ConfigError);
  doc = fidelity_doc();
  doc["grid"]["sticky_prob"] = 1.0;
  EXPECT_THROW(parse(doc), ConfigError);
  nlohmann::json train = {{"experiment", "train"},
                          {"train", {{"agent", {{"rollout_length", 100}, {"eval_every", 30}}}}}};
  EXPECT_THROW(parse(train), ConfigError);
  train = {{"experiment", "train"}, {"train", {{"scratch", false}}}};
  EXPECT_THROW(parse(train), ConfigError);
}

TEST(Config, SeedExpansionIsStableAndDistinct) {
  const auto a = expand_seeds(4, 5);
  EXPECT_EQ(a, expand_seeds(4, 5));
  EXPECT_EQ(std::set<std::uint64_t>(a.begin(), a.end()).size(), 5u);
  EXPECT_NE(a, expand_seeds(5, 5));
  EXPECT_EQ(expand_seeds(4, 3), std::vector<std::uint64_t>(a.begin(), a.begin() + 3));
}

TEST(Experiments, FidelityWritesFourPerfectRows) {
  ExperimentConfig c = parse(fidelity_doc());
  c.output_dir = fresh_dir("fid");
  const RunOutcome r = run_fidelity(c);
  EXPECT_TRUE(r.ok());
  const auto rows = read_csv(report::read_file(c.output_dir / "accuracy.csv"));
  ASSERT_EQ(rows.size(), 5u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(rows[i][5], "1");
  const auto manifest = nlohmann::json::parse(report::read_file(c.output_dir / "run.json"));
  EXPECT_EQ(manifest["status"], "ok");
}

TEST(Experiments, NoisyLedgerHasOneRowPerProbe) {
  auto doc = fidelity_doc();
  doc["backend"] = {{"kind", "noisy_mock"}, {"error_rate", 0.1}, {"error_model", "clamp"}};
  doc["fidelity"] = {{"templates", {"T"}}, {"sizes", {16}}};
  ExperimentConfig c = parse(doc);
  c.output_dir = fresh_dir("noisy");
  run_fidelity(c);
  const auto rows = read_csv(report::read_file(c.output_dir / "probes_T_n16.csv"));
  EXPECT_EQ(rows.size(), 1025u);
}

TEST(Experiments, FailedJobsMakeTheRunFail) {
  nlohmann::json doc = {{"experiment", "fa"},
                        {"grid", {{"n", 5}, {"max_steps", 3}}},
                        {"backend", {{"kind", "scripted_mock"}, {"responses", {"???"}}}},
                        {"fa", {{"episodes", 2}, {"fallback", "abort"}, {"strategies", {"AO"}},
                                {"settings", {"fixed"}}}}};
  ExperimentConfig c = parse(doc);
  c.output_dir = fresh_dir("fa_fail");
  const RunOutcome r = run_fa(c);
  EXPECT_FALSE(r.ok());
  const auto manifest = nlohmann::json::parse(report::read_file(c.output_dir / "run.json"));
  EXPECT_EQ(manifest["status"], "failed");
}

TEST(Experiments, DistributionOutputs) {
  nlohmann::json doc = {{"experiment", "distribution"},
                        {"seed", 1},
                        {"backend", {{"kind", "oracle_mock"}}},
                        {"distribution",
                         {{"location", {{"samples", 500}}},
                          {"binary", {{"samples", 400}}}}}};
  ExperimentConfig c = parse(doc);
  c.output_dir = fresh_dir("dist");
  ASSERT_TRUE(run_distribution(c).ok());
  const auto rows = read_csv(report::read_file(c.output_dir / "binary_sweep.csv"));
  EXPECT_EQ(rows.size(), 5u);
  EXPECT_TRUE(fs::exists(c.output_dir / "location_density.svg"));
  EXPECT_TRUE(fs::exists(c.output_dir / "binary_reference.csv"));
}

TEST(Experiments, CachedRerunsAreByteIdentical) {
  auto doc = fidelity_doc();
  doc["backend"] = {{"kind", "noisy_mock"}, {"error_rate", 0.2}};
  const fs::path root = fresh_dir("rerun");
  ExperimentConfig c = parse(doc);
  c.cache = root / "cache.bin";
  c.output_dir = root / "a";
  run_fidelity(c);
  c.output_dir = root / "b";
  run_fidelity(c);
  for (const auto& e : fs::directory_iterator(root / "a")) {
    EXPECT_EQ(report::read_file(e.path()),
              report::read_file(root / "b" / e.path().filename()))
        << e.path().filename();
  }
}

TEST(Experiments, TrainAndReport) {
  nlohmann::json doc = {{"experiment", "train"},
                        {"seed", 9},
                        {"backend", {{"kind", "oracle_mock"}}},
                        {"train",
                         {{"num_seeds", 2},
                          {"pretrain_steps", 250},
                          {"agent", {{"total_steps", 250}}}}}};
  const fs::path root = fresh_dir("train_report");
  ExperimentConfig c = parse(doc);
  c.output_dir = root / "train";
  ASSERT_TRUE(run_train(c).ok());
  const auto rows = read_csv(report::read_file(c.output_dir / "curve_scratch.csv"));
  EXPECT_EQ(rows.size(), 1u + 2u * 3u);

  nlohmann::json fa = {{"experiment", "fa"},
                       {"backend", {{"kind", "scripted_mock"}, {"responses", {R"({"action": "up"})"}}}},
                       {"fa", {{"episodes", 2}, {"strategies", {"AO"}}}}};
  ExperimentConfig f = parse(fa);
  f.output_dir = root / "fa";
  ASSERT_TRUE(run_fa(f).ok());

  const RunOutcome rep = build_report(root);
  const auto curves = read_csv(report::read_file(root / "combined_curves.csv"));
  EXPECT_EQ(curves.size(), 1u + 3u * 6u);
  const auto fa_rows = read_csv(report::read_file(root / "combined_fa.csv"));
  ASSERT_EQ(fa_rows.size(), 2u);
  EXPECT_EQ(fa_rows[1][0], "fa");
  EXPECT_NE(report::read_file(root / "report.svg").find("FA AO"), std::string::npos);
}

TEST(Experiments, ReportOnEmptyDirectory) {
  const fs::path root = fresh_dir("empty");
  fs::create_directories(root);
  try {
    build_report(root);
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("no runs found"), std::string::npos);
  }
}

TEST(Experiments, ReadCsvHandlesQuotes) {
  const auto rows = read_csv("a,\"b,c\",\"say \"\"x\"\"\"\n1,2,3\n");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0][1], "b,c");
  EXPECT_EQ(rows[0][2], "say \"x\"");
}
