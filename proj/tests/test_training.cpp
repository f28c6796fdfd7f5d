#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "aware/training.hpp"

using namespace aware;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("aware_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

SimConfig small_config() {
  SimConfig cfg;
  cfg.ppo.rollout = 64;
  cfg.ppo.batch = 32;
  cfg.ppo.epochs = 2;
  cfg.train.episode_duration = 4.0;
  cfg.train.checkpoint_every = 1;
  return cfg;
}

TrainOptions topts(const fs::path& dir, uint64_t seed) {
  TrainOptions o;
  o.out_dir = dir.string();
  o.seed = seed;
  return o;
}

EvalOptions eopts(const fs::path& dir, uint64_t seed) {
  EvalOptions o;
  o.out_dir = dir.string();
  o.seed = seed;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Training, SameSeedSameCheckpoint) {
  SimConfig cfg = small_config();
  cfg.ppo.total_steps = 128;
  const auto scen = make_scenarios({"corridor"}, cfg);
  const auto a = scratch("det_a"), b = scratch("det_b");
  const TrainOptions oa = topts(a, 7), ob = topts(b, 7);
  const TrainResult ra = train(scen, cfg, oa);
  const TrainResult rb = train(scen, cfg, ob);
  EXPECT_EQ(ra.global_step, 128u);
  EXPECT_EQ(ra.updates, 2u);
  EXPECT_EQ(slurp(a / "checkpoint.awpk"), slurp(b / "checkpoint.awpk"));
  EXPECT_FALSE(slurp(a / "metrics.jsonl").empty());
}

TEST(Training, ResumeContinuesTheStepCounter) {
  SimConfig cfg = small_config();
  const auto scen = make_scenarios({"corridor"}, cfg);
  const auto d = scratch("resume");
  cfg.ppo.total_steps = 64;
  train(scen, cfg, topts(d, 3));
  cfg.ppo.total_steps = 192;
  TrainOptions again = topts(d, 3);
  again.resume = true;
  const TrainResult r = train(scen, cfg, again);
  EXPECT_EQ(r.global_step, 192u);
  EXPECT_EQ(r.updates, 3u);

  uint64_t last = 0;
  bool monotone = true;
  std::ifstream in(d / "metrics.jsonl");
  for (std::string line; std::getline(in, line);) {
    const auto j = nlohmann::json::parse(line);
    if (j["type"] != "update") continue;
    const auto s = j["step"].get<uint64_t>();
    monotone = monotone && s > last;
    last = s;
  }
  EXPECT_TRUE(monotone);
  EXPECT_EQ(last, 192u);
}

TEST(Evaluation, RepeatableAndWritesArtifacts) {
  SimConfig cfg;
  cfg.episode.duration = 4.0;
  const auto scen = make_scenarios({"corridor"}, cfg);
  const std::vector<ControllerSpec> ctrls{ControllerSpec::fixed_rate(1.0), ControllerSpec::static_mpc(1000)};
  cfg.eval.runs_per_pair = 2;
  const auto d1 = scratch("eval1"), d2 = scratch("eval2");
  const EvalResult r1 = evaluate(scen, ctrls, cfg, eopts(d1, 11));
  const EvalResult r2 = evaluate(scen, ctrls, cfg, eopts(d2, 11));
  write_eval(d1.string(), r1);
  ASSERT_EQ(r1.runs.size(), 4u);
  for (std::size_t i = 0; i < r1.runs.size(); ++i) EXPECT_EQ(r1.runs[i].metrics.ape_rmse, r2.runs[i].metrics.ape_rmse) << i;

  // Same run index shares its start across controllers.
  EXPECT_EQ(r1.runs[0].start_index, r1.runs[2].start_index);

  std::ifstream tsv(d1 / "results.tsv");
  std::string header, line;
  std::getline(tsv, header);
  const auto cols = std::count(header.begin(), header.end(), '\t') + 1;
  int rows = 0;
  while (std::getline(tsv, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), '\t') + 1, cols);
    ++rows;
  }
  EXPECT_EQ(rows, 2);
  int error_files = 0;
  for (const auto& e : fs::directory_iterator(d1 / "errors")) error_files += e.path().extension() == ".txt";
  EXPECT_EQ(error_files, 4);
}

TEST(Evaluation, OraclePoseHasZeroError) {
  SimConfig cfg;
  cfg.episode.duration = 3.0;
  cfg.episode.oracle_estimator = true;
  cfg.eval.runs_per_pair = 1;
  const auto d = scratch("oracle");
  const EvalResult r =
      evaluate(make_scenarios({"corridor"}, cfg), {ControllerSpec::static_mpc(1000)}, cfg, eopts(d, 1));
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_LT(r.rows[0].ape_mean_median, 1e-9);
}

TEST(Evaluation, QuantilesMatchSortedOracle) {
  const std::vector<double> v{5, 1, 4, 2, 3};
  EXPECT_DOUBLE_EQ(median(v), 3.0);
  EXPECT_DOUBLE_EQ(quantile(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile(v, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(quantile(v, 0.25), 2.0);
  EXPECT_DOUBLE_EQ(median(std::vector<double>{1, 2, 3, 4}), 2.5);
}

TEST(Evaluation, LostRunsRankBehindEveryFinishedRun) {
  EvalRun lost;
  lost.status = EpisodeStatus::Lost;
  lost.metrics.ape_rmse = 0.01;
  EvalRun ok;
  ok.status = EpisodeStatus::Completed;
  ok.metrics.ape_rmse = 50.0;
  EXPECT_GT(lost.ranked_ape(), ok.ranked_ape());
}
