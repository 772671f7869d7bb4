#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "nwhead/calibration.hpp"
#include "nwhead/influence.hpp"
#include "nwhead/reports.hpp"
#include "nwhead/support_modes.hpp"

using namespace nwhead;
using fixture::cli;
using fixture::read_json;
using nlohmann::json;

namespace {

const fixture::Workspace& ws() {
  static const fixture::Workspace w;
  return w;
}

}  // namespace

TEST(CliUsage, BadInvocationsExitTwo) {
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(cli({"train", "--seed", "1", "--out", "x.json"}).code, kExitUsage);  // no --data
  EXPECT_EQ(cli({"eval", "--checkpoint", ws().checkpoint, "--data", ws().data, "--mode", "nope",
                 "--out", "x"}).code,
            kExitUsage);
  const auto r = cli({"eval", "--checkpoint", ws().checkpoint, "--data", ws().data, "--mode",
                      "random", "--k", "2", "--out", "x"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("--seed"), std::string::npos);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
  EXPECT_EQ(cli({"--version"}).code, kExitOk);
}

TEST(CliUsage, ExitCodeMapping) {
  EXPECT_EQ(exit_code_for(ErrorCode::kParse), kExitData);
  EXPECT_EQ(exit_code_for(ErrorCode::kInsufficientClassPopulation), kExitData);
  EXPECT_EQ(exit_code_for(ErrorCode::kNumericalFailure), kExitNumerical);
  EXPECT_EQ(exit_code_for(ErrorCode::kInvalidTemperature), kExitUsage);
}

TEST(CliGenerate, WritesDatasetAndManifest) {
  fixture::TempDir dir;
  const auto out = dir / "g.csv";
  ASSERT_EQ(cli({"generate", "blobs", "--classes", "4", "--per-class", "10", "--seed", "2",
                 "--fractions", "0.6,0.2,0.2", "--out", out}).code,
            kExitOk);
  const Dataset ds = load_csv(out);
  EXPECT_EQ(ds.examples.size(), 40u);
  EXPECT_EQ(ds.count(Split::kVal), 8u);
  const json m = read_json(out + ".manifest.json");
  EXPECT_EQ(m["command"], "generate");
  EXPECT_EQ(m["seed"], 2);
  EXPECT_EQ(m["version"], kVersion);
  EXPECT_EQ(m["artifacts"][0], out);
  EXPECT_TRUE(m["wall_clock_seconds"].is_number());
  EXPECT_EQ(cli({"generate", "rings", "--seed", "1", "--out", dir / "r.csv"}).code, kExitOk);
  EXPECT_EQ(cli({"generate", "blobs", "--out", dir / "r.csv"}).code, kExitUsage);
}

TEST(CliSplit, TagsDataset) {
  fixture::TempDir dir;
  save_csv(generate_blobs({2, 10, 2, 6.0, 1.0, 0}), dir / "raw.csv");
  ASSERT_EQ(cli({"split", "--data", dir / "raw.csv", "--fractions", "0.8,0.1,0.1", "--seed", "1",
                 "--out", dir / "s.csv"}).code,
            kExitOk);
  EXPECT_EQ(load_csv(dir / "s.csv").count(Split::kTest), 2u);
  EXPECT_EQ(cli({"split", "--data", dir / "raw.csv", "--fractions", "0.5,0.5", "--seed", "1",
                 "--out", dir / "s.csv"}).code,
            kExitUsage);
  EXPECT_EQ(cli({"split", "--data", dir / "raw.csv", "--fractions", "0.9,0.05,0.05", "--seed",
                 "1", "--out", dir / "s.csv"}).code,
            kExitData);
}

TEST(CliTrain, ZeroStepsSavesInitialization) {
  fixture::TempDir dir;
  const auto out = dir / "m.json";
  ASSERT_EQ(cli({"train", "--data", ws().data, "--steps", "0", "--seed", "8", "--hidden", "5,4",
                 "--dim", "3", "--out", out}).code,
            kExitOk);
  TrainConfig cfg;
  cfg.seed = 8;
  cfg.hidden = {5, 4};
  cfg.embed_dim = 3;
  cfg.steps = 0;
  const Trainer t(ws().dataset.subset(Split::kTrain), {}, 3, cfg);
  EXPECT_EQ(load_checkpoint(out).model.flatten(), t.model().flatten());
  EXPECT_EQ(fixture::slurp(out + ".log.jsonl"), "");
  const json m = read_json(out + ".manifest.json");
  EXPECT_EQ(m["command"], "train");
  EXPECT_EQ(m["config"]["hidden"], json({5, 4}));
  EXPECT_EQ(m["artifacts"].size(), 2u);
}

TEST(CliTrain, IsDeterministicAndLogsValidation) {
  fixture::TempDir dir;
  const std::vector<std::string> base{"train", "--data", ws().data, "--steps", "30", "--seed",
                                      "4", "--log-every", "10", "--hidden", "8"};
  auto a = base, b = base;
  a.insert(a.end(), {"--out", dir / "a.json"});
  b.insert(b.end(), {"--out", dir / "b.json", "--log", dir / "b.log"});
  ASSERT_EQ(cli(a).code, kExitOk);
  ASSERT_EQ(cli(b).code, kExitOk);
  EXPECT_EQ(fixture::slurp(dir / "a.json"), fixture::slurp(dir / "b.json"));
  EXPECT_EQ(fixture::slurp(dir / "a.json.log.jsonl"), fixture::slurp(dir / "b.log"));
  std::istringstream log(fixture::slurp(dir / "b.log"));
  std::string line;
  int lines = 0, with_val = 0;
  json last;
  while (std::getline(log, line)) {
    last = json::parse(line);
    ++lines;
    with_val += last.contains("val_error");
  }
  EXPECT_EQ(lines, 30);
  EXPECT_EQ(with_val, 3);
  EXPECT_EQ(last["step"], 30);
}

TEST(CliTrain, DivergenceExitsFour) {
  fixture::TempDir dir;
  const auto r = cli({"train", "--data", ws().data, "--head", "fc", "--lr", "1e200",
                      "--momentum", "0", "--steps", "50", "--seed", "1", "--out", dir / "d.json"});
  EXPECT_EQ(r.code, kExitNumerical);
  EXPECT_FALSE(std::filesystem::exists(dir / "d.json"));
  EXPECT_NE(fixture::slurp(dir / "d.json.log.jsonl").find("\"error\""), std::string::npos);
}

TEST(CliEval, ReportMatchesLibrary) {
  fixture::TempDir dir;
  const auto out = dir / "e.json";
  ASSERT_EQ(cli({"eval", "--checkpoint", ws().checkpoint, "--data", ws().data, "--out", out,
                 "--support-out", dir / "s.csv", "--tau", "0.8", "--bins", "10"}).code,
            kExitOk);
  const json rep = read_json(out);
  const Dataset emb = embed_dataset(ws().ckpt.model.extractor, ws().dataset);
  const SupportSet s = build_support(emb.subset(Split::kTrain), 3, InferenceMode::full());
  const auto summary = evaluate(s, emb.subset(Split::kTest), 0.8, 10);
  EXPECT_EQ(rep, eval_to_json(summary, {InferenceMode::full(), 0.8, 10, 10}, "test"));
  std::size_t total = 0;
  for (const auto& b : rep["reliability"]["bins"]) total += b["count"].get<std::size_t>();
  EXPECT_EQ(total, ws().dataset.count(Split::kTest));
  EXPECT_TRUE(rep["k"].is_null());
  EXPECT_EQ(load_support_csv(dir / "s.csv", 3).size(), s.size());
  EXPECT_EQ(read_json(out + ".manifest.json")["artifacts"].size(), 2u);
}

TEST(CliEval, ClusterAtFullPopulationEqualsFull) {
  fixture::TempDir dir;
  const std::size_t per_class = ws().dataset.count(Split::kTrain) / 3;
  ASSERT_EQ(cli({"eval", "--checkpoint", ws().checkpoint, "--data", ws().data, "--out",
                 dir / "f.json"}).code,
            kExitOk);
  ASSERT_EQ(cli({"eval", "--checkpoint", ws().checkpoint, "--data", ws().data, "--mode",
                 "cluster", "--k", std::to_string(per_class), "--seed", "3", "--out",
                 dir / "c.json"}).code,
            kExitOk);
  EXPECT_EQ(read_json(dir / "f.json")["error_rate"], read_json(dir / "c.json")["error_rate"]);
  EXPECT_NEAR(read_json(dir / "f.json")["ece"].get<double>(),
              read_json(dir / "c.json")["ece"].get<double>(), 1e-12);
}

TEST(CliEval, SelfEvaluationAtTinyTemperature) {
  fixture::TempDir dir;
  ASSERT_EQ(cli({"eval", "--checkpoint", ws().checkpoint, "--data", ws().data, "--split",
                 "train", "--tau", "1e-6", "--out", dir / "e.json"}).code,
            kExitOk);
  EXPECT_EQ(read_json(dir / "e.json")["error_rate"], 0.0);
}

TEST(CliEval, DataErrorsExitThree) {
  fixture::TempDir dir;
  std::ofstream(dir / "bad.csv") << "id,label,f0\na,0,1\nb,0\n";
  EXPECT_EQ(cli({"eval", "--checkpoint", ws().checkpoint, "--data", dir / "bad.csv", "--out",
                 dir / "e.json"}).code,
            kExitData);
  std::ofstream(dir / "wide.csv") << "id,label,f0,f1,f2\na,0,1,2,3\n";
  EXPECT_EQ(cli({"eval", "--checkpoint", ws().checkpoint, "--data", dir / "wide.csv", "--out",
                 dir / "e.json"}).code,
            kExitData);
  EXPECT_EQ(cli({"eval", "--checkpoint", dir / "missing.json", "--data", ws().data, "--out",
                 dir / "e.json"}).code,
            kExitData);
  EXPECT_EQ(cli({"eval", "--checkpoint", ws().checkpoint, "--data", ws().data, "--mode", "random",
                 "--k", "1000", "--seed", "1", "--out", dir / "e.json"}).code,
            kExitData);
}

TEST(CliSweep, SingleRowEqualsEval) {
  fixture::TempDir dir;
  ASSERT_EQ(cli({"sweep-k", "--checkpoint", ws().checkpoint, "--data", ws().data, "--modes",
                 "random", "--ks", "3", "--seed", "11", "--out", dir / "t.json"}).code,
            kExitOk);
  ASSERT_EQ(cli({"eval", "--checkpoint", ws().checkpoint, "--data", ws().data, "--mode",
                 "random", "--k", "3", "--seed", "11", "--out", dir / "e.json"}).code,
            kExitOk);
  ASSERT_EQ(cli({"eval", "--checkpoint", ws().checkpoint, "--data", ws().data, "--out",
                 dir / "f.json"}).code,
            kExitOk);
  const json t = read_json(dir / "t.json");
  ASSERT_EQ(t["rows"].size(), 1u);
  EXPECT_EQ(t["rows"][0], read_json(dir / "e.json"));
  EXPECT_EQ(t["full"], read_json(dir / "f.json"));
  ASSERT_EQ(cli({"sweep-k", "--checkpoint", ws().checkpoint, "--data", ws().data, "--ks", "1,2",
                 "--seed", "11", "--out", dir / "t2.json"}).code,
            kExitOk);
  EXPECT_EQ(read_json(dir / "t2.json")["rows"].size(), 6u);
}

TEST(CliInfluence, MatchesLibraryRanking) {
  fixture::TempDir dir;
  const Dataset emb = embed_dataset(ws().ckpt.model.extractor, ws().dataset);
  const auto query = emb.subset(Split::kTest)[3];
  ASSERT_EQ(cli({"influence", "--checkpoint", ws().checkpoint, "--data", ws().data, "--query-id",
                 query.id, "--top", "4", "--out", dir / "i.json"}).code,
            kExitOk);
  const json rep = read_json(dir / "i.json");
  const SupportSet s = build_support(emb.subset(Split::kTrain), 3, InferenceMode::full());
  const auto ranked = rank_influence(query, s, 1.0);
  std::vector<InfluenceRecord> same, diff;
  for (const auto& r : ranked) (r.same_class ? same : diff).push_back(r);
  ASSERT_EQ(rep["helpful"].size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(rep["helpful"][i]["support_id"], same[i].support_id);
    EXPECT_EQ(rep["helpful"][i]["influence"], extended_real(same[i].influence));
    EXPECT_EQ(rep["helpful"][i]["same_class"], true);
    EXPECT_EQ(rep["harmful"][i]["support_id"], diff[diff.size() - 1 - i].support_id);
    EXPECT_EQ(rep["harmful"][i]["influence"], extended_real(diff[diff.size() - 1 - i].influence));
    EXPECT_EQ(rep["harmful"][i]["same_class"], false);
  }
  EXPECT_TRUE(rep["warnings"].empty());
}

TEST(CliInfluence, TopIsClampedWithWarning) {
  fixture::TempDir dir;
  const auto id = ws().dataset.subset(Split::kTest)[0].id;
  const auto r = cli({"influence", "--checkpoint", ws().checkpoint, "--data", ws().data,
                      "--query-id", id, "--mode", "random", "--k", "2", "--seed", "1", "--top",
                      "50", "--out", dir / "i.json"});
  ASSERT_EQ(r.code, kExitOk);
  EXPECT_NE(r.err.find("clamped"), std::string::npos);
  const json rep = read_json(dir / "i.json");
  EXPECT_EQ(rep["top"], 6);
  EXPECT_EQ(rep["helpful"].size() + rep["harmful"].size(), 6u);
  EXPECT_EQ(rep["warnings"].size(), 1u);
}

TEST(CliInfluence, UnknownQueryExitsThree) {
  fixture::TempDir dir;
  EXPECT_EQ(cli({"influence", "--checkpoint", ws().checkpoint, "--data", ws().data,
                 "--query-id", "no-such-id", "--out", dir / "i.json"}).code,
            kExitData);
}

TEST(CliCalibrate, ReportsGridAndKeepsPredictions) {
  fixture::TempDir dir;
  ASSERT_EQ(cli({"calibrate", "--checkpoint", ws().checkpoint, "--data", ws().data, "--out",
                 dir / "c.json"}).code,
            kExitOk);
  const json rep = read_json(dir / "c.json");
  ASSERT_EQ(rep["grid"].size(), 100u);
  EXPECT_EQ(rep["grid"].front(), 0.5);
  EXPECT_EQ(rep["grid"].back(), 3.0);
  EXPECT_TRUE(rep["test"]["argmax_unchanged"].get<bool>());
  EXPECT_EQ(rep["test"]["before"]["error_rate"], rep["test"]["after"]["error_rate"]);
  EXPECT_LE(rep["val_nll_at_best"].get<double>(), rep["val_nll_at_1"].get<double>());
  EXPECT_EQ(rep["test"]["after"]["tau"], rep["best_tau"]);
}

TEST(CliCalibrate, MissingValSplitExitsThree) {
  fixture::TempDir dir;
  save_csv(ws().dataset.tagged() ? Dataset{ws().dataset.subset(Split::kTrain), 2, 3, {}}
                                 : ws().dataset,
           dir / "nv.csv");
  EXPECT_EQ(cli({"calibrate", "--checkpoint", ws().checkpoint, "--data", dir / "nv.csv", "--out",
                 dir / "c.json"}).code,
            kExitData);
  EXPECT_EQ(cli({"calibrate", "--checkpoint", ws().checkpoint, "--data", ws().data, "--lo", "2",
                 "--hi", "1", "--out", dir / "c.json"}).code,
            kExitUsage);
}
