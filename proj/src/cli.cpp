#include "nwhead/cli.hpp"

#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "nwhead/calibration.hpp"
#include "nwhead/checkpoint.hpp"
#include "nwhead/dataset.hpp"
#include "nwhead/inspector.hpp"
#include "nwhead/nw_core.hpp"
#include "nwhead/reports.hpp"
#include "nwhead/support_modes.hpp"
#include "nwhead/trainer.hpp"

namespace nwhead {
namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out << text;
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// One manifest per command, next to its primary output.
void write_manifest(const std::string& out_path, const std::string& command, const json& config,
                    std::optional<std::uint64_t> seed, const std::vector<std::string>& artifacts,
                    Clock::time_point started) {
  const double wall = std::chrono::duration<double>(Clock::now() - started).count();
  write_json(out_path + ".manifest.json",
             {{"command", command},
              {"config", config},
              {"seed", seed ? json(*seed) : json(nullptr)},
              {"artifacts", artifacts},
              {"wall_clock_seconds", wall},
              {"version", kVersion}});
}

struct ModeFlags {
  std::string mode = "full";
  std::size_t k = 1;
  std::optional<std::uint64_t> seed;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--mode", mode, "Support mode: full, random, cluster or cc")
        ->check(CLI::IsMember({"full", "random", "cluster", "cc"}));
    cmd->add_option("--k", k, "Support entries per class (random, cluster, cc)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", seed, "Seed for randomized support modes");
  }

  InferenceMode resolve() const { return resolve(parse_mode_kind(mode), k); }

  InferenceMode resolve(InferenceMode::Kind kind, std::size_t kk) const {
    if (kind != InferenceMode::Kind::kFull && !seed) {
      throw UsageError("--seed is required for mode " + mode_kind_name(kind));
    }
    return {kind, kk, seed.value_or(0)};
  }
};

struct Loaded {
  Checkpoint checkpoint;
  Dataset dataset;
  Dataset embedded;
};

Loaded load_inputs(const std::string& checkpoint_path, const std::string& data_path) {
  Loaded l;
  l.checkpoint = load_checkpoint(checkpoint_path);
  l.dataset = load_csv(data_path);
  if (l.dataset.dim != l.checkpoint.model.extractor.input_dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "dataset has dimension " + std::to_string(l.dataset.dim) + ", checkpoint expects " +
                    std::to_string(l.checkpoint.model.extractor.input_dim()));
  }
  if (l.dataset.class_count > l.checkpoint.class_count) {
    throw Error(ErrorCode::kDimensionMismatch,
                "dataset has " + std::to_string(l.dataset.class_count) +
                    " classes, checkpoint was trained on " +
                    std::to_string(l.checkpoint.class_count));
  }
  l.embedded = embed_dataset(l.checkpoint.model.extractor, l.dataset);
  return l;
}

SupportSet support_for(const Dataset& embedded, const InferenceMode& mode, std::ostream& err) {
  std::vector<std::string> warnings;
  SupportSet s = build_support(embedded.subset(Split::kTrain), embedded.class_count, mode, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << '\n';
  return s;
}

std::vector<LabeledExample> queries_for(const Dataset& embedded, const std::string& split) {
  auto q = embedded.subset(parse_split(split));
  if (q.empty()) throw Error(ErrorCode::kEmptyInput, "dataset has no '" + split + "' split");
  return q;
}

// FC-classifier metrics for checkpoints that carry one.
json fc_metrics(const Loaded& l, const std::string& split, std::size_t bins) {
  std::vector<PredictionResult> preds;
  std::vector<int> labels;
  std::size_t wrong = 0;
  for (const auto& q : l.dataset.subset(parse_split(split))) {
    PredictionResult p;
    p.query_id = q.id;
    p.probs = fc_predict(l.checkpoint.model, q.features);
    if (p.predicted_class() != q.label) ++wrong;
    preds.push_back(std::move(p));
    labels.push_back(q.label);
  }
  const auto rel = expected_calibration_error(preds, labels, bins);
  return {{"error_rate", static_cast<double>(wrong) / static_cast<double>(preds.size())},
          {"ece", rel.ece}};
}

std::array<double, 3> parse_fractions(const std::vector<double>& f) {
  if (f.size() != 3) throw UsageError("--fractions takes three values: train,val,test");
  return {f[0], f[1], f[2]};
}

}  // namespace

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kInvalidTemperature:
    case ErrorCode::kInvalidGrid:
      return kExitUsage;
    case ErrorCode::kNumericalFailure:
    case ErrorCode::kDegenerateWeight:
      return kExitNumerical;
    default:
      return kExitData;
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Nadaraya-Watson head: train, evaluate, attribute and calibrate", "nw"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  const auto started = Clock::now();

  // generate
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset");
  std::string gen_kind;
  BlobParams blobs;
  RingParams rings;
  std::vector<double> gen_fractions;
  std::optional<std::uint64_t> gen_seed;
  std::string gen_out;
  gen->add_option("kind", gen_kind, "blobs or rings")->required()->check(CLI::IsMember({"blobs", "rings"}));
  gen->add_option("--classes", blobs.class_count, "Blob classes")->check(CLI::PositiveNumber);
  gen->add_option("--per-class", blobs.per_class, "Examples per class")->check(CLI::PositiveNumber);
  gen->add_option("--dim", blobs.dim, "Blob dimension")->check(CLI::PositiveNumber);
  gen->add_option("--separation", blobs.separation, "Minimum distance between blob centers");
  gen->add_option("--noise", blobs.noise_sd, "Noise standard deviation");
  gen->add_option("--fractions", gen_fractions, "Stratified train,val,test fractions")->delimiter(',');
  gen->add_option("--seed", gen_seed, "Generator (and split) seed")->required();
  gen->add_option("--out", gen_out, "Output CSV")->required();

  // split
  auto* spl = app.add_subcommand("split", "Tag a dataset with a stratified train/val/test split");
  std::string spl_data, spl_out;
  std::vector<double> spl_fractions;
  std::optional<std::uint64_t> spl_seed;
  spl->add_option("--data", spl_data, "Input CSV")->required();
  spl->add_option("--fractions", spl_fractions, "train,val,test fractions")->delimiter(',')->required();
  spl->add_option("--seed", spl_seed, "Shuffle seed")->required();
  spl->add_option("--out", spl_out, "Output CSV")->required();

  // train
  auto* trn = app.add_subcommand("train", "Train a feature extractor");
  std::string trn_data, trn_out, trn_head = "nw", trn_log;
  TrainConfig cfg;
  std::optional<std::uint64_t> trn_seed;
  trn->add_option("--data", trn_data, "Dataset CSV (train split, val split for logging)")->required();
  trn->add_option("--head", trn_head, "nw or fc")->check(CLI::IsMember({"nw", "fc"}));
  trn->add_option("--ns", cfg.support_size, "Support size per episode");
  trn->add_option("--nb", cfg.batch_size, "Queries per mini-batch");
  trn->add_option("--lr", cfg.lr, "Initial learning rate");
  trn->add_option("--momentum", cfg.momentum, "SGD momentum");
  trn->add_option("--wd", cfg.weight_decay, "Weight decay (L2 in the gradient)");
  trn->add_option("--steps", cfg.steps, "Gradient steps");
  trn->add_option("--decay", cfg.lr_decay_steps, "Steps at which lr is divided by 10")->delimiter(',');
  trn->add_option("--tau", cfg.temperature, "Training temperature");
  trn->add_option("--ls", cfg.label_smoothing, "Label smoothing epsilon");
  trn->add_option("--hidden", cfg.hidden, "Hidden layer widths")->delimiter(',');
  trn->add_option("--dim", cfg.embed_dim, "Embedding dimension");
  trn->add_flag("--shared-support", cfg.shared_support, "One support set per mini-batch");
  trn->add_option("--log-every", cfg.log_every, "Validate every N steps (0: final step only)");
  trn->add_option("--seed", trn_seed, "Initialization and sampling seed")->required();
  trn->add_option("--out", trn_out, "Checkpoint path")->required();
  trn->add_option("--log", trn_log, "JSONL training log (default: <out>.log.jsonl)");

  // eval
  auto* evl = app.add_subcommand("eval", "Evaluate a checkpoint under an inference mode");
  std::string evl_ckpt, evl_data, evl_out, evl_split = "test", evl_support_out;
  ModeFlags evl_mode;
  double evl_tau = 1.0;
  std::size_t evl_bins = kDefaultBinCount;
  evl->add_option("--checkpoint", evl_ckpt, "Checkpoint")->required();
  evl->add_option("--data", evl_data, "Dataset CSV")->required();
  evl_mode.add_to(evl);
  evl->add_option("--tau", evl_tau, "Inference temperature")->check(CLI::PositiveNumber);
  evl->add_option("--bins", evl_bins, "Reliability bins")->check(CLI::PositiveNumber);
  evl->add_option("--split", evl_split, "Query split")->check(CLI::IsMember({"train", "val", "test"}));
  evl->add_option("--support-out", evl_support_out, "Also write the support set CSV");
  evl->add_option("--out", evl_out, "Report JSON")->required();

  // sweep-k
  auto* swp = app.add_subcommand("sweep-k", "Error and ECE across support sizes");
  std::string swp_ckpt, swp_data, swp_out, swp_split = "test";
  std::vector<std::string> swp_modes{"random", "cluster", "cc"};
  std::vector<std::size_t> swp_ks{1, 2, 4, 8};
  std::optional<std::uint64_t> swp_seed;
  double swp_tau = 1.0;
  std::size_t swp_bins = kDefaultBinCount;
  swp->add_option("--checkpoint", swp_ckpt, "Checkpoint")->required();
  swp->add_option("--data", swp_data, "Dataset CSV")->required();
  swp->add_option("--modes", swp_modes, "Modes to sweep")->delimiter(',')
      ->check(CLI::IsMember({"random", "cluster", "cc"}));
  swp->add_option("--ks", swp_ks, "k values")->delimiter(',');
  swp->add_option("--seed", swp_seed, "Support seed")->required();
  swp->add_option("--tau", swp_tau, "Inference temperature")->check(CLI::PositiveNumber);
  swp->add_option("--bins", swp_bins, "Reliability bins")->check(CLI::PositiveNumber);
  swp->add_option("--split", swp_split, "Query split")->check(CLI::IsMember({"train", "val", "test"}));
  swp->add_option("--out", swp_out, "Table JSON")->required();

  // influence
  auto* inf = app.add_subcommand("influence", "Most helpful and harmful support entries for a query");
  std::string inf_ckpt, inf_data, inf_query, inf_out;
  ModeFlags inf_mode;
  double inf_tau = 1.0;
  std::size_t inf_top = 5;
  inf->add_option("--checkpoint", inf_ckpt, "Checkpoint")->required();
  inf->add_option("--data", inf_data, "Dataset CSV")->required();
  inf->add_option("--query-id", inf_query, "Query example id")->required();
  inf_mode.add_to(inf);
  inf->add_option("--tau", inf_tau, "Inference temperature")->check(CLI::PositiveNumber);
  inf->add_option("--top", inf_top, "Entries per side")->check(CLI::PositiveNumber);
  inf->add_option("--out", inf_out, "Report JSON")->required();

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "Temperature scaling on the val split");
  std::string cal_ckpt, cal_data, cal_out;
  ModeFlags cal_mode;
  TemperatureGrid grid;
  std::size_t cal_bins = kDefaultBinCount;
  cal->add_option("--checkpoint", cal_ckpt, "Checkpoint")->required();
  cal->add_option("--data", cal_data, "Dataset CSV with val split")->required();
  cal_mode.add_to(cal);
  cal->add_option("--lo", grid.lo, "Grid start");
  cal->add_option("--hi", grid.hi, "Grid end");
  cal->add_option("--grid-steps", grid.steps, "Grid size");
  cal->add_option("--bins", cal_bins, "Reliability bins")->check(CLI::PositiveNumber);
  cal->add_option("--out", cal_out, "Report JSON")->required();

  // serve
  auto* srv = app.add_subcommand("serve", "Run the support-set inspector API");
  std::string srv_ckpt, srv_data, srv_host = "127.0.0.1", srv_static, srv_cors = "*";
  int srv_port = 8080;
  double srv_tau = 1.0;
  srv->add_option("--checkpoint", srv_ckpt, "Checkpoint")->required();
  srv->add_option("--data", srv_data, "Dataset CSV")->required();
  srv->add_option("--host", srv_host, "Bind address");
  srv->add_option("--port", srv_port, "Port (0 picks a free one)");
  srv->add_option("--tau", srv_tau, "Initial temperature")->check(CLI::PositiveNumber);
  srv->add_option("--static-dir", srv_static, "Built UI assets to serve at /");
  srv->add_option("--cors-origin", srv_cors, "Access-Control-Allow-Origin value");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) {
      blobs.seed = *gen_seed;
      rings.seed = *gen_seed;
      rings.per_class = blobs.per_class;
      rings.noise_sd = gen->count("--noise") ? blobs.noise_sd : rings.noise_sd;
      Dataset ds = gen_kind == "blobs" ? generate_blobs(blobs) : generate_rings(rings);
      if (!gen_fractions.empty()) ds = split(ds, parse_fractions(gen_fractions), *gen_seed);
      save_csv(ds, gen_out);
      json config{{"kind", gen_kind}, {"classes", ds.class_count}, {"per_class", blobs.per_class},
                  {"dim", ds.dim}, {"fractions", gen_fractions}};
      if (gen_kind == "blobs") {
        config["separation"] = blobs.separation;
        config["noise"] = blobs.noise_sd;
      } else {
        config["noise"] = rings.noise_sd;
      }
      write_manifest(gen_out, "generate", config, *gen_seed, {gen_out}, started);
      out << "wrote " << ds.examples.size() << " examples to " << gen_out << '\n';
      return kExitOk;
    }

    if (spl->parsed()) {
      const Dataset ds = split(load_csv(spl_data), parse_fractions(spl_fractions), *spl_seed);
      save_csv(ds, spl_out);
      write_manifest(spl_out, "split", {{"data", spl_data}, {"fractions", spl_fractions}},
                     *spl_seed, {spl_out}, started);
      out << "train=" << ds.count(Split::kTrain) << " val=" << ds.count(Split::kVal)
          << " test=" << ds.count(Split::kTest) << '\n';
      return kExitOk;
    }

    if (trn->parsed()) {
      cfg.seed = *trn_seed;
      cfg.head = parse_head_kind(trn_head);
      if (trn_log.empty()) trn_log = trn_out + ".log.jsonl";
      const Dataset ds = load_csv(trn_data);
      const auto train_set = ds.subset(Split::kTrain);
      const auto val_set = ds.subset(Split::kVal);
      if (train_set.empty()) throw Error(ErrorCode::kEmptyInput, "dataset has no train split");

      Trainer trainer(train_set, val_set, ds.class_count, cfg);
      std::ofstream log(trn_log, std::ios::binary);
      if (!log) throw Error(ErrorCode::kIo, "cannot write " + trn_log);
      try {
        for (std::size_t s = 0; s < cfg.steps; ++s) {
          const StepReport rep = trainer.step();
          TrainLogEntry entry{trainer.steps_taken(), rep.lr, rep.loss, std::nullopt, std::nullopt};
          const bool last = s + 1 == cfg.steps;
          if (!val_set.empty() &&
              (last || (cfg.log_every > 0 && trainer.steps_taken() % cfg.log_every == 0))) {
            std::tie(entry.val_error, entry.val_ece) = trainer.validate();
          }
          log << to_json(entry).dump() << '\n';
        }
      } catch (const Error& e) {
        log << json{{"step", trainer.steps_taken()}, {"error", e.what()}}.dump() << '\n';
        throw;
      }
      save_checkpoint({trainer.model(), cfg, ds.class_count}, trn_out);
      json config = config_to_json(cfg);
      config["data"] = trn_data;
      write_manifest(trn_out, "train", config, cfg.seed, {trn_out, trn_log}, started);
      out << "trained " << cfg.steps << " steps; checkpoint " << trn_out << '\n';
      return kExitOk;
    }

    if (evl->parsed()) {
      const Loaded l = load_inputs(evl_ckpt, evl_data);
      const EvalOptions opts{evl_mode.resolve(), evl_tau, evl_bins, 10};
      const SupportSet support = support_for(l.embedded, opts.mode, err);
      const auto queries = queries_for(l.embedded, evl_split);
      json report = eval_to_json(evaluate(support, queries, evl_tau, evl_bins), opts, evl_split);
      if (l.checkpoint.model.classifier) report["fc"] = fc_metrics(l, evl_split, evl_bins);
      write_json(evl_out, report);
      std::vector<std::string> artifacts{evl_out};
      if (!evl_support_out.empty()) {
        save_support_csv(support, evl_support_out);
        artifacts.push_back(evl_support_out);
      }
      write_manifest(evl_out, "eval",
                     {{"checkpoint", evl_ckpt}, {"data", evl_data}, {"mode", evl_mode.mode},
                      {"k", evl_mode.k}, {"tau", evl_tau}, {"bins", evl_bins}, {"split", evl_split}},
                     evl_mode.seed, artifacts, started);
      out << report.dump(2) << '\n';
      return kExitOk;
    }

    if (swp->parsed()) {
      const Loaded l = load_inputs(swp_ckpt, swp_data);
      const auto queries = queries_for(l.embedded, swp_split);
      ModeFlags flags;
      flags.seed = swp_seed;
      auto row = [&](const InferenceMode& mode) {
        const EvalOptions opts{mode, swp_tau, swp_bins, 10};
        const SupportSet support = support_for(l.embedded, mode, err);
        return eval_to_json(evaluate(support, queries, swp_tau, swp_bins), opts, swp_split);
      };
      json rows = json::array();
      for (const auto& m : swp_modes) {
        for (std::size_t k : swp_ks) rows.push_back(row(flags.resolve(parse_mode_kind(m), k)));
      }
      const json table{{"full", row(InferenceMode::full())}, {"rows", rows}};
      write_json(swp_out, table);
      write_manifest(swp_out, "sweep-k",
                     {{"checkpoint", swp_ckpt}, {"data", swp_data}, {"modes", swp_modes},
                      {"ks", swp_ks}, {"tau", swp_tau}, {"bins", swp_bins}, {"split", swp_split}},
                     swp_seed, {swp_out}, started);
      out << table.dump(2) << '\n';
      return kExitOk;
    }

    if (inf->parsed()) {
      const Loaded l = load_inputs(inf_ckpt, inf_data);
      const auto idx = l.embedded.find(inf_query);
      if (!idx) throw Error(ErrorCode::kNotFound, "unknown query id '" + inf_query + "'");
      const SupportSet support = support_for(l.embedded, inf_mode.resolve(), err);
      const InfluenceView view = influence_view(l.embedded.examples[*idx], support, inf_tau, inf_top);
      for (const auto& w : view.warnings) err << "warning: " << w << '\n';
      const json report = to_json(view, support);
      write_json(inf_out, report);
      write_manifest(inf_out, "influence",
                     {{"checkpoint", inf_ckpt}, {"data", inf_data}, {"query_id", inf_query},
                      {"mode", inf_mode.mode}, {"k", inf_mode.k}, {"tau", inf_tau}, {"top", inf_top}},
                     inf_mode.seed, {inf_out}, started);
      out << report.dump(2) << '\n';
      return kExitOk;
    }

    if (cal->parsed()) {
      const Loaded l = load_inputs(cal_ckpt, cal_data);
      const auto val = l.embedded.subset(Split::kVal);
      if (val.empty()) throw Error(ErrorCode::kEmptyInput, "calibration needs a val split");
      const InferenceMode mode = cal_mode.resolve();
      const SupportSet support = support_for(l.embedded, mode, err);
      const TemperatureScaleResult ts = temperature_scale(val, support, grid);

      json report{{"grid", ts.grid},
                  {"grid_size", ts.grid.size()},
                  {"val_nll", json::array()},
                  {"best_tau", ts.best_temperature},
                  {"val_nll_at_best", extended_real(mean_nll(val, support, ts.best_temperature))},
                  {"val_nll_at_1", extended_real(mean_nll(val, support, 1.0))}};
      for (double v : ts.nll) report["val_nll"].push_back(extended_real(v));
      const auto test = l.embedded.subset(Split::kTest);
      if (!test.empty()) {
        const EvalSummary before = evaluate(support, test, 1.0, cal_bins);
        const EvalSummary after = evaluate(support, test, ts.best_temperature, cal_bins);
        bool same_argmax = true;
        for (const auto& q : test) {
          same_argmax = same_argmax &&
                        nw_predict(q.features, support, 1.0).predicted_class() ==
                            nw_predict(q.features, support, ts.best_temperature).predicted_class();
        }
        report["test"] = {
            {"before", eval_to_json(before, {mode, 1.0, cal_bins, 10}, "test")},
            {"after", eval_to_json(after, {mode, ts.best_temperature, cal_bins, 10}, "test")},
            {"argmax_unchanged", same_argmax}};
      }
      write_json(cal_out, report);
      write_manifest(cal_out, "calibrate",
                     {{"checkpoint", cal_ckpt}, {"data", cal_data}, {"mode", cal_mode.mode},
                      {"k", cal_mode.k}, {"lo", grid.lo}, {"hi", grid.hi},
                      {"grid_steps", grid.steps}, {"bins", cal_bins}},
                     cal_mode.seed, {cal_out}, started);
      out << report.dump(2) << '\n';
      return kExitOk;
    }

    if (srv->parsed()) {
      const Checkpoint ckpt = load_checkpoint(srv_ckpt);
      const Dataset ds = load_csv(srv_data);
      ServerOptions options;
      options.cors_origin = srv_cors;
      if (!srv_static.empty()) options.static_dir = srv_static;
      InspectorServer server(options);
      server.set_session(std::make_shared<InspectorSession>(ckpt, ds, srv_tau, srv_ckpt, srv_data));
      int port = srv_port;
      if (port == 0) {
        port = server.bind_to_any_port(srv_host);
      } else if (!server.bind(srv_host, port)) {
        port = -1;
      }
      if (port < 0) throw Error(ErrorCode::kIo, "cannot bind " + srv_host + ":" + std::to_string(srv_port));
      err << "serving on http://" << srv_host << ":" << port << '\n';
      return server.listen_after_bind() ? kExitOk : kExitFailure;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error [" << error_code_name(e.code()) << "]: " << e.what() << '\n';
    return exit_code_for(e.code());
  }
  return kExitUsage;
}

}  // namespace nwhead
