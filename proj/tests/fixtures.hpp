#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "json.hpp"

#include "nwhead/checkpoint.hpp"
#include "nwhead/cli.hpp"
#include "nwhead/dataset.hpp"
#include "nwhead/trainer.hpp"

namespace fixture {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("nwhead-" + std::to_string(rd()) + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline nlohmann::json read_json(const std::string& path) { return nlohmann::json::parse(slurp(path)); }

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

inline CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "nw");
  std::ostringstream out, err;
  const int code = nwhead::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

// A tagged 3-class blob dataset and a briefly trained NW checkpoint on disk.
struct Workspace {
  TempDir dir;
  std::string data = dir / "blobs.csv";
  std::string checkpoint = dir / "model.json";
  nwhead::Dataset dataset;
  nwhead::Checkpoint ckpt;

  explicit Workspace(std::size_t steps = 60, std::size_t per_class = 20) {
    dataset = nwhead::split(nwhead::generate_blobs({3, per_class, 2, 3.0, 1.5, 5}), {0.6, 0.2, 0.2}, 5);
    nwhead::save_csv(dataset, data);
    nwhead::TrainConfig cfg;
    cfg.steps = steps;
    cfg.hidden = {16};
    cfg.embed_dim = 3;
    cfg.lr = 0.01;
    cfg.seed = 3;
    cfg.log_every = 0;
    const auto r = nwhead::train(dataset.subset(nwhead::Split::kTrain), {}, dataset.class_count, cfg);
    ckpt = {r.model, cfg, dataset.class_count};
    nwhead::save_checkpoint(ckpt, checkpoint);
  }
};

}  // namespace fixture
