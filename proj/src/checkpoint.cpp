#include "nwhead/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <openssl/evp.h>

#include "nwhead/error.hpp"

namespace nwhead {
namespace {

constexpr const char* kFormat = "nwhead-checkpoint";
constexpr int kVersion = 1;

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return __builtin_bswap64(v);
  }
}

}  // namespace

std::string encode_parameters(std::span<const double> values) {
  std::string raw(values.size() * sizeof(double), '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint64_t le = to_little_endian(std::bit_cast<std::uint64_t>(values[i]));
    std::memcpy(raw.data() + i * sizeof(double), &le, sizeof(le));
  }
  std::string out(4 * ((raw.size() + 2) / 3) + 1, '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(raw.data()),
                                static_cast<int>(raw.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

Vector decode_parameters(const std::string& base64) {
  if (base64.size() % 4 != 0) {
    throw Error(ErrorCode::kParse, "parameter blob is not valid base64");
  }
  std::string raw(base64.size() / 4 * 3, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(raw.data()),
                                reinterpret_cast<const unsigned char*>(base64.data()),
                                static_cast<int>(base64.size()));
  if (n < 0) throw Error(ErrorCode::kParse, "parameter blob is not valid base64");
  // EVP_DecodeBlock keeps the zero bytes that stand in for '=' padding.
  std::size_t len = static_cast<std::size_t>(n);
  if (!base64.empty() && base64.back() == '=') --len;
  if (base64.size() >= 2 && base64[base64.size() - 2] == '=') --len;
  if (len % sizeof(double) != 0) {
    throw Error(ErrorCode::kParse, "parameter blob length is not a multiple of 8 bytes");
  }
  Vector out(len / sizeof(double));
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t le = 0;
    std::memcpy(&le, raw.data() + i * sizeof(double), sizeof(le));
    out[i] = std::bit_cast<double>(to_little_endian(le));
  }
  return out;
}

nlohmann::json config_to_json(const TrainConfig& c) {
  return {
      {"batch_size", c.batch_size},
      {"support_size", c.support_size},
      {"temperature", c.temperature},
      {"lr", c.lr},
      {"momentum", c.momentum},
      {"weight_decay", c.weight_decay},
      {"steps", c.steps},
      {"lr_decay_steps", c.lr_decay_steps},
      {"seed", c.seed},
      {"head", head_kind_name(c.head)},
      {"label_smoothing", c.label_smoothing},
      {"hidden", c.hidden},
      {"embed_dim", c.embed_dim},
      {"shared_support", c.shared_support},
      {"log_every", c.log_every},
  };
}

TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.support_size = j.at("support_size").get<std::size_t>();
  c.temperature = j.at("temperature").get<double>();
  c.lr = j.at("lr").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.steps = j.at("steps").get<std::size_t>();
  c.lr_decay_steps = j.at("lr_decay_steps").get<std::vector<std::size_t>>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.head = parse_head_kind(j.at("head").get<std::string>());
  c.label_smoothing = j.at("label_smoothing").get<double>();
  c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.shared_support = j.at("shared_support").get<bool>();
  c.log_every = j.at("log_every").get<std::size_t>();
  return c;
}

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt) {
  const Vector flat = ckpt.model.flatten();
  return {
      {"format", kFormat},
      {"version", kVersion},
      {"head", head_kind_name(ckpt.model.head)},
      {"dims", ckpt.model.extractor.dims()},
      {"class_count", ckpt.class_count},
      {"seed", ckpt.config.seed},
      {"config", config_to_json(ckpt.config)},
      {"parameter_count", flat.size()},
      {"parameters", encode_parameters(flat)},
  };
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kFormat || j.at("version").get<int>() != kVersion) {
      throw Error(ErrorCode::kParse, "not a version-1 nwhead checkpoint");
    }
    Checkpoint ckpt;
    ckpt.config = config_from_json(j.at("config"));
    ckpt.class_count = j.at("class_count").get<int>();
    const auto dims = j.at("dims").get<std::vector<std::size_t>>();
    if (dims.size() < 2) throw Error(ErrorCode::kParse, "checkpoint dims need input and embedding");

    // Shapes only; values come from the blob.
    std::mt19937_64 rng(0);
    const std::vector<std::size_t> hidden(dims.begin() + 1, dims.end() - 1);
    ckpt.model.head = parse_head_kind(j.at("head").get<std::string>());
    ckpt.model.extractor = ExtractorModel::initialize(dims.front(), hidden, dims.back(), rng);
    if (ckpt.model.head == HeadKind::kFc) {
      ckpt.model.classifier = ExtractorModel::initialize(
          dims.back(), {}, static_cast<std::size_t>(ckpt.class_count), rng).layers.front();
    }
    const Vector flat = decode_parameters(j.at("parameters").get<std::string>());
    if (flat.size() != j.at("parameter_count").get<std::size_t>()) {
      throw Error(ErrorCode::kParse, "parameter_count does not match the blob");
    }
    ckpt.model.assign(flat);
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("malformed checkpoint: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kParse) throw;
    throw Error(ErrorCode::kParse, std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << checkpoint_to_json(ckpt).dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  try {
    return checkpoint_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
  }
}

}  // namespace nwhead
