#include "nwhead/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include "nwhead/error.hpp"

namespace nwhead {
namespace {

[[noreturn]] void parse_fail(const std::string& source, std::size_t line, const std::string& msg) {
  throw Error(ErrorCode::kParse, source + ":" + std::to_string(line) + ": " + msg);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

// Splits into lines, accepting LF or CRLF and dropping a UTF-8 BOM.
std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = text.rfind("\xEF\xBB\xBF", 0) == 0 ? 3 : 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = end + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

double parse_double(const std::string& field, const std::string& source, std::size_t line) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = first + field.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || field.empty() || !std::isfinite(v)) {
    parse_fail(source, line, "invalid feature value '" + field + "'");
  }
  return v;
}

int parse_label(const std::string& field, const std::string& source, std::size_t line) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty() || v < 0) {
    parse_fail(source, line, "invalid label '" + field + "'");
  }
  return v;
}

// Checks the `f0,...,f{n-1}` tail of a header starting at `first`.
std::size_t feature_columns(const std::vector<std::string>& header, std::size_t first,
                            const std::string& source) {
  if (header.size() <= first) parse_fail(source, 1, "header has no feature columns");
  for (std::size_t j = first; j < header.size(); ++j) {
    if (header[j] != "f" + std::to_string(j - first)) {
      parse_fail(source, 1, "expected column 'f" + std::to_string(j - first) + "', found '" +
                                header[j] + "'");
    }
  }
  return header.size() - first;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void append_features(std::string& out, const Vector& features) {
  for (double v : features) {
    out += ',';
    out += format_double(v);
  }
  out += '\n';
}

}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw Error(ErrorCode::kInvalidArgument, "unknown split '" + name + "'");
}

std::vector<LabeledExample> Dataset::subset(Split s) const {
  if (!tagged()) return s == Split::kTrain ? examples : std::vector<LabeledExample>{};
  std::vector<LabeledExample> out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (splits[i] == s) out.push_back(examples[i]);
  }
  return out;
}

std::size_t Dataset::count(Split s) const {
  if (!tagged()) return s == Split::kTrain ? examples.size() : 0;
  return static_cast<std::size_t>(std::count(splits.begin(), splits.end(), s));
}

std::optional<std::size_t> Dataset::find(const std::string& id) const {
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].id == id) return i;
  }
  return std::nullopt;
}

std::optional<Split> Dataset::split_of(std::size_t index) const {
  if (!tagged()) return Split::kTrain;
  return splits.at(index);
}

void Dataset::validate() const {
  if (examples.empty()) throw Error(ErrorCode::kParse, "dataset has no examples");
  if (tagged() && splits.size() != examples.size()) {
    throw Error(ErrorCode::kParse, "split tags do not align with examples");
  }
  std::set<std::string> ids;
  std::set<int> labels;
  for (const auto& ex : examples) {
    if (!ids.insert(ex.id).second) throw Error(ErrorCode::kParse, "duplicate id '" + ex.id + "'");
    if (ex.features.size() != dim) {
      throw Error(ErrorCode::kParse, "example '" + ex.id + "' has dimension " +
                                         std::to_string(ex.features.size()) + ", expected " +
                                         std::to_string(dim));
    }
    for (double v : ex.features) {
      if (!std::isfinite(v)) throw Error(ErrorCode::kParse, "example '" + ex.id + "' has a non-finite feature");
    }
    labels.insert(ex.label);
  }
  if (*labels.begin() != 0 || *labels.rbegin() != static_cast<int>(labels.size()) - 1 ||
      static_cast<int>(labels.size()) != class_count) {
    throw Error(ErrorCode::kParse, "labels must form the contiguous range [0, " +
                                       std::to_string(class_count) + ")");
  }
}

Dataset parse_csv(const std::string& text, const std::string& source_name) {
  const auto lines = split_lines(text);
  if (lines.empty()) parse_fail(source_name, 1, "empty file");
  const auto header = split_fields(lines[0]);
  if (header.size() < 2 || header[0] != "id" || header[1] != "label") {
    parse_fail(source_name, 1, "header must start with 'id,label'");
  }
  const bool tagged = header.size() > 2 && header[2] == "split";
  const std::size_t first_feature = tagged ? 3 : 2;

  Dataset ds;
  ds.dim = feature_columns(header, first_feature, source_name);
  std::unordered_map<std::string, std::size_t> seen;
  int max_label = -1;
  std::set<int> labels;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const std::size_t line_no = ln + 1;
    const auto fields = split_fields(lines[ln]);
    if (fields.size() != header.size()) {
      parse_fail(source_name, line_no, "expected " + std::to_string(header.size()) +
                                           " fields, found " + std::to_string(fields.size()));
    }
    LabeledExample ex;
    ex.id = fields[0];
    if (ex.id.empty()) parse_fail(source_name, line_no, "empty id");
    if (const auto [it, inserted] = seen.emplace(ex.id, line_no); !inserted) {
      parse_fail(source_name, line_no, "duplicate id '" + ex.id + "' (first seen on line " +
                                           std::to_string(it->second) + ")");
    }
    ex.label = parse_label(fields[1], source_name, line_no);
    if (tagged) {
      try {
        ds.splits.push_back(parse_split(fields[2]));
      } catch (const Error&) {
        parse_fail(source_name, line_no, "unknown split '" + fields[2] + "'");
      }
    }
    ex.features.reserve(ds.dim);
    for (std::size_t j = first_feature; j < fields.size(); ++j) {
      ex.features.push_back(parse_double(fields[j], source_name, line_no));
    }
    max_label = std::max(max_label, ex.label);
    labels.insert(ex.label);
    ds.examples.push_back(std::move(ex));
  }
  if (ds.examples.empty()) parse_fail(source_name, 1, "no data rows");
  if (static_cast<int>(labels.size()) != max_label + 1) {
    for (int c = 0; c <= max_label; ++c) {
      if (!labels.count(c)) {
        parse_fail(source_name, 1, "labels are not contiguous: class " + std::to_string(c) +
                                       " is missing below max label " + std::to_string(max_label));
      }
    }
  }
  ds.class_count = max_label + 1;
  return ds;
}

Dataset load_csv(const std::filesystem::path& path) {
  return parse_csv(read_file(path), path.string());
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string format_csv(const Dataset& dataset) {
  std::string out = dataset.tagged() ? "id,label,split" : "id,label";
  for (std::size_t j = 0; j < dataset.dim; ++j) out += ",f" + std::to_string(j);
  out += '\n';
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    const auto& ex = dataset.examples[i];
    out += ex.id + ',' + std::to_string(ex.label);
    if (dataset.tagged()) out += std::string(",") + split_name(dataset.splits[i]);
    append_features(out, ex.features);
  }
  return out;
}

void save_csv(const Dataset& dataset, const std::filesystem::path& path) {
  write_file(path, format_csv(dataset));
}

std::string format_support_csv(const SupportSet& support) {
  std::string out = "id,label,source";
  for (std::size_t j = 0; j < support.dim(); ++j) out += ",f" + std::to_string(j);
  out += '\n';
  for (const auto& e : support.entries()) {
    out += e.id + ',' + std::to_string(e.label) + ',' + e.source;
    append_features(out, e.features);
  }
  return out;
}

SupportSet parse_support_csv(const std::string& text, int class_count,
                             const std::string& source_name) {
  const auto lines = split_lines(text);
  if (lines.empty()) parse_fail(source_name, 1, "empty file");
  const auto header = split_fields(lines[0]);
  if (header.size() < 3 || header[0] != "id" || header[1] != "label" || header[2] != "source") {
    parse_fail(source_name, 1, "header must start with 'id,label,source'");
  }
  feature_columns(header, 3, source_name);
  std::vector<SupportEntry> entries;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const auto fields = split_fields(lines[ln]);
    if (fields.size() != header.size()) {
      parse_fail(source_name, ln + 1, "expected " + std::to_string(header.size()) + " fields");
    }
    SupportEntry e;
    e.id = fields[0];
    e.label = parse_label(fields[1], source_name, ln + 1);
    e.source = fields[2];
    for (std::size_t j = 3; j < fields.size(); ++j) {
      e.features.push_back(parse_double(fields[j], source_name, ln + 1));
    }
    entries.push_back(std::move(e));
  }
  return SupportSet(std::move(entries), class_count);
}

void save_support_csv(const SupportSet& support, const std::filesystem::path& path) {
  write_file(path, format_support_csv(support));
}

SupportSet load_support_csv(const std::filesystem::path& path, int class_count) {
  return parse_support_csv(read_file(path), class_count, path.string());
}

Dataset generate_blobs(const BlobParams& p, std::vector<Vector>* centers_out) {
  if (p.class_count < 1 || p.per_class < 1 || p.dim < 1) {
    throw Error(ErrorCode::kInvalidArgument, "blob counts must be at least 1");
  }
  if (!(p.separation >= 0.0) || !(p.noise_sd >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "separation and noise must be non-negative");
  }
  std::mt19937_64 rng(p.seed);
  const double side =
      p.separation * (2.0 + std::pow(static_cast<double>(p.class_count), 1.0 / static_cast<double>(p.dim)));
  std::uniform_real_distribution<double> coord(-side / 2.0, side / 2.0);

  constexpr int kMaxRetries = 10000;
  std::vector<Vector> centers;
  for (int c = 0; c < p.class_count; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxRetries && !placed; ++attempt) {
      Vector cand(p.dim);
      for (double& v : cand) v = coord(rng);
      placed = std::all_of(centers.begin(), centers.end(), [&](const Vector& other) {
        double ss = 0.0;
        for (std::size_t j = 0; j < p.dim; ++j) ss += (cand[j] - other[j]) * (cand[j] - other[j]);
        return std::sqrt(ss) >= p.separation;
      });
      if (placed) centers.push_back(std::move(cand));
    }
    if (!placed) {
      throw Error(ErrorCode::kGeneration, "could not place center " + std::to_string(c) +
                                              " at separation " + std::to_string(p.separation));
    }
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  Dataset ds;
  ds.dim = p.dim;
  ds.class_count = p.class_count;
  const std::size_t total = p.per_class * static_cast<std::size_t>(p.class_count);
  for (std::size_t i = 0; i < total; ++i) {
    const int label = static_cast<int>(i % static_cast<std::size_t>(p.class_count));
    LabeledExample ex{"blob-" + std::to_string(i), centers[static_cast<std::size_t>(label)], label};
    for (double& v : ex.features) v += p.noise_sd * noise(rng);
    ds.examples.push_back(std::move(ex));
  }
  if (centers_out) *centers_out = std::move(centers);
  return ds;
}

Dataset generate_rings(const RingParams& p) {
  if (p.per_class < 1) throw Error(ErrorCode::kInvalidArgument, "ring counts must be at least 1");
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
  std::normal_distribution<double> noise(0.0, 1.0);
  Dataset ds;
  ds.dim = 2;
  ds.class_count = 2;
  for (std::size_t i = 0; i < 2 * p.per_class; ++i) {
    const int label = static_cast<int>(i % 2);
    const double r = (label == 0 ? p.inner_radius : p.outer_radius) + p.noise_sd * noise(rng);
    const double a = angle(rng);
    ds.examples.push_back({"ring-" + std::to_string(i), {r * std::cos(a), r * std::sin(a)}, label});
  }
  return ds;
}

Dataset split(const Dataset& dataset, const std::array<double, 3>& fractions, std::uint64_t seed) {
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "split fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "split fractions must sum to 1");
  }

  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(dataset.class_count));
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    members.at(static_cast<std::size_t>(dataset.examples[i].label)).push_back(i);
  }

  Dataset out = dataset;
  out.splits.assign(dataset.examples.size(), Split::kTrain);
  std::mt19937_64 rng(seed);
  for (std::size_t c = 0; c < members.size(); ++c) {
    auto& m = members[c];
    const double n = static_cast<double>(m.size());
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      const double exact = fractions[s] * n;
      counts[s] = static_cast<std::size_t>(std::floor(exact + 1e-9));
      remainder[s] = exact - static_cast<double>(counts[s]);
      assigned += counts[s];
    }
    while (assigned < m.size()) {
      std::size_t best = 0;
      for (std::size_t s = 1; s < 3; ++s) {
        if (remainder[s] > remainder[best] + 1e-12) best = s;
      }
      ++counts[best];
      remainder[best] = -1.0;
      ++assigned;
    }
    for (std::size_t s = 0; s < 3; ++s) {
      if (fractions[s] > 0.0 && counts[s] == 0) {
        throw Error(ErrorCode::kStratification,
                    "class " + std::to_string(c) + " has " + std::to_string(m.size()) +
                        " examples, too few to appear in the " + split_name(static_cast<Split>(s)) +
                        " split");
      }
    }
    std::shuffle(m.begin(), m.end(), rng);
    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t j = 0; j < counts[s]; ++j) out.splits[m[pos++]] = static_cast<Split>(s);
    }
  }
  return out;
}

}  // namespace nwhead
