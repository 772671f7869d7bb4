#include "nwhead/model.hpp"

#include <cmath>

#include "nwhead/error.hpp"

namespace nwhead {
namespace {

DenseLayer init_layer(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  DenseLayer layer{RowMatrix(out, in), Eigen::VectorXd(out)};
  for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = u(rng);
  }
  for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = u(rng);
  return layer;
}

DenseLayer zero_layer(const DenseLayer& like) {
  return {RowMatrix::Zero(like.weight.rows(), like.weight.cols()),
          Eigen::VectorXd::Zero(like.bias.size())};
}

template <typename Fn>
void for_each_layer(const Model& m, Fn&& fn) {
  for (const auto& l : m.extractor.layers) fn(l);
  if (m.classifier) fn(*m.classifier);
}

template <typename Fn>
void for_each_layer(Model& m, Fn&& fn) {
  for (auto& l : m.extractor.layers) fn(l);
  if (m.classifier) fn(*m.classifier);
}

}  // namespace

ExtractorModel ExtractorModel::initialize(std::size_t input_dim,
                                          const std::vector<std::size_t>& hidden,
                                          std::size_t embed_dim, std::mt19937_64& rng) {
  if (input_dim == 0 || embed_dim == 0) {
    throw Error(ErrorCode::kInvalidArgument, "model dimensions must be positive");
  }
  ExtractorModel model;
  std::size_t in = input_dim;
  for (std::size_t h : hidden) {
    if (h == 0) throw Error(ErrorCode::kInvalidArgument, "hidden layer of width 0");
    model.layers.push_back(init_layer(in, h, rng));
    in = h;
  }
  model.layers.push_back(init_layer(in, embed_dim, rng));
  return model;
}

std::vector<std::size_t> ExtractorModel::dims() const {
  std::vector<std::size_t> out{input_dim()};
  for (const auto& l : layers) out.push_back(l.out_dim());
  return out;
}

const char* head_kind_name(HeadKind head) { return head == HeadKind::kNw ? "nw" : "fc"; }

HeadKind parse_head_kind(const std::string& name) {
  if (name == "nw") return HeadKind::kNw;
  if (name == "fc") return HeadKind::kFc;
  throw Error(ErrorCode::kInvalidArgument, "unknown head '" + name + "' (expected nw or fc)");
}

Model Model::zeros_like() const {
  Model z;
  z.head = head;
  for (const auto& l : extractor.layers) z.extractor.layers.push_back(zero_layer(l));
  if (classifier) z.classifier = zero_layer(*classifier);
  return z;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for_each_layer(*this, [&](const DenseLayer& l) {
    n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  });
  return n;
}

Vector Model::flatten() const {
  Vector flat;
  flat.reserve(parameter_count());
  for_each_layer(*this, [&](const DenseLayer& l) {
    // RowMatrix storage is already row-major.
    flat.insert(flat.end(), l.weight.data(), l.weight.data() + l.weight.size());
    flat.insert(flat.end(), l.bias.data(), l.bias.data() + l.bias.size());
  });
  return flat;
}

void Model::assign(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "parameter blob holds " + std::to_string(flat.size()) + " values, model needs " +
                    std::to_string(parameter_count()));
  }
  std::size_t pos = 0;
  for_each_layer(*this, [&](DenseLayer& l) {
    std::copy_n(flat.data() + pos, l.weight.size(), l.weight.data());
    pos += static_cast<std::size_t>(l.weight.size());
    std::copy_n(flat.data() + pos, l.bias.size(), l.bias.data());
    pos += static_cast<std::size_t>(l.bias.size());
  });
}

bool Model::all_finite() const {
  bool ok = true;
  for_each_layer(*this, [&](const DenseLayer& l) {
    ok = ok && l.weight.allFinite() && l.bias.allFinite();
  });
  return ok;
}

Eigen::VectorXd forward(const ExtractorModel& model, const Eigen::VectorXd& input,
                        ForwardCache* cache) {
  if (static_cast<std::size_t>(input.size()) != model.input_dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "input has dimension " + std::to_string(input.size()) + ", model expects " +
                    std::to_string(model.input_dim()));
  }
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Eigen::VectorXd h = input;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& layer = model.layers[i];
    Eigen::VectorXd z = layer.weight * h + layer.bias;
    if (cache) {
      cache->inputs.push_back(h);
      cache->pre.push_back(z);
    }
    h = i + 1 < model.layers.size() ? Eigen::VectorXd(z.cwiseMax(0.0)) : z;
  }
  return h;
}

Vector forward(const ExtractorModel& model, std::span<const double> input) {
  const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(input.data(),
                                                              static_cast<Eigen::Index>(input.size()));
  const Eigen::VectorXd y = forward(model, x);
  return Vector(y.data(), y.data() + y.size());
}

void backward(const ExtractorModel& model, const ForwardCache& cache,
              const Eigen::VectorXd& grad_embedding, ExtractorModel& grad) {
  Eigen::VectorXd g = grad_embedding;
  for (std::size_t i = model.layers.size(); i-- > 0;) {
    if (i + 1 < model.layers.size()) {
      g = (cache.pre[i].array() > 0.0).select(g, 0.0);
    }
    grad.layers[i].weight.noalias() += g * cache.inputs[i].transpose();
    grad.layers[i].bias += g;
    if (i > 0) g = model.layers[i].weight.transpose() * g;
  }
}

std::vector<LabeledExample> embed(const ExtractorModel& model,
                                  const std::vector<LabeledExample>& examples) {
  std::vector<LabeledExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back({ex.id, forward(model, ex.features), ex.label});
  return out;
}

Vector fc_predict(const Model& model, std::span<const double> input) {
  if (!model.classifier) {
    throw Error(ErrorCode::kInvalidArgument, "model has no FC classifier");
  }
  const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(input.data(),
                                                              static_cast<Eigen::Index>(input.size()));
  const Eigen::VectorXd logits =
      model.classifier->weight * forward(model.extractor, x) + model.classifier->bias;
  const Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
  const Eigen::VectorXd p = e / e.sum();
  return Vector(p.data(), p.data() + p.size());
}

}  // namespace nwhead
