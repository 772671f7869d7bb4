#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "nwhead/types.hpp"

namespace nwhead {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct DenseLayer {
  RowMatrix weight;  // out x in
  Eigen::VectorXd bias;

  std::size_t in_dim() const { return static_cast<std::size_t>(weight.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(weight.rows()); }
};

// g_theta: affine layers with ReLU between them; the last layer is the linear
// projection into the embedding space and has no activation.
struct ExtractorModel {
  std::vector<DenseLayer> layers;

  /// PyTorch-style uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
  static ExtractorModel initialize(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                   std::size_t embed_dim, std::mt19937_64& rng);

  std::size_t input_dim() const { return layers.front().in_dim(); }
  std::size_t embed_dim() const { return layers.back().out_dim(); }
  /// input, hidden..., embedding
  std::vector<std::size_t> dims() const;
};

enum class HeadKind { kNw, kFc };

const char* head_kind_name(HeadKind head);
HeadKind parse_head_kind(const std::string& name);

// Extractor plus, for the FC baseline, a linear classifier on its output.
struct Model {
  HeadKind head = HeadKind::kNw;
  ExtractorModel extractor;
  std::optional<DenseLayer> classifier;

  /// Same shapes, all zeros.
  Model zeros_like() const;
  std::size_t parameter_count() const;
  /// Row-major weights then bias, layer by layer, classifier last.
  Vector flatten() const;
  void assign(std::span<const double> flat);
  bool all_finite() const;
};

struct ForwardCache {
  std::vector<Eigen::VectorXd> inputs;  // input seen by each layer
  std::vector<Eigen::VectorXd> pre;     // pre-activation of each layer
};

/// Throws kDimensionMismatch when the input does not match the first layer.
Eigen::VectorXd forward(const ExtractorModel& model, const Eigen::VectorXd& input,
                        ForwardCache* cache = nullptr);
Vector forward(const ExtractorModel& model, std::span<const double> input);

/// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(embedding).
void backward(const ExtractorModel& model, const ForwardCache& cache,
              const Eigen::VectorXd& grad_embedding, ExtractorModel& grad);

/// Copies of `examples` with features replaced by their embeddings.
std::vector<LabeledExample> embed(const ExtractorModel& model,
                                  const std::vector<LabeledExample>& examples);

/// Softmax of the FC classifier's logits.
Vector fc_predict(const Model& model, std::span<const double> input);

}  // namespace nwhead
