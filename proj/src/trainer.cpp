#include "nwhead/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "nwhead/calibration.hpp"
#include "nwhead/error.hpp"
#include "nwhead/nw_core.hpp"

namespace nwhead {
namespace {

// Floor on ||q - s|| in the distance derivative only.
constexpr double kDistanceFloor = 1e-12;

Eigen::VectorXd as_eigen(const Vector& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void draw_without_replacement(std::vector<std::size_t>& pool, std::size_t count,
                              std::mt19937_64& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(count);
}

double log_sum_exp(std::span<const double> a, std::span<const std::size_t> idx) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i : idx) m = std::max(m, a[i]);
  double s = 0.0;
  for (std::size_t i : idx) s += std::exp(a[i] - m);
  return m + std::log(s);
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kInvalidArgument, msg); };
  if (batch_size < 1) fail("batch size N_b must be at least 1");
  if (support_size < 2) fail("support size N_s must be at least 2");
  if (!(temperature > 0.0)) fail("temperature must be positive");
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail("learning rate must be finite and non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) fail("weight decay must be non-negative");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) fail("label smoothing must lie in [0, 1)");
  if (embed_dim < 1) fail("embedding dimension must be at least 1");
}

Episode sample_episode(const std::vector<LabeledExample>& train, std::size_t query_index,
                       std::size_t support_size, std::mt19937_64& rng) {
  if (query_index >= train.size()) {
    throw Error(ErrorCode::kInvalidArgument, "query index outside the training set");
  }
  if (support_size < 1 || train.size() < support_size + 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "episode needs " + std::to_string(support_size + 1) + " examples, training set has " +
                    std::to_string(train.size()));
  }
  const int label = train[query_index].label;
  std::vector<std::size_t> same;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (i != query_index && train[i].label == label) same.push_back(i);
  }
  if (same.empty()) {
    throw Error(ErrorCode::kInsufficientClassPopulation,
                "class " + std::to_string(label) + " has a single member; no episode can hold it");
  }

  Episode ep;
  ep.query = query_index;
  std::uniform_int_distribution<std::size_t> pick(0, same.size() - 1);
  const std::size_t anchor = same[pick(rng)];

  std::vector<std::size_t> rest;
  rest.reserve(train.size() - 2);
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (i != query_index && i != anchor) rest.push_back(i);
  }
  draw_without_replacement(rest, support_size - 1, rng);

  ep.support.push_back(anchor);
  ep.support.insert(ep.support.end(), rest.begin(), rest.end());
  std::shuffle(ep.support.begin(), ep.support.end(), rng);
  return ep;
}

std::vector<Episode> sample_shared_episodes(const std::vector<LabeledExample>& train,
                                            std::span<const std::size_t> queries,
                                            std::size_t support_size, std::mt19937_64& rng) {
  std::vector<bool> is_query(train.size(), false);
  std::vector<int> classes;
  for (std::size_t q : queries) {
    if (q >= train.size()) throw Error(ErrorCode::kInvalidArgument, "query index outside the training set");
    is_query[q] = true;
    if (std::find(classes.begin(), classes.end(), train[q].label) == classes.end()) {
      classes.push_back(train[q].label);
    }
  }
  if (classes.size() > support_size) {
    throw Error(ErrorCode::kInvalidArgument,
                "batch spans " + std::to_string(classes.size()) +
                    " classes, more than the support size " + std::to_string(support_size));
  }

  std::vector<std::size_t> support;
  std::vector<bool> taken(train.size(), false);
  for (int c : classes) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (!is_query[i] && train[i].label == c) pool.push_back(i);
    }
    if (pool.empty()) {
      throw Error(ErrorCode::kInsufficientClassPopulation,
                  "class " + std::to_string(c) + " has no non-query example for a shared support");
    }
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    const std::size_t chosen = pool[pick(rng)];
    support.push_back(chosen);
    taken[chosen] = true;
  }
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (!is_query[i] && !taken[i]) rest.push_back(i);
  }
  const std::size_t fill = support_size - support.size();
  if (rest.size() < fill) {
    throw Error(ErrorCode::kInvalidArgument, "not enough non-query examples for a shared support");
  }
  draw_without_replacement(rest, fill, rng);
  support.insert(support.end(), rest.begin(), rest.end());
  std::shuffle(support.begin(), support.end(), rng);

  std::vector<Episode> episodes;
  for (std::size_t q : queries) episodes.push_back({q, support});
  return episodes;
}

LossAndGrad nw_loss_and_grad(const Model& model, const std::vector<LabeledExample>& train,
                             std::span<const Episode> episodes, double temperature,
                             double label_smoothing) {
  if (episodes.empty()) throw Error(ErrorCode::kEmptyInput, "no episodes");
  if (!(temperature > 0.0)) {
    throw Error(ErrorCode::kInvalidTemperature, "temperature must be positive");
  }

  // Embed every distinct example once; embedding gradients are accumulated
  // per example and pushed through the network once at the end.
  std::map<std::size_t, std::size_t> slot_of;
  for (const auto& ep : episodes) {
    slot_of.emplace(ep.query, slot_of.size());
    for (std::size_t s : ep.support) slot_of.emplace(s, slot_of.size());
  }
  std::vector<ForwardCache> caches(slot_of.size());
  std::vector<Eigen::VectorXd> emb(slot_of.size());
  for (const auto& [idx, slot] : slot_of) {
    emb[slot] = forward(model.extractor, as_eigen(train[idx].features), &caches[slot]);
  }
  std::vector<Eigen::VectorXd> emb_grad(slot_of.size(),
                                        Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.extractor.embed_dim())));

  const double batch = static_cast<double>(episodes.size());
  double total_loss = 0.0;
  for (const auto& ep : episodes) {
    const std::size_t n = ep.support.size();
    const std::size_t q_slot = slot_of.at(ep.query);
    const int y = train[ep.query].label;

    std::vector<Eigen::VectorXd> diff(n);
    Vector dist(n), logits(n);
    for (std::size_t i = 0; i < n; ++i) {
      diff[i] = emb[q_slot] - emb[slot_of.at(ep.support[i])];
      dist[i] = diff[i].norm();
      logits[i] = -dist[i] / temperature;
    }

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < n; ++i) by_class[train[ep.support[i]].label].push_back(i);
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});

    // Target over the classes present in this support.
    std::map<int, double> target;
    for (const auto& [c, members] : by_class) {
      target[c] = label_smoothing / static_cast<double>(by_class.size());
    }
    target[y] += 1.0 - label_smoothing;

    // -log f_c = lse(all) - lse(class c), so the loss never takes log(0)
    // for a class present in the support.
    const double lse_all = log_sum_exp(logits, all);
    std::map<int, double> lse_class;
    for (const auto& [c, members] : by_class) lse_class[c] = log_sum_exp(logits, members);

    double loss = 0.0;
    double target_mass = 0.0;
    for (const auto& [c, t] : target) {
      target_mass += t;
      if (t == 0.0) continue;
      const auto it = lse_class.find(c);
      loss += it == lse_class.end() ? std::numeric_limits<double>::infinity()
                                    : t * (lse_all - it->second);
    }
    total_loss += loss;

    for (std::size_t i = 0; i < n; ++i) {
      const int c = train[ep.support[i]].label;
      const double w = std::exp(logits[i] - lse_all);
      const double r = std::exp(logits[i] - lse_class.at(c));
      const auto t = target.find(c);
      const double dlogit = target_mass * w - (t == target.end() ? 0.0 : t->second * r);
      const double ddist = -dlogit / temperature;
      const Eigen::VectorXd g = (ddist / std::max(dist[i], kDistanceFloor)) * diff[i] / batch;
      emb_grad[q_slot] += g;
      emb_grad[slot_of.at(ep.support[i])] -= g;
    }
  }

  LossAndGrad out{total_loss / batch, model.zeros_like()};
  for (const auto& [idx, slot] : slot_of) {
    backward(model.extractor, caches[slot], emb_grad[slot], out.grad.extractor);
  }
  return out;
}

LossAndGrad fc_loss_and_grad(const Model& model, const std::vector<LabeledExample>& train,
                             std::span<const std::size_t> batch, int class_count,
                             double label_smoothing) {
  if (!model.classifier) throw Error(ErrorCode::kInvalidArgument, "model has no FC classifier");
  if (batch.empty()) throw Error(ErrorCode::kEmptyInput, "empty batch");
  const double n = static_cast<double>(batch.size());
  LossAndGrad out{0.0, model.zeros_like()};
  const auto& fc = *model.classifier;
  for (std::size_t idx : batch) {
    ForwardCache cache;
    const Eigen::VectorXd h = forward(model.extractor, as_eigen(train[idx].features), &cache);
    const Eigen::VectorXd z = fc.weight * h + fc.bias;
    const double m = z.maxCoeff();
    const double lse = m + std::log((z.array() - m).exp().sum());
    const Eigen::VectorXd p = (z.array() - lse).exp();

    Eigen::VectorXd target = Eigen::VectorXd::Constant(class_count, label_smoothing / class_count);
    target(train[idx].label) += 1.0 - label_smoothing;

    out.loss += (target.array() * (lse - z.array())).sum();
    const Eigen::VectorXd dz = (target.sum() * p - target) / n;
    out.grad.classifier->weight.noalias() += dz * h.transpose();
    out.grad.classifier->bias += dz;
    backward(model.extractor, cache, fc.weight.transpose() * dz, out.grad.extractor);
  }
  out.loss /= n;
  return out;
}

Trainer::Trainer(std::vector<LabeledExample> train, std::vector<LabeledExample> val,
                 int class_count, TrainConfig config)
    : train_(std::move(train)),
      val_(std::move(val)),
      class_count_(class_count),
      config_(std::move(config)),
      rng_(config_.seed) {
  config_.validate();
  if (train_.empty()) throw Error(ErrorCode::kEmptyInput, "training set is empty");
  const std::size_t input_dim = train_.front().features.size();
  model_.head = config_.head;
  model_.extractor =
      ExtractorModel::initialize(input_dim, config_.hidden, config_.embed_dim, rng_);
  if (config_.head == HeadKind::kFc) {
    std::mt19937_64& rng = rng_;
    ExtractorModel head = ExtractorModel::initialize(config_.embed_dim, {},
                                                     static_cast<std::size_t>(class_count_), rng);
    model_.classifier = std::move(head.layers.front());
  }
  velocity_.assign(model_.parameter_count(), 0.0);
  order_.resize(train_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::shuffle(order_.begin(), order_.end(), rng_);
}

double Trainer::current_lr() const {
  double lr = config_.lr;
  for (std::size_t s : config_.lr_decay_steps) {
    if (step_ >= s) lr /= 10.0;
  }
  return lr;
}

std::vector<std::size_t> Trainer::next_queries() {
  std::vector<std::size_t> out;
  out.reserve(config_.batch_size);
  while (out.size() < config_.batch_size) {
    if (cursor_ == order_.size()) {
      std::shuffle(order_.begin(), order_.end(), rng_);
      cursor_ = 0;
    }
    out.push_back(order_[cursor_++]);
  }
  return out;
}

StepReport Trainer::step() {
  StepReport report;
  report.lr = current_lr();
  report.queries = next_queries();

  LossAndGrad lg;
  if (config_.head == HeadKind::kNw) {
    if (config_.shared_support) {
      report.episodes = sample_shared_episodes(train_, report.queries, config_.support_size, rng_);
    } else {
      for (std::size_t q : report.queries) {
        report.episodes.push_back(sample_episode(train_, q, config_.support_size, rng_));
      }
    }
    lg = nw_loss_and_grad(model_, train_, report.episodes, config_.temperature,
                          config_.label_smoothing);
  } else {
    lg = fc_loss_and_grad(model_, train_, report.queries, class_count_, config_.label_smoothing);
  }
  report.loss = lg.loss;
  if (!std::isfinite(lg.loss)) {
    throw Error(ErrorCode::kNumericalFailure,
                "training diverged at step " + std::to_string(step_) + ": loss=" +
                    std::to_string(lg.loss) + ", lr=" + std::to_string(report.lr));
  }

  Vector theta = model_.flatten();
  const Vector grad = lg.grad.flatten();
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i] + config_.weight_decay * theta[i];
    velocity_[i] = config_.momentum * velocity_[i] + g;
    theta[i] -= report.lr * velocity_[i];
  }
  model_.assign(theta);
  if (!model_.all_finite()) {
    throw Error(ErrorCode::kNumericalFailure,
                "non-finite parameters after step " + std::to_string(step_));
  }
  ++step_;
  return report;
}

std::pair<double, double> Trainer::validate() const {
  if (val_.empty()) throw Error(ErrorCode::kEmptyInput, "no validation set");
  std::vector<PredictionResult> preds;
  std::vector<int> labels;
  preds.reserve(val_.size());
  if (config_.head == HeadKind::kNw) {
    const auto support =
        SupportSet::from_examples(embed(model_.extractor, train_), class_count_);
    for (const auto& q : embed(model_.extractor, val_)) {
      preds.push_back(nw_predict(q.features, support, config_.temperature, q.id));
      labels.push_back(q.label);
    }
  } else {
    for (const auto& q : val_) {
      PredictionResult p;
      p.query_id = q.id;
      p.probs = fc_predict(model_, q.features);
      preds.push_back(std::move(p));
      labels.push_back(q.label);
    }
  }
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].predicted_class() != labels[i]) ++wrong;
  }
  const double error = static_cast<double>(wrong) / static_cast<double>(preds.size());
  return {error, expected_calibration_error(preds, labels).ece};
}

TrainResult train(const std::vector<LabeledExample>& train_set,
                  const std::vector<LabeledExample>& val_set, int class_count,
                  const TrainConfig& config) {
  Trainer trainer(train_set, val_set, class_count, config);
  TrainResult result;
  for (std::size_t s = 0; s < config.steps; ++s) {
    const StepReport rep = trainer.step();
    TrainLogEntry entry{trainer.steps_taken(), rep.lr, rep.loss, std::nullopt, std::nullopt};
    const bool last = s + 1 == config.steps;
    if (!val_set.empty() && ((config.log_every > 0 && trainer.steps_taken() % config.log_every == 0) || last)) {
      const auto [err, ece] = trainer.validate();
      entry.val_error = err;
      entry.val_ece = ece;
    }
    result.log.push_back(entry);
  }
  result.model = trainer.model();
  return result;
}

}  // namespace nwhead
