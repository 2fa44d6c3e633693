#include "fedsym/flsim.hpp"

#include "fedsym/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

namespace fedsym {

namespace {

using ConstMatMap = Eigen::Map<const Matrix>;
using MatMap = Eigen::Map<Matrix>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

// Offsets of the four blocks inside the flat vector.
struct Layout {
  Eigen::Index w1, b1, w2, b2;
  explicit Layout(const MlpShape& s)
      : w1(0),
        b1(Eigen::Index{s.inputs} * s.hidden),
        w2(b1 + s.hidden),
        b2(w2 + Eigen::Index{s.hidden} * s.classes) {}
};

struct ConstViews {
  ConstMatMap w1;
  ConstVecMap b1;
  ConstMatMap w2;
  ConstVecMap b2;
};

ConstViews views(const ModelParams& p) {
  const auto& s = p.shape;
  const Layout at(s);
  const double* base = p.values.data();
  return {ConstMatMap(base + at.w1, s.inputs, s.hidden), ConstVecMap(base + at.b1, s.hidden),
          ConstMatMap(base + at.w2, s.hidden, s.classes), ConstVecMap(base + at.b2, s.classes)};
}

void check_params(const ModelParams& p) {
  if (p.values.size() != p.shape.size()) throw ShapeMismatch("parameter vector length does not match its shape");
}

void check_batch(const ModelParams& p, const Matrix& batch) {
  check_params(p);
  if (batch.cols() != p.shape.inputs) throw ShapeMismatch("batch width does not match model inputs");
}

Matrix gather_rows(const Matrix& src, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), src.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = src.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

}  // namespace

ModelParams ModelParams::zeros(const MlpShape& shape) { return {shape, Eigen::VectorXd::Zero(shape.size())}; }

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::FedAvg:
      return "fedavg";
    case Strategy::FedProx:
      return "fedprox";
    case Strategy::Scaffold:
      return "scaffold";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "fedavg") return Strategy::FedAvg;
  if (name == "fedprox") return Strategy::FedProx;
  if (name == "scaffold") return Strategy::Scaffold;
  throw std::invalid_argument("unknown strategy '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw std::invalid_argument("lr_decay must lie in (0, 1]");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (local_epochs < 1) throw std::invalid_argument("local_epochs must be positive");
  if (rounds < 1) throw std::invalid_argument("rounds must be positive");
  if (!(prox_mu >= 0.0)) throw std::invalid_argument("prox_mu must be non-negative");
  if (hidden < 1) throw std::invalid_argument("hidden must be positive");
  if (threads < 0) throw std::invalid_argument("threads must be non-negative");
}

ModelParams init_params(const MlpShape& shape, std::uint64_t seed) {
  auto p = ModelParams::zeros(shape);
  const Layout at(shape);
  auto rng = make_stream(seed, {stream::kInit});
  auto fill = [&](Eigen::Index offset, int fan_in, int fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index i = 0; i < Eigen::Index{fan_in} * fan_out; ++i) p.values[offset + i] = u(rng);
  };
  fill(at.w1, shape.inputs, shape.hidden);
  fill(at.w2, shape.hidden, shape.classes);
  return p;
}

Matrix forward(const ModelParams& params, const Matrix& batch) {
  check_batch(params, batch);
  const auto v = views(params);
  Matrix hidden = ((batch * v.w1).rowwise() + v.b1.transpose()).cwiseMax(0.0);
  return (hidden * v.w2).rowwise() + v.b2.transpose();
}

LossGrad loss_and_grad(const ModelParams& params, const Matrix& batch, std::span<const int> labels) {
  check_batch(params, batch);
  if (static_cast<Eigen::Index>(labels.size()) != batch.rows()) throw ShapeMismatch("labels and batch rows differ");
  if (batch.rows() == 0) throw std::invalid_argument("empty batch");
  const auto& s = params.shape;
  const auto v = views(params);
  const auto n = batch.rows();

  const Matrix pre = (batch * v.w1).rowwise() + v.b1.transpose();
  const Matrix hidden = pre.cwiseMax(0.0);
  Matrix dz = (hidden * v.w2).rowwise() + v.b2.transpose();

  // dz holds logits, then softmax probabilities minus the one-hot target.
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= s.classes) throw std::invalid_argument("label out of range");
    const double top = dz.row(i).maxCoeff();
    const double lse = top + std::log((dz.row(i).array() - top).exp().sum());
    loss += lse - dz(i, y);
    dz.row(i) = (dz.row(i).array() - lse).exp();
    dz(i, y) -= 1.0;
  }
  dz /= static_cast<double>(n);

  LossGrad out{loss / static_cast<double>(n), Eigen::VectorXd::Zero(s.size())};
  const Layout at(s);
  double* g = out.grad.data();
  MatMap(g + at.w2, s.hidden, s.classes).noalias() = hidden.transpose() * dz;
  VecMap(g + at.b2, s.classes) = dz.colwise().sum().transpose();
  const Matrix dh = ((dz * v.w2.transpose()).array() * (pre.array() > 0.0).cast<double>()).matrix();
  MatMap(g + at.w1, s.inputs, s.hidden).noalias() = batch.transpose() * dh;
  VecMap(g + at.b1, s.hidden) = dh.colwise().sum().transpose();
  return out;
}

LocalResult local_train(const ModelParams& start, const SampleStore& shard, const TrainConfig& cfg,
                        const LocalMode& mode, int round, int client) {
  cfg.validate();
  check_params(start);
  if (shard.size() == 0) throw EmptyShard("client " + std::to_string(client) + " has no samples");
  if (shard.dims() != start.shape.inputs) throw ShapeMismatch("shard width does not match model inputs");

  const auto* prox = std::get_if<FedProxMode>(&mode);
  const auto* scaffold = std::get_if<ScaffoldMode>(&mode);
  if (prox && prox->global.size() != start.values.size()) throw ShapeMismatch("FedProx anchor has the wrong size");
  if (scaffold && (scaffold->c_global.size() != start.values.size() ||
                   scaffold->c_local.size() != start.values.size()))
    throw ShapeMismatch("control variates have the wrong size");
  const bool use_prox = prox && cfg.prox_mu > 0.0;

  const double lr = cfg.lr * std::pow(cfg.lr_decay, round);
  auto rng = make_stream(cfg.seed, {stream::kLocal, std::uint64_t(round), std::uint64_t(client)});

  ModelParams w = start;
  Eigen::VectorXd velocity = Eigen::VectorXd::Zero(w.values.size());
  Eigen::VectorXd correction;
  if (scaffold) correction = scaffold->c_global - scaffold->c_local;

  std::vector<std::size_t> order(shard.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<int> batch_labels;
  double loss_sum = 0.0;
  int steps = 0;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t from = 0; from < order.size(); from += batch) {
      const std::span<const std::size_t> rows(order.data() + from, std::min(batch, order.size() - from));
      batch_labels.clear();
      for (auto r : rows) batch_labels.push_back(shard.labels[r]);
      auto lg = loss_and_grad(w, gather_rows(shard.features, rows), batch_labels);
      if (use_prox) lg.grad += cfg.prox_mu * (w.values - prox->global);
      velocity = cfg.momentum * velocity + lg.grad;
      if (scaffold)
        w.values -= lr * (velocity + correction);
      else
        w.values -= lr * velocity;
      loss_sum += lg.loss;
      ++steps;
    }
  }

  LocalResult out{std::move(w), std::nullopt, loss_sum / steps, steps};
  if (scaffold)
    out.c_local = scaffold->c_local - scaffold->c_global + (start.values - out.params.values) / (steps * lr);
  return out;
}

ModelParams aggregate(std::span<const ModelParams> params, std::span<const double> weights) {
  if (params.empty() || params.size() != weights.size())
    throw ShapeMismatch("aggregate needs one weight per parameter vector");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("aggregation weights must be non-negative");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("aggregation weights sum to zero");
  for (const auto& p : params) {
    check_params(p);
    if (p.shape != params.front().shape) throw ShapeMismatch("aggregated models differ in shape");
  }
  ModelParams out{params.front().shape, (weights[0] / total) * params[0].values};
  for (std::size_t i = 1; i < params.size(); ++i) out.values += (weights[i] / total) * params[i].values;
  return out;
}

double evaluate(const ModelParams& params, const SampleStore& testset) {
  if (testset.size() == 0) throw std::invalid_argument("empty test set");
  const Matrix logits = forward(params, testset.features);
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index arg = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c)
      if (logits(i, c) > logits(i, arg)) arg = c;
    if (arg == testset.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(testset.size());
}

FederationResult run_federation(const PartitionPlan& plan, const SampleStore& store, const SampleStore& testset,
                                Strategy strategy, const TrainConfig& cfg) {
  cfg.validate();
  if (testset.dims() != store.dims()) throw ShapeMismatch("test set width differs from training data");
  if (testset.classes != store.classes) throw ShapeMismatch("test set class count differs from training data");
  if (plan.classes() != store.classes) throw ShapeMismatch("plan class count differs from training data");

  const MlpShape shape{store.dims(), cfg.hidden, store.classes};

  // Participating clients: non-empty shards, in client-id order.
  std::vector<int> ids;
  std::vector<SampleStore> shards;
  std::vector<double> weights;
  for (const auto& shard : plan.clients) {
    if (shard.sample_indices.empty()) continue;
    for (auto s : shard.sample_indices)
      if (s < 0 || static_cast<std::size_t>(s) >= store.size())
        throw ShapeMismatch("plan references sample " + std::to_string(s) + " outside the training data");
    ids.push_back(shard.client_id);
    shards.push_back(store.subset(shard.sample_indices));
    weights.push_back(static_cast<double>(shard.sample_indices.size()));
  }
  if (ids.empty()) throw EmptyShard("plan has no non-empty shards");

  ModelParams global = init_params(shape, cfg.seed);
  ControlState control{Eigen::VectorXd::Zero(shape.size()),
                       std::vector<Eigen::VectorXd>(ids.size(), Eigen::VectorXd::Zero(shape.size()))};

  const std::size_t workers = std::min<std::size_t>(
      ids.size(), cfg.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : cfg.threads);

  FederationResult result;
  for (int round = 0; round < cfg.rounds; ++round) {
    std::vector<LocalResult> local(ids.size());
    auto train_one = [&](std::size_t i) {
      LocalMode mode;
      switch (strategy) {
        case Strategy::FedAvg:
          mode = FedAvgMode{};
          break;
        case Strategy::FedProx:
          mode = FedProxMode{global.values};
          break;
        case Strategy::Scaffold:
          mode = ScaffoldMode{control.c_global, control.c_local[i]};
          break;
      }
      local[i] = local_train(global, shards[i], cfg, mode, round, ids[i]);
    };

    if (workers <= 1) {
      for (std::size_t i = 0; i < ids.size(); ++i) train_one(i);
    } else {
      std::atomic<std::size_t> next{0};
      std::vector<std::exception_ptr> errors(workers);
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
          try {
            for (std::size_t i; (i = next.fetch_add(1)) < ids.size();) train_one(i);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      for (auto& t : pool) t.join();
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    }

    std::vector<ModelParams> trained;
    trained.reserve(local.size());
    double loss = 0.0;
    for (auto& r : local) {
      trained.push_back(std::move(r.params));
      loss += r.mean_loss;
    }
    global = aggregate(trained, weights);

    if (strategy == Strategy::Scaffold) {
      std::vector<ModelParams> deltas;
      for (std::size_t i = 0; i < ids.size(); ++i) deltas.push_back({shape, *local[i].c_local - control.c_local[i]});
      control.c_global += aggregate(deltas, weights).values;
      for (std::size_t i = 0; i < ids.size(); ++i) control.c_local[i] = std::move(*local[i].c_local);
    }

    result.log.push_back({round + 1, evaluate(global, testset), loss / static_cast<double>(ids.size())});
  }
  result.model = std::move(global);
  return result;
}

}  // namespace fedsym
