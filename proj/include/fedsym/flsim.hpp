#pragma once

#include "fedsym/dataset.hpp"
#include "fedsym/partition.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <variant>
#include <vector>

namespace fedsym {

/// inputs -> hidden (ReLU) -> classes logits.
struct MlpShape {
  int inputs = 0;
  int hidden = 0;
  int classes = 0;

  Eigen::Index size() const {
    return Eigen::Index{inputs} * hidden + hidden + Eigen::Index{hidden} * classes + classes;
  }
  bool operator==(const MlpShape&) const = default;
};

/// Flat parameters laid out as W1 (inputs x hidden, row-major), b1 (hidden),
/// W2 (hidden x classes, row-major), b2 (classes).
struct ModelParams {
  MlpShape shape;
  Eigen::VectorXd values;

  static ModelParams zeros(const MlpShape& shape);
};

class ShapeMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};
class EmptyShard : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};
class ModelFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Strategy { FedAvg, FedProx, Scaffold };
std::string_view strategy_name(Strategy s);
/// Accepts "fedavg", "fedprox", "scaffold".
Strategy parse_strategy(std::string_view name);

struct TrainConfig {
  double lr = 0.016;
  double lr_decay = 0.95;  // applied once per round
  double momentum = 0.9;
  int batch_size = 50;
  int local_epochs = 10;
  int rounds = 6;
  double prox_mu = 0.01;
  std::uint64_t seed = 0;
  int hidden = 32;
  int threads = 1;  // clients trained concurrently; 0 = hardware concurrency

  void validate() const;
};

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
ModelParams init_params(const MlpShape& shape, std::uint64_t seed);

Matrix forward(const ModelParams& params, const Matrix& batch);

struct LossGrad {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

/// Mean softmax cross-entropy over the batch and its gradient.
LossGrad loss_and_grad(const ModelParams& params, const Matrix& batch, std::span<const int> labels);

struct FedAvgMode {};
/// Adds (mu / 2) * ||w - global||^2 to the local objective; mu = TrainConfig::prox_mu.
struct FedProxMode {
  Eigen::VectorXd global;
};
/// Step direction becomes momentum(g) + c_global - c_local.
struct ScaffoldMode {
  Eigen::VectorXd c_global;
  Eigen::VectorXd c_local;
};
using LocalMode = std::variant<FedAvgMode, FedProxMode, ScaffoldMode>;

struct LocalResult {
  ModelParams params;
  std::optional<Eigen::VectorXd> c_local;  // Scaffold only
  double mean_loss = 0.0;
  int steps = 0;
};

/// local_epochs of seeded mini-batch SGD with momentum at lr * lr_decay^round.
/// Batch order comes from a stream keyed by (seed, round, client).
LocalResult local_train(const ModelParams& start, const SampleStore& shard, const TrainConfig& cfg,
                        const LocalMode& mode, int round, int client);

/// Weighted mean, weights normalised to sum 1, accumulated in list order.
ModelParams aggregate(std::span<const ModelParams> params, std::span<const double> weights);

/// Argmax accuracy; ties go to the lowest class index.
double evaluate(const ModelParams& params, const SampleStore& testset);

struct RoundRecord {
  int round = 0;  // 1-based
  double accuracy = 0.0;
  double mean_train_loss = 0.0;
};
using RoundLog = std::vector<RoundRecord>;

struct ControlState {
  Eigen::VectorXd c_global;
  std::vector<Eigen::VectorXd> c_local;
};

struct FederationResult {
  ModelParams model;
  RoundLog log;
};

/// Full-participation federated training over the shards of `plan`. Empty
/// shards sit out. Results are bitwise independent of cfg.threads.
FederationResult run_federation(const PartitionPlan& plan, const SampleStore& store, const SampleStore& testset,
                                Strategy strategy, const TrainConfig& cfg);

/// 16-byte header ("FSYM", inputs, hidden, classes as little-endian uint32)
/// followed by the parameters as little-endian float64.
void save_model(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_model(const std::filesystem::path& path);

}  // namespace fedsym
