#pragma once

#include "fedsym/dataset.hpp"
#include "fedsym/entropy.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fedsym {

enum class Method { FedSym, Dirichlet, QuantityLabel };

std::string_view method_name(Method m);
/// Accepts "fedsym", "dirichlet", "quantity". Throws std::invalid_argument.
Method parse_method(std::string_view name);

/// Method parameters. Only the fields of the plan's method are meaningful.
struct PartitionParams {
  double beta = 0.0;
  double eps = 1e-3;
  double sigma = 0.0;  // realised sigma, FedSym only
  double alpha = 0.0;
  int labels_per_client = 0;
};

struct ClientShard {
  int client_id = 0;
  ClassCounts class_counts;
  std::vector<std::int64_t> sample_indices;  // ascending
  double beta = 0.0;                         // 0 for empty shards
};

struct PartitionPlan {
  Method method = Method::FedSym;
  PartitionParams params;
  std::uint64_t seed = 0;
  std::int64_t samples_per_client = 0;  // FedSym only; 0 otherwise
  std::vector<ClientShard> clients;

  int classes() const { return clients.empty() ? 0 : static_cast<int>(clients.front().class_counts.size()); }
};

struct HeterogeneityReport {
  std::vector<double> per_client_beta;
  std::vector<int> empty_clients;  // shards with no samples (beta reported as 0)
  double min = 0.0, max = 0.0, mean = 0.0, std = 0.0;
};

class PartitionInfeasible : public std::runtime_error {
 public:
  PartitionInfeasible(int cls, std::int64_t needed, std::int64_t available);
  int cls() const noexcept { return cls_; }
  std::int64_t needed() const noexcept { return needed_; }
  std::int64_t available() const noexcept { return available_; }

 private:
  int cls_;
  std::int64_t needed_;
  std::int64_t available_;
};

/// Right rotation: out[i] = counts[(i - offset) mod l].
ClassCounts rotate_counts(const ClassCounts& counts, std::int64_t offset);

/// Per-class totals needed when clients j = 0..clients-1 take rotation j mod l.
ClassCounts fedsym_demand(const ClassCounts& counts, int clients);

struct FedSymOptions {
  double eps = 1e-3;
  int max_iter = 100;
  /// When unset, S is the largest value <= n / clients with l | clients * S
  /// whose rotated demand fits n / l per class. A class holding fewer samples
  /// than its demand is reported as PartitionInfeasible, never absorbed.
  std::optional<std::int64_t> samples_per_client;
};

/// Symmetric equal-entropy partition: one discrete-Gaussian count vector with
/// balance `beta`, rotated by j mod l for client j, filled by drawing samples
/// without replacement from a seeded per-class shuffle.
PartitionPlan fedsym_partition(const DatasetIndex& index, int clients, double beta, std::uint64_t seed,
                               const FedSymOptions& opts = {});

/// Per-class Dirichlet(alpha) proportions over clients; every sample is assigned.
PartitionPlan dirichlet_partition(const DatasetIndex& index, int clients, double alpha, std::uint64_t seed);

/// Each client holds `labels_per_client` distinct labels, dealt round-robin
/// over a seeded label shuffle; each label's samples are split evenly among
/// its holders.
PartitionPlan quantity_label_partition(const DatasetIndex& index, int clients, int labels_per_client,
                                       std::uint64_t seed);

HeterogeneityReport heterogeneity_report(const PartitionPlan& plan);

struct SweepRow {
  double index = 0.0;
  double mean_beta = 0.0;
};

std::vector<SweepRow> alpha_sweep(const DatasetIndex& index, int clients, const std::vector<double>& alphas,
                                  std::uint64_t seed);
std::vector<SweepRow> beta_sweep(const DatasetIndex& index, int clients, const std::vector<double>& betas,
                                 std::uint64_t seed, const FedSymOptions& opts = {});

/// Throws std::runtime_error unless shards are pairwise disjoint, indices are
/// in range, and each shard's class_counts equals the label histogram of its
/// sample_indices.
void validate_plan(const PartitionPlan& plan, const DatasetIndex& index);

}  // namespace fedsym
