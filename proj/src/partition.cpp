#include "fedsym/partition.hpp"

#include "fedsym/rng.hpp"
#include "fedsym/stats.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

namespace fedsym {

namespace {

std::string infeasible_message(int cls, std::int64_t needed, std::int64_t available) {
  std::ostringstream msg;
  msg << "partition infeasible: class " << cls << " needs " << needed << " samples, " << available
      << " available";
  return msg.str();
}

void check_clients(int clients) {
  if (clients < 1) throw std::invalid_argument("need at least one client");
}

// Hands the per-class draw order out to clients: client j takes the next
// take[c][j] samples of class c.
void fill_shards(PartitionPlan& plan, const std::vector<std::vector<std::int64_t>>& draw_order,
                 const std::vector<ClassCounts>& take_per_client) {
  const auto classes = draw_order.size();
  std::vector<std::size_t> cursor(classes, 0);
  for (std::size_t j = 0; j < take_per_client.size(); ++j) {
    ClientShard shard;
    shard.client_id = static_cast<int>(j);
    shard.class_counts = take_per_client[j];
    for (std::size_t c = 0; c < classes; ++c) {
      const auto n = static_cast<std::size_t>(take_per_client[j][c]);
      const auto& order = draw_order[c];
      shard.sample_indices.insert(shard.sample_indices.end(), order.begin() + static_cast<std::ptrdiff_t>(cursor[c]),
                                  order.begin() + static_cast<std::ptrdiff_t>(cursor[c] + n));
      cursor[c] += n;
    }
    std::sort(shard.sample_indices.begin(), shard.sample_indices.end());
    const bool empty = std::all_of(shard.class_counts.begin(), shard.class_counts.end(),
                                   [](auto v) { return v == 0; });
    shard.beta = empty ? 0.0 : entropy_balance(shard.class_counts);
    plan.clients.push_back(std::move(shard));
  }
}

std::vector<std::int64_t> shuffled(const std::vector<std::int64_t>& xs, Rng& rng) {
  auto out = xs;
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

}  // namespace

PartitionInfeasible::PartitionInfeasible(int cls, std::int64_t needed, std::int64_t available)
    : std::runtime_error(infeasible_message(cls, needed, available)),
      cls_(cls),
      needed_(needed),
      available_(available) {}

std::string_view method_name(Method m) {
  switch (m) {
    case Method::FedSym:
      return "fedsym";
    case Method::Dirichlet:
      return "dirichlet";
    case Method::QuantityLabel:
      return "quantity";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  if (name == "fedsym") return Method::FedSym;
  if (name == "dirichlet") return Method::Dirichlet;
  if (name == "quantity") return Method::QuantityLabel;
  throw std::invalid_argument("unknown partition method '" + std::string(name) + "'");
}

ClassCounts rotate_counts(const ClassCounts& counts, std::int64_t offset) {
  const auto l = static_cast<std::int64_t>(counts.size());
  ClassCounts out(counts.size());
  for (std::int64_t i = 0; i < l; ++i) out[i] = counts[((i - offset) % l + l) % l];
  return out;
}

ClassCounts fedsym_demand(const ClassCounts& counts, int clients) {
  check_clients(clients);
  const auto l = static_cast<int>(counts.size());
  const std::int64_t full_cycles = clients / l;
  const std::int64_t total = std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
  ClassCounts demand(counts.size(), full_cycles * total);
  for (int j = 0; j < clients % l; ++j) {
    const auto r = rotate_counts(counts, j);
    for (int c = 0; c < l; ++c) demand[c] += r[c];
  }
  return demand;
}

PartitionPlan fedsym_partition(const DatasetIndex& index, int clients, double beta, std::uint64_t seed,
                               const FedSymOptions& opts) {
  check_clients(clients);
  const int l = index.classes;

  const auto n = static_cast<std::int64_t>(index.n);
  const SolverOptions solver_opts{opts.eps, opts.max_iter};
  std::int64_t s = 0;
  SolverResult solved;
  if (opts.samples_per_client) {
    s = *opts.samples_per_client;
    if (s < 1) throw std::invalid_argument("samples per client must be positive");
    if (clients * s > n) throw PartitionInfeasible(-1, clients * s, n);
    solved = solve_sigma(beta, l, s, solver_opts);
  } else {
    // S must be a multiple of `step` for l | k*S. Start from n/k and shrink
    // until the rotated demand fits a balanced per-class budget of n/l;
    // shortfalls of an actually skewed index are reported below.
    const std::int64_t step = l / std::gcd(clients, l);
    s = n / clients / step * step;
    if (s == 0) throw PartitionInfeasible(-1, clients * step, n);
    const std::int64_t budget = n / l;
    auto fits = [&](std::int64_t size, SolverResult& out) {
      out = solve_sigma(beta, l, size, solver_opts);
      const auto demand = fedsym_demand(out.counts, clients);
      return *std::max_element(demand.begin(), demand.end()) <= budget;
    };
    std::int64_t too_big = s + step;
    while (!fits(s, solved)) {
      const auto demand = fedsym_demand(solved.counts, clients);
      const auto peak_at = std::max_element(demand.begin(), demand.end());
      too_big = s;
      auto next = s * budget / *peak_at / step * step;
      if (next >= s) next = s - step;
      if (next <= 0) throw PartitionInfeasible(static_cast<int>(peak_at - demand.begin()), *peak_at, budget);
      s = next;
    }
    // The proportional jump can undershoot; walk back up.
    SolverResult trial;
    while (s + step < too_big && fits(s + step, trial)) {
      s += step;
      solved = std::move(trial);
    }
  }

  const auto demand = fedsym_demand(solved.counts, clients);
  for (int c = 0; c < l; ++c) {
    const auto available = static_cast<std::int64_t>(index.by_class[c].size());
    if (demand[c] > available) throw PartitionInfeasible(c, demand[c], available);
  }

  PartitionPlan plan;
  plan.method = Method::FedSym;
  plan.params.beta = beta;
  plan.params.eps = opts.eps;
  plan.params.sigma = solved.sigma;
  plan.seed = seed;
  plan.samples_per_client = s;

  std::vector<std::vector<std::int64_t>> draw_order(l);
  for (int c = 0; c < l; ++c) {
    auto rng = make_stream(seed, {stream::kFedSym, std::uint64_t(c)});
    draw_order[c] = shuffled(index.by_class[c], rng);
  }
  std::vector<ClassCounts> take(clients);
  for (int j = 0; j < clients; ++j) take[j] = rotate_counts(solved.counts, j % l);
  fill_shards(plan, draw_order, take);
  return plan;
}

PartitionPlan dirichlet_partition(const DatasetIndex& index, int clients, double alpha, std::uint64_t seed) {
  check_clients(clients);
  if (!(alpha > 0.0)) throw std::invalid_argument("Dirichlet alpha must be positive");
  const int l = index.classes;

  PartitionPlan plan;
  plan.method = Method::Dirichlet;
  plan.params.alpha = alpha;
  plan.seed = seed;

  std::vector<std::vector<std::int64_t>> draw_order(l);
  std::vector<ClassCounts> take(clients, ClassCounts(l, 0));
  for (int c = 0; c < l; ++c) {
    auto rng = make_stream(seed, {stream::kDirichlet, std::uint64_t(c)});
    std::gamma_distribution<double> gamma(alpha, 1.0);
    std::vector<double> share(clients);
    double mass = 0.0;
    for (auto& v : share) {
      v = gamma(rng);
      mass += v;
    }
    if (!(mass > 0.0)) {
      // Every draw underflowed; the limit of such a draw is a single client.
      std::fill(share.begin(), share.end(), 0.0);
      share[std::uniform_int_distribution<int>(0, clients - 1)(rng)] = 1.0;
    }
    const auto counts = counts_from_pmf(share, static_cast<std::int64_t>(index.by_class[c].size()));
    for (int j = 0; j < clients; ++j) take[j][c] = counts[j];
    draw_order[c] = shuffled(index.by_class[c], rng);
  }
  fill_shards(plan, draw_order, take);
  return plan;
}

PartitionPlan quantity_label_partition(const DatasetIndex& index, int clients, int labels_per_client,
                                       std::uint64_t seed) {
  check_clients(clients);
  const int l = index.classes;
  if (labels_per_client < 1 || labels_per_client > l)
    throw std::invalid_argument("labels per client must lie in [1, classes]");

  PartitionPlan plan;
  plan.method = Method::QuantityLabel;
  plan.params.labels_per_client = labels_per_client;
  plan.seed = seed;

  auto rng = make_stream(seed, {stream::kQuantity});
  std::vector<int> label_order(l);
  std::iota(label_order.begin(), label_order.end(), 0);
  std::shuffle(label_order.begin(), label_order.end(), rng);

  std::vector<std::vector<int>> holders(l);
  for (int j = 0; j < clients; ++j)
    for (int t = 0; t < labels_per_client; ++t)
      holders[label_order[(static_cast<std::int64_t>(j) * labels_per_client + t) % l]].push_back(j);

  std::vector<std::vector<std::int64_t>> draw_order(l);
  std::vector<ClassCounts> take(clients, ClassCounts(l, 0));
  for (int c = 0; c < l; ++c) {
    auto class_rng = make_stream(seed, {stream::kQuantity, std::uint64_t(c) + 1});
    draw_order[c] = shuffled(index.by_class[c], class_rng);
    if (holders[c].empty()) continue;
    const std::vector<double> even(holders[c].size(), 1.0 / static_cast<double>(holders[c].size()));
    const auto split = counts_from_pmf(even, static_cast<std::int64_t>(index.by_class[c].size()));
    for (std::size_t h = 0; h < holders[c].size(); ++h) take[holders[c][h]][c] = split[h];
  }
  fill_shards(plan, draw_order, take);
  return plan;
}

HeterogeneityReport heterogeneity_report(const PartitionPlan& plan) {
  if (plan.clients.empty()) throw std::invalid_argument("plan has no clients");
  HeterogeneityReport r;
  for (const auto& shard : plan.clients) {
    const bool empty = std::all_of(shard.class_counts.begin(), shard.class_counts.end(),
                                   [](auto v) { return v == 0; });
    r.per_client_beta.push_back(empty ? 0.0 : entropy_balance(shard.class_counts));
    if (empty) r.empty_clients.push_back(shard.client_id);
  }
  const auto [lo, hi] = std::minmax_element(r.per_client_beta.begin(), r.per_client_beta.end());
  r.min = *lo;
  r.max = *hi;
  r.mean = stats::mean(r.per_client_beta);
  r.std = stats::population_std(r.per_client_beta);
  return r;
}

std::vector<SweepRow> alpha_sweep(const DatasetIndex& index, int clients, const std::vector<double>& alphas,
                                  std::uint64_t seed) {
  std::vector<SweepRow> rows;
  for (double a : alphas) rows.push_back({a, heterogeneity_report(dirichlet_partition(index, clients, a, seed)).mean});
  return rows;
}

std::vector<SweepRow> beta_sweep(const DatasetIndex& index, int clients, const std::vector<double>& betas,
                                 std::uint64_t seed, const FedSymOptions& opts) {
  std::vector<SweepRow> rows;
  for (double b : betas)
    rows.push_back({b, heterogeneity_report(fedsym_partition(index, clients, b, seed, opts)).mean});
  return rows;
}

void validate_plan(const PartitionPlan& plan, const DatasetIndex& index) {
  std::vector<int> owner(index.n, -1);
  for (const auto& shard : plan.clients) {
    if (static_cast<int>(shard.class_counts.size()) != index.classes)
      throw std::runtime_error("shard " + std::to_string(shard.client_id) + " has the wrong class count");
    ClassCounts seen(index.classes, 0);
    for (auto s : shard.sample_indices) {
      if (s < 0 || static_cast<std::size_t>(s) >= index.n)
        throw std::runtime_error("shard " + std::to_string(shard.client_id) + " references sample " +
                                 std::to_string(s) + " outside the dataset");
      if (owner[s] >= 0)
        throw std::runtime_error("sample " + std::to_string(s) + " assigned to clients " +
                                 std::to_string(owner[s]) + " and " + std::to_string(shard.client_id));
      owner[s] = shard.client_id;
      ++seen[index.labels[s]];
    }
    if (seen != shard.class_counts)
      throw std::runtime_error("shard " + std::to_string(shard.client_id) +
                               " class counts disagree with its sample labels");
  }
}

}  // namespace fedsym
