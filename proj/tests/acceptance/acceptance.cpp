// Acceptance suite: one [PASS]/[FAIL] line per criterion, nonzero exit if any fails.
#include "fedsym/cka.hpp"
#include "fedsym/cli.hpp"
#include "fedsym/entropy.hpp"
#include "fedsym/flsim.hpp"
#include "fedsym/partition.hpp"
#include "fedsym/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace fedsym;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kBetaTol = 1e-3;        // C1: |beta_hat - beta|
constexpr double kStdTol = 1e-9;         // C1: per-client std
constexpr double kSigmaSlack = 1e-9;     // C2: sigma >= sigma0 - slack
constexpr int kMaxSolverIter = 100;      // C2
constexpr double kMinRangeWidth = 0.1;   // C4
constexpr int kMinOverlapRun = 3;        // C4
constexpr double kMinSpearman = 0.9;     // C5
constexpr double kMaxCkaSpearman = -0.6; // C7
constexpr double kMaxFdRelErr = 1e-4;    // C8
constexpr double kPmfTol = 1e-12;        // C8

const std::vector<double> kIndices{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
const std::vector<std::uint64_t> kSeeds{1, 2, 3};
constexpr int kClients = 10;

int failures = 0;
int plans_validated = 0;

void verdict(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] C%d %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

DatasetIndex balanced_index(int classes, int per_class) {
  std::vector<int> labels;
  for (int i = 0; i < classes * per_class; ++i) labels.push_back(i % classes);
  return index_of_labels(labels, classes);
}

const PartitionPlan& checked(const PartitionPlan& plan, const DatasetIndex& index) {
  validate_plan(plan, index);
  ++plans_validated;
  return plan;
}

double pmf_balance(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0) h -= v * std::log(v);
  return h / std::log(static_cast<double>(p.size()));
}

void c1_exactness() {
  const auto index = balanced_index(10, 500);
  bool ok = true;
  double worst_gap = 0.0, worst_std = 0.0;
  for (double beta : kIndices) {
    const auto report = heterogeneity_report(checked(fedsym_partition(index, kClients, beta, 0), index));
    for (double b : report.per_client_beta) worst_gap = std::max(worst_gap, std::abs(b - beta));
    worst_std = std::max(worst_std, report.std);
    ok = ok && report.per_client_beta.size() == kClients && report.empty_clients.empty();
  }
  ok = ok && worst_gap < kBetaTol && worst_std <= kStdTol;
  verdict(1, "FedSym exactness", ok,
          "max |beta_hat-beta| " + fmt("%.2e", worst_gap) + ", max std " + fmt("%.2e", worst_std));
}

void c2_sigma_bound() {
  bool ok = true;
  int cells = 0, worst_iter = 0;
  double worst_margin = 1e300;
  for (int l : {2, 3, 5, 10, 20, 50, 100})
    for (int step = 1; step <= 19; ++step) {
      const double beta = 0.05 * step;
      ++cells;
      try {
        const auto r = solve_sigma(beta, l, 1000LL * l);
        worst_margin = std::min(worst_margin, r.sigma - sigma_lower_bound(beta, l));
        worst_iter = std::max(worst_iter, r.iterations);
        ok = ok && r.iterations <= kMaxSolverIter && std::abs(r.achieved_beta - beta) < kBetaTol;
      } catch (const std::exception& e) {
        std::printf("  C2 beta=%.2f l=%d: %s\n", beta, l, e.what());
        ok = false;
      }
    }
  ok = ok && worst_margin >= -kSigmaSlack;
  verdict(2, "sigma-bound consistency", ok,
          std::to_string(cells) + " cells, min sigma-sigma0 " + fmt("%.3e", worst_margin) + ", max iterations " +
              std::to_string(worst_iter));
}

void c3_monotonicity() {
  bool ok = true;
  int drops = 0;
  for (int l : {2, 10, 100}) {
    double prev = -1.0;
    for (int s = 1; s <= 200; ++s) {
      const double b = pmf_balance(discrete_gaussian_pmf({static_cast<double>(gaussian_center(l)), 0.1 * s, l}));
      if (b < prev) {
        ok = false;
        ++drops;
      }
      prev = b;
    }
  }
  verdict(3, "entropy monotonicity", ok, std::to_string(drops) + " decreases over 600 (l, sigma) steps");
}

void c4_dirichlet_overlap() {
  const auto index = balanced_index(10, 500);
  std::vector<std::pair<double, double>> ranges;
  bool ok = true;
  double narrowest = 1e300;
  for (double alpha : kIndices) {
    double lo = 1e300, hi = -1e300;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const auto report = heterogeneity_report(checked(dirichlet_partition(index, kClients, alpha, seed), index));
      lo = std::min(lo, report.min);
      hi = std::max(hi, report.max);
    }
    ranges.emplace_back(lo, hi);
    narrowest = std::min(narrowest, hi - lo);
    ok = ok && hi - lo > kMinRangeWidth;
  }
  int run = 1, best_run = 1;
  for (std::size_t i = 1; i < ranges.size(); ++i) {
    const bool overlap = ranges[i].first <= ranges[i - 1].second && ranges[i - 1].first <= ranges[i].second;
    run = overlap ? run + 1 : 1;
    best_run = std::max(best_run, run);
  }
  ok = ok && best_run >= kMinOverlapRun;
  verdict(4, "Dirichlet overlap", ok,
          "narrowest range " + fmt("%.3f", narrowest) + ", longest overlapping run " + std::to_string(best_run));
}

// Shared experiment for C5-C7: per seed, 10 FedSym and 10 Dirichlet plans,
// each trained with all three strategies.
struct Experiment {
  // acc[strategy][method][index position], averaged over seeds
  std::map<Strategy, std::array<std::vector<double>, 2>> acc;
  // FedAvg final models per seed: [seed][method][index position]
  std::vector<std::array<std::vector<ModelParams>, 2>> fedavg_models;
  std::vector<SampleStore> tests;
};

cli::DatasetSpec protocol_spec(std::uint64_t seed) {
  cli::DatasetSpec spec;
  spec.classes = 10;
  spec.n_per_class = 500;
  spec.dims = 16;
  spec.separation = 4.0;
  spec.seed = seed;
  spec.test_per_class = 1000;
  return spec;
}

Experiment run_experiment() {
  Experiment ex;
  const std::array strategies{Strategy::FedAvg, Strategy::FedProx, Strategy::Scaffold};
  for (auto s : strategies)
    for (auto& v : ex.acc[s]) v.assign(kIndices.size(), 0.0);
  for (auto seed : kSeeds) {
    const auto spec = protocol_spec(seed);
    const auto train = cli::load_train(spec);
    const auto test = cli::load_test(spec);
    const auto index = index_of(train);
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.threads = 0;
    auto& models = ex.fedavg_models.emplace_back();
    for (std::size_t i = 0; i < kIndices.size(); ++i) {
      const std::array plans{checked(fedsym_partition(index, kClients, kIndices[i], seed), index),
                             checked(dirichlet_partition(index, kClients, kIndices[i], seed), index)};
      for (int m = 0; m < 2; ++m)
        for (auto s : strategies) {
          auto result = run_federation(plans[m], train, test, s, cfg);
          ex.acc[s][m][i] += result.log.back().accuracy / static_cast<double>(kSeeds.size());
          if (s == Strategy::FedAvg) models[m].push_back(std::move(result.model));
        }
    }
    ex.tests.push_back(test);
  }
  return ex;
}

double spread(const std::vector<double>& xs) {
  const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
  return *hi - *lo;
}

std::string row(const std::vector<double>& xs) {
  std::string s;
  for (double v : xs) s += (s.empty() ? "" : " ") + fmt("%.3f", v);
  return s;
}

void c5_c6(const Experiment& ex) {
  bool ok5 = true, ok6 = true;
  std::string d5, d6;
  for (const auto& [s, acc] : ex.acc) {
    const double rho = stats::spearman(kIndices, acc[0]);
    ok5 = ok5 && rho >= kMinSpearman;
    const double sb = spread(acc[0]), sa = spread(acc[1]);
    ok6 = ok6 && sb > sa;
    const std::string name(strategy_name(s));
    d5 += (d5.empty() ? "" : ", ") + name + " rho " + fmt("%.3f", rho);
    d6 += (d6.empty() ? "" : ", ") + name + " " + fmt("%.4f", sb) + " vs " + fmt("%.4f", sa);
    std::printf("  %s beta-plan accuracy:  %s\n", name.c_str(), row(acc[0]).c_str());
    std::printf("  %s alpha-plan accuracy: %s\n", name.c_str(), row(acc[1]).c_str());
  }
  verdict(5, "monotone FL difficulty", ok5, d5);
  verdict(6, "FedSym spread exceeds Dirichlet spread", ok6, "spread beta vs alpha: " + d6);
}

double mean_off_diagonal(const Matrix& m) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (i != j) sum += m(i, j);
  return sum / static_cast<double>(m.rows() * (m.rows() - 1));
}

void c7_cka(const Experiment& ex) {
  bool ok = true;
  std::string detail;
  for (std::size_t k = 0; k < kSeeds.size(); ++k) {
    const auto sym = cka_matrix(ex.fedavg_models[k][0], ex.tests[k]).values;
    const auto dir = cka_matrix(ex.fedavg_models[k][1], ex.tests[k]).values;
    std::vector<double> gaps, cka;
    for (std::size_t i = 0; i < kIndices.size(); ++i)
      for (std::size_t j = i + 1; j < kIndices.size(); ++j) {
        gaps.push_back(std::abs(kIndices[i] - kIndices[j]));
        cka.push_back(sym(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      }
    const double ms = mean_off_diagonal(sym), md = mean_off_diagonal(dir);
    const double rho = stats::spearman(gaps, cka);
    ok = ok && ms < md && rho <= kMaxCkaSpearman;
    detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(kSeeds[k]) + " mean " +
              fmt("%.4f", ms) + " vs " + fmt("%.4f", md) + ", rho " + fmt("%.3f", rho);
  }
  verdict(7, "CKA distinction (FedAvg)", ok, detail);
}

// C8 pieces. Each returns an empty string on success, a reason otherwise.
std::string fd_check() {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal;
  const MlpShape shape{6, 5, 4};
  double worst = 0.0;
  for (int instance = 0; instance < 50; ++instance) {
    auto p = init_params(shape, rng());
    for (auto& v : p.values) v += 0.3 * normal(rng);
    Matrix x(10, shape.inputs);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
    std::vector<int> y(10);
    for (auto& v : y) v = static_cast<int>(rng() % shape.classes);
    const auto g = loss_and_grad(p, x, y).grad;
    for (Eigen::Index i = 0; i < p.values.size(); ++i) {
      const double keep = p.values[i];
      p.values[i] = keep + 1e-5;
      const double up = loss_and_grad(p, x, y).loss;
      p.values[i] = keep - 1e-5;
      const double down = loss_and_grad(p, x, y).loss;
      p.values[i] = keep;
      const double fd = (up - down) / 2e-5;
      worst = std::max(worst, std::abs(fd - g[i]) / std::max(1e-6, std::abs(fd) + std::abs(g[i])));
    }
  }
  return worst < kMaxFdRelErr ? "" : "finite-difference rel. err " + fmt("%.2e", worst);
}

std::string prox_check() {
  const auto spec = protocol_spec(1);
  const auto train = cli::load_train(spec);
  const auto test = cli::load_test(spec);
  const auto index = index_of(train);
  const auto plan = checked(fedsym_partition(index, kClients, 0.5, 1), index);
  TrainConfig cfg;
  cfg.rounds = 2;
  cfg.local_epochs = 2;
  cfg.threads = 0;
  const auto avg = run_federation(plan, train, test, Strategy::FedAvg, cfg);
  cfg.prox_mu = 0.0;
  const auto prox = run_federation(plan, train, test, Strategy::FedProx, cfg);
  if (avg.model.values != prox.model.values) return "FedProx(mu=0) model differs from FedAvg";
  for (std::size_t r = 0; r < avg.log.size(); ++r)
    if (avg.log[r].accuracy != prox.log[r].accuracy || avg.log[r].mean_train_loss != prox.log[r].mean_train_loss)
      return "FedProx(mu=0) round log differs from FedAvg";
  return "";
}

std::string pmf_check() {
  double worst = 0.0;
  for (int l : {2, 3, 10, 100, 1000})
    for (double sigma : {0.05, 0.3, 1.0, 4.0, 50.0, 1e4})
      for (double mu : {0.0, static_cast<double>(gaussian_center(l)), l - 1.0}) {
        double z = 0.0;
        for (double v : discrete_gaussian_pmf({mu, sigma, l})) z += v;
        worst = std::max(worst, std::abs(z - 1.0));
      }
  return worst <= kPmfTol ? "" : "pmf sums off by " + fmt("%.2e", worst);
}

std::string invariance_check() {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const int l = 2 + static_cast<int>(rng() % 30);
    ClassCounts c(static_cast<std::size_t>(l));
    for (auto& v : c) v = static_cast<std::int64_t>(rng() % 1000);
    c[0] += 1;
    const double b = entropy_balance(c);
    auto p = c;
    std::shuffle(p.begin(), p.end(), rng);
    if (entropy_balance(p) != b) return "permutation changed the balance";
    if (entropy_balance(rotate_counts(c, static_cast<std::int64_t>(rng() % 100))) != b)
      return "rotation changed the balance";
  }
  return "";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string determinism_check() {
  const auto root = fs::temp_directory_path() / "fedsym_acceptance";
  fs::remove_all(root);
  const std::string data = "synthetic:l=10,n=100,d=16,sep=4,test_n=50";
  auto session = [&](const fs::path& dir) {
    fs::create_directories(dir);
    auto run = [&](std::vector<std::string> args) {
      args.insert(args.begin(), "fedsym");
      std::ostringstream out, err;
      if (cli::run(args, out, err) != cli::kExitOk) throw std::runtime_error("command failed: " + err.str());
      return out.str();
    };
    auto at = [&](const char* name) { return (dir / name).string(); };
    std::string stdout_text;
    stdout_text += run({"partition", "--method", "fedsym", "--beta", "0.3", "--dataset", data, "--seed", "4",
                        "--out", at("sym.json")});
    stdout_text += run({"partition", "--method", "dirichlet", "--alpha", "0.3", "--dataset", data, "--seed", "4",
                        "--out", at("dir.json")});
    stdout_text += run({"sweep", "--range", "0.1:1.0:0.3", "--dataset", data, "--seed", "4", "--out", at("sweep.csv")});
    for (const char* s : {"fedavg", "fedprox", "scaffold"}) {
      const std::string log = std::string(s) + ".csv";
      stdout_text += run({"train", "--plan", at("sym.json"), "--strategy", s, "--dataset", data, "--rounds", "2",
                          "--local-epochs", "2", "--seed", "4", "--out", at(log.c_str())});
    }
    stdout_text += run({"cka", "--models", at("fedavg.model") + "," + at("scaffold.model"), "--labels", "a,b",
                        "--dataset", data, "--out", at("cka.csv")});
    return stdout_text;
  };
  const auto a = root / "a", b = root / "b";
  if (session(a) != session(b)) return "standard output differs between runs";
  int files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const auto name = entry.path().filename();
    auto left = slurp(entry.path()), right = slurp(b / name);
    // Sidecars name their own output paths; compare them with the directory masked.
    if (name.extension() == ".json") {
      for (auto* text : {&left, &right}) {
        const auto dir = (text == &left ? a : b).string();
        for (auto pos = text->find(dir); pos != std::string::npos; pos = text->find(dir)) text->replace(pos, dir.size(), "@");
      }
    }
    if (left != right) return "output differs between runs: " + name.string();
    ++files;
  }
  fs::remove_all(root);
  return files >= 15 ? "" : "expected at least 15 artifacts, found " + std::to_string(files);
}

void c8_properties() {
  std::vector<std::string> problems;
  for (auto* check : {fd_check, prox_check, pmf_check, invariance_check, determinism_check}) {
    try {
      if (auto msg = check(); !msg.empty()) problems.push_back(msg);
    } catch (const std::exception& e) {
      problems.push_back(e.what());
    }
  }
  std::string detail;
  for (const auto& p : problems) detail += (detail.empty() ? "" : "; ") + p;
  if (detail.empty())
    detail = "finite differences, FedProx(mu=0)==FedAvg, pmf, invariance, determinism ok; " +
             std::to_string(plans_validated) + " plans validated";
  verdict(8, "property suites", problems.empty(), detail);
}

}  // namespace

int main() {
  auto guarded = [](int id, const char* name, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      verdict(id, name, false, std::string("exception: ") + e.what());
    }
  };
  guarded(1, "FedSym exactness", c1_exactness);
  guarded(2, "sigma-bound consistency", c2_sigma_bound);
  guarded(3, "entropy monotonicity", c3_monotonicity);
  guarded(4, "Dirichlet overlap", c4_dirichlet_overlap);
  Experiment ex;
  bool have_experiment = false;
  guarded(5, "monotone FL difficulty", [&] {
    ex = run_experiment();
    have_experiment = true;
  });
  if (have_experiment) {
    guarded(5, "monotone FL difficulty", [&] { c5_c6(ex); });
    guarded(7, "CKA distinction (FedAvg)", [&] { c7_cka(ex); });
  } else {
    verdict(6, "FedSym spread exceeds Dirichlet spread", false, "experiment did not run");
    verdict(7, "CKA distinction (FedAvg)", false, "experiment did not run");
  }
  // Plan validation counts the C1-C7 plans too, so this runs last.
  c8_properties();
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
