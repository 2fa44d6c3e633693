#include "fedsym/cli.hpp"

#include "fedsym/cka.hpp"
#include "fedsym/flsim.hpp"
#include "fedsym/partition.hpp"
#include "fedsym/plan_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace fedsym::cli {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string fixed6(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string short_number(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  if (!text.empty() && text.back() == sep) parts.emplace_back();
  return parts;
}

double to_double(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || !std::isfinite(v)) throw std::invalid_argument("bad number for " + what + ": '" + s + "'");
  return v;
}

long long to_int(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw std::invalid_argument("bad integer for " + what + ": '" + s + "'");
  return v;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

fs::path sibling(const fs::path& out, const std::string& extension) {
  auto p = out;
  return p.replace_extension(extension);
}

void write_config(const fs::path& out, const ordered_json& config) {
  write_text(sibling(out, ".config.json"), config.dump(2) + "\n");
}

std::string report_csv(const HeterogeneityReport& r) {
  std::ostringstream s;
  s << "client,beta\n";
  for (std::size_t i = 0; i < r.per_client_beta.size(); ++i) s << i << ',' << fixed6(r.per_client_beta[i]) << '\n';
  s << "min,max,mean,std\n";
  s << fixed6(r.min) << ',' << fixed6(r.max) << ',' << fixed6(r.mean) << ',' << fixed6(r.std) << '\n';
  return s.str();
}

std::string rounds_csv(const RoundLog& log) {
  std::ostringstream s;
  s << "round,accuracy,mean_train_loss\n";
  for (const auto& r : log) s << r.round << ',' << fixed6(r.accuracy) << ',' << fixed6(r.mean_train_loss) << '\n';
  return s.str();
}

double plan_index(const PartitionPlan& plan) {
  switch (plan.method) {
    case Method::FedSym:
      return plan.params.beta;
    case Method::Dirichlet:
      return plan.params.alpha;
    case Method::QuantityLabel:
      return plan.params.labels_per_client;
  }
  return 0.0;
}

// Options shared by several subcommands.
struct Common {
  std::string dataset;
  std::uint64_t seed = 0;
  std::string out;
};

struct PartitionArgs {
  Common common;
  std::string method;
  double beta = 0.0, alpha = 0.0, eps = 1e-3;
  int max_iter = 100;
  int labels_per_client = 0;
  std::int64_t samples_per_client = 0;
  int clients = 10;
  std::string report;
  CLI::Option *beta_opt = nullptr, *alpha_opt = nullptr, *labels_opt = nullptr, *s_opt = nullptr;
};

struct SweepArgs {
  Common common;
  std::string method = "dirichlet";
  std::string range;
  double eps = 1e-3;
  int clients = 10;
};

struct TrainArgs {
  Common common;
  std::string plan;
  std::string strategy;
  TrainConfig cfg;
};

struct CkaArgs {
  Common common;
  std::vector<std::string> models;
  std::vector<std::string> labels;
};

int cmd_partition(const PartitionArgs& a, std::ostream& out, std::ostream& err) {
  const auto method = parse_method(a.method);
  if (method == Method::FedSym && a.beta_opt->count() == 0) throw UsageError("--beta is required for --method fedsym");
  if (method == Method::Dirichlet && a.alpha_opt->count() == 0) throw UsageError("--alpha is required for --method dirichlet");
  if (method == Method::QuantityLabel && a.labels_opt->count() == 0)
    throw UsageError("--labels-per-client is required for --method quantity");
  const auto spec = parse_dataset_spec(a.common.dataset);

  const auto index = index_of(load_train(spec));
  PartitionPlan plan;
  ordered_json config;
  config["command"] = "partition";
  config["dataset"] = a.common.dataset;
  config["method"] = method_name(method);
  switch (method) {
    case Method::FedSym: {
      FedSymOptions opts{a.eps, a.max_iter, std::nullopt};
      if (a.s_opt->count() > 0) opts.samples_per_client = a.samples_per_client;
      plan = fedsym_partition(index, a.clients, a.beta, a.common.seed, opts);
      config["beta"] = a.beta;
      config["eps"] = a.eps;
      config["max_iter"] = a.max_iter;
      config["samples_per_client"] = opts.samples_per_client ? ordered_json(*opts.samples_per_client) : ordered_json();
      break;
    }
    case Method::Dirichlet:
      plan = dirichlet_partition(index, a.clients, a.alpha, a.common.seed);
      config["alpha"] = a.alpha;
      break;
    case Method::QuantityLabel:
      plan = quantity_label_partition(index, a.clients, a.labels_per_client, a.common.seed);
      config["labels_per_client"] = a.labels_per_client;
      break;
  }
  config["index"] = plan_index(plan);
  config["clients"] = a.clients;
  config["seed"] = a.common.seed;

  const fs::path plan_path = a.common.out;
  const fs::path report_path = a.report.empty() ? sibling(plan_path, ".report.csv") : fs::path(a.report);
  const auto report = heterogeneity_report(plan);
  write_plan(plan, plan_path);
  write_text(report_path, report_csv(report));
  config["outputs"] = {{"plan", plan_path.string()}, {"report", report_path.string()}};
  write_config(plan_path, config);

  for (int id : report.empty_clients) err << "warning: client " << id << " received no samples (beta reported as 0)\n";
  out << method_name(method) << " plan: " << plan.clients.size() << " clients, beta min " << fixed6(report.min)
      << " max " << fixed6(report.max) << " mean " << fixed6(report.mean) << " std " << fixed6(report.std) << '\n';
  return kExitOk;
}

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
  const auto method = parse_method(a.method);
  if (method == Method::QuantityLabel) throw UsageError("sweep supports --method dirichlet or fedsym");
  const auto values = parse_range(a.range);
  const auto spec = parse_dataset_spec(a.common.dataset);
  const auto index = index_of(load_train(spec));

  std::vector<SweepRow> rows;
  if (method == Method::Dirichlet) {
    for (double v : values)
      if (!(v > 0.0)) throw UsageError("Dirichlet alphas must be positive");
    rows = alpha_sweep(index, a.clients, values, a.common.seed);
  } else {
    rows = beta_sweep(index, a.clients, values, a.common.seed, {a.eps, 100, std::nullopt});
  }

  std::ostringstream csv;
  csv << "index,mean_beta\n";
  for (const auto& r : rows) csv << short_number(r.index) << ',' << fixed6(r.mean_beta) << '\n';
  if (a.common.out.empty()) {
    out << csv.str();
  } else {
    write_text(a.common.out, csv.str());
    ordered_json config;
    config["command"] = "sweep";
    config["dataset"] = a.common.dataset;
    config["method"] = method_name(method);
    config["range"] = a.range;
    config["eps"] = a.eps;
    config["clients"] = a.clients;
    config["seed"] = a.common.seed;
    config["outputs"] = {{"sweep", a.common.out}};
    write_config(a.common.out, config);
  }
  return kExitOk;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const auto strategy = parse_strategy(a.strategy);
  a.cfg.validate();
  const auto spec = parse_dataset_spec(a.common.dataset);
  const auto plan = read_plan(a.plan);
  const auto train = load_train(spec);
  const auto test = load_test(spec);
  validate_plan(plan, index_of(train));

  auto cfg = a.cfg;
  cfg.seed = a.common.seed;
  const auto result = run_federation(plan, train, test, strategy, cfg);

  const fs::path log_path = a.common.out;
  const fs::path model_path = sibling(log_path, ".model");
  write_text(log_path, rounds_csv(result.log));
  save_model(result.model, model_path);

  ordered_json config;
  config["command"] = "train";
  config["dataset"] = a.common.dataset;
  config["plan"] = a.plan;
  config["method"] = method_name(plan.method);
  config["index"] = plan_index(plan);
  config["strategy"] = strategy_name(strategy);
  config["lr"] = cfg.lr;
  config["lr_decay"] = cfg.lr_decay;
  config["momentum"] = cfg.momentum;
  config["batch_size"] = cfg.batch_size;
  config["local_epochs"] = cfg.local_epochs;
  config["rounds"] = cfg.rounds;
  config["mu"] = cfg.prox_mu;
  config["hidden"] = cfg.hidden;
  config["seed"] = cfg.seed;
  config["outputs"] = {{"rounds", log_path.string()}, {"model", model_path.string()}};
  write_config(log_path, config);

  out << strategy_name(strategy) << " final accuracy " << fixed6(result.log.back().accuracy) << '\n';
  return kExitOk;
}

std::string default_label(const fs::path& model) {
  const auto sidecar = sibling(model, ".config.json");
  std::ifstream in(sidecar);
  if (in) {
    try {
      const auto config = ordered_json::parse(in);
      if (config.contains("index")) return short_number(config["index"].get<double>());
    } catch (const nlohmann::json::exception&) {
    }
  }
  return model.stem().string();
}

int cmd_cka(const CkaArgs& a, std::ostream& out) {
  if (a.models.size() < 2) throw UsageError("cka needs at least two --models");
  if (!a.labels.empty() && a.labels.size() != a.models.size()) throw UsageError("--labels must name every model");
  const auto spec = parse_dataset_spec(a.common.dataset);
  const auto test = load_test(spec);

  std::vector<ModelParams> models;
  std::vector<std::string> labels = a.labels;
  for (const auto& path : a.models) {
    models.push_back(load_model(path));
    if (a.labels.empty()) labels.push_back(default_label(path));
  }
  if (models.front().shape.inputs != test.dims()) throw ShapeMismatch("models do not match the test set width");
  const auto matrix = cka_matrix(models, test, labels);

  std::ostringstream csv;
  write_cka_csv(matrix, csv);
  if (a.common.out.empty()) {
    out << csv.str();
  } else {
    write_text(a.common.out, csv.str());
    ordered_json config;
    config["command"] = "cka";
    config["dataset"] = a.common.dataset;
    config["models"] = a.models;
    config["labels"] = labels;
    config["outputs"] = {{"cka", a.common.out}};
    write_config(a.common.out, config);
  }
  return kExitOk;
}

}  // namespace

DatasetSpec parse_dataset_spec(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("dataset spec needs a 'synthetic:' or 'idx:' prefix");
  const auto kind = text.substr(0, colon);
  std::map<std::string, std::string> kv;
  for (const auto& item : split(text.substr(colon + 1), ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("dataset spec item '" + item + "' is not key=value");
    kv[item.substr(0, eq)] = item.substr(eq + 1);
  }

  DatasetSpec spec;
  auto take = [&](const std::string& key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    auto v = it->second;
    kv.erase(it);
    return v;
  };
  if (kind == "synthetic") {
    spec.kind = DatasetSpec::Kind::Synthetic;
    if (auto v = take("l")) spec.classes = static_cast<int>(to_int(*v, "l"));
    if (auto v = take("n")) spec.n_per_class = static_cast<int>(to_int(*v, "n"));
    if (auto v = take("d")) spec.dims = static_cast<int>(to_int(*v, "d"));
    if (auto v = take("sep")) spec.separation = to_double(*v, "sep");
    if (auto v = take("seed")) spec.seed = static_cast<std::uint64_t>(to_int(*v, "seed"));
    if (auto v = take("test_n")) spec.test_per_class = static_cast<int>(to_int(*v, "test_n"));
    if (spec.classes < 2 || spec.n_per_class < 1 || spec.dims < 1 || spec.separation < 0.0 || spec.test_per_class < 1)
      throw std::invalid_argument("synthetic dataset needs l >= 2, n >= 1, d >= 1, sep >= 0, test_n >= 1");
  } else if (kind == "idx") {
    spec.kind = DatasetSpec::Kind::Idx;
    auto images = take("images");
    auto labels = take("labels");
    if (!images || !labels) throw std::invalid_argument("idx dataset needs images= and labels=");
    spec.images = *images;
    spec.labels = *labels;
    if (auto v = take("test_images")) spec.test_images = *v;
    if (auto v = take("test_labels")) spec.test_labels = *v;
    if (spec.test_images.empty() != spec.test_labels.empty())
      throw std::invalid_argument("idx test split needs both test_images= and test_labels=");
  } else {
    throw std::invalid_argument("unknown dataset kind '" + kind + "'");
  }
  if (!kv.empty()) throw std::invalid_argument("unknown dataset spec key '" + kv.begin()->first + "'");
  return spec;
}

SampleStore load_train(const DatasetSpec& spec) {
  if (spec.kind == DatasetSpec::Kind::Idx) return load_idx(spec.images, spec.labels);
  return synth_classification(spec.classes, spec.n_per_class, spec.dims, spec.separation, spec.seed);
}

SampleStore load_test(const DatasetSpec& spec) {
  if (spec.kind == DatasetSpec::Kind::Idx) {
    if (spec.test_images.empty()) throw std::invalid_argument("idx dataset spec has no test split");
    return load_idx(spec.test_images, spec.test_labels);
  }
  return synth_classification(spec.classes, spec.test_per_class, spec.dims, spec.separation,
                              spec.seed ^ 0x9e3779b97f4a7c15ULL);
}

std::vector<double> parse_range(const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.size() != 3) throw std::invalid_argument("range must be start:stop:step");
  const double start = to_double(parts[0], "range start");
  const double stop = to_double(parts[1], "range stop");
  const double step = to_double(parts[2], "range step");
  if (!(step > 0.0)) throw std::invalid_argument("range step must be positive");
  if (stop < start) throw std::invalid_argument("range stop precedes start");
  std::vector<double> values;
  for (long long i = 0;; ++i) {
    const double v = start + static_cast<double>(i) * step;
    if (v > stop + 1e-9 * step) break;
    values.push_back(v);
  }
  return values;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Entropy-controlled federated data partitioning and benchmarking", "fedsym"};
  app.require_subcommand(1);

  auto add_common = [](CLI::App* cmd, Common& c, bool dataset_required, bool out_required) {
    auto* d = cmd->add_option("--dataset", c.dataset, "synthetic:k=v,... or idx:images=..,labels=..");
    if (dataset_required) d->required();
    cmd->add_option("--seed", c.seed, "Experiment seed")->capture_default_str();
    auto* o = cmd->add_option("--out", c.out, "Output path");
    if (out_required) o->required();
  };

  PartitionArgs pa;
  auto* partition = app.add_subcommand("partition", "Partition a dataset across clients");
  add_common(partition, pa.common, true, true);
  partition->add_option("--method", pa.method, "fedsym | dirichlet | quantity")->required();
  pa.beta_opt = partition->add_option("--beta", pa.beta, "Target entropy balance (fedsym)")->check(CLI::Range(0.0, 1.0));
  pa.alpha_opt = partition->add_option("--alpha", pa.alpha, "Dirichlet concentration")->check(CLI::PositiveNumber);
  pa.labels_opt = partition->add_option("--labels-per-client", pa.labels_per_client, "Labels per client (quantity)");
  pa.s_opt = partition->add_option("--samples-per-client", pa.samples_per_client, "FedSym S override");
  partition->add_option("--eps", pa.eps, "FedSym balance tolerance")->capture_default_str()->check(CLI::PositiveNumber);
  partition->add_option("--max-iter", pa.max_iter, "FedSym solver iteration budget")->capture_default_str();
  partition->add_option("--clients", pa.clients, "Number of clients")->capture_default_str()->check(CLI::PositiveNumber);
  partition->add_option("--report", pa.report, "Report CSV (default: <out>.report.csv)");

  SweepArgs sa;
  auto* sweep = app.add_subcommand("sweep", "Mean entropy balance over a range of heterogeneity indices");
  add_common(sweep, sa.common, true, false);
  sweep->add_option("--method", sa.method, "dirichlet | fedsym")->capture_default_str();
  sweep->add_option("--range", sa.range, "start:stop:step")->required();
  sweep->add_option("--eps", sa.eps, "FedSym balance tolerance")->capture_default_str()->check(CLI::PositiveNumber);
  sweep->add_option("--clients", sa.clients, "Number of clients")->capture_default_str()->check(CLI::PositiveNumber);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Run federated training on a partition plan");
  add_common(train, ta.common, true, true);
  train->add_option("--plan", ta.plan, "Partition plan JSON")->required();
  train->add_option("--strategy", ta.strategy, "fedavg | fedprox | scaffold")->required();
  train->add_option("--lr", ta.cfg.lr)->capture_default_str();
  train->add_option("--lr-decay", ta.cfg.lr_decay)->capture_default_str();
  train->add_option("--momentum", ta.cfg.momentum)->capture_default_str();
  train->add_option("--batch-size", ta.cfg.batch_size)->capture_default_str();
  train->add_option("--local-epochs", ta.cfg.local_epochs)->capture_default_str();
  train->add_option("--rounds", ta.cfg.rounds)->capture_default_str();
  train->add_option("--mu", ta.cfg.prox_mu, "FedProx proximal weight")->capture_default_str();
  train->add_option("--hidden", ta.cfg.hidden, "Hidden units")->capture_default_str();
  train->add_option("--threads", ta.cfg.threads, "Clients trained concurrently (0 = all cores)")->capture_default_str();

  CkaArgs ca;
  auto* cka = app.add_subcommand("cka", "Pairwise linear CKA of model outputs on the test split");
  add_common(cka, ca.common, true, false);
  cka->add_option("--models", ca.models, "Model files")->required()->delimiter(',');
  cka->add_option("--labels", ca.labels, "Row/column labels")->delimiter(',');

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*partition) return cmd_partition(pa, out, err);
    if (*sweep) return cmd_sweep(sa, out);
    if (*train) return cmd_train(ta, out);
    if (*cka) return cmd_cka(ca, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const PartitionInfeasible& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomain;
  } catch (const DatasetError& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomain;
  } catch (const ShapeMismatch& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomain;
  } catch (const EmptyShard& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomain;
  } catch (const DegenerateInput& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomain;
  } catch (const InvalidDistribution& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomain;
  } catch (const std::invalid_argument& e) {
    // Bad flag values caught after parsing (unknown method/strategy, malformed spec or range).
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomain;
  }
  return kExitUsage;
}

}  // namespace fedsym::cli
