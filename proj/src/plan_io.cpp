#include "fedsym/plan_io.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace fedsym {

using ordered_json = nlohmann::ordered_json;

std::string plan_to_json(const PartitionPlan& plan) {
  ordered_json params = ordered_json::object();
  switch (plan.method) {
    case Method::FedSym:
      params["beta"] = plan.params.beta;
      params["eps"] = plan.params.eps;
      params["sigma"] = plan.params.sigma;
      break;
    case Method::Dirichlet:
      params["alpha"] = plan.params.alpha;
      break;
    case Method::QuantityLabel:
      params["labels_per_client"] = plan.params.labels_per_client;
      break;
  }

  ordered_json doc;
  doc["method"] = method_name(plan.method);
  doc["params"] = std::move(params);
  doc["seed"] = plan.seed;
  doc["s_per_client"] = plan.method == Method::FedSym ? ordered_json(plan.samples_per_client) : ordered_json();
  auto& clients = doc["clients"] = ordered_json::array();
  for (const auto& shard : plan.clients) {
    ordered_json c;
    c["id"] = shard.client_id;
    c["class_counts"] = shard.class_counts;
    c["beta"] = shard.beta;
    c["sample_indices"] = shard.sample_indices;
    clients.push_back(std::move(c));
  }
  return doc.dump() + "\n";
}

PartitionPlan plan_from_json(const std::string& text) {
  try {
    const auto doc = ordered_json::parse(text);
    PartitionPlan plan;
    plan.method = parse_method(doc.at("method").get<std::string>());
    const auto& params = doc.at("params");
    plan.params.beta = params.value("beta", 0.0);
    plan.params.eps = params.value("eps", 1e-3);
    plan.params.sigma = params.value("sigma", 0.0);
    plan.params.alpha = params.value("alpha", 0.0);
    plan.params.labels_per_client = params.value("labels_per_client", 0);
    plan.seed = doc.at("seed").get<std::uint64_t>();
    if (!doc.at("s_per_client").is_null()) plan.samples_per_client = doc.at("s_per_client").get<std::int64_t>();
    for (const auto& c : doc.at("clients")) {
      ClientShard shard;
      shard.client_id = c.at("id").get<int>();
      shard.class_counts = c.at("class_counts").get<ClassCounts>();
      shard.beta = c.at("beta").get<double>();
      shard.sample_indices = c.at("sample_indices").get<std::vector<std::int64_t>>();
      plan.clients.push_back(std::move(shard));
    }
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed partition plan: ") + e.what());
  }
}

void write_plan(const PartitionPlan& plan, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << plan_to_json(plan);
}

PartitionPlan read_plan(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return plan_from_json(buf.str());
}

}  // namespace fedsym
