#pragma once

#include "fedsym/partition.hpp"

#include <filesystem>
#include <string>

namespace fedsym {

/// {"method","params","seed","s_per_client","clients":[{"id","class_counts","beta","sample_indices"}]}
/// with keys in exactly that order. s_per_client is null for non-FedSym plans.
std::string plan_to_json(const PartitionPlan& plan);
PartitionPlan plan_from_json(const std::string& text);

void write_plan(const PartitionPlan& plan, const std::filesystem::path& path);
PartitionPlan read_plan(const std::filesystem::path& path);

}  // namespace fedsym
