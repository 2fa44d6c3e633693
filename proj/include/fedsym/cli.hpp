#pragma once

#include "fedsym/dataset.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace fedsym::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitDomain = 2;

/// `synthetic:l=10,n=500,d=16,sep=4[,seed=1][,test_n=100]` or
/// `idx:images=PATH,labels=PATH[,test_images=PATH,test_labels=PATH]`.
struct DatasetSpec {
  enum class Kind { Synthetic, Idx } kind = Kind::Synthetic;
  int classes = 10;
  int n_per_class = 500;
  int dims = 16;
  double separation = 4.0;
  std::uint64_t seed = 1;
  int test_per_class = 100;
  std::string images, labels, test_images, test_labels;
};

/// Throws std::invalid_argument on malformed specs.
DatasetSpec parse_dataset_spec(const std::string& text);

SampleStore load_train(const DatasetSpec& spec);
/// Synthetic test data shares the class means of the training data but uses
/// an independent noise stream.
SampleStore load_test(const DatasetSpec& spec);

/// `start:stop:step`, stop inclusive. Throws std::invalid_argument.
std::vector<double> parse_range(const std::string& text);

/// Entry point behind the `fedsym` binary. args[0] is the program name.
/// Returns 0 on success, 1 on usage errors, 2 on domain errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fedsym::cli
