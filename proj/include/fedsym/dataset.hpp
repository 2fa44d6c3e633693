#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace fedsym {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Feature rows plus labels. Row i of `features` carries `labels[i]`.
struct SampleStore {
  Matrix features;
  std::vector<int> labels;
  int classes = 0;

  std::size_t size() const { return labels.size(); }
  int dims() const { return static_cast<int>(features.cols()); }

  /// Copies the given rows (in order) into a new store with the same class count.
  SampleStore subset(const std::vector<std::int64_t>& rows) const;
};

/// Labels and per-class sample lists. by_class[c] is sorted ascending.
struct DatasetIndex {
  std::size_t n = 0;
  int classes = 0;
  std::vector<int> labels;
  std::vector<std::vector<std::int64_t>> by_class;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class BadMagic : public DatasetError {
 public:
  using DatasetError::DatasetError;
};
class TruncatedFile : public DatasetError {
 public:
  using DatasetError::DatasetError;
};
class CountMismatch : public DatasetError {
 public:
  using DatasetError::DatasetError;
};

inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;

/// Reads an MNIST-style IDX pair (ubyte images of rank 3, ubyte labels of
/// rank 1). Pixels are scaled to [0, 1]; classes = max label + 1 (at least 2).
SampleStore load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Gaussian blobs: class c is centred at separation * u_c with unit isotropic
/// noise. The directions u_c depend only on (classes, dims), so two stores
/// with different seeds share their class means. Samples are interleaved by
/// class (sample i has label i % classes).
SampleStore synth_classification(int classes, int n_per_class, int dims, double separation,
                                 std::uint64_t seed);

/// Unit class directions used by synth_classification (row c = u_c).
Matrix class_directions(int classes, int dims);

DatasetIndex index_of(const SampleStore& store);
DatasetIndex index_of_labels(const std::vector<int>& labels, int classes);

}  // namespace fedsym
