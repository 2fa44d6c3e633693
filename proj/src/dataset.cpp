#include "fedsym/dataset.hpp"

#include "fedsym/rng.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <sstream>

namespace fedsym {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
  if (bytes.size() < offset + 4) throw TruncatedFile("IDX header cut short in " + path.string());
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

struct IdxArray {
  std::vector<std::uint32_t> shape;
  std::size_t data_offset = 0;
};

IdxArray parse_header(const std::vector<std::uint8_t>& bytes, std::uint32_t expected_magic,
                      const std::filesystem::path& path) {
  const auto magic = read_be32(bytes, 0, path);
  if (magic != expected_magic) {
    std::ostringstream msg;
    msg << path.string() << ": IDX magic 0x" << std::hex << magic << ", expected 0x" << expected_magic;
    throw BadMagic(msg.str());
  }
  IdxArray arr;
  const auto rank = magic & 0xff;
  for (std::uint32_t i = 0; i < rank; ++i) arr.shape.push_back(read_be32(bytes, 4 + 4 * i, path));
  arr.data_offset = 4 + 4 * rank;

  std::size_t elements = 1;
  for (auto s : arr.shape) elements *= s;
  if (bytes.size() < arr.data_offset + elements) {
    std::ostringstream msg;
    msg << path.string() << ": expected " << elements << " data bytes, found "
        << bytes.size() - std::min(bytes.size(), arr.data_offset);
    throw TruncatedFile(msg.str());
  }
  return arr;
}

}  // namespace

SampleStore SampleStore::subset(const std::vector<std::int64_t>& rows) const {
  SampleStore out;
  out.classes = classes;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(rows[i]);
    out.labels.push_back(labels[rows[i]]);
  }
  return out;
}

SampleStore load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto image_bytes = read_file(images);
  const auto label_bytes = read_file(labels);
  const auto img = parse_header(image_bytes, kIdxImageMagic, images);
  const auto lab = parse_header(label_bytes, kIdxLabelMagic, labels);

  const std::size_t n = img.shape[0];
  if (lab.shape[0] != n) {
    std::ostringstream msg;
    msg << images.string() << " holds " << n << " images but " << labels.string() << " holds "
        << lab.shape[0] << " labels";
    throw CountMismatch(msg.str());
  }
  const std::size_t dims = std::size_t{img.shape[1]} * img.shape[2];

  SampleStore store;
  store.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dims));
  const std::uint8_t* px = image_bytes.data() + img.data_offset;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < dims; ++j)
      store.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = px[i * dims + j] / 255.0;

  store.labels.resize(n);
  int top = 1;
  for (std::size_t i = 0; i < n; ++i) {
    store.labels[i] = label_bytes[lab.data_offset + i];
    top = std::max(top, store.labels[i]);
  }
  store.classes = top + 1;
  return store;
}

Matrix class_directions(int classes, int dims) {
  if (classes < 2 || dims < 1) throw std::invalid_argument("class_directions needs classes >= 2 and dims >= 1");
  Matrix u = Matrix::Zero(classes, dims);
  if (dims == 1) {
    for (int c = 0; c < classes; ++c) u(c, 0) = c % 2 == 0 ? 1.0 : -1.0;
    return u;
  }
  // Evenly spaced slots on the circle spanned by the first two axes. Class c
  // takes slot c*stride mod l so consecutive labels are not spatial neighbours.
  int stride = classes / 2;
  while (std::gcd(stride, classes) != 1) --stride;
  for (int c = 0; c < classes; ++c) {
    const int slot = static_cast<int>((static_cast<long long>(c) * stride) % classes);
    const double angle = 2.0 * std::numbers::pi * slot / classes;
    u(c, 0) = std::cos(angle);
    u(c, 1) = std::sin(angle);
  }
  return u;
}

SampleStore synth_classification(int classes, int n_per_class, int dims, double separation,
                                 std::uint64_t seed) {
  if (classes < 2 || n_per_class < 1 || dims < 1 || !(separation >= 0.0))
    throw std::invalid_argument("synth_classification: need classes >= 2, n_per_class >= 1, dims >= 1, separation >= 0");
  const Matrix centers = separation * class_directions(classes, dims);

  SampleStore store;
  store.classes = classes;
  const auto n = static_cast<Eigen::Index>(classes) * n_per_class;
  store.features.resize(n, dims);
  store.labels.resize(static_cast<std::size_t>(n));

  auto rng = make_stream(seed, {stream::kSynthetic});
  std::normal_distribution<double> normal;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % classes);
    store.labels[static_cast<std::size_t>(i)] = c;
    for (int j = 0; j < dims; ++j) store.features(i, j) = centers(c, j) + normal(rng);
  }
  return store;
}

DatasetIndex index_of_labels(const std::vector<int>& labels, int classes) {
  if (classes < 2) throw std::invalid_argument("dataset index needs at least two classes");
  DatasetIndex index;
  index.n = labels.size();
  index.classes = classes;
  index.labels = labels;
  index.by_class.resize(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) throw std::invalid_argument("label out of range");
    index.by_class[labels[i]].push_back(static_cast<std::int64_t>(i));
  }
  return index;
}

DatasetIndex index_of(const SampleStore& store) { return index_of_labels(store.labels, store.classes); }

}  // namespace fedsym
