#include "doctest.h"

#include "fedsym/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

using namespace fedsym;
namespace fs = std::filesystem;

namespace {

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<unsigned char>(v >> s));
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                           static_cast<std::streamsize>(bytes.size()));
}

struct IdxPair {
  fs::path images, labels;
};

IdxPair make_idx(const fs::path& dir, std::uint32_t n, std::uint32_t rows, std::uint32_t cols, unsigned seed) {
  std::mt19937 rng(seed);
  std::vector<unsigned char> img, lab;
  put_be32(img, kIdxImageMagic);
  put_be32(img, n);
  put_be32(img, rows);
  put_be32(img, cols);
  for (std::uint32_t i = 0; i < n * rows * cols; ++i) img.push_back(static_cast<unsigned char>(rng() & 0xff));
  put_be32(lab, kIdxLabelMagic);
  put_be32(lab, n);
  for (std::uint32_t i = 0; i < n; ++i) lab.push_back(static_cast<unsigned char>(rng() % 10));
  fs::create_directories(dir);
  IdxPair p{dir / "img.idx", dir / "lab.idx"};
  write_bytes(p.images, img);
  write_bytes(p.labels, lab);
  return p;
}

// Minimal reference reader: one pixel or label at a time with C stdio.
unsigned ref_byte(const fs::path& p, long offset) {
  std::FILE* f = std::fopen(p.string().c_str(), "rb");
  REQUIRE(f != nullptr);
  std::fseek(f, offset, SEEK_SET);
  const int c = std::fgetc(f);
  std::fclose(f);
  REQUIRE(c != EOF);
  return static_cast<unsigned>(c);
}

fs::path scratch(const char* name) {
  auto d = fs::temp_directory_path() / "fedsym_test_dataset" / name;
  fs::remove_all(d);
  return d;
}

// Nearest class-mean classifier fitted on `train`, scored on `test`.
double nearest_centroid_accuracy(const SampleStore& train, const SampleStore& test) {
  Matrix means = Matrix::Zero(train.classes, train.dims());
  std::vector<int> n(static_cast<std::size_t>(train.classes), 0);
  for (std::size_t i = 0; i < train.size(); ++i) {
    means.row(train.labels[i]) += train.features.row(static_cast<Eigen::Index>(i));
    ++n[static_cast<std::size_t>(train.labels[i])];
  }
  for (int c = 0; c < train.classes; ++c) means.row(c) /= n[static_cast<std::size_t>(c)];
  int hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    Eigen::Index best = 0;
    (means.rowwise() - test.features.row(static_cast<Eigen::Index>(i))).rowwise().squaredNorm().minCoeff(&best);
    hits += best == test.labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

}  // namespace

TEST_CASE("idx loader agrees with the reference reader") {
  const auto p = make_idx(scratch("ok"), 25, 4, 3, 9);
  const auto store = load_idx(p.images, p.labels);
  REQUIRE(store.size() == 25);
  REQUIRE(store.dims() == 12);
  for (long i = 0; i < 10; ++i) {
    CHECK(store.labels[static_cast<std::size_t>(i)] == static_cast<int>(ref_byte(p.labels, 8 + i)));
    for (long j = 0; j < 12; ++j)
      CHECK(store.features(i, j) == ref_byte(p.images, 16 + i * 12 + j) / 255.0);
  }
  int top = 0;
  for (int l : store.labels) top = std::max(top, l);
  CHECK(store.classes == top + 1);
}

TEST_CASE("idx pixel scaling") {
  const auto dir = scratch("scale");
  fs::create_directories(dir);
  std::vector<unsigned char> img, lab;
  put_be32(img, kIdxImageMagic);
  put_be32(img, 1);
  put_be32(img, 1);
  put_be32(img, 3);
  img.insert(img.end(), {0, 128, 255});
  put_be32(lab, kIdxLabelMagic);
  put_be32(lab, 1);
  lab.push_back(0);
  write_bytes(dir / "i", img);
  write_bytes(dir / "l", lab);
  const auto s = load_idx(dir / "i", dir / "l");
  CHECK(s.features(0, 0) == 0.0);
  CHECK(s.features(0, 1) == doctest::Approx(128.0 / 255.0));
  CHECK(s.features(0, 2) == 1.0);
  CHECK(s.classes == 2);  // never below two
}

TEST_CASE("idx error taxonomy") {
  const auto dir = scratch("bad");
  const auto p = make_idx(dir, 5, 2, 2, 1);

  SUBCASE("labels passed as images") { CHECK_THROWS_AS(load_idx(p.labels, p.labels), BadMagic); }
  SUBCASE("images passed as labels") { CHECK_THROWS_AS(load_idx(p.images, p.images), BadMagic); }
  SUBCASE("truncated mid-record") {
    fs::resize_file(p.images, 16 + 4 * 3 + 2);
    CHECK_THROWS_AS(load_idx(p.images, p.labels), TruncatedFile);
  }
  SUBCASE("truncated header") {
    fs::resize_file(p.labels, 6);
    CHECK_THROWS_AS(load_idx(p.images, p.labels), TruncatedFile);
  }
  SUBCASE("count mismatch") {
    const auto q = make_idx(dir / "other", 7, 2, 2, 2);
    CHECK_THROWS_AS(load_idx(p.images, q.labels), CountMismatch);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_idx(dir / "nope", p.labels), DatasetError); }
}

TEST_CASE("synthetic data is a pure function of its arguments") {
  const auto a = synth_classification(10, 500, 16, 4.0, 7);
  const auto b = synth_classification(10, 500, 16, 4.0, 7);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  CHECK(a.size() == 5000);
  CHECK(a.dims() == 16);

  const auto c = synth_classification(10, 500, 16, 4.0, 8);
  CHECK(a.features != c.features);
  CHECK(a.labels == c.labels);
}

TEST_CASE("class directions are unit length and distinct") {
  for (int l : {2, 3, 10, 17})
    for (int d : {1, 2, 16}) {
      const auto u = class_directions(l, d);
      for (int c = 0; c < l; ++c) CHECK(u.row(c).norm() == doctest::Approx(1.0));
      if (d >= 2)
        for (int a = 0; a < l; ++a)
          for (int b = a + 1; b < l; ++b) CHECK((u.row(a) - u.row(b)).norm() > 1e-6);
    }
}

TEST_CASE("consecutive labels are not spatial neighbours") {
  const auto u = class_directions(10, 16);
  const double step = (u.row(0) - u.row(1)).norm();
  double nearest = 1e9;
  for (int c = 1; c < 10; ++c) nearest = std::min(nearest, (u.row(0) - u.row(c)).norm());
  CHECK(step > nearest + 1e-9);
}

TEST_CASE("separation controls difficulty") {
  const auto far_train = synth_classification(10, 200, 16, 50.0, 1);
  const auto far_test = synth_classification(10, 100, 16, 50.0, 2);
  CHECK(nearest_centroid_accuracy(far_train, far_test) > 0.99);

  const auto flat_train = synth_classification(10, 500, 16, 0.0, 1);
  const auto flat_test = synth_classification(10, 500, 16, 0.0, 2);
  CHECK(nearest_centroid_accuracy(flat_train, flat_test) == doctest::Approx(0.1).epsilon(0.3));
}

TEST_CASE("index construction") {
  const auto idx = index_of_labels({0, 1, 0, 1}, 2);
  CHECK(idx.by_class == std::vector<std::vector<std::int64_t>>{{0, 2}, {1, 3}});

  const auto single = index_of_labels({0, 0, 0}, 2);
  CHECK(single.by_class[0].size() == 3);
  CHECK(single.by_class[1].empty());

  CHECK_THROWS_AS(index_of_labels({0, 2}, 2), std::invalid_argument);

  const auto syn = index_of(synth_classification(10, 500, 16, 4.0, 1));
  std::size_t total = 0;
  for (const auto& list : syn.by_class) {
    CHECK(list.size() == 500);
    CHECK(std::is_sorted(list.begin(), list.end()));
    total += list.size();
  }
  CHECK(total == syn.n);
}

TEST_CASE("subset copies rows in order") {
  const auto s = synth_classification(3, 4, 2, 1.0, 1);
  const auto sub = s.subset({5, 0, 5});
  CHECK(sub.size() == 3);
  CHECK(sub.classes == 3);
  CHECK(sub.features.row(0) == s.features.row(5));
  CHECK(sub.features.row(1) == s.features.row(0));
  CHECK(sub.labels == std::vector<int>{2, 0, 2});
}
