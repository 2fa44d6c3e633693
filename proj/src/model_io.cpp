#include "fedsym/flsim.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace fedsym {

namespace {

constexpr std::array<char, 4> kMagic{'F', 'S', 'Y', 'M'};

void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(const std::vector<char>& in, std::size_t offset, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint64_t{static_cast<unsigned char>(in[offset + i])} << (8 * i);
  return v;
}

}  // namespace

void save_model(const ModelParams& params, const std::filesystem::path& path) {
  if (params.values.size() != params.shape.size()) throw ShapeMismatch("parameter vector length does not match its shape");
  std::vector<char> bytes(kMagic.begin(), kMagic.end());
  put_u32(bytes, static_cast<std::uint32_t>(params.shape.inputs));
  put_u32(bytes, static_cast<std::uint32_t>(params.shape.hidden));
  put_u32(bytes, static_cast<std::uint32_t>(params.shape.classes));
  for (double v : params.values) put_u64(bytes, std::bit_cast<std::uint64_t>(v));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ModelParams load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelFormatError("cannot open " + path.string());
  const std::vector<char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (bytes.size() < 16) throw ModelFormatError(path.string() + ": file shorter than the model header");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) throw ModelFormatError(path.string() + ": bad model magic");

  ModelParams p;
  p.shape = {static_cast<int>(get_le(bytes, 4, 4)), static_cast<int>(get_le(bytes, 8, 4)),
             static_cast<int>(get_le(bytes, 12, 4))};
  const auto n = static_cast<std::size_t>(p.shape.size());
  if (bytes.size() != 16 + 8 * n)
    throw ModelFormatError(path.string() + ": parameter block does not match the header shape");
  p.values.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) p.values[static_cast<Eigen::Index>(i)] = std::bit_cast<double>(get_le(bytes, 16 + 8 * i, 8));
  return p;
}

}  // namespace fedsym
