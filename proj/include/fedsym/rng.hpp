#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace fedsym {

using Rng = std::mt19937_64;

/// Independent generator keyed by (seed, tags...). Streams with different tag
/// tuples do not depend on each other or on the order they are created in.
inline Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(2 * (tags.size() + 1));
  auto push = [&](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto t : tags) push(t);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

// Stream tags, so unrelated consumers of one seed never share a stream.
namespace stream {
inline constexpr std::uint64_t kSynthetic = 0x5359'4e54;  // "SYNT"
inline constexpr std::uint64_t kFedSym = 0x4653'594d;
inline constexpr std::uint64_t kDirichlet = 0x4449'5249;
inline constexpr std::uint64_t kQuantity = 0x5155'414e;
inline constexpr std::uint64_t kInit = 0x494e'4954;
inline constexpr std::uint64_t kLocal = 0x4c4f'4341;
}  // namespace stream

}  // namespace fedsym
