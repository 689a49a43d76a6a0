#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace bolero {

// SplitMix64 finalizer. Stable across platforms; used for seeding and for
// counter-based value streams.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t kFnvOffset = 0xCBF29CE484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001B3ULL;

// FNV-1a over raw bytes.
inline std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t h = kFnvOffset) {
  for (std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = kFnvOffset) {
  return fnv1a(std::as_bytes(std::span(s.data(), s.size())), h);
}

constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) {
  return splitmix64(seed ^ splitmix64(value));
}

// Uniform double in [0, 1) from a 64-bit word (53 high bits).
constexpr double unit_double(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Unbiased integer in [0, bound) drawn from a 64-bit engine by rejection.
// std::uniform_int_distribution is implementation-defined, so splits and
// shuffles go through this instead.
template <typename Engine>
std::uint64_t bounded_draw(Engine& engine, std::uint64_t bound) {
  const std::uint64_t limit = bound == 0 ? 0 : (~std::uint64_t{0} - (~std::uint64_t{0} % bound));
  while (true) {
    const std::uint64_t x = engine();
    if (x < limit) return x % bound;
  }
}

template <typename Engine, typename Range>
void stable_shuffle(Engine& engine, Range& range) {
  using std::swap;
  for (std::size_t i = range.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(bounded_draw(engine, i));
    swap(range[i - 1], range[j]);
  }
}

std::string hex64(std::uint64_t value);

}  // namespace bolero
