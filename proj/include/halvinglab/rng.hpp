#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace halvinglab::rng {

/// Derive an independent 64-bit seed from a root seed, a consumer tag and a
/// counter path. Streams for distinct (tag, path) pairs never depend on the
/// order in which consumers are created.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag,
                          std::initializer_list<std::uint64_t> path = {});

/// Random stream with platform-independent transforms on top of mt19937_64.
/// The standard distributions are implementation-defined, so uniform and
/// normal draws are computed here from the raw engine output.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double low, double high) { return low + (high - low) * uniform(); }
  /// Standard normal via Box-Muller.
  double normal();
  /// Uniform integer in [0, n) without modulo bias.
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// k distinct indices from [0, n), in draw order (partial Fisher-Yates).
std::vector<int> sample_without_replacement(Stream& stream, int n, int k);

}  // namespace halvinglab::rng
