#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace stf {

/// Stream roles used to derive independent per-run generators. Truth and
/// observation-noise streams stay fixed no matter which estimators run.
namespace rng_role {
inline constexpr std::uint64_t kTruth = 1;
inline constexpr std::uint64_t kNoise = 2;
inline constexpr std::uint64_t kEstimator = 3;
}  // namespace rng_role

/// splitmix64-style mix of (seed, run index, role) into a generator seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t run_index, std::uint64_t role);

/// FNV-1a hash used to give each named estimator its own stream role.
std::uint64_t name_role(std::string_view name);

/// Deterministic random stream. Gaussian draws use Box-Muller on top of
/// mt19937_64 so the sequence does not depend on the standard library's
/// normal_distribution implementation.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}
  RngStream(std::uint64_t seed, std::uint64_t run_index, std::uint64_t role)
      : engine_(mix_seed(seed, run_index, role)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Standard normal draw.
  double gaussian();

  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace stf
