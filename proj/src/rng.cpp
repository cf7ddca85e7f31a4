#include "stf/rng.hpp"

#include <cmath>

namespace stf {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t run_index, std::uint64_t role) {
  std::uint64_t state = seed;
  std::uint64_t a = splitmix64(state);
  state ^= run_index * 0xd1342543de82ef95ULL;
  std::uint64_t b = splitmix64(state);
  state ^= role * 0xaf251af3b0f025b5ULL;
  std::uint64_t c = splitmix64(state);
  return a ^ (b << 1) ^ c;
}

std::uint64_t name_role(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  // keep clear of the reserved low roles
  return (h | 0x100ULL);
}

double RngStream::gaussian() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // Box-Muller; 1-u keeps the log argument in (0, 1].
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

}  // namespace stf
