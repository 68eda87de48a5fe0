#pragma once

#include <cstdint>
#include <random>

namespace sonec {

// Stateless 64-bit mixer (splitmix64). Used to derive independent substream
// seeds from (master_seed, run index, stream id) so that Monte Carlo runs and
// the noise sources inside a run never share generator state.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Noise-source identifiers within one run.
enum class Stream : std::uint64_t {
  topology = 1,
  omega = 2,
  coeffs = 3,
  regressors = 4,
  model_noise = 5,      // v
  measurement_noise = 6,  // theta
  pilot = 7,
  link_noise = 8,
};

inline std::uint64_t substream_seed(std::uint64_t master, std::uint64_t run,
                                    Stream stream) {
  const std::uint64_t run_key = splitmix64(master ^ splitmix64(run + 1));
  return splitmix64(run_key ^ (static_cast<std::uint64_t>(stream) * 0x9e3779b97f4a7c15ULL));
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

}  // namespace sonec
