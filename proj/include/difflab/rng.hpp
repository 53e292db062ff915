#ifndef DIFFLAB_RNG_HPP
#define DIFFLAB_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include <Eigen/Dense>

namespace difflab {

// SplitMix64 step, used to derive independent stream seeds from a base seed.
// Fixed constants from Steele et al.; the point is a well-mixed 64-bit avalanche,
// so seed+1 and seed give unrelated streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic random source. Gaussian draws use Box-Muller instead of
// std::normal_distribution because the latter's algorithm is implementation
// defined; artifacts must be bit-identical for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Derives the seed for an independent sub-stream (e.g. solver vs corrector
  // noise) from a shared base seed. Streams with different ids never collide
  // in practice thanks to the splitmix64 avalanche.
  static std::uint64_t stream_seed(std::uint64_t base, std::uint64_t stream_id) {
    std::uint64_t s = base + 0x632be59bd9b4e019ULL * (stream_id + 1);
    return splitmix64(s);
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in (0, 1]; never returns 0 so log() below is safe.
  double uniform() {
    const std::uint64_t bits = engine_() >> 11;  // 53 random bits
    return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
  }

  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  Eigen::VectorXd gaussian_vector(Eigen::Index d) {
    Eigen::VectorXd v(d);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = gaussian();
    return v;
  }

  // Index in [0, n). Multiply-shift rather than std::uniform_int_distribution,
  // which is implementation defined; the bias (< n / 2^64) is irrelevant here.
  std::size_t index(std::size_t n) {
    const auto wide = static_cast<unsigned __int128>(engine_()) * static_cast<unsigned __int128>(n);
    return static_cast<std::size_t>(wide >> 64);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace difflab

#endif  // DIFFLAB_RNG_HPP
