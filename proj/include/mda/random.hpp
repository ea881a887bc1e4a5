#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mda {

/// Seeded random stream. Every sampler takes one explicitly; independent tasks
/// (chains, imputations) get their own stream via `Rng::stream`.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream_id = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream_id),
                      static_cast<std::uint32_t>(stream_id >> 32), 0x6d646121u};
    engine_.seed(seq);
  }

  /// Independent stream `id` derived from `seed`.
  static Rng stream(std::uint64_t seed, std::uint64_t id) { return Rng(seed, id + 1); }

  double normal() { return normal_(engine_); }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    double u;
    do {
      u = uniform_(engine_);
    } while (u <= 0.0);
    return u;
  }

  /// Chi-square with real degrees of freedom `df` > 0.
  double chi_square(double df) { return 2.0 * gamma(0.5 * df); }

  double gamma(double shape) {
    std::gamma_distribution<double> dist(shape, 1.0);
    return dist(engine_);
  }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace mda
