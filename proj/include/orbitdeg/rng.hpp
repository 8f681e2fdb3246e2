#pragma once

#include "orbitdeg/types.hpp"

#include <cstdint>
#include <random>

namespace orbitdeg {

/// Seeded source of the complex Gaussian samples used everywhere (real and
/// imaginary parts independent standard normals).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  cdouble complex_normal() {
    const double re = normal();
    const double im = normal();
    return {re, im};
  }
  CVector complex_normal_vector(std::size_t n) {
    CVector v(n);
    for (auto& z : v) z = complex_normal();
    return v;
  }
  /// Uniformly distributed point on the unit circle.
  cdouble unit_complex() {
    std::uniform_real_distribution<double> u(0.0, 2.0 * M_PI);
    return std::polar(1.0, u(engine_));
  }
  /// Unit-norm complex Gaussian direction.
  CVector unit_vector(std::size_t n) {
    CVector v = complex_normal_vector(n);
    const double s = norm2(v);
    for (auto& z : v) z /= s;
    return v;
  }
  std::uint64_t next_seed() { return engine_(); }
  std::size_t uniform_index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

}  // namespace orbitdeg
