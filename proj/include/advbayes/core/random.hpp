#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

#include "advbayes/core/types.hpp"

namespace advbayes {

using Rng = std::mt19937_64;

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Deterministic child seed from a root seed and a path of stream ids.
inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = detail::splitmix64(root);
  for (std::uint64_t id : path) s = detail::splitmix64(s ^ detail::splitmix64(id + 0x632be59bd9b4e019ULL));
  return s;
}

/// Independent generator for one consumer. Every random stream in the
/// library is obtained this way from a single root seed.
inline Rng make_rng(std::uint64_t root, std::initializer_list<std::uint64_t> path = {}) {
  return Rng(derive_seed(root, path));
}

/// Splits a fresh child generator off a parent generator.
inline Rng split(Rng& parent) { return Rng(detail::splitmix64(parent())); }

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return n(rng);
}

inline Vector standard_normal_vector(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Vector z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = dist(rng);
  return z;
}

inline double uniform01(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return u(rng);
}

/// Inverse-gamma(shape, scale) via the reciprocal of a Gamma(shape, 1/scale).
inline double inverse_gamma(double shape, double scale, Rng& rng) {
  std::gamma_distribution<double> g(shape, 1.0 / scale);
  return 1.0 / g(rng);
}

/// Index drawn from an unnormalised probability vector.
inline std::size_t categorical(const Eigen::Ref<const Vector>& probs, Rng& rng) {
  const double total = probs.sum();
  double u = uniform01(rng) * total;
  for (Eigen::Index k = 0; k < probs.size(); ++k) {
    u -= probs[k];
    if (u < 0.0) return static_cast<std::size_t>(k);
  }
  // rounding: fall back to the last class with positive mass
  for (Eigen::Index k = probs.size() - 1; k >= 0; --k) {
    if (probs[k] > 0.0) return static_cast<std::size_t>(k);
  }
  return 0;
}

}  // namespace advbayes
