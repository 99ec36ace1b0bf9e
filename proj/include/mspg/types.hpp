/// @file types.hpp
/// @brief Scalar/vector/sparse-operator aliases and small shared utilities.
#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace mspg {

using Complex = std::complex<double>;

/// Nodal coefficient vector over a stated mesh's node set.
template <class Scalar>
using FieldVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Row-compressed sparse matrix over real or complex scalars.
template <class Scalar>
using SparseOperator = Eigen::SparseMatrix<Scalar, Eigen::RowMajor, int>;

using RealVector = FieldVector<double>;
using ComplexVector = FieldVector<Complex>;
using RealSparse = SparseOperator<double>;
using ComplexSparse = SparseOperator<Complex>;

template <class Scalar>
inline constexpr bool is_complex_v = false;
template <class T>
inline constexpr bool is_complex_v<std::complex<T>> = true;

/// SplitMix64: the documented PRNG behind all randomized coefficient fields.
/// Sequences are a pure function of the seed, bit-exact across platforms.
struct SplitMix64 {
  std::uint64_t state;

  explicit SplitMix64(std::uint64_t seed) : state(seed) {}

  std::uint64_t next()
  {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform draw in [0,1) with 53 significant bits.
  double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
};

/// FNV-1a over a byte sequence; used for cache keys and file checksums.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xCBF29CE484222325ull)
{
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s)
{
  return fnv1a64(s.data(), s.size());
}

} // namespace mspg
