/// @file corrector_cache.hpp
/// @brief Versioned binary container for corrector sets: magic bytes, format
///        version, key hash, per-node records (node id, support count,
///        indices, values as 64-bit floats, complex as re/im pairs) and a
///        trailing checksum. Stale keys are misses, damaged files are errors.
#pragma once

#include "mspg/correctors.hpp"
#include "mspg/problems.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace mspg {

inline constexpr int kCorrectorCacheVersion = 1;
inline constexpr char kCorrectorCacheMagic[8] = {'M', 'S', 'P', 'G', 'C', 'O', 'R', '\0'};
inline constexpr int kCodeVersionTag = 1; // bump to invalidate all cached correctors

struct CacheError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::uint64_t corrector_cache_key(const ProblemSpec& spec, int level_coarse,
                                         int level_fine, int ell, bool ideal,
                                         Orientation orientation)
{
  std::string s = spec.canonical();
  s += "level_coarse=" + std::to_string(level_coarse) + "\n";
  s += "level_fine=" + std::to_string(level_fine) + "\n";
  s += "ell=" + std::to_string(ideal ? 0 : ell) + "\n";
  s += "orientation=" + std::string(orientation == Orientation::Primal ? "primal" : "adjoint") + "\n";
  s += "code_version=" + std::to_string(kCodeVersionTag) + "\n";
  return fnv1a64(s);
}

namespace detail {

struct ByteWriter {
  std::vector<unsigned char> bytes;
  template <class T>
  void put(const T& v)
  {
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
};

struct ByteReader {
  const std::vector<unsigned char>& bytes;
  std::size_t pos = 0;
  template <class T>
  T get()
  {
    if (pos + sizeof(T) > bytes.size()) throw CacheError("cache file truncated");
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
};

} // namespace detail

template <class Scalar>
void save_correctors(const CorrectorSet<Scalar>& set, const std::string& path)
{
  detail::ByteWriter w;
  w.put(std::uint32_t{kCorrectorCacheVersion});
  w.put(std::uint64_t{set.key});
  w.put(std::uint32_t{is_complex_v<Scalar> ? 1u : 0u});
  w.put(std::int32_t{set.ell});
  w.put(std::uint32_t{set.ideal ? 1u : 0u});
  w.put(std::uint32_t{set.orientation == Orientation::Primal ? 0u : 1u});
  w.put(double{set.H});
  w.put(double{set.h});
  w.put(std::uint64_t{set.phi.size()});
  w.put(std::uint64_t{set.phi.empty() ? 0 : static_cast<std::uint64_t>(set.phi.front().size())});
  for (std::size_t r = 0; r < set.phi.size(); ++r) {
    w.put(std::uint64_t{r});
    w.put(std::uint64_t{static_cast<std::uint64_t>(set.phi[r].nonZeros())});
    for (typename Eigen::SparseVector<Scalar>::InnerIterator it(set.phi[r]); it; ++it)
      w.put(std::uint64_t{static_cast<std::uint64_t>(it.index())});
    for (typename Eigen::SparseVector<Scalar>::InnerIterator it(set.phi[r]); it; ++it) {
      if constexpr (is_complex_v<Scalar>) {
        w.put(double{it.value().real()});
        w.put(double{it.value().imag()});
      } else {
        w.put(double{it.value()});
      }
    }
  }
  const std::uint64_t checksum = fnv1a64(w.bytes.data(), w.bytes.size());

  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CacheError("cannot open cache file for writing: " + path);
    os.write(kCorrectorCacheMagic, sizeof(kCorrectorCacheMagic));
    os.write(reinterpret_cast<const char*>(w.bytes.data()), w.bytes.size());
    os.write(reinterpret_cast<const char*>(&checksum), sizeof(checksum));
    if (!os) throw CacheError("short write to cache file: " + path);
  }
  std::filesystem::rename(tmp, path);
}

/// Loads a corrector set. Returns nullopt on a clean miss (absent file or a
/// stale key/scalar tag); throws CacheError on a damaged file.
template <class Scalar>
std::optional<CorrectorSet<Scalar>> load_correctors(const std::string& path,
                                                    std::uint64_t expected_key)
{
  std::ifstream is(path, std::ios::binary);
  if (!is) return std::nullopt;
  std::vector<unsigned char> file((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  if (file.size() < sizeof(kCorrectorCacheMagic) + sizeof(std::uint64_t))
    throw CacheError("cache file too short: " + path);
  if (std::memcmp(file.data(), kCorrectorCacheMagic, sizeof(kCorrectorCacheMagic)) != 0)
    throw CacheError("bad cache magic: " + path);

  const std::size_t payload = file.size() - sizeof(kCorrectorCacheMagic) - sizeof(std::uint64_t);
  std::uint64_t stored_checksum;
  std::memcpy(&stored_checksum, file.data() + file.size() - sizeof(std::uint64_t),
              sizeof(std::uint64_t));
  const std::uint64_t checksum =
      fnv1a64(file.data() + sizeof(kCorrectorCacheMagic), payload);
  if (checksum != stored_checksum)
    throw CacheError("cache checksum mismatch (corrupted file): " + path);

  std::vector<unsigned char> body(file.begin() + sizeof(kCorrectorCacheMagic),
                                  file.end() - sizeof(std::uint64_t));
  detail::ByteReader r{body};
  const auto version = r.get<std::uint32_t>();
  if (version != static_cast<std::uint32_t>(kCorrectorCacheVersion))
    throw CacheError("cache version mismatch: " + path);
  const auto key = r.get<std::uint64_t>();
  const auto scalar_tag = r.get<std::uint32_t>();
  if (key != expected_key) return std::nullopt; // stale key: miss, not corruption
  if (scalar_tag != (is_complex_v<Scalar> ? 1u : 0u)) return std::nullopt;

  CorrectorSet<Scalar> set;
  set.key = key;
  set.ell = r.get<std::int32_t>();
  set.ideal = r.get<std::uint32_t>() != 0;
  set.orientation = r.get<std::uint32_t>() == 0 ? Orientation::Primal : Orientation::Adjoint;
  set.H = r.get<double>();
  set.h = r.get<double>();
  const auto n_rows = r.get<std::uint64_t>();
  const auto n_fine = r.get<std::uint64_t>();
  set.phi.assign(n_rows, Eigen::SparseVector<Scalar>(static_cast<int>(n_fine)));
  for (std::uint64_t row = 0; row < n_rows; ++row) {
    const auto id = r.get<std::uint64_t>();
    if (id != row) throw CacheError("cache record order corrupted: " + path);
    const auto count = r.get<std::uint64_t>();
    std::vector<std::uint64_t> idx(count);
    for (auto& i : idx) i = r.get<std::uint64_t>();
    auto& phi = set.phi[row];
    phi.reserve(static_cast<int>(count));
    for (std::uint64_t k = 0; k < count; ++k) {
      Scalar v;
      if constexpr (is_complex_v<Scalar>) {
        const double re = r.get<double>();
        const double im = r.get<double>();
        v = Scalar(re, im);
      } else {
        v = r.get<double>();
      }
      phi.insertBack(static_cast<int>(idx[k])) = v;
    }
  }
  if (r.pos != body.size()) throw CacheError("trailing bytes in cache file: " + path);
  return set;
}

} // namespace mspg
