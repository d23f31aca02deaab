#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dyml {

using Vec = std::vector<double>;

// ---------------------------------------------------------------------------
// Errors. Every failure mode has a named type; what() starts with the type
// name so CLI messages and tests can match on it.
// ---------------------------------------------------------------------------

enum class ErrorCategory { config, runtime };

class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message, ErrorCategory category)
      : std::runtime_error(kind + ": " + message),
        kind_(std::move(kind)),
        category_(category) {}
  const std::string& kind() const { return kind_; }
  ErrorCategory category() const { return category_; }

 private:
  std::string kind_;
  ErrorCategory category_;
};

#define DYML_ERROR_TYPE(NAME, CAT)                       \
  class NAME : public Error {                            \
   public:                                               \
    explicit NAME(const std::string& m)                  \
        : Error(#NAME, m, ErrorCategory::CAT) {}         \
  };

DYML_ERROR_TYPE(NestingViolation, config)
DYML_ERROR_TYPE(InvalidSpec, config)
DYML_ERROR_TYPE(InvalidDimension, config)
DYML_ERROR_TYPE(MarginOrderViolation, config)
DYML_ERROR_TYPE(ConfigParseError, config)
DYML_ERROR_TYPE(DimensionMismatch, runtime)
DYML_ERROR_TYPE(DegenerateEmbedding, runtime)
DYML_ERROR_TYPE(MissingProxy, runtime)
DYML_ERROR_TYPE(EmptyBatch, runtime)
DYML_ERROR_TYPE(UnknownProxyId, runtime)
DYML_ERROR_TYPE(DegenerateScale, runtime)
DYML_ERROR_TYPE(InsufficientClasses, runtime)
DYML_ERROR_TYPE(InsufficientPairs, runtime)
DYML_ERROR_TYPE(NonFiniteLoss, runtime)
DYML_ERROR_TYPE(EmptyGallery, runtime)
DYML_ERROR_TYPE(EmptyDataset, runtime)
DYML_ERROR_TYPE(DepthOutOfRange, runtime)
DYML_ERROR_TYPE(NotPermutations, runtime)
DYML_ERROR_TYPE(IoError, runtime)

#undef DYML_ERROR_TYPE

// ---------------------------------------------------------------------------
// Dense row-major matrix of doubles. All numerics in this project are 64-bit.
// ---------------------------------------------------------------------------

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double value = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, value) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* row(std::size_t r) { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const { return data_.data() + r * cols_; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const double* a, std::size_t n) { return std::sqrt(dot(a, a, n)); }

// y += alpha * x
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

inline void scale_inplace(double alpha, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

// ---------------------------------------------------------------------------
// Deterministic RNG. mt19937_64 core with explicit transforms so every draw
// consumes a fixed, documented amount of engine output. normal() is
// Box-Muller without the usual cached second value, so the engine state is
// the complete RNG state (required for exact checkpoint resume).
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stable sub-stream derivation: seed + tag -> child seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  return splitmix64(splitmix64(seed) ^ tag);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1)
  double uniform01() { return (engine_() >> 11) * 0x1.0p-53; }

  // unbiased [0, n)
  std::uint64_t uniform_u64(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  int uniform_int(int n) { return static_cast<int>(uniform_u64(static_cast<std::uint64_t>(n))); }

  double normal() {
    // u1 in (0,1] so log is finite; consumes exactly two engine draws
    const double u1 = ((engine_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = (engine_() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // First k elements of a partial Fisher-Yates shuffle of items.
  template <typename T>
  std::vector<T> sample_without_replacement(std::vector<T> items, std::size_t k) {
    for (std::size_t i = 0; i < k && i + 1 < items.size(); ++i) {
      const std::size_t j = i + uniform_u64(items.size() - i);
      std::swap(items[i], items[j]);
    }
    items.resize(std::min(k, items.size()));
    return items;
  }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
    if (!is) throw IoError("bad rng state");
  }

 private:
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// FNV-1a 64; used for config hashing and byte-identity checks.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 1469598103934665603ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

// ---------------------------------------------------------------------------
// Little-endian binary IO for the container formats.
// ---------------------------------------------------------------------------

class BinWriter {
 public:
  explicit BinWriter(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open for write: " + path);
  }

  void magic(const char* tag) { out_.write(tag, static_cast<std::streamsize>(std::strlen(tag))); }

  void u32(std::uint32_t v) { put_le(&v, 4); }
  void u64(std::uint64_t v) { put_le(&v, 8); }
  void i32(std::int32_t v) { put_le(&v, 4); }
  void f32(float v) { put_le(&v, 4); }
  void f64(double v) { put_le(&v, 8); }

  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

  void f64_array(const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) f64(p[i]);
  }

  void close() {
    out_.close();
    if (!out_) throw IoError("write failed");
  }

 private:
  void put_le(const void* p, std::size_t n) {
    // x86-64/aarch64 little endian; bytes go out in memory order
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  std::ofstream out_;
};

class BinReader {
 public:
  explicit BinReader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw IoError("cannot open for read: " + path);
  }

  void expect_magic(const char* tag) {
    const std::size_t n = std::strlen(tag);
    std::string got(n, '\0');
    in_.read(got.data(), static_cast<std::streamsize>(n));
    if (!in_ || got != tag) throw IoError("bad magic in " + path_ + " (expected " + tag + ")");
  }

  std::uint32_t u32() { std::uint32_t v; get(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; get(&v, 8); return v; }
  std::int32_t i32() { std::int32_t v; get(&v, 4); return v; }
  float f32() { float v; get(&v, 4); return v; }
  double f64() { double v; get(&v, 8); return v; }

  std::string str() {
    const std::uint32_t n = u32();
    std::string s(n, '\0');
    in_.read(s.data(), n);
    if (!in_) throw IoError("truncated string in " + path_);
    return s;
  }

  void f64_array(double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) p[i] = f64();
  }

 private:
  void get(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) throw IoError("truncated read in " + path_);
  }
  std::ifstream in_;
  std::string path_;
};

}  // namespace dyml
