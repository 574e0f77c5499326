#pragma once

// Shared numeric types, error hierarchy and seeded RNG helpers.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace evoi {

// Row-major so one item (or particle) is one contiguous row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

using Index = std::size_t;

// Relative slack under which two objective values count as tied.
inline constexpr double kTieTolerance = 1e-12;

inline bool strictly_better(double candidate, double incumbent) {
  return candidate > incumbent + kTieTolerance * (1.0 + std::abs(incumbent));
}

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class DegeneratePosterior : public Error {
 public:
  using Error::Error;
};

// Thrown when an enumeration would exceed its caller-supplied budget.
class BudgetExceeded : public Error {
 public:
  using Error::Error;
};

// Thrown by long-running selection code when its wall-clock deadline passes.
class DeadlineExceeded : public Error {
 public:
  DeadlineExceeded() : Error("selection deadline exceeded") {}
};

// Optional wall-clock limit checked inside selection loops.
class Deadline {
 public:
  using Clock = std::chrono::steady_clock;

  Deadline() = default;
  explicit Deadline(Clock::time_point at) : at_(at) {}

  static Deadline after(std::chrono::milliseconds budget) { return Deadline(Clock::now() + budget); }
  static Deadline none() { return Deadline(); }

  bool expired() const { return at_ && Clock::now() >= *at_; }
  void check() const {
    if (expired()) throw DeadlineExceeded();
  }

 private:
  std::optional<Clock::time_point> at_;
};

// ---------------------------------------------------------------------------
// Seeding

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent child seed from a parent seed and a stream tag.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) {
  return splitmix64(splitmix64(parent) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream, std::uint64_t index) {
  return derive_seed(derive_seed(parent, stream), index);
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

inline void fill_standard_normal(Matrix& out, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  double* data = out.data();
  for (Eigen::Index i = 0; i < out.size(); ++i) data[i] = normal(rng);
}

// ---------------------------------------------------------------------------
// Small numeric helpers

// In-place softmax of logits / temperature, with max subtraction.
template <typename Row>
void softmax_inplace(Row&& logits, double temperature) {
  const double inv_t = 1.0 / temperature;
  double top = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    logits[i] *= inv_t;
    top = std::max(top, static_cast<double>(logits[i]));
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    logits[i] = std::exp(logits[i] - top);
    total += logits[i];
  }
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits[i] /= total;
}

inline double log_sum_exp(std::span<const double> values) {
  double top = -std::numeric_limits<double>::infinity();
  for (double v : values) top = std::max(top, v);
  if (!std::isfinite(top)) return top;
  double total = 0.0;
  for (double v : values) total += std::exp(v - top);
  return top + std::log(total);
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace evoi
