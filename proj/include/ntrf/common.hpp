#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ntrf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log(exp(a) + exp(b)) without overflow.
double log_add(double a, double b);

/// Log-sum-exp over `values` reduced as a balanced pairwise tree, so the
/// result depends only on the order of the input.
double log_sum_exp(std::span<const double> values);

double sigmoid(double z);
/// log(sigmoid(z)), stable for large |z|.
double log_sigmoid(double z);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

/// Seeded random stream. Wraps std::mt19937_64 and maps its output to
/// doubles and indices with fixed arithmetic, so draws are reproducible
/// across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  /// Independent stream `stream` derived from a master seed.
  Rng(std::uint64_t seed, std::uint64_t stream);

  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  /// Index drawn proportionally to non-negative `weights`.
  std::size_t categorical(std::span<const double> weights);

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ntrf
