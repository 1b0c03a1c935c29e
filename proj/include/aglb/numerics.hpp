#pragma once

#include <cstddef>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace aglb::numerics {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  void fill(double v);
  Matrix transposed() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

// y += A x
void gemv_acc(const Matrix& a, std::span<const double> x, std::span<double> y);
// y += A^T x
void gemv_t_acc(const Matrix& a, std::span<const double> x, std::span<double> y);
// A += scale * u v^T
void outer_acc(Matrix& a, std::span<const double> u, std::span<const double> v,
               double scale = 1.0);

Matrix matmul(const Matrix& a, const Matrix& b);

inline double sigmoid(double x) {
  // Both branches keep exp() away from overflow.
  if (x >= 0) {
    const double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  const double z = std::exp(x);
  return z / (1.0 + z);
}

// Throws NumericDomainError on non-finite input.
Vector softmax(std::span<const double> v);
Vector log_softmax(std::span<const double> v);

struct EigenResult {
  Vector values;   // non-increasing
  Matrix vectors;  // column j is the eigenvector for values[j]
};

// Cyclic Jacobi rotations for a symmetric matrix.
EigenResult symmetric_eigen(const Matrix& a, double tol = 1e-14,
                            int max_sweeps = 100);

// Solves A x = b for symmetric positive definite A. Returns false if the
// Cholesky factorisation fails.
bool cholesky_solve(const Matrix& a, std::span<const double> b, Vector& x);
// Inverse of an SPD matrix, or false when not positive definite.
bool cholesky_inverse(const Matrix& a, Matrix& inv);

struct PcaResult {
  Matrix components;         // k x d, rows orthonormal
  Vector explained_variance; // k, non-increasing, >= 0
  Matrix projections;        // n x k
  Vector mean;               // d
};

// Principal components via the eigendecomposition of the sample covariance
// (divisor n - 1). Data are centred, never scaled. The largest-magnitude
// coordinate of each component is made positive.
PcaResult pca(const Matrix& data, std::size_t k);

// Deterministic generator. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard; every distribution on top of it is
// implemented here so streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  double normal();

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Mixes a base seed with a stream index (splitmix64 finaliser), so derived
// generators for different logical tasks are decorrelated.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

bool all_finite(std::span<const double> v);

// Calls fn(i) for every i in [0, n) on up to `threads` workers (0 means
// hardware concurrency). Iterations must be independent; the first exception
// thrown by any worker is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace aglb::numerics
