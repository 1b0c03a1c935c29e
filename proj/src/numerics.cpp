#include "aglb/numerics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "aglb/errors.hpp"

namespace aglb::numerics {

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void gemv_acc(const Matrix& a, std::span<const double> x, std::span<double> y) {
  const std::size_t cols = a.cols();
  const double* p = a.values().data();
  for (std::size_t r = 0; r < a.rows(); ++r, p += cols) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += p[c] * x[c];
    y[r] += s;
  }
}

void gemv_t_acc(const Matrix& a, std::span<const double> x, std::span<double> y) {
  const std::size_t cols = a.cols();
  const double* p = a.values().data();
  for (std::size_t r = 0; r < a.rows(); ++r, p += cols) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    for (std::size_t c = 0; c < cols; ++c) y[c] += p[c] * xr;
  }
}

void outer_acc(Matrix& a, std::span<const double> u, std::span<const double> v,
               double scale) {
  const std::size_t cols = a.cols();
  double* p = a.values().data();
  for (std::size_t r = 0; r < a.rows(); ++r, p += cols) {
    const double ur = u[r] * scale;
    if (ur == 0.0) continue;
    for (std::size_t c = 0; c < cols; ++c) p[c] += ur * v[c];
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ArgumentError("matmul: inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  return out;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Vector softmax(std::span<const double> v) {
  if (v.empty()) throw ArgumentError("softmax of an empty vector");
  if (!all_finite(v)) throw NumericDomainError("softmax: non-finite input");
  const double m = *std::max_element(v.begin(), v.end());
  Vector out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - m);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

Vector log_softmax(std::span<const double> v) {
  if (v.empty()) throw ArgumentError("log_softmax of an empty vector");
  if (!all_finite(v)) throw NumericDomainError("log_softmax: non-finite input");
  const double m = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - m);
  const double lse = m + std::log(sum);
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - lse;
  return out;
}

EigenResult symmetric_eigen(const Matrix& input, double tol, int max_sweeps) {
  const std::size_t n = input.rows();
  if (input.cols() != n) throw ArgumentError("symmetric_eigen: matrix not square");
  Matrix a = input;
  Matrix v(n, n);
  for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += a(i, j) * a(i, j);
    return std::sqrt(2.0 * s);
  };
  double scale = 0.0;
  for (double x : a.values()) scale = std::max(scale, std::abs(x));

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    if (off_norm() <= tol * std::max(scale, 1e-300)) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
  EigenResult out{Vector(n), Matrix(n, n)};
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = a(order[j], order[j]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
  }
  return out;
}

namespace {

bool cholesky(const Matrix& a, Matrix& l) {
  const std::size_t n = a.rows();
  l = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return true;
}

void cholesky_apply(const Matrix& l, std::span<const double> b, Vector& x) {
  const std::size_t n = l.rows();
  Vector y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
    y[i] = s / l(i, i);
  }
  x.assign(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double s = y[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= l(k, i) * x[k];
    x[i] = s / l(i, i);
  }
}

}  // namespace

bool cholesky_solve(const Matrix& a, std::span<const double> b, Vector& x) {
  Matrix l;
  if (!cholesky(a, l)) return false;
  cholesky_apply(l, b, x);
  return true;
}

bool cholesky_inverse(const Matrix& a, Matrix& inv) {
  Matrix l;
  if (!cholesky(a, l)) return false;
  const std::size_t n = a.rows();
  inv = Matrix(n, n);
  Vector e(n), col;
  for (std::size_t j = 0; j < n; ++j) {
    std::fill(e.begin(), e.end(), 0.0);
    e[j] = 1.0;
    cholesky_apply(l, e, col);
    for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
  }
  return true;
}

PcaResult pca(const Matrix& data, std::size_t k) {
  const std::size_t n = data.rows(), d = data.cols();
  if (n < 2) throw ArgumentError("pca: need at least 2 observations");
  if (k > d) throw ArgumentError("pca: k exceeds data dimension");
  if (!all_finite(data.values())) throw NumericDomainError("pca: non-finite data");

  PcaResult out;
  out.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out.mean[j] += data(i, j);
  for (double& m : out.mean) m /= static_cast<double>(n);

  Matrix centered(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) centered(i, j) = data(i, j) - out.mean[j];

  Matrix cov(d, d);
  for (std::size_t i = 0; i < n; ++i) outer_acc(cov, centered.row(i), centered.row(i));
  for (double& x : cov.values()) x /= static_cast<double>(n - 1);

  const EigenResult eig = symmetric_eigen(cov);
  out.components = Matrix(k, d);
  out.explained_variance.assign(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    out.explained_variance[c] = std::max(0.0, eig.values[c]);
    std::size_t arg = 0;
    for (std::size_t j = 1; j < d; ++j)
      if (std::abs(eig.vectors(j, c)) > std::abs(eig.vectors(arg, c)) + 1e-12) arg = j;
    const double sign = eig.vectors(arg, c) < 0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < d; ++j) out.components(c, j) = sign * eig.vectors(j, c);
  }
  out.projections = Matrix(n, k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c)
      out.projections(i, c) = dot(centered.row(i), out.components.row(c));
  return out;
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ArgumentError("Rng::below(0)");
  // Rejection sampling on the top of the range keeps the draw unbiased.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n && !failed; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace aglb::numerics
