#pragma once

// Small dense matrices over a ring T (scalars, polynomials, or series).
// Division-based routines (solve, inverse) require T to be a field with
// scalar_ops support; they are member templates so Mat<Polynomial<S>> still
// compiles for the arithmetic-only use cases.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "latwkb/scalar.hpp"

namespace latwkb {

template <class T>
class Mat {
 public:
  Mat() : r_(0), c_(0) {}
  Mat(int r, int c, T proto = T{}) : r_(r), c_(c), a_(static_cast<size_t>(r) * c, proto) {}

  static Mat identity(int n, const T& one, const T& zero) {
    Mat m(n, n, zero);
    for (int i = 0; i < n; ++i) m.at(i, i) = one;
    return m;
  }

  int rows() const { return r_; }
  int cols() const { return c_; }
  T& at(int i, int j) { return a_[static_cast<size_t>(i) * c_ + j]; }
  const T& at(int i, int j) const { return a_[static_cast<size_t>(i) * c_ + j]; }

  Mat transpose() const {
    Mat m(c_, r_, a_.empty() ? T{} : a_[0]);
    for (int i = 0; i < r_; ++i)
      for (int j = 0; j < c_; ++j) m.at(j, i) = at(i, j);
    return m;
  }

  friend Mat operator+(const Mat& x, const Mat& y) {
    Mat m = x;
    for (size_t k = 0; k < m.a_.size(); ++k) m.a_[k] = m.a_[k] + y.a_[k];
    return m;
  }
  friend Mat operator-(const Mat& x, const Mat& y) {
    Mat m = x;
    for (size_t k = 0; k < m.a_.size(); ++k) m.a_[k] = m.a_[k] - y.a_[k];
    return m;
  }
  friend Mat operator*(const Mat& x, const Mat& y) {
    if (x.c_ != y.r_) throw std::invalid_argument("Mat: size mismatch in product");
    Mat m(x.r_, y.c_, x.a_.empty() ? T{} : x.a_[0]);
    for (int i = 0; i < x.r_; ++i)
      for (int j = 0; j < y.c_; ++j) {
        T acc = x.at(i, 0) * y.at(0, j);
        for (int k = 1; k < x.c_; ++k) acc = acc + x.at(i, k) * y.at(k, j);
        m.at(i, j) = acc;
      }
    return m;
  }
  template <class Sc>
  friend Mat operator*(const Sc& s, const Mat& x) {
    Mat m = x;
    for (auto& v : m.a_) v = v * s;
    return m;
  }

  bool operator==(const Mat& y) const { return r_ == y.r_ && c_ == y.c_ && a_ == y.a_; }

  // Gaussian elimination returning X with (*this) X = rhs.  S-typed matrices
  // only: exact mode picks the first nonzero pivot, double the largest.
  Mat solve(Mat rhs) const {
    using ops = scalar_ops<T>;
    if (r_ != c_ || rhs.r_ != r_) throw std::invalid_argument("Mat::solve: size mismatch");
    Mat a = *this;
    double scale = 1.0;
    if constexpr (!ops::exact) {
      scale = 0.0;
      for (const auto& v : a.a_) scale = std::max(scale, std::fabs(v));
    }
    for (int col = 0; col < c_; ++col) {
      int piv = -1;
      if constexpr (ops::exact) {
        for (int i = col; i < r_; ++i)
          if (!ops::is_zero(a.at(i, col))) {
            piv = i;
            break;
          }
      } else {
        double best = 0.0;
        for (int i = col; i < r_; ++i)
          if (std::fabs(a.at(i, col)) > best) {
            best = std::fabs(a.at(i, col));
            piv = i;
          }
        if (piv >= 0 && ops::is_zero(a.at(piv, col), scale)) piv = -1;
      }
      if (piv < 0) throw std::domain_error("Mat::solve: singular matrix");
      if (piv != col) {
        for (int j = 0; j < c_; ++j) std::swap(a.at(col, j), a.at(piv, j));
        for (int j = 0; j < rhs.c_; ++j) std::swap(rhs.at(col, j), rhs.at(piv, j));
      }
      const T d = a.at(col, col);
      for (int j = 0; j < c_; ++j) a.at(col, j) = a.at(col, j) / d;
      for (int j = 0; j < rhs.c_; ++j) rhs.at(col, j) = rhs.at(col, j) / d;
      for (int i = 0; i < r_; ++i) {
        if (i == col) continue;
        const T f = a.at(i, col);
        if (ops::exact && ops::is_zero(f)) continue;
        for (int j = 0; j < c_; ++j) a.at(i, j) = a.at(i, j) - f * a.at(col, j);
        for (int j = 0; j < rhs.c_; ++j) rhs.at(i, j) = rhs.at(i, j) - f * rhs.at(col, j);
      }
    }
    return rhs;
  }

  std::vector<T> solve(const std::vector<T>& rhs) const {
    Mat b(static_cast<int>(rhs.size()), 1, a_.empty() ? T{} : a_[0]);
    for (int i = 0; i < b.rows(); ++i) b.at(i, 0) = rhs[i];
    Mat x = solve(b);
    std::vector<T> out;
    out.reserve(rhs.size());
    for (int i = 0; i < x.rows(); ++i) out.push_back(x.at(i, 0));
    return out;
  }

  Mat inverse() const {
    return solve(identity(r_, scalar_ops<T>::one(), scalar_ops<T>::zero()));
  }

  int rank() const {
    using ops = scalar_ops<T>;
    Mat a = *this;
    double scale = 1.0;
    if constexpr (!ops::exact) {
      scale = 0.0;
      for (const auto& v : a.a_) scale = std::max(scale, std::fabs(v));
      if (scale == 0.0) return 0;
    }
    int rank = 0;
    for (int col = 0; col < c_ && rank < r_; ++col) {
      int piv = -1;
      for (int i = rank; i < r_; ++i)
        if (!ops::is_zero(a.at(i, col), scale)) {
          piv = i;
          break;
        }
      if (piv < 0) continue;
      for (int j = 0; j < c_; ++j) std::swap(a.at(rank, j), a.at(piv, j));
      const T d = a.at(rank, col);
      for (int i = rank + 1; i < r_; ++i) {
        const T f = a.at(i, col) / d;
        for (int j = 0; j < c_; ++j) a.at(i, j) = a.at(i, j) - f * a.at(rank, j);
      }
      ++rank;
    }
    return rank;
  }

 private:
  int r_, c_;
  std::vector<T> a_;
};

// Cyclic Jacobi eigensolver for symmetric double matrices; eigenvalues
// ascending, eigenvectors as columns of V.
inline void jacobi_eigen(Mat<double> a, std::vector<double>& evals, Mat<double>& V) {
  const int n = a.rows();
  if (a.cols() != n) throw std::invalid_argument("jacobi_eigen: square matrix required");
  V = Mat<double>::identity(n, 1.0, 0.0);
  double norm = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) norm = std::max(norm, std::fabs(a.at(i, j)));
  if (norm == 0.0) norm = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off = std::max(off, std::fabs(a.at(i, j)));
    if (off <= 1e-15 * norm) break;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        if (std::fabs(a.at(p, q)) <= 1e-18 * norm) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * a.at(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a.at(k, p), akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a.at(p, k), aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = V.at(k, p), vkq = V.at(k, q);
          V.at(k, p) = c * vkp - s * vkq;
          V.at(k, q) = s * vkp + c * vkq;
        }
      }
  }
  evals.resize(n);
  for (int i = 0; i < n; ++i) evals[i] = a.at(i, i);
  // sort ascending, permuting eigenvector columns along
  for (int i = 0; i < n; ++i) {
    int m = i;
    for (int j = i + 1; j < n; ++j)
      if (evals[j] < evals[m]) m = j;
    if (m != i) {
      std::swap(evals[i], evals[m]);
      for (int k = 0; k < n; ++k) std::swap(V.at(k, i), V.at(k, m));
    }
  }
}

}  // namespace latwkb
