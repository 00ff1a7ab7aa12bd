#pragma once

#include <functional>
#include <initializer_list>
#include <vector>

namespace stiv {

/// Dense real polynomial, coefficients in ascending powers.
class Polynomial {
 public:
  Polynomial() = default;
  Polynomial(std::initializer_list<double> coeffs) : c_(coeffs) {}
  explicit Polynomial(std::vector<double> coeffs) : c_(std::move(coeffs)) {}

  int degree() const { return static_cast<int>(c_.size()) - 1; }
  const std::vector<double>& coeffs() const { return c_; }
  double operator()(double x) const;
  Polynomial derivative() const;
  /// Coefficients of q(y) = p(x0 + y).
  Polynomial shifted(double x0) const;
  double max_abs_coeff() const;

  friend Polynomial operator+(const Polynomial& a, const Polynomial& b);
  friend Polynomial operator-(const Polynomial& a, const Polynomial& b);
  friend Polynomial operator*(const Polynomial& a, const Polynomial& b);
  friend Polynomial operator*(double s, const Polynomial& a);

 private:
  std::vector<double> c_;
};

/// Visits the real roots of `p` in [lo, hi] in increasing order, stopping as
/// soon as `visit` returns true. Roots are isolated by interval subdivision
/// with Taylor-bound pruning and refined by bracketed Newton to `tol`.
/// Returns the number of roots visited. An identically zero polynomial
/// reports `lo` once, and so does any subinterval on which |p| is provably
/// at most `noise` (its left end is reported).
int for_each_root(const Polynomial& p, double lo, double hi, double tol,
                  const std::function<bool(double)>& visit, double noise = 0.0);

std::vector<double> real_roots(const Polynomial& p, double lo, double hi, double tol = 1e-13);

}  // namespace stiv
