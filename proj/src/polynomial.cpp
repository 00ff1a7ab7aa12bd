#include "stiv/polynomial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace stiv {

double Polynomial::operator()(double x) const {
  double acc = 0.0;
  for (auto it = c_.rbegin(); it != c_.rend(); ++it) acc = acc * x + *it;
  return acc;
}

Polynomial Polynomial::derivative() const {
  if (c_.size() <= 1) return Polynomial{0.0};
  std::vector<double> d(c_.size() - 1);
  for (std::size_t k = 1; k < c_.size(); ++k) d[k - 1] = c_[k] * static_cast<double>(k);
  return Polynomial(std::move(d));
}

Polynomial Polynomial::shifted(double x0) const {
  // Repeated synthetic division (Taylor shift).
  std::vector<double> a = c_;
  const std::size_t n = a.size();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    for (std::size_t k = n - 1; k > i; --k) a[k - 1] += x0 * a[k];
  }
  return Polynomial(std::move(a));
}

double Polynomial::max_abs_coeff() const {
  double m = 0.0;
  for (double v : c_) m = std::max(m, std::abs(v));
  return m;
}

Polynomial operator+(const Polynomial& a, const Polynomial& b) {
  std::vector<double> r(std::max(a.c_.size(), b.c_.size()), 0.0);
  for (std::size_t i = 0; i < a.c_.size(); ++i) r[i] += a.c_[i];
  for (std::size_t i = 0; i < b.c_.size(); ++i) r[i] += b.c_[i];
  return Polynomial(std::move(r));
}

Polynomial operator-(const Polynomial& a, const Polynomial& b) { return a + (-1.0) * b; }

Polynomial operator*(const Polynomial& a, const Polynomial& b) {
  if (a.c_.empty() || b.c_.empty()) return {};
  std::vector<double> r(a.c_.size() + b.c_.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.c_.size(); ++i) {
    for (std::size_t j = 0; j < b.c_.size(); ++j) r[i + j] += a.c_[i] * b.c_[j];
  }
  return Polynomial(std::move(r));
}

Polynomial operator*(double s, const Polynomial& a) {
  std::vector<double> r = a.c_;
  for (auto& v : r) v *= s;
  return Polynomial(std::move(r));
}

namespace {

struct RootSearch {
  const Polynomial& p;
  Polynomial dp;
  double tol;
  double noise;
  const std::function<bool(double)>& visit;
  int visited = 0;
  bool stop = false;
  double last = -std::numeric_limits<double>::infinity();

  void report(double x) {
    if (x - last <= tol) return;  // shared endpoint of adjacent intervals
    last = x;
    ++visited;
    stop = visit(x);
  }

  // Bracketed Newton: Newton steps that leave the bracket or fail to halve
  // it fall back to bisection.
  double refine(double a, double b, double fa) {
    double x = 0.5 * (a + b);
    for (int it = 0; it < 200 && b - a > tol; ++it) {
      const double fx = p(x);
      if (fx == 0.0) return x;
      if ((fx < 0) == (fa < 0)) {
        a = x;
        fa = fx;
      } else {
        b = x;
      }
      const double d = dp(x);
      double next = d != 0.0 ? x - fx / d : 0.5 * (a + b);
      if (!(next > a && next < b)) next = 0.5 * (a + b);
      x = next;
    }
    // Polish: a few unguarded Newton steps while they stay in the bracket.
    for (int it = 0; it < 3; ++it) {
      const double d = dp(x);
      if (d == 0.0) break;
      const double next = x - p(x) / d;
      if (!(next >= a && next <= b)) break;
      x = next;
    }
    return x;
  }

  void isolate(double l, double r) {
    if (stop) return;
    const double m = 0.5 * (l + r);
    const double h = 0.5 * (r - l);
    const Polynomial shifted = p.shifted(m);
    const auto& t = shifted.coeffs();
    // |p(m + y) - p(m)| <= sum_{k>=1} |t_k| h^k for |y| <= h.
    double spread = 0.0, hk = h;
    for (std::size_t k = 1; k < t.size(); ++k, hk *= h) spread += std::abs(t[k]) * hk;
    if (std::abs(t[0]) > spread) return;
    if (std::abs(t[0]) + spread <= noise) {
      // Indistinguishable from zero on the whole interval.
      report(l);
      return;
    }
    // |p'(m + y)| >= |t_1| - sum_{k>=2} k |t_k| h^(k-1).
    double slope_spread = 0.0;
    hk = h;
    for (std::size_t k = 2; k < t.size(); ++k, hk *= h) slope_spread += static_cast<double>(k) * std::abs(t[k]) * hk;
    const bool monotone = t.size() > 1 && std::abs(t[1]) > slope_spread;
    if (monotone) {
      const double fl = p(l), fr = p(r);
      if (fl == 0.0) {
        report(l);
      } else if (fr == 0.0) {
        report(r);
      } else if ((fl < 0) != (fr < 0)) {
        report(refine(l, r, fl));
      }
      return;
    }
    if (h < 0.5 * tol) {
      // Could not separate a (near-)multiple root any further.
      report(m);
      return;
    }
    isolate(l, m);
    isolate(m, r);
  }
};

}  // namespace

int for_each_root(const Polynomial& p, double lo, double hi, double tol,
                  const std::function<bool(double)>& visit, double noise) {
  if (!(hi >= lo)) return 0;
  if (p.max_abs_coeff() == 0.0) {
    visit(lo);
    return 1;
  }
  RootSearch search{p, p.derivative(), tol, noise, visit};
  search.isolate(lo, hi);
  return search.visited;
}

std::vector<double> real_roots(const Polynomial& p, double lo, double hi, double tol) {
  std::vector<double> roots;
  for_each_root(p, lo, hi, tol, [&](double x) {
    roots.push_back(x);
    return false;
  });
  return roots;
}

}  // namespace stiv
