#pragma once

// Numerical primitives shared across the library: compensated summation and
// the probability tail functions backing the stats module.
//
// Tail probabilities are computed from the regularized incomplete beta and
// gamma functions. Both follow the classic series / continued-fraction split:
//   * P(a,x): power series for x < a+1, Lentz continued fraction otherwise.
//   * I_x(a,b): continued fraction, switched via the symmetry
//     I_x(a,b) = 1 - I_{1-x}(b,a) when x >= (a+1)/(a+b+2).
// Target accuracy is 1e-10 absolute; iteration caps are far beyond what the
// degrees of freedom used here ever need.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "capa/errors.hpp"

namespace capa {

// Neumaier-compensated accumulator. Keeps metric aggregations stable against
// permutation of inputs to ~1e-12, which the similarity-matrix driver relies
// on when cells are computed in parallel.
class KahanSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }

  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double kahan_total(std::span<const double> xs) {
  KahanSum acc;
  for (double x : xs) acc.add(x);
  return acc.value();
}

inline double kahan_mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return kahan_total(xs) / static_cast<double>(xs.size());
}

// Inclusive evenly spaced grid; n == 1 degenerates to {from}.
inline std::vector<double> linspace(double from, double to, std::size_t n) {
  std::vector<double> out;
  out.reserve(n);
  if (n == 1) {
    out.push_back(from);
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(from + (to - from) * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  return out;
}

namespace detail {

// Lanczos approximation (g = 7, n = 9), ~1e-15 relative error for x > 0.
inline double log_gamma(double x) {
  static constexpr double kCoeff[9] = {
      0.99999999999980993,
      676.5203681218851,
      -1259.1392167224028,
      771.32342877765313,
      -176.61502916214059,
      12.507343278686905,
      -0.13857109526572012,
      9.9843695780195716e-6,
      1.5056327351493116e-7,
  };
  if (x < 0.5) {
    // Reflection formula.
    return std::log(M_PI / std::sin(M_PI * x)) - log_gamma(1.0 - x);
  }
  x -= 1.0;
  double a = kCoeff[0];
  for (int i = 1; i < 9; ++i) a += kCoeff[i] / (x + i);
  const double t = x + 7.5;
  return 0.5 * std::log(2.0 * M_PI) + (x + 0.5) * std::log(t) - t + std::log(a);
}

inline constexpr int kMaxIter = 500;
inline constexpr double kConvergence = 1e-16;

// Lower regularized incomplete gamma via power series (x < a + 1).
inline double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int i = 0; i < kMaxIter; ++i) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * kConvergence) break;
  }
  return sum * std::exp(-x + a * std::log(x) - log_gamma(a));
}

// Upper regularized incomplete gamma via Lentz continued fraction (x >= a + 1).
inline double gamma_q_cf(double a, double x) {
  const double tiny = std::numeric_limits<double>::min() / kConvergence;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxIter; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kConvergence) break;
  }
  return h * std::exp(-x + a * std::log(x) - log_gamma(a));
}

// Continued fraction for the incomplete beta (Lentz).
inline double beta_cf(double a, double b, double x) {
  const double tiny = std::numeric_limits<double>::min() / kConvergence;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kConvergence) break;
  }
  return h;
}

}  // namespace detail

// Lower regularized incomplete gamma P(a, x).
inline double regularized_gamma_p(double a, double x) {
  if (a <= 0.0 || x < 0.0) fail(errc::invalid_argument, "regularized_gamma_p domain");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return detail::gamma_p_series(a, x);
  return 1.0 - detail::gamma_q_cf(a, x);
}

// Upper regularized incomplete gamma Q(a, x) = 1 - P(a, x).
inline double regularized_gamma_q(double a, double x) {
  if (a <= 0.0 || x < 0.0) fail(errc::invalid_argument, "regularized_gamma_q domain");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
  return detail::gamma_q_cf(a, x);
}

// Regularized incomplete beta I_x(a, b).
inline double regularized_beta(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0 || x < 0.0 || x > 1.0) {
    fail(errc::invalid_argument, "regularized_beta domain");
  }
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double ln_front = detail::log_gamma(a + b) - detail::log_gamma(a) -
                          detail::log_gamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * detail::beta_cf(a, b, x) / a;
  }
  return 1.0 - front * detail::beta_cf(b, a, 1.0 - x) / b;
}

// Two-sided Student-t p-value for a statistic t with df degrees of freedom:
// P(|T| >= |t|) = I_{df/(df+t^2)}(df/2, 1/2).
inline double student_t_two_sided_p(double t, double df) {
  if (df <= 0.0) fail(errc::invalid_argument, "student_t_two_sided_p needs df > 0");
  if (!std::isfinite(t)) return 0.0;
  if (t == 0.0) return 1.0;
  return regularized_beta(0.5 * df, 0.5, df / (df + t * t));
}

// Chi-squared survival function P(X >= x) with k degrees of freedom.
inline double chi_squared_sf(double x, double k) {
  if (k <= 0.0) fail(errc::invalid_argument, "chi_squared_sf needs k > 0");
  if (x <= 0.0) return 1.0;
  return regularized_gamma_q(0.5 * k, 0.5 * x);
}

}  // namespace capa
