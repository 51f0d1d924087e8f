#pragma once

// Correlation and regression machinery: Pearson correlation with t-based
// p-values, OLS via column-pivoted Householder QR, partial correlation by
// residualization, and the residual diagnostics reported alongside the
// regressions (Durbin-Watson, Jarque-Bera, Breusch-Pagan).
//
// Conventions, fixed once and used everywhere:
//   * sample (n-1) variance,
//   * two-sided p-values,
//   * rank check on the pivoted R diagonal with relative tolerance 1e-10,
//   * partial-correlation confidence intervals via the Fisher z transform
//     with standard error 1/sqrt(n - 3 - k); the method is labeled in the
//     result so downstream tables can say what they carry.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "capa/errors.hpp"
#include "capa/numeric.hpp"

namespace capa::stats {

inline constexpr double kRankTolerance = 1e-10;

inline double mean(std::span<const double> x) { return kahan_mean(x); }

inline double sample_variance(std::span<const double> x) {
  if (x.size() < 2) fail(errc::too_few_observations, "variance needs n >= 2");
  const double m = mean(x);
  KahanSum acc;
  for (double v : x) acc.add((v - m) * (v - m));
  return acc.value() / static_cast<double>(x.size() - 1);
}

// Zero mean, unit sample variance.
inline std::vector<double> standardize(std::span<const double> x) {
  const double m = mean(x);
  const double var = sample_variance(x);
  if (var <= 0.0) fail(errc::constant_vector, "cannot standardize a constant vector");
  const double sd = std::sqrt(var);
  std::vector<double> out;
  out.reserve(x.size());
  for (double v : x) out.push_back((v - m) / sd);
  return out;
}

// ---------------------------------------------------------------------------
// Pearson correlation
// ---------------------------------------------------------------------------

struct PearsonResult {
  double r = 0.0;
  double p = 1.0;
  std::size_t n = 0;
};

inline PearsonResult pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(errc::invalid_argument, "pearson needs equal lengths");
  if (x.size() < 3) fail(errc::too_few_observations, "pearson needs n >= 3");
  const double mx = mean(x);
  const double my = mean(y);
  KahanSum sxy;
  KahanSum sxx;
  KahanSum syy;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy.add(dx * dy);
    sxx.add(dx * dx);
    syy.add(dy * dy);
  }
  if (sxx.value() <= 0.0 || syy.value() <= 0.0) {
    fail(errc::constant_vector, "pearson needs non-constant inputs");
  }
  PearsonResult result;
  result.n = x.size();
  result.r = sxy.value() / std::sqrt(sxx.value() * syy.value());

  const double df = static_cast<double>(x.size() - 2);
  const double r2 = result.r * result.r;
  if (r2 >= 1.0) {
    result.p = 0.0;
  } else {
    const double t = result.r * std::sqrt(df / (1.0 - r2));
    result.p = student_t_two_sided_p(t, df);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Ordinary least squares
// ---------------------------------------------------------------------------

struct Diagnostics {
  double durbin_watson = 0.0;
  double jarque_bera_stat = 0.0;
  double jarque_bera_p = 1.0;
  double breusch_pagan_lm = 0.0;
  double breusch_pagan_p = 1.0;
};

struct RegressionFit {
  std::vector<double> coefficients;  // intercept first when fitted with one
  std::vector<double> standard_errors;
  std::vector<double> t_values;
  std::vector<double> p_values;
  double r_squared = 0.0;
  double adj_r_squared = 0.0;
  std::vector<double> residuals;
  Diagnostics diagnostics;
  std::size_t n_obs = 0;
  bool intercept = true;
};

namespace detail {

// Dense column-major design matrix helper.
struct DesignMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // column-major

  double& at(std::size_t r, std::size_t c) { return data[c * rows + r]; }
  double at(std::size_t r, std::size_t c) const { return data[c * rows + r]; }
};

inline DesignMatrix build_design(std::span<const std::vector<double>> columns, bool intercept,
                                 std::size_t n) {
  DesignMatrix design;
  design.rows = n;
  design.cols = columns.size() + (intercept ? 1 : 0);
  design.data.assign(design.rows * design.cols, 0.0);
  std::size_t c = 0;
  if (intercept) {
    for (std::size_t r = 0; r < n; ++r) design.at(r, 0) = 1.0;
    c = 1;
  }
  for (const std::vector<double>& column : columns) {
    if (column.size() != n) fail(errc::invalid_argument, "predictor length mismatch");
    for (std::size_t r = 0; r < n; ++r) design.at(r, c) = column[r];
    ++c;
  }
  return design;
}

// Least squares through column-pivoted Householder QR. Outputs the
// coefficient vector and the unscaled covariance (X'X)^-1.
struct QrSolution {
  std::vector<double> beta;
  std::vector<std::vector<double>> xtx_inverse;
};

inline QrSolution qr_least_squares(DesignMatrix a, std::vector<double> y) {
  const std::size_t n = a.rows;
  const std::size_t p = a.cols;
  std::vector<std::size_t> perm(p);
  for (std::size_t j = 0; j < p; ++j) perm[j] = j;

  std::vector<double> beta_pivoted(p, 0.0);
  double max_diag = 0.0;

  for (std::size_t k = 0; k < p; ++k) {
    // Pivot: bring the column with the largest remaining norm to position k.
    std::size_t best = k;
    double best_norm = -1.0;
    for (std::size_t j = k; j < p; ++j) {
      double norm = 0.0;
      for (std::size_t r = k; r < n; ++r) norm += a.at(r, j) * a.at(r, j);
      if (norm > best_norm) {
        best_norm = norm;
        best = j;
      }
    }
    if (best != k) {
      for (std::size_t r = 0; r < n; ++r) std::swap(a.at(r, k), a.at(r, best));
      std::swap(perm[k], perm[best]);
    }

    // Householder reflector for column k.
    double norm = std::sqrt(best_norm);
    if (a.at(k, k) > 0.0) norm = -norm;
    const double rkk = norm;
    max_diag = std::max(max_diag, std::abs(rkk));
    if (std::abs(rkk) <= kRankTolerance * std::max(max_diag, 1e-300)) {
      fail(errc::rank_deficient, "design matrix is rank deficient");
    }

    std::vector<double> v(n - k, 0.0);
    for (std::size_t r = k; r < n; ++r) v[r - k] = a.at(r, k);
    v[0] -= rkk;
    double vnorm2 = 0.0;
    for (double vv : v) vnorm2 += vv * vv;

    a.at(k, k) = rkk;
    for (std::size_t r = k + 1; r < n; ++r) a.at(r, k) = 0.0;

    if (vnorm2 > 0.0) {
      for (std::size_t j = k + 1; j < p; ++j) {
        double dot = 0.0;
        for (std::size_t r = k; r < n; ++r) dot += v[r - k] * a.at(r, j);
        const double scale = 2.0 * dot / vnorm2;
        for (std::size_t r = k; r < n; ++r) a.at(r, j) -= scale * v[r - k];
      }
      double dot = 0.0;
      for (std::size_t r = k; r < n; ++r) dot += v[r - k] * y[r];
      const double scale = 2.0 * dot / vnorm2;
      for (std::size_t r = k; r < n; ++r) y[r] -= scale * v[r - k];
    }
  }

  // Back substitution: R beta = Q'y (first p entries of transformed y).
  for (std::size_t step = p; step-- > 0;) {
    double value = y[step];
    for (std::size_t j = step + 1; j < p; ++j) value -= a.at(step, j) * beta_pivoted[j];
    beta_pivoted[step] = value / a.at(step, step);
  }

  // R^-1 (upper triangular inverse), then (X'X)^-1 = P R^-1 R^-T P'.
  std::vector<std::vector<double>> rinv(p, std::vector<double>(p, 0.0));
  for (std::size_t j = 0; j < p; ++j) {
    rinv[j][j] = 1.0 / a.at(j, j);
    for (std::size_t i = j; i-- > 0;) {
      double value = 0.0;
      for (std::size_t l = i + 1; l <= j; ++l) value += a.at(i, l) * rinv[l][j];
      rinv[i][j] = -value / a.at(i, i);
    }
  }

  QrSolution solution;
  solution.beta.assign(p, 0.0);
  solution.xtx_inverse.assign(p, std::vector<double>(p, 0.0));
  for (std::size_t i = 0; i < p; ++i) solution.beta[perm[i]] = beta_pivoted[i];
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      double value = 0.0;
      for (std::size_t l = std::max(i, j); l < p; ++l) value += rinv[i][l] * rinv[j][l];
      solution.xtx_inverse[perm[i]][perm[j]] = value;
    }
  }
  return solution;
}

}  // namespace detail

// Residual diagnostics for an intercept-including fit.
//   DW = sum (e_t - e_{t-1})^2 / sum e_t^2
//   JB = n/6 (skew^2 + (kurtosis - 3)^2 / 4), p from chi^2(2)
//   BP = n * R^2 of e^2 regressed on the predictors, p from chi^2(#predictors)
inline Diagnostics diagnostics(std::span<const double> residuals,
                               std::span<const std::vector<double>> predictors);

inline RegressionFit ols_fit(std::span<const double> y,
                             std::span<const std::vector<double>> predictors,
                             bool intercept = true) {
  const std::size_t n = y.size();
  const std::size_t p = predictors.size() + (intercept ? 1 : 0);
  if (n <= p) fail(errc::too_few_observations, "ols_fit needs n > #coefficients");

  const detail::DesignMatrix design = detail::build_design(predictors, intercept, n);
  const detail::QrSolution solution =
      detail::qr_least_squares(design, std::vector<double>(y.begin(), y.end()));

  RegressionFit fit;
  fit.n_obs = n;
  fit.intercept = intercept;
  fit.coefficients = solution.beta;

  fit.residuals.assign(n, 0.0);
  KahanSum rss_acc;
  for (std::size_t r = 0; r < n; ++r) {
    double predicted = 0.0;
    for (std::size_t c = 0; c < p; ++c) predicted += design.at(r, c) * solution.beta[c];
    fit.residuals[r] = y[r] - predicted;
    rss_acc.add(fit.residuals[r] * fit.residuals[r]);
  }
  const double rss = rss_acc.value();
  const double df_resid = static_cast<double>(n - p);
  const double sigma2 = rss / df_resid;

  fit.standard_errors.resize(p);
  fit.t_values.resize(p);
  fit.p_values.resize(p);
  for (std::size_t c = 0; c < p; ++c) {
    fit.standard_errors[c] = std::sqrt(sigma2 * solution.xtx_inverse[c][c]);
    fit.t_values[c] =
        fit.standard_errors[c] > 0.0 ? fit.coefficients[c] / fit.standard_errors[c] : 0.0;
    fit.p_values[c] = student_t_two_sided_p(fit.t_values[c], df_resid);
  }

  KahanSum tss_acc;
  if (intercept) {
    const double my = mean(y);
    for (double v : y) tss_acc.add((v - my) * (v - my));
  } else {
    for (double v : y) tss_acc.add(v * v);
  }
  const double tss = tss_acc.value();
  fit.r_squared = tss > 0.0 ? 1.0 - rss / tss : 0.0;
  const double nf = static_cast<double>(n);
  if (intercept) {
    fit.adj_r_squared = 1.0 - (1.0 - fit.r_squared) * (nf - 1.0) / df_resid;
  } else {
    fit.adj_r_squared = 1.0 - (1.0 - fit.r_squared) * nf / df_resid;
  }

  if (intercept) fit.diagnostics = diagnostics(fit.residuals, predictors);
  return fit;
}

inline Diagnostics diagnostics(std::span<const double> residuals,
                               std::span<const std::vector<double>> predictors) {
  Diagnostics out;
  const std::size_t n = residuals.size();
  if (n < 3) fail(errc::too_few_observations, "diagnostics need n >= 3");
  const double nf = static_cast<double>(n);

  KahanSum diff2;
  KahanSum sum2;
  for (std::size_t t = 0; t < n; ++t) {
    sum2.add(residuals[t] * residuals[t]);
    if (t > 0) {
      const double d = residuals[t] - residuals[t - 1];
      diff2.add(d * d);
    }
  }
  out.durbin_watson = sum2.value() > 0.0 ? diff2.value() / sum2.value() : 0.0;

  // Moment-based skewness and (non-excess) kurtosis.
  const double m = mean(residuals);
  KahanSum m2a;
  KahanSum m3a;
  KahanSum m4a;
  for (double e : residuals) {
    const double d = e - m;
    m2a.add(d * d);
    m3a.add(d * d * d);
    m4a.add(d * d * d * d);
  }
  const double m2 = m2a.value() / nf;
  const double m3 = m3a.value() / nf;
  const double m4 = m4a.value() / nf;
  if (m2 > 0.0) {
    const double skew = m3 / std::pow(m2, 1.5);
    const double kurt = m4 / (m2 * m2);
    out.jarque_bera_stat = nf / 6.0 * (skew * skew + 0.25 * (kurt - 3.0) * (kurt - 3.0));
    out.jarque_bera_p = chi_squared_sf(out.jarque_bera_stat, 2.0);
  }

  if (!predictors.empty()) {
    std::vector<double> squared(n);
    for (std::size_t t = 0; t < n; ++t) squared[t] = residuals[t] * residuals[t];
    const std::size_t paux = predictors.size() + 1;
    if (n > paux) {
      const detail::DesignMatrix aux = detail::build_design(predictors, true, n);
      const detail::QrSolution sol = detail::qr_least_squares(aux, squared);
      KahanSum rss_acc;
      for (std::size_t r = 0; r < n; ++r) {
        double predicted = 0.0;
        for (std::size_t c = 0; c < paux; ++c) predicted += aux.at(r, c) * sol.beta[c];
        const double e = squared[r] - predicted;
        rss_acc.add(e * e);
      }
      const double ms = mean(squared);
      KahanSum tss_acc;
      for (double v : squared) tss_acc.add((v - ms) * (v - ms));
      // Squared residuals that are constant up to rounding carry no
      // heteroskedasticity signal; the auxiliary R^2 would be noise/noise.
      if (tss_acc.value() <= 1e-20 * nf * ms * ms) {
        out.breusch_pagan_lm = 0.0;
        out.breusch_pagan_p = 1.0;
      } else {
        const double r2 = 1.0 - rss_acc.value() / tss_acc.value();
        out.breusch_pagan_lm = nf * r2;
        out.breusch_pagan_p =
            chi_squared_sf(out.breusch_pagan_lm, static_cast<double>(predictors.size()));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Partial correlation
// ---------------------------------------------------------------------------

struct PartialCorrelation {
  double r = 0.0;
  double p = 1.0;
  std::size_t n = 0;
  double ci_low = -1.0;
  double ci_high = 1.0;
  std::string ci_method = "fisher-z";
};

// p-value and CI transformations shared with judge-affinity reporting.
inline double partial_p_from_r(double r, std::size_t n, std::size_t n_controls) {
  const double df = static_cast<double>(n - 2 - n_controls);
  if (df <= 0.0) fail(errc::too_few_observations, "partial correlation needs n > #controls + 2");
  const double r2 = r * r;
  if (r2 >= 1.0) return 0.0;
  return student_t_two_sided_p(r * std::sqrt(df / (1.0 - r2)), df);
}

inline std::pair<double, double> fisher_ci_95(double r, std::size_t n, std::size_t n_controls) {
  if (n <= n_controls + 3) return {-1.0, 1.0};
  constexpr double kZ95 = 1.959963984540054;
  const double z = std::atanh(r);
  const double se = 1.0 / std::sqrt(static_cast<double>(n - 3 - n_controls));
  return {std::tanh(z - kZ95 * se), std::tanh(z + kZ95 * se)};
}

// Pearson correlation of the residuals after regressing each of x and y on
// the controls (with intercept).
inline PartialCorrelation partial_correlation(std::span<const double> x,
                                              std::span<const double> y,
                                              std::span<const std::vector<double>> controls) {
  const std::size_t n = x.size();
  if (y.size() != n) fail(errc::invalid_argument, "partial_correlation needs equal lengths");
  if (n <= controls.size() + 2) {
    fail(errc::too_few_observations, "partial correlation needs n > #controls + 2");
  }
  const RegressionFit fx = ols_fit(x, controls, true);
  const RegressionFit fy = ols_fit(y, controls, true);

  // Residuals that are zero up to rounding mean the variable is an exact
  // linear function of the controls; the correlation is undefined.
  auto effectively_constant = [](std::span<const double> values,
                                 std::span<const double> residuals) {
    const double m = mean(values);
    KahanSum tss;
    for (double v : values) tss.add((v - m) * (v - m));
    KahanSum rss;
    for (double e : residuals) rss.add(e * e);
    return rss.value() <= 1e-24 * tss.value();
  };
  if (effectively_constant(x, fx.residuals) || effectively_constant(y, fy.residuals)) {
    fail(errc::constant_vector, "residuals vanish: input is linear in the controls");
  }
  const PearsonResult res = pearson(fx.residuals, fy.residuals);

  PartialCorrelation out;
  out.r = res.r;
  out.n = n;
  out.p = partial_p_from_r(res.r, n, controls.size());
  const auto [lo, hi] = fisher_ci_95(res.r, n, controls.size());
  out.ci_low = lo;
  out.ci_high = hi;
  return out;
}

}  // namespace capa::stats
