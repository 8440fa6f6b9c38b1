#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vlaudit/error.hpp"
#include "vlaudit/parallel.hpp"

namespace vlaudit {

enum class Alternative { two_sided, less, greater };
enum class TestMethod { wilcoxon_ranksum, t_paired, t_independent_one_sided, permutation };

inline std::string to_string(Alternative a) {
  switch (a) {
    case Alternative::two_sided: return "two-sided";
    case Alternative::less: return "less";
    case Alternative::greater: return "greater";
  }
  return "two-sided";
}

inline Alternative parse_alternative(std::string_view s) {
  if (s == "two-sided" || s == "two_sided") return Alternative::two_sided;
  if (s == "less") return Alternative::less;
  if (s == "greater") return Alternative::greater;
  throw Error(ErrorCode::InvalidArgument, "alternative " + std::string(s));
}

inline std::string to_string(TestMethod m) {
  switch (m) {
    case TestMethod::wilcoxon_ranksum: return "wilcoxon_ranksum";
    case TestMethod::t_paired: return "t_paired";
    case TestMethod::t_independent_one_sided: return "t_independent_one_sided";
    case TestMethod::permutation: return "permutation";
  }
  return "?";
}

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  TestMethod method = TestMethod::wilcoxon_ranksum;
  Alternative alternative = Alternative::two_sided;
  std::optional<double> df;
  bool exact = false;
  bool p_floored = false;  // true p underflowed; p_value holds the smallest normal double
};

/// Clamps to [0, 1] and replaces an underflowed zero by the smallest normal
/// double, marking the result so reports print "<p".
inline void finalize_p(TestResult& r, double p) {
  p = std::clamp(p, 0.0, 1.0);
  if (p == 0.0 || std::isnan(p)) {
    r.p_value = std::numeric_limits<double>::min();
    r.p_floored = true;
  } else {
    r.p_value = p;
  }
}

inline std::string format_p(double p, bool floored) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%s%.6g", floored ? "<" : "", p);
  return buf;
}

inline nlohmann::json to_json(const TestResult& r) {
  nlohmann::json j = {{"statistic", r.statistic},
                      {"p_value", r.p_value},
                      {"p_display", format_p(r.p_value, r.p_floored)},
                      {"n1", r.n1},
                      {"n2", r.n2},
                      {"method", to_string(r.method)},
                      {"alternative", to_string(r.alternative)},
                      {"exact", r.exact}};
  if (r.df) j["df"] = *r.df;
  return j;
}

// ---------------------------------------------------------------------------
// Descriptive helpers
// ---------------------------------------------------------------------------

inline double mean(std::span<const double> x) {
  if (x.empty()) throw Error(ErrorCode::EmptySample, "mean of empty sample");
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

/// Sample variance with n-1 denominator (two-pass).
inline double variance(std::span<const double> x) {
  if (x.size() < 2) throw Error(ErrorCode::EmptySample, "variance needs at least two values");
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

inline double stddev(std::span<const double> x) { return std::sqrt(variance(x)); }

/// Linear-interpolation quantile (the "type 7" rule) of a sorted sample.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error(ErrorCode::EmptySample, "quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Box-plot summary; whiskers reach the most extreme values within 1.5 IQR.
struct BoxSummary {
  std::size_t n = 0;
  double mean = 0, median = 0, q1 = 0, q3 = 0, whisker_low = 0, whisker_high = 0, min = 0, max = 0;
};

inline BoxSummary box_summary(std::span<const double> x) {
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  BoxSummary b;
  b.n = s.size();
  b.mean = vlaudit::mean(s);
  b.median = quantile_sorted(s, 0.5);
  b.q1 = quantile_sorted(s, 0.25);
  b.q3 = quantile_sorted(s, 0.75);
  b.min = s.front();
  b.max = s.back();
  const double iqr = b.q3 - b.q1;
  b.whisker_low = *std::lower_bound(s.begin(), s.end(), b.q1 - 1.5 * iqr);
  b.whisker_high = *(std::upper_bound(s.begin(), s.end(), b.q3 + 1.5 * iqr) - 1);
  return b;
}

inline nlohmann::json to_json(const BoxSummary& b) {
  return {{"n", b.n},           {"mean", b.mean}, {"median", b.median},           {"q1", b.q1},
          {"q3", b.q3},         {"min", b.min},   {"whisker_low", b.whisker_low}, {"whisker_high", b.whisker_high},
          {"max", b.max}};
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

inline double student_cdf(double t, double df) {
  boost::math::students_t_distribution<double> dist(df);
  return boost::math::cdf(dist, t);
}

inline double student_sf(double t, double df) {
  boost::math::students_t_distribution<double> dist(df);
  return boost::math::cdf(boost::math::complement(dist, t));
}

inline double p_from_t(double t, double df, Alternative alt) {
  switch (alt) {
    case Alternative::less: return student_cdf(t, df);
    case Alternative::greater: return student_sf(t, df);
    case Alternative::two_sided: return std::min(1.0, 2.0 * student_sf(std::fabs(t), df));
  }
  return 1.0;
}

// ---------------------------------------------------------------------------
// Wilcoxon rank-sum
// ---------------------------------------------------------------------------

/// Midranks (1-based) of the pooled sample, plus sum over tie groups of t^3 - t.
struct Ranking {
  std::vector<double> ranks;
  double tie_term = 0.0;
};

inline Ranking midranks(std::span<const double> pooled) {
  const std::size_t n = pooled.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return pooled[i] < pooled[j]; });
  Ranking out;
  out.ranks.resize(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) out.ranks[order[k]] = rank;
    const double t = static_cast<double>(j - i + 1);
    out.tie_term += t * t * t - t;
    i = j + 1;
  }
  return out;
}

enum class RankSumMethod { automatic, exact, normal };

namespace detail {

/// Null distribution of the sum of `k` of the given doubled (integer) ranks,
/// every k-subset equally likely. Returns counts indexed by doubled sum.
inline std::vector<double> subset_sum_counts(const std::vector<std::int64_t>& doubled, std::size_t k) {
  std::int64_t max_sum = 0;
  {
    auto sorted = doubled;
    std::sort(sorted.rbegin(), sorted.rend());
    for (std::size_t i = 0; i < k; ++i) max_sum += sorted[i];
  }
  const auto width = static_cast<std::size_t>(max_sum + 1);
  std::vector<double> ways((k + 1) * width, 0.0);
  ways[0] = 1.0;
  std::size_t seen = 0;
  for (auto r : doubled) {
    ++seen;
    for (std::size_t c = std::min(k, seen); c >= 1; --c) {
      double* dst = &ways[c * width];
      const double* src = &ways[(c - 1) * width];
      for (std::size_t s = width; s-- > static_cast<std::size_t>(r);) dst[s] += src[s - static_cast<std::size_t>(r)];
    }
  }
  return {ways.begin() + static_cast<std::ptrdiff_t>(k * width), ways.end()};
}

}  // namespace detail

/// Rank-sum test; the statistic is the midrank sum of `a`. The exact null is
/// used when either sample has fewer than 8 values (and the pooled size stays
/// below 1000); otherwise the tie-corrected normal approximation with
/// continuity correction.
inline TestResult wilcoxon_ranksum(std::span<const double> a, std::span<const double> b,
                                   Alternative alt = Alternative::two_sided,
                                   RankSumMethod method = RankSumMethod::automatic) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::EmptySample, "rank-sum needs two non-empty samples");
  const std::size_t n1 = a.size(), n2 = b.size(), n = n1 + n2;
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const Ranking rk = midranks(pooled);
  double w = 0.0;
  for (std::size_t i = 0; i < n1; ++i) w += rk.ranks[i];

  TestResult res;
  res.statistic = w;
  res.n1 = n1;
  res.n2 = n2;
  res.method = TestMethod::wilcoxon_ranksum;
  res.alternative = alt;

  const bool use_exact = method == RankSumMethod::exact ||
                         (method == RankSumMethod::automatic && (n1 < 8 || n2 < 8) && n <= 1000);
  const double mu = static_cast<double>(n1) * static_cast<double>(n + 1) / 2.0;
  if (use_exact) {
    res.exact = true;
    std::vector<std::int64_t> doubled(n);
    for (std::size_t i = 0; i < n; ++i) doubled[i] = std::llround(2.0 * rk.ranks[i]);
    const std::int64_t total = std::accumulate(doubled.begin(), doubled.end(), std::int64_t{0});
    // Count over the smaller side; W_a = total - W_b when b is smaller.
    const bool flip = n2 < n1;
    const std::size_t k = flip ? n2 : n1;
    const auto counts = detail::subset_sum_counts(doubled, k);
    const std::int64_t w2 = std::llround(2.0 * w);
    const std::int64_t mu2 = std::llround(2.0 * mu);  // 2*mu is an integer: n1 (n + 1)
    double le = 0.0, ge = 0.0, far = 0.0, all = 0.0;
    for (std::size_t s = 0; s < counts.size(); ++s) {
      if (counts[s] == 0.0) continue;
      const std::int64_t wa2 = flip ? total - static_cast<std::int64_t>(s) : static_cast<std::int64_t>(s);
      all += counts[s];
      if (wa2 <= w2) le += counts[s];
      if (wa2 >= w2) ge += counts[s];
      if (std::llabs(wa2 - mu2) >= std::llabs(w2 - mu2)) far += counts[s];
    }
    const double p = alt == Alternative::less ? le / all : alt == Alternative::greater ? ge / all : far / all;
    finalize_p(res, p);
    return res;
  }

  const double nn = static_cast<double>(n);
  const double var = static_cast<double>(n1) * static_cast<double>(n2) / 12.0 *
                     ((nn + 1.0) - rk.tie_term / (nn * (nn - 1.0)));
  if (var <= 0.0) {
    finalize_p(res, 1.0);  // every value tied: no evidence either way
    return res;
  }
  const double sd = std::sqrt(var);
  const double diff = w - mu;
  double p = 1.0;
  switch (alt) {
    case Alternative::less: p = normal_cdf((diff + 0.5) / sd); break;
    case Alternative::greater: p = normal_sf((diff - 0.5) / sd); break;
    case Alternative::two_sided: p = std::min(1.0, 2.0 * normal_sf(std::max(0.0, std::fabs(diff) - 0.5) / sd)); break;
  }
  finalize_p(res, p);
  return res;
}

// ---------------------------------------------------------------------------
// t-tests
// ---------------------------------------------------------------------------

/// Paired t-test on the differences b - a, with n - 1 degrees of freedom.
/// `greater` tests mean(b - a) > 0.
inline TestResult t_test_paired(std::span<const double> a, std::span<const double> b,
                                Alternative alt = Alternative::two_sided) {
  if (a.size() != b.size()) throw Error(ErrorCode::SizeMismatch, "paired samples differ in length");
  if (a.size() < 2) throw Error(ErrorCode::EmptySample, "paired t-test needs n >= 2");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = b[i] - a[i];
  const double sd = stddev(d);
  if (sd == 0.0) throw Error(ErrorCode::DegenerateVariance, "differences have zero variance");
  const double n = static_cast<double>(d.size());
  TestResult res;
  res.statistic = mean(d) / (sd / std::sqrt(n));
  res.n1 = res.n2 = d.size();
  res.method = TestMethod::t_paired;
  res.alternative = alt;
  res.df = n - 1.0;
  finalize_p(res, p_from_t(res.statistic, n - 1.0, alt));
  return res;
}

/// Welch t-test of mean(a) vs mean(b) with Welch-Satterthwaite df.
inline TestResult t_test_welch(std::span<const double> a, std::span<const double> b, Alternative alt) {
  if (a.size() < 2 || b.size() < 2) throw Error(ErrorCode::EmptySample, "Welch t-test needs n >= 2 per sample");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double va = variance(a) / na, vb = variance(b) / nb;
  const double se2 = va + vb;
  if (se2 == 0.0) throw Error(ErrorCode::DegenerateVariance, "both samples are constant");
  TestResult res;
  res.statistic = (mean(a) - mean(b)) / std::sqrt(se2);
  res.n1 = a.size();
  res.n2 = b.size();
  res.method = TestMethod::t_independent_one_sided;
  res.alternative = alt;
  res.df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  finalize_p(res, p_from_t(res.statistic, *res.df, alt));
  return res;
}

/// One-sided Welch test of mean(a) > mean(b).
inline TestResult t_test_independent_one_sided(std::span<const double> a, std::span<const double> b) {
  return t_test_welch(a, b, Alternative::greater);
}

// ---------------------------------------------------------------------------
// Pearson correlation
// ---------------------------------------------------------------------------

struct PearsonResult {
  double r = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  bool p_floored = false;
};

inline PearsonResult pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::SizeMismatch, "pearson inputs differ in length");
  if (x.size() < 3) throw Error(ErrorCode::EmptySample, "pearson needs n >= 3");
  const double mx = mean(x), my = mean(y);
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::DegenerateVariance, "pearson input has zero variance");
  PearsonResult out;
  out.n = x.size();
  out.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = static_cast<double>(x.size()) - 2.0;
  double p = 0.0;
  if (std::fabs(out.r) < 1.0) {
    const double t = out.r * std::sqrt(df / (1.0 - out.r * out.r));
    p = std::min(1.0, 2.0 * student_sf(std::fabs(t), df));
  }
  TestResult tmp;
  finalize_p(tmp, p);
  out.p_value = tmp.p_value;
  out.p_floored = tmp.p_floored;
  return out;
}

// ---------------------------------------------------------------------------
// Polynomial least squares
// ---------------------------------------------------------------------------

struct PolyFit {
  std::vector<double> coefficients;  // c0 + c1 x + c2 x^2 + ...
  double rss = 0.0;

  double operator()(double x) const {
    double y = 0.0;
    for (std::size_t k = coefficients.size(); k-- > 0;) y = y * x + coefficients[k];
    return y;
  }
};

/// Least-squares polynomial via column-pivoted Householder QR of the
/// Vandermonde matrix. Needs more than `degree` distinct x values.
inline PolyFit polyfit(std::span<const double> x, std::span<const double> y, std::size_t degree) {
  if (x.size() != y.size()) throw Error(ErrorCode::SizeMismatch, "polyfit inputs differ in length");
  std::vector<double> distinct(x.begin(), x.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < degree + 1)
    throw Error(ErrorCode::InvalidArgument, "polyfit of degree " + std::to_string(degree) + " needs " +
                                                std::to_string(degree + 1) + " distinct x values");
  const auto n = static_cast<Eigen::Index>(x.size());
  const auto cols = static_cast<Eigen::Index>(degree + 1);
  Eigen::MatrixXd design(n, cols);
  Eigen::VectorXd rhs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double p = 1.0;
    for (Eigen::Index k = 0; k < cols; ++k) {
      design(i, k) = p;
      p *= x[static_cast<std::size_t>(i)];
    }
    rhs(i) = y[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd coef = design.colPivHouseholderQr().solve(rhs);
  PolyFit fit;
  fit.coefficients.assign(coef.data(), coef.data() + coef.size());
  const Eigen::VectorXd resid = rhs - design * coef;
  fit.rss = resid.squaredNorm();
  return fit;
}

struct PolyFit2 {
  double c0 = 0.0, c1 = 0.0, c2 = 0.0;
  double rss = 0.0;

  double operator()(double x) const { return c0 + x * (c1 + x * c2); }
};

inline PolyFit2 polyfit2(std::span<const double> x, std::span<const double> y) {
  const auto f = polyfit(x, y, 2);
  return {f.coefficients[0], f.coefficients[1], f.coefficients[2], f.rss};
}

// ---------------------------------------------------------------------------
// Covariance ellipse
// ---------------------------------------------------------------------------

struct Point2 {
  double x = 0.0, y = 0.0;
};

struct CovEllipse {
  Point2 center;
  double major = 0.0;     // full axis length, 2 * k_sigma * sqrt(largest eigenvalue)
  double minor = 0.0;
  double rotation = 0.0;  // angle of the major axis, radians in (-pi/2, pi/2]
};

inline CovEllipse cov_ellipse(std::span<const Point2> pts, double k_sigma = 2.0) {
  if (pts.size() < 3) throw Error(ErrorCode::EmptySample, "ellipse needs n >= 3");
  const double n = static_cast<double>(pts.size());
  CovEllipse e;
  for (const auto& p : pts) {
    e.center.x += p.x;
    e.center.y += p.y;
  }
  e.center.x /= n;
  e.center.y /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (const auto& p : pts) {
    const double dx = p.x - e.center.x, dy = p.y - e.center.y;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  sxx /= n - 1.0;
  syy /= n - 1.0;
  sxy /= n - 1.0;
  if (sxx + syy == 0.0) throw Error(ErrorCode::DegenerateVariance, "all points coincide");
  const double half_trace = 0.5 * (sxx + syy);
  const double disc = std::sqrt(0.25 * (sxx - syy) * (sxx - syy) + sxy * sxy);
  const double l1 = half_trace + disc;
  const double l2 = std::max(0.0, half_trace - disc);
  e.major = 2.0 * k_sigma * std::sqrt(l1);
  e.minor = 2.0 * k_sigma * std::sqrt(l2);
  double angle = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
  if (angle <= -std::numbers::pi / 2) angle += std::numbers::pi;
  e.rotation = angle;
  return e;
}

// ---------------------------------------------------------------------------
// Kernel density
// ---------------------------------------------------------------------------

struct KdeCurve {
  std::vector<double> grid;
  std::vector<double> density;
  double bandwidth = 0.0;
};

/// Scott's rule: sample sd * n^(-1/5).
inline double scott_bandwidth(std::span<const double> sample) {
  return stddev(sample) * std::pow(static_cast<double>(sample.size()), -0.2);
}

/// Evenly spaced grid covering the sample padded by `pad` bandwidths.
inline std::vector<double> kde_grid(std::span<const double> sample, double bandwidth, std::size_t points = 256,
                                    double pad = 4.0) {
  if (points < 2) throw Error(ErrorCode::InvalidArgument, "grid needs >= 2 points");
  const auto [lo, hi] = std::minmax_element(sample.begin(), sample.end());
  const double a = *lo - pad * bandwidth, b = *hi + pad * bandwidth;
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i) g[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(points - 1);
  return g;
}

/// Gaussian KDE. Bandwidth defaults to Scott's rule.
inline KdeCurve kde(std::span<const double> sample, std::span<const double> grid,
                    std::optional<double> bandwidth = std::nullopt) {
  if (sample.size() < 2) throw Error(ErrorCode::EmptySample, "kde needs n >= 2");
  const double h = bandwidth ? *bandwidth : scott_bandwidth(sample);
  if (!(h > 0.0)) throw Error(ErrorCode::InvalidArgument, "kde bandwidth must be positive");
  KdeCurve out;
  out.bandwidth = h;
  out.grid.assign(grid.begin(), grid.end());
  out.density.resize(grid.size());
  const double norm = 1.0 / (static_cast<double>(sample.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double s = 0.0;
    for (double v : sample) {
      const double u = (grid[g] - v) / h;
      s += std::exp(-0.5 * u * u);
    }
    out.density[g] = s * norm;
  }
  return out;
}

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

struct Pca3 {
  std::size_t dim = 0;
  std::vector<double> mean;                // dim
  std::vector<double> components;          // 3 x dim, row-major, orthonormal rows
  std::array<double, 3> explained{};       // eigenvalues, nonincreasing
  double total_variance = 0.0;
  std::vector<std::array<double, 3>> projected;
};

/// Top-3 principal components of the rows of a row-major n x dim matrix,
/// via a symmetric eigendecomposition of the sample covariance. Each
/// component is signed so its largest-magnitude entry is positive.
inline Pca3 pca3(std::span<const double> data, std::size_t n, std::size_t dim) {
  if (n < 4) throw Error(ErrorCode::EmptySample, "pca3 needs at least 4 vectors");
  if (dim < 3) throw Error(ErrorCode::InvalidArgument, "pca3 needs dim >= 3");
  if (data.size() != n * dim) throw Error(ErrorCode::SizeMismatch, "pca3 data size");
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
      data.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mu;
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw Error(ErrorCode::InvalidArgument, "eigendecomposition failed");

  Pca3 out;
  out.dim = dim;
  out.mean.assign(mu.data(), mu.data() + dim);
  out.total_variance = cov.trace();
  out.components.resize(3 * dim);
  const auto d = static_cast<Eigen::Index>(dim);
  for (int c = 0; c < 3; ++c) {
    Eigen::VectorXd v = solver.eigenvectors().col(d - 1 - c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    out.explained[static_cast<std::size_t>(c)] = std::max(0.0, solver.eigenvalues()(d - 1 - c));
    for (std::size_t j = 0; j < dim; ++j) out.components[static_cast<std::size_t>(c) * dim + j] = v(static_cast<Eigen::Index>(j));
  }
  out.projected.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < dim; ++j) s += (data[i * dim + j] - out.mean[j]) * out.components[c * dim + j];
      out.projected[i][c] = s;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Permutation engine
// ---------------------------------------------------------------------------

/// C(n, k) as a double (exact below 2^53).
inline double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return std::round(r);
}

/// Statistic of every way to pick `k` of `n` indices as the first group,
/// enumerated in lexicographic order.
template <typename Stat>
std::vector<double> exact_partition_statistics(std::size_t n, std::size_t k, Stat&& stat) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(binomial(n, k)));
  std::vector<std::size_t> pick(k);
  std::iota(pick.begin(), pick.end(), 0);
  while (true) {
    out.push_back(stat(std::span<const std::size_t>(pick)));
    std::size_t i = k;
    while (i > 0 && pick[i - 1] == n - k + (i - 1)) --i;
    if (i == 0) break;
    ++pick[i - 1];
    for (std::size_t j = i; j < k; ++j) pick[j] = pick[j - 1] + 1;
  }
  return out;
}

/// Statistic of `resamples` random k-of-n picks. Resample r draws from
/// stream (seed, r), so the result does not depend on the worker count.
template <typename Stat>
std::vector<double> sampled_partition_statistics(std::size_t n, std::size_t k, std::size_t resamples,
                                                 std::uint64_t seed, Stat&& stat) {
  std::vector<double> out(resamples);
  parallel_for(resamples, [&](std::size_t r) {
    CounterRng rng(seed, r);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
    std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
    out[r] = stat(std::span<const std::size_t>(idx.data(), k));
  });
  return out;
}

inline constexpr double kExactPartitionLimit = 20000.0;

/// Two-sample permutation test on mean(a) - mean(b). Exact over all
/// relabelings when there are at most 20000 of them, otherwise `resamples`
/// random relabelings. p counts relabelings at least as extreme as observed.
inline TestResult permutation_test(std::span<const double> a, std::span<const double> b,
                                   Alternative alt = Alternative::two_sided, std::size_t resamples = 10000,
                                   std::uint64_t seed = 0) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::EmptySample, "permutation test needs two non-empty samples");
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const std::size_t n = pooled.size(), k = a.size();
  const double total = std::accumulate(pooled.begin(), pooled.end(), 0.0);
  auto stat = [&](std::span<const std::size_t> first) {
    double s = 0.0;
    for (auto i : first) s += pooled[i];
    return s / static_cast<double>(k) - (total - s) / static_cast<double>(n - k);
  };
  std::vector<std::size_t> head(k);
  std::iota(head.begin(), head.end(), 0);
  const double observed = stat(head);
  const bool exact = binomial(n, k) <= kExactPartitionLimit;
  const auto null = exact ? exact_partition_statistics(n, k, stat) : sampled_partition_statistics(n, k, resamples, seed, stat);
  const double tol = 1e-12 * std::max(1.0, std::fabs(observed));
  std::size_t hits = 0;
  for (double s : null) {
    switch (alt) {
      case Alternative::greater: hits += s >= observed - tol; break;
      case Alternative::less: hits += s <= observed + tol; break;
      case Alternative::two_sided: hits += std::fabs(s) >= std::fabs(observed) - tol; break;
    }
  }
  TestResult res;
  res.statistic = observed;
  res.n1 = a.size();
  res.n2 = b.size();
  res.method = TestMethod::permutation;
  res.alternative = alt;
  res.exact = exact;
  finalize_p(res, static_cast<double>(hits) / static_cast<double>(null.size()));
  return res;
}

}  // namespace vlaudit
