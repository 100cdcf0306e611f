#pragma once

// Small numerical helpers shared by the data and validation modules:
// order-statistic quantiles, the Student-t tail via the regularized
// incomplete beta function, and ordinary least squares.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace causalkit::stats {

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman & Fan type 7): h = (n - 1) p, q = x[floor h] + (h - floor h)(x[floor h + 1] - x[floor h]).
inline double quantile(std::span<const double> values, double p) {
    if (values.empty()) throw std::invalid_argument("quantile of empty sample");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Shannon entropy in bits of a probability vector; 0 log 0 is taken as 0.
inline double entropy_bits(std::span<const double> probabilities) {
    double h = 0.0;
    for (double p : probabilities) {
        if (p > 0.0) h -= p * std::log2(p);
    }
    return std::max(h, 0.0);
}

struct Summary {
    double mean = 0.0;
    double min = 0.0;
    double q25 = 0.0;
    double median = 0.0;
    double q75 = 0.0;
    double max = 0.0;
};

inline Summary summarize(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("summary of empty sample");
    Summary s;
    double total = 0.0;
    for (double v : values) total += v;
    s.mean = total / static_cast<double>(values.size());
    s.min = *std::min_element(values.begin(), values.end());
    s.max = *std::max_element(values.begin(), values.end());
    s.q25 = quantile(values, 0.25);
    s.median = quantile(values, 0.50);
    s.q75 = quantile(values, 0.75);
    // Rounding in the mean can push it a ulp outside [min, max] for constant input.
    s.mean = std::clamp(s.mean, s.min, s.max);
    return s;
}

namespace detail {

// Continued fraction for the incomplete beta function, modified Lentz method.
inline double beta_continued_fraction(double a, double b, double x) {
    constexpr int max_iterations = 10000;
    constexpr double eps = 1e-16;
    constexpr double tiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iterations; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < eps) break;
    }
    return h;
}

}  // namespace detail

/// Regularized incomplete beta function I_x(a, b) for a, b > 0 and x in [0, 1].
inline double incomplete_beta(double a, double b, double x) {
    if (a <= 0.0 || b <= 0.0) throw std::invalid_argument("incomplete_beta: a, b must be positive");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                             a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    // The continued fraction converges fastest for x < (a + 1) / (a + b + 2).
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * detail::beta_continued_fraction(a, b, x) / a;
    }
    return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// P(|T| >= |t|) for T ~ Student-t with `dof` degrees of freedom.
inline double student_t_two_sided_p(double t, double dof) {
    if (dof <= 0.0) throw std::invalid_argument("student_t_two_sided_p: dof must be positive");
    if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
    if (std::isinf(t)) return 0.0;
    const double x = dof / (dof + t * t);
    return std::clamp(incomplete_beta(0.5 * dof, 0.5, x), 0.0, 1.0);
}

/// Student-t CDF, P(T <= t).
inline double student_t_cdf(double t, double dof) {
    const double tail = 0.5 * student_t_two_sided_p(t, dof);
    return t >= 0.0 ? 1.0 - tail : tail;
}

struct OlsFit {
    Eigen::VectorXd coefficients;  // [intercept, slope_1, ..., slope_p]
    Eigen::VectorXd std_errors;
    Eigen::VectorXd residuals;
    double residual_variance = 0.0;
    std::size_t dof = 0;
};

/// Thrown by `ols` when the design matrix (with intercept) is not of full column rank.
struct SingularDesign : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Ordinary least squares of `y` on the columns of `x` plus an intercept.
/// Requires rows > cols + 1.
inline OlsFit ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    const auto n = x.rows();
    const auto p = x.cols();
    if (y.size() != n) throw std::invalid_argument("ols: row count mismatch");
    if (n <= p + 1) throw std::invalid_argument("ols: need more rows than parameters");

    Eigen::MatrixXd design(n, p + 1);
    design.col(0).setOnes();
    design.rightCols(p) = x;

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    if (qr.rank() < p + 1) throw SingularDesign("design matrix is rank deficient");

    OlsFit fit;
    fit.coefficients = qr.solve(y);
    fit.residuals = y - design * fit.coefficients;
    fit.dof = static_cast<std::size_t>(n - p - 1);
    fit.residual_variance = fit.residuals.squaredNorm() / static_cast<double>(fit.dof);

    // (X'X)^{-1} = P R^{-1} R^{-T} P' from the pivoted QR factor.
    const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(p + 1, p + 1).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd r_inv =
        r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p + 1, p + 1));
    const Eigen::MatrixXd permuted = r_inv * r_inv.transpose();
    const Eigen::MatrixXd xtx_inv = qr.colsPermutation() * permuted * qr.colsPermutation().transpose();
    fit.std_errors = (fit.residual_variance * xtx_inv.diagonal()).cwiseSqrt();
    return fit;
}

}  // namespace causalkit::stats
