/// @file numerics.hpp
/// @brief Small numerical utilities: least-squares fits, finite-difference
///        weights on arbitrary nodes, monotone cubic interpolation,
///        cumulative quadrature, Richardson extrapolation, and a
///        reproducible RNG mapping.
///
/// Everything here is deterministic and allocation-light; these helpers back
/// the decay-rate fits, the time-derivative audits, and the eps->0
/// extrapolation of horizon runs.
#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace qsphere {

// ---------------------------------------------------------------------------
// Linear least squares
// ---------------------------------------------------------------------------

/// Result of an ordinary least-squares line fit y = intercept + slope * x.
struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;               ///< coefficient of determination
    double stderr_slope = 0.0;     ///< standard error of the slope
    double stderr_intercept = 0.0; ///< standard error of the intercept
    int n = 0;                     ///< number of points used
};

/// Fit a straight line through (x[i], y[i]).  Requires x.size() == y.size()
/// and at least two distinct abscissae; degenerate input yields n == 0.
LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

/// Log-log power-law fit |y| ~ C * x^slope over the samples with |y| > floor.
/// Returns the fit in log-space (intercept = log C).  Samples at or below
/// `floor` are excluded so roundoff plateaus do not pollute decay rates.
LinearFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y,
                     double floor = 0.0);

/// Semi-log fit log|y| ~ intercept + slope * x (exponential decay rates).
LinearFit semilog_fit(const std::vector<double>& x, const std::vector<double>& y,
                      double floor = 0.0);

// ---------------------------------------------------------------------------
// Finite differences on arbitrary nodes (Fornberg's algorithm)
// ---------------------------------------------------------------------------

/// Weights w such that sum_i w[i] * f(nodes[i]) approximates the
/// `order`-th derivative of f at x0.  Exact for polynomials of degree
/// nodes.size()-1; nodes need not be uniform or sorted.
std::vector<double> fd_weights(double x0, const std::vector<double>& nodes, int order);

// ---------------------------------------------------------------------------
// Interpolation
// ---------------------------------------------------------------------------

/// Monotone-safe piecewise-cubic interpolant (Fritsch–Carlson limited
/// slopes).  Used for tabulated foliations, where overshoot between samples
/// could silently break positivity hypotheses.
class Pchip {
public:
    Pchip() = default;
    /// Build from strictly increasing abscissae (>= 2 points).
    Pchip(std::vector<double> x, std::vector<double> y);

    double value(double x) const;
    double derivative(double x) const;
    /// Second derivative of the local cubic (piecewise linear, may jump at
    /// the knots; evaluated from the right-continuous piece).
    double second_derivative(double x) const;

    bool empty() const { return x_.empty(); }

private:
    int interval(double x) const;
    std::vector<double> x_, y_, d_; // knots, values, limited slopes
};

/// Four-point (cubic) Lagrange interpolation on a sorted abscissa grid.
/// Evaluates y at xq given samples (xs, ys); clamps to the boundary stencil.
double cubic_interp(const std::vector<double>& xs, const std::vector<double>& ys,
                    double xq);

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

/// Cumulative trapezoid integral of y over x: out[0] = 0,
/// out[k] = integral from x[0] to x[k].
std::vector<double> cumulative_trapezoid(const std::vector<double>& x,
                                         const std::vector<double>& y);

// ---------------------------------------------------------------------------
// Richardson extrapolation in a geometric parameter ladder
// ---------------------------------------------------------------------------

/// Extrapolation of samples v(eps_j) with eps_{j+1} = ratio * eps_j to
/// eps -> 0, assuming v = v0 + C eps^p.  The order p is estimated from the
/// last three ladder entries; `converged` is set when successive differences
/// are already below `atol` (order then reported as 0 and the last value
/// returned unchanged).
struct RichardsonResult {
    double value = 0.0;          ///< extrapolated limit
    double observed_order = 0.0; ///< p estimated from the ladder
    double residual = 0.0;       ///< magnitude of the last correction applied
    bool converged = false;      ///< differences below atol before fitting
};

RichardsonResult richardson_extrapolate(const std::vector<double>& values,
                                        double ratio, double atol = 1e-14);

// ---------------------------------------------------------------------------
// Reproducible RNG
// ---------------------------------------------------------------------------

/// Deterministic stream of doubles in [-1, 1], bit-exact across platforms.
/// std::mt19937_64 output is fully specified by the standard; the mapping
/// divides by 2^64 instead of going through std::uniform_real_distribution
/// (whose algorithm is implementation-defined).
class SeededUniform {
public:
    explicit SeededUniform(std::uint64_t seed) : state_(seed) {}
    double next(); ///< uniform in [-1, 1]
private:
    std::mt19937_64 state_;
};

} // namespace qsphere
