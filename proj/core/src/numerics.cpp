/// @file numerics.cpp
/// @brief Implementation of fits, finite-difference weights, interpolation,
///        quadrature, and Richardson extrapolation.

#include "qsphere/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace qsphere {

// ---------------------------------------------------------------------------
// Least squares
// ---------------------------------------------------------------------------

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
    LinearFit fit;
    const std::size_t n = std::min(x.size(), y.size());
    if (n < 2) return fit;

    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < n; ++i) { sx += x[i]; sy += y[i]; }
    const double mx = sx / double(n), my = sy / double(n);

    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx <= 0.0) return fit;

    fit.n = int(n);
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;

    double ss_res = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - (fit.intercept + fit.slope * x[i]);
        ss_res += r * r;
    }
    fit.r2 = (syy > 0.0) ? 1.0 - ss_res / syy : 1.0;

    if (n > 2) {
        const double sigma2 = ss_res / double(n - 2);
        fit.stderr_slope = std::sqrt(sigma2 / sxx);
        fit.stderr_intercept = std::sqrt(sigma2 * (1.0 / double(n) + mx * mx / sxx));
    }
    return fit;
}

namespace {

LinearFit filtered_log_fit(const std::vector<double>& x, const std::vector<double>& y,
                           double floor, bool log_x) {
    std::vector<double> xs, ys;
    const std::size_t n = std::min(x.size(), y.size());
    for (std::size_t i = 0; i < n; ++i) {
        const double ay = std::abs(y[i]);
        if (ay > floor && std::isfinite(ay) && (!log_x || x[i] > 0.0)) {
            xs.push_back(log_x ? std::log(x[i]) : x[i]);
            ys.push_back(std::log(ay));
        }
    }
    return linear_fit(xs, ys);
}

} // namespace

LinearFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y,
                     double floor) {
    return filtered_log_fit(x, y, floor, /*log_x=*/true);
}

LinearFit semilog_fit(const std::vector<double>& x, const std::vector<double>& y,
                      double floor) {
    return filtered_log_fit(x, y, floor, /*log_x=*/false);
}

// ---------------------------------------------------------------------------
// Fornberg finite-difference weights
// ---------------------------------------------------------------------------

std::vector<double> fd_weights(double x0, const std::vector<double>& nodes, int order) {
    // B. Fornberg, "Generation of finite difference formulas on arbitrarily
    // spaced grids", Math. Comp. 51 (1988).  c[k][j] are the weights of the
    // k-th derivative using nodes[0..j]; we keep only the target order.
    const int n = int(nodes.size()) - 1;
    const int m = order;
    if (n < m) throw std::invalid_argument("fd_weights: need more nodes than derivative order");

    std::vector<std::vector<double>> c(m + 1, std::vector<double>(n + 1, 0.0));
    double c1 = 1.0;
    double c4 = nodes[0] - x0;
    c[0][0] = 1.0;
    for (int i = 1; i <= n; ++i) {
        const int mn = std::min(i, m);
        double c2 = 1.0;
        const double c5 = c4;
        c4 = nodes[i] - x0;
        for (int j = 0; j < i; ++j) {
            const double c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if (j == i - 1) {
                for (int k = mn; k >= 1; --k)
                    c[k][i] = c1 * (k * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for (int k = mn; k >= 1; --k)
                c[k][j] = (c4 * c[k][j] - k * c[k - 1][j]) / c3;
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    return c[m];
}

// ---------------------------------------------------------------------------
// Pchip (Fritsch–Carlson monotone cubic)
// ---------------------------------------------------------------------------

Pchip::Pchip(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    if (n < 2 || y_.size() != n)
        throw std::invalid_argument("Pchip: need >= 2 knots and matching values");
    for (std::size_t i = 1; i < n; ++i)
        if (!(x_[i] > x_[i - 1]))
            throw std::invalid_argument("Pchip: abscissae must be strictly increasing");

    std::vector<double> h(n - 1), delta(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        h[i] = x_[i + 1] - x_[i];
        delta[i] = (y_[i + 1] - y_[i]) / h[i];
    }

    d_.assign(n, 0.0);
    if (n == 2) {
        d_[0] = d_[1] = delta[0];
    } else {
        for (std::size_t i = 1; i + 1 < n; ++i) {
            if (delta[i - 1] * delta[i] > 0.0) {
                // Weighted harmonic mean keeps the interpolant monotone.
                const double w1 = 2.0 * h[i] + h[i - 1];
                const double w2 = h[i] + 2.0 * h[i - 1];
                d_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        // One-sided endpoint slopes, clipped per Fritsch–Carlson.
        auto endpoint = [](double h0, double h1, double d0, double d1) {
            double d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
            if (d * d0 <= 0.0) d = 0.0;
            else if (d0 * d1 < 0.0 && std::abs(d) > 3.0 * std::abs(d0)) d = 3.0 * d0;
            return d;
        };
        d_[0] = endpoint(h[0], h[1], delta[0], delta[1]);
        d_[n - 1] = endpoint(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    }
}

int Pchip::interval(double x) const {
    const auto it = std::upper_bound(x_.begin(), x_.end(), x);
    int i = int(it - x_.begin()) - 1;
    i = std::clamp(i, 0, int(x_.size()) - 2);
    return i;
}

double Pchip::value(double x) const {
    const int i = interval(x);
    const double h = x_[i + 1] - x_[i], t = (x - x_[i]) / h;
    const double t2 = t * t, t3 = t2 * t;
    const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t;
    const double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
    return h00 * y_[i] + h10 * h * d_[i] + h01 * y_[i + 1] + h11 * h * d_[i + 1];
}

double Pchip::derivative(double x) const {
    const int i = interval(x);
    const double h = x_[i + 1] - x_[i], t = (x - x_[i]) / h;
    const double dh00 = 6 * t * t - 6 * t, dh10 = 3 * t * t - 4 * t + 1;
    const double dh01 = -6 * t * t + 6 * t, dh11 = 3 * t * t - 2 * t;
    return (dh00 * y_[i] + dh01 * y_[i + 1]) / h + dh10 * d_[i] + dh11 * d_[i + 1];
}

double Pchip::second_derivative(double x) const {
    const int i = interval(x);
    const double h = x_[i + 1] - x_[i], t = (x - x_[i]) / h;
    const double dd00 = 12 * t - 6, dd10 = 6 * t - 4;
    const double dd01 = -12 * t + 6, dd11 = 6 * t - 2;
    return (dd00 * y_[i] + dd01 * y_[i + 1]) / (h * h) + (dd10 * d_[i] + dd11 * d_[i + 1]) / h;
}

// ---------------------------------------------------------------------------
// Cubic Lagrange interpolation
// ---------------------------------------------------------------------------

double cubic_interp(const std::vector<double>& xs, const std::vector<double>& ys,
                    double xq) {
    const int n = int(xs.size());
    if (n == 0) throw std::invalid_argument("cubic_interp: empty grid");
    if (n == 1) return ys[0];

    const auto it = std::upper_bound(xs.begin(), xs.end(), xq);
    int i = int(it - xs.begin()) - 1; // interval [i, i+1]
    i = std::clamp(i, 0, n - 2);
    int lo = std::clamp(i - 1, 0, std::max(0, n - 4));
    const int m = std::min(4, n);

    double acc = 0.0;
    for (int a = 0; a < m; ++a) {
        double w = 1.0;
        for (int b = 0; b < m; ++b)
            if (b != a) w *= (xq - xs[lo + b]) / (xs[lo + a] - xs[lo + b]);
        acc += w * ys[lo + a];
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Cumulative trapezoid
// ---------------------------------------------------------------------------

std::vector<double> cumulative_trapezoid(const std::vector<double>& x,
                                         const std::vector<double>& y) {
    const std::size_t n = std::min(x.size(), y.size());
    std::vector<double> out(n, 0.0);
    for (std::size_t k = 1; k < n; ++k)
        out[k] = out[k - 1] + 0.5 * (x[k] - x[k - 1]) * (y[k] + y[k - 1]);
    return out;
}

// ---------------------------------------------------------------------------
// Richardson extrapolation
// ---------------------------------------------------------------------------

RichardsonResult richardson_extrapolate(const std::vector<double>& values,
                                        double ratio, double atol) {
    RichardsonResult res;
    const std::size_t n = values.size();
    if (n == 0) return res;
    res.value = values.back();
    if (n == 1) return res;

    const double d_last = values[n - 1] - values[n - 2];
    if (std::abs(d_last) <= atol) {
        // Ladder already converged: nothing to extrapolate.
        res.converged = true;
        res.residual = std::abs(d_last);
        return res;
    }

    double p = 1.0; // default first-order if the order cannot be estimated
    if (n >= 3) {
        const double d_prev = values[n - 2] - values[n - 3];
        if (std::abs(d_prev) > atol && d_last * d_prev > 0.0) {
            const double q = d_last / d_prev;
            if (q > 0.0 && q < 1.0) p = std::log(q) / std::log(ratio);
        }
    }
    res.observed_order = p;

    // v(eps) = v0 + C eps^p with eps_{j+1} = ratio*eps_j gives
    // v0 = v_last + (v_last - v_prev) * r^p / (1 - r^p).
    const double rp = std::pow(ratio, p);
    if (rp < 1.0) {
        const double corr = d_last * rp / (1.0 - rp);
        res.value = values.back() + corr;
        res.residual = std::abs(corr);
    } else {
        res.residual = std::abs(d_last);
    }
    return res;
}

// ---------------------------------------------------------------------------
// SeededUniform
// ---------------------------------------------------------------------------

double SeededUniform::next() {
    // Map the full 64-bit state to [-1, 1]; 2^-63 scaling keeps the mapping
    // explicit and identical on every conforming implementation.
    const std::uint64_t u = state_();
    return double(u) * (2.0 / 18446744073709551616.0) - 1.0;
}

} // namespace qsphere
