/// @file ricci_flow.cpp
/// @brief Modified 2-D Ricci flow on axisymmetric metrics: curvature,
///        potential solve, trace-free tensor, RK4 stepping, trajectories.

#include "qsphere/ricci_flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "legendre.hpp"
#include "qsphere/errors.hpp"
#include "qsphere/qsf_io.hpp"

namespace qsphere {

namespace {

constexpr double kTwoPi = 6.2831853071795864769;
constexpr double kFourPi = 12.566370614359172954;
constexpr double kRk4RealAxis = 2.785;  // RK4 stability interval on the real axis

// ----------------------------------------------------------------------------
// Global Legendre series on the Gauss nodes.
//
// Nodal profiles are projected onto plain Legendre polynomials P_l; the
// quadrature is exact for integrands of degree <= 2 nlat - 1, so projections
// of band-limited data are exact and everything else is spectrally accurate
// for smooth profiles.  Derivatives and antiderivatives act on coefficients:
//
//   d/dx:    P_l' = sum over k < l, l - k odd of (2k+1) P_k
//   int dx:  int_{-1}^{x} P_l = (P_{l+1} - P_{l-1}) / (2l+1),  int P_0 = x + 1,
//
// both of which keep pole behaviour regular (no division by sin theta).
// ----------------------------------------------------------------------------
struct Series {
    int n;                  // number of nodes = polynomial count
    const SphereGrid* g;
    std::vector<double> P;  // (n+1) rows: P[l*n + i] = P_l(x_i), l = 0..n

    explicit Series(const SphereGrid& grid) : n(grid.nlat()), g(&grid) {
        P.resize(std::size_t(n + 1) * n);
        for (int i = 0; i < n; ++i) {
            const std::vector<double> col = detail::legendre_plain(n, grid.x(i));
            for (int l = 0; l <= n; ++l) P[std::size_t(l) * n + i] = col[l];
        }
    }

    std::vector<double> project(const std::vector<double>& v) const {
        std::vector<double> c(n, 0.0);
        for (int l = 0; l < n; ++l) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += g->weight(i) * v[i] * P[std::size_t(l) * n + i];
            c[l] = (2.0 * l + 1.0) * 0.5 * s;
        }
        return c;
    }

    std::vector<double> eval(const std::vector<double>& c) const {
        std::vector<double> v(n, 0.0);
        for (int l = 0; l < int(c.size()); ++l) {
            for (int i = 0; i < n; ++i) v[i] += c[l] * P[std::size_t(l) * n + i];
        }
        return v;
    }

    double eval_at(const std::vector<double>& c, double x) const {
        const std::vector<double> p = detail::legendre_plain(int(c.size()) - 1, x);
        double s = 0.0;
        for (std::size_t l = 0; l < c.size(); ++l) s += c[l] * p[l];
        return s;
    }

    std::vector<double> derivative_coeffs(const std::vector<double>& c) const {
        const int m = int(c.size());
        std::vector<double> d(m, 0.0);
        double tail[2] = {0.0, 0.0};  // suffix sums of c_j by parity of j
        for (int k = m - 1; k >= 0; --k) {
            d[k] = (2.0 * k + 1.0) * tail[(k + 1) & 1];
            tail[k & 1] += c[k];
        }
        return d;
    }

    std::vector<double> derivative_values(const std::vector<double>& v) const {
        return eval(derivative_coeffs(project(v)));
    }

    std::vector<double> antiderivative_values(const std::vector<double>& c) const {
        std::vector<double> v(n, 0.0);
        for (int i = 0; i < n; ++i) {
            double s = (c.empty() ? 0.0 : c[0]) * (g->x(i) + 1.0);
            for (int l = 1; l < int(c.size()); ++l) {
                s += c[l] *
                     (P[std::size_t(l + 1) * n + i] - P[std::size_t(l - 1) * n + i]) /
                     (2.0 * l + 1.0);
            }
            v[i] = s;
        }
        return v;
    }
};

// Weighted mean against dmu = sqrt(ab) dx (the 2 pi longitude factor cancels).
double metric_mean(const SphereGrid& g, const std::vector<double>& a,
                   const std::vector<double>& b, const std::vector<double>& v) {
    double num = 0.0, den = 0.0;
    for (int i = 0; i < g.nlat(); ++i) {
        const double m = g.weight(i) * std::sqrt(a[i] * b[i]);
        num += m * v[i];
        den += m;
    }
    return num / den;
}

struct CurvatureData {
    std::vector<double> R;
    double r = 0.0;
    double area = 0.0;
};

CurvatureData curvature_data(const Series& S, const AxiMetric& m) {
    const SphereGrid& g = *m.grid;
    const int n = g.nlat();
    const std::vector<double> b_x = S.derivative_values(m.b);

    std::vector<double> shear(n);  // (2 x b - (1 - x^2) b_x) / sqrt(ab)
    for (int i = 0; i < n; ++i) {
        const double sin2 = g.sin_theta(i) * g.sin_theta(i);
        shear[i] = (2.0 * g.x(i) * m.b[i] - sin2 * b_x[i]) / std::sqrt(m.a[i] * m.b[i]);
    }
    const std::vector<double> shear_x = S.derivative_values(shear);

    CurvatureData out;
    out.R.resize(n);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < n; ++i) {
        const double root = std::sqrt(m.a[i] * m.b[i]);
        out.R[i] = shear_x[i] / root;
        if (!std::isfinite(out.R[i])) {
            throw NumericsError("surface curvature is not finite (pole irregularity?)");
        }
        num += g.weight(i) * root * out.R[i];
        den += g.weight(i) * root;
    }
    out.r = num / den;
    out.area = kTwoPi * den;
    return out;
}

RicciPotential potential_from_curvature(const Series& S, const AxiMetric& m,
                                        const CurvatureData& cd) {
    const SphereGrid& g = *m.grid;
    const int n = g.nlat();

    // lap_g F = R - r  <=>  d/dx [ sqrt(b/a) (1 - x^2) F_x ] = sqrt(ab) (R - r).
    std::vector<double> rho(n);
    for (int i = 0; i < n; ++i) {
        rho[i] = std::sqrt(m.a[i] * m.b[i]) * (cd.R[i] - cd.r);
    }
    const std::vector<double> G = S.antiderivative_values(S.project(rho));

    RicciPotential pot;
    pot.F_x.resize(n);
    for (int i = 0; i < n; ++i) {
        const double sin2 = g.sin_theta(i) * g.sin_theta(i);
        pot.F_x[i] = G[i] * std::sqrt(m.a[i] / m.b[i]) / sin2;
    }

    pot.F = S.antiderivative_values(S.project(pot.F_x));
    const double mean = metric_mean(g, m.a, m.b, pot.F);
    for (double& v : pot.F) v -= mean;

    // Residual of the elliptic solve, measured with the same series machinery.
    std::vector<double> flux(n);
    for (int i = 0; i < n; ++i) {
        const double sin2 = g.sin_theta(i) * g.sin_theta(i);
        flux[i] = std::sqrt(m.b[i] / m.a[i]) * sin2 * pot.F_x[i];
    }
    const std::vector<double> flux_x = S.derivative_values(flux);
    double res = 0.0;
    for (int i = 0; i < n; ++i) {
        const double lap = flux_x[i] / std::sqrt(m.a[i] * m.b[i]);
        res = std::max(res, std::abs(lap - (cd.R[i] - cd.r)));
    }
    pot.residual = res;
    return pot;
}

TraceFreePart tensor_from_potential(const Series& S, const AxiMetric& m,
                                    const CurvatureData& cd, const RicciPotential& pot) {
    const SphereGrid& g = *m.grid;
    const int n = g.nlat();
    const std::vector<double> a_x = S.derivative_values(m.a);
    const std::vector<double> b_x = S.derivative_values(m.b);
    const std::vector<double> F_xx = S.derivative_values(pot.F_x);

    TraceFreePart out;
    out.m_a.resize(n);
    out.m_b.resize(n);
    out.msq.resize(n);
    for (int i = 0; i < n; ++i) {
        const double x = g.x(i);
        const double sin2 = g.sin_theta(i) * g.sin_theta(i);
        const double half = 0.5 * (cd.r - cd.R[i]);
        // Hess F in mixed components (axisymmetry kills the off-diagonal term).
        const double hess_tt =
            -x * pot.F_x[i] + sin2 * F_xx[i] - sin2 * a_x[i] * pot.F_x[i] / (2.0 * m.a[i]);
        const double ma = half + hess_tt / m.a[i];
        const double mb = half - (2.0 * x * m.b[i] - sin2 * b_x[i]) * pot.F_x[i] /
                                     (2.0 * m.a[i] * m.b[i]);
        out.m_a[i] = ma;
        out.m_b[i] = mb;
        out.msq[i] = ma * ma + mb * mb;
        out.max_trace = std::max(out.max_trace, std::abs(ma + mb));
    }
    return out;
}

double pole_defect_impl(const Series& S, const AxiMetric& m) {
    const std::vector<double> ca = S.project(m.a);
    const std::vector<double> cb = S.project(m.b);
    const double north = std::abs(S.eval_at(ca, 1.0) - S.eval_at(cb, 1.0));
    const double south = std::abs(S.eval_at(ca, -1.0) - S.eval_at(cb, -1.0));
    return std::max(north, south);
}

void check_positive(const AxiMetric& m, const char* where) {
    for (std::size_t i = 0; i < m.a.size(); ++i) {
        if (!(std::isfinite(m.a[i]) && std::isfinite(m.b[i]) && m.a[i] > 0.0 && m.b[i] > 0.0)) {
            char buf[128];
            std::snprintf(buf, sizeof buf,
                          "%s: metric positivity lost at node %zu (a = %.6g, b = %.6g)",
                          where, i, m.a[i], m.b[i]);
            throw NumericsError(buf);
        }
    }
}

}  // namespace

// ============================================================================
// Metric construction and validation
// ============================================================================

void validate_metric(const AxiMetric& m) {
    if (!m.grid) throw ConfigError("axisymmetric metric: null grid");
    const std::size_t n = std::size_t(m.grid->nlat());
    if (m.a.size() != n || m.b.size() != n) {
        throw ConfigError("axisymmetric metric: profile size does not match grid nlat");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!(std::isfinite(m.a[i]) && std::isfinite(m.b[i]) && m.a[i] > 0.0 && m.b[i] > 0.0)) {
            throw ConfigError("axisymmetric metric: profiles must be positive and finite");
        }
    }
}

AxiMetric make_round(GridPtr grid) {
    if (!grid) throw ConfigError("make_round: null grid");
    const std::size_t n = std::size_t(grid->nlat());
    return AxiMetric{std::move(grid), std::vector<double>(n, 1.0), std::vector<double>(n, 1.0)};
}

AxiMetric make_ellipsoid(GridPtr grid, double axis_ratio) {
    if (!grid) throw ConfigError("make_ellipsoid: null grid");
    if (!(axis_ratio > 0.0)) throw ConfigError("make_ellipsoid: axis ratio must be positive");
    const int n = grid->nlat();
    AxiMetric m{std::move(grid), std::vector<double>(n), std::vector<double>(n, 1.0)};
    // Surface of revolution (sin th cos ph, sin th sin ph, rho cos th):
    // induced metric a = cos^2 th + rho^2 sin^2 th, b = 1; a = b at the poles.
    for (int i = 0; i < n; ++i) {
        const double c2 = m.grid->x(i) * m.grid->x(i);
        m.a[i] = c2 + axis_ratio * axis_ratio * (1.0 - c2);
    }
    const double lambda = kFourPi / axi_area(m);
    for (int i = 0; i < n; ++i) {
        m.a[i] *= lambda;
        m.b[i] *= lambda;
    }
    return m;
}

// ============================================================================
// Pointwise geometry
// ============================================================================

std::vector<double> surface_scalar_curvature(const AxiMetric& m) {
    validate_metric(m);
    const Series S(*m.grid);
    return curvature_data(S, m).R;
}

double axi_area(const AxiMetric& m) {
    validate_metric(m);
    double s = 0.0;
    for (int i = 0; i < m.grid->nlat(); ++i) {
        s += m.grid->weight(i) * std::sqrt(m.a[i] * m.b[i]);
    }
    return kTwoPi * s;
}

double mean_scalar(const AxiMetric& m) {
    validate_metric(m);
    const Series S(*m.grid);
    return curvature_data(S, m).r;
}

double pole_defect(const AxiMetric& m) {
    validate_metric(m);
    const Series S(*m.grid);
    return pole_defect_impl(S, m);
}

RicciPotential solve_ricci_potential(const AxiMetric& m) {
    validate_metric(m);
    const Series S(*m.grid);
    return potential_from_curvature(S, m, curvature_data(S, m));
}

TraceFreePart trace_free_M(const AxiMetric& m) {
    validate_metric(m);
    const Series S(*m.grid);
    const CurvatureData cd = curvature_data(S, m);
    const RicciPotential pot = potential_from_curvature(S, m, cd);
    return tensor_from_potential(S, m, cd, pot);
}

AxiGeometry axi_geometry(const AxiMetric& m) {
    validate_metric(m);
    const Series S(*m.grid);
    AxiGeometry out;
    CurvatureData cd = curvature_data(S, m);
    out.pot = potential_from_curvature(S, m, cd);
    out.M = tensor_from_potential(S, m, cd, out.pot);
    out.R = std::move(cd.R);
    out.r = cd.r;
    out.area = cd.area;
    return out;
}

// ============================================================================
// Flow stepping
// ============================================================================

namespace {

// dg/dt = 2 M(g) in the (a, b) profiles.
void flow_rhs(const Series& S, const AxiMetric& m, std::vector<double>& da,
              std::vector<double>& db) {
    const CurvatureData cd = curvature_data(S, m);
    const RicciPotential pot = potential_from_curvature(S, m, cd);
    const TraceFreePart M = tensor_from_potential(S, m, cd, pot);
    const int n = m.grid->nlat();
    da.resize(n);
    db.resize(n);
    for (int i = 0; i < n; ++i) {
        da[i] = 2.0 * m.a[i] * M.m_a[i];
        db[i] = 2.0 * m.b[i] * M.m_b[i];
    }
}

AxiMetric advance(const AxiMetric& m, const std::vector<double>& da,
                  const std::vector<double>& db, double h) {
    AxiMetric out = m;
    for (std::size_t i = 0; i < out.a.size(); ++i) {
        out.a[i] += h * da[i];
        out.b[i] += h * db[i];
    }
    check_positive(out, "modified flow step");
    return out;
}

}  // namespace

AxiMetric step_modified_flow(const AxiMetric& m, double dt) {
    validate_metric(m);
    if (!(dt > 0.0) || !std::isfinite(dt)) {
        throw ConfigError("step_modified_flow: dt must be positive and finite");
    }
    const Series S(*m.grid);
    std::vector<double> k1a, k1b, k2a, k2b, k3a, k3b, k4a, k4b;
    flow_rhs(S, m, k1a, k1b);
    const AxiMetric m2 = advance(m, k1a, k1b, 0.5 * dt);
    flow_rhs(S, m2, k2a, k2b);
    const AxiMetric m3 = advance(m, k2a, k2b, 0.5 * dt);
    flow_rhs(S, m3, k3a, k3b);
    const AxiMetric m4 = advance(m, k3a, k3b, dt);
    flow_rhs(S, m4, k4a, k4b);

    AxiMetric out = m;
    for (std::size_t i = 0; i < out.a.size(); ++i) {
        out.a[i] += dt / 6.0 * (k1a[i] + 2.0 * k2a[i] + 2.0 * k3a[i] + k4a[i]);
        out.b[i] += dt / 6.0 * (k1b[i] + 2.0 * k2b[i] + 2.0 * k3b[i] + k4b[i]);
    }
    check_positive(out, "modified flow step");
    return out;
}

// ============================================================================
// Trajectories
// ============================================================================

namespace {

FlowSample record_sample(const Series& S, const AxiMetric& m, double t) {
    FlowSample s;
    s.t = t;
    s.a = m.a;
    s.b = m.b;
    const CurvatureData cd = curvature_data(S, m);
    const RicciPotential pot = potential_from_curvature(S, m, cd);
    const TraceFreePart M = tensor_from_potential(S, m, cd, pot);
    s.R = cd.R;
    s.F = pot.F;
    s.msq = M.msq;
    s.area = cd.area;
    s.mean_R = cd.r;
    s.min_R = *std::min_element(cd.R.begin(), cd.R.end());
    double rdev = 0.0, mnorm = 0.0;
    for (std::size_t i = 0; i < cd.R.size(); ++i) {
        rdev = std::max(rdev, std::abs(cd.R[i] - 2.0));
        mnorm = std::max(mnorm, std::sqrt(M.msq[i]));
    }
    s.norm_R_dev = rdev;
    s.norm_M = mnorm;
    s.pole_defect = pole_defect_impl(S, m);
    return s;
}

double stability_cap(const AxiMetric& m, double safety) {
    const int lmax = m.grid->lmax();
    double inv = 0.0;
    for (std::size_t i = 0; i < m.a.size(); ++i) {
        inv = std::max(inv, std::max(1.0 / m.a[i], 1.0 / m.b[i]));
    }
    return safety * kRk4RealAxis / (double(lmax) * double(lmax + 1) * inv);
}

}  // namespace

RicciFlowTrajectory run_flow(const AxiMetric& initial, double t_max,
                             const FlowControls& controls) {
    validate_metric(initial);
    if (!(t_max > 1.0)) throw ConfigError("run_flow: t_max must exceed the initial time 1");
    if (controls.n_samples < 9) throw ConfigError("run_flow: need at least 9 samples");
    if (!(controls.safety > 0.0 && controls.safety <= 1.0)) {
        throw ConfigError("run_flow: safety must lie in (0, 1]");
    }

    const Series S(*initial.grid);
    RicciFlowTrajectory traj;
    traj.grid_ = initial.grid;
    traj.samples_.reserve(controls.n_samples);

    const int n = controls.n_samples;
    const double s_hi = std::log(t_max);

    AxiMetric state = initial;
    double t = 1.0;
    traj.samples_.push_back(record_sample(S, state, t));

    for (int k = 1; k < n; ++k) {
        const double t_next = (k == n - 1) ? t_max : std::exp(s_hi * k / double(n - 1));
        while (t < t_next * (1.0 - 1e-14)) {
            const double dt = std::min({stability_cap(state, controls.safety),
                                        controls.dt_max, t_next - t});
            state = step_modified_flow(state, dt);
            t += dt;
        }
        t = t_next;
        traj.samples_.push_back(record_sample(S, state, t));
    }

    traj.finalize_fits();
    return traj;
}

void RicciFlowTrajectory::finalize_fits() {
    std::vector<double> t, r_dev, m_norm;
    max_area_drift_ = 0.0;
    for (const FlowSample& s : samples_) {
        t.push_back(s.t);
        r_dev.push_back(s.norm_R_dev);
        m_norm.push_back(s.norm_M);
        max_area_drift_ = std::max(max_area_drift_, std::abs(s.area - kFourPi));
    }
    // Exclude the roundoff plateau from the decay fits: keep only samples
    // well above both the smallest observed value and a fixed relative drop
    // from the initial one, so the fitted rate reflects the genuine decay.
    const double min_R = *std::min_element(r_dev.begin(), r_dev.end());
    const double min_M = *std::min_element(m_norm.begin(), m_norm.end());
    const double floor_R = std::max({1e-12, 1e-5 * r_dev.front(), 10.0 * min_R});
    const double floor_M = std::max({1e-12, 1e-5 * m_norm.front(), 10.0 * min_M});
    const LinearFit fr = semilog_fit(t, r_dev, floor_R);
    const LinearFit fm = semilog_fit(t, m_norm, floor_M);
    lambda_R_ = -fr.slope;
    r2_R_ = fr.r2;
    lambda_M_ = -fm.slope;
    r2_M_ = fm.r2;
}

BackgroundSlice RicciFlowTrajectory::slice(double t) const {
    if (samples_.empty()) throw ConfigError("trajectory slice: empty trajectory");
    const double lo = t_min(), hi = t_max();
    if (t < lo - 1e-9 * std::max(1.0, lo) || t > hi * (1.0 + 1e-12)) {
        char buf[128];
        std::snprintf(buf, sizeof buf,
                      "trajectory slice: t = %.17g outside stored range [%.17g, %.17g]",
                      t, lo, hi);
        throw ConfigError(buf);
    }
    t = std::min(std::max(t, lo), hi);

    // Bracketing index, then an exact hit shortcut so snapshot times used by
    // the lapse solver reproduce the stored profiles bit-for-bit.
    std::size_t j = 0;
    {
        std::size_t left = 0, right = samples_.size() - 1;
        while (right - left > 1) {
            const std::size_t mid = (left + right) / 2;
            if (samples_[mid].t <= t) left = mid; else right = mid;
        }
        j = left;
    }
    for (std::size_t k = j; k <= std::min(j + 1, samples_.size() - 1); ++k) {
        if (std::abs(samples_[k].t - t) <= 1e-13 * std::max(1.0, std::abs(t))) {
            const FlowSample& s = samples_[k];
            return BackgroundSlice{s.t, s.a, s.b, s.R, s.msq};
        }
    }

    // Four-point Lagrange stencil clamped to the sample range.
    const std::size_t count = samples_.size();
    std::size_t first = (j == 0) ? 0 : j - 1;
    if (first + 4 > count) first = count - 4;
    double w[4];
    for (int p = 0; p < 4; ++p) {
        w[p] = 1.0;
        for (int q = 0; q < 4; ++q) {
            if (q == p) continue;
            w[p] *= (t - samples_[first + q].t) /
                    (samples_[first + p].t - samples_[first + q].t);
        }
    }

    const std::size_t nn = samples_.front().a.size();
    BackgroundSlice out;
    out.t = t;
    out.a.assign(nn, 0.0);
    out.b.assign(nn, 0.0);
    out.R.assign(nn, 0.0);
    out.msq.assign(nn, 0.0);
    for (int p = 0; p < 4; ++p) {
        const FlowSample& s = samples_[first + p];
        for (std::size_t i = 0; i < nn; ++i) {
            out.a[i] += w[p] * s.a[i];
            out.b[i] += w[p] * s.b[i];
            out.R[i] += w[p] * s.R[i];
            out.msq[i] += w[p] * s.msq[i];
        }
    }
    return out;
}

// ============================================================================
// Metric Laplacian on fields
// ============================================================================

AxiLaplacianCoeffs axi_laplacian_coeffs(const GridPtr& grid, const std::vector<double>& a,
                                        const std::vector<double>& b) {
    if (!grid) throw ConfigError("axi_laplacian_coeffs: null grid");
    const int n = grid->nlat();
    if (int(a.size()) != n || int(b.size()) != n) {
        throw ConfigError("axi_laplacian_coeffs: profile size mismatch");
    }
    const Series S(*grid);
    std::vector<double> q(n);
    for (int i = 0; i < n; ++i) q[i] = std::sqrt(b[i] / a[i]);
    const std::vector<double> q_x = S.derivative_values(q);

    AxiLaplacianCoeffs c;
    c.c_tt.resize(n);
    c.c_t.resize(n);
    c.c_pp.resize(n);
    for (int i = 0; i < n; ++i) {
        const double st = grid->sin_theta(i);
        c.c_tt[i] = 1.0 / a[i];
        // d/dtheta sqrt(b/a) = -sin(theta) d/dx sqrt(b/a)
        c.c_t[i] = grid->x(i) / (a[i] * st) - st * q_x[i] / std::sqrt(a[i] * b[i]);
        c.c_pp[i] = 1.0 / b[i];
    }
    return c;
}

Field axi_laplacian(const Field& u, const AxiLaplacianCoeffs& coeffs) {
    const GridPtr& grid = u.grid();
    const int nlat = grid->nlat(), nlon = grid->nlon();
    if (int(coeffs.c_tt.size()) != nlat) {
        throw ConfigError("axi_laplacian: coefficient size mismatch");
    }
    const Field lap = laplacian_sigma(u);
    const Gradient gr = gradient_sigma(u);
    const Hessian he = hessian_sigma(u);

    Field out(grid);
    for (int i = 0; i < nlat; ++i) {
        const double cot = grid->x(i) / grid->sin_theta(i);
        for (int j = 0; j < nlon; ++j) {
            const double utt = he.tt.at(i, j);
            const double ut = gr.dtheta.at(i, j);
            // u_{phi phi} / sin^2(theta) from the trace identity: it is the
            // round Laplacian minus the theta-part.
            const double dpp = lap.at(i, j) - utt - cot * ut;
            out.at(i, j) = coeffs.c_tt[i] * utt + coeffs.c_t[i] * ut + coeffs.c_pp[i] * dpp;
        }
    }
    return out;
}

// ============================================================================
// Persistence
// ============================================================================

void save_trajectory(const std::string& dir, const RicciFlowTrajectory& traj, int stride) {
    if (traj.samples().empty()) throw ConfigError("save_trajectory: empty trajectory");
    if (stride < 1) stride = 1;
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);

    nlohmann::json manifest;
    manifest["schema_version"] = 1;
    manifest["kind"] = "ricci-flow-trajectory";
    manifest["nlat"] = traj.grid()->nlat();
    manifest["nlon"] = traj.grid()->nlon();
    manifest["lambda_R"] = traj.lambda_R();
    manifest["lambda_M"] = traj.lambda_M();
    manifest["r2_R"] = traj.r2_R();
    manifest["r2_M"] = traj.r2_M();
    manifest["max_area_drift"] = traj.max_area_drift();

    auto& times = manifest["times"] = nlohmann::json::array();
    auto& diags = manifest["diagnostics"] = nlohmann::json::array();
    for (const FlowSample& s : traj.samples()) {
        times.push_back(s.t);
        diags.push_back({{"t", s.t},
                         {"area", s.area},
                         {"mean_R", s.mean_R},
                         {"norm_R_dev", s.norm_R_dev},
                         {"norm_M", s.norm_M},
                         {"min_R", s.min_R},
                         {"pole_defect", s.pole_defect}});
    }

    auto& exported = manifest["exported"] = nlohmann::json::array();
    const std::size_t count = traj.samples().size();
    for (std::size_t k = 0; k < count; k += stride) {
        const std::size_t idx = (k + std::size_t(stride) >= count) ? count - 1 : k;
        const FlowSample& s = traj.samples()[idx];
        char base[64];
        std::snprintf(base, sizeof base, "sample_%04zu", idx);
        const std::string stem = dir + "/" + base;
        save_profile(stem + "_a.qsp", s.a);
        save_profile(stem + "_b.qsp", s.b);
        save_profile(stem + "_R.qsp", s.R);
        save_profile(stem + "_F.qsp", s.F);
        save_profile(stem + "_msq.qsp", s.msq);
        exported.push_back({{"index", idx}, {"t", s.t}, {"stem", std::string(base)}});
        if (idx == count - 1) break;
    }
    write_text_atomic(dir + "/manifest.json", manifest.dump(2) + "\n");
}

RicciFlowTrajectory load_trajectory(const std::string& dir) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw ConfigError("load_trajectory: cannot open " + dir + "/manifest.json");
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("load_trajectory: manifest parse error: ") + e.what());
    }
    for (const char* key : {"nlat", "nlon", "exported", "diagnostics"}) {
        if (!manifest.contains(key)) {
            throw ConfigError(std::string("load_trajectory: manifest missing ") + key);
        }
    }

    RicciFlowTrajectory traj;
    traj.grid_ = build_grid(manifest["nlat"].get<int>(), manifest["nlon"].get<int>());
    const auto& diags = manifest["diagnostics"];
    for (const auto& item : manifest["exported"]) {
        const std::size_t idx = item["index"].get<std::size_t>();
        const std::string stem = dir + "/" + item["stem"].get<std::string>();
        FlowSample s;
        s.t = item["t"].get<double>();
        s.a = load_profile(stem + "_a.qsp");
        s.b = load_profile(stem + "_b.qsp");
        s.R = load_profile(stem + "_R.qsp");
        s.F = load_profile(stem + "_F.qsp");
        s.msq = load_profile(stem + "_msq.qsp");
        if (idx < diags.size()) {
            const auto& d = diags[idx];
            s.area = d["area"].get<double>();
            s.mean_R = d["mean_R"].get<double>();
            s.norm_R_dev = d["norm_R_dev"].get<double>();
            s.norm_M = d["norm_M"].get<double>();
            s.min_R = d["min_R"].get<double>();
            s.pole_defect = d["pole_defect"].get<double>();
        }
        traj.samples_.push_back(std::move(s));
    }
    if (traj.samples_.size() < 4) {
        throw ConfigError("load_trajectory: need at least 4 exported samples");
    }
    traj.lambda_R_ = manifest.value("lambda_R", 0.0);
    traj.lambda_M_ = manifest.value("lambda_M", 0.0);
    traj.r2_R_ = manifest.value("r2_R", 0.0);
    traj.r2_M_ = manifest.value("r2_M", 0.0);
    traj.max_area_drift_ = manifest.value("max_area_drift", 0.0);
    return traj;
}

}  // namespace qsphere
