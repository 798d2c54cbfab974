/// @file envelopes.cpp
/// @brief Comparison-band and admissibility-constant quadrature.

#include "qsphere/envelopes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>

#include "qsphere/errors.hpp"

namespace qsphere {

namespace {

constexpr double kBaseStep = 4e-3;     // base mesh width in s = ln(t)
constexpr double kExpGuard = 600.0;    // overflow guard on damping integrals

/// Decorated scalar data of the comparison ODEs at one time.
struct EnvRates {
    double src_lo = 0.0, src_up = 0.0;    // source, inf/sup decorated
    double damp_lo = 0.0, damp_up = 0.0;  // total damping, sup/inf decorated
    double k_src = 0.0;                   // admissibility integrand (inf)
    double k_damp = 0.0;                  // admissibility exponent rate (sup)
};

using RateFn = std::function<EnvRates(double)>;

// ----------------------------------------------------------------------------
// Rate providers
// ----------------------------------------------------------------------------

// Decorated extrema of (R_scalar/2 - (fac^2/2) Rbar) over the sphere when R
// varies only with latitude.  Rbar spatial uniformity enables the O(nlat)
// shortcut; otherwise the full grid is scanned.
Extrema bracket_extrema_axi(const std::vector<double>& R, const PrescribedCurvature& rbar,
                            const GridPtr& grid, double t_eval, double fac) {
    const double half_fac2 = 0.5 * fac * fac;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    if (rbar.spatially_uniform()) {
        const Extrema rb = rbar.extrema(grid, t_eval);
        for (double r : R) {
            lo = std::min(lo, 0.5 * r - half_fac2 * rb.max);
            hi = std::max(hi, 0.5 * r - half_fac2 * rb.min);
        }
    } else {
        const Field rb = rbar.eval(grid, t_eval);
        const int nlat = grid->nlat(), nlon = grid->nlon();
        for (int i = 0; i < nlat; ++i) {
            for (int j = 0; j < nlon; ++j) {
                const double v = 0.5 * R[i] - half_fac2 * rb.at(i, j);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
    }
    return Extrema{lo, hi};
}

RateFn conformal_rates(const ConformalFoliation& fol, const PrescribedCurvature& rbar,
                       bool horizon) {
    const GridPtr grid = fol.grid();
    const bool scalar_path = fol.is_round() && rbar.spatially_uniform();
    return [=, &fol, &rbar](double tau) -> EnvRates {
        const double t_eval = horizon ? tau + 1.0 : tau;
        EnvRates out;
        if (scalar_path) {
            // P = 1/tau exactly; damping 2 dln(P)/dtau + 3 P2 = 1/tau for both
            // the interior and the shifted factors.
            const Extrema rb = rbar.extrema(grid, t_eval);
            const double pre = 0.5 / (tau * tau) * tau;  // (1 / 2 tau^2) / P
            out.src_lo = pre * (2.0 - t_eval * t_eval * rb.max);
            out.src_up = pre * (2.0 - t_eval * t_eval * rb.min);
            out.damp_lo = out.damp_up = 1.0 / tau;
            out.k_src = out.src_lo;
            out.k_damp = out.damp_lo;
            return out;
        }

        const FoliationSample fs = fol.sample(t_eval);  // checks 1 + t f_t > 0
        const Field rf = conformal_scalar_curvature(fs.f);
        const bool uniform = rbar.spatially_uniform();
        const Extrema rb_ext = uniform ? rbar.extrema(grid, t_eval) : Extrema{0.0, 0.0};
        const Field rb = uniform ? Field(grid) : rbar.eval(grid, t_eval);

        const double inv_tau = 1.0 / tau, inv_tau2 = inv_tau * inv_tau;
        const double shift = horizon ? t_eval * inv_tau : 1.0;  // (tau+1)/tau or 1
        double q_lo = std::numeric_limits<double>::infinity(), q_hi = -q_lo;
        double c_lo = -q_lo, c_up = q_lo;
        const int n = grid->size();
        for (int idx = 0; idx < n; ++idx) {
            const double ft = fs.f_t[idx], ftt = fs.f_tt[idx];
            // Parabolic factor of the evolved variable and its time slope.
            const double P = inv_tau + shift * ft;
            const double dP = horizon
                                  ? -inv_tau2 - ft * inv_tau2 + shift * ftt
                                  : -inv_tau2 + ftt;
            // Damping uses the undecorated 1/tau + f_t factor in the shifted
            // case (the extra (tau+1)/tau of P cancels against the scaling).
            const double P2 = horizon ? inv_tau + ft : P;
            if (!(P > 0.0)) {
                throw HypothesisError(
                    "comparison band: shifted parabolic factor lost positivity");
            }
            const double rbv = uniform ? 0.0 : rb[idx];
            const double num_lo = rf[idx] - t_eval * t_eval * (uniform ? rb_ext.max : rbv);
            const double num_hi = rf[idx] - t_eval * t_eval * (uniform ? rb_ext.min : rbv);
            q_lo = std::min(q_lo, num_lo / P);
            q_hi = std::max(q_hi, num_hi / P);
            const double c = 2.0 * dP / P + 3.0 * P2;
            c_lo = std::max(c_lo, c);
            c_up = std::min(c_up, c);
        }
        out.src_lo = 0.5 * inv_tau2 * q_lo;
        out.src_up = 0.5 * inv_tau2 * q_hi;
        out.damp_lo = c_lo;
        out.damp_up = c_up;
        out.k_src = out.src_lo;
        out.k_damp = out.damp_lo;
        return out;
    };
}

RateFn ricci_rates(const RicciFlowTrajectory& traj, const PrescribedCurvature& rbar,
                   bool horizon) {
    const GridPtr grid = traj.grid();
    return [=, &traj, &rbar](double tau) -> EnvRates {
        const double t_eval = horizon ? tau + 1.0 : tau;
        const BackgroundSlice sl = traj.slice(t_eval);
        const Extrema br = bracket_extrema_axi(sl.R, rbar, grid, t_eval, t_eval);
        double msq_lo = std::numeric_limits<double>::infinity(), msq_hi = -msq_lo;
        for (double m : sl.msq) {
            msq_lo = std::min(msq_lo, m);
            msq_hi = std::max(msq_hi, m);
        }
        msq_lo = std::max(msq_lo, 0.0);  // |M|^2 >= 0 up to roundoff

        EnvRates out;
        const double inv_tau = 1.0 / tau;
        out.src_lo = inv_tau * br.min;
        out.src_up = inv_tau * br.max;
        out.damp_lo = inv_tau + 0.5 * t_eval * msq_hi;
        out.damp_up = inv_tau + 0.5 * t_eval * msq_lo;
        out.k_src = br.min;
        out.k_damp = 0.5 * t_eval * msq_hi;
        return out;
    };
}

// ----------------------------------------------------------------------------
// Quadrature core
// ----------------------------------------------------------------------------

struct SweepResult {
    std::vector<double> lower, upper, exp_lo, exp_up, k_trace;
};

// Cumulative trapezoid integration of the comparison ODEs along the node set
// rates[first], rates[first + stride], ...; all integrals run in s = ln(tau)
// with the Jacobian tau absorbed into the integrands.
SweepResult sweep(const std::vector<double>& s_nodes, const std::vector<EnvRates>& rates,
                  std::size_t stride, bool want_k) {
    const std::size_t m = (s_nodes.size() - 1) / stride + 1;
    SweepResult r;
    r.exp_lo.assign(m, 0.0);
    r.exp_up.assign(m, 0.0);
    r.lower.assign(m, 0.0);
    r.upper.assign(m, 0.0);
    if (want_k) r.k_trace.assign(m, 0.0);

    double acc_lo = 0.0, acc_up = 0.0, acc_k = 0.0, exp_k_prev = 0.0;
    for (std::size_t k = 1; k < m; ++k) {
        const std::size_t i0 = (k - 1) * stride, i1 = k * stride;
        const double tau0 = std::exp(s_nodes[i0]), tau1 = std::exp(s_nodes[i1]);
        const double ds = s_nodes[i1] - s_nodes[i0];
        const EnvRates& a = rates[i0];
        const EnvRates& b = rates[i1];

        r.exp_lo[k] = r.exp_lo[k - 1] + 0.5 * ds * (a.damp_lo * tau0 + b.damp_lo * tau1);
        r.exp_up[k] = r.exp_up[k - 1] + 0.5 * ds * (a.damp_up * tau0 + b.damp_up * tau1);
        if (std::max(std::abs(r.exp_lo[k]), std::abs(r.exp_up[k])) > kExpGuard) {
            throw NumericsError("comparison band: damping integral exceeds overflow guard");
        }

        acc_lo += 0.5 * ds *
                  (a.src_lo * std::exp(r.exp_lo[k - 1]) * tau0 +
                   b.src_lo * std::exp(r.exp_lo[k]) * tau1);
        acc_up += 0.5 * ds *
                  (a.src_up * std::exp(r.exp_up[k - 1]) * tau0 +
                   b.src_up * std::exp(r.exp_up[k]) * tau1);
        r.lower[k] = std::exp(-r.exp_lo[k]) * acc_lo;
        r.upper[k] = std::exp(-r.exp_up[k]) * acc_up;

        if (want_k) {
            double exp_k = exp_k_prev + 0.5 * ds * (a.k_damp * tau0 + b.k_damp * tau1);
            if (exp_k > kExpGuard) {
                throw NumericsError(
                    "admissibility trace: damping integral exceeds overflow guard");
            }
            acc_k += 0.5 * ds *
                     (a.k_src * std::exp(exp_k_prev) * tau0 + b.k_src * std::exp(exp_k) * tau1);
            r.k_trace[k] = -acc_k;
            exp_k_prev = exp_k;
        }
    }
    return r;
}

struct IntegratedBands {
    std::vector<double> s_coarse;           // coarse node set (contains requests)
    std::vector<std::size_t> request_index; // coarse index of each requested time
    SweepResult values;                     // Richardson-combined at coarse nodes
    double richardson_residual = 0.0;
};

IntegratedBands integrate_bands(const RateFn& rates_at, double base,
                                const std::vector<double>& t_grid, bool want_k) {
    if (t_grid.empty()) throw ConfigError("comparison band: empty time grid");
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
        if (!(t_grid[i] >= base * (1.0 - 1e-12))) {
            throw ConfigError("comparison band: requested time below integration base");
        }
        if (i > 0 && !(t_grid[i] > t_grid[i - 1])) {
            throw ConfigError("comparison band: time grid must be strictly increasing");
        }
    }

    // Coarse mesh in s = ln(tau): requested times plus uniform fill.
    const double s_base = std::log(base);
    std::vector<double> anchors{s_base};
    for (double t : t_grid) {
        const double s = std::log(std::max(t, base));
        if (s > anchors.back() + 1e-13) anchors.push_back(s);
    }
    std::vector<double> s_coarse;
    std::vector<std::size_t> req_idx(t_grid.size());
    {
        s_coarse.push_back(anchors.front());
        for (std::size_t a = 1; a < anchors.size(); ++a) {
            const double gap = anchors[a] - anchors[a - 1];
            const int pieces = std::max(1, int(std::ceil(gap / kBaseStep)));
            for (int p = 1; p <= pieces; ++p) {
                s_coarse.push_back(anchors[a - 1] + gap * p / pieces);
            }
        }
        // Map each request onto its coarse node (base may coincide with t_grid[0]).
        std::size_t cursor = 0;
        for (std::size_t i = 0; i < t_grid.size(); ++i) {
            const double s = std::log(std::max(t_grid[i], base));
            while (cursor + 1 < s_coarse.size() &&
                   std::abs(s_coarse[cursor] - s) > 1e-12 * (1.0 + std::abs(s))) {
                ++cursor;
            }
            req_idx[i] = cursor;
        }
    }

    // Fine mesh: midpoint refinement, so coarse nodes sit at even indices.
    std::vector<double> s_fine;
    s_fine.reserve(2 * s_coarse.size());
    for (std::size_t k = 0; k + 1 < s_coarse.size(); ++k) {
        s_fine.push_back(s_coarse[k]);
        s_fine.push_back(0.5 * (s_coarse[k] + s_coarse[k + 1]));
    }
    s_fine.push_back(s_coarse.back());

    std::vector<EnvRates> rates(s_fine.size());
    for (std::size_t i = 0; i < s_fine.size(); ++i) rates[i] = rates_at(std::exp(s_fine[i]));

    const SweepResult fine = sweep(s_fine, rates, 1, want_k);
    const SweepResult coarse = sweep(s_fine, rates, 2, want_k);

    IntegratedBands out;
    out.s_coarse = std::move(s_coarse);
    const std::size_t m = out.s_coarse.size();
    out.values.lower.resize(m);
    out.values.upper.resize(m);
    out.values.exp_lo.resize(m);
    out.values.exp_up.resize(m);
    if (want_k) out.values.k_trace.resize(m);
    double resid = 0.0;
    auto combine = [&](const std::vector<double>& f2, const std::vector<double>& f1,
                       std::vector<double>& dst) {
        for (std::size_t k = 0; k < m; ++k) {
            dst[k] = (4.0 * f2[2 * k] - f1[k]) / 3.0;
            resid = std::max(resid, std::abs(f2[2 * k] - f1[k]));
        }
    };
    combine(fine.lower, coarse.lower, out.values.lower);
    combine(fine.upper, coarse.upper, out.values.upper);
    combine(fine.exp_lo, coarse.exp_lo, out.values.exp_lo);
    combine(fine.exp_up, coarse.exp_up, out.values.exp_up);
    if (want_k) combine(fine.k_trace, coarse.k_trace, out.values.k_trace);
    out.request_index = std::move(req_idx);
    out.richardson_residual = resid;
    return out;
}

EnvelopePair make_pair_result(EnvelopeBranch branch, bool horizon, double base,
                              const RateFn& rates, const std::vector<double>& t_grid) {
    const IntegratedBands bands = integrate_bands(rates, base, t_grid, /*want_k=*/false);
    EnvelopePair env;
    env.branch = branch;
    env.horizon = horizon;
    env.base = base;
    env.t = t_grid;
    env.richardson_residual = bands.richardson_residual;
    const std::size_t n = t_grid.size();
    env.lower.resize(n);
    env.upper.resize(n);
    env.exp_lower.resize(n);
    env.exp_upper.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = bands.request_index[i];
        env.lower[i] = bands.values.lower[k];
        env.upper[i] = bands.values.upper[k];
        env.exp_lower[i] = bands.values.exp_lo[k];
        env.exp_upper[i] = bands.values.exp_up[k];
    }
    return env;
}

AdmissibilityConstant make_k_result(const RateFn& rates, double t_max) {
    if (!(t_max > 1.0)) throw ConfigError("admissibility constant: t_max must exceed 1");
    const std::vector<double> t_grid{1.0, t_max};
    const IntegratedBands bands = integrate_bands(rates, 1.0, t_grid, /*want_k=*/true);

    AdmissibilityConstant out;
    const std::size_t m = bands.s_coarse.size();
    out.t.resize(m);
    out.S = bands.values.k_trace;
    std::size_t arg = 0;
    for (std::size_t k = 0; k < m; ++k) {
        out.t[k] = std::exp(bands.s_coarse[k]);
        if (out.S[k] > out.S[arg]) arg = k;
    }
    double s_peak = bands.s_coarse[arg];
    double peak = out.S[arg];
    if (arg > 0 && arg + 1 < m) {
        // Quadratic refinement of the discrete argmax (the trace is smooth,
        // so the node-granularity error of the peak is O(mesh^2) otherwise).
        const double x0 = bands.s_coarse[arg - 1], x1 = bands.s_coarse[arg],
                     x2 = bands.s_coarse[arg + 1];
        const double y0 = out.S[arg - 1], y1 = out.S[arg], y2 = out.S[arg + 1];
        const double d1 = (y1 - y0) / (x1 - x0), d2 = (y2 - y1) / (x2 - x1);
        const double a2 = (d2 - d1) / (x2 - x0);
        if (a2 < 0.0) {
            double xs = 0.5 * (x0 + x1) - d1 / (2.0 * a2);
            xs = std::min(std::max(xs, x0), x2);
            const double ys = y0 + d1 * (xs - x0) + a2 * (xs - x0) * (xs - x1);
            if (ys > peak) {
                peak = ys;
                s_peak = xs;
            }
        }
    }
    out.K = std::max(0.0, peak);
    out.t_dagger = std::exp(s_peak);
    out.no_constraint = (out.K == 0.0);
    out.unsaturated = (arg == m - 1) && m >= 2 && out.S[m - 1] > out.S[m - 2];
    return out;
}

}  // namespace

// ----------------------------------------------------------------------------
// Public entry points
// ----------------------------------------------------------------------------

EnvelopePair envelopes_conformal(const ConformalFoliation& foliation,
                                 const PrescribedCurvature& rbar,
                                 const std::vector<double>& t_grid) {
    return make_pair_result(EnvelopeBranch::conformal, false, 1.0,
                            conformal_rates(foliation, rbar, false), t_grid);
}

EnvelopePair envelopes_ricci(const RicciFlowTrajectory& trajectory,
                             const PrescribedCurvature& rbar,
                             const std::vector<double>& t_grid) {
    return make_pair_result(EnvelopeBranch::ricci, false, 1.0,
                            ricci_rates(trajectory, rbar, false), t_grid);
}

EnvelopePair envelopes_conformal_horizon(const ConformalFoliation& foliation,
                                         const PrescribedCurvature& rbar,
                                         const std::vector<double>& tau_grid,
                                         double tau_base) {
    if (!(tau_base > 0.0)) throw ConfigError("horizon band: base must be positive");
    return make_pair_result(EnvelopeBranch::conformal, true, tau_base,
                            conformal_rates(foliation, rbar, true), tau_grid);
}

EnvelopePair envelopes_ricci_horizon(const RicciFlowTrajectory& trajectory,
                                     const PrescribedCurvature& rbar,
                                     const std::vector<double>& tau_grid, double tau_base) {
    if (!(tau_base > 0.0)) throw ConfigError("horizon band: base must be positive");
    return make_pair_result(EnvelopeBranch::ricci, true, tau_base,
                            ricci_rates(trajectory, rbar, true), tau_grid);
}

AdmissibilityConstant constant_K_conformal(const ConformalFoliation& foliation,
                                           const PrescribedCurvature& rbar, double t_max) {
    return make_k_result(conformal_rates(foliation, rbar, false), t_max);
}

AdmissibilityConstant constant_K_ricci(const RicciFlowTrajectory& trajectory,
                                       const PrescribedCurvature& rbar, double t_max) {
    return make_k_result(ricci_rates(trajectory, rbar, false), t_max);
}

EnvelopeCheck envelope_check(const EnvelopePair& env, const std::vector<double>& times,
                             const std::vector<double>& w_min,
                             const std::vector<double>& w_max) {
    if (times.size() != w_min.size() || times.size() != w_max.size()) {
        throw ConfigError("envelope check: array sizes differ");
    }
    if (times.empty()) throw ConfigError("envelope check: no snapshots");
    if (env.t.empty()) throw ConfigError("envelope check: empty band");

    // Exact-grid fast path, monotone interpolation otherwise.
    auto matches = [&]() {
        if (env.t.size() != times.size()) return false;
        for (std::size_t i = 0; i < times.size(); ++i) {
            if (std::abs(env.t[i] - times[i]) > 1e-12 * (1.0 + std::abs(times[i]))) return false;
        }
        return true;
    }();

    std::vector<double> lo(times.size()), up(times.size()), elo(times.size()),
        eup(times.size());
    if (matches) {
        lo = env.lower;
        up = env.upper;
        elo = env.exp_lower;
        eup = env.exp_upper;
    } else {
        const Pchip p_lo(env.t, env.lower), p_up(env.t, env.upper);
        const Pchip p_el(env.t, env.exp_lower), p_eu(env.t, env.exp_upper);
        for (std::size_t i = 0; i < times.size(); ++i) {
            const double t = times[i];
            if (t < env.t.front() - 1e-12 || t > env.t.back() * (1.0 + 1e-12)) {
                throw ConfigError("envelope check: snapshot outside band range");
            }
            lo[i] = p_lo.value(t);
            up[i] = p_up.value(t);
            elo[i] = p_el.value(t);
            eup[i] = p_eu.value(t);
        }
    }

    EnvelopeCheck chk;
    chk.n_checked = times.size();
    chk.t_worst_lower = times.front();
    chk.t_worst_upper = times.front();
    const double dev_lo0 = w_min.front() - lo.front();
    const double dev_up0 = w_max.front() - up.front();
    for (std::size_t i = 0; i < times.size(); ++i) {
        const double bound_lo = lo[i] + dev_lo0 * std::exp(-(elo[i] - elo.front()));
        const double bound_up = up[i] + dev_up0 * std::exp(-(eup[i] - eup.front()));
        const double viol_lo = bound_lo - w_min[i];
        const double viol_up = w_max[i] - bound_up;
        if (viol_lo > chk.worst_lower) {
            chk.worst_lower = viol_lo;
            chk.t_worst_lower = times[i];
        }
        if (viol_up > chk.worst_upper) {
            chk.worst_upper = viol_up;
            chk.t_worst_upper = times[i];
        }
    }
    return chk;
}

}  // namespace qsphere
