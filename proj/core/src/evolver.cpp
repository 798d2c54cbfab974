/// @file evolver.cpp
/// @brief Lapse evolution: slot-form right-hand sides, RK4 / IMEX-SBDF2
///        steppers in log time, interior and horizon drivers.

#include "qsphere/evolver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <utility>

#include "qsphere/errors.hpp"

namespace qsphere {

namespace {

constexpr double kRk4RealAxis = 2.785;  // RK4 stability interval on the real axis
constexpr double kImexAutoDs = 0.01;    // accuracy-driven default for imex_sbdf2

// ----------------------------------------------------------------------------
// Coefficient slots
//
// Both branches (and their horizon scalings) share one algebraic shape per
// dependent variable; only the coefficient fields differ.  The slot structs
// carry exactly those coefficients, evaluated at one (possibly shifted) time.
// ----------------------------------------------------------------------------

struct ConformalSlots {
    double tau = 1.0;
    Field P, dPdt, P2, expm2f, RF, RBt2;
};

struct RicciSlots {
    double tau = 1.0;
    AxiLaplacianCoeffs lap;       // c_tt = 1/a, c_t, c_pp = 1/b
    std::vector<double> msq, R;   // effective |M|^2 and R profiles (nlat)
    Field RBt2;                   // fac^2 * Rbar
};

void check_finite(const Field& y, double tau) {
    for (std::size_t k = 0; k < std::size_t(y.size()); ++k) {
        if (!std::isfinite(y[k])) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "lapse evolution: non-finite state at t = %.6g",
                          tau);
            throw NumericsError(buf);
        }
    }
}

void check_positive_state(const Field& y, DependentVariable var, double tau, double floor) {
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < std::size_t(y.size()); ++k) {
        const double margin = (var == DependentVariable::mass_aspect)
                                  ? 1.0 - 2.0 * y[k] / tau
                                  : y[k];
        worst = std::min(worst, margin);
    }
    if (!(worst > floor)) {
        char buf[128];
        std::snprintf(buf, sizeof buf,
                      "lapse evolution: positivity lost at t = %.6g (margin %.3e <= %.3e)",
                      tau, worst, floor);
        throw NumericsError(buf);
    }
}

Field state_from_lapse(const Field& u, DependentVariable var, double tau) {
    Field y = u;
    switch (var) {
        case DependentVariable::lapse:
            break;
        case DependentVariable::inverse_square:
            for (std::size_t k = 0; k < std::size_t(y.size()); ++k) y[k] = 1.0 / (u[k] * u[k]);
            break;
        case DependentVariable::mass_aspect:
            for (std::size_t k = 0; k < std::size_t(y.size()); ++k) {
                y[k] = 0.5 * tau * (1.0 - 1.0 / (u[k] * u[k]));
            }
            break;
    }
    return y;
}

Field lapse_from_state(const Field& y, DependentVariable var, double tau) {
    Field u = y;
    switch (var) {
        case DependentVariable::lapse:
            break;
        case DependentVariable::inverse_square:
            for (std::size_t k = 0; k < std::size_t(u.size()); ++k) u[k] = 1.0 / std::sqrt(y[k]);
            break;
        case DependentVariable::mass_aspect:
            for (std::size_t k = 0; k < std::size_t(u.size()); ++k) {
                u[k] = 1.0 / std::sqrt(1.0 - 2.0 * y[k] / tau);
            }
            break;
    }
    return u;
}

double max_u_squared(const Field& y, DependentVariable var, double tau) {
    double m = 0.0;
    for (std::size_t k = 0; k < std::size_t(y.size()); ++k) {
        double usq = 0.0;
        switch (var) {
            case DependentVariable::lapse: usq = y[k] * y[k]; break;
            case DependentVariable::inverse_square: usq = 1.0 / y[k]; break;
            case DependentVariable::mass_aspect: usq = 1.0 / (1.0 - 2.0 * y[k] / tau); break;
        }
        m = std::max(m, usq);
    }
    return m;
}

// ----------------------------------------------------------------------------
// Right-hand sides in slot form (d/dtau at the slot time)
// ----------------------------------------------------------------------------

Field rhs_slots(const ConformalSlots& s, DependentVariable var, const Field& y) {
    const double tau = s.tau;
    const double inv_t2 = 1.0 / (tau * tau);
    Field out(y.grid());
    const std::size_t n = std::size_t(y.size());

    switch (var) {
        case DependentVariable::lapse: {
            const Field lap = laplacian_sigma(y);
            for (std::size_t k = 0; k < n; ++k) {
                const double u = y[k];
                const double num = 0.5 * inv_t2 * u * u * s.expm2f[k] * lap[k] +
                                   (s.dPdt[k] + 1.5 * s.P[k] * s.P2[k]) * u -
                                   0.25 * inv_t2 * (s.RF[k] - s.RBt2[k]) * u * u * u;
                out[k] = num / s.P[k];
            }
            break;
        }
        case DependentVariable::inverse_square: {
            const Field lap = laplacian_sigma(y);
            const Gradient gr = gradient_sigma(y);
            for (std::size_t k = 0; k < n; ++k) {
                const double w = y[k];
                const double grad2 = gr.dtheta[k] * gr.dtheta[k] + gr.dphi[k] * gr.dphi[k];
                const double damping = 2.0 * s.dPdt[k] + 3.0 * s.P[k] * s.P2[k];
                const double num = 0.5 * inv_t2 / w * s.expm2f[k] * lap[k] -
                                   0.75 * inv_t2 / (w * w) * s.expm2f[k] * grad2 +
                                   0.5 * inv_t2 * (s.RF[k] - s.RBt2[k]) - damping * w;
                out[k] = num / s.P[k];
            }
            break;
        }
        case DependentVariable::mass_aspect: {
            const Field lap = laplacian_sigma(y);
            const Gradient gr = gradient_sigma(y);
            for (std::size_t k = 0; k < n; ++k) {
                const double m = y[k];
                const double usq = 1.0 / (1.0 - 2.0 * m / tau);
                const double grad2 = gr.dtheta[k] * gr.dtheta[k] + gr.dphi[k] * gr.dphi[k];
                const double damping = 2.0 * s.dPdt[k] + 3.0 * s.P[k] * s.P2[k];
                const double source0 = 0.5 * inv_t2 * (s.RF[k] - s.RBt2[k]);
                const double num = 0.5 * inv_t2 * usq * s.expm2f[k] * lap[k] +
                                   1.5 * usq * usq * inv_t2 / tau * s.expm2f[k] * grad2 +
                                   (s.P[k] / tau - damping) * m +
                                   0.5 * tau * (damping - source0);
                out[k] = num / s.P[k];
            }
            break;
        }
    }
    return out;
}

Field rhs_slots(const RicciSlots& s, DependentVariable var, const Field& y) {
    const double tau = s.tau;
    const GridPtr& grid = y.grid();
    const int nlat = grid->nlat(), nlon = grid->nlon();
    Field out(grid);

    switch (var) {
        case DependentVariable::lapse: {
            const Field lap = axi_laplacian(y, s.lap);
            for (int i = 0; i < nlat; ++i) {
                const double coef = 0.25 * tau * tau * s.msq[i] + 0.5;
                for (int j = 0; j < nlon; ++j) {
                    const double u = y.at(i, j);
                    const double num = 0.5 * u * u * lap.at(i, j) + coef * u -
                                       0.25 * (s.R[i] - s.RBt2.at(i, j)) * u * u * u;
                    out.at(i, j) = num / tau;
                }
            }
            break;
        }
        case DependentVariable::inverse_square: {
            const Field lap = axi_laplacian(y, s.lap);
            const Gradient gr = gradient_sigma(y);
            for (int i = 0; i < nlat; ++i) {
                const double inv_a = s.lap.c_tt[i], inv_b = s.lap.c_pp[i];
                const double damping = 0.5 * tau * tau * s.msq[i] + 1.0;
                for (int j = 0; j < nlon; ++j) {
                    const double w = y.at(i, j);
                    const double gt = gr.dtheta.at(i, j), gp = gr.dphi.at(i, j);
                    const double grad2 = inv_a * gt * gt + inv_b * gp * gp;
                    const double num = 0.5 / w * lap.at(i, j) - 0.75 / (w * w) * grad2 +
                                       0.5 * (s.R[i] - s.RBt2.at(i, j)) - damping * w;
                    out.at(i, j) = num / tau;
                }
            }
            break;
        }
        case DependentVariable::mass_aspect: {
            const Field lap = axi_laplacian(y, s.lap);
            const Gradient gr = gradient_sigma(y);
            for (int i = 0; i < nlat; ++i) {
                const double inv_a = s.lap.c_tt[i], inv_b = s.lap.c_pp[i];
                const double damping = 0.5 * tau * tau * s.msq[i] + 1.0;  // C_r
                for (int j = 0; j < nlon; ++j) {
                    const double m = y.at(i, j);
                    const double usq = 1.0 / (1.0 - 2.0 * m / tau);
                    const double gt = gr.dtheta.at(i, j), gp = gr.dphi.at(i, j);
                    const double grad2 = inv_a * gt * gt + inv_b * gp * gp;
                    const double source = 0.5 * (s.R[i] - s.RBt2.at(i, j));  // S_r
                    const double num = 0.5 * usq * lap.at(i, j) +
                                       1.5 * usq * usq / tau * grad2 -
                                       (damping - 1.0) * m + 0.5 * tau * (damping - source);
                    out.at(i, j) = num / tau;
                }
            }
            break;
        }
    }
    return out;
}

// Max diffusion coefficient in s = ln(t) units (multiplies -l(l+1) spectrally).
double diffusion_s(const ConformalSlots& s, DependentVariable var, const Field& y) {
    const double usq_hi = max_u_squared(y, var, s.tau);
    double m = 0.0;
    for (std::size_t k = 0; k < std::size_t(s.P.size()); ++k) {
        m = std::max(m, s.expm2f[k] / s.P[k]);
    }
    return usq_hi * m / (2.0 * s.tau);
}

double diffusion_s(const RicciSlots& s, DependentVariable var, const Field& y) {
    const double usq_hi = max_u_squared(y, var, s.tau);
    double m = 0.0;
    for (std::size_t i = 0; i < s.lap.c_tt.size(); ++i) {
        m = std::max(m, std::max(s.lap.c_tt[i], s.lap.c_pp[i]));
    }
    return 0.5 * usq_hi * m;
}

// ----------------------------------------------------------------------------
// Slot providers
// ----------------------------------------------------------------------------

ConformalSlots conformal_slots_at(const ConformalFoliation& fol,
                                  const PrescribedCurvature& rbar, double tau,
                                  bool horizon) {
    const double t_eval = horizon ? tau + 1.0 : tau;
    const FoliationSample fs = fol.sample(t_eval);
    const GridPtr& grid = fol.grid();
    ConformalSlots s;
    s.tau = tau;
    s.expm2f = Field(grid);
    s.P = Field(grid);
    s.dPdt = Field(grid);
    s.P2 = Field(grid);
    const double inv_tau = 1.0 / tau, inv_tau2 = inv_tau * inv_tau;
    const double shift = horizon ? t_eval * inv_tau : 1.0;
    for (std::size_t k = 0; k < std::size_t(grid->size()); ++k) {
        const double ft = fs.f_t[k], ftt = fs.f_tt[k];
        s.expm2f[k] = std::exp(-2.0 * fs.f[k]);
        s.P[k] = inv_tau + shift * ft;
        s.dPdt[k] = horizon ? -inv_tau2 - ft * inv_tau2 + shift * ftt : -inv_tau2 + ftt;
        s.P2[k] = horizon ? inv_tau + ft : s.P[k];
    }
    s.RF = conformal_scalar_curvature(fs.f);
    s.RBt2 = rbar.eval(grid, t_eval);
    const double fac2 = t_eval * t_eval;
    for (std::size_t k = 0; k < std::size_t(grid->size()); ++k) s.RBt2[k] *= fac2;
    return s;
}

RicciSlots ricci_slots_at(const RicciFlowTrajectory& traj, const PrescribedCurvature& rbar,
                          double tau, bool horizon) {
    const double t_eval = horizon ? tau + 1.0 : tau;
    const BackgroundSlice sl = traj.slice(t_eval);
    const GridPtr& grid = traj.grid();
    RicciSlots s;
    s.tau = tau;
    s.lap = axi_laplacian_coeffs(grid, sl.a, sl.b);
    s.R = sl.R;
    s.msq = sl.msq;
    if (horizon) {
        const double scale = t_eval / tau;
        for (double& v : s.msq) v *= scale;
    }
    s.RBt2 = rbar.eval(grid, t_eval);
    const double fac2 = t_eval * t_eval;
    for (std::size_t k = 0; k < std::size_t(grid->size()); ++k) s.RBt2[k] *= fac2;
    return s;
}

// ----------------------------------------------------------------------------
// Core stepping loop (shared by branches and scalings)
// ----------------------------------------------------------------------------

template <class SlotFn>
SolutionRecord run_evolution(const GridPtr& grid, const Field& phi,
                             const std::vector<double>& snaps, const EvolverControls& c,
                             EnvelopeBranch branch, bool horizon, SlotFn&& slots_at) {
    if (snaps.size() < 2) throw ConfigError("lapse evolution: need at least 2 snapshots");
    for (std::size_t k = 0; k < snaps.size(); ++k) {
        if (!(snaps[k] > 0.0) || (k > 0 && !(snaps[k] > snaps[k - 1]))) {
            throw ConfigError("lapse evolution: snapshot times must be positive increasing");
        }
    }
    if (phi.grid() != grid) throw ConfigError("lapse evolution: initial data grid mismatch");
    if (!(c.safety > 0.0 && c.safety <= 1.0)) {
        throw ConfigError("lapse evolution: safety must lie in (0, 1]");
    }

    SolutionRecord rec;
    rec.branch = branch;
    rec.horizon_scaled = horizon;
    rec.grid = grid;
    rec.variable = c.variable;
    rec.stepper = c.stepper;
    rec.ds_min = std::numeric_limits<double>::infinity();
    rec.ds_max = 0.0;

    // Admissibility of the initial lapse against K.
    rec.k_value = c.admissibility_K;
    if (std::isfinite(c.admissibility_K) && c.admissibility_K > 0.0) {
        const double bound = 1.0 / std::sqrt(c.admissibility_K);
        const double phi_max = field_extrema(phi).max;
        if (phi_max >= bound) {
            rec.k_violation = true;
            if (!c.allow_k_violation) {
                char buf[160];
                std::snprintf(buf, sizeof buf,
                              "initial lapse max %.6g violates the admissibility bound "
                              "1/sqrt(K) = %.6g",
                              phi_max, bound);
                throw HypothesisError(buf);
            }
        }
    }
    if (!(field_extrema(phi).min > c.positivity_floor)) {
        throw ConfigError("lapse evolution: initial lapse must be positive");
    }

    const int lmax = grid->lmax();
    const double eig_max = double(lmax) * double(lmax + 1);

    Field state = state_from_lapse(phi, c.variable, snaps.front());
    rec.times.push_back(snaps.front());
    rec.u.push_back(phi);

    auto post_step = [&](Field& y, double tau) {
        if (c.dealias_lcut > 0) y = truncate_band(y, c.dealias_lcut);
        check_finite(y, tau);
        check_positive_state(y, c.variable, tau, c.positivity_floor);
    };

    for (std::size_t seg = 0; seg + 1 < snaps.size(); ++seg) {
        const double s_lo = std::log(snaps[seg]), s_hi = std::log(snaps[seg + 1]);
        const double seg_len = s_hi - s_lo;

        double ds_target;
        if (c.ds > 0.0) {
            ds_target = c.ds;
        } else if (c.stepper == Stepper::rk4) {
            const auto s0 = slots_at(snaps[seg]);
            const double d = diffusion_s(s0, c.variable, state);
            ds_target = c.safety * kRk4RealAxis / std::max(d * eig_max, 1e-30);
        } else {
            ds_target = kImexAutoDs;
        }
        const int n_steps = std::max(1, int(std::ceil(seg_len / ds_target - 1e-12)));
        const double h = seg_len / n_steps;
        rec.ds_min = std::min(rec.ds_min, h);
        rec.ds_max = std::max(rec.ds_max, h);

        if (c.stepper == Stepper::rk4) {
            for (int i = 0; i < n_steps; ++i) {
                const double s0 = s_lo + seg_len * i / n_steps;
                const double t0 = std::exp(s0), tm = std::exp(s0 + 0.5 * h),
                             t1 = std::exp(s0 + h);
                const auto sl0 = slots_at(t0);
                const auto slm = slots_at(tm);
                const auto sl1 = slots_at(t1);

                Field k1 = rhs_slots(sl0, c.variable, state);
                Field y2 = state;
                for (std::size_t k = 0; k < std::size_t(y2.size()); ++k) {
                    k1[k] *= t0;  // d/ds = t * d/dt
                    y2[k] += 0.5 * h * k1[k];
                }
                Field k2 = rhs_slots(slm, c.variable, y2);
                Field y3 = state;
                for (std::size_t k = 0; k < std::size_t(y3.size()); ++k) {
                    k2[k] *= tm;
                    y3[k] += 0.5 * h * k2[k];
                }
                Field k3 = rhs_slots(slm, c.variable, y3);
                Field y4 = state;
                for (std::size_t k = 0; k < std::size_t(y4.size()); ++k) {
                    k3[k] *= tm;
                    y4[k] += h * k3[k];
                }
                Field k4 = rhs_slots(sl1, c.variable, y4);
                for (std::size_t k = 0; k < std::size_t(state.size()); ++k) {
                    k4[k] *= t1;
                    state[k] += h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
                }
                post_step(state, t1);
                ++rec.steps;
            }
        } else {
            // IMEX-SBDF2 with the diffusion frozen at the segment start and
            // treated spectrally: Lop y = Dhat * lap_sigma y.  The first step
            // of each segment is IMEX Euler (no older state is available).
            const auto s0 = slots_at(snaps[seg]);
            const double dhat = diffusion_s(s0, c.variable, state);

            auto explicit_part = [&](const Field& y, double tau) {
                const auto sl = slots_at(tau);
                Field g = rhs_slots(sl, c.variable, y);
                const Field lap = laplacian_sigma(y);
                for (std::size_t k = 0; k < std::size_t(g.size()); ++k) {
                    g[k] = tau * g[k] - dhat * lap[k];
                }
                return g;
            };
            auto solve_implicit = [&](const Field& rhs, double coef) {
                // (1 - coef * Dhat * lap_sigma) y = rhs, diagonal per degree l.
                SpectralCoeffs sc = forward(rhs);
                for (int l = 0; l <= lmax; ++l) {
                    const double den = 1.0 + coef * dhat * double(l) * double(l + 1);
                    for (int m = 0; m <= l; ++m) sc.ref(l, m) /= den;
                }
                return inverse(sc);
            };

            Field prev = state;           // y^{n-1}
            Field n_prev(grid);           // N(y^{n-1})
            {
                const double tau0 = snaps[seg];
                n_prev = explicit_part(state, tau0);
                Field rhs = state;
                for (std::size_t k = 0; k < std::size_t(rhs.size()); ++k) {
                    rhs[k] += h * n_prev[k];
                }
                state = solve_implicit(rhs, h);
                post_step(state, std::exp(s_lo + h));
                ++rec.steps;
            }
            for (int i = 1; i < n_steps; ++i) {
                const double tau_n = std::exp(s_lo + seg_len * i / n_steps);
                const Field n_cur = explicit_part(state, tau_n);
                Field rhs(grid);
                for (std::size_t k = 0; k < std::size_t(rhs.size()); ++k) {
                    rhs[k] = (4.0 * state[k] - prev[k]) / 3.0 +
                             (2.0 * h / 3.0) * (2.0 * n_cur[k] - n_prev[k]);
                }
                prev = state;
                n_prev = n_cur;
                state = solve_implicit(rhs, 2.0 * h / 3.0);
                post_step(state, std::exp(s_lo + seg_len * (i + 1) / n_steps));
                ++rec.steps;
            }
        }

        rec.times.push_back(snaps[seg + 1]);
        rec.u.push_back(lapse_from_state(state, c.variable, snaps[seg + 1]));
    }
    if (rec.ds_max == 0.0) rec.ds_min = 0.0;
    return rec;
}

std::vector<double> default_snapshots(double t_start, double t_end, int count) {
    if (!(t_end > t_start)) throw ConfigError("lapse evolution: t_end must exceed start");
    if (count < 2) throw ConfigError("lapse evolution: need at least 2 snapshots");
    std::vector<double> s(count);
    const double lo = std::log(t_start), hi = std::log(t_end);
    for (int k = 0; k < count; ++k) {
        s[k] = std::exp(lo + (hi - lo) * k / double(count - 1));
    }
    s.front() = t_start;
    s.back() = t_end;
    return s;
}

std::vector<double> resolve_snapshots(const EvolverControls& c, double t_start,
                                      double t_end) {
    if (c.snapshot_times.empty()) return default_snapshots(t_start, t_end, c.snapshots);
    const std::vector<double>& s = c.snapshot_times;
    if (std::abs(s.back() - t_end) > 1e-9 * std::max(1.0, std::abs(t_end))) {
        throw ConfigError("lapse evolution: snapshot_times.back() differs from t_end");
    }
    return s;
}

}  // namespace

// ----------------------------------------------------------------------------
// Record accessors
// ----------------------------------------------------------------------------

Field truncate_band(const Field& x, int lcut) {
    const int lmax = x.grid()->lmax();
    if (lcut >= lmax) return x;
    SpectralCoeffs sc = forward(x);
    for (int l = lcut + 1; l <= lmax; ++l) {
        for (int m = 0; m <= l; ++m) sc.ref(l, m) = 0.0;
    }
    return inverse(sc);
}

SolutionRecord transport_scaled_record(const SolutionRecord& scaled, double tau_min) {
    if (!scaled.horizon_scaled)
        throw ConfigError("transport_scaled_record: record is already in interior time");
    SolutionRecord out = scaled;
    out.horizon_scaled = false;
    out.times.clear();
    out.u.clear();
    for (std::size_t k = 0; k < scaled.size(); ++k) {
        const double tau = scaled.times[k];
        if (tau < tau_min * (1.0 - 1e-12)) continue;
        const double fac = std::sqrt((tau + 1.0) / tau);
        Field u = scaled.u[k];
        for (std::size_t i = 0; i < std::size_t(u.size()); ++i) u[i] *= fac;
        out.times.push_back(tau + 1.0);
        out.u.push_back(std::move(u));
    }
    if (out.times.size() < 2)
        throw ConfigError("transport_scaled_record: fewer than two snapshots at tau >= tau_min");
    return out;
}

Field SolutionRecord::w(std::size_t k) const {
    Field out = u.at(k);
    for (std::size_t i = 0; i < std::size_t(out.size()); ++i) out[i] = 1.0 / (out[i] * out[i]);
    return out;
}

Field SolutionRecord::m(std::size_t k) const {
    Field out = u.at(k);
    const double t = times.at(k);
    for (std::size_t i = 0; i < std::size_t(out.size()); ++i) {
        out[i] = 0.5 * t * (1.0 - 1.0 / (out[i] * out[i]));
    }
    return out;
}

std::vector<double> SolutionRecord::w_min_trace() const {
    std::vector<double> v(times.size());
    for (std::size_t k = 0; k < times.size(); ++k) v[k] = field_extrema(w(k)).min;
    return v;
}

std::vector<double> SolutionRecord::w_max_trace() const {
    std::vector<double> v(times.size());
    for (std::size_t k = 0; k < times.size(); ++k) v[k] = field_extrema(w(k)).max;
    return v;
}

// ----------------------------------------------------------------------------
// Public right-hand sides
// ----------------------------------------------------------------------------

Field conformal_rhs(const ConformalFoliation& foliation, const PrescribedCurvature& rbar,
                    DependentVariable variable, const Field& y, double t) {
    return rhs_slots(conformal_slots_at(foliation, rbar, t, false), variable, y);
}

Field ricci_rhs(const RicciFlowTrajectory& trajectory, const PrescribedCurvature& rbar,
                DependentVariable variable, const Field& y, double t) {
    return rhs_slots(ricci_slots_at(trajectory, rbar, t, false), variable, y);
}

// ----------------------------------------------------------------------------
// Interior drivers
// ----------------------------------------------------------------------------

SolutionRecord evolve_conformal(const ConformalFoliation& foliation,
                                const PrescribedCurvature& rbar, const Field& phi,
                                double t_end, const EvolverControls& controls) {
    const std::vector<double> snaps = resolve_snapshots(controls, 1.0, t_end);
    return run_evolution(foliation.grid(), phi, snaps, controls, EnvelopeBranch::conformal,
                         false, [&](double tau) {
                             return conformal_slots_at(foliation, rbar, tau, false);
                         });
}

SolutionRecord evolve_ricci(const RicciFlowTrajectory& trajectory,
                            const PrescribedCurvature& rbar, const Field& phi, double t_end,
                            const EvolverControls& controls) {
    const std::vector<double> snaps = resolve_snapshots(controls, 1.0, t_end);
    return run_evolution(trajectory.grid(), phi, snaps, controls, EnvelopeBranch::ricci,
                         false, [&](double tau) {
                             return ricci_slots_at(trajectory, rbar, tau, false);
                         });
}

// ----------------------------------------------------------------------------
// Horizon drivers
// ----------------------------------------------------------------------------

namespace {

struct HorizonHooks {
    EnvelopeBranch branch;
    // Initial-leaf sign field (R_leaf - Rbar at t = 1) for the eta window.
    std::function<Field()> sign_field;
    // Horizon comparison band at the given shifted times.
    std::function<EnvelopePair(const std::vector<double>&)> band;
    // Scaled evolution from tau_start over the given snapshot grid.
    std::function<SolutionRecord(const Field&, const std::vector<double>&)> evolve;
};

HorizonResult horizon_driver(const GridPtr& grid, const HorizonControls& c,
                             const HorizonHooks& hooks) {
    // --- boundary sign hypothesis and window parameter -----------------------
    const Field sgn = hooks.sign_field();
    const Extrema se = field_extrema(sgn);
    if (!(se.min > 0.0)) {
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "horizon construction requires R_leaf - Rbar > 0 on the initial "
                      "leaf (min = %.6g)",
                      se.min);
        throw HypothesisError(buf);
    }
    HorizonResult res;
    const double eta_auto = std::min(
        std::max(std::max(1.0 - se.min, 1.0 - 1.0 / se.max) + 0.05, 0.05), 0.95);
    if (std::isfinite(c.eta)) {
        if (!(c.eta > 0.0 && c.eta < 1.0)) {
            throw ConfigError("horizon window parameter must lie in (0, 1)");
        }
        res.eta_used = c.eta;
        res.eta_supplied_ok = (1.0 - c.eta < se.min) && (se.max < 1.0 / (1.0 - c.eta));
    } else {
        res.eta_used = eta_auto;
        res.eta_supplied_ok = (1.0 - eta_auto < se.min) && (se.max < 1.0 / (1.0 - eta_auto));
    }

    // --- ladder validation ----------------------------------------------------
    const std::vector<double>& eps = c.epsilons;
    if (eps.size() < 2) throw ConfigError("horizon ladder needs at least 2 start times");
    const double ratio = eps[1] / eps[0];
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw ConfigError("horizon ladder must be strictly decreasing");
    }
    for (std::size_t j = 1; j < eps.size(); ++j) {
        if (!(eps[j] > 0.0) || !(eps[j] < eps[j - 1])) {
            throw ConfigError("horizon ladder must be positive and strictly decreasing");
        }
        const double r = eps[j] / eps[j - 1];
        if (std::abs(r - ratio) > 1e-6 * ratio) {
            throw ConfigError("horizon ladder must keep a constant ratio");
        }
    }
    if (!(c.t_end > eps[0] * 1.5)) {
        throw ConfigError("horizon t_end must exceed the largest ladder start");
    }
    if (c.common_snapshots < 4) throw ConfigError("horizon needs >= 4 common snapshots");

    // --- common grid and initial data from the band midpoint ------------------
    const std::vector<double> common =
        default_snapshots(eps[0], c.t_end, c.common_snapshots);
    std::vector<double> eps_sorted(eps.rbegin(), eps.rend());  // ascending
    const EnvelopePair band = hooks.band(eps_sorted);

    EvolverControls member_controls = c.evolver;
    member_controls.admissibility_K = std::numeric_limits<double>::quiet_NaN();

    const double ds_common = std::log(c.t_end / eps[0]) / double(c.common_snapshots - 1);
    for (std::size_t j = 0; j < eps.size(); ++j) {
        const double e = eps[j];
        // Midpoint of the comparison band at the start time fixes phi_eps.
        const std::size_t bi = eps.size() - 1 - j;  // index in ascending band grid
        const double wbar = 0.5 * (band.lower[bi] + band.upper[bi]);
        if (!(wbar > 0.0)) {
            throw NumericsError("horizon band midpoint is not positive at a start time");
        }
        const double phi_val = 1.0 / std::sqrt(wbar);

        std::vector<double> snaps;
        if (j == 0) {
            snaps = common;
        } else {
            const int n_warm =
                std::max(1, int(std::ceil(std::log(eps[0] / e) / ds_common - 1e-12)));
            for (int k = 0; k <= n_warm; ++k) {
                snaps.push_back(e * std::pow(eps[0] / e, double(k) / n_warm));
            }
            snaps.back() = eps[0];
            snaps.insert(snaps.end(), common.begin() + 1, common.end());
        }
        member_controls.snapshot_times = snaps;
        res.members.push_back(
            hooks.evolve(Field::constant(grid, phi_val), snaps));
    }

    // --- pointwise Richardson extrapolation in the start time -----------------
    const std::size_t nc = common.size();
    const std::size_t nm = res.members.size();
    auto common_field = [&](std::size_t j, std::size_t k) -> const Field& {
        const SolutionRecord& r = res.members[j];
        return r.u[r.u.size() - nc + k];
    };

    res.member_deviation.resize(nm - 1);
    for (std::size_t j = 0; j + 1 < nm; ++j) {
        double d = 0.0;
        for (std::size_t k = 0; k < nc; ++k) {
            d = std::max(d, linf_diff(common_field(j + 1, k), common_field(j, k)));
        }
        res.member_deviation[j] = d;
    }

    // Scalar probe (mean of w at the first common snapshot) for the fitted
    // order and convergence verdict.
    {
        std::vector<double> probe(nm);
        for (std::size_t j = 0; j < nm; ++j) {
            Field wf = common_field(j, 0);
            for (std::size_t i = 0; i < std::size_t(wf.size()); ++i) {
                wf[i] = 1.0 / (wf[i] * wf[i]);
            }
            probe[j] = integrate_sigma(wf) / (4.0 * 3.14159265358979323846);
        }
        res.extrapolation = richardson_extrapolate(probe, ratio);
    }

    const double d_last = res.member_deviation.back();
    const double scale_atol = 1e-13;
    double q = 0.0;
    bool degenerate = d_last <= scale_atol;
    if (!degenerate && nm >= 3) {
        const double d_prev = res.member_deviation[nm - 3];
        if (d_prev <= scale_atol) {
            degenerate = true;
        } else {
            q = d_last / d_prev;
            if (!(q < 1.0)) {
                char buf[128];
                std::snprintf(buf, sizeof buf,
                              "horizon ladder is not converging (deviation ratio %.3g)", q);
                throw NumericsError(buf);
            }
        }
    }

    res.scaled.branch = hooks.branch;
    res.scaled.horizon_scaled = true;
    res.scaled.grid = grid;
    res.scaled.times = common;
    res.scaled.variable = member_controls.variable;
    res.scaled.stepper = member_controls.stepper;
    res.scaled.ds_min = res.members.back().ds_min;
    res.scaled.ds_max = res.members.back().ds_max;
    res.scaled.steps = res.members.back().steps;
    for (std::size_t k = 0; k < nc; ++k) {
        Field f = common_field(nm - 1, k);
        if (!degenerate && q > 0.0) {
            const Field& g = common_field(nm - 2, k);
            const double fac = q / (1.0 - q);
            for (std::size_t i = 0; i < std::size_t(f.size()); ++i) {
                f[i] += (f[i] - g[i]) * fac;
            }
        }
        res.scaled.u.push_back(std::move(f));
    }

    res.unscaled = transport_scaled_record(res.scaled);

    // --- window audit on the scaled record -------------------------------------
    const double eta = res.eta_used;
    const double lo_band = 1.0 - eta, hi_band = 1.0 / (1.0 - eta);
    double tau_ok = 0.0;
    bool stopped = false;
    for (std::size_t k = 0; k < nc && common[k] <= 1.0 + 1e-12; ++k) {
        const Extrema we = field_extrema(res.scaled.w(k));
        if (we.min > lo_band && we.max < hi_band) {
            if (!stopped) tau_ok = common[k];
        } else {
            stopped = true;
        }
        if (stopped) break;
    }
    res.t0_window = 1.0 + tau_ok;
    res.window_pass = nc >= 2 && tau_ok >= common[1] - 1e-12;

    double worst = 0.0;
    for (std::size_t k = 0; k < nc && common[k] <= tau_ok + 1e-12; ++k) {
        const double tau = common[k];
        const Field wf = res.scaled.w(k);
        const Extrema we = field_extrema(wf);
        // 2m(t) = (tau + 1) - tau * wtilde at interior time t = tau + 1.
        const double two_m_max = (tau + 1.0) - tau * we.min;
        const double two_m_min = (tau + 1.0) - tau * we.max;
        const double lo_req = 1.0 - eta * tau / (1.0 - eta);
        const double hi_req = 1.0 + eta * tau;
        worst = std::max(worst, std::max(lo_req - two_m_min, two_m_max - hi_req));
    }
    res.mass_bracket_worst = std::max(worst, 0.0);
    return res;
}

}  // namespace

HorizonResult horizon_evolve_conformal(const ConformalFoliation& foliation,
                                       const PrescribedCurvature& rbar,
                                       const HorizonControls& controls) {
    const GridPtr& grid = foliation.grid();
    HorizonHooks hooks;
    hooks.branch = EnvelopeBranch::conformal;
    hooks.sign_field = [&]() {
        const FoliationSample fs = foliation.sample(1.0);
        Field s = conformal_scalar_curvature(fs.f);
        const Field rb = rbar.eval(grid, 1.0);
        for (std::size_t k = 0; k < std::size_t(s.size()); ++k) s[k] -= rb[k];
        return s;
    };
    hooks.band = [&](const std::vector<double>& taus) {
        return envelopes_conformal_horizon(foliation, rbar, taus);
    };
    hooks.evolve = [&](const Field& phi, const std::vector<double>& snaps) {
        EvolverControls mc = controls.evolver;
        mc.snapshot_times = snaps;
        mc.admissibility_K = std::numeric_limits<double>::quiet_NaN();
        return run_evolution(grid, phi, snaps, mc, EnvelopeBranch::conformal, true,
                             [&](double tau) {
                                 return conformal_slots_at(foliation, rbar, tau, true);
                             });
    };
    return horizon_driver(grid, controls, hooks);
}

HorizonResult horizon_evolve_ricci(const RicciFlowTrajectory& trajectory,
                                   const PrescribedCurvature& rbar,
                                   const HorizonControls& controls) {
    const GridPtr& grid = trajectory.grid();
    HorizonHooks hooks;
    hooks.branch = EnvelopeBranch::ricci;
    hooks.sign_field = [&]() {
        const BackgroundSlice sl = trajectory.slice(1.0);
        Field s = rbar.eval(grid, 1.0);
        for (int i = 0; i < grid->nlat(); ++i) {
            for (int j = 0; j < grid->nlon(); ++j) {
                s.at(i, j) = sl.R[i] - s.at(i, j);
            }
        }
        return s;
    };
    hooks.band = [&](const std::vector<double>& taus) {
        return envelopes_ricci_horizon(trajectory, rbar, taus);
    };
    hooks.evolve = [&](const Field& phi, const std::vector<double>& snaps) {
        EvolverControls mc = controls.evolver;
        mc.snapshot_times = snaps;
        mc.admissibility_K = std::numeric_limits<double>::quiet_NaN();
        return run_evolution(grid, phi, snaps, mc, EnvelopeBranch::ricci, true,
                             [&](double tau) {
                                 return ricci_slots_at(trajectory, rbar, tau, true);
                             });
    };
    return horizon_driver(grid, controls, hooks);
}

}  // namespace qsphere
