/// @file audit.cpp
/// @brief Geometric closure audits on recorded lapse evolutions.

#include "qsphere/audit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "qsphere/errors.hpp"

namespace qsphere {

namespace {

constexpr double kFourPi = 4.0 * std::numbers::pi;
constexpr double kFlatFloor = 1e-10;   // "identically flat" verdict level
constexpr double kFitFloor = 1e-13;    // roundoff floor for decay-rate fits

void require_interior(const SolutionRecord& rec, const GridPtr& grid,
                      std::size_t min_snapshots) {
    if (rec.horizon_scaled) {
        throw ConfigError("audit: expected an interior-time record "
                          "(use HorizonResult::unscaled)");
    }
    if (rec.grid != grid) throw ConfigError("audit: record grid mismatch");
    if (rec.times.size() != rec.u.size() || rec.size() < min_snapshots) {
        throw ConfigError("audit: record needs at least " +
                          std::to_string(min_snapshots) + " snapshots");
    }
}

/// d(field)/dt at every snapshot via five-point stencils in s = ln t.
std::vector<Field> time_derivative(const std::vector<double>& times,
                                   const std::vector<Field>& fields) {
    const std::size_t n = times.size();
    const std::size_t width = std::min<std::size_t>(5, n);
    std::vector<double> s(n);
    for (std::size_t k = 0; k < n; ++k) s[k] = std::log(times[k]);

    std::vector<Field> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t lo =
            std::min(std::max<std::size_t>(k, 2) - 2, n - width);
        const std::vector<double> nodes(s.begin() + lo, s.begin() + lo + width);
        const std::vector<double> wts = fd_weights(s[k], nodes, 1);
        Field d(fields[k].grid());
        for (std::size_t j = 0; j < width; ++j) {
            const Field& f = fields[lo + j];
            for (std::size_t i = 0; i < std::size_t(d.size()); ++i) {
                d[i] += wts[j] * f[i];
            }
        }
        const double inv_t = 1.0 / times[k];  // d/dt = (1/t) d/ds
        for (std::size_t i = 0; i < std::size_t(d.size()); ++i) d[i] *= inv_t;
        out.push_back(std::move(d));
    }
    return out;
}

double sup_abs(const Field& f) { return linf_norm(f); }

}  // namespace

// ---------------------------------------------------------------------------
// Leaf geometry
// ---------------------------------------------------------------------------

LeafData leaf_data_conformal(const ConformalFoliation& foliation,
                             const SolutionRecord& rec, std::size_t k) {
    const GridPtr& grid = foliation.grid();
    const double t = rec.times.at(k);
    const FoliationSample fs = foliation.sample(t);
    const Field& u = rec.u.at(k);
    const double inv_t = 1.0 / t, inv_t2 = inv_t * inv_t;

    LeafData d;
    d.t = t;
    d.H = Field(grid);
    d.Asq = Field(grid);
    d.lap_u = laplacian_sigma(u);
    d.R_leaf = conformal_scalar_curvature(fs.f);
    for (std::size_t i = 0; i < std::size_t(u.size()); ++i) {
        const double p = inv_t + fs.f_t[i];
        d.H[i] = 2.0 * p / u[i];
        d.Asq[i] = 2.0 * p * p / (u[i] * u[i]);
        d.lap_u[i] *= std::exp(-2.0 * fs.f[i]) * inv_t2;
        d.R_leaf[i] *= inv_t2;
    }
    return d;
}

LeafData leaf_data_ricci(const RicciFlowTrajectory& trajectory,
                         const SolutionRecord& rec, std::size_t k) {
    const GridPtr& grid = trajectory.grid();
    const double t = rec.times.at(k);
    const BackgroundSlice sl = trajectory.slice(t);
    const Field& u = rec.u.at(k);
    const double inv_t2 = 1.0 / (t * t);

    LeafData d;
    d.t = t;
    d.H = Field(grid);
    d.Asq = Field(grid);
    d.R_leaf = Field(grid);
    d.lap_u = axi_laplacian(u, axi_laplacian_coeffs(grid, sl.a, sl.b));
    for (int i = 0; i < grid->nlat(); ++i) {
        for (int j = 0; j < grid->nlon(); ++j) {
            const double uu = u.at(i, j);
            d.H.at(i, j) = 2.0 / (t * uu);
            d.Asq.at(i, j) = 2.0 * inv_t2 / (uu * uu) + sl.msq[i] / (uu * uu);
            d.R_leaf.at(i, j) = sl.R[i] * inv_t2;
            d.lap_u.at(i, j) *= inv_t2;
        }
    }
    return d;
}

// ---------------------------------------------------------------------------
// Curvature reconstruction
// ---------------------------------------------------------------------------

namespace {

CurvatureAudit curvature_audit_impl(const GridPtr& grid, const PrescribedCurvature& rbar,
                                    const SolutionRecord& rec,
                                    const std::vector<LeafData>& leaf) {
    const std::size_t n = rec.size();
    std::vector<Field> h_fields;
    h_fields.reserve(n);
    for (const LeafData& d : leaf) h_fields.push_back(d.H);
    const std::vector<Field> dHdt = time_derivative(rec.times, h_fields);

    CurvatureAudit out;
    out.t = rec.times;
    out.linf.resize(n);
    out.l2.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const Field& u = rec.u[k];
        const LeafData& d = leaf[k];
        const Field rb = rbar.eval(grid, rec.times[k]);
        Field diff(grid);
        for (std::size_t i = 0; i < std::size_t(u.size()); ++i) {
            const double rec_val = -2.0 / u[i] * dHdt[k][i] - 2.0 / u[i] * d.lap_u[i] -
                                   d.Asq[i] + d.R_leaf[i] - d.H[i] * d.H[i];
            diff[i] = rec_val - rb[i];
        }
        out.linf[k] = sup_abs(diff);
        for (std::size_t i = 0; i < std::size_t(diff.size()); ++i) diff[i] *= diff[i];
        out.l2[k] = std::sqrt(integrate_sigma(diff) / kFourPi);
        out.worst = std::max(out.worst, out.linf[k]);
    }
    return out;
}

}  // namespace

CurvatureAudit curvature_audit_conformal(const ConformalFoliation& foliation,
                                         const PrescribedCurvature& rbar,
                                         const SolutionRecord& rec) {
    require_interior(rec, foliation.grid(), 5);
    std::vector<LeafData> leaf;
    leaf.reserve(rec.size());
    for (std::size_t k = 0; k < rec.size(); ++k) {
        leaf.push_back(leaf_data_conformal(foliation, rec, k));
    }
    return curvature_audit_impl(foliation.grid(), rbar, rec, leaf);
}

CurvatureAudit curvature_audit_ricci(const RicciFlowTrajectory& trajectory,
                                     const PrescribedCurvature& rbar,
                                     const SolutionRecord& rec) {
    require_interior(rec, trajectory.grid(), 5);
    std::vector<LeafData> leaf;
    leaf.reserve(rec.size());
    for (std::size_t k = 0; k < rec.size(); ++k) {
        leaf.push_back(leaf_data_ricci(trajectory, rec, k));
    }
    return curvature_audit_impl(trajectory.grid(), rbar, rec, leaf);
}

// ---------------------------------------------------------------------------
// Mass series
// ---------------------------------------------------------------------------

MassSeries mass_series_conformal(const ConformalFoliation& foliation,
                                 const SolutionRecord& rec) {
    require_interior(rec, foliation.grid(), 2);
    const GridPtr& grid = foliation.grid();
    MassSeries out;
    out.t = rec.times;
    const std::size_t n = rec.size();
    out.hawking.resize(n);
    out.flux.resize(n);
    out.correction.resize(n);
    out.estimator.resize(n);

    for (std::size_t k = 0; k < n; ++k) {
        const double t = rec.times[k];
        const FoliationSample fs = foliation.sample(t);
        const Field w = rec.w(k);
        Field e2f(grid), h2_meas(grid), flux_int(grid), corr_int(grid);
        for (std::size_t i = 0; i < std::size_t(w.size()); ++i) {
            const double ef = std::exp(2.0 * fs.f[i]);
            const double p = 1.0 / t + fs.f_t[i];
            e2f[i] = ef;
            // H^2 against the leaf measure t^2 e^{2f} dsigma.
            h2_meas[i] = 4.0 * w[i] * p * p * t * t * ef;
            flux_int[i] = 0.5 * t * (1.0 - w[i]);
            corr_int[i] = -0.5 * t * (ef - 1.0) * w[i] - t * t * ef * fs.f_t[i] * w[i];
        }
        const double area = t * t * integrate_sigma(e2f);
        out.hawking[k] = std::sqrt(area / (4.0 * kFourPi)) *
                         (1.0 - integrate_sigma(h2_meas) / (4.0 * kFourPi));
        out.flux[k] = integrate_sigma(flux_int) / kFourPi;
        out.correction[k] = integrate_sigma(corr_int) / kFourPi;
        out.estimator[k] = out.flux[k] + out.correction[k];
    }
    return out;
}

MassSeries mass_series_ricci(const RicciFlowTrajectory& trajectory,
                             const SolutionRecord& rec) {
    require_interior(rec, trajectory.grid(), 2);
    const GridPtr& grid = trajectory.grid();
    MassSeries out;
    out.t = rec.times;
    const std::size_t n = rec.size();
    out.hawking.resize(n);
    out.flux.resize(n);
    out.correction.assign(n, 0.0);
    out.estimator.resize(n);

    for (std::size_t k = 0; k < n; ++k) {
        const double t = rec.times[k];
        const BackgroundSlice sl = trajectory.slice(t);
        const Field w = rec.w(k);
        Field jac(grid), w_meas(grid), flux_int(grid);
        for (int i = 0; i < grid->nlat(); ++i) {
            const double j0 = std::sqrt(sl.a[i] * sl.b[i]);
            for (int j = 0; j < grid->nlon(); ++j) {
                jac.at(i, j) = j0;
                w_meas.at(i, j) = w.at(i, j) * j0;
                flux_int.at(i, j) = 0.5 * t * (1.0 - w.at(i, j));
            }
        }
        const double area = t * t * integrate_sigma(jac);
        // oint H^2 dmu = 4 oint w dmu_g with H = 2/(t u).
        out.hawking[k] = std::sqrt(area / (4.0 * kFourPi)) *
                         (1.0 - integrate_sigma(w_meas) / kFourPi);
        out.flux[k] = integrate_sigma(flux_int) / kFourPi;
        out.estimator[k] = out.flux[k];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Hawking mass monotonicity
// ---------------------------------------------------------------------------

namespace {

/// Shared drift audit: `metric_at(t)` returns {a, b, msq} profiles (unit
/// vectors for the round case).
struct DriftProfiles {
    std::vector<double> a, b, msq;
};

DriftAudit drift_impl(const GridPtr& grid, const PrescribedCurvature& rbar,
                      const SolutionRecord& rec,
                      const std::function<DriftProfiles(double)>& metric_at) {
    DriftAudit out;
    out.t = rec.times;
    const std::size_t n = rec.size();
    out.mass.resize(n);
    out.rhs.resize(n);

    for (std::size_t k = 0; k < n; ++k) {
        const double t = rec.times[k];
        const DriftProfiles pr = metric_at(t);
        const Field w = rec.w(k);
        const Gradient gr = gradient_sigma(rec.u[k]);
        const Field rb = rbar.eval(grid, t);
        Field mass_int(grid), rhs_int(grid);
        for (int i = 0; i < grid->nlat(); ++i) {
            const double jac = std::sqrt(pr.a[i] * pr.b[i]);
            const double inv_a = 1.0 / pr.a[i], inv_b = 1.0 / pr.b[i];
            for (int j = 0; j < grid->nlon(); ++j) {
                const double ww = w.at(i, j);
                const double gt = gr.dtheta.at(i, j), gp = gr.dphi.at(i, j);
                const double grad2 = inv_a * gt * gt + inv_b * gp * gp;
                mass_int.at(i, j) = 0.5 * t * (1.0 - ww) * jac;
                rhs_int.at(i, j) =
                    (ww * grad2 + 0.5 * t * t * pr.msq[i] * ww +
                     0.5 * t * t * rb.at(i, j)) *
                    jac;
            }
        }
        out.mass[k] = integrate_sigma(mass_int) / kFourPi;
        out.rhs[k] = integrate_sigma(rhs_int) / (2.0 * kFourPi);
    }

    out.increment.resize(n - 1);
    out.residual.resize(n - 1);
    out.min_increment = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k + 1 < n; ++k) {
        const double dt = out.t[k + 1] - out.t[k];
        out.increment[k] = out.mass[k + 1] - out.mass[k];
        out.residual[k] = out.increment[k] - 0.5 * dt * (out.rhs[k] + out.rhs[k + 1]);
        out.min_increment = std::min(out.min_increment, out.increment[k]);
        out.max_residual = std::max(out.max_residual, std::abs(out.residual[k]));
    }
    return out;
}

}  // namespace

DriftAudit hawking_drift_ricci(const RicciFlowTrajectory& trajectory,
                               const PrescribedCurvature& rbar,
                               const SolutionRecord& rec) {
    require_interior(rec, trajectory.grid(), 2);
    return drift_impl(trajectory.grid(), rbar, rec, [&](double t) {
        const BackgroundSlice sl = trajectory.slice(t);
        return DriftProfiles{sl.a, sl.b, sl.msq};
    });
}

DriftAudit hawking_drift_round(const ConformalFoliation& foliation,
                               const PrescribedCurvature& rbar,
                               const SolutionRecord& rec) {
    require_interior(rec, foliation.grid(), 2);
    if (!foliation.is_round()) {
        throw ConfigError("hawking_drift_round: the drift identity needs a "
                          "round background (|M| = 0, g = sigma)");
    }
    const std::size_t nlat = std::size_t(foliation.grid()->nlat());
    const DriftProfiles unit{std::vector<double>(nlat, 1.0),
                             std::vector<double>(nlat, 1.0),
                             std::vector<double>(nlat, 0.0)};
    return drift_impl(foliation.grid(), rbar, rec, [&](double) { return unit; });
}

// ---------------------------------------------------------------------------
// ADM mass fit
// ---------------------------------------------------------------------------

AdmFit adm_mass_fit(const MassSeries& series) {
    const std::size_t n = series.t.size();
    if (n < 5) throw ConfigError("adm_mass_fit: need at least 5 snapshots");
    const double t_end = series.t.back();
    if (t_end < 20.0 - 1e-9) {
        throw ConfigError("adm_mass_fit: record must reach t_end >= 20 so a "
                          "decade of tail exists");
    }
    const double t_lo = t_end / 10.0;
    std::size_t first = 0;
    while (first < n && series.t[first] < t_lo * (1.0 - 1e-12)) ++first;
    if (n - first < 5) {
        throw ConfigError("adm_mass_fit: fewer than 5 snapshots in the last decade");
    }

    std::vector<double> x, y;
    AdmFit out;
    out.first_index = first;
    for (std::size_t k = first; k < n; ++k) {
        x.push_back(1.0 / series.t[k]);
        y.push_back(series.estimator[k]);
        out.max_correction = std::max(out.max_correction, std::abs(series.correction[k]));
    }
    out.fit = linear_fit(x, y);
    out.mass = out.fit.intercept;
    out.uncertainty = out.fit.stderr_intercept;
    // R^2 is meaningless when the tail is already constant to roundoff (the
    // fit would be grading noise), so a negligible residual also passes.
    double rss = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double r = y[k] - (out.fit.intercept + out.fit.slope * x[k]);
        rss += r * r;
    }
    const double rms = std::sqrt(rss / double(x.size()));
    out.window_ok =
        out.fit.r2 >= 0.99 || rms <= 1e-8 * std::max(1.0, std::abs(out.mass));
    return out;
}

// ---------------------------------------------------------------------------
// Asymptotic flatness
// ---------------------------------------------------------------------------

namespace {

FlatnessReport flatness_impl(const SolutionRecord& rec,
                             const std::vector<LeafData>& leaf) {
    const std::size_t n = rec.size();
    const std::vector<Field> dudt = time_derivative(rec.times, rec.u);
    std::vector<Field> h_fields;
    h_fields.reserve(n);
    for (const LeafData& d : leaf) h_fields.push_back(d.H);
    const std::vector<Field> dHdt = time_derivative(rec.times, h_fields);

    FlatnessReport out;
    out.t = rec.times;
    out.norm_w.resize(n);
    out.norm_ut.resize(n);
    out.norm_grad.resize(n);
    out.norm_hess.resize(n);
    out.kappa_tan.resize(n);
    out.ric_normal.resize(n);

    for (std::size_t k = 0; k < n; ++k) {
        const double t = rec.times[k];
        const Field& u = rec.u[k];
        const Field w = rec.w(k);
        const Gradient gr = gradient_sigma(u);
        const Hessian hs = hessian_sigma(u);
        double nw = 0, nut = 0, ng = 0, nh = 0, kt = 0, rn = 0;
        for (std::size_t i = 0; i < std::size_t(u.size()); ++i) {
            nw = std::max(nw, std::abs(1.0 - w[i]));
            nut = std::max(nut, std::abs(t * dudt[k][i]));
            ng = std::max(ng, std::hypot(gr.dtheta[i], gr.dphi[i]));
            nh = std::max(nh, std::max({std::abs(hs.tt[i]), std::abs(hs.tp[i]),
                                        std::abs(hs.pp[i])}));
            const LeafData& d = leaf[k];
            const double kappa =
                0.5 * (d.R_leaf[i] - d.H[i] * d.H[i] + d.Asq[i]);
            const double ric =
                -dHdt[k][i] / u[i] - d.lap_u[i] / u[i] - d.Asq[i];
            kt = std::max(kt, std::abs(kappa));
            rn = std::max(rn, std::abs(ric));
        }
        out.norm_w[k] = nw;
        out.norm_ut[k] = nut;
        out.norm_grad[k] = ng;
        out.norm_hess[k] = nh;
        out.kappa_tan[k] = kt;
        out.ric_normal[k] = rn;
    }

    double biggest = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        biggest = std::max({biggest, out.norm_w[k], out.norm_ut[k], out.norm_grad[k],
                            out.norm_hess[k]});
    }
    out.identically_flat = biggest <= kFlatFloor;
    if (!out.identically_flat) {
        // Fit over the last decade only: early-time transients obey different
        // (faster) laws and would bias the asymptotic slope.
        std::size_t first = 0;
        const double t_lo = out.t.back() / 10.0;
        while (first + 2 < n && out.t[first] < t_lo * (1.0 - 1e-12)) ++first;
        const std::vector<double> tw(out.t.begin() + first, out.t.end());
        auto window = [&](const std::vector<double>& v) {
            return std::vector<double>(v.begin() + first, v.end());
        };
        out.slope_w = loglog_fit(tw, window(out.norm_w), kFitFloor);
        out.slope_ut = loglog_fit(tw, window(out.norm_ut), kFitFloor);
        out.slope_grad = loglog_fit(tw, window(out.norm_grad), kFitFloor);
        out.slope_hess = loglog_fit(tw, window(out.norm_hess), kFitFloor);
        std::vector<double> curv(n);
        for (std::size_t k = 0; k < n; ++k) {
            curv[k] = std::max(out.kappa_tan[k], out.ric_normal[k]);
        }
        out.slope_kappa = loglog_fit(tw, window(curv), kFitFloor);
    }
    return out;
}

}  // namespace

FlatnessReport flatness_conformal(const ConformalFoliation& foliation,
                                  const SolutionRecord& rec) {
    require_interior(rec, foliation.grid(), 5);
    std::vector<LeafData> leaf;
    leaf.reserve(rec.size());
    for (std::size_t k = 0; k < rec.size(); ++k) {
        leaf.push_back(leaf_data_conformal(foliation, rec, k));
    }
    return flatness_impl(rec, leaf);
}

FlatnessReport flatness_ricci(const RicciFlowTrajectory& trajectory,
                              const SolutionRecord& rec) {
    require_interior(rec, trajectory.grid(), 5);
    std::vector<LeafData> leaf;
    leaf.reserve(rec.size());
    for (std::size_t k = 0; k < rec.size(); ++k) {
        leaf.push_back(leaf_data_ricci(trajectory, rec, k));
    }
    return flatness_impl(rec, leaf);
}

}  // namespace qsphere
