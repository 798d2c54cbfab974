/// @file test_audit.cpp
/// @brief Tests for the post-run verification layer: curvature closure,
///        mass series and ADM fits, Hawking drift, leaf geometry, and the
///        asymptotic-flatness report, against closed-form solutions.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "qsphere/audit.hpp"
#include "qsphere/conformal.hpp"
#include "qsphere/errors.hpp"
#include "qsphere/evolver.hpp"
#include "qsphere/prescribed.hpp"
#include "qsphere/ricci_flow.hpp"
#include "qsphere/sphere.hpp"

using namespace qsphere;

namespace {

/// Vacuum evolution from constant lapse c on the round background: the exact
/// Schwarzschild-exterior family with mass (1 - 1/c^2)/2.
SolutionRecord family_record(const GridPtr& g, double c, int snapshots, double ds) {
    ConformalFoliation fol = ConformalFoliation::round(g);
    EvolverControls ctl;
    ctl.ds = ds;
    ctl.snapshots = snapshots;
    return evolve_conformal(fol, PrescribedCurvature::zero(), Field(g, c), 20.0, ctl);
}

}  // namespace

TEST_CASE("curvature closure on the flat solution is at the stencil floor") {
    GridPtr g = build_grid(16, 32);
    ConformalFoliation fol = ConformalFoliation::round(g);
    EvolverControls ctl;
    ctl.snapshots = 129;
    SolutionRecord rec = evolve_conformal(fol, PrescribedCurvature::zero(),
                                          Field(g, 1.0), 20.0, ctl);
    CurvatureAudit audit = curvature_audit_conformal(fol, PrescribedCurvature::zero(), rec);
    INFO("flat closure worst = ", audit.worst);
    CHECK(audit.worst < 1e-6);
    REQUIRE(audit.t.size() == rec.size());
    for (std::size_t k = 0; k < audit.linf.size(); ++k)
        CHECK(audit.l2[k] <= audit.linf[k] + 1e-15);
}

TEST_CASE("curvature closure on the constant-lapse family") {
    GridPtr g = build_grid(16, 32);
    SolutionRecord rec = family_record(g, 0.8, 65, 0.008);
    ConformalFoliation fol = ConformalFoliation::round(g);
    CurvatureAudit audit = curvature_audit_conformal(fol, PrescribedCurvature::zero(), rec);
    INFO("family closure worst = ", audit.worst);  // measured 5.5e-5 at 65 snapshots
    CHECK(audit.worst < 1e-4);
}

TEST_CASE("closure improves as snapshots densify (stencil truncation)") {
    GridPtr g = build_grid(16, 32);
    ConformalFoliation fol = ConformalFoliation::round(g);
    double prev = 1e300;
    for (int snaps : {33, 65, 129}) {
        SolutionRecord rec = family_record(g, 0.8, snaps, 0.008);
        CurvatureAudit audit =
            curvature_audit_conformal(fol, PrescribedCurvature::zero(), rec);
        INFO("snapshots=", snaps, " worst=", audit.worst);
        CHECK(audit.worst < 0.2 * prev);  // at least ~2.3rd order in density
        prev = audit.worst;
    }
}

TEST_CASE("mass series on the family: exact constancy and coincident columns") {
    GridPtr g = build_grid(16, 32);
    const double c = 0.8;
    SolutionRecord rec = family_record(g, c, 65, 0.008);
    ConformalFoliation fol = ConformalFoliation::round(g);
    MassSeries series = mass_series_conformal(fol, rec);
    const double m_exact = (1.0 - 1.0 / (c * c)) / 2.0;
    REQUIRE(series.t.size() == rec.size());
    for (std::size_t k = 0; k < series.t.size(); ++k) {
        // Round background: no correction, and the Hawking evaluation
        // coincides with the flux integrand.
        CHECK(std::abs(series.correction[k]) < 1e-14);
        CHECK(series.hawking[k] == doctest::Approx(series.flux[k]).epsilon(1e-12));
        CHECK(series.estimator[k] == doctest::Approx(m_exact).epsilon(1e-7));
    }
}

TEST_CASE("adm fit recovers the family mass to stepper accuracy") {
    GridPtr g = build_grid(16, 32);
    const double c = 0.8;
    SolutionRecord rec = family_record(g, c, 65, 0.008);
    ConformalFoliation fol = ConformalFoliation::round(g);
    AdmFit fit = adm_mass_fit(mass_series_conformal(fol, rec));
    const double m_exact = (1.0 - 1.0 / (c * c)) / 2.0;  // -0.28125
    INFO("adm = ", fit.mass, " +- ", fit.uncertainty);
    CHECK(std::abs(fit.mass - m_exact) < 1e-9);
    CHECK(fit.uncertainty < 1e-9);
    CHECK(fit.window_ok);
    CHECK(fit.max_correction < 1e-14);
    CHECK(fit.first_index > 0);
}

TEST_CASE("adm fit rejects short or sparse records") {
    GridPtr g = build_grid(16, 32);
    ConformalFoliation fol = ConformalFoliation::round(g);
    EvolverControls ctl;
    ctl.snapshots = 33;
    SolutionRecord rec = evolve_conformal(fol, PrescribedCurvature::zero(),
                                          Field(g, 0.8), 8.0, ctl);
    CHECK_THROWS_AS(adm_mass_fit(mass_series_conformal(fol, rec)), ConfigError);
}

TEST_CASE("hawking drift on the round background is flat for the family") {
    GridPtr g = build_grid(16, 32);
    SolutionRecord rec = family_record(g, 0.8, 65, 0.008);
    ConformalFoliation fol = ConformalFoliation::round(g);
    DriftAudit drift = hawking_drift_round(fol, PrescribedCurvature::zero(), rec);
    INFO("min increment = ", drift.min_increment,
         " max residual = ", drift.max_residual);
    CHECK(drift.min_increment > -1e-11);  // mass is exactly constant
    CHECK(drift.max_residual < 1e-11);    // measured 3.5e-13
    REQUIRE(drift.increment.size() == rec.size() - 1);
}

TEST_CASE("hawking drift is genuinely nonnegative for positive curvature") {
    // With Rbar >= 0 the monotonicity identity has a nonnegative right-hand
    // side, so the mass must rise; residuals stay at trapezoid accuracy.
    GridPtr g = build_grid(16, 32);
    ConformalFoliation fol = ConformalFoliation::round(g);
    PrescribedCurvature rbar = PrescribedCurvature::inverse_power(0.5, 4.0);
    EvolverControls ctl;
    ctl.ds = 0.008;
    ctl.snapshots = 129;
    SolutionRecord rec = evolve_conformal(fol, rbar, Field(g, 1.0), 20.0, ctl);
    DriftAudit drift = hawking_drift_round(fol, rbar, rec);
    INFO("min increment = ", drift.min_increment,
         " max residual = ", drift.max_residual);
    CHECK(drift.min_increment > 0.0);
    CHECK(drift.max_residual < 1e-5);
    // Total mass gained matches the summed identity.
    CHECK(drift.mass.back() > drift.mass.front());
}

TEST_CASE("drift audit rejects non-round conformal backgrounds") {
    GridPtr g = build_grid(16, 32);
    Field prof(g);
    for (int i = 0; i < g->nlat(); ++i)
        for (int j = 0; j < g->nlon(); ++j)
            prof.at(i, j) = 0.05 * (3.0 * g->x(i) * g->x(i) - 1.0) / 2.0;
    ConformalFoliation fol =
        ConformalFoliation::separable(prof, TimeLawKind::inverse_power, 2.0);
    EvolverControls ctl;
    ctl.snapshots = 17;
    SolutionRecord rec = evolve_conformal(fol, PrescribedCurvature::zero(),
                                          Field(g, 1.0), 4.0, ctl);
    CHECK_THROWS_AS(hawking_drift_round(fol, PrescribedCurvature::zero(), rec),
                    ConfigError);
}

TEST_CASE("leaf data on the family matches the Schwarzschild formulas") {
    GridPtr g = build_grid(16, 32);
    const double c = 0.8;
    SolutionRecord rec = family_record(g, c, 33, 0.008);
    ConformalFoliation fol = ConformalFoliation::round(g);
    const double m = (1.0 - 1.0 / (c * c)) / 2.0;
    for (std::size_t k : {std::size_t(0), rec.size() / 2, rec.size() - 1}) {
        LeafData leaf = leaf_data_conformal(fol, rec, k);
        const double t = rec.times[k];
        const double w = 1.0 - 2.0 * m / t;
        // H = (2/t) sqrt(w),  |A|^2 = H^2 / 2,  R_leaf = 2/t^2, Lap u = 0.
        double errH = 0.0, errA = 0.0, errR = 0.0, errL = 0.0;
        for (std::size_t i = 0; i < leaf.H.size(); ++i) {
            errH = std::max(errH, std::abs(leaf.H[i] - 2.0 * std::sqrt(w) / t));
            errA = std::max(errA, std::abs(leaf.Asq[i] - 2.0 * w / (t * t)));
            errR = std::max(errR, std::abs(leaf.R_leaf[i] - 2.0 / (t * t)));
            errL = std::max(errL, std::abs(leaf.lap_u[i]));
        }
        INFO("t=", t, " errors H=", errH, " A=", errA, " R=", errR, " lap=", errL);
        CHECK(errH < 1e-7);
        CHECK(errA < 1e-7);
        CHECK(errR < 1e-13);
        CHECK(errL < 1e-9);
    }
}

TEST_CASE("flatness report: family decays like 1/t with t^-3 curvatures") {
    GridPtr g = build_grid(16, 32);
    const double c = 0.8;
    SolutionRecord rec = family_record(g, c, 65, 0.008);
    ConformalFoliation fol = ConformalFoliation::round(g);
    FlatnessReport rep = flatness_conformal(fol, rec);
    CHECK_FALSE(rep.identically_flat);

    // ||1 - w||_inf = |1/c^2 - 1| / t exactly: slope -1.
    INFO("slope_w = ", rep.slope_w.slope);
    CHECK(rep.slope_w.slope == doctest::Approx(-1.0).epsilon(0.02));
    CHECK(rep.slope_w.r2 > 0.999);

    // kappa_tan and ric_normal are +-2m/t^3 for the Schwarzschild exterior
    // (measured deviation 3.7e-13 at the final leaf).
    const double m = (1.0 - 1.0 / (c * c)) / 2.0;
    double err_kappa = 0.0, err_ric = 0.0;
    for (std::size_t k = 0; k < rep.t.size(); ++k) {
        double expect = 2.0 * std::abs(m) / std::pow(rep.t[k], 3.0);
        err_kappa = std::max(err_kappa, std::abs(rep.kappa_tan[k] - expect));
        err_ric = std::max(err_ric, std::abs(rep.ric_normal[k] - expect));
    }
    INFO("kappa error = ", err_kappa, " ric error = ", err_ric);
    CHECK(err_kappa < 1e-10);
    // ric_normal carries the five-point dH/dt stencil: truncation
    // ~ (dlog t)^4 ~ 5e-6 at 65 log-spaced snapshots; measured 1.22e-5.
    CHECK(err_ric < 1e-4);
    INFO("slope_kappa = ", rep.slope_kappa.slope);
    CHECK(rep.slope_kappa.slope < -2.5);
}

TEST_CASE("flatness report flags the flat solution and skips the fits") {
    GridPtr g = build_grid(16, 32);
    ConformalFoliation fol = ConformalFoliation::round(g);
    SolutionRecord rec = evolve_conformal(fol, PrescribedCurvature::zero(),
                                          Field(g, 1.0), 20.0);
    FlatnessReport rep = flatness_conformal(fol, rec);
    CHECK(rep.identically_flat);
    CHECK(rep.slope_w.n == 0);  // no fit attempted
    for (double v : rep.norm_w) CHECK(v < 1e-10);
}

TEST_CASE("flow-branch audits agree with conformal ones on the round vacuum") {
    GridPtr g = build_grid(16, 32);
    FlowControls fc;
    fc.n_samples = 65;
    RicciFlowTrajectory traj = run_flow(make_round(g), 20.0, fc);
    ConformalFoliation fol = ConformalFoliation::round(g);
    PrescribedCurvature rbar = PrescribedCurvature::zero();

    Field phi(g);
    for (int i = 0; i < g->nlat(); ++i)
        for (int j = 0; j < g->nlon(); ++j)
            phi.at(i, j) = 0.9 * (1.0 + 0.05 * (3.0 * g->x(i) * g->x(i) - 1.0) / 2.0);
    EvolverControls ctl;
    ctl.ds = 0.008;
    ctl.snapshots = 65;
    SolutionRecord rec_c = evolve_conformal(fol, rbar, phi, 20.0, ctl);
    SolutionRecord rec_r = evolve_ricci(traj, rbar, phi, 20.0, ctl);

    CurvatureAudit ca = curvature_audit_conformal(fol, rbar, rec_c);
    CurvatureAudit cr = curvature_audit_ricci(traj, rbar, rec_r);
    INFO("closure conformal = ", ca.worst, " flow = ", cr.worst);
    CHECK(std::abs(ca.worst - cr.worst) < 1e-5);

    MassSeries ms_c = mass_series_conformal(fol, rec_c);
    MassSeries ms_r = mass_series_ricci(traj, rec_r);
    for (std::size_t k = 0; k < ms_c.t.size(); ++k) {
        CHECK(ms_c.hawking[k] == doctest::Approx(ms_r.hawking[k]).epsilon(1e-8));
        CHECK(std::abs(ms_r.correction[k]) < 1e-14);  // identically zero on flow
    }

    DriftAudit dr = hawking_drift_ricci(traj, rbar, rec_r);
    DriftAudit dc = hawking_drift_round(fol, rbar, rec_c);
    CHECK(std::abs(dr.max_residual - dc.max_residual) < 1e-8);
}

TEST_CASE("audits reject scaled and undersampled records") {
    GridPtr g = build_grid(16, 32);
    ConformalFoliation fol = ConformalFoliation::round(g);
    PrescribedCurvature rbar = PrescribedCurvature::zero();

    SolutionRecord scaled;
    scaled.horizon_scaled = true;
    scaled.grid = g;
    scaled.times = {0.1, 0.2, 0.4, 0.8, 1.6};
    scaled.u.assign(5, Field(g, 1.0));
    CHECK_THROWS_AS(curvature_audit_conformal(fol, rbar, scaled), ConfigError);

    EvolverControls ctl;
    ctl.snapshot_times = {1.0, 2.0, 4.0};
    ctl.ds = 0.01;
    SolutionRecord sparse = evolve_conformal(fol, rbar, Field(g, 1.0), 4.0, ctl);
    CHECK_THROWS_AS(curvature_audit_conformal(fol, rbar, sparse), ConfigError);
}
