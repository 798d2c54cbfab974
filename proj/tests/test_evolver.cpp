/// @file test_evolver.cpp
/// @brief Tests for the parabolic lapse solver: right-hand-side identities,
///        closed-form oracles, variable/stepper/branch cross agreement, the
///        horizon ladder, guards, and determinism.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "qsphere/conformal.hpp"
#include "qsphere/errors.hpp"
#include "qsphere/evolver.hpp"
#include "qsphere/prescribed.hpp"
#include "qsphere/ricci_flow.hpp"
#include "qsphere/sphere.hpp"

using namespace qsphere;

namespace {

Field harmonic_lapse(const GridPtr& g, double value, double pert) {
    // value * (1 + pert * P2(cos theta)): smooth, strictly positive for
    // |pert| < 1, genuinely nonuniform so diffusion terms are exercised.
    Field f(g);
    for (int i = 0; i < g->nlat(); ++i) {
        double p2 = 0.5 * (3.0 * g->x(i) * g->x(i) - 1.0);
        for (int j = 0; j < g->nlon(); ++j) f.at(i, j) = value * (1.0 + pert * p2);
    }
    return f;
}

double sup_diff(const Field& a, const Field& b) { return linf_diff(a, b); }

}  // namespace

TEST_CASE("truncate_band removes exactly the high harmonics") {
    GridPtr g = build_grid(16, 32);
    SpectralCoeffs c(g);
    c.ref(2, 1) = {1.0, 0.3};
    c.ref(9, 4) = {0.5, -0.2};
    Field f = inverse(c);
    Field cut = truncate_band(f, 4);
    SpectralCoeffs back = forward(cut);
    CHECK(std::abs(back.at(2, 1) - std::complex<double>{1.0, 0.3}) < 1e-12);
    CHECK(std::abs(back.at(9, 4)) < 1e-13);
    // No-op above the band limit, idempotent below it.
    CHECK(sup_diff(truncate_band(f, g->lmax()), f) < 1e-13);
    CHECK(sup_diff(truncate_band(cut, 4), cut) < 1e-13);
}

TEST_CASE("rhs formulations are images of one another under the chain rule") {
    // w = u^{-2}:  dw/dt = -2 u^{-3} du/dt
    // m = (t/2)(1 - w):  dm/dt = (1 - w)/2 - (t/2) dw/dt
    GridPtr g = build_grid(16, 32);
    ConformalFoliation fol =
        ConformalFoliation::separable(harmonic_lapse(g, 0.05, 1.0),
                                      TimeLawKind::inverse_power, 2.0);
    PrescribedCurvature rbar = PrescribedCurvature::inverse_power(1.0, 4.0);
    Field u = harmonic_lapse(g, 0.9, 0.1);
    const double t = 1.7;

    Field w(g), m(g);
    for (std::size_t k = 0; k < u.size(); ++k) {
        w[k] = 1.0 / (u[k] * u[k]);
        m[k] = (t / 2.0) * (1.0 - w[k]);
    }
    Field du = conformal_rhs(fol, rbar, DependentVariable::lapse, u, t);
    Field dw = conformal_rhs(fol, rbar, DependentVariable::inverse_square, w, t);
    Field dm = conformal_rhs(fol, rbar, DependentVariable::mass_aspect, m, t);

    double err_w = 0.0, err_m = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        double dw_chain = -2.0 * du[k] / (u[k] * u[k] * u[k]);
        err_w = std::max(err_w, std::abs(dw[k] - dw_chain));
        double dm_chain = 0.5 * (1.0 - w[k]) - (t / 2.0) * dw[k];
        err_m = std::max(err_m, std::abs(dm[k] - dm_chain));
    }
    INFO("chain-rule residuals: w ", err_w, "  m ", err_m);
    // The w-form multiplies the transform noise by u^-3 (measured 1.4e-10).
    CHECK(err_w < 1e-9);
    CHECK(err_m < 1e-10);
}

TEST_CASE("rhs closed form for constant lapse on the round vacuum background") {
    // P = 1/t, lap u = 0, R_f = 2:  du/dt = c (1 - c^2) / (2 t).
    GridPtr g = build_grid(16, 32);
    ConformalFoliation fol = ConformalFoliation::round(g);
    PrescribedCurvature rbar = PrescribedCurvature::zero();
    for (double c : {0.5, 0.8, 1.0, 1.3}) {
        for (double t : {1.0, 2.5, 10.0}) {
            Field u(g, c);
            Field du = conformal_rhs(fol, rbar, DependentVariable::lapse, u, t);
            double expect = c * (1.0 - c * c) / (2.0 * t);
            double err = 0.0;
            for (std::size_t k = 0; k < du.size(); ++k)
                err = std::max(err, std::abs(du[k] - expect));
            INFO("c=", c, " t=", t, " err=", err);
            CHECK(err < 1e-10);  // u^2 lap u contributes c^3-scaled noise
        }
    }
}

TEST_CASE("flow-branch rhs agrees with the conformal one on a round trajectory") {
    GridPtr g = build_grid(16, 32);
    FlowControls fc;
    fc.n_samples = 33;
    RicciFlowTrajectory traj = run_flow(make_round(g), 8.0, fc);
    ConformalFoliation fol = ConformalFoliation::round(g);
    PrescribedCurvature rbar = PrescribedCurvature::inverse_power(0.5, 4.0);
    Field u = harmonic_lapse(g, 0.9, 0.1);
    for (double t : {1.0, 2.0, 7.5}) {
        Field a = ricci_rhs(traj, rbar, DependentVariable::lapse, u, t);
        Field b = conformal_rhs(fol, rbar, DependentVariable::lapse, u, t);
        double err = sup_diff(a, b);
        INFO("t=", t, " branch rhs difference=", err);
        CHECK(err < 1e-10);
    }
}

TEST_CASE("the flat solution is a fixed point of the evolution") {
    GridPtr g = build_grid(16, 32);
    ConformalFoliation fol = ConformalFoliation::round(g);
    SolutionRecord rec = evolve_conformal(fol, PrescribedCurvature::zero(),
                                          Field(g, 1.0), 20.0);
    REQUIRE(rec.size() >= 5);
    double err = 0.0;
    for (std::size_t k = 0; k < rec.size(); ++k)
        err = std::max(err, std::abs(linf_norm(rec.u[k]) - 1.0));
    INFO("flat drift = ", err);
    CHECK(err < 1e-13);
    CHECK(rec.times.front() == 1.0);
    CHECK(rec.times.back() == doctest::Approx(20.0));
}

TEST_CASE("constant initial lapse: mass aspect is conserved to 1e-8") {
    // Exact solution of the vacuum round problem: m = (1 - 1/c^2)/2 for all
    // time, i.e. w(t) = 1 + (1/c^2 - 1)/t.
    GridPtr g = build_grid(16, 32);
    ConformalFoliation fol = ConformalFoliation::round(g);
    const double c = 0.8;
    const double m_exact = (1.0 - 1.0 / (c * c)) / 2.0;
    EvolverControls ctl;
    ctl.ds = 0.008;
    ctl.snapshots = 33;
    SolutionRecord rec =
        evolve_conformal(fol, PrescribedCurvature::zero(), Field(g, c), 20.0, ctl);
    double err = 0.0;
    for (std::size_t k = 0; k < rec.size(); ++k) {
        Field m = rec.m(k);
        for (std::size_t i = 0; i < m.size(); ++i)
            err = std::max(err, std::abs(m[i] - m_exact));
    }
    INFO("mass-aspect drift = ", err, " (m_exact = ", m_exact, ")");
    CHECK(err < 1e-8);
}

TEST_CASE("rk4 converges at fourth order on the constant-lapse solution") {
    GridPtr g = build_grid(16, 32);
    ConformalFoliation fol = ConformalFoliation::round(g);
    const double c = 0.9, t_end = 4.0;
    auto final_error = [&](double ds) {
        EvolverControls ctl;
        ctl.ds = ds;
        ctl.snapshots = 5;
        SolutionRecord rec =
            evolve_conformal(fol, PrescribedCurvature::zero(), Field(g, c), t_end, ctl);
        Field w = rec.w(rec.size() - 1);
        double exact = 1.0 + (1.0 / (c * c) - 1.0) / t_end;
        double err = 0.0;
        for (std::size_t k = 0; k < w.size(); ++k)
            err = std::max(err, std::abs(w[k] - exact));
        return err;
    };
    double e0 = final_error(0.016), e1 = final_error(0.008), e2 = final_error(0.004);
    double p01 = std::log2(e0 / e1), p12 = std::log2(e1 / e2);
    INFO("errors ", e0, " ", e1, " ", e2, " orders ", p01, " ", p12);
    CHECK(p01 > 3.8);
    CHECK(p12 > 3.8);
}

TEST_CASE("the three dependent variables integrate to the same solution") {
    GridPtr g = build_grid(16, 32);
    ConformalFoliation fol = ConformalFoliation::round(g);
    PrescribedCurvature rbar = PrescribedCurvature::inverse_power(0.5, 4.0);
    Field phi = harmonic_lapse(g, 0.9, 0.1);
    EvolverControls ctl;
    ctl.ds = 0.004;
    ctl.snapshots = 9;

    std::vector<SolutionRecord> recs;
    for (DependentVariable v : {DependentVariable::lapse, DependentVariable::inverse_square,
                                DependentVariable::mass_aspect}) {
        EvolverControls c2 = ctl;
        c2.variable = v;
        recs.push_back(evolve_conformal(fol, rbar, phi, 4.0, c2));
    }
    double err_uw = 0.0, err_um = 0.0;
    for (std::size_t k = 0; k < recs[0].size(); ++k) {
        err_uw = std::max(err_uw, sup_diff(recs[0].u[k], recs[1].u[k]));
        err_um = std::max(err_um, sup_diff(recs[0].u[k], recs[2].u[k]));
    }
    INFO("variable cross-agreement: u-w ", err_uw, "  u-m ", err_um);
    CHECK(err_uw < 1e-9);
    CHECK(err_um < 1e-9);
}

TEST_CASE("imex stepper tracks rk4 on a smooth nonuniform problem") {
    GridPtr g = build_grid(16, 32);
    ConformalFoliation fol = ConformalFoliation::round(g);
    PrescribedCurvature rbar = PrescribedCurvature::zero();
    Field phi = harmonic_lapse(g, 0.9, 0.1);

    EvolverControls a;
    a.ds = 0.004;
    a.snapshots = 5;
    SolutionRecord rk = evolve_conformal(fol, rbar, phi, 4.0, a);

    EvolverControls b = a;
    b.stepper = Stepper::imex_sbdf2;
    SolutionRecord imex = evolve_conformal(fol, rbar, phi, 4.0, b);

    REQUIRE(rk.size() == imex.size());
    double err = 0.0;
    for (std::size_t k = 0; k < rk.size(); ++k)
        err = std::max(err, sup_diff(rk.u[k], imex.u[k]));
    INFO("imex vs rk4 sup difference = ", err);
    CHECK(err < 1e-5);  // second- vs fourth-order stepper at ds = 0.004
    CHECK(imex.stepper == Stepper::imex_sbdf2);
}

TEST_CASE("conformal and flow branches agree on the round vacuum problem") {
    GridPtr g = build_grid(16, 32);
    FlowControls fc;
    fc.n_samples = 65;
    RicciFlowTrajectory traj = run_flow(make_round(g), 4.0, fc);
    ConformalFoliation fol = ConformalFoliation::round(g);
    PrescribedCurvature rbar = PrescribedCurvature::zero();
    Field phi = harmonic_lapse(g, 0.9, 0.1);
    EvolverControls ctl;
    ctl.ds = 0.01;
    ctl.snapshots = 9;

    SolutionRecord a = evolve_conformal(fol, rbar, phi, 4.0, ctl);
    SolutionRecord b = evolve_ricci(traj, rbar, phi, 4.0, ctl);
    REQUIRE(a.size() == b.size());
    double err = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
        err = std::max(err, sup_diff(a.u[k], b.u[k]));
    INFO("branch agreement = ", err);
    CHECK(err < 1e-9);
}

TEST_CASE("explicit snapshot grids are honored, including the start time") {
    GridPtr g = build_grid(16, 32);
    ConformalFoliation fol = ConformalFoliation::round(g);
    EvolverControls ctl;
    ctl.ds = 0.01;
    ctl.snapshot_times = {1.5, 2.0, 3.0};
    SolutionRecord rec =
        evolve_conformal(fol, PrescribedCurvature::zero(), Field(g, 0.9), 3.0, ctl);
    REQUIRE(rec.size() == 3);
    CHECK(rec.times[0] == 1.5);
    CHECK(rec.times[1] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(rec.times[2] == doctest::Approx(3.0).epsilon(1e-12));
    // Initial data is imposed on the first leaf.
    CHECK(sup_diff(rec.u[0], Field(g, 0.9)) < 1e-15);
}

TEST_CASE("solution record derives w and m consistently with the traces") {
    GridPtr g = build_grid(16, 32);
    ConformalFoliation fol = ConformalFoliation::round(g);
    SolutionRecord rec = evolve_conformal(fol, PrescribedCurvature::zero(),
                                          harmonic_lapse(g, 0.9, 0.1), 4.0);
    std::vector<double> wmin = rec.w_min_trace(), wmax = rec.w_max_trace();
    REQUIRE(wmin.size() == rec.size());
    for (std::size_t k = 0; k < rec.size(); ++k) {
        Field w = rec.w(k);
        Field m = rec.m(k);
        Extrema e = field_extrema(w);
        CHECK(wmin[k] == e.min);
        CHECK(wmax[k] == e.max);
        double err = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            double u = rec.u[k][i];
            err = std::max(err, std::abs(w[i] - 1.0 / (u * u)));
            err = std::max(err,
                           std::abs(m[i] - (rec.times[k] / 2.0) * (1.0 - w[i])));
        }
        CHECK(err < 1e-15);
    }
}

TEST_CASE("admissibility guard: throw, allow-and-record, and pass") {
    GridPtr g = build_grid(16, 32);
    ConformalFoliation fol = ConformalFoliation::round(g);
    PrescribedCurvature rbar = PrescribedCurvature::zero();
    EvolverControls ctl;
    ctl.ds = 0.05;
    ctl.admissibility_K = 4.0;  // requires max(phi) < 0.5

    CHECK_THROWS_AS(
        evolve_conformal(fol, rbar, Field(g, 0.6), 2.0, ctl), HypothesisError);

    EvolverControls allow = ctl;
    allow.allow_k_violation = true;
    SolutionRecord rec = evolve_conformal(fol, rbar, Field(g, 0.6), 2.0, allow);
    CHECK(rec.k_violation);
    CHECK(rec.k_value == 4.0);

    SolutionRecord ok = evolve_conformal(fol, rbar, Field(g, 0.4), 2.0, ctl);
    CHECK_FALSE(ok.k_violation);
}

TEST_CASE("positivity loss raises a numerics error") {
    // Strongly positive prescribed curvature drives the mass aspect up until
    // w = 1 - 2m/t crosses the positivity floor.
    GridPtr g = build_grid(16, 32);
    ConformalFoliation fol = ConformalFoliation::round(g);
    CHECK_THROWS_AS(evolve_conformal(fol, PrescribedCurvature::constant(20.0),
                                     Field(g, 1.0), 20.0),
                    NumericsError);
}

TEST_CASE("input validation") {
    GridPtr g = build_grid(16, 32);
    ConformalFoliation fol = ConformalFoliation::round(g);
    PrescribedCurvature rbar = PrescribedCurvature::zero();
    CHECK_THROWS_AS(evolve_conformal(fol, rbar, Field(g, 1.0), 0.5), ConfigError);
    GridPtr other = build_grid(32, 64);
    CHECK_THROWS_AS(evolve_conformal(fol, rbar, Field(other, 1.0), 4.0), ConfigError);
    CHECK_THROWS_AS(evolve_conformal(fol, rbar, Field(g, -1.0), 4.0), ConfigError);
}

TEST_CASE("two identical runs produce bitwise identical snapshots") {
    GridPtr g = build_grid(16, 32);
    ConformalFoliation fol = ConformalFoliation::round(g);
    PrescribedCurvature rbar = PrescribedCurvature::inverse_power(0.5, 4.0);
    Field phi = harmonic_lapse(g, 0.9, 0.1);
    SolutionRecord a = evolve_conformal(fol, rbar, phi, 8.0);
    SolutionRecord b = evolve_conformal(fol, rbar, phi, 8.0);
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k)
        CHECK(a.u[k].values() == b.u[k].values());
}

TEST_CASE("dealiasing keeps the solution inside the requested band") {
    GridPtr g = build_grid(16, 32);
    ConformalFoliation fol = ConformalFoliation::round(g);
    EvolverControls ctl;
    ctl.ds = 0.01;
    ctl.dealias_lcut = 6;
    SolutionRecord rec = evolve_conformal(fol, PrescribedCurvature::zero(),
                                          harmonic_lapse(g, 0.9, 0.1), 4.0, ctl);
    SpectralCoeffs c = forward(rec.u.back());
    double high = 0.0;
    for (int l = 7; l <= g->lmax(); ++l)
        for (int m = 0; m <= l; ++m) high = std::max(high, std::abs(c.at(l, m)));
    CHECK(high < 1e-13);
}

TEST_CASE("transport of a scaled record back to interior time") {
    GridPtr g = build_grid(16, 32);
    SolutionRecord scaled;
    scaled.branch = EnvelopeBranch::conformal;
    scaled.horizon_scaled = true;
    scaled.grid = g;
    scaled.times = {0.5, 1.0};
    scaled.u = {Field(g, 2.0), Field(g, 3.0)};

    SolutionRecord interior = transport_scaled_record(scaled);
    REQUIRE(interior.size() == 2);
    CHECK_FALSE(interior.horizon_scaled);
    CHECK(interior.times[0] == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(interior.times[1] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(interior.u[0][0] == doctest::Approx(std::sqrt(1.5 / 0.5) * 2.0).epsilon(1e-15));
    CHECK(interior.u[1][0] == doctest::Approx(std::sqrt(2.0 / 1.0) * 3.0).epsilon(1e-15));

    // tau_min filters early snapshots.
    scaled.times = {0.25, 0.5, 1.0};
    scaled.u = {Field(g, 1.0), Field(g, 2.0), Field(g, 3.0)};
    SolutionRecord tail = transport_scaled_record(scaled, 0.4);
    REQUIRE(tail.size() == 2);
    CHECK(tail.times[0] == doctest::Approx(1.5));

    SolutionRecord not_scaled;
    not_scaled.grid = g;
    not_scaled.times = {1.0, 2.0};
    not_scaled.u = {Field(g, 1.0), Field(g, 1.0)};
    CHECK_THROWS_AS(transport_scaled_record(not_scaled), ConfigError);
}

TEST_CASE("horizon ladder on the round vacuum recovers the exact limit") {
    // The unscaled extrapolated solution must satisfy w = (t - 1)/t; the
    // measured deviation of the default ladder at nlat 16 is 9.6e-10.
    GridPtr g = build_grid(16, 32);
    ConformalFoliation fol = ConformalFoliation::round(g);
    HorizonControls hc;
    hc.t_end = 19.0;  // interior times reach 20
    HorizonResult hz = horizon_evolve_conformal(fol, PrescribedCurvature::zero(), hc);

    CHECK(hz.scaled.horizon_scaled);
    CHECK_FALSE(hz.unscaled.horizon_scaled);
    REQUIRE(hz.members.size() == hc.epsilons.size());

    double err = 0.0;
    for (std::size_t k = 0; k < hz.unscaled.size(); ++k) {
        double t = hz.unscaled.times[k];
        Field w = hz.unscaled.w(k);
        for (std::size_t i = 0; i < w.size(); ++i)
            err = std::max(err, std::abs(w[i] - (t - 1.0) / t));
    }
    INFO("extrapolated deviation from (t-1)/t = ", err);
    CHECK(err < 1e-6);

    // Window audit: the shifted data brackets the expected mass window.
    CHECK(hz.window_pass);
    CHECK(hz.mass_bracket_worst < 1e-9);
    CHECK(hz.eta_used > 0.0);
    CHECK(hz.eta_used < 1.0);

    // Ladder deviations shrink monotonically -- except that the round
    // vacuum members coincide up to roundoff (the scaled solution is
    // identically 1 for every start time), so allow the 1e-12 floor.
    REQUIRE(hz.member_deviation.size() >= 2);
    for (std::size_t k = 1; k < hz.member_deviation.size(); ++k) {
        bool shrinking = hz.member_deviation[k] < hz.member_deviation[k - 1];
        bool at_floor = hz.member_deviation[k] < 1e-12;
        CHECK((shrinking || at_floor));
    }

    // Each member is an exact solution: transported back it starts at
    // t = 1 + eps with the degenerate-start data profile.
    SolutionRecord member = transport_scaled_record(hz.members.back());
    CHECK(member.times.front() == doctest::Approx(1.0 + hc.epsilons.back()).epsilon(1e-12));
}
