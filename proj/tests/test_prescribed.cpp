/// @file test_prescribed.cpp
/// @brief Tests for the prescribed-curvature families: analytic evaluation,
///        extrema fast paths, tabulated interpolation with clamping, and the
///        nonnegativity flag the admissibility shortcuts rely on.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "qsphere/errors.hpp"
#include "qsphere/prescribed.hpp"
#include "qsphere/sphere.hpp"

using namespace qsphere;

TEST_CASE("zero kind is exactly zero and flagged as such") {
    GridPtr g = build_grid(16, 32);
    PrescribedCurvature r = PrescribedCurvature::zero();
    CHECK(r.is_zero());
    CHECK(r.spatially_uniform());
    CHECK(r.nonnegative());
    Field f = r.eval(g, 3.7);
    for (std::size_t k = 0; k < f.size(); ++k) CHECK(f[k] == 0.0);
    Extrema e = r.extrema(g, 3.7);
    CHECK(e.min == 0.0);
    CHECK(e.max == 0.0);
}

TEST_CASE("constant kind evaluates uniformly with sign-aware flags") {
    GridPtr g = build_grid(16, 32);
    PrescribedCurvature pos = PrescribedCurvature::constant(0.25);
    CHECK_FALSE(pos.is_zero());
    CHECK(pos.nonnegative());
    CHECK(pos.extrema(g, 1.0).min == 0.25);
    CHECK(pos.extrema(g, 9.0).max == 0.25);

    PrescribedCurvature neg = PrescribedCurvature::constant(-0.5);
    CHECK_FALSE(neg.nonnegative());
    Field f = neg.eval(g, 2.0);
    for (std::size_t k = 0; k < f.size(); ++k) CHECK(f[k] == -0.5);
}

TEST_CASE("inverse-power kind decays like amplitude / t^power") {
    GridPtr g = build_grid(16, 32);
    PrescribedCurvature r = PrescribedCurvature::inverse_power(3.0, 4.0);
    CHECK(r.nonnegative());
    for (double t : {1.0, 2.0, 10.0}) {
        double expect = 3.0 / std::pow(t, 4.0);
        Extrema e = r.extrema(g, t);
        CHECK(e.min == doctest::Approx(expect).epsilon(1e-15));
        CHECK(e.max == doctest::Approx(expect).epsilon(1e-15));
        Field f = r.eval(g, t);
        CHECK(f[0] == doctest::Approx(expect).epsilon(1e-15));
    }
    CHECK_FALSE(PrescribedCurvature::inverse_power(-1.0, 2.0).nonnegative());
}

TEST_CASE("tabulated kind interpolates in time and clamps outside the range") {
    GridPtr g = build_grid(16, 32);
    // Samples of the analytic profile s(t) = x * / t at t = 1, 2, 4, 8.
    std::vector<double> times{1.0, 2.0, 4.0, 8.0};
    std::vector<Field> fields;
    for (double t : times) {
        Field f(g);
        for (int i = 0; i < g->nlat(); ++i)
            for (int j = 0; j < g->nlon(); ++j) f.at(i, j) = g->x(i) / t;
        fields.push_back(f);
    }
    PrescribedCurvature r = PrescribedCurvature::tabulated(times, fields);
    CHECK_FALSE(r.spatially_uniform());
    CHECK_FALSE(r.nonnegative());  // x < 0 on the southern hemisphere

    // Exact at the sample times.
    Field at2 = r.eval(g, 2.0);
    for (int i = 0; i < g->nlat(); ++i)
        CHECK(at2.at(i, 0) == doctest::Approx(g->x(i) / 2.0).epsilon(1e-14));

    // Monotone-cubic accurate between samples (1/t is smooth and monotone).
    Field at3 = r.eval(g, 3.0);
    for (int i = 0; i < g->nlat(); ++i)
        CHECK(at3.at(i, 0) == doctest::Approx(g->x(i) / 3.0).epsilon(2e-2));

    // Clamped beyond the endpoints.
    Field lo = r.eval(g, 0.5), hi = r.eval(g, 100.0);
    for (int i = 0; i < g->nlat(); ++i) {
        CHECK(lo.at(i, 0) == doctest::Approx(g->x(i) / 1.0).epsilon(1e-14));
        CHECK(hi.at(i, 0) == doctest::Approx(g->x(i) / 8.0).epsilon(1e-14));
    }

    // Extrema agree with a direct scan of the evaluated field.
    Extrema e = r.extrema(g, 2.0);
    Extrema scan = field_extrema(at2);
    CHECK(e.min == doctest::Approx(scan.min).epsilon(1e-14));
    CHECK(e.max == doctest::Approx(scan.max).epsilon(1e-14));
}

TEST_CASE("tabulated kind validates construction and evaluation grids") {
    GridPtr g = build_grid(16, 32);
    Field f(g, 1.0);
    CHECK_THROWS_AS(PrescribedCurvature::tabulated({1.0}, {f}), ConfigError);
    CHECK_THROWS_AS(PrescribedCurvature::tabulated({2.0, 1.0}, {f, f}), ConfigError);

    PrescribedCurvature r = PrescribedCurvature::tabulated({1.0, 2.0}, {f, f});
    GridPtr other = build_grid(32, 64);
    CHECK_THROWS_AS(r.eval(other, 1.5), ConfigError);
}

TEST_CASE("tabulated nonnegativity is scanned at construction") {
    GridPtr g = build_grid(16, 32);
    Field pos(g, 0.5), tiny_neg(g, 0.5);
    tiny_neg.at(7, 9) = -1e-6;
    CHECK(PrescribedCurvature::tabulated({1.0, 2.0}, {pos, pos}).nonnegative());
    CHECK_FALSE(PrescribedCurvature::tabulated({1.0, 2.0}, {pos, tiny_neg}).nonnegative());
}

TEST_CASE("describe strings identify the family") {
    CHECK(PrescribedCurvature::zero().describe().find("zero") != std::string::npos);
    CHECK_FALSE(PrescribedCurvature::constant(2.0).describe().empty());
    CHECK_FALSE(PrescribedCurvature::inverse_power(1.0, 4.0).describe().empty());
}
