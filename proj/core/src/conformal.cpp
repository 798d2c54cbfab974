/// @file conformal.cpp
/// @brief Conformal foliation families, conformal geometry operators, and the
///        quantitative hypothesis audit.

#include "qsphere/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "qsphere/errors.hpp"
#include "qsphere/numerics.hpp"
#include "qsphere/qsf_io.hpp"

namespace qsphere {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

// ============================================================================
// Time laws for separable foliations
// ============================================================================

namespace {

struct TimeLawValues {
    double h, h1, h2;  // h(t), h'(t), h''(t)
};

TimeLawValues time_law(TimeLawKind law, double power, double t) {
    switch (law) {
        case TimeLawKind::inverse_power: {
            const double h = std::pow(t, -power);
            return {h, -power * h / t, power * (power + 1.0) * h / (t * t)};
        }
        case TimeLawKind::log_time:
            return {std::log(t), 1.0 / t, -1.0 / (t * t)};
        case TimeLawKind::constant:
            return {1.0, 0.0, 0.0};
    }
    throw ConfigError("conformal foliation: unknown time law");
}

const char* time_law_name(TimeLawKind law) {
    switch (law) {
        case TimeLawKind::inverse_power: return "inverse-power";
        case TimeLawKind::log_time: return "log";
        case TimeLawKind::constant: return "constant";
    }
    return "unknown";
}

}  // namespace

// ============================================================================
// Tabulated storage
// ============================================================================

struct ConformalFoliation::Table {
    std::vector<double> times;
    std::vector<Pchip> node;  // one interpolant per grid node
};

// ============================================================================
// Factories
// ============================================================================

ConformalFoliation ConformalFoliation::round(GridPtr grid) {
    if (!grid) throw ConfigError("conformal foliation: null grid");
    ConformalFoliation fol(std::move(grid));
    fol.kind_ = Kind::round_kind;
    return fol;
}

ConformalFoliation ConformalFoliation::separable(Field profile, TimeLawKind law, double power) {
    ConformalFoliation fol(profile.grid());
    fol.kind_ = Kind::separable_kind;
    fol.profile_ = std::make_shared<Field>(std::move(profile));
    fol.law_ = law;
    if (law == TimeLawKind::inverse_power && !(power > 0.0)) {
        throw ConfigError("conformal foliation: inverse-power law needs power > 0");
    }
    fol.power_ = power;
    return fol;
}

ConformalFoliation ConformalFoliation::tabulated(std::vector<double> times,
                                                 std::vector<Field> fields) {
    if (times.size() < 4 || times.size() != fields.size()) {
        throw ConfigError("conformal foliation: tabulated kind needs >= 4 samples with "
                          "matching times/fields counts");
    }
    for (std::size_t k = 1; k < times.size(); ++k) {
        if (!(times[k] > times[k - 1])) {
            throw ConfigError("conformal foliation: tabulated times must be strictly increasing");
        }
    }
    const GridPtr grid = fields.front().grid();
    for (const Field& f : fields) {
        if (f.grid() != grid) {
            throw ConfigError("conformal foliation: tabulated fields must share one grid");
        }
    }

    auto table = std::make_shared<Table>();
    table->times = times;
    table->node.reserve(grid->size());
    std::vector<double> y(times.size());
    for (std::size_t i = 0; i < std::size_t(grid->size()); ++i) {
        for (std::size_t k = 0; k < times.size(); ++k) y[k] = fields[k][i];
        table->node.emplace_back(times, y);
    }

    ConformalFoliation fol(grid);
    fol.kind_ = Kind::tabulated_kind;
    fol.table_ = std::move(table);
    return fol;
}

// ============================================================================
// Sampling
// ============================================================================

double ConformalFoliation::t_min() const {
    return kind_ == Kind::tabulated_kind ? table_->times.front() : 1.0;
}

double ConformalFoliation::t_max() const {
    return kind_ == Kind::tabulated_kind ? table_->times.back()
                                         : std::numeric_limits<double>::infinity();
}

FoliationSample ConformalFoliation::sample_unchecked(double t) const {
    switch (kind_) {
        case Kind::round_kind:
            return {Field(grid_, 0.0), Field(grid_, 0.0), Field(grid_, 0.0)};
        case Kind::separable_kind: {
            const TimeLawValues h = time_law(law_, power_, t);
            Field f(grid_), f_t(grid_), f_tt(grid_);
            const Field& p = *profile_;
            for (std::size_t i = 0; i < p.size(); ++i) {
                f[i] = p[i] * h.h;
                f_t[i] = p[i] * h.h1;
                f_tt[i] = p[i] * h.h2;
            }
            return {std::move(f), std::move(f_t), std::move(f_tt)};
        }
        case Kind::tabulated_kind: {
            if (t < table_->times.front() - 1e-12 || t > table_->times.back() + 1e-12) {
                char buf[160];
                std::snprintf(buf, sizeof buf,
                              "conformal foliation: t = %.17g outside tabulated range "
                              "[%.17g, %.17g]", t, table_->times.front(), table_->times.back());
                throw ConfigError(buf);
            }
            Field f(grid_), f_t(grid_), f_tt(grid_);
            for (std::size_t i = 0; i < std::size_t(grid_->size()); ++i) {
                const Pchip& p = table_->node[i];
                f[i] = p.value(t);
                f_t[i] = p.derivative(t);
                f_tt[i] = p.second_derivative(t);
            }
            return {std::move(f), std::move(f_t), std::move(f_tt)};
        }
    }
    throw ConfigError("conformal foliation: unknown kind");
}

FoliationSample ConformalFoliation::sample(double t) const {
    FoliationSample s = sample_unchecked(t);
    if (kind_ != Kind::round_kind) {
        double lo = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < s.f_t.size(); ++i) lo = std::min(lo, s.f_t[i]);
        const double min_p = 1.0 + t * lo;
        if (!(min_p > 0.0)) {
            char buf[160];
            std::snprintf(buf, sizeof buf,
                          "foliation parabolicity violated: min(1 + t df/dt) = %.6g at t = %.6g",
                          min_p, t);
            throw HypothesisError(buf);
        }
    }
    return s;
}

std::string ConformalFoliation::describe() const {
    char buf[160];
    switch (kind_) {
        case Kind::round_kind:
            return "round (f = 0)";
        case Kind::separable_kind: {
            const Extrema e = field_extrema(*profile_);
            if (law_ == TimeLawKind::inverse_power) {
                std::snprintf(buf, sizeof buf,
                              "separable: profile in [%.6g, %.6g], law t^-%g",
                              e.min, e.max, power_);
            } else {
                std::snprintf(buf, sizeof buf, "separable: profile in [%.6g, %.6g], law %s",
                              e.min, e.max, time_law_name(law_));
            }
            return buf;
        }
        case Kind::tabulated_kind:
            std::snprintf(buf, sizeof buf, "tabulated: %zu samples on [%.17g, %.17g]",
                          table_->times.size(), table_->times.front(), table_->times.back());
            return buf;
    }
    return "unknown";
}

// ============================================================================
// Conformal geometry operators
// ============================================================================

Field conformal_scalar_curvature(const Field& f) {
    // R_f = 2 e^{-2f} (1 - lap_sigma f): the curvature of e^{2f} sigma.
    Field lap = laplacian_sigma(f);
    Field out(f.grid());
    for (std::size_t i = 0; i < f.size(); ++i) {
        out[i] = 2.0 * std::exp(-2.0 * f[i]) * (1.0 - lap[i]);
    }
    return out;
}

Field conformal_laplacian(const Field& x, const Field& f) {
    if (x.grid() != f.grid()) {
        throw ConfigError("conformal_laplacian: operand grids differ");
    }
    Field lap = laplacian_sigma(x);
    for (std::size_t i = 0; i < lap.size(); ++i) lap[i] *= std::exp(-2.0 * f[i]);
    return lap;
}

double gauss_bonnet_residual(const Field& f) {
    // Total curvature of (S^2, e^{2f} sigma): the area element is e^{2f} dsigma,
    // so the integrand collapses to 2(1 - lap f) and the defect is a pure
    // transform round-trip measurement.
    const Field rf = conformal_scalar_curvature(f);
    Field integrand(f.grid());
    for (std::size_t i = 0; i < f.size(); ++i) {
        integrand[i] = rf[i] * std::exp(2.0 * f[i]);
    }
    return integrate_sigma(integrand) - 8.0 * std::acos(-1.0);
}

// ============================================================================
// Hypothesis audit
// ============================================================================

bool HypothesisReport::all_pass() const {
    for (const ConditionRecord& c : conditions) {
        if (c.status != ConditionStatus::pass) return false;
    }
    return !conditions.empty();
}

const ConditionRecord* HypothesisReport::find(const std::string& name) const {
    for (const ConditionRecord& c : conditions) {
        if (c.name == name) return &c;
    }
    return nullptr;
}

namespace {

// Shared tail-fit rule for the L^1 conditions: integrand samples q(t) >= 0 on
// log-spaced t.  "Integrable" is declared from the tail decay rate: q ~ t^p
// with p < -1.  Values at or below `floor` count as exact zeros.
void classify_l1(ConditionRecord& rec, const std::vector<double>& t,
                 const std::vector<double>& q, double floor) {
    // Evidence: the accumulated integral over the sampled range.
    double integral = 0.0;
    for (std::size_t i = 1; i < t.size(); ++i) {
        integral += 0.5 * (q[i] + q[i - 1]) * (t[i] - t[i - 1]);
    }
    rec.evidence = integral;

    double qmax = 0.0;
    for (double v : q) qmax = std::max(qmax, v);
    if (qmax <= floor) {
        rec.status = ConditionStatus::pass;
        rec.note = "integrand identically zero (below floor)";
        rec.slope = 0.0;
        rec.r2 = 1.0;
        return;
    }

    // Tail window: last decade of the sampled range.
    std::vector<double> tt, qq;
    const double t_lo = t.back() / 10.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] >= t_lo) { tt.push_back(t[i]); qq.push_back(q[i]); }
    }
    const LinearFit fit = loglog_fit(tt, qq, floor);
    if (fit.n < 3) {
        // The tail already sank below the floor: decay fast enough to integrate.
        rec.status = ConditionStatus::pass;
        rec.note = "tail below floor";
        rec.slope = -std::numeric_limits<double>::infinity();
        rec.r2 = 1.0;
        return;
    }
    rec.slope = fit.slope;
    rec.r2 = fit.r2;
    if (fit.r2 < 0.9) {
        rec.status = ConditionStatus::indeterminate;
        rec.note = "tail is not a clean power law (R^2 < 0.9)";
    } else if (fit.slope < -1.0) {
        rec.status = ConditionStatus::pass;
        rec.note = "tail decays faster than 1/t";
    } else {
        rec.status = ConditionStatus::fail;
        rec.note = "tail decay too slow for integrability";
    }
}

// C^2-type grid norm of a field with an externally supplied scale-invariant
// time derivative: ||v|| + ||grad v|| + ||hess v|| + ||t dv/dt||.
double c2_norm(const Field& v, const Field& t_dv_dt) {
    double n0 = 0.0, n1 = 0.0, n2 = 0.0, nt = 0.0;
    const Gradient g = gradient_sigma(v);
    const Hessian h = hessian_sigma(v);
    for (std::size_t i = 0; i < v.size(); ++i) {
        n0 = std::max(n0, std::abs(v[i]));
        n1 = std::max(n1, std::hypot(g.dtheta[i], g.dphi[i]));
        const double fro = std::sqrt(h.tt[i] * h.tt[i] + 2.0 * h.tp[i] * h.tp[i] +
                                     h.pp[i] * h.pp[i]);
        n2 = std::max(n2, fro);
        nt = std::max(nt, std::abs(t_dv_dt[i]));
    }
    return n0 + n1 + n2 + nt;
}

}  // namespace

HypothesisReport hypothesis_report(const ConformalFoliation& foliation,
                                   const PrescribedCurvature& rbar,
                                   double t_max, int samples) {
    const GridPtr& grid = foliation.grid();
    if (!(t_max >= 4.0)) {
        throw ConfigError("hypothesis_report: need t_max >= 4 to resolve decay rates");
    }
    std::string range_note;
    if (t_max > foliation.t_max()) {
        t_max = foliation.t_max();
        range_note = "t_max clamped to the foliation's tabulated range; ";
    }
    const double t_lo = std::max(1.0, foliation.t_min());
    if (!(t_max > t_lo * 1.5)) {
        throw ConfigError("hypothesis_report: sampled range too short");
    }

    const int n = std::max(samples, 24);
    const int refine = 4;                     // extra nodes for the AF integrals
    const int n_fine = refine * (n - 1) + 1;
    const double s_lo = std::log(t_lo), s_hi = std::log(t_max);
    const double ds_fine = (s_hi - s_lo) / double(n_fine - 1);

    // ---- fine-grid scalars: parabolicity margins and the exponent integrals
    std::vector<double> t_fine(n_fine), a_sup(n_fine), a_inf(n_fine);
    std::vector<double> acc_sup(n_fine, 0.0), acc_inf(n_fine, 0.0);  // int_1^tau dec(f_s) ds
    double min_p1 = std::numeric_limits<double>::infinity();
    {
        double prev_sup = 0.0, prev_inf = 0.0, prev_t = 0.0;
        for (int i = 0; i < n_fine; ++i) {
            const double tau = std::exp(s_lo + ds_fine * i);
            t_fine[i] = tau;
            const FoliationSample smp = foliation.sample_unchecked(tau);
            const Extrema e = field_extrema(smp.f_t);
            a_sup[i] = 1.0 + tau * e.max;
            a_inf[i] = 1.0 + tau * e.min;
            min_p1 = std::min(min_p1, a_inf[i]);
            if (i > 0) {
                const double dt = tau - prev_t;
                acc_sup[i] = acc_sup[i - 1] + 0.5 * (e.max + prev_sup) * dt;
                acc_inf[i] = acc_inf[i - 1] + 0.5 * (e.min + prev_inf) * dt;
            }
            prev_sup = e.max;
            prev_inf = e.min;
            prev_t = tau;
        }
    }
    const bool parabolic = min_p1 > 0.0;

    // ---- report-grid samples (a subset of the fine grid)
    std::vector<double> t_rep(n), s_rep(n);
    std::vector<double> q_rate(n);              // sup |t f_t|
    std::vector<double> q_curv(n);              // sup|R_f - 2| + sup|t^2 Rbar|
    std::vector<double> sup_dlnP(n);            // sup_x d/dt ln(1/t + f_t)
    std::vector<double> ln_p_sup(n);            // ln sup_x (1/t + f_t)
    std::vector<double> n_window(n, 0.0);       // C^2 data norm over the dyadic window

    const double sqrt2 = std::sqrt(2.0);
    const double window_factors[5] = {0.5, 1.0 / sqrt2, 1.0, sqrt2, 2.0};

    for (int k = 0; k < n; ++k) {
        const int i = k * refine;
        const double t = t_fine[i];
        t_rep[k] = t;
        s_rep[k] = std::log(t);

        const FoliationSample smp = foliation.sample_unchecked(t);
        const Extrema eft = field_extrema(smp.f_t);
        q_rate[k] = t * std::max(std::abs(eft.min), std::abs(eft.max));

        const Field rf = conformal_scalar_curvature(smp.f);
        double rf_dev = 0.0;
        for (std::size_t j = 0; j < rf.size(); ++j) {
            rf_dev = std::max(rf_dev, std::abs(rf[j] - 2.0));
        }
        const Extrema erb = rbar.extrema(grid, t);
        const double rb_sup = t * t * std::max(std::abs(erb.min), std::abs(erb.max));
        q_curv[k] = rf_dev + rb_sup;

        if (parabolic) {
            double a_max = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < smp.f_t.size(); ++j) {
                const double p = 1.0 / t + smp.f_t[j];
                const double dp = -1.0 / (t * t) + smp.f_tt[j];
                a_max = std::max(a_max, dp / p);
            }
            sup_dlnP[k] = a_max;
            ln_p_sup[k] = std::log(1.0 / t + eft.max);
        }

        // C^2 data norm over the dyadic window around t (clipped to range).
        double w_rb = 0.0, w_rate = 0.0, w_conf = 0.0;
        for (double fac : window_factors) {
            const double tau = t * fac;
            if (tau < t_lo || tau > t_max) continue;
            const FoliationSample ws = foliation.sample_unchecked(tau);
            const Extrema web = rbar.extrema(grid, tau);
            w_rb = std::max(w_rb, tau * tau * std::max(std::abs(web.min), std::abs(web.max)));

            Field v1(grid), v1t(grid), v2(grid), v2t(grid);
            for (std::size_t j = 0; j < std::size_t(grid->size()); ++j) {
                const double em2f = std::exp(-2.0 * ws.f[j]);
                v1[j] = tau * ws.f_t[j];
                v1t[j] = tau * ws.f_t[j] + tau * tau * ws.f_tt[j];
                v2[j] = 1.0 - em2f;
                v2t[j] = 2.0 * tau * ws.f_t[j] * em2f;
            }
            w_rate = std::max(w_rate, c2_norm(v1, v1t));
            w_conf = std::max(w_conf, c2_norm(v2, v2t));
        }
        n_window[k] = w_rb + w_rate + w_conf;
    }

    HypothesisReport report;
    report.conditions.resize(7);

    // ---- 1. parabolicity ----------------------------------------------------
    {
        ConditionRecord& rec = report.conditions[0];
        rec.name = "parabolicity-positivity";
        rec.detail = "min over sampled (t, x) of 1 + t df/dt must stay positive; "
                     "evidence is the violation depth max(0, -min)";
        rec.evidence = std::max(0.0, -min_p1);
        rec.status = parabolic ? ConditionStatus::pass : ConditionStatus::fail;
        char buf[96];
        std::snprintf(buf, sizeof buf, "min(1 + t df/dt) = %.6g", min_p1);
        rec.note = range_note + buf;
    }

    // ---- 2. lapse-rate integrable -------------------------------------------
    {
        ConditionRecord& rec = report.conditions[1];
        rec.name = "lapse-rate-integrable";
        rec.detail = "integral over [1, t_max] of sup_x |t df/dt| dt; integrable iff the "
                     "tail decays like t^p with p < -1";
        classify_l1(rec, t_rep, q_rate, 1e-14);
    }

    // ---- 3. commutator of sup and d/dt log ----------------------------------
    {
        ConditionRecord& rec = report.conditions[2];
        rec.name = "log-derivative-commutator-integrable";
        rec.detail = "c(t) = t sup_x d/dt ln(1/t + f_t) - d/d ln t of ln sup_x (1/t + f_t); "
                     "evidence is the integral of |c| dt.  The same defect separates the "
                     "decorated-derivative form of the flatness integrals from their "
                     "exactly-integrable log-ratio form.";
        if (!parabolic) {
            rec.status = ConditionStatus::indeterminate;
            rec.note = "parabolicity violated; commutator undefined";
        } else {
            // d/ds of ln sup P on the uniform-in-s report grid via 5-point
            // finite differences (exact for the round case, where ln sup P is
            // linear in s).
            const int m = std::min(5, n);
            std::vector<double> c_abs(n);
            for (int k = 0; k < n; ++k) {
                int lo = std::max(0, std::min(k - m / 2, n - m));
                std::vector<double> nodes(m);
                for (int j = 0; j < m; ++j) nodes[j] = s_rep[lo + j];
                const std::vector<double> w = fd_weights(s_rep[k], nodes, 1);
                double dds = 0.0;
                for (int j = 0; j < m; ++j) dds += w[j] * ln_p_sup[lo + j];
                c_abs[k] = std::abs(t_rep[k] * sup_dlnP[k] - dds);
            }
            classify_l1(rec, t_rep, c_abs, 1e-10);
        }
    }

    // ---- 4. curvature deviation integrable ----------------------------------
    {
        ConditionRecord& rec = report.conditions[3];
        rec.name = "curvature-deviation-integrable";
        rec.detail = "integral of sup_x |R_f - 2| + sup_x |t^2 Rbar| dt; integrable iff "
                     "the tail decays like t^p with p < -1";
        classify_l1(rec, t_rep, q_curv, 1e-12);
    }

    // ---- 5. C^2 decay of the data -------------------------------------------
    {
        ConditionRecord& rec = report.conditions[4];
        rec.name = "c2-decay-rate";
        rec.detail = "N(t) = ||t^2 Rbar||_C0 + ||t f_t||_C2 + ||1 - e^{-2f}||_C2 over the "
                     "dyadic window [t/2, 2t] must be bounded by C/t; evidence is the "
                     "fitted constant C = max t N(t) over t >= 2";
        std::vector<double> tf, nf;
        double nmax = 0.0;
        for (int k = 0; k < n; ++k) {
            nmax = std::max(nmax, n_window[k]);
            if (t_rep[k] >= 2.0) { tf.push_back(t_rep[k]); nf.push_back(n_window[k]); }
        }
        const double floor = 1e-13 * (1.0 + nmax);
        bool all_zero = nmax <= floor;
        if (all_zero) {
            rec.status = ConditionStatus::pass;
            rec.evidence = 0.0;
            rec.fitted_c = 0.0;
            rec.slope = 0.0;
            rec.r2 = 1.0;
            rec.note = "data norm identically zero";
        } else {
            double c = 0.0;
            for (std::size_t k = 0; k < tf.size(); ++k) c = std::max(c, tf[k] * nf[k]);
            rec.fitted_c = c;
            rec.evidence = c;
            const LinearFit fit = loglog_fit(tf, nf, floor);
            rec.slope = fit.slope;
            rec.r2 = fit.r2;
            if (fit.n < 5) {
                rec.status = ConditionStatus::indeterminate;
                rec.note = "too few samples above floor for a decay fit";
            } else if (fit.r2 < 0.9) {
                rec.status = ConditionStatus::indeterminate;
                rec.note = "window norm is not a clean power law (R^2 < 0.9)";
            } else if (fit.slope <= -0.9) {
                rec.status = ConditionStatus::pass;
                rec.note = "window norm decays at least like C/t";
            } else {
                rec.status = ConditionStatus::fail;
                rec.note = "window norm decays slower than C/t";
            }
        }
    }

    // ---- 6./7. asymptotic-flatness integrals --------------------------------
    //
    // The decorated radial integrals reduce, after replacing the decorated
    // log-derivative by the derivative of the decorated log (the defect is
    // exactly condition 3's commutator), to
    //
    //     t * Int(t) = integral over tau in [1, t] of
    //         (1 + tau dec f_tau) / (1 + t dec f_t)^2
    //             * exp(-3 * integral over s in [tau, t] of dec f_s)  d tau,
    //
    // with dec = sup for the lower integral and dec = inf for the upper one.
    // Boundedness requires q(t) = |t Int(t) - t| = O(1).  The integrand is
    // accumulated in deviation form (D - 1), which vanishes identically for
    // the round foliation, so the round case measures exactly q == 1 with a
    // flat tail.
    for (int which = 0; which < 2; ++which) {
        ConditionRecord& rec = report.conditions[5 + which];
        rec.name = which == 0 ? "af-lower-bounded" : "af-upper-bounded";
        rec.detail = "deviation q(t) = |integral of (D(tau, t) - 1) d tau - 1| of the "
                     "radial flatness integral must stay bounded; evidence is the "
                     "positive part of its tail growth rate";
        if (!parabolic) {
            rec.status = ConditionStatus::indeterminate;
            rec.note = "parabolicity violated; flatness integral undefined";
            continue;
        }
        const std::vector<double>& a_dec = which == 0 ? a_sup : a_inf;
        const std::vector<double>& acc = which == 0 ? acc_sup : acc_inf;

        bool overflow = false;
        std::vector<double> q(n);
        for (int k = 0; k < n; ++k) {
            const int ik = k * refine;
            double integral = 0.0;
            double prev = 0.0;
            for (int i = 0; i <= ik; ++i) {
                const double expo = 3.0 * (acc[i] - acc[ik]);
                if (expo > 600.0) { overflow = true; break; }
                const double dev = (a_dec[i] / (a_dec[ik] * a_dec[ik])) * std::exp(expo) - 1.0;
                if (i > 0) integral += 0.5 * (dev + prev) * (t_fine[i] - t_fine[i - 1]);
                prev = dev;
            }
            if (overflow) break;
            q[k] = std::abs(integral - 1.0);
        }
        if (overflow) {
            rec.status = ConditionStatus::indeterminate;
            rec.note = "exponent overflow while accumulating the flatness integral";
            continue;
        }

        double qmax = 0.0;
        for (double v : q) qmax = std::max(qmax, v);
        rec.fitted_c = qmax;

        // Tail behaviour over the last decade.
        std::vector<double> tt, qq;
        double tail_min = std::numeric_limits<double>::infinity(), tail_max = 0.0;
        for (int k = 0; k < n; ++k) {
            if (t_rep[k] >= t_rep[n - 1] / 10.0) {
                tt.push_back(t_rep[k]);
                qq.push_back(q[k]);
                tail_min = std::min(tail_min, q[k]);
                tail_max = std::max(tail_max, q[k]);
            }
        }
        if (tail_max <= 0.0 || (tail_max - tail_min) <= 1e-3 * tail_max) {
            rec.slope = 0.0;
            rec.r2 = 1.0;
            rec.evidence = 0.0;
            rec.status = ConditionStatus::pass;
            rec.note = "flatness deviation is constant over the tail";
            continue;
        }
        const LinearFit fit = loglog_fit(tt, qq, 0.0);
        rec.slope = fit.slope;
        rec.r2 = fit.r2;
        rec.evidence = std::max(0.0, fit.slope);
        if (fit.n < 3 || fit.r2 < 0.9) {
            rec.status = fit.slope <= 0.1 ? ConditionStatus::pass
                                          : ConditionStatus::indeterminate;
            rec.note = "tail fit is noisy; classified by slope magnitude";
        } else if (fit.slope <= 0.1) {
            rec.status = ConditionStatus::pass;
            rec.note = "flatness deviation stays bounded";
        } else {
            rec.status = ConditionStatus::fail;
            rec.note = "flatness deviation grows with t";
        }
    }

    return report;
}

// ============================================================================
// Directory persistence
// ============================================================================

void save_foliation_dir(const std::string& dir, const std::vector<double>& times,
                        const std::vector<Field>& fields) {
    if (times.size() != fields.size() || times.empty()) {
        throw ConfigError("save_foliation_dir: times/fields size mismatch");
    }
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);

    nlohmann::json manifest;
    manifest["schema_version"] = 1;
    manifest["kind"] = "conformal-foliation";
    manifest["nlat"] = fields.front().grid()->nlat();
    manifest["nlon"] = fields.front().grid()->nlon();
    manifest["times"] = nlohmann::json::array();
    manifest["files"] = nlohmann::json::array();
    for (std::size_t k = 0; k < times.size(); ++k) {
        char name[64];
        std::snprintf(name, sizeof name, "f_%04zu.qsf", k);
        save_field(dir + "/" + name, fields[k]);
        manifest["times"].push_back(times[k]);
        manifest["files"].push_back(name);
    }
    write_text_atomic(dir + "/manifest.json", manifest.dump(2) + "\n");
}

ConformalFoliation load_foliation_dir(const std::string& dir) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw ConfigError("load_foliation_dir: cannot open " + dir + "/manifest.json");
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("load_foliation_dir: manifest parse error: ") + e.what());
    }
    if (!manifest.contains("times") || !manifest.contains("files") ||
        !manifest.contains("nlat") || !manifest.contains("nlon")) {
        throw ConfigError("load_foliation_dir: manifest missing times/files/nlat/nlon");
    }
    const GridPtr grid = build_grid(manifest["nlat"].get<int>(), manifest["nlon"].get<int>());
    std::vector<double> times = manifest["times"].get<std::vector<double>>();
    std::vector<Field> fields;
    for (const auto& name : manifest["files"]) {
        fields.push_back(load_field(dir + "/" + name.get<std::string>(), grid));
    }
    return ConformalFoliation::tabulated(std::move(times), std::move(fields));
}

}  // namespace qsphere
