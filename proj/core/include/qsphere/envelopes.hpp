/// @file envelopes.hpp
/// @brief A-priori comparison envelopes for the inverse squared lapse and the
///        admissibility constant K, for both foliation branches and their
///        horizon (shifted-time) variants.
///
/// At a spatial extremum of w = u^{-2} the elliptic terms of the w-evolution
/// have a sign, so the extremum obeys a scalar differential inequality
///
///     d/dt w_ext  >=/<=  -c(t) w_ext + I(t),
///
/// with c and I obtained by decorating the spatially varying coefficients
/// with inf/sup over the sphere.  Solving the comparison ODE from the initial
/// leaf gives time-dependent bands
///
///     delta_lower(t) = int_base^t I_inf(s) exp(-(E_sup(t) - E_sup(s))) ds,
///
/// (and the mirrored upper band), which every solution started inside the
/// band must respect regardless of resolution.  These are the primary
/// correctness oracles for the lapse solver.
///
/// The same accumulator evaluated with the exponent flipped yields the
/// admissibility trace S(t); its positive part K = max(0, sup_t S) bounds the
/// admissible initial lapse range 0 < phi < 1/sqrt(K), and mean curvature
/// stays above 2 sqrt(K) along admissible solutions.

#pragma once

#include <cstddef>
#include <vector>

#include "qsphere/conformal.hpp"
#include "qsphere/prescribed.hpp"
#include "qsphere/ricci_flow.hpp"

namespace qsphere {

/// Lower end of the shifted-time integration for horizon envelopes.  The
/// horizon solution emerges from w = 0 at shifted time 0; integrating from a
/// tiny positive base approximates the degenerate start to O(base).
inline constexpr double kHorizonBase = 1e-9;

enum class EnvelopeBranch {
    conformal,  ///< leaves t^2 e^{2f} sigma
    ricci,      ///< leaves t^2 g(t) with g(t) a modified-flow background
};

/// Comparison bands sampled on a caller-supplied time grid.
///
/// `exp_lower` stores the damping integral E(t) used by the lower band (the
/// sup-decorated one) and `exp_upper` the inf-decorated integral of the upper
/// band; containment checks use them to propagate initial-leaf extrema:
///
///     w_min(t) >= lower(t) + (w_min(t0) - lower(t0)) exp(-(E(t) - E(t0))).
struct EnvelopePair {
    EnvelopeBranch branch = EnvelopeBranch::conformal;
    bool horizon = false;   ///< true: times are shifted (t_interior - 1)
    double base = 1.0;      ///< integration start (1, or kHorizonBase)
    std::vector<double> t;
    std::vector<double> lower, upper;
    std::vector<double> exp_lower, exp_upper;
    /// Max difference between the two quadrature sweeps at the output nodes;
    /// the remaining error after extrapolation is roughly a third of this.
    double richardson_residual = 0.0;
};

/// Admissibility constant with its generating trace S(t).
struct AdmissibilityConstant {
    double K = 0.0;
    double t_dagger = 1.0;        ///< argmax of S (the binding time)
    bool unsaturated = false;     ///< S still rising at t_max: K is a lower bound
    bool no_constraint = false;   ///< K == 0: any positive initial lapse admissible
    std::vector<double> t, S;     ///< dense trace for reports
};

/// Violation depths of a solved record against a band (0 = contained).
struct EnvelopeCheck {
    double worst_lower = 0.0;     ///< max over snapshots of (bound - w_min)+
    double worst_upper = 0.0;     ///< max over snapshots of (w_max - bound)+
    double t_worst_lower = 0.0;
    double t_worst_upper = 0.0;
    std::size_t n_checked = 0;
    bool pass(double tol) const { return worst_lower <= tol && worst_upper <= tol; }
};

// ----------------------------------------------------------------------------
// Interior envelopes (integration base t = 1)
// ----------------------------------------------------------------------------

/// Conformal branch: damping c = 2 d/dt ln P + 3 P with P = 1/t + f_t, and
/// source I = (R_f - t^2 Rbar) / (2 t^2 P), decorated over the sphere.
/// `t_grid` must be increasing with every entry >= 1.
EnvelopePair envelopes_conformal(const ConformalFoliation& foliation,
                                 const PrescribedCurvature& rbar,
                                 const std::vector<double>& t_grid);

/// Flow branch: damping c = 1/t + (t/2) |M|^2 and source
/// I = (R/2 - (t^2/2) Rbar) / t on the trajectory background.  The
/// trajectory must cover [1, t_grid.back()].
EnvelopePair envelopes_ricci(const RicciFlowTrajectory& trajectory,
                             const PrescribedCurvature& rbar,
                             const std::vector<double>& t_grid);

// ----------------------------------------------------------------------------
// Horizon envelopes (shifted time tau = t_interior - 1, base tau_base)
// ----------------------------------------------------------------------------

/// Conformal branch under the horizon scaling: coefficients are evaluated at
/// interior time tau + 1 with the shifted parabolic factor
/// Ptilde = 1/tau + ((tau+1)/tau) f_t(tau+1).  `tau_grid` entries must be
/// >= tau_base.
EnvelopePair envelopes_conformal_horizon(const ConformalFoliation& foliation,
                                         const PrescribedCurvature& rbar,
                                         const std::vector<double>& tau_grid,
                                         double tau_base = kHorizonBase);

/// Flow branch under the horizon scaling: damping
/// c = 1/tau + ((tau+1)/2) |M(tau+1)|^2, source
/// I = (R(tau+1)/2 - ((tau+1)^2/2) Rbar(tau+1)) / tau.  The trajectory must
/// cover [1 + tau_base, 1 + tau_grid.back()].
EnvelopePair envelopes_ricci_horizon(const RicciFlowTrajectory& trajectory,
                                     const PrescribedCurvature& rbar,
                                     const std::vector<double>& tau_grid,
                                     double tau_base = kHorizonBase);

// ----------------------------------------------------------------------------
// Admissibility constant
// ----------------------------------------------------------------------------

/// K for the conformal branch over [1, t_max]:
/// S(t) = -int_1^t I_inf(s) exp(+E_sup(s)) ds, K = max(0, sup S).
AdmissibilityConstant constant_K_conformal(const ConformalFoliation& foliation,
                                           const PrescribedCurvature& rbar,
                                           double t_max);

/// K for the flow branch over [1, t_max]:
/// S(t) = -int_1^t (R/2 - (s^2/2) Rbar)_inf exp(+J_sup(s)) ds with
/// J(s) = int_1^s (r/2) |M|^2_sup dr.
AdmissibilityConstant constant_K_ricci(const RicciFlowTrajectory& trajectory,
                                       const PrescribedCurvature& rbar,
                                       double t_max);

// ----------------------------------------------------------------------------
// Containment check
// ----------------------------------------------------------------------------

/// Check per-snapshot extrema of w = u^{-2} against a band, including the
/// propagated initial-leaf correction terms; the stored exponents already
/// absorb every damping contribution, so the correction is uniformly
/// (w_ext(t0) - band(t0)) exp(-(E(t) - E(t0))) for both branches.  Band
/// values at snapshot times not present in env.t are interpolated
/// monotonically.
EnvelopeCheck envelope_check(const EnvelopePair& env, const std::vector<double>& times,
                             const std::vector<double>& w_min,
                             const std::vector<double>& w_max);

}  // namespace qsphere
