/// @file evolver.hpp
/// @brief Parabolic lapse solver on the foliated exterior: integrates the
///        prescribed-curvature evolution in log time on either background
///        branch, in any of the three equivalent dependent variables, with
///        interior and horizon (scaled) drivers.
///
/// The metric ansatz  gbar = u^2 dt^2 + t^2 g(t)  turns the prescribed
/// scalar-curvature condition into a strictly parabolic equation for the
/// lapse u on each leaf.  Conformal branch (g = e^{2f} sigma), with
/// P = 1/t + f_t:
///
///     P u_t = (1/2t^2) u^2 lap_f u + (P_t + (3/2) P^2) u
///             - (1/4t^2) (R_f - t^2 Rbar) u^3,
///
/// and the flow branch (g = modified-flow background, H = 2/(t u)):
///
///     t u_t = (1/2) u^2 lap_g u + ((t^2/4) |M|^2 + 1/2) u
///             - (1/4) (R - t^2 Rbar) u^3.
///
/// The substitutions w = u^{-2} and m = (t/2)(1 - w) give equivalent
/// quasilinear equations whose right-hand sides are exposed for identity
/// tests.  The horizon drivers integrate the scaled variable
/// utilde(tau) = sqrt(tau/(tau+1)) u(tau+1), whose equation has the same
/// slot structure with shifted coefficients and admits regular data at
/// tau -> 0, approached through a ladder of start times epsilon with
/// Richardson extrapolation in epsilon.

#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "qsphere/conformal.hpp"
#include "qsphere/envelopes.hpp"
#include "qsphere/prescribed.hpp"
#include "qsphere/ricci_flow.hpp"
#include "qsphere/sphere.hpp"

namespace qsphere {

enum class Stepper {
    rk4,         ///< classical explicit RK4 in s = ln t (step-limited by diffusion)
    imex_sbdf2,  ///< semi-implicit BDF2: frozen spectral diffusion implicit,
                 ///< remainder extrapolated; Euler start per segment
};

enum class DependentVariable {
    lapse,           ///< u itself
    inverse_square,  ///< w = u^{-2}
    mass_aspect,     ///< m = (t/2)(1 - u^{-2})
};

struct EvolverControls {
    /// Log-time step; 0 selects automatic: the diffusion stability cap for
    /// rk4, a fixed accuracy step (0.01) for imex_sbdf2.  A positive value
    /// is used exactly as given (determinism across runs is the caller's).
    double ds = 0.0;
    double safety = 0.9;             ///< fraction of the stability cap (rk4 auto)
    Stepper stepper = Stepper::rk4;
    DependentVariable variable = DependentVariable::lapse;
    int snapshots = 33;              ///< log-uniform count when snapshot_times empty
    std::vector<double> snapshot_times;  ///< optional explicit grid (increasing);
                                         ///< front() sets the initial time
    int dealias_lcut = 0;            ///< >0: truncate l > lcut after every step
    double positivity_floor = 1e-10; ///< min admissible u, w, or 1 - 2m/t
    /// Admissibility constant K for the initial-lapse check
    /// max(phi) < 1/sqrt(K); NaN skips the check.
    double admissibility_K = std::numeric_limits<double>::quiet_NaN();
    bool allow_k_violation = false;  ///< record instead of throwing
};

/// Zero all spectral coefficients with l > lcut (no-op for lcut >= lmax).
Field truncate_band(const Field& x, int lcut);

/// A solved lapse history.  Only u is stored; the other formulations are
/// derived on demand, so the algebraic relations between them hold exactly.
struct SolutionRecord {
    EnvelopeBranch branch = EnvelopeBranch::conformal;
    bool horizon_scaled = false;  ///< true: times are shifted, u is utilde
    GridPtr grid;
    std::vector<double> times;
    std::vector<Field> u;

    // run diagnostics
    DependentVariable variable = DependentVariable::lapse;
    Stepper stepper = Stepper::rk4;
    double ds_min = 0.0, ds_max = 0.0;  ///< realized log-time step range
    long steps = 0;
    bool k_violation = false;
    double k_value = std::numeric_limits<double>::quiet_NaN();

    std::size_t size() const { return times.size(); }
    Field w(std::size_t k) const;  ///< u^{-2}
    Field m(std::size_t k) const;  ///< (t_k/2)(1 - u^{-2})
    std::vector<double> w_min_trace() const;
    std::vector<double> w_max_trace() const;
};

/// Transport a horizon-scaled record back to interior time: snapshots with
/// shifted time tau >= tau_min become interior-time snapshots at t = tau + 1
/// carrying u = sqrt((tau+1)/tau) * utilde.  Used for the driver's own
/// unscaled output and for auditing individual ladder members, which are
/// exact solutions of the interior equation (their Richardson combination
/// is not, the equation being nonlinear).
SolutionRecord transport_scaled_record(const SolutionRecord& scaled, double tau_min = 0.0);

// ----------------------------------------------------------------------------
// Right-hand sides (real-time d/dt), exposed for identity and oracle tests
// ----------------------------------------------------------------------------

/// d(y)/dt for the chosen formulation on the conformal background at time t.
Field conformal_rhs(const ConformalFoliation& foliation, const PrescribedCurvature& rbar,
                    DependentVariable variable, const Field& y, double t);

/// d(y)/dt for the chosen formulation on the flow background at time t.
Field ricci_rhs(const RicciFlowTrajectory& trajectory, const PrescribedCurvature& rbar,
                DependentVariable variable, const Field& y, double t);

// ----------------------------------------------------------------------------
// Interior drivers (initial leaf t = 1 unless snapshot_times says otherwise)
// ----------------------------------------------------------------------------

/// Evolve from initial lapse phi to t_end on the conformal background.
/// Throws HypothesisError on an admissibility violation (unless allowed),
/// NumericsError on positivity/finiteness loss, ConfigError on bad grids.
SolutionRecord evolve_conformal(const ConformalFoliation& foliation,
                                const PrescribedCurvature& rbar, const Field& phi,
                                double t_end, const EvolverControls& controls = {});

/// Same on a flow background; the trajectory must cover the requested range.
SolutionRecord evolve_ricci(const RicciFlowTrajectory& trajectory,
                            const PrescribedCurvature& rbar, const Field& phi,
                            double t_end, const EvolverControls& controls = {});

// ----------------------------------------------------------------------------
// Horizon drivers
// ----------------------------------------------------------------------------

struct HorizonControls {
    /// Start-time ladder (shifted time), strictly decreasing with constant
    /// ratio; e.g. {0.04, 0.02, 0.01, 0.005}.
    std::vector<double> epsilons{0.04, 0.02, 0.01, 0.005};
    /// Window parameter for the boundary sign condition; NaN derives it from
    /// the initial-leaf data with a 5% margin.
    double eta = std::numeric_limits<double>::quiet_NaN();
    double t_end = 20.0;         ///< final shifted time of the common grid
    int common_snapshots = 33;   ///< log-uniform count on [max(eps), t_end]
    EvolverControls evolver;     ///< stepping options for each member
};

struct HorizonResult {
    /// Extrapolated scaled solution on the common grid (times are shifted).
    SolutionRecord scaled;
    /// The same solution transported back: u(t) at t = tau + 1.
    SolutionRecord unscaled;
    /// Per-member records (full grids including warmup snapshots).
    std::vector<SolutionRecord> members;

    double eta_used = 0.0;
    bool eta_supplied_ok = true;   ///< diagnostic: supplied eta also brackets the data
    double t0_window = 1.0;        ///< sup of interior t with the window satisfied
    bool window_pass = false;      ///< t0 beyond the second checked snapshot
    double mass_bracket_worst = 0.0;  ///< worst violation of the 2m window below t0

    /// Extrapolation diagnostics: successive sup-norm deviations and the
    /// fitted order / residual of the scalar probe sequence.
    std::vector<double> member_deviation;
    RichardsonResult extrapolation;
};

/// Construct the outermost-minimal-surface (horizon) solution on the
/// conformal background: boundary sign hypothesis, epsilon ladder with
/// envelope-midpoint initial data, extrapolation, and window audit.
HorizonResult horizon_evolve_conformal(const ConformalFoliation& foliation,
                                       const PrescribedCurvature& rbar,
                                       const HorizonControls& controls = {});

/// Same on a flow background (trajectory must cover [1, 1 + t_end]).
HorizonResult horizon_evolve_ricci(const RicciFlowTrajectory& trajectory,
                                   const PrescribedCurvature& rbar,
                                   const HorizonControls& controls = {});

}  // namespace qsphere
