/// @file audit.hpp
/// @brief Post-run verification of constructed metrics: prescribed-curvature
///        reconstruction, Hawking/ADM mass series and monotonicity, and
///        asymptotic-flatness decay reports.
///
/// Every routine here consumes a finished SolutionRecord together with the
/// background it was evolved on, and re-derives geometric identities that the
/// construction never imposed directly.  The key closure is the scalar
/// curvature of the assembled 3-metric  u^2 dt^2 + t^2 g(t):
///
///     Rbar = -(2/u) dH/dt - (2/u) Lap_leaf u - |A|^2 + R_leaf - H^2,
///
/// where H, A are the mean curvature and second fundamental form of the leaf
/// {t} x S^2 and Lap_leaf, R_leaf refer to the induced leaf metric.  A solver
/// that advanced the lapse correctly reproduces the prescribed curvature
/// through this formula, including all the time-derivative terms the stepper
/// never saw explicitly; the audit differentiates the recorded snapshots with
/// five-point finite-difference stencils in log time.
///
/// All audits expect interior-time records (for horizon runs, the `unscaled`
/// member of HorizonResult); records flagged horizon_scaled are rejected.
#pragma once

#include <cstddef>
#include <vector>

#include "qsphere/conformal.hpp"
#include "qsphere/evolver.hpp"
#include "qsphere/numerics.hpp"
#include "qsphere/prescribed.hpp"
#include "qsphere/ricci_flow.hpp"
#include "qsphere/sphere.hpp"

namespace qsphere {

// ---------------------------------------------------------------------------
// Leaf geometry
// ---------------------------------------------------------------------------

/// Extrinsic and intrinsic data of one recorded leaf {t_k} x S^2 inside the
/// constructed 3-metric.  All fields live on the record's collocation grid.
struct LeafData {
    double t = 1.0;
    Field H;      ///< mean curvature of the leaf
    Field Asq;    ///< squared norm of the second fundamental form
    Field R_leaf; ///< scalar curvature of the induced metric t^2 g(t)
    Field lap_u;  ///< Laplacian of the lapse w.r.t. the induced metric
};

/// Leaf data for a conformally round background:
///   H = (2/u)(1/t + f_t),  |A|^2 = (2/u^2)(1/t + f_t)^2,
///   R_leaf = R_f / t^2,    Lap_leaf u = e^{-2f} Lap_sigma u / t^2.
LeafData leaf_data_conformal(const ConformalFoliation& foliation,
                             const SolutionRecord& rec, std::size_t k);

/// Leaf data for a flow background:
///   H = 2/(t u),  |A|^2 = 2/(t^2 u^2) + |M|^2 / u^2,
///   R_leaf = R / t^2,  Lap_leaf u = Lap_g u / t^2.
LeafData leaf_data_ricci(const RicciFlowTrajectory& trajectory,
                         const SolutionRecord& rec, std::size_t k);

// ---------------------------------------------------------------------------
// Curvature reconstruction
// ---------------------------------------------------------------------------

/// Per-snapshot deviation of the reconstructed scalar curvature from the
/// prescribed one.  `linf` and `l2` are sup and area-mean-square norms over
/// the sphere; `worst` is the largest sup norm over all snapshots.
struct CurvatureAudit {
    std::vector<double> t;
    std::vector<double> linf;
    std::vector<double> l2;
    double worst = 0.0;
};

/// Reconstruct the prescribed curvature from the recorded lapse snapshots by
/// the closure formula above and compare.  Requires at least 5 snapshots
/// (five-point stencils for dH/dt) and an interior-time record.
CurvatureAudit curvature_audit_conformal(const ConformalFoliation& foliation,
                                         const PrescribedCurvature& rbar,
                                         const SolutionRecord& rec);
CurvatureAudit curvature_audit_ricci(const RicciFlowTrajectory& trajectory,
                                     const PrescribedCurvature& rbar,
                                     const SolutionRecord& rec);

// ---------------------------------------------------------------------------
// Mass series
// ---------------------------------------------------------------------------

/// Quasi-local and flux mass evaluations along the recorded foliation.
///
/// `hawking` is the defining formula sqrt(A/16pi)(1 - (1/16pi) oint H^2 dmu)
/// with the exact leaf area and measure.  `flux` is the asymptotic ADM flux
/// integrand (1/4pi) oint (t/2)(1 - u^-2) dsigma over the round measure, and
/// `correction` collects the background flux terms that distinguish the two
/// at finite t on a conformally round background,
///   (1/4pi) oint [ -(t/2)(e^{2f}-1) u^-2 - t^2 e^{2f} f_t u^-2 ] dsigma,
/// identically zero on a flow background.  `estimator` = flux + correction is
/// the quantity whose t -> infinity limit is the ADM mass.
struct MassSeries {
    std::vector<double> t;
    std::vector<double> hawking;
    std::vector<double> flux;
    std::vector<double> correction;
    std::vector<double> estimator;
};

MassSeries mass_series_conformal(const ConformalFoliation& foliation,
                                 const SolutionRecord& rec);
MassSeries mass_series_ricci(const RicciFlowTrajectory& trajectory,
                             const SolutionRecord& rec);

// ---------------------------------------------------------------------------
// Hawking mass monotonicity
// ---------------------------------------------------------------------------

/// Interval-by-interval check of the mass monotonicity identity
///   d/dt m_H = (1/8pi) oint [ w |grad u|^2 + (t^2/2)|M|^2 w
///                              + (t^2/2) Rbar ] dmu_g  >= 0,
/// which holds exactly on flow backgrounds (and round conformal ones, where
/// |M| = 0).  `increment` is m_H(t_{k+1}) - m_H(t_k); `residual` subtracts
/// the trapezoid integral of the identity's right-hand side, so it measures
/// pure discretization error and should shrink at first order or better as
/// snapshots densify.
struct DriftAudit {
    std::vector<double> t;
    std::vector<double> mass;
    std::vector<double> rhs;
    std::vector<double> increment;
    std::vector<double> residual;
    double min_increment = 0.0;
    double max_residual = 0.0;
};

/// Flow-background drift audit (uses the trajectory's |M|^2 and metric).
DriftAudit hawking_drift_ricci(const RicciFlowTrajectory& trajectory,
                               const PrescribedCurvature& rbar,
                               const SolutionRecord& rec);

/// Round-background drift audit (conformal records with f == 0; the
/// foliation is checked and non-round foliations are rejected).
DriftAudit hawking_drift_round(const ConformalFoliation& foliation,
                               const PrescribedCurvature& rbar,
                               const SolutionRecord& rec);

// ---------------------------------------------------------------------------
// ADM mass fit
// ---------------------------------------------------------------------------

/// ADM mass from the tail of the estimator series: least-squares line in
/// x = 1/t over the last decade of snapshots, reported at x = 0 with the
/// intercept's standard error as `uncertainty`.  `window_ok` requires the
/// fit's R^2 >= 0.99; `max_correction` is the largest |correction| inside
/// the fit window (should be negligible when the background has settled).
/// Records must reach t_end >= 20 so that a full decade of tail exists.
struct AdmFit {
    double mass = 0.0;
    double uncertainty = 0.0;
    LinearFit fit;              ///< in x = 1/t: intercept = mass
    bool window_ok = false;
    double max_correction = 0.0;
    std::size_t first_index = 0; ///< first snapshot inside the fit window
};

AdmFit adm_mass_fit(const MassSeries& series);

// ---------------------------------------------------------------------------
// Asymptotic flatness
// ---------------------------------------------------------------------------

/// Decay report for the constructed metric.  The four norms
///   ||1 - u^-2||_inf, ||t du/dt||_inf, ||grad u||_inf, ||hess u||_inf
/// must decay like C/t for an asymptotically flat end (log-log slopes <=
/// -0.9 in practice); `kappa_tan` = (R_leaf - H^2 + |A|^2)/2 and
/// `ric_normal` = -(1/u) dH/dt - (1/u) Lap_leaf u - |A|^2 are the tangential
/// sectional curvature and the normal-normal Ricci component of the ambient
/// metric, which decay like t^-3 (slope <= -2.5) when the end approaches a
/// Schwarzschild exterior.  When every norm is already at roundoff level
/// (<= 1e-10) the record is flagged identically flat and no fits are made.
struct FlatnessReport {
    std::vector<double> t;
    std::vector<double> norm_w;      ///< ||1 - u^-2||_inf
    std::vector<double> norm_ut;     ///< ||t du/dt||_inf
    std::vector<double> norm_grad;   ///< ||grad_sigma u||_inf
    std::vector<double> norm_hess;   ///< ||hess_sigma u||_inf
    std::vector<double> kappa_tan;   ///< sup |kappa_tan| per snapshot
    std::vector<double> ric_normal;  ///< sup |Ric(nu,nu)| per snapshot
    LinearFit slope_w, slope_ut, slope_grad, slope_hess;
    LinearFit slope_kappa;           ///< on max(kappa_tan, ric_normal)
    bool identically_flat = false;
};

FlatnessReport flatness_conformal(const ConformalFoliation& foliation,
                                  const SolutionRecord& rec);
FlatnessReport flatness_ricci(const RicciFlowTrajectory& trajectory,
                              const SolutionRecord& rec);

}  // namespace qsphere
