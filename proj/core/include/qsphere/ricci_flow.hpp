/// @file ricci_flow.hpp
/// @brief Area-preserving modified 2-D Ricci flow on axisymmetric metrics,
///        used as the leaf geometry of the flow-background foliation.
///
/// The background metric family g(t) solves
///
///     dg/dt = (r - R) g + 2 Hess F = 2 M,     lap_g F = R - r,
///
/// where R is the scalar curvature of g, r its area average, F the (mean
/// zero) potential re-solved elliptically at every stage, and M the
/// resulting trace-free tensor.  The flow preserves the total area exactly
/// (tr M = 0) and drives R -> 2 and |M| -> 0 exponentially, so the leaves
/// t^2 g(t) become round at infinity.
///
/// Metrics are restricted to the axisymmetric family
///
///     g = a(theta) dtheta^2 + b(theta) sin^2(theta) dphi^2,
///
/// represented by nodal values of a and b at the Gauss–Legendre latitudes of
/// a transform grid.  All differential operators act through global Legendre
/// series in x = cos(theta), which keeps every quantity regular at the poles
/// (there are no pole nodes, and pole values are obtained by series
/// evaluation at x = +/-1).

#pragma once

#include <string>
#include <vector>

#include "qsphere/numerics.hpp"
#include "qsphere/sphere.hpp"

namespace qsphere {

// ============================================================================
// Axisymmetric metric
// ============================================================================

/// g = a(theta) dtheta^2 + b(theta) sin^2(theta) dphi^2 sampled at the
/// Gauss–Legendre latitudes of `grid` (longitude resolution is irrelevant
/// to the flow itself but fixes the grid the lapse solver will share).
struct AxiMetric {
    GridPtr grid;
    std::vector<double> a;  ///< size nlat, must stay positive
    std::vector<double> b;  ///< size nlat, must stay positive
};

/// The round metric a = b = 1.
AxiMetric make_round(GridPtr grid);

/// Induced metric of the ellipsoid of revolution with polar semi-axis
/// `axis_ratio` (equatorial semi-axes 1), rescaled to total area 4 pi.
AxiMetric make_ellipsoid(GridPtr grid, double axis_ratio);

/// Throws ConfigError on size mismatch / non-positive or non-finite entries.
void validate_metric(const AxiMetric& m);

// ============================================================================
// Pointwise geometry of one metric
// ============================================================================

/// Scalar curvature R at the latitude nodes:
/// R = (1/sqrt(ab)) d/dx [ (2 x b - (1 - x^2) b_x) / sqrt(ab) ].
/// Throws NumericsError if the result is not finite (pole irregularity).
std::vector<double> surface_scalar_curvature(const AxiMetric& m);

/// Total area:  2 pi * integral of sqrt(ab) dx.
double axi_area(const AxiMetric& m);

/// Area-averaged scalar curvature r = (integral R dmu) / (integral dmu).
double mean_scalar(const AxiMetric& m);

/// |a - b| extrapolated to the poles x = +/-1 (smoothness requires a = b
/// there; the flow preserves this up to series truncation).
double pole_defect(const AxiMetric& m);

/// Ricci potential: solution of lap_g F = R - r with mean zero against dmu.
struct RicciPotential {
    std::vector<double> F;    ///< nodal values, mean zero
    std::vector<double> F_x;  ///< dF/dx at the nodes
    double residual = 0.0;    ///< Linf of lap_g F - (R - r)
};
RicciPotential solve_ricci_potential(const AxiMetric& m);

/// Trace-free flow tensor M = (r - R)/2 g + Hess F in mixed components:
/// m_a = M^theta_theta, m_b = M^phi_phi (axisymmetry kills the mixed entry),
/// msq = |M|^2 = m_a^2 + m_b^2.  m_a + m_b vanishes to solver tolerance.
struct TraceFreePart {
    std::vector<double> m_a, m_b, msq;
    double max_trace = 0.0;   ///< Linf of m_a + m_b (tracelessness defect)
};
TraceFreePart trace_free_M(const AxiMetric& m);

/// Everything a flow stage needs, computed in one pass.
struct AxiGeometry {
    std::vector<double> R;
    double r = 0.0;
    double area = 0.0;
    RicciPotential pot;
    TraceFreePart M;
};
AxiGeometry axi_geometry(const AxiMetric& m);

/// One classical RK4 step of dg/dt = 2 M(g); the potential is re-solved at
/// every stage.  Throws NumericsError if positivity of a, b fails.
AxiMetric step_modified_flow(const AxiMetric& m, double dt);

// ============================================================================
// Flow trajectories
// ============================================================================

struct FlowControls {
    double safety = 0.7;    ///< fraction of the RK4 stability limit
    double dt_max = 0.02;   ///< hard step cap
    int n_samples = 257;    ///< stored log-spaced samples (>= 9)
};

/// One stored sample of the trajectory.
struct FlowSample {
    double t = 0.0;
    std::vector<double> a, b, R, F, msq;
    double area = 0.0;
    double mean_R = 0.0;
    double norm_R_dev = 0.0;  ///< max |R - 2|
    double norm_M = 0.0;      ///< max |M|
    double min_R = 0.0;
    double pole_defect = 0.0;
};

/// Background values interpolated at an off-sample time (cubic in t per
/// latitude node).
struct BackgroundSlice {
    double t = 0.0;
    std::vector<double> a, b, R, msq;
};

/// Coefficient profiles of the metric Laplacian for axisymmetric g:
///     lap_g u = c_tt * u_{theta theta} + c_t * u_theta
///             + c_pp * (u_{phi phi} / sin^2 theta),
/// with c_tt = 1/a, c_t = cot(theta)/a + (1/sqrt(ab)) d/dtheta sqrt(b/a),
/// c_pp = 1/b.  For a = b = 1 this reduces to the round Laplacian identically.
struct AxiLaplacianCoeffs {
    std::vector<double> c_tt, c_t, c_pp;
};
AxiLaplacianCoeffs axi_laplacian_coeffs(const GridPtr& grid,
                                        const std::vector<double>& a,
                                        const std::vector<double>& b);

/// Apply the axisymmetric-metric Laplacian to a (generally non-axisymmetric)
/// field using the round-sphere spectral primitives.
Field axi_laplacian(const Field& u, const AxiLaplacianCoeffs& coeffs);

/// A solved flow history on [1, t_max] with interpolation and decay fits.
class RicciFlowTrajectory {
public:
    RicciFlowTrajectory() = default;

    const GridPtr& grid() const { return grid_; }
    const std::vector<FlowSample>& samples() const { return samples_; }
    double t_min() const { return samples_.front().t; }
    double t_max() const { return samples_.back().t; }

    /// Interpolated background at any t in [t_min, t_max] (ConfigError
    /// outside).  Cubic Lagrange in t per node.
    BackgroundSlice slice(double t) const;

    /// Fitted exponential decay rates of max|R - 2| and max|M| (positive for
    /// decay), with fit quality; samples at the roundoff floor are excluded.
    double lambda_R() const { return lambda_R_; }
    double lambda_M() const { return lambda_M_; }
    double r2_R() const { return r2_R_; }
    double r2_M() const { return r2_M_; }

    /// Worst |area - 4 pi| over the stored samples.
    double max_area_drift() const { return max_area_drift_; }

private:
    friend RicciFlowTrajectory run_flow(const AxiMetric&, double, const FlowControls&);
    friend RicciFlowTrajectory load_trajectory(const std::string&);

    void finalize_fits();

    GridPtr grid_;
    std::vector<FlowSample> samples_;
    double lambda_R_ = 0.0, lambda_M_ = 0.0, r2_R_ = 0.0, r2_M_ = 0.0;
    double max_area_drift_ = 0.0;
};

/// Integrate the modified flow from `initial` to t_max (>= t of the initial
/// leaf, taken as t = 1), storing log-spaced samples.  Adaptive step below
/// the RK4 diffusion stability cap; samples are hit exactly.
RicciFlowTrajectory run_flow(const AxiMetric& initial, double t_max,
                             const FlowControls& controls = {});

/// Persist every `stride`-th stored sample (plus endpoints) into `dir`:
/// manifest.json with times, diagnostics, and fitted rates, plus QSP1
/// profile dumps of a, b, R, F, |M|^2 per exported sample.
void save_trajectory(const std::string& dir, const RicciFlowTrajectory& traj,
                     int stride = 8);

/// Rebuild a trajectory from save_trajectory output.  Interpolation density
/// is limited to what was exported.
RicciFlowTrajectory load_trajectory(const std::string& dir);

}  // namespace qsphere
