/// @file prescribed.hpp
/// @brief Prescribed scalar-curvature data for the quasi-spherical construction.
///
/// The target 3-metric carries a user-prescribed scalar curvature profile
/// Rbar(t, x) on [1, inf) x S^2.  This module represents the supported
/// analytic families (zero, constant, inverse power of t) together with a
/// tabulated kind interpolated in time, and exposes fast extrema queries used
/// by the envelope and admissibility sweeps, which only need min/max over the
/// sphere at fixed t.

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "qsphere/sphere.hpp"

namespace qsphere {

// ============================================================================
// PrescribedCurvature
// ============================================================================

/// Scalar curvature Rbar(t, x) prescribed on the foliated exterior region.
///
/// Analytic kinds are grid-free: they can be evaluated on any grid.  The
/// tabulated kind owns its sample grid; evaluation on a different grid is a
/// configuration error.  Outside the tabulated time range the data is held
/// constant at the nearest endpoint (clamped), which keeps long-time sweeps
/// well defined.
class PrescribedCurvature {
public:
    /// Rbar == 0 (vacuum exterior / Schwarzschild-type targets).
    static PrescribedCurvature zero();

    /// Rbar == value, uniform in t and x.
    static PrescribedCurvature constant(double value);

    /// Rbar(t) = amplitude / t^power, uniform in x.  power > 0 gives the
    /// decaying profiles used for admissibility studies.
    static PrescribedCurvature inverse_power(double amplitude, double power);

    /// Time-sampled fields on a common grid; strictly increasing times,
    /// at least two samples.  Monotone cubic (PCHIP) interpolation per grid
    /// node, clamped outside [times.front(), times.back()].
    static PrescribedCurvature tabulated(std::vector<double> times,
                                         std::vector<Field> fields);

    /// Evaluate as a field at time t.  Analytic kinds accept any grid.
    Field eval(const GridPtr& grid, double t) const;

    /// Min/max over the sphere at time t.  O(1) for space-uniform kinds.
    Extrema extrema(const GridPtr& grid, double t) const;

    /// True for the exactly-zero kind (lets callers keep exact zeros exact).
    bool is_zero() const { return kind_ == Kind::zero; }

    /// True when the value at any fixed time is constant over the sphere
    /// (every kind except tabulated).  Enables scalar fast paths.
    bool spatially_uniform() const { return kind_ != Kind::tabulated; }

    /// True when every sample queried so far is known nonnegative by
    /// construction (zero, nonnegative constant, nonnegative amplitude).
    /// Tabulated kinds are scanned once at construction.
    bool nonnegative() const { return nonnegative_; }

    /// One-line human-readable description for manifests and logs.
    std::string describe() const;

private:
    enum class Kind { zero, constant_value, inverse_power, tabulated };

    PrescribedCurvature() = default;

    Kind kind_ = Kind::zero;
    double amplitude_ = 0.0;
    double power_ = 0.0;
    bool nonnegative_ = true;

    // Tabulated kind: per-node monotone cubic interpolants, built once.
    struct Table;
    std::shared_ptr<const Table> table_;
};

}  // namespace qsphere
