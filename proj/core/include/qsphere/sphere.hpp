/// @file sphere.hpp
/// @brief Scalar fields on the unit round sphere: Gauss–Legendre x
///        equispaced-longitude grid, spherical-harmonic analysis/synthesis,
///        and the round-metric differential operators built on them.
///
/// The grid couples nlat Gauss–Legendre colatitude nodes with nlon >= 2*nlat
/// equispaced longitudes; the spectral band limit is lmax = nlat - 1.  With
/// that choice the quadrature integrates products of two band-limited fields
/// exactly, so analysis of a band-limited synthesis is the identity up to
/// roundoff.  All Laplacians here are with respect to the round metric
/// sigma; conformal and flow-metric Laplacians are assembled from these
/// primitives by the foliation modules.
#pragma once

#include <complex>
#include <cstdint>
#include <memory>
#include <vector>

namespace qsphere {

namespace detail { struct LegendreTables; struct FftPlans; }

class SphereGrid;
using GridPtr = std::shared_ptr<const SphereGrid>;

/// Build an immutable transform grid.  Requires nlat >= 8 (even) and
/// nlon >= 2*nlat; the band limit is lmax = nlat - 1.
GridPtr build_grid(int nlat, int nlon);

/// Tensor-product quadrature/transform grid on S^2.
///
/// Latitude-major storage: node (i, j) has colatitude theta_i (increasing
/// from the north pole; Gauss–Legendre in x = cos theta) and longitude
/// phi_j = 2*pi*j/nlon.  There are no nodes at the poles, so pointwise
/// divisions by sin(theta) are well defined everywhere on the grid.
class SphereGrid : public std::enable_shared_from_this<SphereGrid> {
public:
    ~SphereGrid();
    SphereGrid(const SphereGrid&) = delete;
    SphereGrid& operator=(const SphereGrid&) = delete;

    int nlat() const { return nlat_; }
    int nlon() const { return nlon_; }
    int lmax() const { return lmax_; }
    int size() const { return nlat_ * nlon_; }

    double x(int i) const { return x_[i]; }         ///< cos(theta_i)
    double theta(int i) const { return theta_[i]; }
    double sin_theta(int i) const { return sin_theta_[i]; }
    double weight(int i) const { return w_[i]; }    ///< Gauss–Legendre weight
    double phi(int j) const { return phi_[j]; }
    /// Quadrature weight of node (i, j) against the round area measure.
    double area_weight(int i) const { return w_[i] * lon_weight_; }

    const std::vector<double>& xs() const { return x_; }
    const std::vector<double>& weights() const { return w_; }

private:
    friend GridPtr build_grid(int, int);
    friend struct SphereOpsAccess;
    SphereGrid(int nlat, int nlon);

    int nlat_, nlon_, lmax_;
    double lon_weight_; // 2*pi / nlon
    std::vector<double> x_, w_, theta_, sin_theta_, phi_;
    std::unique_ptr<detail::LegendreTables> tables_;
    std::unique_ptr<detail::FftPlans> plans_;
};

/// Real scalar field sampled on a SphereGrid (latitude-major).
class Field {
public:
    Field() = default;
    explicit Field(GridPtr grid, double fill = 0.0)
        : grid_(std::move(grid)), v_(grid_ ? grid_->size() : 0, fill) {}
    Field(GridPtr grid, std::vector<double> values);

    static Field constant(GridPtr grid, double value) { return Field(std::move(grid), value); }

    const GridPtr& grid() const { return grid_; }
    int nlat() const { return grid_->nlat(); }
    int nlon() const { return grid_->nlon(); }

    double& at(int i, int j) { return v_[std::size_t(i) * grid_->nlon() + j]; }
    double at(int i, int j) const { return v_[std::size_t(i) * grid_->nlon() + j]; }
    double& operator[](std::size_t k) { return v_[k]; }
    double operator[](std::size_t k) const { return v_[k]; }
    std::size_t size() const { return v_.size(); }

    std::vector<double>& values() { return v_; }
    const std::vector<double>& values() const { return v_; }

private:
    GridPtr grid_;
    std::vector<double> v_;
};

/// Spherical-harmonic coefficients of a real field, stored for m >= 0 in a
/// packed triangular layout; the m < 0 half is implied by conjugate
/// symmetry c_{l,-m} = (-1)^m conj(c_{l,m}).
class SpectralCoeffs {
public:
    SpectralCoeffs() = default;
    explicit SpectralCoeffs(GridPtr grid);

    const GridPtr& grid() const { return grid_; }
    int lmax() const { return grid_->lmax(); }

    /// Coefficient for any |m| <= l <= lmax (negative m via symmetry).
    std::complex<double> at(int l, int m) const;
    /// Mutable access, m >= 0 only.
    std::complex<double>& ref(int l, int m);

    std::vector<std::complex<double>>& raw() { return c_; }
    const std::vector<std::complex<double>>& raw() const { return c_; }

private:
    GridPtr grid_;
    std::vector<std::complex<double>> c_;
};

// ---------------------------------------------------------------------------
// Transforms and round-metric operators
// ---------------------------------------------------------------------------

/// Analysis: quadrature projection onto orthonormal spherical harmonics.
SpectralCoeffs forward(const Field& x);

/// Synthesis: evaluate a coefficient set on its grid.
Field inverse(const SpectralCoeffs& c);

/// Round-sphere Laplacian via the spectral multiplier -l(l+1).
Field laplacian_sigma(const Field& x);

/// Gradient in the orthonormal round frame (e_theta, e_phi):
/// dtheta = du/dtheta, dphi = (1/sin theta) du/dphi.
struct Gradient {
    Field dtheta;
    Field dphi;
};
Gradient gradient_sigma(const Field& x);

/// Covariant Hessian in the orthonormal round frame.  The phi-phi component
/// is recovered from the trace identity tt + pp = laplacian.
struct Hessian {
    Field tt, tp, pp;
};
Hessian hessian_sigma(const Field& x);

/// Quadrature of x against the round area measure (total mass 4*pi).
double integrate_sigma(const Field& x);

/// Grid extrema (no pole nodes exist; see class comment).
struct Extrema {
    double min = 0.0;
    double max = 0.0;
};
Extrema field_extrema(const Field& x);

// Convenience reductions used throughout the audits.
double linf_norm(const Field& x);
double linf_diff(const Field& a, const Field& b);

} // namespace qsphere
