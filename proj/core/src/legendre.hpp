/// @file legendre.hpp
/// @brief Internal Gauss–Legendre quadrature and normalized associated
///        Legendre function tables.  Not installed; the public interface is
///        qsphere/sphere.hpp.
#pragma once

#include <vector>

namespace qsphere::detail {

/// Gauss–Legendre nodes and weights on [-1, 1] (Newton iteration on P_n).
/// Nodes are returned in decreasing order (colatitude increasing from the
/// north pole), weights sum to 2 to machine precision.
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

/// Packed triangular index for (l, m), 0 <= m <= l <= lmax: coefficients and
/// tables are stored m-major, l ascending within each m block.
inline int sh_offset(int m, int lmax) { return m * (lmax + 1) - m * (m - 1) / 2; }
inline int sh_index(int l, int m, int lmax) { return sh_offset(m, lmax) + (l - m); }
inline int sh_count(int lmax) { return (lmax + 1) * (lmax + 2) / 2; }

/// Tables of the latitude-normalized associated Legendre functions
/// S_lm(x) (with Condon–Shortley phase, int_{-1}^{1} S_lm S_l'm dx = delta)
/// and the derived quantities needed for gradients and Hessians, sampled at
/// the quadrature nodes.  Layout: value[sh_index(l,m)*nlat + i].
struct LegendreTables {
    int lmax = 0;
    int nlat = 0;
    std::vector<double> val;      ///< S_lm(x_i)
    std::vector<double> dtheta;   ///< d/dtheta S_lm
    std::vector<double> over_sin; ///< S_lm / sin(theta)      (m >= 1, else 0)
    std::vector<double> d2theta;  ///< d^2/dtheta^2 S_lm
    std::vector<double> dos;      ///< d/dtheta (S_lm / sin)  (m >= 1, else 0)
};

/// Build all tables for the given nodes (x = cos(theta)).
LegendreTables build_tables(int lmax, const std::vector<double>& x);

/// Normalized Legendre polynomial values S_l0(x) for l = 0..lmax at a single
/// point (used for pole extrapolation and axisymmetric evaluation).
std::vector<double> legendre_values(int lmax, double x);

/// Plain (unnormalized) Legendre polynomial values P_l(x) for l = 0..lmax.
std::vector<double> legendre_plain(int lmax, double x);

} // namespace qsphere::detail
