/// @file sphere.cpp
/// @brief Spherical-harmonic transforms: FFT in longitude (FFTW),
///        Gauss–Legendre quadrature against associated Legendre tables in
///        latitude.

#include "qsphere/sphere.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <mutex>
#include <stdexcept>

#include <fftw3.h>

#include "legendre.hpp"
#include "qsphere/errors.hpp"

namespace qsphere {

namespace detail {

// FFTW plan creation/destruction is not thread-safe; executing plans on
// caller-owned arrays (the "new-array" interface) is.  Plans are created
// once per grid with FFTW_ESTIMATE | FFTW_UNALIGNED so execution may use any
// properly-sized buffers and planning never probes (stays deterministic).
std::mutex& fftw_mutex() {
    static std::mutex m;
    return m;
}

struct FftPlans {
    fftw_plan r2c = nullptr;
    fftw_plan c2r = nullptr;
    int n = 0;

    explicit FftPlans(int nlon) : n(nlon) {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        double* re = fftw_alloc_real(nlon);
        fftw_complex* cx = fftw_alloc_complex(nlon / 2 + 1);
        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        r2c = fftw_plan_dft_r2c_1d(nlon, re, cx, flags);
        c2r = fftw_plan_dft_c2r_1d(nlon, cx, re, flags);
        fftw_free(re);
        fftw_free(cx);
        if (!r2c || !c2r) throw std::runtime_error("FFTW plan creation failed");
    }
    ~FftPlans() {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        if (r2c) fftw_destroy_plan(r2c);
        if (c2r) fftw_destroy_plan(c2r);
    }
};

} // namespace detail

// ---------------------------------------------------------------------------
// SphereGrid
// ---------------------------------------------------------------------------

SphereGrid::SphereGrid(int nlat, int nlon)
    : nlat_(nlat), nlon_(nlon), lmax_(nlat - 1), lon_weight_(2.0 * M_PI / nlon) {
    detail::gauss_legendre(nlat, x_, w_);
    theta_.resize(nlat);
    sin_theta_.resize(nlat);
    for (int i = 0; i < nlat; ++i) {
        theta_[i] = std::acos(x_[i]);
        sin_theta_[i] = std::sqrt(1.0 - x_[i] * x_[i]);
    }
    phi_.resize(nlon);
    for (int j = 0; j < nlon; ++j) phi_[j] = 2.0 * M_PI * j / nlon;
    tables_ = std::make_unique<detail::LegendreTables>(detail::build_tables(lmax_, x_));
    plans_ = std::make_unique<detail::FftPlans>(nlon);
}

SphereGrid::~SphereGrid() = default;

GridPtr build_grid(int nlat, int nlon) {
    if (nlat < 8) throw ConfigError("build_grid: nlat >= 8 required");
    if (nlat % 2 != 0) throw ConfigError("build_grid: nlat must be even");
    if (nlon < 2 * nlat) throw ConfigError("build_grid: nlon >= 2*nlat required");
    return GridPtr(new SphereGrid(nlat, nlon));
}

// Internal access to tables/plans for the operator implementations.
struct SphereOpsAccess {
    static const detail::LegendreTables& tables(const SphereGrid& g) { return *g.tables_; }
    static const detail::FftPlans& plans(const SphereGrid& g) { return *g.plans_; }
};

// ---------------------------------------------------------------------------
// Field / SpectralCoeffs
// ---------------------------------------------------------------------------

Field::Field(GridPtr grid, std::vector<double> values)
    : grid_(std::move(grid)), v_(std::move(values)) {
    if (int(v_.size()) != grid_->size())
        throw ConfigError("Field: value count does not match grid");
}

SpectralCoeffs::SpectralCoeffs(GridPtr grid)
    : grid_(std::move(grid)), c_(detail::sh_count(grid_->lmax()), {0.0, 0.0}) {}

std::complex<double> SpectralCoeffs::at(int l, int m) const {
    const int lmax = grid_->lmax();
    if (l < std::abs(m) || l > lmax) return {0.0, 0.0};
    if (m >= 0) return c_[detail::sh_index(l, m, lmax)];
    const std::complex<double> v = c_[detail::sh_index(l, -m, lmax)];
    const double sgn = (m % 2 == 0) ? 1.0 : -1.0;
    return sgn * std::conj(v);
}

std::complex<double>& SpectralCoeffs::ref(int l, int m) {
    if (m < 0 || l < m || l > grid_->lmax())
        throw std::out_of_range("SpectralCoeffs::ref: need 0 <= m <= l <= lmax");
    return c_[detail::sh_index(l, m, grid_->lmax())];
}

// ---------------------------------------------------------------------------
// Transform kernels
// ---------------------------------------------------------------------------

namespace {

constexpr double kSqrt2Pi = 2.5066282746310005024; // sqrt(2*pi)

// Longitude DFT of every latitude ring: X_m(i) = (1/nlon) sum_j v_ij e^{-im phi_j},
// kept for m = 0..lmax.
void fourier_analysis(const Field& f, std::vector<std::complex<double>>& X) {
    const SphereGrid& g = *f.grid();
    const int nlat = g.nlat(), nlon = g.nlon(), mmax = g.lmax();
    const auto& plans = SphereOpsAccess::plans(g);

    X.assign(std::size_t(nlat) * (mmax + 1), {0.0, 0.0});
    std::vector<double> row(nlon);
    std::vector<std::complex<double>> out(nlon / 2 + 1);
    for (int i = 0; i < nlat; ++i) {
        std::memcpy(row.data(), f.values().data() + std::size_t(i) * nlon,
                    sizeof(double) * nlon);
        fftw_execute_dft_r2c(plans.r2c, row.data(),
                             reinterpret_cast<fftw_complex*>(out.data()));
        const double scale = 1.0 / nlon;
        for (int m = 0; m <= mmax; ++m)
            X[std::size_t(i) * (mmax + 1) + m] = out[m] * scale;
    }
}

// Longitude synthesis of every ring from X_m(i), m = 0..lmax (zero above).
void fourier_synthesis(const SphereGrid& g, const std::vector<std::complex<double>>& X,
                       Field& out_field) {
    const int nlat = g.nlat(), nlon = g.nlon(), mmax = g.lmax();
    const auto& plans = SphereOpsAccess::plans(g);

    std::vector<std::complex<double>> bins(nlon / 2 + 1);
    std::vector<double> row(nlon);
    for (int i = 0; i < nlat; ++i) {
        std::fill(bins.begin(), bins.end(), std::complex<double>(0.0, 0.0));
        for (int m = 0; m <= mmax; ++m) bins[m] = X[std::size_t(i) * (mmax + 1) + m];
        // c2r destroys its input, which is why bins is a scratch copy.
        fftw_execute_dft_c2r(plans.c2r, reinterpret_cast<fftw_complex*>(bins.data()),
                             row.data());
        std::memcpy(out_field.values().data() + std::size_t(i) * nlon, row.data(),
                    sizeof(double) * nlon);
    }
}

enum class Table { value, dtheta, over_sin, d2theta, dos };

const std::vector<double>& table_of(const detail::LegendreTables& t, Table which) {
    switch (which) {
        case Table::value: return t.val;
        case Table::dtheta: return t.dtheta;
        case Table::over_sin: return t.over_sin;
        case Table::d2theta: return t.d2theta;
        case Table::dos: return t.dos;
    }
    return t.val;
}

// Synthesis with an arbitrary Legendre table and per-(l,m) multiplier.
// mul(l, m) returns the complex factor applied to c_lm (e.g. i*m for
// longitudinal derivatives, -l(l+1) for the Laplacian).
template <typename Mul>
Field synth_with(const SpectralCoeffs& c, Table which, Mul mul, bool skip_m0 = false) {
    const GridPtr& gp = c.grid();
    const SphereGrid& g = *gp;
    const int nlat = g.nlat(), lmax = g.lmax();
    const auto& tab = table_of(SphereOpsAccess::tables(g), which);

    std::vector<std::complex<double>> X(std::size_t(nlat) * (lmax + 1), {0.0, 0.0});
    for (int m = skip_m0 ? 1 : 0; m <= lmax; ++m) {
        for (int l = m; l <= lmax; ++l) {
            const std::complex<double> cf =
                c.raw()[detail::sh_index(l, m, lmax)] * mul(l, m) / kSqrt2Pi;
            if (cf == std::complex<double>(0.0, 0.0)) continue;
            const double* trow = tab.data() + std::size_t(detail::sh_index(l, m, lmax)) * nlat;
            for (int i = 0; i < nlat; ++i)
                X[std::size_t(i) * (lmax + 1) + m] += cf * trow[i];
        }
    }
    Field out(gp);
    fourier_synthesis(g, X, out);
    return out;
}

} // namespace

SpectralCoeffs forward(const Field& x) {
    const GridPtr& gp = x.grid();
    const SphereGrid& g = *gp;
    const int nlat = g.nlat(), lmax = g.lmax();
    const auto& tab = SphereOpsAccess::tables(g).val;

    std::vector<std::complex<double>> X;
    fourier_analysis(x, X);

    SpectralCoeffs c(gp);
    for (int m = 0; m <= lmax; ++m) {
        for (int l = m; l <= lmax; ++l) {
            const double* trow = tab.data() + std::size_t(detail::sh_index(l, m, lmax)) * nlat;
            std::complex<double> acc(0.0, 0.0);
            for (int i = 0; i < nlat; ++i)
                acc += g.weight(i) * trow[i] * X[std::size_t(i) * (lmax + 1) + m];
            c.ref(l, m) = kSqrt2Pi * acc;
        }
    }
    return c;
}

Field inverse(const SpectralCoeffs& c) {
    return synth_with(c, Table::value, [](int, int) { return 1.0; });
}

Field laplacian_sigma(const Field& x) {
    SpectralCoeffs c = forward(x);
    return synth_with(c, Table::value,
                      [](int l, int) { return -double(l) * (l + 1.0); });
}

Gradient gradient_sigma(const Field& x) {
    SpectralCoeffs c = forward(x);
    Gradient g;
    g.dtheta = synth_with(c, Table::dtheta, [](int, int) { return 1.0; });
    g.dphi = synth_with(
        c, Table::over_sin,
        [](int, int m) { return std::complex<double>(0.0, double(m)); },
        /*skip_m0=*/true);
    return g;
}

Hessian hessian_sigma(const Field& x) {
    SpectralCoeffs c = forward(x);
    Hessian h;
    h.tt = synth_with(c, Table::d2theta, [](int, int) { return 1.0; });
    h.tp = synth_with(
        c, Table::dos,
        [](int, int m) { return std::complex<double>(0.0, double(m)); },
        /*skip_m0=*/true);
    // Trace identity: Hess_tt + Hess_pp = Laplacian.
    Field lap = synth_with(c, Table::value,
                           [](int l, int) { return -double(l) * (l + 1.0); });
    h.pp = Field(x.grid());
    for (std::size_t k = 0; k < h.pp.size(); ++k) h.pp[k] = lap[k] - h.tt[k];
    return h;
}

double integrate_sigma(const Field& x) {
    const SphereGrid& g = *x.grid();
    const int nlat = g.nlat(), nlon = g.nlon();
    double total = 0.0;
    for (int i = 0; i < nlat; ++i) {
        double ring = 0.0;
        for (int j = 0; j < nlon; ++j) ring += x.at(i, j);
        total += ring * g.area_weight(i);
    }
    return total;
}

Extrema field_extrema(const Field& x) {
    Extrema e;
    if (x.size() == 0) return e;
    e.min = e.max = x[0];
    for (std::size_t k = 1; k < x.size(); ++k) {
        e.min = std::min(e.min, x[k]);
        e.max = std::max(e.max, x[k]);
    }
    return e;
}

double linf_norm(const Field& x) {
    double m = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) m = std::max(m, std::abs(x[k]));
    return m;
}

double linf_diff(const Field& a, const Field& b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
    return m;
}

} // namespace qsphere
