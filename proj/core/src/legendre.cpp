/// @file legendre.cpp
/// @brief Gauss–Legendre quadrature and associated Legendre recurrences.

#include "legendre.hpp"

#include <cmath>
#include <stdexcept>

namespace qsphere::detail {

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    if (n < 1) throw std::invalid_argument("gauss_legendre: n >= 1 required");
    nodes.assign(n, 0.0);
    weights.assign(n, 0.0);

    for (int i = 0; i < n; ++i) {
        // Tricomi-style initial guess, then Newton on P_n(x) = 0.
        double x = std::cos(M_PI * (double(i) + 0.75) / (double(n) + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            // Three-term recurrence for P_n and its derivative.
            double p0 = 1.0, p1 = x;
            for (int l = 2; l <= n; ++l) {
                const double p2 = ((2.0 * l - 1.0) * x * p1 - (l - 1.0) * p0) / double(l);
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_n, p0 = P_{n-1}
            dp = double(n) * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
}

LegendreTables build_tables(int lmax, const std::vector<double>& x) {
    LegendreTables t;
    t.lmax = lmax;
    t.nlat = int(x.size());
    const int nlat = t.nlat;
    const std::size_t total = std::size_t(sh_count(lmax)) * nlat;
    t.val.assign(total, 0.0);
    t.dtheta.assign(total, 0.0);
    t.over_sin.assign(total, 0.0);
    t.d2theta.assign(total, 0.0);
    t.dos.assign(total, 0.0);

    for (int i = 0; i < nlat; ++i) {
        const double xi = x[i];
        const double sin_t = std::sqrt(1.0 - xi * xi); // interior nodes: sin > 0
        const double cot_t = xi / sin_t;

        // Diagonal terms S_mm by upward recurrence, then l-recurrence per m.
        double smm = 1.0 / std::sqrt(2.0); // S_00
        for (int m = 0; m <= lmax; ++m) {
            if (m > 0)
                smm *= -std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * sin_t;

            double s_prev = 0.0; // S_{l-1,m}
            double s_curr = smm; // S_{l,m}
            for (int l = m; l <= lmax; ++l) {
                const std::size_t k = std::size_t(sh_index(l, m, lmax)) * nlat + i;
                t.val[k] = s_curr;

                // d/dtheta S_lm = (l x S_lm - d_lm S_{l-1,m}) / sin
                const double dlm =
                    (l > m) ? std::sqrt((2.0 * l + 1.0) * (double(l) * l - double(m) * m) /
                                        (2.0 * l - 1.0))
                            : 0.0;
                const double dth = (double(l) * xi * s_curr - dlm * s_prev) / sin_t;
                t.dtheta[k] = dth;

                // Associated Legendre ODE gives the second theta-derivative.
                const double msin2 = (double(m) * m) / (sin_t * sin_t);
                t.d2theta[k] = -cot_t * dth - (double(l) * (l + 1.0) - msin2) * s_curr;

                if (m >= 1) {
                    const double os = s_curr / sin_t;
                    t.over_sin[k] = os;
                    t.dos[k] = (dth - xi * os) / sin_t;
                }

                // Advance l -> l+1.
                if (l < lmax) {
                    const double lp = l + 1.0;
                    const double alm =
                        std::sqrt((4.0 * lp * lp - 1.0) / (lp * lp - double(m) * m));
                    const double blm =
                        (l > m)
                            ? std::sqrt(((2.0 * lp + 1.0) * (double(l) * l - double(m) * m)) /
                                        ((2.0 * lp - 3.0) * (lp * lp - double(m) * m)))
                            : 0.0;
                    const double s_next = alm * xi * s_curr - blm * s_prev;
                    s_prev = s_curr;
                    s_curr = s_next;
                }
            }
        }
    }
    return t;
}

std::vector<double> legendre_values(int lmax, double x) {
    std::vector<double> out(lmax + 1, 0.0);
    double s_prev = 0.0;
    double s_curr = 1.0 / std::sqrt(2.0);
    for (int l = 0; l <= lmax; ++l) {
        out[l] = s_curr;
        const double lp = l + 1.0;
        const double alm = std::sqrt((4.0 * lp * lp - 1.0) / (lp * lp));
        const double blm = (l > 0) ? std::sqrt(((2.0 * lp + 1.0) * double(l) * l) /
                                               ((2.0 * lp - 3.0) * lp * lp))
                                   : 0.0;
        const double s_next = alm * x * s_curr - blm * s_prev;
        s_prev = s_curr;
        s_curr = s_next;
    }
    return out;
}

std::vector<double> legendre_plain(int lmax, double x) {
    std::vector<double> out(lmax + 1, 0.0);
    out[0] = 1.0;
    if (lmax >= 1) out[1] = x;
    for (int l = 2; l <= lmax; ++l)
        out[l] = ((2.0 * l - 1.0) * x * out[l - 1] - (l - 1.0) * out[l - 2]) / double(l);
    return out;
}

} // namespace qsphere::detail
