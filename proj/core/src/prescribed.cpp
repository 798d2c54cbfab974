/// @file prescribed.cpp
/// @brief Prescribed scalar-curvature families: evaluation and extrema.

#include "qsphere/prescribed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "qsphere/errors.hpp"
#include "qsphere/numerics.hpp"

namespace qsphere {

// ============================================================================
// Tabulated storage
// ============================================================================

struct PrescribedCurvature::Table {
    GridPtr grid;
    std::vector<double> times;
    std::vector<Pchip> node;  // one interpolant per grid node, index = flat node id
};

// ============================================================================
// Factories
// ============================================================================

PrescribedCurvature PrescribedCurvature::zero() {
    PrescribedCurvature r;
    r.kind_ = Kind::zero;
    r.nonnegative_ = true;
    return r;
}

PrescribedCurvature PrescribedCurvature::constant(double value) {
    PrescribedCurvature r;
    r.kind_ = Kind::constant_value;
    r.amplitude_ = value;
    r.nonnegative_ = value >= 0.0;
    return r;
}

PrescribedCurvature PrescribedCurvature::inverse_power(double amplitude, double power) {
    if (!(power >= 0.0)) {
        throw ConfigError("prescribed curvature: inverse-power exponent must be >= 0, got " +
                          std::to_string(power));
    }
    PrescribedCurvature r;
    r.kind_ = Kind::inverse_power;
    r.amplitude_ = amplitude;
    r.power_ = power;
    r.nonnegative_ = amplitude >= 0.0;
    return r;
}

PrescribedCurvature PrescribedCurvature::tabulated(std::vector<double> times,
                                                   std::vector<Field> fields) {
    if (times.size() < 2 || times.size() != fields.size()) {
        throw ConfigError("prescribed curvature: tabulated kind needs >= 2 samples with "
                          "matching times/fields counts");
    }
    for (std::size_t k = 1; k < times.size(); ++k) {
        if (!(times[k] > times[k - 1])) {
            throw ConfigError("prescribed curvature: tabulated times must be strictly increasing");
        }
    }
    const GridPtr grid = fields.front().grid();
    for (const Field& f : fields) {
        if (f.grid() != grid) {
            throw ConfigError("prescribed curvature: tabulated fields must share one grid");
        }
    }

    auto table = std::make_shared<Table>();
    table->grid = grid;
    table->times = times;
    const std::size_t n = grid->size();
    table->node.reserve(n);
    std::vector<double> y(times.size());
    bool nonneg = true;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < times.size(); ++k) {
            y[k] = fields[k][i];
            nonneg = nonneg && y[k] >= 0.0;
        }
        table->node.emplace_back(times, y);
    }

    PrescribedCurvature r;
    r.kind_ = Kind::tabulated;
    r.nonnegative_ = nonneg;  // monotone interpolation cannot overshoot the data
    r.table_ = std::move(table);
    return r;
}

// ============================================================================
// Evaluation
// ============================================================================

namespace {

double clamp_time(double t, const std::vector<double>& times) {
    return std::min(std::max(t, times.front()), times.back());
}

}  // namespace

Field PrescribedCurvature::eval(const GridPtr& grid, double t) const {
    switch (kind_) {
        case Kind::zero:
            return Field(grid, 0.0);
        case Kind::constant_value:
            return Field(grid, amplitude_);
        case Kind::inverse_power:
            return Field(grid, amplitude_ * std::pow(t, -power_));
        case Kind::tabulated: {
            if (grid != table_->grid) {
                throw ConfigError("prescribed curvature: tabulated data lives on a different grid");
            }
            const double tc = clamp_time(t, table_->times);
            Field out(grid);
            for (std::size_t i = 0; i < std::size_t(grid->size()); ++i) {
                out[i] = table_->node[i].value(tc);
            }
            return out;
        }
    }
    throw ConfigError("prescribed curvature: unknown kind");
}

Extrema PrescribedCurvature::extrema(const GridPtr& grid, double t) const {
    switch (kind_) {
        case Kind::zero:
            return Extrema{0.0, 0.0};
        case Kind::constant_value:
            return Extrema{amplitude_, amplitude_};
        case Kind::inverse_power: {
            const double v = amplitude_ * std::pow(t, -power_);
            return Extrema{v, v};
        }
        case Kind::tabulated: {
            if (grid != table_->grid) {
                throw ConfigError("prescribed curvature: tabulated data lives on a different grid");
            }
            const double tc = clamp_time(t, table_->times);
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            for (const Pchip& p : table_->node) {
                const double v = p.value(tc);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            return Extrema{lo, hi};
        }
    }
    throw ConfigError("prescribed curvature: unknown kind");
}

std::string PrescribedCurvature::describe() const {
    char buf[128];
    switch (kind_) {
        case Kind::zero:
            return "zero";
        case Kind::constant_value:
            std::snprintf(buf, sizeof buf, "constant %.17g", amplitude_);
            return buf;
        case Kind::inverse_power:
            std::snprintf(buf, sizeof buf, "power: amplitude %.17g, exponent %.17g",
                          amplitude_, power_);
            return buf;
        case Kind::tabulated:
            std::snprintf(buf, sizeof buf, "tabulated: %zu samples on [%.17g, %.17g]",
                          table_->times.size(), table_->times.front(), table_->times.back());
            return buf;
    }
    return "unknown";
}

}  // namespace qsphere
