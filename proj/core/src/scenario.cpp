/// @file scenario.cpp
/// @brief Scenario configs, presets, the run pipeline, and record persistence.
///
/// Everything a run writes goes through format_double / nlohmann dump, both of
/// which emit shortest round-trip decimals, so a (config, seed) pair produces
/// byte-identical artifacts on repeat runs; nothing here consults clocks,
/// locales, or environment state.

#include "qsphere/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "qsphere/audit.hpp"
#include "qsphere/conformal.hpp"
#include "qsphere/envelopes.hpp"
#include "qsphere/errors.hpp"
#include "qsphere/numerics.hpp"
#include "qsphere/prescribed.hpp"
#include "qsphere/qsf_io.hpp"
#include "qsphere/ricci_flow.hpp"

namespace qsphere {
namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

constexpr double kEnvelopeTol = 1e-4;   ///< hard containment tolerance
constexpr double kClosureFloor = 1e-3;  ///< hard closure tolerance at one level
constexpr double kPi = std::numbers::pi;

// ============================================================================
// Small utilities
// ============================================================================

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void dump_json(const std::string& path, const ordered_json& j) {
    write_text_atomic(path, j.dump(2) + "\n");
}

std::string res_dirname(int nlat) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "res-%03d", nlat);
    return buf;
}

// ============================================================================
// JSON access with strict unknown-key rejection
// ============================================================================

const ordered_json* find_key(const ordered_json& obj, const char* key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

void check_keys(const ordered_json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
    if (!obj.is_object())
        throw ConfigError("'" + where + "' must be a JSON object");
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* a : allowed)
            if (item.key() == a) { known = true; break; }
        if (!known) {
            std::string list;
            for (const char* a : allowed) {
                if (!list.empty()) list += ", ";
                list += a;
            }
            throw ConfigError("unknown key '" + where + "." + item.key() +
                              "' (allowed: " + list + ")");
        }
    }
}

double get_num(const ordered_json& obj, const char* key, double dflt,
               const std::string& where) {
    const ordered_json* v = find_key(obj, key);
    if (!v) return dflt;
    if (!v->is_number())
        throw ConfigError("'" + where + "." + key + "' must be a number");
    return v->get<double>();
}

/// Like get_num, but a JSON null reads back as NaN (used for optional reals
/// such as the horizon window parameter, since JSON has no NaN literal).
double get_num_or_nan(const ordered_json& obj, const char* key, double dflt,
                      const std::string& where) {
    const ordered_json* v = find_key(obj, key);
    if (!v) return dflt;
    if (v->is_null()) return std::numeric_limits<double>::quiet_NaN();
    if (!v->is_number())
        throw ConfigError("'" + where + "." + key + "' must be a number or null");
    return v->get<double>();
}

int get_int(const ordered_json& obj, const char* key, int dflt,
            const std::string& where) {
    const ordered_json* v = find_key(obj, key);
    if (!v) return dflt;
    if (!v->is_number_integer())
        throw ConfigError("'" + where + "." + key + "' must be an integer");
    return v->get<int>();
}

bool get_bool(const ordered_json& obj, const char* key, bool dflt,
              const std::string& where) {
    const ordered_json* v = find_key(obj, key);
    if (!v) return dflt;
    if (!v->is_boolean())
        throw ConfigError("'" + where + "." + key + "' must be a boolean");
    return v->get<bool>();
}

std::string get_str(const ordered_json& obj, const char* key, std::string dflt,
                    const std::string& where) {
    const ordered_json* v = find_key(obj, key);
    if (!v) return dflt;
    if (!v->is_string())
        throw ConfigError("'" + where + "." + key + "' must be a string");
    return v->get<std::string>();
}

std::uint64_t get_u64(const ordered_json& obj, const char* key, std::uint64_t dflt,
                      const std::string& where) {
    const ordered_json* v = find_key(obj, key);
    if (!v) return dflt;
    if (!v->is_number_integer() || (v->is_number_integer() && v->get<std::int64_t>() < 0 &&
                                    !v->is_number_unsigned()))
        throw ConfigError("'" + where + "." + key + "' must be a nonnegative integer");
    return v->get<std::uint64_t>();
}

std::vector<double> get_num_vec(const ordered_json& obj, const char* key,
                                std::vector<double> dflt, const std::string& where) {
    const ordered_json* v = find_key(obj, key);
    if (!v) return dflt;
    if (!v->is_array())
        throw ConfigError("'" + where + "." + key + "' must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : *v) {
        if (!e.is_number())
            throw ConfigError("'" + where + "." + key + "' must contain only numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

std::vector<int> get_int_vec(const ordered_json& obj, const char* key,
                             std::vector<int> dflt, const std::string& where) {
    const ordered_json* v = find_key(obj, key);
    if (!v) return dflt;
    if (!v->is_array())
        throw ConfigError("'" + where + "." + key + "' must be an array of integers");
    std::vector<int> out;
    for (const auto& e : *v) {
        if (!e.is_number_integer())
            throw ConfigError("'" + where + "." + key + "' must contain only integers");
        out.push_back(e.get<int>());
    }
    return out;
}

// ============================================================================
// Enum <-> string maps
// ============================================================================

std::string branch_name(EnvelopeBranch b) {
    return b == EnvelopeBranch::conformal ? "conformal" : "ricci";
}

EnvelopeBranch parse_branch(const std::string& s) {
    if (s == "conformal") return EnvelopeBranch::conformal;
    if (s == "ricci") return EnvelopeBranch::ricci;
    throw ConfigError("branch must be \"conformal\" or \"ricci\", got \"" + s + "\"");
}

std::string stepper_name(Stepper s) {
    return s == Stepper::rk4 ? "rk4" : "imex-sbdf2";
}

Stepper parse_stepper(const std::string& s) {
    if (s == "rk4") return Stepper::rk4;
    if (s == "imex-sbdf2") return Stepper::imex_sbdf2;
    throw ConfigError("stepper must be \"rk4\" or \"imex-sbdf2\", got \"" + s + "\"");
}

std::string variable_name(DependentVariable v) {
    switch (v) {
        case DependentVariable::lapse: return "lapse";
        case DependentVariable::inverse_square: return "inverse-square";
        default: return "mass-aspect";
    }
}

DependentVariable parse_variable(const std::string& s) {
    if (s == "lapse") return DependentVariable::lapse;
    if (s == "inverse-square") return DependentVariable::inverse_square;
    if (s == "mass-aspect") return DependentVariable::mass_aspect;
    throw ConfigError("variable must be \"lapse\", \"inverse-square\", or \"mass-aspect\", got \"" +
                      s + "\"");
}

std::string status_name(ConditionStatus s) {
    switch (s) {
        case ConditionStatus::pass: return "pass";
        case ConditionStatus::fail: return "fail";
        default: return "indeterminate";
    }
}

// ============================================================================
// Config validation
// ============================================================================

void validate_config(const ScenarioConfig& cfg) {
    if (cfg.schema_version != 1)
        throw ConfigError("schema_version must be 1, got " + std::to_string(cfg.schema_version));
    if (cfg.name.empty()) throw ConfigError("name must be nonempty");
    parse_branch(cfg.branch);

    const BackgroundSpec& bg = cfg.background;
    if (bg.kind != "round" && bg.kind != "separable" && bg.kind != "ellipsoid")
        throw ConfigError("background.kind must be \"round\", \"separable\", or \"ellipsoid\"");
    if (cfg.branch == "conformal" && bg.kind == "ellipsoid")
        throw ConfigError("background.kind \"ellipsoid\" requires branch \"ricci\"");
    if (cfg.branch == "ricci" && bg.kind == "separable")
        throw ConfigError("background.kind \"separable\" requires branch \"conformal\"");
    if (bg.kind == "separable") {
        if (bg.harmonic_l < 1 || bg.harmonic_l > 16)
            throw ConfigError("background.harmonic_l must be in [1, 16]");
        if (!(bg.power > 0))
            throw ConfigError("background.power must be positive (decaying profiles)");
    }
    if (bg.kind == "ellipsoid" && !(bg.axis_ratio > 0))
        throw ConfigError("background.axis_ratio must be positive");
    if (bg.flow_t_max < 0)
        throw ConfigError("background.flow_t_max must be nonnegative (0 = automatic)");

    const CurvatureSpec& cv = cfg.curvature;
    if (cv.kind != "zero" && cv.kind != "constant" && cv.kind != "inverse-power")
        throw ConfigError("curvature.kind must be \"zero\", \"constant\", or \"inverse-power\"");
    if (cv.kind == "inverse-power" && !(cv.power > 0))
        throw ConfigError("curvature.power must be positive");

    const LapseSpec& lp = cfg.lapse;
    if (lp.kind != "constant" && lp.kind != "harmonic" && lp.kind != "random")
        throw ConfigError("lapse.kind must be \"constant\", \"harmonic\", or \"random\"");
    if (!(lp.value > 0)) throw ConfigError("lapse.value must be positive");
    if (!(std::abs(lp.perturbation) < 1))
        throw ConfigError("lapse.perturbation must lie in (-1, 1) to keep the lapse positive");
    if (lp.kind != "constant" && (lp.harmonic_l < 1 || lp.harmonic_l > 16))
        throw ConfigError("lapse.harmonic_l must be in [1, 16]");

    const HorizonSpec& hz = cfg.horizon;
    if (!hz.epsilons.empty()) {
        if (hz.epsilons.size() < 2)
            throw ConfigError("horizon.epsilons needs at least two ladder entries");
        for (double e : hz.epsilons)
            if (!(e > 0) || !(e < 0.5))
                throw ConfigError("horizon.epsilons entries must lie in (0, 0.5)");
        for (std::size_t i = 1; i < hz.epsilons.size(); ++i)
            if (!(hz.epsilons[i] < hz.epsilons[i - 1]))
                throw ConfigError("horizon.epsilons must be strictly decreasing");
    }
    if (!std::isnan(hz.eta) && !(hz.eta > 0 && hz.eta < 1))
        throw ConfigError("horizon.eta must lie in (0, 1) or be omitted");

    const EvolutionSpec& ev = cfg.evolution;
    if (cfg.horizon.enabled) {
        if (!(ev.t_end > 0))
            throw ConfigError("evolution.t_end (shifted final time) must be positive");
    } else if (!(ev.t_end > 1)) {
        throw ConfigError("evolution.t_end must exceed the initial leaf time 1");
    }
    parse_stepper(ev.stepper);
    parse_variable(ev.variable);
    if (ev.ds < 0 || ev.ds > 0.5)
        throw ConfigError("evolution.ds must lie in [0, 0.5] (0 = automatic)");
    if (ev.snapshots < 5 || ev.snapshots > 100000)
        throw ConfigError("evolution.snapshots must lie in [5, 100000]");
    if (ev.dealias_lcut < 0)
        throw ConfigError("evolution.dealias_lcut must be nonnegative");

    if (cfg.resolutions.empty())
        throw ConfigError("resolutions must name at least one grid size");
    for (std::size_t i = 0; i < cfg.resolutions.size(); ++i) {
        int n = cfg.resolutions[i];
        if (n < 8 || n > 128 || n % 2 != 0)
            throw ConfigError("resolutions entries must be even and in [8, 128]");
        if (i > 0 && cfg.resolutions[i] <= cfg.resolutions[i - 1])
            throw ConfigError("resolutions must be strictly increasing");
    }

    if (bg.flow_t_max > 0) {
        double cover = cfg.horizon.enabled ? ev.t_end + 1.0 : ev.t_end;
        if (bg.flow_t_max < cover)
            throw ConfigError("background.flow_t_max does not cover the evolution range (needs >= " +
                              format_double(cover) + ")");
    }
}

}  // namespace

// ============================================================================
// Config parse / serialize
// ============================================================================

ScenarioConfig parse_config(const std::string& json_text) {
    ordered_json j;
    try {
        j = ordered_json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    check_keys(j, "config",
               {"schema_version", "name", "anchor", "branch", "background", "curvature",
                "lapse", "horizon", "evolution", "resolutions", "seed",
                "allow_k_violation", "output_dir"});
    if (!find_key(j, "schema_version"))
        throw ConfigError("config is missing required key 'schema_version'");

    ScenarioConfig cfg;
    cfg.schema_version = get_int(j, "schema_version", 0, "config");
    cfg.name = get_str(j, "name", cfg.name, "config");
    cfg.anchor = get_str(j, "anchor", cfg.anchor, "config");
    cfg.branch = get_str(j, "branch", cfg.branch, "config");

    if (const ordered_json* b = find_key(j, "background")) {
        check_keys(*b, "config.background",
                   {"kind", "amplitude", "power", "harmonic_l", "axis_ratio", "flow_t_max"});
        cfg.background.kind = get_str(*b, "kind", cfg.background.kind, "config.background");
        cfg.background.amplitude =
            get_num(*b, "amplitude", cfg.background.amplitude, "config.background");
        cfg.background.power = get_num(*b, "power", cfg.background.power, "config.background");
        cfg.background.harmonic_l =
            get_int(*b, "harmonic_l", cfg.background.harmonic_l, "config.background");
        cfg.background.axis_ratio =
            get_num(*b, "axis_ratio", cfg.background.axis_ratio, "config.background");
        cfg.background.flow_t_max =
            get_num(*b, "flow_t_max", cfg.background.flow_t_max, "config.background");
    }
    if (const ordered_json* c = find_key(j, "curvature")) {
        check_keys(*c, "config.curvature", {"kind", "amplitude", "power"});
        cfg.curvature.kind = get_str(*c, "kind", cfg.curvature.kind, "config.curvature");
        cfg.curvature.amplitude =
            get_num(*c, "amplitude", cfg.curvature.amplitude, "config.curvature");
        cfg.curvature.power = get_num(*c, "power", cfg.curvature.power, "config.curvature");
    }
    if (const ordered_json* l = find_key(j, "lapse")) {
        check_keys(*l, "config.lapse", {"kind", "value", "perturbation", "harmonic_l"});
        cfg.lapse.kind = get_str(*l, "kind", cfg.lapse.kind, "config.lapse");
        cfg.lapse.value = get_num(*l, "value", cfg.lapse.value, "config.lapse");
        cfg.lapse.perturbation =
            get_num(*l, "perturbation", cfg.lapse.perturbation, "config.lapse");
        cfg.lapse.harmonic_l = get_int(*l, "harmonic_l", cfg.lapse.harmonic_l, "config.lapse");
    }
    if (const ordered_json* h = find_key(j, "horizon")) {
        check_keys(*h, "config.horizon", {"enabled", "epsilons", "eta"});
        cfg.horizon.enabled = get_bool(*h, "enabled", cfg.horizon.enabled, "config.horizon");
        cfg.horizon.epsilons =
            get_num_vec(*h, "epsilons", cfg.horizon.epsilons, "config.horizon");
        cfg.horizon.eta = get_num_or_nan(*h, "eta", cfg.horizon.eta, "config.horizon");
    }
    if (const ordered_json* e = find_key(j, "evolution")) {
        check_keys(*e, "config.evolution",
                   {"t_end", "stepper", "variable", "ds", "snapshots", "dealias_lcut"});
        cfg.evolution.t_end = get_num(*e, "t_end", cfg.evolution.t_end, "config.evolution");
        cfg.evolution.stepper =
            get_str(*e, "stepper", cfg.evolution.stepper, "config.evolution");
        cfg.evolution.variable =
            get_str(*e, "variable", cfg.evolution.variable, "config.evolution");
        cfg.evolution.ds = get_num(*e, "ds", cfg.evolution.ds, "config.evolution");
        cfg.evolution.snapshots =
            get_int(*e, "snapshots", cfg.evolution.snapshots, "config.evolution");
        cfg.evolution.dealias_lcut =
            get_int(*e, "dealias_lcut", cfg.evolution.dealias_lcut, "config.evolution");
    }
    cfg.resolutions = get_int_vec(j, "resolutions", cfg.resolutions, "config");
    cfg.seed = get_u64(j, "seed", cfg.seed, "config");
    cfg.allow_k_violation = get_bool(j, "allow_k_violation", cfg.allow_k_violation, "config");
    cfg.output_dir = get_str(j, "output_dir", cfg.output_dir, "config");

    validate_config(cfg);
    return cfg;
}

namespace {

ordered_json config_json_object(const ScenarioConfig& cfg) {
    ordered_json j;
    j["schema_version"] = cfg.schema_version;
    j["name"] = cfg.name;
    j["anchor"] = cfg.anchor;
    j["branch"] = cfg.branch;
    j["background"] = {{"kind", cfg.background.kind},
                       {"amplitude", cfg.background.amplitude},
                       {"power", cfg.background.power},
                       {"harmonic_l", cfg.background.harmonic_l},
                       {"axis_ratio", cfg.background.axis_ratio},
                       {"flow_t_max", cfg.background.flow_t_max}};
    j["curvature"] = {{"kind", cfg.curvature.kind},
                      {"amplitude", cfg.curvature.amplitude},
                      {"power", cfg.curvature.power}};
    j["lapse"] = {{"kind", cfg.lapse.kind},
                  {"value", cfg.lapse.value},
                  {"perturbation", cfg.lapse.perturbation},
                  {"harmonic_l", cfg.lapse.harmonic_l}};
    ordered_json hz;
    hz["enabled"] = cfg.horizon.enabled;
    hz["epsilons"] = cfg.horizon.epsilons;
    if (std::isnan(cfg.horizon.eta))
        hz["eta"] = nullptr;
    else
        hz["eta"] = cfg.horizon.eta;
    j["horizon"] = hz;
    j["evolution"] = {{"t_end", cfg.evolution.t_end},
                      {"stepper", cfg.evolution.stepper},
                      {"variable", cfg.evolution.variable},
                      {"ds", cfg.evolution.ds},
                      {"snapshots", cfg.evolution.snapshots},
                      {"dealias_lcut", cfg.evolution.dealias_lcut}};
    j["resolutions"] = cfg.resolutions;
    j["seed"] = cfg.seed;
    j["allow_k_violation"] = cfg.allow_k_violation;
    j["output_dir"] = cfg.output_dir;
    return j;
}

}  // namespace

std::string config_to_json(const ScenarioConfig& cfg) {
    return config_json_object(cfg).dump(2) + "\n";
}

// ============================================================================
// Presets
// ============================================================================

namespace {

ScenarioConfig base_preset(const std::string& name, const std::string& anchor) {
    ScenarioConfig cfg;
    cfg.name = name;
    cfg.anchor = anchor;
    return cfg;
}

ScenarioConfig preset_flat() {
    ScenarioConfig cfg = base_preset("flat", "M1 interior existence");
    cfg.evolution.t_end = 20.0;
    cfg.evolution.snapshots = 65;
    return cfg;
}

ScenarioConfig preset_family(double c) {
    if (!(c > 0))
        throw ConfigError("schwarzschild-family parameter must be a positive lapse value");
    ScenarioConfig cfg = base_preset("schwarzschild-family", "corollary: exterior Schwarzschild");
    cfg.lapse.value = c;
    cfg.evolution.t_end = 40.0;
    cfg.evolution.ds = 0.008;
    cfg.evolution.snapshots = 65;
    return cfg;
}

ScenarioConfig preset_schwarzschild_horizon() {
    ScenarioConfig cfg = base_preset("schwarzschild-horizon", "M2 horizon limit");
    cfg.horizon.enabled = true;
    cfg.evolution.t_end = 20.0;
    cfg.evolution.snapshots = 65;
    return cfg;
}

ScenarioConfig preset_perturbation(double amplitude) {
    if (!(std::abs(amplitude) <= 0.3))
        throw ConfigError("conformal-perturbation amplitude must lie in [-0.3, 0.3] "
                          "(larger profiles can break leaf-flow positivity)");
    ScenarioConfig cfg = base_preset("conformal-perturbation", "M1 interior existence");
    cfg.background.kind = "separable";
    cfg.background.amplitude = amplitude;
    cfg.background.power = 2.0;
    cfg.background.harmonic_l = 2;
    cfg.evolution.t_end = 20.0;
    cfg.evolution.snapshots = 65;
    return cfg;
}

ScenarioConfig preset_ellipsoid() {
    ScenarioConfig cfg = base_preset("ricciflow-ellipsoid", "M3 flow convergence");
    cfg.branch = "ricci";
    cfg.background.kind = "ellipsoid";
    cfg.background.axis_ratio = 1.2;
    cfg.lapse.kind = "harmonic";
    cfg.lapse.value = 0.9;
    cfg.lapse.perturbation = 0.1;
    cfg.lapse.harmonic_l = 2;
    cfg.evolution.t_end = 20.0;
    cfg.evolution.snapshots = 129;
    cfg.resolutions = {16, 32};
    return cfg;
}

ScenarioConfig preset_ellipsoid_horizon() {
    ScenarioConfig cfg =
        base_preset("ricciflow-ellipsoid-horizon", "M4 horizon limit on a flow background");
    cfg.branch = "ricci";
    cfg.background.kind = "ellipsoid";
    cfg.background.axis_ratio = 1.2;
    cfg.horizon.enabled = true;
    cfg.evolution.t_end = 20.0;
    cfg.evolution.snapshots = 129;
    return cfg;
}

}  // namespace

std::vector<PresetInfo> preset_catalog() {
    return {
        {"flat", "", "round leaves, zero curvature, unit lapse: the Euclidean exterior",
         "M1 interior existence", "u == 1 exactly; every decay norm at the roundoff floor"},
        {"schwarzschild-family", "initial lapse c > 0 (default 0.8)",
         "round leaves, zero curvature, constant lapse c",
         "corollary: exterior Schwarzschild",
         "constant mass (1 - 1/c^2)/2; c = 0.8 gives -0.28125"},
        {"schwarzschild-horizon", "", "horizon construction over round leaves, zero curvature",
         "M2 horizon limit", "u^-2 -> (t-1)/t after ladder extrapolation; ADM mass 1/2"},
        {"conformal-perturbation", "profile amplitude in [-0.3, 0.3] (default 0.05)",
         "decaying quadrupole conformal profile, zero curvature, unit lapse",
         "M1 interior existence", "curvature closure at order >= 2; decay slopes <= -0.9"},
        {"ricciflow-ellipsoid", "", "flow background from a 1.2 ellipsoid, zero curvature",
         "M3 flow convergence", "leaf area 4 pi conserved; R -> 2 and |M| -> 0 at rate ~ t^-4"},
        {"ricciflow-ellipsoid-horizon", "",
         "horizon construction on the ellipsoid flow background, zero curvature",
         "M4 horizon limit on a flow background",
         "nondecreasing Hawking mass; limit mass >= 1/2"},
        {"custom-from-file", "", "placeholder: supply a full JSON document via --config",
         "unlabeled (taken from the config)", ""},
    };
}

ScenarioConfig make_preset(const std::string& spec) {
    std::string name = spec;
    bool has_param = false;
    double param = 0.0;
    if (auto pos = spec.find(':'); pos != std::string::npos) {
        name = spec.substr(0, pos);
        std::string rest = spec.substr(pos + 1);
        char* end = nullptr;
        param = std::strtod(rest.c_str(), &end);
        if (rest.empty() || end != rest.c_str() + rest.size() || !std::isfinite(param))
            throw ConfigError("preset parameter '" + rest + "' is not a finite number");
        has_param = true;
    }

    ScenarioConfig cfg;
    if (name == "flat") {
        if (has_param) throw ConfigError("preset flat takes no parameter");
        cfg = preset_flat();
    } else if (name == "schwarzschild-family") {
        cfg = preset_family(has_param ? param : 0.8);
    } else if (name == "schwarzschild-horizon") {
        if (has_param) throw ConfigError("preset schwarzschild-horizon takes no parameter");
        cfg = preset_schwarzschild_horizon();
    } else if (name == "conformal-perturbation") {
        cfg = preset_perturbation(has_param ? param : 0.05);
    } else if (name == "ricciflow-ellipsoid") {
        if (has_param) throw ConfigError("preset ricciflow-ellipsoid takes no parameter");
        cfg = preset_ellipsoid();
    } else if (name == "ricciflow-ellipsoid-horizon") {
        if (has_param)
            throw ConfigError("preset ricciflow-ellipsoid-horizon takes no parameter");
        cfg = preset_ellipsoid_horizon();
    } else if (name == "custom-from-file") {
        throw ConfigError(
            "preset custom-from-file is a placeholder: pass --config FILE with a full "
            "scenario document instead");
    } else {
        throw ConfigError("unknown preset '" + name + "' (see `qsphere list-presets`)");
    }
    validate_config(cfg);
    return cfg;
}

// ============================================================================
// Field builders
// ============================================================================

Field harmonic_field(const GridPtr& grid, int l) {
    if (l < 0 || l > grid->lmax())
        throw ConfigError("harmonic degree " + std::to_string(l) +
                          " is outside the grid band limit " + std::to_string(grid->lmax()));
    const double norm = std::sqrt((2.0 * l + 1.0) / (4.0 * kPi));
    Field out(grid);
    for (int i = 0; i < grid->nlat(); ++i) {
        const double p = std::legendre(static_cast<unsigned>(l), grid->x(i));
        for (int j = 0; j < grid->nlon(); ++j) out.at(i, j) = norm * p;
    }
    return out;
}

namespace {

Field build_initial_lapse(const ScenarioConfig& cfg, const GridPtr& grid) {
    const LapseSpec& lp = cfg.lapse;
    if (lp.kind == "constant") return Field::constant(grid, lp.value);
    if (lp.kind == "harmonic") {
        Field y = harmonic_field(grid, lp.harmonic_l);
        Field out(grid);
        for (std::size_t k = 0; k < out.size(); ++k)
            out[k] = lp.value * (1.0 + lp.perturbation * y[k]);
        return out;
    }
    // "random": smooth band-limited noise with unit sup norm, derived
    // deterministically from the seed (and the grid dimensions).
    SeededUniform rng(cfg.seed);
    Field noise(grid);
    for (std::size_t k = 0; k < noise.size(); ++k) noise[k] = rng.next();
    Field smooth = truncate_band(noise, lp.harmonic_l);
    double sup = linf_norm(smooth);
    Field out(grid);
    for (std::size_t k = 0; k < out.size(); ++k) {
        double s = sup > 0 ? smooth[k] / sup : 0.0;
        out[k] = lp.value * (1.0 + lp.perturbation * s);
    }
    return out;
}

PrescribedCurvature build_rbar(const ScenarioConfig& cfg) {
    const CurvatureSpec& cv = cfg.curvature;
    if (cv.kind == "zero") return PrescribedCurvature::zero();
    if (cv.kind == "constant") return PrescribedCurvature::constant(cv.amplitude);
    return PrescribedCurvature::inverse_power(cv.amplitude, cv.power);
}

/// Resolved background for one grid.  Exactly one member is engaged.
struct BackgroundData {
    std::optional<ConformalFoliation> fol;
    std::optional<RicciFlowTrajectory> traj;
    bool ricci() const { return traj.has_value(); }
};

/// `cover` is the largest leaf time any consumer will query (flow
/// trajectories must reach it; conformal backgrounds are analytic in t).
BackgroundData build_background(const ScenarioConfig& cfg, const GridPtr& grid, double cover) {
    BackgroundData bg;
    if (cfg.branch == "conformal") {
        if (cfg.background.kind == "round") {
            bg.fol = ConformalFoliation::round(grid);
        } else {
            Field y = harmonic_field(grid, cfg.background.harmonic_l);
            Field profile(grid);
            for (std::size_t k = 0; k < profile.size(); ++k)
                profile[k] = cfg.background.amplitude * y[k];
            bg.fol = ConformalFoliation::separable(profile, TimeLawKind::inverse_power,
                                                   cfg.background.power);
        }
    } else {
        AxiMetric initial = cfg.background.kind == "ellipsoid"
                                ? make_ellipsoid(grid, cfg.background.axis_ratio)
                                : make_round(grid);
        double t_max = cfg.background.flow_t_max > 0 ? cfg.background.flow_t_max : cover;
        if (t_max < cover)
            throw ConfigError("background.flow_t_max does not cover the requested range");
        bg.traj = run_flow(initial, t_max, FlowControls{});
    }
    return bg;
}

// ============================================================================
// Report serialization
// ============================================================================

ordered_json fit_json(const LinearFit& f) {
    return {{"slope", f.slope},
            {"intercept", f.intercept},
            {"r2", f.r2},
            {"stderr_slope", f.stderr_slope},
            {"stderr_intercept", f.stderr_intercept},
            {"n", f.n}};
}

ordered_json conditions_json(const HypothesisReport& rep) {
    ordered_json j;
    j["kind"] = "conformal-hypotheses";
    j["all_pass"] = rep.all_pass();
    ordered_json arr = ordered_json::array();
    for (const ConditionRecord& c : rep.conditions) {
        ordered_json e;
        e["name"] = c.name;
        e["status"] = status_name(c.status);
        e["evidence"] = c.evidence;
        e["fitted_c"] = c.fitted_c;  // NaN serializes as null
        e["slope"] = c.slope;
        e["r2"] = c.r2;
        e["detail"] = c.detail;
        e["note"] = c.note;
        arr.push_back(std::move(e));
    }
    j["conditions"] = std::move(arr);
    return j;
}

ordered_json flow_hypothesis_json(const RicciFlowTrajectory& traj,
                                  const PrescribedCurvature& rbar, double cover) {
    ordered_json j;
    j["kind"] = "flow-background";
    j["area_drift_max"] = traj.max_area_drift();
    j["lambda_R"] = traj.lambda_R();
    j["lambda_M"] = traj.lambda_M();
    j["r2_R"] = traj.r2_R();
    j["r2_M"] = traj.r2_M();

    // Comparison-structure margin: min over leaves of (min R - t^2 max Rbar).
    // Positive margins keep the parabolic source sign-definite on [1, cover].
    double margin_min = std::numeric_limits<double>::infinity();
    ordered_json samples = ordered_json::array();
    const auto& all = traj.samples();
    std::size_t stride = std::max<std::size_t>(1, all.size() / 32);
    for (std::size_t k = 0; k < all.size(); ++k) {
        const FlowSample& s = all[k];
        if (s.t > cover * (1 + 1e-12)) break;
        double rb_max = rbar.extrema(traj.grid(), s.t).max;
        double margin = s.min_R - s.t * s.t * rb_max;
        margin_min = std::min(margin_min, margin);
        if (k % stride == 0 || k + 1 == all.size()) {
            samples.push_back({{"t", s.t},
                               {"min_R", s.min_R},
                               {"norm_R_dev", s.norm_R_dev},
                               {"norm_M", s.norm_M},
                               {"margin", margin}});
        }
    }
    j["sign_margin_min"] = margin_min;
    j["samples"] = std::move(samples);
    return j;
}

void write_envelope_csv(const std::string& path, const EnvelopePair& env,
                        const std::vector<double>& times, const std::vector<double>& w_min,
                        const std::vector<double>& w_max) {
    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < times.size(); ++k)
        rows.push_back({times[k], env.lower[k], env.upper[k], env.exp_lower[k],
                        env.exp_upper[k], w_min[k], w_max[k]});
    write_csv(path, {"t", "lower", "upper", "exp_lower", "exp_upper", "w_min", "w_max"}, rows);
}

void write_ktrace_csv(const std::string& path, const AdmissibilityConstant& K) {
    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < K.t.size(); ++k) rows.push_back({K.t[k], K.S[k]});
    write_csv(path, {"t", "S"}, rows);
}

void write_flow_csv(const std::string& path, const RicciFlowTrajectory& traj) {
    std::vector<std::vector<double>> rows;
    for (const FlowSample& s : traj.samples())
        rows.push_back({s.t, s.area, s.mean_R, s.norm_R_dev, s.norm_M, s.min_R, s.pole_defect});
    write_csv(path, {"t", "area", "mean_R", "norm_R_dev", "norm_M", "min_R", "pole_defect"},
              rows);
}

/// Everything the post-run verification produces for one record.
struct AuditBundle {
    CurvatureAudit curv;
    MassSeries masses;
    std::optional<AdmFit> adm;
    std::optional<DriftAudit> drift;
    FlatnessReport flat;
};

AuditBundle run_audits(const BackgroundData& bg, const PrescribedCurvature& rbar,
                       const SolutionRecord& rec) {
    AuditBundle out;
    if (bg.ricci()) {
        out.curv = curvature_audit_ricci(*bg.traj, rbar, rec);
        out.masses = mass_series_ricci(*bg.traj, rec);
        out.drift = hawking_drift_ricci(*bg.traj, rbar, rec);
        out.flat = flatness_ricci(*bg.traj, rec);
    } else {
        out.curv = curvature_audit_conformal(*bg.fol, rbar, rec);
        out.masses = mass_series_conformal(*bg.fol, rec);
        if (bg.fol->is_round()) out.drift = hawking_drift_round(*bg.fol, rbar, rec);
        out.flat = flatness_conformal(*bg.fol, rec);
    }
    if (rec.times.back() >= 20.0 * (1 - 1e-12)) out.adm = adm_mass_fit(out.masses);
    return out;
}

void write_audit_reports(const std::string& reports_dir, const AuditBundle& a,
                         bool horizon, bool rbar_nonnegative) {
    {
        std::vector<std::vector<double>> rows;
        for (std::size_t k = 0; k < a.curv.t.size(); ++k)
            rows.push_back({a.curv.t[k], a.curv.linf[k], a.curv.l2[k]});
        write_csv(reports_dir + "/curvature.csv", {"t", "linf", "l2"}, rows);
    }
    {
        std::vector<std::vector<double>> rows;
        for (std::size_t k = 0; k < a.masses.t.size(); ++k)
            rows.push_back({a.masses.t[k], a.masses.hawking[k], a.masses.flux[k],
                            a.masses.correction[k], a.masses.estimator[k]});
        write_csv(reports_dir + "/masses.csv",
                  {"t", "hawking", "flux", "correction", "estimator"}, rows);
    }
    {
        ordered_json j;
        j["final_hawking"] = a.masses.hawking.back();
        j["final_estimator"] = a.masses.estimator.back();
        if (a.adm) {
            j["adm"] = {{"mass", a.adm->mass},
                        {"uncertainty", a.adm->uncertainty},
                        {"window_ok", a.adm->window_ok},
                        {"max_correction", a.adm->max_correction},
                        {"first_index", a.adm->first_index},
                        {"fit", fit_json(a.adm->fit)}};
        } else {
            j["adm"] = nullptr;
        }
        if (horizon) {
            bool applicable = rbar_nonnegative && a.adm.has_value();
            ordered_json mb;
            mb["applicable"] = applicable;
            mb["threshold"] = 0.5;
            if (applicable) {
                mb["ok"] = a.adm->mass >= 0.5 - a.adm->uncertainty - 1e-12;
                mb["margin"] = a.adm->mass - (0.5 - a.adm->uncertainty);
            } else {
                mb["ok"] = nullptr;
                mb["margin"] = nullptr;
            }
            j["mass_lower_bound"] = mb;
        }
        dump_json(reports_dir + "/masses.json", j);
    }
    if (a.drift) {
        std::vector<std::vector<double>> rows;
        for (std::size_t k = 0; k < a.drift->t.size(); ++k)
            rows.push_back({a.drift->t[k], a.drift->mass[k], a.drift->rhs[k],
                            a.drift->increment[k], a.drift->residual[k]});
        write_csv(reports_dir + "/drift.csv", {"t", "mass", "rhs", "increment", "residual"},
                  rows);
    }
    {
        std::vector<std::vector<double>> rows;
        for (std::size_t k = 0; k < a.flat.t.size(); ++k)
            rows.push_back({a.flat.t[k], a.flat.norm_w[k], a.flat.norm_ut[k],
                            a.flat.norm_grad[k], a.flat.norm_hess[k], a.flat.kappa_tan[k],
                            a.flat.ric_normal[k]});
        write_csv(reports_dir + "/flatness.csv",
                  {"t", "norm_w", "norm_ut", "norm_grad", "norm_hess", "kappa_tan",
                   "ric_normal"},
                  rows);
        ordered_json j;
        j["identically_flat"] = a.flat.identically_flat;
        j["final"] = {{"norm_w", a.flat.norm_w.back()},
                      {"norm_ut", a.flat.norm_ut.back()},
                      {"norm_grad", a.flat.norm_grad.back()},
                      {"norm_hess", a.flat.norm_hess.back()},
                      {"kappa_tan", a.flat.kappa_tan.back()},
                      {"ric_normal", a.flat.ric_normal.back()}};
        j["slopes"] = {{"w", fit_json(a.flat.slope_w)},
                       {"ut", fit_json(a.flat.slope_ut)},
                       {"grad", fit_json(a.flat.slope_grad)},
                       {"hess", fit_json(a.flat.slope_hess)},
                       {"kappa", fit_json(a.flat.slope_kappa)}};
        dump_json(reports_dir + "/flatness.json", j);
    }
}

ordered_json horizon_json(const HorizonResult& hz, const HorizonControls& hc) {
    ordered_json j;
    j["epsilons"] = hc.epsilons;
    j["closure_audited_on"] = "finest-member";
    j["eta_used"] = hz.eta_used;
    j["eta_supplied_ok"] = hz.eta_supplied_ok;
    j["t0_window"] = hz.t0_window;
    j["window_pass"] = hz.window_pass;
    j["mass_bracket_worst"] = hz.mass_bracket_worst;
    j["members"] = hz.members.size();
    j["member_deviation"] = hz.member_deviation;
    j["extrapolation"] = {{"value", hz.extrapolation.value},
                          {"observed_order", hz.extrapolation.observed_order},
                          {"residual", hz.extrapolation.residual},
                          {"converged", hz.extrapolation.converged}};
    return j;
}

}  // namespace

// ============================================================================
// Record persistence
// ============================================================================

void save_record(const std::string& dir, const SolutionRecord& rec,
                 const std::string& config_json, const std::vector<double>* hawking) {
    fs::create_directories(fs::path(dir) / "snapshots");

    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < rec.size(); ++k) {
        Field w = rec.w(k);
        Extrema we = field_extrema(w);
        double mean_m = integrate_sigma(rec.m(k)) / (4.0 * kPi);
        // Round-measure Hawking evaluation; exact on round leaves.
        double hk = hawking ? (*hawking)[k] : mean_m;
        rows.push_back({rec.times[k], we.min, we.max, mean_m, hk});
    }
    write_csv(dir + "/summary.csv", {"t", "w_min", "w_max", "mean_m", "hawking"}, rows);

    ordered_json j;
    j["format"] = "qsphere-record/1";
    j["branch"] = branch_name(rec.branch);
    j["horizon_scaled"] = rec.horizon_scaled;
    j["variable"] = variable_name(rec.variable);
    j["stepper"] = stepper_name(rec.stepper);
    j["nlat"] = rec.grid->nlat();
    j["nlon"] = rec.grid->nlon();
    j["times"] = rec.times;
    j["ds_min"] = rec.ds_min;
    j["ds_max"] = rec.ds_max;
    j["steps"] = rec.steps;
    j["k_violation"] = rec.k_violation;
    j["k_value"] = rec.k_value;  // NaN serializes as null
    if (!config_json.empty()) {
        try {
            j["config"] = ordered_json::parse(config_json);
        } catch (const nlohmann::json::exception&) {
            j["config"] = nullptr;
        }
    } else {
        j["config"] = nullptr;
    }
    dump_json(dir + "/record.json", j);

    char name[32];
    for (std::size_t k = 0; k < rec.size(); ++k) {
        std::snprintf(name, sizeof name, "snap_%04zu.qsf", k);
        save_field((fs::path(dir) / "snapshots" / name).string(), rec.u[k]);
    }
}

SolutionRecord load_record(const std::string& dir, std::string* config_json) {
    ordered_json j;
    try {
        j = ordered_json::parse(slurp(dir + "/record.json"));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("record.json is not valid JSON: ") + e.what());
    }
    if (!j.is_object() || get_str(j, "format", "", "record") != "qsphere-record/1")
        throw ConfigError("not a qsphere record directory: " + dir);

    SolutionRecord rec;
    rec.branch = parse_branch(get_str(j, "branch", "conformal", "record"));
    rec.horizon_scaled = get_bool(j, "horizon_scaled", false, "record");
    rec.variable = parse_variable(get_str(j, "variable", "lapse", "record"));
    rec.stepper = parse_stepper(get_str(j, "stepper", "rk4", "record"));
    int nlat = get_int(j, "nlat", 0, "record");
    int nlon = get_int(j, "nlon", 0, "record");
    rec.grid = build_grid(nlat, nlon);
    rec.times = get_num_vec(j, "times", {}, "record");
    if (rec.times.size() < 2) throw ConfigError("record has fewer than two snapshots");
    rec.ds_min = get_num(j, "ds_min", 0.0, "record");
    rec.ds_max = get_num(j, "ds_max", 0.0, "record");
    rec.steps = get_int(j, "steps", 0, "record");
    rec.k_violation = get_bool(j, "k_violation", false, "record");
    rec.k_value = get_num_or_nan(j, "k_value", std::numeric_limits<double>::quiet_NaN(),
                                 "record");

    char name[32];
    for (std::size_t k = 0; k < rec.times.size(); ++k) {
        std::snprintf(name, sizeof name, "snap_%04zu.qsf", k);
        rec.u.push_back(load_field((fs::path(dir) / "snapshots" / name).string(), rec.grid));
    }

    if (config_json) {
        config_json->clear();
        if (const ordered_json* c = find_key(j, "config"); c && c->is_object())
            *config_json = c->dump(2) + "\n";
    }
    return rec;
}

// ============================================================================
// Pipeline
// ============================================================================

namespace {

ordered_json outcome_json(const ResolutionOutcome& oc) {
    ordered_json j;
    j["nlat"] = oc.nlat;
    j["ds_min"] = oc.ds_min;
    j["ds_max"] = oc.ds_max;
    j["steps"] = oc.steps;
    j["positivity_min"] = oc.positivity_min;
    j["envelope_worst"] = oc.envelope_worst;
    j["closure_worst"] = oc.closure_worst;
    j["k_constant"] = oc.k_constant;
    j["t_dagger"] = oc.t_dagger;
    j["k_no_constraint"] = oc.k_no_constraint;
    j["adm_available"] = oc.adm_available;
    j["adm_mass"] = oc.adm_mass;
    j["adm_uncertainty"] = oc.adm_uncertainty;
    j["adm_window_ok"] = oc.adm_window_ok;
    j["drift_available"] = oc.drift_available;
    j["drift_min_increment"] = oc.drift_min_increment;
    j["drift_max_residual"] = oc.drift_max_residual;
    j["identically_flat"] = oc.identically_flat;
    j["mass_final"] = oc.mass_final;
    j["horizon"] = oc.horizon;
    j["eta_used"] = oc.eta_used;
    j["window_pass"] = oc.window_pass;
    j["t0_window"] = oc.t0_window;
    j["mass_bracket_worst"] = oc.mass_bracket_worst;
    j["mass_lower_ok"] = oc.mass_lower_ok;
    return j;
}

void fill_outcome_from_audits(ResolutionOutcome& oc, const AuditBundle& a,
                              const SolutionRecord& rec, bool rbar_nonnegative) {
    oc.closure_worst = a.curv.worst;
    oc.mass_final = a.masses.hawking.back();
    double pos = std::numeric_limits<double>::infinity();
    for (const Field& u : rec.u) pos = std::min(pos, field_extrema(u).min);
    oc.positivity_min = pos;
    if (a.adm) {
        oc.adm_available = true;
        oc.adm_mass = a.adm->mass;
        oc.adm_uncertainty = a.adm->uncertainty;
        oc.adm_window_ok = a.adm->window_ok;
    }
    if (a.drift) {
        oc.drift_available = true;
        oc.drift_min_increment = a.drift->min_increment;
        oc.drift_max_residual = a.drift->max_residual;
    }
    oc.identically_flat = a.flat.identically_flat;
    if (oc.horizon && rbar_nonnegative && a.adm)
        oc.mass_lower_ok = a.adm->mass >= 0.5 - a.adm->uncertainty - 1e-12;
}

ResolutionOutcome run_one_resolution(const ScenarioConfig& cfg, std::size_t level) {
    const int nlat = cfg.resolutions[level];
    const fs::path res_dir = fs::path(cfg.output_dir) / res_dirname(nlat);
    const std::string reports = (res_dir / "reports").string();
    fs::create_directories(reports);

    GridPtr grid = build_grid(nlat, 2 * nlat);
    const bool horizon = cfg.horizon.enabled;
    const double t_end = cfg.evolution.t_end;
    const double cover = horizon ? t_end + 1.0 : t_end;
    BackgroundData bg = build_background(cfg, grid, cover);
    PrescribedCurvature rbar = build_rbar(cfg);

    // Each ladder level doubles the snapshot density and halves an explicit
    // log-time step, so space and time refine together.
    const int snaps = (cfg.evolution.snapshots - 1) * (1 << level) + 1;
    const double ds =
        cfg.evolution.ds > 0 ? cfg.evolution.ds / double(std::size_t(1) << level) : 0.0;

    if (bg.ricci()) {
        save_trajectory((res_dir / "flow").string(), *bg.traj, 8);
        write_flow_csv((res_dir / "flow.csv").string(), *bg.traj);
        dump_json(reports + "/hypothesis.json", flow_hypothesis_json(*bg.traj, rbar, cover));
    } else {
        HypothesisReport rep = hypothesis_report(*bg.fol, rbar, std::max(4.0, cover));
        dump_json(reports + "/hypothesis.json", conditions_json(rep));
    }

    AdmissibilityConstant K = bg.ricci() ? constant_K_ricci(*bg.traj, rbar, cover)
                                         : constant_K_conformal(*bg.fol, rbar, cover);
    write_ktrace_csv(reports + "/ktrace.csv", K);

    EvolverControls ev;
    ev.ds = ds;
    ev.stepper = parse_stepper(cfg.evolution.stepper);
    ev.variable = parse_variable(cfg.evolution.variable);
    ev.snapshots = snaps;
    ev.dealias_lcut = cfg.evolution.dealias_lcut;
    ev.admissibility_K = K.K;
    ev.allow_k_violation = cfg.allow_k_violation;

    ResolutionOutcome oc;
    oc.nlat = nlat;
    oc.k_constant = K.K;
    oc.t_dagger = K.t_dagger;
    oc.k_no_constraint = K.no_constraint;
    oc.horizon = horizon;

    SolutionRecord primary;
    std::optional<HorizonResult> hz;
    HorizonControls hc;
    if (horizon) {
        if (!cfg.horizon.epsilons.empty()) hc.epsilons = cfg.horizon.epsilons;
        hc.eta = cfg.horizon.eta;
        hc.t_end = t_end;
        hc.common_snapshots = snaps;
        hc.evolver = ev;
        hz = bg.ricci() ? horizon_evolve_ricci(*bg.traj, rbar, hc)
                        : horizon_evolve_conformal(*bg.fol, rbar, hc);
        primary = hz->unscaled;
        oc.eta_used = hz->eta_used;
        oc.window_pass = hz->window_pass;
        oc.t0_window = hz->t0_window;
        oc.mass_bracket_worst = hz->mass_bracket_worst;
    } else {
        Field phi = build_initial_lapse(cfg, grid);
        primary = bg.ricci() ? evolve_ricci(*bg.traj, rbar, phi, t_end, ev)
                             : evolve_conformal(*bg.fol, rbar, phi, t_end, ev);
    }
    oc.ds_min = primary.ds_min;
    oc.ds_max = primary.ds_max;
    oc.steps = std::size_t(primary.steps);

    // Containment: the horizon construction is checked in its own (scaled)
    // variable against the shifted-time bands; interior runs directly.
    const SolutionRecord& checked = hz ? hz->scaled : primary;
    EnvelopePair env =
        hz ? (bg.ricci() ? envelopes_ricci_horizon(*bg.traj, rbar, checked.times)
                         : envelopes_conformal_horizon(*bg.fol, rbar, checked.times))
           : (bg.ricci() ? envelopes_ricci(*bg.traj, rbar, checked.times)
                         : envelopes_conformal(*bg.fol, rbar, checked.times));
    std::vector<double> w_min = checked.w_min_trace();
    std::vector<double> w_max = checked.w_max_trace();
    EnvelopeCheck chk = envelope_check(env, checked.times, w_min, w_max);
    oc.envelope_worst = std::max(chk.worst_lower, chk.worst_upper);
    write_envelope_csv(reports + "/envelope.csv", env, checked.times, w_min, w_max);

    AuditBundle audits = run_audits(bg, rbar, primary);
    if (hz) {
        // The extrapolated record estimates the epsilon -> 0 limit, but a
        // Richardson combination of solutions of a nonlinear equation is not
        // itself a solution, so its equation-closure defect near the seam is
        // set by the ladder depth, not by resolution.  Equation closure and
        // mass drift are therefore audited on the finest constructed member
        // (an exact solution of the interior equation); limit-value audits
        // (ADM fit, flatness, mass series) stay on the extrapolated record.
        {
            std::vector<std::vector<double>> rows;
            for (std::size_t k = 0; k < audits.curv.t.size(); ++k)
                rows.push_back({audits.curv.t[k], audits.curv.linf[k], audits.curv.l2[k]});
            write_csv(reports + "/curvature_extrapolated.csv", {"t", "linf", "l2"}, rows);
        }
        SolutionRecord member =
            transport_scaled_record(hz->members.back(), hc.epsilons.front());
        if (bg.ricci()) {
            audits.curv = curvature_audit_ricci(*bg.traj, rbar, member);
            audits.drift = hawking_drift_ricci(*bg.traj, rbar, member);
        } else {
            audits.curv = curvature_audit_conformal(*bg.fol, rbar, member);
            if (bg.fol->is_round()) audits.drift = hawking_drift_round(*bg.fol, rbar, member);
        }
    }
    write_audit_reports(reports, audits, horizon, rbar.nonnegative());
    if (hz) dump_json(reports + "/horizon.json", horizon_json(*hz, hc));
    fill_outcome_from_audits(oc, audits, primary, rbar.nonnegative());

    const std::string cfg_json = config_to_json(cfg);
    save_record(res_dir.string(), primary, cfg_json, &audits.masses.hawking);
    if (hz) save_record((res_dir / "scaled").string(), hz->scaled, cfg_json, nullptr);
    return oc;
}

}  // namespace

ScenarioResult run_scenario(const ScenarioConfig& cfg, int threads) {
    validate_config(cfg);
    if (cfg.output_dir.empty())
        throw ConfigError("output_dir is not set (pass --out DIR or set QSPHERE_OUT)");
    fs::create_directories(cfg.output_dir);

    const std::size_t n = cfg.resolutions.size();
    std::vector<std::optional<ResolutionOutcome>> slots(n);
    std::vector<std::exception_ptr> errors(n);

    int workers = std::max(1, std::min<int>(threads, int(n)));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            try {
                slots[i] = run_one_resolution(cfg, i);
            } catch (...) {
                errors[i] = std::current_exception();
                break;  // later levels depend on nothing, but fail fast
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        auto work = [&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    slots[i] = run_one_resolution(cfg, i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        };
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (std::thread& th : pool) th.join();
    }
    for (std::size_t i = 0; i < n; ++i)
        if (errors[i]) std::rethrow_exception(errors[i]);

    ScenarioResult result;
    result.config = cfg;
    result.out_dir = cfg.output_dir;
    for (std::size_t i = 0; i < n; ++i) result.outcomes.push_back(*slots[i]);

    // Hard audits: positivity and containment at every level; curvature
    // closure at the top level against the floor (or 0.9x the previous
    // level when a ladder gives one).
    std::vector<std::string> failures;
    for (const ResolutionOutcome& oc : result.outcomes) {
        if (!(oc.positivity_min > 0) || !std::isfinite(oc.positivity_min))
            failures.push_back("positivity lost at nlat " + std::to_string(oc.nlat) +
                               " (min u = " + format_double(oc.positivity_min) + ")");
        if (!(oc.envelope_worst <= kEnvelopeTol))
            failures.push_back("envelope containment violated at nlat " +
                               std::to_string(oc.nlat) + " (worst " +
                               format_double(oc.envelope_worst) + " > " +
                               format_double(kEnvelopeTol) + ")");
    }
    double closure_tol = kClosureFloor;
    if (n > 1)
        closure_tol = std::max(kClosureFloor, 0.9 * result.outcomes[n - 2].closure_worst);
    if (!(result.outcomes.back().closure_worst <= closure_tol))
        failures.push_back("curvature closure at top resolution " +
                           format_double(result.outcomes.back().closure_worst) +
                           " exceeds tolerance " + format_double(closure_tol));
    result.hard_audits_pass = failures.empty();
    result.hard_failures = failures;

    ordered_json manifest;
    manifest["format"] = "qsphere-manifest/1";
    manifest["name"] = cfg.name;
    manifest["anchor"] = cfg.anchor;
    manifest["branch"] = cfg.branch;
    manifest["seed"] = cfg.seed;
    manifest["config"] = config_json_object(cfg);
    ordered_json res_arr = ordered_json::array();
    for (const ResolutionOutcome& oc : result.outcomes) res_arr.push_back(outcome_json(oc));
    manifest["resolutions"] = std::move(res_arr);
    manifest["hard_audits"] = {{"pass", result.hard_audits_pass},
                               {"envelope_tolerance", kEnvelopeTol},
                               {"closure_tolerance_top", closure_tol},
                               {"failures", failures}};
    dump_json((fs::path(cfg.output_dir) / "manifest.json").string(), manifest);

    // The top-resolution summary doubles as the run summary.
    const fs::path top = fs::path(cfg.output_dir) / res_dirname(cfg.resolutions.back());
    write_text_atomic((fs::path(cfg.output_dir) / "summary.csv").string(),
                      slurp((top / "summary.csv").string()));

    if (!result.hard_audits_pass) {
        std::string msg = "hard audit failed: ";
        for (std::size_t i = 0; i < failures.size(); ++i) {
            if (i) msg += "; ";
            msg += failures[i];
        }
        throw AuditError(msg);
    }
    return result;
}

ResolutionOutcome rerun_audits(const std::string& record_dir) {
    std::string cfg_json;
    SolutionRecord rec = load_record(record_dir, &cfg_json);
    if (rec.horizon_scaled)
        throw ConfigError(
            "this record stores the scaled horizon variable; audit the parent record "
            "directory, which holds the transported interior solution");
    if (cfg_json.empty())
        throw ConfigError("record has no embedded config; cannot rebuild the background");
    ScenarioConfig cfg = parse_config(cfg_json);

    const double cover = rec.times.back();
    BackgroundData bg = build_background(cfg, rec.grid, cover);
    PrescribedCurvature rbar = build_rbar(cfg);

    const std::string reports = (fs::path(record_dir) / "reports").string();
    fs::create_directories(reports);

    if (bg.ricci()) {
        dump_json(reports + "/hypothesis.json", flow_hypothesis_json(*bg.traj, rbar, cover));
    } else {
        HypothesisReport rep = hypothesis_report(*bg.fol, rbar, std::max(4.0, cover));
        dump_json(reports + "/hypothesis.json", conditions_json(rep));
    }

    AdmissibilityConstant K = bg.ricci() ? constant_K_ricci(*bg.traj, rbar, cover)
                                         : constant_K_conformal(*bg.fol, rbar, cover);
    write_ktrace_csv(reports + "/ktrace.csv", K);

    // Interior bands anchored at the record's first leaf: the comparison
    // structure applies from any start time, including transported horizon
    // records that begin just above t = 1.
    EnvelopePair env = bg.ricci() ? envelopes_ricci(*bg.traj, rbar, rec.times)
                                  : envelopes_conformal(*bg.fol, rbar, rec.times);
    std::vector<double> w_min = rec.w_min_trace();
    std::vector<double> w_max = rec.w_max_trace();
    EnvelopeCheck chk = envelope_check(env, rec.times, w_min, w_max);
    write_envelope_csv(reports + "/envelope.csv", env, rec.times, w_min, w_max);

    AuditBundle audits = run_audits(bg, rbar, rec);
    write_audit_reports(reports, audits, cfg.horizon.enabled, rbar.nonnegative());

    ResolutionOutcome oc;
    oc.nlat = rec.grid->nlat();
    oc.ds_min = rec.ds_min;
    oc.ds_max = rec.ds_max;
    oc.steps = std::size_t(rec.steps);
    oc.k_constant = K.K;
    oc.t_dagger = K.t_dagger;
    oc.k_no_constraint = K.no_constraint;
    oc.horizon = cfg.horizon.enabled;
    oc.envelope_worst = std::max(chk.worst_lower, chk.worst_upper);
    fill_outcome_from_audits(oc, audits, rec, rbar.nonnegative());
    return oc;
}

}  // namespace qsphere
