/// @file scenario.hpp
/// @brief Reproducible scenario runner: JSON configs, a preset registry, the
///        full pipeline (background -> hypotheses -> envelopes -> evolution
///        -> audits -> artifacts), and record persistence.
///
/// A scenario is one prescribed-curvature construction problem plus the
/// numerical controls needed to reproduce it exactly: background foliation,
/// curvature, initial lapse, resolution ladder, stepper settings, and seed.
/// run_scenario executes the pipeline once per ladder entry, writes every
/// artifact (even when a verification fails afterwards), and finally throws
/// AuditError if a hard audit failed:
///   - positivity of the recorded lapse,
///   - comparison-band containment within 1e-4,
///   - curvature-closure error at the top resolution at most
///     max(1e-3, 0.9 * previous-resolution error).
///
/// Exit-code mapping used by the CLI: 0 success, 2 ConfigError,
/// 3 HypothesisError, 4 NumericsError, 5 AuditError.
#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "qsphere/evolver.hpp"
#include "qsphere/sphere.hpp"

namespace qsphere {

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

/// Background geometry.  "round": g = sigma.  "separable": conformally round
/// with f(t,x) = amplitude * Y_l^0(x) * t^{-power}.  "ellipsoid": modified
/// 2-D Ricci flow started from an ellipsoid of revolution (axis_ratio is the
/// polar/equatorial ratio before area normalization).
struct BackgroundSpec {
    std::string kind = "round";
    double amplitude = 0.0;
    double power = 2.0;
    int harmonic_l = 2;
    double axis_ratio = 1.0;
    double flow_t_max = 0.0;  ///< 0: automatic (t_end + 1.5)
};

/// Prescribed scalar curvature: "zero", "constant" (amplitude), or
/// "inverse-power" (amplitude * t^{-power}).
struct CurvatureSpec {
    std::string kind = "zero";
    double amplitude = 0.0;
    double power = 4.0;
};

/// Initial lapse.  "constant": phi = value.  "harmonic": phi = value *
/// (1 + perturbation * Y_l^0).  "random": phi = value * (1 + perturbation *
/// s(x)) with s a seed-deterministic smooth field of unit sup norm and
/// spherical-harmonic content up to degree harmonic_l.
struct LapseSpec {
    std::string kind = "constant";
    double value = 1.0;
    double perturbation = 0.0;
    int harmonic_l = 2;
};

/// Horizon construction controls (ignored unless enabled).
struct HorizonSpec {
    bool enabled = false;
    std::vector<double> epsilons;  ///< empty: {0.04, 0.02, 0.01, 0.005}
    double eta = std::numeric_limits<double>::quiet_NaN();  ///< NaN: automatic
};

/// Stepper controls at ladder level 0.  Each further ladder level halves ds
/// (when explicit) and doubles the snapshot density, so spatial and temporal
/// refinement advance together.
struct EvolutionSpec {
    double t_end = 20.0;
    std::string stepper = "rk4";     ///< "rk4" | "imex-sbdf2"
    std::string variable = "lapse";  ///< "lapse" | "inverse-square" | "mass-aspect"
    double ds = 0.0;                 ///< 0: automatic step selection
    int snapshots = 65;
    int dealias_lcut = 0;
};

/// One complete scenario.  `anchor` labels the claim the run exercises using
/// the taxonomy in the README (M1..M4, corollary).
struct ScenarioConfig {
    int schema_version = 1;
    std::string name = "custom";
    std::string anchor = "unlabeled";
    std::string branch = "conformal";  ///< "conformal" | "ricci"
    BackgroundSpec background;
    CurvatureSpec curvature;
    LapseSpec lapse;
    HorizonSpec horizon;
    EvolutionSpec evolution;
    std::vector<int> resolutions = {16};  ///< nlat ladder, strictly increasing
    std::uint64_t seed = 0;
    bool allow_k_violation = false;
    std::string output_dir;  ///< resolved by the caller / CLI
};

/// Parse a JSON config document.  Unknown keys anywhere in the document are
/// ConfigErrors, as are missing/mismatched schema_version and out-of-range
/// values.  The expected shape is the one emitted by config_to_json.
ScenarioConfig parse_config(const std::string& json_text);

/// Canonical JSON rendering of a config (stable key order; suitable for
/// embedding in manifests and byte-comparison).
std::string config_to_json(const ScenarioConfig& cfg);

// ---------------------------------------------------------------------------
// Preset registry
// ---------------------------------------------------------------------------

struct PresetInfo {
    std::string name;
    std::string parameter;  ///< "" or a description of the optional :value
    std::string summary;
    std::string anchor;
    std::string expected;   ///< closed-form expectation, when one exists
};

/// The built-in scenarios, in registry order.
std::vector<PresetInfo> preset_catalog();

/// Resolve "name" or "name:value" to a full config.  Unknown names are
/// ConfigErrors; "custom-from-file" explains that it needs --config.
ScenarioConfig make_preset(const std::string& spec);

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

/// Per-resolution results gathered while running the ladder.
struct ResolutionOutcome {
    int nlat = 0;
    double ds_min = 0.0, ds_max = 0.0;
    std::size_t steps = 0;
    double positivity_min = 0.0;   ///< min of u over all snapshots
    double envelope_worst = 0.0;   ///< worst containment violation
    /// Sup curvature-reconstruction error.  For horizon runs this is
    /// measured on the finest ladder member (an exact solution of the
    /// interior equation); the extrapolated record's diagnostic value is in
    /// reports/curvature_extrapolated.csv.
    double closure_worst = 0.0;
    double k_constant = 0.0;
    double t_dagger = 0.0;
    bool k_no_constraint = true;
    bool adm_available = false;
    double adm_mass = 0.0;
    double adm_uncertainty = 0.0;
    bool adm_window_ok = false;
    bool drift_available = false;
    double drift_min_increment = 0.0;
    double drift_max_residual = 0.0;
    bool identically_flat = false;
    double mass_final = 0.0;       ///< Hawking mass at the last snapshot
    bool horizon = false;
    double eta_used = 0.0;
    bool window_pass = false;
    double t0_window = 0.0;
    double mass_bracket_worst = 0.0;
    bool mass_lower_ok = true;     ///< m >= 1/2 - uncertainty when Rbar >= 0
};

struct ScenarioResult {
    ScenarioConfig config;
    std::string out_dir;
    std::vector<ResolutionOutcome> outcomes;
    bool hard_audits_pass = false;
    std::vector<std::string> hard_failures;
};

/// Run the ladder, write all artifacts under cfg.output_dir, and throw
/// AuditError afterwards if a hard audit failed.  `threads` > 1 runs ladder
/// entries concurrently (results and files are identical to the serial
/// order; summary.csv is byte-deterministic at threads == 1 by contract).
ScenarioResult run_scenario(const ScenarioConfig& cfg, int threads = 1);

/// Re-run the audits of a stored record directory (as written by
/// run_scenario: record.json + snapshots/) and rewrite its reports/.
/// Returns the outcome row that was recomputed.
ResolutionOutcome rerun_audits(const std::string& record_dir);

// ---------------------------------------------------------------------------
// Record persistence
// ---------------------------------------------------------------------------

/// Persist a solution record: `dir`/record.json (provenance: branch, times,
/// stepper diagnostics, and the full config echo) plus `dir`/snapshots/
/// snap_NNNN.qsf, one QSF1 field per snapshot, plus `dir`/summary.csv with
/// columns t, w_min, w_max, mean_m, hawking.  The hawking column uses the
/// supplied per-snapshot values (exact leaf measure) when given; otherwise
/// it falls back to the round-measure evaluation, which coincides with the
/// exact one on round leaves.
void save_record(const std::string& dir, const SolutionRecord& rec,
                 const std::string& config_json,
                 const std::vector<double>* hawking = nullptr);

/// Load a record saved by save_record onto a freshly built grid.
/// `config_json`, when non-null, receives the embedded config echo.
SolutionRecord load_record(const std::string& dir, std::string* config_json = nullptr);

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

/// Orthonormal real spherical harmonic Y_l^0 on the grid:
/// sqrt((2l+1)/4pi) P_l(cos theta).
Field harmonic_field(const GridPtr& grid, int l);

}  // namespace qsphere
