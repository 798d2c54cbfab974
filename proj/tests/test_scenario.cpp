/// @file test_scenario.cpp
/// @brief Tests for the scenario runner: config parsing and canonical JSON,
///        the preset registry, the full artifact-producing pipeline, record
///        persistence, audit re-runs, and the hard-audit failure path.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>

#include <json.hpp>

#include "qsphere/conformal.hpp"
#include "qsphere/errors.hpp"
#include "qsphere/evolver.hpp"
#include "qsphere/prescribed.hpp"
#include "qsphere/scenario.hpp"
#include "qsphere/sphere.hpp"

using namespace qsphere;
namespace fs = std::filesystem;

namespace {

/// Fresh scratch directory under the system temp root.
fs::path scratch(const std::string& leaf) {
    fs::path dir = fs::temp_directory_path() / "qsphere-scenario-tests" / leaf;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Parse, tweak one JSON pointer, re-serialize.  Lets each validation test
/// start from a known-good document.
std::string with_patch(const ScenarioConfig& base,
                       const std::function<void(nlohmann::json&)>& patch) {
    nlohmann::json j = nlohmann::json::parse(config_to_json(base));
    patch(j);
    return j.dump();
}

}  // namespace

TEST_CASE("config serialization round-trips through the parser byte-for-byte") {
    ScenarioConfig cfg;
    cfg.name = "roundtrip";
    cfg.anchor = "M1 interior existence";
    cfg.branch = "ricci";
    cfg.background.kind = "ellipsoid";
    cfg.background.axis_ratio = 1.3;
    cfg.background.flow_t_max = 25.0;
    cfg.curvature.kind = "inverse-power";
    cfg.curvature.amplitude = 0.25;
    cfg.curvature.power = 4.0;
    cfg.lapse.kind = "harmonic";
    cfg.lapse.value = 0.9;
    cfg.lapse.perturbation = 0.1;
    cfg.lapse.harmonic_l = 3;
    cfg.horizon.enabled = true;
    cfg.horizon.epsilons = {0.02, 0.01};
    cfg.horizon.eta = 0.6;
    cfg.evolution.t_end = 12.5;
    cfg.evolution.stepper = "imex-sbdf2";
    cfg.evolution.variable = "inverse-square";
    cfg.evolution.ds = 0.004;
    cfg.evolution.snapshots = 41;
    cfg.evolution.dealias_lcut = 8;
    cfg.resolutions = {16, 24, 32};
    cfg.seed = 42;
    cfg.allow_k_violation = true;

    const std::string text = config_to_json(cfg);
    ScenarioConfig back = parse_config(text);
    CHECK(config_to_json(back) == text);

    CHECK(back.name == cfg.name);
    CHECK(back.branch == "ricci");
    CHECK(back.background.axis_ratio == cfg.background.axis_ratio);
    CHECK(back.curvature.amplitude == cfg.curvature.amplitude);
    CHECK(back.lapse.perturbation == cfg.lapse.perturbation);
    CHECK(back.horizon.enabled);
    CHECK(back.horizon.epsilons == cfg.horizon.epsilons);
    CHECK(back.horizon.eta == cfg.horizon.eta);
    CHECK(back.evolution.stepper == "imex-sbdf2");
    CHECK(back.evolution.snapshots == 41);
    CHECK(back.resolutions == cfg.resolutions);
    CHECK(back.seed == cfg.seed);
    CHECK(back.allow_k_violation);
}

TEST_CASE("preset configs survive the JSON round trip unchanged") {
    for (const PresetInfo& info : preset_catalog()) {
        if (info.name == "custom-from-file") continue;
        ScenarioConfig cfg = make_preset(info.name);
        const std::string text = config_to_json(cfg);
        CHECK(config_to_json(parse_config(text)) == text);
    }
}

TEST_CASE("parser rejects malformed and mistyped documents") {
    CHECK_THROWS_AS(parse_config("{ not json"), ConfigError);
    CHECK_THROWS_AS(parse_config("[1, 2, 3]"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("{\"name\": \"x\"}"),
                         doctest::Contains("schema_version"), ConfigError);
}

TEST_CASE("unknown keys are rejected at every nesting level") {
    ScenarioConfig base = make_preset("flat");

    CHECK_THROWS_WITH_AS(
        parse_config(with_patch(base, [](nlohmann::json& j) { j["bogus"] = 1; })),
        doctest::Contains("bogus"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(with_patch(
                             base, [](nlohmann::json& j) { j["background"]["tilt"] = 2.0; })),
                         doctest::Contains("background.tilt"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(with_patch(
                             base, [](nlohmann::json& j) { j["evolution"]["dt"] = 0.1; })),
                         doctest::Contains("evolution.dt"), ConfigError);
    CHECK_THROWS_AS(parse_config(with_patch(
                        base, [](nlohmann::json& j) { j["horizon"]["ladder"] = 4; })),
                    ConfigError);
}

TEST_CASE("schema_version must be present and equal to 1") {
    ScenarioConfig base = make_preset("flat");
    CHECK_THROWS_WITH_AS(parse_config(with_patch(
                             base, [](nlohmann::json& j) { j.erase("schema_version"); })),
                         doctest::Contains("schema_version"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(with_patch(
                             base, [](nlohmann::json& j) { j["schema_version"] = 2; })),
                         doctest::Contains("schema_version must be 1"), ConfigError);
}

TEST_CASE("out-of-range values are configuration errors") {
    ScenarioConfig base = make_preset("flat");
    auto bad = [&](const std::function<void(nlohmann::json&)>& patch) {
        CHECK_THROWS_AS(parse_config(with_patch(base, patch)), ConfigError);
    };
    bad([](nlohmann::json& j) { j["evolution"]["t_end"] = 0.5; });
    bad([](nlohmann::json& j) { j["branch"] = "sideways"; });
    bad([](nlohmann::json& j) { j["lapse"]["kind"] = "bogus"; });
    bad([](nlohmann::json& j) { j["lapse"]["value"] = -0.5; });
    bad([](nlohmann::json& j) { j["resolutions"] = nlohmann::json::array({16, 16}); });
    bad([](nlohmann::json& j) { j["resolutions"] = nlohmann::json::array(); });
    bad([](nlohmann::json& j) { j["evolution"]["stepper"] = "euler"; });
    bad([](nlohmann::json& j) { j["background"]["kind"] = "torus"; });
    bad([](nlohmann::json& j) { j["curvature"]["kind"] = "white-noise"; });
}

TEST_CASE("preset catalog lists every built-in scenario with its claim label") {
    std::vector<PresetInfo> catalog = preset_catalog();
    REQUIRE(catalog.size() >= 6);
    bool saw_family = false, saw_placeholder = false;
    for (const PresetInfo& info : catalog) {
        CHECK_FALSE(info.name.empty());
        CHECK_FALSE(info.summary.empty());
        CHECK_FALSE(info.anchor.empty());
        if (info.name == "schwarzschild-family") {
            saw_family = true;
            // Closed-form expectation for the default parameter.
            CHECK(info.expected.find("-0.28125") != std::string::npos);
        }
        if (info.name == "custom-from-file") saw_placeholder = true;
    }
    CHECK(saw_family);
    CHECK(saw_placeholder);

    // Every catalog entry except the placeholder resolves to a valid config
    // whose name and anchor match the listing.
    for (const PresetInfo& info : catalog) {
        if (info.name == "custom-from-file") continue;
        ScenarioConfig cfg = make_preset(info.name);
        CHECK(cfg.name == info.name);
        CHECK(cfg.anchor == info.anchor);
    }
}

TEST_CASE("make_preset parses the optional :value parameter") {
    ScenarioConfig fam = make_preset("schwarzschild-family:0.5");
    CHECK(fam.lapse.value == 0.5);
    CHECK(make_preset("schwarzschild-family").lapse.value == 0.8);

    ScenarioConfig pert = make_preset("conformal-perturbation:-0.1");
    CHECK(pert.background.amplitude == -0.1);

    CHECK_THROWS_WITH_AS(make_preset("schwarzschild-family:smallish"),
                         doctest::Contains("not a finite number"), ConfigError);
    CHECK_THROWS_AS(make_preset("schwarzschild-family:-1"), ConfigError);
    CHECK_THROWS_AS(make_preset("conformal-perturbation:0.9"), ConfigError);
    CHECK_THROWS_AS(make_preset("flat:1"), ConfigError);
    CHECK_THROWS_WITH_AS(make_preset("custom-from-file"), doctest::Contains("--config"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(make_preset("no-such-preset"),
                         doctest::Contains("unknown preset"), ConfigError);
}

TEST_CASE("harmonic_field is the orthonormal zonal harmonic") {
    GridPtr g = build_grid(16, 32);
    Field y0 = harmonic_field(g, 0);
    for (std::size_t k = 0; k < y0.size(); ++k)
        CHECK(y0[k] == doctest::Approx(std::sqrt(1.0 / (4.0 * std::numbers::pi))).epsilon(1e-14));

    Field y2 = harmonic_field(g, 2);
    Field sq(g);
    for (std::size_t k = 0; k < sq.size(); ++k) sq[k] = y2[k] * y2[k];
    CHECK(integrate_sigma(sq) == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(harmonic_field(g, g->lmax() + 1), ConfigError);
    CHECK_THROWS_AS(harmonic_field(g, -1), ConfigError);
}

TEST_CASE("flat scenario runs the full pipeline and writes every artifact") {
    fs::path out = scratch("flat-run");
    ScenarioConfig cfg = make_preset("flat");
    cfg.output_dir = out.string();

    ScenarioResult result = run_scenario(cfg);
    CHECK(result.hard_audits_pass);
    CHECK(result.hard_failures.empty());
    REQUIRE(result.outcomes.size() == 1);

    const ResolutionOutcome& oc = result.outcomes[0];
    CHECK(oc.nlat == 16);
    CHECK(oc.positivity_min == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(oc.envelope_worst < 1e-10);   // measured 2.2e-13
    CHECK(oc.closure_worst < 1e-5);     // measured 3.6e-6
    CHECK(oc.identically_flat);
    CHECK(oc.k_no_constraint);
    CHECK(oc.k_constant == 0.0);
    CHECK_FALSE(oc.horizon);
    CHECK(std::abs(oc.mass_final) < 1e-12);

    // Artifact layout.
    for (const char* rel :
         {"manifest.json", "summary.csv", "res-016/record.json", "res-016/summary.csv",
          "res-016/snapshots/snap_0000.qsf", "res-016/snapshots/snap_0064.qsf",
          "res-016/reports/curvature.csv", "res-016/reports/envelope.csv",
          "res-016/reports/hypothesis.json", "res-016/reports/ktrace.csv",
          "res-016/reports/masses.csv", "res-016/reports/flatness.json"}) {
        INFO("expect artifact ", rel);
        CHECK(fs::exists(out / rel));
    }

    const std::string manifest = slurp(out / "manifest.json");
    CHECK(manifest.find("\"format\": \"qsphere-manifest/1\"") != std::string::npos);
    CHECK(manifest.find("\"pass\": true") != std::string::npos);
    CHECK(manifest.find("\"name\": \"flat\"") != std::string::npos);

    // The top-level summary is the top-resolution summary.
    CHECK(slurp(out / "summary.csv") == slurp(out / "res-016/summary.csv"));

    // Audit re-run over the stored record reproduces the outcome.
    ResolutionOutcome redo = rerun_audits((out / "res-016").string());
    CHECK(redo.nlat == oc.nlat);
    CHECK(redo.closure_worst == doctest::Approx(oc.closure_worst).epsilon(1e-12));
    CHECK(redo.envelope_worst == doctest::Approx(oc.envelope_worst).epsilon(1e-9));
    CHECK(redo.identically_flat == oc.identically_flat);
}

TEST_CASE("scenario output is byte-deterministic across runs") {
    fs::path out_a = scratch("det-a");
    fs::path out_b = scratch("det-b");
    ScenarioConfig cfg = make_preset("flat");
    cfg.evolution.t_end = 8.0;  // keep the double run cheap
    cfg.evolution.snapshots = 17;

    cfg.output_dir = out_a.string();
    run_scenario(cfg);
    cfg.output_dir = out_b.string();
    run_scenario(cfg);

    CHECK(slurp(out_a / "summary.csv") == slurp(out_b / "summary.csv"));
    CHECK(slurp(out_a / "res-016/reports/curvature.csv") ==
          slurp(out_b / "res-016/reports/curvature.csv"));
    CHECK(slurp(out_a / "res-016/snapshots/snap_0008.qsf") ==
          slurp(out_b / "res-016/snapshots/snap_0008.qsf"));
    // Manifests agree except for the output_dir echo.
    nlohmann::json ma = nlohmann::json::parse(slurp(out_a / "manifest.json"));
    nlohmann::json mb = nlohmann::json::parse(slurp(out_b / "manifest.json"));
    ma["config"]["output_dir"] = "";
    mb["config"]["output_dir"] = "";
    CHECK(ma == mb);
}

TEST_CASE("record persistence round-trips times, fields, and provenance") {
    fs::path dir = scratch("record-rt");
    GridPtr g = build_grid(16, 32);
    ConformalFoliation fol = ConformalFoliation::round(g);
    EvolverControls ctl;
    ctl.ds = 0.01;
    ctl.snapshots = 9;
    ctl.stepper = Stepper::imex_sbdf2;
    SolutionRecord rec = evolve_conformal(fol, PrescribedCurvature::zero(),
                                          Field(g, 0.8), 4.0, ctl);

    ScenarioConfig cfg = make_preset("schwarzschild-family");
    save_record(dir.string(), rec, config_to_json(cfg));

    std::string echo;
    SolutionRecord back = load_record(dir.string(), &echo);
    REQUIRE(back.size() == rec.size());
    CHECK(back.grid->nlat() == 16);
    CHECK(back.branch == rec.branch);
    CHECK(back.stepper == Stepper::imex_sbdf2);
    CHECK(back.variable == rec.variable);
    CHECK(back.horizon_scaled == rec.horizon_scaled);
    CHECK(back.ds_min == rec.ds_min);
    CHECK(back.steps == rec.steps);
    for (std::size_t k = 0; k < rec.size(); ++k) {
        CHECK(back.times[k] == rec.times[k]);  // JSON doubles round-trip
        double worst = 0.0;
        for (std::size_t i = 0; i < rec.u[k].size(); ++i)
            worst = std::max(worst, std::abs(back.u[k][i] - rec.u[k][i]));
        CHECK(worst == 0.0);  // QSF1 snapshots are bit-exact
    }
    CHECK(parse_config(echo).name == "schwarzschild-family");

    CHECK_THROWS_AS(load_record((dir / "nope").string()), ConfigError);
}

TEST_CASE("hard-audit failure throws after writing the manifest") {
    fs::path out = scratch("hard-fail");
    // Five snapshots over [1, 18] put the audit's five-point dH/dt stencil at
    // a log-time spacing of ~0.72, far beyond the 1e-3 closure tolerance, so
    // the run must fail its hard audit while remaining a perfectly good
    // evolution (the record itself stays positive and contained).  t_end is
    // kept below 20 so no ADM tail fit is attempted on the sparse record.
    ScenarioConfig cfg = make_preset("schwarzschild-family");
    cfg.evolution.t_end = 18.0;
    cfg.evolution.snapshots = 5;
    cfg.output_dir = out.string();

    CHECK_THROWS_WITH_AS(run_scenario(cfg), doctest::Contains("hard audit failed"),
                         AuditError);

    // Artifacts must exist anyway: the manifest records the failure.
    REQUIRE(fs::exists(out / "manifest.json"));
    const std::string manifest = slurp(out / "manifest.json");
    CHECK(manifest.find("\"pass\": false") != std::string::npos);
    CHECK(manifest.find("curvature closure") != std::string::npos);
    CHECK(fs::exists(out / "res-016/record.json"));
    CHECK(fs::exists(out / "summary.csv"));
}
