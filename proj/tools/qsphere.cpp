/// @file qsphere.cpp
/// @brief Command-line front end: `qsphere run`, `qsphere list-presets`,
///        and `qsphere audit`.
///
/// Exit statuses form a stable contract for scripting:
///   0  run completed and every hard audit passed
///   1  unexpected internal failure
///   2  configuration problem (bad flags, unreadable/invalid config)
///   3  a hard mathematical hypothesis fails for the supplied data
///   4  numerical failure during integration
///   5  a hard post-run audit failed (artifacts are still written)

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "qsphere/errors.hpp"
#include "qsphere/qsf_io.hpp"
#include "qsphere/scenario.hpp"

namespace {

using qsphere::ResolutionOutcome;
using qsphere::ScenarioConfig;
using qsphere::ScenarioResult;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw qsphere::ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void print_outcome(const ResolutionOutcome& oc) {
    std::printf("  nlat %-3d  steps %-7zu  min u %.6g  envelope %.3e  closure %.3e\n",
                oc.nlat, oc.steps, oc.positivity_min, oc.envelope_worst, oc.closure_worst);
    if (oc.k_no_constraint)
        std::printf("            admissibility: K = 0 (no initial-lapse constraint)\n");
    else
        std::printf("            admissibility: K = %.6g (binding at t = %.6g)\n",
                    oc.k_constant, oc.t_dagger);
    if (oc.adm_available) {
        std::printf("            ADM mass %.12g +- %.3g%s\n", oc.adm_mass,
                    oc.adm_uncertainty, oc.adm_window_ok ? "" : "  [fit window suspect]");
        if (oc.adm_mass < 0)
            std::fprintf(stderr,
                         "warning: negative ADM mass %.6g (permitted; the construction "
                         "does not require positivity of the data)\n",
                         oc.adm_mass);
    }
    if (oc.drift_available)
        std::printf("            Hawking drift: min increment %.3e, identity residual %.3e\n",
                    oc.drift_min_increment, oc.drift_max_residual);
    if (oc.identically_flat) std::printf("            flatness: identically flat\n");
    if (oc.horizon) {
        std::printf("            horizon: eta %.3f, window %s (t0 = %.6g), mass bracket "
                    "violation %.3e\n",
                    oc.eta_used, oc.window_pass ? "pass" : "FAIL", oc.t0_window,
                    oc.mass_bracket_worst);
        if (!oc.mass_lower_ok)
            std::fprintf(stderr, "warning: limit mass %.6g below 1/2 - uncertainty\n",
                         oc.adm_mass);
    }
}

int cmd_run(const std::string& config_path, const std::string& preset,
            int resolution, double tmax, const std::string& out_dir,
            bool seed_set, std::uint64_t seed, int threads) {
    if (config_path.empty() == preset.empty())
        throw qsphere::ConfigError("pass exactly one of --config FILE or --preset NAME");

    ScenarioConfig cfg = config_path.empty() ? qsphere::make_preset(preset)
                                             : qsphere::parse_config(read_file(config_path));
    if (resolution > 0) cfg.resolutions = {resolution};
    if (tmax > 0) cfg.evolution.t_end = tmax;
    if (seed_set) cfg.seed = seed;

    // Output directory precedence: --out, then the config's own entry, then
    // $QSPHERE_OUT/<name>, then ./qsphere-out/<name>.
    if (!out_dir.empty()) {
        cfg.output_dir = out_dir;
    } else if (cfg.output_dir.empty()) {
        const char* root = std::getenv("QSPHERE_OUT");
        cfg.output_dir = (root && *root ? std::string(root) : std::string("qsphere-out")) +
                         "/" + cfg.name;
    }

    std::printf("scenario %s  (claim: %s, branch: %s, seed %llu)\n", cfg.name.c_str(),
                cfg.anchor.c_str(), cfg.branch.c_str(),
                static_cast<unsigned long long>(cfg.seed));
    std::printf("writing %s\n", cfg.output_dir.c_str());

    ScenarioResult result = qsphere::run_scenario(cfg, threads);
    for (const ResolutionOutcome& oc : result.outcomes) print_outcome(oc);
    std::printf("hard audits: PASS\n");
    return 0;
}

int cmd_list_presets() {
    std::printf("%-28s %-44s %s\n", "preset", "claim", "expected");
    std::printf("%-28s %-44s %s\n", "------", "-----", "--------");
    for (const qsphere::PresetInfo& p : qsphere::preset_catalog()) {
        std::printf("%-28s %-44s %s\n", p.name.c_str(), p.anchor.c_str(),
                    p.expected.c_str());
        std::printf("    %s\n", p.summary.c_str());
        if (!p.parameter.empty()) std::printf("    parameter: %s\n", p.parameter.c_str());
    }
    std::printf("\nrun one with: qsphere run --preset NAME[:value]\n");
    return 0;
}

int cmd_audit(const std::string& record_dir) {
    ResolutionOutcome oc = qsphere::rerun_audits(record_dir);
    std::printf("re-audited record %s\n", record_dir.c_str());
    print_outcome(oc);
    std::printf("reports rewritten under %s/reports\n", record_dir.c_str());
    if (oc.horizon)
        std::printf("note: this record is the extrapolated limit of a horizon ladder; its "
                    "closure value here is diagnostic (the run audits the finest member)\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qsphere: constructs 3-metrics of prescribed scalar curvature on "
                 "[1,inf) x S^2 and audits them"};
    app.require_subcommand(1);

    std::string config_path, preset, out_dir, record_dir;
    int resolution = 0, threads = 1;
    double tmax = 0.0;
    std::uint64_t seed = 0;

    CLI::App* run = app.add_subcommand("run", "execute a scenario and write its artifacts");
    run->add_option("--config", config_path, "JSON scenario document (schema_version 1)");
    run->add_option("--preset", preset, "preset name, optionally name:value");
    run->add_option("--resolution", resolution, "override the ladder with one nlat")
        ->check(CLI::PositiveNumber);
    run->add_option("--tmax", tmax, "override the final time")->check(CLI::PositiveNumber);
    run->add_option("--out", out_dir, "output directory (default $QSPHERE_OUT/<name>)");
    CLI::Option* seed_opt = run->add_option("--seed", seed, "override the RNG seed");
    run->add_option("--threads", threads, "worker threads over the resolution ladder")
        ->check(CLI::PositiveNumber);

    app.add_subcommand("list-presets", "print the preset registry with expected outcomes");

    CLI::App* audit = app.add_subcommand("audit", "re-run the audits of a stored record");
    audit->add_option("--record", record_dir, "record directory (holds record.json)")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;  // bad flags are configuration errors
    }

    try {
        if (run->parsed())
            return cmd_run(config_path, preset, resolution, tmax, out_dir,
                           seed_opt->count() > 0, seed, threads);
        if (audit->parsed()) return cmd_audit(record_dir);
        return cmd_list_presets();
    } catch (const qsphere::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const qsphere::HypothesisError& e) {
        std::fprintf(stderr, "hypothesis failure: %s\n", e.what());
        return 3;
    } catch (const qsphere::NumericsError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 4;
    } catch (const qsphere::AuditError& e) {
        std::fprintf(stderr, "audit failure: %s\n", e.what());
        return 5;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 1;
    }
}
