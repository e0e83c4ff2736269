// Command-line front end: single runs and the experiment subcommands, all
// emitting plain CSV plus a sidecar manifest into --out.

#include "cosim/cosim.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace {

using namespace cosim;

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "cosim-out";
    std::string h_rule;  // override, e.g. proportional:10
    int levels = 0;      // override when > 0
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_levels) {
    cmd->add_option("config", args.config_path, "run configuration file")->required();
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--h-rule", args.h_rule,
                    "override scheme.h_rule (proportional:c | fixed:h | adaptive)");
    if (with_levels) {
        cmd->add_option("--levels", args.levels, "number of H levels (H, H/2, ...)");
    }
}

LoadedSetup load(const CommonArgs& args) {
    LoadedSetup setup = load_setup(Config::parse_file(args.config_path));
    if (!args.h_rule.empty()) {
        setup.scheme.h_rule = detail::parse_h_rule(args.h_rule);
        setup.scheme.validate(setup.part.subsystems.size());
    }
    if (args.levels > 0) setup.levels = args.levels;
    return setup;
}

std::vector<std::string> manifest_header(const std::string& command, const CommonArgs& args,
                                         const LoadedSetup& setup) {
    std::vector<std::string> lines;
    lines.push_back("tool: cosim");
    lines.push_back("command: " + command);
    lines.push_back("config: " + args.config_path);
    lines.push_back("spectral_abscissa_estimate: " +
                    fmt17(spectral_abscissa_estimate(setup.sys.matrix, setup.sys.dim)));
    const WiringReport wiring = validate_wiring(setup.sys, setup.part, setup.scheme);
    for (const auto& note : wiring.notes) lines.push_back("wiring: " + note);
    return lines;
}

std::vector<StudyVariant> parse_variants(const LoadedSetup& setup,
                                         const std::vector<std::string>& fallback) {
    std::vector<std::string> labels = setup.variants.empty() ? fallback : setup.variants;
    std::vector<StudyVariant> out;
    for (std::string label : labels) {
        SchemeConfig cfg = setup.scheme;
        std::string extrap = label;
        cfg.balance_correction = false;
        cfg.smoothing = setup.scheme.smoothing;
        auto strip = [&extrap](const std::string& suffix) {
            const std::size_t pos = extrap.find(suffix);
            if (pos == std::string::npos) return false;
            extrap.erase(pos, suffix.size());
            return true;
        };
        if (strip("+bc")) cfg.balance_correction = true;
        if (strip("+smooth")) cfg.smoothing = true;
        cfg.extrapolation = detail::parse_extrapolation(extrap);
        out.push_back(StudyVariant{label, std::move(cfg)});
    }
    return out;
}

int cmd_run(const CommonArgs& args) {
    const LoadedSetup setup = load(args);
    const CosimRun run = run_cosim(setup.sys, setup.part, setup.scheme);
    const std::filesystem::path dir(args.out_dir);
    write_trajectory_csv(dir, run);
    write_balance_csv(dir, run);
    if (setup.sys.kind == SystemKind::SpringMass) write_energy_csv(dir, run);
    write_config_echo(dir, resolved_echo(setup));
    auto manifest = manifest_header("run", args, setup);
    manifest.push_back("exchange_intervals: " + std::to_string(run.grid.intervals()));
    std::string fin = "final_state:";
    for (double v : run.final_state()) fin += " " + fmt17(v);
    manifest.push_back(fin);
    manifest.push_back("balance_residual: " + fmt17(run.diag.residual));
    manifest.push_back(std::string("reduced_quadrature: ") +
                       (run.diag.reduced_quadrature ? "true" : "false"));
    write_manifest(dir, manifest);
    std::cout << "wrote " << dir.string() << "\n";
    return 0;
}

int cmd_converge(const CommonArgs& args) {
    const LoadedSetup setup = load(args);
    const auto variants = parse_variants(setup, {"zoh", "foh"});
    const auto levels = default_h_levels(setup.scheme.H, setup.levels);
    const ConvergenceReport rep =
        convergence_study(setup.sys, setup.part, variants, levels,
                          ReferenceSolution::for_system(setup.sys));
    const std::filesystem::path dir(args.out_dir);
    write_report_csv(dir, rep);
    write_orders_csv(dir, rep);
    write_config_echo(dir, resolved_echo(setup));
    auto manifest = manifest_header("converge", args, setup);
    std::string hs = "h_levels:";
    for (double H : levels) hs += " " + fmt17(H);
    manifest.push_back(hs);
    for (const auto& f : rep.fits) {
        manifest.push_back("fit: " + f.variant + " order_end=" + fmt17(f.end_fit.slope) +
                           " order_sup=" + fmt17(f.sup_fit.slope));
    }
    write_manifest(dir, manifest);
    std::cout << "wrote " << dir.string() << "\n";
    return 0;
}

int cmd_stability(const CommonArgs& args) {
    const LoadedSetup setup = load(args);
    const auto variants = parse_variants(setup, {"zoh", "foh"});
    const StabilityReport rep =
        stability_experiment(setup.sys, setup.part, variants, {0.2, 0.1, 0.05, 0.025});
    const std::filesystem::path dir(args.out_dir);
    write_energies_csv(dir, rep);
    write_verdicts_csv(dir, rep);
    write_config_echo(dir, resolved_echo(setup));
    auto manifest = manifest_header("stability", args, setup);
    manifest.push_back("reference_drift: " + fmt17(rep.reference_drift));
    int unstable = 0;
    for (const auto& r : rep.runs) unstable += r.unstable ? 1 : 0;
    manifest.push_back("unstable_runs: " + std::to_string(unstable) + " of " +
                       std::to_string(rep.runs.size()));
    write_manifest(dir, manifest);
    std::cout << "wrote " << dir.string() << "\n";
    return 0;
}

int cmd_balance(const CommonArgs& args) {
    const LoadedSetup setup = load(args);
    const auto levels = default_h_levels(setup.scheme.H, setup.levels);
    const ConvergenceReport rep =
        balance_correction_study(setup.sys, setup.part, setup.scheme, levels);
    const std::filesystem::path dir(args.out_dir);
    write_report_csv(dir, rep);
    write_orders_csv(dir, rep);
    write_config_echo(dir, resolved_echo(setup));
    auto manifest = manifest_header("balance", args, setup);
    for (const auto& f : rep.fits) {
        manifest.push_back("fit: " + f.variant + " order_end=" + fmt17(f.end_fit.slope));
    }
    write_manifest(dir, manifest);
    std::cout << "wrote " << dir.string() << "\n";
    return 0;
}

int cmd_pitfall(const CommonArgs& args) {
    const LoadedSetup setup = load(args);
    const auto levels = default_h_levels(setup.scheme.H, setup.levels);
    const PitfallReport rep = pitfall_experiment(setup.sys, setup.part, setup.scheme, levels);
    const std::filesystem::path dir(args.out_dir);
    write_report_csv(dir, rep.report);
    write_orders_csv(dir, rep.report);
    write_pitfall_flags(dir, rep);
    write_config_echo(dir, resolved_echo(setup));
    auto manifest = manifest_header("pitfall", args, setup);
    manifest.push_back("euler_startup_gap: " + fmt17(rep.euler_startup.gap));
    manifest.push_back("rk4_startup_gap: " + fmt17(rep.rk4_startup.gap));
    write_manifest(dir, manifest);
    std::cout << "wrote " << dir.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"explicit co-simulation kernel and experiment harness"};
    app.require_subcommand(1);

    CommonArgs run_args, conv_args, stab_args, bal_args, pit_args;
    auto* run_cmd = app.add_subcommand("run", "single co-simulation, CSV trajectory");
    add_common(run_cmd, run_args, false);
    auto* conv_cmd = app.add_subcommand("converge", "convergence study against the oracle");
    add_common(conv_cmd, conv_args, true);
    auto* stab_cmd = app.add_subcommand("stability", "energy series and verdicts per H");
    add_common(stab_cmd, stab_args, false);
    auto* bal_cmd = app.add_subcommand("balance", "balance-corrected vs plain convergence");
    add_common(bal_cmd, bal_args, true);
    auto* pit_cmd = app.add_subcommand("pitfall", "AB2 restart vs carried-history orders");
    add_common(pit_cmd, pit_args, true);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) return cmd_run(run_args);
        if (conv_cmd->parsed()) return cmd_converge(conv_args);
        if (stab_cmd->parsed()) return cmd_stability(stab_args);
        if (bal_cmd->parsed()) return cmd_balance(bal_args);
        if (pit_cmd->parsed()) return cmd_pitfall(pit_args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
