#pragma once

// Plain-CSV emission of runs and reports: one-line headers, 17 significant
// digits, a sidecar manifest per output directory. No timestamps anywhere --
// re-running a command must reproduce every file byte for byte.

#include "cosim/config.hpp"
#include "cosim/harness.hpp"
#include "cosim/orchestrator.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace cosim {

/// Shortest representation with 17 significant digits.
inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& dir, const std::string& name) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + (dir / name).string());
    return out;
}

}  // namespace detail

inline void write_config_echo(const std::filesystem::path& dir,
                              const std::vector<std::pair<std::string, std::string>>& kv) {
    auto out = detail::open_out(dir, "config_echo.csv");
    out << "key,value\n";
    for (const auto& [k, v] : kv) out << k << ",\"" << v << "\"\n";
}

inline void write_manifest(const std::filesystem::path& dir,
                           const std::vector<std::string>& lines) {
    auto out = detail::open_out(dir, "manifest.txt");
    for (const auto& line : lines) out << line << "\n";
}

/// Full state at every exchange time.
inline void write_trajectory_csv(const std::filesystem::path& dir, const CosimRun& run) {
    auto out = detail::open_out(dir, "trajectory.csv");
    out << "t";
    for (std::size_t i = 0; i < run.states.front().size(); ++i) out << ",x" << i;
    out << "\n";
    for (std::size_t k = 0; k < run.grid.T.size(); ++k) {
        out << fmt17(run.grid.T[k]);
        for (double v : run.states[k]) out << "," << fmt17(v);
        out << "\n";
    }
}

/// Per-interval balance accounting of every channel.
inline void write_balance_csv(const std::filesystem::path& dir, const CosimRun& run) {
    auto out = detail::open_out(dir, "balance.csv");
    out << "interval,channel,delta_e,sender_integral,base_integral,correction_delivered\n";
    for (const auto& [channel, series] : run.diag.channels) {
        for (std::size_t k = 0; k < series.delta_e.size(); ++k) {
            out << k << "," << channel << "," << fmt17(series.delta_e[k]) << ","
                << fmt17(series.sender_integral[k]) << "," << fmt17(series.base_integral[k])
                << "," << fmt17(series.correction_delivered[k]) << "\n";
        }
    }
}

inline void write_energy_csv(const std::filesystem::path& dir, const CosimRun& run) {
    auto out = detail::open_out(dir, "energy.csv");
    out << "t,energy\n";
    for (std::size_t k = 0; k < run.diag.energy.size(); ++k) {
        out << fmt17(run.grid.T[k]) << "," << fmt17(run.diag.energy[k]) << "\n";
    }
}

inline void write_report_csv(const std::filesystem::path& dir, const ConvergenceReport& rep,
                             const std::string& name = "report.csv") {
    auto out = detail::open_out(dir, name);
    out << "variant,H,h,err_end,err_sup,err_end_components,dnf\n";
    for (const auto& r : rep.rows) {
        out << r.variant << "," << fmt17(r.H) << "," << fmt17(r.h_resolved) << ","
            << fmt17(r.err_end) << "," << fmt17(r.err_sup) << ",\"";
        for (std::size_t i = 0; i < r.err_end_components.size(); ++i) {
            if (i) out << ";";
            out << fmt17(r.err_end_components[i]);
        }
        out << "\"," << (r.dnf ? 1 : 0) << "\n";
    }
}

inline void write_orders_csv(const std::filesystem::path& dir, const ConvergenceReport& rep,
                             const std::string& name = "orders.csv") {
    auto out = detail::open_out(dir, name);
    out << "variant,fitted_order_end,fitted_order_sup,levels_used,log2_ratios_end\n";
    for (const auto& f : rep.fits) {
        out << f.variant << "," << fmt17(f.end_fit.slope) << "," << fmt17(f.sup_fit.slope)
            << "," << f.end_fit.n_used << ",\"";
        for (std::size_t i = 0; i < f.end_fit.log2_ratios.size(); ++i) {
            if (i) out << ";";
            out << fmt17(f.end_fit.log2_ratios[i]);
        }
        out << "\"\n";
    }
}

inline void write_energies_csv(const std::filesystem::path& dir, const StabilityReport& rep) {
    auto out = detail::open_out(dir, "energies.csv");
    out << "variant,H,t,energy\n";
    for (const auto& run : rep.runs) {
        for (std::size_t k = 0; k < run.t.size(); ++k) {
            out << run.variant << "," << fmt17(run.H) << "," << fmt17(run.t[k]) << ","
                << fmt17(run.energy[k]) << "\n";
        }
    }
    for (std::size_t k = 0; k < rep.reference.t.size(); ++k) {
        out << rep.reference.variant << "," << fmt17(rep.reference.H) << ","
            << fmt17(rep.reference.t[k]) << "," << fmt17(rep.reference.energy[k]) << "\n";
    }
}

inline void write_verdicts_csv(const std::filesystem::path& dir, const StabilityReport& rep) {
    auto out = detail::open_out(dir, "verdicts.csv");
    out << "variant,H,E_start,E_end,growth,verdict\n";
    auto line = [&](const EnergyRun& r) {
        out << r.variant << "," << fmt17(r.H) << "," << fmt17(r.energy.front()) << ","
            << fmt17(r.energy.back()) << "," << fmt17(r.growth) << ","
            << (r.unstable ? "unstable" : "stable") << "\n";
    };
    for (const auto& r : rep.runs) line(r);
    line(rep.reference);
}

inline void write_pitfall_flags(const std::filesystem::path& dir, const PitfallReport& rep) {
    auto out = detail::open_out(dir, "flags.txt");
    auto block = [&](const char* name, const PitfallFlags& f) {
        out << name << ".order_restart = " << fmt17(f.order_restart) << "\n";
        out << name << ".order_carried = " << fmt17(f.order_carried) << "\n";
        out << name << ".gap = " << fmt17(f.gap) << "\n";
        out << name << ".local_min_detected = " << (f.local_min_detected ? "true" : "false")
            << "\n";
    };
    block("euler_startup", rep.euler_startup);
    block("rk4_startup", rep.rk4_startup);
}

}  // namespace cosim
