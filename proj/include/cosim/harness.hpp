#pragma once

// Experiment drivers: convergence studies against exact oracles, order
// fitting, the instability demonstration, and the multistep-restart pitfall.

#include "cosim/model.hpp"
#include "cosim/oracles.hpp"
#include "cosim/orchestrator.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace cosim {

enum class Problem { LinearTriangular, LinearOffdiag, SpringMass };

[[nodiscard]] inline std::string problem_name(Problem p) {
    switch (p) {
        case Problem::LinearTriangular: return "linear_triangular";
        case Problem::LinearOffdiag: return "linear_offdiag";
        case Problem::SpringMass: return "spring_mass";
    }
    return "?";
}

struct ProblemSetup {
    SystemSpec sys;
    Partition part;
};

/// Canonical two-subsystem test problems. The linear matrices realize the
/// unidirectional (lower triangular) and mutual (offdiagonal) couplings with
/// nonpositive spectral abscissa; the spring-mass oscillator uses the
/// normalized c = m = 1, d = 0 over [0, 20].
inline ProblemSetup canonical_problem(Problem p) {
    switch (p) {
        case Problem::LinearTriangular: {
            SystemSpec sys = SystemSpec::linear_dense({-1.0, 0.0, 1.0, -2.0}, {1.0, 1.0},
                                                      0.0, 2.0);
            Partition part = Partition::from_owned_sets({{0}, {1}}, sys);
            return {std::move(sys), std::move(part)};
        }
        case Problem::LinearOffdiag: {
            SystemSpec sys = SystemSpec::linear_dense({0.0, 1.0, -1.0, 0.0}, {1.0, 0.0},
                                                      0.0, 2.0);
            Partition part = Partition::from_owned_sets({{0}, {1}}, sys);
            return {std::move(sys), std::move(part)};
        }
        case Problem::SpringMass: {
            SystemSpec sys = SystemSpec::spring_mass(1.0, 1.0, 0.0, {1.0, 0.0}, 0.0, 20.0);
            Partition part = Partition::from_owned_sets({{0}, {1}}, sys);
            return {std::move(sys), std::move(part)};
        }
    }
    throw ConfigError("canonical_problem: unknown problem");
}

/// The exchange-step ladder H = base * 2^{-N}, N = 0 .. levels-1.
inline std::vector<double> default_h_levels(double base = 0.2, int levels = 7) {
    std::vector<double> out;
    for (int n = 0; n < levels; ++n) out.push_back(base * std::ldexp(1.0, -n));
    return out;
}

struct OrderFit {
    double slope = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> log2_ratios;  // adjacent-halving ratios
    int n_used = 0;
    std::vector<std::string> warnings;
};

/// Least-squares slope of log(error) versus log(H). Non-positive or
/// non-finite errors are excluded with a warning; fewer than two usable
/// points is an error.
inline OrderFit estimate_order(const std::vector<double>& errors,
                               const std::vector<double>& Hs) {
    if (errors.size() != Hs.size()) throw ConfigError("estimate_order: size mismatch");
    OrderFit fit;
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (!(errors[i] > 0.0) || !std::isfinite(errors[i])) {
            fit.warnings.push_back("excluded non-positive error at H=" +
                                   detail::num_str(Hs[i]));
            continue;
        }
        lx.push_back(std::log(Hs[i]));
        ly.push_back(std::log(errors[i]));
    }
    fit.n_used = static_cast<int>(lx.size());
    if (fit.n_used < 2) {
        throw ConfigError("estimate_order: need at least 2 positive finite errors");
    }
    double mx = 0.0, my = 0.0;
    for (int i = 0; i < fit.n_used; ++i) {
        mx += lx[static_cast<std::size_t>(i)];
        my += ly[static_cast<std::size_t>(i)];
    }
    mx /= fit.n_used;
    my /= fit.n_used;
    double sxy = 0.0, sxx = 0.0;
    for (int i = 0; i < fit.n_used; ++i) {
        const double dx = lx[static_cast<std::size_t>(i)] - mx;
        sxy += dx * (ly[static_cast<std::size_t>(i)] - my);
        sxx += dx * dx;
    }
    fit.slope = sxy / sxx;
    // log2(e_k / e_{k+1}); on exact halvings this is the pairwise observed order.
    for (std::size_t i = 0; i + 1 < ly.size(); ++i) {
        fit.log2_ratios.push_back((ly[i] - ly[i + 1]) / std::log(2.0));
    }
    return fit;
}

struct StudyVariant {
    std::string label;
    SchemeConfig cfg;
};

struct ReportRow {
    std::string variant;
    double H = 0.0;
    double h_resolved = std::numeric_limits<double>::quiet_NaN();
    double err_end = std::numeric_limits<double>::quiet_NaN();
    double err_sup = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> err_end_components;
    bool dnf = false;
};

struct VariantFit {
    std::string variant;
    OrderFit end_fit;
    OrderFit sup_fit;
    bool fitted = false;
    std::vector<std::string> warnings;
};

struct ConvergenceReport {
    std::vector<ReportRow> rows;
    std::vector<VariantFit> fits;

    [[nodiscard]] const VariantFit& fit_for(const std::string& label) const {
        for (const auto& f : fits) {
            if (f.variant == label) return f;
        }
        throw ConfigError("ConvergenceReport: no fit for variant " + label);
    }

    [[nodiscard]] std::vector<ReportRow> rows_for(const std::string& label) const {
        std::vector<ReportRow> out;
        for (const auto& r : rows) {
            if (r.variant == label) out.push_back(r);
        }
        return out;
    }
};

namespace detail {

inline double norm2(const StateVec& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

}  // namespace detail

/// Run every (variant, H) pair and measure the end-time and sup-over-grid
/// errors against an exact reference. Blow-ups are recorded as DNF rows and
/// never enter order fits; fits need at least 4 usable levels.
inline ConvergenceReport convergence_study(const SystemSpec& sys, const Partition& part,
                                           const std::vector<StudyVariant>& variants,
                                           const std::vector<double>& H_levels,
                                           const ReferenceSolution& oracle) {
    ConvergenceReport report;
    RunOptions opts;
    opts.keep_micro = false;
    for (const auto& variant : variants) {
        std::vector<double> errs, used_H;
        for (double H : H_levels) {
            SchemeConfig cfg = variant.cfg;
            cfg.H = H;
            ReportRow row;
            row.variant = variant.label;
            row.H = H;
            row.h_resolved = cfg.resolved_h(H);
            try {
                const CosimRun run = run_cosim(sys, part, cfg, opts);
                double sup = 0.0;
                for (std::size_t k = 0; k < run.grid.T.size(); ++k) {
                    const StateVec ref = oracle(run.grid.T[k]);
                    StateVec diff(ref.size());
                    for (std::size_t i = 0; i < ref.size(); ++i) {
                        diff[i] = run.states[k][i] - ref[i];
                    }
                    sup = std::max(sup, detail::norm2(diff));
                    if (k + 1 == run.grid.T.size()) {
                        row.err_end = detail::norm2(diff);
                        row.err_end_components.resize(diff.size());
                        for (std::size_t i = 0; i < diff.size(); ++i) {
                            row.err_end_components[i] = std::abs(diff[i]);
                        }
                    }
                }
                row.err_sup = sup;
                errs.push_back(row.err_end);
                used_H.push_back(H);
            } catch (const IntegrationError&) {
                row.dnf = true;
            }
            report.rows.push_back(std::move(row));
        }
        VariantFit fit;
        fit.variant = variant.label;
        if (static_cast<int>(errs.size()) >= 4) {
            fit.end_fit = estimate_order(errs, used_H);
            std::vector<double> sups;
            for (const auto& r : report.rows) {
                if (r.variant == variant.label && !r.dnf) sups.push_back(r.err_sup);
            }
            fit.sup_fit = estimate_order(sups, used_H);
            fit.fitted = true;
        } else {
            fit.warnings.push_back("fewer than 4 usable H levels, no order fit");
        }
        report.fits.push_back(std::move(fit));
    }
    return report;
}

inline ConvergenceReport convergence_study(Problem p, const std::vector<StudyVariant>& variants,
                                           const std::vector<double>& H_levels) {
    const ProblemSetup setup = canonical_problem(p);
    return convergence_study(setup.sys, setup.part, variants, H_levels,
                             ReferenceSolution::for_system(setup.sys));
}

/// Convenience builder for scheme variants sharing one solver setup.
inline StudyVariant make_variant(std::string label, const SchemeConfig& base,
                                 Extrapolation extrap, bool balance_correction = false,
                                 bool smoothing = false) {
    StudyVariant v;
    v.label = std::move(label);
    v.cfg = base;
    v.cfg.extrapolation = extrap;
    v.cfg.balance_correction = balance_correction;
    v.cfg.smoothing = smoothing;
    return v;
}

struct EnergyRun {
    std::string variant;
    double H = 0.0;
    std::vector<double> t;
    std::vector<double> energy;
    bool unstable = false;
    double growth = 0.0;  // E(T_N)/E(T_0)
};

struct StabilityReport {
    std::vector<EnergyRun> runs;
    EnergyRun reference;       // monolithic tight-tolerance baseline
    double reference_drift = 0.0;  // max relative energy deviation
    double instability_delta = 1e-3;
};

/// Energy time series of the undamped spring-mass co-simulation across a set
/// of exchange steps. Verdict per run: unstable if E(T_N) > E(T_0) (1 + delta).
inline StabilityReport stability_experiment(const SystemSpec& sys, const Partition& part,
                                            const std::vector<StudyVariant>& variants,
                                            const std::vector<double>& Hs = {0.2, 0.1, 0.05,
                                                                             0.025}) {
    if (sys.kind != SystemKind::SpringMass || sys.d != 0.0) {
        throw ConfigError("stability_experiment: requires the undamped spring-mass system");
    }
    StabilityReport rep;
    RunOptions opts;
    opts.keep_micro = false;
    for (const auto& variant : variants) {
        for (double H : Hs) {
            SchemeConfig cfg = variant.cfg;
            cfg.H = H;
            const CosimRun run = run_cosim(sys, part, cfg, opts);
            EnergyRun er;
            er.variant = variant.label;
            er.H = H;
            er.t = run.grid.T;
            er.energy = run.diag.energy;
            er.growth = er.energy.back() / er.energy.front();
            er.unstable = er.energy.back() > er.energy.front() * (1.0 + rep.instability_delta);
            rep.runs.push_back(std::move(er));
        }
    }

    // Monolithic tight-tolerance reference over the same span.
    StepControl ctrl;
    ctrl.method = Method::RK45Adaptive;
    ctrl.rel_tol = 1e-12;
    ctrl.abs_tol = 1e-12;
    const ReferenceSolution mono = ReferenceSolution::monolithic(sys, ctrl);
    const ExchangeGrid grid = ExchangeGrid::uniform(sys.t0, sys.t_end, Hs.front());
    EnergyRun ref;
    ref.variant = "monolithic_rk45";
    ref.H = Hs.front();
    for (double t : grid.T) {
        ref.t.push_back(t);
        ref.energy.push_back(energy(mono(t), sys.c, sys.m));
    }
    const double e0 = ref.energy.front();
    double drift = 0.0;
    for (double e : ref.energy) drift = std::max(drift, std::abs(e - e0) / e0);
    ref.growth = ref.energy.back() / e0;
    ref.unstable = ref.energy.back() > e0 * (1.0 + rep.instability_delta);
    rep.reference = std::move(ref);
    rep.reference_drift = drift;
    return rep;
}

/// Side-by-side fitted orders of the balance-corrected and uncorrected
/// schemes sharing one base extrapolation.
inline ConvergenceReport balance_correction_study(const SystemSpec& sys, const Partition& part,
                                                  const SchemeConfig& base,
                                                  const std::vector<double>& H_levels) {
    std::vector<StudyVariant> variants;
    variants.push_back(make_variant(base.extrapolation.name(), base, base.extrapolation,
                                    false, base.smoothing));
    variants.push_back(make_variant(base.extrapolation.name() + "+bc", base,
                                    base.extrapolation, true, base.smoothing));
    return convergence_study(sys, part, variants, H_levels,
                             ReferenceSolution::for_system(sys));
}

struct PitfallFlags {
    double order_restart = std::numeric_limits<double>::quiet_NaN();
    double order_carried = std::numeric_limits<double>::quiet_NaN();
    double gap = std::numeric_limits<double>::quiet_NaN();
    bool local_min_detected = false;
};

struct PitfallReport {
    ConvergenceReport report;
    PitfallFlags euler_startup;
    PitfallFlags rk4_startup;
};

namespace detail {

inline PitfallFlags pitfall_flags(const ConvergenceReport& rep, const std::string& restart,
                                  const std::string& carried) {
    PitfallFlags f;
    f.order_restart = rep.fit_for(restart).end_fit.slope;
    f.order_carried = rep.fit_for(carried).end_fit.slope;
    f.gap = f.order_carried - f.order_restart;
    const auto rows = rep.rows_for(restart);
    for (std::size_t i = 1; i + 1 < rows.size(); ++i) {
        if (!rows[i].dnf && rows[i].err_end < rows[i - 1].err_end &&
            rows[i].err_end < rows[i + 1].err_end) {
            f.local_min_detected = true;
        }
    }
    return f;
}

}  // namespace detail

/// The multistep-restart pitfall: AB2 subsystems whose history is either
/// dropped at every exchange (each interval pays the startup method's error
/// again) or carried across exchanges. Both startup methods are run so the
/// order penalty can be switched off.
inline PitfallReport pitfall_experiment(const SystemSpec& sys, const Partition& part,
                                        const SchemeConfig& base,
                                        const std::vector<double>& H_levels) {
    std::vector<StudyVariant> variants;
    for (Ab2Startup startup : {Ab2Startup::Euler, Ab2Startup::RK4}) {
        for (bool carry : {false, true}) {
            StudyVariant v;
            v.label = std::string("ab2_") +
                      (startup == Ab2Startup::Euler ? "euler" : "rk4") + "_" +
                      (carry ? "carried" : "restart");
            v.cfg = base;
            for (auto& ctrl : v.cfg.controls) {
                ctrl.method = Method::AB2;
                ctrl.ab2_startup = startup;
                ctrl.ab2_carry_history = carry;
            }
            variants.push_back(std::move(v));
        }
    }
    PitfallReport rep;
    rep.report = convergence_study(sys, part, variants, H_levels,
                                   ReferenceSolution::for_system(sys));
    rep.euler_startup =
        detail::pitfall_flags(rep.report, "ab2_euler_restart", "ab2_euler_carried");
    rep.rk4_startup = detail::pitfall_flags(rep.report, "ab2_rk4_restart", "ab2_rk4_carried");
    return rep;
}

}  // namespace cosim
