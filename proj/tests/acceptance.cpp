// Acceptance suite: runs every headline requirement at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exit code is the number of
// failures. Usage: cosim_acceptance [path-to-cli] [path-to-configs].

#include "cosim/cosim.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

using namespace cosim;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void criterion(int number, const std::string& name, double budget_s,
               const std::function<bool(std::string&)>& body) {
    std::string detail;
    bool ok = false;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        ok = body(detail);
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (elapsed > budget_s) {
        ok = false;
        detail += (detail.empty() ? "" : "; ") + std::string("over time budget");
    }
    std::printf("%s  %d %-28s (%5.2fs)  %s\n", ok ? "PASS" : "FAIL", number, name.c_str(),
                elapsed, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

SchemeConfig tight_rk45(int c = 10) {
    SchemeConfig cfg;
    cfg.h_rule = HRule::proportional(c);
    cfg.controls[0].method = Method::RK45Adaptive;
    cfg.controls[0].rel_tol = 1e-12;
    cfg.controls[0].abs_tol = 1e-12;
    return cfg;
}

std::string fnum(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", x);
    return buf;
}

bool in_range(double x, double lo, double hi) { return x >= lo && x <= hi; }

// ----- criterion bodies ----------------------------------------------------

bool euler_equivalence(std::string& detail) {
    double worst = 0.0;
    for (Problem p : {Problem::LinearTriangular, Problem::LinearOffdiag}) {
        ProblemSetup setup = canonical_problem(p);
        SchemeConfig cfg;
        cfg.H = 0.2;
        cfg.extrapolation = Extrapolation::zoh();
        cfg.h_rule = HRule::proportional(1);
        cfg.controls[0].method = Method::EulerForward;
        CosimRun run = run_cosim(setup.sys, setup.part, cfg);
        StateVec x = setup.sys.x0;
        RhsFn mono = monolithic_rhs(setup.sys);
        for (int k = 0; k < run.grid.intervals(); ++k) {
            x = step_euler(mono, no_input(), run.grid.T[static_cast<std::size_t>(k)], x,
                           run.grid.T[static_cast<std::size_t>(k) + 1] -
                               run.grid.T[static_cast<std::size_t>(k)]);
            for (std::size_t i = 0; i < x.size(); ++i) {
                worst = std::max(worst,
                                 std::abs(x[i] - run.states[static_cast<std::size_t>(k) + 1][i]));
            }
        }
    }
    detail = "max deviation " + fnum(worst);
    return worst <= 1e-13;
}

ConvergenceReport g_tri_report, g_off_report;  // shared between criteria 2 and 3

bool linear_orders(std::string& detail) {
    SchemeConfig base = tight_rk45();
    const std::vector<StudyVariant> variants = {
        make_variant("zoh", base, Extrapolation::zoh()),
        make_variant("foh", base, Extrapolation::foh())};
    const auto levels = default_h_levels(0.2, 7);
    g_tri_report = convergence_study(Problem::LinearTriangular, variants, levels);
    g_off_report = convergence_study(Problem::LinearOffdiag, variants, levels);

    const double tz = g_tri_report.fit_for("zoh").end_fit.slope;
    const double tf = g_tri_report.fit_for("foh").end_fit.slope;
    const double oz = g_off_report.fit_for("zoh").end_fit.slope;
    const double of = g_off_report.fit_for("foh").end_fit.slope;
    detail = "tri zoh=" + fnum(tz) + " foh=" + fnum(tf) + ", off zoh=" + fnum(oz) +
             " foh=" + fnum(of);
    return in_range(tz, 0.85, 1.3) && in_range(oz, 0.85, 1.3) && in_range(tf, 1.8, 2.3) &&
           in_range(of, 1.8, 2.3) && std::abs(tf - of) <= 0.3;
}

bool input_free_component(std::string& detail) {
    double worst_ratio = std::numeric_limits<double>::infinity();
    for (const auto& row : g_tri_report.rows) {
        if (row.dnf) return false;
        const double free_err = row.err_end_components.at(0);
        const double coupled_err = row.err_end_components.at(1);
        worst_ratio = std::min(worst_ratio, coupled_err / std::max(free_err, 1e-300));
    }
    detail = "min coupled/free ratio " + fnum(worst_ratio);
    return worst_ratio >= 100.0;
}

bool spring_mass_orders(std::string& detail) {
    SchemeConfig base = tight_rk45();
    base.spread_k = 1;
    const std::vector<StudyVariant> variants = {
        make_variant("zoh", base, Extrapolation::zoh()),
        make_variant("foh", base, Extrapolation::foh()),
        make_variant("zoh+bc", base, Extrapolation::zoh(), true)};
    ConvergenceReport rep =
        convergence_study(Problem::SpringMass, variants, default_h_levels(0.2, 7));
    const double z = rep.fit_for("zoh").end_fit.slope;
    const double f = rep.fit_for("foh").end_fit.slope;
    const double bc = rep.fit_for("zoh+bc").end_fit.slope;
    detail = "zoh=" + fnum(z) + " foh=" + fnum(f) + " zoh+bc=" + fnum(bc);
    return in_range(z, 0.85, 1.3) && in_range(f, 1.8, 2.3) && in_range(bc, 1.8, 2.5);
}

bool instability(std::string& detail) {
    ProblemSetup sm = canonical_problem(Problem::SpringMass);
    SchemeConfig base = tight_rk45();
    StabilityReport rep = stability_experiment(
        sm.sys, sm.part,
        {make_variant("zoh", base, Extrapolation::zoh()),
         make_variant("foh", base, Extrapolation::foh())},
        {0.2, 0.1, 0.05, 0.025});
    bool all_grow = rep.runs.size() == 8;
    double min_growth = std::numeric_limits<double>::infinity();
    for (const auto& r : rep.runs) {
        all_grow = all_grow && r.energy.back() > r.energy.front();
        min_growth = std::min(min_growth, r.growth);
    }
    detail = "min growth " + fnum(min_growth) + ", reference drift " +
             fnum(rep.reference_drift);
    return all_grow && rep.reference_drift <= 1e-6;
}

bool ledger_telescoping(std::string& detail) {
    ProblemSetup sm = canonical_problem(Problem::SpringMass);
    SchemeConfig cfg = tight_rk45();
    cfg.H = 0.2;
    cfg.extrapolation = Extrapolation::zoh();
    cfg.balance_correction = true;
    cfg.spread_k = 1;
    CosimRun run = run_cosim(sm.sys, sm.part, cfg);
    double worst = 0.0;
    for (const auto& [channel, series] : run.diag.channels) {
        double sender = 0.0, delivered = 0.0;
        for (std::size_t k = 0; k < series.delta_e.size(); ++k) {
            sender += series.sender_integral[k];
            delivered += series.base_integral[k] + series.correction_delivered[k];
        }
        worst = std::max(worst, std::abs(sender - delivered - series.delta_e.back()));
    }
    detail = "max telescoping defect " + fnum(worst);
    return worst <= 1e-8;
}

bool signal_properties(std::string& detail) {
    // Lagrange exactness on polynomials of matching degree.
    for (int degree = 0; degree <= 3; ++degree) {
        auto poly = [degree](double t) {
            double acc = 0.0;
            for (int i = 0; i <= degree; ++i) acc = acc * t + (0.3 + 0.7 * i);
            return acc;
        };
        std::vector<std::pair<double, double>> samples;
        for (int i = 0; i <= degree; ++i) {
            samples.emplace_back(-1.0 + 0.4 * i, poly(-1.0 + 0.4 * i));
        }
        Extrapolant e = fit_lagrange(samples, degree, 2.0, 4.0);
        for (int rep = 0; rep < 20; ++rep) {
            const double t = -1.0 + 0.21 * rep;
            const double want = poly(t);
            if (std::abs(e.eval(t) - want) > 1e-10 * std::max(1.0, std::abs(want))) {
                detail = "lagrange exactness failed at degree " + std::to_string(degree);
                return false;
            }
        }
    }
    // Smoothstep endpoint and derivative contract.
    SwitchBlend b = smooth_blend(fit_zoh(0.0, 0.0, 0.0, 1.0), fit_zoh(0.0, 1.0, 0.0, 1.0),
                                 0.0, 1.0);
    const double eps = 1e-6;
    if (b.eval(0.0) != 0.0 || b.eval(1.0) != 1.0) {
        detail = "smoothstep endpoint contract failed";
        return false;
    }
    if (std::abs((b.eval(eps) - b.eval(0.0)) / eps) > 1e-5 ||
        std::abs((b.eval(1.0) - b.eval(1.0 - eps)) / eps) > 1e-5) {
        detail = "smoothstep derivative contract failed";
        return false;
    }
    // Unit-mass weights under 50-node Gauss-Legendre quadrature.
    {
        const int n = 50;
        const double pi = std::acos(-1.0);
        std::vector<double> xs, ws;
        for (int i = 0; i < n; ++i) {
            double t = std::cos(pi * (i + 0.75) / (n + 0.5));
            double dp = 0.0;
            for (int iter = 0; iter < 100; ++iter) {
                double p0 = 1.0, p1 = t;
                for (int k = 2; k <= n; ++k) {
                    const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (t * p1 - p0) / (t * t - 1.0);
                const double dt = p1 / dp;
                t -= dt;
                if (std::abs(dt) < 1e-15) break;
            }
            xs.push_back(t);
            ws.push_back(2.0 / ((1.0 - t * t) * dp * dp));
        }
        for (WeightKind kind : {WeightKind::ConstantBox, WeightKind::SmoothBump}) {
            CorrectionTerm c{kind, 0.0, 0.7, 1.0};
            double mass = 0.0;
            for (int i = 0; i < n; ++i) {
                mass += ws[static_cast<std::size_t>(i)] *
                        c.weight(0.35 + 0.35 * xs[static_cast<std::size_t>(i)]);
            }
            mass *= 0.35;
            if (std::abs(mass - 1.0) > 1e-12) {
                detail = "unit mass failed for " + weight_kind_name(kind);
                return false;
            }
        }
    }
    // Balance error closed form: u(t) = t under ZOH commits H^2/2.
    const double H = 0.8;
    MicroTrajectory traj;
    for (int i = 0; i <= 4; ++i) {
        const double t = H * i / 4.0;
        traj.times.push_back(i == 4 ? H : t);
        traj.states.push_back({traj.times.back()});
        traj.derivs.push_back({1.0});
    }
    BalanceError be = compute_balance_error(traj, 0, fit_zoh(0.0, 0.0, 0.0, H), 0.0, H);
    if (std::abs(be.delta_e - H * H / 2.0) > 1e-12) {
        detail = "ZOH ramp balance error != H^2/2";
        return false;
    }
    detail = "all signal-layer properties hold";
    return true;
}

bool pitfall(std::string& detail) {
    ProblemSetup tri = canonical_problem(Problem::LinearTriangular);
    SchemeConfig base;
    base.extrapolation = Extrapolation::foh();
    base.h_rule = HRule::proportional(5);
    PitfallReport rep =
        pitfall_experiment(tri.sys, tri.part, base, default_h_levels(0.2, 7));
    detail = "euler gap " + fnum(rep.euler_startup.gap) + ", rk4 gap " +
             fnum(rep.rk4_startup.gap);
    return rep.euler_startup.gap >= 0.5 && std::abs(rep.rk4_startup.gap) <= 0.2;
}

std::string g_cli_path, g_config_dir;

bool read_file(const fs::path& p, std::string& out) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return false;
    out.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return true;
}

bool dirs_identical(const fs::path& a, const fs::path& b, std::string& detail) {
    std::vector<fs::path> names;
    for (const auto& entry : fs::directory_iterator(a)) {
        names.push_back(entry.path().filename());
    }
    if (names.empty()) {
        detail = "no output files";
        return false;
    }
    std::sort(names.begin(), names.end());
    for (const auto& name : names) {
        std::string va, vb;
        if (!read_file(a / name, va) || !read_file(b / name, vb) || va != vb) {
            detail = "mismatch in " + name.string();
            return false;
        }
    }
    return true;
}

bool determinism(std::string& detail) {
    if (g_cli_path.empty() || g_config_dir.empty()) {
        detail = "cli path / config dir not supplied";
        return false;
    }
    const fs::path scratch = fs::temp_directory_path() / "cosim_acceptance_determinism";
    fs::remove_all(scratch);
    fs::create_directories(scratch);
    struct Cmd {
        std::string sub, cfg, extra;
    };
    const std::vector<Cmd> cmds = {
        {"converge", "linear_triangular.cfg", "--levels 4"},
        {"run", "spring_mass_bc.cfg", ""},
    };
    for (const auto& cmd : cmds) {
        const fs::path cfg = fs::path(g_config_dir) / cmd.cfg;
        for (const char* tag : {"a", "b"}) {
            const fs::path out = scratch / (cmd.sub + "_" + tag);
            const std::string line = "\"" + g_cli_path + "\" " + cmd.sub + " \"" +
                                     cfg.string() + "\" --out \"" + out.string() + "\" " +
                                     cmd.extra + " > /dev/null";
            if (std::system(line.c_str()) != 0) {
                detail = "command failed: " + line;
                return false;
            }
        }
        if (!dirs_identical(scratch / (cmd.sub + "_a"), scratch / (cmd.sub + "_b"), detail)) {
            detail = cmd.sub + ": " + detail;
            return false;
        }
    }
    fs::remove_all(scratch);
    detail = "repeated runs byte-identical";
    return true;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc > 1) g_cli_path = argv[1];
    if (argc > 2) g_config_dir = argv[2];

    criterion(1, "euler equivalence", 1.0, euler_equivalence);
    criterion(2, "linear problem orders", 30.0, linear_orders);
    criterion(3, "input-free component", 30.0, input_free_component);
    criterion(4, "spring-mass orders", 30.0, spring_mass_orders);
    criterion(5, "instability", 5.0, instability);
    criterion(6, "ledger telescoping", 1.0, ledger_telescoping);
    criterion(7, "signal-layer properties", 1.0, signal_properties);
    criterion(8, "multistep pitfall", 10.0, pitfall);
    criterion(9, "determinism", 60.0, determinism);

    if (g_failures == 0) {
        std::printf("all acceptance criteria passed\n");
    } else {
        std::printf("%d acceptance criteria FAILED\n", g_failures);
    }
    return g_failures;
}
