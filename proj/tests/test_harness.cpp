#include <catch2/catch_amalgamated.hpp>

#include "cosim/harness.hpp"
#include "cosim/report_io.hpp"

#include <cmath>

using namespace cosim;
using Catch::Approx;

namespace {

SchemeConfig tight_rk45() {
    SchemeConfig cfg;
    cfg.h_rule = HRule::proportional(10);
    cfg.controls[0].method = Method::RK45Adaptive;
    cfg.controls[0].rel_tol = 1e-12;
    cfg.controls[0].abs_tol = 1e-12;
    return cfg;
}

}  // namespace

TEST_CASE("canonical problems", "[harness][problems]") {
    ProblemSetup tri = canonical_problem(Problem::LinearTriangular);
    CHECK(tri.sys.at(0, 1) == 0.0);
    CHECK(tri.part.subsystems[0].inputs.empty());
    CHECK(tri.part.subsystems[1].inputs == std::vector<int>{0});

    ProblemSetup off = canonical_problem(Problem::LinearOffdiag);
    CHECK(off.sys.at(0, 0) == 0.0);
    CHECK_FALSE(validate_wiring(off.sys, off.part, SchemeConfig{}).acyclic);

    ProblemSetup sm = canonical_problem(Problem::SpringMass);
    CHECK(sm.sys.kind == SystemKind::SpringMass);
    CHECK(sm.sys.t_end == 20.0);
}

TEST_CASE("h level ladder", "[harness][levels]") {
    auto levels = default_h_levels(0.2, 7);
    REQUIRE(levels.size() == 7);
    CHECK(levels.front() == Approx(0.2));
    CHECK(levels.back() == Approx(0.2 / 64.0));
}

TEST_CASE("order estimation", "[harness][order]") {
    OrderFit one = estimate_order({1.0, 0.5, 0.25}, {1.0, 0.5, 0.25});
    CHECK(one.slope == Approx(1.0));
    REQUIRE(one.log2_ratios.size() == 2);
    CHECK(one.log2_ratios[0] == Approx(1.0));

    OrderFit two = estimate_order({1.0, 0.25, 0.0625}, {1.0, 0.5, 0.25});
    CHECK(two.slope == Approx(2.0));

    CHECK_THROWS_AS(estimate_order({0.5}, {0.1}), ConfigError);

    OrderFit filtered = estimate_order({1.0, -1.0, 0.25, 0.0625}, {1.0, 0.5, 0.25, 0.125});
    CHECK(filtered.n_used == 3);
    CHECK(filtered.warnings.size() == 1);
}

TEST_CASE("convergence orders of the linear problems", "[harness][convergence]") {
    SchemeConfig base = tight_rk45();
    std::vector<StudyVariant> variants = {make_variant("zoh", base, Extrapolation::zoh()),
                                          make_variant("foh", base, Extrapolation::foh())};
    auto levels = default_h_levels(0.2, 5);

    ConvergenceReport tri = convergence_study(Problem::LinearTriangular, variants, levels);
    CHECK(tri.fit_for("zoh").end_fit.slope == Approx(1.0).margin(0.3));
    CHECK(tri.fit_for("foh").end_fit.slope == Approx(2.0).margin(0.3));

    ConvergenceReport off = convergence_study(Problem::LinearOffdiag, variants, levels);
    CHECK(off.fit_for("zoh").end_fit.slope == Approx(1.0).margin(0.3));
    CHECK(off.fit_for("foh").end_fit.slope == Approx(2.0).margin(0.3));

    SECTION("one exchange interval reduces to the monolithic method") {
        SchemeConfig euler;
        euler.h_rule = HRule::proportional(1);
        euler.controls[0].method = Method::EulerForward;
        ProblemSetup setup = canonical_problem(Problem::LinearTriangular);
        ConvergenceReport rep = convergence_study(
            setup.sys, setup.part, {make_variant("zoh", euler, Extrapolation::zoh())},
            {setup.sys.t_end - setup.sys.t0}, ReferenceSolution::for_system(setup.sys));

        StepControl ctrl;
        ctrl.method = Method::EulerForward;
        ctrl.h_fixed = setup.sys.t_end - setup.sys.t0;
        MicroTrajectory t =
            integrate(monolithic_rhs(setup.sys), no_input(), setup.sys.x0, setup.sys.t0,
                      setup.sys.t_end, ctrl);
        StateVec ref = ReferenceSolution::for_system(setup.sys)(setup.sys.t_end);
        double err = 0.0;
        for (std::size_t i = 0; i < ref.size(); ++i) {
            const double d = t.back_state()[i] - ref[i];
            err += d * d;
        }
        CHECK(rep.rows[0].err_end == Approx(std::sqrt(err)).margin(1e-15));
    }
}

TEST_CASE("blow-ups are recorded as DNF and excluded from fits", "[harness][dnf]") {
    SystemSpec sys = SystemSpec::linear_dense({1e160, 0.0, 1.0, -1.0}, {1.0, 1.0}, 0.0, 2.0);
    Partition part = Partition::from_owned_sets({{0}, {1}}, sys);
    SchemeConfig cfg;
    cfg.h_rule = HRule::proportional(1);
    cfg.controls[0].method = Method::EulerForward;
    ConvergenceReport rep = convergence_study(
        sys, part, {make_variant("zoh", cfg, Extrapolation::zoh())}, default_h_levels(0.2, 4),
        ReferenceSolution::matrix_exponential(sys.matrix, sys.dim, sys.x0, sys.t0));
    int dnf = 0;
    for (const auto& r : rep.rows) dnf += r.dnf ? 1 : 0;
    CHECK(dnf == 4);
    CHECK_FALSE(rep.fits[0].fitted);
}

TEST_CASE("stability experiment", "[harness][stability]") {
    ProblemSetup sm = canonical_problem(Problem::SpringMass);
    SchemeConfig base = tight_rk45();
    StabilityReport rep = stability_experiment(
        sm.sys, sm.part, {make_variant("zoh", base, Extrapolation::zoh())}, {0.2, 0.1});
    REQUIRE(rep.runs.size() == 2);
    for (const auto& r : rep.runs) {
        CHECK(r.unstable);
        CHECK(r.energy.back() > r.energy.front());
    }
    CHECK(rep.reference_drift <= 1e-6);
    CHECK_FALSE(rep.reference.unstable);

    ProblemSetup tri = canonical_problem(Problem::LinearTriangular);
    CHECK_THROWS_AS(stability_experiment(tri.sys, tri.part, {}, {0.2}), ConfigError);
}

TEST_CASE("balance correction raises the observed order", "[harness][balance]") {
    ProblemSetup sm = canonical_problem(Problem::SpringMass);
    SchemeConfig base = tight_rk45();
    base.extrapolation = Extrapolation::zoh();
    base.spread_k = 1;
    ConvergenceReport rep =
        balance_correction_study(sm.sys, sm.part, base, default_h_levels(0.2, 5));
    const double plain = rep.fit_for("zoh").end_fit.slope;
    const double corrected = rep.fit_for("zoh+bc").end_fit.slope;
    CHECK(corrected > plain + 0.5);

    SECTION("spreading keeps at least the uncorrected order") {
        SchemeConfig spread = base;
        spread.spread_k = 2;
        ConvergenceReport rep2 =
            balance_correction_study(sm.sys, sm.part, spread, default_h_levels(0.2, 5));
        CHECK(rep2.fit_for("zoh+bc").end_fit.slope >= plain - 0.1);
    }
}

TEST_CASE("multistep restart pitfall", "[harness][pitfall]") {
    ProblemSetup tri = canonical_problem(Problem::LinearTriangular);
    SchemeConfig base;
    base.extrapolation = Extrapolation::foh();
    base.h_rule = HRule::proportional(5);
    PitfallReport rep =
        pitfall_experiment(tri.sys, tri.part, base, default_h_levels(0.2, 5));
    CHECK(rep.euler_startup.gap >= 0.5);
    CHECK(std::abs(rep.rk4_startup.gap) <= 0.2);
    CHECK(rep.euler_startup.order_carried == Approx(2.0).margin(0.3));
}

TEST_CASE("fixed micro step exposes the subsystem error floor", "[harness][plateau]") {
    SchemeConfig base;
    base.h_rule = HRule::fixed(0.00625);
    base.controls[0].method = Method::EulerForward;
    ConvergenceReport rep = convergence_study(
        Problem::LinearTriangular, {make_variant("foh", base, Extrapolation::foh())},
        default_h_levels(0.2, 6));
    const auto rows = rep.rows_for("foh");
    // Once the extrapolation error falls below the fixed-step solver error,
    // refining H alone stops helping.
    CHECK(rows[rows.size() - 1].err_end == Approx(rows[rows.size() - 2].err_end).epsilon(0.05));
    CHECK(rep.fit_for("foh").end_fit.slope < 0.5);
}

TEST_CASE("report CSV round-trip is deterministic", "[harness][io]") {
    SchemeConfig base = tight_rk45();
    ConvergenceReport rep = convergence_study(
        Problem::LinearTriangular, {make_variant("zoh", base, Extrapolation::zoh())},
        default_h_levels(0.2, 4));
    const std::filesystem::path dir =
        std::filesystem::temp_directory_path() / "cosim_report_io_test";
    std::filesystem::remove_all(dir);
    write_report_csv(dir, rep);
    write_orders_csv(dir, rep);
    std::ifstream in(dir / "report.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "variant,H,h,err_end,err_sup,err_end_components,dnf");
    int lines = 0;
    for (std::string line; std::getline(in, line);) ++lines;
    CHECK(lines == 4);
    std::filesystem::remove_all(dir);
}

TEST_CASE("17 significant digits in CSV numbers", "[harness][io]") {
    CHECK(fmt17(0.1) == "0.10000000000000001");
    CHECK(fmt17(1.0) == "1");
    CHECK(fmt17(0.2 / 64.0) == "0.0031250000000000002");
}
