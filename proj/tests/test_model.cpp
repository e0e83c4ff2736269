#include <catch2/catch_amalgamated.hpp>

#include "cosim/model.hpp"

#include <random>

using namespace cosim;
using Catch::Approx;

namespace {

const InputFn must_not_call = [](double) -> std::vector<double> {
    FAIL("input evaluation of an input-free subsystem");
    return {};
};

}  // namespace

TEST_CASE("system spec construction", "[model][spec]") {
    CHECK_THROWS_AS(SystemSpec::linear_dense({1.0, 2.0}, {1.0}, 0.0, 1.0), ConfigError);
    CHECK_THROWS_AS(SystemSpec::spring_mass(0.0, 1.0, 0.0, {1.0, 0.0}, 0.0, 1.0),
                    ConfigError);
    CHECK_THROWS_AS(SystemSpec::linear_dense({1.0}, {1.0}, 1.0, 1.0), ConfigError);

    SystemSpec sm = SystemSpec::spring_mass(4.0, 2.0, 0.5, {1.0, 0.0}, 0.0, 1.0);
    CHECK(sm.at(0, 1) == 1.0);
    CHECK(sm.at(1, 0) == Approx(-2.0));
    CHECK(sm.at(1, 1) == Approx(-0.25));
}

TEST_CASE("subsystem RHS restriction", "[model][rhs]") {
    SECTION("lower-triangular row is independent of inputs") {
        SystemSpec sys = SystemSpec::linear_dense({-1.0, 0.0, 1.0, -2.0}, {1.0, 1.0}, 0.0,
                                                  2.0);
        Partition part = Partition::from_owned_sets({{0}, {1}}, sys);
        CHECK(part.subsystems[0].inputs.empty());
        RhsFn f0 = build_rhs(sys, part, 0);
        CHECK(f0(0.0, {2.0}, must_not_call)[0] == Approx(-2.0));

        RhsFn f1 = build_rhs(sys, part, 1);
        const InputFn u = [](double) { return std::vector<double>{3.0}; };
        CHECK(f1(0.0, {1.0}, u)[0] == Approx(3.0 - 2.0));
    }

    SECTION("mass subsystem sees -(c/m) times the received displacement") {
        SystemSpec sys = SystemSpec::spring_mass(2.0, 4.0, 0.0, {1.0, 0.0}, 0.0, 1.0);
        Partition part = Partition::from_owned_sets({{0}, {1}}, sys);
        RhsFn mass = build_rhs(sys, part, 1);
        const InputFn u = [](double) { return std::vector<double>{3.0}; };
        CHECK(mass(0.0, {0.0}, u)[0] == Approx(-0.5 * 3.0));
    }

    SECTION("zero matrix gives the zero field") {
        SystemSpec sys = SystemSpec::linear_dense({0.0, 0.0, 0.0, 0.0}, {1.0, 2.0}, 0.0, 1.0);
        Partition part = Partition::from_owned_sets({{0}, {1}}, sys);
        CHECK(build_rhs(sys, part, 0)(0.0, {5.0}, must_not_call)[0] == 0.0);
    }

    SECTION("index and accessibility errors") {
        SystemSpec sys = SystemSpec::linear_dense({-1.0, 1.0, 1.0, -2.0}, {1.0, 1.0}, 0.0,
                                                  2.0);
        Partition part = Partition::from_owned_sets({{0}, {1}}, sys);
        CHECK_THROWS_AS(build_rhs(sys, part, 7), ConfigError);

        Partition broken = part;
        broken.subsystems[0].inputs.clear();  // row 0 needs state 1
        CHECK_THROWS_AS(build_rhs(sys, broken, 0), ConfigError);
    }
}

TEST_CASE("reassembled subsystem fields match the monolithic RHS", "[model][property]") {
    std::mt19937 rng(20240811);
    std::uniform_real_distribution<double> entry(-2.0, 2.0);
    const int dim = 5;
    std::vector<double> B(dim * dim);
    for (double& v : B) v = entry(rng);
    SystemSpec sys = SystemSpec::linear_dense(B, {1.0, -0.5, 0.25, 2.0, 0.0}, 0.0, 1.0);
    Partition part = Partition::from_owned_sets({{0, 2}, {1, 4}, {3}}, sys);

    std::vector<RhsFn> sub;
    for (int k = 0; k < 3; ++k) sub.push_back(build_rhs(sys, part, k));
    RhsFn mono = monolithic_rhs(sys);

    for (int rep = 0; rep < 100; ++rep) {
        StateVec x(dim);
        for (double& v : x) v = entry(rng);
        const double t = entry(rng);
        const StateVec want = mono(t, x, no_input());
        for (std::size_t k = 0; k < part.subsystems.size(); ++k) {
            const auto& owned = part.subsystems[k].owned;
            const auto& inputs = part.subsystems[k].inputs;
            StateVec xk;
            for (int j : owned) xk.push_back(x[static_cast<std::size_t>(j)]);
            std::vector<double> u;
            for (int j : inputs) u.push_back(x[static_cast<std::size_t>(j)]);
            const InputFn pass = [&u](double) { return u; };
            const StateVec got = sub[k](t, xk, pass);
            for (std::size_t l = 0; l < owned.size(); ++l) {
                CHECK(std::abs(got[l] - want[static_cast<std::size_t>(owned[l])]) <= 1e-14);
            }
        }
    }
}

TEST_CASE("wiring validation", "[model][wiring]") {
    SchemeConfig zoh_cfg;
    SchemeConfig foh_cfg;
    foh_cfg.extrapolation = Extrapolation::foh();

    SECTION("unidirectional coupling is acyclic") {
        SystemSpec sys = SystemSpec::linear_dense({-1.0, 0.0, 1.0, -2.0}, {1.0, 1.0}, 0.0,
                                                  2.0);
        Partition part = Partition::from_owned_sets({{0}, {1}}, sys);
        CHECK(validate_wiring(sys, part, zoh_cfg).acyclic);
    }

    SECTION("mutual coupling is flagged cyclic but allowed") {
        SystemSpec sys = SystemSpec::linear_dense({0.0, 1.0, -1.0, 0.0}, {1.0, 0.0}, 0.0,
                                                  2.0);
        Partition part = Partition::from_owned_sets({{0}, {1}}, sys);
        WiringReport rep = validate_wiring(sys, part, zoh_cfg);
        CHECK_FALSE(rep.acyclic);
    }

    SECTION("FOH without a derivative export is a configuration error") {
        SystemSpec sys = SystemSpec::linear_dense({0.0, 1.0, -1.0, 0.0}, {1.0, 0.0}, 0.0,
                                                  2.0);
        Partition part = Partition::from_owned_sets({{0}, {1}}, sys, false);
        CHECK_NOTHROW(validate_wiring(sys, part, zoh_cfg));
        CHECK_THROWS_AS(validate_wiring(sys, part, foh_cfg), ConfigError);
    }

    SECTION("a state owned and received at once is a hard error") {
        SystemSpec sys = SystemSpec::linear_dense({-1.0, 0.0, 1.0, -2.0}, {1.0, 1.0}, 0.0,
                                                  2.0);
        Partition part = Partition::from_owned_sets({{0}, {1}}, sys);
        part.subsystems[1].inputs = {1};
        CHECK_THROWS_AS(validate_wiring(sys, part, zoh_cfg), ConfigError);
    }

    SECTION("ownership must be disjoint and complete") {
        SystemSpec sys = SystemSpec::linear_dense({-1.0, 0.0, 1.0, -2.0}, {1.0, 1.0}, 0.0,
                                                  2.0);
        Partition dup;
        dup.subsystems.resize(2);
        dup.subsystems[0].owned = {0, 1};
        dup.subsystems[1].owned = {1};
        CHECK_THROWS_AS(validate_wiring(sys, dup, zoh_cfg), ConfigError);

        Partition gap;
        gap.subsystems.resize(1);
        gap.subsystems[0].owned = {0};
        CHECK_THROWS_AS(validate_wiring(sys, gap, zoh_cfg), ConfigError);
    }
}

TEST_CASE("scheme configuration", "[model][scheme]") {
    SchemeConfig cfg;
    cfg.H = 0.2;

    SECTION("validation") {
        SchemeConfig bad = cfg;
        bad.H = 0.0;
        CHECK_THROWS_AS(bad.validate(2), ConfigError);
        bad = cfg;
        bad.spread_k = 5;
        CHECK_THROWS_AS(bad.validate(2), ConfigError);
        bad = cfg;
        bad.h_rule = HRule::proportional(0);
        CHECK_THROWS_AS(bad.validate(2), ConfigError);
        bad = cfg;
        bad.h_rule = HRule::fixed(0.03);  // does not divide 0.2
        CHECK_THROWS_AS(bad.validate(2), ConfigError);
        bad = cfg;
        bad.h_rule = HRule::fixed(0.05);
        CHECK_NOTHROW(bad.validate(2));
    }

    SECTION("h rule resolution") {
        cfg.h_rule = HRule::proportional(10);
        cfg.controls[0].method = Method::EulerForward;
        StepControl euler = cfg.resolved_control(0, 0.2);
        REQUIRE(euler.h_fixed.has_value());
        CHECK(*euler.h_fixed == Approx(0.02));

        cfg.controls[0].method = Method::RK45Adaptive;
        StepControl rk45 = cfg.resolved_control(0, 0.2);
        CHECK(rk45.h_max == Approx(0.02));
        CHECK(cfg.resolved_h(0.2) == Approx(0.02));

        cfg.h_rule = HRule::adaptive();
        CHECK(std::isnan(cfg.resolved_h(0.2)));
    }

    SECTION("extrapolation and h-rule names") {
        CHECK(Extrapolation::zoh().name() == "zoh");
        CHECK(Extrapolation::foh().name() == "foh");
        CHECK(Extrapolation::lagrange(3).name() == "lagrange3");
        CHECK(HRule::proportional(4).name() == "proportional:4");
        CHECK(HRule::adaptive().name() == "adaptive");
    }
}
