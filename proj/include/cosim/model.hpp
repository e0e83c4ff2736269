#pragma once

// Declarative description of the coupled system, its partition into
// subsystems, and the input/output wiring with exchange-direction rules.

#include "cosim/ode.hpp"
#include "cosim/signals.hpp"

#include <algorithm>
#include <set>
#include <string>
#include <vector>

namespace cosim {

enum class SystemKind { LinearDense, SpringMass };

/// Full coupled ODE x' = B x plus the data needed by oracles and energy
/// accounting. SpringMass keeps its physical parameters and also carries the
/// equivalent dense matrix.
struct SystemSpec {
    SystemKind kind = SystemKind::LinearDense;
    int dim = 0;
    std::vector<double> matrix;  // row-major dim x dim
    double c = 0.0, m = 0.0, d = 0.0;  // SpringMass parameters
    StateVec x0;
    double t0 = 0.0;
    double t_end = 0.0;

    [[nodiscard]] double at(int i, int j) const {
        return matrix[static_cast<std::size_t>(i) * static_cast<std::size_t>(dim) +
                      static_cast<std::size_t>(j)];
    }

    static SystemSpec linear_dense(std::vector<double> B, StateVec x0, double t0,
                                   double t_end) {
        SystemSpec s;
        s.kind = SystemKind::LinearDense;
        s.dim = static_cast<int>(x0.size());
        if (B.size() != x0.size() * x0.size()) {
            throw ConfigError("SystemSpec: matrix size does not match dim");
        }
        s.matrix = std::move(B);
        s.x0 = std::move(x0);
        s.t0 = t0;
        s.t_end = t_end;
        s.validate();
        return s;
    }

    static SystemSpec spring_mass(double c, double m, double d, StateVec x0, double t0,
                                  double t_end) {
        if (!(c > 0.0) || !(m > 0.0)) {
            throw ConfigError("SystemSpec: spring_mass requires c > 0 and m > 0");
        }
        SystemSpec s;
        s.kind = SystemKind::SpringMass;
        s.dim = 2;
        s.c = c;
        s.m = m;
        s.d = d;
        s.matrix = {0.0, 1.0, -c / m, d == 0.0 ? 0.0 : -d / m};
        if (x0.size() != 2) throw ConfigError("SystemSpec: spring_mass state is (s, v)");
        s.x0 = std::move(x0);
        s.t0 = t0;
        s.t_end = t_end;
        s.validate();
        return s;
    }

    void validate() const {
        if (dim <= 0) throw ConfigError("SystemSpec: dim must be positive");
        if (static_cast<int>(x0.size()) != dim) throw ConfigError("SystemSpec: x0 size != dim");
        if (!all_finite(x0)) throw ConfigError("SystemSpec: x0 must be finite");
        if (!(t_end > t0)) throw ConfigError("SystemSpec: t_end must exceed t0");
        for (double v : matrix) {
            if (!std::isfinite(v)) throw ConfigError("SystemSpec: non-finite matrix entry");
        }
    }
};

struct OutputPort {
    int state = -1;
    bool export_derivative = true;
};

struct Subsystem {
    std::vector<int> owned;   // D_k, ascending
    std::vector<int> inputs;  // I_k, ascending
    std::vector<OutputPort> outputs;
};

struct Partition {
    std::vector<Subsystem> subsystems;

    [[nodiscard]] int owner_of(int state) const {
        for (std::size_t k = 0; k < subsystems.size(); ++k) {
            const auto& d = subsystems[k].owned;
            if (std::find(d.begin(), d.end(), state) != d.end()) return static_cast<int>(k);
        }
        return -1;
    }

    [[nodiscard]] int local_index(int sub, int state) const {
        const auto& d = subsystems[static_cast<std::size_t>(sub)].owned;
        auto it = std::find(d.begin(), d.end(), state);
        if (it == d.end()) throw ConfigError("Partition: state not owned by subsystem");
        return static_cast<int>(it - d.begin());
    }

    /// All states received by at least one subsystem, ascending.
    [[nodiscard]] std::vector<int> channels() const {
        std::set<int> ch;
        for (const auto& s : subsystems) ch.insert(s.inputs.begin(), s.inputs.end());
        return {ch.begin(), ch.end()};
    }

    /// Build a partition from owned-state sets; inputs are derived from the
    /// nonzero off-block matrix entries and every received state becomes an
    /// output port of its owner.
    static Partition from_owned_sets(const std::vector<std::vector<int>>& owned,
                                     const SystemSpec& sys, bool export_derivative = true) {
        Partition p;
        p.subsystems.resize(owned.size());
        for (std::size_t k = 0; k < owned.size(); ++k) {
            p.subsystems[k].owned = owned[k];
            std::sort(p.subsystems[k].owned.begin(), p.subsystems[k].owned.end());
        }
        for (std::size_t k = 0; k < owned.size(); ++k) {
            std::set<int> ins;
            for (int i : p.subsystems[k].owned) {
                for (int j = 0; j < sys.dim; ++j) {
                    const bool is_owned =
                        std::find(p.subsystems[k].owned.begin(), p.subsystems[k].owned.end(),
                                  j) != p.subsystems[k].owned.end();
                    if (!is_owned && sys.at(i, j) != 0.0) ins.insert(j);
                }
            }
            p.subsystems[k].inputs.assign(ins.begin(), ins.end());
        }
        for (std::size_t k = 0; k < p.subsystems.size(); ++k) {
            std::set<int> exported;
            for (std::size_t r = 0; r < p.subsystems.size(); ++r) {
                if (r == k) continue;
                for (int j : p.subsystems[r].inputs) {
                    const auto& d = p.subsystems[k].owned;
                    if (std::find(d.begin(), d.end(), j) != d.end()) exported.insert(j);
                }
            }
            for (int j : exported) {
                p.subsystems[k].outputs.push_back(OutputPort{j, export_derivative});
            }
        }
        return p;
    }
};

/// How exchanged inputs are reconstructed inside an interval.
struct Extrapolation {
    enum class Kind { ZOH, FOH, Lagrange };
    Kind kind = Kind::ZOH;
    int degree = 0;  // Lagrange only

    static Extrapolation zoh() { return {Kind::ZOH, 0}; }
    static Extrapolation foh() { return {Kind::FOH, 1}; }
    static Extrapolation lagrange(int p) {
        if (p < 0) throw ConfigError("Extrapolation: Lagrange degree must be >= 0");
        return {Kind::Lagrange, p};
    }

    [[nodiscard]] std::string name() const {
        switch (kind) {
            case Kind::ZOH: return "zoh";
            case Kind::FOH: return "foh";
            case Kind::Lagrange: return "lagrange" + std::to_string(degree);
        }
        return "?";
    }

    [[nodiscard]] bool needs_derivative() const { return kind == Kind::FOH; }
};

/// Relation between the exchange step H and the subsystem micro step h.
struct HRule {
    enum class Kind { Proportional, Fixed, SolverAdaptive };
    Kind kind = Kind::Proportional;
    int c = 10;      // Proportional: h = H / c
    double h = 0.0;  // Fixed

    static HRule proportional(int c) { return {Kind::Proportional, c, 0.0}; }
    static HRule fixed(double h) { return {Kind::Fixed, 0, h}; }
    static HRule adaptive() { return {Kind::SolverAdaptive, 0, 0.0}; }

    [[nodiscard]] std::string name() const {
        switch (kind) {
            case Kind::Proportional: return "proportional:" + std::to_string(c);
            case Kind::Fixed: {
                std::ostringstream os;
                os.precision(17);
                os << "fixed:" << h;
                return os.str();
            }
            case Kind::SolverAdaptive: return "adaptive";
        }
        return "?";
    }
};

/// One co-simulation scheme variant: exchange step, reconstruction, smoothing
/// and balance-correction switches, and the per-subsystem solver setup.
struct SchemeConfig {
    double H = 0.1;
    Extrapolation extrapolation = Extrapolation::zoh();
    bool smoothing = false;
    bool balance_correction = false;
    WeightKind weight_kind = WeightKind::ConstantBox;
    int spread_k = 1;
    HRule h_rule = HRule::proportional(10);
    std::vector<StepControl> controls{StepControl{}};  // size 1 = shared by all

    [[nodiscard]] const StepControl& control_for(std::size_t sub) const {
        return controls.size() == 1 ? controls.front() : controls.at(sub);
    }

    void validate(std::size_t n_subsystems) const {
        if (!(H > 0.0)) throw ConfigError("SchemeConfig: H must be positive");
        if (spread_k < 1 || spread_k > 4) {
            throw ConfigError("SchemeConfig: spread_k must lie in 1..4");
        }
        if (h_rule.kind == HRule::Kind::Proportional && h_rule.c < 1) {
            throw ConfigError("SchemeConfig: proportional h rule needs integer c >= 1");
        }
        if (h_rule.kind == HRule::Kind::Fixed) {
            if (!(h_rule.h > 0.0) || h_rule.h > H * (1.0 + 1e-12)) {
                throw ConfigError("SchemeConfig: fixed h must satisfy 0 < h <= H");
            }
            const double ratio = H / h_rule.h;
            if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
                throw ConfigError("SchemeConfig: fixed h must divide H");
            }
        }
        if (controls.size() != 1 && controls.size() != n_subsystems) {
            throw ConfigError("SchemeConfig: need one StepControl, or one per subsystem");
        }
        for (const auto& ctrl : controls) {
            if (h_rule.kind == HRule::Kind::SolverAdaptive) ctrl.validate();
            // Proportional/Fixed rules supply h_fixed at resolution time; only
            // the tolerance/bound invariants can be checked here.
            if (!(ctrl.h_min <= ctrl.h_max)) throw ConfigError("StepControl: h_min > h_max");
            if (!(ctrl.rel_tol > 0.0) || !(ctrl.abs_tol > 0.0)) {
                throw ConfigError("StepControl: tolerances must be positive");
            }
        }
    }

    /// StepControl actually used for one exchange step of width H.
    [[nodiscard]] StepControl resolved_control(std::size_t sub, double H_step) const {
        StepControl ctrl = control_for(sub);
        switch (h_rule.kind) {
            case HRule::Kind::Proportional: {
                const double h = H_step / static_cast<double>(h_rule.c);
                if (is_fixed_step(ctrl.method)) {
                    ctrl.h_fixed = h;
                } else {
                    ctrl.h_max = std::min(ctrl.h_max, h);
                }
                break;
            }
            case HRule::Kind::Fixed: {
                if (is_fixed_step(ctrl.method)) {
                    ctrl.h_fixed = h_rule.h;
                } else {
                    ctrl.h_max = std::min(ctrl.h_max, h_rule.h);
                }
                break;
            }
            case HRule::Kind::SolverAdaptive:
                break;
        }
        return ctrl;
    }

    /// Micro step implied by the h rule (NaN when the solver chooses).
    [[nodiscard]] double resolved_h(double H_step) const {
        switch (h_rule.kind) {
            case HRule::Kind::Proportional: return H_step / static_cast<double>(h_rule.c);
            case HRule::Kind::Fixed: return h_rule.h;
            case HRule::Kind::SolverAdaptive: return std::numeric_limits<double>::quiet_NaN();
        }
        return std::numeric_limits<double>::quiet_NaN();
    }
};

/// RHS of subsystem k: the owned rows of B with received states substituted
/// by the input reconstruction. Accumulation runs in ascending global column
/// order, matching the monolithic RHS bit for bit.
inline RhsFn build_rhs(const SystemSpec& sys, const Partition& part, int k) {
    if (k < 0 || static_cast<std::size_t>(k) >= part.subsystems.size()) {
        throw ConfigError("build_rhs: subsystem index out of range");
    }
    const Subsystem& sub = part.subsystems[static_cast<std::size_t>(k)];
    for (int j : sub.owned) {
        if (j < 0 || j >= sys.dim) throw ConfigError("build_rhs: owned state out of range");
    }
    for (int j : sub.inputs) {
        if (j < 0 || j >= sys.dim) throw ConfigError("build_rhs: input state out of range");
    }

    // Per global column: local owned index, input slot, or inaccessible (-1).
    struct Source {
        int owned_local = -1;
        int input_slot = -1;
    };
    std::vector<Source> src(static_cast<std::size_t>(sys.dim));
    for (std::size_t l = 0; l < sub.owned.size(); ++l) {
        src[static_cast<std::size_t>(sub.owned[l])].owned_local = static_cast<int>(l);
    }
    for (std::size_t l = 0; l < sub.inputs.size(); ++l) {
        src[static_cast<std::size_t>(sub.inputs[l])].input_slot = static_cast<int>(l);
    }
    for (int i : sub.owned) {
        for (int j = 0; j < sys.dim; ++j) {
            const auto& s = src[static_cast<std::size_t>(j)];
            if (s.owned_local < 0 && s.input_slot < 0 && sys.at(i, j) != 0.0) {
                throw ConfigError("build_rhs: subsystem " + std::to_string(k) +
                                  " depends on state " + std::to_string(j) +
                                  " that is neither owned nor received");
            }
        }
    }

    const int dim = sys.dim;
    std::vector<double> B = sys.matrix;
    std::vector<int> owned = sub.owned;
    return [dim, B = std::move(B), owned = std::move(owned), src = std::move(src)](
               double t, const StateVec& x, const InputFn& input) {
        std::vector<double> u;
        bool have_u = false;
        StateVec out(owned.size(), 0.0);
        for (std::size_t r = 0; r < owned.size(); ++r) {
            const std::size_t row = static_cast<std::size_t>(owned[r]) *
                                    static_cast<std::size_t>(dim);
            double acc = 0.0;
            for (int j = 0; j < dim; ++j) {
                const double coeff = B[row + static_cast<std::size_t>(j)];
                const auto& s = src[static_cast<std::size_t>(j)];
                double value = 0.0;
                if (s.owned_local >= 0) {
                    value = x[static_cast<std::size_t>(s.owned_local)];
                } else if (s.input_slot >= 0) {
                    if (!have_u) {
                        u = input(t);
                        have_u = true;
                    }
                    value = u[static_cast<std::size_t>(s.input_slot)];
                }
                acc += coeff * value;
            }
            out[r] = acc;
        }
        return out;
    };
}

/// Whole-system RHS (input-free), the monolithic baseline.
inline RhsFn monolithic_rhs(const SystemSpec& sys) {
    const int dim = sys.dim;
    std::vector<double> B = sys.matrix;
    return [dim, B = std::move(B)](double /*t*/, const StateVec& x, const InputFn&) {
        StateVec out(static_cast<std::size_t>(dim), 0.0);
        for (int i = 0; i < dim; ++i) {
            double acc = 0.0;
            for (int j = 0; j < dim; ++j) {
                acc += B[static_cast<std::size_t>(i) * static_cast<std::size_t>(dim) +
                         static_cast<std::size_t>(j)] *
                       x[static_cast<std::size_t>(j)];
            }
            out[static_cast<std::size_t>(i)] = acc;
        }
        return out;
    };
}

struct WiringReport {
    bool acyclic = true;
    std::vector<std::pair<int, int>> edges;  // sender subsystem -> receiver subsystem
    std::vector<std::string> notes;
};

/// Structural checks of the partition and scheme. Hard errors (overlapping or
/// incomplete ownership, self-input, missing derivative exports for FOH)
/// throw; a cyclic output-dependency digraph is only flagged -- the explicit
/// scheme proceeds.
inline WiringReport validate_wiring(const SystemSpec& sys, const Partition& part,
                                    const SchemeConfig& cfg) {
    WiringReport rep;
    std::vector<int> owner(static_cast<std::size_t>(sys.dim), -1);
    for (std::size_t k = 0; k < part.subsystems.size(); ++k) {
        for (int j : part.subsystems[k].owned) {
            if (j < 0 || j >= sys.dim) throw ConfigError("validate_wiring: state out of range");
            if (owner[static_cast<std::size_t>(j)] >= 0) {
                throw ConfigError("validate_wiring: state " + std::to_string(j) +
                                  " owned by more than one subsystem");
            }
            owner[static_cast<std::size_t>(j)] = static_cast<int>(k);
        }
    }
    for (int j = 0; j < sys.dim; ++j) {
        if (owner[static_cast<std::size_t>(j)] < 0) {
            throw ConfigError("validate_wiring: state " + std::to_string(j) + " unowned");
        }
    }
    for (std::size_t k = 0; k < part.subsystems.size(); ++k) {
        for (int j : part.subsystems[k].inputs) {
            const int o = owner[static_cast<std::size_t>(j)];
            if (o == static_cast<int>(k)) {
                throw ConfigError("validate_wiring: state " + std::to_string(j) +
                                  " both owned and received by subsystem " +
                                  std::to_string(k) +
                                  " -- it would be turned into a parameter");
            }
            rep.edges.emplace_back(o, static_cast<int>(k));
            if (cfg.extrapolation.needs_derivative()) {
                const auto& ports = part.subsystems[static_cast<std::size_t>(o)].outputs;
                auto it = std::find_if(ports.begin(), ports.end(),
                                       [j](const OutputPort& p) { return p.state == j; });
                if (it == ports.end() || !it->export_derivative) {
                    throw ConfigError("validate_wiring: FOH requested but state " +
                                      std::to_string(j) +
                                      " has no derivative export on its owner");
                }
            }
        }
    }

    // Cycle detection on the subsystem dependency digraph.
    const std::size_t n = part.subsystems.size();
    std::vector<std::vector<int>> adj(n);
    for (auto [from, to] : rep.edges) adj[static_cast<std::size_t>(from)].push_back(to);
    std::vector<int> color(n, 0);
    std::function<bool(int)> has_cycle = [&](int v) -> bool {
        color[static_cast<std::size_t>(v)] = 1;
        for (int w : adj[static_cast<std::size_t>(v)]) {
            if (color[static_cast<std::size_t>(w)] == 1) return true;
            if (color[static_cast<std::size_t>(w)] == 0 && has_cycle(w)) return true;
        }
        color[static_cast<std::size_t>(v)] = 2;
        return false;
    };
    for (std::size_t v = 0; v < n; ++v) {
        if (color[v] == 0 && has_cycle(static_cast<int>(v))) {
            rep.acyclic = false;
            break;
        }
    }
    rep.notes.push_back(rep.acyclic
                            ? "output dependencies acyclic: couplings sequentially solvable"
                            : "mutual output dependency detected: explicit scheme proceeds");
    return rep;
}

}  // namespace cosim
