#pragma once

// One-step (and one deliberately multistep) integrators producing dense
// micro-trajectories of a subsystem RHS over one exchange interval.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cosim {

using StateVec = std::vector<double>;

/// Input reconstruction sampled by a subsystem RHS: time -> values of the
/// subsystem's input channels, in ascending channel order.
using InputFn = std::function<std::vector<double>(double)>;

/// Subsystem right-hand side f(t, x, input_eval) -> dx/dt.
using RhsFn = std::function<StateVec(double, const StateVec&, const InputFn&)>;

struct IntegrationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Input function for subsystems without inputs (and monolithic runs).
inline const InputFn& no_input() {
    static const InputFn fn = [](double) { return std::vector<double>{}; };
    return fn;
}

[[nodiscard]] inline bool all_finite(const StateVec& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

namespace detail {

inline std::string num_str(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

inline void check_rhs_output(const StateVec& dx, double t) {
    if (!all_finite(dx)) {
        throw IntegrationError("non-finite RHS output at t=" + num_str(t));
    }
}

inline void check_state(const StateVec& x, double t) {
    if (!all_finite(x)) {
        throw IntegrationError("non-finite state at t=" + num_str(t));
    }
}

}  // namespace detail

enum class Method { EulerForward, RK4, RK45Adaptive, AB2 };

enum class Ab2Startup { Euler, RK4 };

[[nodiscard]] constexpr bool is_fixed_step(Method m) noexcept {
    return m == Method::EulerForward || m == Method::RK4 || m == Method::AB2;
}

[[nodiscard]] inline std::string method_name(Method m) {
    switch (m) {
        case Method::EulerForward: return "euler";
        case Method::RK4: return "rk4";
        case Method::RK45Adaptive: return "rk45";
        case Method::AB2: return "ab2";
    }
    return "?";
}

/// Per-subsystem integrator configuration.
struct StepControl {
    Method method = Method::RK45Adaptive;
    std::optional<double> h_fixed;  // required by fixed-step methods
    double rel_tol = 1e-8;
    double abs_tol = 1e-10;
    double h_min = 1e-14;
    double h_max = std::numeric_limits<double>::infinity();
    Ab2Startup ab2_startup = Ab2Startup::Euler;
    bool ab2_carry_history = false;  // consumed by the co-simulation master

    void validate() const {
        if (!(h_min <= h_max)) throw ConfigError("StepControl: h_min > h_max");
        if (!(rel_tol > 0.0) || !(abs_tol > 0.0)) {
            throw ConfigError("StepControl: tolerances must be positive");
        }
        if (is_fixed_step(method)) {
            if (!h_fixed || !(*h_fixed > 0.0)) {
                throw ConfigError("StepControl: fixed-step method requires h_fixed > 0");
            }
        }
    }
};

/// Dense numerical solution of one subsystem over one exchange interval.
/// Nodes are the micro-step times; derivs holds the RHS sampled at each node.
struct MicroTrajectory {
    std::vector<double> times;
    std::vector<StateVec> states;
    std::vector<StateVec> derivs;

    [[nodiscard]] std::size_t nodes() const { return times.size(); }
    [[nodiscard]] const StateVec& back_state() const { return states.back(); }

    /// Check the structural invariants against the interval [t_a, t_b].
    void validate(double t_a, double t_b) const {
        if (times.size() < 2 || times.size() != states.size() || times.size() != derivs.size()) {
            throw IntegrationError("MicroTrajectory: misaligned node arrays");
        }
        if (times.front() != t_a || times.back() != t_b) {
            throw IntegrationError("MicroTrajectory: endpoints not bit-exact");
        }
        for (std::size_t i = 1; i < times.size(); ++i) {
            if (!(times[i] > times[i - 1])) {
                throw IntegrationError("MicroTrajectory: times not strictly increasing");
            }
        }
    }
};

/// Last completed step of an AB2 integration: enough history to continue
/// the two-step recursion across a restart boundary.
struct Ab2Record {
    double t = 0.0;
    StateVec x;
    StateVec f;
};

/// Forward Euler: x + h f(t, x). Exactly one RHS evaluation.
inline StateVec step_euler(const RhsFn& f, const InputFn& input, double t,
                           const StateVec& x, double h) {
    if (!(h > 0.0)) throw ConfigError("step_euler: h must be positive");
    detail::check_state(x, t);
    StateVec dx = f(t, x, input);
    detail::check_rhs_output(dx, t);
    StateVec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + h * dx[i];
    return out;
}

/// Classical 4-stage Runge-Kutta; four RHS evaluations.
inline StateVec step_rk4(const RhsFn& f, const InputFn& input, double t,
                         const StateVec& x, double h) {
    if (!(h > 0.0)) throw ConfigError("step_rk4: h must be positive");
    detail::check_state(x, t);
    const std::size_t n = x.size();
    StateVec k1 = f(t, x, input);
    detail::check_rhs_output(k1, t);
    StateVec tmp(n);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
    StateVec k2 = f(t + 0.5 * h, tmp, input);
    detail::check_rhs_output(k2, t + 0.5 * h);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
    StateVec k3 = f(t + 0.5 * h, tmp, input);
    detail::check_rhs_output(k3, t + 0.5 * h);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h * k3[i];
    StateVec k4 = f(t + h, tmp, input);
    detail::check_rhs_output(k4, t + h);
    StateVec out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = x[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    return out;
}

/// Two-step Adams-Bashforth when history is present; otherwise the configured
/// startup one-step method (Euler forward by default -- deliberately low order,
/// so restart penalties stay observable).
inline StateVec step_ab2(const RhsFn& f, const InputFn& input,
                         const std::optional<Ab2Record>& history, double t,
                         const StateVec& x, double h,
                         Ab2Startup startup = Ab2Startup::Euler) {
    if (!(h > 0.0)) throw ConfigError("step_ab2: h must be positive");
    if (!history) {
        return startup == Ab2Startup::Euler ? step_euler(f, input, t, x, h)
                                            : step_rk4(f, input, t, x, h);
    }
    const double spacing = t - history->t;
    if (std::abs(spacing - h) > 1e-9 * std::abs(h)) {
        throw IntegrationError("step_ab2: history spacing " + detail::num_str(spacing) +
                               " does not match h=" + detail::num_str(h) +
                               " (AB2 requires uniform h)");
    }
    detail::check_state(x, t);
    StateVec fn = f(t, x, input);
    detail::check_rhs_output(fn, t);
    StateVec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = x[i] + h * (1.5 * fn[i] - 0.5 * history->f[i]);
    }
    return out;
}

struct Rk45Step {
    StateVec x_new;
    double h_used = 0.0;
    double h_next = 0.0;
    double err_est = 0.0;
};

namespace detail {

// Dormand-Prince 5(4) tableau.
struct Dopri5 {
    static constexpr double a21 = 1.0 / 5.0;
    static constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
    static constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
    static constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0,
                            a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
    static constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0,
                            a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                            a65 = -5103.0 / 18656.0;
    static constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                            b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
    static constexpr double e1 = 5179.0 / 57600.0, e3 = 7571.0 / 16695.0,
                            e4 = 393.0 / 640.0, e5 = -92097.0 / 339200.0,
                            e6 = 187.0 / 2100.0, e7 = 1.0 / 40.0;
    static constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0,
                            c5 = 8.0 / 9.0;
};

// One trial Dormand-Prince step; fills the 5th-order solution and the scaled
// embedded-difference error norm.
inline double dopri5_attempt(const RhsFn& f, const InputFn& input, double t,
                             const StateVec& x, double h, const StepControl& ctrl,
                             StateVec& x5) {
    using T = Dopri5;
    const std::size_t n = x.size();
    StateVec tmp(n);
    StateVec k1 = f(t, x, input);
    check_rhs_output(k1, t);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h * T::a21 * k1[i];
    StateVec k2 = f(t + T::c2 * h, tmp, input);
    check_rhs_output(k2, t + T::c2 * h);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h * (T::a31 * k1[i] + T::a32 * k2[i]);
    StateVec k3 = f(t + T::c3 * h, tmp, input);
    check_rhs_output(k3, t + T::c3 * h);
    for (std::size_t i = 0; i < n; ++i) {
        tmp[i] = x[i] + h * (T::a41 * k1[i] + T::a42 * k2[i] + T::a43 * k3[i]);
    }
    StateVec k4 = f(t + T::c4 * h, tmp, input);
    check_rhs_output(k4, t + T::c4 * h);
    for (std::size_t i = 0; i < n; ++i) {
        tmp[i] = x[i] + h * (T::a51 * k1[i] + T::a52 * k2[i] + T::a53 * k3[i] + T::a54 * k4[i]);
    }
    StateVec k5 = f(t + T::c5 * h, tmp, input);
    check_rhs_output(k5, t + T::c5 * h);
    for (std::size_t i = 0; i < n; ++i) {
        tmp[i] = x[i] + h * (T::a61 * k1[i] + T::a62 * k2[i] + T::a63 * k3[i] +
                             T::a64 * k4[i] + T::a65 * k5[i]);
    }
    StateVec k6 = f(t + h, tmp, input);
    check_rhs_output(k6, t + h);
    x5.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        x5[i] = x[i] + h * (T::b1 * k1[i] + T::b3 * k3[i] + T::b4 * k4[i] +
                            T::b5 * k5[i] + T::b6 * k6[i]);
    }
    StateVec k7 = f(t + h, x5, input);  // FSAL stage, used by the 4th-order weights
    check_rhs_output(k7, t + h);
    double err_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x4 = x[i] + h * (T::e1 * k1[i] + T::e3 * k3[i] + T::e4 * k4[i] +
                                      T::e5 * k5[i] + T::e6 * k6[i] + T::e7 * k7[i]);
        const double scale =
            ctrl.abs_tol + ctrl.rel_tol * std::max(std::abs(x[i]), std::abs(x5[i]));
        const double d = (x5[i] - x4) / scale;
        err_sq += d * d;
    }
    return n > 0 ? std::sqrt(err_sq / static_cast<double>(n)) : 0.0;
}

// Elementary controller: h_next = h * min(5, max(0.2, 0.9 err^{-1/5})).
inline double dopri5_factor(double err) {
    if (err <= 0.0) return 5.0;
    return std::min(5.0, std::max(0.2, 0.9 * std::pow(err, -0.2)));
}

}  // namespace detail

/// Embedded Dormand-Prince 4(5) step with rejection loop. The returned step
/// satisfies err_est <= 1 and h_used <= h_try.
inline Rk45Step step_rk45(const RhsFn& f, const InputFn& input, double t,
                          const StateVec& x, double h_try, const StepControl& ctrl) {
    if (ctrl.method != Method::RK45Adaptive) {
        throw ConfigError("step_rk45: ctrl.method must be RK45Adaptive");
    }
    if (!(h_try > 0.0)) throw ConfigError("step_rk45: h_try must be positive");
    detail::check_state(x, t);
    double h = std::min(h_try, ctrl.h_max);
    for (;;) {
        StateVec x5;
        const double err = detail::dopri5_attempt(f, input, t, x, h, ctrl, x5);
        if (err <= 1.0) {
            Rk45Step out;
            out.x_new = std::move(x5);
            out.h_used = h;
            out.h_next = std::min(h * detail::dopri5_factor(err), ctrl.h_max);
            out.err_est = err;
            return out;
        }
        h *= detail::dopri5_factor(err);  // < 1 here
        if (h < ctrl.h_min) {
            throw IntegrationError("step_rk45: step size underflow below h_min at t=" +
                                   detail::num_str(t));
        }
    }
}

/// Integrate a subsystem RHS over [t_a, t_b]. Micro steps tile the interval;
/// the final step is clipped so the last node is exactly t_b. For fixed-step
/// methods the step count is ceil((t_b - t_a)/h_fixed).
///
/// ab2_history, when given, seeds the AB2 two-step recursion with the last
/// step record of a previous interval (carried-history mode).
inline MicroTrajectory integrate(const RhsFn& f, const InputFn& input, const StateVec& x0,
                                 double t_a, double t_b, const StepControl& ctrl,
                                 const Ab2Record* ab2_history = nullptr) {
    ctrl.validate();
    if (!(t_b > t_a)) throw ConfigError("integrate: requires t_b > t_a");
    detail::check_state(x0, t_a);

    MicroTrajectory traj;
    auto push_node = [&](double t, StateVec x) {
        StateVec dx = f(t, x, input);
        detail::check_rhs_output(dx, t);
        traj.times.push_back(t);
        traj.states.push_back(std::move(x));
        traj.derivs.push_back(std::move(dx));
    };

    if (is_fixed_step(ctrl.method)) {
        const double h = *ctrl.h_fixed;
        const double ratio = (t_b - t_a) / h;
        long n = std::lround(ratio);
        if (n < 1 || std::abs(ratio - static_cast<double>(n)) >
                         1e-9 * std::max(1.0, std::abs(ratio))) {
            n = static_cast<long>(std::ceil(ratio));
        }
        if (n < 1) n = 1;

        push_node(t_a, x0);
        std::optional<Ab2Record> hist;
        if (ab2_history != nullptr) hist = *ab2_history;
        for (long i = 0; i < n; ++i) {
            const double t = traj.times.back();
            const double t_next = (i + 1 == n) ? t_b : t_a + static_cast<double>(i + 1) * h;
            const double hi = t_next - t;
            const StateVec& x = traj.states.back();
            try {
                StateVec x_new;
                switch (ctrl.method) {
                    case Method::EulerForward:
                        x_new = step_euler(f, input, t, x, hi);
                        break;
                    case Method::RK4:
                        x_new = step_rk4(f, input, t, x, hi);
                        break;
                    case Method::AB2:
                        x_new = step_ab2(f, input, hist, t, x, hi, ctrl.ab2_startup);
                        hist = Ab2Record{t, x, traj.derivs.back()};
                        break;
                    default:
                        break;
                }
                push_node(t_next, std::move(x_new));
            } catch (const IntegrationError& e) {
                throw IntegrationError("integrate: step " + std::to_string(i) + " at t=" +
                                       detail::num_str(t) + ": " + e.what());
            }
        }
        return traj;
    }

    // Adaptive Dormand-Prince path.
    push_node(t_a, x0);
    double t = t_a;
    double h_try = std::min(ctrl.h_max, t_b - t_a);
    long step_index = 0;
    while (t < t_b) {
        double remaining = t_b - t;
        bool planned_last = h_try * 1.05 >= remaining;
        double h_plan = planned_last ? remaining : h_try;
        try {
            Rk45Step st = step_rk45(f, input, t, traj.states.back(), h_plan, ctrl);
            const bool reached_end = planned_last && st.h_used == h_plan;
            t = reached_end ? t_b : t + st.h_used;
            push_node(t, std::move(st.x_new));
            h_try = st.h_next;
        } catch (const IntegrationError& e) {
            throw IntegrationError("integrate: step " + std::to_string(step_index) +
                                   " at t=" + detail::num_str(t) + ": " + e.what());
        }
        ++step_index;
    }
    return traj;
}

}  // namespace cosim
