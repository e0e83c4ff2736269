#pragma once

// Independent reference solutions for error measurement.

#include "cosim/model.hpp"
#include "cosim/ode.hpp"

#include <cmath>
#include <complex>
#include <memory>
#include <vector>

namespace cosim {

namespace detail {

// Small dense row-major matrix helpers for the expm oracle (dim <= 8).

inline std::vector<double> mat_mul(const std::vector<double>& a, const std::vector<double>& b,
                                   int n) {
    std::vector<double> c(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < n; ++k) {
            const double aik = a[static_cast<std::size_t>(i * n + k)];
            if (aik == 0.0) continue;
            for (int j = 0; j < n; ++j) {
                c[static_cast<std::size_t>(i * n + j)] +=
                    aik * b[static_cast<std::size_t>(k * n + j)];
            }
        }
    }
    return c;
}

inline std::vector<double> mat_identity(int n) {
    std::vector<double> id(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) id[static_cast<std::size_t>(i * n + i)] = 1.0;
    return id;
}

inline double mat_inf_norm(const std::vector<double>& a, int n) {
    double best = 0.0;
    for (int i = 0; i < n; ++i) {
        double row = 0.0;
        for (int j = 0; j < n; ++j) row += std::abs(a[static_cast<std::size_t>(i * n + j)]);
        best = std::max(best, row);
    }
    return best;
}

// Solve D X = N in place (Gauss-Jordan with partial pivoting).
inline std::vector<double> mat_solve(std::vector<double> d, std::vector<double> nmat, int n) {
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        for (int r = col + 1; r < n; ++r) {
            if (std::abs(d[static_cast<std::size_t>(r * n + col)]) >
                std::abs(d[static_cast<std::size_t>(pivot * n + col)])) {
                pivot = r;
            }
        }
        if (d[static_cast<std::size_t>(pivot * n + col)] == 0.0) {
            throw IntegrationError("expm: singular Pade denominator");
        }
        if (pivot != col) {
            for (int j = 0; j < n; ++j) {
                std::swap(d[static_cast<std::size_t>(col * n + j)],
                          d[static_cast<std::size_t>(pivot * n + j)]);
                std::swap(nmat[static_cast<std::size_t>(col * n + j)],
                          nmat[static_cast<std::size_t>(pivot * n + j)]);
            }
        }
        const double inv = 1.0 / d[static_cast<std::size_t>(col * n + col)];
        for (int j = 0; j < n; ++j) {
            d[static_cast<std::size_t>(col * n + j)] *= inv;
            nmat[static_cast<std::size_t>(col * n + j)] *= inv;
        }
        for (int r = 0; r < n; ++r) {
            if (r == col) continue;
            const double factor = d[static_cast<std::size_t>(r * n + col)];
            if (factor == 0.0) continue;
            for (int j = 0; j < n; ++j) {
                d[static_cast<std::size_t>(r * n + j)] -=
                    factor * d[static_cast<std::size_t>(col * n + j)];
                nmat[static_cast<std::size_t>(r * n + j)] -=
                    factor * nmat[static_cast<std::size_t>(col * n + j)];
            }
        }
    }
    return nmat;
}

/// e^A by scaling-and-squaring with a diagonal Pade(6) approximant.
inline std::vector<double> expm_pade(std::vector<double> a, int n) {
    const double norm = mat_inf_norm(a, n);
    int s = 0;
    if (norm > 0.5) {
        s = static_cast<int>(std::floor(std::log2(norm))) + 2;
        if (s < 0) s = 0;
        const double scale = std::ldexp(1.0, -s);
        for (double& v : a) v *= scale;
    }
    constexpr int q = 6;
    double c = 1.0;
    std::vector<double> nmat = mat_identity(n);
    std::vector<double> dmat = mat_identity(n);
    std::vector<double> power = mat_identity(n);
    double sign = 1.0;
    for (int k = 1; k <= q; ++k) {
        c = c * static_cast<double>(q - k + 1) /
            static_cast<double>((2 * q - k + 1) * k);
        power = mat_mul(power, a, n);
        sign = -sign;
        for (std::size_t idx = 0; idx < power.size(); ++idx) {
            nmat[idx] += c * power[idx];
            dmat[idx] += sign * c * power[idx];
        }
    }
    std::vector<double> x = mat_solve(std::move(dmat), std::move(nmat), n);
    for (int k = 0; k < s; ++k) x = mat_mul(x, x, n);
    return x;
}

/// Closed-form e^{A} for 2x2 via the trace/determinant decomposition,
/// complex-safe for oscillatory spectra.
inline std::vector<double> expm_2x2_closed(const std::vector<double>& a) {
    using C = std::complex<double>;
    const double tr = a[0] + a[3];
    const double det = a[0] * a[3] - a[1] * a[2];
    const double mu = 0.5 * tr;
    const C qq = std::sqrt(C(mu * mu - det, 0.0));
    const C emu = std::exp(C(mu, 0.0));
    C f0, f1;  // e^A = f0 I + f1 (A - mu I)
    if (std::abs(qq) < 1e-150) {
        f0 = emu;
        f1 = emu;
    } else {
        f0 = emu * std::cosh(qq);
        f1 = emu * std::sinh(qq) / qq;
    }
    std::vector<double> out(4);
    const double b00 = a[0] - mu, b11 = a[3] - mu;
    out[0] = (f0 + f1 * b00).real();
    out[1] = (f1 * a[1]).real();
    out[2] = (f1 * a[2]).real();
    out[3] = (f0 + f1 * b11).real();
    return out;
}

}  // namespace detail

/// Exact solution e^{B t} x0 of the linear test problem. For 2x2 systems the
/// Pade path is cross-checked against the closed-form eigendecomposition.
inline StateVec expm_solution(const std::vector<double>& B, int dim, const StateVec& x0,
                              double t) {
    if (dim <= 0 || dim > 8) throw ConfigError("expm_solution: dim must lie in 1..8");
    if (B.size() != static_cast<std::size_t>(dim) * static_cast<std::size_t>(dim) ||
        x0.size() != static_cast<std::size_t>(dim)) {
        throw ConfigError("expm_solution: shape mismatch");
    }
    std::vector<double> bt(B.size());
    for (std::size_t i = 0; i < B.size(); ++i) bt[i] = B[i] * t;
    std::vector<double> e = detail::expm_pade(bt, dim);
    if (dim == 2) {
        const std::vector<double> e2 = detail::expm_2x2_closed(bt);
        double scale = 1.0;
        for (double v : e) scale = std::max(scale, std::abs(v));
        for (int i = 0; i < 4; ++i) {
            if (std::abs(e[static_cast<std::size_t>(i)] - e2[static_cast<std::size_t>(i)]) >
                1e-12 * scale) {
                throw IntegrationError("expm_solution: Pade and closed-form paths disagree");
            }
        }
    }
    StateVec out(static_cast<std::size_t>(dim), 0.0);
    for (int i = 0; i < dim; ++i) {
        double acc = 0.0;
        for (int j = 0; j < dim; ++j) {
            acc += e[static_cast<std::size_t>(i * dim + j)] * x0[static_cast<std::size_t>(j)];
        }
        out[static_cast<std::size_t>(i)] = acc;
    }
    return out;
}

/// Undamped oscillator: s(t) = s0 cos(w t) + (v0/w) sin(w t), v = s'.
inline StateVec oscillator_solution(double c, double m, double d, const StateVec& x0,
                                    double t) {
    if (!(c > 0.0) || !(m > 0.0)) throw ConfigError("oscillator_solution: need c, m > 0");
    if (d != 0.0) throw ConfigError("oscillator_solution: closed form requires d = 0");
    if (x0.size() != 2) throw ConfigError("oscillator_solution: state is (s, v)");
    const double w = std::sqrt(c / m);
    const double s0 = x0[0], v0 = x0[1];
    const double cwt = std::cos(w * t), swt = std::sin(w * t);
    return {s0 * cwt + (v0 / w) * swt, -s0 * w * swt + v0 * cwt};
}

/// A reference trajectory evaluator with provenance. MatrixExponential and
/// ClosedFormOscillator are exact to machine precision; TightToleranceMonolithic
/// records the tolerance it was integrated at.
struct ReferenceSolution {
    enum class Provenance { MatrixExponential, ClosedFormOscillator, TightToleranceMonolithic };

    Provenance provenance = Provenance::MatrixExponential;
    double tolerance = 0.0;
    std::function<StateVec(double)> eval;

    [[nodiscard]] StateVec operator()(double t) const { return eval(t); }

    static ReferenceSolution matrix_exponential(std::vector<double> B, int dim, StateVec x0,
                                                double t0) {
        ReferenceSolution r;
        r.provenance = Provenance::MatrixExponential;
        r.eval = [B = std::move(B), dim, x0 = std::move(x0), t0](double t) {
            return expm_solution(B, dim, x0, t - t0);
        };
        return r;
    }

    static ReferenceSolution oscillator(double c, double m, StateVec x0, double t0) {
        ReferenceSolution r;
        r.provenance = Provenance::ClosedFormOscillator;
        r.eval = [c, m, x0 = std::move(x0), t0](double t) {
            return oscillator_solution(c, m, 0.0, x0, t - t0);
        };
        return r;
    }

    /// Monolithic RK45 run, memoized forward in time. Queries must not move
    /// backwards past the cache, or the integration restarts from t0.
    static ReferenceSolution monolithic(const SystemSpec& sys, const StepControl& ctrl) {
        struct State {
            SystemSpec sys;
            StepControl ctrl;
            double t_cur;
            StateVec x_cur;
            RhsFn rhs;
        };
        auto st = std::make_shared<State>();
        st->sys = sys;
        st->ctrl = ctrl;
        st->t_cur = sys.t0;
        st->x_cur = sys.x0;
        st->rhs = monolithic_rhs(sys);
        ReferenceSolution r;
        r.provenance = Provenance::TightToleranceMonolithic;
        r.tolerance = ctrl.rel_tol;
        r.eval = [st](double t) {
            if (t < st->t_cur) {
                st->t_cur = st->sys.t0;
                st->x_cur = st->sys.x0;
            }
            if (t > st->t_cur) {
                MicroTrajectory traj =
                    integrate(st->rhs, no_input(), st->x_cur, st->t_cur, t, st->ctrl);
                st->t_cur = t;
                st->x_cur = traj.back_state();
            }
            return st->x_cur;
        };
        return r;
    }

    /// The exact oracle for a test system: expm for dense linear systems,
    /// the closed-form oscillator for the undamped spring-mass system.
    static ReferenceSolution for_system(const SystemSpec& sys) {
        if (sys.kind == SystemKind::SpringMass && sys.d == 0.0) {
            return oscillator(sys.c, sys.m, sys.x0, sys.t0);
        }
        return matrix_exponential(sys.matrix, sys.dim, sys.x0, sys.t0);
    }
};

/// Asymptotic growth-rate estimate of e^{B t} (max real eigenvalue part),
/// recorded as metadata alongside stability runs.
inline double spectral_abscissa_estimate(const std::vector<double>& B, int dim) {
    if (dim == 2) {
        const double tr = B[0] + B[3];
        const double det = B[0] * B[3] - B[1] * B[2];
        const double disc = 0.25 * tr * tr - det;
        if (disc >= 0.0) return 0.5 * tr + std::sqrt(disc);
        return 0.5 * tr;
    }
    const double t1 = 19.0, t2 = 20.0;
    auto fro = [&](double t) {
        std::vector<double> bt(B.size());
        for (std::size_t i = 0; i < B.size(); ++i) bt[i] = B[i] * t;
        const std::vector<double> e = detail::expm_pade(bt, dim);
        double acc = 0.0;
        for (double v : e) acc += v * v;
        return std::sqrt(acc);
    };
    return std::log(fro(t2) / fro(t1)) / (t2 - t1);
}

}  // namespace cosim
