#pragma once

// Input reconstruction between exchange times: polynomial extrapolants,
// smooth switching, balance-error accounting and corrected inputs.

#include "cosim/ode.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <map>
#include <utility>
#include <variant>
#include <vector>

namespace cosim {

/// Dense polynomial in the (t - t_ref) basis.
struct Poly {
    double t_ref = 0.0;
    std::vector<double> coeffs;  // coeffs[i] * (t - t_ref)^i

    [[nodiscard]] int degree() const {
        return coeffs.empty() ? 0 : static_cast<int>(coeffs.size()) - 1;
    }

    [[nodiscard]] double eval(double t) const {
        const double s = t - t_ref;
        double acc = 0.0;
        for (std::size_t i = coeffs.size(); i-- > 0;) acc = acc * s + coeffs[i];
        return acc;
    }

    /// Closed-form integral over [a, b].
    [[nodiscard]] double integrate(double a, double b) const {
        auto anti = [&](double t) {
            const double s = t - t_ref;
            double acc = 0.0;
            for (std::size_t i = coeffs.size(); i-- > 0;) {
                acc = acc * s + coeffs[i] / static_cast<double>(i + 1);
            }
            return acc * s;
        };
        return anti(b) - anti(a);
    }

    /// Same polynomial expressed in the (t - new_ref) basis.
    [[nodiscard]] Poly rebased(double new_ref) const {
        Poly out;
        out.t_ref = new_ref;
        out.coeffs.assign(coeffs.size(), 0.0);
        const double d = new_ref - t_ref;  // (t - t_ref) = (t - new_ref) + d
        std::vector<double> shift{1.0};    // ((t-new_ref) + d)^i, expanded
        for (std::size_t i = 0; i < coeffs.size(); ++i) {
            for (std::size_t j = 0; j < shift.size(); ++j) out.coeffs[j] += coeffs[i] * shift[j];
            if (i + 1 < coeffs.size()) {
                std::vector<double> next(shift.size() + 1, 0.0);
                for (std::size_t j = 0; j < shift.size(); ++j) {
                    next[j] += shift[j] * d;
                    next[j + 1] += shift[j];
                }
                shift = std::move(next);
            }
        }
        return out;
    }

    [[nodiscard]] static Poly sum(const Poly& a, const Poly& b) {
        Poly bb = (b.t_ref == a.t_ref) ? b : b.rebased(a.t_ref);
        Poly out;
        out.t_ref = a.t_ref;
        out.coeffs.assign(std::max(a.coeffs.size(), bb.coeffs.size()), 0.0);
        for (std::size_t i = 0; i < a.coeffs.size(); ++i) out.coeffs[i] += a.coeffs[i];
        for (std::size_t i = 0; i < bb.coeffs.size(); ++i) out.coeffs[i] += bb.coeffs[i];
        return out;
    }

    [[nodiscard]] static Poly product(const Poly& a, const Poly& b) {
        Poly bb = (b.t_ref == a.t_ref) ? b : b.rebased(a.t_ref);
        Poly out;
        out.t_ref = a.t_ref;
        if (a.coeffs.empty() || bb.coeffs.empty()) return out;
        out.coeffs.assign(a.coeffs.size() + bb.coeffs.size() - 1, 0.0);
        for (std::size_t i = 0; i < a.coeffs.size(); ++i) {
            for (std::size_t j = 0; j < bb.coeffs.size(); ++j) {
                out.coeffs[i + j] += a.coeffs[i] * bb.coeffs[j];
            }
        }
        return out;
    }

    [[nodiscard]] Poly scaled(double s) const {
        Poly out = *this;
        for (double& c : out.coeffs) c *= s;
        return out;
    }
};

/// Piecewise polynomial hold function for one input channel on one exchange
/// interval. Evaluation is defined beyond the support as well (the formal
/// extension is what smoothing blends against).
struct Extrapolant {
    int channel = -1;
    double support_lo = 0.0;
    double support_hi = 0.0;
    Poly poly;  // t_ref == support_lo

    [[nodiscard]] int degree() const { return poly.degree(); }
    [[nodiscard]] double eval(double t) const { return poly.eval(t); }
};

/// Degree-0 hold at the frozen value u0.
inline Extrapolant fit_zoh(double /*t0*/, double u0, double lo, double hi, int channel = -1) {
    Extrapolant e;
    e.channel = channel;
    e.support_lo = lo;
    e.support_hi = hi;
    e.poly.t_ref = lo;
    e.poly.coeffs = {u0};
    return e;
}

/// Degree-1 hold u0 + du0 (t - t0) from a value and an exported derivative.
inline Extrapolant fit_foh(double t0, double u0, double du0, double lo, double hi,
                           int channel = -1) {
    Extrapolant e;
    e.channel = channel;
    e.support_lo = lo;
    e.support_hi = hi;
    e.poly.t_ref = lo;
    e.poly.coeffs = {u0 + du0 * (lo - t0), du0};
    return e;
}

/// Interpolating polynomial of degree <= P through the last P+1 samples
/// (Newton divided differences, expanded into the (t - lo) basis).
inline Extrapolant fit_lagrange(const std::vector<std::pair<double, double>>& samples,
                                int degree, double lo, double hi, int channel = -1) {
    if (degree < 0) throw ConfigError("fit_lagrange: negative degree");
    const std::size_t need = static_cast<std::size_t>(degree) + 1;
    if (samples.size() < need) {
        throw ConfigError("fit_lagrange: degree " + std::to_string(degree) + " needs " +
                          std::to_string(need) + " samples, got " +
                          std::to_string(samples.size()));
    }
    std::vector<std::pair<double, double>> pts(samples.end() - static_cast<long>(need),
                                               samples.end());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (pts[i].first > lo + 1e-12 * std::max(1.0, std::abs(lo))) {
            throw ConfigError("fit_lagrange: sample time beyond support left edge");
        }
        for (std::size_t j = i + 1; j < pts.size(); ++j) {
            if (pts[i].first == pts[j].first) {
                throw ConfigError("fit_lagrange: duplicate sample times");
            }
        }
    }
    // Divided-difference table.
    std::vector<double> dd(need);
    for (std::size_t i = 0; i < need; ++i) dd[i] = pts[i].second;
    for (std::size_t level = 1; level < need; ++level) {
        for (std::size_t i = need - 1; i >= level; --i) {
            dd[i] = (dd[i] - dd[i - 1]) / (pts[i].first - pts[i - level].first);
        }
    }
    // Expand a0 + a1 (t - t0) + a2 (t - t0)(t - t1) + ... into powers of (t - lo).
    Extrapolant e;
    e.channel = channel;
    e.support_lo = lo;
    e.support_hi = hi;
    e.poly.t_ref = lo;
    e.poly.coeffs.assign(need, 0.0);
    std::vector<double> prod{1.0};
    for (std::size_t k = 0; k < need; ++k) {
        for (std::size_t j = 0; j < prod.size(); ++j) e.poly.coeffs[j] += dd[k] * prod[j];
        if (k + 1 < need) {
            // prod *= (t - t_k) = ((t - lo) + (lo - t_k))
            const double d = lo - pts[k].first;
            std::vector<double> next(prod.size() + 1, 0.0);
            for (std::size_t j = 0; j < prod.size(); ++j) {
                next[j] += prod[j] * d;
                next[j + 1] += prod[j];
            }
            prod = std::move(next);
        }
    }
    return e;
}

/// Canonical degree-5 switch polynomial: 0 at tau=0, 1 at tau=1, with first
/// and second derivatives vanishing at both ends.
[[nodiscard]] inline double smoothstep5(double tau) {
    return ((6.0 * tau - 15.0) * tau + 10.0) * tau * tau * tau;
}

namespace detail {

// smoothstep5((t - lo)/(hi - lo)) as a Poly in the (t - lo) basis.
inline Poly smoothstep5_poly(double lo, double hi) {
    const double w = hi - lo;
    Poly p;
    p.t_ref = lo;
    p.coeffs = {0.0, 0.0, 0.0, 10.0 / (w * w * w), -15.0 / (w * w * w * w),
                6.0 / (w * w * w * w * w)};
    return p;
}

}  // namespace detail

/// Convex switch from the previous interval's extrapolant (formally extended)
/// to the current one: (1 - sigma) prev + sigma next.
struct SwitchBlend {
    Extrapolant prev;
    Extrapolant next;
    double lo = 0.0;
    double hi = 0.0;

    [[nodiscard]] double eval(double t) const {
        const double sigma = smoothstep5((t - lo) / (hi - lo));
        return (1.0 - sigma) * prev.eval(t) + sigma * next.eval(t);
    }

    /// Exact single-polynomial form: prev + sigma (next - prev).
    [[nodiscard]] Poly flatten() const {
        Poly diff = Poly::sum(next.poly, prev.poly.scaled(-1.0));
        Poly p = Poly::sum(prev.poly.rebased(lo),
                           Poly::product(detail::smoothstep5_poly(lo, hi), diff));
        return p;
    }
};

inline SwitchBlend smooth_blend(const Extrapolant& prev, const Extrapolant& next,
                                double lo, double hi) {
    SwitchBlend b;
    b.prev = prev;
    b.next = next;
    b.lo = lo;
    b.hi = hi;
    return b;
}

enum class WeightKind { ConstantBox, SmoothBump };

[[nodiscard]] inline std::string weight_kind_name(WeightKind k) {
    return k == WeightKind::ConstantBox ? "constant_box" : "smooth_bump";
}

/// One scheduled recontribution amount riding on an interval, delivered
/// through a unit-integral weight g over [lo, hi].
struct CorrectionTerm {
    WeightKind kind = WeightKind::ConstantBox;
    double lo = 0.0;
    double hi = 0.0;
    double amount = 0.0;

    /// g(t); integrates to exactly 1 over [lo, hi].
    [[nodiscard]] double weight(double t) const {
        const double w = hi - lo;
        if (kind == WeightKind::ConstantBox) return 1.0 / w;
        const double tau = (t - lo) / w;
        return 30.0 * tau * tau * (1.0 - tau) * (1.0 - tau) / w;
    }

    [[nodiscard]] double eval(double t) const { return amount * weight(t); }

    /// Closed-form integral of g over [a, b].
    [[nodiscard]] double weight_integral(double a, double b) const {
        const double w = hi - lo;
        if (kind == WeightKind::ConstantBox) return (b - a) / w;
        // The bump is the derivative of the quintic smoothstep.
        return smoothstep5((b - lo) / w) - smoothstep5((a - lo) / w);
    }
};

/// A per-channel input reconstruction: extrapolant or blend as base, with
/// scheduled balance recontributions on top.
struct CorrectedInput {
    std::variant<Extrapolant, SwitchBlend> base;
    std::vector<CorrectionTerm> corrections;
    double lo = 0.0;
    double hi = 0.0;

    [[nodiscard]] static CorrectedInput plain(Extrapolant e) {
        CorrectedInput ci;
        ci.lo = e.support_lo;
        ci.hi = e.support_hi;
        ci.base = std::move(e);
        return ci;
    }

    [[nodiscard]] static CorrectedInput blended(SwitchBlend b) {
        CorrectedInput ci;
        ci.lo = b.lo;
        ci.hi = b.hi;
        ci.base = std::move(b);
        return ci;
    }

    [[nodiscard]] double base_eval(double t) const {
        return std::visit([&](const auto& b) { return b.eval(t); }, base);
    }

    [[nodiscard]] double eval(double t) const {
        double v = base_eval(t);
        for (const auto& c : corrections) v += c.eval(t);
        return v;
    }
};

/// Evaluate a corrected input: base(t) plus all recontribution terms.
[[nodiscard]] inline double corrected_eval(const CorrectedInput& ci, double t) {
    return ci.eval(t);
}

namespace detail {

inline void check_range(double lo, double hi, double a, double b, const char* who) {
    const double tol = 1e-9 * std::max(1.0, hi - lo);
    if (a < lo - tol || b > hi + tol || b < a) {
        throw std::out_of_range(std::string(who) + ": [a,b] outside support");
    }
}

}  // namespace detail

[[nodiscard]] inline double integrate_extrapolant(const Extrapolant& e, double a, double b) {
    detail::check_range(e.support_lo, e.support_hi, a, b, "integrate_extrapolant");
    return e.poly.integrate(a, b);
}

[[nodiscard]] inline double integrate_extrapolant(const SwitchBlend& s, double a, double b) {
    detail::check_range(s.lo, s.hi, a, b, "integrate_extrapolant");
    return s.flatten().integrate(a, b);
}

[[nodiscard]] inline double integrate_extrapolant(const CorrectedInput& ci, double a, double b) {
    detail::check_range(ci.lo, ci.hi, a, b, "integrate_extrapolant");
    double v = std::visit([&](const auto& base) { return integrate_extrapolant(base, a, b); },
                          ci.base);
    for (const auto& c : ci.corrections) v += c.amount * c.weight_integral(a, b);
    return v;
}

struct BalanceError {
    double delta_e = 0.0;          // true integral minus reconstruction integral
    bool reduced_quadrature = false;  // derivative samples missing, trapezoid used
};

namespace detail {

// Integral of one channel of a micro-trajectory over [a, b], cubic-Hermite on
// each micro step (exact for polynomials up to degree 3). Falls back to the
// trapezoid rule when derivative samples are absent.
inline BalanceError trajectory_integral(const MicroTrajectory& traj, int local_state,
                                        double a, double b) {
    const auto& ts = traj.times;
    if (ts.size() < 2) throw ConfigError("trajectory_integral: need at least 2 nodes");
    const double tol = 1e-9 * std::max(1.0, ts.back() - ts.front());
    if (a < ts.front() - tol || b > ts.back() + tol) {
        throw ConfigError("trajectory_integral: sender trajectory does not span [a,b]");
    }
    const bool have_derivs = traj.derivs.size() == traj.states.size() &&
                             !traj.derivs.empty() &&
                             traj.derivs.front().size() == traj.states.front().size();
    BalanceError out;
    out.reduced_quadrature = !have_derivs;
    double acc = 0.0;
    const std::size_t li = static_cast<std::size_t>(local_state);
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
        const double t0 = ts[i], t1 = ts[i + 1];
        const double seg_a = std::max(a, t0), seg_b = std::min(b, t1);
        if (!(seg_b > seg_a)) continue;
        const double h = t1 - t0;
        const double u0 = traj.states[i][li], u1 = traj.states[i + 1][li];
        if (!have_derivs) {
            // Linear segment, clipped.
            auto lin = [&](double t) { return u0 + (u1 - u0) * (t - t0) / h; };
            acc += 0.5 * (lin(seg_a) + lin(seg_b)) * (seg_b - seg_a);
            continue;
        }
        const double d0 = traj.derivs[i][li], d1 = traj.derivs[i + 1][li];
        // Hermite cubic in s = (t - t0)/h.
        const double c0 = u0;
        const double c1 = h * d0;
        const double c2 = 3.0 * (u1 - u0) - h * (2.0 * d0 + d1);
        const double c3 = 2.0 * (u0 - u1) + h * (d0 + d1);
        auto anti = [&](double t) {
            const double s = (t - t0) / h;
            return h * s * (c0 + s * (c1 / 2.0 + s * (c2 / 3.0 + s * c3 / 4.0)));
        };
        acc += anti(seg_b) - anti(seg_a);
    }
    out.delta_e = acc;
    return out;
}

}  // namespace detail

/// Balance error of one exchange interval: the sender's numerically realized
/// input integral (cubic-Hermite quadrature on its micro nodes) minus the
/// closed-form integral of the reconstruction the receiver evaluated.
/// Positive delta_e means the receiver under-received.
[[nodiscard]] inline BalanceError compute_balance_error(const MicroTrajectory& sender,
                                                        int local_state,
                                                        const Extrapolant& recon,
                                                        double a, double b) {
    BalanceError q = detail::trajectory_integral(sender, local_state, a, b);
    q.delta_e -= integrate_extrapolant(recon, a, b);
    return q;
}

[[nodiscard]] inline BalanceError compute_balance_error(const MicroTrajectory& sender,
                                                        int local_state,
                                                        const SwitchBlend& recon,
                                                        double a, double b) {
    BalanceError q = detail::trajectory_integral(sender, local_state, a, b);
    q.delta_e -= integrate_extrapolant(recon, a, b);
    return q;
}

/// Balance error against the base reconstruction of a corrected input
/// (corrections are part of the method, not of the committed error).
[[nodiscard]] inline BalanceError compute_balance_error(const MicroTrajectory& sender,
                                                        int local_state,
                                                        const CorrectedInput& recon,
                                                        double a, double b) {
    BalanceError q = detail::trajectory_integral(sender, local_state, a, b);
    q.delta_e -= std::visit(
        [&](const auto& base) { return integrate_extrapolant(base, a, b); }, recon.base);
    return q;
}

/// Per-input record of committed extrapolation-integral errors and their
/// scheduled recontribution.
struct BalanceLedger {
    struct Slot {
        int target_interval = 0;
        double fraction = 0.0;
        bool delivered = false;
    };
    struct Entry {
        int source_interval = 0;
        double delta_e = 0.0;
        double remaining = 0.0;
        std::vector<Slot> schedule;
    };

    WeightKind weight_kind = WeightKind::ConstantBox;
    int spread_k = 1;
    std::map<int, std::vector<Entry>> per_channel;

    /// Record the error committed in interval j: split into spread_k equal
    /// fractions targeted at intervals j+1 .. j+spread_k.
    void schedule(int channel, int interval_j, double delta_e) {
        if (spread_k < 1) throw ConfigError("BalanceLedger: spread_k must be >= 1");
        if (delta_e == 0.0) return;  // nothing to recontribute
        Entry e;
        e.source_interval = interval_j;
        e.delta_e = delta_e;
        e.remaining = delta_e;
        const double fraction = 1.0 / static_cast<double>(spread_k);
        for (int s = 1; s <= spread_k; ++s) {
            e.schedule.push_back(Slot{interval_j + s, fraction, false});
        }
        per_channel[channel].push_back(std::move(e));
    }

    /// Collect the correction terms landing in [lo, hi] = target interval,
    /// consuming the matching schedule slots.
    [[nodiscard]] std::vector<CorrectionTerm> corrections_for(int channel, int target_interval,
                                                              double lo, double hi) {
        std::vector<CorrectionTerm> out;
        auto it = per_channel.find(channel);
        if (it == per_channel.end()) return out;
        for (Entry& e : it->second) {
            for (Slot& s : e.schedule) {
                if (s.delivered || s.target_interval != target_interval) continue;
                CorrectionTerm c;
                c.kind = weight_kind;
                c.lo = lo;
                c.hi = hi;
                c.amount = s.fraction * e.delta_e;
                out.push_back(c);
                s.delivered = true;
                e.remaining -= c.amount;
            }
        }
        return out;
    }

    /// Fractions whose target interval lies beyond the run: the uncorrectable
    /// residual reported at simulation end.
    [[nodiscard]] double unrecoverable_residual(int n_intervals) const {
        double acc = 0.0;
        for (const auto& [channel, entries] : per_channel) {
            (void)channel;
            for (const Entry& e : entries) {
                for (const Slot& s : e.schedule) {
                    if (!s.delivered && s.target_interval >= n_intervals) {
                        acc += s.fraction * e.delta_e;
                    }
                }
            }
        }
        return acc;
    }
};

/// Free-function form of the ledger append.
inline void schedule_correction(BalanceLedger& ledger, int channel, int interval_j,
                                double delta_e) {
    ledger.schedule(channel, interval_j, delta_e);
}

}  // namespace cosim
