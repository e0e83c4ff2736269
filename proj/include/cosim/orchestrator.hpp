#pragma once

// The explicit Jacobi co-simulation master loop: freeze outputs at exchange
// times, build input reconstructions, integrate subsystems independently over
// each exchange interval, account balance errors, apply corrections.

#include "cosim/model.hpp"
#include "cosim/ode.hpp"
#include "cosim/oracles.hpp"
#include "cosim/signals.hpp"

#include <cassert>
#include <future>
#include <map>
#include <memory>
#include <numeric>
#include <vector>

namespace cosim {

/// Ascending data-exchange times T_0 .. T_N covering the full span.
struct ExchangeGrid {
    std::vector<double> T;

    [[nodiscard]] int intervals() const { return static_cast<int>(T.size()) - 1; }

    static ExchangeGrid uniform(double t0, double t_end, double H) {
        if (!(H > 0.0) || !(t_end > t0)) {
            throw ConfigError("ExchangeGrid: need H > 0 and t_end > t0");
        }
        const double span = t_end - t0;
        const double ratio = span / H;
        long n = std::lround(ratio);
        if (n < 1 ||
            std::abs(ratio - static_cast<double>(n)) > 1e-9 * std::max(1.0, ratio)) {
            n = static_cast<long>(std::ceil(ratio));
        }
        if (n < 1) n = 1;
        ExchangeGrid g;
        g.T.resize(static_cast<std::size_t>(n) + 1);
        for (long k = 0; k < n; ++k) g.T[static_cast<std::size_t>(k)] = t0 + static_cast<double>(k) * H;
        g.T.back() = t_end;
        for (std::size_t k = 1; k < g.T.size(); ++k) {
            if (!(g.T[k] > g.T[k - 1])) throw ConfigError("ExchangeGrid: times not increasing");
        }
        return g;
    }
};

/// Output data frozen at one exchange time for one channel.
struct Snapshot {
    double value = 0.0;
    double deriv = 0.0;
    bool has_deriv = false;
};

/// Balance bookkeeping of one channel, one entry per exchange interval.
struct ChannelSeries {
    std::vector<double> delta_e;               // committed extrapolation-integral error
    std::vector<double> sender_integral;       // Hermite quadrature of the sender signal
    std::vector<double> base_integral;         // closed-form integral of the base reconstruction
    std::vector<double> correction_delivered;  // recontribution landed in this interval
};

struct CosimDiagnostics {
    std::map<int, ChannelSeries> channels;
    std::vector<double> energy;  // per exchange time (SpringMass only)
    double residual = 0.0;       // scheduled amounts with no target interval left
    bool cyclic_coupling = false;
    bool reduced_quadrature = false;
};

struct CosimRun {
    ExchangeGrid grid;
    std::vector<StateVec> states;                      // assembled full state per T_k
    std::vector<std::vector<MicroTrajectory>> micro;   // [interval][subsystem]
    std::vector<std::map<int, Snapshot>> snapshots;    // per exchange time
    BalanceLedger ledger;
    CosimDiagnostics diag;

    [[nodiscard]] const StateVec& final_state() const { return states.back(); }
};

struct RunOptions {
    bool parallel = false;               // integrate subsystems as independent tasks
    std::vector<int> execution_order{};  // sequential order; empty = ascending
    bool keep_micro = true;
    std::optional<ExchangeGrid> grid;    // nonuniform exchange times; default uniform H
};

/// Oscillator energy, the norm whose growth diagnoses instability.
[[nodiscard]] inline double energy(const StateVec& x, double c, double m) {
    return 0.5 * m * x[1] * x[1] + 0.5 * c * x[0] * x[0];
}

/// Freeze the output channels at time t. Values come from the subsystem
/// states. Derivatives come from the sender RHS evaluated with the exchange-
/// consistent input view: the peer values frozen at the same instant, which
/// is what any interval-k reconstruction evaluates to at its left edge.
inline std::map<int, Snapshot> exchange_snapshot(const Partition& part,
                                                 const std::vector<RhsFn>& rhs,
                                                 const std::vector<StateVec>& sub_states,
                                                 double t) {
    std::map<int, Snapshot> snap;
    for (std::size_t s = 0; s < part.subsystems.size(); ++s) {
        const Subsystem& sub = part.subsystems[s];
        for (const OutputPort& port : sub.outputs) {
            const auto& d = sub.owned;
            const std::size_t local = static_cast<std::size_t>(
                std::find(d.begin(), d.end(), port.state) - d.begin());
            Snapshot sn;
            sn.value = sub_states[s][local];
            snap[port.state] = sn;
        }
    }
    for (std::size_t s = 0; s < part.subsystems.size(); ++s) {
        const Subsystem& sub = part.subsystems[s];
        if (sub.outputs.empty()) continue;
        std::vector<double> frozen;
        for (int ch : sub.inputs) {
            const int owner_sub = part.owner_of(ch);
            frozen.push_back(sub_states[static_cast<std::size_t>(owner_sub)]
                                       [static_cast<std::size_t>(
                                           part.local_index(owner_sub, ch))]);
        }
        const InputFn fresh = [frozen](double) { return frozen; };
        StateVec dx = rhs[s](t, sub_states[s], fresh);
        for (const OutputPort& port : sub.outputs) {
            const auto& d = sub.owned;
            const std::size_t local = static_cast<std::size_t>(
                std::find(d.begin(), d.end(), port.state) - d.begin());
            snap[port.state].deriv = dx[local];
            snap[port.state].has_deriv = port.export_derivative;
        }
    }
    return snap;
}

namespace detail {

inline Extrapolant build_extrapolant(const SchemeConfig& cfg, int channel, int interval_k,
                                     double lo, double hi,
                                     const std::vector<double>& exchange_times,
                                     const std::vector<std::map<int, Snapshot>>& history) {
    const Snapshot& sn = history.back().at(channel);
    switch (cfg.extrapolation.kind) {
        case Extrapolation::Kind::ZOH:
            return fit_zoh(lo, sn.value, lo, hi, channel);
        case Extrapolation::Kind::FOH:
            if (!sn.has_deriv) {
                throw ConfigError("run_cosim: FOH needs a derivative export on channel " +
                                  std::to_string(channel));
            }
            return fit_foh(lo, sn.value, sn.deriv, lo, hi, channel);
        case Extrapolation::Kind::Lagrange: {
            // Warm-up: use the highest degree the snapshot history supports.
            const int degree = std::min(cfg.extrapolation.degree, interval_k);
            std::vector<std::pair<double, double>> samples;
            const std::size_t first =
                history.size() - static_cast<std::size_t>(degree) - 1;
            for (std::size_t i = first; i < history.size(); ++i) {
                samples.emplace_back(exchange_times[i], history[i].at(channel).value);
            }
            return fit_lagrange(samples, degree, lo, hi, channel);
        }
    }
    throw ConfigError("run_cosim: unknown extrapolation kind");
}

}  // namespace detail

/// Run the explicit Jacobi co-simulation of a partitioned system.
///
/// Per interval [T_k, T_k+1]: collect output snapshots at T_k, build the
/// per-channel reconstruction (extrapolant, optional smooth blend, scheduled
/// corrections), integrate every subsystem independently, then account the
/// committed balance errors and schedule their recontribution.
inline CosimRun run_cosim(const SystemSpec& sys, const Partition& part,
                          const SchemeConfig& cfg, const RunOptions& options = {}) {
    sys.validate();
    cfg.validate(part.subsystems.size());
    const WiringReport wiring = validate_wiring(sys, part, cfg);

    const std::size_t n_sub = part.subsystems.size();
    CosimRun run;
    if (options.grid) {
        run.grid = *options.grid;
        if (run.grid.T.size() < 2 || run.grid.T.front() != sys.t0 ||
            run.grid.T.back() != sys.t_end) {
            throw ConfigError("run_cosim: exchange grid must span [t0, t_end]");
        }
    } else {
        run.grid = ExchangeGrid::uniform(sys.t0, sys.t_end, cfg.H);
    }
    run.ledger.weight_kind = cfg.weight_kind;
    run.ledger.spread_k = cfg.spread_k;
    run.diag.cyclic_coupling = !wiring.acyclic;
    const int n_intervals = run.grid.intervals();

    std::vector<RhsFn> rhs(n_sub);
    for (std::size_t s = 0; s < n_sub; ++s) rhs[s] = build_rhs(sys, part, static_cast<int>(s));

    std::vector<StateVec> sub_states(n_sub);
    for (std::size_t s = 0; s < n_sub; ++s) {
        const auto& owned = part.subsystems[s].owned;
        sub_states[s].resize(owned.size());
        for (std::size_t l = 0; l < owned.size(); ++l) {
            sub_states[s][l] = sys.x0[static_cast<std::size_t>(owned[l])];
        }
    }

    std::vector<int> order = options.execution_order;
    if (order.empty()) {
        order.resize(n_sub);
        std::iota(order.begin(), order.end(), 0);
    }

    const std::vector<int> channels = part.channels();
    std::map<int, Extrapolant> prev_extrapolant;
    std::vector<std::optional<Ab2Record>> carried(n_sub);

    run.states.push_back(sys.x0);
    if (sys.kind == SystemKind::SpringMass) {
        run.diag.energy.push_back(energy(sys.x0, sys.c, sys.m));
    }
    for (int ch : channels) {
        run.diag.channels[ch] = ChannelSeries{};
    }

    for (int k = 0; k < n_intervals; ++k) {
        const double lo = run.grid.T[static_cast<std::size_t>(k)];
        const double hi = run.grid.T[static_cast<std::size_t>(k) + 1];

        run.snapshots.push_back(exchange_snapshot(part, rhs, sub_states, lo));

        // Per-channel reconstruction from exchange-time data only.
        auto chan_recon = std::make_shared<std::map<int, CorrectedInput>>();
        std::map<int, Extrapolant> new_prev;
        for (int ch : channels) {
            Extrapolant e =
                detail::build_extrapolant(cfg, ch, k, lo, hi, run.grid.T, run.snapshots);
            CorrectedInput ci = (cfg.smoothing && k > 0)
                                    ? CorrectedInput::blended(
                                          smooth_blend(prev_extrapolant.at(ch), e, lo, hi))
                                    : CorrectedInput::plain(e);
            if (cfg.balance_correction) {
                ci.corrections = run.ledger.corrections_for(ch, k, lo, hi);
            }
            double delivered = 0.0;
            for (const auto& c : ci.corrections) delivered += c.amount;
            run.diag.channels[ch].correction_delivered.push_back(delivered);
            new_prev.emplace(ch, std::move(e));
            chan_recon->emplace(ch, std::move(ci));
        }

        std::vector<InputFn> input_fns(n_sub);
        for (std::size_t s = 0; s < n_sub; ++s) {
            auto local = std::make_shared<std::vector<CorrectedInput>>();
            for (int ch : part.subsystems[s].inputs) local->push_back(chan_recon->at(ch));
            input_fns[s] = [local](double t) {
                std::vector<double> u(local->size());
                for (std::size_t i = 0; i < local->size(); ++i) u[i] = (*local)[i].eval(t);
                return u;
            };
        }

        // Jacobi exchange: every subsystem integrates the interval from the
        // same frozen snapshot, with no intra-interval communication.
        std::vector<MicroTrajectory> traj(n_sub);
        auto integrate_one = [&](std::size_t s) {
            const StepControl ctrl = cfg.resolved_control(s, hi - lo);
            const Ab2Record* hist =
                (ctrl.method == Method::AB2 && ctrl.ab2_carry_history && carried[s])
                    ? &*carried[s]
                    : nullptr;
            return integrate(rhs[s], input_fns[s], sub_states[s], lo, hi, ctrl, hist);
        };
        try {
            if (options.parallel && n_sub > 1) {
                std::vector<std::future<MicroTrajectory>> futures;
                futures.reserve(n_sub);
                for (std::size_t s = 0; s < n_sub; ++s) {
                    futures.push_back(
                        std::async(std::launch::async, integrate_one, s));
                }
                for (std::size_t s = 0; s < n_sub; ++s) traj[s] = futures[s].get();
            } else {
                for (int s : order) traj[static_cast<std::size_t>(s)] =
                    integrate_one(static_cast<std::size_t>(s));
            }
        } catch (const IntegrationError& e) {
            throw IntegrationError("run_cosim: interval " + std::to_string(k) + " [" +
                                   detail::num_str(lo) + ", " + detail::num_str(hi) +
                                   "]: " + e.what());
        }

        // Barrier: commit states, refresh AB2 carry records.
        for (std::size_t s = 0; s < n_sub; ++s) {
            assert(traj[s].times.front() == lo && traj[s].times.back() == hi);
            sub_states[s] = traj[s].back_state();
            const StepControl& base_ctrl = cfg.control_for(s);
            if (base_ctrl.method == Method::AB2 && base_ctrl.ab2_carry_history &&
                traj[s].nodes() >= 3) {
                // A genuine intra-interval step pair exists; its last record can
                // seed the next interval. One step per interval leaves no
                // multistep history to carry.
                const std::size_t i = traj[s].nodes() - 2;
                carried[s] = Ab2Record{traj[s].times[i], traj[s].states[i], traj[s].derivs[i]};
            } else {
                carried[s].reset();
            }
        }

        // Balance accounting at the barrier (single writer).
        for (int ch : channels) {
            const int sender = part.owner_of(ch);
            const int local = part.local_index(sender, ch);
            const MicroTrajectory& st = traj[static_cast<std::size_t>(sender)];
            const BalanceError be =
                compute_balance_error(st, local, chan_recon->at(ch), lo, hi);
            const double base_integral = std::visit(
                [&](const auto& b) { return integrate_extrapolant(b, lo, hi); },
                chan_recon->at(ch).base);
            ChannelSeries& series = run.diag.channels[ch];
            series.delta_e.push_back(be.delta_e);
            series.sender_integral.push_back(be.delta_e + base_integral);
            series.base_integral.push_back(base_integral);
            if (be.reduced_quadrature) run.diag.reduced_quadrature = true;
            if (cfg.balance_correction) {
                run.ledger.schedule(ch, k, be.delta_e);
            }
        }

        StateVec full(static_cast<std::size_t>(sys.dim), 0.0);
        for (std::size_t s = 0; s < n_sub; ++s) {
            const auto& owned = part.subsystems[s].owned;
            for (std::size_t l = 0; l < owned.size(); ++l) {
                full[static_cast<std::size_t>(owned[l])] = sub_states[s][l];
            }
        }
        if (!all_finite(full)) {
            throw IntegrationError("run_cosim: non-finite state after interval " +
                                   std::to_string(k));
        }
        if (sys.kind == SystemKind::SpringMass) {
            run.diag.energy.push_back(energy(full, sys.c, sys.m));
        }
        run.states.push_back(std::move(full));

        if (options.keep_micro) run.micro.push_back(std::move(traj));
        prev_extrapolant = std::move(new_prev);
    }

    run.diag.residual = run.ledger.unrecoverable_residual(n_intervals);
    return run;
}

}  // namespace cosim
