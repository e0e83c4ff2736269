#pragma once

// Declarative run configuration: a flat key/value tree with dotted keys,
// '#' comments, comma-separated vectors and ';'-separated matrix rows.

#include "cosim/harness.hpp"
#include "cosim/model.hpp"

#include <cctype>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace cosim {

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

}  // namespace detail

class Config {
public:
    static Config parse(std::istream& in, const std::string& origin = "<stream>") {
        Config cfg;
        cfg.origin_ = origin;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::size_t hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = detail::trim(line);
            if (line.empty()) continue;
            const std::size_t eq = line.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(origin + ":" + std::to_string(lineno) +
                                  ": expected 'key = value'");
            }
            const std::string key = detail::trim(line.substr(0, eq));
            const std::string value = detail::trim(line.substr(eq + 1));
            if (key.empty()) {
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
            }
            cfg.kv_[key] = value;
        }
        return cfg;
    }

    static Config parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        return parse(in, path);
    }

    [[nodiscard]] bool has(const std::string& key) const { return kv_.count(key) > 0; }

    [[nodiscard]] std::string get_string(const std::string& key) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) throw ConfigError(origin_ + ": missing key '" + key + "'");
        return it->second;
    }

    [[nodiscard]] std::string get_string(const std::string& key,
                                         const std::string& fallback) const {
        auto it = kv_.find(key);
        return it == kv_.end() ? fallback : it->second;
    }

    [[nodiscard]] double get_double(const std::string& key) const {
        return to_double(key, get_string(key));
    }

    [[nodiscard]] double get_double(const std::string& key, double fallback) const {
        auto it = kv_.find(key);
        return it == kv_.end() ? fallback : to_double(key, it->second);
    }

    [[nodiscard]] int get_int(const std::string& key, int fallback) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        try {
            std::size_t pos = 0;
            const int v = std::stoi(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw ConfigError(origin_ + ": key '" + key + "' is not an integer: " +
                              it->second);
        }
    }

    [[nodiscard]] bool get_bool(const std::string& key, bool fallback) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        const std::string& v = it->second;
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw ConfigError(origin_ + ": key '" + key + "' is not a boolean: " + v);
    }

    [[nodiscard]] std::vector<double> get_vector(const std::string& key) const {
        return split_doubles(key, get_string(key), ',');
    }

    /// Matrix rows separated by ';', entries by ','.
    [[nodiscard]] std::vector<std::vector<double>> get_matrix(const std::string& key) const {
        std::vector<std::vector<double>> rows;
        std::stringstream ss(get_string(key));
        std::string row;
        while (std::getline(ss, row, ';')) rows.push_back(split_doubles(key, row, ','));
        return rows;
    }

    [[nodiscard]] const std::map<std::string, std::string>& raw() const { return kv_; }
    [[nodiscard]] const std::string& origin() const { return origin_; }

private:
    [[nodiscard]] double to_double(const std::string& key, const std::string& v) const {
        if (v == "inf") return std::numeric_limits<double>::infinity();
        try {
            std::size_t pos = 0;
            const double x = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("");
            return x;
        } catch (const std::exception&) {
            throw ConfigError(origin_ + ": key '" + key + "' is not a number: " + v);
        }
    }

    [[nodiscard]] std::vector<double> split_doubles(const std::string& key,
                                                    const std::string& v, char sep) const {
        std::vector<double> out;
        std::stringstream ss(v);
        std::string item;
        while (std::getline(ss, item, sep)) {
            item = detail::trim(item);
            if (!item.empty()) out.push_back(to_double(key, item));
        }
        return out;
    }

    std::map<std::string, std::string> kv_;
    std::string origin_;
};

/// A fully resolved run setup loaded from a config.
struct LoadedSetup {
    SystemSpec sys;
    Partition part;
    SchemeConfig scheme;
    std::vector<std::string> variants;  // study.variants labels (subcommand defaults apply)
    int levels = 7;
};

namespace detail {

inline Extrapolation parse_extrapolation(const std::string& s) {
    if (s == "zoh") return Extrapolation::zoh();
    if (s == "foh") return Extrapolation::foh();
    if (s.rfind("lagrange", 0) == 0) {
        const std::string deg = s.substr(8, s.size() - 8);
        const std::string digits = deg.empty() || deg[0] != ':' ? deg : deg.substr(1);
        if (digits.empty()) throw ConfigError("extrapolation: lagrange needs a degree");
        return Extrapolation::lagrange(std::stoi(digits));
    }
    throw ConfigError("unknown extrapolation: " + s);
}

inline HRule parse_h_rule(const std::string& s) {
    if (s == "adaptive") return HRule::adaptive();
    if (s.rfind("proportional:", 0) == 0) return HRule::proportional(std::stoi(s.substr(13)));
    if (s.rfind("fixed:", 0) == 0) return HRule::fixed(std::stod(s.substr(6)));
    throw ConfigError("unknown h rule: " + s + " (proportional:c | fixed:h | adaptive)");
}

inline Method parse_method(const std::string& s) {
    if (s == "euler") return Method::EulerForward;
    if (s == "rk4") return Method::RK4;
    if (s == "rk45") return Method::RK45Adaptive;
    if (s == "ab2") return Method::AB2;
    throw ConfigError("unknown solver method: " + s);
}

}  // namespace detail

inline LoadedSetup load_setup(const Config& cfg) {
    LoadedSetup out{SystemSpec{}, Partition{}, SchemeConfig{}, {}, 7};

    const std::string kind = cfg.get_string("system.kind");
    const double t0 = cfg.get_double("system.t0", 0.0);
    const double t_end = cfg.get_double("system.t_end");
    if (kind == "spring_mass") {
        out.sys = SystemSpec::spring_mass(
            cfg.get_double("system.c", 1.0), cfg.get_double("system.m", 1.0),
            cfg.get_double("system.d", 0.0), cfg.get_vector("system.x0"), t0, t_end);
    } else if (kind == "linear_dense") {
        const auto rows = cfg.get_matrix("system.matrix");
        std::vector<double> flat;
        for (const auto& r : rows) {
            if (r.size() != rows.size()) {
                throw ConfigError("system.matrix must be square");
            }
            flat.insert(flat.end(), r.begin(), r.end());
        }
        out.sys = SystemSpec::linear_dense(std::move(flat), cfg.get_vector("system.x0"), t0,
                                           t_end);
    } else {
        throw ConfigError("system.kind must be linear_dense or spring_mass");
    }

    const int n_sub = cfg.get_int("partition.count", 0);
    if (n_sub < 1) throw ConfigError("partition.count must be >= 1");
    std::vector<std::vector<int>> owned;
    for (int k = 0; k < n_sub; ++k) {
        const auto states = cfg.get_vector("partition." + std::to_string(k) + ".states");
        std::vector<int> idx;
        for (double v : states) idx.push_back(static_cast<int>(std::lround(v)));
        owned.push_back(std::move(idx));
    }
    const bool export_deriv = cfg.get_bool("partition.export_derivative", true);
    out.part = Partition::from_owned_sets(owned, out.sys, export_deriv);

    SchemeConfig& sch = out.scheme;
    sch.H = cfg.get_double("scheme.H");
    sch.extrapolation =
        detail::parse_extrapolation(cfg.get_string("scheme.extrapolation", "zoh"));
    sch.smoothing = cfg.get_bool("scheme.smoothing", false);
    sch.balance_correction = cfg.get_bool("scheme.balance_correction", false);
    const std::string wk = cfg.get_string("scheme.weight_kind", "constant_box");
    if (wk == "constant_box") {
        sch.weight_kind = WeightKind::ConstantBox;
    } else if (wk == "smooth_bump") {
        sch.weight_kind = WeightKind::SmoothBump;
    } else {
        throw ConfigError("scheme.weight_kind must be constant_box or smooth_bump");
    }
    sch.spread_k = cfg.get_int("scheme.spread", 1);
    sch.h_rule = detail::parse_h_rule(cfg.get_string("scheme.h_rule", "proportional:10"));

    auto load_control = [&cfg](const std::string& prefix, StepControl base) {
        StepControl ctrl = base;
        if (cfg.has(prefix + ".method")) {
            ctrl.method = detail::parse_method(cfg.get_string(prefix + ".method"));
        }
        ctrl.rel_tol = cfg.get_double(prefix + ".rel_tol", ctrl.rel_tol);
        ctrl.abs_tol = cfg.get_double(prefix + ".abs_tol", ctrl.abs_tol);
        ctrl.h_min = cfg.get_double(prefix + ".h_min", ctrl.h_min);
        ctrl.h_max = cfg.get_double(prefix + ".h_max", ctrl.h_max);
        if (cfg.has(prefix + ".h_fixed")) ctrl.h_fixed = cfg.get_double(prefix + ".h_fixed");
        const std::string startup = cfg.get_string(prefix + ".ab2_startup", "euler");
        if (startup == "euler") {
            ctrl.ab2_startup = Ab2Startup::Euler;
        } else if (startup == "rk4") {
            ctrl.ab2_startup = Ab2Startup::RK4;
        } else {
            throw ConfigError(prefix + ".ab2_startup must be euler or rk4");
        }
        ctrl.ab2_carry_history =
            cfg.get_bool(prefix + ".ab2_carry_history", ctrl.ab2_carry_history);
        return ctrl;
    };
    StepControl shared;
    shared.method = Method::RK45Adaptive;
    shared.rel_tol = 1e-12;
    shared.abs_tol = 1e-12;
    shared = load_control("solver", shared);
    sch.controls.assign(1, shared);
    bool per_sub = false;
    for (int k = 0; k < n_sub; ++k) {
        if (cfg.has("solver." + std::to_string(k) + ".method")) per_sub = true;
    }
    if (per_sub) {
        sch.controls.assign(static_cast<std::size_t>(n_sub), shared);
        for (int k = 0; k < n_sub; ++k) {
            sch.controls[static_cast<std::size_t>(k)] =
                load_control("solver." + std::to_string(k), shared);
        }
    }

    out.levels = cfg.get_int("study.levels", 7);
    std::stringstream vs(cfg.get_string("study.variants", ""));
    std::string item;
    while (std::getline(vs, item, ',')) {
        item = detail::trim(item);
        if (!item.empty()) out.variants.push_back(item);
    }

    out.sys.validate();
    out.scheme.validate(out.part.subsystems.size());
    validate_wiring(out.sys, out.part, out.scheme);
    return out;
}

/// Deterministic key/value echo of a resolved setup, written verbatim into
/// every output directory.
inline std::vector<std::pair<std::string, std::string>> resolved_echo(const LoadedSetup& s) {
    std::vector<std::pair<std::string, std::string>> kv;
    auto num = [](double v) { return detail::num_str(v); };
    kv.emplace_back("system.kind",
                    s.sys.kind == SystemKind::SpringMass ? "spring_mass" : "linear_dense");
    kv.emplace_back("system.dim", std::to_string(s.sys.dim));
    {
        std::string mat;
        for (int i = 0; i < s.sys.dim; ++i) {
            if (i) mat += "; ";
            for (int j = 0; j < s.sys.dim; ++j) {
                if (j) mat += ", ";
                mat += num(s.sys.at(i, j));
            }
        }
        kv.emplace_back("system.matrix", mat);
    }
    if (s.sys.kind == SystemKind::SpringMass) {
        kv.emplace_back("system.c", num(s.sys.c));
        kv.emplace_back("system.m", num(s.sys.m));
        kv.emplace_back("system.d", num(s.sys.d));
    }
    {
        std::string x0;
        for (std::size_t i = 0; i < s.sys.x0.size(); ++i) {
            if (i) x0 += ", ";
            x0 += num(s.sys.x0[i]);
        }
        kv.emplace_back("system.x0", x0);
    }
    kv.emplace_back("system.t0", num(s.sys.t0));
    kv.emplace_back("system.t_end", num(s.sys.t_end));
    kv.emplace_back("partition.count", std::to_string(s.part.subsystems.size()));
    for (std::size_t k = 0; k < s.part.subsystems.size(); ++k) {
        const auto& sub = s.part.subsystems[k];
        auto join = [](const std::vector<int>& v) {
            std::string out;
            for (std::size_t i = 0; i < v.size(); ++i) {
                if (i) out += ", ";
                out += std::to_string(v[i]);
            }
            return out;
        };
        kv.emplace_back("partition." + std::to_string(k) + ".states", join(sub.owned));
        kv.emplace_back("partition." + std::to_string(k) + ".inputs", join(sub.inputs));
    }
    kv.emplace_back("scheme.H", num(s.scheme.H));
    kv.emplace_back("scheme.extrapolation", s.scheme.extrapolation.name());
    kv.emplace_back("scheme.smoothing", s.scheme.smoothing ? "true" : "false");
    kv.emplace_back("scheme.balance_correction",
                    s.scheme.balance_correction ? "true" : "false");
    kv.emplace_back("scheme.weight_kind", weight_kind_name(s.scheme.weight_kind));
    kv.emplace_back("scheme.spread", std::to_string(s.scheme.spread_k));
    kv.emplace_back("scheme.h_rule", s.scheme.h_rule.name());
    for (std::size_t k = 0; k < s.scheme.controls.size(); ++k) {
        const StepControl& c = s.scheme.controls[k];
        const std::string p =
            s.scheme.controls.size() == 1 ? "solver" : "solver." + std::to_string(k);
        kv.emplace_back(p + ".method", method_name(c.method));
        kv.emplace_back(p + ".rel_tol", num(c.rel_tol));
        kv.emplace_back(p + ".abs_tol", num(c.abs_tol));
        kv.emplace_back(p + ".h_min", num(c.h_min));
        kv.emplace_back(p + ".h_max", num(c.h_max));
        if (c.h_fixed) kv.emplace_back(p + ".h_fixed", num(*c.h_fixed));
        if (c.method == Method::AB2) {
            kv.emplace_back(p + ".ab2_startup",
                            c.ab2_startup == Ab2Startup::Euler ? "euler" : "rk4");
            kv.emplace_back(p + ".ab2_carry_history",
                            c.ab2_carry_history ? "true" : "false");
        }
    }
    kv.emplace_back("study.levels", std::to_string(s.levels));
    return kv;
}

}  // namespace cosim
