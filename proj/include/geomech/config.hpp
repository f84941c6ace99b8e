#pragma once

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "geomech/hamiltonian.hpp"
#include "geomech/lagrangian.hpp"

namespace geomech {

/**
 * A fully assembled run description. Parsed from line-oriented
 * "key = value" text with '#' comments; see parse_config for the grammar.
 */
struct RunConfig {
    SystemConfig system;
    std::string mode;       // simulate | bvp | euler-top
    std::string integrator; // simulate only
    double h = 0.0;
    double t_final = 0.0;
    Vec initial_q;          // simulate: chart coordinates
    Vec initial_p;          // simulate: momentum (possibly converted from velocity)
    Vec initial_pi;         // euler-top: body angular momentum
    Vec bvp_qa, bvp_qb;     // bvp: endpoint coordinates
    int bvp_segments = 0;   // bvp: number of segments ("bvp.n")
    std::string output_path;
    std::string output_format = "csv";
    std::map<std::string, double> tolerances;

    bool operator==(const RunConfig& o) const {
        return system == o.system && mode == o.mode && integrator == o.integrator && h == o.h &&
               t_final == o.t_final && detail::same_coords(initial_q, o.initial_q) &&
               detail::same_coords(initial_p, o.initial_p) &&
               detail::same_coords(initial_pi, o.initial_pi) &&
               detail::same_coords(bvp_qa, o.bvp_qa) && detail::same_coords(bvp_qb, o.bvp_qb) &&
               bvp_segments == o.bvp_segments && output_path == o.output_path &&
               output_format == o.output_format && tolerances == o.tolerances;
    }
};

namespace detail {

struct ConfigEntry {
    int line = 0;
    std::string key;
    std::string value;
    mutable bool consumed = false;
};

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline std::vector<ConfigEntry> tokenize_config(const std::string& text) {
    std::vector<ConfigEntry> entries;
    std::map<std::string, int> seen;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        std::string line =
            nl == std::string::npos ? text.substr(pos) : text.substr(pos, nl - pos);
        pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("expected 'key = value', got '" + line + "'", line_no);
        ConfigEntry e;
        e.line = line_no;
        e.key = trim(line.substr(0, eq));
        e.value = trim(line.substr(eq + 1));
        if (e.key.empty()) throw ParseError("missing key before '='", line_no);
        if (e.value.empty()) throw ParseError("missing value for key '" + e.key + "'", line_no);
        const auto [it, fresh] = seen.emplace(e.key, line_no);
        if (!fresh)
            throw ParseError("duplicate key '" + e.key + "' (first set at line " +
                                 std::to_string(it->second) + ")",
                             line_no);
        entries.push_back(std::move(e));
    }
    return entries;
}

inline void apply_overrides(std::vector<ConfigEntry>& entries,
                            const std::vector<std::string>& overrides) {
    for (const std::string& ov : overrides) {
        const std::size_t eq = ov.find('=');
        if (eq == std::string::npos || trim(ov.substr(0, eq)).empty())
            throw ParseError("override '" + ov + "' is not of the form key=value", 0);
        ConfigEntry e;
        e.line = 0;
        e.key = trim(ov.substr(0, eq));
        e.value = trim(ov.substr(eq + 1));
        if (e.value.empty()) throw ParseError("override '" + ov + "' has no value", 0);
        bool replaced = false;
        for (auto& existing : entries) {
            if (existing.key == e.key) {
                existing.value = e.value;
                existing.line = 0;
                replaced = true;
                break;
            }
        }
        if (!replaced) entries.push_back(std::move(e));
    }
}

inline double entry_number(const ConfigEntry& e) {
    const char* begin = e.value.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0')
        throw ParseError("value of '" + e.key + "' is not a number: '" + e.value + "'", e.line);
    return v;
}

inline int entry_integer(const ConfigEntry& e) {
    const double v = entry_number(e);
    const int n = static_cast<int>(v);
    if (static_cast<double>(n) != v)
        throw ParseError("value of '" + e.key + "' is not an integer: '" + e.value + "'", e.line);
    return n;
}

inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Indexed-key helper: for key "initial.q3" with prefix "initial.q" yields 3.
inline bool indexed_key(const std::string& key, const std::string& prefix, int& index) {
    if (key.size() <= prefix.size() || key.compare(0, prefix.size(), prefix) != 0) return false;
    int value = 0;
    for (std::size_t i = prefix.size(); i < key.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(key[i]))) return false;
        value = value * 10 + (key[i] - '0');
    }
    index = value;
    return true;
}

struct EntryTable {
    std::vector<ConfigEntry> entries;

    const ConfigEntry* find(const std::string& key) const {
        for (const auto& e : entries)
            if (e.key == key) {
                e.consumed = true;
                return &e;
            }
        return nullptr;
    }

    const ConfigEntry& require(const std::string& key) const {
        const ConfigEntry* e = find(key);
        if (!e) throw ParseError("missing required key '" + key + "'", 0);
        return *e;
    }

    void forbid(const std::string& key, const std::string& reason) const {
        for (const auto& e : entries)
            if (e.key == key) throw ParseError("key '" + key + "' " + reason, e.line);
    }

    void check_all_consumed() const {
        for (const auto& e : entries)
            if (!e.consumed) throw ParseError("unknown key '" + e.key + "'", e.line);
    }
};

/// Collect "prefix<i>" entries into a zero-filled vector of length `size`.
inline Vec indexed_vector(const EntryTable& table, const std::string& prefix, int size,
                          const std::string& what, bool* any_seen = nullptr) {
    Vec out = Vec::Zero(size);
    for (const auto& e : table.entries) {
        int idx = 0;
        if (!indexed_key(e.key, prefix, idx)) continue;
        if (idx >= size)
            throw ParseError("key '" + e.key + "': index out of range, " + what + " has " +
                                 std::to_string(size) + " components",
                             e.line);
        out[idx] = entry_number(e);
        e.consumed = true;
        if (any_seen) *any_seen = true;
    }
    return out;
}

inline bool has_indexed(const EntryTable& table, const std::string& prefix) {
    for (const auto& e : table.entries) {
        int idx = 0;
        if (indexed_key(e.key, prefix, idx)) return true;
    }
    return false;
}

} // namespace detail

/**
 * Parse run-configuration text. Grammar: one "key = value" per line, '#'
 * starts a comment, keys may not repeat. Recognized keys:
 *
 *   system, mode, integrator, h, t_final, output, format,
 *   param.<name>, tolerance.<name>,
 *   initial.q<i>, initial.p<i> | initial.v<i>   (simulate)
 *   initial.pi<i>                               (euler-top)
 *   bvp.qa<i>, bvp.qb<i>, bvp.n                 (bvp; h is derived)
 *
 * Velocities given as initial.v<i> are converted to momenta through the
 * Legendre transform of the configured system. `overrides` entries of the
 * form key=value replace or append file entries before assembly.
 */
inline RunConfig parse_config(const std::string& text,
                              const std::vector<std::string>& overrides = {}) {
    detail::EntryTable table{detail::tokenize_config(text)};
    detail::apply_overrides(table.entries, overrides);

    // value sanity for the shared numeric keys, before any mode dispatch
    for (const auto& e : table.entries) {
        if (e.key != "h" && e.key != "t_final") continue;
        const double v = detail::entry_number(e);
        if (!(v > 0.0))
            throw ParseError("value of '" + e.key + "' must be positive, got '" + e.value + "'",
                             e.line);
    }

    RunConfig cfg;

    const detail::ConfigEntry& mode_e = table.require("mode");
    cfg.mode = mode_e.value;
    if (cfg.mode != "simulate" && cfg.mode != "bvp" && cfg.mode != "euler-top")
        throw ParseError("unknown mode '" + cfg.mode + "'", mode_e.line);

    const detail::ConfigEntry& system_e = table.require("system");
    cfg.system.name = system_e.value;

    for (const auto& e : table.entries) {
        if (e.key.rfind("param.", 0) != 0) continue;
        const std::string name = e.key.substr(6);
        if (name.empty()) throw ParseError("empty parameter name", e.line);
        cfg.system.parameters[name] = detail::entry_number(e);
        e.consumed = true;
    }

    if (const detail::ConfigEntry* fmt = table.find("format")) {
        if (fmt->value != "csv" && fmt->value != "json")
            throw ParseError("format must be 'csv' or 'json', got '" + fmt->value + "'", fmt->line);
        cfg.output_format = fmt->value;
    }
    if (const detail::ConfigEntry* out = table.find("output"))
        cfg.output_path = out->value;
    else
        cfg.output_path = "out." + cfg.output_format;

    auto positive_number = [](const detail::ConfigEntry& e) {
        const double v = detail::entry_number(e);
        if (!(v > 0.0))
            throw ParseError("value of '" + e.key + "' must be positive, got '" + e.value + "'",
                             e.line);
        return v;
    };

    if (cfg.mode == "simulate") {
        table.forbid("bvp.n", "is only used in bvp mode");
        const detail::ConfigEntry& integ = table.require("integrator");
        try {
            parse_method(integ.value);
        } catch (const InvalidInputError& err) {
            throw ParseError(err.what(), integ.line);
        }
        cfg.integrator = integ.value;
        cfg.h = positive_number(table.require("h"));
        cfg.t_final = positive_number(table.require("t_final"));

        const MechanicalSystem system = build_system(cfg.system);
        const int storage = system.manifold.storage_size();
        const int dim = system.manifold.dim();
        cfg.initial_q = detail::indexed_vector(table, "initial.q", storage, "the configuration");
        const bool has_p = detail::has_indexed(table, "initial.p");
        const bool has_v = detail::has_indexed(table, "initial.v");
        if (has_p && has_v) {
            for (const auto& e : table.entries) {
                int idx = 0;
                if (detail::indexed_key(e.key, "initial.v", idx))
                    throw ParseError("cannot mix initial.p and initial.v entries", e.line);
            }
        }
        ManifoldPoint q0 =
            canonicalize(ManifoldPoint(system.manifold, cfg.initial_q));
        if (has_v) {
            const Vec v = detail::indexed_vector(table, "initial.v", dim, "the velocity");
            cfg.initial_p = legendre(system, q0, TangentValue(q0, v)).p;
        } else {
            cfg.initial_p = detail::indexed_vector(table, "initial.p", dim, "the momentum");
        }
    } else if (cfg.mode == "bvp") {
        table.forbid("h", "is derived from t_final and bvp.n in bvp mode");
        table.forbid("integrator", "is not used in bvp mode");
        cfg.t_final = positive_number(table.require("t_final"));
        const detail::ConfigEntry& n_e = table.require("bvp.n");
        cfg.bvp_segments = detail::entry_integer(n_e);
        if (cfg.bvp_segments < 2)
            throw ParseError("value of 'bvp.n' must be at least 2", n_e.line);
        cfg.h = cfg.t_final / cfg.bvp_segments;
        const MechanicalSystem system = build_system(cfg.system);
        const int storage = system.manifold.storage_size();
        cfg.bvp_qa = detail::indexed_vector(table, "bvp.qa", storage, "the configuration");
        cfg.bvp_qb = detail::indexed_vector(table, "bvp.qb", storage, "the configuration");
    } else { // euler-top
        if (cfg.system.name != "euler-top")
            throw ParseError("euler-top mode requires 'system = euler-top'", system_e.line);
        table.forbid("integrator", "is not used in euler-top mode (implicit midpoint is fixed)");
        table.forbid("bvp.n", "is only used in bvp mode");
        for (const char* key : {"i1", "i2", "i3"}) {
            auto it = cfg.system.parameters.find(key);
            if (it == cfg.system.parameters.end())
                throw ParseError(std::string("missing required key 'param.") + key + "'", 0);
            if (!(it->second > 0.0))
                throw ParseError(std::string("value of 'param.") + key + "' must be positive", 0);
        }
        for (const auto& [name, value] : cfg.system.parameters)
            if (name != "i1" && name != "i2" && name != "i3")
                throw ParseError("unknown parameter 'param." + name + "' for euler-top", 0);
        cfg.h = positive_number(table.require("h"));
        cfg.t_final = positive_number(table.require("t_final"));
        cfg.initial_pi = detail::indexed_vector(table, "initial.pi", 3, "the angular momentum");
    }

    for (const auto& e : table.entries) {
        if (e.key.rfind("tolerance.", 0) != 0) continue;
        if (cfg.mode == "bvp")
            throw ParseError("key '" + e.key + "' is not used in bvp mode", e.line);
        const std::string name = e.key.substr(10);
        if (name.empty()) throw ParseError("empty tolerance name", e.line);
        const double v = detail::entry_number(e);
        if (!(v > 0.0))
            throw ParseError("value of '" + e.key + "' must be positive", e.line);
        cfg.tolerances[name] = v;
        e.consumed = true;
    }

    table.check_all_consumed();
    return cfg;
}

/// Emit config text in the same grammar parse_config reads; numbers carry 17
/// significant digits so a parse of the output reproduces the input config.
inline std::string render_config(const RunConfig& cfg) {
    std::string out;
    auto kv = [&out](const std::string& key, const std::string& value) {
        out += key + " = " + value + "\n";
    };
    kv("system", cfg.system.name);
    kv("mode", cfg.mode);
    if (cfg.mode == "simulate") kv("integrator", cfg.integrator);
    if (cfg.mode != "bvp") kv("h", detail::format_number(cfg.h));
    kv("t_final", detail::format_number(cfg.t_final));
    for (const auto& [name, value] : cfg.system.parameters)
        kv("param." + name, detail::format_number(value));
    if (cfg.mode == "simulate") {
        for (Eigen::Index i = 0; i < cfg.initial_q.size(); ++i)
            kv("initial.q" + std::to_string(i), detail::format_number(cfg.initial_q[i]));
        for (Eigen::Index i = 0; i < cfg.initial_p.size(); ++i)
            kv("initial.p" + std::to_string(i), detail::format_number(cfg.initial_p[i]));
    } else if (cfg.mode == "bvp") {
        kv("bvp.n", std::to_string(cfg.bvp_segments));
        for (Eigen::Index i = 0; i < cfg.bvp_qa.size(); ++i)
            kv("bvp.qa" + std::to_string(i), detail::format_number(cfg.bvp_qa[i]));
        for (Eigen::Index i = 0; i < cfg.bvp_qb.size(); ++i)
            kv("bvp.qb" + std::to_string(i), detail::format_number(cfg.bvp_qb[i]));
    } else {
        for (Eigen::Index i = 0; i < cfg.initial_pi.size(); ++i)
            kv("initial.pi" + std::to_string(i), detail::format_number(cfg.initial_pi[i]));
    }
    kv("output", cfg.output_path);
    kv("format", cfg.output_format);
    for (const auto& [name, value] : cfg.tolerances)
        kv("tolerance." + name, detail::format_number(value));
    return out;
}

} // namespace geomech
