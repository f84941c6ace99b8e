#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "geomech/config.hpp"
#include "geomech/symmetry.hpp"

namespace geomech {

/// Drift record of one conserved quantity along a run.
struct QuantityReport {
    std::string name;
    double initial = 0.0;
    double max_abs_drift = 0.0;
    double rel_drift = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct ConservationReport {
    std::vector<QuantityReport> quantities;
    bool all_pass = true;
};

namespace detail {

inline constexpr double kDefaultTolerance = 1e-3; // relative drift

inline std::string format17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw Error("failed while writing '" + path + "'");
}

struct QuantitySpec {
    std::string name;
    std::function<double(std::size_t)> value; // by sample index
};

inline QuantityReport drift_report(const QuantitySpec& spec, std::size_t n_samples,
                                   const std::map<std::string, double>& tolerances) {
    QuantityReport r;
    r.name = spec.name;
    r.initial = spec.value(0);
    for (std::size_t i = 0; i < n_samples; ++i)
        r.max_abs_drift = std::max(r.max_abs_drift, std::abs(spec.value(i) - r.initial));
    r.rel_drift = r.max_abs_drift / (1.0 + std::abs(r.initial));
    const auto it = tolerances.find(spec.name);
    r.tolerance = it == tolerances.end() ? kDefaultTolerance : it->second;
    r.pass = r.rel_drift <= r.tolerance;
    return r;
}

inline std::string report_json(const ConservationReport& report) {
    nlohmann::ordered_json j;
    j["quantities"] = nlohmann::ordered_json::array();
    for (const QuantityReport& q : report.quantities) {
        nlohmann::ordered_json e;
        e["name"] = q.name;
        e["initial"] = q.initial;
        e["max_abs_drift"] = q.max_abs_drift;
        e["rel_drift"] = q.rel_drift;
        e["tolerance"] = q.tolerance;
        e["pass"] = q.pass;
        j["quantities"].push_back(std::move(e));
    }
    j["all_pass"] = report.all_pass;
    return j.dump(2) + "\n";
}

/// Tabular output shared by the csv and json writers.
struct Table {
    std::string meta; // without the leading "# meta: "
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    std::string to_csv(bool with_meta) const {
        std::string out;
        if (with_meta && !meta.empty()) out += "# meta: " + meta + "\n";
        for (std::size_t c = 0; c < columns.size(); ++c) {
            if (c) out += ",";
            out += columns[c];
        }
        out += "\n";
        for (const auto& row : rows) {
            for (std::size_t c = 0; c < row.size(); ++c) {
                if (c) out += ",";
                out += format17(row[c]);
            }
            out += "\n";
        }
        return out;
    }

    std::string to_json(const nlohmann::ordered_json& meta_obj) const {
        nlohmann::ordered_json j;
        j["meta"] = meta_obj;
        j["columns"] = columns;
        j["rows"] = nlohmann::ordered_json::array();
        for (const auto& row : rows) j["rows"].push_back(row);
        return j.dump() + "\n";
    }
};

/// Conserved quantities reported for a simulate run: the energy always, plus
/// every catalog charge whose action leaves the Hamiltonian invariant at the
/// initial state.
inline std::vector<std::pair<std::string, GroupAction>> invariant_actions(
    const MechanicalSystem& system, const PhaseState& s0) {
    std::vector<std::pair<std::string, GroupAction>> actions;
    if (system.manifold == Manifold::euclidean(3)) {
        const char* names[3] = {"px", "py", "pz"};
        for (int k = 0; k < 3; ++k) {
            const GroupAction a = GroupAction::translation(Eigen::Vector3d::Unit(k));
            if (is_invariant_at(system, a, s0)) actions.emplace_back(names[k], a);
        }
        bool rot_ok = true;
        for (int k = 0; k < 3; ++k)
            if (!is_invariant_at(system, GroupAction::rotation(Eigen::Vector3d::Unit(k)), s0))
                rot_ok = false;
        if (rot_ok) actions.emplace_back("L", GroupAction::rotation(Eigen::Vector3d::UnitZ()));
    }
    for (int c = 0; c < system.manifold.dim(); ++c) {
        if (!system.manifold.is_circle_chart_index(c)) continue;
        const GroupAction a = GroupAction::phase_rotation(c);
        if (is_invariant_at(system, a, s0)) actions.emplace_back("p" + std::to_string(c), a);
    }
    return actions;
}

inline int finish_run(const RunConfig& cfg, const Table& table,
                      const nlohmann::ordered_json& meta_obj, bool meta_in_csv,
                      const ConservationReport& report) {
    if (cfg.output_format == "csv")
        write_text_file(cfg.output_path, table.to_csv(meta_in_csv));
    else
        write_text_file(cfg.output_path, table.to_json(meta_obj));
    write_text_file(cfg.output_path + ".report.json", report_json(report));
    return report.all_pass ? 0 : 2;
}

inline int run_simulate(const RunConfig& cfg) {
    const MechanicalSystem system = build_system(cfg.system);
    const PhaseState s0(ManifoldPoint(system.manifold, cfg.initial_q), cfg.initial_p);
    const long n = std::lround(cfg.t_final / cfg.h);
    if (n < 1) throw ConfigError("t_final must cover at least one step of size h");

    const Trajectory traj =
        integrate(system, s0, cfg.h, static_cast<int>(n), parse_method(cfg.integrator));

    std::vector<double> energy(traj.states.size());
    for (std::size_t i = 0; i < traj.states.size(); ++i)
        energy[i] = evaluate_hamiltonian(system, traj.states[i]);

    ConservationReport report;
    std::vector<QuantitySpec> specs;
    specs.push_back({"H", [&](std::size_t i) { return energy[i]; }});
    for (const auto& [name, action] : invariant_actions(system, s0)) {
        if (action.kind == GroupAction::Kind::Rotation) {
            const char* comps[3] = {"Lx", "Ly", "Lz"};
            for (int k = 0; k < 3; ++k) {
                const GroupAction a = action;
                specs.push_back({comps[k], [&, a, k](std::size_t i) {
                                     return momentum_map(a, traj.states[i]).charge[k];
                                 }});
            }
        } else {
            const GroupAction a = action;
            specs.push_back({name, [&, a](std::size_t i) {
                                 return momentum_map(a, traj.states[i]).charge[0];
                             }});
        }
    }
    for (const auto& spec : specs) {
        report.quantities.push_back(drift_report(spec, traj.states.size(), cfg.tolerances));
        report.all_pass = report.all_pass && report.quantities.back().pass;
    }

    const int storage = system.manifold.storage_size();
    const int dim = system.manifold.dim();
    Table table;
    table.meta = "system=" + system.name + " manifold=" + system.manifold.to_string() +
                 " method=" + cfg.integrator + " h=" + format17(cfg.h) +
                 " steps=" + std::to_string(n);
    table.columns.push_back("t");
    for (int i = 0; i < storage; ++i) table.columns.push_back("q" + std::to_string(i));
    for (int i = 0; i < dim; ++i) table.columns.push_back("p" + std::to_string(i));
    table.columns.push_back("H");
    table.rows.reserve(traj.states.size());
    for (std::size_t i = 0; i < traj.states.size(); ++i) {
        std::vector<double> row;
        row.reserve(1 + storage + dim + 1);
        row.push_back(traj.times[static_cast<Eigen::Index>(i)]);
        for (int c = 0; c < storage; ++c) row.push_back(traj.states[i].q.coords()[c]);
        for (int c = 0; c < dim; ++c) row.push_back(traj.states[i].p[c]);
        row.push_back(energy[i]);
        table.rows.push_back(std::move(row));
    }

    nlohmann::ordered_json meta;
    meta["system"] = system.name;
    meta["manifold"] = system.manifold.to_string();
    meta["method"] = cfg.integrator;
    meta["h"] = cfg.h;
    meta["steps"] = n;
    return finish_run(cfg, table, meta, /*meta_in_csv=*/true, report);
}

inline int run_bvp(const RunConfig& cfg) {
    const MechanicalSystem system = build_system(cfg.system);
    const ManifoldPoint qa(system.manifold, cfg.bvp_qa);
    const ManifoldPoint qb(system.manifold, cfg.bvp_qb);
    const DiscretePath path = solve_bvp(system, qa, qb, cfg.t_final, cfg.bvp_segments);

    double residual = 0.0;
    for (const Vec& g : action_gradient(system, path))
        residual = std::max(residual, g.lpNorm<Eigen::Infinity>());

    ConservationReport report;
    QuantityReport q;
    q.name = "action_gradient_max_norm";
    q.initial = 0.0;
    q.max_abs_drift = residual;
    q.rel_drift = residual;
    q.tolerance = 1e-10;
    q.pass = residual <= q.tolerance;
    report.quantities.push_back(q);
    report.all_pass = q.pass;

    const int storage = system.manifold.storage_size();
    Table table;
    table.columns.push_back("t");
    for (int i = 0; i < storage; ++i) table.columns.push_back("q" + std::to_string(i));
    for (std::size_t i = 0; i < path.points.size(); ++i) {
        std::vector<double> row;
        row.push_back(path.times[static_cast<Eigen::Index>(i)]);
        for (int c = 0; c < storage; ++c) row.push_back(path.points[i].coords()[c]);
        table.rows.push_back(std::move(row));
    }

    nlohmann::ordered_json meta;
    meta["system"] = system.name;
    meta["manifold"] = system.manifold.to_string();
    meta["mode"] = "bvp";
    meta["segments"] = cfg.bvp_segments;
    meta["t_final"] = cfg.t_final;
    return finish_run(cfg, table, meta, /*meta_in_csv=*/false, report);
}

inline int run_euler_top(const RunConfig& cfg) {
    const Eigen::Vector3d inertia(cfg.system.parameters.at("i1"), cfg.system.parameters.at("i2"),
                                  cfg.system.parameters.at("i3"));
    const BodyAngularMomentum b0(Eigen::Vector3d(cfg.initial_pi), inertia);
    const long n = std::lround(cfg.t_final / cfg.h);
    if (n < 1) throw ConfigError("t_final must cover at least one step of size h");
    const std::vector<Eigen::Vector3d> seq = integrate_euler_top(b0, cfg.h, static_cast<int>(n));

    std::vector<double> cas(seq.size()), energy(seq.size());
    for (std::size_t i = 0; i < seq.size(); ++i) {
        const BodyAngularMomentum b(seq[i], inertia);
        cas[i] = casimir(b);
        energy[i] = rotational_energy(b);
    }

    ConservationReport report;
    for (const QuantitySpec& spec :
         {QuantitySpec{"casimir", [&](std::size_t i) { return cas[i]; }},
          QuantitySpec{"energy", [&](std::size_t i) { return energy[i]; }}}) {
        report.quantities.push_back(drift_report(spec, seq.size(), cfg.tolerances));
        report.all_pass = report.all_pass && report.quantities.back().pass;
    }

    Table table;
    table.columns = {"t", "Pi1", "Pi2", "Pi3", "casimir", "energy"};
    for (std::size_t i = 0; i < seq.size(); ++i)
        table.rows.push_back({cfg.h * static_cast<double>(i), seq[i][0], seq[i][1], seq[i][2],
                              cas[i], energy[i]});

    nlohmann::ordered_json meta;
    meta["system"] = "euler-top";
    meta["mode"] = "euler-top";
    meta["h"] = cfg.h;
    meta["steps"] = n;
    return finish_run(cfg, table, meta, /*meta_in_csv=*/false, report);
}

} // namespace detail

/**
 * Execute a run: integrate or solve per cfg.mode, write the data file and the
 * `<output>.report.json` conservation report. Returns 0 when every tracked
 * quantity stays within tolerance, 2 when a conservation check fails, and 1
 * on any execution error (the diagnostic goes to `diag`).
 */
inline int run(const RunConfig& cfg, std::ostream& diag) {
    try {
        if (cfg.mode == "simulate") return detail::run_simulate(cfg);
        if (cfg.mode == "bvp") return detail::run_bvp(cfg);
        if (cfg.mode == "euler-top") return detail::run_euler_top(cfg);
        throw ConfigError("unknown mode '" + cfg.mode + "'");
    } catch (const Error& e) {
        diag << "geomech: " << e.what() << "\n";
        return 1;
    }
}

} // namespace geomech
