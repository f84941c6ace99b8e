#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "geomech/systems.hpp"

namespace geomech {

/**
 * Uniformly sampled curve on configuration space. Nodes are stored canonical;
 * the times must increase with a uniform step (checked to 1e-12 relative to
 * the scale of the grid).
 */
struct DiscretePath {
    MechanicalSystem system;
    Vec times;
    std::vector<ManifoldPoint> points;

    DiscretePath(MechanicalSystem system_in, Vec times_in, std::vector<ManifoldPoint> points_in)
        : system(std::move(system_in)), times(std::move(times_in)), points(std::move(points_in)) {
        if (points.empty() || static_cast<std::size_t>(times.size()) != points.size())
            throw InvalidInputError("DiscretePath: times and points must have equal nonzero length");
        for (auto& q : points) {
            if (q.manifold() != system.manifold)
                throw InvalidInputError("DiscretePath: point manifold does not match the system");
            q = canonicalize(q);
        }
        if (times.size() > 1) {
            const double h = times[1] - times[0];
            if (!(h > 0.0)) throw InvalidInputError("DiscretePath: times must be strictly increasing");
            const double tol =
                1e-12 * std::max({1.0, std::abs(h), std::abs(times[times.size() - 1])});
            for (Eigen::Index i = 0; i + 1 < times.size(); ++i) {
                const double dt = times[i + 1] - times[i];
                if (!(dt > 0.0) || std::abs(dt - h) > tol)
                    throw InvalidInputError("DiscretePath: time grid is not uniform");
            }
        }
    }

    int segments() const { return static_cast<int>(points.size()) - 1; }
    double step() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }
};

/// Variation field along a path; endpoints are pinned to zero.
struct PathVariation {
    std::vector<Vec> components;

    explicit PathVariation(std::vector<Vec> components_in) : components(std::move(components_in)) {
        if (components.size() < 2)
            throw InvalidInputError("PathVariation: needs at least two entries");
        if (components.front().lpNorm<Eigen::Infinity>() != 0.0 ||
            components.back().lpNorm<Eigen::Infinity>() != 0.0)
            throw InvalidInputError("PathVariation: first and last entries must be exactly zero");
    }
};

/// Discretized action: total value plus the per-segment quadrature terms.
struct ActionValue {
    double value;
    Vec per_segment;
};

/// L(q, v) = v' M(q) v / 2 - V(q).
inline double evaluate_lagrangian(const MechanicalSystem& system, const ManifoldPoint& q,
                                  const TangentValue& v) {
    if (q.manifold() != system.manifold)
        throw InvalidInputError("evaluate_lagrangian: point is not on the system manifold");
    if (v.components().size() != system.manifold.dim())
        throw InvalidInputError("evaluate_lagrangian: velocity dimension mismatch");
    const Vec& vc = v.components();
    return 0.5 * vc.dot(system.mass(q) * vc) - system.potential(q);
}

namespace detail {

/// One quadrature segment of the discrete action: kinetic energy from the
/// wrapped chart difference with the mass matrix at the chart midpoint,
/// potential averaged over the two nodes (trapezoid). This choice makes the
/// discrete stationarity condition identical to the Stormer-Verlet recurrence
/// for constant mass matrices.
inline double segment_action(const MechanicalSystem& system, const ManifoldPoint& a,
                             const ManifoldPoint& b, double h) {
    const Vec v = chart_displacement(a, b) / h;
    const double kinetic = 0.5 * v.dot(system.mass(chart_midpoint(a, b)) * v);
    const double potential = 0.5 * (system.potential(a) + system.potential(b));
    return h * (kinetic - potential);
}

inline bool analytic_variational_path(const MechanicalSystem& system) {
    return system.constant_mass_matrix && !system.manifold.has_rotation_factor();
}

inline double path_coord_scale(const std::vector<ManifoldPoint>& pts) {
    double scale = 0.0;
    for (const auto& q : pts)
        if (q.coords().size() > 0)
            scale = std::max(scale, q.coords().lpNorm<Eigen::Infinity>());
    return scale;
}

/**
 * Derivative of the discrete action with respect to the chart coordinates of
 * node i (0 < i < N). Touches only the two adjacent segments. `constant_mass`
 * enables the closed form; otherwise a central difference with step `fd_eps`
 * is taken through the two segments.
 */
inline Vec node_gradient(const MechanicalSystem& system, const std::vector<ManifoldPoint>& pts,
                         double h, int i, const Mat* constant_mass, double fd_eps) {
    const ManifoldPoint& prev = pts[i - 1];
    const ManifoldPoint& here = pts[i];
    const ManifoldPoint& next = pts[i + 1];
    if (constant_mass) {
        const Vec d_prev = chart_displacement(prev, here);
        const Vec d_next = chart_displacement(here, next);
        return Vec(((*constant_mass) * (d_prev - d_next)) / h - h * system.grad_potential(here));
    }
    const int d = system.manifold.dim();
    Vec g(d);
    Vec e = Vec::Zero(d);
    for (int k = 0; k < d; ++k) {
        e[k] = fd_eps;
        const ManifoldPoint qp = displace(here, e);
        const double sp = segment_action(system, prev, qp, h) + segment_action(system, qp, next, h);
        e[k] = -fd_eps;
        const ManifoldPoint qm = displace(here, e);
        const double sm = segment_action(system, prev, qm, h) + segment_action(system, qm, next, h);
        e[k] = 0.0;
        g[k] = (sp - sm) / (2.0 * fd_eps);
    }
    return g;
}

} // namespace detail

/// Quadrature of the action S = integral of L along the path.
inline ActionValue discrete_action(const MechanicalSystem& system, const DiscretePath& path) {
    if (path.system.manifold != system.manifold)
        throw InvalidInputError("discrete_action: path belongs to a different configuration space");
    const int n = path.segments();
    if (n < 1) throw InvalidInputError("discrete_action: path needs at least one segment");
    const double h = path.step();
    Vec per(n);
    for (int i = 0; i < n; ++i)
        per[i] = detail::segment_action(system, path.points[i], path.points[i + 1], h);
    return ActionValue{per.sum(), std::move(per)};
}

/**
 * d/d(eps) S(path displaced by eps * r) at eps = 0. Closed form when the mass
 * matrix is constant; otherwise a central difference in eps with
 * eps = 1e-6 * (1 + max |coordinate|).
 */
inline double directional_action_derivative(const MechanicalSystem& system, const DiscretePath& path,
                                            const PathVariation& r) {
    const int n = path.segments();
    if (n < 1) throw InvalidInputError("directional_action_derivative: degenerate path");
    const int d = system.manifold.dim();
    if (r.components.size() != path.points.size())
        throw InvalidInputError("directional_action_derivative: variation length mismatch");
    for (const Vec& ri : r.components)
        if (ri.size() != d)
            throw InvalidInputError("directional_action_derivative: variation dimension mismatch");
    const double h = path.step();

    if (detail::analytic_variational_path(system)) {
        const Mat M = system.mass(path.points[0]);
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            const Vec dq = chart_displacement(path.points[i], path.points[i + 1]);
            const Vec dr = r.components[i + 1] - r.components[i];
            acc += dr.dot(M * dq) / h;
            acc -= 0.5 * h *
                   (system.grad_potential(path.points[i]).dot(r.components[i]) +
                    system.grad_potential(path.points[i + 1]).dot(r.components[i + 1]));
        }
        return acc;
    }

    const double eps = 1e-6 * (1.0 + detail::path_coord_scale(path.points));
    auto shifted = [&](double sign) {
        std::vector<ManifoldPoint> pts;
        pts.reserve(path.points.size());
        for (std::size_t i = 0; i < path.points.size(); ++i)
            pts.push_back(displace(path.points[i], sign * eps * r.components[i]));
        double s = 0.0;
        for (std::size_t i = 0; i + 1 < pts.size(); ++i)
            s += detail::segment_action(system, pts[i], pts[i + 1], h);
        return s;
    };
    return (shifted(1.0) - shifted(-1.0)) / (2.0 * eps);
}

/**
 * Gradient of the discrete action with respect to the interior nodes, the
 * endpoints held fixed: entry i-1 is dS/dq_i for i = 1..N-1. A stationary
 * path has all entries at zero.
 */
inline std::vector<Vec> action_gradient(const MechanicalSystem& system, const DiscretePath& path) {
    const int n = path.segments();
    if (n < 2) throw InvalidInputError("action_gradient: path needs at least two segments");
    const double h = path.step();
    std::optional<Mat> constM;
    if (detail::analytic_variational_path(system)) constM = system.mass(path.points[0]);
    const double eps = 1e-6 * (1.0 + detail::path_coord_scale(path.points));
    std::vector<Vec> g;
    g.reserve(n - 1);
    for (int i = 1; i < n; ++i)
        g.push_back(detail::node_gradient(system, path.points, h, i,
                                          constM ? &*constM : nullptr, eps));
    return g;
}

/// Newton controls for the boundary-value solver.
struct BvpOptions {
    double tolerance = 1e-10;  ///< gradient max-norm at acceptance
    int max_iterations = 50;
    int max_step_halvings = 20;
};

namespace detail {

inline Vec stack_gradient(const MechanicalSystem& system, const std::vector<ManifoldPoint>& pts,
                          double h, const Mat* constM, double fd_eps) {
    const int d = system.manifold.dim();
    const int interior = static_cast<int>(pts.size()) - 2;
    Vec g(interior * d);
    for (int i = 1; i <= interior; ++i)
        g.segment((i - 1) * d, d) = node_gradient(system, pts, h, i, constM, fd_eps);
    return g;
}

} // namespace detail

/**
 * Stationary path between two fixed configurations: damped Newton iteration
 * on the interior action gradient, with a central-difference Jacobian that
 * exploits the three-node coupling stencil. The iteration is deterministic,
 * so equal inputs give bit-identical paths.
 *
 * Throws ConjugatePointError when the Jacobian is (numerically) singular or
 * the Newton step blows up, and ConvergenceError when the iteration budget
 * runs out.
 */
inline DiscretePath solve_bvp(const MechanicalSystem& system, const ManifoldPoint& qa,
                              const ManifoldPoint& qb, double total_time, int segments,
                              const std::optional<DiscretePath>& initial_guess = std::nullopt,
                              const BvpOptions& options = {}) {
    if (!(total_time > 0.0)) throw InvalidInputError("solve_bvp: total time must be positive");
    if (segments < 2) throw InvalidInputError("solve_bvp: need at least two segments");
    if (qa.manifold() != system.manifold || qb.manifold() != system.manifold)
        throw InvalidInputError("solve_bvp: endpoints are not on the system manifold");

    const int N = segments;
    const int d = system.manifold.dim();
    const double h = total_time / N;
    Vec times(N + 1);
    for (int i = 0; i <= N; ++i) times[i] = h * i;

    const ManifoldPoint a = canonicalize(qa);
    const ManifoldPoint b = canonicalize(qb);
    std::vector<ManifoldPoint> pts;
    pts.reserve(N + 1);
    if (initial_guess) {
        if (static_cast<int>(initial_guess->points.size()) != N + 1 ||
            initial_guess->system.manifold != system.manifold)
            throw InvalidInputError("solve_bvp: initial guess does not match the grid");
        pts = initial_guess->points;
        pts.front() = a;
        pts.back() = b;
    } else {
        const Vec span = chart_displacement(a, b);
        for (int i = 0; i <= N; ++i) pts.push_back(displace(a, (double(i) / N) * span));
        pts.front() = a;
        pts.back() = b;
    }

    std::optional<Mat> constM;
    if (detail::analytic_variational_path(system)) constM = system.mass(pts[0]);
    const Mat* constMp = constM ? &*constM : nullptr;

    auto fd_eps = [&]() { return 1e-6 * (1.0 + detail::path_coord_scale(pts)); };

    Vec g = detail::stack_gradient(system, pts, h, constMp, fd_eps());
    double res = g.lpNorm<Eigen::Infinity>();

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        if (res <= options.tolerance) return DiscretePath(system, times, pts);

        const double scale = detail::path_coord_scale(pts);
        const double jac_delta = 1e-7 * (1.0 + scale);
        const double grad_eps = 1e-6 * (1.0 + scale);

        Mat J = Mat::Zero((N - 1) * d, (N - 1) * d);
        Vec e = Vec::Zero(d);
        for (int j = 1; j < N; ++j) {
            const ManifoldPoint saved = pts[j];
            for (int k = 0; k < d; ++k) {
                const int col = (j - 1) * d + k;
                e[k] = jac_delta;
                pts[j] = displace(saved, e);
                Vec gp[3];
                for (int t = -1; t <= 1; ++t) {
                    const int i = j + t;
                    if (i >= 1 && i <= N - 1)
                        gp[t + 1] = detail::node_gradient(system, pts, h, i, constMp, grad_eps);
                }
                e[k] = -jac_delta;
                pts[j] = displace(saved, e);
                for (int t = -1; t <= 1; ++t) {
                    const int i = j + t;
                    if (i >= 1 && i <= N - 1) {
                        const Vec gm = detail::node_gradient(system, pts, h, i, constMp, grad_eps);
                        J.block((i - 1) * d, col, d, 1) = (gp[t + 1] - gm) / (2.0 * jac_delta);
                    }
                }
                e[k] = 0.0;
                pts[j] = saved;
            }
        }

        Eigen::FullPivLU<Mat> lu(J);
        lu.setThreshold(1e-12);
        if (!lu.isInvertible())
            throw ConjugatePointError("solve_bvp: singular Jacobian, the endpoints are conjugate");
        const Vec step = lu.solve(g);
        if (!step.allFinite() || step.lpNorm<Eigen::Infinity>() > 1e8 * (1.0 + scale))
            throw ConjugatePointError(
                "solve_bvp: Newton step diverged, the endpoints are (numerically) conjugate");

        // Damped update: halve until the residual decreases; after the last
        // halving the smallest trial is taken regardless.
        double alpha = 1.0;
        std::vector<ManifoldPoint> trial = pts;
        Vec gt;
        double res_t = res;
        for (int halving = 0; halving <= options.max_step_halvings; ++halving) {
            for (int j = 1; j < N; ++j)
                trial[j] = displace(pts[j], Vec(-alpha * step.segment((j - 1) * d, d)));
            gt = detail::stack_gradient(system, trial, h, constMp, fd_eps());
            res_t = gt.lpNorm<Eigen::Infinity>();
            if (res_t < res) break;
            alpha *= 0.5;
        }
        pts = std::move(trial);
        g = std::move(gt);
        res = res_t;
    }

    if (res <= options.tolerance) return DiscretePath(system, times, pts);
    throw ConvergenceError("solve_bvp: Newton did not reach tolerance " +
                               std::to_string(options.tolerance),
                           res);
}

/**
 * Forward integration by discrete stationarity: given q_{i-1} and q_i, the
 * next node solves the interior gradient equation at node i. Each step is a
 * Newton solve in the single unknown q_{i+1}; for constant mass matrices the
 * first iteration already lands on the Stormer recurrence.
 */
inline DiscretePath integrate_variational(const MechanicalSystem& system, const ManifoldPoint& q0,
                                          const ManifoldPoint& q1, double h, int steps) {
    if (!(h > 0.0)) throw InvalidInputError("integrate_variational: step must be positive");
    if (steps < 1) throw InvalidInputError("integrate_variational: need at least one step");
    if (q0.manifold() != system.manifold || q1.manifold() != system.manifold)
        throw InvalidInputError("integrate_variational: points are not on the system manifold");

    const int d = system.manifold.dim();
    std::vector<ManifoldPoint> pts;
    pts.reserve(steps + 1);
    pts.push_back(canonicalize(q0));
    pts.push_back(canonicalize(q1));

    std::optional<Mat> constM;
    if (detail::analytic_variational_path(system)) constM = system.mass(pts[0]);
    const Mat* constMp = constM ? &*constM : nullptr;

    std::vector<ManifoldPoint> triple = {pts[0], pts[1], pts[1]};
    for (int i = 1; i < steps; ++i) {
        triple[0] = pts[i - 1];
        triple[1] = pts[i];
        triple[2] = displace(pts[i], chart_displacement(pts[i - 1], pts[i]));

        const double scale = 1.0 + detail::path_coord_scale(triple);
        const double grad_eps = 1e-6 * scale;
        const double jac_delta = 1e-7 * scale;

        Vec R = detail::node_gradient(system, triple, h, 1, constMp, grad_eps);
        double res = R.lpNorm<Eigen::Infinity>();
        for (int it = 0; it < 50 && res > 1e-13; ++it) {
            Mat J(d, d);
            Vec e = Vec::Zero(d);
            const ManifoldPoint saved = triple[2];
            for (int k = 0; k < d; ++k) {
                e[k] = jac_delta;
                triple[2] = displace(saved, e);
                const Vec rp = detail::node_gradient(system, triple, h, 1, constMp, grad_eps);
                e[k] = -jac_delta;
                triple[2] = displace(saved, e);
                const Vec rm = detail::node_gradient(system, triple, h, 1, constMp, grad_eps);
                e[k] = 0.0;
                J.col(k) = (rp - rm) / (2.0 * jac_delta);
            }
            triple[2] = saved;
            const Vec step = J.partialPivLu().solve(R);
            if (!step.allFinite())
                throw ConvergenceError("integrate_variational: Newton breakdown at step " +
                                           std::to_string(i),
                                       res);
            double alpha = 1.0;
            for (int halving = 0; halving <= 20; ++halving) {
                const ManifoldPoint trial = displace(saved, Vec(-alpha * step));
                triple[2] = trial;
                const Vec Rt = detail::node_gradient(system, triple, h, 1, constMp, grad_eps);
                const double rt = Rt.lpNorm<Eigen::Infinity>();
                if (rt < res || halving == 20) {
                    R = Rt;
                    res = rt;
                    break;
                }
                alpha *= 0.5;
            }
        }
        if (!(res <= 1e-12))
            throw ConvergenceError(
                "integrate_variational: node equation stalled at step " + std::to_string(i), res);
        pts.push_back(triple[2]);
    }

    Vec times(steps + 1);
    for (int i = 0; i <= steps; ++i) times[i] = h * i;
    return DiscretePath(system, std::move(times), std::move(pts));
}

/**
 * Boundary momentum of the discrete action: the phase state at q0 whose
 * Hamiltonian evolution under the matching symplectic stepper reproduces the
 * node sequence started by (q0, q1). Requires a constant mass matrix.
 */
inline PhaseState discrete_legendre(const MechanicalSystem& system, const ManifoldPoint& q0,
                                    const ManifoldPoint& q1, double h) {
    if (!(h > 0.0)) throw InvalidInputError("discrete_legendre: step must be positive");
    if (!system.constant_mass_matrix)
        throw UnsupportedMethodError("discrete_legendre: requires a constant mass matrix");
    const ManifoldPoint a = canonicalize(q0);
    const ManifoldPoint b = canonicalize(q1);
    const Vec delta = chart_displacement(a, b);
    Vec p = system.mass(a) * delta / h + 0.5 * h * system.grad_potential(a);
    return PhaseState(a, std::move(p));
}

} // namespace geomech
