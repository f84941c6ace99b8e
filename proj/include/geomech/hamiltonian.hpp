#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "geomech/systems.hpp"

namespace geomech {

/**
 * The canonical block structure J = [[0, I], [-I, 0]] applied as a map:
 * (a, b) -> (b, -a). Never materialized as a matrix.
 */
struct SymplecticStructure {
    int half_dim;

    explicit SymplecticStructure(int n) : half_dim(n) {
        if (n < 1) throw InvalidInputError("SymplecticStructure: dimension must be positive");
    }

    std::pair<Vec, Vec> apply(const Vec& a, const Vec& b) const {
        if (a.size() != half_dim || b.size() != half_dim)
            throw InvalidInputError("SymplecticStructure: block size mismatch");
        return {b, Vec(-a)};
    }
};

/// Phase-space states sampled on a uniform time grid.
struct Trajectory {
    Vec times;
    std::vector<PhaseState> states;
    std::string method;
    double step = 0.0;
};

enum class Method { SymplecticEuler, Verlet, ImplicitMidpoint, Rk4Reference };

inline Method parse_method(const std::string& name) {
    if (name == "symplectic-euler") return Method::SymplecticEuler;
    if (name == "verlet") return Method::Verlet;
    if (name == "implicit-midpoint") return Method::ImplicitMidpoint;
    if (name == "rk4-reference") return Method::Rk4Reference;
    throw InvalidInputError("unknown integrator '" + name + "'");
}

inline std::string method_name(Method m) {
    switch (m) {
    case Method::SymplecticEuler: return "symplectic-euler";
    case Method::Verlet: return "verlet";
    case Method::ImplicitMidpoint: return "implicit-midpoint";
    case Method::Rk4Reference: return "rk4-reference";
    }
    throw InvalidInputError("corrupt integrator enum");
}

/// H(q, p) = p' M(q)^-1 p / 2 + V(q), the total energy.
inline double evaluate_hamiltonian(const MechanicalSystem& system, const PhaseState& s) {
    if (s.q.manifold() != system.manifold)
        throw InvalidInputError("evaluate_hamiltonian: state is not on the system manifold");
    const Vec vel = system.apply_mass_inverse(s.q, s.p);
    return 0.5 * s.p.dot(vel) + system.potential(s.q);
}

namespace detail {

/// dH/dq at fixed p: analytic where the kinetic term cannot depend on q,
/// otherwise chart-aware central differences of the full Hamiltonian.
inline Vec hamiltonian_position_gradient(const MechanicalSystem& system, const PhaseState& s) {
    if (system.constant_mass_matrix && system.has_potential_gradient())
        return system.potential_gradient(s.q);
    const Vec p = s.p;
    return grad_fd(
        [&](const ManifoldPoint& q) { return evaluate_hamiltonian(system, PhaseState(q, p)); },
        s.q);
}

/// dH/dp at fixed q by plain central differences (momentum space is linear).
inline Vec hamiltonian_momentum_gradient_fd(const MechanicalSystem& system, const PhaseState& s) {
    const double delta = 1e-5 * (1.0 + s.p.lpNorm<Eigen::Infinity>());
    Vec g(s.p.size());
    Vec p = s.p;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double saved = p[i];
        p[i] = saved + delta;
        const double fp = evaluate_hamiltonian(system, PhaseState(s.q, p));
        p[i] = saved - delta;
        const double fm = evaluate_hamiltonian(system, PhaseState(s.q, p));
        p[i] = saved;
        g[i] = (fp - fm) / (2.0 * delta);
    }
    return g;
}

} // namespace detail

/// The flow direction at a phase state: (q_dot, p_dot) = J dH.
struct PhaseDerivative {
    TangentValue q_dot;
    Vec p_dot;
};

inline PhaseDerivative hamiltonian_vector_field(const MechanicalSystem& system,
                                                const PhaseState& s) {
    Vec qdot = system.apply_mass_inverse(s.q, s.p);
    Vec pdot = -detail::hamiltonian_position_gradient(system, s);
    return PhaseDerivative{TangentValue(s.q, std::move(qdot)), std::move(pdot)};
}

/**
 * dH(X_H) evaluated as the pairing of the energy differential with the flow
 * direction; the two gradients cancel exactly, so the return value measures
 * only the numerical defect of the two evaluation routes.
 */
inline double directional_energy_change(const MechanicalSystem& system, const PhaseState& s) {
    const PhaseDerivative flow = hamiltonian_vector_field(system, s);
    Vec gq, gp;
    if (system.constant_mass_matrix && system.has_potential_gradient()) {
        gq = system.potential_gradient(s.q);
        gp = system.apply_mass_inverse(s.q, s.p);
    } else {
        gq = detail::hamiltonian_position_gradient(system, s);
        gp = detail::hamiltonian_momentum_gradient_fd(system, s);
    }
    return gq.dot(flow.q_dot.components()) + gp.dot(flow.p_dot);
}

/// Velocity to momentum: p = M(q) v.
inline PhaseState legendre(const MechanicalSystem& system, const ManifoldPoint& q,
                           const TangentValue& v) {
    if (q.manifold() != system.manifold)
        throw InvalidInputError("legendre: point is not on the system manifold");
    if (v.base() != q) throw InvalidInputError("legendre: velocity is not based at the given point");
    return PhaseState(q, Vec(system.mass(q) * v.components()));
}

/// Momentum to velocity: v = M(q)^-1 p.
inline TangentValue legendre_inverse(const MechanicalSystem& system, const PhaseState& s) {
    if (s.q.manifold() != system.manifold)
        throw InvalidInputError("legendre_inverse: state is not on the system manifold");
    return TangentValue(s.q, system.apply_mass_inverse(s.q, s.p));
}

namespace detail {

inline void require_constant_mass(const MechanicalSystem& system, const char* scheme) {
    if (!system.constant_mass_matrix)
        throw UnsupportedMethodError(std::string(scheme) +
                                     ": requires a configuration-independent mass matrix "
                                     "(system '" +
                                     system.name + "' does not have one)");
}

} // namespace detail

/// First-order kick-then-drift map for separable Hamiltonians.
inline PhaseState step_symplectic_euler(const MechanicalSystem& system, const PhaseState& s,
                                        double h) {
    if (!(h > 0.0)) throw InvalidInputError("step_symplectic_euler: step must be positive");
    detail::require_constant_mass(system, "symplectic-euler");
    Vec p_new = s.p - h * system.grad_potential(s.q);
    ManifoldPoint q_new = displace(s.q, Vec(h * system.apply_mass_inverse(s.q, p_new)));
    return PhaseState(std::move(q_new), std::move(p_new));
}

/// Second-order kick-drift-kick (Stormer-Verlet) for separable Hamiltonians.
inline PhaseState step_verlet(const MechanicalSystem& system, const PhaseState& s, double h) {
    if (!(h > 0.0)) throw InvalidInputError("step_verlet: step must be positive");
    detail::require_constant_mass(system, "verlet");
    Vec p_half = s.p - 0.5 * h * system.grad_potential(s.q);
    ManifoldPoint q_new = displace(s.q, Vec(h * system.apply_mass_inverse(s.q, p_half)));
    Vec p_new = p_half - 0.5 * h * system.grad_potential(q_new);
    return PhaseState(std::move(q_new), std::move(p_new));
}

/**
 * Implicit midpoint step z' = z + h X_H((z + z')/2), valid for any mass
 * matrix. Solved by plain fixed-point iteration from the explicit-Euler
 * predictor, with a damped finite-difference Newton fallback after twenty
 * non-contracting sweeps (or an outright blow-up). The accepted iterate
 * leaves the implicit equation with residual at most 1e-12 (in practice near
 * machine precision); otherwise ConvergenceError carries the best residual.
 */
inline PhaseState step_implicit_midpoint(const MechanicalSystem& system, const PhaseState& s,
                                         double h) {
    if (!(h > 0.0)) throw InvalidInputError("step_implicit_midpoint: step must be positive");
    const int d = system.manifold.dim();
    const double coord_scale =
        s.q.coords().size() > 0 ? s.q.coords().lpNorm<Eigen::Infinity>() : 0.0;
    const double scale = 1.0 + std::max(coord_scale, s.p.lpNorm<Eigen::Infinity>());
    const double target = 1e-15 * scale;
    const double accept = 1e-12 * scale;

    // Unknowns: u (chart increment of q) and w (new momentum).
    auto sweep = [&](const Vec& u, const Vec& w) {
        const PhaseState mid(displace(s.q, Vec(0.5 * u)), Vec(0.5 * (s.p + w)));
        const PhaseDerivative f = hamiltonian_vector_field(system, mid);
        return std::pair<Vec, Vec>(Vec(h * f.q_dot.components()), Vec(s.p + h * f.p_dot));
    };
    auto residual_of = [](const Vec& u, const Vec& w, const std::pair<Vec, Vec>& img) {
        return std::max((img.first - u).lpNorm<Eigen::Infinity>(),
                        (img.second - w).lpNorm<Eigen::Infinity>());
    };

    Vec u = Vec::Zero(d), w = s.p;
    {
        auto img = sweep(u, w); // explicit Euler predictor
        u = img.first;
        w = img.second;
    }

    Vec best_u = u, best_w = w;
    double best_res = std::numeric_limits<double>::infinity();
    double first_res = -1.0;
    int non_contracting = 0;
    bool use_newton = false;
    int evals = 1;

    while (evals < 100) {
        auto img = sweep(u, w);
        ++evals;
        double res = residual_of(u, w, img);
        if (first_res < 0.0) first_res = res;
        const bool improved = res < 0.9 * best_res;
        if (res < best_res) {
            best_res = res;
            best_u = u;
            best_w = w;
        }
        if (best_res <= target) break;

        if (!use_newton) {
            if (!std::isfinite(res) || res > 1e3 * first_res + 1.0) {
                use_newton = true;
                u = best_u;
                w = best_w;
                continue;
            }
            non_contracting = improved ? 0 : non_contracting + 1;
            if (non_contracting >= 20) {
                use_newton = true;
                u = best_u;
                w = best_w;
                continue;
            }
            u = img.first;
            w = img.second;
            continue;
        }

        // Newton on F(u, w) = (u, w) - sweep(u, w).
        Vec F(2 * d);
        F.head(d) = u - img.first;
        F.tail(d) = w - img.second;
        const double delta = 1e-7 * scale;
        Mat J(2 * d, 2 * d);
        for (int k = 0; k < 2 * d; ++k) {
            Vec up = u, wp = w, um = u, wm = w;
            if (k < d) {
                up[k] += delta;
                um[k] -= delta;
            } else {
                wp[k - d] += delta;
                wm[k - d] -= delta;
            }
            const auto ip = sweep(up, wp);
            const auto im = sweep(um, wm);
            evals += 2;
            Vec Fp(2 * d), Fm(2 * d);
            Fp.head(d) = up - ip.first;
            Fp.tail(d) = wp - ip.second;
            Fm.head(d) = um - im.first;
            Fm.tail(d) = wm - im.second;
            J.col(k) = (Fp - Fm) / (2.0 * delta);
        }
        Vec step = J.partialPivLu().solve(F);
        if (!step.allFinite())
            throw ConvergenceError("implicit midpoint: Newton breakdown", best_res);
        double alpha = 1.0;
        for (int halving = 0; halving <= 20; ++halving) {
            const Vec ut = u - alpha * step.head(d);
            const Vec wt = w - alpha * step.tail(d);
            const auto it = sweep(ut, wt);
            ++evals;
            const double rt = residual_of(ut, wt, it);
            if (rt < res || halving == 20) {
                u = ut;
                w = wt;
                break;
            }
            alpha *= 0.5;
        }
    }

    if (best_res <= accept) return PhaseState(displace(s.q, best_u), std::move(best_w));
    throw ConvergenceError("implicit midpoint step did not converge", best_res);
}

/// Classical fourth-order Runge-Kutta step. Not symplectic; serves as the
/// reference scheme the structure-preserving methods are compared against.
inline PhaseState step_rk4(const MechanicalSystem& system, const PhaseState& s, double h) {
    if (!(h > 0.0)) throw InvalidInputError("step_rk4: step must be positive");
    const PhaseDerivative k1 = hamiltonian_vector_field(system, s);
    const PhaseState z2(displace(s.q, Vec(0.5 * h * k1.q_dot.components())),
                        Vec(s.p + 0.5 * h * k1.p_dot));
    const PhaseDerivative k2 = hamiltonian_vector_field(system, z2);
    const PhaseState z3(displace(s.q, Vec(0.5 * h * k2.q_dot.components())),
                        Vec(s.p + 0.5 * h * k2.p_dot));
    const PhaseDerivative k3 = hamiltonian_vector_field(system, z3);
    const PhaseState z4(displace(s.q, Vec(h * k3.q_dot.components())), Vec(s.p + h * k3.p_dot));
    const PhaseDerivative k4 = hamiltonian_vector_field(system, z4);
    const Vec du = (h / 6.0) * (k1.q_dot.components() + 2.0 * k2.q_dot.components() +
                                2.0 * k3.q_dot.components() + k4.q_dot.components());
    const Vec dp = (h / 6.0) * (k1.p_dot + 2.0 * k2.p_dot + 2.0 * k3.p_dot + k4.p_dot);
    return PhaseState(displace(s.q, du), Vec(s.p + dp));
}

inline PhaseState step(const MechanicalSystem& system, const PhaseState& s, double h,
                       Method method) {
    switch (method) {
    case Method::SymplecticEuler: return step_symplectic_euler(system, s, h);
    case Method::Verlet: return step_verlet(system, s, h);
    case Method::ImplicitMidpoint: return step_implicit_midpoint(system, s, h);
    case Method::Rk4Reference: return step_rk4(system, s, h);
    }
    throw InvalidInputError("corrupt integrator enum");
}

/// March n_steps of the chosen scheme from s0; returns the n_steps+1 states.
inline Trajectory integrate(const MechanicalSystem& system, const PhaseState& s0, double h,
                            int n_steps, Method method) {
    if (n_steps < 0) throw InvalidInputError("integrate: negative step count");
    if (!(h > 0.0)) throw InvalidInputError("integrate: step must be positive");
    Trajectory traj;
    traj.method = method_name(method);
    traj.step = h;
    traj.times.resize(n_steps + 1);
    traj.states.reserve(n_steps + 1);
    traj.states.push_back(s0);
    for (int i = 0; i < n_steps; ++i) {
        traj.times[i] = h * i;
        try {
            traj.states.push_back(step(system, traj.states.back(), h, method));
        } catch (const ConvergenceError& e) {
            throw ConvergenceError("integrate: step " + std::to_string(i) + " failed: " + e.what(),
                                   e.residual());
        }
    }
    traj.times[n_steps] = h * n_steps;
    return traj;
}

} // namespace geomech
