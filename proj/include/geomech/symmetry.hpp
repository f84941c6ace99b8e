#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "geomech/hamiltonian.hpp"

namespace geomech {

/**
 * A one-parameter family of phase-space maps acting by the cotangent lift:
 * translations shift positions and leave momenta alone, rotations rotate both
 * blocks, and a phase rotation advances one circle angle.
 */
struct GroupAction {
    enum class Kind { Translation, Rotation, PhaseRotation };

    Kind kind;
    Eigen::Vector3d axis = Eigen::Vector3d::Zero(); ///< unit direction / rotation axis
    int circle_index = -1;                          ///< chart index of the circle angle

    static GroupAction translation(const Eigen::Vector3d& direction) {
        return unit_axis_action(Kind::Translation, direction);
    }

    static GroupAction rotation(const Eigen::Vector3d& rotation_axis) {
        return unit_axis_action(Kind::Rotation, rotation_axis);
    }

    static GroupAction phase_rotation(int circle_chart_index) {
        if (circle_chart_index < 0)
            throw InvalidInputError("GroupAction: circle index must be nonnegative");
        GroupAction a;
        a.kind = Kind::PhaseRotation;
        a.circle_index = circle_chart_index;
        return a;
    }

private:
    static GroupAction unit_axis_action(Kind kind, const Eigen::Vector3d& direction) {
        if (!direction.allFinite())
            throw InvalidInputError("GroupAction: direction must be finite");
        const double norm = direction.norm();
        if (!(norm > 0.0)) throw InvalidInputError("GroupAction: direction must be nonzero");
        GroupAction a;
        a.kind = kind;
        a.axis = direction / norm;
        return a;
    }
};

/// Conserved charge(s) of an action: one component per generator, three for
/// the full rotation family.
struct MomentumMapValue {
    Vec charge;
};

namespace detail {

inline void require_euclidean3(const Manifold& m, const char* what) {
    if (m != Manifold::euclidean(3))
        throw InvalidInputError(std::string(what) + ": requires the Euclidean(3) manifold");
}

inline int circle_storage_index(const Manifold& m, int chart_index, const char* what) {
    if (!m.is_circle_chart_index(chart_index))
        throw InvalidInputError(std::string(what) + ": chart component " +
                                std::to_string(chart_index) + " is not a circle angle");
    return m.chart_to_storage(chart_index);
}

} // namespace detail

/// Apply the action with parameter delta to a phase state.
inline PhaseState apply_action(const GroupAction& action, const PhaseState& s, double delta) {
    switch (action.kind) {
    case GroupAction::Kind::Translation: {
        detail::require_euclidean3(s.q.manifold(), "translation action");
        Vec q = s.q.coords() + delta * action.axis;
        return PhaseState(ManifoldPoint(s.q.manifold(), std::move(q)), s.p);
    }
    case GroupAction::Kind::Rotation: {
        detail::require_euclidean3(s.q.manifold(), "rotation action");
        const Eigen::Matrix3d R = Eigen::AngleAxisd(delta, action.axis).toRotationMatrix();
        Vec q = R * s.q.coords();
        Vec p = R * s.p;
        return PhaseState(ManifoldPoint(s.q.manifold(), std::move(q)), std::move(p));
    }
    case GroupAction::Kind::PhaseRotation: {
        const int idx =
            detail::circle_storage_index(s.q.manifold(), action.circle_index, "phase rotation");
        Vec q = s.q.coords();
        q[idx] += delta;
        return PhaseState(ManifoldPoint(s.q.manifold(), std::move(q)), s.p);
    }
    }
    throw InvalidInputError("corrupt group action");
}

/**
 * Noether charge of the action at a phase state: p.d for a translation along
 * d, the full angular momentum q x p for the rotation family, and the
 * conjugate momentum of the rotated angle for a phase rotation.
 */
inline MomentumMapValue momentum_map(const GroupAction& action, const PhaseState& s) {
    switch (action.kind) {
    case GroupAction::Kind::Translation: {
        detail::require_euclidean3(s.q.manifold(), "translation charge");
        Vec charge(1);
        charge[0] = s.p.dot(action.axis);
        return MomentumMapValue{std::move(charge)};
    }
    case GroupAction::Kind::Rotation: {
        detail::require_euclidean3(s.q.manifold(), "rotation charge");
        const Eigen::Vector3d q = s.q.coords();
        const Eigen::Vector3d p = s.p;
        return MomentumMapValue{Vec(q.cross(p))};
    }
    case GroupAction::Kind::PhaseRotation: {
        detail::circle_storage_index(s.q.manifold(), action.circle_index, "phase rotation charge");
        Vec charge(1);
        charge[0] = s.p[action.circle_index];
        return MomentumMapValue{std::move(charge)};
    }
    }
    throw InvalidInputError("corrupt group action");
}

/// Relative energy change under the action: |H(g_delta s) - H(s)| / (1 + |H|).
inline double check_invariance(const MechanicalSystem& system, const GroupAction& action,
                               const PhaseState& s, double delta) {
    if (!(delta > 0.0)) throw InvalidInputError("check_invariance: delta must be positive");
    const double h0 = evaluate_hamiltonian(system, s);
    const double h1 = evaluate_hamiltonian(system, apply_action(action, s, delta));
    return std::abs(h1 - h0) / (1.0 + std::abs(h0));
}

/// Invariance probe at one state over the standard parameter sweep.
inline bool is_invariant_at(const MechanicalSystem& system, const GroupAction& action,
                            const PhaseState& s) {
    for (double delta : {1e-3, 1e-2, 1e-1})
        if (check_invariance(system, action, s, delta) > 1e-10) return false;
    return true;
}

/// Largest excursion of the action's charge along a trajectory.
inline double noether_drift(const MechanicalSystem& system, const GroupAction& action,
                            const Trajectory& traj) {
    if (traj.states.empty()) throw InvalidInputError("noether_drift: empty trajectory");
    if (traj.states.front().q.manifold() != system.manifold)
        throw InvalidInputError("noether_drift: trajectory is not on the system manifold");
    const Vec mu0 = momentum_map(action, traj.states.front()).charge;
    double drift = 0.0;
    for (const PhaseState& s : traj.states)
        drift = std::max(drift, (momentum_map(action, s).charge - mu0).lpNorm<Eigen::Infinity>());
    return drift;
}

/// Body-frame angular momentum of a free rigid body with principal moments of
/// inertia; the reduced state of the spinning top.
struct BodyAngularMomentum {
    Eigen::Vector3d Pi;
    Eigen::Vector3d inertia;

    BodyAngularMomentum(const Eigen::Vector3d& Pi_in, const Eigen::Vector3d& inertia_in)
        : Pi(Pi_in), inertia(inertia_in) {
        if (!Pi.allFinite()) throw InvalidInputError("BodyAngularMomentum: Pi must be finite");
        for (int i = 0; i < 3; ++i)
            if (!(inertia[i] > 0.0) || !std::isfinite(inertia[i]))
                throw InvalidInputError("BodyAngularMomentum: inertia components must be positive");
    }
};

/// Reduced rigid-body dynamics: Pi_dot = Pi x Omega with Omega_k = Pi_k / i_k.
inline Eigen::Vector3d euler_top_rhs(const BodyAngularMomentum& b) {
    const Eigen::Vector3d omega = b.Pi.cwiseQuotient(b.inertia);
    return b.Pi.cross(omega);
}

/// Squared angular-momentum magnitude |Pi|^2, conserved by every choice of
/// inertia.
inline double casimir(const BodyAngularMomentum& b) { return b.Pi.squaredNorm(); }

/// Reduced kinetic energy (Pi_1^2/i_1 + Pi_2^2/i_2 + Pi_3^2/i_3) / 2.
inline double rotational_energy(const BodyAngularMomentum& b) {
    return 0.5 * b.Pi.cwiseQuotient(b.inertia).dot(b.Pi);
}

/**
 * Implicit-midpoint march of the reduced rigid-body equations. The midpoint
 * rule keeps both quadratic integrals (|Pi|^2 and the energy) to roundoff, so
 * the iteration is pushed to near machine precision.
 */
inline std::vector<Eigen::Vector3d> integrate_euler_top(const BodyAngularMomentum& b0, double h,
                                                        int n_steps) {
    if (!(h > 0.0)) throw InvalidInputError("integrate_euler_top: step must be positive");
    if (n_steps < 0) throw InvalidInputError("integrate_euler_top: negative step count");

    const Eigen::Vector3d inertia = b0.inertia;
    auto rhs = [&inertia](const Eigen::Vector3d& Pi) {
        return Eigen::Vector3d(Pi.cross(Pi.cwiseQuotient(inertia)));
    };

    std::vector<Eigen::Vector3d> out;
    out.reserve(n_steps + 1);
    out.push_back(b0.Pi);
    Eigen::Vector3d Pi = b0.Pi;

    for (int stepno = 0; stepno < n_steps; ++stepno) {
        const double target = 1e-16 * (1.0 + Pi.lpNorm<Eigen::Infinity>());
        Eigen::Vector3d next = Pi + h * rhs(Pi);
        Eigen::Vector3d best = next;
        double best_res = std::numeric_limits<double>::infinity();
        int stall = 0;
        bool converged = false;
        for (int it = 0; it < 100; ++it) {
            const Eigen::Vector3d image = Pi + h * rhs(0.5 * (Pi + next));
            const double res = (image - next).lpNorm<Eigen::Infinity>();
            next = image;
            if (res < best_res) {
                best_res = res;
                best = image;
                stall = 0;
            } else {
                ++stall;
            }
            if (res <= target) {
                best = image;
                converged = true;
                break;
            }
            if (stall >= 3) break; // at the floor of what the arithmetic allows
        }
        if (!converged && !(best_res <= 1e-12 * (1.0 + Pi.lpNorm<Eigen::Infinity>())))
            throw ConvergenceError(
                "integrate_euler_top: midpoint equation stalled at step " + std::to_string(stepno),
                best_res);
        Pi = best;
        out.push_back(Pi);
    }
    return out;
}

} // namespace geomech
