#pragma once

#include <cmath>
#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "geomech/manifold.hpp"

namespace geomech {

/**
 * A mechanical system: configuration manifold, mass matrix M(q) and potential
 * V(q). The same data induces the Lagrangian L = v'Mv/2 - V and the
 * Hamiltonian H = p'M^-1 p/2 + V.
 *
 * potential_gradient may be empty; grad_potential() then falls back to
 * chart-aware central differences. Systems with a configuration-independent
 * mass matrix carry a cached Cholesky factor.
 */
struct MechanicalSystem {
    Manifold manifold;
    std::string name;
    std::function<Mat(const ManifoldPoint&)> mass_matrix;
    std::function<double(const ManifoldPoint&)> potential;
    std::function<Vec(const ManifoldPoint&)> potential_gradient; // optional
    bool constant_mass_matrix = false;
    std::shared_ptr<const Eigen::LLT<Mat>> cached_mass_llt;

    Mat mass(const ManifoldPoint& q) const { return mass_matrix(q); }

    Vec apply_mass_inverse(const ManifoldPoint& q, const Vec& rhs) const {
        if (cached_mass_llt) return cached_mass_llt->solve(rhs);
        Eigen::LLT<Mat> llt(mass_matrix(q));
        if (llt.info() != Eigen::Success)
            throw NumericalError("system '" + name + "': mass matrix is not positive definite");
        return llt.solve(rhs);
    }

    Vec grad_potential(const ManifoldPoint& q) const {
        if (potential_gradient) return potential_gradient(q);
        return grad_fd(potential, q);
    }

    bool has_potential_gradient() const { return static_cast<bool>(potential_gradient); }
};

/// Named system plus its numeric parameters, as read from a config file.
struct SystemConfig {
    std::string name;
    std::map<std::string, double> parameters;

    bool operator==(const SystemConfig&) const = default;
};

namespace detail {

inline double require_param(const SystemConfig& c, const char* key) {
    auto it = c.parameters.find(key);
    if (it == c.parameters.end())
        throw ConfigError("system '" + c.name + "': missing parameter '" + key + "'");
    if (!std::isfinite(it->second))
        throw ConfigError("system '" + c.name + "': parameter '" + key + "' must be finite");
    return it->second;
}

inline double require_positive(const SystemConfig& c, const char* key) {
    const double v = require_param(c, key);
    if (!(v > 0.0))
        throw ConfigError("system '" + c.name + "': parameter '" + key + "' must be positive");
    return v;
}

inline double require_nonnegative(const SystemConfig& c, const char* key) {
    const double v = require_param(c, key);
    if (v < 0.0)
        throw ConfigError("system '" + c.name + "': parameter '" + key + "' must be nonnegative");
    return v;
}

inline void reject_unknown_params(const SystemConfig& c, std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : c.parameters) {
        bool known = false;
        for (const char* a : allowed)
            if (key == a) known = true;
        if (!known)
            throw ConfigError("system '" + c.name + "': unknown parameter '" + key + "'");
    }
}

inline MechanicalSystem with_cached_mass(MechanicalSystem s) {
    if (s.constant_mass_matrix) {
        auto llt = std::make_shared<Eigen::LLT<Mat>>(s.mass_matrix(origin_point(s.manifold)));
        if (llt->info() != Eigen::Success)
            throw ConfigError("system '" + s.name + "': mass matrix is not positive definite");
        s.cached_mass_llt = std::move(llt);
    }
    return s;
}

} // namespace detail

/**
 * Build a catalog system from its configuration.
 *
 *   free-particle      m              Euclidean(3), M = m I, V = 0
 *   harmonic-particle  m, k           Euclidean(3), M = m I, V = k|q|^2/2
 *   pendulum           m, l, g        circle, M = m l^2, V = m g l (1 - cos th)
 *   double-pendulum    m1,m2,l1,l2,g  circle x circle, planar, angles from the
 *                                     downward vertical, V = 0 at rest
 */
inline MechanicalSystem build_system(const SystemConfig& config) {
    const std::string& name = config.name;

    if (name == "free-particle") {
        detail::reject_unknown_params(config, {"m"});
        const double m = detail::require_positive(config, "m");
        MechanicalSystem s;
        s.manifold = Manifold::euclidean(3);
        s.name = name;
        s.mass_matrix = [m](const ManifoldPoint&) { return Mat(m * Mat::Identity(3, 3)); };
        s.potential = [](const ManifoldPoint&) { return 0.0; };
        s.potential_gradient = [](const ManifoldPoint&) { return Vec(Vec::Zero(3)); };
        s.constant_mass_matrix = true;
        return detail::with_cached_mass(std::move(s));
    }

    if (name == "harmonic-particle") {
        detail::reject_unknown_params(config, {"m", "k"});
        const double m = detail::require_positive(config, "m");
        const double k = detail::require_positive(config, "k");
        MechanicalSystem s;
        s.manifold = Manifold::euclidean(3);
        s.name = name;
        s.mass_matrix = [m](const ManifoldPoint&) { return Mat(m * Mat::Identity(3, 3)); };
        s.potential = [k](const ManifoldPoint& q) { return 0.5 * k * q.coords().squaredNorm(); };
        s.potential_gradient = [k](const ManifoldPoint& q) { return Vec(k * q.coords()); };
        s.constant_mass_matrix = true;
        return detail::with_cached_mass(std::move(s));
    }

    if (name == "pendulum") {
        detail::reject_unknown_params(config, {"m", "l", "g"});
        const double m = detail::require_positive(config, "m");
        const double l = detail::require_positive(config, "l");
        const double g = detail::require_nonnegative(config, "g");
        MechanicalSystem s;
        s.manifold = Manifold::circle();
        s.name = name;
        s.mass_matrix = [m, l](const ManifoldPoint&) {
            Mat M(1, 1);
            M(0, 0) = m * l * l;
            return M;
        };
        s.potential = [m, l, g](const ManifoldPoint& q) {
            return m * g * l * (1.0 - std::cos(q.coords()[0]));
        };
        s.potential_gradient = [m, l, g](const ManifoldPoint& q) {
            Vec grad(1);
            grad[0] = m * g * l * std::sin(q.coords()[0]);
            return grad;
        };
        s.constant_mass_matrix = true;
        return detail::with_cached_mass(std::move(s));
    }

    if (name == "double-pendulum") {
        detail::reject_unknown_params(config, {"m1", "m2", "l1", "l2", "g"});
        const double m1 = detail::require_positive(config, "m1");
        const double m2 = detail::require_positive(config, "m2");
        const double l1 = detail::require_positive(config, "l1");
        const double l2 = detail::require_positive(config, "l2");
        const double g = detail::require_nonnegative(config, "g");
        MechanicalSystem s;
        s.manifold = Manifold::product(Manifold::circle(), Manifold::circle());
        s.name = name;
        s.mass_matrix = [m1, m2, l1, l2](const ManifoldPoint& q) {
            const double th = q.coords()[0];
            const double ph = q.coords()[1];
            const double c = std::cos(th - ph);
            Mat M(2, 2);
            M(0, 0) = (m1 + m2) * l1 * l1;
            M(1, 1) = m2 * l2 * l2;
            M(0, 1) = M(1, 0) = m2 * l1 * l2 * c;
            return M;
        };
        s.potential = [m1, m2, l1, l2, g](const ManifoldPoint& q) {
            const double th = q.coords()[0];
            const double ph = q.coords()[1];
            return (m1 + m2) * g * l1 * (1.0 - std::cos(th)) + m2 * g * l2 * (1.0 - std::cos(ph));
        };
        s.potential_gradient = [m1, m2, l1, l2, g](const ManifoldPoint& q) {
            Vec grad(2);
            grad[0] = (m1 + m2) * g * l1 * std::sin(q.coords()[0]);
            grad[1] = m2 * g * l2 * std::sin(q.coords()[1]);
            return grad;
        };
        s.constant_mass_matrix = false;
        return s;
    }

    throw ConfigError("unknown system '" + name + "'");
}

struct CatalogEntry {
    std::string name;
    std::vector<std::string> parameters;
};

inline std::vector<CatalogEntry> system_catalog() {
    return {
        {"free-particle", {"m"}},
        {"harmonic-particle", {"m", "k"}},
        {"pendulum", {"m", "l", "g"}},
        {"double-pendulum", {"m1", "m2", "l1", "l2", "g"}},
    };
}

/// Small-angle pendulum period 2*pi*sqrt(l/g); the mass drops out.
inline double pendulum_small_period(double /*mass*/, double length, double gravity) {
    if (!(length > 0.0))
        throw InvalidInputError("pendulum_small_period: length must be positive");
    if (!(gravity > 0.0))
        throw InvalidInputError("pendulum_small_period: gravity must be positive");
    return kTwoPi * std::sqrt(length / gravity);
}

/**
 * Closed-form state of the isotropic harmonic oscillator at time t:
 *   q(t) = q0 cos(wt) + p0 sin(wt)/(m w),  p(t) = -m w q0 sin(wt) + p0 cos(wt)
 * with w = sqrt(k/m). Serves as the exact reference for integrator tests.
 */
inline PhaseState harmonic_reference(double mass, double stiffness, const Vec& q0, const Vec& p0,
                                     double t) {
    if (!(mass > 0.0)) throw InvalidInputError("harmonic_reference: mass must be positive");
    if (!(stiffness > 0.0)) throw InvalidInputError("harmonic_reference: stiffness must be positive");
    if (q0.size() != p0.size() || q0.size() < 1)
        throw InvalidInputError("harmonic_reference: q0 and p0 must have equal nonzero length");
    const double omega = std::sqrt(stiffness / mass);
    const double c = std::cos(omega * t);
    const double s = std::sin(omega * t);
    Vec q = c * q0 + (s / (mass * omega)) * p0;
    Vec p = -mass * omega * s * q0 + c * p0;
    return PhaseState(ManifoldPoint(Manifold::euclidean(static_cast<int>(q0.size())), std::move(q)),
                      std::move(p));
}

} // namespace geomech
