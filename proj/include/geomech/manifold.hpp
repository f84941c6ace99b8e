#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "geomech/errors.hpp"

namespace geomech {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Irreducible chart factors a configuration space is assembled from.
enum class FactorKind { Euclidean, Circle, Rotation3 };

namespace detail {

struct FactorSpan {
    FactorKind kind;
    int n;              ///< Euclidean dimension; 1 for Circle, 3 for Rotation3
    int chart_offset;   ///< first tangent/cotangent component of this factor
    int storage_offset; ///< first coordinate slot of this factor
};

inline int factor_chart_dim(const FactorSpan& f) { return f.n; }

inline int factor_storage_dim(const FactorSpan& f) {
    return f.kind == FactorKind::Rotation3 ? 4 : f.n;
}

/// Reduce an angle to [0, 2*pi). Bitwise idempotent: values already in range
/// pass through unchanged, and the rounding of y + 2*pi up to exactly 2*pi
/// is folded back to 0.
inline double wrap_angle(double x) {
    double y = std::fmod(x, kTwoPi);
    if (y < 0.0) y += kTwoPi;
    if (y >= kTwoPi) y -= kTwoPi;
    return y;
}

/// Signed angular difference in (-pi, pi]; an exact half-turn resolves to +pi.
inline double wrap_signed(double d) {
    double w = std::remainder(d, kTwoPi);
    if (w == -kPi) w = kPi;
    return w;
}

// Quaternions are stored (w, x, y, z).
inline Eigen::Vector4d quat_conjugate(const Eigen::Vector4d& q) {
    return {q[0], -q[1], -q[2], -q[3]};
}

inline Eigen::Vector4d quat_multiply(const Eigen::Vector4d& a, const Eigen::Vector4d& b) {
    const Eigen::Vector3d av = a.tail<3>();
    const Eigen::Vector3d bv = b.tail<3>();
    Eigen::Vector4d out;
    out[0] = a[0] * b[0] - av.dot(bv);
    out.tail<3>() = a[0] * bv + b[0] * av + av.cross(bv);
    return out;
}

/// exp: rotation vector -> unit quaternion.
inline Eigen::Vector4d quat_exp(const Eigen::Vector3d& u) {
    const double angle = u.norm();
    const double half = 0.5 * angle;
    // sin(angle/2)/angle, with the series limit 1/2 - angle^2/48 near zero
    const double s = angle < 1e-8 ? 0.5 - angle * angle / 48.0 : std::sin(half) / angle;
    Eigen::Vector4d q;
    q[0] = std::cos(half);
    q.tail<3>() = s * u;
    return q;
}

/// log: unit quaternion -> shortest rotation vector (norm <= pi).
inline Eigen::Vector3d quat_log(const Eigen::Vector4d& q_in) {
    Eigen::Vector4d q = q_in[0] < 0.0 ? Eigen::Vector4d(-q_in) : q_in;
    const double s = q.tail<3>().norm();
    if (s < 1e-12) return (2.0 / q[0]) * q.tail<3>();
    const double angle = 2.0 * std::atan2(s, q[0]);
    return (angle / s) * q.tail<3>();
}

inline void canonicalize_quaternion(Vec& coords, int offset) {
    Eigen::Vector4d q = coords.segment<4>(offset);
    const double n2 = q.squaredNorm();
    if (!(n2 > 0.0)) throw InvalidInputError("canonicalize: zero quaternion has no direction");
    if (std::abs(n2 - 1.0) > 1e-14) q /= std::sqrt(n2);
    for (int i = 0; i < 4; ++i) {
        if (q[i] != 0.0) {
            if (q[i] < 0.0) q = -q;
            break;
        }
    }
    coords.segment<4>(offset) = q;
}

inline bool same_coords(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) return false;
    for (Eigen::Index i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

} // namespace detail

/**
 * A configuration space built as a product of Euclidean factors, circles and
 * the rotation group SO(3).
 *
 * dim() counts chart (tangent) components. Rotation factors contribute three
 * chart components but store four coordinates (a unit quaternion), so
 * storage_size() >= dim(). Products are kept as flat factor lists, which makes
 * the product associative by construction. Config files name manifolds with
 * the strings "euclidean:<n>", "circle", "so3" and "product(<a>,<b>)".
 */
class Manifold {
public:
    /// Defaults to the real line.
    Manifold() : Manifold(std::vector<detail::FactorSpan>{{FactorKind::Euclidean, 1, 0, 0}}) {}

    static Manifold euclidean(int n) {
        if (n < 1) throw InvalidInputError("Manifold::euclidean: dimension must be at least 1");
        return Manifold({detail::FactorSpan{FactorKind::Euclidean, n, 0, 0}});
    }

    static Manifold circle() {
        return Manifold({detail::FactorSpan{FactorKind::Circle, 1, 0, 0}});
    }

    static Manifold rotation_group() {
        return Manifold({detail::FactorSpan{FactorKind::Rotation3, 3, 0, 0}});
    }

    static Manifold product(const Manifold& a, const Manifold& b) {
        std::vector<detail::FactorSpan> fs = a.factors_;
        fs.insert(fs.end(), b.factors_.begin(), b.factors_.end());
        return Manifold(std::move(fs));
    }

    int dim() const { return dim_; }
    int storage_size() const { return storage_; }
    const std::vector<detail::FactorSpan>& factors() const { return factors_; }

    bool operator==(const Manifold& other) const {
        if (factors_.size() != other.factors_.size()) return false;
        for (std::size_t i = 0; i < factors_.size(); ++i) {
            if (factors_[i].kind != other.factors_[i].kind || factors_[i].n != other.factors_[i].n)
                return false;
        }
        return true;
    }
    bool operator!=(const Manifold& other) const { return !(*this == other); }

    bool has_rotation_factor() const {
        for (const auto& f : factors_)
            if (f.kind == FactorKind::Rotation3) return true;
        return false;
    }

    /// True when chart component `chart_index` is the angle of a circle factor.
    bool is_circle_chart_index(int chart_index) const {
        for (const auto& f : factors_) {
            if (f.kind == FactorKind::Circle && f.chart_offset == chart_index) return true;
        }
        return false;
    }

    /// Storage slot of a circle/Euclidean chart component.
    int chart_to_storage(int chart_index) const {
        for (const auto& f : factors_) {
            const int rel = chart_index - f.chart_offset;
            if (rel < 0 || rel >= detail::factor_chart_dim(f)) continue;
            if (f.kind == FactorKind::Rotation3)
                throw InvalidInputError("chart_to_storage: rotation factors have no per-component slot");
            return f.storage_offset + rel;
        }
        throw InvalidInputError("chart_to_storage: chart index out of range");
    }

    std::string to_string() const {
        std::string out;
        for (std::size_t i = 0; i + 1 < factors_.size(); ++i)
            out += "product(" + factor_string(factors_[i]) + ",";
        out += factor_string(factors_.back());
        out.append(factors_.size() - 1, ')');
        return out;
    }

    static Manifold parse(const std::string& text) {
        std::size_t pos = 0;
        Manifold m = parse_expr(text, pos);
        skip_spaces(text, pos);
        if (pos != text.size())
            throw InvalidInputError("Manifold::parse: trailing characters in '" + text + "'");
        return m;
    }

private:
    explicit Manifold(std::vector<detail::FactorSpan> fs) : factors_(std::move(fs)) {
        int c = 0, s = 0;
        for (auto& f : factors_) {
            f.chart_offset = c;
            f.storage_offset = s;
            c += detail::factor_chart_dim(f);
            s += detail::factor_storage_dim(f);
        }
        dim_ = c;
        storage_ = s;
    }

    static std::string factor_string(const detail::FactorSpan& f) {
        switch (f.kind) {
        case FactorKind::Euclidean: return "euclidean:" + std::to_string(f.n);
        case FactorKind::Circle: return "circle";
        case FactorKind::Rotation3: return "so3";
        }
        throw InvalidInputError("corrupt manifold factor");
    }

    static void skip_spaces(const std::string& t, std::size_t& pos) {
        while (pos < t.size() && t[pos] == ' ') ++pos;
    }

    static bool consume(const std::string& t, std::size_t& pos, const char* token) {
        const std::size_t len = std::char_traits<char>::length(token);
        if (t.compare(pos, len, token) == 0) {
            pos += len;
            return true;
        }
        return false;
    }

    static Manifold parse_expr(const std::string& t, std::size_t& pos) {
        skip_spaces(t, pos);
        if (consume(t, pos, "product(")) {
            Manifold a = parse_expr(t, pos);
            skip_spaces(t, pos);
            if (pos >= t.size() || t[pos] != ',')
                throw InvalidInputError("Manifold::parse: expected ',' in '" + t + "'");
            ++pos;
            Manifold b = parse_expr(t, pos);
            skip_spaces(t, pos);
            if (pos >= t.size() || t[pos] != ')')
                throw InvalidInputError("Manifold::parse: expected ')' in '" + t + "'");
            ++pos;
            return product(a, b);
        }
        if (consume(t, pos, "euclidean:")) {
            std::size_t start = pos;
            while (pos < t.size() && std::isdigit(static_cast<unsigned char>(t[pos]))) ++pos;
            if (pos == start)
                throw InvalidInputError("Manifold::parse: missing dimension in '" + t + "'");
            return euclidean(std::stoi(t.substr(start, pos - start)));
        }
        if (consume(t, pos, "circle")) return circle();
        if (consume(t, pos, "so3")) return rotation_group();
        throw InvalidInputError("Manifold::parse: unrecognized manifold in '" + t + "'");
    }

    std::vector<detail::FactorSpan> factors_;
    int dim_ = 0;
    int storage_ = 0;
};

/// Coordinates of a configuration in a chart of its manifold.
class ManifoldPoint {
public:
    ManifoldPoint(Manifold manifold, Vec coords)
        : manifold_(std::move(manifold)), coords_(std::move(coords)) {
        if (coords_.size() != manifold_.storage_size())
            throw InvalidInputError("ManifoldPoint: got " + std::to_string(coords_.size()) +
                                    " coordinates, manifold stores " +
                                    std::to_string(manifold_.storage_size()));
    }

    const Manifold& manifold() const { return manifold_; }
    const Vec& coords() const { return coords_; }

    bool operator==(const ManifoldPoint& other) const {
        return manifold_ == other.manifold_ && detail::same_coords(coords_, other.coords_);
    }
    bool operator!=(const ManifoldPoint& other) const { return !(*this == other); }

private:
    Manifold manifold_;
    Vec coords_;
};

/// Zero configuration: all-zero chart coordinates, identity rotations.
inline ManifoldPoint origin_point(const Manifold& manifold) {
    Vec c = Vec::Zero(manifold.storage_size());
    for (const auto& f : manifold.factors())
        if (f.kind == FactorKind::Rotation3) c[f.storage_offset] = 1.0;
    return ManifoldPoint(manifold, std::move(c));
}

/// A tangent vector attached to a base configuration.
class TangentValue {
public:
    TangentValue(ManifoldPoint base, Vec components)
        : base_(std::move(base)), components_(std::move(components)) {
        if (components_.size() != base_.manifold().dim())
            throw InvalidInputError("TangentValue: got " + std::to_string(components_.size()) +
                                    " components, manifold dimension is " +
                                    std::to_string(base_.manifold().dim()));
    }
    const ManifoldPoint& base() const { return base_; }
    const Vec& components() const { return components_; }

private:
    ManifoldPoint base_;
    Vec components_;
};

/// A momentum covector attached to a base configuration.
class CotangentValue {
public:
    CotangentValue(ManifoldPoint base, Vec components)
        : base_(std::move(base)), components_(std::move(components)) {
        if (components_.size() != base_.manifold().dim())
            throw InvalidInputError("CotangentValue: got " + std::to_string(components_.size()) +
                                    " components, manifold dimension is " +
                                    std::to_string(base_.manifold().dim()));
    }
    const ManifoldPoint& base() const { return base_; }
    const Vec& components() const { return components_; }

private:
    ManifoldPoint base_;
    Vec components_;
};

/**
 * Reduce coordinates to the canonical chart representative: angles into
 * [0, 2*pi), quaternions normalized with the first nonzero component made
 * positive. Idempotent in exact bit patterns.
 */
inline ManifoldPoint canonicalize(const ManifoldPoint& point) {
    if (!point.coords().allFinite())
        throw InvalidInputError("canonicalize: coordinates must be finite");
    Vec y = point.coords();
    for (const auto& f : point.manifold().factors()) {
        switch (f.kind) {
        case FactorKind::Euclidean:
            break;
        case FactorKind::Circle:
            y[f.storage_offset] = detail::wrap_angle(y[f.storage_offset]);
            break;
        case FactorKind::Rotation3:
            detail::canonicalize_quaternion(y, f.storage_offset);
            break;
        }
    }
    return ManifoldPoint(point.manifold(), std::move(y));
}

/**
 * Shortest chart representative of b relative to a, per factor: plain
 * difference on Euclidean components, signed angle in (-pi, pi] on circles,
 * rotation vector of the relative rotation on SO(3). Length is dim().
 */
inline Vec chart_displacement(const ManifoldPoint& a, const ManifoldPoint& b) {
    if (a.manifold() != b.manifold())
        throw InvalidInputError("chart_displacement: points live on different manifolds");
    Vec out(a.manifold().dim());
    for (const auto& f : a.manifold().factors()) {
        switch (f.kind) {
        case FactorKind::Euclidean:
            out.segment(f.chart_offset, f.n) =
                b.coords().segment(f.storage_offset, f.n) - a.coords().segment(f.storage_offset, f.n);
            break;
        case FactorKind::Circle:
            out[f.chart_offset] = detail::wrap_signed(b.coords()[f.storage_offset] -
                                                      a.coords()[f.storage_offset]);
            break;
        case FactorKind::Rotation3: {
            const Eigen::Vector4d qa = a.coords().segment<4>(f.storage_offset);
            const Eigen::Vector4d qb = b.coords().segment<4>(f.storage_offset);
            out.segment<3>(f.chart_offset) =
                detail::quat_log(detail::quat_multiply(detail::quat_conjugate(qa), qb));
            break;
        }
        }
    }
    return out;
}

/// Move a point by a chart increment (coordinate addition, quaternion exp on
/// rotation factors) and canonicalize the result.
inline ManifoldPoint displace(const ManifoldPoint& point, const Vec& u) {
    if (u.size() != point.manifold().dim())
        throw InvalidInputError("displace: increment has wrong dimension");
    Vec y = point.coords();
    for (const auto& f : point.manifold().factors()) {
        switch (f.kind) {
        case FactorKind::Euclidean:
            y.segment(f.storage_offset, f.n) += u.segment(f.chart_offset, f.n);
            break;
        case FactorKind::Circle:
            y[f.storage_offset] = detail::wrap_angle(y[f.storage_offset] + u[f.chart_offset]);
            break;
        case FactorKind::Rotation3: {
            const Eigen::Vector4d q = y.segment<4>(f.storage_offset);
            y.segment<4>(f.storage_offset) =
                detail::quat_multiply(q, detail::quat_exp(u.segment<3>(f.chart_offset)));
            break;
        }
        }
    }
    return canonicalize(ManifoldPoint(point.manifold(), std::move(y)));
}

/// Shortest-arc midpoint: a displaced by half the displacement towards b.
inline ManifoldPoint chart_midpoint(const ManifoldPoint& a, const ManifoldPoint& b) {
    return displace(a, 0.5 * chart_displacement(a, b));
}

/// Natural pairing p(v) of a covector with a vector at the same base point.
inline double pair(const CotangentValue& p, const TangentValue& v) {
    if (p.base() != v.base())
        throw InvalidInputError("pair: covector and vector are attached to different points");
    return p.components().dot(v.components());
}

/// A point of the cotangent bundle: configuration plus momentum components.
struct PhaseState {
    ManifoldPoint q;
    Vec p;

    PhaseState(ManifoldPoint q_in, Vec p_in) : q(canonicalize(q_in)), p(std::move(p_in)) {
        if (p.size() != q.manifold().dim())
            throw InvalidInputError("PhaseState: momentum has wrong dimension");
    }

    CotangentValue momentum() const { return CotangentValue(q, p); }
};

/**
 * Chart-aware central-difference gradient of a scalar function of the
 * configuration. Step 1e-5 * (1 + max |coordinate|); circle components are
 * probed through wrapped displacements.
 */
template <typename F>
Vec grad_fd(F&& f, const ManifoldPoint& q) {
    const int d = q.manifold().dim();
    const double scale = q.coords().size() > 0 ? q.coords().lpNorm<Eigen::Infinity>() : 0.0;
    const double delta = 1e-5 * (1.0 + scale);
    Vec g(d);
    Vec e = Vec::Zero(d);
    for (int i = 0; i < d; ++i) {
        e[i] = delta;
        const double fp = f(displace(q, e));
        e[i] = -delta;
        const double fm = f(displace(q, e));
        e[i] = 0.0;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericalError("grad_fd: function returned a non-finite value");
        g[i] = (fp - fm) / (2.0 * delta);
    }
    return g;
}

} // namespace geomech
