#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "geomech/hamiltonian.hpp"

using namespace geomech;

namespace {

Vec vec(std::initializer_list<double> xs) {
    Vec v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

MechanicalSystem free_particle(double m = 1.0) {
    return build_system(SystemConfig{"free-particle", {{"m", m}}});
}
MechanicalSystem harmonic(double m = 1.0, double k = 1.0) {
    return build_system(SystemConfig{"harmonic-particle", {{"m", m}, {"k", k}}});
}
MechanicalSystem pendulum(double m = 1.0, double l = 1.0, double g = 9.81) {
    return build_system(SystemConfig{"pendulum", {{"m", m}, {"l", l}, {"g", g}}});
}
MechanicalSystem double_pendulum() {
    return build_system(
        SystemConfig{"double-pendulum", {{"m1", 1}, {"m2", 1}, {"l1", 1}, {"l2", 1}, {"g", 9.81}}});
}

PhaseState state(const MechanicalSystem& s, std::initializer_list<double> q,
                 std::initializer_list<double> p) {
    return PhaseState(ManifoldPoint(s.manifold, vec(q)), vec(p));
}

PhaseState random_state(const MechanicalSystem& s, std::mt19937& rng) {
    std::uniform_real_distribution<double> real(-1.0, 1.0);
    std::uniform_real_distribution<double> angle(0.0, kTwoPi);
    Vec q(s.manifold.storage_size());
    for (const auto& f : s.manifold.factors()) {
        if (f.kind == FactorKind::Circle)
            q[f.storage_offset] = angle(rng);
        else
            for (int i = 0; i < detail::factor_storage_dim(f); ++i)
                q[f.storage_offset + i] = real(rng);
    }
    Vec p(s.manifold.dim());
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = real(rng);
    return PhaseState(canonicalize(ManifoldPoint(s.manifold, q)), p);
}

/// One-step Jacobian by central differences in all 2d phase directions.
template <typename StepFn>
Mat step_jacobian(const MechanicalSystem& system, const PhaseState& s, StepFn&& do_step) {
    const int d = system.manifold.dim();
    Mat D(2 * d, 2 * d);
    const double delta = 1e-6;
    for (int k = 0; k < 2 * d; ++k) {
        Vec uq = Vec::Zero(d);
        Vec up = s.p;
        Vec mq = Vec::Zero(d);
        Vec mp = s.p;
        if (k < d) {
            uq[k] = delta;
            mq[k] = -delta;
        } else {
            up[k - d] += delta;
            mp[k - d] -= delta;
        }
        const PhaseState zp = do_step(PhaseState(displace(s.q, uq), up));
        const PhaseState zm = do_step(PhaseState(displace(s.q, mq), mp));
        const Vec dq = chart_displacement(zm.q, zp.q);
        const Vec dp = zp.p - zm.p;
        for (int r = 0; r < d; ++r) {
            D(r, k) = dq[r] / (2.0 * delta);
            D(d + r, k) = dp[r] / (2.0 * delta);
        }
    }
    return D;
}

double symplectic_defect(const Mat& D) {
    const int d2 = static_cast<int>(D.rows());
    const int d = d2 / 2;
    Mat J = Mat::Zero(d2, d2);
    J.block(0, d, d, d) = Mat::Identity(d, d);
    J.block(d, 0, d, d) = -Mat::Identity(d, d);
    return (D.transpose() * J * D - J).lpNorm<Eigen::Infinity>();
}

} // namespace

TEST_CASE("the symplectic block map", "[hamiltonian]") {
    const SymplecticStructure J(3);
    const Vec a = vec({1, 2, 3});
    const Vec b = vec({-1, 0, 5});
    const auto [x, y] = J.apply(a, b);
    CHECK(x == b);
    CHECK(y == Vec(-a));
    // applying twice negates: J^2 = -identity
    const auto [x2, y2] = J.apply(x, y);
    CHECK(x2 == Vec(-a));
    CHECK(y2 == Vec(-b));
    CHECK_THROWS_AS(J.apply(vec({1, 2}), b), InvalidInputError);
}

TEST_CASE("hamiltonian evaluation", "[hamiltonian]") {
    const MechanicalSystem harm = harmonic();
    CHECK(evaluate_hamiltonian(harm, state(harm, {1, 0, 0}, {0, 0, 0})) == Catch::Approx(0.5));
    CHECK(evaluate_hamiltonian(harm, state(harm, {0, 0, 0}, {0, 0, 0})) == 0.0);

    const MechanicalSystem pend = pendulum();
    CHECK(evaluate_hamiltonian(pend, state(pend, {0}, {1})) == Catch::Approx(0.5));
}

TEST_CASE("hamiltonian vector field", "[hamiltonian]") {
    const MechanicalSystem harm = harmonic();
    const PhaseDerivative at_q = hamiltonian_vector_field(harm, state(harm, {1, 0, 0}, {0, 0, 0}));
    CHECK(at_q.q_dot.components().lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((at_q.p_dot - vec({-1, 0, 0})).lpNorm<Eigen::Infinity>() < 1e-14);

    const PhaseDerivative origin = hamiltonian_vector_field(harm, state(harm, {0, 0, 0}, {0, 0, 0}));
    CHECK(origin.q_dot.components().lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(origin.p_dot.lpNorm<Eigen::Infinity>() == 0.0);

    const MechanicalSystem pend = pendulum();
    const PhaseDerivative side = hamiltonian_vector_field(pend, state(pend, {kPi / 2}, {0}));
    CHECK(side.q_dot.components()[0] == 0.0);
    CHECK(side.p_dot[0] == Catch::Approx(-9.81).margin(1e-12));
}

TEST_CASE("the flow direction is J applied to the energy differential", "[hamiltonian]") {
    std::mt19937 rng(61);
    for (const MechanicalSystem& system : {harmonic(1.4, 2.2), pendulum(), double_pendulum()}) {
        const SymplecticStructure J(system.manifold.dim());
        for (int trial = 0; trial < 20; ++trial) {
            const PhaseState s = random_state(system, rng);
            // independent finite differences of H in both blocks
            const Vec p = s.p;
            const Vec gq = grad_fd(
                [&](const ManifoldPoint& q) { return evaluate_hamiltonian(system, PhaseState(q, p)); },
                s.q);
            Vec gp(p.size());
            const double delta = 1e-6;
            for (Eigen::Index i = 0; i < p.size(); ++i) {
                Vec pp = p, pm = p;
                pp[i] += delta;
                pm[i] -= delta;
                gp[i] = (evaluate_hamiltonian(system, PhaseState(s.q, pp)) -
                         evaluate_hamiltonian(system, PhaseState(s.q, pm))) /
                        (2.0 * delta);
            }
            const auto [jq, jp] = J.apply(gq, gp);
            const PhaseDerivative flow = hamiltonian_vector_field(system, s);
            CHECK((flow.q_dot.components() - jq).lpNorm<Eigen::Infinity>() < 1e-6);
            CHECK((flow.p_dot - jp).lpNorm<Eigen::Infinity>() < 1e-6);
        }
    }
}

TEST_CASE("energy is stationary along the flow direction", "[hamiltonian]") {
    const MechanicalSystem harm = harmonic();
    CHECK(std::abs(directional_energy_change(harm, state(harm, {1, 0, 0}, {0, 1, 0}))) <= 1e-12);
    CHECK(directional_energy_change(harm, state(harm, {0, 0, 0}, {0, 0, 0})) == 0.0);

    std::mt19937 rng(71);
    const MechanicalSystem dp = double_pendulum();
    for (int trial = 0; trial < 100; ++trial)
        CHECK(std::abs(directional_energy_change(dp, random_state(dp, rng))) <= 1e-8);
}

TEST_CASE("energy change vanishes at 1000 random states of every catalog system",
          "[hamiltonian]") {
    std::mt19937 rng(83);
    for (const MechanicalSystem& system :
         {free_particle(1.7), harmonic(), pendulum(), double_pendulum()}) {
        for (int trial = 0; trial < 250; ++trial)
            CHECK(std::abs(directional_energy_change(system, random_state(system, rng))) <= 1e-8);
    }
}

TEST_CASE("legendre transform and its inverse", "[hamiltonian]") {
    const MechanicalSystem fp = free_particle(3.0);
    const ManifoldPoint q(fp.manifold, vec({0, 0, 0}));
    const PhaseState lifted = legendre(fp, q, TangentValue(q, vec({0, 1, 0})));
    CHECK((lifted.p - vec({0, 3, 0})).lpNorm<Eigen::Infinity>() == 0.0);

    CHECK(legendre(fp, q, TangentValue(q, vec({0, 0, 0}))).p.lpNorm<Eigen::Infinity>() == 0.0);

    const MechanicalSystem dp = double_pendulum();
    const ManifoldPoint hang(dp.manifold, vec({0, 0}));
    const PhaseState dpl = legendre(dp, hang, TangentValue(hang, vec({1, 0})));
    CHECK(dpl.p[0] == Catch::Approx(2.0));
    CHECK(dpl.p[1] == Catch::Approx(1.0));

    const MechanicalSystem fp2 = free_particle(2.0);
    const TangentValue v =
        legendre_inverse(fp2, state(fp2, {0, 0, 0}, {4, 0, 0}));
    CHECK((v.components() - vec({2, 0, 0})).lpNorm<Eigen::Infinity>() < 1e-14);

    std::mt19937 rng(91);
    for (int trial = 0; trial < 100; ++trial) {
        const PhaseState s = random_state(dp, rng);
        const PhaseState back = legendre(dp, s.q, legendre_inverse(dp, s));
        CHECK((back.p - s.p).lpNorm<Eigen::Infinity>() < 1e-12);
    }
}

TEST_CASE("one-step maps against hand values", "[hamiltonian]") {
    const MechanicalSystem harm = harmonic();

    // first-order kick-drift on (q,p) = (1,0), h = 0.1
    const PhaseState se = step_symplectic_euler(harm, state(harm, {1, 0, 0}, {0, 0, 0}), 0.1);
    CHECK(se.q.coords()[0] == Catch::Approx(0.99).margin(1e-15));
    CHECK(se.p[0] == Catch::Approx(-0.1).margin(1e-15));

    // free drift
    const MechanicalSystem fp = free_particle();
    const PhaseState drift = step_symplectic_euler(fp, state(fp, {0, 0, 0}, {1, 0, 0}), 0.5);
    CHECK(drift.q.coords()[0] == Catch::Approx(0.5).margin(1e-15));
    CHECK(drift.p[0] == 1.0);

    // leapfrog: p_half = -0.05, q' = 0.995, p' = -0.05 - 0.05*0.995
    const PhaseState vl = step_verlet(harm, state(harm, {1, 0, 0}, {0, 0, 0}), 0.1);
    CHECK(vl.q.coords()[0] == Catch::Approx(0.995).margin(1e-15));
    CHECK(vl.p[0] == Catch::Approx(-0.09975).margin(1e-15));

    // fixed points stay fixed
    for (auto stepper : {&step_symplectic_euler, &step_verlet, &step_implicit_midpoint}) {
        const PhaseState fixed = stepper(harm, state(harm, {0, 0, 0}, {0, 0, 0}), 0.1);
        CHECK(fixed.q.coords().lpNorm<Eigen::Infinity>() == 0.0);
        CHECK(fixed.p.lpNorm<Eigen::Infinity>() == 0.0);
    }

    // midpoint equals the rational form (I - hA/2)^-1 (I + hA/2) on the
    // linear oscillator
    const double h = 0.1;
    Mat A(2, 2);
    A << 0, 1, -1, 0;
    const Mat map = (Mat::Identity(2, 2) - 0.5 * h * A).partialPivLu().solve(
        Mat(Mat::Identity(2, 2) + 0.5 * h * A));
    const Vec expect = map * vec({1, 0});
    const PhaseState im = step_implicit_midpoint(harm, state(harm, {1, 0, 0}, {0, 0, 0}), h);
    CHECK(im.q.coords()[0] == Catch::Approx(expect[0]).margin(1e-12));
    CHECK(im.p[0] == Catch::Approx(expect[1]).margin(1e-12));
}

TEST_CASE("leapfrog is time reversible", "[hamiltonian]") {
    const MechanicalSystem pend = pendulum();
    const PhaseState s0 = state(pend, {0.7}, {0.4});
    const double h = 0.05;
    PhaseState fwd = step_verlet(pend, s0, h);
    PhaseState flipped(fwd.q, Vec(-fwd.p));
    PhaseState back = step_verlet(pend, flipped, h);
    CHECK(std::abs(detail::wrap_signed(back.q.coords()[0] - s0.q.coords()[0])) < 1e-12);
    CHECK(std::abs(-back.p[0] - s0.p[0]) < 1e-12);
}

TEST_CASE("separable-only steppers reject a configuration-dependent mass matrix",
          "[hamiltonian]") {
    const MechanicalSystem dp = double_pendulum();
    const PhaseState s = state(dp, {0.3, -0.2}, {0.1, 0.0});
    CHECK_THROWS_AS(step_symplectic_euler(dp, s, 0.01), UnsupportedMethodError);
    CHECK_THROWS_AS(step_verlet(dp, s, 0.01), UnsupportedMethodError);
    CHECK_NOTHROW(step_implicit_midpoint(dp, s, 0.01));
}

TEST_CASE("implicit midpoint leaves a tiny residual in the step equation", "[hamiltonian]") {
    const MechanicalSystem dp = double_pendulum();
    std::mt19937 rng(97);
    for (int trial = 0; trial < 10; ++trial) {
        const PhaseState s = random_state(dp, rng);
        const double h = 1e-3;
        const PhaseState next = step_implicit_midpoint(dp, s, h);
        const PhaseState mid(chart_midpoint(s.q, next.q), Vec(0.5 * (s.p + next.p)));
        const PhaseDerivative f = hamiltonian_vector_field(dp, mid);
        const Vec q_res = chart_displacement(displace(s.q, Vec(h * f.q_dot.components())), next.q);
        const Vec p_res = next.p - s.p - h * f.p_dot;
        CHECK(q_res.lpNorm<Eigen::Infinity>() <= 1e-12);
        CHECK(p_res.lpNorm<Eigen::Infinity>() <= 1e-12);
    }
}

TEST_CASE("trajectories and the reference integrator", "[hamiltonian]") {
    const MechanicalSystem harm = harmonic();

    // zero steps: only the initial state
    const Trajectory trivial = integrate(harm, state(harm, {1, 0, 0}, {0, 0, 0}), 0.1, 0,
                                         Method::Verlet);
    CHECK(trivial.states.size() == 1);

    // the reference scheme tracks the closed form to roundoff level
    const Vec q0 = vec({1, 0, 0});
    const Vec p0 = vec({0, 0.5, 0});
    const int n = 100000;
    const double h = 1e-4; // T = 10
    const Trajectory rk = integrate(harm, PhaseState(ManifoldPoint(harm.manifold, q0), p0), h, n,
                                    Method::Rk4Reference);
    double err = 0.0;
    for (int i = 0; i <= n; i += 25) {
        const PhaseState ref = harmonic_reference(1.0, 1.0, q0, p0, rk.times[i]);
        err = std::max(err, (rk.states[i].q.coords() - ref.q.coords()).lpNorm<Eigen::Infinity>());
    }
    CHECK(err <= 1e-10);

    CHECK(parse_method("verlet") == Method::Verlet);
    CHECK(method_name(Method::Rk4Reference) == "rk4-reference");
    CHECK_THROWS_AS(parse_method("euler"), InvalidInputError);
}

TEST_CASE("orders of accuracy against the closed form", "[hamiltonian]") {
    const MechanicalSystem harm = harmonic();
    const Vec q0 = vec({1, 0, 0});
    const Vec p0 = vec({0, 0.5, 0});
    auto max_err = [&](Method m, double h) {
        const int n = static_cast<int>(std::lround(10.0 / h)); // T = 10
        PhaseState s(ManifoldPoint(harm.manifold, q0), p0);
        double err = 0.0;
        for (int i = 1; i <= n; ++i) {
            s = step(harm, s, h, m);
            const PhaseState ref = harmonic_reference(1, 1, q0, p0, h * i);
            err = std::max(err, (s.q.coords() - ref.q.coords()).lpNorm<Eigen::Infinity>());
        }
        return err;
    };
    // halving the step halves a first-order error and quarters a second-order one
    const double se = max_err(Method::SymplecticEuler, 2e-3) / max_err(Method::SymplecticEuler, 1e-3);
    CHECK(se > 1.8);
    CHECK(se < 2.2);
    for (Method m : {Method::Verlet, Method::ImplicitMidpoint}) {
        const double ratio = max_err(m, 2e-3) / max_err(m, 1e-3);
        CHECK(ratio > 3.6);
        CHECK(ratio < 4.4);
    }
}

TEST_CASE("long verlet run returns near the start after many periods", "[hamiltonian]") {
    const MechanicalSystem harm = harmonic();
    const PhaseState s0 = state(harm, {1, 0, 0}, {0, 0, 0});
    const Trajectory traj = integrate(harm, s0, 0.01, 62832, Method::Verlet); // t = 200 pi
    const PhaseState& last = traj.states.back();
    CHECK((last.q.coords() - s0.q.coords()).lpNorm<Eigen::Infinity>() < 0.05);
    CHECK((last.p - s0.p).lpNorm<Eigen::Infinity>() < 0.05);
}

TEST_CASE("one-step maps are symplectic, the reference one is not", "[hamiltonian]") {
    const MechanicalSystem pend = pendulum();
    const PhaseState sp = state(pend, {0.7}, {0.3});
    const MechanicalSystem harm = harmonic();
    const PhaseState sh = state(harm, {0.6, -0.3, 0.2}, {0.1, 0.4, -0.2});
    const double h = 0.1;

    for (Method m : {Method::SymplecticEuler, Method::Verlet, Method::ImplicitMidpoint}) {
        const double dp = symplectic_defect(step_jacobian(
            pend, sp, [&](const PhaseState& z) { return step(pend, z, h, m); }));
        CHECK(dp <= 1e-6);
        const double dh = symplectic_defect(step_jacobian(
            harm, sh, [&](const PhaseState& z) { return step(harm, z, h, m); }));
        CHECK(dh <= 1e-6);
    }
    const double dref = symplectic_defect(step_jacobian(
        pend, sp, [&](const PhaseState& z) { return step(pend, z, h, Method::Rk4Reference); }));
    CHECK(dref > 1e-6);
}

TEST_CASE("energy stays bounded over a long leapfrog horizon", "[hamiltonian]") {
    const MechanicalSystem harm = harmonic();
    const PhaseState s0 = state(harm, {1, 0, 0}, {0, 0, 0});
    const double H0 = evaluate_hamiltonian(harm, s0);
    PhaseState s = s0;
    double drift = 0.0;
    for (int i = 0; i < 10000; ++i) { // t = 100
        s = step_verlet(harm, s, 0.01);
        drift = std::max(drift, std::abs(evaluate_hamiltonian(harm, s) - H0));
    }
    CHECK(drift / std::abs(H0) < 5e-4);
}

TEST_CASE("chart-aware finite-difference gradient", "[hamiltonian]") {
    const Manifold e3 = Manifold::euclidean(3);
    const ManifoldPoint q(e3, vec({1, 2, 0}));
    const Vec g = grad_fd([](const ManifoldPoint& x) { return 0.5 * x.coords().squaredNorm(); }, q);
    CHECK((g - vec({1, 2, 0})).lpNorm<Eigen::Infinity>() < 1e-9);

    const Vec zero = grad_fd([](const ManifoldPoint&) { return 3.5; }, q);
    CHECK(zero.lpNorm<Eigen::Infinity>() < 1e-10);

    const MechanicalSystem pend = pendulum();
    const ManifoldPoint th(pend.manifold, vec({0.3}));
    const Vec gv = grad_fd([&](const ManifoldPoint& x) { return pend.potential(x); }, th);
    CHECK(gv[0] == Catch::Approx(9.81 * std::sin(0.3)).margin(1e-8));

    CHECK_THROWS_AS(
        grad_fd([](const ManifoldPoint&) { return std::numeric_limits<double>::quiet_NaN(); }, q),
        NumericalError);
}
