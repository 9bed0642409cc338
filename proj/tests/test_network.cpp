#include "fixtures.hpp"
#include "gridsync/network.hpp"

#include <catch_amalgamated.hpp>

using namespace gridsync;
using fixtures::rel_err;

namespace {

Grid single_node(double r_s, double l_s, double g, double c) {
    Grid grid;
    grid.topology.n = 1;
    NodeParams p;
    p.r_s = r_s;
    p.l_s = l_s;
    p.g = g;
    p.c = c;
    p.i_r_star = 100.0;
    grid.nodes.push_back(p);
    return grid;
}

}  // namespace

TEST_CASE("single resistive node is a divider") {
    const auto maps = build_pi(single_node(1.0, 0.0, 1.0, 0.0));
    CHECK((maps.pi1 - 0.5 * Mat::Identity(2, 2)).norm() < 1e-14);
    CHECK((maps.pi2 - 0.5 * Mat::Identity(2, 2)).norm() < 1e-14);
    CHECK(maps.pi3.rows() == 0);
    CHECK((y_net_symmetric(maps) - 0.5 * Mat::Identity(2, 2)).norm() < 1e-14);
}

TEST_CASE("open-circuit stator gives a vanishing stator map") {
    Grid g = fixtures::triangle_grid();
    for (auto& p : g.nodes) {
        p.r_s = 1e9;
        p.l_s = 0.0;
    }
    CHECK(build_pi(g).pi1.norm() < 1e-8);
}

TEST_CASE("steady-state map matches a complex nodal phasor solve") {
    fixtures::Rng rng(2024);
    auto check_grid = [&](const Grid& g) {
        const auto maps = build_pi(g);
        const Vec xi = rng.vec(2 * g.n(), -300.0, 300.0);
        const auto ph = fixtures::phasor_solve(g, fixtures::to_phasors(xi));
        const SteadyState ss = steady_state(maps, xi);
        CHECK(rel_err(ss.i_s, fixtures::from_phasors(ph.i_s)) < 1e-9);
        CHECK(rel_err(ss.v, fixtures::from_phasors(ph.v)) < 1e-9);
        if (g.m()) CHECK(rel_err(ss.i_t, fixtures::from_phasors(ph.i_t)) < 1e-9);
    };
    check_grid(fixtures::triangle_grid());
    for (int trial = 0; trial < 100; ++trial) check_grid(fixtures::random_grid(rng, 1 + rng.index(6)));
}

TEST_CASE("signed stacking solves the outflow-convention steady-state rows") {
    fixtures::Rng rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        const Grid g = fixtures::random_grid(rng, 1 + rng.index(6));
        const auto maps = build_pi(g);
        const Vec xi = rng.vec(2 * g.n(), -1.0, 1.0);
        const Vec i = -maps.pi1 * xi, v = maps.pi2 * xi, it = maps.pi3 * xi;
        // -Z_s i + v = ξ;  -Y_c v - E i_t = i;  Z_t i_t = Eᵀ v
        CHECK((-maps.z_s * i + v - xi).norm() <= 1e-9 * xi.norm());
        CHECK((-maps.y_c * v - maps.e * it - i).norm() <= 1e-9 * std::max(1.0, i.norm()));
        if (g.m()) CHECK((maps.z_t * it - maps.e.transpose() * v).norm() <= 1e-9 * std::max(1.0, v.norm()));
        CHECK((maps.pi2 - Lu(Mat(maps.y_c + maps.cal_lt)).solve(maps.pi1)).norm() <= 1e-10 * maps.pi2.norm());
        CHECK(commutes_with_j(maps.pi1, 1e-10));
        CHECK(commutes_with_j(maps.pi2, 1e-10));
        for (int k = 0; k < g.n(); ++k) CHECK(maps.d_prime(k) >= g.nodes[k].d);
    }
}

TEST_CASE("effective admittance symmetric part") {
    Grid resistive = fixtures::triangle_grid();
    for (auto& p : resistive.nodes) {
        p.l_s = 0;
        p.c = 0;
    }
    for (auto& l : resistive.lines) l.l_t = 0;
    const auto rm = build_pi(resistive);
    CHECK(skew_part(rm.y_net).norm() < 1e-12);

    const auto maps = build_pi(fixtures::triangle_grid());
    const Mat s = y_net_symmetric(maps);
    Eigen::SelfAdjointEigenSolver<Mat> es(s);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("power balance equals total dissipation") {
    auto dissipation = [](const Grid& g, const SteadyState& ss) {
        double p = 0.0;
        for (int k = 0; k < g.n(); ++k) {
            p += g.nodes[k].r_s * ss.i_s.segment<2>(2 * k).squaredNorm();
            p += g.nodes[k].g * ss.v.segment<2>(2 * k).squaredNorm();
        }
        for (int k = 0; k < g.m(); ++k) p += g.lines[k].r_t * ss.i_t.segment<2>(2 * k).squaredNorm();
        return p;
    };
    const Grid g = fixtures::triangle_grid();
    const auto maps = build_pi(g);
    const Vec ts = fixtures::acceptance_theta_star();
    const double pb = steady_state_power_balance(maps, g, ts);
    CHECK(pb > 0.0);
    const SteadyState ss = steady_state(maps, emf(g, ts));
    CHECK(std::abs(pb - dissipation(g, ss)) <= 1e-6 * pb);
    const double direct = g.omega0 * electrical_torque(g, ts, ss.i_s).sum();
    CHECK(std::abs(pb - direct) <= 1e-9 * pb);

    // Symmetric ring, uniform excitation, identical angles.
    Grid ring;
    ring.topology.n = 4;
    ring.topology.edges = {{0, 1}, {1, 2}, {2, 3}, {3, 0}};
    for (int k = 0; k < 4; ++k) ring.nodes.push_back({1e4, 1e3, 0, 0.05, 1000, 0.1, 2e-4, 0.5, 1e-4});
    for (int k = 0; k < 4; ++k) ring.lines.push_back({0.1, 3e-3});
    const auto rmaps = build_pi(ring);
    const Vec same = Vec::Constant(4, 0.4);
    const SteadyState rss = steady_state(rmaps, emf(ring, same));
    CHECK(rss.i_t.norm() < 1e-9 * rss.i_s.norm());
    const double rpb = steady_state_power_balance(rmaps, ring, same);
    CHECK(std::abs(rpb - dissipation(ring, rss)) <= 1e-9 * rpb);

    Grid off = g;
    for (auto& p : off.nodes) p.i_r_star = 0;
    CHECK(steady_state_power_balance(build_pi(off), off, ts) == 0.0);
}

TEST_CASE("static-stator damping increment") {
    const Grid g = fixtures::triangle_grid();
    const auto maps = build_pi(g);
    for (int k = 0; k < 3; ++k) {
        const auto& p = g.nodes[k];
        const std::complex<double> zs(p.r_s, g.omega0 * p.l_s), yc(p.g, g.omega0 * p.c);
        const double a = p.l_m * p.i_r_star;
        // a² Re[(Z_s + Y_c⁻¹)⁻¹]
        const double want = p.d + a * a * (1.0 / (zs + 1.0 / yc)).real();
        CHECK(std::abs(maps.d_prime(k) - want) <= 1e-12 * want);
    }
}

TEST_CASE("effective voltage decomposition") {
    const Grid g = fixtures::triangle_grid();
    const auto maps = build_pi(g);
    const Vec ts = fixtures::acceptance_theta_star();
    const auto ev = effective_voltage_decomposition(maps, g, ts);
    Grid rebuilt = g;
    for (int k = 0; k < 3; ++k) rebuilt.nodes[k].i_r_star = ev.i_r_bar(k);
    const Vec v = maps.pi2 * emf(g, ts);
    CHECK((emf(rebuilt, ev.theta_bar) - v).norm() < 1e-10 * v.norm());

    // Single node: the angle shifts by the phase of the scalar stator map.
    const Grid one = single_node(0.2, 1e-3, 0.5, 1e-4);
    const auto om = build_pi(one);
    Vec t0(1);
    t0 << 0.3;
    const auto e1 = effective_voltage_decomposition(om, one, t0);
    const std::complex<double> zs(0.2, one.omega0 * 1e-3), yc(0.5, one.omega0 * 1e-4);
    const std::complex<double> p2 = 1.0 / (1.0 + zs * yc);
    CHECK(std::abs(wrap_angle(e1.theta_bar(0) - 0.3 - std::arg(p2))) < 1e-12);
    CHECK(std::abs(e1.i_r_bar(0) - 100.0 * std::abs(p2)) < 1e-9);

    Grid lone = single_node(0.2, 1e-3, 0.5, 1e-4);
    lone.nodes[0].i_r_star = 0.0;
    CHECK_THROWS_AS(effective_voltage_decomposition(build_pi(lone), lone, t0), Error);
}

TEST_CASE("topology validation") {
    Grid g = fixtures::triangle_grid();
    g.topology.comm.push_back({2, 0, 1.0});
    CHECK_THROWS_AS(build_pi(g), Error);
    g = fixtures::triangle_grid();
    g.lines[1].r_t = -0.1;
    try {
        build_pi(g);
        FAIL("expected validation error");
    } catch (const Error& e) {
        CHECK(e.category() == ErrorCategory::validation);
        CHECK(std::string(e.what()).find("edges[1].r_t_ohm") != std::string::npos);
    }
    g = fixtures::triangle_grid();
    g.topology.edges[0] = {1, 1};
    CHECK_THROWS_AS(build_pi(g), Error);
    const Mat e = fixtures::triangle_grid().topology.incidence();
    for (int c = 0; c < e.cols(); ++c) {
        CHECK(e.col(c).sum() == 0.0);
        CHECK(e.col(c).cwiseAbs().sum() == 2.0);
    }
}
