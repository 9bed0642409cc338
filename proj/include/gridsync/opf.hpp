#pragma once

#include "gridsync/dynamics.hpp"

#include <string>

namespace gridsync {

/// Network-level set-points. p_star/q_star are the powers each node injects into the lines.
struct OpfSetpoint {
    Vec p_star, q_star, v_mag_star;
    Vec rho;  ///< per edge, atan(ω₀l/r); empty means taken from the lines
    double eta = 1.0;
    double alpha = 10.0;
};

/// Local machine references and the steady quantities they induce.
struct LocalReferences {
    Vec i_r_star, theta_star;
    Vec xi_star, v_star, i_s_star, i_t_star;
};

/// Per-edge sending-end flows, per-node injections into the lines and bus magnitudes.
struct NetworkFlows {
    Vec edge_p, edge_q;
    Vec node_p, node_q;
    Vec v_mag;
};

/// atan(ω₀ l/r) of every line.
inline Vec line_angles(const Grid& g) {
    Vec rho(g.m());
    for (int e = 0; e < g.m(); ++e) rho(e) = std::atan2(g.omega0 * g.lines[e].l_t, g.lines[e].r_t);
    return rho;
}

namespace detail {

inline double common_line_angle(const OpfSetpoint& sp, const Grid& g) {
    if (!uniform_line_ratio(g)) fail(ErrorCategory::validation, "OPF translation requires a uniform R_t/L_t ratio");
    const Vec rho = line_angles(g);
    if (sp.rho.size()) {
        require(sp.rho.size() == g.m(), "rho: expected one angle per edge");
        for (int e = 0; e < g.m(); ++e)
            if (std::abs(sp.rho(e) - rho(e)) > 1e-9)
                fail(ErrorCategory::validation, "rho[" + std::to_string(e) + "] does not match the line parameters");
    }
    return rho(0);
}

inline void check_setpoint(const OpfSetpoint& sp, int n) {
    require(sp.p_star.size() == n, "p_star: expected one value per node");
    require(sp.q_star.size() == n, "q_star: expected one value per node");
    require(sp.v_mag_star.size() == n, "v_mag_star: expected one value per node");
    for (int k = 0; k < n; ++k)
        if (!(sp.v_mag_star(k) > 0.0))
            fail(ErrorCategory::validation, "v_mag_star[" + std::to_string(k) + "] must be positive");
}

}  // namespace detail

/// (B diag(1/|z|) Bᵀ) ⊗ I₂, the line Laplacian seen through R(ρ).
inline Mat opf_line_laplacian(const Grid& g) {
    Vec w(g.m());
    for (int e = 0; e < g.m(); ++e) w(e) = 1.0 / std::hypot(g.lines[e].r_t, g.omega0 * g.lines[e].l_t);
    const Mat b = g.topology.incidence();
    return kron_i2(b * w.asDiagonal() * b.transpose());
}

/// 𝒦 = blockdiag((1/v*²) R(ρ) [[p, q], [−q, p]]).
inline Mat opf_gain(const OpfSetpoint& sp, const Grid& g) {
    const int n = g.n();
    detail::check_setpoint(sp, n);
    const Eigen::Matrix2d r = rot2(detail::common_line_angle(sp, g));
    Mat k = Mat::Zero(2 * n, 2 * n);
    for (int i = 0; i < n; ++i) {
        Eigen::Matrix2d pq;
        pq << sp.p_star(i), sp.q_star(i), -sp.q_star(i), sp.p_star(i);
        k.block<2, 2>(2 * i, 2 * i) = r * pq / (sp.v_mag_star(i) * sp.v_mag_star(i));
    }
    return k;
}

/// v̇ = ω₀𝒋v + η(𝒦 − 𝓛)v + αΦ(v)v.
inline Vec explicit_opf_field(const Vec& v, const OpfSetpoint& sp, const Grid& g) {
    const int n = g.n();
    require(v.size() == 2 * n, "v: expected 2n entries");
    const Mat k = opf_gain(sp, g);
    Vec out = g.omega0 * j_blocks(n) * v + sp.eta * (k - opf_line_laplacian(g)) * v;
    for (int i = 0; i < n; ++i) {
        const double phi = (sp.v_mag_star(i) - v.segment<2>(2 * i).norm()) / sp.v_mag_star(i);
        out.segment<2>(2 * i) += sp.alpha * phi * v.segment<2>(2 * i);
    }
    return out;
}

/// Steady bus voltages in ker(𝒦 − 𝓛), with node 0 on the positive real axis at |v₀| = v₀*.
inline Vec kernel_setpoint(const OpfSetpoint& sp, const Grid& g) {
    const int n = g.n();
    const Mat a = opf_gain(sp, g) - opf_line_laplacian(g);
    const Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeFullV);
    const Vec s = svd.singularValues();
    const double cut = 1e-8 * s(0);
    int null = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) null += s(i) < cut;
    if (null != 2)
        fail(ErrorCategory::validation, "OPF set-points are inconsistent: kernel dimension is " + std::to_string(null) +
                                            ", expected 2");
    Vec u = svd.matrixV().col(2 * n - 1);
    const Eigen::Vector2d u0 = u.segment<2>(0);
    if (u0.norm() < 1e-12 * u.norm()) fail(ErrorCategory::singular, "kernel vector vanishes at the reference node");
    const Eigen::Matrix2d back = rot2(-std::atan2(u0(1), u0(0))) * (sp.v_mag_star(0) / u0.norm());
    for (int i = 0; i < n; ++i) u.segment<2>(2 * i) = back * u.segment<2>(2 * i);
    for (int i = 0; i < n; ++i) {
        const double mag = u.segment<2>(2 * i).norm();
        if (std::abs(mag - sp.v_mag_star(i)) > 0.01 * sp.v_mag_star(i))
            fail(ErrorCategory::validation, "kernel magnitude at node " + std::to_string(i) + " is " +
                                                std::to_string(mag) + ", set-point is " +
                                                std::to_string(sp.v_mag_star(i)));
    }
    return u;
}

/// Machine references that reproduce the bus voltages v* on the given model.
inline LocalReferences to_local(const Vec& v_star, ModelVariant variant, const Grid& g) {
    const int n = g.n();
    require(v_star.size() == 2 * n, "v_star: expected 2n entries");
    const SteadyStateMaps maps = build_pi(g);
    LocalReferences r;
    r.v_star = v_star;
    r.xi_star = variant == ModelVariant::reduced ? v_star : Lu(maps.pi2).solve(v_star);
    r.theta_star.resize(n);
    r.i_r_star.resize(n);
    for (int k = 0; k < n; ++k) {
        const Eigen::Vector2d b = r.xi_star.segment<2>(2 * k);
        if (b.norm() == 0.0)
            fail(ErrorCategory::validation, "node " + std::to_string(k) + " has zero EMF, excitation undefined");
        r.theta_star(k) = std::atan2(-b(0), b(1));
        r.i_r_star(k) = b.norm() / (g.omega0 * g.nodes[k].l_m);
    }
    if (variant == ModelVariant::reduced) {
        r.i_t_star = g.m() ? Vec(Lu(maps.z_t).solve(Vec(maps.e.transpose() * r.xi_star))) : Vec(0);
        r.i_s_star = maps.e * r.i_t_star;
    } else {
        r.i_s_star = maps.pi1 * r.xi_star;
        r.i_t_star = maps.pi3 * r.xi_star;
    }
    return r;
}

/// Copy of the grid with the excitation set-points replaced.
inline Grid with_excitation(Grid g, const Vec& i_r_star) {
    require(i_r_star.size() == g.n(), "i_r_star: expected one value per node");
    for (int k = 0; k < g.n(); ++k) g.nodes[k].i_r_star = i_r_star(k);
    return g;
}

/// Steady flows induced by machine references (I_r*, θ*).
inline NetworkFlows to_network(const Vec& i_r_star, const Vec& theta_star, ModelVariant variant, const Grid& grid) {
    const Grid g = with_excitation(grid, i_r_star);
    const int n = g.n(), m = g.m();
    const SteadyStateMaps maps = build_pi(g);
    const Vec xi = emf(g, theta_star);
    Vec v, it;
    if (variant == ModelVariant::reduced) {
        v = xi;
        it = m ? Vec(Lu(maps.z_t).solve(Vec(maps.e.transpose() * xi))) : Vec(0);
    } else {
        v = maps.pi2 * xi;
        it = maps.pi3 * xi;
    }
    const Eigen::Matrix2d jq = quarter_turn();
    NetworkFlows f;
    f.edge_p.resize(m);
    f.edge_q.resize(m);
    for (int e = 0; e < m; ++e) {
        const Eigen::Vector2d vt = v.segment<2>(2 * g.topology.edges[e].from), i = it.segment<2>(2 * e);
        f.edge_p(e) = vt.dot(i);
        f.edge_q(e) = vt.dot(jq * i);
    }
    const Vec inj = maps.e * it;
    f.node_p.resize(n);
    f.node_q.resize(n);
    f.v_mag.resize(n);
    for (int k = 0; k < n; ++k) {
        const Eigen::Vector2d vk = v.segment<2>(2 * k), ik = inj.segment<2>(2 * k);
        f.node_p(k) = vk.dot(ik);
        f.node_q(k) = vk.dot(jq * ik);
        f.v_mag(k) = vk.norm();
    }
    return f;
}

inline NetworkFlows to_network(const LocalReferences& r, ModelVariant variant, const Grid& g) {
    return to_network(r.i_r_star, r.theta_star, variant, g);
}

/// Set-points realized by bus voltages v on the lines of g.
inline OpfSetpoint setpoint_from_voltages(const Vec& v, const Grid& g) {
    const int n = g.n();
    require(v.size() == 2 * n, "v: expected 2n entries");
    const SteadyStateMaps maps = build_pi(g);
    const Vec inj = maps.cal_lt * v;
    const Eigen::Matrix2d jq = quarter_turn();
    OpfSetpoint sp;
    sp.p_star.resize(n);
    sp.q_star.resize(n);
    sp.v_mag_star.resize(n);
    for (int k = 0; k < n; ++k) {
        const Eigen::Vector2d vk = v.segment<2>(2 * k), ik = inj.segment<2>(2 * k);
        sp.p_star(k) = vk.dot(ik);
        sp.q_star(k) = vk.dot(jq * ik);
        sp.v_mag_star(k) = vk.norm();
    }
    sp.rho = line_angles(g);
    return sp;
}

}  // namespace gridsync
