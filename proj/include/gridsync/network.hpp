#pragma once

#include "gridsync/algebra.hpp"

#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace gridsync {

struct Edge {
    int from = 0;
    int to = 0;
};

struct CommEdge {
    int from = 0;
    int to = 0;
    double weight = 1.0;
};

/// Electrical graph plus an optional acyclic communication graph.
struct Topology {
    int n = 0;
    std::vector<Edge> edges;
    std::vector<CommEdge> comm;

    int m() const { return static_cast<int>(edges.size()); }
    bool has_comm() const { return !comm.empty(); }

    /// n x m, +1 at the tail and -1 at the head of every edge.
    Mat incidence() const {
        Mat e = Mat::Zero(n, m());
        for (int k = 0; k < m(); ++k) {
            e(edges[k].from, k) = 1.0;
            e(edges[k].to, k) = -1.0;
        }
        return e;
    }

    Mat comm_incidence() const {
        Mat b = Mat::Zero(n, static_cast<Eigen::Index>(comm.size()));
        for (std::size_t k = 0; k < comm.size(); ++k) {
            b(comm[k].from, k) = 1.0;
            b(comm[k].to, k) = -1.0;
        }
        return b;
    }

    Vec comm_weights() const {
        Vec w(static_cast<Eigen::Index>(comm.size()));
        for (std::size_t k = 0; k < comm.size(); ++k) w(k) = comm[k].weight;
        return w;
    }

    void validate() const {
        require(n >= 1, "topology: n must be at least 1");
        for (int k = 0; k < m(); ++k) {
            const auto& e = edges[k];
            const std::string tag = "edges[" + std::to_string(k) + "]";
            require(e.from >= 0 && e.from < n && e.to >= 0 && e.to < n, tag + ": node index out of range");
            require(e.from != e.to, tag + ": self loop");
        }
        if (comm.empty()) return;
        require(static_cast<int>(comm.size()) == n - 1, "comm_edges: a spanning tree needs n-1 edges");
        std::vector<int> parent(n);
        std::iota(parent.begin(), parent.end(), 0);
        auto root = [&](int x) {
            while (parent[x] != x) x = parent[x] = parent[parent[x]];
            return x;
        };
        for (std::size_t k = 0; k < comm.size(); ++k) {
            const auto& e = comm[k];
            const std::string tag = "comm_edges[" + std::to_string(k) + "]";
            require(e.from >= 0 && e.from < n && e.to >= 0 && e.to < n, tag + ": node index out of range");
            require(e.weight > 0.0 && std::isfinite(e.weight), tag + ".weight must be positive");
            const int a = root(e.from), b = root(e.to);
            require(a != b, tag + ": communication graph contains a cycle");
            parent[a] = b;
        }
    }
};

struct NodeParams {
    double m = 1.0;         ///< inertia, kg m^2
    double d = 1.0;         ///< damping, N m s
    double k_p = 0.0;       ///< proportional frequency gain, N m s
    double l_m = 1.0;       ///< mutual inductance, H
    double i_r_star = 0.0;  ///< rotor current set-point, A
    double r_s = 1.0;       ///< stator resistance, ohm
    double l_s = 0.0;       ///< stator inductance, H
    double g = 1.0;         ///< shunt conductance, S
    double c = 0.0;         ///< shunt capacitance, F
};

struct LineParams {
    double r_t = 1.0;  ///< ohm
    double l_t = 0.0;  ///< H
};

struct Grid {
    Topology topology;
    double omega0 = 100.0 * kPi;
    std::vector<NodeParams> nodes;
    std::vector<LineParams> lines;

    int n() const { return topology.n; }
    int m() const { return topology.m(); }

    Vec node_vec(double NodeParams::*field) const {
        Vec out(n());
        for (int k = 0; k < n(); ++k) out(k) = nodes[k].*field;
        return out;
    }
    Vec line_vec(double LineParams::*field) const {
        Vec out(m());
        for (int k = 0; k < m(); ++k) out(k) = lines[k].*field;
        return out;
    }

    /// L_m,k · I_r,k per node (flux amplitude).
    Vec flux_amplitude() const { return node_vec(&NodeParams::l_m).cwiseProduct(node_vec(&NodeParams::i_r_star)); }

    void validate() const {
        topology.validate();
        require(std::isfinite(omega0) && omega0 > 0.0, "omega0_rad_per_s must be positive");
        require(static_cast<int>(nodes.size()) == n(), "nodes: count does not match topology");
        require(static_cast<int>(lines.size()) == m(), "edges: line parameter count does not match topology");
        auto positive = [](double x) { return std::isfinite(x) && x > 0.0; };
        auto nonneg = [](double x) { return std::isfinite(x) && x >= 0.0; };
        for (int k = 0; k < n(); ++k) {
            const auto& p = nodes[k];
            const std::string tag = "nodes[" + std::to_string(k) + "].";
            require(positive(p.m), tag + "m_kg_m2 must be positive");
            require(positive(p.d), tag + "d_n_m_s must be positive");
            require(nonneg(p.k_p), tag + "k_p_n_m_s must be nonnegative");
            require(positive(p.l_m), tag + "l_m_henry must be positive");
            require(nonneg(p.i_r_star), tag + "i_r_star_ampere must be nonnegative");
            require(positive(p.r_s), tag + "r_s_ohm must be positive");
            require(nonneg(p.l_s), tag + "l_s_henry must be nonnegative");
            require(positive(p.g), tag + "g_siemens must be positive");
            require(nonneg(p.c), tag + "c_farad must be nonnegative");
        }
        for (int k = 0; k < m(); ++k) {
            const std::string tag = "edges[" + std::to_string(k) + "].";
            require(positive(lines[k].r_t), tag + "r_t_ohm must be positive");
            require(nonneg(lines[k].l_t), tag + "l_t_henry must be nonnegative");
        }
    }
};

/// R_θ (L_m ⊗ e₂) I_r: 2n x n, column k is L_m,k I_r,k (-sin θ_k, cos θ_k) in block k.
inline Mat emf_map(const Grid& grid, const Vec& theta) {
    const Vec a = grid.flux_amplitude();
    Mat out = Mat::Zero(2 * grid.n(), grid.n());
    for (int k = 0; k < grid.n(); ++k) {
        out(2 * k, k) = -a(k) * std::sin(theta(k));
        out(2 * k + 1, k) = a(k) * std::cos(theta(k));
    }
    return out;
}

/// Machine EMF ξ = ω₀ R_θ (L_m ⊗ e₂) I_r 𝟏.
inline Vec emf(const Grid& grid, const Vec& theta) {
    const Vec a = grid.flux_amplitude();
    Vec xi(2 * grid.n());
    for (int k = 0; k < grid.n(); ++k) {
        xi(2 * k) = -grid.omega0 * a(k) * std::sin(theta(k));
        xi(2 * k + 1) = grid.omega0 * a(k) * std::cos(theta(k));
    }
    return xi;
}

/// Mutual flux Ψ = R_θ (L_m ⊗ e₁) I_r 𝟏.
inline Vec flux(const Grid& grid, const Vec& theta) {
    const Vec a = grid.flux_amplitude();
    Vec psi(2 * grid.n());
    for (int k = 0; k < grid.n(); ++k) {
        psi(2 * k) = a(k) * std::cos(theta(k));
        psi(2 * k + 1) = a(k) * std::sin(theta(k));
    }
    return psi;
}

/// Electrical torque for a current i injected by the machines into their buses.
inline Vec electrical_torque(const Grid& grid, const Vec& theta, const Vec& i) {
    const Vec a = grid.flux_amplitude();
    Vec tau(grid.n());
    for (int k = 0; k < grid.n(); ++k)
        tau(k) = a(k) * (-std::sin(theta(k)) * i(2 * k) + std::cos(theta(k)) * i(2 * k + 1));
    return tau;
}

/// Impedance blocks and the steady-state Π-map.
///
/// pi1 is stored without sign: the stator current injected into the bus at
/// steady state is pi1·ξ, so the current flowing out of the bus is -pi1·ξ.
struct SteadyStateMaps {
    Mat z_s, y_c, z_t;
    Mat e;       ///< E ⊗ I₂
    Mat cal_lt;  ///< E Z_t⁻¹ Eᵀ
    Mat pi1, pi2, pi3;
    Mat y_net;
    Mat stator_coupling;  ///< (I + Y_c Z_s)⁻¹
    Mat z_t_prime;
    Vec d_prime;

    int n() const { return static_cast<int>(pi1.rows() / 2); }
    int m() const { return static_cast<int>(pi3.rows() / 2); }
};

inline SteadyStateMaps build_pi(const Grid& grid) {
    grid.validate();
    const int n = grid.n();
    SteadyStateMaps s;
    const double w0 = grid.omega0;
    s.z_s = impedance_block(grid.node_vec(&NodeParams::r_s), grid.node_vec(&NodeParams::l_s), w0);
    s.y_c = impedance_block(grid.node_vec(&NodeParams::g), grid.node_vec(&NodeParams::c), w0);
    s.z_t = grid.m() ? impedance_block(grid.line_vec(&LineParams::r_t), grid.line_vec(&LineParams::l_t), w0)
                     : Mat(0, 0);
    s.e = kron_i2(grid.topology.incidence());
    s.cal_lt = grid.m() ? Mat(s.e * Lu(s.z_t).solve(Mat(s.e.transpose()))) : Mat::Zero(2 * n, 2 * n);
    const Mat w = s.y_c + s.cal_lt;
    const Lu w_lu(w);
    s.pi1 = Lu(Mat(s.z_s + w_lu.inverse())).inverse();
    s.y_net = s.pi1;
    s.pi2 = w_lu.solve(s.pi1);
    s.pi3 = grid.m() ? Mat(Lu(s.z_t).solve(Mat(s.e.transpose() * s.pi2))) : Mat(0, 2 * n);

    const Mat eye = Mat::Identity(2 * n, 2 * n);
    s.stator_coupling = Lu(Mat(eye + s.y_c * s.z_s)).inverse();
    // (Z_s⁻¹ + Y_c)⁻¹ = (I + Z_s Y_c)⁻¹ Z_s; all blocks commute.
    const Mat shunt_path = s.stator_coupling * s.z_s;
    s.z_t_prime = grid.m() ? Mat(s.z_t + s.e.transpose() * shunt_path * s.e) : Mat(0, 0);

    s.d_prime = grid.node_vec(&NodeParams::d);
    const Vec a = grid.flux_amplitude();
    for (int k = 0; k < n; ++k) {
        const auto& p = grid.nodes[k];
        const double yc2 = p.g * p.g + w0 * w0 * p.c * p.c;
        const double re = p.g + p.r_s * yc2;
        const double im = w0 * (p.c - yc2 * p.l_s);
        s.d_prime(k) += a(k) * a(k) * (p.g + yc2 * p.r_s) * yc2 / (re * re + im * im);
    }
    return s;
}

/// Steady electrical quantities for EMF ξ (stator current injected into the bus).
struct SteadyState {
    Vec xi, i_s, v, i_t;
};

inline SteadyState steady_state(const SteadyStateMaps& maps, const Vec& xi) {
    return {xi, maps.pi1 * xi, maps.pi2 * xi, maps.pi3 * xi};
}

/// ½(Y_net + Y_netᵀ), after checking Y_net = (Y_c+𝓛_t)(Z_s⁻¹+Y_c+𝓛_t)⁻¹Z_s⁻¹.
inline Mat y_net_symmetric(const SteadyStateMaps& maps) {
    const Mat w = maps.y_c + maps.cal_lt;
    const Mat zs_inv = inverse(maps.z_s);
    const Mat factored = w * Lu(Mat(zs_inv + w)).solve(zs_inv);
    const double err = (factored - maps.y_net).norm() / std::max(1e-300, maps.y_net.norm());
    if (err > 1e-9) fail(ErrorCategory::numerical, "y_net factorized identity violated: " + std::to_string(err));
    return sym_part(maps.y_net);
}

/// ω₀ 𝟏ᵀ τ_e* through the quadratic form ξ*ᵀ Y_net ξ*.
inline double steady_state_power_balance(const SteadyStateMaps& maps, const Grid& grid, const Vec& theta_star) {
    const Vec xi = emf(grid, theta_star);
    return xi.dot(maps.y_net * xi);
}

struct EffectiveVoltage {
    Vec theta_bar;
    Vec i_r_bar;
};

/// Polar readout of v* = Π₂ξ* as an equivalent EMF: v_k = ω₀ L_m,k Ī_r,k R_θ̄k e₂.
inline EffectiveVoltage effective_voltage_decomposition(const SteadyStateMaps& maps, const Grid& grid,
                                                        const Vec& theta_star) {
    const Vec v = maps.pi2 * emf(grid, theta_star);
    EffectiveVoltage out{Vec(grid.n()), Vec(grid.n())};
    for (int k = 0; k < grid.n(); ++k) {
        const double x = v(2 * k), y = v(2 * k + 1);
        const double mag = std::hypot(x, y);
        if (!(mag > 1e-300)) fail(ErrorCategory::validation, "node " + std::to_string(k) + ": zero voltage block");
        out.theta_bar(k) = std::atan2(-x, y);
        out.i_r_bar(k) = mag / (grid.omega0 * grid.nodes[k].l_m);
    }
    return out;
}

/// Common R_t/L_t ratio when every line shares it (relative tolerance tol).
inline std::optional<double> uniform_line_ratio(const Grid& grid, double tol = 1e-9) {
    if (grid.m() == 0) return std::nullopt;
    const auto& l0 = grid.lines[0];
    if (l0.l_t <= 0.0) return std::nullopt;
    const double alpha = l0.r_t / l0.l_t;
    for (const auto& l : grid.lines) {
        if (l.l_t <= 0.0) return std::nullopt;
        if (std::abs(l.r_t / l.l_t - alpha) > tol * alpha) return std::nullopt;
    }
    return alpha;
}

/// Fastest line time constant L_t/R_t over slowest stator time constant L_s/R_s.
inline double time_scale_ratio(const Grid& grid) {
    double line = std::numeric_limits<double>::infinity(), stator = 0.0;
    for (const auto& l : grid.lines) line = std::min(line, l.l_t / l.r_t);
    for (const auto& p : grid.nodes) stator = std::max(stator, p.l_s / p.r_s);
    return line / stator;
}

}  // namespace gridsync
