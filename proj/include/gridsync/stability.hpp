#pragma once

#include "gridsync/control.hpp"

#include <optional>
#include <string>

namespace gridsync {

struct EnergyReport {
    double kinetic = 0.0;
    double stator = 0.0;
    double capacitor = 0.0;
    double line = 0.0;
    double potential = 0.0;
    double h_tilde = 0.0;
};

/// Error coordinates x̃ = (ω̃, ĩ_s, ṽ, ĩ_t) about the steady maps evaluated at the current angles.
/// For the reduced and static-stator models the stator and voltage parts are empty.
struct ErrorCoordinates {
    Vec omega, i_s, v, i_t;

    Vec stacked() const {
        Vec out(omega.size() + i_s.size() + v.size() + i_t.size());
        out << omega, i_s, v, i_t;
        return out;
    }
};

inline ErrorCoordinates error_coordinates(const Controller& ctl, const Vec& x) {
    const Plant& plant = ctl.plant();
    const auto& lay = plant.layout();
    const auto& maps = plant.maps();
    const Grid& g = plant.grid();
    const int n = lay.n, m = lay.m;
    const Vec theta = x.segment(0, n);
    const Vec xi = emf(g, theta);
    ErrorCoordinates e;
    e.omega = x.segment(n, n);
    const Vec it = x.segment(lay.i_t(), 2 * m);
    switch (plant.variant()) {
    case ModelVariant::full:
        e.i_s = x.segment(lay.i_s(), 2 * n) - maps.pi1 * xi;
        e.v = x.segment(lay.v(), 2 * n) - maps.pi2 * xi;
        e.i_t = it - maps.pi3 * xi;
        break;
    case ModelVariant::static_stator: e.i_t = it - maps.pi3 * xi; break;
    case ModelVariant::reduced:
        e.i_t = m ? Vec(it - Lu(maps.z_t).solve(Vec(maps.e.transpose() * xi))) : Vec(0);
        break;
    }
    return e;
}

/// H̃ for the controller's closed loop. Laws without an electrical storage
/// term (open loop, communication-based, decoupled) report kinetic + S.
inline EnergyReport total_energy(const Controller& ctl, const Vec& x) {
    const Plant& plant = ctl.plant();
    const Grid& g = plant.grid();
    const int n = g.n();
    EnergyReport r;
    const ErrorCoordinates e = error_coordinates(ctl, x);
    for (int k = 0; k < n; ++k) r.kinetic += 0.5 * g.nodes[k].m * e.omega(k) * e.omega(k);
    r.potential = ctl.potential(x.segment(0, n));
    const Law law = ctl.law();
    const bool storage = law == Law::incremental_full || law == Law::reduced_decentralized ||
                         law == Law::simplified_full_decentralized || law == Law::full_decentralized_exact ||
                         law == Law::full_decentralized_approx;
    if (storage) {
        for (int k = 0; k < e.i_s.size() / 2; ++k) {
            r.stator += 0.5 * g.nodes[k].l_s * e.i_s.segment<2>(2 * k).squaredNorm();
            r.capacitor += 0.5 * g.nodes[k].c * e.v.segment<2>(2 * k).squaredNorm();
        }
        for (int k = 0; k < g.m(); ++k) r.line += 0.5 * g.lines[k].l_t * e.i_t.segment<2>(2 * k).squaredNorm();
    }
    r.h_tilde = r.kinetic + r.stator + r.capacitor + r.line + r.potential;
    return r;
}

/// Laws whose energy derivative has a stated quadratic form dH̃/dt = −x̃ᵀQx̃.
inline bool has_q_form(Law law) {
    return law == Law::incremental_full || law == Law::reduced_decentralized ||
           law == Law::simplified_full_decentralized || law == Law::full_decentralized_exact;
}

/// Precomputed θ-independent pieces for Q(θ).
class QAssembler {
public:
    /// `damping` overrides the machine damping D (D′ for the static model) when non-empty.
    QAssembler(const Grid& grid, Law law, bool use_kp = true, Vec damping = Vec())
        : grid_(grid), law_(law), maps_(build_pi(grid)) {
        if (!has_q_form(law))
            fail(ErrorCategory::unsupported, std::string("no Lie-derivative form for law ") + law_name(law));
        const int n = grid.n(), m = grid.m();
        const double w0 = grid.omega0;
        const Mat jn = j_blocks(n);
        if (damping.size() == 0)
            damping = law == Law::simplified_full_decentralized ? maps_.d_prime : grid.node_vec(&NodeParams::d);
        require(damping.size() == n, "damping: expected one value per node");
        d_hat_ = damping + (use_kp ? grid.node_vec(&NodeParams::k_p) : Vec::Zero(n));
        if (m > 0) rt_ = diag_i2(grid.line_vec(&LineParams::r_t));
        switch (law) {
        case Law::incremental_full: {
            const Mat k = sym_part(maps_.pi1) * Lu(maps_.pi1).inverse();
            const Mat ls = diag_i2(grid.node_vec(&NodeParams::l_s));
            const Mat c = diag_i2(grid.node_vec(&NodeParams::c));
            const Mat lt = diag_i2(grid.line_vec(&LineParams::l_t));
            c_is_ = -(Mat((w0 * jn * ls).transpose()) * maps_.pi1 + k.transpose());
            c_v_ = -Mat((w0 * jn * c).transpose()) * maps_.pi2;
            c_it_ = m ? Mat(-Mat((w0 * j_blocks(m) * lt).transpose()) * maps_.pi3) : Mat(0, 2 * n);
            break;
        }
        case Law::full_decentralized_exact: {
            const Mat ls = diag_i2(grid.node_vec(&NodeParams::l_s));
            const Mat c = diag_i2(grid.node_vec(&NodeParams::c));
            const Mat lt = diag_i2(grid.line_vec(&LineParams::l_t));
            c_is_ = w0 * jn * ls * maps_.pi1 - Mat::Identity(2 * n, 2 * n);
            c_v_ = 2.0 * w0 * jn * c * maps_.pi2;
            c_it_ = m ? Mat(w0 * j_blocks(m) * lt * maps_.pi3) : Mat(0, 2 * n);
            break;
        }
        case Law::reduced_decentralized: {
            require(m > 0, "reduced law needs at least one line");
            const Mat lt = diag_i2(grid.line_vec(&LineParams::l_t));
            const Mat zt_inv = Lu(maps_.z_t).inverse();
            upper_ = -maps_.e * Mat(zt_inv.transpose()) * (w0 * j_blocks(m) * lt);  // acts as Aᵀ·upper_
            lower_ = -rt_ * zt_inv * maps_.e.transpose();                           // acts as lower_·A
            break;
        }
        case Law::simplified_full_decentralized: {
            require(m > 0, "static-stator law needs at least one line");
            const Mat lt = diag_i2(grid.line_vec(&LineParams::l_t));
            const Mat zt_inv = Lu(maps_.z_t).inverse();
            upper_ = -2.0 * maps_.pi2.transpose() * maps_.e * Mat(zt_inv.transpose()) * (w0 * j_blocks(m) * lt);
            lower_ = -maps_.e.transpose() * maps_.stator_coupling;
            break;
        }
        default: break;
        }
    }

    Law law() const { return law_; }
    const SteadyStateMaps& maps() const { return maps_; }

    /// Q(θ) with dH̃/dt = −x̃ᵀ Q x̃ (the negation of the printed −Q block matrix).
    Mat operator()(const Vec& theta) const {
        const int n = grid_.n(), m = grid_.m();
        const Mat a = emf_map(grid_, theta);
        if (law_ == Law::incremental_full || law_ == Law::full_decentralized_exact) {
            const int dim = n + 4 * n + 2 * m;
            Mat q = Mat::Zero(dim, dim);
            q.block(0, 0, n, n) = d_hat_.asDiagonal();
            q.block(n, 0, 2 * n, n) = c_is_ * a;
            q.block(3 * n, 0, 2 * n, n) = c_v_ * a;
            if (m) q.block(5 * n, 0, 2 * m, n) = c_it_ * a;
            q.block(n, n, 2 * n, 2 * n) = diag_i2(grid_.node_vec(&NodeParams::r_s));
            q.block(3 * n, 3 * n, 2 * n, 2 * n) = diag_i2(grid_.node_vec(&NodeParams::g));
            if (m) q.block(5 * n, 5 * n, 2 * m, 2 * m) = rt_;
            return q;
        }
        Mat q = Mat::Zero(n + 2 * m, n + 2 * m);
        q.block(0, 0, n, n) = d_hat_.asDiagonal();
        q.block(0, n, n, 2 * m) = a.transpose() * upper_;
        q.block(n, 0, 2 * m, n) = lower_ * a;
        q.block(n, n, 2 * m, 2 * m) = law_ == Law::reduced_decentralized ? rt_ : maps_.z_t_prime;
        return q;
    }

    /// Printed damping inequality: D̂ − RHS(θ). Only the reduced and static laws have one.
    std::optional<Mat> inequality_margin(const Vec& theta) const {
        const Mat a = emf_map(grid_, theta);
        const int n = grid_.n(), m = grid_.m();
        if (law_ == Law::reduced_decentralized) {
            const Mat rhs = 0.25 * a.transpose() * maps_.e * diag_i2(grid_.line_vec(&LineParams::r_t).cwiseInverse()) *
                            maps_.e.transpose() * a;
            return Mat(Mat(d_hat_.asDiagonal()) - rhs);
        }
        if (law_ == Law::simplified_full_decentralized) {
            // Z_t⁻ᵀ𝒋ω₀L_t is one repeated 2x2 block under a uniform ratio; lift it to the nodes.
            const Mat lt = diag_i2(grid_.line_vec(&LineParams::l_t));
            const Mat line_block = (Lu(Mat(maps_.z_t.transpose())).inverse() * grid_.omega0 * j_blocks(m) * lt);
            Mat node_block = Mat::Zero(2 * n, 2 * n);
            for (int k = 0; k < n; ++k) node_block.block<2, 2>(2 * k, 2 * k) = line_block.block<2, 2>(0, 0);
            const Mat f = a.transpose() * (maps_.pi2.transpose() * node_block +
                                           0.5 * Mat(maps_.stator_coupling.transpose())) * maps_.e;
            const Mat rhs = f * Lu(maps_.z_t_prime).inverse() * f.transpose();
            return Mat(Mat(d_hat_.asDiagonal()) - sym_part(rhs));
        }
        return std::nullopt;
    }

private:
    Grid grid_;
    Law law_;
    SteadyStateMaps maps_;
    Vec d_hat_;
    Mat rt_, c_is_, c_v_, c_it_, upper_, lower_;
};

struct DampingCertificate {
    Law law = Law::full_decentralized_exact;
    int resolution = 0;
    double min_eigenvalue = 0.0;
    bool holds = false;
    Vec argmin;
    bool has_inequality = false;
    double inequality_min_eigenvalue = 0.0;
    bool inequality_holds = false;
    Vec inequality_argmin;
};

inline int default_grid_resolution(int n) {
    if (n > 6) fail(ErrorCategory::validation, "damping sweep is limited to n <= 6");
    if (n <= 3) return 32;
    if (n == 4) return 12;
    return 8;
}

/// Visit θ = (0, φ₁, …, φ_{n−1}) with φ on a uniform grid of [0, 2π).
template <class F>
void for_each_relative_angle(int n, int resolution, F&& f) {
    Vec theta = Vec::Zero(n);
    std::vector<int> idx(std::max(0, n - 1), 0);
    const double step = 2.0 * kPi / resolution;
    while (true) {
        for (int k = 1; k < n; ++k) theta(k) = step * idx[k - 1];
        f(theta);
        int k = 0;
        while (k < n - 1 && ++idx[k] == resolution) idx[k++] = 0;
        if (k == n - 1) break;
    }
}

/// Sweep λ_min(½(Q+Qᵀ)) and, where printed, the explicit damping inequality over relative angles.
inline DampingCertificate damping_condition(const QAssembler& qa, int resolution = 0) {
    const int n = qa.maps().n();
    if (resolution == 0) resolution = default_grid_resolution(n);
    if (n > 6) fail(ErrorCategory::validation, "damping sweep is limited to n <= 6");
    if (resolution < 4) fail(ErrorCategory::validation, "grid resolution must be at least 4 points per angle");
    DampingCertificate c;
    c.law = qa.law();
    c.resolution = resolution;
    c.min_eigenvalue = std::numeric_limits<double>::infinity();
    c.inequality_min_eigenvalue = std::numeric_limits<double>::infinity();
    for_each_relative_angle(n, resolution, [&](const Vec& theta) {
        const double lam = min_sym_eigenvalue(sym_part(qa(theta)));
        if (lam < c.min_eigenvalue) {
            c.min_eigenvalue = lam;
            c.argmin = theta;
        }
        if (const auto margin = qa.inequality_margin(theta)) {
            c.has_inequality = true;
            const double mu = min_sym_eigenvalue(*margin);
            if (mu < c.inequality_min_eigenvalue) {
                c.inequality_min_eigenvalue = mu;
                c.inequality_argmin = theta;
            }
        }
    });
    c.holds = c.min_eigenvalue > 0.0;
    c.inequality_holds = c.has_inequality && c.inequality_min_eigenvalue > 0.0;
    return c;
}

inline DampingCertificate damping_condition(const Grid& grid, Law law, int resolution = 0, bool use_kp = true) {
    return damping_condition(QAssembler(grid, law, use_kp), resolution);
}

}  // namespace gridsync
