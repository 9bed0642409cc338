#pragma once

#include "gridsync/dynamics.hpp"

#include <optional>
#include <string>

namespace gridsync {

enum class Law {
    open_loop,
    comm_feedback_linearization,
    decoupled_reference,
    incremental_full,
    reduced_decentralized,
    simplified_full_decentralized,
    full_decentralized_exact,
    full_decentralized_approx,
};

/// Angle-coupling energy over the communication graph.
enum class Candidate { s_bar, s_tilde, s_hat };

inline const char* law_name(Law l) {
    switch (l) {
    case Law::open_loop: return "open_loop";
    case Law::comm_feedback_linearization: return "comm_feedback_linearization";
    case Law::decoupled_reference: return "decoupled_reference";
    case Law::incremental_full: return "incremental_full";
    case Law::reduced_decentralized: return "reduced_decentralized";
    case Law::simplified_full_decentralized: return "simplified_full_decentralized";
    case Law::full_decentralized_exact: return "full_decentralized_exact";
    case Law::full_decentralized_approx: return "full_decentralized_approx";
    }
    return "unknown";
}

inline std::optional<Law> parse_law(const std::string& s) {
    for (Law l : {Law::open_loop, Law::comm_feedback_linearization, Law::decoupled_reference, Law::incremental_full,
                  Law::reduced_decentralized, Law::simplified_full_decentralized, Law::full_decentralized_exact,
                  Law::full_decentralized_approx})
        if (s == law_name(l)) return l;
    return std::nullopt;
}

inline bool law_supports(Law law, ModelVariant v) {
    switch (law) {
    case Law::open_loop:
    case Law::comm_feedback_linearization:
    case Law::decoupled_reference: return true;
    case Law::incremental_full:
    case Law::full_decentralized_exact:
    case Law::full_decentralized_approx: return v == ModelVariant::full;
    case Law::reduced_decentralized: return v == ModelVariant::reduced;
    case Law::simplified_full_decentralized: return v == ModelVariant::static_stator;
    }
    return false;
}

// ---------------------------------------------------------------------------
// Flux-coupling energies S = ½ Ψᵀ (B K Bᵀ ⊗ I₂) Ψ and their shifted variants.

/// (B diag(w) Bᵀ) ⊗ I₂.
inline Mat flux_laplacian(const Mat& incidence, const Vec& weights) {
    return kron_i2(incidence * weights.asDiagonal() * incidence.transpose());
}

inline double quadratic_energy(const Mat& lap, const Vec& psi) { return 0.5 * psi.dot(lap * psi); }

/// Unshifted energy S_B(θ) and its gradient (R_θ(L_m⊗e₂)I_r)ᵀ 𝐋 Ψ.
inline double s_b(const Grid& g, const Mat& lap, const Vec& theta) { return quadratic_energy(lap, flux(g, theta)); }
inline Vec grad_s_b(const Grid& g, const Mat& lap, const Vec& theta) {
    return emf_map(g, theta).transpose() * (lap * flux(g, theta));
}

inline double energy_candidate(Candidate which, const Grid& g, const Mat& lap, const Vec& theta, const Vec& theta_star) {
    switch (which) {
    case Candidate::s_bar: return s_b(g, lap, Vec(theta - theta_star));
    case Candidate::s_tilde: {
        const Vec d = flux(g, theta) - flux(g, theta_star);
        return quadratic_energy(lap, d);
    }
    case Candidate::s_hat:
        return s_b(g, lap, theta) - s_b(g, lap, theta_star) - grad_s_b(g, lap, theta_star).dot(theta - theta_star);
    }
    return 0.0;
}

inline Vec energy_candidate_gradient(Candidate which, const Grid& g, const Mat& lap, const Vec& theta,
                                     const Vec& theta_star) {
    switch (which) {
    case Candidate::s_bar: return grad_s_b(g, lap, Vec(theta - theta_star));
    case Candidate::s_tilde: return emf_map(g, theta).transpose() * (lap * (flux(g, theta) - flux(g, theta_star)));
    case Candidate::s_hat: return grad_s_b(g, lap, theta) - grad_s_b(g, lap, theta_star);
    }
    return Vec();
}

/// Per-node energy ½(Ψ−Ψ*)ᵀ(L_m⊗I₂)⁻¹(Ψ−Ψ*).
inline double decoupled_energy(const Grid& g, const Vec& theta, const Vec& theta_star) {
    const Vec d = flux(g, theta) - flux(g, theta_star);
    double s = 0.0;
    for (int k = 0; k < g.n(); ++k) s += 0.5 * d.segment<2>(2 * k).squaredNorm() / g.nodes[k].l_m;
    return s;
}

inline Vec decoupled_gradient(const Grid& g, const Vec& theta, const Vec& theta_star) {
    Vec out(g.n());
    for (int k = 0; k < g.n(); ++k) {
        const double a = g.nodes[k].l_m * g.nodes[k].i_r_star;
        out(k) = g.nodes[k].i_r_star * a * std::sin(theta(k) - theta_star(k));
    }
    return out;
}

/// K = Re(Π₁)Π₁⁻¹ of the incremental law.
inline Mat incremental_gain(const SteadyStateMaps& maps) { return sym_part(maps.pi1) * Lu(maps.pi1).inverse(); }

/// i^{*im} = Im(Π₁)ξ* of the incremental law.
inline Vec incremental_offset(const SteadyStateMaps& maps, const Vec& xi_star) { return skew_part(maps.pi1) * xi_star; }

/// ‖(R_θ(L_m⊗e₂)I_r)ᵀΠ₂ᵀ − diag(v*/ω₀)ᵀ‖ / ‖(R_θ(L_m⊗e₂)I_r)ᵀΠ₂ᵀ‖ at θ*: how far the local
/// voltage measurement is from the exact weighting.
inline double dominance_violation(const Grid& g, const SteadyStateMaps& maps, const Vec& theta_star) {
    const Mat exact = emf_map(g, theta_star).transpose() * maps.pi2.transpose();
    const Mat approx = block_column_diag(Vec(maps.pi2 * emf(g, theta_star) / g.omega0)).transpose();
    return (exact - approx).norm() / exact.norm();
}

// ---------------------------------------------------------------------------

struct ControllerSpec {
    Law law = Law::open_loop;
    Vec theta_star;  ///< empty means all zeros
    Candidate candidate = Candidate::s_bar;
    bool approximate = false;  ///< simplified_full_decentralized only
    bool use_kp = true;
    Vec tau_feedforward;  ///< open_loop only; empty means the steady torque at θ*
    Vec i_t_star;         ///< empty means derived from θ*
    Vec v_star;           ///< empty means derived from θ*
};

/// Set-points consistent with θ* and I_r* on the plant's steady map.
struct Setpoints {
    Vec theta, xi, i_s, v, i_t, tau_e;
};

/// Torque laws τ̃(x) for a dq-frame state x of the plant.
class Controller {
public:
    Controller(const Plant& plant, ControllerSpec spec) : plant_(plant), spec_(std::move(spec)) {
        const Grid& g = plant.grid();
        const auto& maps = plant.maps();
        const int n = g.n(), m = g.m();
        if (plant.frame() != Frame::dq) fail(ErrorCategory::unsupported, "controllers act on dq-frame states");
        if (!law_supports(spec_.law, plant.variant()))
            fail(ErrorCategory::validation, std::string("law ") + law_name(spec_.law) + " is not defined for the " +
                                                variant_name(plant.variant()) + " model");
        if (spec_.theta_star.size() == 0) spec_.theta_star = Vec::Zero(n);
        require(spec_.theta_star.size() == n, "theta_star: expected one angle per node");

        sp_.theta = spec_.theta_star;
        sp_.xi = emf(g, sp_.theta);
        const Vec x_eq = plant.equilibrium(sp_.theta);
        const auto st = plant.layout().unpack(x_eq);
        sp_.i_t = st.i_t;
        if (plant.variant() == ModelVariant::full) {
            sp_.i_s = st.i_s;
            sp_.v = st.v;
        } else if (plant.variant() == ModelVariant::static_stator) {
            const auto alg = plant.static_stator_algebraic(x_eq);
            sp_.i_s = alg.first;
            sp_.v = alg.second;
        } else {
            sp_.v = sp_.xi;
            sp_.i_s = maps.e * sp_.i_t;
        }
        if (spec_.i_t_star.size()) {
            require(spec_.i_t_star.size() == 2 * m, "i_t_star: expected 2m entries");
            sp_.i_t = spec_.i_t_star;
        }
        if (spec_.v_star.size()) {
            require(spec_.v_star.size() == 2 * n, "v_star: expected 2n entries");
            sp_.v = spec_.v_star;
        }
        sp_.tau_e = plant.electrical_torque_at(x_eq);
        kp_ = spec_.use_kp ? g.node_vec(&NodeParams::k_p) : Vec::Zero(n);

        const Mat jn = j_blocks(n);
        switch (spec_.law) {
        case Law::open_loop:
            if (spec_.tau_feedforward.size() == 0) spec_.tau_feedforward = sp_.tau_e;
            require(spec_.tau_feedforward.size() == n, "tau_feedforward: expected one torque per node");
            break;
        case Law::comm_feedback_linearization:
            if (!g.topology.has_comm())
                fail(ErrorCategory::validation, "comm_feedback_linearization needs comm_edges");
            if (spec_.candidate == Candidate::s_hat)
                fail(ErrorCategory::unsupported, "the s_hat candidate is not offered as a stabilizing law");
            lap_ = flux_laplacian(g.topology.comm_incidence(), g.topology.comm_weights());
            break;
        case Law::decoupled_reference: break;
        case Law::incremental_full: {
            k_ = incremental_gain(maps);
            skew_pi1_ = skew_part(maps.pi1);
            i_im_star_ = incremental_offset(maps, sp_.xi);
            break;
        }
        case Law::reduced_decentralized:
        case Law::simplified_full_decentralized: {
            const auto alpha = uniform_line_ratio(g);
            if (!alpha) fail(ErrorCategory::validation, "law requires a uniform R_t/L_t ratio on every line");
            require(m > 0, "law requires at least one line");
            const Mat zt_inv_t = Lu(Mat(maps.z_t.transpose())).inverse();
            const Mat lt = diag_i2(g.line_vec(&LineParams::l_t));
            const Mat rt = diag_i2(g.line_vec(&LineParams::r_t));
            // Identical 2x2 blocks on every line under a uniform ratio.
            kappa_r_ = (zt_inv_t * rt).block<2, 2>(0, 0);
            kappa_l_ = (zt_inv_t * g.omega0 * j_blocks(m) * lt).block<2, 2>(0, 0);
            grad_line_ = maps.e * zt_inv_t * g.omega0 * j_blocks(m) * lt;  // 𝐄 Z_t⁻ᵀ ω₀𝒋 L_t
            if (spec_.law == Law::reduced_decentralized)
                ident_ = Lu(maps.z_t).solve(Mat(maps.e.transpose()));  // î_t = Z_t⁻¹𝐄ᵀ ξ
            else
                ident_ = maps.pi3;
            break;
        }
        case Law::full_decentralized_exact:
        case Law::full_decentralized_approx:
            cap_ = g.omega0 * jn * diag_i2(g.node_vec(&NodeParams::c));  // ω₀𝒋C
            break;
        }
    }

    const ControllerSpec& spec() const { return spec_; }
    const Setpoints& setpoints() const { return sp_; }
    const Plant& plant() const { return plant_; }
    Law law() const { return spec_.law; }
    const Vec& kp() const { return kp_; }

    /// τ̃ for a packed dq state.
    Vec torque(const Vec& x) const {
        const auto& lay = plant_.layout();
        const Grid& g = plant_.grid();
        const auto& maps = plant_.maps();
        const int n = lay.n;
        const Vec theta = x.segment(0, n);
        const Vec omega = x.segment(n, n);
        const Mat a = emf_map(g, theta);
        Vec tau;
        switch (spec_.law) {
        case Law::open_loop: tau = spec_.tau_feedforward; break;
        case Law::comm_feedback_linearization:
        case Law::decoupled_reference: tau = plant_.electrical_torque_at(x) - gradient(theta); break;
        case Law::incremental_full: {
            const Vec is = x.segment(lay.i_s(), 2 * n);
            tau = a.transpose() * (k_ * is + i_im_star_);
            break;
        }
        case Law::reduced_decentralized: {
            const Vec inj = maps.e * x.segment(lay.i_t(), 2 * lay.m);
            const Vec inj_star = maps.e * sp_.i_t;
            tau.resize(n);
            for (int k = 0; k < n; ++k) {
                const Eigen::Vector2d local = kappa_r_ * inj.segment<2>(2 * k) - kappa_l_ * inj_star.segment<2>(2 * k);
                tau(k) = a.col(k).segment<2>(2 * k).dot(local);
            }
            break;
        }
        case Law::simplified_full_decentralized: {
            const Vec it = x.segment(lay.i_t(), 2 * lay.m);
            const Vec dinj = maps.e * (it - sp_.i_t);
            tau = plant_.electrical_torque_at(x);
            if (spec_.approximate) {
                const Vec v = plant_.static_stator_algebraic(x).second;
                for (int k = 0; k < n; ++k)
                    tau(k) += v.segment<2>(2 * k).dot(kappa_l_ * dinj.segment<2>(2 * k)) / g.omega0;
            } else {
                tau += a.transpose() * (maps.pi2.transpose() * (grad_line_ * (it - sp_.i_t)));
            }
            break;
        }
        case Law::full_decentralized_exact:
        case Law::full_decentralized_approx: {
            const Vec is = x.segment(lay.i_s(), 2 * n);
            const Vec v = x.segment(lay.v(), 2 * n);
            const Vec dv = cap_ * (v - sp_.v);
            tau = a.transpose() * is;
            if (spec_.law == Law::full_decentralized_exact) {
                tau += a.transpose() * (maps.pi2.transpose() * dv);
            } else {
                for (int k = 0; k < n; ++k) tau(k) += v.segment<2>(2 * k).dot(dv.segment<2>(2 * k)) / g.omega0;
            }
            break;
        }
        }
        return tau - kp_.cwiseProduct(omega);
    }

    /// Potential S(θ) whose gradient the closed loop realizes.
    double potential(const Vec& theta) const {
        const Grid& g = plant_.grid();
        const auto& maps = plant_.maps();
        switch (spec_.law) {
        case Law::open_loop: return 0.0;
        case Law::comm_feedback_linearization:
            return energy_candidate(spec_.candidate, g, lap_, theta, sp_.theta);
        case Law::decoupled_reference: return decoupled_energy(g, theta, sp_.theta);
        case Law::incremental_full: {
            // ½ Δξᵀ Πᵀ diag(L_s, −C, L_t) Π Δξ
            const Vec dxi = emf(g, theta) - sp_.xi;
            const Vec is = maps.pi1 * dxi, v = maps.pi2 * dxi, it = maps.pi3 * dxi;
            double s = 0.0;
            for (int k = 0; k < g.n(); ++k)
                s += g.nodes[k].l_s * is.segment<2>(2 * k).squaredNorm() - g.nodes[k].c * v.segment<2>(2 * k).squaredNorm();
            for (int k = 0; k < g.m(); ++k) s += g.lines[k].l_t * it.segment<2>(2 * k).squaredNorm();
            return 0.5 * s;
        }
        case Law::reduced_decentralized:
        case Law::simplified_full_decentralized: {
            const Vec d = ident_ * emf(g, theta) - sp_.i_t;
            double s = 0.0;
            for (int k = 0; k < g.m(); ++k) s += g.lines[k].l_t * d.segment<2>(2 * k).squaredNorm();
            return 0.5 * s;
        }
        case Law::full_decentralized_exact:
        case Law::full_decentralized_approx: {
            const Vec d = maps.pi2 * emf(g, theta) - sp_.v;
            double s = 0.0;
            for (int k = 0; k < g.n(); ++k) s += g.nodes[k].c * d.segment<2>(2 * k).squaredNorm();
            return 0.5 * s;
        }
        }
        return 0.0;
    }

    /// ∇S as realized inside the closed loop.
    Vec gradient(const Vec& theta) const {
        const Grid& g = plant_.grid();
        const auto& maps = plant_.maps();
        const Mat a = emf_map(g, theta);
        switch (spec_.law) {
        case Law::open_loop: return Vec::Zero(g.n());
        case Law::comm_feedback_linearization:
            return energy_candidate_gradient(spec_.candidate, g, lap_, theta, sp_.theta);
        case Law::decoupled_reference: return decoupled_gradient(g, theta, sp_.theta);
        case Law::incremental_full: return a.transpose() * (skew_pi1_ * emf(g, theta) - i_im_star_);
        case Law::reduced_decentralized: return -a.transpose() * (grad_line_ * (ident_ * emf(g, theta) - sp_.i_t));
        case Law::simplified_full_decentralized:
            return -a.transpose() * (maps.pi2.transpose() * (grad_line_ * (ident_ * emf(g, theta) - sp_.i_t)));
        case Law::full_decentralized_exact:
        case Law::full_decentralized_approx:
            return -a.transpose() * (maps.pi2.transpose() * (cap_ * (maps.pi2 * emf(g, theta) - sp_.v)));
        }
        return Vec();
    }

    /// Gain K of the incremental law (empty for other laws).
    const Mat& gain() const { return k_; }

    /// Closed-loop derivative at a dq state.
    Vec closed_loop_rhs(double t, const Vec& x) const { return plant_.rhs(t, x, torque(x)); }

private:
    const Plant& plant_;
    ControllerSpec spec_;
    Setpoints sp_;
    Vec kp_;
    Mat lap_, k_, skew_pi1_, grad_line_, ident_, cap_;
    Vec i_im_star_;
    Eigen::Matrix2d kappa_r_ = Eigen::Matrix2d::Zero(), kappa_l_ = Eigen::Matrix2d::Zero();
};

/// Off-block-diagonal share ‖K − blockdiag(K)‖/‖K‖ of a 2n x 2n matrix.
inline double off_block_diagonal_ratio(const Mat& k) {
    Mat off = k;
    for (Eigen::Index b = 0; b + 1 < k.rows(); b += 2) off.block<2, 2>(b, b).setZero();
    return off.norm() / std::max(1e-300, k.norm());
}

}  // namespace gridsync
