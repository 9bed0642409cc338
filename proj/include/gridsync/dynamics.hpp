#pragma once

#include "gridsync/network.hpp"

#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace gridsync {

enum class ModelVariant { reduced, static_stator, full };
enum class Frame { dq, alphabeta };

inline const char* variant_name(ModelVariant v) {
    switch (v) {
    case ModelVariant::reduced: return "reduced";
    case ModelVariant::static_stator: return "static_stator";
    case ModelVariant::full: return "full";
    }
    return "unknown";
}

inline bool has_stator_states(ModelVariant v) { return v == ModelVariant::full; }

/// Model state. In the dq frame `omega` is the deviation ω̃ from ω₀; in the
/// αβ frame it is the absolute frequency. i_s and v are empty unless the
/// variant is full. Currents follow the generator convention: i_s is
/// injected by the machine into its bus.
struct SimState {
    Frame frame = Frame::dq;
    double t = 0.0;
    Vec theta, omega, i_s, v, i_t;
};

struct StateLayout {
    ModelVariant variant = ModelVariant::full;
    int n = 0;
    int m = 0;

    int theta() const { return 0; }
    int omega() const { return n; }
    int i_s() const { return 2 * n; }
    int v() const { return 4 * n; }
    int i_t() const { return has_stator_states(variant) ? 6 * n : 2 * n; }
    int size() const { return i_t() + 2 * m; }

    Vec pack(const SimState& s) const {
        check(s);
        Vec x(size());
        x.segment(theta(), n) = s.theta;
        x.segment(omega(), n) = s.omega;
        if (has_stator_states(variant)) {
            x.segment(i_s(), 2 * n) = s.i_s;
            x.segment(v(), 2 * n) = s.v;
        }
        x.segment(i_t(), 2 * m) = s.i_t;
        return x;
    }

    SimState unpack(const Vec& x, Frame frame = Frame::dq, double t = 0.0) const {
        if (x.size() != size())
            fail(ErrorCategory::validation, "state has dimension " + std::to_string(x.size()) + ", expected " +
                                                std::to_string(size()));
        SimState s;
        s.frame = frame;
        s.t = t;
        s.theta = x.segment(theta(), n);
        s.omega = x.segment(omega(), n);
        if (has_stator_states(variant)) {
            s.i_s = x.segment(i_s(), 2 * n);
            s.v = x.segment(v(), 2 * n);
        }
        s.i_t = x.segment(i_t(), 2 * m);
        return s;
    }

    void check(const SimState& s) const {
        const bool stator = has_stator_states(variant);
        if (s.theta.size() != n || s.omega.size() != n || s.i_t.size() != 2 * m ||
            s.i_s.size() != (stator ? 2 * n : 0) || s.v.size() != (stator ? 2 * n : 0))
            fail(ErrorCategory::validation, std::string("state shape does not match the ") + variant_name(variant) +
                                                " model");
    }
};

/// Rotate the electrical vectors between the αβ and dq frames at the state's time.
inline SimState frame_convert(const SimState& s, Frame target, double omega0) {
    if (s.frame == target) return s;
    const double sign = target == Frame::alphabeta ? 1.0 : -1.0;
    const double angle = sign * omega0 * s.t;
    const Eigen::Matrix2d r = rot2(angle);
    auto rotate = [&](const Vec& x) {
        Vec y(x.size());
        for (Eigen::Index k = 0; k + 1 < x.size(); k += 2) y.segment<2>(k) = r * x.segment<2>(k);
        return y;
    };
    SimState out = s;
    out.frame = target;
    out.theta = s.theta.array() + angle;
    out.omega = s.omega.array() + sign * omega0;
    out.i_s = rotate(s.i_s);
    out.v = rotate(s.v);
    out.i_t = rotate(s.i_t);
    return out;
}

/// Open-loop plant: θ, frequency, and electrical dynamics for one model variant.
/// The torque input is the deviation τ̃ from the nominal mechanical input
/// (D ω₀, or D′ω₀ for the static-stator model).
class Plant {
public:
    Plant(const Grid& grid, ModelVariant variant, Frame frame = Frame::dq)
        : grid_(grid), variant_(variant), frame_(frame), maps_(build_pi(grid)),
          layout_{variant, grid.n(), grid.m()} {
        if (variant == ModelVariant::static_stator && frame == Frame::alphabeta)
            fail(ErrorCategory::unsupported, "static-stator model is defined in the dq frame only");
        auto positive = [](const Vec& x, const std::string& what) {
            for (Eigen::Index k = 0; k < x.size(); ++k)
                require(x(k) > 0.0, what + "[" + std::to_string(k) + "] must be positive for dynamic simulation");
        };
        positive(grid.line_vec(&LineParams::l_t), "l_t_henry");
        m_inv_ = grid.node_vec(&NodeParams::m).cwiseInverse();
        damping_ = variant == ModelVariant::static_stator ? maps_.d_prime : grid.node_vec(&NodeParams::d);
        amp_ = grid.flux_amplitude();
        const bool dq = frame == Frame::dq;
        const Vec lt_inv = grid.line_vec(&LineParams::l_t).cwiseInverse();
        const Mat lt_inv_b = diag_i2(lt_inv);
        const Mat rt = diag_i2(grid.line_vec(&LineParams::r_t));
        const Mat et = maps_.e.transpose();
        if (variant == ModelVariant::full) {
            positive(grid.node_vec(&NodeParams::l_s), "l_s_henry");
            positive(grid.node_vec(&NodeParams::c), "c_farad");
            ls_inv_ = diag_i2(grid.node_vec(&NodeParams::l_s).cwiseInverse());
            c_inv_ = diag_i2(grid.node_vec(&NodeParams::c).cwiseInverse());
            const Mat zs = dq ? maps_.z_s : diag_i2(grid.node_vec(&NodeParams::r_s));
            const Mat yc = dq ? maps_.y_c : diag_i2(grid.node_vec(&NodeParams::g));
            a_is_ = -ls_inv_ * zs;
            a_v_ = -c_inv_ * yc;
            a_vit_ = -c_inv_ * maps_.e;
            a_it_ = -lt_inv_b * (dq ? maps_.z_t : rt);
            a_itv_ = lt_inv_b * et;
        } else {
            const Mat zt = variant == ModelVariant::static_stator ? maps_.z_t_prime : (dq ? maps_.z_t : rt);
            a_it_ = -lt_inv_b * zt;
            // Nodal injection and EMF coupling into the lines.
            inj_ = variant == ModelVariant::static_stator ? Mat(maps_.stator_coupling * maps_.e) : maps_.e;
            emf_to_lines_ = variant == ModelVariant::static_stator ? Mat(lt_inv_b * et * maps_.stator_coupling)
                                                                  : Mat(lt_inv_b * et);
        }
    }

    const Grid& grid() const { return grid_; }
    const SteadyStateMaps& maps() const { return maps_; }
    const StateLayout& layout() const { return layout_; }
    ModelVariant variant() const { return variant_; }
    Frame frame() const { return frame_; }
    int dim() const { return layout_.size(); }

    /// Current injected by the machines into the network (i_s for the full
    /// model, the stator-filtered nodal injection otherwise).
    Vec machine_current(const Vec& x) const {
        if (variant_ == ModelVariant::full) return x.segment(layout_.i_s(), 2 * layout_.n);
        return inj_ * x.segment(layout_.i_t(), 2 * layout_.m);
    }

    Vec rhs(double /*t*/, const Vec& x, const Vec& tau) const {
        if (x.size() != dim())
            fail(ErrorCategory::validation, "rhs: state dimension " + std::to_string(x.size()) + ", expected " +
                                                std::to_string(dim()));
        if (tau.size() != layout_.n) fail(ErrorCategory::validation, "rhs: torque dimension mismatch");
        const int n = layout_.n, m = layout_.m;
        const bool dq = frame_ == Frame::dq;
        Vec dx(dim());
        const auto theta = x.segment(0, n);
        const auto omega = x.segment(n, n);
        dx.segment(0, n) = omega;

        // EMF per unit speed, and the speed that multiplies it.
        Vec emf_dir(2 * n);
        for (int k = 0; k < n; ++k) {
            emf_dir(2 * k) = -amp_(k) * std::sin(theta(k));
            emf_dir(2 * k + 1) = amp_(k) * std::cos(theta(k));
        }
        Vec emf_v(2 * n);
        for (int k = 0; k < n; ++k) {
            const double w = dq ? omega(k) + grid_.omega0 : omega(k);
            emf_v.segment<2>(2 * k) = emf_dir.segment<2>(2 * k) * w;
        }
        const Vec i_m = machine_current(x);
        for (int k = 0; k < n; ++k) {
            const double tau_e = emf_dir.segment<2>(2 * k).dot(i_m.segment<2>(2 * k));
            const double w_dev = dq ? omega(k) : omega(k) - grid_.omega0;
            dx(n + k) = m_inv_(k) * (-damping_(k) * w_dev + tau(k) - tau_e);
        }
        const auto i_t = x.segment(layout_.i_t(), 2 * m);
        if (variant_ == ModelVariant::full) {
            const auto i_s = x.segment(layout_.i_s(), 2 * n);
            const auto v = x.segment(layout_.v(), 2 * n);
            dx.segment(layout_.i_s(), 2 * n) = a_is_ * i_s + ls_inv_ * (emf_v - v);
            dx.segment(layout_.v(), 2 * n) = c_inv_ * i_s + a_v_ * v + a_vit_ * i_t;
            if (m) dx.segment(layout_.i_t(), 2 * m) = a_it_ * i_t + a_itv_ * v;
        } else if (m) {
            dx.segment(layout_.i_t(), 2 * m) = a_it_ * i_t + emf_to_lines_ * emf_v;
        }
        return dx;
    }

    /// Per-entry sum of the magnitudes of the terms that make up rhs(x, tau).
    Vec rhs_term_scale(const Vec& x, const Vec& tau) const {
        const int n = layout_.n, m = layout_.m;
        const bool dq = frame_ == Frame::dq;
        Vec s(dim());
        const Vec ax = x.cwiseAbs();
        s.segment(0, n) = ax.segment(n, n);
        Vec emf_v(2 * n), emf_dir(2 * n);
        for (int k = 0; k < n; ++k) {
            const double w = dq ? x(n + k) + grid_.omega0 : x(n + k);
            emf_dir(2 * k) = amp_(k) * std::abs(std::sin(x(k)));
            emf_dir(2 * k + 1) = amp_(k) * std::abs(std::cos(x(k)));
            emf_v.segment<2>(2 * k) = emf_dir.segment<2>(2 * k) * std::abs(w);
        }
        const Vec i_m = machine_current(x).cwiseAbs();
        for (int k = 0; k < n; ++k) {
            const double w_dev = dq ? x(n + k) : x(n + k) - grid_.omega0;
            s(n + k) = m_inv_(k) * (std::abs(damping_(k) * w_dev) + std::abs(tau(k)) +
                                    emf_dir.segment<2>(2 * k).dot(i_m.segment<2>(2 * k)));
        }
        const Vec it = ax.segment(layout_.i_t(), 2 * m);
        if (variant_ == ModelVariant::full) {
            const Vec is = ax.segment(layout_.i_s(), 2 * n), v = ax.segment(layout_.v(), 2 * n);
            s.segment(layout_.i_s(), 2 * n) = a_is_.cwiseAbs() * is + ls_inv_ * (emf_v + v);
            s.segment(layout_.v(), 2 * n) = c_inv_ * is + a_v_.cwiseAbs() * v + a_vit_.cwiseAbs() * it;
            if (m) s.segment(layout_.i_t(), 2 * m) = a_it_.cwiseAbs() * it + a_itv_.cwiseAbs() * v;
        } else if (m) {
            s.segment(layout_.i_t(), 2 * m) = a_it_.cwiseAbs() * it + emf_to_lines_.cwiseAbs() * emf_v;
        }
        return s;
    }

    /// Equilibrium in the dq frame at angles θ: ω̃ = 0 and electrical states on the steady map.
    Vec equilibrium(const Vec& theta) const {
        const SteadyState ss = steady_state(maps_, emf(grid_, theta));
        SimState s;
        s.theta = theta;
        s.omega = Vec::Zero(layout_.n);
        if (variant_ == ModelVariant::full) {
            s.i_s = ss.i_s;
            s.v = ss.v;
            s.i_t = ss.i_t;
        } else if (variant_ == ModelVariant::reduced) {
            s.i_t = grid_.m() ? Vec(Lu(maps_.z_t).solve(Vec(maps_.e.transpose() * ss.xi))) : Vec(0);
        } else {
            s.i_t = ss.i_t;
        }
        return layout_.pack(s);
    }

    /// Electrical torque at a packed state (dq or αβ alike).
    Vec electrical_torque_at(const Vec& x) const {
        return electrical_torque(grid_, x.segment(0, layout_.n), machine_current(x));
    }

    /// Stator current and bus voltage of the static-stator model recovered algebraically.
    std::pair<Vec, Vec> static_stator_algebraic(const Vec& x) const {
        require(variant_ == ModelVariant::static_stator, "static_stator_algebraic: wrong variant");
        const int n = layout_.n;
        Vec w = Vec::Ones(n) * grid_.omega0 + x.segment(n, n);
        const Vec xi = emf_map(grid_, x.segment(0, n)) * w;
        const Vec it = x.segment(layout_.i_t(), 2 * layout_.m);
        const Mat shunt_path = maps_.stator_coupling * maps_.z_s;
        const Vec v = maps_.stator_coupling * xi - shunt_path * (maps_.e * it);
        const Vec is = maps_.y_c * v + maps_.e * it;
        return {is, v};
    }

private:
    Grid grid_;
    ModelVariant variant_;
    Frame frame_;
    SteadyStateMaps maps_;
    StateLayout layout_;
    Vec m_inv_, damping_, amp_;
    Mat ls_inv_, c_inv_, a_is_, a_v_, a_vit_, a_it_, a_itv_, inj_, emf_to_lines_;
};

inline SimState derivative(const Plant& plant, const SimState& s, const Vec& tau) {
    const Vec dx = plant.rhs(s.t, plant.layout().pack(s), tau);
    return plant.layout().unpack(dx, s.frame, s.t);
}

/// Largest entry of |rhs| relative to the magnitude of the terms in the same row.
inline double relative_residual(const Plant& plant, const Vec& x, const Vec& tau) {
    const Vec r = plant.rhs(0.0, x, tau);
    const Vec s = plant.rhs_term_scale(x, tau);
    double worst = 0.0;
    for (Eigen::Index k = 0; k < r.size(); ++k)
        if (r(k) != 0.0) worst = std::max(worst, std::abs(r(k)) / std::max(s(k), 1e-300));
    return worst;
}

/// Classical fixed-step RK4. The step is shrunk slightly so that a whole number of steps
/// lands on t_end. `observe(t, x)` is called at t0, after every `every` steps, and at the end.
template <class F, class Observer>
Vec rk4(F&& f, Vec x, double t0, double t_end, double dt, int every, Observer&& observe) {
    require(dt > 0.0 && std::isfinite(dt), "dt must be positive");
    require(t_end - t0 >= dt * (1.0 - 1e-12), "t_end must be at least one step past t0");
    require(every >= 1, "sampling interval must be at least 1");
    const long steps = std::max(1L, std::lround((t_end - t0) / dt));
    dt = (t_end - t0) / static_cast<double>(steps);
    observe(t0, x);
    for (long s = 1; s <= steps; ++s) {
        const double t = t0 + (s - 1) * dt;
        const Vec k1 = f(t, x);
        const Vec k2 = f(t + 0.5 * dt, Vec(x + 0.5 * dt * k1));
        const Vec k3 = f(t + 0.5 * dt, Vec(x + 0.5 * dt * k2));
        const Vec k4 = f(t + dt, Vec(x + dt * k3));
        x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!x.allFinite())
            fail(ErrorCategory::numerical, "state became non-finite at t=" + std::to_string(t0 + s * dt));
        if (s % every == 0 || s == steps) observe(t0 + s * dt, x);
    }
    return x;
}

/// Largest eigenvalue modulus of the linearized open-loop electrical subsystem (dq, θ frozen).
inline double electrical_spectral_radius(const Plant& plant) {
    const int n = plant.layout().n;
    const int dim = plant.dim();
    const Vec x0 = plant.equilibrium(Vec::Zero(n));
    const Vec tau = Vec::Zero(n);
    const int off = 2 * n;
    const int ne = dim - off;
    if (ne == 0) return 0.0;
    Mat a(ne, ne);
    const Vec f0 = plant.rhs(0.0, x0, tau);
    for (int c = 0; c < ne; ++c) {
        Vec x = x0;
        const double h = 1e-6 * std::max(1.0, std::abs(x0(off + c)));
        x(off + c) += h;
        a.col(c) = (plant.rhs(0.0, x, tau) - f0).segment(off, ne) / h;
    }
    Eigen::EigenSolver<Mat> es(a, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// RK4 step that keeps ρ·dt inside the real-axis stability interval with margin.
inline double stable_rk4_step(const Plant& plant, double margin = 0.5) {
    const double rho = electrical_spectral_radius(plant);
    return rho > 0.0 ? margin * 2.785 / rho : std::numeric_limits<double>::infinity();
}

}  // namespace gridsync
