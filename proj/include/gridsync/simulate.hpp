#pragma once

#include "gridsync/stability.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace gridsync {

/// One recorded point of a closed-loop run.
struct TrajectorySample {
    double t = 0.0;
    Vec x;
    Vec tau;
    double h_tilde = 0.0;
    double grad_norm = 0.0;
};

struct Trajectory {
    std::vector<TrajectorySample> samples;
};

inline TrajectorySample diagnose(const Controller& ctl, double t, const Vec& x) {
    TrajectorySample s;
    s.t = t;
    s.x = x;
    s.tau = ctl.torque(x);
    s.h_tilde = total_energy(ctl, x).h_tilde;
    s.grad_norm = ctl.gradient(x.segment(0, ctl.plant().layout().n)).norm();
    return s;
}

/// Closed-loop RK4 from x0 (dq frame). `observe(sample)` sees every `every`-th step.
template <class Observer>
Vec integrate(const Controller& ctl, const Vec& x0, double t_end, double dt, int every, Observer&& observe) {
    const Plant& plant = ctl.plant();
    require(x0.size() == plant.dim(), "initial state has the wrong dimension");
    return rk4([&](double t, const Vec& x) { return plant.rhs(t, x, ctl.torque(x)); }, x0, 0.0, t_end, dt, every,
               [&](double t, const Vec& x) { observe(diagnose(ctl, t, x)); });
}

inline Trajectory integrate(const Controller& ctl, const Vec& x0, double t_end, double dt, int every = 10) {
    Trajectory tr;
    integrate(ctl, x0, t_end, dt, every, [&](TrajectorySample s) { tr.samples.push_back(std::move(s)); });
    return tr;
}

/// Equilibrium at θ*+δ with δ ~ U(−angle, angle), ω̃ ~ U(−freq, freq), electrical states on the steady map of the
/// perturbed angles.
inline Vec perturbed_equilibrium(const Plant& plant, const Vec& theta_star, std::uint64_t seed, double angle,
                                 double freq) {
    std::mt19937_64 gen(seed);
    auto u = [&](double mag) { return mag * (2.0 * static_cast<double>(gen() >> 11) * 0x1.0p-53 - 1.0); };
    const int n = plant.layout().n;
    Vec theta = theta_star;
    for (int k = 0; k < n; ++k) theta(k) += u(angle);
    Vec x = plant.equilibrium(theta);
    for (int k = 0; k < n; ++k) x(n + k) = u(freq);
    return x;
}

}  // namespace gridsync
