#pragma once

#include "gridsync/network.hpp"

#include <complex>
#include <cstdint>
#include <random>
#include <vector>

namespace fixtures {

using gridsync::Grid;
using gridsync::Mat;
using gridsync::Vec;

/// Deterministic uniform doubles in [lo, hi).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}
    double uniform(double lo, double hi) { return lo + (hi - lo) * static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
    int index(int n) { return static_cast<int>(gen_() % static_cast<std::uint64_t>(n)); }
    Vec vec(int n, double lo, double hi) {
        Vec v(n);
        for (int k = 0; k < n; ++k) v(k) = uniform(lo, hi);
        return v;
    }

private:
    std::mt19937_64 gen_;
};

/// Three-machine triangle with the simulated MV parameters (row scale factors applied to every entry).
inline Grid triangle_grid() {
    Grid g;
    g.omega0 = 100.0 * gridsync::kPi;
    g.topology.n = 3;
    g.topology.edges = {{0, 1}, {1, 2}, {2, 0}};
    g.topology.comm = {{0, 1, 1.0}, {1, 2, 1.0}};
    const double m[] = {22e3, 10e3, 45e3}, d[] = {4.0e3, 1.5e3, 8.5e3};
    const double lm[] = {0.04, 0.08, 0.02}, ir[] = {1950, 975, 3900};
    const double gl[] = {0.8, 0.4, 1.0}, rs[] = {0.166, 0.07, 0.5};
    const double ls[] = {0.18e-3, 0.10e-3, 0.66e-3}, c[] = {0.01e-3, 0.2e-3, 4e-3};
    const double rt[] = {0.165, 0.166, 0.07}, lt[] = {4.7e-3, 3.8e-3, 2.4e-3};
    for (int k = 0; k < 3; ++k)
        g.nodes.push_back({m[k], d[k], 5.0 * d[k], lm[k], ir[k], rs[k], ls[k], gl[k], c[k]});
    for (int k = 0; k < 3; ++k) g.lines.push_back({rt[k], lt[k]});
    return g;
}

/// Same triangle with every line sharing the first line's R/L ratio.
inline Grid uniform_ratio_triangle() {
    Grid g = triangle_grid();
    const double alpha = g.lines[0].r_t / g.lines[0].l_t;
    for (auto& l : g.lines) l.r_t = alpha * l.l_t;
    return g;
}

inline Vec acceptance_theta_star() {
    Vec t(3);
    t << 0.0, -0.1, 0.05;
    return t;
}

/// Random connected network: a random spanning tree plus extra edges.
inline Grid random_grid(Rng& rng, int n, bool uniform_ratio = false, int extra_edges = -1) {
    Grid g;
    g.omega0 = 100.0 * gridsync::kPi;
    g.topology.n = n;
    for (int k = 1; k < n; ++k) g.topology.edges.push_back({rng.index(k), k});
    if (extra_edges < 0) extra_edges = n > 2 ? rng.index(n - 1) : 0;
    for (int e = 0; e < extra_edges; ++e) {
        const int a = rng.index(n), b = rng.index(n);
        if (a != b) g.topology.edges.push_back({a, b});
    }
    for (int k = 1; k < n; ++k) g.topology.comm.push_back({k - 1, k, rng.uniform(0.5, 2.0)});
    for (int k = 0; k < n; ++k) {
        gridsync::NodeParams p;
        p.m = rng.uniform(1e3, 5e4);
        p.d = rng.uniform(1e3, 1e4);
        p.k_p = rng.uniform(0.0, 5.0) * p.d;
        p.l_m = rng.uniform(0.02, 0.1);
        p.i_r_star = rng.uniform(500.0, 4000.0);
        p.r_s = rng.uniform(0.05, 0.5);
        p.l_s = rng.uniform(1e-4, 1e-3);
        p.g = rng.uniform(0.2, 1.5);
        p.c = rng.uniform(1e-5, 4e-3);
        g.nodes.push_back(p);
    }
    const double alpha = rng.uniform(20.0, 60.0);
    for (int e = 0; e < g.m(); ++e) {
        gridsync::LineParams l;
        l.l_t = rng.uniform(1e-3, 6e-3);
        l.r_t = uniform_ratio ? alpha * l.l_t : rng.uniform(0.05, 0.3);
        g.lines.push_back(l);
    }
    return g;
}

using cplx = std::complex<double>;

/// Nodal phasor solve of the network driven by EMFs (generator convention).
struct PhasorSolution {
    std::vector<cplx> v, i_s, i_t;
};

inline PhasorSolution phasor_solve(const Grid& g, const std::vector<cplx>& emf) {
    const int n = g.n(), m = g.m();
    const double w = g.omega0;
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
    Eigen::VectorXcd rhs(n);
    for (int k = 0; k < n; ++k) {
        const auto& p = g.nodes[k];
        const cplx ys = 1.0 / cplx(p.r_s, w * p.l_s);
        y(k, k) += ys + cplx(p.g, w * p.c);
        rhs(k) = ys * emf[k];
    }
    for (int e = 0; e < m; ++e) {
        const auto& ed = g.topology.edges[e];
        const cplx yl = 1.0 / cplx(g.lines[e].r_t, w * g.lines[e].l_t);
        y(ed.from, ed.from) += yl;
        y(ed.to, ed.to) += yl;
        y(ed.from, ed.to) -= yl;
        y(ed.to, ed.from) -= yl;
    }
    const Eigen::VectorXcd v = y.fullPivLu().solve(rhs);
    PhasorSolution s;
    for (int k = 0; k < n; ++k) {
        s.v.push_back(v(k));
        s.i_s.push_back((emf[k] - v(k)) / cplx(g.nodes[k].r_s, w * g.nodes[k].l_s));
    }
    for (int e = 0; e < m; ++e) {
        const auto& ed = g.topology.edges[e];
        s.i_t.push_back((v(ed.from) - v(ed.to)) / cplx(g.lines[e].r_t, w * g.lines[e].l_t));
    }
    return s;
}

inline std::vector<cplx> to_phasors(const Vec& x) {
    std::vector<cplx> out;
    for (Eigen::Index k = 0; k + 1 < x.size(); k += 2) out.emplace_back(x(k), x(k + 1));
    return out;
}

inline Vec from_phasors(const std::vector<cplx>& z) {
    Vec x(2 * z.size());
    for (std::size_t k = 0; k < z.size(); ++k) {
        x(2 * k) = z[k].real();
        x(2 * k + 1) = z[k].imag();
    }
    return x;
}

inline double rel_err(const Vec& a, const Vec& b) { return (a - b).norm() / std::max(1e-300, b.norm()); }
inline double rel_err(const Mat& a, const Mat& b) { return (a - b).norm() / std::max(1e-300, b.norm()); }

}  // namespace fixtures
