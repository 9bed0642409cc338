#pragma once

#include "gridsync/control.hpp"

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

namespace gridsync {

// ---------------------------------------------------------------------------
// Loop minima

struct LoopClass {
    int winding = 0;
    double angle_sum = 0.0;  ///< 2πk
    bool stable = false;     ///< uniform neighbour difference 2πk/n below π/2
};

struct LoopCount {
    int n = 0;
    int max_minima = 0;  ///< N = 2⌊n/4⌋ + 1
    std::vector<LoopClass> classes;
};

inline LoopCount count_loop_minima(int n) {
    if (n < 3) fail(ErrorCategory::validation, "a loop needs at least 3 generators");
    LoopCount c;
    c.n = n;
    const int a = n / 4;
    c.max_minima = 2 * a + 1;
    for (int k = -a; k <= a; ++k) {
        LoopClass lc;
        lc.winding = k;
        lc.angle_sum = 2.0 * kPi * k;
        lc.stable = std::abs(2.0 * kPi * k / n) < kPi / 2;
        c.classes.push_back(lc);
    }
    return c;
}

/// Winding number Σ wrap(θ_next − θ)/2π around a graph that is a single cycle, walked from node 0.
inline std::optional<int> cycle_winding(int n, const std::vector<Edge>& edges, const Vec& theta) {
    if (n < 3 || static_cast<int>(edges.size()) != n) return std::nullopt;
    std::vector<std::vector<int>> adj(n);
    for (const auto& e : edges) {
        adj[e.from].push_back(e.to);
        adj[e.to].push_back(e.from);
    }
    for (const auto& a : adj)
        if (a.size() != 2) return std::nullopt;
    double sum = 0.0;
    int prev = -1, cur = 0;
    for (int step = 0; step < n; ++step) {
        const int next = adj[cur][0] == prev ? adj[cur][1] : adj[cur][0];
        sum += wrap_angle(theta(next) - theta(cur));
        prev = cur;
        cur = next;
    }
    if (cur != 0) return std::nullopt;
    return static_cast<int>(std::lround(sum / (2.0 * kPi)));
}

// ---------------------------------------------------------------------------
// Energy fields on the torus

enum class FieldId { s_e, s_b, s_bar_b, s_tilde_b, s_hat_b };

inline const char* field_name(FieldId f) {
    switch (f) {
    case FieldId::s_e: return "S_E";
    case FieldId::s_b: return "S_B";
    case FieldId::s_bar_b: return "S_bar_B";
    case FieldId::s_tilde_b: return "S_tilde_B";
    case FieldId::s_hat_b: return "S_hat_B";
    }
    return "unknown";
}

inline std::optional<FieldId> parse_field(const std::string& s) {
    for (FieldId f : {FieldId::s_e, FieldId::s_b, FieldId::s_bar_b, FieldId::s_tilde_b, FieldId::s_hat_b})
        if (s == field_name(f)) return f;
    return std::nullopt;
}

/// S_E couples over the physical lines with unit weights; the S_B family over the communication graph.
class EnergyField {
public:
    EnergyField(FieldId id, Grid grid, Vec theta_star = Vec()) : id_(id), grid_(std::move(grid)) {
        grid_.validate();
        const int n = grid_.n();
        theta_star_ = theta_star.size() ? std::move(theta_star) : Vec::Zero(n);
        require(theta_star_.size() == n, "theta_star: expected one angle per node");
        if (id == FieldId::s_e) {
            edges_ = grid_.topology.edges;
            lap_ = flux_laplacian(grid_.topology.incidence(), Vec::Ones(grid_.m()));
        } else {
            if (!grid_.topology.has_comm()) fail(ErrorCategory::validation, "S_B fields need comm_edges");
            for (const auto& c : grid_.topology.comm) edges_.push_back({c.from, c.to});
            lap_ = flux_laplacian(grid_.topology.comm_incidence(), grid_.topology.comm_weights());
        }
    }

    FieldId id() const { return id_; }
    int n() const { return grid_.n(); }
    const std::vector<Edge>& edges() const { return edges_; }
    const Vec& theta_star() const { return theta_star_; }

    double value(const Vec& theta) const {
        switch (id_) {
        case FieldId::s_e:
        case FieldId::s_b: return s_b(grid_, lap_, theta);
        case FieldId::s_bar_b: return energy_candidate(Candidate::s_bar, grid_, lap_, theta, theta_star_);
        case FieldId::s_tilde_b: return energy_candidate(Candidate::s_tilde, grid_, lap_, theta, theta_star_);
        case FieldId::s_hat_b: return energy_candidate(Candidate::s_hat, grid_, lap_, theta, theta_star_);
        }
        return 0.0;
    }

    Vec gradient(const Vec& theta) const {
        switch (id_) {
        case FieldId::s_e:
        case FieldId::s_b: return grad_s_b(grid_, lap_, theta);
        case FieldId::s_bar_b: return energy_candidate_gradient(Candidate::s_bar, grid_, lap_, theta, theta_star_);
        case FieldId::s_tilde_b: return energy_candidate_gradient(Candidate::s_tilde, grid_, lap_, theta, theta_star_);
        case FieldId::s_hat_b: return energy_candidate_gradient(Candidate::s_hat, grid_, lap_, theta, theta_star_);
        }
        return Vec();
    }

    /// value(θ + 2π e_k) − value(θ); nonzero only for Ŝ_B.
    double wrap_jump(const Vec& theta, int k) const {
        Vec shifted = theta;
        shifted(k) += 2.0 * kPi;
        return value(shifted) - value(theta);
    }

    /// ∇S_B(θ*) of the unshifted coupling energy.
    Vec unshifted_gradient_at_star() const { return grad_s_b(grid_, lap_, theta_star_); }

private:
    FieldId id_;
    Grid grid_;
    Vec theta_star_;
    Mat lap_;
    std::vector<Edge> edges_;
};

// ---------------------------------------------------------------------------
// Landscape sampling

struct LandscapeGrid {
    FieldId field = FieldId::s_b;
    int n = 0;
    int resolution = 0;
    bool fix_reference = false;  ///< node 0 pinned at 0, axes are θ₁…θ_{n−1}
    double raw_min = 0.0, raw_max = 0.0;
    std::vector<double> values;  ///< normalized to [0, 1]; axis 0 varies fastest

    int axes() const { return fix_reference ? n - 1 : n; }
    double step() const { return 2.0 * kPi / resolution; }

    /// Full angle vector at a flat grid index.
    Vec angles(std::size_t index) const {
        Vec theta = Vec::Zero(n);
        const int first = fix_reference ? 1 : 0;
        for (int a = 0; a < axes(); ++a) {
            theta(first + a) = step() * static_cast<double>(index % resolution);
            index /= resolution;
        }
        return theta;
    }
};

inline LandscapeGrid sample_landscape(const EnergyField& field, int resolution, bool fix_reference = false) {
    const int n = field.n();
    if (n > 4) fail(ErrorCategory::validation, "landscape sampling is limited to n <= 4");
    if (resolution < 8) fail(ErrorCategory::validation, "landscape resolution must be at least 8");
    LandscapeGrid lg;
    lg.field = field.id();
    lg.n = n;
    lg.resolution = resolution;
    lg.fix_reference = fix_reference;
    const double total = std::pow(static_cast<double>(resolution), lg.axes());
    if (total > 4e6) fail(ErrorCategory::validation, "landscape grid exceeds 4e6 points; lower the resolution");
    const std::size_t count = static_cast<std::size_t>(total);
    lg.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) lg.values[i] = field.value(lg.angles(i));
    const auto [lo, hi] = std::minmax_element(lg.values.begin(), lg.values.end());
    lg.raw_min = *lo;
    lg.raw_max = *hi;
    const double span = lg.raw_max - lg.raw_min;
    for (double& v : lg.values) v = span > 0.0 ? (v - lg.raw_min) / span : 0.0;
    return lg;
}

/// Connected components of {value <= level} with wrap-around and diagonal neighbours.
inline int sublevel_components(const LandscapeGrid& lg, double level) {
    const int d = lg.axes(), r = lg.resolution;
    const std::size_t count = lg.values.size();
    std::vector<int> label(count, -1);
    int combos = 1;
    for (int a = 0; a < d; ++a) combos *= 3;
    int comps = 0;
    std::vector<std::size_t> stack;
    std::vector<int> coord(d);
    for (std::size_t seed = 0; seed < count; ++seed) {
        if (label[seed] >= 0 || lg.values[seed] > level) continue;
        label[seed] = comps;
        stack.push_back(seed);
        while (!stack.empty()) {
            std::size_t cur = stack.back();
            stack.pop_back();
            std::size_t rest = cur;
            for (int a = 0; a < d; ++a) {
                coord[a] = static_cast<int>(rest % r);
                rest /= r;
            }
            for (int c = 0; c < combos; ++c) {
                int code = c;
                std::size_t idx = 0, mul = 1;
                for (int a = 0; a < d; ++a) {
                    const int shift = code % 3 - 1;
                    code /= 3;
                    idx += static_cast<std::size_t>((coord[a] + shift + r) % r) * mul;
                    mul *= r;
                }
                if (label[idx] < 0 && lg.values[idx] <= level) {
                    label[idx] = comps;
                    stack.push_back(idx);
                }
            }
        }
        ++comps;
    }
    return comps;
}

// ---------------------------------------------------------------------------
// Equilibrium search

enum class CriticalKind { minimum, saddle, maximum, degenerate };

inline const char* critical_kind_name(CriticalKind k) {
    switch (k) {
    case CriticalKind::minimum: return "minimum";
    case CriticalKind::saddle: return "saddle";
    case CriticalKind::maximum: return "maximum";
    case CriticalKind::degenerate: return "degenerate";
    }
    return "unknown";
}

struct Equilibrium {
    Vec theta;  ///< node 0 at 0, others in (−π, π]
    CriticalKind kind = CriticalKind::degenerate;
    Vec hessian_eigenvalues;
    double grad_norm = 0.0;
    std::optional<int> winding;
};

struct EquilibriumSearch {
    int starts_per_axis = 6;
    int max_descent_iters = 20000;
    int max_newton_iters = 30;
    double newton_switch = 1e-4;
    double grad_tol = 1e-8;
    double dedup_tol = 1e-4;
};

namespace detail {

inline Vec with_reference(const Vec& free) {
    Vec theta(free.size() + 1);
    theta << 0.0, free;
    return theta;
}

inline Vec canonical(const Vec& theta) {
    Vec out(theta.size());
    for (Eigen::Index k = 0; k < theta.size(); ++k) out(k) = wrap_angle(theta(k) - theta(0));
    out(0) = 0.0;
    return out;
}

inline Mat free_hessian(const EnergyField& f, const Vec& free) {
    const int d = static_cast<int>(free.size());
    const double h = 1e-5;
    Mat hs(d, d);
    for (int c = 0; c < d; ++c) {
        Vec a = free, b = free;
        a(c) += h;
        b(c) -= h;
        hs.col(c) = (f.gradient(with_reference(a)).tail(d) - f.gradient(with_reference(b)).tail(d)) / (2 * h);
    }
    return sym_part(hs);
}

}  // namespace detail

/// Multistart Armijo descent on θ₁…θ_{n−1} with node 0 fixed, Newton polish, Hessian classification.
inline std::vector<Equilibrium> find_equilibria(const EnergyField& f, const EquilibriumSearch& opt = {}) {
    const int n = f.n();
    if (n > 5) fail(ErrorCategory::validation, "equilibrium search is limited to n <= 5");
    std::vector<Equilibrium> found;
    if (n < 2) return found;
    const int d = n - 1, r = opt.starts_per_axis;
    long total = 1;
    for (int a = 0; a < d; ++a) total *= r;
    auto grad = [&](const Vec& y) { return Vec(f.gradient(detail::with_reference(y)).tail(d)); };
    auto val = [&](const Vec& y) { return f.value(detail::with_reference(y)); };

    for (long s = 0; s < total; ++s) {
        Vec y(d);
        long rest = s;
        // Offsets break the symmetry of grid starts that sit exactly on saddles.
        for (int a = 0; a < d; ++a) {
            y(a) = 2.0 * kPi * ((rest % r) + 0.5 + 0.1 * std::sin(1.7 * (a + 1))) / r - kPi;
            rest /= r;
        }
        Vec g = grad(y);
        double fy = val(y), t = 1.0;
        for (int it = 0; it < opt.max_descent_iters && g.norm() >= opt.newton_switch; ++it) {
            const double gg = g.squaredNorm();
            while (true) {
                const Vec trial = y - t * g;
                const double ft = val(trial);
                if (ft <= fy - 1e-4 * t * gg) {
                    y = trial;
                    fy = ft;
                    t *= 2.0;
                    break;
                }
                t *= 0.5;
                if (t < 1e-300) break;
            }
            g = grad(y);
        }
        if (g.norm() >= opt.newton_switch) continue;
        bool ok = true;
        for (int it = 0; it < opt.max_newton_iters && g.norm() >= opt.grad_tol; ++it) {
            const Mat hs = detail::free_hessian(f, y);
            const Eigen::FullPivLU<Mat> lu(hs);
            if (!lu.isInvertible()) {
                ok = false;
                break;
            }
            y -= lu.solve(g);
            g = grad(y);
        }
        if (!ok || g.norm() >= opt.grad_tol) continue;
        const Vec theta = detail::canonical(detail::with_reference(y));
        bool dup = false;
        for (const auto& e : found) {
            double diff = 0.0;
            for (int k = 0; k < n; ++k) diff = std::max(diff, std::abs(wrap_angle(theta(k) - e.theta(k))));
            if (diff < opt.dedup_tol) {
                dup = true;
                break;
            }
        }
        if (dup) continue;
        Equilibrium eq;
        eq.theta = theta;
        eq.grad_norm = g.norm();
        eq.hessian_eigenvalues = jacobi_eigen(detail::free_hessian(f, y)).values;
        const double scale = std::max(1e-300, eq.hessian_eigenvalues.cwiseAbs().maxCoeff());
        const double lo = eq.hessian_eigenvalues.minCoeff(), hi = eq.hessian_eigenvalues.maxCoeff();
        if (lo > 1e-6 * scale)
            eq.kind = CriticalKind::minimum;
        else if (hi < -1e-6 * scale)
            eq.kind = CriticalKind::maximum;
        else if (lo < -1e-6 * scale && hi > 1e-6 * scale)
            eq.kind = CriticalKind::saddle;
        else
            eq.kind = CriticalKind::degenerate;
        eq.winding = cycle_winding(n, f.edges(), theta);
        found.push_back(eq);
    }
    return found;
}

inline std::vector<Equilibrium> minima_only(const std::vector<Equilibrium>& all) {
    std::vector<Equilibrium> out;
    for (const auto& e : all)
        if (e.kind == CriticalKind::minimum) out.push_back(e);
    return out;
}

}  // namespace gridsync
