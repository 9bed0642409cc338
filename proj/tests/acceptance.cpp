// Acceptance checks. `acceptance` runs every criterion; `acceptance 4 9` runs a subset.
// One line per criterion; the exit status is nonzero when any requested criterion fails.
#include "fixtures.hpp"
#include "gridsync/cycles.hpp"
#include "gridsync/opf.hpp"
#include "gridsync/simulate.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace gridsync;
using fixtures::cplx;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

// ---------------------------------------------------------------------------

Verdict steady_map_oracle() {
    fixtures::Rng rng(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const Grid g = fixtures::random_grid(rng, 1 + rng.index(6));
        const auto maps = build_pi(g);
        const Vec xi = rng.vec(2 * g.n(), -300.0, 300.0);
        const auto ph = fixtures::phasor_solve(g, fixtures::to_phasors(xi));
        const SteadyState ss = steady_state(maps, xi);
        worst = std::max(worst, fixtures::rel_err(ss.i_s, fixtures::from_phasors(ph.i_s)));
        worst = std::max(worst, fixtures::rel_err(ss.v, fixtures::from_phasors(ph.v)));
        if (g.m()) worst = std::max(worst, fixtures::rel_err(ss.i_t, fixtures::from_phasors(ph.i_t)));
    }
    return {worst < 1e-9, "worst relative error " + fmt("%.2e", worst) + " over 100 networks"};
}

// ---------------------------------------------------------------------------

struct LawCase {
    Law law;
    ModelVariant variant;
    Candidate candidate = Candidate::s_bar;
    bool approximate = false;
};

std::vector<LawCase> law_cases() {
    std::vector<LawCase> out;
    for (auto v : {ModelVariant::reduced, ModelVariant::static_stator, ModelVariant::full}) {
        out.push_back({Law::open_loop, v});
        out.push_back({Law::comm_feedback_linearization, v, Candidate::s_bar});
        out.push_back({Law::comm_feedback_linearization, v, Candidate::s_tilde});
        out.push_back({Law::decoupled_reference, v});
    }
    out.push_back({Law::incremental_full, ModelVariant::full});
    out.push_back({Law::reduced_decentralized, ModelVariant::reduced});
    out.push_back({Law::simplified_full_decentralized, ModelVariant::static_stator, Candidate::s_bar, false});
    out.push_back({Law::simplified_full_decentralized, ModelVariant::static_stator, Candidate::s_bar, true});
    out.push_back({Law::full_decentralized_exact, ModelVariant::full});
    out.push_back({Law::full_decentralized_approx, ModelVariant::full});
    return out;
}

ControllerSpec spec_for(const LawCase& c, const Vec& theta_star) {
    ControllerSpec s;
    s.law = c.law;
    s.theta_star = theta_star;
    s.candidate = c.candidate;
    s.approximate = c.approximate;
    return s;
}

std::vector<Grid> uniform_grids() {
    std::vector<Grid> out{fixtures::uniform_ratio_triangle()};
    fixtures::Rng rng(77);
    for (int k = 0; k < 5; ++k) out.push_back(fixtures::random_grid(rng, 2 + rng.index(4), true));
    return out;
}

Verdict equilibrium_fixed_point() {
    fixtures::Rng rng(5);
    double worst = 0.0;
    int runs = 0;
    std::vector<Grid> grids = uniform_grids();
    grids.push_back(fixtures::triangle_grid());
    for (const Grid& g : grids) {
        const Vec ts = g.n() == 3 ? fixtures::acceptance_theta_star() : rng.vec(g.n(), -0.2, 0.2);
        const bool uniform = uniform_line_ratio(g).has_value();
        for (const auto& c : law_cases()) {
            const bool needs_uniform =
                c.law == Law::reduced_decentralized || c.law == Law::simplified_full_decentralized;
            if (needs_uniform && !uniform) continue;
            const Plant plant(g, c.variant);
            const Controller ctl(plant, spec_for(c, ts));
            const Vec x = plant.equilibrium(ts);
            worst = std::max(worst, relative_residual(plant, x, ctl.torque(x)));
            ++runs;
        }
    }
    return {worst < 1e-9, "worst relative residual " + fmt("%.2e", worst) + " over " + std::to_string(runs) +
                              " law/variant/network combinations"};
}

// ---------------------------------------------------------------------------

Vec central_difference(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
    Vec g(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        auto at = [&](double s) {
            Vec y = x;
            y(k) += s * h;
            return f(y);
        };
        g(k) = (8.0 * (at(1) - at(-1)) - (at(2) - at(-2))) / (12.0 * h);
    }
    return g;
}

Verdict gradient_correctness() {
    fixtures::Rng rng(31);
    double worst = 0.0;
    int laws = 0;
    const Vec ts = fixtures::acceptance_theta_star();
    auto check = [&](const std::function<double(const Vec&)>& f, const std::function<Vec(const Vec&)>& grad) {
        for (int trial = 0; trial < 50; ++trial) {
            const Vec theta = rng.vec(3, -kPi, kPi);
            const Vec g = grad(theta);
            const Vec fd = central_difference(f, theta, 1e-4);
            worst = std::max(worst, (fd - g).norm() / std::max(g.norm(), 1e-3));
        }
        ++laws;
    };
    for (const auto& c : law_cases()) {
        if (c.law == Law::open_loop) continue;
        const Grid g = (c.law == Law::reduced_decentralized || c.law == Law::simplified_full_decentralized)
                           ? fixtures::uniform_ratio_triangle()
                           : fixtures::triangle_grid();
        const Plant plant(g, c.variant);
        const Controller ctl(plant, spec_for(c, ts));
        check([&](const Vec& t) { return ctl.potential(t); }, [&](const Vec& t) { return ctl.gradient(t); });
    }
    const Grid g = fixtures::triangle_grid();
    const Mat lap = flux_laplacian(g.topology.comm_incidence(), g.topology.comm_weights());
    for (auto which : {Candidate::s_bar, Candidate::s_tilde, Candidate::s_hat})
        check([&](const Vec& t) { return energy_candidate(which, g, lap, t, ts); },
              [&](const Vec& t) { return energy_candidate_gradient(which, g, lap, t, ts); });
    return {worst < 1e-6, "worst relative gradient error " + fmt("%.2e", worst) + " over " + std::to_string(laws) +
                              " energies x 50 states"};
}

// ---------------------------------------------------------------------------
// Table triangle under the full decentralized laws.

struct RunSummary {
    double horizon = 0.0;
    double h0 = 0.0;
    double worst_increase = 0.0;
    Vec final_ratios;           ///< |v − v*|, |i_t − i_t*|, |ω̃| at the horizon over their initial values
    std::vector<Vec> omega;     ///< ω̃ every `kOmegaStride` steps
};

constexpr int kOmegaStride = 10;

const RunSummary& table_run(Law law, double horizon) {
    static std::map<Law, RunSummary> cache;
    auto it = cache.find(law);
    if (it != cache.end() && it->second.horizon >= horizon) return it->second;

    const Grid g = fixtures::triangle_grid();
    const Plant p(g, ModelVariant::full);
    const Vec ts = fixtures::acceptance_theta_star();
    ControllerSpec spec;
    spec.law = law;
    spec.theta_star = ts;
    const Controller ctl(p, spec);
    const Vec x0 = perturbed_equilibrium(p, ts, 1, 0.3, 0.3);
    const Vec xs = p.equilibrium(ts);
    const auto& lay = p.layout();
    auto errors = [&](const Vec& x) {
        Vec e(3);
        e << (x.segment(lay.v(), 2 * lay.n) - xs.segment(lay.v(), 2 * lay.n)).norm(),
            (x.segment(lay.i_t(), 2 * lay.m) - xs.segment(lay.i_t(), 2 * lay.m)).norm(),
            x.segment(lay.omega(), lay.n).norm();
        return e;
    };

    RunSummary r;
    r.horizon = horizon;
    const Vec e0 = errors(x0);
    double prev = 0.0;
    long step = 0;
    const Vec xf = integrate(ctl, x0, horizon, stable_rk4_step(p), 1, [&](const TrajectorySample& s) {
        if (step == 0) {
            r.h0 = prev = s.h_tilde;
        } else {
            r.worst_increase = std::max(r.worst_increase, s.h_tilde - prev);
            prev = s.h_tilde;
        }
        if (step % kOmegaStride == 0) r.omega.push_back(s.x.segment(lay.omega(), lay.n));
        ++step;
    });
    r.final_ratios = errors(xf).cwiseQuotient(e0);
    return cache[law] = std::move(r);
}

constexpr double kExactHorizon = 15.0;
constexpr double kApproxHorizon = 45.0;

Verdict lyapunov_decrease() {
    bool pass = true;
    std::ostringstream d;
    for (auto [law, horizon] : {std::pair{Law::full_decentralized_exact, kExactHorizon},
                                std::pair{Law::full_decentralized_approx, kApproxHorizon}}) {
        const auto& r = table_run(law, horizon);
        const double tol = 1e-8 * std::max(1.0, r.h0);
        const bool mono = r.worst_increase <= tol;
        const bool conv = r.final_ratios.maxCoeff() < 0.01;
        pass = pass && mono && conv;
        d << law_name(law) << ": H_tilde " << (mono ? "non-increasing" : "increases") << " (worst step "
          << fmt("%.3g", r.worst_increase) << ", tol " << fmt("%.3g", tol) << "), error ratios at "
          << fmt("%g", horizon) << " s " << fmt("%.4f", r.final_ratios(0)) << "/" << fmt("%.4f", r.final_ratios(1))
          << "/" << fmt("%.4f", r.final_ratios(2)) << "; ";
    }
    return {pass, d.str()};
}

Verdict exact_vs_approx() {
    const auto& a = table_run(Law::full_decentralized_exact, kExactHorizon);
    const auto& b = table_run(Law::full_decentralized_approx, kExactHorizon);
    const std::size_t count = std::min(a.omega.size(), b.omega.size());
    double dist = 0.0, peak = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
        dist = std::max(dist, (a.omega[k] - b.omega[k]).cwiseAbs().maxCoeff());
        peak = std::max(peak, a.omega[k].cwiseAbs().maxCoeff());
    }
    const double ratio = dist / peak;
    return {ratio < 0.05, "sup distance " + fmt("%.4g", dist) + " rad/s, peak " + fmt("%.4g", peak) +
                              " rad/s, ratio " + fmt("%.4f", ratio) + " over " + fmt("%g", kExactHorizon) + " s"};
}

// ---------------------------------------------------------------------------

Grid with_damping_scale(Grid g, double s) {
    for (auto& nd : g.nodes) {
        nd.d *= s;
        nd.k_p *= s;
    }
    return g;
}

Verdict damping_certificates() {
    fixtures::Rng rng(99);
    int implied = 0, counter = 0;
    for (int trial = 0; trial < 20; ++trial) {
        Grid g = fixtures::random_grid(rng, 2 + rng.index(2), true);
        const double boost = std::pow(10.0, rng.uniform(-1, 3));
        for (auto& nd : g.nodes) nd.d *= boost;
        const auto c = damping_condition(g, Law::reduced_decentralized, 16);
        if (c.has_inequality && c.inequality_holds) {
            ++implied;
            if (!c.holds) ++counter;
        }
    }
    const Grid g = fixtures::triangle_grid();
    const auto base = damping_condition(g, Law::full_decentralized_exact);
    const auto weak = damping_condition(with_damping_scale(g, 1e-6), Law::full_decentralized_exact);
    const bool flips = base.holds && !weak.holds;
    std::ostringstream d;
    d << "reduced: inequality held on " << implied << "/20, counterexamples " << counter
      << "; full triangle: lambda_min " << fmt("%.4g", base.min_eigenvalue) << " (" << (base.holds ? "holds" : "fails")
      << "), with D x 1e-6 " << fmt("%.4g", weak.min_eigenvalue) << " (" << (weak.holds ? "holds" : "fails") << ")";
    return {counter == 0 && implied > 0 && flips, d.str()};
}

// ---------------------------------------------------------------------------

Grid two_bus() {
    Grid g = fixtures::uniform_ratio_triangle();
    g.topology.n = 2;
    g.topology.edges = {{0, 1}};
    g.topology.comm = {{0, 1, 1.0}};
    g.nodes.resize(2);
    g.lines.resize(1);
    return g;
}

// Per-node power leaving into the lines and |V| for a given bus profile.
OpfSetpoint setpoint_from(const Grid& g, const std::vector<cplx>& v) {
    std::vector<cplx> i(g.n(), 0.0);
    for (int e = 0; e < g.m(); ++e) {
        const auto& ed = g.topology.edges[e];
        const cplx cur = (v[ed.from] - v[ed.to]) / cplx(g.lines[e].r_t, g.omega0 * g.lines[e].l_t);
        i[ed.from] += cur;
        i[ed.to] -= cur;
    }
    OpfSetpoint sp;
    sp.p_star.resize(g.n());
    sp.q_star.resize(g.n());
    sp.v_mag_star.resize(g.n());
    for (int k = 0; k < g.n(); ++k) {
        const cplx s = v[k] * std::conj(i[k]);
        sp.p_star(k) = s.real();
        sp.q_star(k) = s.imag();
        sp.v_mag_star(k) = std::abs(v[k]);
    }
    return sp;
}

Verdict opf_round_trip() {
    const std::vector<std::pair<Grid, std::vector<cplx>>> cases{
        {two_bus(), {std::polar(24500.0, 0.0), std::polar(24300.0, -0.03)}},
        {fixtures::uniform_ratio_triangle(),
         {std::polar(24500.0, 0.0), std::polar(24300.0, -0.02), std::polar(24600.0, 0.01)}},
    };
    double worst_p = 0.0, worst_v = 0.0;
    for (const auto& [g, profile] : cases) {
        const auto sp = setpoint_from(g, profile);
        const Vec v = kernel_setpoint(sp, g);
        const double scale = std::max(sp.p_star.cwiseAbs().maxCoeff(), sp.q_star.cwiseAbs().maxCoeff());
        for (auto variant : {ModelVariant::reduced, ModelVariant::static_stator, ModelVariant::full}) {
            const auto f = to_network(to_local(v, variant, g), variant, g);
            worst_p = std::max(worst_p, std::max((f.node_p - sp.p_star).cwiseAbs().maxCoeff(),
                                                 (f.node_q - sp.q_star).cwiseAbs().maxCoeff()) /
                                            scale);
            worst_v = std::max(worst_v, (f.v_mag - sp.v_mag_star).cwiseAbs().maxCoeff() / sp.v_mag_star.maxCoeff());
        }
    }
    return {worst_p < 1e-4 && worst_v < 1e-6,
            "worst power error " + fmt("%.2e", worst_p) + ", worst |v| error " + fmt("%.2e", worst_v)};
}

// ---------------------------------------------------------------------------

// Identical unit-flux machines on a ring; the comm graph is the path through the ring.
Grid uniform_ring(int n) {
    Grid g;
    g.topology.n = n;
    for (int k = 0; k < n; ++k) {
        g.topology.edges.push_back({k, (k + 1) % n});
        if (k + 1 < n) g.topology.comm.push_back({k, k + 1, 1.0});
        g.nodes.push_back({1e4, 1e3, 5e3, 1e-3, 1000, 0.1, 2e-4, 0.5, 1e-4});
        g.lines.push_back({0.1, 3e-3});
    }
    return g;
}

Verdict loop_minima() {
    const int c3 = count_loop_minima(3).max_minima, c5 = count_loop_minima(5).max_minima,
              c8 = count_loop_minima(8).max_minima;
    const auto minima = minima_only(find_equilibria(EnergyField(FieldId::s_e, uniform_ring(5))));
    std::set<int> windings;
    for (const auto& e : minima) windings.insert(e.winding.value_or(99));
    const bool pass = c3 == 1 && c5 == 3 && c8 == 5 && minima.size() == 3 && windings == std::set<int>{-1, 0, 1};
    std::ostringstream d;
    d << "counts n=3/5/8: " << c3 << "/" << c5 << "/" << c8 << "; 5-ring search found " << minima.size()
      << " minima with windings";
    for (int w : windings) d << " " << w;
    return {pass, d.str()};
}

Verdict candidate_pathologies() {
    Grid pair = uniform_ring(2);
    pair.topology.edges.pop_back();
    pair.lines.pop_back();
    Vec ts(2);
    ts << 0.0, kPi / 2;
    const int tilde = sublevel_components(sample_landscape(EnergyField(FieldId::s_tilde_b, pair, ts), 64), 0.01);
    const int bar = sublevel_components(sample_landscape(EnergyField(FieldId::s_bar_b, pair, ts), 64), 0.01);
    const EnergyField hat(FieldId::s_hat_b, pair, ts);
    const Vec gs = hat.unshifted_gradient_at_star();
    fixtures::Rng rng(2);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Vec theta = rng.vec(2, 0, 2 * kPi);
        for (int k = 0; k < 2; ++k) worst = std::max(worst, std::abs(hat.wrap_jump(theta, k) + 2 * kPi * gs(k)));
    }
    return {tilde >= 2 && bar == 1 && worst < 1e-8,
            "S_tilde_B components " + std::to_string(tilde) + ", S_bar_B components " + std::to_string(bar) +
                ", worst wrap-jump error " + fmt("%.2e", worst)};
}

// ---------------------------------------------------------------------------

Verdict integrator_order() {
    auto err = [](double dt) {
        Vec x(1);
        x << 1.0;
        const Vec out =
            rk4([](double, const Vec& y) { return Vec(-y); }, x, 0.0, 1.0, dt, 1 << 30, [](double, const Vec&) {});
        return std::abs(out(0) - std::exp(-1.0));
    };
    const double order = std::log2(err(0.1) / err(0.05));
    return {order >= 3.7 && order <= 4.3, "measured order " + fmt("%.4f", order)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, Verdict (*)()>> criteria{
        {"steady-state map matches the nodal phasor solve", steady_map_oracle},
        {"equilibria are closed-loop fixed points", equilibrium_fixed_point},
        {"energy gradients match finite differences", gradient_correctness},
        {"energy decreases and the table scenario converges", lyapunov_decrease},
        {"damping certificates", damping_certificates},
        {"OPF round trip", opf_round_trip},
        {"loop minima", loop_minima},
        {"energy-candidate pathologies", candidate_pathologies},
        {"exact and approximate laws give close frequency transients", exact_vs_approx},
        {"integrator order", integrator_order},
    };
    std::vector<int> selected;
    for (int a = 1; a < argc; ++a) selected.push_back(std::atoi(argv[a]));
    if (selected.empty())
        for (int k = 1; k <= static_cast<int>(criteria.size()); ++k) selected.push_back(k);

    int failed = 0;
    for (int k : selected) {
        if (k < 1 || k > static_cast<int>(criteria.size())) {
            std::fprintf(stderr, "no criterion %d\n", k);
            return 2;
        }
        const auto& [name, run] = criteria[k - 1];
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = run();
        } catch (const std::exception& e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("criterion %2d %s: %s [%.2f s] %s\n", k, v.pass ? "PASS" : "FAIL", name, secs, v.detail.c_str());
        std::fflush(stdout);
        if (!v.pass) ++failed;
    }
    return failed ? 1 : 0;
}
