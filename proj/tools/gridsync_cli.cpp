#include "scenario.hpp"

#include "gridsync/cycles.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

using namespace gridsync;
using nlohmann::json;

namespace {

constexpr int kOk = 0, kValidation = 2, kNumerical = 3, kCertificateFails = 4;

int exit_code(ErrorCategory c) {
    return c == ErrorCategory::singular || c == ErrorCategory::numerical ? kNumerical : kValidation;
}

json to_json(const Vec& v) {
    json a = json::array();
    for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v(k));
    return a;
}

json to_json(const Mat& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_json(Vec(m.row(r).transpose())));
    return rows;
}

/// Writes to `path`, or stdout when empty.
void emit(const std::string& path, const std::string& body) {
    if (path.empty()) {
        std::cout << body;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCategory::validation, "cannot write '" + path + "'");
    out << body;
}

std::string simulate_csv(const Scenario& sc, int every, std::optional<double> t_end, std::optional<double> dt_flag) {
    validate_scenario(sc);
    const Plant plant(sc.grid, sc.variant);
    const Controller ctl(plant, sc.controller);
    Scenario run = sc;
    if (dt_flag) run.dt = *dt_flag;
    std::string warning;
    const double dt = choose_step(run, plant, &warning);
    if (!warning.empty()) std::cerr << "warning: " << warning << "\n";
    const double horizon = t_end ? *t_end : sc.t_end;

    std::ostringstream out;
    const auto header = trajectory_header(plant);
    for (std::size_t k = 0; k < header.size(); ++k) out << (k ? "," : "") << header[k];
    out << "\n";
    const Vec x0 = initial_state(sc, plant);
    auto check = [](const TrajectorySample& s) {
        if (!s.x.allFinite() || !std::isfinite(s.h_tilde))
            fail(ErrorCategory::numerical, "state blew up at t = " + format_number(s.t) + " s");
    };
    integrate(ctl, x0, horizon, dt, every, [&](const TrajectorySample& s) {
        check(s);
        out << format_row(s) << "\n";
    });
    return out.str();
}

json certificate_json(const DampingCertificate& c) {
    json j;
    j["law"] = law_name(c.law);
    j["resolution"] = c.resolution;
    j["min_eigenvalue"] = c.min_eigenvalue;
    j["holds"] = c.holds;
    j["argmin_theta_rad"] = to_json(c.argmin);
    if (c.has_inequality) {
        j["inequality_min_eigenvalue"] = c.inequality_min_eigenvalue;
        j["inequality_holds"] = c.inequality_holds;
        j["inequality_argmin_theta_rad"] = to_json(c.inequality_argmin);
    }
    return j;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Synchronization control toolkit for mixed machine/converter grids"};
    app.require_subcommand(1);

    std::string config, out, field_name_arg = "S_B", out_dir = ".";
    std::vector<std::string> sweep;
    int every = 10, resolution = 0, loop_n = 0, starts = 6;
    double t_end_flag = 0.0, dt_flag = 0.0;
    bool require_cert = false, no_kp = false, fix_reference = false;

    auto* sim = app.add_subcommand("simulate", "integrate the closed loop and write a CSV trajectory");
    sim->add_option("config", config, "scenario JSON");
    sim->add_option("--out,-o", out, "output CSV (default stdout)");
    sim->add_option("--every", every, "record one sample per N steps")->check(CLI::PositiveNumber);
    sim->add_option("--t-end", t_end_flag, "override t_end_s");
    sim->add_option("--dt", dt_flag, "override dt_s");
    sim->add_option("--sweep", sweep, "run several scenarios in parallel")->expected(1, -1);
    sim->add_option("--out-dir", out_dir, "directory for --sweep outputs");

    auto* ss = app.add_subcommand("steady-state", "report the steady-state maps at the controller set-point");
    ss->add_option("config", config, "scenario JSON")->required();
    ss->add_option("--out,-o", out, "output JSON (default stdout)");

    auto* cd = app.add_subcommand("check-damping", "sweep the damping certificate over relative angles");
    cd->add_option("config", config, "scenario JSON")->required();
    cd->add_option("--resolution", resolution, "grid points per angle (default by n)");
    cd->add_flag("--require", require_cert, "exit 4 when the certificate fails");
    cd->add_flag("--no-kp", no_kp, "leave K_p out of the damping");
    cd->add_option("--out,-o", out, "output JSON (default stdout)");

    auto* to = app.add_subcommand("translate-opf", "OPF set-points to local machine references");
    to->add_option("config", config, "scenario JSON with an opf section")->required();
    to->add_option("--out,-o", out, "output JSON (default stdout)");

    auto* lp = app.add_subcommand("loops", "loop minima count, optionally with an equilibrium search");
    lp->add_option("n", loop_n, "generators around the loop");
    lp->add_option("--search", config, "scenario whose network is searched");
    lp->add_option("--field", field_name_arg, "S_E, S_B, S_bar_B, S_tilde_B or S_hat_B");
    lp->add_option("--starts", starts, "multistart points per free angle")->check(CLI::PositiveNumber);
    lp->add_option("--out,-o", out, "output JSON (default stdout)");

    auto* ls = app.add_subcommand("landscape", "sample a coupling energy on the torus");
    ls->add_option("config", config, "scenario JSON")->required();
    ls->add_option("--field", field_name_arg, "S_E, S_B, S_bar_B, S_tilde_B or S_hat_B");
    ls->add_option("--resolution", resolution, "grid points per angle (default 32)");
    ls->add_flag("--fix-reference", fix_reference, "pin node 1 at zero");
    ls->add_option("--out,-o", out, "output CSV (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kValidation;
    }

    try {
        if (sim->parsed()) {
            std::optional<double> t_end, dt;
            if (sim->count("--t-end")) {
                require(t_end_flag > 0.0, "--t-end must be positive");
                t_end = t_end_flag;
            }
            if (sim->count("--dt")) {
                require(dt_flag > 0.0, "--dt must be positive");
                dt = dt_flag;
            }
            if (sweep.empty()) {
                require(!config.empty(), "simulate needs a config path");
                emit(out, simulate_csv(load_scenario(config), every, t_end, dt));
                return kOk;
            }
            std::filesystem::create_directories(out_dir);
            std::vector<std::future<int>> jobs;
            for (const auto& path : sweep)
                jobs.push_back(std::async(std::launch::async, [&, path]() {
                    try {
                        const std::string target =
                            (std::filesystem::path(out_dir) / std::filesystem::path(path).stem()).string() + ".csv";
                        emit(target, simulate_csv(load_scenario(path), every, t_end, dt));
                        return kOk;
                    } catch (const Error& e) {
                        std::cerr << "error [" << category_name(e.category()) << "] " << path << ": " << e.what()
                                  << "\n";
                        return exit_code(e.category());
                    }
                }));
            int worst = kOk;
            for (auto& j : jobs) worst = std::max(worst, j.get());
            return worst;
        }

        if (ss->parsed()) {
            const Scenario sc = load_scenario(config);
            validate_scenario(sc);
            const Plant plant(sc.grid, sc.variant);
            const Controller ctl(plant, sc.controller);
            const auto& maps = plant.maps();
            const auto& sp = ctl.setpoints();
            json j;
            j["model"] = variant_name(sc.variant);
            j["theta_star_rad"] = to_json(sp.theta);
            j["xi_star_volt"] = to_json(sp.xi);
            j["i_s_star_ampere"] = to_json(sp.i_s);
            j["v_star_volt"] = to_json(sp.v);
            j["i_t_star_ampere"] = to_json(sp.i_t);
            j["tau_e_star_n_m"] = to_json(sp.tau_e);
            j["power_balance_watt"] = steady_state_power_balance(maps, sc.grid, sp.theta);
            j["d_prime_n_m_s"] = to_json(maps.d_prime);
            j["dominance_violation"] = dominance_violation(sc.grid, maps, sp.theta);
            j["time_scale_ratio"] = time_scale_ratio(sc.grid);
            j["pi1"] = to_json(maps.pi1);
            j["pi2"] = to_json(maps.pi2);
            j["pi3"] = to_json(maps.pi3);
            emit(out, j.dump(2) + "\n");
            return kOk;
        }

        if (cd->parsed()) {
            const Scenario sc = load_scenario(config);
            sc.grid.validate();
            const Law law = sc.controller.law;
            if (!has_q_form(law))
                fail(ErrorCategory::validation,
                     std::string("controller.law ") + law_name(law) + " has no damping certificate");
            const auto cert = damping_condition(QAssembler(sc.grid, law, !no_kp && sc.controller.use_kp), resolution);
            emit(out, certificate_json(cert).dump(2) + "\n");
            if (require_cert && !cert.holds) {
                std::cerr << "certificate fails: min eigenvalue " << format_number(cert.min_eigenvalue) << "\n";
                return kCertificateFails;
            }
            return kOk;
        }

        if (to->parsed()) {
            const Scenario sc = load_scenario(config);
            sc.grid.validate();
            if (!sc.opf) fail(ErrorCategory::validation, "opf: section missing from config");
            const Vec v = kernel_setpoint(*sc.opf, sc.grid);
            const auto refs = to_local(v, sc.variant, sc.grid);
            const auto flows = to_network(refs, sc.variant, sc.grid);
            json j;
            j["model"] = variant_name(sc.variant);
            j["i_r_star_ampere"] = to_json(refs.i_r_star);
            j["theta_star_rad"] = to_json(refs.theta_star);
            j["xi_star_volt"] = to_json(refs.xi_star);
            j["v_star_volt"] = to_json(refs.v_star);
            j["i_s_star_ampere"] = to_json(refs.i_s_star);
            j["i_t_star_ampere"] = to_json(refs.i_t_star);
            j["check"] = {{"node_p_watt", to_json(flows.node_p)},
                          {"node_q_var", to_json(flows.node_q)},
                          {"v_mag_volt", to_json(flows.v_mag)},
                          {"edge_p_watt", to_json(flows.edge_p)},
                          {"edge_q_var", to_json(flows.edge_q)}};
            emit(out, j.dump(2) + "\n");
            return kOk;
        }

        if (lp->parsed()) {
            json j;
            if (loop_n > 0) {
                const auto c = count_loop_minima(loop_n);
                j["n"] = c.n;
                j["max_minima"] = c.max_minima;
                for (const auto& k : c.classes)
                    j["classes"].push_back({{"winding", k.winding}, {"angle_sum_rad", k.angle_sum}, {"stable", k.stable}});
            }
            if (!config.empty()) {
                const Scenario sc = load_scenario(config);
                const auto f = parse_field(field_name_arg);
                if (!f) fail(ErrorCategory::validation, "--field: unknown field '" + field_name_arg + "'");
                EquilibriumSearch opt;
                opt.starts_per_axis = starts;
                const auto eqs =
                    find_equilibria(EnergyField(*f, sc.grid, sc.controller.theta_star), opt);
                j["field"] = field_name(*f);
                j["equilibria"] = json::array();
                for (const auto& e : eqs) {
                    json r{{"theta_rad", to_json(e.theta)},
                           {"kind", critical_kind_name(e.kind)},
                           {"grad_norm", e.grad_norm},
                           {"hessian_eigenvalues", to_json(e.hessian_eigenvalues)}};
                    if (e.winding) r["winding"] = *e.winding;
                    j["equilibria"].push_back(r);
                }
                j["minima"] = minima_only(eqs).size();
            }
            if (loop_n <= 0 && config.empty()) fail(ErrorCategory::validation, "loops needs n or --search CONFIG");
            emit(out, j.dump(2) + "\n");
            return kOk;
        }

        if (ls->parsed()) {
            const Scenario sc = load_scenario(config);
            const auto f = parse_field(field_name_arg);
            if (!f) fail(ErrorCategory::validation, "--field: unknown field '" + field_name_arg + "'");
            const auto lg = sample_landscape(EnergyField(*f, sc.grid, sc.controller.theta_star),
                                             resolution ? resolution : 32, fix_reference);
            std::ostringstream s;
            const int first = fix_reference ? 2 : 1;
            for (int a = 0; a < lg.axes(); ++a) s << "theta_" << first + a << ",";
            s << "value\n";
            for (std::size_t i = 0; i < lg.values.size(); ++i) {
                const Vec th = lg.angles(i);
                for (int a = 0; a < lg.axes(); ++a) s << format_number(th(first - 1 + a)) << ",";
                s << format_number(lg.values[i]) << "\n";
            }
            emit(out, s.str());
            return kOk;
        }
    } catch (const Error& e) {
        std::cerr << "error [" << category_name(e.category()) << "]: " << e.what() << "\n";
        return exit_code(e.category());
    } catch (const std::exception& e) {
        std::cerr << "error [numerical]: " << e.what() << "\n";
        return kNumerical;
    }
    return kOk;
}
