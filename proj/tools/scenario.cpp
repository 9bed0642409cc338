#include "scenario.hpp"

#include <cstdio>
#include <fstream>
#include <regex>
#include <set>

namespace gridsync {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& where, const std::string& what) {
    fail(ErrorCategory::validation, where + ": " + what);
}

void allow_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) bad(where, "expected an object");
    const std::set<std::string> ok(keys.begin(), keys.end());
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!ok.count(it.key())) bad(where + "." + it.key(), "unknown key");
}

double number(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key)) bad(where + "." + key, "missing");
    const json& v = obj.at(key);
    if (!v.is_number()) bad(where + "." + key, "expected a number");
    return v.get<double>();
}

double number_or(const json& obj, const std::string& key, const std::string& where, double fallback) {
    return obj.contains(key) ? number(obj, key, where) : fallback;
}

int integer(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key)) bad(where + "." + key, "missing");
    const json& v = obj.at(key);
    if (!v.is_number_integer()) bad(where + "." + key, "expected an integer");
    return v.get<int>();
}

Vec vector(const json& obj, const std::string& key, const std::string& where) {
    const std::string tag = where + "." + key;
    if (!obj.contains(key)) bad(tag, "missing");
    const json& v = obj.at(key);
    if (!v.is_array()) bad(tag, "expected an array of numbers");
    Vec out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (!v[k].is_number()) bad(tag + "[" + std::to_string(k) + "]", "expected a number");
        out(static_cast<Eigen::Index>(k)) = v[k].get<double>();
    }
    return out;
}

std::string text(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key)) bad(where + "." + key, "missing");
    if (!obj.at(key).is_string()) bad(where + "." + key, "expected a string");
    return obj.at(key).get<std::string>();
}

Grid parse_grid(const json& doc) {
    Grid g;
    g.omega0 = number_or(doc, "omega0_rad_per_s", "scenario", 100.0 * kPi);
    if (!doc.contains("nodes") || !doc.at("nodes").is_array() || doc.at("nodes").empty())
        bad("nodes", "expected a non-empty array");
    const json& nodes = doc.at("nodes");
    g.topology.n = static_cast<int>(nodes.size());
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        const std::string w = "nodes[" + std::to_string(k) + "]";
        const json& nd = nodes[k];
        allow_keys(nd, w,
                   {"m_kg_m2", "d_n_m_s", "k_p_n_m_s", "l_m_henry", "i_r_star_ampere", "r_s_ohm", "l_s_henry",
                    "g_siemens", "c_farad"});
        NodeParams p;
        p.m = number(nd, "m_kg_m2", w);
        p.d = number(nd, "d_n_m_s", w);
        p.k_p = number_or(nd, "k_p_n_m_s", w, 0.0);
        p.l_m = number(nd, "l_m_henry", w);
        p.i_r_star = number(nd, "i_r_star_ampere", w);
        p.r_s = number(nd, "r_s_ohm", w);
        p.l_s = number(nd, "l_s_henry", w);
        p.g = number(nd, "g_siemens", w);
        p.c = number(nd, "c_farad", w);
        g.nodes.push_back(p);
    }
    if (doc.contains("edges")) {
        const json& edges = doc.at("edges");
        if (!edges.is_array()) bad("edges", "expected an array");
        for (std::size_t k = 0; k < edges.size(); ++k) {
            const std::string w = "edges[" + std::to_string(k) + "]";
            allow_keys(edges[k], w, {"from", "to", "r_t_ohm", "l_t_henry"});
            g.topology.edges.push_back({integer(edges[k], "from", w), integer(edges[k], "to", w)});
            g.lines.push_back({number(edges[k], "r_t_ohm", w), number(edges[k], "l_t_henry", w)});
        }
    }
    if (doc.contains("comm_edges")) {
        const json& comm = doc.at("comm_edges");
        if (!comm.is_array()) bad("comm_edges", "expected an array");
        for (std::size_t k = 0; k < comm.size(); ++k) {
            const std::string w = "comm_edges[" + std::to_string(k) + "]";
            allow_keys(comm[k], w, {"from", "to", "weight"});
            g.topology.comm.push_back(
                {integer(comm[k], "from", w), integer(comm[k], "to", w), number_or(comm[k], "weight", w, 1.0)});
        }
    }
    return g;
}

ControllerSpec parse_controller(const json& c) {
    const std::string w = "controller";
    allow_keys(c, w, {"law", "theta_star_rad", "candidate", "approximate", "use_kp", "tau_feedforward_n_m"});
    ControllerSpec s;
    const std::string law = text(c, "law", w);
    const auto l = parse_law(law);
    if (!l) bad(w + ".law", "unknown law '" + law + "'");
    s.law = *l;
    if (c.contains("theta_star_rad")) s.theta_star = vector(c, "theta_star_rad", w);
    if (c.contains("candidate")) {
        const std::string cand = text(c, "candidate", w);
        if (cand == "s_bar")
            s.candidate = Candidate::s_bar;
        else if (cand == "s_tilde")
            s.candidate = Candidate::s_tilde;
        else if (cand == "s_hat")
            s.candidate = Candidate::s_hat;
        else
            bad(w + ".candidate", "expected s_bar, s_tilde or s_hat");
    }
    if (c.contains("approximate")) {
        if (!c.at("approximate").is_boolean()) bad(w + ".approximate", "expected true or false");
        s.approximate = c.at("approximate").get<bool>();
    }
    if (c.contains("use_kp")) {
        if (!c.at("use_kp").is_boolean()) bad(w + ".use_kp", "expected true or false");
        s.use_kp = c.at("use_kp").get<bool>();
    }
    if (c.contains("tau_feedforward_n_m")) s.tau_feedforward = vector(c, "tau_feedforward_n_m", w);
    return s;
}

InitialSpec parse_initial(const json& v) {
    InitialSpec init;
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        static const std::regex perturbed(R"(^\s*perturbed-equilibrium\(\s*(\d+)\s*,\s*([-+0-9.eE]+)\s*\)\s*$)");
        std::smatch mt;
        if (s == "equilibrium") return init;
        if (std::regex_match(s, mt, perturbed)) {
            init.kind = InitialSpec::Kind::perturbed;
            init.seed = std::stoull(mt[1].str());
            try {
                init.magnitude = std::stod(mt[2].str());
            } catch (const std::exception&) {
                bad("initial_state", "magnitude is not a number");
            }
            if (!(init.magnitude >= 0.0)) bad("initial_state", "magnitude must be nonnegative");
            return init;
        }
        bad("initial_state", "expected \"equilibrium\", \"perturbed-equilibrium(seed, magnitude)\" or an object");
    }
    const std::string w = "initial_state";
    allow_keys(v, w, {"theta_rad", "omega_rad_per_s", "i_s_ampere", "v_volt", "i_t_ampere"});
    init.kind = InitialSpec::Kind::explicit_state;
    init.state.theta = vector(v, "theta_rad", w);
    init.state.omega = vector(v, "omega_rad_per_s", w);
    if (v.contains("i_s_ampere")) init.state.i_s = vector(v, "i_s_ampere", w);
    if (v.contains("v_volt")) init.state.v = vector(v, "v_volt", w);
    init.state.i_t = v.contains("i_t_ampere") ? vector(v, "i_t_ampere", w) : Vec(0);
    return init;
}

OpfSetpoint parse_opf(const json& o) {
    const std::string w = "opf";
    allow_keys(o, w, {"p_star_watt", "q_star_var", "v_mag_star_volt", "eta", "alpha"});
    OpfSetpoint sp;
    sp.p_star = vector(o, "p_star_watt", w);
    sp.q_star = vector(o, "q_star_var", w);
    sp.v_mag_star = vector(o, "v_mag_star_volt", w);
    sp.eta = number_or(o, "eta", w, 1.0);
    sp.alpha = number_or(o, "alpha", w, 10.0);
    return sp;
}

}  // namespace

std::optional<ModelVariant> parse_variant(const std::string& s) {
    for (ModelVariant v : {ModelVariant::reduced, ModelVariant::static_stator, ModelVariant::full})
        if (s == variant_name(v)) return v;
    return std::nullopt;
}

Scenario parse_scenario(const json& doc) {
    allow_keys(doc, "scenario",
               {"name", "omega0_rad_per_s", "model", "nodes", "edges", "comm_edges", "controller", "initial_state",
                "t_end_s", "dt_s", "opf"});
    Scenario sc;
    if (doc.contains("name")) sc.name = text(doc, "name", "scenario");
    sc.grid = parse_grid(doc);
    if (doc.contains("model")) {
        const std::string m = text(doc, "model", "scenario");
        const auto v = parse_variant(m);
        if (!v) bad("model", "expected reduced, static_stator or full, got '" + m + "'");
        sc.variant = *v;
    }
    if (doc.contains("controller")) sc.controller = parse_controller(doc.at("controller"));
    if (doc.contains("initial_state")) sc.initial = parse_initial(doc.at("initial_state"));
    sc.t_end = number_or(doc, "t_end_s", "scenario", 1.0);
    if (!(sc.t_end > 0.0)) bad("t_end_s", "must be positive");
    if (doc.contains("dt_s")) {
        sc.dt = number(doc, "dt_s", "scenario");
        if (!(*sc.dt > 0.0)) bad("dt_s", "must be positive");
    }
    if (doc.contains("opf")) sc.opf = parse_opf(doc.at("opf"));
    return sc;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCategory::validation, "cannot open config '" + path + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        fail(ErrorCategory::validation, "config '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_scenario(doc);
}

void validate_scenario(const Scenario& sc) {
    sc.grid.validate();
    const Plant plant(sc.grid, sc.variant);
    const Controller ctl(plant, sc.controller);
    initial_state(sc, plant);
    if (sc.opf) {
        const int n = sc.grid.n();
        require(sc.opf->p_star.size() == n, "opf.p_star_watt: expected one value per node");
        require(sc.opf->q_star.size() == n, "opf.q_star_var: expected one value per node");
        require(sc.opf->v_mag_star.size() == n, "opf.v_mag_star_volt: expected one value per node");
    }
}

Vec initial_state(const Scenario& sc, const Plant& plant) {
    const int n = plant.layout().n;
    Vec theta_star = sc.controller.theta_star.size() ? sc.controller.theta_star : Vec::Zero(n);
    require(theta_star.size() == n, "controller.theta_star_rad: expected one angle per node");
    switch (sc.initial.kind) {
    case InitialSpec::Kind::equilibrium: return plant.equilibrium(theta_star);
    case InitialSpec::Kind::perturbed:
        return perturbed_equilibrium(plant, theta_star, sc.initial.seed, sc.initial.magnitude, sc.initial.magnitude);
    case InitialSpec::Kind::explicit_state: return plant.layout().pack(sc.initial.state);
    }
    return Vec();
}

double choose_step(const Scenario& sc, const Plant& plant, std::string* warning) {
    const double stable = stable_rk4_step(plant);
    if (sc.dt) {
        if (*sc.dt > stable && warning)
            *warning = "dt_s = " + format_number(*sc.dt) + " exceeds the RK4 stability estimate " +
                       format_number(stable) + " s";
        return *sc.dt;
    }
    if (stable < 1e-4) {
        if (warning)
            *warning = "default step 1e-4 s is unstable for this network; using " + format_number(stable) + " s";
        return stable;
    }
    return 1e-4;
}

std::vector<std::string> trajectory_header(const Plant& plant) {
    const auto& lay = plant.layout();
    std::vector<std::string> h{"t"};
    for (int k = 1; k <= lay.n; ++k) h.push_back("theta_" + std::to_string(k));
    for (int k = 1; k <= lay.n; ++k) h.push_back("omega_" + std::to_string(k));
    if (has_stator_states(lay.variant)) {
        for (int k = 1; k <= lay.n; ++k) {
            h.push_back("i_s_d" + std::to_string(k));
            h.push_back("i_s_q" + std::to_string(k));
        }
        for (int k = 1; k <= lay.n; ++k) {
            h.push_back("v_d" + std::to_string(k));
            h.push_back("v_q" + std::to_string(k));
        }
    }
    for (int e = 1; e <= lay.m; ++e) {
        h.push_back("i_t_d" + std::to_string(e));
        h.push_back("i_t_q" + std::to_string(e));
    }
    h.push_back("H_tilde");
    h.push_back("grad_norm");
    for (int k = 1; k <= lay.n; ++k) h.push_back("tau_" + std::to_string(k));
    return h;
}

std::string format_number(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string format_row(const TrajectorySample& s) {
    std::string row = format_number(s.t);
    for (Eigen::Index k = 0; k < s.x.size(); ++k) row += "," + format_number(s.x(k));
    row += "," + format_number(s.h_tilde);
    row += "," + format_number(s.grad_norm);
    for (Eigen::Index k = 0; k < s.tau.size(); ++k) row += "," + format_number(s.tau(k));
    return row;
}

}  // namespace gridsync
