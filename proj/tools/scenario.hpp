#pragma once

#include "gridsync/opf.hpp"
#include "gridsync/simulate.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gridsync {

struct InitialSpec {
    enum class Kind { equilibrium, perturbed, explicit_state };
    Kind kind = Kind::equilibrium;
    std::uint64_t seed = 0;
    double magnitude = 0.0;  ///< rad for angles, rad/s for frequencies
    SimState state;
};

struct Scenario {
    std::string name;
    Grid grid;
    ModelVariant variant = ModelVariant::full;
    ControllerSpec controller;
    InitialSpec initial;
    double t_end = 1.0;
    std::optional<double> dt;
    std::optional<OpfSetpoint> opf;
};

/// Parse a scenario document. Unknown keys and malformed values raise validation errors naming the field.
Scenario parse_scenario(const nlohmann::json& doc);
Scenario load_scenario(const std::string& path);

std::optional<ModelVariant> parse_variant(const std::string& s);

/// Cross-field checks: grid, law against model, set-point shapes, initial state shape.
void validate_scenario(const Scenario& sc);

/// Packed initial state for the scenario's plant.
Vec initial_state(const Scenario& sc, const Plant& plant);

/// Step size: the configured one, else min(1e-4, stable RK4 step). Sets `warning` when the step is shrunk or
/// the configured step exceeds the stability estimate.
double choose_step(const Scenario& sc, const Plant& plant, std::string* warning);

std::vector<std::string> trajectory_header(const Plant& plant);
std::string format_row(const TrajectorySample& s);
std::string format_number(double x);

}  // namespace gridsync
