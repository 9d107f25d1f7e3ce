#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "shieldkit/rng.hpp"

namespace shieldkit {

/// Index into a model's action list.
using ActionId = std::uint32_t;

/// A point of the hybrid state space: continuous coordinates plus discrete
/// coordinates (locations, phases, ...), in the order declared by the model.
struct State {
    std::vector<double> continuous;
    std::vector<std::int32_t> discrete;

    bool operator==(const State&) const = default;
};

struct DecisionStepOutcome {
    State next;
    double cost = 0.0;
    double elapsed = 0.0; ///< model time consumed by the step, seconds
    bool terminal = false;
};

struct ContinuousVar {
    std::string name;
    double recommended_lower = 0.0; ///< hint for grid construction, not a hard bound
    double recommended_upper = 0.0;
};

struct DiscreteVar {
    std::string name;
    std::uint32_t cardinality = 0; ///< values are 0 .. cardinality-1
};

struct ModelDescriptor {
    std::string name;
    std::vector<std::string> actions;
    std::vector<ContinuousVar> continuous_vars;
    std::vector<DiscreteVar> discrete_vars;
    std::vector<std::string> properties; ///< first entry is the default safety property
    State initial_state;
};

/// A controllable stochastic hybrid system observed at decision points.
///
/// simulate_decision_step() advances from one controller choice to the next;
/// everything between (continuous flow, random events, mode switches) is the
/// model's business. Models with a state-space transform expose it via
/// transform()/inverse_transform(); simulation then runs in transformed
/// coordinates throughout, so grids and shields can be declared there.
class Model {
public:
    virtual ~Model() = default;

    const ModelDescriptor& descriptor() const { return desc_; }

    /// Validates the state/action and advances to the next decision point.
    /// Throws ValidationError on malformed input.
    DecisionStepOutcome simulate_decision_step(const State& s, ActionId action, Rng& rng) const;

    /// Evaluate a named safety predicate. Total over all finite states, even
    /// far outside the recommended bounds. Throws ValidationError for an
    /// unknown property name.
    bool is_safe(const State& s, std::string_view property) const;

    virtual bool has_transform() const { return false; }
    /// Map an underlying-coordinate state into the model's declared
    /// coordinates. Identity unless has_transform().
    virtual State transform(const State& s) const { return s; }
    /// Inverse of transform(). Throws ValidationError when the state lies
    /// outside the invertible image (e.g. energy below the kinetic minimum).
    virtual State inverse_transform(const State& s) const { return s; }

protected:
    virtual DecisionStepOutcome step(const State& s, ActionId action, Rng& rng) const = 0;
    virtual bool check_property(std::size_t property_index, const State& s) const = 0;

    void validate_state(const State& s) const;

    ModelDescriptor desc_;
};

using ModelParams = std::map<std::string, double>;

/// Instantiate a built-in model by name, optionally overriding numeric
/// parameters ({"gravity": 9.81, ...}). Unknown names or keys throw
/// ValidationError.
std::unique_ptr<Model> make_model(const std::string& name, const ModelParams& params = {});

std::vector<std::string> builtin_model_names();

} // namespace shieldkit
