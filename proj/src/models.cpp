#include "shieldkit/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "shieldkit/errors.hpp"

namespace shieldkit {

namespace {

void bind_params(const ModelParams& params,
                 std::initializer_list<std::pair<const char*, double*>> slots) {
    for (const auto& [key, value] : params) {
        bool known = false;
        for (const auto& [name, target] : slots) {
            if (key == name) {
                *target = value;
                known = true;
                break;
            }
        }
        if (!known) throw ValidationError("unknown model parameter '" + key + "'");
    }
}

// ---------------------------------------------------------------------------
// Bouncing ball
// ---------------------------------------------------------------------------

struct BallParams {
    double gravity = 9.81;
    double period = 0.1;          // decision period; upper bound when randomized
    double period_min = 0.05;     // lower bound when randomized
    double random_period = 0.0;   // nonzero: duration ~ U[period_min, period)
    double hit_min_height = 4.0;  // paddle reach
    double hit_velocity = -4.0;   // v >= 0: replace, v < 0: add
    double damp_min = 0.85;
    double damp_max = 0.95;
    double stop_speed = 1.0;      // rebounds slower than this dissipate
    double hit_cost = 1.0;
    double init_position = 7.0;
    double init_velocity = 0.0;
};

enum BallLocation : std::int32_t { kInAir = 0, kStopped = 1 };

/// Piecewise ballistic flight with paddle hits and lossy bounces.
///
/// A decision step spans one controller period. The hit (if chosen and the
/// ball is within reach) applies instantaneously at the start of the step;
/// the rest is closed-form free fall, bouncing on the floor with a random
/// dampening factor. A rebound slower than stop_speed kills the ball: it
/// enters the absorbing Stopped location, which is the unsafe event.
class BouncingBall : public Model {
public:
    explicit BouncingBall(BallParams params, const char* name) : p_(params) {
        desc_.name = name;
        desc_.actions = {"nohit", "hit"};
        desc_.continuous_vars = {{"p", 0.0, 11.0}, {"v", -13.0, 13.0}};
        desc_.discrete_vars = {{"loc", 2}};
        desc_.properties = {"no-stop"};
        desc_.initial_state = {{p_.init_position, p_.init_velocity}, {kInAir}};
    }

    const BallParams& params() const { return p_; }

protected:
    DecisionStepOutcome step(const State& s, ActionId action, Rng& rng) const override {
        if (s.discrete[0] == kStopped) return {s, 0.0, 0.0, true};

        double duration = p_.random_period != 0.0
                              ? rng.uniform(p_.period_min, p_.period)
                              : p_.period;

        double pos = std::max(s.continuous[0], 0.0); // guard against fp dust below the floor
        double vel = s.continuous[1];
        double cost = 0.0;

        if (action == 1) {
            cost += p_.hit_cost; // swinging costs, connecting is not required
            if (pos >= p_.hit_min_height)
                vel = vel >= 0.0 ? p_.hit_velocity : vel + p_.hit_velocity;
        }

        double remaining = duration;
        while (true) {
            double to_ground = time_to_ground(pos, vel);
            if (to_ground > remaining) {
                pos += vel * remaining - 0.5 * p_.gravity * remaining * remaining;
                vel -= p_.gravity * remaining;
                if (pos < 0.0) pos = 0.0;
                return {{{pos, vel}, {kInAir}}, cost, duration, false};
            }
            remaining -= to_ground;
            double impact = vel - p_.gravity * to_ground; // <= 0
            double rebound = -(p_.damp_min + (p_.damp_max - p_.damp_min) * rng.uniform()) * impact;
            if (rebound < p_.stop_speed) {
                double elapsed = duration - remaining;
                return {{{0.0, 0.0}, {kStopped}}, cost, elapsed, true};
            }
            pos = 0.0;
            vel = rebound;
        }
    }

    bool check_property(std::size_t, const State& s) const override {
        return s.discrete[0] != kStopped;
    }

private:
    double time_to_ground(double pos, double vel) const {
        if (pos <= 0.0 && vel <= 0.0) return 0.0;
        double disc = vel * vel + 2.0 * p_.gravity * pos;
        return (vel + std::sqrt(std::max(disc, 0.0))) / p_.gravity;
    }

    BallParams p_;
};

BallParams read_ball_params(const ModelParams& params) {
    BallParams p;
    bind_params(params, {{"gravity", &p.gravity},
                         {"period", &p.period},
                         {"period_min", &p.period_min},
                         {"random_period", &p.random_period},
                         {"hit_min_height", &p.hit_min_height},
                         {"hit_velocity", &p.hit_velocity},
                         {"damp_min", &p.damp_min},
                         {"damp_max", &p.damp_max},
                         {"stop_speed", &p.stop_speed},
                         {"hit_cost", &p.hit_cost},
                         {"init_position", &p.init_position},
                         {"init_velocity", &p.init_velocity}});
    return p;
}

// ---------------------------------------------------------------------------
// Bouncing ball in energy coordinates
// ---------------------------------------------------------------------------

/// Same dynamics, observed as (total mechanical energy, velocity). The map
/// (p, v) -> (g p + v^2/2, v) folds the symmetric rise/fall arcs of the flight
/// onto each other, which makes the safe region nearly axis-aligned and far
/// friendlier to coarse grids.
class EnergyBall : public Model {
public:
    explicit EnergyBall(BallParams params) : base_(params, "bouncing-ball") {
        desc_ = base_.descriptor();
        desc_.name = "bouncing-ball-energy";
        desc_.continuous_vars = {{"e", 0.0, 100.0}, {"v", -13.0, 13.0}};
        desc_.initial_state = transform(base_.descriptor().initial_state);
    }

    bool has_transform() const override { return true; }

    State transform(const State& s) const override {
        double g = base_.params().gravity;
        double pos = s.continuous[0], vel = s.continuous[1];
        return {{g * pos + 0.5 * vel * vel, vel}, s.discrete};
    }

    State inverse_transform(const State& s) const override {
        double energy = s.continuous[0], vel = s.continuous[1];
        double height = height_of(energy, vel);
        if (height < -1e-9 * std::max(1.0, std::abs(energy)))
            throw ValidationError("state not invertible: energy below kinetic minimum");
        return {{std::max(height, 0.0), vel}, s.discrete};
    }

protected:
    DecisionStepOutcome step(const State& s, ActionId action, Rng& rng) const override {
        // Project onto the invertible domain: grid cells straddling the
        // e = v^2/2 frontier produce samples slightly below it, which read
        // as a ball at floor level.
        State base_state{{std::max(height_of(s.continuous[0], s.continuous[1]), 0.0),
                          s.continuous[1]},
                         s.discrete};
        DecisionStepOutcome out = base_.simulate_decision_step(base_state, action, rng);
        out.next = transform(out.next);
        return out;
    }

    bool check_property(std::size_t, const State& s) const override {
        return s.discrete[0] != kStopped;
    }

private:
    double height_of(double energy, double vel) const {
        return (energy - 0.5 * vel * vel) / base_.params().gravity;
    }

    BouncingBall base_;
};

// ---------------------------------------------------------------------------
// Random walk
// ---------------------------------------------------------------------------

/// One-dimensional race against the clock: reach x >= 1 before t >= 1.
/// The fast gait covers more ground per tick but costs three times as much.
class RandomWalk : public Model {
public:
    explicit RandomWalk(const ModelParams& params) {
        bind_params(params, {{"goal", &goal_}, {"deadline", &deadline_}});
        desc_.name = "random-walk";
        desc_.actions = {"slow", "fast"};
        desc_.continuous_vars = {{"x", 0.0, 1.2}, {"t", 0.0, 1.2}};
        desc_.properties = {"reach-in-time"};
        desc_.initial_state = {{0.0, 0.0}, {}};
    }

protected:
    DecisionStepOutcome step(const State& s, ActionId action, Rng& rng) const override {
        double x = s.continuous[0], t = s.continuous[1];
        if (x >= goal_ || t >= deadline_) return {s, 0.0, 0.0, true};

        double dx, dt, cost;
        if (action == 1) { // fast
            dx = rng.uniform(0.15, 0.25);
            dt = rng.uniform(0.05, 0.15);
            cost = 3.0;
        } else {
            dx = rng.uniform(0.05, 0.15);
            dt = rng.uniform(0.15, 0.25);
            cost = 1.0;
        }
        State next{{x + dx, t + dt}, {}};
        bool terminal = next.continuous[0] >= goal_ || next.continuous[1] >= deadline_;
        return {next, cost, dt, terminal};
    }

    bool check_property(std::size_t, const State& s) const override {
        return s.continuous[0] >= goal_ || s.continuous[1] < deadline_;
    }

private:
    double goal_ = 1.0;
    double deadline_ = 1.0;
};

// ---------------------------------------------------------------------------
// Water tank
// ---------------------------------------------------------------------------

/// Deterministic tank with a phase-dependent demand profile and a fixed-rate
/// pump. The level must stay inside [10, 90]. Demand literals follow one
/// period of 3 + 2 sin(pi k / 4).
class WaterTank : public Model {
public:
    explicit WaterTank(const ModelParams& params) {
        bind_params(params, {{"pump_rate", &pump_rate_}, {"init_level", &init_level_},
                             {"band_low", &band_low_}, {"band_high", &band_high_}});
        desc_.name = "water-tank";
        desc_.actions = {"off", "on"};
        desc_.continuous_vars = {{"level", 0.0, 100.0}};
        desc_.discrete_vars = {{"phase", kPhases}};
        desc_.properties = {"level-in-band"};
        desc_.initial_state = {{init_level_}, {0}};
    }

protected:
    DecisionStepOutcome step(const State& s, ActionId action, Rng&) const override {
        double level = s.continuous[0];
        auto phase = static_cast<std::uint32_t>(s.discrete[0]);
        double inflow = action == 1 ? pump_rate_ : 0.0;
        double next_level = std::max(level - kDemand[phase % kPhases] + inflow, 0.0);
        State next{{next_level}, {static_cast<std::int32_t>((phase + 1) % kPhases)}};
        return {next, action == 1 ? 1.0 : 0.0, 1.0, false};
    }

    bool check_property(std::size_t, const State& s) const override {
        return s.continuous[0] >= band_low_ && s.continuous[0] <= band_high_;
    }

private:
    static constexpr std::uint32_t kPhases = 8;
    static constexpr double kDemand[kPhases] = {3.0,
                                                4.4142135623730951,
                                                5.0,
                                                4.4142135623730951,
                                                3.0,
                                                1.5857864376269049,
                                                1.0,
                                                1.5857864376269049};

    double pump_rate_ = 5.0;
    double init_level_ = 50.0;
    double band_low_ = 10.0;
    double band_high_ = 90.0;
};

} // namespace

// ---------------------------------------------------------------------------
// Model base implementation
// ---------------------------------------------------------------------------

void Model::validate_state(const State& s) const {
    if (s.continuous.size() != desc_.continuous_vars.size() ||
        s.discrete.size() != desc_.discrete_vars.size())
        throw ValidationError("state dimensions do not match model '" + desc_.name + "'");
    for (double value : s.continuous)
        if (!std::isfinite(value)) throw ValidationError("non-finite state coordinate");
    for (std::size_t i = 0; i < s.discrete.size(); ++i)
        if (s.discrete[i] < 0 ||
            static_cast<std::uint32_t>(s.discrete[i]) >= desc_.discrete_vars[i].cardinality)
            throw ValidationError("discrete coordinate '" + desc_.discrete_vars[i].name +
                                  "' out of range");
}

DecisionStepOutcome Model::simulate_decision_step(const State& s, ActionId action,
                                                  Rng& rng) const {
    validate_state(s);
    if (action >= desc_.actions.size())
        throw ValidationError("action index out of range for model '" + desc_.name + "'");
    return step(s, action, rng);
}

bool Model::is_safe(const State& s, std::string_view property) const {
    validate_state(s);
    for (std::size_t i = 0; i < desc_.properties.size(); ++i)
        if (desc_.properties[i] == property) return check_property(i, s);
    throw ValidationError("model '" + desc_.name + "' has no property '" +
                          std::string(property) + "'");
}

std::vector<std::string> builtin_model_names() {
    return {"bouncing-ball", "bouncing-ball-nonperiodic", "bouncing-ball-energy",
            "random-walk", "water-tank"};
}

std::unique_ptr<Model> make_model(const std::string& name, const ModelParams& params) {
    if (name == "bouncing-ball")
        return std::make_unique<BouncingBall>(read_ball_params(params), "bouncing-ball");
    if (name == "bouncing-ball-nonperiodic") {
        BallParams p = read_ball_params(params);
        if (!params.contains("random_period")) p.random_period = 1.0;
        return std::make_unique<BouncingBall>(p, "bouncing-ball-nonperiodic");
    }
    if (name == "bouncing-ball-energy")
        return std::make_unique<EnergyBall>(read_ball_params(params));
    if (name == "random-walk") return std::make_unique<RandomWalk>(params);
    if (name == "water-tank") return std::make_unique<WaterTank>(params);
    throw ValidationError("unknown model '" + name + "'");
}

} // namespace shieldkit
