#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>

#include "gridfault/network.hpp"
#include "gridfault/ybus.hpp"

namespace gridfault {

class PreFaultDivergence : public std::runtime_error {
public:
    explicit PreFaultDivergence(const std::string& what) : std::runtime_error(what) {}
};

class NumericalBlowup : public std::runtime_error {
public:
    explicit NumericalBlowup(const std::string& what) : std::runtime_error(what) {}
};

class InfeasiblePlan : public std::runtime_error {
public:
    explicit InfeasiblePlan(const std::string& what) : std::runtime_error(what) {}
};

class ScenarioError : public std::runtime_error {
public:
    explicit ScenarioError(const std::string& what) : std::runtime_error(what) {}
};

/// One disturbance script: what happens, where, and when.
struct FaultScenario {
    FaultKind kind = FaultKind::None;
    int bus = 0;          // fault bus id for bus faults
    int branch = 0;       // 1-based branch position for BranchTrip
    double t_apply = 0.0;
    double t_clear = 0.0;
    Complex zf{0.0, 0.0};
};

/// Multiplicative deltas applied to generation and load at t_step. Delta
/// vectors align with the network's generator and load lists; all-zero deltas
/// are the identity.
struct FluctuationPlan {
    double t_step = -1.0;  // < 0 means no fluctuation event
    Eigen::VectorXd gen_dp;
    Eigen::VectorXd load_dp;
    Eigen::VectorXd load_dq;

    bool has_event() const { return t_step >= 0.0; }
    bool is_identity() const;
};

/// PMU-style log: bus voltage magnitude and angle at a fixed cadence.
struct PmuSeries {
    double dt = 0.04;
    int steps = 100;
    Eigen::MatrixXd v_mag;  // steps x buses
    Eigen::MatrixXd v_ang;  // steps x buses
    FaultScenario scenario;
    std::uint64_t seed = 0;

    double horizon() const { return dt * steps; }
};

struct SimOptions {
    double dt = 0.005;        // internal RK4 step
    double sample_dt = 0.04;  // PMU cadence
    int samples = 100;
    double pf_tol = 1e-12;    // pre-fault operating point is tightened so the
    int pf_max_iter = 60;     // equilibrium holds to roundoff
    double v_max = 10.0;      // blowup guard
};

/// Classical-machine time-domain run: swing dynamics per generator, algebraic
/// network with constant-impedance loads, faults as positive-sequence shunts
/// or branch removal, fluctuation applied as a step change.
PmuSeries simulate(const NetworkModel& net, const FaultScenario& scenario,
                   const FluctuationPlan& plan, std::uint64_t seed,
                   const SimOptions& options = {});

/// Per-bus maximum |v(t) - v(0)| over the horizon.
Eigen::VectorXd max_voltage_deviation(const PmuSeries& series);

/// Uniform deltas in [lo, hi] per generator and per load quantity. Redraws
/// until the plan keeps loads nonnegative; throws InfeasiblePlan after 100
/// attempts.
FluctuationPlan draw_fluctuation(std::uint64_t seed, double lo, double hi,
                                 const NetworkModel& net, double t_step);

/// Copy of the network with the plan's deltas folded into the generator set
/// points and loads; used to randomize the operating point of a run.
NetworkModel apply_fluctuation_to_network(const NetworkModel& net, const FluctuationPlan& plan);

void write_pmu_csv(const PmuSeries& series, const std::filesystem::path& path);
PmuSeries read_pmu_csv(const std::filesystem::path& path);

std::string scenario_to_json(const FaultScenario& scenario, std::uint64_t seed);
FaultScenario scenario_from_json(const std::string& text, std::uint64_t* seed_out = nullptr);

}  // namespace gridfault
