#pragma once

#include <Eigen/Dense>
#include <optional>

#include "gridfault/network.hpp"

namespace gridfault {

class NoConvergence : public std::runtime_error {
public:
    NoConvergence(int iterations, double mismatch)
        : std::runtime_error("power flow did not converge after " +
                             std::to_string(iterations) +
                             " iterations (mismatch " + std::to_string(mismatch) + ")"),
          iterations(iterations), mismatch(mismatch) {}
    int iterations;
    double mismatch;
};

class SingularJacobian : public std::runtime_error {
public:
    explicit SingularJacobian(const std::string& what) : std::runtime_error(what) {}
};

class DimensionMismatch : public std::runtime_error {
public:
    explicit DimensionMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct PowerFlowSolution {
    Eigen::VectorXd v_mag;
    Eigen::VectorXd v_ang;
    Eigen::VectorXd p_inj;
    Eigen::VectorXd q_inj;
    int iterations = 0;
    double max_mismatch = 0.0;

    Eigen::VectorXcd phasors() const;
};

struct PowerFlowOptions {
    double tol = 1e-8;
    int max_iter = 30;
};

struct WarmStart {
    Eigen::VectorXd v_mag;
    Eigen::VectorXd v_ang;
};

/// Scheduled complex injections (generation minus load) built from the
/// network's generator set points and loads. PV-bus imaginary parts carry the
/// load reactive power only; the solver ignores them there.
Eigen::VectorXcd nominal_injections(const NetworkModel& net);

/// Newton-Raphson AC power flow in polar form, dense LU on the Jacobian.
PowerFlowSolution solve(const NetworkModel& net, const Eigen::VectorXcd& injections,
                        const PowerFlowOptions& options = {},
                        const std::optional<WarmStart>& warm = std::nullopt);

/// Scheduled minus computed complex power at every bus.
Eigen::VectorXcd residual(const NetworkModel& net, const Eigen::VectorXcd& injections,
                          const Eigen::VectorXd& v_mag, const Eigen::VectorXd& v_ang);

/// Variable ordering of the reduced Newton system: angles at every non-slack
/// bus, then magnitudes at PQ buses.
struct NewtonVariables {
    std::vector<int> angle_buses;
    std::vector<int> vmag_buses;
};

NewtonVariables newton_variables(const NetworkModel& net);

/// Analytic Jacobian of the reduced mismatch vector; exposed for the
/// finite-difference cross-check.
Eigen::MatrixXd jacobian(const NetworkModel& net, const Eigen::VectorXd& v_mag,
                         const Eigen::VectorXd& v_ang);

/// Reduced mismatch vector [dP at non-slack; dQ at PQ] for the same ordering.
Eigen::VectorXd mismatch_vector(const NetworkModel& net, const Eigen::VectorXcd& injections,
                                const Eigen::VectorXd& v_mag, const Eigen::VectorXd& v_ang);

}  // namespace gridfault
