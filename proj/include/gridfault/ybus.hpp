#pragma once

#include <Eigen/Dense>

#include "gridfault/network.hpp"

namespace gridfault {

class SingularNetwork : public std::runtime_error {
public:
    explicit SingularNetwork(const std::string& what) : std::runtime_error(what) {}
};

class UnsupportedKind : public std::runtime_error {
public:
    explicit UnsupportedKind(const std::string& what) : std::runtime_error(what) {}
};

enum class Sequence { Positive, Zero };

enum class FaultKind { None, ThreePhaseBus, BranchTrip, LL, LG };

std::string to_string(FaultKind kind);
FaultKind fault_kind_from_string(const std::string& s);

/// Thevenin impedances of the three sequence networks seen from one bus.
struct SequenceImpedances {
    Complex z1{0.0, 0.0};
    Complex z2{0.0, 0.0};
    Complex z0{0.0, 0.0};
};

/// Bus admittance matrix of the requested sequence network. Branch service
/// flags are honored; bus shunts sit on the diagonal.
Eigen::MatrixXcd build_ybus(const NetworkModel& net, Sequence seq);

/// Driving-point sequence impedances at `bus_id`, with machines folded in as
/// xd' (positive), x2 (negative, xd' when absent) and x0 (zero) admittances.
SequenceImpedances thevenin_at_bus(const NetworkModel& net, int bus_id);

/// Impedance of the shunt that represents an unbalanced fault in the
/// positive-sequence network: the series connection of the other sequence
/// networks plus the fault impedance.
Complex equivalent_fault_shunt(FaultKind kind, const SequenceImpedances& seq, Complex zf);

}  // namespace gridfault
