#include "gridfault/ybus.hpp"

#include <cmath>

namespace gridfault {

std::string to_string(FaultKind kind) {
    switch (kind) {
        case FaultKind::None: return "none";
        case FaultKind::ThreePhaseBus: return "3ph";
        case FaultKind::BranchTrip: return "branch-trip";
        case FaultKind::LL: return "ll";
        case FaultKind::LG: return "lg";
    }
    return "?";
}

FaultKind fault_kind_from_string(const std::string& s) {
    if (s == "none") return FaultKind::None;
    if (s == "3ph") return FaultKind::ThreePhaseBus;
    if (s == "branch-trip") return FaultKind::BranchTrip;
    if (s == "ll") return FaultKind::LL;
    if (s == "lg") return FaultKind::LG;
    throw UnsupportedKind("unknown fault kind '" + s + "'");
}

Eigen::MatrixXcd build_ybus(const NetworkModel& net, Sequence seq) {
    const int n = net.bus_count();
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& br : net.branches) {
        if (!br.in_service) continue;
        const Complex z = seq == Sequence::Positive ? br.z1 : br.z0;
        if (std::abs(z) == 0.0) {
            throw SingularNetwork("branch " + std::to_string(br.from_bus) + "-" +
                                  std::to_string(br.to_bus) + " has zero impedance");
        }
        const Complex ys = 1.0 / z;
        const int i = net.bus_index(br.from_bus);
        const int j = net.bus_index(br.to_bus);
        y(i, i) += ys;
        y(j, j) += ys;
        y(i, j) -= ys;
        y(j, i) -= ys;
    }
    for (int i = 0; i < n; ++i) {
        y(i, i) += net.buses[i].shunt;
    }
    return y;
}

namespace {

constexpr Complex kJ{0.0, 1.0};

/// Driving-point impedance at `index`: the (index,index) entry of inv(Y),
/// obtained by solving Y x = e_index.
Complex driving_point(const Eigen::MatrixXcd& y, int index, const char* label) {
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(y);
    if (!lu.isInvertible()) {
        throw SingularNetwork(std::string(label) + " sequence network has no path to reference");
    }
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(y.rows());
    rhs(index) = 1.0;
    return lu.solve(rhs)(index);
}

}  // namespace

SequenceImpedances thevenin_at_bus(const NetworkModel& net, int bus_id) {
    const int n = net.bus_count();
    const int index = net.bus_index(bus_id);

    Eigen::MatrixXcd y1 = build_ybus(net, Sequence::Positive);
    Eigen::MatrixXcd y2 = y1;
    bool any_x2 = false;
    for (const auto& gen : net.generators) {
        const int g = net.bus_index(gen.bus);
        y1(g, g) += 1.0 / (kJ * gen.xd_prime);
        const double x2 = gen.x2 > 0.0 ? gen.x2 : gen.xd_prime;
        if (gen.x2 > 0.0) any_x2 = true;
        y2(g, g) += 1.0 / (kJ * x2);
    }

    SequenceImpedances out;
    out.z1 = driving_point(y1, index, "positive");
    out.z2 = any_x2 ? driving_point(y2, index, "negative") : out.z1;

    Eigen::MatrixXcd y0 = build_ybus(net, Sequence::Zero);
    for (const auto& gen : net.generators) {
        if (gen.x0 > 0.0) {
            y0(net.bus_index(gen.bus), net.bus_index(gen.bus)) += 1.0 / (kJ * gen.x0);
        }
    }
    (void)n;
    out.z0 = driving_point(y0, index, "zero");
    return out;
}

Complex equivalent_fault_shunt(FaultKind kind, const SequenceImpedances& seq, Complex zf) {
    switch (kind) {
        case FaultKind::ThreePhaseBus:
            return zf;
        case FaultKind::LL:
            return seq.z2 + zf;
        case FaultKind::LG:
            return seq.z2 + seq.z0 + 3.0 * zf;
        default:
            throw UnsupportedKind("fault kind " + to_string(kind) +
                                  " has no shunt equivalent");
    }
}

}  // namespace gridfault
