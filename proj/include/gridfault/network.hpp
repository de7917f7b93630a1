#pragma once

#include <complex>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridfault {

using Complex = std::complex<double>;

class NetworkError : public std::runtime_error {
public:
    explicit NetworkError(const std::string& what) : std::runtime_error(what) {}
};

enum class BusKind { Slack, PV, PQ };

std::string to_string(BusKind kind);
BusKind bus_kind_from_string(const std::string& s);

struct Bus {
    int id = 0;
    BusKind kind = BusKind::PQ;
    double v_setpoint = 1.0;     // held voltage, PV/Slack only
    Complex shunt{0.0, 0.0};     // bus shunt admittance, per-unit
};

struct Branch {
    int from_bus = 0;
    int to_bus = 0;
    Complex z1{0.0, 0.0};        // positive-sequence series impedance
    Complex z0{0.0, 0.0};        // zero-sequence series impedance
    bool in_service = true;
};

struct Generator {
    int bus = 0;
    double p_set = 0.0;
    double xd_prime = 0.0;       // transient reactance behind the internal node
    double inertia_h = 0.0;      // seconds
    double damping_d = 0.0;      // pu torque per pu speed deviation
    double x2 = 0.0;             // negative-sequence reactance, 0 = fall back to xd_prime
    double x0 = 0.0;             // zero-sequence grounding reactance, 0 = no ground path
};

struct Load {
    int bus = 0;
    double p = 0.0;
    double q = 0.0;
};

/// Per-unit network on the system base. Immutable after load; every consumer
/// takes it by const reference and may read it concurrently.
struct NetworkModel {
    double base_mva = 100.0;
    double base_freq_hz = 50.0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Generator> generators;
    std::vector<Load> loads;

    int bus_count() const { return static_cast<int>(buses.size()); }

    /// Bus ids are contiguous 1..N, so the index is id-1. Throws on bad id.
    int bus_index(int id) const;

    int slack_index() const;

    /// Enforces every structural invariant; throws NetworkError naming the
    /// first violation found.
    void validate() const;
};

NetworkModel parse_network(const std::string& json_text, const std::string& origin = "<string>");
NetworkModel load_network(const std::filesystem::path& path);
std::string network_to_json(const NetworkModel& net);

}  // namespace gridfault
