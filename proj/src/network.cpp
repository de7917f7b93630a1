#include "gridfault/network.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "gridfault/io_util.hpp"
#include "json.hpp"

namespace gridfault {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& context) {
    for (const auto& item : obj.items()) {
        if (!allowed.count(item.key())) {
            throw NetworkError("unknown key '" + item.key() + "' in " + context);
        }
    }
}

Complex parse_impedance(const json& obj, const std::string& context) {
    if (!obj.is_object()) throw NetworkError(context + " must be an object with keys r, x");
    reject_unknown_keys(obj, {"r", "x"}, context);
    return {obj.value("r", 0.0), obj.value("x", 0.0)};
}

Complex parse_admittance(const json& obj, const std::string& context) {
    if (!obj.is_object()) throw NetworkError(context + " must be an object with keys g, b");
    reject_unknown_keys(obj, {"g", "b"}, context);
    return {obj.value("g", 0.0), obj.value("b", 0.0)};
}

json impedance_to_json(const Complex& z) { return json{{"r", z.real()}, {"x", z.imag()}}; }

}  // namespace

std::string to_string(BusKind kind) {
    switch (kind) {
        case BusKind::Slack: return "slack";
        case BusKind::PV: return "pv";
        case BusKind::PQ: return "pq";
    }
    return "?";
}

BusKind bus_kind_from_string(const std::string& s) {
    if (s == "slack") return BusKind::Slack;
    if (s == "pv") return BusKind::PV;
    if (s == "pq") return BusKind::PQ;
    throw NetworkError("unknown bus kind '" + s + "'");
}

int NetworkModel::bus_index(int id) const {
    if (id < 1 || id > bus_count()) {
        throw NetworkError("bus id " + std::to_string(id) + " out of range 1.." +
                           std::to_string(bus_count()));
    }
    return id - 1;
}

int NetworkModel::slack_index() const {
    for (int i = 0; i < bus_count(); ++i) {
        if (buses[i].kind == BusKind::Slack) return i;
    }
    throw NetworkError("network has no slack bus");
}

void NetworkModel::validate() const {
    if (base_mva <= 0.0) throw NetworkError("base_mva must be positive");
    if (base_freq_hz <= 0.0) throw NetworkError("base_freq_hz must be positive");
    if (buses.empty()) throw NetworkError("network has no buses");

    const int n = bus_count();
    std::set<int> ids;
    int slack_count = 0;
    for (const auto& bus : buses) {
        if (bus.id < 1) throw NetworkError("bus id must be >= 1");
        if (!ids.insert(bus.id).second) {
            throw NetworkError("duplicate bus id " + std::to_string(bus.id));
        }
        if (bus.kind == BusKind::Slack) ++slack_count;
        if (bus.kind != BusKind::PQ &&
            (bus.v_setpoint < 0.9 || bus.v_setpoint > 1.1)) {
            throw NetworkError("bus " + std::to_string(bus.id) +
                               " v_setpoint outside [0.9, 1.1]");
        }
    }
    if (*ids.begin() != 1 || *ids.rbegin() != n) {
        throw NetworkError("bus ids must be contiguous 1..N");
    }
    for (int i = 0; i < n; ++i) {
        if (buses[i].id != i + 1) throw NetworkError("buses must be listed in id order");
    }
    if (slack_count != 1) {
        throw NetworkError("network must have exactly one slack bus, found " +
                           std::to_string(slack_count));
    }

    for (std::size_t k = 0; k < branches.size(); ++k) {
        const auto& br = branches[k];
        const std::string ctx = "branch " + std::to_string(k + 1);
        if (br.from_bus == br.to_bus) throw NetworkError(ctx + " connects a bus to itself");
        if (br.from_bus < 1 || br.from_bus > n || br.to_bus < 1 || br.to_bus > n) {
            throw NetworkError(ctx + " references a missing bus");
        }
        if (std::abs(br.z1) == 0.0) throw NetworkError(ctx + " has zero z1");
        if (std::abs(br.z0) == 0.0) throw NetworkError(ctx + " has zero z0");
    }
    for (const auto& gen : generators) {
        if (gen.bus < 1 || gen.bus > n) throw NetworkError("generator references a missing bus");
        if (gen.inertia_h <= 0.0) throw NetworkError("generator inertia_h must be positive");
        if (gen.xd_prime <= 0.0) throw NetworkError("generator xd_prime must be positive");
        if (gen.damping_d < 0.0) throw NetworkError("generator damping_d must be >= 0");
    }
    for (const auto& load : loads) {
        if (load.bus < 1 || load.bus > n) throw NetworkError("load references a missing bus");
        if (load.p < 0.0) throw NetworkError("load p must be >= 0");
    }

    // Connectivity over in-service branches.
    std::vector<std::vector<int>> adj(n);
    for (const auto& br : branches) {
        if (!br.in_service) continue;
        adj[br.from_bus - 1].push_back(br.to_bus - 1);
        adj[br.to_bus - 1].push_back(br.from_bus - 1);
    }
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int reached = 1;
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        for (int v : adj[u]) {
            if (!seen[v]) {
                seen[v] = 1;
                ++reached;
                stack.push_back(v);
            }
        }
    }
    if (reached != n) {
        for (int i = 0; i < n; ++i) {
            if (!seen[i]) {
                throw NetworkError("bus " + std::to_string(i + 1) +
                                   " is islanded from the slack bus");
            }
        }
    }
}

NetworkModel parse_network(const std::string& json_text, const std::string& origin) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw NetworkError(origin + ": invalid JSON: " + e.what());
    }
    reject_unknown_keys(doc, {"base_mva", "base_freq_hz", "buses", "branches",
                              "generators", "loads"},
                        "network document");

    NetworkModel net;
    net.base_mva = doc.value("base_mva", 100.0);
    net.base_freq_hz = doc.value("base_freq_hz", 50.0);

    for (const auto& jb : doc.value("buses", json::array())) {
        reject_unknown_keys(jb, {"id", "kind", "v_setpoint", "shunt"}, "bus entry");
        Bus bus;
        bus.id = jb.at("id").get<int>();
        bus.kind = bus_kind_from_string(jb.at("kind").get<std::string>());
        bus.v_setpoint = jb.value("v_setpoint", 1.0);
        if (jb.contains("shunt")) bus.shunt = parse_admittance(jb["shunt"], "bus shunt");
        net.buses.push_back(bus);
    }
    for (const auto& jb : doc.value("branches", json::array())) {
        reject_unknown_keys(jb, {"from", "to", "z1", "z0", "in_service"}, "branch entry");
        Branch br;
        br.from_bus = jb.at("from").get<int>();
        br.to_bus = jb.at("to").get<int>();
        br.z1 = parse_impedance(jb.at("z1"), "branch z1");
        // Zero-sequence impedance defaults to 3x the positive-sequence value,
        // the usual overhead-line ratio, when the file omits it.
        br.z0 = jb.contains("z0") ? parse_impedance(jb["z0"], "branch z0") : 3.0 * br.z1;
        br.in_service = jb.value("in_service", true);
        net.branches.push_back(br);
    }
    for (const auto& jg : doc.value("generators", json::array())) {
        reject_unknown_keys(jg, {"bus", "p_set", "xd_prime", "inertia_h", "damping_d",
                                 "x2", "x0"},
                            "generator entry");
        Generator gen;
        gen.bus = jg.at("bus").get<int>();
        gen.p_set = jg.at("p_set").get<double>();
        gen.xd_prime = jg.at("xd_prime").get<double>();
        gen.inertia_h = jg.at("inertia_h").get<double>();
        gen.damping_d = jg.value("damping_d", 0.0);
        gen.x2 = jg.value("x2", 0.0);
        gen.x0 = jg.value("x0", 0.0);
        net.generators.push_back(gen);
    }
    for (const auto& jl : doc.value("loads", json::array())) {
        reject_unknown_keys(jl, {"bus", "p", "q"}, "load entry");
        Load load;
        load.bus = jl.at("bus").get<int>();
        load.p = jl.at("p").get<double>();
        load.q = jl.value("q", 0.0);
        net.loads.push_back(load);
    }

    net.validate();
    return net;
}

NetworkModel load_network(const std::filesystem::path& path) {
    return parse_network(read_text_file(path), path.string());
}

std::string network_to_json(const NetworkModel& net) {
    json doc;
    doc["base_mva"] = net.base_mva;
    doc["base_freq_hz"] = net.base_freq_hz;
    doc["buses"] = json::array();
    for (const auto& bus : net.buses) {
        json jb{{"id", bus.id}, {"kind", to_string(bus.kind)}};
        if (bus.kind != BusKind::PQ) jb["v_setpoint"] = bus.v_setpoint;
        if (bus.shunt != Complex{0.0, 0.0}) {
            jb["shunt"] = json{{"g", bus.shunt.real()}, {"b", bus.shunt.imag()}};
        }
        doc["buses"].push_back(jb);
    }
    doc["branches"] = json::array();
    for (const auto& br : net.branches) {
        doc["branches"].push_back(json{{"from", br.from_bus},
                                       {"to", br.to_bus},
                                       {"z1", impedance_to_json(br.z1)},
                                       {"z0", impedance_to_json(br.z0)},
                                       {"in_service", br.in_service}});
    }
    doc["generators"] = json::array();
    for (const auto& gen : net.generators) {
        json jg{{"bus", gen.bus},       {"p_set", gen.p_set},
                {"xd_prime", gen.xd_prime}, {"inertia_h", gen.inertia_h},
                {"damping_d", gen.damping_d}};
        if (gen.x2 > 0.0) jg["x2"] = gen.x2;
        if (gen.x0 > 0.0) jg["x0"] = gen.x0;
        doc["generators"].push_back(jg);
    }
    doc["loads"] = json::array();
    for (const auto& load : net.loads) {
        doc["loads"].push_back(json{{"bus", load.bus}, {"p", load.p}, {"q", load.q}});
    }
    return doc.dump(2) + "\n";
}

}  // namespace gridfault
