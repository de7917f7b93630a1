#include "gridfault/transient.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "gridfault/io_util.hpp"
#include "gridfault/powerflow.hpp"
#include "gridfault/rng.hpp"
#include "json.hpp"

namespace gridfault {

bool FluctuationPlan::is_identity() const {
    auto all_zero = [](const Eigen::VectorXd& v) { return v.size() == 0 || v.isZero(0.0); };
    return all_zero(gen_dp) && all_zero(load_dp) && all_zero(load_dq);
}

namespace {

constexpr Complex kJ{0.0, 1.0};

struct Machine {
    int bus = 0;          // 0-based
    Complex y_int;        // 1/(j xd')
    double em = 0.0;      // internal EMF magnitude, fixed over the run
    double pm = 0.0;      // mechanical power, equals initial Pe
    double two_h = 0.0;
    double damping = 0.0;
};

/// Algebraic network for one topology segment. The faulted bus is eliminated
/// exactly when the fault shunt is bolted (zero impedance).
class NetworkSolver {
public:
    NetworkSolver(Eigen::MatrixXcd y, int grounded_bus)
        : n_(static_cast<int>(y.rows())), grounded_(grounded_bus) {
        if (grounded_ < 0) {
            lu_.compute(std::move(y));
        } else {
            keep_.reserve(n_ - 1);
            for (int i = 0; i < n_; ++i) {
                if (i != grounded_) keep_.push_back(i);
            }
            Eigen::MatrixXcd reduced(n_ - 1, n_ - 1);
            for (int r = 0; r < n_ - 1; ++r) {
                for (int c = 0; c < n_ - 1; ++c) {
                    reduced(r, c) = y(keep_[r], keep_[c]);
                }
            }
            lu_.compute(std::move(reduced));
        }
        if (!lu_.isInvertible()) {
            throw SingularNetwork("dynamic network matrix is singular");
        }
    }

    void solve(const Eigen::VectorXcd& injections, Eigen::VectorXcd& v) const {
        if (grounded_ < 0) {
            v = lu_.solve(injections);
            return;
        }
        Eigen::VectorXcd rhs(n_ - 1);
        for (int r = 0; r < n_ - 1; ++r) rhs(r) = injections(keep_[r]);
        const Eigen::VectorXcd sol = lu_.solve(rhs);
        v.setZero(n_);
        for (int r = 0; r < n_ - 1; ++r) v(keep_[r]) = sol(r);
    }

private:
    int n_;
    int grounded_;
    std::vector<int> keep_;
    Eigen::FullPivLU<Eigen::MatrixXcd> lu_;
};

int snap_to_grid(double t, double dt) {
    return static_cast<int>(std::ceil(t / dt - 1e-9));
}

void check_scenario(const NetworkModel& net, const FaultScenario& sc, double horizon) {
    if (sc.kind == FaultKind::None) return;
    if (!(sc.t_apply > 0.0) || !(sc.t_apply < sc.t_clear) || sc.t_clear > horizon + 1e-12) {
        throw ScenarioError("fault times must satisfy 0 < t_apply < t_clear <= horizon");
    }
    if (!std::isfinite(sc.zf.real()) || !std::isfinite(sc.zf.imag())) {
        throw ScenarioError("fault impedance must be finite");
    }
    if (sc.kind == FaultKind::BranchTrip) {
        if (sc.branch < 1 || sc.branch > static_cast<int>(net.branches.size())) {
            throw ScenarioError("branch id " + std::to_string(sc.branch) + " out of range");
        }
    } else {
        net.bus_index(sc.bus);  // throws on bad id
    }
}

}  // namespace

PmuSeries simulate(const NetworkModel& net, const FaultScenario& scenario,
                   const FluctuationPlan& plan, std::uint64_t seed,
                   const SimOptions& options) {
    const int n = net.bus_count();
    const double horizon = options.sample_dt * options.samples;
    check_scenario(net, scenario, horizon);

    const int sample_every = static_cast<int>(std::llround(options.sample_dt / options.dt));
    if (std::abs(sample_every * options.dt - options.sample_dt) > 1e-12) {
        throw ScenarioError("sample_dt must be an integer multiple of dt");
    }
    const int total_steps = sample_every * (options.samples - 1) + 1;

    // Pre-fault operating point.
    PowerFlowSolution pf;
    try {
        pf = solve(net, nominal_injections(net), {options.pf_tol, options.pf_max_iter});
    } catch (const std::exception& e) {
        throw PreFaultDivergence(std::string("pre-fault power flow failed: ") + e.what());
    }
    const Eigen::VectorXcd v0 = pf.phasors();

    // Reactive power produced by the machines at each bus: solved net
    // injection plus the local load.
    Eigen::VectorXd q_load = Eigen::VectorXd::Zero(n);
    for (const auto& load : net.loads) q_load(net.bus_index(load.bus)) += load.q;
    Eigen::VectorXi gens_at_bus = Eigen::VectorXi::Zero(n);
    for (const auto& gen : net.generators) gens_at_bus(net.bus_index(gen.bus))++;

    std::vector<Machine> machines;
    machines.reserve(net.generators.size());
    Eigen::VectorXd delta(net.generators.size());
    for (std::size_t g = 0; g < net.generators.size(); ++g) {
        const auto& gen = net.generators[g];
        const int b = net.bus_index(gen.bus);
        const double q_share = (pf.q_inj(b) + q_load(b)) / gens_at_bus(b);
        const Complex s_gen(gen.p_set, q_share);
        const Complex i_gen = std::conj(s_gen / v0(b));
        const Complex emf = v0(b) + kJ * gen.xd_prime * i_gen;
        Machine m;
        m.bus = b;
        m.y_int = 1.0 / (kJ * gen.xd_prime);
        m.em = std::abs(emf);
        m.two_h = 2.0 * gen.inertia_h;
        m.damping = gen.damping_d;
        machines.push_back(m);
        delta(g) = std::arg(emf);
    }
    if (machines.empty()) {
        throw PreFaultDivergence("network has no generators to drive the dynamics");
    }
    const int n_mach = static_cast<int>(machines.size());

    // Constant-impedance load admittances from the solved voltages.
    Eigen::VectorXcd y_load_base = Eigen::VectorXcd::Zero(n);
    Eigen::VectorXcd y_load_fluct = Eigen::VectorXcd::Zero(n);
    for (std::size_t l = 0; l < net.loads.size(); ++l) {
        const auto& load = net.loads[l];
        const int b = net.bus_index(load.bus);
        const double vsq = std::norm(v0(b));
        y_load_base(b) += Complex(load.p, -load.q) / vsq;
        const double dp = plan.load_dp.size() > 0 ? plan.load_dp(l) : 0.0;
        const double dq = plan.load_dq.size() > 0 ? plan.load_dq(l) : 0.0;
        y_load_fluct(b) += Complex(load.p * (1.0 + dp), -load.q * (1.0 + dq)) / vsq;
    }

    // Fault shunt from the sequence networks.
    Complex y_fault{0.0, 0.0};
    int grounded_bus = -1;
    int fault_bus = -1;
    if (scenario.kind == FaultKind::ThreePhaseBus || scenario.kind == FaultKind::LL ||
        scenario.kind == FaultKind::LG) {
        fault_bus = net.bus_index(scenario.bus);
        Complex z_sh = scenario.zf;
        if (scenario.kind != FaultKind::ThreePhaseBus) {
            const SequenceImpedances seq = thevenin_at_bus(net, scenario.bus);
            z_sh = equivalent_fault_shunt(scenario.kind, seq, scenario.zf);
        }
        if (std::abs(z_sh) < 1e-12) {
            grounded_bus = fault_bus;
        } else {
            y_fault = 1.0 / z_sh;
        }
    }

    const int k_apply = scenario.kind == FaultKind::None
                            ? total_steps + 1
                            : snap_to_grid(scenario.t_apply, options.dt);
    const int k_clear = scenario.kind == FaultKind::None
                            ? total_steps + 1
                            : snap_to_grid(scenario.t_clear, options.dt);
    const bool has_fluct = plan.has_event() && !plan.is_identity();
    const int k_fluct = has_fluct ? snap_to_grid(plan.t_step, options.dt) : total_steps + 1;

    // Base mechanical power is pinned to the initial electrical power so the
    // unforced system starts at an exact fixed point.
    Eigen::VectorXd pm_scale = Eigen::VectorXd::Ones(n_mach);
    if (has_fluct && plan.gen_dp.size() > 0) {
        for (int g = 0; g < n_mach; ++g) pm_scale(g) = 1.0 + plan.gen_dp(g);
    }

    auto assemble = [&](bool fault_on, bool branch_open, bool fluct_on) {
        NetworkModel topo = net;
        if (branch_open) topo.branches[scenario.branch - 1].in_service = false;
        Eigen::MatrixXcd y = build_ybus(topo, Sequence::Positive);
        const Eigen::VectorXcd& yl = fluct_on ? y_load_fluct : y_load_base;
        for (int b = 0; b < n; ++b) y(b, b) += yl(b);
        for (const auto& m : machines) y(m.bus, m.bus) += m.y_int;
        int ground = -1;
        if (fault_on) {
            if (grounded_bus >= 0) {
                ground = grounded_bus;
            } else {
                y(fault_bus, fault_bus) += y_fault;
            }
        }
        return NetworkSolver(std::move(y), ground);
    };

    bool fault_on = false, branch_open = false, fluct_on = false;
    auto solver = std::make_unique<NetworkSolver>(assemble(false, false, false));

    Eigen::VectorXcd inj(n), v_bus(n);
    Eigen::VectorXcd emf(n_mach);
    auto solve_network = [&](const Eigen::VectorXd& deltas) {
        inj.setZero();
        for (int g = 0; g < n_mach; ++g) {
            emf(g) = std::polar(machines[g].em, deltas(g));
            inj(machines[g].bus) += emf(g) * machines[g].y_int;
        }
        solver->solve(inj, v_bus);
    };

    Eigen::VectorXd pe(n_mach);
    auto electrical_power = [&](const Eigen::VectorXd& deltas) {
        solve_network(deltas);
        for (int g = 0; g < n_mach; ++g) {
            const Complex current = (emf(g) - v_bus(machines[g].bus)) * machines[g].y_int;
            pe(g) = (emf(g) * std::conj(current)).real();
        }
    };

    // Mechanical power from the as-assembled initial network.
    electrical_power(delta);
    Eigen::VectorXd pm_base = pe;

    const double omega_s = 2.0 * std::numbers::pi * net.base_freq_hz;
    Eigen::VectorXd omega = Eigen::VectorXd::Zero(n_mach);

    Eigen::VectorXd kd1(n_mach), kw1(n_mach), kd2(n_mach), kw2(n_mach), kd3(n_mach),
        kw3(n_mach), kd4(n_mach), kw4(n_mach), dtmp(n_mach), wtmp(n_mach);
    auto derivatives = [&](const Eigen::VectorXd& d, const Eigen::VectorXd& w,
                           Eigen::VectorXd& dd, Eigen::VectorXd& dw) {
        electrical_power(d);
        for (int g = 0; g < n_mach; ++g) {
            dd(g) = omega_s * w(g);
            dw(g) = (pm_base(g) * pm_scale(g) - pe(g) - machines[g].damping * w(g)) /
                    machines[g].two_h;
        }
    };

    PmuSeries series;
    series.dt = options.sample_dt;
    series.steps = options.samples;
    series.v_mag.resize(options.samples, n);
    series.v_ang.resize(options.samples, n);
    series.scenario = scenario;
    series.seed = seed;

    const double h = options.dt;
    for (int k = 0; k < total_steps; ++k) {
        bool topo_changed = false;
        if (k >= k_apply && k < k_clear && !fault_on) {
            if (scenario.kind == FaultKind::BranchTrip) {
                branch_open = true;
            }
            fault_on = true;
            topo_changed = true;
        }
        if (k >= k_clear && fault_on) {
            fault_on = false;  // a tripped branch stays open after clearing
            topo_changed = true;
        }
        if (k >= k_fluct && !fluct_on) {
            fluct_on = true;
            topo_changed = true;
        }
        if (topo_changed) {
            const bool shunt_active = fault_on && scenario.kind != FaultKind::BranchTrip;
            solver = std::make_unique<NetworkSolver>(
                assemble(shunt_active, branch_open, fluct_on));
        }

        if (k % sample_every == 0) {
            const int row = k / sample_every;
            solve_network(delta);
            for (int b = 0; b < n; ++b) {
                const double mag = std::abs(v_bus(b));
                if (!std::isfinite(mag) || mag > options.v_max) {
                    throw NumericalBlowup("voltage blew up at t=" +
                                          std::to_string(k * h) + " bus " +
                                          std::to_string(b + 1));
                }
                series.v_mag(row, b) = mag;
                series.v_ang(row, b) = std::arg(v_bus(b));
            }
            if (!delta.allFinite() || !omega.allFinite() ||
                omega.cwiseAbs().maxCoeff() > 1.0) {
                throw NumericalBlowup("machine state blew up at t=" + std::to_string(k * h));
            }
            if (row == options.samples - 1) break;
        }

        derivatives(delta, omega, kd1, kw1);
        dtmp = delta + 0.5 * h * kd1;
        wtmp = omega + 0.5 * h * kw1;
        derivatives(dtmp, wtmp, kd2, kw2);
        dtmp = delta + 0.5 * h * kd2;
        wtmp = omega + 0.5 * h * kw2;
        derivatives(dtmp, wtmp, kd3, kw3);
        dtmp = delta + h * kd3;
        wtmp = omega + h * kw3;
        derivatives(dtmp, wtmp, kd4, kw4);
        delta += (h / 6.0) * (kd1 + 2.0 * kd2 + 2.0 * kd3 + kd4);
        omega += (h / 6.0) * (kw1 + 2.0 * kw2 + 2.0 * kw3 + kw4);
    }

    return series;
}

Eigen::VectorXd max_voltage_deviation(const PmuSeries& series) {
    const Eigen::Index n = series.v_mag.cols();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
    for (Eigen::Index b = 0; b < n; ++b) {
        const double base = series.v_mag(0, b);
        for (Eigen::Index t = 0; t < series.v_mag.rows(); ++t) {
            out(b) = std::max(out(b), std::abs(series.v_mag(t, b) - base));
        }
    }
    return out;
}

FluctuationPlan draw_fluctuation(std::uint64_t seed, double lo, double hi,
                                 const NetworkModel& net, double t_step) {
    if (!(lo <= hi)) throw InfeasiblePlan("fluctuation bounds must satisfy lo <= hi");
    Rng rng(seed);
    for (int attempt = 0; attempt < 100; ++attempt) {
        FluctuationPlan plan;
        plan.t_step = t_step;
        plan.gen_dp.resize(static_cast<Eigen::Index>(net.generators.size()));
        plan.load_dp.resize(static_cast<Eigen::Index>(net.loads.size()));
        plan.load_dq.resize(static_cast<Eigen::Index>(net.loads.size()));
        for (Eigen::Index g = 0; g < plan.gen_dp.size(); ++g) {
            plan.gen_dp(g) = rng.uniform(lo, hi);
        }
        for (Eigen::Index l = 0; l < plan.load_dp.size(); ++l) {
            plan.load_dp(l) = rng.uniform(lo, hi);
            plan.load_dq(l) = rng.uniform(lo, hi);
        }

        bool feasible = true;
        for (std::size_t l = 0; l < net.loads.size(); ++l) {
            if (net.loads[l].p * (1.0 + plan.load_dp(static_cast<Eigen::Index>(l))) < 0.0) {
                feasible = false;
                break;
            }
        }
        for (Eigen::Index g = 0; feasible && g < plan.gen_dp.size(); ++g) {
            if (1.0 + plan.gen_dp(g) < 0.0) feasible = false;
        }
        if (feasible) return plan;
    }
    throw InfeasiblePlan("no feasible fluctuation plan after 100 redraws");
}

NetworkModel apply_fluctuation_to_network(const NetworkModel& net,
                                          const FluctuationPlan& plan) {
    NetworkModel out = net;
    for (std::size_t g = 0; g < out.generators.size(); ++g) {
        if (plan.gen_dp.size() > 0) {
            out.generators[g].p_set *= 1.0 + plan.gen_dp(static_cast<Eigen::Index>(g));
        }
    }
    for (std::size_t l = 0; l < out.loads.size(); ++l) {
        if (plan.load_dp.size() > 0) {
            out.loads[l].p *= 1.0 + plan.load_dp(static_cast<Eigen::Index>(l));
        }
        if (plan.load_dq.size() > 0) {
            out.loads[l].q *= 1.0 + plan.load_dq(static_cast<Eigen::Index>(l));
        }
    }
    return out;
}

void write_pmu_csv(const PmuSeries& series, const std::filesystem::path& path) {
    std::string out;
    out.reserve(static_cast<std::size_t>(series.steps) * series.v_mag.cols() * 48 + 32);
    out += "t,bus,v_mag,v_ang\n";
    for (int t = 0; t < series.steps; ++t) {
        const std::string ts = format_double(t * series.dt);
        for (Eigen::Index b = 0; b < series.v_mag.cols(); ++b) {
            out += ts;
            out += ',';
            out += std::to_string(b + 1);
            out += ',';
            out += format_double(series.v_mag(t, b));
            out += ',';
            out += format_double(series.v_ang(t, b));
            out += '\n';
        }
    }
    write_text_file(path, out);
}

PmuSeries read_pmu_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path.string(), "cannot open file");
    std::string line;
    long line_no = 0;
    if (!std::getline(in, line)) throw ParseError(path.string(), "empty file", 1);
    ++line_no;

    struct Row {
        double t, mag, ang;
        int bus;
    };
    std::vector<Row> rows;
    int max_bus = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 4) {
            throw ParseError(path.string(), "expected 4 columns", line_no);
        }
        Row r;
        r.t = parse_double(fields[0], path.string(), line_no);
        r.bus = static_cast<int>(parse_long(fields[1], path.string(), line_no));
        r.mag = parse_double(fields[2], path.string(), line_no);
        r.ang = parse_double(fields[3], path.string(), line_no);
        max_bus = std::max(max_bus, r.bus);
        rows.push_back(r);
    }
    if (rows.empty() || max_bus == 0 || rows.size() % max_bus != 0) {
        throw ParseError(path.string(), "row count is not a multiple of the bus count");
    }
    const int steps = static_cast<int>(rows.size()) / max_bus;

    PmuSeries series;
    series.steps = steps;
    series.dt = steps > 1 ? rows[static_cast<std::size_t>(max_bus)].t - rows[0].t : 0.04;
    series.v_mag.resize(steps, max_bus);
    series.v_ang.resize(steps, max_bus);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const int t = static_cast<int>(i) / max_bus;
        const int b = rows[i].bus - 1;
        if (b < 0 || b >= max_bus) throw ParseError(path.string(), "bus id out of range");
        series.v_mag(t, b) = rows[i].mag;
        series.v_ang(t, b) = rows[i].ang;
    }
    return series;
}

std::string scenario_to_json(const FaultScenario& scenario, std::uint64_t seed) {
    nlohmann::json doc{{"kind", to_string(scenario.kind)},
                       {"bus", scenario.bus},
                       {"branch", scenario.branch},
                       {"t_apply", scenario.t_apply},
                       {"t_clear", scenario.t_clear},
                       {"zf", {{"r", scenario.zf.real()}, {"x", scenario.zf.imag()}}},
                       {"seed", seed}};
    return doc.dump(2) + "\n";
}

FaultScenario scenario_from_json(const std::string& text, std::uint64_t* seed_out) {
    nlohmann::json doc = nlohmann::json::parse(text);
    FaultScenario sc;
    sc.kind = fault_kind_from_string(doc.at("kind").get<std::string>());
    sc.bus = doc.value("bus", 0);
    sc.branch = doc.value("branch", 0);
    sc.t_apply = doc.value("t_apply", 0.0);
    sc.t_clear = doc.value("t_clear", 0.0);
    if (doc.contains("zf")) {
        sc.zf = Complex(doc["zf"].value("r", 0.0), doc["zf"].value("x", 0.0));
    }
    if (seed_out) *seed_out = doc.value("seed", 0ULL);
    return sc;
}

}  // namespace gridfault
