#include "gridfault/powerflow.hpp"

#include <cmath>

#include "gridfault/ybus.hpp"

namespace gridfault {

Eigen::VectorXcd PowerFlowSolution::phasors() const {
    Eigen::VectorXcd v(v_mag.size());
    for (Eigen::Index i = 0; i < v_mag.size(); ++i) {
        v(i) = std::polar(v_mag(i), v_ang(i));
    }
    return v;
}

Eigen::VectorXcd nominal_injections(const NetworkModel& net) {
    Eigen::VectorXcd s = Eigen::VectorXcd::Zero(net.bus_count());
    for (const auto& gen : net.generators) {
        s(net.bus_index(gen.bus)) += Complex(gen.p_set, 0.0);
    }
    for (const auto& load : net.loads) {
        s(net.bus_index(load.bus)) -= Complex(load.p, load.q);
    }
    return s;
}

namespace {

struct ComputedPower {
    Eigen::VectorXd p;
    Eigen::VectorXd q;
};

ComputedPower computed_injections(const Eigen::MatrixXcd& y, const Eigen::VectorXd& v_mag,
                                  const Eigen::VectorXd& v_ang) {
    const int n = static_cast<int>(v_mag.size());
    ComputedPower out{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
    for (int i = 0; i < n; ++i) {
        double p = 0.0, q = 0.0;
        for (int j = 0; j < n; ++j) {
            const double g = y(i, j).real();
            const double b = y(i, j).imag();
            const double th = v_ang(i) - v_ang(j);
            const double c = std::cos(th), s = std::sin(th);
            p += v_mag(j) * (g * c + b * s);
            q += v_mag(j) * (g * s - b * c);
        }
        out.p(i) = v_mag(i) * p;
        out.q(i) = v_mag(i) * q;
    }
    return out;
}

}  // namespace

NewtonVariables newton_variables(const NetworkModel& net) {
    NewtonVariables vars;
    for (int i = 0; i < net.bus_count(); ++i) {
        if (net.buses[i].kind != BusKind::Slack) vars.angle_buses.push_back(i);
        if (net.buses[i].kind == BusKind::PQ) vars.vmag_buses.push_back(i);
    }
    return vars;
}

Eigen::VectorXd mismatch_vector(const NetworkModel& net, const Eigen::VectorXcd& injections,
                                const Eigen::VectorXd& v_mag, const Eigen::VectorXd& v_ang) {
    const auto y = build_ybus(net, Sequence::Positive);
    const auto calc = computed_injections(y, v_mag, v_ang);
    const auto vars = newton_variables(net);
    Eigen::VectorXd f(vars.angle_buses.size() + vars.vmag_buses.size());
    Eigen::Index k = 0;
    for (int i : vars.angle_buses) f(k++) = injections(i).real() - calc.p(i);
    for (int i : vars.vmag_buses) f(k++) = injections(i).imag() - calc.q(i);
    return f;
}

Eigen::MatrixXd jacobian(const NetworkModel& net, const Eigen::VectorXd& v_mag,
                         const Eigen::VectorXd& v_ang) {
    const auto y = build_ybus(net, Sequence::Positive);
    const auto calc = computed_injections(y, v_mag, v_ang);
    const auto vars = newton_variables(net);
    const auto na = static_cast<Eigen::Index>(vars.angle_buses.size());
    const auto nv = static_cast<Eigen::Index>(vars.vmag_buses.size());
    Eigen::MatrixXd jac(na + nv, na + nv);

    auto dp_dang = [&](int i, int j) {
        if (i == j) return -calc.q(i) - y(i, i).imag() * v_mag(i) * v_mag(i);
        const double th = v_ang(i) - v_ang(j);
        return v_mag(i) * v_mag(j) *
               (y(i, j).real() * std::sin(th) - y(i, j).imag() * std::cos(th));
    };
    auto dp_dv = [&](int i, int j) {
        if (i == j) return calc.p(i) / v_mag(i) + y(i, i).real() * v_mag(i);
        const double th = v_ang(i) - v_ang(j);
        return v_mag(i) * (y(i, j).real() * std::cos(th) + y(i, j).imag() * std::sin(th));
    };
    auto dq_dang = [&](int i, int j) {
        if (i == j) return calc.p(i) - y(i, i).real() * v_mag(i) * v_mag(i);
        const double th = v_ang(i) - v_ang(j);
        return -v_mag(i) * v_mag(j) *
               (y(i, j).real() * std::cos(th) + y(i, j).imag() * std::sin(th));
    };
    auto dq_dv = [&](int i, int j) {
        if (i == j) return calc.q(i) / v_mag(i) - y(i, i).imag() * v_mag(i);
        const double th = v_ang(i) - v_ang(j);
        return v_mag(i) * (y(i, j).real() * std::sin(th) - y(i, j).imag() * std::cos(th));
    };

    for (Eigen::Index r = 0; r < na; ++r) {
        for (Eigen::Index c = 0; c < na; ++c) {
            jac(r, c) = dp_dang(vars.angle_buses[r], vars.angle_buses[c]);
        }
        for (Eigen::Index c = 0; c < nv; ++c) {
            jac(r, na + c) = dp_dv(vars.angle_buses[r], vars.vmag_buses[c]);
        }
    }
    for (Eigen::Index r = 0; r < nv; ++r) {
        for (Eigen::Index c = 0; c < na; ++c) {
            jac(na + r, c) = dq_dang(vars.vmag_buses[r], vars.angle_buses[c]);
        }
        for (Eigen::Index c = 0; c < nv; ++c) {
            jac(na + r, na + c) = dq_dv(vars.vmag_buses[r], vars.vmag_buses[c]);
        }
    }
    return jac;
}

PowerFlowSolution solve(const NetworkModel& net, const Eigen::VectorXcd& injections,
                        const PowerFlowOptions& options, const std::optional<WarmStart>& warm) {
    const int n = net.bus_count();
    if (injections.size() != n) {
        throw DimensionMismatch("injections size " + std::to_string(injections.size()) +
                                " does not match bus count " + std::to_string(n));
    }

    Eigen::VectorXd v_mag(n), v_ang(n);
    if (warm) {
        if (warm->v_mag.size() != n || warm->v_ang.size() != n) {
            throw DimensionMismatch("warm start size does not match bus count");
        }
        v_mag = warm->v_mag;
        v_ang = warm->v_ang;
    } else {
        for (int i = 0; i < n; ++i) {
            v_mag(i) = net.buses[i].kind == BusKind::PQ ? 1.0 : net.buses[i].v_setpoint;
            v_ang(i) = 0.0;
        }
    }
    // Held quantities are pinned regardless of the start point.
    for (int i = 0; i < n; ++i) {
        if (net.buses[i].kind == BusKind::Slack) {
            v_mag(i) = net.buses[i].v_setpoint;
            v_ang(i) = 0.0;
        } else if (net.buses[i].kind == BusKind::PV) {
            v_mag(i) = net.buses[i].v_setpoint;
        }
    }

    const auto vars = newton_variables(net);
    const auto na = static_cast<Eigen::Index>(vars.angle_buses.size());

    int iterations = 0;
    double max_mismatch = 0.0;
    while (true) {
        const Eigen::VectorXd f = mismatch_vector(net, injections, v_mag, v_ang);
        max_mismatch = f.size() > 0 ? f.cwiseAbs().maxCoeff() : 0.0;
        if (max_mismatch <= options.tol) break;
        if (iterations >= options.max_iter) throw NoConvergence(iterations, max_mismatch);

        const Eigen::MatrixXd jac = jacobian(net, v_mag, v_ang);
        Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
        if (!lu.isInvertible()) {
            throw SingularJacobian("Newton Jacobian is singular at iteration " +
                                   std::to_string(iterations));
        }
        const Eigen::VectorXd dx = lu.solve(f);
        if (!dx.allFinite()) {
            throw SingularJacobian("Newton step is not finite at iteration " +
                                   std::to_string(iterations));
        }
        for (Eigen::Index k = 0; k < na; ++k) v_ang(vars.angle_buses[k]) += dx(k);
        for (std::size_t k = 0; k < vars.vmag_buses.size(); ++k) {
            v_mag(vars.vmag_buses[k]) += dx(na + static_cast<Eigen::Index>(k));
        }
        ++iterations;
    }

    PowerFlowSolution sol;
    sol.v_mag = v_mag;
    sol.v_ang = v_ang;
    const auto y = build_ybus(net, Sequence::Positive);
    const auto calc = computed_injections(y, v_mag, v_ang);
    sol.p_inj = calc.p;
    sol.q_inj = calc.q;
    sol.iterations = iterations;
    sol.max_mismatch = max_mismatch;
    return sol;
}

Eigen::VectorXcd residual(const NetworkModel& net, const Eigen::VectorXcd& injections,
                          const Eigen::VectorXd& v_mag, const Eigen::VectorXd& v_ang) {
    const int n = net.bus_count();
    if (injections.size() != n || v_mag.size() != n || v_ang.size() != n) {
        throw DimensionMismatch("residual inputs must all have bus-count length");
    }
    const auto y = build_ybus(net, Sequence::Positive);
    const auto calc = computed_injections(y, v_mag, v_ang);
    Eigen::VectorXcd r(n);
    for (int i = 0; i < n; ++i) {
        r(i) = injections(i) - Complex(calc.p(i), calc.q(i));
    }
    return r;
}

}  // namespace gridfault
