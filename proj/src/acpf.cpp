#include "gridcascade/acpf.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gridcascade/dense.hpp"

namespace gridcascade {

namespace {
constexpr double kDegToRad = M_PI / 180.0;

// Two-port admittance of one branch (from/to self and transfer terms).
struct BranchY {
    std::complex<double> ff, ft, tf, tt;
};

BranchY branch_admittance(const Branch& br) {
    const std::complex<double> ys = 1.0 / std::complex<double>(br.r, br.x);
    const std::complex<double> bc(0.0, br.b_charging / 2.0);
    const double tap = br.tap_ratio == 0.0 ? 1.0 : br.tap_ratio;
    const std::complex<double> shift = std::polar(1.0, br.phase_shift * kDegToRad);
    const std::complex<double> t = tap * shift;
    BranchY y;
    y.ff = (ys + bc) / (tap * tap);
    y.ft = -ys / std::conj(t);
    y.tf = -ys / t;
    y.tt = ys + bc;
    return y;
}

}  // namespace

YBus build_admittance(const Network& net, std::span<const std::uint8_t> branch_in_service) {
    if (branch_in_service.size() != net.branches.size()) {
        throw std::invalid_argument("build_admittance: mask size mismatch");
    }
    const int n = static_cast<int>(net.buses.size());
    YBus y;
    y.n = n;
    y.diag.assign(n, {0.0, 0.0});
    std::vector<YBus::Entry> entries;
    entries.reserve(2 * net.branches.size());
    for (size_t k = 0; k < net.branches.size(); ++k) {
        if (!branch_in_service[k]) continue;
        const Branch& br = net.branches[k];
        if (br.r == 0.0 && br.x == 0.0) {
            throw std::invalid_argument("build_admittance: zero-impedance in-service branch " +
                                        std::to_string(br.from_bus) + "-" +
                                        std::to_string(br.to_bus));
        }
        const int f = net.bus_index(br.from_bus);
        const int t = net.bus_index(br.to_bus);
        const BranchY by = branch_admittance(br);
        y.diag[f] += by.ff;
        y.diag[t] += by.tt;
        entries.push_back({f, t, by.ft});
        entries.push_back({t, f, by.tf});
    }
    for (int i = 0; i < n; ++i) {
        y.diag[i] += std::complex<double>(net.buses[i].g_shunt, net.buses[i].b_shunt) /
                     net.base_mva;
    }
    std::sort(entries.begin(), entries.end(), [](const YBus::Entry& a, const YBus::Entry& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    for (const YBus::Entry& e : entries) {
        if (!y.off.empty() && y.off.back().row == e.row && y.off.back().col == e.col) {
            y.off.back().y += e.y;  // parallel branches merge
        } else {
            y.off.push_back(e);
        }
    }
    return y;
}

PfProblem build_problem(const Network& net, const YBus& ybus, std::span<const int> island_buses,
                        std::span<const std::uint8_t> gen_in_service,
                        std::span<const double> dispatch_mw) {
    PfProblem p;
    p.base_mva = net.base_mva;
    p.bus_idx.assign(island_buses.begin(), island_buses.end());
    const int k = static_cast<int>(p.bus_idx.size());
    std::vector<int> local_of(net.buses.size(), -1);
    for (int i = 0; i < k; ++i) local_of[p.bus_idx[i]] = i;

    for (size_t g = 0; g < net.generators.size(); ++g) {
        if (!gen_in_service[g]) continue;
        const int bi = net.bus_index(net.generators[g].bus);
        if (bi >= 0 && local_of[bi] >= 0) p.gen_idx.push_back(static_cast<int>(g));
    }
    if (p.gen_idx.empty()) {
        throw std::invalid_argument("build_problem: island has no in-service generator");
    }

    // slack choice: the case slack bus when present, else the largest machine
    int slack_bus = -1;
    const int case_slack = net.slack_bus_index();
    if (case_slack >= 0 && local_of[case_slack] >= 0) {
        for (int g : p.gen_idx) {
            if (net.bus_index(net.generators[g].bus) == case_slack) {
                slack_bus = case_slack;
                break;
            }
        }
    }
    if (slack_bus < 0) {
        const int best = *std::min_element(
            p.gen_idx.begin(), p.gen_idx.end(), [&](int a, int b) {
                const Generator& ga = net.generators[a];
                const Generator& gb = net.generators[b];
                if (ga.p_max != gb.p_max) return ga.p_max > gb.p_max;
                return ga.bus < gb.bus;
            });
        slack_bus = net.bus_index(net.generators[best].bus);
    }
    p.slack_bus = slack_bus;
    p.slack_local = local_of[slack_bus];

    // dense local admittance sliced out of the sparse network matrix
    p.y.assign(static_cast<size_t>(k) * k, {0.0, 0.0});
    for (int i = 0; i < k; ++i) {
        p.y[static_cast<size_t>(i) * k + i] = ybus.diag[p.bus_idx[i]];
    }
    for (const YBus::Entry& e : ybus.off) {
        const int li = local_of[e.row];
        const int lj = local_of[e.col];
        if (li >= 0 && lj >= 0) p.y[static_cast<size_t>(li) * k + lj] += e.y;
    }

    p.p_set_mw.assign(k, 0.0);
    p.p_load_mw.resize(k);
    p.q_load_mvar.resize(k);
    p.is_pv.assign(k, 0);
    p.q_min_mvar.assign(k, 0.0);
    p.q_max_mvar.assign(k, 0.0);
    p.v_set.assign(k, 1.0);
    p.v_start.resize(k);
    for (int i = 0; i < k; ++i) {
        const Bus& b = net.buses[p.bus_idx[i]];
        p.p_load_mw[i] = b.p_load;
        p.q_load_mvar[i] = b.q_load;
        p.v_set[i] = b.v_mag_init;
        p.v_start[i] = b.v_mag_init;
    }
    for (int g : p.gen_idx) {
        const Generator& gen = net.generators[g];
        const int li = local_of[net.bus_index(gen.bus)];
        p.q_min_mvar[li] += gen.q_min;
        p.q_max_mvar[li] += gen.q_max;
        if (li == p.slack_local) {
            p.slack_p_max_mw += gen.p_max;
        } else {
            p.p_set_mw[li] += dispatch_mw[g];
            p.is_pv[li] = 1;
        }
    }
    return p;
}

namespace {

struct NodePower {
    double p, q;  // p.u. injections at the current voltages
};

void compute_injections(const PfProblem& prob, std::span<const double> vm,
                        std::span<const double> va, std::span<NodePower> out) {
    const int n = static_cast<int>(prob.bus_idx.size());
    for (int i = 0; i < n; ++i) {
        double pi = 0.0, qi = 0.0;
        const std::complex<double>* yrow = prob.y.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double g = yrow[j].real();
            const double b = yrow[j].imag();
            if (g == 0.0 && b == 0.0) continue;
            const double th = va[i] - va[j];
            const double ct = std::cos(th);
            const double st = std::sin(th);
            pi += vm[j] * (g * ct + b * st);
            qi += vm[j] * (g * st - b * ct);
        }
        out[i] = {vm[i] * pi, vm[i] * qi};
    }
}

}  // namespace

std::vector<double> pf_mismatch(const PfProblem& prob, std::span<const double> v_mag,
                                std::span<const double> v_ang,
                                std::span<const double> p_sched_pu,
                                std::span<const double> q_sched_pu,
                                std::span<const int> p_nodes, std::span<const int> q_nodes) {
    const int n = static_cast<int>(prob.bus_idx.size());
    std::vector<NodePower> inj(n);
    compute_injections(prob, v_mag, v_ang, inj);
    std::vector<double> rhs(p_nodes.size() + q_nodes.size());
    for (size_t r = 0; r < p_nodes.size(); ++r) {
        rhs[r] = p_sched_pu[p_nodes[r]] - inj[p_nodes[r]].p;
    }
    for (size_t r = 0; r < q_nodes.size(); ++r) {
        rhs[p_nodes.size() + r] = q_sched_pu[q_nodes[r]] - inj[q_nodes[r]].q;
    }
    return rhs;
}

dense::Matrix pf_jacobian(const PfProblem& prob, std::span<const double> v_mag,
                          std::span<const double> v_ang, std::span<const int> p_nodes,
                          std::span<const int> q_nodes) {
    const int n = static_cast<int>(prob.bus_idx.size());
    std::vector<NodePower> inj(n);
    compute_injections(prob, v_mag, v_ang, inj);
    const int unknowns = static_cast<int>(p_nodes.size() + q_nodes.size());
    dense::Matrix jac(unknowns, unknowns);
    std::vector<int> col_of_theta(n, -1), col_of_vm(n, -1);
    for (size_t c = 0; c < p_nodes.size(); ++c) col_of_theta[p_nodes[c]] = static_cast<int>(c);
    for (size_t c = 0; c < q_nodes.size(); ++c) {
        col_of_vm[q_nodes[c]] = static_cast<int>(p_nodes.size() + c);
    }
    for (int r = 0; r < unknowns; ++r) {
        const bool is_p_row = r < static_cast<int>(p_nodes.size());
        const int i = is_p_row ? p_nodes[r] : q_nodes[r - p_nodes.size()];
        const std::complex<double>* yrow = prob.y.data() + static_cast<size_t>(i) * n;
        double* jrow = jac[r];
        for (int j = 0; j < n; ++j) {
            const double g = yrow[j].real();
            const double b = yrow[j].imag();
            if (j != i && g == 0.0 && b == 0.0) continue;
            const double th = v_ang[i] - v_ang[j];
            const double ct = std::cos(th);
            const double st = std::sin(th);
            double dp_dth, dp_dvm, dq_dth, dq_dvm;
            if (j == i) {
                dp_dth = -inj[i].q - b * v_mag[i] * v_mag[i];
                dp_dvm = inj[i].p / v_mag[i] + g * v_mag[i];
                dq_dth = inj[i].p - g * v_mag[i] * v_mag[i];
                dq_dvm = inj[i].q / v_mag[i] - b * v_mag[i];
            } else {
                dp_dth = v_mag[i] * v_mag[j] * (g * st - b * ct);
                dp_dvm = v_mag[i] * (g * ct + b * st);
                dq_dth = -v_mag[i] * v_mag[j] * (g * ct + b * st);
                dq_dvm = v_mag[i] * (g * st - b * ct);
            }
            // the mismatch is schedule - injection, so derivatives flip sign
            if (col_of_theta[j] >= 0) jrow[col_of_theta[j]] = -(is_p_row ? dp_dth : dq_dth);
            if (col_of_vm[j] >= 0) jrow[col_of_vm[j]] = -(is_p_row ? dp_dvm : dq_dvm);
        }
    }
    return jac;
}

PfSolution solve_island(const PfProblem& prob, const PfOptions& opts) {
    const int n = static_cast<int>(prob.bus_idx.size());
    PfSolution sol;
    sol.v_mag.resize(n);
    sol.v_ang.assign(n, 0.0);

    std::vector<std::uint8_t> is_pv(prob.is_pv.begin(), prob.is_pv.end());
    std::vector<double> q_fixed_mvar(n, 0.0);  // clamped generator Q after switching
    std::vector<std::uint8_t> q_clamped(n, 0);

    std::vector<double>& vm = sol.v_mag;
    std::vector<double>& va = sol.v_ang;
    for (int i = 0; i < n; ++i) {
        const bool regulated = is_pv[i] || i == prob.slack_local;
        vm[i] = regulated ? prob.v_set[i] : (opts.flat_start ? 1.0 : prob.v_start[i]);
    }

    std::vector<NodePower> inj(n);
    std::vector<double> p_sched(n), q_sched(n);
    for (int i = 0; i < n; ++i) {
        p_sched[i] = (prob.p_set_mw[i] - prob.p_load_mw[i]) / prob.base_mva;
    }

    const int rounds = opts.enforce_q_limits ? opts.max_q_rounds : 1;
    bool converged = false;
    for (int round = 0; round < rounds; ++round) {
        std::vector<int> p_rows, q_rows;  // node lists for the mismatch vector
        for (int i = 0; i < n; ++i) {
            if (i != prob.slack_local) p_rows.push_back(i);
            if (i != prob.slack_local && !is_pv[i]) q_rows.push_back(i);
        }
        for (int i = 0; i < n; ++i) {
            q_sched[i] = (q_clamped[i] ? (q_fixed_mvar[i] - prob.q_load_mvar[i])
                                       : -prob.q_load_mvar[i]) /
                         prob.base_mva;
        }
        const int unknowns = static_cast<int>(p_rows.size() + q_rows.size());

        converged = false;
        for (int it = 0; it <= opts.max_iter; ++it) {
            std::vector<double> rhs = pf_mismatch(prob, vm, va, p_sched, q_sched, p_rows, q_rows);
            double max_mis = 0.0;
            for (double v : rhs) max_mis = std::max(max_mis, std::fabs(v));
            sol.max_mismatch = max_mis;
            if (max_mis <= opts.tol_mismatch) {
                converged = true;
                break;
            }
            if (it == opts.max_iter) break;  // out of iterations for this round

            dense::Matrix jac = pf_jacobian(prob, vm, va, p_rows, q_rows);
            for (double& v : rhs) v = -v;  // newton step solves J dx = -f
            if (unknowns > 0 && !dense::solve_linear(std::move(jac), rhs)) {
                sol.converged = false;
                sol.failure = PfFailure::SingularJacobian;
                compute_injections(prob, vm, va, inj);
                for (int i = 0; i < n; ++i) {
                    sol.p_inj_mw.push_back(inj[i].p * prob.base_mva);
                    sol.q_inj_mvar.push_back(inj[i].q * prob.base_mva);
                }
                return sol;
            }
            ++sol.iterations;
            bool finite = true;
            for (size_t r = 0; r < p_rows.size(); ++r) {
                va[p_rows[r]] += rhs[r];
                finite = finite && std::isfinite(va[p_rows[r]]);
            }
            for (size_t r = 0; r < q_rows.size(); ++r) {
                vm[q_rows[r]] += rhs[p_rows.size() + r];
                finite = finite && std::isfinite(vm[q_rows[r]]);
            }
            if (!finite) {
                sol.converged = false;
                sol.failure = PfFailure::NumericalBreakdown;
                return sol;
            }
        }
        if (!converged) {
            sol.converged = false;
            sol.failure = PfFailure::MaxIterations;
            return sol;
        }
        if (!opts.enforce_q_limits) break;

        // Reactive limit check: clamp violated PV nodes to the limit and
        // release the magnitude (one switching pass per round, warm continue).
        compute_injections(prob, vm, va, inj);
        bool switched = false;
        for (int i = 0; i < n; ++i) {
            if (!is_pv[i]) continue;
            const double q_gen = inj[i].q * prob.base_mva + prob.q_load_mvar[i];
            if (q_gen > prob.q_max_mvar[i] + 1e-9) {
                q_fixed_mvar[i] = prob.q_max_mvar[i];
                q_clamped[i] = 1;
                is_pv[i] = 0;
                switched = true;
            } else if (q_gen < prob.q_min_mvar[i] - 1e-9) {
                q_fixed_mvar[i] = prob.q_min_mvar[i];
                q_clamped[i] = 1;
                is_pv[i] = 0;
                switched = true;
            }
        }
        if (!switched) break;
    }

    sol.converged = converged;
    if (!converged) {
        sol.failure = PfFailure::MaxIterations;
        return sol;
    }
    compute_injections(prob, vm, va, inj);
    sol.p_inj_mw.resize(n);
    sol.q_inj_mvar.resize(n);
    for (int i = 0; i < n; ++i) {
        sol.p_inj_mw[i] = inj[i].p * prob.base_mva;
        sol.q_inj_mvar[i] = inj[i].q * prob.base_mva;
    }
    sol.slack_p_mw = sol.p_inj_mw[prob.slack_local] + prob.p_load_mw[prob.slack_local];
    return sol;
}

std::vector<BranchFlow> branch_flows(const Network& net,
                                     std::span<const std::uint8_t> branch_in_service,
                                     std::span<const double> v_mag,
                                     std::span<const double> v_ang) {
    std::vector<BranchFlow> flows(net.branches.size());
    for (size_t k = 0; k < net.branches.size(); ++k) {
        if (!branch_in_service[k]) continue;
        const Branch& br = net.branches[k];
        const int f = net.bus_index(br.from_bus);
        const int t = net.bus_index(br.to_bus);
        if (v_mag[f] == 0.0 || v_mag[t] == 0.0) continue;  // unsolved island
        const BranchY by = branch_admittance(br);
        const std::complex<double> vf = std::polar(v_mag[f], v_ang[f]);
        const std::complex<double> vt = std::polar(v_mag[t], v_ang[t]);
        const std::complex<double> sf = vf * std::conj(by.ff * vf + by.ft * vt);
        const std::complex<double> st = vt * std::conj(by.tf * vf + by.tt * vt);
        flows[k].from_mva = std::abs(sf) * net.base_mva;
        flows[k].to_mva = std::abs(st) * net.base_mva;
    }
    return flows;
}

std::vector<double> line_loading(std::span<const BranchFlow> flows,
                                 std::span<const std::uint8_t> branch_in_service,
                                 double line_limit) {
    if (!(line_limit > 0.0)) {
        throw std::invalid_argument("line_loading: line_limit must be positive");
    }
    std::vector<double> loading(flows.size(), 0.0);
    for (size_t k = 0; k < flows.size(); ++k) {
        if (!branch_in_service[k]) continue;
        loading[k] = std::max(flows[k].from_mva, flows[k].to_mva) / line_limit;
    }
    return loading;
}

double generation_cost(const Network& net, std::span<const double> dispatch_mw,
                       std::span<const std::uint8_t> gen_on_available_island) {
    double total = 0.0;
    for (size_t g = 0; g < net.generators.size(); ++g) {
        if (!gen_on_available_island[g]) continue;
        total += evaluate_cost(net.generators[g], dispatch_mw[g]);
    }
    return total;
}

CaseSolution solve_case(const Network& net, const PfOptions& opts) {
    const size_t nb = net.buses.size();
    std::vector<std::uint8_t> branch_mask(net.branches.size());
    for (size_t k = 0; k < net.branches.size(); ++k) branch_mask[k] = net.branches[k].in_service;
    std::vector<std::uint8_t> gen_mask(net.generators.size());
    std::vector<double> dispatch(net.generators.size());
    for (size_t g = 0; g < net.generators.size(); ++g) {
        gen_mask[g] = net.generators[g].in_service;
        dispatch[g] = net.generators[g].p_base;
    }

    CaseSolution out;
    out.v_mag.assign(nb, 0.0);
    out.v_ang.assign(nb, 0.0);
    out.p_inj_mw.assign(nb, 0.0);
    out.q_inj_mvar.assign(nb, 0.0);
    out.all_converged = true;

    const YBus ybus = build_admittance(net, branch_mask);
    const IslandPartition part = detect_islands(net, branch_mask);
    out.islands = static_cast<int>(part.islands.size());
    const int case_slack = net.slack_bus_index();
    for (const std::vector<int>& island : part.islands) {
        bool has_gen = false;
        for (int g = 0; g < static_cast<int>(net.generators.size()); ++g) {
            if (gen_mask[g] &&
                part.island_of_bus[net.bus_index(net.generators[g].bus)] ==
                    part.island_of_bus[island[0]]) {
                has_gen = true;
                break;
            }
        }
        if (!has_gen) {
            out.all_converged = false;
            continue;
        }
        const PfProblem prob = build_problem(net, ybus, island, gen_mask, dispatch);
        const PfSolution sol = solve_island(prob, opts);
        out.total_iterations += sol.iterations;
        if (!sol.converged) {
            out.all_converged = false;
            continue;
        }
        for (size_t i = 0; i < prob.bus_idx.size(); ++i) {
            const int bi = prob.bus_idx[i];
            out.v_mag[bi] = sol.v_mag[i];
            out.v_ang[bi] = sol.v_ang[i];
            out.p_inj_mw[bi] = sol.p_inj_mw[i];
            out.q_inj_mvar[bi] = sol.q_inj_mvar[i];
        }
        if (case_slack >= 0 && part.island_of_bus[case_slack] == part.island_of_bus[island[0]]) {
            out.slack_p_mw = sol.slack_p_mw;
        }
    }
    out.flows = branch_flows(net, branch_mask, out.v_mag, out.v_ang);
    return out;
}

}  // namespace gridcascade
