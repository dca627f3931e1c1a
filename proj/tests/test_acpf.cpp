#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "gridcascade/acpf.hpp"
#include "gridcascade/case_model.hpp"
#include "gridcascade/rng.hpp"

using namespace gridcascade;

namespace {

const std::string kDataDir = GRIDCASCADE_DATA_DIR;

std::vector<std::uint8_t> all_on(size_t n) { return std::vector<std::uint8_t>(n, 1); }

Network two_bus_case(double load_mw = 100.0, double load_mvar = 0.0) {
    Network net;
    net.buses.push_back({1, BusKind::Slack, 0, 0, 0, 0, 1.0, 0, 0});
    net.buses.push_back({2, BusKind::PQ, load_mw, load_mvar, 0, 0, 1.0, 0, 0});
    net.branches.push_back({1, 2, 0.0, 0.1, 0.0, 1.0, 0.0, true});
    Generator g;
    g.bus = 1;
    g.p_base = load_mw;
    g.p_max = 300;
    g.q_max = 300;
    g.q_min = -300;
    net.generators.push_back(g);
    return net;
}

// independent O(n^2) construction used as the Y-bus oracle
std::vector<std::complex<double>> dense_ybus_oracle(const Network& net,
                                                    std::span<const std::uint8_t> mask) {
    const int n = static_cast<int>(net.buses.size());
    std::vector<std::complex<double>> y(static_cast<size_t>(n) * n, {0, 0});
    for (size_t k = 0; k < net.branches.size(); ++k) {
        if (!mask[k]) continue;
        const Branch& br = net.branches[k];
        const int f = net.bus_index(br.from_bus);
        const int t = net.bus_index(br.to_bus);
        const std::complex<double> ys = 1.0 / std::complex<double>(br.r, br.x);
        const std::complex<double> bc(0, br.b_charging / 2.0);
        const double tap = br.tap_ratio == 0 ? 1.0 : br.tap_ratio;
        const std::complex<double> shift = std::polar(1.0, br.phase_shift * M_PI / 180.0);
        y[f * n + f] += (ys + bc) / (tap * tap);
        y[f * n + t] -= ys / (tap * std::conj(shift));
        y[t * n + f] -= ys / (tap * shift);
        y[t * n + t] += ys + bc;
    }
    for (int i = 0; i < n; ++i) {
        y[i * n + i] +=
            std::complex<double>(net.buses[i].g_shunt, net.buses[i].b_shunt) / net.base_mva;
    }
    return y;
}

std::vector<std::complex<double>> densify(const YBus& y) {
    std::vector<std::complex<double>> full(static_cast<size_t>(y.n) * y.n, {0, 0});
    for (int i = 0; i < y.n; ++i) full[i * y.n + i] = y.diag[i];
    for (const YBus::Entry& e : y.off) full[e.row * y.n + e.col] += e.y;
    return full;
}

PfProblem whole_case_problem(const Network& net) {
    const auto mask = all_on(net.branches.size());
    const YBus ybus = build_admittance(net, mask);
    std::vector<int> island(net.buses.size());
    for (size_t i = 0; i < island.size(); ++i) island[i] = static_cast<int>(i);
    std::vector<double> dispatch(net.generators.size());
    for (size_t g = 0; g < net.generators.size(); ++g) dispatch[g] = net.generators[g].p_base;
    return build_problem(net, ybus, island, all_on(net.generators.size()), dispatch);
}

// recomputed complex power injections at the returned voltages
std::vector<std::complex<double>> injections_oracle(const PfProblem& prob,
                                                    std::span<const double> vm,
                                                    std::span<const double> va) {
    const int n = static_cast<int>(prob.bus_idx.size());
    std::vector<std::complex<double>> s(n);
    for (int i = 0; i < n; ++i) {
        std::complex<double> acc(0, 0);
        for (int j = 0; j < n; ++j) {
            acc += prob.y[static_cast<size_t>(i) * n + j] * std::polar(vm[j], va[j]);
        }
        s[i] = std::polar(vm[i], va[i]) * std::conj(acc);
    }
    return s;
}

}  // namespace

TEST_CASE("two-bus admittance matches the analytic pattern") {
    const Network net = two_bus_case();
    const YBus y = build_admittance(net, all_on(1));
    // series y = 1/(j0.1) = -10j on both diagonals, +10j off-diagonal
    CHECK(y.diag[0].real() == doctest::Approx(0.0));
    CHECK(y.diag[0].imag() == doctest::Approx(-10.0));
    CHECK(y.diag[1].imag() == doctest::Approx(-10.0));
    REQUIRE(y.off.size() == 2);
    CHECK(y.off[0].y.imag() == doctest::Approx(10.0));
    CHECK(std::abs(y.off[0].y) == doctest::Approx(10.0));
}

TEST_CASE("all branches out leaves only bus shunts on the diagonal") {
    Network net = load_case_file(kDataDir + "/case14.txt");
    const std::vector<std::uint8_t> mask(net.branches.size(), 0);
    const YBus y = build_admittance(net, mask);
    CHECK(y.off.empty());
    for (int i = 0; i < y.n; ++i) {
        const std::complex<double> expect(net.buses[i].g_shunt / net.base_mva,
                                          net.buses[i].b_shunt / net.base_mva);
        CHECK(std::abs(y.diag[i] - expect) == doctest::Approx(0.0));
    }
}

TEST_CASE("zero-impedance in-service branch is rejected") {
    Network net = two_bus_case();
    net.branches[0].r = 0.0;
    net.branches[0].x = 0.0;
    CHECK_THROWS_AS(build_admittance(net, all_on(1)), std::invalid_argument);
}

TEST_CASE("14-bus admittance equals the dense oracle within 1e-12") {
    const Network net = load_case_file(kDataDir + "/case14.txt");
    const auto mask = all_on(net.branches.size());
    const auto oracle = dense_ybus_oracle(net, mask);
    const auto got = densify(build_admittance(net, mask));
    REQUIRE(got.size() == oracle.size());
    for (size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - oracle[i]) < 1e-12);
}

TEST_CASE("two-bus island matches the closed-form polar solution") {
    const Network net = two_bus_case(100.0, 0.0);
    const PfProblem prob = whole_case_problem(net);
    const PfSolution sol = solve_island(prob, PfOptions{});
    REQUIRE(sol.converged);
    // with r=0 and no reactive load: V2 = cos(theta), sin(2 theta) = -2 x P
    const double theta = -0.5 * std::asin(2.0 * 0.1 * 1.0);
    CHECK(sol.v_ang[1] == doctest::Approx(theta).epsilon(1e-9));
    CHECK(sol.v_mag[1] == doctest::Approx(std::cos(theta)).epsilon(1e-9));
    // the receiving-end angle solves theta = -asin(P x / (V1 V2))
    CHECK(sol.v_ang[1] == doctest::Approx(-std::asin(1.0 * 0.1 / sol.v_mag[1])).epsilon(1e-7));
}

TEST_CASE("14-bus base case from flat start") {
    const Network net = load_case_file(kDataDir + "/case14.txt");
    const PfProblem prob = whole_case_problem(net);
    PfOptions opts;
    const PfSolution sol = solve_island(prob, opts);
    REQUIRE(sol.converged);
    CHECK(sol.iterations <= 10);
    CHECK(sol.slack_p_mw > 230.0);
    CHECK(sol.slack_p_mw < 235.0);

    // mismatch invariant, recomputed independently of the solver loop
    const auto s = injections_oracle(prob, sol.v_mag, sol.v_ang);
    for (size_t i = 0; i < prob.bus_idx.size(); ++i) {
        if (static_cast<int>(i) == prob.slack_local) continue;
        const double dp = (prob.p_set_mw[i] - prob.p_load_mw[i]) / prob.base_mva - s[i].real();
        CHECK(std::fabs(dp) <= opts.tol_mismatch * 1.000001);
        if (!prob.is_pv[i]) {
            const double dq = -prob.q_load_mvar[i] / prob.base_mva - s[i].imag();
            CHECK(std::fabs(dq) <= opts.tol_mismatch * 1.000001);
        }
    }

    // power balance: generation - load equals the network losses
    double p_gen = 0, p_load = 0, injection_sum = 0;
    for (size_t i = 0; i < prob.bus_idx.size(); ++i) {
        p_gen += sol.p_inj_mw[i] + prob.p_load_mw[i];
        p_load += prob.p_load_mw[i];
        injection_sum += sol.p_inj_mw[i];
    }
    CHECK(std::fabs(p_gen - p_load - injection_sum) <= 10 * opts.tol_mismatch * net.base_mva);
    CHECK(injection_sum > 0.0);  // losses are physical
}

TEST_CASE("zero-load island converges immediately with zero flows") {
    Network net = two_bus_case(0.0, 0.0);
    net.generators[0].p_base = 0.0;
    const PfProblem prob = whole_case_problem(net);
    const PfSolution sol = solve_island(prob, PfOptions{});
    REQUIRE(sol.converged);
    CHECK(sol.iterations <= 2);
    const auto flows = branch_flows(net, all_on(1), sol.v_mag, sol.v_ang);
    CHECK(flows[0].from_mva == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(flows[0].to_mva == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("single-bus island is trivially solved") {
    Network net;
    net.buses.push_back({1, BusKind::Slack, 10, 2, 0, 0, 1.0, 0, 0});
    Generator g;
    g.bus = 1;
    g.p_max = 50;
    net.generators.push_back(g);
    const YBus y = build_admittance(net, {});
    const std::vector<int> island{0};
    const std::vector<std::uint8_t> gen_mask{1};
    const std::vector<double> dispatch{0.0};
    const PfProblem prob = build_problem(net, y, island, gen_mask, dispatch);
    const PfSolution sol = solve_island(prob, PfOptions{});
    REQUIRE(sol.converged);
    CHECK(sol.iterations == 0);
    CHECK(sol.slack_p_mw == doctest::Approx(10.0));
}

TEST_CASE("solver flags infeasible loading instead of throwing") {
    // far beyond the ~ V^2/x maximum transferable power
    const Network net = two_bus_case(2000.0, 0.0);
    const PfProblem prob = whole_case_problem(net);
    const PfSolution sol = solve_island(prob, PfOptions{});
    CHECK_FALSE(sol.converged);
    CHECK(sol.failure != PfFailure::None);
}

TEST_CASE("island without generators is rejected at build time") {
    Network net = two_bus_case();
    const YBus y = build_admittance(net, all_on(1));
    const std::vector<int> island{0, 1};
    const std::vector<std::uint8_t> gen_mask{0};  // generator out of service
    const std::vector<double> dispatch{0.0};
    CHECK_THROWS_AS(build_problem(net, y, island, gen_mask, dispatch), std::invalid_argument);
}

TEST_CASE("per-island slack falls back to the largest machine") {
    // island without the case slack: bus 2 and 3 with two generators
    Network net;
    net.buses.push_back({1, BusKind::Slack, 0, 0, 0, 0, 1.0, 0, 0});
    net.buses.push_back({2, BusKind::PV, 30, 5, 0, 0, 1.0, 0, 0});
    net.buses.push_back({3, BusKind::PV, 20, 5, 0, 0, 1.0, 0, 0});
    net.branches.push_back({1, 2, 0.01, 0.05, 0, 1.0, 0, true});
    net.branches.push_back({2, 3, 0.01, 0.05, 0, 1.0, 0, true});
    Generator g1;
    g1.bus = 1;
    g1.p_max = 100;
    g1.q_max = 50;
    g1.q_min = -50;
    net.generators.push_back(g1);
    Generator g2 = g1;
    g2.bus = 2;
    g2.p_max = 80;
    net.generators.push_back(g2);
    Generator g3 = g1;
    g3.bus = 3;
    g3.p_max = 90;  // larger than bus 2's machine
    net.generators.push_back(g3);

    std::vector<std::uint8_t> mask{0, 1};  // cut line 1-2: island {2,3}
    const YBus y = build_admittance(net, mask);
    const std::vector<int> island{1, 2};
    const std::vector<std::uint8_t> gen_mask{1, 1, 1};
    const std::vector<double> dispatch{0, 20, 30};
    const PfProblem prob = build_problem(net, y, island, gen_mask, dispatch);
    CHECK(prob.slack_bus == 2);  // bus id 3 has the larger p_max
    CHECK(prob.slack_p_max_mw == doctest::Approx(90));
    const PfSolution sol = solve_island(prob, PfOptions{});
    REQUIRE(sol.converged);
    // the slack covers load + losses - dispatched 20 at bus 2
    CHECK(sol.slack_p_mw == doctest::Approx(30.0).epsilon(0.05));
}

TEST_CASE("line loading arithmetic and the tripped-branch convention") {
    std::vector<BranchFlow> flows{{100.0, 98.0}, {50.0, 40.0}};
    std::vector<std::uint8_t> mask{1, 0};
    const auto loading = line_loading(flows, mask, 200.0);
    CHECK(loading[0] == doctest::Approx(0.5));
    CHECK(loading[1] == 0.0);  // out of service
    CHECK_THROWS_AS(line_loading(flows, mask, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(line_loading(flows, mask, -5.0), std::invalid_argument);
}

TEST_CASE("14-bus loadings equal a direct complex-power recomputation") {
    const Network net = load_case_file(kDataDir + "/case14.txt");
    const PfProblem prob = whole_case_problem(net);
    const PfSolution sol = solve_island(prob, PfOptions{});
    REQUIRE(sol.converged);
    std::vector<double> vm(net.buses.size()), va(net.buses.size());
    for (size_t i = 0; i < prob.bus_idx.size(); ++i) {
        vm[prob.bus_idx[i]] = sol.v_mag[i];
        va[prob.bus_idx[i]] = sol.v_ang[i];
    }
    const auto mask = all_on(net.branches.size());
    const auto flows = branch_flows(net, mask, vm, va);
    const auto loading = line_loading(flows, mask, 200.0);
    for (size_t k = 0; k < net.branches.size(); ++k) {
        const Branch& br = net.branches[k];
        const int f = net.bus_index(br.from_bus);
        const int t = net.bus_index(br.to_bus);
        const std::complex<double> ys = 1.0 / std::complex<double>(br.r, br.x);
        const std::complex<double> bc(0, br.b_charging / 2.0);
        const double tap = br.tap_ratio;
        const std::complex<double> vf = std::polar(vm[f], va[f]);
        const std::complex<double> vt = std::polar(vm[t], va[t]);
        const std::complex<double> sf =
            vf * std::conj((ys + bc) / (tap * tap) * vf - ys / tap * vt);
        const std::complex<double> st = vt * std::conj(-ys / tap * vf + (ys + bc) * vt);
        const double expect = std::max(std::abs(sf), std::abs(st)) * net.base_mva / 200.0;
        CHECK(loading[k] == doctest::Approx(expect).epsilon(1e-9));
        CHECK(loading[k] > 0.0);
        CHECK(loading[k] < 1.0);
    }
}

TEST_CASE("generation cost examples and the scalar-summation oracle") {
    Network net;
    net.buses.push_back({1, BusKind::Slack, 0, 0, 0, 0, 1.0, 0, 0});
    Generator g;
    g.bus = 1;
    g.p_max = 200;
    g.cost_coeffs = {0.0, 20.0, 0.01};
    net.generators.push_back(g);

    std::vector<double> dispatch{100.0};
    std::vector<std::uint8_t> avail{1};
    CHECK(generation_cost(net, dispatch, avail) == doctest::Approx(2100.0));
    avail[0] = 0;  // every island down -> no cost
    CHECK(generation_cost(net, dispatch, avail) == 0.0);

    const Network net14 = load_case_file(kDataDir + "/case14.txt");
    std::vector<double> d14(net14.generators.size());
    for (size_t i = 0; i < d14.size(); ++i) d14[i] = net14.generators[i].p_base;
    const auto all = all_on(d14.size());
    double oracle = 0.0;
    for (size_t i = 0; i < d14.size(); ++i) {
        double pk = 1.0, c = 0.0;
        for (double coeff : net14.generators[i].cost_coeffs) {
            c += coeff * pk;
            pk *= d14[i];
        }
        oracle += c;
    }
    CHECK(generation_cost(net14, d14, all) == doctest::Approx(oracle).epsilon(1e-9));
}

TEST_CASE("analytic jacobian matches central finite differences") {
    Rng rng(123);
    for (int trial = 0; trial < 5; ++trial) {
        // random ring network with one PV bus
        Network net;
        const int nb = 4 + trial;
        net.buses.push_back({1, BusKind::Slack, 0, 0, 0, 0, 1.02, 0, 0});
        for (int i = 2; i <= nb; ++i) {
            net.buses.push_back({i, i == 2 ? BusKind::PV : BusKind::PQ, rng.uniform(10, 60),
                                 rng.uniform(0, 20), 0, 0, 1.0, 0, 0});
        }
        for (int i = 1; i < nb; ++i) {
            net.branches.push_back({i, i + 1, 0.01 + 0.02 * rng.uniform(),
                                    0.05 + 0.1 * rng.uniform(), 0.02, 1.0, 0.0, true});
        }
        net.branches.push_back({1, nb, 0.02, 0.08, 0.01, 1.0, 0.0, true});
        Generator g1;
        g1.bus = 1;
        g1.p_max = 300;
        g1.q_max = 300;
        g1.q_min = -300;
        net.generators.push_back(g1);
        Generator g2 = g1;
        g2.bus = 2;
        g2.p_base = 40;
        net.generators.push_back(g2);

        const PfProblem prob = whole_case_problem(net);
        const int n = static_cast<int>(prob.bus_idx.size());
        std::vector<int> p_nodes, q_nodes;
        for (int i = 0; i < n; ++i) {
            if (i != prob.slack_local) p_nodes.push_back(i);
            if (i != prob.slack_local && !prob.is_pv[i]) q_nodes.push_back(i);
        }
        std::vector<double> p_sched(n), q_sched(n);
        for (int i = 0; i < n; ++i) {
            p_sched[i] = (prob.p_set_mw[i] - prob.p_load_mw[i]) / prob.base_mva;
            q_sched[i] = -prob.q_load_mvar[i] / prob.base_mva;
        }
        // random voltage point near nominal
        std::vector<double> vm(n), va(n);
        for (int i = 0; i < n; ++i) {
            vm[i] = 1.0 + rng.uniform(-0.05, 0.05);
            va[i] = rng.uniform(-0.2, 0.2);
        }

        const dense::Matrix jac = pf_jacobian(prob, vm, va, p_nodes, q_nodes);
        const double h = 1e-6;
        double max_rel = 0.0;
        const int unknowns = static_cast<int>(p_nodes.size() + q_nodes.size());
        for (int c = 0; c < unknowns; ++c) {
            auto vm_p = vm, vm_m = vm, va_p = va, va_m = va;
            if (c < static_cast<int>(p_nodes.size())) {
                va_p[p_nodes[c]] += h;
                va_m[p_nodes[c]] -= h;
            } else {
                vm_p[q_nodes[c - p_nodes.size()]] += h;
                vm_m[q_nodes[c - p_nodes.size()]] -= h;
            }
            const auto fp = pf_mismatch(prob, vm_p, va_p, p_sched, q_sched, p_nodes, q_nodes);
            const auto fm = pf_mismatch(prob, vm_m, va_m, p_sched, q_sched, p_nodes, q_nodes);
            for (int r = 0; r < unknowns; ++r) {
                const double fd = (fp[r] - fm[r]) / (2 * h);
                const double scale = std::max({std::fabs(fd), std::fabs(jac[r][c]), 1e-6});
                max_rel = std::max(max_rel, std::fabs(fd - jac[r][c]) / scale);
            }
        }
        CHECK(max_rel < 1e-5);
    }
}

TEST_CASE("q-limit switching clamps a violated PV bus") {
    // PV bus with a tight reactive ceiling has to switch to PQ and settle
    // below its voltage setpoint
    Network net;
    net.buses.push_back({1, BusKind::Slack, 0, 0, 0, 0, 1.0, 0, 0});
    net.buses.push_back({2, BusKind::PV, 50, 40, 0, 0, 1.05, 0, 0});
    net.branches.push_back({1, 2, 0.01, 0.05, 0, 1.0, 0, true});
    Generator g1;
    g1.bus = 1;
    g1.p_max = 200;
    g1.q_max = 200;
    g1.q_min = -200;
    net.generators.push_back(g1);
    Generator g2 = g1;
    g2.bus = 2;
    g2.p_base = 20;
    g2.q_max = 5.0;  // far below what holding 1.05 p.u. needs
    g2.q_min = -5.0;
    net.generators.push_back(g2);

    const PfProblem prob = whole_case_problem(net);
    PfOptions opts;
    const PfSolution with_limits = solve_island(prob, opts);
    REQUIRE(with_limits.converged);
    CHECK(with_limits.v_mag[1] < 1.05);
    // generator reactive output sits at the clamp
    const double qg = with_limits.q_inj_mvar[1] + net.buses[1].q_load;
    CHECK(qg == doctest::Approx(5.0).epsilon(1e-6));

    opts.enforce_q_limits = false;
    const PfSolution unlimited = solve_island(prob, opts);
    REQUIRE(unlimited.converged);
    CHECK(unlimited.v_mag[1] == doctest::Approx(1.05));
}

TEST_CASE("determinism: identical problem and options give bit-identical solutions") {
    const Network net = load_case_file(kDataDir + "/case14.txt");
    const PfProblem prob = whole_case_problem(net);
    const PfSolution a = solve_island(prob, PfOptions{});
    const PfSolution b = solve_island(prob, PfOptions{});
    REQUIRE(a.converged);
    REQUIRE(b.converged);
    CHECK(a.iterations == b.iterations);
    for (size_t i = 0; i < a.v_mag.size(); ++i) {
        CHECK(a.v_mag[i] == b.v_mag[i]);
        CHECK(a.v_ang[i] == b.v_ang[i]);
    }
    CHECK(a.slack_p_mw == b.slack_p_mw);
}

TEST_CASE("whole-case solve merges islands and reports the slack") {
    const Network net = load_case_file(kDataDir + "/case14.txt");
    const CaseSolution sol = solve_case(net, PfOptions{});
    CHECK(sol.all_converged);
    CHECK(sol.islands == 1);
    CHECK(sol.slack_p_mw == doctest::Approx(232.393).epsilon(1e-3));
    for (double v : sol.v_mag) CHECK(v > 0.9);
}
