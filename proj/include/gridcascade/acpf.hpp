#pragma once
// Newton-Raphson AC power flow on one island at a time, plus branch flow and
// generation cost evaluation.

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gridcascade/case_model.hpp"
#include "gridcascade/dense.hpp"
#include "gridcascade/topology.hpp"

namespace gridcascade {

// Sparse bus admittance matrix in p.u. Off-diagonal entries are sorted by
// (row, col) with duplicates merged, so construction is deterministic.
struct YBus {
    int n = 0;
    std::vector<std::complex<double>> diag;
    struct Entry {
        int row;
        int col;
        std::complex<double> y;
    };
    std::vector<Entry> off;
};

// Includes line series/charging elements, taps, phase shifts and bus shunts;
// out-of-service branches contribute nothing. Throws on an in-service branch
// with r == x == 0.
YBus build_admittance(const Network& net, std::span<const std::uint8_t> branch_in_service);

struct PfOptions {
    double tol_mismatch = 1e-8;  // p.u., max |mismatch|
    int max_iter = 20;           // Newton iterations per inner solve
    bool enforce_q_limits = true;
    bool flat_start = true;      // otherwise start from the case voltages
    int max_q_rounds = 10;       // PV->PQ switching passes
};

// One island, local node numbering; node k corresponds to network bus index
// bus_idx[k]. Exactly one slack node.
struct PfProblem {
    std::vector<int> bus_idx;
    int slack_local = 0;
    int slack_bus = 0;          // network bus index of the slack node
    double slack_p_max_mw = 0;  // p_max sum of the slack node's generators
    double base_mva = 100.0;
    std::vector<std::complex<double>> y;  // dense local admittance, row-major
    std::vector<double> p_set_mw;         // generation setpoint per node
    std::vector<double> p_load_mw;
    std::vector<double> q_load_mvar;
    std::vector<std::uint8_t> is_pv;
    std::vector<double> q_min_mvar;  // aggregated generator limits per node
    std::vector<double> q_max_mvar;
    std::vector<double> v_set;       // voltage setpoint (PV and slack nodes)
    std::vector<double> v_start;     // warm-start magnitudes (case voltages)
    std::vector<int> gen_idx;        // generator indices living on this island
};

enum class PfFailure { None, MaxIterations, SingularJacobian, NumericalBreakdown };

struct PfSolution {
    bool converged = false;
    int iterations = 0;  // Newton updates, summed over Q-limit rounds
    PfFailure failure = PfFailure::None;
    std::vector<double> v_mag;       // per local node, p.u.
    std::vector<double> v_ang;       // radians
    std::vector<double> p_inj_mw;    // net injection per node
    std::vector<double> q_inj_mvar;
    double slack_p_mw = 0.0;         // generator output at the slack node
    double max_mismatch = 0.0;       // p.u., at the returned state
};

// Assembles the island problem. dispatch_mw gives the setpoint per generator
// (index-aligned with net.generators); generators that are out of service or
// outside the island are ignored. The island slack is the case slack bus if
// it lives here with an in-service generator, otherwise the in-service
// generator with the largest p_max (ties to the lowest bus id). Throws
// std::invalid_argument when the island has no in-service generator.
PfProblem build_problem(const Network& net, const YBus& ybus, std::span<const int> island_buses,
                        std::span<const std::uint8_t> gen_in_service,
                        std::span<const double> dispatch_mw);

PfSolution solve_island(const PfProblem& prob, const PfOptions& opts);

// Solver internals, exposed so tests can check the analytic Jacobian against
// finite differences of the mismatch function. Rows follow [P at p_nodes;
// Q at q_nodes], columns [theta at p_nodes; v_mag at q_nodes]; schedules are
// in p.u.
std::vector<double> pf_mismatch(const PfProblem& prob, std::span<const double> v_mag,
                                std::span<const double> v_ang,
                                std::span<const double> p_sched_pu,
                                std::span<const double> q_sched_pu,
                                std::span<const int> p_nodes, std::span<const int> q_nodes);

dense::Matrix pf_jacobian(const PfProblem& prob, std::span<const double> v_mag,
                          std::span<const double> v_ang, std::span<const int> p_nodes,
                          std::span<const int> q_nodes);

struct BranchFlow {
    double from_mva = 0.0;
    double to_mva = 0.0;
};

// Apparent power at both ends of each in-service branch, computed from the
// network-indexed voltage solution. Out-of-service branches report zero.
std::vector<BranchFlow> branch_flows(const Network& net,
                                     std::span<const std::uint8_t> branch_in_service,
                                     std::span<const double> v_mag,
                                     std::span<const double> v_ang);

// loading = max(|from|, |to|) / line_limit; zero for out-of-service branches.
// Throws std::invalid_argument when line_limit <= 0.
std::vector<double> line_loading(std::span<const BranchFlow> flows,
                                 std::span<const std::uint8_t> branch_in_service,
                                 double line_limit);

// Total cost over generators flagged as being on an available island.
// dispatch_mw carries the slack generators' solved output already.
double generation_cost(const Network& net, std::span<const double> dispatch_mw,
                       std::span<const std::uint8_t> gen_on_available_island);

// Whole-case convenience: detect islands over the masks, solve each, merge.
struct CaseSolution {
    bool all_converged = false;
    int islands = 0;
    int total_iterations = 0;
    std::vector<double> v_mag, v_ang;        // per network bus (0 when unsolved)
    std::vector<double> p_inj_mw, q_inj_mvar;
    std::vector<BranchFlow> flows;
    double slack_p_mw = 0.0;  // output at the case slack bus' island slack
};

CaseSolution solve_case(const Network& net, const PfOptions& opts);

}  // namespace gridcascade
