#pragma once
// Grid case data model and the plain-text case schema (tables mirroring the
// standard bus/gen/branch/gencost layout; see README for the column list).

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gridcascade {

enum class BusKind { Slack, PV, PQ };

struct Bus {
    int id = 0;
    BusKind kind = BusKind::PQ;
    double p_load = 0.0;      // MW
    double q_load = 0.0;      // MVAr
    double g_shunt = 0.0;     // MW at 1 p.u.
    double b_shunt = 0.0;     // MVAr at 1 p.u.
    double v_mag_init = 1.0;  // p.u., also the regulation setpoint on PV buses
    double v_ang_init = 0.0;  // degrees
    double base_kv = 0.0;
};

struct Branch {
    int from_bus = 0;  // bus id
    int to_bus = 0;    // bus id
    double r = 0.0;
    double x = 0.0;
    double b_charging = 0.0;  // total line charging susceptance, p.u.
    double tap_ratio = 1.0;   // 1.0 when no transformer
    double phase_shift = 0.0; // degrees
    bool in_service = true;
};

struct Generator {
    int bus = 0;  // bus id
    double p_base = 0.0;  // base-case dispatch setpoint, MW
    double p_max = 0.0;
    double p_min = 0.0;
    double q_max = 0.0;
    double q_min = 0.0;
    bool in_service = true;
    // cost($/h) = sum_k cost_coeffs[k] * P^k with P in MW (ascending order)
    std::vector<double> cost_coeffs{0.0, 20.0};
};

double evaluate_cost(const Generator& g, double p_mw);

struct Network {
    double base_mva = 100.0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Generator> generators;

    // Index of the bus with the given id, or -1.
    int bus_index(int bus_id) const;
    int slack_bus_index() const;
    double total_load_mw() const;
};

struct CaseError : std::runtime_error {
    int line_no;
    CaseError(const std::string& msg, int line) : std::runtime_error(msg), line_no(line) {}
};

Network parse_case(std::string_view text);
Network load_case_file(const std::string& path);
std::string serialize(const Network& net);

// Invariant violations as human-readable descriptions; empty means valid.
std::vector<std::string> validate(const Network& net);

}  // namespace gridcascade
