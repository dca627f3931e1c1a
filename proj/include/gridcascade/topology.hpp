#pragma once
// Island detection over in-service branches (union-find) and per-island
// availability assessment.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gridcascade/case_model.hpp"

namespace gridcascade {

struct IslandPartition {
    std::vector<int> island_of_bus;       // island id per bus index
    std::vector<std::vector<int>> islands;  // bus indices, each sorted ascending
};

// Buses share an island iff connected via in-service branches. Islands are
// numbered by their smallest bus index.
IslandPartition detect_islands(const Network& net,
                               std::span<const std::uint8_t> branch_in_service);

enum class UnavailableReason {
    NoGenerator,
    CapacityShortfall,
    PfDiverged,
    SlackInfeasible,
    DispatchShortfall,
    Ok,
};

const char* to_string(UnavailableReason r);

struct IslandAssessment {
    int island_id = 0;
    bool available = false;
    UnavailableReason reason = UnavailableReason::Ok;
    double max_gen_total_mw = 0.0;  // sum of p_max over in-service island generators
    double gen_total_mw = 0.0;      // dispatched (or solved) output of those generators
    double load_total_mw = 0.0;     // total load demand on the island
};

// Which criteria participate in the availability conjunction. The dispatch
// check compares the generators' assigned output against the island load;
// the slack check bounds the solved slack injection by [0, slack p_max].
struct AvailabilityRules {
    bool require_generator = true;
    bool require_capacity = true;
    bool require_convergence = true;
    bool require_slack_bounds = false;
    bool require_dispatch_total = true;
};

// Power-flow facts one island contributes to its assessment.
struct IslandPfSummary {
    bool has_generator = false;
    bool converged = false;
    double slack_p_mw = 0.0;
    double slack_p_max_mw = 0.0;
    double max_gen_total_mw = 0.0;
    double gen_total_mw = 0.0;
    double load_total_mw = 0.0;
};

// First failing criterion (in enum order) wins; available iff none fails.
IslandAssessment assess_island(int island_id, const IslandPfSummary& pf,
                               const AvailabilityRules& rules);

std::vector<IslandAssessment> assess_islands(std::span<const IslandPfSummary> summaries,
                                             const AvailabilityRules& rules);

}  // namespace gridcascade
