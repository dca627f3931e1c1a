#include "gridcascade/topology.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace gridcascade {

namespace {

class UnionFind {
public:
    explicit UnionFind(int n) : parent_(n), size_(n, 1) {
        std::iota(parent_.begin(), parent_.end(), 0);
    }

    int find(int a) {
        while (parent_[a] != a) {
            parent_[a] = parent_[parent_[a]];  // path compression (halving)
            a = parent_[a];
        }
        return a;
    }

    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (size_[a] < size_[b]) std::swap(a, b);  // union by size
        parent_[b] = a;
        size_[a] += size_[b];
    }

private:
    std::vector<int> parent_;
    std::vector<int> size_;
};

}  // namespace

IslandPartition detect_islands(const Network& net,
                               std::span<const std::uint8_t> branch_in_service) {
    const int n = static_cast<int>(net.buses.size());
    if (branch_in_service.size() != net.branches.size()) {
        throw std::invalid_argument("detect_islands: mask size mismatch");
    }
    UnionFind uf(n);
    for (size_t k = 0; k < net.branches.size(); ++k) {
        if (!branch_in_service[k]) continue;
        const int f = net.bus_index(net.branches[k].from_bus);
        const int t = net.bus_index(net.branches[k].to_bus);
        uf.unite(f, t);
    }
    IslandPartition part;
    part.island_of_bus.assign(n, -1);
    std::vector<int> root_to_island(n, -1);
    for (int i = 0; i < n; ++i) {
        const int root = uf.find(i);
        if (root_to_island[root] < 0) {
            root_to_island[root] = static_cast<int>(part.islands.size());
            part.islands.emplace_back();
        }
        const int id = root_to_island[root];
        part.island_of_bus[i] = id;
        part.islands[id].push_back(i);
    }
    return part;
}

const char* to_string(UnavailableReason r) {
    switch (r) {
        case UnavailableReason::NoGenerator: return "NoGenerator";
        case UnavailableReason::CapacityShortfall: return "CapacityShortfall";
        case UnavailableReason::PfDiverged: return "PfDiverged";
        case UnavailableReason::SlackInfeasible: return "SlackInfeasible";
        case UnavailableReason::DispatchShortfall: return "DispatchShortfall";
        case UnavailableReason::Ok: return "Ok";
    }
    return "?";
}

IslandAssessment assess_island(int island_id, const IslandPfSummary& pf,
                               const AvailabilityRules& rules) {
    IslandAssessment a;
    a.island_id = island_id;
    a.max_gen_total_mw = pf.max_gen_total_mw;
    a.gen_total_mw = pf.gen_total_mw;
    a.load_total_mw = pf.load_total_mw;
    a.reason = UnavailableReason::Ok;
    if (rules.require_generator && !pf.has_generator) {
        a.reason = UnavailableReason::NoGenerator;
    } else if (rules.require_capacity && pf.max_gen_total_mw < pf.load_total_mw) {
        a.reason = UnavailableReason::CapacityShortfall;
    } else if (rules.require_convergence && !pf.converged) {
        a.reason = UnavailableReason::PfDiverged;
    } else if (rules.require_slack_bounds &&
               (pf.slack_p_mw < 0.0 || pf.slack_p_mw > pf.slack_p_max_mw)) {
        a.reason = UnavailableReason::SlackInfeasible;
    } else if (rules.require_dispatch_total && pf.gen_total_mw < pf.load_total_mw) {
        a.reason = UnavailableReason::DispatchShortfall;
    }
    a.available = a.reason == UnavailableReason::Ok;
    return a;
}

std::vector<IslandAssessment> assess_islands(std::span<const IslandPfSummary> summaries,
                                             const AvailabilityRules& rules) {
    std::vector<IslandAssessment> out;
    out.reserve(summaries.size());
    for (size_t i = 0; i < summaries.size(); ++i) {
        out.push_back(assess_island(static_cast<int>(i), summaries[i], rules));
    }
    return out;
}

}  // namespace gridcascade
