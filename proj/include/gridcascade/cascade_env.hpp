#pragma once
// Multi-stage cascading failure environment: per-stage dispatch, random line
// attack, overload trip loop, island availability bookkeeping, shaped reward
// and Win/Lose termination.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gridcascade/acpf.hpp"
#include "gridcascade/case_model.hpp"
#include "gridcascade/rng.hpp"
#include "gridcascade/topology.hpp"

namespace gridcascade {

struct EnvConfig {
    int stage_max = 3;
    double line_limit = 200.0;  // MVA, one global limit per grid
    double c1 = 0.03;           // generation cost scale, 1/$
    double c2 = 1.7;            // win reward exponent
    double base_reward_1 = 2000.0;  // loss-of-load penalty scale
    double base_reward_2 = 1000.0;  // convergence reward
    double base_reward_3 = 2000.0;  // win reward scale
    std::uint64_t attack_seed = 0;
    // When true the next stage's attacked line is already visible in the
    // observation the agent acts on; default is act-then-attack.
    bool attack_before_act = false;
    // Gen_Total from the power-flow solution instead of dispatch setpoints.
    bool gen_total_from_solution = false;
    AvailabilityRules availability;
    PfOptions pf;
    // Fixed per-stage attack list (branch indices); overrides the random
    // attack stream while entries remain.
    std::vector<int> scripted_attacks;
};

EnvConfig preset_ieee14();
EnvConfig preset_ieee118();

// key = value text form (presets ship as files; see data/env14.cfg).
EnvConfig parse_env_config(std::string_view text, const EnvConfig& base = {});
EnvConfig load_env_config(const std::string& path, const EnvConfig& base = {});
std::string serialize(const EnvConfig& cfg);

// Flat RL state: [loading per branch | P, Q, V, theta per bus]; zeros for
// tripped branches and for buses on unavailable islands.
struct Observation {
    std::vector<double> v;

    size_t size() const { return v.size(); }
    double operator[](size_t i) const { return v[i]; }
};

struct Action {
    std::vector<double> coeffs;  // one per generator, clamped to [0,1]
};

enum class Verdict { Ongoing, Win, Lose };
const char* to_string(Verdict v);

struct RewardBreakdown {
    double cost_term = 0.0;
    double loss_term = 0.0;
    double convergence_term = 0.0;
    double win_term = 0.0;

    double total() const { return cost_term + loss_term + convergence_term + win_term; }
};

struct StepInfo {
    int attacked_branch = -1;          // index into Network::branches
    std::vector<int> tripped_branches; // overload trips this stage
    int island_count = 0;              // islands over live buses after the stage
    int islands_available = 0;
    int islands_converged = 0;
    double p_loss_mw = 0.0;
    double p_available_mw = 0.0;
};

struct StepOutcome {
    Observation observation;
    double reward = 0.0;
    RewardBreakdown reward_breakdown;
    bool done = false;
    Verdict verdict = Verdict::Ongoing;
    StepInfo info;
};

// Stage reward from the island assessments. converged_islands counts islands
// whose power flow converged this stage, island_count the islands currently
// remaining. Win adds the win term scaled by the surviving load share.
RewardBreakdown compute_reward(double cost_dollars, double p_loss_mw, double p_total_mw,
                               int converged_islands, int island_count, Verdict verdict,
                               double p_available_mw, const EnvConfig& cfg);

class CascadeEnv {
public:
    CascadeEnv(Network net, EnvConfig cfg);

    // Restores every component to service and solves the base case. Throws
    // std::runtime_error when the base case does not converge.
    Observation reset(std::uint64_t episode_seed);

    // Throws std::logic_error when the episode already finished.
    StepOutcome step(const Action& action);

    const Network& network() const { return net_; }
    const EnvConfig& config() const { return cfg_; }
    int stage() const { return stage_; }
    bool done() const { return done_; }
    double p_total_mw() const { return p_total_; }
    size_t observation_size() const { return net_.branches.size() + 4 * net_.buses.size(); }
    size_t action_size() const { return net_.generators.size(); }
    const Observation& observation() const { return obs_; }
    const std::vector<IslandAssessment>& assessments() const { return assessments_; }

private:
    struct StageState;
    void apply_attack(StepInfo& info);
    void run_cascade(StepInfo& info, bool allow_trips);
    void mark_unavailable_dead();
    Observation make_observation() const;

    Network net_;
    EnvConfig cfg_;
    size_t scripted_pos_ = 0;

    std::vector<std::uint8_t> branch_in_;
    std::vector<std::uint8_t> gen_in_;
    std::vector<std::uint8_t> bus_alive_;
    std::vector<double> dispatch_mw_;

    int stage_ = 0;
    bool done_ = true;
    double p_total_ = 0.0;
    Rng attack_rng_;

    // network-indexed stage solution (zeros where dead or unsolved)
    std::vector<double> v_mag_, v_ang_, p_inj_, q_inj_;
    std::vector<double> loading_;
    std::vector<std::vector<int>> live_islands_;
    std::vector<IslandPfSummary> summaries_;
    std::vector<double> island_slack_p_;   // solved slack output per live island
    std::vector<int> island_slack_bus_;    // network bus index, -1 when unsolved
    std::vector<IslandAssessment> assessments_;
    Observation obs_;
};

}  // namespace gridcascade
