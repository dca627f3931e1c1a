#pragma once
// Experiment driver: baseline policies, DDPG training and evaluation runs,
// per-episode reports and the CSV formats they ship in.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gridcascade/cascade_env.hpp"
#include "gridcascade/ddpg.hpp"

namespace gridcascade {

enum class PolicyKind { Ddpg, RandomDispatch, MaxDispatch, HalfDispatch };

const char* to_string(PolicyKind k);
std::optional<PolicyKind> parse_policy(std::string_view name);

struct EpisodeRow {
    int episode = 0;
    std::uint64_t attack_seed = 0;  // per-episode seed fed to the environment
    Verdict verdict = Verdict::Lose;
    double total_reward = 0.0;
    int stages = 0;
};

struct RunReport {
    std::string policy;
    std::string case_name;
    std::uint64_t attack_seed = 0;
    std::uint64_t agent_init_seed = 0;
    std::uint64_t exploration_seed = 0;
    int ma_window = 50;
    std::vector<EpisodeRow> episodes;
    std::string trace_csv;  // filled when HarnessOptions::record_traces is set

    int wins() const;
    double win_rate() const;  // wins / episodes
    // trailing moving average (partial windows at the start)
    std::vector<double> moving_average_reward() const;
};

// The three named seed streams derived from one master seed.
struct SeedBundle {
    std::uint64_t attack;
    std::uint64_t agent_init;
    std::uint64_t exploration;
};
SeedBundle derive_seeds(std::uint64_t master_seed);

// Per-episode attack seed; shared across policies so comparisons pair up.
std::uint64_t episode_seed(std::uint64_t attack_seed, int episode);

struct HarnessOptions {
    int warmup_episodes = 10;  // random-action episodes before the policy acts
    bool parallel_eval = true;
    bool online_eval = false;   // keep exploring/learning during evaluation
    bool record_traces = false; // per-stage rows into RunReport::trace_csv
};

// Per-stage trace rows: episode, stage, attacked line, tripped lines,
// island count, reward breakdown and verdict.
std::string trace_header_csv();
std::string trace_row_csv(int episode, int stage, const StepOutcome& out);

RunReport run_baseline(PolicyKind policy, const EnvConfig& env_cfg, const Network& net,
                       int episodes, std::uint64_t seed, const HarnessOptions& opts = {});

struct TrainResult {
    RunReport report;
    std::vector<double> critic_loss;      // one entry per optimizer step
    std::vector<double> actor_objective;
};

// Full DDPG loop: act with decaying noise, step, store, one optimizer step
// per environment step once the buffer is warm.
TrainResult train(const EnvConfig& env_cfg, const AgentConfig& agent_cfg, const Network& net,
                  int episodes, std::uint64_t seed, DdpgAgent& agent,
                  const HarnessOptions& opts = {});

RunReport evaluate(const DdpgAgent& agent, const EnvConfig& env_cfg, const Network& net,
                   int episodes, std::uint64_t seed, const HarnessOptions& opts = {});

// report.csv / summary.csv / ma_reward.csv
std::string report_to_csv(const RunReport& report);
RunReport report_from_csv(std::string_view text);
std::string summary_to_csv(const std::vector<RunReport>& reports);
std::string ma_to_csv(const RunReport& report);

void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace gridcascade
