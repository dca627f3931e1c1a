#include "gridcascade/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gridcascade {

const char* to_string(PolicyKind k) {
    switch (k) {
        case PolicyKind::Ddpg: return "ddpg";
        case PolicyKind::RandomDispatch: return "random";
        case PolicyKind::MaxDispatch: return "max";
        case PolicyKind::HalfDispatch: return "half";
    }
    return "?";
}

std::optional<PolicyKind> parse_policy(std::string_view name) {
    if (name == "ddpg") return PolicyKind::Ddpg;
    if (name == "random") return PolicyKind::RandomDispatch;
    if (name == "max") return PolicyKind::MaxDispatch;
    if (name == "half") return PolicyKind::HalfDispatch;
    return std::nullopt;
}

int RunReport::wins() const {
    int w = 0;
    for (const EpisodeRow& row : episodes) {
        if (row.verdict == Verdict::Win) ++w;
    }
    return w;
}

double RunReport::win_rate() const {
    if (episodes.empty()) return 0.0;
    return static_cast<double>(wins()) / static_cast<double>(episodes.size());
}

std::vector<double> RunReport::moving_average_reward() const {
    std::vector<double> ma(episodes.size());
    double running = 0.0;
    for (size_t i = 0; i < episodes.size(); ++i) {
        running += episodes[i].total_reward;
        if (i >= static_cast<size_t>(ma_window)) {
            running -= episodes[i - ma_window].total_reward;
            ma[i] = running / ma_window;
        } else {
            ma[i] = running / static_cast<double>(i + 1);
        }
    }
    return ma;
}

SeedBundle derive_seeds(std::uint64_t master_seed) {
    return {mix_seed(master_seed, 1), mix_seed(master_seed, 2), mix_seed(master_seed, 3)};
}

std::uint64_t episode_seed(std::uint64_t attack_seed, int episode) {
    return mix_seed(attack_seed, 0x10000u + static_cast<std::uint64_t>(episode));
}

namespace {

Action baseline_action(PolicyKind kind, size_t m, Rng& rng) {
    Action a;
    a.coeffs.resize(m);
    switch (kind) {
        case PolicyKind::RandomDispatch:
            for (double& c : a.coeffs) c = rng.uniform();
            break;
        case PolicyKind::MaxDispatch:
            std::fill(a.coeffs.begin(), a.coeffs.end(), 1.0);
            break;
        case PolicyKind::HalfDispatch:
            std::fill(a.coeffs.begin(), a.coeffs.end(), 0.5);
            break;
        case PolicyKind::Ddpg:
            throw std::invalid_argument("baseline_action: ddpg is not a baseline");
    }
    return a;
}

struct EpisodeResult {
    Verdict verdict = Verdict::Lose;
    double total_reward = 0.0;
    int stages = 0;
    std::string trace;
};

template <typename ActFn>
EpisodeResult run_episode(CascadeEnv& env, std::uint64_t seed, ActFn&& act_fn,
                          int episode = 0, bool record_trace = false) {
    EpisodeResult res;
    Observation obs = env.reset(seed);
    while (!env.done()) {
        const Action a = act_fn(obs);
        const StepOutcome out = env.step(a);
        res.total_reward += out.reward;
        ++res.stages;
        res.verdict = out.verdict;
        if (record_trace) res.trace += trace_row_csv(episode, res.stages, out);
        obs = out.observation;
    }
    return res;
}

}  // namespace

std::string trace_header_csv() {
    return "episode,stage,attacked_branch,tripped_branches,islands,islands_available,"
           "cost_term,loss_term,convergence_term,win_term,reward,p_loss_mw,"
           "p_available_mw,verdict\n";
}

std::string trace_row_csv(int episode, int stage, const StepOutcome& out) {
    std::string row;
    row += std::to_string(episode);
    row += ',';
    row += std::to_string(stage);
    row += ',';
    row += std::to_string(out.info.attacked_branch);
    row += ',';
    for (size_t i = 0; i < out.info.tripped_branches.size(); ++i) {
        if (i) row += ';';
        row += std::to_string(out.info.tripped_branches[i]);
    }
    row += ',';
    row += std::to_string(out.info.island_count);
    row += ',';
    row += std::to_string(out.info.islands_available);
    for (double v : {out.reward_breakdown.cost_term, out.reward_breakdown.loss_term,
                     out.reward_breakdown.convergence_term, out.reward_breakdown.win_term,
                     out.reward, out.info.p_loss_mw, out.info.p_available_mw}) {
        row += ',';
        char buf[32];
        const auto res = std::to_chars(buf, buf + sizeof buf, v);
        row.append(buf, res.ptr);
    }
    row += ',';
    row += to_string(out.verdict);
    row += '\n';
    return row;
}

RunReport run_baseline(PolicyKind policy, const EnvConfig& env_cfg, const Network& net,
                       int episodes, std::uint64_t seed, const HarnessOptions& opts) {
    if (policy == PolicyKind::Ddpg) {
        throw std::invalid_argument("run_baseline: ddpg requires a checkpoint; use evaluate");
    }
    const SeedBundle seeds = derive_seeds(seed);
    RunReport report;
    report.policy = to_string(policy);
    report.attack_seed = seeds.attack;
    report.exploration_seed = seeds.exploration;
    report.episodes.resize(episodes);
    std::vector<std::string> traces(opts.record_traces ? episodes : 0);

#pragma omp parallel for schedule(dynamic) if (episodes > 1)
    for (int ep = 0; ep < episodes; ++ep) {
        CascadeEnv env(net, env_cfg);
        const std::uint64_t es = episode_seed(seeds.attack, ep);
        Rng policy_rng(mix_seed(seeds.exploration, ep));
        const size_t m = net.generators.size();
        const EpisodeResult res = run_episode(
            env, es, [&](const Observation&) { return baseline_action(policy, m, policy_rng); },
            ep, opts.record_traces);
        report.episodes[ep] = {ep, es, res.verdict, res.total_reward, res.stages};
        if (opts.record_traces) traces[ep] = res.trace;
    }
    if (opts.record_traces) {
        report.trace_csv = trace_header_csv();
        for (const std::string& t : traces) report.trace_csv += t;
    }
    return report;
}

TrainResult train(const EnvConfig& env_cfg, const AgentConfig& agent_cfg, const Network& net,
                  int episodes, std::uint64_t seed, DdpgAgent& agent,
                  const HarnessOptions& opts) {
    const SeedBundle seeds = derive_seeds(seed);
    TrainResult result;
    result.report.policy = "ddpg-train";
    result.report.attack_seed = seeds.attack;
    result.report.agent_init_seed = seeds.agent_init;
    result.report.exploration_seed = seeds.exploration;

    CascadeEnv env(net, env_cfg);
    if (opts.record_traces) result.report.trace_csv = trace_header_csv();
    for (int ep = 0; ep < episodes; ++ep) {
        const std::uint64_t es = episode_seed(seeds.attack, ep);
        Observation obs = env.reset(es);
        agent.observe_for_norm(obs);
        EpisodeRow row{ep, es, Verdict::Lose, 0.0, 0};
        // linear noise decay across the training episodes
        const double frac = episodes > 1 ? static_cast<double>(ep) / (episodes - 1) : 0.0;
        const double sigma = agent_cfg.noise_sigma_start +
                             frac * (agent_cfg.noise_sigma_end - agent_cfg.noise_sigma_start);
        while (!env.done()) {
            const bool warming = ep < opts.warmup_episodes;
            const Action a = warming ? agent.random_action() : agent.act(obs, sigma);
            const StepOutcome out = env.step(a);
            agent.observe_for_norm(out.observation);
            agent.add_transition(obs, a, out.reward, out.observation, out.done);
            row.total_reward += out.reward;
            ++row.stages;
            row.verdict = out.verdict;
            if (opts.record_traces) {
                result.report.trace_csv += trace_row_csv(ep, row.stages, out);
            }
            obs = out.observation;
            if (!warming && agent.ready_to_train()) {
                const TrainDiagnostics diag = agent.train_step();
                result.critic_loss.push_back(diag.critic_loss);
                result.actor_objective.push_back(diag.actor_objective);
            }
        }
        result.report.episodes.push_back(row);
    }
    return result;
}

RunReport evaluate(const DdpgAgent& agent, const EnvConfig& env_cfg, const Network& net,
                   int episodes, std::uint64_t seed, const HarnessOptions& opts) {
    const SeedBundle seeds = derive_seeds(seed);
    RunReport report;
    report.policy = "ddpg";
    report.attack_seed = seeds.attack;
    report.exploration_seed = seeds.exploration;
    report.episodes.resize(episodes);

    if (opts.online_eval) {
        // sequential: the agent keeps exploring and learning
        DdpgAgent online = agent;
        CascadeEnv env(net, env_cfg);
        for (int ep = 0; ep < episodes; ++ep) {
            const std::uint64_t es = episode_seed(seeds.attack, ep);
            Observation obs = env.reset(es);
            online.observe_for_norm(obs);
            EpisodeRow row{ep, es, Verdict::Lose, 0.0, 0};
            while (!env.done()) {
                const Action a = online.act(obs, online.config().noise_sigma_end);
                const StepOutcome out = env.step(a);
                online.observe_for_norm(out.observation);
                online.add_transition(obs, a, out.reward, out.observation, out.done);
                row.total_reward += out.reward;
                ++row.stages;
                row.verdict = out.verdict;
                obs = out.observation;
                if (online.ready_to_train()) online.train_step();
            }
            report.episodes[ep] = row;
        }
        return report;
    }

    std::vector<std::string> traces(opts.record_traces ? episodes : 0);
    const bool par = opts.parallel_eval && episodes > 1;
#pragma omp parallel for schedule(dynamic) if (par)
    for (int ep = 0; ep < episodes; ++ep) {
        CascadeEnv env(net, env_cfg);
        const std::uint64_t es = episode_seed(seeds.attack, ep);
        const EpisodeResult res = run_episode(
            env, es, [&](const Observation& o) { return agent.act(o); }, ep,
            opts.record_traces);
        report.episodes[ep] = {ep, es, res.verdict, res.total_reward, res.stages};
        if (opts.record_traces) traces[ep] = res.trace;
    }
    if (opts.record_traces) {
        report.trace_csv = trace_header_csv();
        for (const std::string& t : traces) report.trace_csv += t;
    }
    return report;
}

// ---- CSV -------------------------------------------------------------------

namespace {

void append_double(std::string& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

double parse_double(std::string_view s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{}) throw std::runtime_error("csv: bad number");
    return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    size_t pos = 0;
    while (true) {
        const size_t next = line.find(sep, pos);
        if (next == std::string_view::npos) {
            out.push_back(line.substr(pos));
            break;
        }
        out.push_back(line.substr(pos, next - pos));
        pos = next + 1;
    }
    return out;
}

}  // namespace

std::string report_to_csv(const RunReport& report) {
    std::string out;
    out += "# policy=" + report.policy;
    out += " case=" + (report.case_name.empty() ? std::string("-") : report.case_name);
    out += " attack_seed=" + std::to_string(report.attack_seed);
    out += " agent_init_seed=" + std::to_string(report.agent_init_seed);
    out += " exploration_seed=" + std::to_string(report.exploration_seed);
    out += " ma_window=" + std::to_string(report.ma_window);
    out += "\nepisode,seed,verdict,total_reward,stages\n";
    for (const EpisodeRow& row : report.episodes) {
        out += std::to_string(row.episode);
        out += ',';
        out += std::to_string(row.attack_seed);
        out += ',';
        out += to_string(row.verdict);
        out += ',';
        append_double(out, row.total_reward);
        out += ',';
        out += std::to_string(row.stages);
        out += '\n';
    }
    return out;
}

RunReport report_from_csv(std::string_view text) {
    RunReport report;
    std::istringstream in{std::string(text)};
    std::string line;
    bool header_done = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            for (const auto& kv : split(std::string_view(line).substr(2), ' ')) {
                const size_t eq = kv.find('=');
                if (eq == std::string_view::npos) continue;
                const std::string_view key = kv.substr(0, eq);
                const std::string_view val = kv.substr(eq + 1);
                if (key == "policy") {
                    report.policy = std::string(val);
                } else if (key == "case" && val != "-") {
                    report.case_name = std::string(val);
                } else if (key == "attack_seed") {
                    report.attack_seed = std::stoull(std::string(val));
                } else if (key == "agent_init_seed") {
                    report.agent_init_seed = std::stoull(std::string(val));
                } else if (key == "exploration_seed") {
                    report.exploration_seed = std::stoull(std::string(val));
                } else if (key == "ma_window") {
                    report.ma_window = std::stoi(std::string(val));
                }
            }
            continue;
        }
        if (!header_done) {  // column header line
            header_done = true;
            continue;
        }
        const auto cols = split(line, ',');
        if (cols.size() != 5) throw std::runtime_error("csv: expected 5 columns");
        EpisodeRow row;
        row.episode = std::stoi(std::string(cols[0]));
        row.attack_seed = std::stoull(std::string(cols[1]));
        if (cols[2] == "Win") {
            row.verdict = Verdict::Win;
        } else if (cols[2] == "Lose") {
            row.verdict = Verdict::Lose;
        } else {
            throw std::runtime_error("csv: bad verdict");
        }
        row.total_reward = parse_double(cols[3]);
        row.stages = std::stoi(std::string(cols[4]));
        report.episodes.push_back(row);
    }
    return report;
}

std::string summary_to_csv(const std::vector<RunReport>& reports) {
    std::string out = "policy,episodes,wins,win_rate\n";
    for (const RunReport& r : reports) {
        out += r.policy;
        out += ',';
        out += std::to_string(r.episodes.size());
        out += ',';
        out += std::to_string(r.wins());
        out += ',';
        append_double(out, r.win_rate());
        out += '\n';
    }
    return out;
}

std::string ma_to_csv(const RunReport& report) {
    std::string out = "# ma_window=" + std::to_string(report.ma_window) + "\n";
    out += "episode,reward,ma_reward\n";
    const std::vector<double> ma = report.moving_average_reward();
    for (size_t i = 0; i < report.episodes.size(); ++i) {
        out += std::to_string(report.episodes[i].episode);
        out += ',';
        append_double(out, report.episodes[i].total_reward);
        out += ',';
        append_double(out, ma[i]);
        out += '\n';
    }
    return out;
}

void write_file(const std::filesystem::path& path, std::string_view content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace gridcascade
