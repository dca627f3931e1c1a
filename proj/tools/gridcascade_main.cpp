// gridcascade CLI: power-flow and islanding inspection plus the cascade
// experiment driver (train / eval / baseline).

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gridcascade/acpf.hpp"
#include "gridcascade/case_model.hpp"
#include "gridcascade/cascade_env.hpp"
#include "gridcascade/ddpg.hpp"
#include "gridcascade/harness.hpp"
#include "gridcascade/topology.hpp"

namespace {

constexpr int kExitConfigError = 2;
constexpr int kExitNumericalAbort = 3;

using namespace gridcascade;

std::string fmt(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

EnvConfig resolve_env_config(const std::string& preset, const std::string& config_path,
                             std::uint64_t seed) {
    EnvConfig cfg;
    if (preset == "ieee14") {
        cfg = preset_ieee14();
    } else if (preset == "ieee118") {
        cfg = preset_ieee118();
    } else if (!preset.empty()) {
        throw std::runtime_error("unknown env preset '" + preset + "'");
    }
    if (!config_path.empty()) cfg = load_env_config(config_path, cfg);
    cfg.attack_seed = seed;
    return cfg;
}

AgentConfig default_agent_config(const Network& net) {
    AgentConfig cfg;
    if (net.buses.size() > 100) {
        cfg.hidden1 = 256;
        cfg.hidden2 = 256;
    }
    return cfg;
}

int cmd_powerflow(const std::string& case_path, bool flat_start, double tol) {
    const Network net = load_case_file(case_path);
    PfOptions opts;
    opts.tol_mismatch = tol;
    opts.flat_start = flat_start;
    const CaseSolution sol = solve_case(net, opts);
    std::printf("# converged=%s islands=%d iterations=%d slack_p_mw=%s\n",
                sol.all_converged ? "true" : "false", sol.islands, sol.total_iterations,
                fmt(sol.slack_p_mw).c_str());
    std::printf("bus,v_mag_pu,v_ang_deg,p_inj_mw,q_inj_mvar\n");
    for (size_t i = 0; i < net.buses.size(); ++i) {
        std::printf("%d,%s,%s,%s,%s\n", net.buses[i].id, fmt(sol.v_mag[i]).c_str(),
                    fmt(sol.v_ang[i] * 180.0 / M_PI).c_str(), fmt(sol.p_inj_mw[i]).c_str(),
                    fmt(sol.q_inj_mvar[i]).c_str());
    }
    std::printf("branch,from,to,flow_from_mva,flow_to_mva\n");
    for (size_t k = 0; k < net.branches.size(); ++k) {
        std::printf("%zu,%d,%d,%s,%s\n", k + 1, net.branches[k].from_bus,
                    net.branches[k].to_bus, fmt(sol.flows[k].from_mva).c_str(),
                    fmt(sol.flows[k].to_mva).c_str());
    }
    if (!sol.all_converged) return kExitNumericalAbort;
    return 0;
}

// "4-5,2-4" -> branch indices by from-to bus ids
std::vector<int> parse_out_lines(const Network& net, const std::string& spec) {
    std::vector<int> out;
    if (spec.empty()) return out;
    std::string token;
    std::istringstream in(spec);
    while (std::getline(in, token, ',')) {
        const size_t dash = token.find('-');
        if (dash == std::string::npos) {
            throw std::runtime_error("bad --out-lines entry '" + token + "' (want FROM-TO)");
        }
        const int from = std::stoi(token.substr(0, dash));
        const int to = std::stoi(token.substr(dash + 1));
        int found = -1;
        for (size_t k = 0; k < net.branches.size(); ++k) {
            const Branch& br = net.branches[k];
            if ((br.from_bus == from && br.to_bus == to) ||
                (br.from_bus == to && br.to_bus == from)) {
                found = static_cast<int>(k);
                break;
            }
        }
        if (found < 0) {
            throw std::runtime_error("no branch " + std::to_string(from) + "-" +
                                     std::to_string(to) + " in the case");
        }
        out.push_back(found);
    }
    return out;
}

int cmd_islands(const std::string& case_path, const std::string& out_lines,
                const std::string& preset, const std::string& config_path) {
    const Network net = load_case_file(case_path);
    EnvConfig cfg = resolve_env_config(preset.empty() ? "ieee14" : preset, config_path, 0);

    std::vector<std::uint8_t> branch_mask(net.branches.size());
    for (size_t k = 0; k < net.branches.size(); ++k) branch_mask[k] = net.branches[k].in_service;
    for (int k : parse_out_lines(net, out_lines)) branch_mask[k] = 0;

    const IslandPartition part = detect_islands(net, branch_mask);
    std::vector<std::uint8_t> gen_mask(net.generators.size());
    std::vector<double> dispatch(net.generators.size());
    for (size_t g = 0; g < net.generators.size(); ++g) {
        gen_mask[g] = net.generators[g].in_service;
        dispatch[g] = net.generators[g].p_base;
    }
    const YBus ybus = build_admittance(net, branch_mask);

    std::printf("island,buses,available,reason,max_gen_total_mw,gen_total_mw,load_total_mw\n");
    for (size_t li = 0; li < part.islands.size(); ++li) {
        const std::vector<int>& island = part.islands[li];
        IslandPfSummary sum;
        for (int bi : island) sum.load_total_mw += net.buses[bi].p_load;
        std::vector<int> gens;
        for (size_t g = 0; g < net.generators.size(); ++g) {
            if (gen_mask[g] &&
                part.island_of_bus[net.bus_index(net.generators[g].bus)] == static_cast<int>(li)) {
                gens.push_back(static_cast<int>(g));
            }
        }
        if (!gens.empty()) {
            sum.has_generator = true;
            for (int g : gens) {
                sum.max_gen_total_mw += net.generators[g].p_max;
                sum.gen_total_mw += dispatch[g];
            }
            const PfProblem prob = build_problem(net, ybus, island, gen_mask, dispatch);
            const PfSolution sol = solve_island(prob, cfg.pf);
            sum.converged = sol.converged;
            sum.slack_p_mw = sol.slack_p_mw;
            sum.slack_p_max_mw = prob.slack_p_max_mw;
        }
        const IslandAssessment a = assess_island(static_cast<int>(li), sum, cfg.availability);
        std::string buses;
        for (int bi : island) {
            if (!buses.empty()) buses += ' ';
            buses += std::to_string(net.buses[bi].id);
        }
        std::printf("%d,%s,%s,%s,%s,%s,%s\n", a.island_id, buses.c_str(),
                    a.available ? "true" : "false", to_string(a.reason),
                    fmt(a.max_gen_total_mw).c_str(), fmt(a.gen_total_mw).c_str(),
                    fmt(a.load_total_mw).c_str());
    }
    return 0;
}

std::string case_label(const std::string& path) {
    return std::filesystem::path(path).stem().string();
}

int cmd_baseline(const std::string& case_path, const std::string& policy_name,
                 const std::string& preset, const std::string& config_path, int episodes,
                 std::uint64_t seed, const std::string& out_dir, bool trace) {
    const Network net = load_case_file(case_path);
    const EnvConfig cfg = resolve_env_config(preset, config_path, seed);
    const auto policy = parse_policy(policy_name);
    if (!policy || *policy == PolicyKind::Ddpg) {
        throw std::runtime_error("baseline policy must be one of random|max|half");
    }
    HarnessOptions opts;
    opts.record_traces = trace;
    RunReport report = run_baseline(*policy, cfg, net, episodes, seed, opts);
    report.case_name = case_label(case_path);
    std::printf("policy=%s episodes=%d wins=%d win_rate=%s\n", report.policy.c_str(),
                episodes, report.wins(), fmt(report.win_rate()).c_str());
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        const auto dir = std::filesystem::path(out_dir);
        write_file(dir / "report.csv", report_to_csv(report));
        write_file(dir / "summary.csv", summary_to_csv({report}));
        write_file(dir / "ma_reward.csv", ma_to_csv(report));
        if (trace) write_file(dir / "trace.csv", report.trace_csv);
    }
    return 0;
}

int cmd_train(const std::string& case_path, const std::string& preset,
              const std::string& config_path, int episodes, std::uint64_t seed,
              const std::string& out_dir) {
    const Network net = load_case_file(case_path);
    const EnvConfig cfg = resolve_env_config(preset, config_path, seed);
    const AgentConfig agent_cfg = default_agent_config(net);
    const SeedBundle seeds = derive_seeds(seed);
    CascadeEnv env(net, cfg);
    DdpgAgent agent(env.observation_size(), env.action_size(), agent_cfg, seeds.agent_init,
                    seeds.exploration);
    TrainResult result = train(cfg, agent_cfg, net, episodes, seed, agent);
    result.report.case_name = case_label(case_path);
    std::printf("trained %d episodes, train win_rate=%s, optimizer steps=%zu\n", episodes,
                fmt(result.report.win_rate()).c_str(), result.critic_loss.size());
    std::filesystem::create_directories(out_dir.empty() ? "." : out_dir);
    const auto dir = std::filesystem::path(out_dir.empty() ? "." : out_dir);
    agent.save_checkpoint((dir / "checkpoint.bin").string());
    write_file(dir / "report.csv", report_to_csv(result.report));
    write_file(dir / "summary.csv", summary_to_csv({result.report}));
    write_file(dir / "ma_reward.csv", ma_to_csv(result.report));
    std::printf("checkpoint: %s\n", (dir / "checkpoint.bin").string().c_str());
    return 0;
}

int cmd_eval(const std::string& case_path, const std::string& checkpoint,
             const std::string& preset, const std::string& config_path, int episodes,
             std::uint64_t seed, const std::string& out_dir, bool online, bool trace) {
    const Network net = load_case_file(case_path);
    const EnvConfig cfg = resolve_env_config(preset, config_path, seed);
    DdpgAgent agent = DdpgAgent::load_checkpoint(checkpoint);
    CascadeEnv env(net, cfg);
    if (agent.obs_dim() != env.observation_size() || agent.act_dim() != env.action_size()) {
        throw std::runtime_error("checkpoint dimensions do not match the case");
    }
    HarnessOptions opts;
    opts.online_eval = online;
    opts.record_traces = trace;
    RunReport report = evaluate(agent, cfg, net, episodes, seed, opts);
    report.case_name = case_label(case_path);
    report.agent_init_seed = derive_seeds(seed).agent_init;
    std::printf("policy=ddpg episodes=%d wins=%d win_rate=%s\n", episodes, report.wins(),
                fmt(report.win_rate()).c_str());
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        const auto dir = std::filesystem::path(out_dir);
        write_file(dir / "report.csv", report_to_csv(report));
        write_file(dir / "summary.csv", summary_to_csv({report}));
        write_file(dir / "ma_reward.csv", ma_to_csv(report));
        if (trace) write_file(dir / "trace.csv", report.trace_csv);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-stage cascading failure simulator and RL toolkit"};
    app.require_subcommand(1);

    std::string case_path, preset, config_path, out_dir, policy, checkpoint, out_lines;
    int episodes = 0;
    std::uint64_t seed = 1;
    double tol = 1e-8;
    bool flat_start = false;
    bool online = false;
    bool trace = false;

    auto* pf = app.add_subcommand("powerflow", "solve the AC power flow and print the solution");
    pf->add_option("case", case_path, "case file")->required();
    pf->add_flag("--flat-start", flat_start, "start from a flat voltage profile");
    pf->add_option("--tol", tol, "mismatch tolerance (p.u.)");

    auto* is = app.add_subcommand("islands", "print island partition and availability");
    is->add_option("case", case_path, "case file")->required();
    is->add_option("--out-lines", out_lines, "branches to take out, e.g. 4-5,2-4");
    is->add_option("--env-preset", preset, "ieee14 | ieee118");
    is->add_option("--env-config", config_path, "environment config file");

    auto* bl = app.add_subcommand("baseline", "evaluate a baseline dispatch policy");
    bl->add_option("--case", case_path, "case file")->required();
    bl->add_option("--policy", policy, "random | max | half")->required();
    bl->add_option("--env-preset", preset, "ieee14 | ieee118");
    bl->add_option("--env-config", config_path, "environment config file");
    bl->add_option("--episodes", episodes, "episode count")->default_val(1000);
    bl->add_option("--seed", seed, "master seed")->default_val(1);
    bl->add_option("--out", out_dir, "output directory for CSV reports");
    bl->add_flag("--trace", trace, "also write per-stage trace.csv (needs --out)");

    auto* tr = app.add_subcommand("train", "train the DDPG agent");
    tr->add_option("--case", case_path, "case file")->required();
    tr->add_option("--env-preset", preset, "ieee14 | ieee118");
    tr->add_option("--env-config", config_path, "environment config file");
    tr->add_option("--episodes", episodes, "training episodes")->default_val(300);
    tr->add_option("--seed", seed, "master seed")->default_val(1);
    tr->add_option("--out", out_dir, "output directory")->required();

    auto* ev = app.add_subcommand("eval", "evaluate a trained checkpoint");
    ev->add_option("--case", case_path, "case file")->required();
    ev->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    ev->add_option("--env-preset", preset, "ieee14 | ieee118");
    ev->add_option("--env-config", config_path, "environment config file");
    ev->add_option("--episodes", episodes, "evaluation episodes")->default_val(1000);
    ev->add_option("--seed", seed, "master seed")->default_val(1);
    ev->add_option("--out", out_dir, "output directory for CSV reports");
    ev->add_flag("--online", online, "keep exploring and learning during evaluation");
    ev->add_flag("--trace", trace, "also write per-stage trace.csv (needs --out)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (pf->parsed()) return cmd_powerflow(case_path, flat_start, tol);
        if (is->parsed()) return cmd_islands(case_path, out_lines, preset, config_path);
        if (bl->parsed()) {
            return cmd_baseline(case_path, policy, preset, config_path, episodes, seed, out_dir,
                                trace);
        }
        if (tr->parsed()) return cmd_train(case_path, preset, config_path, episodes, seed, out_dir);
        if (ev->parsed()) {
            return cmd_eval(case_path, checkpoint, preset, config_path, episodes, seed, out_dir,
                            online, trace);
        }
    } catch (const CaseError& e) {
        std::cerr << "case error (line " << e.line_no << "): " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        std::cerr << "error: " << msg << "\n";
        if (msg.find("non-finite") != std::string::npos ||
            msg.find("diverged") != std::string::npos) {
            return kExitNumericalAbort;
        }
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfigError;
    }
    return 0;
}
