#include "gridcascade/cascade_env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gridcascade {

EnvConfig preset_ieee14() {
    EnvConfig cfg;
    cfg.stage_max = 3;
    cfg.line_limit = 200.0;
    cfg.c1 = 0.03;
    cfg.c2 = 1.7;
    cfg.base_reward_1 = 2000.0;
    cfg.base_reward_2 = 1000.0;
    cfg.base_reward_3 = 2000.0;
    return cfg;
}

EnvConfig preset_ieee118() {
    EnvConfig cfg = preset_ieee14();
    cfg.line_limit = 450.0;
    cfg.c1 = 0.005;
    return cfg;
}

const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::Ongoing: return "Ongoing";
        case Verdict::Win: return "Win";
        case Verdict::Lose: return "Lose";
    }
    return "?";
}

namespace {

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw std::runtime_error("env config: bad boolean for " + key);
}

}  // namespace

EnvConfig parse_env_config(std::string_view text, const EnvConfig& base) {
    EnvConfig cfg = base;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (const size_t hash = line.find('#'); hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const size_t a = s.find_first_not_of(" \t\r");
            const size_t b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty()) continue;
        if (key == "stage_max") {
            cfg.stage_max = std::stoi(val);
        } else if (key == "line_limit") {
            cfg.line_limit = std::stod(val);
        } else if (key == "c1") {
            cfg.c1 = std::stod(val);
        } else if (key == "c2") {
            cfg.c2 = std::stod(val);
        } else if (key == "base_reward_1") {
            cfg.base_reward_1 = std::stod(val);
        } else if (key == "base_reward_2") {
            cfg.base_reward_2 = std::stod(val);
        } else if (key == "base_reward_3") {
            cfg.base_reward_3 = std::stod(val);
        } else if (key == "attack_seed") {
            cfg.attack_seed = std::stoull(val);
        } else if (key == "attack_before_act") {
            cfg.attack_before_act = parse_bool(val, key);
        } else if (key == "gen_total_from_solution") {
            cfg.gen_total_from_solution = parse_bool(val, key);
        } else if (key == "avail_require_generator") {
            cfg.availability.require_generator = parse_bool(val, key);
        } else if (key == "avail_require_capacity") {
            cfg.availability.require_capacity = parse_bool(val, key);
        } else if (key == "avail_require_convergence") {
            cfg.availability.require_convergence = parse_bool(val, key);
        } else if (key == "avail_require_slack_bounds") {
            cfg.availability.require_slack_bounds = parse_bool(val, key);
        } else if (key == "avail_require_dispatch_total") {
            cfg.availability.require_dispatch_total = parse_bool(val, key);
        } else if (key == "pf_tol") {
            cfg.pf.tol_mismatch = std::stod(val);
        } else if (key == "pf_max_iter") {
            cfg.pf.max_iter = std::stoi(val);
        } else if (key == "pf_enforce_q_limits") {
            cfg.pf.enforce_q_limits = parse_bool(val, key);
        } else {
            throw std::runtime_error("env config: unknown key '" + key + "'");
        }
    }
    if (cfg.stage_max < 1) throw std::runtime_error("env config: stage_max must be >= 1");
    if (!(cfg.line_limit > 0)) throw std::runtime_error("env config: line_limit must be > 0");
    if (!(cfg.c2 > 0)) throw std::runtime_error("env config: c2 must be > 0");
    return cfg;
}

EnvConfig load_env_config(const std::string& path, const EnvConfig& base) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open env config: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_env_config(ss.str(), base);
}

std::string serialize(const EnvConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    os << "stage_max = " << cfg.stage_max << "\n";
    os << "line_limit = " << cfg.line_limit << "\n";
    os << "c1 = " << cfg.c1 << "\n";
    os << "c2 = " << cfg.c2 << "\n";
    os << "base_reward_1 = " << cfg.base_reward_1 << "\n";
    os << "base_reward_2 = " << cfg.base_reward_2 << "\n";
    os << "base_reward_3 = " << cfg.base_reward_3 << "\n";
    os << "attack_before_act = " << (cfg.attack_before_act ? "true" : "false") << "\n";
    os << "gen_total_from_solution = " << (cfg.gen_total_from_solution ? "true" : "false")
       << "\n";
    os << "avail_require_generator = " << (cfg.availability.require_generator ? "true" : "false")
       << "\n";
    os << "avail_require_capacity = " << (cfg.availability.require_capacity ? "true" : "false")
       << "\n";
    os << "avail_require_convergence = "
       << (cfg.availability.require_convergence ? "true" : "false") << "\n";
    os << "avail_require_slack_bounds = "
       << (cfg.availability.require_slack_bounds ? "true" : "false") << "\n";
    os << "avail_require_dispatch_total = "
       << (cfg.availability.require_dispatch_total ? "true" : "false") << "\n";
    os << "pf_tol = " << cfg.pf.tol_mismatch << "\n";
    os << "pf_max_iter = " << cfg.pf.max_iter << "\n";
    os << "pf_enforce_q_limits = " << (cfg.pf.enforce_q_limits ? "true" : "false") << "\n";
    return os.str();
}

RewardBreakdown compute_reward(double cost_dollars, double p_loss_mw, double p_total_mw,
                               int converged_islands, int island_count, Verdict verdict,
                               double p_available_mw, const EnvConfig& cfg) {
    RewardBreakdown rb;
    rb.cost_term = -cfg.c1 * cost_dollars;
    if (rb.cost_term == 0.0) rb.cost_term = 0.0;  // normalize -0
    rb.loss_term = -cfg.base_reward_1 * (p_loss_mw / p_total_mw);
    if (rb.loss_term == 0.0) rb.loss_term = 0.0;
    // granted when half or more of the currently remaining islands converged
    if (island_count > 0 && 2 * converged_islands >= island_count) {
        rb.convergence_term = cfg.base_reward_2;
    }
    if (verdict == Verdict::Win) {
        rb.win_term = cfg.base_reward_3 * std::pow(p_available_mw / p_total_mw, cfg.c2);
    }
    return rb;
}

CascadeEnv::CascadeEnv(Network net, EnvConfig cfg)
    : net_(std::move(net)), cfg_(std::move(cfg)) {
    if (net_.buses.empty() || net_.generators.empty()) {
        throw std::invalid_argument("CascadeEnv: network has no buses or generators");
    }
    if (cfg_.stage_max < 1 || !(cfg_.line_limit > 0.0) || !(cfg_.c2 > 0.0)) {
        throw std::invalid_argument("CascadeEnv: invalid environment config");
    }
}

Observation CascadeEnv::reset(std::uint64_t episode_seed) {
    branch_in_.resize(net_.branches.size());
    for (size_t k = 0; k < net_.branches.size(); ++k) branch_in_[k] = net_.branches[k].in_service;
    gen_in_.resize(net_.generators.size());
    dispatch_mw_.resize(net_.generators.size());
    for (size_t g = 0; g < net_.generators.size(); ++g) {
        gen_in_[g] = net_.generators[g].in_service;
        dispatch_mw_[g] = net_.generators[g].p_base;
    }
    bus_alive_.assign(net_.buses.size(), 1);
    stage_ = 0;
    done_ = false;
    scripted_pos_ = 0;
    p_total_ = net_.total_load_mw();
    if (!(p_total_ > 0.0)) throw std::runtime_error("CascadeEnv: case has no load");
    attack_rng_ = Rng(episode_seed);

    StepInfo info;
    run_cascade(info, /*allow_trips=*/false);  // plain base-case solve
    bool any_converged = false;
    for (const IslandPfSummary& s : summaries_) any_converged = any_converged || s.converged;
    if (!any_converged) {
        throw std::runtime_error("CascadeEnv: base case power flow diverged");
    }
    mark_unavailable_dead();
    if (cfg_.attack_before_act) apply_attack(info);
    obs_ = make_observation();
    return obs_;
}

void CascadeEnv::apply_attack(StepInfo& info) {
    if (scripted_pos_ < cfg_.scripted_attacks.size()) {
        const int k = cfg_.scripted_attacks[scripted_pos_++];
        if (k < 0 || k >= static_cast<int>(branch_in_.size()) || !branch_in_[k]) {
            throw std::runtime_error("CascadeEnv: scripted attack names a dead branch");
        }
        branch_in_[k] = 0;
        info.attacked_branch = k;
        return;
    }
    std::vector<int> candidates;
    candidates.reserve(branch_in_.size());
    for (size_t k = 0; k < branch_in_.size(); ++k) {
        if (branch_in_[k]) candidates.push_back(static_cast<int>(k));
    }
    if (candidates.empty()) return;  // nothing left to attack
    const int k = candidates[attack_rng_.next_below(candidates.size())];
    branch_in_[k] = 0;
    info.attacked_branch = k;
}

void CascadeEnv::run_cascade(StepInfo& info, bool allow_trips) {
    const size_t nb = net_.buses.size();
    v_mag_.assign(nb, 0.0);
    v_ang_.assign(nb, 0.0);
    p_inj_.assign(nb, 0.0);
    q_inj_.assign(nb, 0.0);

    std::vector<PfSolution> sols;
    for (size_t pass = 0; pass <= net_.branches.size(); ++pass) {
        const YBus ybus = build_admittance(net_, branch_in_);
        const IslandPartition part = detect_islands(net_, branch_in_);
        live_islands_.clear();
        for (const std::vector<int>& island : part.islands) {
            if (bus_alive_[island[0]]) live_islands_.push_back(island);
        }
        const int m = static_cast<int>(live_islands_.size());
        std::vector<PfProblem> probs(m);
        sols.assign(m, PfSolution{});
        std::vector<std::uint8_t> solvable(m, 0);
        for (int li = 0; li < m; ++li) {
            bool has_gen = false;
            for (size_t g = 0; g < net_.generators.size(); ++g) {
                if (!gen_in_[g]) continue;
                const int bi = net_.bus_index(net_.generators[g].bus);
                if (part.island_of_bus[bi] == part.island_of_bus[live_islands_[li][0]]) {
                    has_gen = true;
                    break;
                }
            }
            if (!has_gen) continue;
            probs[li] = build_problem(net_, ybus, live_islands_[li], gen_in_, dispatch_mw_);
            solvable[li] = 1;
        }
        // Islands are independent problems; solve them side by side.
#pragma omp parallel for schedule(dynamic) if (m > 1)
        for (int li = 0; li < m; ++li) {
            if (solvable[li]) sols[li] = solve_island(probs[li], cfg_.pf);
        }

        std::fill(v_mag_.begin(), v_mag_.end(), 0.0);
        std::fill(v_ang_.begin(), v_ang_.end(), 0.0);
        std::fill(p_inj_.begin(), p_inj_.end(), 0.0);
        std::fill(q_inj_.begin(), q_inj_.end(), 0.0);
        summaries_.assign(m, IslandPfSummary{});
        island_slack_p_.assign(m, 0.0);
        island_slack_bus_.assign(m, -1);
        for (int li = 0; li < m; ++li) {
            IslandPfSummary& sum = summaries_[li];
            for (int bi : live_islands_[li]) sum.load_total_mw += net_.buses[bi].p_load;
            if (!solvable[li]) continue;
            const PfProblem& prob = probs[li];
            const PfSolution& sol = sols[li];
            sum.has_generator = true;
            sum.converged = sol.converged;
            sum.slack_p_max_mw = prob.slack_p_max_mw;
            for (int g : prob.gen_idx) sum.max_gen_total_mw += net_.generators[g].p_max;
            double setpoint_total = 0.0;
            for (int g : prob.gen_idx) setpoint_total += dispatch_mw_[g];
            if (cfg_.gen_total_from_solution && sol.converged) {
                double non_slack = 0.0;
                for (int g : prob.gen_idx) {
                    if (net_.bus_index(net_.generators[g].bus) != prob.slack_bus) {
                        non_slack += dispatch_mw_[g];
                    }
                }
                sum.gen_total_mw = non_slack + sol.slack_p_mw;
            } else {
                sum.gen_total_mw = setpoint_total;
            }
            if (sol.converged) {
                sum.slack_p_mw = sol.slack_p_mw;
                island_slack_p_[li] = sol.slack_p_mw;
                island_slack_bus_[li] = prob.slack_bus;
                for (size_t i = 0; i < prob.bus_idx.size(); ++i) {
                    const int bi = prob.bus_idx[i];
                    v_mag_[bi] = sol.v_mag[i];
                    v_ang_[bi] = sol.v_ang[i];
                    p_inj_[bi] = sol.p_inj_mw[i];
                    q_inj_[bi] = sol.q_inj_mvar[i];
                }
            }
        }

        // trip every in-service branch loaded beyond the limit
        const std::vector<BranchFlow> flows = branch_flows(net_, branch_in_, v_mag_, v_ang_);
        loading_ = line_loading(flows, branch_in_, cfg_.line_limit);
        if (!allow_trips) break;
        bool tripped = false;
        for (size_t k = 0; k < loading_.size(); ++k) {
            if (loading_[k] > 1.0) {
                branch_in_[k] = 0;
                info.tripped_branches.push_back(static_cast<int>(k));
                tripped = true;
            }
        }
        if (!tripped) break;
    }
    info.island_count = static_cast<int>(live_islands_.size());
    for (const IslandPfSummary& s : summaries_) {
        if (s.converged) ++info.islands_converged;
    }
}

void CascadeEnv::mark_unavailable_dead() {
    assessments_ = assess_islands(summaries_, cfg_.availability);
    for (size_t li = 0; li < assessments_.size(); ++li) {
        if (assessments_[li].available) continue;
        for (int bi : live_islands_[li]) {
            bus_alive_[bi] = 0;
            v_mag_[bi] = 0.0;
            v_ang_[bi] = 0.0;
            p_inj_[bi] = 0.0;
            q_inj_[bi] = 0.0;
        }
        for (size_t g = 0; g < net_.generators.size(); ++g) {
            if (!gen_in_[g]) continue;
            const int bi = net_.bus_index(net_.generators[g].bus);
            if (!bus_alive_[bi]) gen_in_[g] = 0;
        }
        for (size_t k = 0; k < branch_in_.size(); ++k) {
            if (!branch_in_[k]) continue;
            if (!bus_alive_[net_.bus_index(net_.branches[k].from_bus)] ||
                !bus_alive_[net_.bus_index(net_.branches[k].to_bus)]) {
                branch_in_[k] = 0;
            }
        }
    }
}

Observation CascadeEnv::make_observation() const {
    Observation obs;
    obs.v.reserve(observation_size());
    const std::vector<BranchFlow> flows = branch_flows(net_, branch_in_, v_mag_, v_ang_);
    const std::vector<double> loading = line_loading(flows, branch_in_, cfg_.line_limit);
    obs.v.insert(obs.v.end(), loading.begin(), loading.end());
    for (size_t i = 0; i < net_.buses.size(); ++i) {
        obs.v.push_back(p_inj_[i]);
        obs.v.push_back(q_inj_[i]);
        obs.v.push_back(v_mag_[i]);
        obs.v.push_back(v_ang_[i]);
    }
    return obs;
}

StepOutcome CascadeEnv::step(const Action& action) {
    if (done_) throw std::logic_error("CascadeEnv::step: episode already finished");
    if (action.coeffs.size() != net_.generators.size()) {
        throw std::invalid_argument("CascadeEnv::step: action length mismatch");
    }
    ++stage_;
    StepOutcome out;

    // dispatch: every in-service generator follows its coefficient; the
    // island slack ignores the setpoint when solving
    for (size_t g = 0; g < net_.generators.size(); ++g) {
        if (!gen_in_[g]) continue;
        const double a = std::clamp(action.coeffs[g], 0.0, 1.0);
        dispatch_mw_[g] = a * net_.generators[g].p_max;
    }

    if (!cfg_.attack_before_act) apply_attack(out.info);
    run_cascade(out.info, /*allow_trips=*/true);
    assessments_ = assess_islands(summaries_, cfg_.availability);

    double p_available = 0.0;
    int available = 0;
    for (size_t li = 0; li < assessments_.size(); ++li) {
        if (assessments_[li].available) {
            ++available;
            p_available += assessments_[li].load_total_mw;
        }
    }
    out.info.islands_available = available;
    out.info.p_available_mw = p_available;
    out.info.p_loss_mw = p_total_ - p_available;

    // verdict precedes the win-term computation
    if (available == 0) {
        out.verdict = Verdict::Lose;
    } else if (stage_ >= cfg_.stage_max) {
        out.verdict = Verdict::Win;
    } else {
        out.verdict = Verdict::Ongoing;
    }
    out.done = out.verdict != Verdict::Ongoing;
    done_ = out.done;

    // generation cost over available islands; slack machines contribute
    // their solved output, the rest their setpoints
    std::vector<std::uint8_t> gen_available(net_.generators.size(), 0);
    std::vector<double> cost_dispatch = dispatch_mw_;
    for (size_t li = 0; li < assessments_.size(); ++li) {
        if (!assessments_[li].available) continue;
        int slack_units = 0;
        for (size_t g = 0; g < net_.generators.size(); ++g) {
            if (gen_in_[g] && net_.bus_index(net_.generators[g].bus) == island_slack_bus_[li]) {
                ++slack_units;
            }
        }
        for (int bi : live_islands_[li]) {
            for (size_t g = 0; g < net_.generators.size(); ++g) {
                if (gen_in_[g] && net_.bus_index(net_.generators[g].bus) == bi) {
                    gen_available[g] = 1;
                    if (bi == island_slack_bus_[li]) {
                        cost_dispatch[g] = island_slack_p_[li] / slack_units;
                    }
                }
            }
        }
    }
    const double cost = generation_cost(net_, cost_dispatch, gen_available);

    out.reward_breakdown =
        compute_reward(cost, out.info.p_loss_mw, p_total_, out.info.islands_converged,
                       out.info.island_count, out.verdict, p_available, cfg_);
    out.reward = out.reward_breakdown.total();

    mark_unavailable_dead();
    if (cfg_.attack_before_act && !done_) apply_attack(out.info);
    obs_ = make_observation();
    out.observation = obs_;
    return out;
}

}  // namespace gridcascade
