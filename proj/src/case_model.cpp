#include "gridcascade/case_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace gridcascade {

double evaluate_cost(const Generator& g, double p_mw) {
    double cost = 0.0;
    double pk = 1.0;
    for (double c : g.cost_coeffs) {
        cost += c * pk;
        pk *= p_mw;
    }
    return cost;
}

int Network::bus_index(int bus_id) const {
    for (size_t i = 0; i < buses.size(); ++i) {
        if (buses[i].id == bus_id) return static_cast<int>(i);
    }
    return -1;
}

int Network::slack_bus_index() const {
    for (size_t i = 0; i < buses.size(); ++i) {
        if (buses[i].kind == BusKind::Slack) return static_cast<int>(i);
    }
    return -1;
}

double Network::total_load_mw() const {
    double total = 0.0;
    for (const Bus& b : buses) total += b.p_load;
    return total;
}

namespace {

std::string_view strip(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

std::vector<double> parse_numbers(std::string_view line, int line_no) {
    std::vector<double> out;
    size_t pos = 0;
    while (pos < line.size()) {
        while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t' || line[pos] == ',')) {
            ++pos;
        }
        if (pos >= line.size()) break;
        size_t end = pos;
        while (end < line.size() && line[end] != ' ' && line[end] != '\t' && line[end] != ',') {
            ++end;
        }
        double v = 0.0;
        const auto res = std::from_chars(line.data() + pos, line.data() + end, v);
        if (res.ec != std::errc{} || res.ptr != line.data() + end) {
            throw CaseError("malformed number '" + std::string(line.substr(pos, end - pos)) + "'",
                            line_no);
        }
        out.push_back(v);
        pos = end;
    }
    return out;
}

void require_columns(const std::vector<double>& row, size_t n, const char* table, int line_no) {
    if (row.size() != n) {
        throw CaseError(std::string(table) + " row has " + std::to_string(row.size()) +
                            " columns, expected " + std::to_string(n),
                        line_no);
    }
}

}  // namespace

Network parse_case(std::string_view text) {
    Network net;
    enum class Section { None, Bus, Gen, Branch, GenCost } section = Section::None;
    bool saw_bus = false, saw_gen = false, saw_branch = false;
    size_t gencost_row = 0;

    int line_no = 0;
    size_t pos = 0;
    while (pos <= text.size()) {
        const size_t nl = text.find('\n', pos);
        std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.size() - pos
                                                                             : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        std::string_view line = raw;
        if (const size_t hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = strip(line);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']') throw CaseError("unterminated section header", line_no);
            const std::string_view name = line.substr(1, line.size() - 2);
            if (name == "bus") {
                section = Section::Bus;
                saw_bus = true;
            } else if (name == "gen") {
                section = Section::Gen;
                saw_gen = true;
            } else if (name == "branch") {
                section = Section::Branch;
                saw_branch = true;
            } else if (name == "gencost") {
                section = Section::GenCost;
            } else {
                throw CaseError("unknown table '" + std::string(name) + "'", line_no);
            }
            continue;
        }
        if (line.rfind("baseMVA", 0) == 0) {
            const auto vals = parse_numbers(line.substr(7), line_no);
            if (vals.size() != 1 || vals[0] <= 0) throw CaseError("bad baseMVA", line_no);
            net.base_mva = vals[0];
            continue;
        }

        const std::vector<double> row = parse_numbers(line, line_no);
        switch (section) {
            case Section::None:
                throw CaseError("data before any table header", line_no);
            case Section::Bus: {
                require_columns(row, 9, "bus", line_no);
                Bus b;
                b.id = static_cast<int>(row[0]);
                const int t = static_cast<int>(row[1]);
                if (t == 3) {
                    b.kind = BusKind::Slack;
                } else if (t == 2) {
                    b.kind = BusKind::PV;
                } else if (t == 1) {
                    b.kind = BusKind::PQ;
                } else {
                    throw CaseError("bus type must be 1, 2 or 3", line_no);
                }
                b.p_load = row[2];
                b.q_load = row[3];
                b.g_shunt = row[4];
                b.b_shunt = row[5];
                b.v_mag_init = row[6];
                b.v_ang_init = row[7];
                b.base_kv = row[8];
                if (net.bus_index(b.id) >= 0) {
                    throw CaseError("duplicate bus id " + std::to_string(b.id), line_no);
                }
                net.buses.push_back(b);
                break;
            }
            case Section::Gen: {
                require_columns(row, 7, "gen", line_no);
                Generator g;
                g.bus = static_cast<int>(row[0]);
                g.p_base = row[1];
                g.p_max = row[2];
                g.p_min = row[3];
                g.q_max = row[4];
                g.q_min = row[5];
                g.in_service = row[6] != 0.0;
                if (net.bus_index(g.bus) < 0) {
                    throw CaseError("generator references absent bus " + std::to_string(g.bus),
                                    line_no);
                }
                net.generators.push_back(g);
                break;
            }
            case Section::Branch: {
                require_columns(row, 8, "branch", line_no);
                Branch br;
                br.from_bus = static_cast<int>(row[0]);
                br.to_bus = static_cast<int>(row[1]);
                br.r = row[2];
                br.x = row[3];
                br.b_charging = row[4];
                br.tap_ratio = row[5] == 0.0 ? 1.0 : row[5];
                br.phase_shift = row[6];
                br.in_service = row[7] != 0.0;
                if (net.bus_index(br.from_bus) < 0 || net.bus_index(br.to_bus) < 0) {
                    throw CaseError("branch references absent bus", line_no);
                }
                net.branches.push_back(br);
                break;
            }
            case Section::GenCost: {
                if (row.empty()) break;
                const size_t n = static_cast<size_t>(row[0]);
                if (row.size() != n + 1) {
                    throw CaseError("gencost row length mismatch", line_no);
                }
                if (gencost_row >= net.generators.size()) {
                    throw CaseError("more gencost rows than generators", line_no);
                }
                // file stores descending coefficients; keep ascending
                std::vector<double> coeffs(row.begin() + 1, row.end());
                std::reverse(coeffs.begin(), coeffs.end());
                net.generators[gencost_row++].cost_coeffs = std::move(coeffs);
                break;
            }
        }
    }

    if (!saw_bus) throw CaseError("missing [bus] table", line_no);
    if (!saw_gen) throw CaseError("missing [gen] table", line_no);
    if (!saw_branch) throw CaseError("missing [branch] table", line_no);
    return net;
}

Network load_case_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open case file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_case(ss.str());
}

namespace {

void append_number(std::string& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

}  // namespace

std::string serialize(const Network& net) {
    std::string out;
    out += "baseMVA ";
    append_number(out, net.base_mva);
    out += "\n\n[bus]\n# id type pd qd gs bs vm va basekv\n";
    for (const Bus& b : net.buses) {
        append_number(out, b.id);
        const int t = b.kind == BusKind::Slack ? 3 : (b.kind == BusKind::PV ? 2 : 1);
        out += " ";
        append_number(out, t);
        for (double v : {b.p_load, b.q_load, b.g_shunt, b.b_shunt, b.v_mag_init, b.v_ang_init,
                         b.base_kv}) {
            out += " ";
            append_number(out, v);
        }
        out += "\n";
    }
    out += "\n[gen]\n# bus pbase pmax pmin qmax qmin status\n";
    for (const Generator& g : net.generators) {
        append_number(out, g.bus);
        for (double v : {g.p_base, g.p_max, g.p_min, g.q_max, g.q_min}) {
            out += " ";
            append_number(out, v);
        }
        out += g.in_service ? " 1\n" : " 0\n";
    }
    out += "\n[branch]\n# from to r x b tap shift status\n";
    for (const Branch& br : net.branches) {
        append_number(out, br.from_bus);
        out += " ";
        append_number(out, br.to_bus);
        for (double v : {br.r, br.x, br.b_charging, br.tap_ratio, br.phase_shift}) {
            out += " ";
            append_number(out, v);
        }
        out += br.in_service ? " 1\n" : " 0\n";
    }
    out += "\n[gencost]\n# n c_{n-1} ... c0 (polynomial, descending)\n";
    for (const Generator& g : net.generators) {
        append_number(out, static_cast<double>(g.cost_coeffs.size()));
        for (auto it = g.cost_coeffs.rbegin(); it != g.cost_coeffs.rend(); ++it) {
            out += " ";
            append_number(out, *it);
        }
        out += "\n";
    }
    return out;
}

std::vector<std::string> validate(const Network& net) {
    std::vector<std::string> issues;
    std::set<int> ids;
    for (const Bus& b : net.buses) {
        if (!ids.insert(b.id).second) {
            issues.push_back("bus " + std::to_string(b.id) + ": duplicate id");
        }
        if (!(b.v_mag_init > 0.0)) {
            issues.push_back("bus " + std::to_string(b.id) + ": v_mag_init must be positive");
        }
    }
    for (size_t i = 0; i < net.branches.size(); ++i) {
        const Branch& br = net.branches[i];
        const std::string name = "branch " + std::to_string(i + 1) + " (" +
                                 std::to_string(br.from_bus) + "-" + std::to_string(br.to_bus) +
                                 ")";
        if (br.from_bus == br.to_bus) issues.push_back(name + ": from and to bus coincide");
        if (net.bus_index(br.from_bus) < 0 || net.bus_index(br.to_bus) < 0) {
            issues.push_back(name + ": references an absent bus");
        }
        if (br.r == 0.0 && br.x == 0.0) issues.push_back(name + ": zero impedance");
    }
    for (size_t i = 0; i < net.generators.size(); ++i) {
        const Generator& g = net.generators[i];
        const std::string name =
            "generator " + std::to_string(i + 1) + " (bus " + std::to_string(g.bus) + ")";
        if (net.bus_index(g.bus) < 0) issues.push_back(name + ": references an absent bus");
        if (g.p_min < 0.0 || g.p_min > g.p_max) {
            issues.push_back(name + ": requires 0 <= p_min <= p_max");
        }
        // cost must not decrease with output over the operating range
        if (g.p_max > 0.0) {
            double prev = evaluate_cost(g, 0.0);
            bool monotone = true;
            for (int k = 1; k <= 100; ++k) {
                const double cur = evaluate_cost(g, g.p_max * k / 100.0);
                if (cur < prev - 1e-9) {
                    monotone = false;
                    break;
                }
                prev = cur;
            }
            if (!monotone) issues.push_back(name + ": cost decreases on [0, p_max]");
        }
    }
    if (net.generators.empty()) issues.push_back("network: no generators");
    if (net.slack_bus_index() < 0) issues.push_back("network: no slack bus");
    return issues;
}

}  // namespace gridcascade
