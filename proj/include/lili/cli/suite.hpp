#pragma once

// Experiment suites: a grid of conditions x methods x seeds, run in a worker
// pool and aggregated into a mean +- standard error table.
//
// Suite files are INI:
//
//   [suite]
//   name = noise
//   seeds = 0 1 2
//   workers = 2
//   preset = desk          ; desk or paper
//   metric_window = 500    ; final interactions averaged per run
//   condition_label = sigma
//
//   [base]                 ; applied to every run
//   env.id = point_mass
//
//   [method:lili]          ; one column per method
//   run.algorithm = lili
//
//   [condition:0.2]        ; one row per condition
//   env.noise = 0.2

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "lili/cli/analysis.hpp"
#include "lili/cli/run.hpp"

namespace lili::cli {

using Overrides = std::vector<std::pair<std::string, std::string>>;

struct SuiteSpec {
    std::string name = "suite";
    std::vector<std::uint64_t> seeds{0};
    std::size_t workers = 1;
    std::string preset = "desk";
    std::size_t metric_window = 500;
    std::string condition_label = "condition";
    Overrides base;
    std::vector<std::pair<std::string, Overrides>> methods;
    std::vector<std::pair<std::string, Overrides>> conditions;
};

struct SuiteRun {
    std::string condition;
    std::string method;
    std::uint64_t seed = 0;
    RunConfig config;
    fs::path dir;
};

struct RunOutcome {
    bool ok = false;
    std::string error;
    double metric = kNoValue;
};

struct SuiteCell {
    std::string condition;
    std::string method;
    MeanSe stat;
    std::size_t failed = 0;
};

struct SuiteResult {
    std::vector<SuiteRun> runs;
    std::vector<RunOutcome> outcomes;
    std::vector<SuiteCell> cells;
    [[nodiscard]] std::size_t failures() const {
        std::size_t n = 0;
        for (const auto& o : outcomes) n += o.ok ? 0 : 1;
        return n;
    }
};

/// Applies a named preset: "desk" (reduced widths and update counts) or "paper" (defaults).
inline RunConfig apply_preset(RunConfig c, const std::string& preset) {
    if (preset == "desk") return desk_scale(std::move(c));
    if (preset == "paper") return c;
    throw ConfigError("preset: unknown value '" + preset + "' (expected desk or paper)");
}

/// Builds a validated config: environment defaults, then preset, then overrides in order.
/// `env.id` and `run.algorithm` in the overrides select the starting defaults.
inline RunConfig build_config(const std::string& preset, const Overrides& overrides) {
    std::string env = "point_mass", algo = "lili";
    for (const auto& [k, v] : overrides) {
        if (k == "env.id") env = v;
        if (k == "run.algorithm") algo = v;
    }
    RunConfig c = apply_preset(make_run_config(parse_env_id(env), parse_algorithm(algo)), preset);
    for (const auto& [k, v] : overrides) set_config_value(c, k, v);
    c.env.oracle = c.algorithm == Algorithm::oracle;
    c.validate();
    return c;
}

/// Flattens a run config file into ordered key/value overrides.
inline Overrides config_file_overrides(const std::string& text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream is(text);
    try {
        pt::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("config: " + std::string(e.what()));
    }
    Overrides o;
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw ConfigError(section + ": key outside of any section");
        for (const auto& [name, value] : body) o.emplace_back(section + "." + name, value.data());
    }
    return o;
}

inline SuiteSpec parse_suite(const std::string& text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream is(text);
    try {
        pt::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("suite: " + std::string(e.what()));
    }
    SuiteSpec s;
    auto overrides = [](const pt::ptree& body) {
        Overrides o;
        for (const auto& [k, v] : body) o.emplace_back(k, v.data());
        return o;
    };
    for (const auto& [key, node] : tree)
        if (node.empty() && !node.data().empty()) throw ConfigError("suite: key '" + key + "' outside of any section");
    // The INI reader drops empty sections; an empty [condition:x] is meaningful, so headers come from the text.
    std::vector<std::string> sections;
    {
        std::istringstream lines(text);
        std::string line;
        while (std::getline(lines, line)) {
            const auto b = line.find_first_not_of(" \t\r");
            const auto e = line.find_last_not_of(" \t\r");
            if (b == std::string::npos || line[b] != '[' || line[e] != ']') continue;
            const std::string name = line.substr(b + 1, e - b - 1);
            if (std::find(sections.begin(), sections.end(), name) != sections.end())
                throw ConfigError("suite: duplicate section [" + name + "]");
            sections.push_back(name);
        }
    }
    const pt::ptree none;
    for (const auto& section : sections) {
        const auto found = tree.get_child_optional(pt::ptree::path_type(section, '\0'));
        const pt::ptree& body = found ? *found : none;
        if (section == "suite") {
            for (const auto& [k, v] : body) {
                const std::string val = v.data();
                if (k == "name") s.name = val;
                else if (k == "seeds") {
                    s.seeds.clear();
                    std::istringstream ss(val);
                    std::string tok;
                    while (ss >> tok) {
                        for (auto& ch : tok)
                            if (ch == ',') ch = ' ';
                        std::istringstream inner(tok);
                        std::string part;
                        while (inner >> part) s.seeds.push_back(detail::parse_number<std::uint64_t>("suite.seeds", part));
                    }
                    if (s.seeds.empty()) throw ConfigError("suite.seeds: at least one seed is required");
                } else if (k == "workers") s.workers = detail::parse_number<std::size_t>("suite.workers", val);
                else if (k == "preset") s.preset = val;
                else if (k == "metric_window") s.metric_window = detail::parse_number<std::size_t>("suite.metric_window", val);
                else if (k == "condition_label") s.condition_label = val;
                else throw ConfigError("suite." + k + ": unknown suite key");
            }
        } else if (section == "base") {
            s.base = overrides(body);
        } else if (section.rfind("method:", 0) == 0) {
            s.methods.emplace_back(section.substr(7), overrides(body));
        } else if (section.rfind("condition:", 0) == 0) {
            s.conditions.emplace_back(section.substr(10), overrides(body));
        } else {
            throw ConfigError("suite: unknown section [" + section + "]");
        }
    }
    if (s.methods.empty()) throw ConfigError("suite: at least one [method:...] section is required");
    if (s.conditions.empty()) s.conditions.emplace_back("default", Overrides{});
    if (s.workers == 0) throw ConfigError("suite.workers must be >= 1");
    return s;
}

/// Expands the grid. Every config is built and validated up front, so a bad
/// suite fails before anything runs.
inline std::vector<SuiteRun> expand_suite(const SuiteSpec& s, const fs::path& root) {
    std::vector<SuiteRun> runs;
    for (const auto& [cname, cover] : s.conditions)
        for (const auto& [mname, mover] : s.methods)
            for (auto seed : s.seeds) {
                Overrides all = s.base;
                all.insert(all.end(), mover.begin(), mover.end());
                all.insert(all.end(), cover.begin(), cover.end());
                all.emplace_back("run.seed", std::to_string(seed));
                SuiteRun r;
                r.condition = cname;
                r.method = mname;
                r.seed = seed;
                try {
                    r.config = build_config(s.preset, all);
                } catch (const ConfigError& e) {
                    throw ConfigError("suite cell " + cname + "/" + mname + ": " + e.what());
                }
                r.dir = root / s.name / cname / mname / ("seed" + std::to_string(seed));
                runs.push_back(std::move(r));
            }
    return runs;
}

inline json suite_manifest(const SuiteSpec& s, const std::vector<SuiteRun>& runs) {
    json j{{"format", "lili-suite/1"}, {"name", s.name}, {"preset", s.preset}, {"metric_window", s.metric_window},
           {"output_root_env", kOutputRootEnv}};
    json list = json::array();
    for (const auto& r : runs)
        list.push_back({{"condition", r.condition}, {"method", r.method}, {"seed", r.seed}, {"dir", r.dir.string()}});
    j["runs"] = list;
    return j;
}

/// Runs (or reuses completed runs of) every cell, then aggregates.
/// `log` receives one line per finished run; it may be called from worker threads.
inline SuiteResult run_suite(const SuiteSpec& s, const fs::path& root,
                             const std::function<void(const std::string&)>& log = {}) {
    SuiteResult res;
    res.runs = expand_suite(s, root);
    fs::create_directories(root / s.name);
    write_text(root / s.name / "suite.json", suite_manifest(s, res.runs).dump(2) + "\n");
    res.outcomes.resize(res.runs.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= res.runs.size()) return;
            const auto& r = res.runs[i];
            RunOutcome out;
            try {
                if (!run_is_complete(r.dir, r.config)) run_training(r.config, r.dir);
                out.metric = final_mean_step_reward(read_metrics_csv(r.dir / "metrics.csv"), s.metric_window);
                out.ok = true;
            } catch (const std::exception& e) {
                out.error = e.what();
            }
            res.outcomes[i] = out;
            if (log) {
                std::lock_guard lock(log_mutex);
                std::ostringstream os;
                os << r.condition << " / " << r.method << " / seed " << r.seed << ": "
                   << (out.ok ? "final reward " + detail::format_double(out.metric) : "FAILED (" + out.error + ")");
                log(os.str());
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t width = std::min(s.workers, res.runs.size());
    for (std::size_t w = 0; w < width; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    for (const auto& [cname, _c] : s.conditions)
        for (const auto& [mname, _m] : s.methods) {
            SuiteCell cell{cname, mname, {}, 0};
            std::vector<double> xs;
            for (std::size_t i = 0; i < res.runs.size(); ++i)
                if (res.runs[i].condition == cname && res.runs[i].method == mname) {
                    if (res.outcomes[i].ok) xs.push_back(res.outcomes[i].metric);
                    else ++cell.failed;
                }
            cell.stat = mean_se(xs);
            res.cells.push_back(cell);
        }
    return res;
}

/// condition,method,n,mean,se,failed
inline std::string suite_table_csv(const SuiteResult& r) {
    std::string out = "condition,method,n,mean,se,failed\n";
    for (const auto& c : r.cells)
        out += c.condition + "," + c.method + "," + std::to_string(c.stat.n) + "," + detail::format_double(c.stat.mean) +
               "," + detail::format_double(c.stat.se) + "," + std::to_string(c.failed) + "\n";
    return out;
}

/// Conditions as rows, methods as columns, cells "mean +- se"; "failed" when any seed failed.
inline std::string suite_table_text(const SuiteSpec& s, const SuiteResult& r) {
    std::vector<std::string> header{s.condition_label};
    for (const auto& [m, _] : s.methods) header.push_back(m);
    std::vector<std::vector<std::string>> rows;
    for (const auto& [cname, _c] : s.conditions) {
        std::vector<std::string> row{cname};
        for (const auto& [mname, _m] : s.methods)
            for (const auto& cell : r.cells)
                if (cell.condition == cname && cell.method == mname) {
                    std::ostringstream os;
                    os << std::fixed << std::setprecision(3);
                    if (cell.failed > 0) os << "failed";
                    else if (std::isnan(cell.stat.se)) os << cell.stat.mean;
                    else os << cell.stat.mean << " +- " << cell.stat.se;
                    row.push_back(os.str());
                }
        rows.push_back(row);
    }
    std::vector<std::size_t> width(header.size(), 0);
    for (std::size_t c = 0; c < header.size(); ++c) {
        width[c] = header[c].size();
        for (const auto& row : rows) width[c] = std::max(width[c], row[c].size());
    }
    std::ostringstream os;
    auto emit = [&](const std::vector<std::string>& row) {
        for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "  " : "") << std::left << std::setw(static_cast<int>(width[c])) << row[c];
        os << '\n';
    };
    emit(header);
    std::vector<std::string> rule;
    for (auto w : width) rule.emplace_back(w, '-');
    emit(rule);
    for (const auto& row : rows) emit(row);
    os << "final " << s.metric_window << "-interaction mean per-step reward; +- is the standard error over "
       << s.seeds.size() << " seed(s), omitted for a single seed\n";
    return os.str();
}

}  // namespace lili::cli
