// lili: train, sweep, report, eval, arena.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 divergence,
// 3 partial suite failure.

#include <csignal>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lili/arena/server.hpp"
#include "lili/cli/report.hpp"
#include "lili/cli/suite.hpp"

namespace {

using namespace lili;
using namespace lili::cli;

constexpr int kExitOk = 0, kExitUsage = 1, kExitDiverged = 2, kExitPartial = 3;

struct TrainArgs {
    std::string env, algo, config_file, preset = "desk", out;
    std::optional<std::uint64_t> seed;
    std::optional<double> noise;
    std::optional<int> history;
    std::optional<std::size_t> interactions;
    std::vector<std::string> sets;
    std::map<std::string, std::string> keys;
    bool quiet = false;
};

Overrides train_overrides(const TrainArgs& a) {
    Overrides o;
    if (!a.config_file.empty()) o = config_file_overrides(read_text(a.config_file));
    if (!a.env.empty()) o.emplace_back("env.id", a.env);
    if (!a.algo.empty()) o.emplace_back("run.algorithm", a.algo);
    if (a.seed) o.emplace_back("run.seed", std::to_string(*a.seed));
    if (a.noise) o.emplace_back("env.noise", detail::format_double(*a.noise));
    if (a.history) o.emplace_back("env.history", std::to_string(*a.history));
    if (a.interactions) o.emplace_back("run.interactions", std::to_string(*a.interactions));
    for (const auto& k : config_keys())
        if (auto it = a.keys.find(k); it != a.keys.end() && !it->second.empty()) o.emplace_back(k, it->second);
    for (const auto& s : a.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
        o.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    return o;
}

int cmd_train(const TrainArgs& a) {
    const RunConfig cfg = build_config(a.preset, train_overrides(a));
    const fs::path dir = a.out.empty() ? output_root() / default_run_name(cfg) : fs::path(a.out);
    std::cerr << "training " << to_string(cfg.algorithm) << " on " << to_string(cfg.env.id) << ", seed " << cfg.seed
              << ", " << cfg.interactions << " interactions -> " << dir.string() << "\n";
    std::vector<double> recent;
    auto progress = [&](const MetricsRow& r) {
        if (a.quiet) return;
        recent.push_back(r.mean_step_reward);
        if ((r.interaction + 1) % 100 == 0) {
            double s = 0.0;
            for (double v : recent) s += v;
            std::cerr << "  interaction " << r.interaction + 1 << ": reward " << s / static_cast<double>(recent.size())
                      << " (last 100)\n";
            recent.clear();
        }
    };
    try {
        run_training(cfg, dir, progress);
    } catch (const DivergenceError& e) {
        std::cerr << "diverged: " << e.what() << "\n";
        return kExitDiverged;
    }
    std::cout << dir.string() << "\n";
    return kExitOk;
}

int cmd_sweep(const std::string& file, const std::string& out, std::size_t workers) {
    SuiteSpec s = parse_suite(read_text(file));
    if (workers > 0) s.workers = workers;
    const fs::path root = out.empty() ? output_root() : fs::path(out);
    const auto res = run_suite(s, root, [](const std::string& line) { std::cerr << line << "\n"; });
    write_text(root / s.name / "results.csv", suite_table_csv(res));
    const std::string text = suite_table_text(s, res);
    write_text(root / s.name / "results.txt", text);
    std::cout << text;
    if (res.failures() > 0) {
        std::cerr << res.failures() << " of " << res.runs.size() << " runs failed\n";
        return kExitPartial;
    }
    return kExitOk;
}

int cmd_report(const std::vector<std::string>& dirs, const std::string& out) {
    std::vector<fs::path> paths(dirs.begin(), dirs.end());
    for (const auto& p : write_report(paths, out)) std::cout << p.string() << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& run_dir, std::size_t episodes, const std::string& out) {
    const RunConfig cfg = load_run_config(run_dir);
    const auto rep = evaluate(read_checkpoint(fs::path(run_dir) / "checkpoint.bin"), cfg, episodes);
    json occ = json::object();
    for (std::size_t b = 0; b < rep.occupancy_labels.size(); ++b) occ[rep.occupancy_labels[b]] = rep.occupancy[b];
    const json j{{"run", run_dir},
                 {"env", to_string(cfg.env.id)},
                 {"algorithm", to_string(cfg.algorithm)},
                 {"episodes", rep.episodes},
                 {"mean_return", rep.mean_return},
                 {"mean_step_reward", rep.mean_step_reward},
                 {"success_rate", rep.success_rate},
                 {"occupancy", occ},
                 {"strategy_samples", rep.strategy_samples}};
    if (out.empty()) std::cout << j.dump(2) << "\n";
    else write_text(out, j.dump(2) + "\n");
    return kExitOk;
}

struct ArenaArgs {
    std::string checkpoint, config, env = "hockey", host = "127.0.0.1", log_dir;
    unsigned short port = 7777;
    arena::ArenaOptions opt;
};

int cmd_arena(const ArenaArgs& a) {
    fs::path ckpt = a.checkpoint;
    if (fs::is_directory(ckpt)) ckpt /= "checkpoint.bin";
    const fs::path cfg_dir = a.config.empty() ? ckpt.parent_path() : fs::path(a.config);
    const auto model = arena::load_arena_model(ckpt, cfg_dir, parse_env_id(a.env));
    boost::asio::io_context io;
    arena::Server server(io, {boost::asio::ip::make_address(a.host), a.port}, model, a.opt, a.log_dir);
    boost::asio::signal_set signals(io, SIGINT, SIGTERM);
    signals.async_wait([&](const boost::system::error_code&, int) { io.stop(); });
    std::cerr << "arena listening on " << a.host << ":" << server.port() << " (" << a.env << ", tick "
              << a.opt.tick_ms << " ms)\n";
    io.run();
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Latent strategy learning and influence across repeated interactions"};
    app.require_subcommand(1);

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "Train one run");
    train->add_option("--env", ta.env, "point_mass, driving or hockey");
    train->add_option("--algo", ta.algo, "lili, lili_no_influence, sac or oracle");
    train->add_option("--seed", ta.seed, "Run seed");
    train->add_option("--noise", ta.noise, "Opponent step noise sigma (Point Mass)");
    train->add_option("--history", ta.history, "Opponent history length N; also the encoder window");
    train->add_option("--interactions", ta.interactions, "Number of interactions");
    train->add_option("--config", ta.config_file, "INI config file applied before flags");
    train->add_option("--set", ta.sets, "key=value override, repeatable");
    train->add_option("--preset", ta.preset, "desk (default) or paper")->check(CLI::IsMember({"desk", "paper"}));
    train->add_option("--out", ta.out, std::string("Run directory (default $") + kOutputRootEnv + "/<env>_<algo>_s<seed>)");
    train->add_flag("--quiet", ta.quiet, "No progress output");
    {
        const RunConfig defaults = make_run_config(EnvId::point_mass, Algorithm::lili);
        for (const auto& k : config_keys())
            train->add_option("--" + k, ta.keys[k], "point_mass default " + get_config_value(defaults, k))
                ->group("Configuration keys (other environments use their own defaults)");
    }

    std::string suite_file, suite_out;
    std::size_t suite_workers = 0;
    auto* sweep = app.add_subcommand("sweep", "Run an experiment suite and aggregate mean +- s.e. over seeds");
    sweep->add_option("suite", suite_file, "Suite INI file")->required();
    sweep->add_option("--out", suite_out, std::string("Output root (default $") + kOutputRootEnv + " or ./runs)");
    sweep->add_option("--workers", suite_workers, "Override the suite's worker count");

    std::vector<std::string> report_dirs;
    std::string report_out;
    auto* report = app.add_subcommand("report", "Export learning curves, angle histogram or strategy occupancy");
    report->add_option("runs", report_dirs, "Run directories (same environment)")->required();
    report->add_option("--out", report_out, "Output directory")->required();

    std::string eval_run, eval_out;
    std::size_t eval_episodes = 200;
    auto* eval = app.add_subcommand("eval", "Evaluate a run's final checkpoint with the deterministic policy");
    eval->add_option("run", eval_run, "Run directory")->required();
    eval->add_option("--episodes", eval_episodes, "Interactions to play");
    eval->add_option("--out", eval_out, "JSON output file (default stdout)");

    ArenaArgs aa;
    auto* arena_cmd = app.add_subcommand("arena", "Serve live sessions against a frozen checkpoint");
    arena_cmd->add_option("--checkpoint", aa.checkpoint, "checkpoint.bin or its run directory")->required();
    arena_cmd->add_option("--config", aa.config, "Run directory holding config.ini (default: the checkpoint's)");
    arena_cmd->add_option("--env", aa.env, "hockey or driving");
    arena_cmd->add_option("--host", aa.host, "Bind address");
    arena_cmd->add_option("--port", aa.port, "TCP port (0 picks a free one)");
    arena_cmd->add_option("--tick-ms", aa.opt.tick_ms, "Tick period; 0 runs in lockstep with the client");
    arena_cmd->add_option("--decision-ticks", aa.opt.decision_ticks, "Ticks the strategy choice window stays open");
    arena_cmd->add_option("--practice", aa.opt.practice, "First K interactions are practice and not tallied");
    arena_cmd->add_option("--log-dir", aa.log_dir, "Where session logs are written");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }
    try {
        if (*train) return cmd_train(ta);
        if (*sweep) return cmd_sweep(suite_file, suite_out, suite_workers);
        if (*report) return cmd_report(report_dirs, report_out);
        if (*eval) return cmd_eval(eval_run, eval_episodes, eval_out);
        if (*arena_cmd) return cmd_arena(aa);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DivergenceError& e) {
        std::cerr << "diverged: " << e.what() << "\n";
        return kExitDiverged;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
