#include <gtest/gtest.h>

#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>

#include "lili/cli/report.hpp"
#include "lili/cli/suite.hpp"

using namespace lili;
using namespace lili::cli;

namespace {

fs::path scratch_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("lili_cli_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    return p;
}

const Overrides kTiny = {{"sac.hidden", "16"},           {"latent.hidden", "16"}, {"train.updates_per_interaction", "2"},
                         {"train.batch_pairs", "4"},     {"train.transitions_per_pair", "4"},
                         {"train.warmup", "3"},          {"run.interactions", "12"}};

Overrides tiny(Overrides extra) {
    Overrides o = kTiny;
    o.insert(o.end(), extra.begin(), extra.end());
    return o;
}

std::string tiny_base() {
    std::string s = "[base]\n";
    for (const auto& [k, v] : kTiny) s += k + " = " + v + "\n";
    return s;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty() && line[0] != '#') rows.push_back(split_csv_line(line));
    return rows;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(LILI_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(BuildConfig, OverridesApplyInOrderOnTopOfThePreset) {
    auto c = build_config("desk", {{"env.id", "hockey"}, {"run.algorithm", "oracle"}, {"sac.hidden", "7"}, {"sac.hidden", "9"}});
    EXPECT_EQ(c.env.id, EnvId::hockey);
    EXPECT_EQ(c.algorithm, Algorithm::oracle);
    EXPECT_TRUE(c.env.oracle);
    EXPECT_EQ(c.sac.hidden, 9u);
    EXPECT_EQ(c.updates_per_interaction, 8u);
    EXPECT_EQ(c.env.horizon, make_env_spec(EnvId::hockey).horizon);
    auto paper = build_config("paper", {});
    EXPECT_EQ(paper.updates_per_interaction, 64u);
    EXPECT_THROW(build_config("huge", {}), ConfigError);
}

TEST(BuildConfig, ErrorsNameTheField) {
    try {
        build_config("desk", {{"train.batch_pairs", "lots"}});
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("train.batch_pairs"), std::string::npos);
    }
}

TEST(BuildConfig, SerializedConfigFileRoundTrips) {
    for (auto env : {EnvId::point_mass, EnvId::driving, EnvId::hockey}) {
        auto c = build_config("desk", {{"env.id", to_string(env)}, {"env.noise", "0.4"}, {"env.history", "3"}});
        const auto text = serialize_config(c);
        EXPECT_EQ(build_config("paper", config_file_overrides(text)), c);
        EXPECT_EQ(serialize_config(build_config("paper", config_file_overrides(text))), text);
    }
}

TEST(MeanSe, MatchesIndependentFormula) {
    const std::vector<double> xs{-1.5, -2.25, -0.75, -3.0};
    double s = 0, s2 = 0;
    for (double x : xs) s += x, s2 += x * x;
    const double n = 4, m = s / n;
    const double var = (s2 - n * m * m) / (n - 1);
    const auto r = mean_se(xs);
    EXPECT_NEAR(r.mean, m, 1e-15);
    EXPECT_NEAR(r.se, std::sqrt(var / n), 1e-15);
    EXPECT_TRUE(std::isnan(mean_se({2.0}).se));
    EXPECT_EQ(mean_se({2.0}).mean, 2.0);
    EXPECT_TRUE(std::isnan(mean_se({}).mean));
}

TEST(Analysis, FinalRowsUseInteractionIndex) {
    std::vector<MetricsRow> rows(10);
    for (std::size_t i = 0; i < 10; ++i) rows[i].interaction = i, rows[i].mean_step_reward = static_cast<double>(i);
    EXPECT_DOUBLE_EQ(final_mean_step_reward(rows, 4), (6 + 7 + 8 + 9) / 4.0);
    EXPECT_DOUBLE_EQ(final_mean_step_reward(rows, 100), 4.5);
    const auto avg = trailing_average({1, 2, 3, 4, 5}, 2);
    EXPECT_EQ(avg, (std::vector<double>{1, 1.5, 2.5, 3.5, 4.5}));
}

TEST(Analysis, AngleMassAndOccupancy) {
    std::vector<MetricsRow> rows(4);
    const double g[] = {0.1, 6.2, 3.0, 0.5};
    for (std::size_t i = 0; i < 4; ++i) rows[i].interaction = i, rows[i].ground_strategy = g[i];
    EXPECT_DOUBLE_EQ(final_angle_mass(rows, 4, 0.0, 0.6), 0.75);
    for (std::size_t i = 0; i < 4; ++i) rows[i].ground_strategy = static_cast<double>(i % 3);
    const auto occ = final_occupancy(rows, 4, EnvId::hockey);
    EXPECT_EQ(occ, (std::vector<double>{0.5, 0.25, 0.25}));
}

TEST(Suite, ParsesSectionsAndRejectsUnknownOnes) {
    const auto s = parse_suite(
        "[suite]\nname = n\nseeds = 0, 1 2\nworkers = 2\nmetric_window = 50\ncondition_label = sigma\n"
        "[base]\nenv.id = point_mass\n[method:lili]\nrun.algorithm = lili\n[method:sac]\nrun.algorithm = sac\n"
        "[condition:0.2]\nenv.noise = 0.2\n[condition:0.4]\nenv.noise = 0.4\n");
    EXPECT_EQ(s.seeds, (std::vector<std::uint64_t>{0, 1, 2}));
    EXPECT_EQ(s.workers, 2u);
    EXPECT_EQ(s.methods.size(), 2u);
    EXPECT_EQ(s.conditions.size(), 2u);
    const auto runs = expand_suite(s, "/r");
    ASSERT_EQ(runs.size(), 12u);
    std::set<std::string> dirs;
    for (const auto& r : runs) dirs.insert(r.dir.string());
    EXPECT_EQ(dirs.size(), runs.size());
    EXPECT_EQ(runs[0].config.env.noise_sigma, 0.2);
    EXPECT_EQ(runs[3].config.algorithm, Algorithm::sac);
    EXPECT_EQ(runs[4].config.seed, 1u);
    EXPECT_THROW(parse_suite("[method:a]\n[bogus]\nx = 1\n"), ConfigError);
    EXPECT_THROW(parse_suite("[suite]\nname = x\n"), ConfigError);
    EXPECT_THROW(parse_suite("[suite]\nseeds = a\n[method:a]\n"), ConfigError);
    EXPECT_THROW(expand_suite(parse_suite("[method:a]\nsac.gamma = 2\n"), "/r"), ConfigError);
}

TEST(Suite, ShippedSuiteFilesExpand) {
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(fs::path(LILI_SOURCE_DIR) / "suites")) {
        const auto s = parse_suite(read_text(e.path()));
        const auto runs = expand_suite(s, "/r");
        EXPECT_EQ(runs.size(), s.seeds.size() * s.methods.size() * s.conditions.size()) << e.path();
        ++files;
    }
    EXPECT_GE(files, 2u);
}

TEST(Suite, AggregatesFromRawMetricsAndMarksFailures) {
    const auto root = scratch_dir("suite");
    const auto spec = parse_suite("[suite]\nname = agg\nseeds = 0 1\nmetric_window = 5\n" + tiny_base() +
                                  "[method:sac]\nrun.algorithm = sac\n[method:lili]\nrun.algorithm = lili\n"
                                  "[condition:ok]\n[condition:bad]\ntrain.lr_critic = 1e300\n");
    const auto res = run_suite(spec, root);
    EXPECT_TRUE(fs::exists(root / "agg" / "suite.json"));
    EXPECT_EQ(res.failures(), 4u);
    write_text(root / "results.csv", suite_table_csv(res));
    const auto table = read_csv(root / "results.csv");
    ASSERT_EQ(table.size(), 5u);
    for (std::size_t row = 1; row < table.size(); ++row) {
        const auto& cells = table[row];
        if (cells[0] == "bad") {
            EXPECT_EQ(cells[5], "2");
            continue;
        }
        std::vector<double> xs;
        for (int seed : {0, 1}) {
            const auto rows = read_csv(root / "agg" / cells[0] / cells[1] / ("seed" + std::to_string(seed)) / "metrics.csv");
            double s = 0.0;
            for (std::size_t k = rows.size() - 5; k < rows.size(); ++k) s += std::stod(rows[k][1]);
            xs.push_back(s / 5.0);
        }
        const double m = (xs[0] + xs[1]) / 2.0;
        const double se = std::abs(xs[0] - xs[1]) / 2.0;
        EXPECT_NEAR(std::stod(cells[3]), m, 1e-12);
        EXPECT_NEAR(std::stod(cells[4]), se, 1e-12);
        EXPECT_EQ(cells[2], "2");
    }
    const auto text = suite_table_text(spec, res);
    EXPECT_NE(text.find("failed"), std::string::npos);
    EXPECT_NE(text.find("+-"), std::string::npos);
    fs::remove_all(root);
}

TEST(Suite, SingleSeedHasNoStandardErrorAndCompletedRunsAreReused) {
    const auto root = scratch_dir("single");
    const auto spec = parse_suite("[suite]\nname = one\nseeds = 3\n" + tiny_base() + "[method:sac]\nrun.algorithm = sac\n");
    const auto first = run_suite(spec, root);
    ASSERT_EQ(first.cells.size(), 1u);
    EXPECT_TRUE(std::isnan(first.cells[0].stat.se));
    EXPECT_EQ(suite_table_text(spec, first).find("+-  "), std::string::npos);
    EXPECT_NE(suite_table_csv(first).find(",nan,"), std::string::npos);
    const auto metrics = root / "one" / "default" / "sac" / "seed3" / "metrics.csv";
    const auto stamp = fs::last_write_time(metrics);
    const auto second = run_suite(spec, root);
    EXPECT_EQ(fs::last_write_time(metrics), stamp);
    EXPECT_EQ(second.cells[0].stat.mean, first.cells[0].stat.mean);
    fs::remove_all(root);
}

TEST(RunDir, ManifestRecordsSeedStatusAndOutputRoot) {
    const auto dir = scratch_dir("manifest");
    const auto cfg = build_config("desk", tiny({{"run.seed", "5"}, {"run.algorithm", "sac"}}));
    EXPECT_FALSE(run_is_complete(dir, cfg));
    run_training(cfg, dir);
    const auto m = load_manifest(dir);
    EXPECT_EQ(m["status"], "completed");
    EXPECT_EQ(m["seed"], 5);
    EXPECT_EQ(m["interactions_completed"], 12);
    EXPECT_EQ(m["output_root_env"], kOutputRootEnv);
    EXPECT_EQ(m["config"]["run.seed"], "5");
    EXPECT_TRUE(run_is_complete(dir, cfg));
    auto other = cfg;
    other.seed = 6;
    EXPECT_FALSE(run_is_complete(dir, other));
    EXPECT_EQ(load_run_config(dir), cfg);
    fs::remove_all(dir);
}

TEST(RunDir, DivergenceIsRecorded) {
    const auto dir = scratch_dir("diverge");
    const auto cfg = build_config("desk", tiny({{"train.lr_critic", "1e300"}, {"run.algorithm", "sac"}}));
    EXPECT_THROW(run_training(cfg, dir), DivergenceError);
    EXPECT_EQ(load_manifest(dir)["status"], "diverged");
    EXPECT_FALSE(run_is_complete(dir, cfg));
    fs::remove_all(dir);
}

class Report : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        root_ = scratch_dir("report");
        for (auto algo : {"lili", "lili_no_influence"})
            run_training(build_config("desk", tiny({{"run.algorithm", algo}, {"run.interactions", "130"}, {"train.updates_per_interaction", "1"}})),
                         root_ / ("pm_" + std::string(algo)));
        run_training(build_config("desk", tiny({{"env.id", "hockey"}, {"run.algorithm", "sac"}})), root_ / "hockey");
    }
    static void TearDownTestSuite() { fs::remove_all(root_); }
    static inline fs::path root_;
};

TEST_F(Report, LearningCurveTracesToMetricsRows) {
    const auto out = root_ / "out_pm";
    write_report({root_ / "pm_lili", root_ / "pm_lili_no_influence"}, out);
    const auto curve = read_csv(out / "learning_curve.csv");
    const auto raw = read_csv(root_ / "pm_lili" / "metrics.csv");
    ASSERT_EQ(curve.size(), raw.size());
    EXPECT_EQ(curve[0][1], "lili_s0");
    EXPECT_EQ(curve[0][3], "lili_no_influence_s0");
    for (std::size_t i = 1; i < raw.size(); ++i) {
        EXPECT_EQ(curve[i][0], raw[i][0]);
        EXPECT_EQ(curve[i][1], raw[i][1]);
        double s = 0.0;
        const std::size_t lo = i > kSmoothingWindow ? i - kSmoothingWindow + 1 : 1;
        for (std::size_t k = lo; k <= i; ++k) s += std::stod(raw[k][1]);
        EXPECT_NEAR(std::stod(curve[i][2]), s / static_cast<double>(i - lo + 1), 1e-12);
    }
    std::ifstream in(out / "learning_curve.csv");
    std::string header;
    std::getline(in, header);
    EXPECT_NE(header.find("trailing moving average over 100"), std::string::npos);
    EXPECT_TRUE(fs::exists(out / "learning_curve.svg"));
    EXPECT_TRUE(fs::exists(out / "summary.csv"));
}

TEST_F(Report, AngleHistogramCountsFinalTargets) {
    const auto out = root_ / "out_hist";
    write_report({root_ / "pm_lili"}, out);
    const auto hist = read_csv(out / "angle_histogram.csv");
    ASSERT_EQ(hist.size(), kHistogramBins + 1);
    const auto rows = read_metrics_csv(root_ / "pm_lili" / "metrics.csv");
    std::vector<int> count(kHistogramBins, 0);
    for (const auto& r : rows) {
        double d = std::remainder(r.ground_strategy, 2 * std::numbers::pi);
        int b = static_cast<int>(std::floor((d + std::numbers::pi) / (2 * std::numbers::pi / kHistogramBins)));
        ++count[static_cast<std::size_t>(std::clamp(b, 0, static_cast<int>(kHistogramBins) - 1))];
    }
    double total = 0.0;
    for (std::size_t b = 0; b < kHistogramBins; ++b) {
        EXPECT_NEAR(std::stod(hist[b + 1][2]), count[b] / static_cast<double>(rows.size()), 1e-12) << b;
        total += std::stod(hist[b + 1][2]);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_FALSE(fs::exists(out / "occupancy.csv"));
}

TEST_F(Report, HockeyOccupancySumsToOne) {
    const auto out = root_ / "out_hockey";
    write_report({root_ / "hockey"}, out);
    const auto occ = read_csv(out / "occupancy.csv");
    ASSERT_EQ(occ.size(), 4u);
    EXPECT_EQ(occ[1][0], "left");
    const double total = std::stod(occ[1][1]) + std::stod(occ[2][1]) + std::stod(occ[3][1]);
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_TRUE(fs::exists(out / "occupancy.svg"));
}

TEST_F(Report, RefusesMismatchedEnvironmentsWithoutWriting) {
    const auto out = root_ / "out_mixed";
    try {
        write_report({root_ / "pm_lili", root_ / "hockey"}, out);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("different environments"), std::string::npos);
    }
    EXPECT_FALSE(fs::exists(out));
}

TEST_F(Report, EmptyRunDirectoryIsAnErrorWithoutPartialFiles) {
    const auto empty = root_ / "empty";
    fs::create_directories(empty);
    const auto out = root_ / "out_empty";
    EXPECT_THROW(write_report({empty}, out), ConfigError);
    EXPECT_THROW(write_report({}, out), ConfigError);
    EXPECT_FALSE(fs::exists(out));
}

TEST(Binary, ExitCodes) {
    const auto root = scratch_dir("binary");
    fs::create_directories(root);
    EXPECT_EQ(run_cli("--help"), 0);
    EXPECT_EQ(run_cli("train --help"), 0);
    EXPECT_EQ(run_cli(""), 1);
    EXPECT_EQ(run_cli("train --set sac.nope=1"), 1);
    EXPECT_EQ(run_cli("train --env moon"), 1);
    std::string flags = "--quiet";
    for (const auto& [k, v] : kTiny) flags += " --" + k + " " + v;
    EXPECT_EQ(run_cli("train --env driving --algo sac --seed 2 " + flags + " --out " + (root / "ok").string()), 0);
    EXPECT_EQ(load_manifest(root / "ok")["status"], "completed");
    EXPECT_EQ(load_run_config(root / "ok").seed, 2u);
    EXPECT_EQ(run_cli("train --algo sac --set train.lr_critic=1e300 " + flags + " --out " + (root / "bad").string()), 2);
    EXPECT_EQ(run_cli("eval " + (root / "ok").string() + " --episodes 5 --out " + (root / "eval.json").string()), 0);
    const auto ev = json::parse(read_text(root / "eval.json"));
    EXPECT_EQ(ev["episodes"], 5);
    EXPECT_EQ(ev["env"], "driving");
    write_text(root / "suite.ini", "[suite]\nname = s\n" + tiny_base() +
                                       "[method:sac]\nrun.algorithm = sac\n[condition:fine]\n[condition:broken]\n"
                                       "train.lr_critic = 1e300\n");
    EXPECT_EQ(run_cli("sweep " + (root / "suite.ini").string() + " --out " + root.string()), 3);
    EXPECT_TRUE(fs::exists(root / "s" / "results.csv"));
    EXPECT_TRUE(fs::exists(root / "s" / "results.txt"));
    EXPECT_EQ(run_cli("report " + (root / "ok").string() + " --out " + (root / "rep").string()), 0);
    EXPECT_EQ(run_cli("report " + (root / "nothing").string() + " --out " + (root / "rep2").string()), 1);
    EXPECT_FALSE(fs::exists(root / "rep2"));
    fs::remove_all(root);
}

TEST(Binary, OutputRootEnvironmentVariableIsHonoured) {
    const auto root = scratch_dir("envroot");
    std::string flags = "--quiet";
    for (const auto& [k, v] : kTiny) flags += " --" + k + " " + v;
    const std::string cmd = "LILI_OUTPUT_ROOT=" + root.string() + " " + LILI_CLI_PATH + " train --algo sac --seed 4 " +
                            flags + " >/dev/null 2>&1";
    ASSERT_EQ(std::system(cmd.c_str()), 0);
    const auto dir = root / "point_mass_sac_s4";
    ASSERT_TRUE(fs::exists(dir / "manifest.json"));
    EXPECT_EQ(load_manifest(dir)["output_root"], root.string());
    fs::remove_all(root);
}
