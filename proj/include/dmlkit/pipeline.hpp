#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dmlkit/blp.hpp"
#include "dmlkit/contest.hpp"
#include "dmlkit/dml.hpp"
#include "dmlkit/kernel_cate.hpp"
#include "dmlkit/sorted_clan.hpp"

namespace dmlkit {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kConfigVersion = 1;

struct CateCurveSpec {
    std::vector<std::string> z_names;  // 1 or 2
};

struct GroupedCurveSpec {
    std::string z_name;
    std::string group_name;
};

/// Full run configuration, parsed from a flat `key = value` file (versioned;
/// unknown keys are hard errors) plus command-line overrides.
struct RunConfig {
    int config_version = kConfigVersion;
    std::uint64_t seed = 0;
    bool seed_set = false;
    unsigned threads = 0;
    std::string out_dir;
    double level = 0.90;

    SimConfig sim;

    std::string data_path;
    std::string colspec_path;
    std::string scores_path;  // optional: reuse cached scores

    LearnerConfig learner;
    bool tune = true;
    int tune_trees = 200;
    int n_folds = 2;
    bool cluster_folds = false;
    TrimBounds trim;
    SeType se_type = SeType::heteroscedasticity_robust;

    std::string gate_columns = "ate|all";
    std::vector<CateCurveSpec> cate_curves;
    std::optional<GroupedCurveSpec> cate_grouped;
    KernelType cate_kernel = KernelType::gaussian;
    int cate_grid_points = 50;
    int cate_cv_folds = 5;
    double cate_undersmooth = 0.9;
    std::vector<double> cate_bandwidths;  // explicit CV grid; empty = default
    double cate_ess_floor = 10.0;

    bool sorted_enable = true;
    int sorted_b = 999;
    int sorted_grid_points = 99;

    bool clan_enable = true;
    double clan_q = 0.10;
    int clan_b = 999;
    ClanBootstrapMode clan_mode = ClanBootstrapMode::fixed_iates;

    int support_bins = 20;

    static RunConfig from_file(const std::string& path,
                               const std::vector<std::string>& overrides = {});
    static RunConfig from_string(const std::string& text,
                                 const std::vector<std::string>& overrides = {});
};

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

/// Run metadata: hashes of inputs and outputs, module warnings, timings.
/// Everything except the timings is a pure function of (config, data).
struct RunManifest {
    std::string command;
    std::string config_hash;
    std::map<std::string, std::string> input_hashes;
    std::map<std::string, std::string> output_hashes;
    std::vector<std::string> warnings;
    std::vector<StageTiming> timings;
    std::uint64_t seed = 0;

    std::string to_json() const;
    void write(const std::string& out_dir) const;
};

/// simulate: data.csv + truth.csv + colspec.txt + manifest.json.
RunManifest cmd_simulate(const RunConfig& config);
/// estimate: scores.csv, ate.csv, gate.csv, cate_*.csv, sorted.csv, clan.csv,
/// support.csv, manifest.json. Stages honor a cached scores file.
RunManifest cmd_estimate(const RunConfig& config);
/// report: consolidates an estimate run directory into report/summary.txt;
/// missing stage outputs are marked absent, manifest warnings repeated.
RunManifest cmd_report(const std::string& run_dir);
RunManifest cmd_descriptives(const RunConfig& config);
/// support: recompute the overlap report from cached scores + data.
RunManifest cmd_support(const RunConfig& config);

}  // namespace dmlkit
