#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "dmlkit/csv.hpp"
#include "dmlkit/errors.hpp"
#include "dmlkit/pipeline.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string seed, out_dir, threads, level;
    std::string data, colspec, scores;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("-c,--config", args.config_path, "flat key-value config file");
    cmd->add_option("--set", args.overrides, "override any config key (key=value)");
    cmd->add_option("--seed", args.seed, "RNG seed (mandatory here or in the config)");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--threads", args.threads, "worker threads (0 = hardware)");
    cmd->add_option("--level", args.level, "confidence level (default 0.90)");
    cmd->add_option("--data", args.data, "input data CSV");
    cmd->add_option("--colspec", args.colspec, "column spec file");
    cmd->add_option("--scores", args.scores, "cached scores CSV to reuse");
}

dmlkit::RunConfig build_config(const CommonArgs& args) {
    std::string base = "config_version = 1\n";
    if (!args.config_path.empty()) base = dmlkit::read_text_file(args.config_path);
    std::vector<std::string> overrides = args.overrides;
    auto push = [&](const char* key, const std::string& value) {
        if (!value.empty()) overrides.push_back(std::string(key) + "=" + value);
    };
    push("seed", args.seed);
    push("out_dir", args.out_dir);
    push("threads", args.threads);
    push("level", args.level);
    push("data", args.data);
    push("colspec", args.colspec);
    push("scores", args.scores);
    return dmlkit::RunConfig::from_string(base, overrides);
}

void print_warnings(const dmlkit::RunManifest& manifest) {
    for (const auto& w : manifest.warnings) std::cerr << "warning: " << w << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"double machine learning pipeline for contest data"};
    app.require_subcommand(1);

    CommonArgs sim_args, est_args, desc_args, sup_args;
    std::string report_dir;

    CLI::App* sim = app.add_subcommand("simulate", "generate synthetic contest data with truth");
    add_common(sim, sim_args);
    CLI::App* est = app.add_subcommand("estimate", "run the estimation pipeline");
    add_common(est, est_args);
    CLI::App* desc = app.add_subcommand("descriptives", "descriptive and balance statistics");
    add_common(desc, desc_args);
    CLI::App* sup = app.add_subcommand("support", "common-support report from cached scores");
    add_common(sup, sup_args);
    CLI::App* rep = app.add_subcommand("report", "consolidate a run directory");
    rep->add_option("--run", report_dir, "estimate run directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        dmlkit::RunManifest manifest;
        if (sim->parsed()) manifest = dmlkit::cmd_simulate(build_config(sim_args));
        else if (est->parsed()) manifest = dmlkit::cmd_estimate(build_config(est_args));
        else if (desc->parsed()) manifest = dmlkit::cmd_descriptives(build_config(desc_args));
        else if (sup->parsed()) manifest = dmlkit::cmd_support(build_config(sup_args));
        else if (rep->parsed()) manifest = dmlkit::cmd_report(report_dir);
        print_warnings(manifest);
    } catch (const dmlkit::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const dmlkit::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
