#include "dmlkit/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dmlkit/csv.hpp"
#include "dmlkit/errors.hpp"
#include "dmlkit/parallel.hpp"
#include "dmlkit/rng.hpp"

namespace fs = std::filesystem;

namespace dmlkit {

namespace {

// ---- flat key-value config ---------------------------------------------------

std::string strip(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(strip(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(strip(cur));
    return out;
}

class KeyValues {
public:
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    static KeyValues parse(const std::string& text, const std::vector<std::string>& overrides) {
        KeyValues kv;
        std::istringstream in(text);
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const std::string stripped = strip(line);
            if (stripped.empty() || stripped[0] == '#') continue;
            const std::size_t eq = stripped.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": expected `key = value`");
            kv.set(strip(stripped.substr(0, eq)), strip(stripped.substr(eq + 1)));
        }
        for (const auto& ov : overrides) {
            const std::size_t eq = ov.find('=');
            if (eq == std::string::npos)
                throw ConfigError("override must be key=value: " + ov);
            kv.set(strip(ov.substr(0, eq)), strip(ov.substr(eq + 1)));
        }
        return kv;
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string take_string(const std::string& key, const std::string& fallback) {
        consumed_.insert(key);
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double take_double(const std::string& key, double fallback) {
        const std::string s = take_string(key, "");
        if (s.empty()) return fallback;
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size())
            throw ConfigError("config key " + key + ": not a number: " + s);
        return v;
    }

    std::int64_t take_int(const std::string& key, std::int64_t fallback) {
        const std::string s = take_string(key, "");
        if (s.empty()) return fallback;
        std::int64_t v = 0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size())
            throw ConfigError("config key " + key + ": not an integer: " + s);
        return v;
    }

    bool take_bool(const std::string& key, bool fallback) {
        const std::string s = take_string(key, "");
        if (s.empty()) return fallback;
        if (s == "true" || s == "1") return true;
        if (s == "false" || s == "0") return false;
        throw ConfigError("config key " + key + ": expected true/false: " + s);
    }

    void finish() const {
        for (const auto& [key, value] : values_)
            if (consumed_.count(key) == 0)
                throw ConfigError("unknown config key: " + key);
    }

    /// Canonical serialization of the statistical configuration (threads is an
    /// execution detail and excluded), hashed into the manifest.
    std::string canonical() const {
        std::ostringstream out;
        for (const auto& [key, value] : values_)
            if (key != "threads") out << key << "=" << value << "\n";
        return out.str();
    }

private:
    std::map<std::string, std::string> values_;
    std::set<std::string> consumed_;
};

std::string g_last_config_canonical;  // set by RunConfig parsing, used for the manifest hash

}  // namespace

RunConfig RunConfig::from_string(const std::string& text,
                                 const std::vector<std::string>& overrides) {
    KeyValues kv = KeyValues::parse(text, overrides);
    RunConfig c;

    const auto version = kv.take_int("config_version", -1);
    if (version != kConfigVersion)
        throw ConfigError("config_version must be " + std::to_string(kConfigVersion));
    c.seed_set = kv.has("seed");
    if (!c.seed_set) throw ConfigError("seed is mandatory");
    c.seed = static_cast<std::uint64_t>(kv.take_int("seed", 0));
    c.threads = static_cast<unsigned>(kv.take_int("threads", 0));
    c.out_dir = kv.take_string("out_dir", "");
    c.level = kv.take_double("level", 0.90);
    if (!(c.level > 0.0 && c.level < 1.0)) throw ConfigError("level must lie in (0,1)");

    const std::string kind = kv.take_string("sim.kind", "contest");
    if (kind == "contest") c.sim.kind = DgpKind::contest;
    else if (kind == "generic-linear") c.sim.kind = DgpKind::generic_linear;
    else throw ConfigError("sim.kind must be contest or generic-linear");
    c.sim.n_matches = static_cast<std::size_t>(kv.take_int("sim.n", 0));
    c.sim.ability_sd = kv.take_double("sim.ability_sd", c.sim.ability_sd);
    c.sim.player_pool = static_cast<std::size_t>(kv.take_int("sim.player_pool", 0));
    c.sim.delta_base = kv.take_double("sim.delta_base", c.sim.delta_base);
    c.sim.delta_home_shift = kv.take_double("sim.delta_home_shift", c.sim.delta_home_shift);
    c.sim.pi_slope = kv.take_double("sim.pi_slope", c.sim.pi_slope);
    c.sim.pi_min = kv.take_double("sim.pi_min", c.sim.pi_min);
    c.sim.pi_max = kv.take_double("sim.pi_max", c.sim.pi_max);
    c.sim.home_rate = kv.take_double("sim.home_rate", c.sim.home_rate);
    c.sim.noise_covariates =
        static_cast<int>(kv.take_int("sim.noise_covariates", c.sim.noise_covariates));
    c.sim.legs = static_cast<int>(kv.take_int("sim.legs", c.sim.legs));
    const std::string pattern = kv.take_string("sim.leg_pattern", "alternate");
    if (pattern == "alternate") c.sim.leg_pattern = LegPattern::alternate;
    else if (pattern == "abba") c.sim.leg_pattern = LegPattern::abba;
    else throw ConfigError("sim.leg_pattern must be alternate or abba");
    c.sim.catchup = kv.take_bool("sim.catchup", false);
    c.sim.x_dim = static_cast<int>(kv.take_int("sim.x_dim", c.sim.x_dim));
    c.sim.base_intercept = kv.take_double("sim.base_intercept", c.sim.base_intercept);
    c.sim.base_slope = kv.take_double("sim.base_slope", c.sim.base_slope);
    c.sim.tau_intercept = kv.take_double("sim.tau_intercept", c.sim.tau_intercept);
    c.sim.tau_slope = kv.take_double("sim.tau_slope", c.sim.tau_slope);
    c.sim.seed = c.seed;

    c.data_path = kv.take_string("data", "");
    c.colspec_path = kv.take_string("colspec", "");
    c.scores_path = kv.take_string("scores", "");

    c.learner.params.n_trees = static_cast<int>(kv.take_int("nuisance.n_trees", 1000));
    c.learner.params.subsample_fraction =
        kv.take_double("nuisance.subsample_fraction", 0.5);
    c.learner.params.features_per_split = static_cast<int>(kv.take_int("nuisance.mtry", 0));
    c.learner.params.min_leaf = static_cast<int>(kv.take_int("nuisance.min_leaf", 2));
    c.tune = kv.take_bool("nuisance.tune", true);
    c.learner.tune_folds = static_cast<int>(kv.take_int("nuisance.tune_folds", 5));
    c.tune_trees = static_cast<int>(kv.take_int("nuisance.tune_trees", 200));
    if (c.tune) {
        const std::string grid = kv.take_string("nuisance.tune_grid", "2,5,10,20");
        for (const auto& tok : split(grid, ',')) {
            ForestParams p = c.learner.params;
            p.n_trees = c.tune_trees;
            auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), p.min_leaf);
            if (ec != std::errc() || ptr != tok.data() + tok.size())
                throw ConfigError("nuisance.tune_grid: bad min_leaf: " + tok);
            c.learner.tuning_grid.push_back(p);
        }
    } else {
        kv.take_string("nuisance.tune_grid", "");
    }
    c.n_folds = static_cast<int>(kv.take_int("nuisance.folds", 2));
    c.cluster_folds = kv.take_bool("nuisance.cluster_folds", false);
    c.trim.low = kv.take_double("trim.low", 0.01);
    c.trim.high = kv.take_double("trim.high", 0.99);

    const std::string se = kv.take_string("se", "robust");
    if (se == "robust") c.se_type = SeType::heteroscedasticity_robust;
    else if (se == "cluster") c.se_type = SeType::cluster_robust;
    else throw ConfigError("se must be robust or cluster");

    c.gate_columns = kv.take_string("gate.columns", "ate|all");
    const std::string curves = kv.take_string("cate.curves", "");
    if (!curves.empty()) {
        for (const auto& entry : split(curves, '|')) {
            CateCurveSpec spec;
            for (const auto& name : split(entry, ','))
                if (!name.empty()) spec.z_names.push_back(name);
            if (spec.z_names.empty() || spec.z_names.size() > 2)
                throw ConfigError("cate.curves entries need 1 or 2 columns: " + entry);
            c.cate_curves.push_back(std::move(spec));
        }
    }
    const std::string grouped = kv.take_string("cate.grouped", "");
    if (!grouped.empty()) {
        const auto pos = grouped.find(" by ");
        if (pos == std::string::npos)
            throw ConfigError("cate.grouped must be `zcolumn by groupcolumn`");
        c.cate_grouped = GroupedCurveSpec{strip(grouped.substr(0, pos)),
                                          strip(grouped.substr(pos + 4))};
    }
    const std::string kern = kv.take_string("cate.kernel", "gaussian");
    if (kern == "gaussian") c.cate_kernel = KernelType::gaussian;
    else if (kern == "epanechnikov") c.cate_kernel = KernelType::epanechnikov;
    else throw ConfigError("cate.kernel must be gaussian or epanechnikov");
    c.cate_grid_points = static_cast<int>(kv.take_int("cate.grid_points", 50));
    c.cate_cv_folds = static_cast<int>(kv.take_int("cate.cv_folds", 5));
    c.cate_undersmooth = kv.take_double("cate.undersmooth", 0.9);
    const std::string bw = kv.take_string("cate.bandwidths", "");
    if (!bw.empty()) {
        for (const auto& tok : split(bw, ',')) {
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (ec != std::errc() || ptr != tok.data() + tok.size() || !(v > 0.0))
                throw ConfigError("cate.bandwidths: bad bandwidth: " + tok);
            c.cate_bandwidths.push_back(v);
        }
    }
    c.cate_ess_floor = kv.take_double("cate.ess_floor", 10.0);

    c.sorted_enable = kv.take_bool("sorted.enable", true);
    c.sorted_b = static_cast<int>(kv.take_int("sorted.b", 999));
    c.sorted_grid_points = static_cast<int>(kv.take_int("sorted.grid_points", 99));

    c.clan_enable = kv.take_bool("clan.enable", true);
    c.clan_q = kv.take_double("clan.q", 0.10);
    c.clan_b = static_cast<int>(kv.take_int("clan.b", 999));
    const std::string mode = kv.take_string("clan.mode", "fixed");
    if (mode == "fixed") c.clan_mode = ClanBootstrapMode::fixed_iates;
    else if (mode == "reestimate") c.clan_mode = ClanBootstrapMode::reestimate;
    else throw ConfigError("clan.mode must be fixed or reestimate");

    c.support_bins = static_cast<int>(kv.take_int("support.bins", 20));

    kv.finish();
    g_last_config_canonical = kv.canonical();
    return c;
}

RunConfig RunConfig::from_file(const std::string& path,
                               const std::vector<std::string>& overrides) {
    return from_string(read_text_file(path), overrides);
}

// ---- manifest ----------------------------------------------------------------

std::string RunManifest::to_json() const {
    nlohmann::ordered_json j;
    j["tool"] = "dmlkit";
    j["version"] = kToolVersion;
    j["command"] = command;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["inputs"] = input_hashes;
    j["outputs"] = output_hashes;
    j["warnings"] = warnings;
    return j.dump(2) + "\n";
}

void RunManifest::write(const std::string& out_dir) const {
    write_text_file(out_dir + "/manifest.json", to_json());
    // Timings are the one run-dependent output; they live outside the
    // deterministic manifest.
    std::ostringstream t;
    t << "stage,seconds\n";
    for (const auto& st : timings) t << st.stage << "," << format_short(st.seconds) << "\n";
    write_text_file(out_dir + "/timings.txt", t.str());
}

namespace {

class StageClock {
public:
    explicit StageClock(RunManifest& manifest) : manifest_(manifest) {}

    template <typename Fn>
    auto run(const std::string& stage, Fn&& fn) {
        const auto start = std::chrono::steady_clock::now();
        if constexpr (std::is_void_v<decltype(fn())>) {
            fn();
            record(stage, start);
        } else {
            auto result = fn();
            record(stage, start);
            return result;
        }
    }

private:
    void record(const std::string& stage,
                std::chrono::steady_clock::time_point start) {
        const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
        manifest_.timings.push_back({stage, dt.count()});
    }

    RunManifest& manifest_;
};

void ensure_out_dir(const RunConfig& config) {
    if (config.out_dir.empty()) throw ConfigError("out_dir is mandatory");
    fs::create_directories(config.out_dir);
}

void emit(RunManifest& manifest, const std::string& out_dir, const std::string& name,
          const std::string& content) {
    write_text_file(out_dir + "/" + name, content);
    manifest.output_hashes[name] = hash_hex(hash_bytes(content.data(), content.size()));
}

void note_input(RunManifest& manifest, const std::string& path) {
    const std::string content = read_text_file(path);
    manifest.input_hashes[fs::path(path).filename().string()] =
        hash_hex(hash_bytes(content.data(), content.size()));
}

std::string ate_csv(const EffectEstimate& e, const std::string& se_type) {
    CsvWriter w({"estimate", "std_error", "t", "p", "ci_low", "ci_high", "level", "n",
                 "se_type"});
    w.add_row({format_full(e.estimate), format_full(e.std_error), format_short(e.t_value),
               format_short(e.p_value), format_full(e.ci_low), format_full(e.ci_high),
               format_short(e.level), std::to_string(e.n), se_type});
    return w.str();
}

std::vector<GateSpec> parse_gate_columns(const std::string& text, const Dataset& data) {
    std::vector<GateSpec> specs;
    for (const auto& entry : split(text, '|')) {
        if (entry.empty()) continue;
        GateSpec spec;
        spec.name = entry;
        if (entry == "ate") {
            // constant-only column
        } else if (entry == "all") {
            for (const auto& [name, idx] : data.z_index()) spec.z_names.push_back(name);
        } else {
            for (const auto& name : split(entry, ','))
                if (!name.empty()) spec.z_names.push_back(name);
        }
        specs.push_back(std::move(spec));
    }
    if (specs.empty()) throw ConfigError("gate.columns is empty");
    return specs;
}

Matrix z_matrix(const Dataset& data, const std::vector<std::string>& names) {
    Matrix z(data.n(), names.size());
    for (std::size_t j = 0; j < names.size(); ++j) {
        const auto col = data.feature_column(names[j]);
        for (std::size_t i = 0; i < data.n(); ++i) z(i, j) = col[i];
    }
    return z;
}

}  // namespace

RunManifest cmd_simulate(const RunConfig& config) {
    set_thread_count(config.threads);
    ensure_out_dir(config);
    RunManifest manifest;
    manifest.command = "simulate";
    manifest.seed = config.seed;
    manifest.config_hash =
        hash_hex(hash_bytes(g_last_config_canonical.data(), g_last_config_canonical.size()));
    StageClock clock(manifest);

    const SimulatedDataset sim = clock.run("simulate", [&] { return simulate(config.sim); });

    clock.run("write", [&] {
        const Dataset& data = sim.data;
        std::vector<std::string> header;
        for (const auto& col : data.schema().columns) header.push_back(col.name);
        CsvWriter w(header);
        for (std::size_t i = 0; i < data.n(); ++i) {
            const ObservationRecord rec = data.record(i);
            std::vector<std::string> row;
            std::size_t xk = 0;
            for (const auto& col : data.schema().columns) {
                switch (col.role) {
                    case ColumnRole::outcome: row.push_back(format_short(rec.y)); break;
                    case ColumnRole::treatment: row.push_back(std::to_string(rec.d)); break;
                    case ColumnRole::cluster: row.push_back(std::to_string(rec.cluster_id)); break;
                    case ColumnRole::ignore: row.push_back(""); break;
                    default: row.push_back(format_full(rec.x[xk++])); break;
                }
            }
            w.add_row(std::move(row));
        }
        emit(manifest, config.out_dir, "data.csv", w.str());
        emit(manifest, config.out_dir, "truth.csv", truth_to_csv(sim));
        emit(manifest, config.out_dir, "colspec.txt", sim.data.schema().to_string());
    });

    manifest.write(config.out_dir);
    return manifest;
}

RunManifest cmd_estimate(const RunConfig& config) {
    set_thread_count(config.threads);
    ensure_out_dir(config);
    if (config.data_path.empty() || config.colspec_path.empty())
        throw ConfigError("estimate needs data and colspec paths");

    RunManifest manifest;
    manifest.command = "estimate";
    manifest.seed = config.seed;
    manifest.config_hash =
        hash_hex(hash_bytes(g_last_config_canonical.data(), g_last_config_canonical.size()));
    StageClock clock(manifest);
    note_input(manifest, config.data_path);
    note_input(manifest, config.colspec_path);

    const Schema schema = Schema::from_file(config.colspec_path);
    const Dataset data = clock.run("load", [&] { return load_csv(config.data_path, schema); });
    for (const auto& note : data.provenance().notes) manifest.warnings.push_back(note);

    // Scores stage: reuse the cached file when provided, otherwise cross-fit.
    NuisanceFit nuisance;
    ScoreVector scores;
    if (!config.scores_path.empty()) {
        note_input(manifest, config.scores_path);
        ScoresFile cached = clock.run("scores(cached)", [&] {
            return read_scores_csv(config.scores_path);
        });
        if (cached.scores.n() != data.n())
            throw DataError("cached scores length does not match data");
        nuisance = std::move(cached.nuisance);
        scores = std::move(cached.scores);
        manifest.warnings.push_back("scores reused from " + config.scores_path +
                                    "; fold-exclusion audit unavailable");
        emit(manifest, config.out_dir, "scores.csv", scores_to_csv(nuisance, scores));
    } else {
        nuisance = clock.run("nuisances", [&] {
            return crossfit_nuisances(data, config.learner, config.n_folds, config.cluster_folds,
                                      config.seed, config.trim);
        });
        for (const auto& wmsg : nuisance.warnings) manifest.warnings.push_back(wmsg);
        std::string audit_detail;
        if (!audit_fold_exclusion(nuisance, &audit_detail))
            throw NumericError("cross-fitting audit failed: " + audit_detail);
        scores = clock.run("scores", [&] { return orthogonal_scores(data, nuisance); });
        emit(manifest, config.out_dir, "scores.csv", scores_to_csv(nuisance, scores));
    }

    // ATE.
    clock.run("ate", [&] {
        const EffectEstimate e = config.se_type == SeType::cluster_robust
                                     ? ate_clustered(scores, data.cluster_id(), config.level)
                                     : ate(scores, config.level);
        emit(manifest, config.out_dir, "ate.csv",
             ate_csv(e, config.se_type == SeType::cluster_robust ? "cluster" : "robust"));
    });

    // GATE / BLP tables.
    BlpOptions blp_options;
    blp_options.se_type = config.se_type;
    blp_options.level = config.level;
    clock.run("gate", [&] {
        const auto specs = parse_gate_columns(config.gate_columns, data);
        const auto fits = gate_table(scores, data, specs, blp_options);
        emit(manifest, config.out_dir, "gate.csv", gate_table_to_csv(specs, fits));
    });

    // Linear IATEs on the full heterogeneity design, shared by the sorted and
    // CLAN stages. Collinear columns are screened once up front.
    std::vector<std::string> iate_names;
    for (const auto& [name, idx] : data.z_index()) iate_names.push_back(name);
    Matrix iate_design = z_matrix(data, iate_names);
    {
        BlpOptions screen = blp_options;
        screen.drop_collinear = true;
        const BlpFit probe = blp_fit(scores, iate_design, iate_names, screen);
        if (!probe.dropped.empty()) {
            std::string msg = "collinear heterogeneity columns dropped from the IATE design:";
            for (const auto& name : probe.dropped) msg += " " + name;
            manifest.warnings.push_back(msg);
            std::vector<std::string> kept(probe.terms.begin() + 1, probe.terms.end());
            iate_design = z_matrix(data, kept);
            iate_names = kept;
        }
    }
    const IateFn iate_fn = [&](std::span<const double> weights) {
        const BlpFit fit = blp_fit(scores, iate_design, iate_names, blp_options, {}, weights);
        return blp_iates(fit, iate_design);
    };

    // Kernel CATE curves.
    clock.run("cate", [&] {
        std::vector<CateCurveSpec> curves = config.cate_curves;
        if (curves.empty() && !data.z_index().empty())
            curves.push_back(CateCurveSpec{{data.z_index().front().first}});
        for (const auto& spec : curves) {
            const Matrix z = z_matrix(data, spec.z_names);
            std::vector<std::vector<double>> h_grid;
            if (!config.cate_bandwidths.empty()) {
                for (double h : config.cate_bandwidths)
                    h_grid.push_back(std::vector<double>(z.cols, h));
            } else {
                h_grid = default_bandwidth_grid(z);
            }
            const std::vector<double> h_cv =
                cv_bandwidth(scores, z, config.cate_kernel, h_grid, config.cate_cv_folds,
                             derive_seed(config.seed, 0xca7e));
            KernelSpec ks;
            ks.kernel = config.cate_kernel;
            ks.bandwidth = h_cv;
            ks.undersmooth = config.cate_undersmooth;

            Matrix grid;
            if (z.cols == 1) {
                grid = make_eval_grid(z.column(0).data,
                                      static_cast<std::size_t>(config.cate_grid_points));
            } else {
                const auto side = static_cast<std::size_t>(
                    std::max(2, static_cast<int>(std::sqrt(config.cate_grid_points))));
                const Matrix g0 = make_eval_grid(z.column(0).data, side);
                const Matrix g1 = make_eval_grid(z.column(1).data, side);
                grid = Matrix(side * side, 2);
                for (std::size_t a = 0; a < side; ++a)
                    for (std::size_t b = 0; b < side; ++b) {
                        grid(a * side + b, 0) = g0(a, 0);
                        grid(a * side + b, 1) = g1(b, 0);
                    }
            }
            const CateCurve curve =
                kernel_cate(scores, z, ks, grid, config.level, config.cate_ess_floor);
            std::size_t unavailable = 0;
            for (bool ok : curve.available) unavailable += ok ? 0 : 1;
            std::string name = "cate_" + spec.z_names[0];
            if (spec.z_names.size() == 2) name += "_x_" + spec.z_names[1];
            if (unavailable > 0)
                manifest.warnings.push_back(name + ": " + std::to_string(unavailable) +
                                            " grid points below the ESS floor");
            emit(manifest, config.out_dir, name + ".csv", curve.to_csv(spec.z_names));
        }
        if (config.cate_grouped) {
            const auto& gc = *config.cate_grouped;
            const Matrix z = z_matrix(data, {gc.z_name});
            const auto gcol = data.feature_column(gc.group_name);
            std::vector<int> group(gcol.size());
            for (std::size_t i = 0; i < gcol.size(); ++i) group[i] = gcol[i] != 0.0 ? 1 : 0;
            GroupCurveSpec gs;
            gs.kernel = config.cate_kernel;
            gs.cv_folds = config.cate_cv_folds;
            gs.undersmooth = config.cate_undersmooth;
            gs.seed = derive_seed(config.seed, 0x9ca7e);
            gs.level = config.level;
            gs.ess_floor = config.cate_ess_floor;
            if (!config.cate_bandwidths.empty())
                for (double h : config.cate_bandwidths) gs.h_grid.push_back({h});
            const Matrix grid = make_eval_grid(
                z.column(0).data, static_cast<std::size_t>(config.cate_grid_points));
            const auto [curve0, curve1] = gate_curve_by_group(scores, z, group, gs, grid);
            emit(manifest, config.out_dir, "cate_" + gc.z_name + "_by_" + gc.group_name + "_0.csv",
                 curve0.to_csv({gc.z_name}));
            emit(manifest, config.out_dir, "cate_" + gc.z_name + "_by_" + gc.group_name + "_1.csv",
                 curve1.to_csv({gc.z_name}));
        }
    });

    // Sorted effects.
    if (config.sorted_enable) {
        clock.run("sorted", [&] {
            const SortedCurve curve =
                sorted_effects(iate_fn, data.n(), config.sorted_b, config.level,
                               derive_seed(config.seed, 0x50f7ed),
                               config.sorted_grid_points);
            emit(manifest, config.out_dir, "sorted.csv", curve.to_csv());
        });
    }

    // CLAN.
    if (config.clan_enable) {
        clock.run("clan", [&] {
            const std::vector<double> iates = iate_fn(std::vector<double>(data.n(), 1.0));
            const ClanTable table =
                clan(iates, data.x(), data.feature_names(), config.clan_q, config.clan_b,
                     derive_seed(config.seed, 0xc1a4), config.clan_mode,
                     config.clan_mode == ClanBootstrapMode::reestimate ? &iate_fn : nullptr);
            emit(manifest, config.out_dir, "clan.csv", table.to_csv());
        });
    }

    // Common support.
    clock.run("support", [&] {
        const SupportReport report = common_support(nuisance, data.d(), config.support_bins);
        if (report.support_concern)
            manifest.warnings.push_back("support concern: " +
                                        std::to_string(report.flagged_bins.size()) +
                                        " propensity bins populated by one arm only");
        emit(manifest, config.out_dir, "support.csv", report.to_csv());
    });

    manifest.write(config.out_dir);
    return manifest;
}

RunManifest cmd_descriptives(const RunConfig& config) {
    set_thread_count(config.threads);
    ensure_out_dir(config);
    if (config.data_path.empty() || config.colspec_path.empty())
        throw ConfigError("descriptives needs data and colspec paths");
    RunManifest manifest;
    manifest.command = "descriptives";
    manifest.seed = config.seed;
    manifest.config_hash =
        hash_hex(hash_bytes(g_last_config_canonical.data(), g_last_config_canonical.size()));
    StageClock clock(manifest);
    note_input(manifest, config.data_path);
    note_input(manifest, config.colspec_path);

    const Schema schema = Schema::from_file(config.colspec_path);
    const Dataset data = clock.run("load", [&] { return load_csv(config.data_path, schema); });
    for (const auto& note : data.provenance().notes) manifest.warnings.push_back(note);
    clock.run("descriptives", [&] {
        emit(manifest, config.out_dir, "descriptives.csv", descriptives(data).to_csv());
    });
    manifest.write(config.out_dir);
    return manifest;
}

RunManifest cmd_support(const RunConfig& config) {
    set_thread_count(config.threads);
    ensure_out_dir(config);
    if (config.data_path.empty() || config.colspec_path.empty() || config.scores_path.empty())
        throw ConfigError("support needs data, colspec, and scores paths");
    RunManifest manifest;
    manifest.command = "support";
    manifest.seed = config.seed;
    manifest.config_hash =
        hash_hex(hash_bytes(g_last_config_canonical.data(), g_last_config_canonical.size()));
    StageClock clock(manifest);
    note_input(manifest, config.data_path);
    note_input(manifest, config.scores_path);

    const Schema schema = Schema::from_file(config.colspec_path);
    const Dataset data = clock.run("load", [&] { return load_csv(config.data_path, schema); });
    const ScoresFile cached = read_scores_csv(config.scores_path);
    if (cached.scores.n() != data.n()) throw DataError("scores length does not match data");
    clock.run("support", [&] {
        const SupportReport report =
            common_support(cached.nuisance, data.d(), config.support_bins);
        if (report.support_concern)
            manifest.warnings.push_back("support concern: " +
                                        std::to_string(report.flagged_bins.size()) +
                                        " propensity bins populated by one arm only");
        emit(manifest, config.out_dir, "support.csv", report.to_csv());
    });
    manifest.write(config.out_dir);
    return manifest;
}

RunManifest cmd_report(const std::string& run_dir) {
    RunManifest manifest;
    manifest.command = "report";

    const std::string manifest_path = run_dir + "/manifest.json";
    if (!fs::exists(manifest_path))
        throw DataError("report: no manifest.json in " + run_dir);
    const auto run_manifest = nlohmann::json::parse(read_text_file(manifest_path));

    std::ostringstream out;
    out << "run summary\n===========\n";
    out << "command: " << run_manifest.value("command", "?") << "\n";
    out << "tool version: " << run_manifest.value("version", "?") << "\n";
    out << "config hash: " << run_manifest.value("config_hash", "?") << "\n";
    out << "seed: " << run_manifest.value("seed", 0) << "\n\n";

    const fs::path report_dir = fs::path(run_dir) / "report";
    fs::create_directories(report_dir);

    struct Section {
        const char* title;
        const char* file;
    };
    static const Section sections[] = {
        {"descriptives", "descriptives.csv"}, {"ate", "ate.csv"},
        {"gate tables", "gate.csv"},          {"sorted effects", "sorted.csv"},
        {"clan", "clan.csv"},                 {"common support", "support.csv"},
    };
    for (const auto& section : sections) {
        out << "## " << section.title << "\n";
        const fs::path path = fs::path(run_dir) / section.file;
        if (!fs::exists(path)) {
            out << "(absent)\n\n";
            continue;
        }
        out << read_text_file(path.string()) << "\n";
    }

    // Figure-data bundle: every curve file, copied next to the summary.
    out << "## figure data\n";
    std::vector<std::string> curve_files;
    for (const auto& entry : fs::directory_iterator(run_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("cate_", 0) == 0 || name == "sorted.csv") curve_files.push_back(name);
    }
    std::sort(curve_files.begin(), curve_files.end());
    if (curve_files.empty()) out << "(absent)\n";
    for (const auto& name : curve_files) {
        const std::string content = read_text_file((fs::path(run_dir) / name).string());
        write_text_file((report_dir / name).string(), content);
        manifest.output_hashes["report/" + name] =
            hash_hex(hash_bytes(content.data(), content.size()));
        out << name << "\n";
    }
    out << "\n## warnings\n";
    bool any_warning = false;
    if (run_manifest.contains("warnings")) {
        for (const auto& w : run_manifest["warnings"]) {
            out << w.get<std::string>() << "\n";
            manifest.warnings.push_back(w.get<std::string>());
            any_warning = true;
        }
    }
    if (!any_warning) out << "(none)\n";

    const std::string summary = out.str();
    write_text_file((report_dir / "summary.txt").string(), summary);
    manifest.output_hashes["report/summary.txt"] =
        hash_hex(hash_bytes(summary.data(), summary.size()));
    return manifest;
}

}  // namespace dmlkit
