#include "dmlkit/contest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "dmlkit/csv.hpp"
#include "dmlkit/errors.hpp"
#include "dmlkit/rng.hpp"

namespace dmlkit {

void ContestConfig::validate() const {
    if (!(ability_i > 0.0) || !(ability_j > 0.0))
        throw ConfigError("contest: abilities must be positive");
    if (!(delta_i > 0.0 && delta_i <= 1.0) || !(delta_j > 0.0 && delta_j <= 1.0))
        throw ConfigError("contest: delta must lie in (0, 1]");
    if (!(pi >= 0.0 && pi <= 1.0)) throw ConfigError("contest: pi must lie in [0, 1]");
}

double win_prob_starter(double ability_i, double ability_j, double delta_i) {
    if (!(ability_i > 0.0) || !(ability_j > 0.0))
        throw ConfigError("contest: abilities must be positive");
    if (!(delta_i > 0.0 && delta_i <= 1.0)) throw ConfigError("contest: delta must lie in (0, 1]");
    return ability_i / (ability_i + delta_i * ability_j);
}

double win_prob_nonstarter(double ability_i, double ability_j, double delta_j) {
    if (!(ability_i > 0.0) || !(ability_j > 0.0))
        throw ConfigError("contest: abilities must be positive");
    if (!(delta_j > 0.0 && delta_j <= 1.0)) throw ConfigError("contest: delta must lie in (0, 1]");
    return ability_i / (ability_i + ability_j / delta_j);
}

double win_prob_exante(const ContestConfig& c) {
    c.validate();
    return c.pi * win_prob_starter(c.ability_i, c.ability_j, c.delta_i) +
           (1.0 - c.pi) * win_prob_nonstarter(c.ability_i, c.ability_j, c.delta_j);
}

double win_prob_exante_equal_ability(double delta_i, double delta_j, double pi) {
    const double denom = 2.0 * (1.0 + delta_i) * (delta_j + 1.0);
    return ((1.0 + delta_i * delta_j) + 2.0 * delta_j) / denom +
           (1.0 - 2.0 * pi) * (delta_i * delta_j - 1.0) / denom;
}

FairnessReport fairness_check(const ContestConfig& c) {
    c.validate();
    if (c.ability_i != c.ability_j)
        throw ConfigError("fairness undefined: contestants are not equally skilled");
    FairnessReport report;
    report.exante_prob = win_prob_exante(c);
    if (c.delta_i == 1.0 && c.delta_j == 1.0) {
        report.fair = true;
        report.condition = FairnessCondition::no_bia;
    } else if (c.pi == 0.5 && c.delta_i == c.delta_j) {
        report.fair = true;
        report.condition = FairnessCondition::randomized_and_symmetric;
    } else {
        report.fair = false;
        report.condition = FairnessCondition::neither;
    }
    const bool numeric_fair = std::fabs(report.exante_prob - 0.5) < 1e-12;
    if (numeric_fair != report.fair)
        throw NumericError("fairness_check: symbolic and numeric conditions disagree");
    return report;
}

// ---------------------------------------------------------------------------

void SimConfig::validate() const {
    if (n_matches < 2) throw ConfigError("simulate: n_matches must be >= 2");
    if (kind == DgpKind::contest) {
        if (!(ability_sd >= 0.0)) throw ConfigError("simulate: ability_sd must be >= 0");
        if (!(delta_base > 0.0 && delta_base <= 1.0))
            throw ConfigError("simulate: delta_base must lie in (0, 1]");
        if (!(delta_home_shift >= 0.0 && delta_home_shift <= 1.0))
            throw ConfigError("simulate: delta_home_shift must lie in [0, 1]");
        if (!(pi_min >= 0.05 && pi_max <= 0.95 && pi_min < pi_max))
            throw ConfigError("simulate: pi bounds must satisfy 0.05 <= min < max <= 0.95");
        if (!(home_rate >= 0.0 && home_rate <= 1.0))
            throw ConfigError("simulate: home_rate must lie in [0, 1]");
        if (noise_covariates < 0) throw ConfigError("simulate: noise_covariates must be >= 0");
        if (legs != 0 && (legs < 1 || legs % 2 == 0 || legs > 13))
            throw ConfigError("simulate: legs must be 0 or an odd number <= 13");
    } else {
        if (x_dim < 1) throw ConfigError("simulate: x_dim must be >= 1");
    }
}

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double clip(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

/// delta for contestant c: home shrinks the advantage gap toward 1.
double delta_of(const SimConfig& cfg, int home) {
    const double gap = (1.0 - cfg.delta_base) * (home ? 1.0 - cfg.delta_home_shift : 1.0);
    return 1.0 - gap;
}

Schema contest_schema(const SimConfig& cfg) {
    std::ostringstream spec;
    spec << "win = outcome, binary\n";
    spec << "starts = treatment, binary\n";
    spec << "ability_i = heterogeneity, continuous\n";
    spec << "ability_j = heterogeneity, continuous\n";
    // Pair difference, the shootout's driving covariate.
    spec << "diff_ability = confounder, continuous\n";
    spec << "home_i = heterogeneity, binary\n";
    spec << "home_j = heterogeneity, binary\n";
    spec << "prize = confounder, continuous\n";
    for (int c = 0; c < cfg.noise_covariates; ++c)
        spec << "noise_" << c << " = confounder, continuous\n";
    spec << "player = cluster, count\n";
    return Schema::from_string(spec.str());
}

Schema generic_schema(const SimConfig& cfg) {
    std::ostringstream spec;
    spec << "y = outcome, binary\n";
    spec << "d = treatment, binary\n";
    spec << "z = heterogeneity, continuous\n";
    for (int c = 1; c < cfg.x_dim; ++c) spec << "x_" << c << " = confounder, continuous\n";
    spec << "unit = cluster, count\n";
    return Schema::from_string(spec.str());
}

SimulatedDataset simulate_contest(const SimConfig& cfg) {
    const std::size_t n = cfg.n_matches;
    const std::size_t pool =
        cfg.player_pool > 0 ? cfg.player_pool : std::max<std::size_t>(50, n / 50);

    // Player pool: persistent ability per player id.
    Rng pool_rng(derive_seed(cfg.seed, 0x9001));
    std::vector<double> pool_ability(pool);
    for (double& a : pool_ability) a = std::exp(cfg.ability_sd * pool_rng.normal());

    // Tournament-year prize pools, standardized the same way real prize data
    // would be.
    std::map<std::pair<std::string, int>, double> prizes;
    static const char* names[] = {"open", "masters", "classic", "trophy"};
    for (int t = 0; t < 4; ++t)
        for (int year = 0; year < 3; ++year)
            prizes[{names[t], year}] = 50000.0 * (t + 1) + 25000.0 * year;
    const auto prize_std = standardize_prize_money(prizes);
    std::vector<std::pair<std::string, int>> prize_keys;
    for (const auto& [key, v] : prize_std) prize_keys.push_back(key);

    std::vector<ObservationRecord> records(n);
    std::vector<double> p1v(n), p0v(n), tauv(n);
    std::vector<int> y1v(n), y0v(n);

    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(cfg.seed, 0x5107, i));
        const auto pid_i = static_cast<std::size_t>(rng.uniform_int(pool));
        auto pid_j = static_cast<std::size_t>(rng.uniform_int(pool));
        if (pid_j == pid_i) pid_j = (pid_j + 1) % pool;
        const double a_i = pool_ability[pid_i];
        const double a_j = pool_ability[pid_j];

        const int home_i = rng.bernoulli(cfg.home_rate) ? 1 : 0;
        const int home_j = rng.bernoulli(cfg.home_rate) ? 1 : 0;
        const double delta_i = delta_of(cfg, home_i);
        const double delta_j = delta_of(cfg, home_j);

        // Shootout: better players win the right to start more often.
        const double pi =
            clip(logistic(cfg.pi_slope * (std::log(a_i) - std::log(a_j))), cfg.pi_min, cfg.pi_max);

        double p1, p0;
        if (cfg.legs > 0) {
            p1 = match_win_prob_legs(cfg.legs, true, a_i, a_j, delta_i, delta_j, cfg.leg_pattern,
                                     cfg.catchup);
            p0 = match_win_prob_legs(cfg.legs, false, a_i, a_j, delta_i, delta_j, cfg.leg_pattern,
                                     cfg.catchup);
        } else {
            p1 = win_prob_starter(a_i, a_j, delta_i);
            p0 = win_prob_nonstarter(a_i, a_j, delta_j);
        }
        if (!(p1 > 0.0 && p1 < 1.0 && p0 > 0.0 && p0 < 1.0))
            throw NumericError("simulate: potential win probability left (0,1)");

        const int d = rng.bernoulli(pi) ? 1 : 0;
        const int y1 = rng.bernoulli(p1) ? 1 : 0;
        const int y0 = rng.bernoulli(p0) ? 1 : 0;

        const auto& prize_key =
            prize_keys[static_cast<std::size_t>(rng.uniform_int(prize_keys.size()))];

        ObservationRecord rec;
        rec.d = d;
        rec.y = d ? y1 : y0;
        rec.cluster_id = static_cast<std::int64_t>(pid_i);
        rec.x = {a_i,
                 a_j,
                 std::log(a_i) - std::log(a_j),
                 static_cast<double>(home_i),
                 static_cast<double>(home_j),
                 prize_std.at(prize_key)};
        for (int c = 0; c < cfg.noise_covariates; ++c) rec.x.push_back(rng.uniform());
        records[i] = std::move(rec);

        p1v[i] = p1;
        p0v[i] = p0;
        tauv[i] = p1 - p0;
        y1v[i] = y1;
        y0v[i] = y0;
    }

    Provenance prov;
    prov.source = "simulate:contest";
    prov.drops.source_rows = n;
    prov.drops.kept = n;
    Dataset data(contest_schema(cfg), std::move(records), std::move(prov));
    return SimulatedDataset{std::move(data), std::move(p1v), std::move(p0v), std::move(tauv),
                            std::move(y1v), std::move(y0v), true};
}

SimulatedDataset simulate_generic(const SimConfig& cfg) {
    const std::size_t n = cfg.n_matches;
    std::vector<ObservationRecord> records(n);
    std::vector<double> p1v(n), p0v(n), tauv(n);
    std::vector<int> y1v(n), y0v(n);

    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(cfg.seed, 0x6e1c, i));
        std::vector<double> x(static_cast<std::size_t>(cfg.x_dim));
        for (double& v : x) v = rng.uniform();
        const double z = x[0];
        const double m =
            cfg.base_intercept + (cfg.x_dim > 1 ? cfg.base_slope * x[1] : 0.0);
        const double tau = cfg.tau_intercept + cfg.tau_slope * z;
        const double p0 = clip(m, 0.02, 0.98);
        const double p1 = clip(m + tau, 0.02, 0.98);

        const int d = rng.bernoulli(0.5) ? 1 : 0;
        const int y1 = rng.bernoulli(p1) ? 1 : 0;
        const int y0 = rng.bernoulli(p0) ? 1 : 0;

        ObservationRecord rec;
        rec.d = d;
        rec.y = d ? y1 : y0;
        rec.cluster_id = static_cast<std::int64_t>(i);
        rec.x = std::move(x);
        records[i] = std::move(rec);

        p1v[i] = p1;
        p0v[i] = p0;
        tauv[i] = p1 - p0;
        y1v[i] = y1;
        y0v[i] = y0;
    }

    Provenance prov;
    prov.source = "simulate:generic-linear";
    prov.drops.source_rows = n;
    prov.drops.kept = n;
    Dataset data(generic_schema(cfg), std::move(records), std::move(prov));
    return SimulatedDataset{std::move(data), std::move(p1v), std::move(p0v), std::move(tauv),
                            std::move(y1v), std::move(y0v), true};
}

}  // namespace

SimulatedDataset simulate(const SimConfig& config) {
    config.validate();
    return config.kind == DgpKind::contest ? simulate_contest(config)
                                           : simulate_generic(config);
}

double true_ate(const SimulatedDataset& sim) {
    if (!sim.has_truth || sim.tau.empty())
        throw DataError("true_ate: dataset carries no simulation truth");
    return mean(sim.tau);
}

double match_win_prob_legs(int k_legs, bool i_starts_first, double ability_i, double ability_j,
                           double delta_i, double delta_j, LegPattern pattern, bool catchup) {
    if (k_legs < 1 || k_legs % 2 == 0 || k_legs > 13)
        throw ConfigError("match_win_prob_legs: K must be odd and <= 13");
    const int need = (k_legs + 1) / 2;

    // Starter of leg t (0-based) given who starts leg 0.
    auto leg_starter_is_i = [&](int t) {
        bool first;
        switch (pattern) {
            case LegPattern::alternate: first = t % 2 == 0; break;
            case LegPattern::abba: {
                const int cycle = t % 4;
                first = cycle == 0 || cycle == 3;
                break;
            }
            default: first = true;
        }
        return i_starts_first ? first : !first;
    };

    // Per-leg win probability for contestant i.
    auto leg_win_i = [&](int t) {
        if (leg_starter_is_i(t)) {
            const double d = catchup ? 1.0 : delta_i;
            return win_prob_starter(ability_i, ability_j, d);
        }
        const double d = catchup ? 1.0 : delta_j;
        return win_prob_nonstarter(ability_i, ability_j, d);
    };

    // DP over (legs won by i, legs won by j).
    std::vector<std::vector<double>> prob(static_cast<std::size_t>(need) + 1,
                                          std::vector<double>(static_cast<std::size_t>(need) + 1,
                                                              0.0));
    prob[0][0] = 1.0;
    double win = 0.0;
    for (int wi = 0; wi <= need; ++wi) {
        for (int wj = 0; wj <= need; ++wj) {
            const double p = prob[static_cast<std::size_t>(wi)][static_cast<std::size_t>(wj)];
            if (p == 0.0) continue;
            if (wi == need) {
                win += p;
                continue;
            }
            if (wj == need) continue;
            const int t = wi + wj;
            const double q = leg_win_i(t);
            prob[static_cast<std::size_t>(wi) + 1][static_cast<std::size_t>(wj)] += p * q;
            prob[static_cast<std::size_t>(wi)][static_cast<std::size_t>(wj) + 1] += p * (1.0 - q);
        }
    }
    return win;
}

std::string truth_to_csv(const SimulatedDataset& sim) {
    CsvWriter w({"row", "p1", "p0", "y1", "y0", "tau"});
    for (std::size_t i = 0; i < sim.tau.size(); ++i)
        w.add_row({std::to_string(i), format_full(sim.p1[i]), format_full(sim.p0[i]),
                   std::to_string(sim.y1[i]), std::to_string(sim.y0[i]),
                   format_full(sim.tau[i])});
    return w.str();
}

TruthFile read_truth_csv(const std::string& path) {
    const CsvTable table = read_csv(path);
    const std::vector<std::string> expected = {"row", "p1", "p0", "y1", "y0", "tau"};
    if (table.header != expected) throw DataError("truth file has unexpected header: " + path);
    TruthFile out;
    for (const auto& row : table.rows) {
        if (row.size() != expected.size()) throw DataError("truth file: malformed row");
        auto to_d = [](const std::string& s) {
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc() || ptr != s.data() + s.size())
                throw DataError("truth file: bad number `" + s + "`");
            return v;
        };
        out.p1.push_back(to_d(row[1]));
        out.p0.push_back(to_d(row[2]));
        out.y1.push_back(static_cast<int>(to_d(row[3])));
        out.y0.push_back(static_cast<int>(to_d(row[4])));
        out.tau.push_back(to_d(row[5]));
    }
    return out;
}

}  // namespace dmlkit
