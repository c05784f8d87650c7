#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dmlkit/dataset.hpp"

namespace dmlkit {

/// Two-player lottery contest with a first-mover advantage parameter per
/// contestant (delta = 1 means none) and a starting-right probability pi.
struct ContestConfig {
    double ability_i = 1.0;
    double ability_j = 1.0;
    double delta_i = 1.0;
    double delta_j = 1.0;
    double pi = 0.5;

    void validate() const;
};

/// Win probability for contestant i when i starts: A_i / (A_i + delta_i * A_j).
double win_prob_starter(double ability_i, double ability_j, double delta_i);
/// Win probability for contestant i when the opponent starts:
/// A_i / (A_i + A_j / delta_j).
double win_prob_nonstarter(double ability_i, double ability_j, double delta_j);
/// Ex-ante win probability: pi * starter + (1 - pi) * nonstarter.
double win_prob_exante(const ContestConfig& config);
/// Closed form of the ex-ante probability for equal abilities (A_i = A_j);
/// used as the algebraic cross-check of win_prob_exante.
double win_prob_exante_equal_ability(double delta_i, double delta_j, double pi);

enum class FairnessCondition { no_bia, randomized_and_symmetric, neither };

struct FairnessReport {
    bool fair = false;
    FairnessCondition condition = FairnessCondition::neither;
    double exante_prob = 0.5;
};

/// Fairness is defined for equally skilled contestants only; requires
/// ability_i == ability_j. Fair iff delta_i = delta_j = 1, or pi = 0.5 with
/// delta_i = delta_j; verified against |exante - 1/2| < 1e-12.
FairnessReport fairness_check(const ContestConfig& config);

// ---------------------------------------------------------------------------

enum class DgpKind { contest, generic_linear };
enum class LegPattern { alternate, abba };

/// Synthetic data generator. The contest DGP draws per-player abilities, maps
/// the ability gap into the starting probability (the confounding channel),
/// and derives potential outcomes from the contest formulas; covariates such
/// as home can shrink the starter's advantage. The generic-linear DGP draws
/// Y(d) ~ Bernoulli(m(x) + d * tau(z)) under a randomized start.
struct SimConfig {
    DgpKind kind = DgpKind::contest;
    std::size_t n_matches = 0;
    std::uint64_t seed = 0;

    // contest DGP
    double ability_sd = 0.35;       // abilities are exp(sd * N(0,1)) per player
    std::size_t player_pool = 0;    // 0 = max(50, n/50)
    double delta_base = 0.85;       // baseline advantage parameter
    double delta_home_shift = 0.0;  // 1 = home removes the starter's own advantage
    double pi_slope = 1.5;          // logistic slope on log-ability gap; 0 = randomized
    double pi_min = 0.05;
    double pi_max = 0.95;
    double home_rate = 0.25;
    int noise_covariates = 2;
    int legs = 0;  // 0 = single contest; odd K = best-of-K leg play
    LegPattern leg_pattern = LegPattern::alternate;
    bool catchup = false;  // removes the per-leg starter advantage

    // generic-linear DGP
    int x_dim = 3;  // z is column 0; all covariates U(0,1)
    double base_intercept = 0.35;
    double base_slope = 0.15;     // on covariate 1 when present
    double tau_intercept = 0.05;
    double tau_slope = 0.10;      // on z

    void validate() const;
};

/// Observables plus sealed per-row truth.
struct SimulatedDataset {
    Dataset data;
    std::vector<double> p1;   // win probability when starting
    std::vector<double> p0;   // win probability when not starting
    std::vector<double> tau;  // p1 - p0
    std::vector<int> y1;      // realized potential outcomes
    std::vector<int> y0;
    bool has_truth = true;
};

SimulatedDataset simulate(const SimConfig& config);

/// Finite-population estimand: mean of p1 - p0 over the simulated rows.
double true_ate(const SimulatedDataset& sim);

/// Exact match-win probability for contestant i in a best-of-K leg contest,
/// by dynamic programming over leg sequences. Leg starters follow the pattern
/// from whoever starts leg 1; the per-leg winner comes from the contest
/// formula with the leg starter's advantage.
double match_win_prob_legs(int k_legs, bool i_starts_first, double ability_i, double ability_j,
                           double delta_i, double delta_j,
                           LegPattern pattern = LegPattern::alternate, bool catchup = false);

/// Truth-file contract: row,p1,p0,y1,y0,tau.
std::string truth_to_csv(const SimulatedDataset& sim);
struct TruthFile {
    std::vector<double> p1, p0, tau;
    std::vector<int> y1, y0;
};
TruthFile read_truth_csv(const std::string& path);

}  // namespace dmlkit
