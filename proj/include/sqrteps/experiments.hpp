#pragma once

// Scripted end-to-end studies. Every report is a pure function of its
// parameters and seed: rerunning reproduces it byte for byte.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sqrteps/core_test.hpp"
#include "sqrteps/districting.hpp"
#include "sqrteps/geography.hpp"

namespace sqrteps {

struct ExperimentReport {
    std::string id;
    nlohmann::json parameters = nlohmann::json::object();
    nlohmann::json trials = nlohmann::json::array();
    nlohmann::json summary = nlohmann::json::object();
    std::string tolerance;
    bool passed = true;
    std::string generator_id;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
    std::string to_text() const;
};

nlohmann::json to_json(const OutlierReport& r);

/// Cycle-walk tightness: per even k, the exact first-dominance probability,
/// a Monte Carlo estimate over `trials` stationary starts (passes within 3
/// binomial standard errors), and its ratios to sqrt(eps/2pi) and sqrt(2 eps)
/// at eps = 1/(k+1). trials = 0 skips the simulation. Needs N > 2k+2.
ExperimentReport tightness_experiment(const std::vector<std::int64_t>& k_list, std::int64_t trials,
                                      std::uint64_t seed, std::int64_t n_positions = 1'000'000);

/// Random reversible chains with 3-5 states; for every 0 <= ell <= k <= k_max
/// checks exact rho_{0,ell}^k <= sqrt((2 ell+1)/(k+1)) + 1e-12 and
/// |rho_{j,ell}^k - rho_{k-j,ell}^k| <= 1e-12.
ExperimentReport bound_verification(int n_chains, int k_max, std::uint64_t seed);

/// Enumerable flip-chain instances: symmetric exact matrix (asymmetry
/// <= 1e-12), and over `steps` seeded chain steps, state frequencies within 4
/// Markov-chain standard errors of uniform and transition frequencies within
/// 4 binomial standard errors of the matrix.
ExperimentReport stationarity_experiment(std::int64_t steps, std::uint64_t seed);

struct PlantedConfig {
    int width = 12;
    int height = 12;
    int districts = 4;
    PopulationModel population{};
    VoteModel votes{};
    std::uint64_t geography_seed = 7;
    ValidityConstraints constraints{0.10, CompactnessMode::Perimeter, 150.0};
    std::int64_t steps = 1 << 18;
    std::int64_t control_pre_run = 1 << 20;
    double alpha = 0.05;
    double min_power = 0.80;            // planted: fraction of seeds with p <= alpha
    double max_false_positive = 0.15;   // control: fraction of seeds with p <= alpha
};

Geography planted_geography(const PlantedConfig& cfg);

/// The planted gerrymander: packed_sweep_districting, then greedy passes over
/// the sorted boundary pairs applying every valid flip that strictly widens
/// the spread (variance) of district vote shares, until a pass changes
/// nothing. Deterministic; the result is a local maximum of the spread.
Districting planted_districting(const Geography& geo, int n_districts, const ValidityConstraints& constraints);

/// Per seed, the sqrt(eps) test for omega_var and omega_MM started from
/// planted_districting, and the same from a negative control presented after
/// a long pre-run from that districting. Throws InvalidDistricting if the
/// planted state violates the constraints.
ExperimentReport planted_gerrymander_run(const PlantedConfig& cfg, int n_seeds, std::uint64_t seed);

/// One chain from the planted state; p-values of its prefixes of the given
/// lengths and the least-squares slope of log p against log k.
ExperimentReport pvalue_scaling(const PlantedConfig& cfg, LabelFunction label, const std::vector<std::int64_t>& k_list,
                                std::uint64_t seed);

/// Labels omega(X_0..X_k) of a flip-chain run; X_0 is `start`.
std::vector<double> run_labels(const Geography& geo, const ValidityConstraints& constraints, const Districting& start,
                               LabelFunction label, std::int64_t steps, std::uint64_t seed);

}  // namespace sqrteps
