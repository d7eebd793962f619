#include "sqrteps/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <thread>

#include "sqrteps/chain.hpp"
#include "sqrteps/flip_chain.hpp"
#include "sqrteps/oracle.hpp"
#include "sqrteps/rng.hpp"
#include "sqrteps/trajectory.hpp"

namespace sqrteps {

namespace {

// Runs fn(0..n-1) across worker threads; results come back in index order.
template <class F>
auto parallel_map(std::size_t n, F&& fn) {
    using R = decltype(fn(std::size_t{}));
    std::vector<std::optional<R>> slots(n);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                slots[i].emplace(fn(i));
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const std::size_t n_threads = std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, std::max<std::size_t>(n, 1));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
    std::vector<R> out;
    out.reserve(n);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

ExperimentReport make_report(std::string id, std::uint64_t seed) {
    ExperimentReport r;
    r.id = std::move(id);
    r.seed = seed;
    r.generator_id = std::string(Rng::generator_id);
    return r;
}

struct LabelSeries {
    std::vector<double> var;
    std::vector<double> mm;
};

LabelSeries run_both_labels(FlipChain& chain, std::int64_t steps, Rng& rng) {
    LabelSeries out;
    out.var.reserve(static_cast<std::size_t>(steps) + 1);
    out.mm.reserve(static_cast<std::size_t>(steps) + 1);
    out.var.push_back(omega_var(chain.state()));
    out.mm.push_back(omega_mm(chain.state()));
    for (std::int64_t i = 0; i < steps; ++i) {
        if (chain.step(rng) == StepOutcome::Accepted) {
            out.var.push_back(omega_var(chain.state()));
            out.mm.push_back(omega_mm(chain.state()));
        } else {
            out.var.push_back(out.var.back());
            out.mm.push_back(out.mm.back());
        }
    }
    return out;
}

nlohmann::json constraints_json(const ValidityConstraints& c) {
    return {{"pop_tolerance", c.pop_tolerance},
            {"compactness", std::string(to_string(c.compactness))},
            {"threshold", c.compactness_threshold}};
}

}  // namespace

nlohmann::json to_json(const OutlierReport& r) {
    nlohmann::json j{{"k", r.k}, {"count_le", r.count_le}, {"epsilon", r.epsilon}, {"ell", r.ell}, {"p_value", r.p_value}};
    j["tv_slack"] = r.tv_slack ? nlohmann::json(*r.tv_slack) : nlohmann::json(nullptr);
    return j;
}

nlohmann::json ExperimentReport::to_json() const {
    return {{"format", 1},
            {"experiment", id},
            {"generator_id", generator_id},
            {"seed", seed},
            {"parameters", parameters},
            {"trials", trials},
            {"summary", summary},
            {"tolerance", tolerance},
            {"passed", passed}};
}

std::string ExperimentReport::to_text() const {
    std::ostringstream os;
    os << "experiment: " << id << "\n";
    os << "generator:  " << generator_id << " seed=" << seed << "\n";
    os << "parameters: " << parameters.dump() << "\n";
    for (const auto& t : trials) os << "  " << t.dump() << "\n";
    os << "summary:    " << summary.dump() << "\n";
    os << "tolerance:  " << tolerance << "\n";
    os << "result:     " << (passed ? "PASS" : "FAIL") << "\n";
    return os.str();
}

ExperimentReport tightness_experiment(const std::vector<std::int64_t>& k_list, std::int64_t trials,
                                      std::uint64_t seed, std::int64_t n_positions) {
    for (std::int64_t k : k_list) {
        if (k < 2 || k % 2 != 0) throw InvalidInput("tightness needs even k >= 2, got " + std::to_string(k));
        if (n_positions <= 2 * k + 2) throw InvalidInput("cycle length must exceed 2k+2");
    }
    if (trials < 0) throw InvalidInput("trials must be nonnegative");
    ExperimentReport report = make_report("tightness", seed);
    report.parameters = {{"k", k_list}, {"trials", trials}, {"n_positions", n_positions}};
    report.tolerance = "Monte Carlo within 3 binomial standard errors of the exact value";

    const CycleWalk walk(n_positions);
    auto rows = parallel_map(k_list.size(), [&](std::size_t idx) {
        const std::int64_t k = k_list[idx];
        const double exact = cycle_first_dominance_probability(k);
        const double eps = 1.0 / static_cast<double>(k + 1);
        nlohmann::json row{{"k", k},
                           {"exact", exact},
                           {"epsilon", eps},
                           {"sqrt_eps_over_2pi", std::sqrt(eps / (2.0 * std::numbers::pi))},
                           {"ratio_to_sqrt_2eps", exact / std::sqrt(2.0 * eps)},
                           {"ratio_to_asymptotic", exact * std::sqrt(2.0 * std::numbers::pi * static_cast<double>(k))}};
        bool ok = true;
        if (trials > 0) {
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(idx)));
            std::int64_t hits = 0;
            for (std::int64_t t = 0; t < trials; ++t) {
                const auto start = walk.draw_stationary(rng);
                const auto sample = sample_trajectory(walk, start, k, rng);
                if (ell_small_count(trajectory_labels(walk, sample.states), 0) == 0) ++hits;
            }
            const double est = static_cast<double>(hits) / static_cast<double>(trials);
            const double se = std::sqrt(exact * (1.0 - exact) / static_cast<double>(trials));
            const double z = (est - exact) / se;
            ok = std::abs(z) <= 3.0;
            row["monte_carlo"] = est;
            row["hits"] = hits;
            row["standard_error"] = se;
            row["z"] = z;
        }
        row["pass"] = ok;
        return row;
    });
    double worst_z = 0.0;
    for (auto& row : rows) {
        report.passed = report.passed && row["pass"].get<bool>();
        if (row.contains("z")) worst_z = std::max(worst_z, std::abs(row["z"].get<double>()));
        report.trials.push_back(std::move(row));
    }
    report.summary = {{"max_abs_z", worst_z}, {"limit_ratio_to_sqrt_2eps", 1.0 / (2.0 * std::sqrt(std::numbers::pi))}};
    return report;
}

namespace {

// Symmetric random weights; P = W / rowsum is reversible for pi ~ rowsum.
FiniteChain random_reversible_chain(Rng& rng) {
    const auto n = static_cast<Eigen::Index>(3 + rng.uniform_below(3));
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i; j < n; ++j) {
            const bool keep = i == j || rng.uniform01() < 0.75;
            w(i, j) = w(j, i) = keep ? 0.05 + rng.uniform01() : 0.0;
        }
    const Eigen::VectorXd rows = w.rowwise().sum();
    std::vector<double> pi(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) pi[static_cast<std::size_t>(i)] = rows(i) / rows.sum();
    Eigen::MatrixXd p = w;
    for (Eigen::Index i = 0; i < n; ++i) p.row(i) /= rows(i);
    // half the chains get tied integer labels, half distinct reals
    const bool ties = rng.coin();
    std::vector<double> labels(static_cast<std::size_t>(n));
    for (double& l : labels) l = ties ? static_cast<double>(rng.uniform_below(static_cast<std::uint64_t>(n) - 1)) : rng.uniform01();
    return FiniteChain::reversible(std::move(p), std::move(labels), std::move(pi));
}

}  // namespace

ExperimentReport bound_verification(int n_chains, int k_max, std::uint64_t seed) {
    if (n_chains < 1 || k_max < 0) throw InvalidInput("need n_chains >= 1 and k_max >= 0");
    ExperimentReport report = make_report("bound-verify", seed);
    report.parameters = {{"chains", n_chains}, {"k_max", k_max}};
    report.tolerance = "rho_0 <= sqrt((2l+1)/(k+1)) + 1e-12; |rho_j - rho_{k-j}| <= 1e-12";

    auto rows = parallel_map(static_cast<std::size_t>(n_chains), [&](std::size_t c) {
        Rng rng(derive_seed(seed, c));
        const FiniteChain chain = random_reversible_chain(rng);
        double min_slack = 1.0, max_asym = 0.0;
        std::int64_t comparisons = 0;
        for (int k = 0; k <= k_max; ++k) {
            const auto rho = exact_ell_small_table(chain, k);
            for (int ell = 0; ell <= k; ++ell) {
                min_slack = std::min(min_slack, theorem_bound(ell, k) - rho[0][static_cast<std::size_t>(ell)]);
                ++comparisons;
                for (int j = 0; j <= k; ++j)
                    max_asym = std::max(max_asym, std::abs(rho[static_cast<std::size_t>(j)][static_cast<std::size_t>(ell)] -
                                                           rho[static_cast<std::size_t>(k - j)][static_cast<std::size_t>(ell)]));
            }
        }
        return nlohmann::json{{"chain", c},
                              {"states", chain.n_states()},
                              {"labels", std::vector<double>(chain.labels().begin(), chain.labels().end())},
                              {"comparisons", comparisons},
                              {"min_slack", min_slack},
                              {"max_reversal_asymmetry", max_asym},
                              {"pass", min_slack >= -1e-12 && max_asym <= 1e-12}};
    });
    double min_slack = 1.0, max_asym = 0.0;
    std::int64_t comparisons = 0;
    for (auto& row : rows) {
        min_slack = std::min(min_slack, row["min_slack"].get<double>());
        max_asym = std::max(max_asym, row["max_reversal_asymmetry"].get<double>());
        comparisons += row["comparisons"].get<std::int64_t>();
        report.passed = report.passed && row["pass"].get<bool>();
        report.trials.push_back(std::move(row));
    }
    report.summary = {{"comparisons", comparisons}, {"min_slack", min_slack}, {"max_reversal_asymmetry", max_asym}};
    return report;
}

namespace {

struct StationarityInstance {
    std::string name;
    int width, height, districts;
    double pop_tolerance;
};

nlohmann::json check_instance(const StationarityInstance& inst, std::int64_t steps, std::uint64_t seed) {
    const Geography geo = grid_geography(inst.width, inst.height, PopulationModel{}, VoteModel{}, 1);
    const ValidityConstraints constraints{inst.pop_tolerance, CompactnessMode::Perimeter, 1e9};
    const StateSpace space = enumerate_states(geo, constraints, inst.districts);
    const double asym = max_asymmetry(space);
    const auto n = static_cast<Eigen::Index>(space.states.size());
    const Eigen::MatrixXd P(space.transition);
    double row_err = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) row_err = std::max(row_err, std::abs(P.row(i).sum() - 1.0));
    const Stationary st = stationary_distribution(P);

    nlohmann::json row{{"instance", inst.name},
                       {"grid", std::to_string(inst.width) + "x" + std::to_string(inst.height)},
                       {"districts", inst.districts},
                       {"pop_tolerance", inst.pop_tolerance},
                       {"states", space.states.size()},
                       {"n_max", space.n_max},
                       {"max_asymmetry", asym},
                       {"max_row_sum_error", row_err},
                       {"irreducible", st.irreducible}};
    bool ok = asym <= 1e-12 && row_err <= 1e-12;

    if (st.irreducible && steps > 0) {
        // Markov-chain CLT variance of each visit frequency under uniform pi:
        // sigma_s^2 = pi_s (2 Z_ss - 1 - pi_s), Z = (I - P + 1 pi)^-1.
        const double u = 1.0 / static_cast<double>(n);
        const Eigen::MatrixXd Z =
            (Eigen::MatrixXd::Identity(n, n) - P + Eigen::MatrixXd::Constant(n, n, u)).inverse();

        Rng rng(seed);
        FlipChain chain(geo, constraints, Districting(geo, space.states[0], inst.districts), 0);
        std::vector<std::int64_t> visits(static_cast<std::size_t>(n), 0);
        Eigen::MatrixXd moves = Eigen::MatrixXd::Zero(n, n);
        std::size_t current = 0;
        for (std::int64_t s = 0; s < steps; ++s) {
            chain.step(rng);
            const std::size_t next = *space.find(chain.state().assignment());
            moves(static_cast<Eigen::Index>(current), static_cast<Eigen::Index>(next)) += 1.0;
            current = next;
            ++visits[current];
        }
        double worst_visit_z = 0.0, worst_move_z = 0.0;
        bool impossible_move = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double var = u * (2.0 * Z(i, i) - 1.0 - u);
            const double se = std::sqrt(var / static_cast<double>(steps));
            const double freq = static_cast<double>(visits[static_cast<std::size_t>(i)]) / static_cast<double>(steps);
            worst_visit_z = std::max(worst_visit_z, std::abs(freq - u) / se);
            const double from = moves.row(i).sum();
            for (Eigen::Index j = 0; j < n; ++j) {
                const double pij = P(i, j);
                if (pij == 0.0) {
                    impossible_move = impossible_move || moves(i, j) > 0.0;
                    continue;
                }
                if (pij == 1.0 || from == 0.0) continue;
                const double z = (moves(i, j) - from * pij) / std::sqrt(from * pij * (1.0 - pij));
                worst_move_z = std::max(worst_move_z, std::abs(z));
            }
        }
        row["steps"] = steps;
        row["max_visit_z"] = worst_visit_z;
        row["max_transition_z"] = worst_move_z;
        row["impossible_transition_seen"] = impossible_move;
        ok = ok && worst_visit_z <= 4.0 && worst_move_z <= 4.0 && !impossible_move;
    }
    row["pass"] = ok;
    return row;
}

}  // namespace

ExperimentReport stationarity_experiment(std::int64_t steps, std::uint64_t seed) {
    ExperimentReport report = make_report("stationarity", seed);
    report.parameters = {{"steps", steps}};
    report.tolerance =
        "max |P - P^T| <= 1e-12; visit frequencies within 4 Markov-chain SE of uniform; transitions within 4 SE";
    // 2x2 with equal halves only: the four domino states, none reachable from
    // another. The looser 2x2 and 3x3 instances are irreducible.
    const std::vector<StationarityInstance> instances{
        {"2x2-equal", 2, 2, 2, 0.01},
        {"2x2", 2, 2, 2, 0.5},
        {"3x3", 3, 3, 2, 0.35},
    };
    auto rows = parallel_map(instances.size(), [&](std::size_t i) {
        return check_instance(instances[i], steps, derive_seed(seed, i));
    });
    for (auto& row : rows) {
        report.passed = report.passed && row["pass"].get<bool>();
        report.trials.push_back(std::move(row));
    }
    report.summary = {{"instances", instances.size()}};
    return report;
}

Geography planted_geography(const PlantedConfig& cfg) {
    return grid_geography(cfg.width, cfg.height, cfg.population, cfg.votes, cfg.geography_seed);
}

Districting planted_districting(const Geography& geo, int n_districts, const ValidityConstraints& constraints) {
    FlipChain chain(geo, constraints, packed_sweep_districting(geo, n_districts), 0);
    constexpr int kMaxPasses = 10'000;
    for (int pass = 0; pass < kMaxPasses; ++pass) {
        bool changed = false;
        for (const BoundaryPair& pr : chain.boundary().sorted()) {
            if (!chain.boundary().contains(pr.precinct, pr.district)) continue;
            const Districting& cur = chain.state();
            std::vector<double> shares = dem_shares(cur);
            const double before = omega_var(shares);
            const Precinct& p = geo.precinct(pr.precinct);
            const int from = cur.district_of(pr.precinct);
            const DistrictStats& a = cur.stats(from);
            const DistrictStats& b = cur.stats(pr.district);
            if (a.votes_total - p.votes_total <= 0) continue;
            shares[static_cast<std::size_t>(from)] =
                static_cast<double>(a.votes_dem - p.votes_dem) / static_cast<double>(a.votes_total - p.votes_total);
            shares[static_cast<std::size_t>(pr.district)] =
                static_cast<double>(b.votes_dem + p.votes_dem) / static_cast<double>(b.votes_total + p.votes_total);
            if (omega_var(shares) < before && chain.try_move(pr.precinct, pr.district)) changed = true;
        }
        if (!changed) break;
    }
    return chain.state();
}

std::vector<double> run_labels(const Geography& geo, const ValidityConstraints& constraints, const Districting& start,
                               LabelFunction label, std::int64_t steps, std::uint64_t seed) {
    FlipChain chain(geo, constraints, start);
    Rng rng(seed);
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(steps) + 1);
    out.push_back(evaluate_label(label, chain.state()));
    for (std::int64_t i = 0; i < steps; ++i)
        out.push_back(chain.step(rng) == StepOutcome::Accepted ? evaluate_label(label, chain.state()) : out.back());
    return out;
}

ExperimentReport planted_gerrymander_run(const PlantedConfig& cfg, int n_seeds, std::uint64_t seed) {
    if (n_seeds < 1) throw InvalidInput("need at least one seed");
    ExperimentReport report = make_report("planted", seed);
    report.parameters = {{"grid", std::to_string(cfg.width) + "x" + std::to_string(cfg.height)},
                         {"districts", cfg.districts},
                         {"geography_seed", cfg.geography_seed},
                         {"votes",
                          {{"mean_share", cfg.votes.mean_share},
                           {"gradient", cfg.votes.gradient},
                           {"noise", cfg.votes.noise},
                           {"turnout", cfg.votes.turnout}}},
                         {"population", {{"base", cfg.population.base}, {"jitter", cfg.population.jitter}}},
                         {"constraints", constraints_json(cfg.constraints)},
                         {"steps", cfg.steps},
                         {"control_pre_run", cfg.control_pre_run},
                         {"seeds", n_seeds},
                         {"alpha", cfg.alpha}};
    std::ostringstream tol;
    tol << "planted: p <= " << cfg.alpha << " in >= " << cfg.min_power
        << " of seeds for var or mm; control: p <= " << cfg.alpha << " in <= " << cfg.max_false_positive
        << " of seeds for each label";
    report.tolerance = tol.str();

    const Geography geo = planted_geography(cfg);
    const Districting planted = planted_districting(geo, cfg.districts, cfg.constraints);
    if (auto r = is_valid(geo, planted, cfg.constraints); !r) throw InvalidDistricting(std::move(r));

    auto rows = parallel_map(static_cast<std::size_t>(n_seeds), [&](std::size_t i) {
        const std::uint64_t s = derive_seed(seed, i);
        nlohmann::json row{{"seed_index", i}, {"seed", s}};
        {
            FlipChain chain(geo, cfg.constraints, planted);
            Rng rng(derive_seed(s, 0));
            const LabelSeries series = run_both_labels(chain, cfg.steps, rng);
            row["planted"] = {{"var", to_json(run_sqrt_eps_test(LabeledTrajectory(series.var)))},
                              {"mm", to_json(run_sqrt_eps_test(LabeledTrajectory(series.mm)))}};
        }
        {
            FlipChain chain(geo, cfg.constraints, planted);
            Rng pre(derive_seed(s, 1));
            for (std::int64_t t = 0; t < cfg.control_pre_run; ++t) chain.step(pre);
            Rng rng(derive_seed(s, 2));
            const LabelSeries series = run_both_labels(chain, cfg.steps, rng);
            row["control"] = {{"var", to_json(run_sqrt_eps_test(LabeledTrajectory(series.var)))},
                              {"mm", to_json(run_sqrt_eps_test(LabeledTrajectory(series.mm)))}};
        }
        return row;
    });

    auto fraction = [&](const char* arm, const char* label) {
        int hits = 0;
        for (const auto& row : rows)
            if (row[arm][label]["p_value"].get<double>() <= cfg.alpha) ++hits;
        return static_cast<double>(hits) / static_cast<double>(rows.size());
    };
    const double power_var = fraction("planted", "var"), power_mm = fraction("planted", "mm");
    const double fp_var = fraction("control", "var"), fp_mm = fraction("control", "mm");
    report.summary = {{"planted_fraction_significant", {{"var", power_var}, {"mm", power_mm}}},
                      {"control_fraction_significant", {{"var", fp_var}, {"mm", fp_mm}}},
                      {"initial_labels", {{"var", omega_var(planted)}, {"mm", omega_mm(planted)}}}};
    report.passed = std::max(power_var, power_mm) >= cfg.min_power && fp_var <= cfg.max_false_positive &&
                    fp_mm <= cfg.max_false_positive;
    for (auto& row : rows) report.trials.push_back(std::move(row));
    return report;
}

ExperimentReport pvalue_scaling(const PlantedConfig& cfg, LabelFunction label, const std::vector<std::int64_t>& k_list,
                                std::uint64_t seed) {
    if (k_list.empty()) throw InvalidInput("need at least one k");
    ExperimentReport report = make_report("pvalue-scaling", seed);
    report.parameters = {{"grid", std::to_string(cfg.width) + "x" + std::to_string(cfg.height)},
                         {"districts", cfg.districts},
                         {"label", std::string(to_string(label))},
                         {"constraints", constraints_json(cfg.constraints)},
                         {"k", k_list}};
    report.tolerance = "descriptive; slope of log p on log k is reported";
    const Geography geo = planted_geography(cfg);
    const Districting planted = planted_districting(geo, cfg.districts, cfg.constraints);
    const std::int64_t k_max = *std::max_element(k_list.begin(), k_list.end());
    const std::vector<double> labels = run_labels(geo, cfg.constraints, planted, label, k_max, seed);

    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::int64_t k : k_list) {
        const std::vector<double> prefix(labels.begin(), labels.begin() + k + 1);
        const OutlierReport r = run_sqrt_eps_test(LabeledTrajectory(prefix));
        report.trials.push_back(to_json(r));
        const double x = std::log(static_cast<double>(k)), y = std::log(r.p_value);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double m = static_cast<double>(k_list.size());
    const double slope = k_list.size() > 1 ? (m * sxy - sx * sy) / (m * sxx - sx * sx) : 0.0;
    report.summary = {{"log_log_slope", slope}};
    return report;
}

}  // namespace sqrteps
