#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "sqrteps/chain.hpp"
#include "sqrteps/core_test.hpp"
#include "sqrteps/errors.hpp"
#include "sqrteps/flip_chain.hpp"

using namespace sqrteps;

namespace {

Geography grid(int w, int h, std::uint64_t seed = 1) { return grid_geography(w, h, {}, {}, seed); }

const ValidityConstraints kLoose{0.99, CompactnessMode::Perimeter, 1e9};

std::set<BoundaryPair> as_set(const std::vector<BoundaryPair>& v) { return {v.begin(), v.end()}; }

std::vector<BoundaryPair> fresh_pairs(const Geography& geo, const Districting& d) {
    std::set<BoundaryPair> out;
    for (std::size_t p = 0; p < geo.size(); ++p)
        for (const auto& nb : geo.neighbors(p))
            if (d.district_of(nb.precinct) != d.district_of(p)) out.insert({p, d.district_of(nb.precinct)});
    return {out.begin(), out.end()};
}

}  // namespace

TEST(BoundaryPairs, Examples) {
    const Geography line = grid(2, 1);
    const Districting two(line, {0, 1}, 2);
    EXPECT_EQ(boundary_pairs(line, two).size(), 2u);
    EXPECT_EQ(boundary_capacity(line), 2u);
    const Districting one(line, {0, 0}, 1);
    EXPECT_EQ(boundary_pairs(line, one).size(), 0u);
}

TEST(BoundaryPairs, OnePairPerPrecinctAndDistrict) {
    // Cell (1,1) touches district 1 along two sides but forms one pair.
    const Geography g = grid(3, 3);
    const Districting d(g, {1, 1, 1, 1, 0, 0, 0, 0, 0}, 2);
    const auto set = boundary_pairs(g, d);
    EXPECT_TRUE(set.contains(4, 1));
    EXPECT_EQ(set.sorted(), fresh_pairs(g, d));
    EXPECT_LE(set.size(), set.capacity());
}

TEST(BoundaryPairs, NeverExceedCapacity) {
    const Geography g = grid(5, 5);
    Rng rng(4);
    for (int t = 0; t < 300; ++t) {
        std::vector<int> a(25);
        for (int i = 0; i < 25; ++i) a[i] = static_cast<int>(i < 3 ? i : rng.uniform_below(3));
        const Districting d(g, a, 3);
        EXPECT_LE(boundary_pairs(g, d).size(), boundary_capacity(g));
        EXPECT_EQ(boundary_pairs(g, d).sorted(), fresh_pairs(g, d));
    }
}

TEST(FlipChain, RejectsInvalidInitialState) {
    const Geography g = grid(2, 2);
    try {
        FlipChain chain(g, kLoose, Districting(g, {0, 1, 1, 0}, 2));
        FAIL() << "expected InvalidDistricting";
    } catch (const InvalidDistricting& e) {
        EXPECT_EQ(e.result().reason, ValidityFailure::Contiguity);
    }
}

TEST(FlipChain, LoopProbabilityIsOneMinusNsOverNmax) {
    // 1x3 line with districts {0} and {1, 2}: N_S = 2, N_max = 4 in every reachable state.
    const Geography g = grid(3, 1);
    FlipChain chain(g, kLoose, Districting(g, {0, 1, 1}, 2));
    ASSERT_EQ(chain.n_max(), 4u);
    ASSERT_EQ(chain.boundary().size(), 2u);
    const int n = 100000;
    int loops = 0;
    Rng rng(8), shadow(8);
    for (int i = 0; i < n; ++i) {
        const bool predicted_loop = shadow.uniform_below(4) >= 2;
        const auto out = chain.step(rng);
        ASSERT_EQ(chain.boundary().size(), 2u);
        EXPECT_EQ(out == StepOutcome::Loop, predicted_loop);
        loops += out == StepOutcome::Loop;
    }
    EXPECT_NEAR(loops / double(n), 0.5, 4 * std::sqrt(0.25 / n));
}

TEST(FlipChain, DisconnectingMoveLeavesStateUnchanged) {
    const Geography g = grid(3, 3);
    FlipChain chain(g, kLoose, Districting(g, {0, 0, 0, 1, 0, 2, 1, 0, 2}, 3));
    const Districting before = chain.state();
    const auto r = chain.try_move(4, 1);
    EXPECT_EQ(r.reason, ValidityFailure::Contiguity);
    EXPECT_EQ(chain.state(), before);
    EXPECT_TRUE(chain.state().caches_match(g));
}

TEST(FlipChain, IncrementalCheckAgreesWithFullValidity) {
    const Geography g = grid_geography(6, 6, {1000, 300}, {}, 5);
    const std::vector<ValidityConstraints> settings{
        {0.30, CompactnessMode::Perimeter, 52.0},
        {0.50, CompactnessMode::L1, 5.6},
        {0.50, CompactnessMode::L2, 10.0},
        {0.50, CompactnessMode::LInf, 2.0},
        {0.99, CompactnessMode::Perimeter, 1e9},
    };
    std::vector<int> cols(36);
    for (int i = 0; i < 36; ++i) cols[i] = (i % 6) / 2;
    std::int64_t compared = 0, disagreements = 0, rejected = 0;
    for (const auto& c : settings) {
        FlipChain chain(g, c, Districting(g, cols, 3), 1);
        Rng rng(derive_seed(31, compared));
        for (int s = 0; s < 400; ++s) {
            for (std::size_t i = 0; i < chain.boundary().size(); ++i) {
                const auto pair = chain.boundary()[i];
                Districting moved = chain.state();
                const bool empties = moved.stats(moved.district_of(pair.precinct)).precincts == 1;
                bool full = false;
                if (!empties) {
                    moved.move(g, pair.precinct, pair.district);
                    full = is_valid(g, moved, c).valid();
                }
                const bool incremental = chain.check_move(pair.precinct, pair.district).valid();
                disagreements += full != incremental;
                rejected += !full;
                ++compared;
            }
            chain.step(rng);
        }
    }
    EXPECT_EQ(disagreements, 0);
    EXPECT_GT(rejected, 100);
    EXPECT_GT(compared - rejected, 100);
}

TEST(FlipChain, StepsStayValidAndLocal) {
    const Geography g = grid_geography(8, 8, {1000, 100}, {}, 3);
    const ValidityConstraints c{0.2, CompactnessMode::Perimeter, 90.0};
    std::vector<int> cols(64);
    for (int i = 0; i < 64; ++i) cols[i] = (i % 8) / 2;
    FlipChain chain(g, c, Districting(g, cols, 4), 0);
    Rng rng(12);
    auto before = as_set(chain.boundary().sorted());
    for (int s = 0; s < 5000; ++s) {
        const Districting prev = chain.state();
        if (chain.step(rng) != StepOutcome::Accepted) continue;
        ASSERT_TRUE(is_valid(g, chain.state(), c).valid());
        std::size_t moved = g.size();
        for (std::size_t p = 0; p < g.size(); ++p)
            if (prev.district_of(p) != chain.state().district_of(p)) moved = p;
        ASSERT_LT(moved, g.size());
        std::set<std::size_t> near{moved};
        for (const auto& nb : g.neighbors(moved)) near.insert(nb.precinct);
        const auto after = as_set(chain.boundary().sorted());
        ASSERT_EQ(chain.boundary().sorted(), fresh_pairs(g, chain.state()));
        std::vector<BoundaryPair> diff;
        std::set_symmetric_difference(before.begin(), before.end(), after.begin(), after.end(),
                                      std::back_inserter(diff));
        for (const auto& pr : diff) EXPECT_TRUE(near.count(pr.precinct)) << pr.precinct;
        before = after;
    }
    EXPECT_GT(chain.accepted(), 50u);
}

TEST(FlipChain, CachesMatchAfterTenThousandSteps) {
    const Geography g = grid_geography(10, 10, {1000, 250}, {}, 8);
    std::vector<int> cols(100);
    for (int i = 0; i < 100; ++i) cols[i] = (i % 10) * 5 / 10;
    FlipChain chain(g, {0.25, CompactnessMode::L1, 60.0}, Districting(g, cols, 5));
    Rng rng(77);
    for (int s = 0; s < 10000; ++s) chain.step(rng);
    EXPECT_EQ(chain.steps(), 10000u);
    EXPECT_GT(chain.accepted(), 0u);
    const auto fresh = chain.state().recompute_stats(g);
    for (int d = 0; d < 5; ++d) {
        const auto& s = chain.state().stats(d);
        EXPECT_EQ(s.precincts, fresh[d].precincts);
        EXPECT_EQ(s.population, fresh[d].population);
        EXPECT_EQ(s.votes_dem, fresh[d].votes_dem);
        EXPECT_EQ(s.votes_total, fresh[d].votes_total);
        EXPECT_NEAR(s.area, fresh[d].area, 1e-9);
        EXPECT_NEAR(s.perimeter, fresh[d].perimeter, 1e-9);
    }
    EXPECT_NO_THROW(chain.audit());
}

TEST(FlipChain, SameSeedSameRun) {
    const Geography g = grid(6, 6);
    std::vector<int> cols(36);
    for (int i = 0; i < 36; ++i) cols[i] = (i % 6) / 3;
    FlipChain a(g, {0.2, CompactnessMode::Perimeter, 1e9}, Districting(g, cols, 2));
    FlipChain b(g, {0.2, CompactnessMode::Perimeter, 1e9}, Districting(g, cols, 2));
    Rng ra(5), rb(5);
    for (int s = 0; s < 3000; ++s) ASSERT_EQ(a.step(ra), b.step(rb));
    EXPECT_EQ(a.state(), b.state());
}

TEST(ChainStep, ReturnsValidNextState) {
    const Geography g = grid(4, 4);
    const ValidityConstraints c{0.3, CompactnessMode::Perimeter, 1e9};
    std::vector<int> cols(16);
    for (int i = 0; i < 16; ++i) cols[i] = (i % 4) / 2;
    Districting d(g, cols, 2);
    Rng rng(3);
    int changed = 0;
    for (int s = 0; s < 2000; ++s) {
        Districting next = chain_step(g, d, c, rng);
        ASSERT_TRUE(is_valid(g, next, c).valid());
        changed += !(next == d);
        d = std::move(next);
    }
    EXPECT_GT(changed, 0);
}

TEST(EnumerateStates, TwoByTwoEqualHalves) {
    const Geography g = grid(2, 2);
    const auto space = enumerate_states(g, {0.01, CompactnessMode::Perimeter, 1e9}, 2);
    ASSERT_EQ(space.states.size(), 4u);
    const std::set<std::vector<int>> want{{0, 0, 1, 1}, {1, 1, 0, 0}, {0, 1, 0, 1}, {1, 0, 1, 0}};
    EXPECT_EQ(std::set<std::vector<int>>(space.states.begin(), space.states.end()), want);
    EXPECT_EQ(space.n_max, 8u);
    EXPECT_LE(max_asymmetry(space), 1e-12);
    const Eigen::MatrixXd dense(space.transition);
    for (int i = 0; i < dense.rows(); ++i) EXPECT_NEAR(dense.row(i).sum(), 1.0, 1e-12);
}

TEST(EnumerateStates, SymmetricWithExactOffDiagonals) {
    const Geography g = grid(3, 3, 4);
    const ValidityConstraints c{0.35, CompactnessMode::Perimeter, 1e9};
    const auto space = enumerate_states(g, c, 2);
    ASSERT_EQ(space.states.size(), 64u);
    const Eigen::MatrixXd dense(space.transition);
    for (int i = 0; i < dense.rows(); ++i) {
        EXPECT_NEAR(dense.row(i).sum(), 1.0, 1e-12);
        for (int j = 0; j < dense.cols(); ++j) {
            if (i != j && dense(i, j) != 0.0) EXPECT_EQ(dense(i, j), 1.0 / static_cast<double>(space.n_max));
            EXPECT_EQ(dense(i, j), dense(j, i));
        }
    }
    const std::vector<double> uniform(space.states.size(), 1.0 / space.states.size());
    EXPECT_TRUE(verify_reversibility(dense, uniform, 1e-12));
    const auto pi = stationary_distribution(dense);
    EXPECT_TRUE(pi.irreducible);
    for (double x : pi.pi) EXPECT_NEAR(x, 1.0 / 64, 1e-10);

    // Flood fill from one state reaches the same connected space.
    const auto reached = enumerate_states(g, c, Districting(g, space.states.front(), 2));
    EXPECT_EQ(reached.states.size(), 64u);
    for (const auto& s : reached.states) EXPECT_TRUE(space.find(s).has_value());
}

TEST(EnumerateStates, GuardsAgainstHugeSpaces) {
    const Geography g = grid(5, 5);
    EXPECT_THROW(enumerate_states(g, kLoose, 2), ResourceLimit);
}

TEST(EnumerateStates, ChainTransitionsMatchMatrix) {
    const Geography g = grid(2, 2);
    const ValidityConstraints c{0.5, CompactnessMode::Perimeter, 1e9};
    const auto space = enumerate_states(g, c, 2);
    ASSERT_EQ(space.states.size(), 12u);
    const Eigen::MatrixXd dense(space.transition);
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(12, 12);
    Eigen::VectorXd visits = Eigen::VectorXd::Zero(12);
    FlipChain chain(g, c, Districting(g, space.states[0], 2));
    Rng rng(6);
    std::size_t cur = 0;
    for (int s = 0; s < 300000; ++s) {
        chain.step(rng);
        const std::size_t next = *space.find(chain.state().assignment());
        counts(cur, next) += 1;
        visits(cur) += 1;
        cur = next;
    }
    for (int i = 0; i < 12; ++i)
        for (int j = 0; j < 12; ++j) {
            const double p = dense(i, j), n = visits(i);
            const double hat = counts(i, j) / n;
            if (p == 0.0) {
                EXPECT_EQ(counts(i, j), 0.0);
            } else {
                EXPECT_LE(std::abs(hat - p), 4 * std::sqrt(p * (1 - p) / n)) << i << "," << j;
            }
        }
}

TEST(FlipChain, TestHoldsSizeUnderStationaryStart) {
    // Starting from an exact uniform draw over the enumerated states, the
    // fraction of runs significant at 0.05 must not exceed 0.05 beyond noise.
    const Geography g = grid(3, 3, 4);
    const ValidityConstraints c{0.35, CompactnessMode::Perimeter, 1e9};
    const auto space = enumerate_states(g, c, 2);
    const int runs = 2000;
    int significant = 0;
    for (int r = 0; r < runs; ++r) {
        Rng rng(derive_seed(2718, static_cast<std::uint64_t>(r)));
        const auto& start = space.states[rng.uniform_below(space.states.size())];
        FlipChain chain(g, c, Districting(g, start, 2));
        std::vector<double> labels{omega_var(chain.state())};
        for (int s = 0; s < 60; ++s) {
            chain.step(rng);
            labels.push_back(omega_var(chain.state()));
        }
        significant += run_sqrt_eps_test(LabeledTrajectory(labels)).p_value <= 0.05;
    }
    EXPECT_LE(significant / double(runs), 0.05 + 3 * std::sqrt(0.05 * 0.95 / runs));
}
