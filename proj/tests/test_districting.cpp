#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "sqrteps/districting.hpp"
#include "sqrteps/errors.hpp"
#include "sqrteps/geography.hpp"

using namespace sqrteps;

namespace {

Geography grid(int w, int h) { return grid_geography(w, h, {}, {}, 1); }

/// District of each cell from a row-major picture.
Districting picture(const Geography& geo, std::vector<int> cells, int d) { return Districting(geo, std::move(cells), d); }

Districting columns(const Geography& geo, int w, int h) {
    std::vector<int> a;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) a.push_back(c);
    return Districting(geo, a, w);
}

}  // namespace

TEST(Districting, ValidatesAssignment) {
    const Geography g = grid(2, 2);
    EXPECT_THROW(Districting(g, {0, 1, 0}, 2), InvalidInput);
    EXPECT_THROW(Districting(g, {0, 2, 0, 0}, 2), InvalidInput);
    EXPECT_THROW(Districting(g, {0, 0, 0, 0}, 2), InvalidInput);
    EXPECT_THROW(Districting(g, {0, 0, 0, 0}, 0), InvalidInput);
}

TEST(Districting, StatsOfColumns) {
    const Geography g = grid(4, 4);
    const Districting d = columns(g, 4, 4);
    for (int k = 0; k < 4; ++k) {
        EXPECT_EQ(d.stats(k).precincts, 4);
        EXPECT_EQ(d.stats(k).population, 4000);
        EXPECT_DOUBLE_EQ(d.stats(k).area, 4.0);
        EXPECT_DOUBLE_EQ(d.stats(k).perimeter, 10.0);
    }
    EXPECT_TRUE(d.caches_match(g));
}

TEST(Districting, MoveKeepsCachesCoherent) {
    const Geography g = grid_geography(6, 6, {1000, 200}, {}, 9);
    Districting d = columns(g, 6, 6);
    std::mt19937_64 gen(3);
    std::uniform_int_distribution<std::size_t> cell(0, g.size() - 1);
    std::uniform_int_distribution<int> dist(0, 5);
    for (int i = 0; i < 2000; ++i) {
        const std::size_t p = cell(gen);
        const int to = dist(gen);
        if (d.stats(d.district_of(p)).precincts == 1) continue;
        d.move(g, p, to);
    }
    EXPECT_TRUE(d.caches_match(g));
    const auto fresh = d.recompute_stats(g);
    for (int k = 0; k < 6; ++k) {
        EXPECT_EQ(d.stats(k).population, fresh[k].population);
        EXPECT_EQ(d.stats(k).votes_dem, fresh[k].votes_dem);
        EXPECT_NEAR(d.stats(k).perimeter, fresh[k].perimeter, 1e-9);
    }
    EXPECT_THROW(d.move(g, 0, 6), InvalidInput);
}

TEST(Contiguity, Examples) {
    const Geography g = grid(2, 2);
    EXPECT_TRUE(is_contiguous(g, picture(g, {0, 1, 1, 1}, 2), 0));
    const Districting diagonal = picture(g, {0, 1, 1, 0}, 2);
    EXPECT_FALSE(is_contiguous(g, diagonal, 0));
    EXPECT_FALSE(is_contiguous(g, diagonal, 1));
    EXPECT_TRUE(is_contiguous(g, picture(g, {0, 0, 0, 0}, 1), 0));
}

TEST(SimpleConnectivity, Examples) {
    const Geography g = grid(3, 3);
    const Districting ring = picture(g, {0, 0, 0, 0, 1, 0, 0, 0, 0}, 2);
    EXPECT_FALSE(is_simply_connected(g, ring, 0));
    EXPECT_TRUE(is_simply_connected(g, ring, 1));
    EXPECT_TRUE(is_simply_connected(g, picture(g, {0, 0, 0, 1, 1, 1, 1, 1, 1}, 2), 0));
    EXPECT_TRUE(is_simply_connected(g, picture(g, std::vector<int>(9, 0), 1), 0));
}

TEST(SimpleConnectivity, HoleFilledByTwoDistricts) {
    // District 0 surrounds a 2x1 pocket split between districts 1 and 2.
    const Geography g = grid(4, 3);
    const Districting d = picture(g, {0, 0, 0, 0, 0, 1, 2, 0, 0, 0, 0, 0}, 3);
    EXPECT_FALSE(is_simply_connected(g, d, 0));
    EXPECT_TRUE(is_simply_connected(g, d, 1));
}

TEST(PolsbyPopper, Examples) {
    EXPECT_NEAR(polsby_popper(1.0, 4.0), std::numbers::pi / 4, 1e-12);
    EXPECT_NEAR(polsby_popper(2.0, 6.0), 2 * std::numbers::pi / 9, 1e-12);
    EXPECT_NEAR(polsby_popper(std::numbers::pi, 2 * std::numbers::pi), 1.0, 1e-12);
    EXPECT_THROW(polsby_popper(1.0, 0.0), InvalidInput);

    const Geography g = grid(2, 1);
    EXPECT_NEAR(polsby_popper(picture(g, {0, 0}, 1), 0), 2 * std::numbers::pi / 9, 1e-12);
}

TEST(CompactnessScore, Modes) {
    const Geography g = grid(4, 4);
    const Districting d = columns(g, 4, 4);
    const double inv_c = 100.0 / (16.0 * std::numbers::pi);  // P^2 / 4 pi A
    EXPECT_DOUBLE_EQ(compactness_score(d.all_stats(), CompactnessMode::Perimeter), 40.0);
    EXPECT_NEAR(compactness_score(d.all_stats(), CompactnessMode::L1), 4 * inv_c, 1e-12);
    EXPECT_NEAR(compactness_score(d.all_stats(), CompactnessMode::L2), 4 * inv_c * inv_c, 1e-12);
    EXPECT_NEAR(compactness_score(d.all_stats(), CompactnessMode::LInf), inv_c, 1e-12);
    EXPECT_EQ(parse_compactness_mode("L2"), CompactnessMode::L2);
    EXPECT_EQ(parse_compactness_mode("linf"), CompactnessMode::LInf);
    EXPECT_EQ(to_string(CompactnessMode::Perimeter), "perimeter");
    EXPECT_THROW(parse_compactness_mode("area"), InvalidInput);
}

TEST(IsValid, FourColumns) {
    const Geography g = grid(4, 4);
    const ValidityConstraints c{0.02, CompactnessMode::Perimeter, 40.0};
    const auto r = is_valid(g, columns(g, 4, 4), c);
    EXPECT_TRUE(r.valid()) << r.message;
    const auto tight = is_valid(g, columns(g, 4, 4), {0.02, CompactnessMode::Perimeter, 39.9});
    EXPECT_EQ(tight.reason, ValidityFailure::Compactness);
}

TEST(IsValid, HoleIsReported) {
    const Geography g = grid(4, 4);
    // District 0 rings the cell at row 1, column 1.
    const Districting d = picture(g,
                                  {0, 0, 0, 2,
                                   0, 1, 0, 2,
                                   0, 0, 0, 2,
                                   3, 3, 3, 2},
                                  4);
    const auto r = is_valid(g, d, {0.02, CompactnessMode::Perimeter, 1e9});
    EXPECT_EQ(r.reason, ValidityFailure::SimpleConnectivity);
    EXPECT_EQ(r.district, 0);
    EXPECT_EQ(to_string(r.reason), "simple-connectivity");
    EXPECT_FALSE(static_cast<bool>(r));
}

TEST(IsValid, OtherReasons) {
    const Geography g = grid(4, 4);
    const Districting unequal = picture(g, {0, 1, 1, 1, 0, 1, 1, 1, 0, 1, 1, 1, 0, 1, 1, 1}, 2);
    EXPECT_EQ(is_valid(g, unequal, {1e-9, CompactnessMode::Perimeter, 1e9}).reason, ValidityFailure::Population);
    EXPECT_TRUE(is_valid(g, unequal, {0.6, CompactnessMode::Perimeter, 1e9}).valid());

    const Districting split = picture(g, {0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1}, 2);
    EXPECT_EQ(is_valid(g, split, {0.5, CompactnessMode::Perimeter, 1e9}).reason, ValidityFailure::Contiguity);
    EXPECT_THROW((ValidityConstraints{0.0, CompactnessMode::L1, 1.0}.validate()), InvalidInput);
}

TEST(MaxPopulationDeviation, RelativeToMean) {
    const Geography g = grid(4, 4);
    const Districting unequal = picture(g, {0, 1, 1, 1, 0, 1, 1, 1, 0, 1, 1, 1, 0, 1, 1, 1}, 2);
    EXPECT_DOUBLE_EQ(max_population_deviation(unequal.all_stats(), g.total_population()), 0.5);
}

TEST(OmegaVar, Examples) {
    const std::vector<double> equal{0.3, 0.3, 0.3}, two{0.0, 1.0}, three{0.4, 0.5, 0.6};
    EXPECT_NEAR(omega_var(equal), 0.0, 1e-15);
    EXPECT_DOUBLE_EQ(omega_var(two), -0.25);
    EXPECT_NEAR(omega_var(three), -0.0066667, 1e-7);
}

TEST(OmegaMM, Examples) {
    const std::vector<double> skew{0.4, 0.5, 0.9}, sym{0.1, 0.5, 0.9}, even{0.2, 0.4, 0.6, 0.8};
    EXPECT_NEAR(omega_mm(skew), -0.1, 1e-15);
    EXPECT_NEAR(omega_mm(sym), 0.0, 1e-15);
    EXPECT_NEAR(omega_mm(even), 0.0, 1e-15);
    const std::vector<double> unsorted{0.9, 0.4, 0.5};
    EXPECT_NEAR(omega_mm(unsorted), -0.1, 1e-15);
}

TEST(Labels, EmptyVoteDistrictIsAnError) {
    std::vector<Precinct> ps(2);
    ps[0] = {"a", 1.0, 3.0, 10, 0, 0, 0};
    ps[1] = {"b", 1.0, 3.0, 10, 4, 3, 8};
    const Geography g(ps, {{0, 1, 1.0}});
    const Districting d(g, {0, 1}, 2);
    EXPECT_THROW(dem_shares(d), InvalidInput);
    EXPECT_THROW(omega_var(d), InvalidInput);
    EXPECT_THROW(omega_mm(d), InvalidInput);
}

TEST(Labels, SharesUseTotalVotes) {
    std::vector<Precinct> ps(2);
    ps[0] = {"a", 1.0, 3.0, 10, 3, 3, 10};
    ps[1] = {"b", 1.0, 3.0, 10, 4, 3, 8};
    const Geography g(ps, {{0, 1, 1.0}});
    const auto s = dem_shares(Districting(g, {0, 1}, 2));
    EXPECT_DOUBLE_EQ(s[0], 0.3);
    EXPECT_DOUBLE_EQ(s[1], 0.5);
}

TEST(Labels, InvariantUnderDistrictRelabeling) {
    const Geography g = grid_geography(8, 8, {1000, 300}, {}, 17);
    std::vector<int> base(64);
    for (int i = 0; i < 64; ++i) base[i] = (i % 8) / 2;
    std::vector<int> perm{0, 1, 2, 3};
    const Districting ref(g, base, 4);
    const double var = omega_var(ref), mm = omega_mm(ref);
    while (std::next_permutation(perm.begin(), perm.end())) {
        std::vector<int> relabeled(64);
        for (int i = 0; i < 64; ++i) relabeled[i] = perm[base[i]];
        const Districting d(g, relabeled, 4);
        EXPECT_EQ(omega_var(d), var);
        EXPECT_EQ(omega_mm(d), mm);
        EXPECT_EQ(evaluate_label(LabelFunction::Var, d), var);
        EXPECT_EQ(evaluate_label(LabelFunction::MM, d), mm);
    }
    EXPECT_EQ(parse_label_function("mm"), LabelFunction::MM);
    EXPECT_THROW(parse_label_function("median"), InvalidInput);
}

TEST(PackedSweep, BalancedAndValid) {
    const Geography g = grid_geography(12, 12, {}, {}, 7);
    const Districting d = packed_sweep_districting(g, 4);
    for (int k = 0; k < 4; ++k) EXPECT_EQ(d.stats(k).precincts, 36);
    EXPECT_TRUE(is_valid(g, d, {0.02, CompactnessMode::Perimeter, 1e9}).valid());
    // The first district sits on the high-share right edge.
    const auto shares = dem_shares(d);
    EXPECT_EQ(std::max_element(shares.begin(), shares.end()) - shares.begin(), 0);

    std::vector<Precinct> ps{{"a", 1, 3, 1, 0, 0, 1}, {"b", 1, 3, 1, 0, 0, 1}};
    EXPECT_THROW(packed_sweep_districting(Geography(ps, {{0, 1, 1.0}}), 2), InvalidInput);
    EXPECT_THROW(packed_sweep_districting(g, 0), InvalidInput);
}

TEST(DistrictingJson, RoundTrip) {
    const Geography g = grid(4, 4);
    const Districting d = columns(g, 4, 4);
    const auto doc = districting_to_json(g, d);
    EXPECT_EQ(doc["districts"], 4);
    EXPECT_EQ(doc["assignment"]["r2c3"], 3);
    EXPECT_EQ(districting_from_json(g, doc), d);

    auto missing = doc;
    missing["assignment"].erase("r0c0");
    EXPECT_THROW(districting_from_json(g, missing), FormatError);
    auto unknown = doc;
    unknown["assignment"]["r9c9"] = 0;
    EXPECT_THROW(districting_from_json(g, unknown), FormatError);
    auto out_of_range = doc;
    out_of_range["assignment"]["r0c0"] = 7;
    EXPECT_THROW(districting_from_json(g, out_of_range), std::exception);
}
