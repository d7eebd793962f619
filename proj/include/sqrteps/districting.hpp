#pragma once

// Districtings of a Geography, the validity rules (contiguity, simple
// connectivity, population balance, compactness) and the two partisan labels.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sqrteps/geography.hpp"

namespace sqrteps {

struct DistrictStats {
    std::int64_t precincts = 0;
    std::int64_t population = 0;
    double area = 0.0;
    double perimeter = 0.0;
    std::int64_t votes_dem = 0;
    std::int64_t votes_total = 0;

    bool operator==(const DistrictStats&) const = default;
};

/// Assignment of every precinct to one of d labelled districts, with cached
/// per-district aggregates kept current by move().
class Districting {
public:
    /// Throws InvalidInput if an entry is outside 0..d-1, the size does not
    /// match the geography, or a district is empty.
    Districting(const Geography& geo, std::vector<int> assignment, int n_districts);

    int n_districts() const { return static_cast<int>(stats_.size()); }
    std::size_t size() const { return assignment_.size(); }
    int district_of(std::size_t precinct) const { return assignment_[precinct]; }
    std::span<const int> assignment() const { return assignment_; }
    const DistrictStats& stats(int district) const { return stats_[static_cast<std::size_t>(district)]; }
    std::span<const DistrictStats> all_stats() const { return stats_; }

    /// Reassigns one precinct and updates the two affected aggregates. No
    /// validity check; may not empty a district.
    void move(const Geography& geo, std::size_t precinct, int to);

    /// Aggregates rebuilt from scratch.
    std::vector<DistrictStats> recompute_stats(const Geography& geo) const;
    /// Integer fields exact, lengths and areas within `tol`.
    bool caches_match(const Geography& geo, double tol = 1e-9) const;
    /// Replaces the cached aggregates with a fresh recomputation.
    void resync(const Geography& geo) { stats_ = recompute_stats(geo); }

    bool operator==(const Districting& other) const { return assignment_ == other.assignment_; }

private:
    std::vector<int> assignment_;
    std::vector<DistrictStats> stats_;
};

enum class CompactnessMode { Perimeter, L1, L2, LInf };

std::string_view to_string(CompactnessMode mode);
/// Accepts perimeter, l1, l2, linf (case-insensitive). Throws InvalidInput.
CompactnessMode parse_compactness_mode(std::string_view name);

struct ValidityConstraints {
    double pop_tolerance = 0.02;  // max |pop_D - mean| / mean
    CompactnessMode compactness = CompactnessMode::Perimeter;
    double compactness_threshold = 1e300;

    void validate() const;
};

enum class ValidityFailure { None, EmptyDistrict, Contiguity, SimpleConnectivity, Population, Compactness };

std::string_view to_string(ValidityFailure reason);

struct ValidityResult {
    ValidityFailure reason = ValidityFailure::None;
    int district = -1;
    std::string message;

    bool valid() const { return reason == ValidityFailure::None; }
    explicit operator bool() const { return valid(); }
};

bool is_contiguous(const Geography& geo, const Districting& districting, int district);

/// The precincts outside `district` together with the outer face form one
/// connected piece, i.e. the district encloses no hole.
bool is_simply_connected(const Geography& geo, const Districting& districting, int district);

/// 4 pi A / P^2. Throws InvalidInput for a nonpositive perimeter.
double polsby_popper(double area, double perimeter);
double polsby_popper(const Districting& districting, int district);

/// The aggregate compared against the compactness threshold: sum of
/// perimeters, sum of 1/C, sum of 1/C^2, or max of 1/C.
double compactness_score(std::span<const DistrictStats> stats, CompactnessMode mode);

double max_population_deviation(std::span<const DistrictStats> stats, std::int64_t total_population);

/// Checks in order: nonempty districts, contiguity, simple connectivity,
/// population, compactness. Reports the first failure.
ValidityResult is_valid(const Geography& geo, const Districting& districting, const ValidityConstraints& constraints);

/// Democratic share of each district's total vote. Throws InvalidInput for a
/// district without votes.
std::vector<double> dem_shares(const Districting& districting);

/// -(mean of squares - square of mean) of the shares.
double omega_var(std::span<const double> shares);
double omega_var(const Districting& districting);

/// median - mean of the shares; even counts take the midpoint of the two
/// central values.
double omega_mm(std::span<const double> shares);
double omega_mm(const Districting& districting);

enum class LabelFunction { Var, MM };
std::string_view to_string(LabelFunction f);
LabelFunction parse_label_function(std::string_view name);
double evaluate_label(LabelFunction f, const Districting& districting);

/// Grid-only planted districting: a serpentine column sweep starting at the
/// most Democratic (right-hand) edge cut into d population-balanced runs, so
/// the first ceil(d/3) districts pack the highest-share columns. Throws
/// InvalidInput for a non-grid geography or d outside 1..size.
Districting packed_sweep_districting(const Geography& geo, int n_districts);

/// {"format": 1, "districts": d, "assignment": {"<precinct id>": district, ...}}
nlohmann::json districting_to_json(const Geography& geo, const Districting& districting);
Districting districting_from_json(const Geography& geo, const nlohmann::json& doc);
Districting load_districting(const Geography& geo, const std::string& path);

}  // namespace sqrteps
