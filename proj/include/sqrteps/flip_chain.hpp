#pragma once

// The regularised single-precinct flip chain on valid districtings. Every
// state has exactly N_max equally likely transitions, loops included, so the
// uniform distribution on valid districtings is stationary.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Sparse>

#include "sqrteps/districting.hpp"
#include "sqrteps/rng.hpp"

namespace sqrteps {

struct BoundaryPair {
    std::size_t precinct = 0;
    int district = 0;  // a district adjacent to the precinct, not its own

    bool operator==(const BoundaryPair&) const = default;
    auto operator<=>(const BoundaryPair&) const = default;
};

/// N_max: twice the number of adjacencies, the degree sum. No districting can
/// have more boundary pairs than this.
std::size_t boundary_capacity(const Geography& geo);

/// The set S of (precinct, neighbouring district) pairs with O(1) uniform
/// draws and O(degree) updates after a move.
class BoundarySet {
public:
    BoundarySet(const Geography& geo, const Districting& districting);

    std::size_t size() const { return pairs_.size(); }
    std::size_t capacity() const { return capacity_; }
    const BoundaryPair& operator[](std::size_t i) const { return pairs_[i]; }
    bool contains(std::size_t precinct, int district) const;
    /// Pairs in ascending order, for comparison against a recomputation.
    std::vector<BoundaryPair> sorted() const;

    /// Re-derives the pairs of `precinct` from the districting.
    void refresh(const Geography& geo, const Districting& districting, std::size_t precinct);

private:
    void insert(std::size_t precinct, int district);
    void erase(std::size_t precinct, int district);

    int n_districts_;
    std::size_t capacity_;
    std::vector<BoundaryPair> pairs_;
    std::vector<std::int64_t> slot_;  // precinct * d + district -> index in pairs_, or -1
};

BoundarySet boundary_pairs(const Geography& geo, const Districting& districting);

enum class StepOutcome { Loop, Rejected, Accepted };

class InvalidDistricting : public std::runtime_error {
public:
    explicit InvalidDistricting(ValidityResult result)
        : std::runtime_error(result.message), result_(std::move(result)) {}
    const ValidityResult& result() const { return result_; }

private:
    ValidityResult result_;
};

/// One chain run over one mutable districting. Holds a reference to `geo`,
/// which must outlive the chain.
class FlipChain {
public:
    static constexpr std::uint64_t kDefaultAuditInterval = 10'000;

    /// Throws InvalidDistricting if `initial` fails is_valid. An audit
    /// interval of 0 disables the periodic full audit.
    FlipChain(const Geography& geo, ValidityConstraints constraints, Districting initial,
              std::uint64_t audit_interval = kDefaultAuditInterval);

    StepOutcome step(Rng& rng);

    /// Would moving `precinct` into `to` keep the current (valid) districting
    /// valid? Only the donor's contiguity, the receiver's simple connectivity,
    /// and the two changed aggregates are examined.
    ValidityResult check_move(std::size_t precinct, int to) const;

    /// Applies the move if check_move allows it; does not count as a step.
    ValidityResult try_move(std::size_t precinct, int to);

    /// Full validity, cache and boundary-set check; throws std::logic_error.
    void audit() const;

    const Districting& state() const { return state_; }
    const BoundarySet& boundary() const { return boundary_; }
    const ValidityConstraints& constraints() const { return constraints_; }
    std::size_t n_max() const { return boundary_.capacity(); }
    std::uint64_t steps() const { return steps_; }
    std::uint64_t accepted() const { return accepted_; }

private:
    void apply(std::size_t precinct, int to);
    bool connected_within(std::span<const std::size_t> targets, std::size_t removed, int district,
                          bool inside) const;

    const Geography* geo_;
    ValidityConstraints constraints_;
    Districting state_;
    BoundarySet boundary_;
    std::uint64_t audit_interval_;
    std::uint64_t steps_ = 0;
    std::uint64_t accepted_ = 0;
    std::vector<std::size_t> exterior_;

    mutable std::vector<std::uint32_t> mark_;
    mutable std::uint32_t epoch_ = 0;
    mutable std::vector<std::size_t> stack_;
    mutable std::vector<DistrictStats> scratch_;
};

/// A single transition from `districting`; returns the next state.
Districting chain_step(const Geography& geo, const Districting& districting, const ValidityConstraints& constraints,
                       Rng& rng);

inline constexpr std::size_t kMaxEnumeratedStates = 100'000;
inline constexpr std::uint64_t kMaxEnumeratedAssignments = 1ULL << 24;

struct StateSpace {
    int n_districts = 0;
    std::size_t n_max = 0;
    std::vector<std::vector<int>> states;
    Eigen::SparseMatrix<double, Eigen::RowMajor> transition;
    std::map<std::vector<int>, std::size_t> index;

    std::optional<std::size_t> find(std::span<const int> assignment) const;
};

/// Every valid labelled districting, found by trying all d^n assignments, and
/// the exact regularised transition matrix between them. Throws ResourceLimit
/// beyond 2^24 assignments or 10^5 valid states.
StateSpace enumerate_states(const Geography& geo, const ValidityConstraints& constraints, int n_districts);

/// The states reachable from `seed` by chain moves, and their matrix.
StateSpace enumerate_states(const Geography& geo, const ValidityConstraints& constraints, const Districting& seed);

/// max_ij |P_ij - P_ji|.
double max_asymmetry(const StateSpace& space);

}  // namespace sqrteps
