#pragma once

// Finite Markov chains given by an explicit transition matrix.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sqrteps/rng.hpp"

namespace sqrteps {

inline constexpr double kRowSumTolerance = 1e-12;
inline constexpr double kStationarityTolerance = 1e-10;

struct Stationary {
    std::vector<double> pi;
    bool irreducible = true;  // false: pi is supported on one closed class only
};

/// Row-stochastic matrix plus a stationary distribution and a label per state.
/// Immutable after construction.
class FiniteChain {
public:
    using state_type = std::size_t;

    /// Throws InvalidInput if a row does not sum to 1 within 1e-12, an entry
    /// is negative, the label count is wrong, or `pi` (computed when absent)
    /// is not fixed by the matrix within 1e-10.
    FiniteChain(Eigen::MatrixXd transition, std::vector<double> labels,
                std::optional<std::vector<double>> pi = std::nullopt);

    /// As above, and additionally requires detailed balance within 1e-10.
    static FiniteChain reversible(Eigen::MatrixXd transition, std::vector<double> labels,
                                  std::optional<std::vector<double>> pi = std::nullopt);

    std::size_t n_states() const { return labels_.size(); }
    const Eigen::MatrixXd& transition() const { return transition_; }
    double p(std::size_t from, std::size_t to) const { return transition_(from, to); }
    std::span<const double> pi() const { return pi_; }
    std::span<const double> labels() const { return labels_; }
    double label(std::size_t s) const { return labels_[s]; }
    bool declared_reversible() const { return reversible_; }

    bool is_valid_state(std::size_t s) const { return s < n_states(); }
    std::size_t step(std::size_t s, Rng& rng) const;
    /// Draws a state from pi.
    std::size_t draw_stationary(Rng& rng) const;

private:
    Eigen::MatrixXd transition_;
    std::vector<double> labels_;
    std::vector<double> pi_;
    std::vector<double> cumulative_;  // row-major running sums of transition_
    std::vector<double> pi_cumulative_;
    bool reversible_ = false;
};

/// Solves pi P = pi. Direct linear solve for n <= 2000, lazy power iteration
/// beyond. Throws InvalidInput for a non-stochastic matrix.
Stationary stationary_distribution(const Eigen::MatrixXd& transition);
Stationary stationary_distribution(const FiniteChain& chain);

/// max_ij |pi_i P_ij - pi_j P_ji| <= tol.
bool verify_reversibility(const Eigen::MatrixXd& transition, std::span<const double> pi, double tol);
bool verify_reversibility(const FiniteChain& chain, double tol);

/// Text format: n on the first line, n rows of P, an optional pi row, then the
/// labels row. Whitespace separated; blank lines and '#' comments ignored.
FiniteChain read_finite_chain(std::istream& in);
FiniteChain load_finite_chain(const std::string& path);

}  // namespace sqrteps
