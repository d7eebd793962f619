#pragma once

// Exact small-instance quantities: path-enumeration probabilities of
// ell-smallness and the cycle-walk first-dominance probability.

#include <cstdint>
#include <vector>

#include "sqrteps/chain.hpp"

namespace sqrteps {

inline constexpr std::uint64_t kMaxEnumeratedPaths = 10'000'000;

/// rho[j][ell] = Pr(X_j is ell-small among X_0..X_k) with X_0 ~ pi, for
/// 0 <= j, ell <= k, by summing over every length-(k+1) state sequence.
/// Throws ResourceLimit when n_states^(k+1) exceeds kMaxEnumeratedPaths.
std::vector<std::vector<double>> exact_ell_small_table(const FiniteChain& chain, int k);

double exact_ell_small_probability(const FiniteChain& chain, int k, int ell, int j);

/// C(k, k/2) / 2^(k+1): probability that a stationary walk on a cycle much
/// longer than k starts at the strict minimum of its first k steps. k even, >= 2.
double cycle_first_dominance_probability(std::int64_t k);

}  // namespace sqrteps
