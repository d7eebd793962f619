#pragma once

#include <concepts>
#include <cstdint>
#include <string>
#include <vector>

#include "sqrteps/errors.hpp"
#include "sqrteps/rng.hpp"

namespace sqrteps {

/// A chain that can advance a state by one random transition.
template <class C>
concept SteppableChain = requires(const C& chain, const typename C::state_type& s, Rng& rng) {
    { chain.is_valid_state(s) } -> std::convertible_to<bool>;
    { chain.step(s, rng) } -> std::convertible_to<typename C::state_type>;
};

template <class C>
concept LabeledChain = SteppableChain<C> && requires(const C& chain, const typename C::state_type& s) {
    { chain.label(s) } -> std::convertible_to<double>;
};

template <class State>
struct TrajectorySample {
    std::vector<State> states;  // X_0 .. X_k, loops recorded as repeats
    std::uint64_t seed = 0;
    std::string generator_id{Rng::generator_id};
};

/// Continues `rng`'s stream. The returned sample records rng.seed().
template <SteppableChain C>
TrajectorySample<typename C::state_type> sample_trajectory(const C& chain, typename C::state_type start,
                                                           std::int64_t k, Rng& rng) {
    if (k < 0) throw InvalidInput("k must be nonnegative");
    if (!chain.is_valid_state(start)) throw InvalidInput("start is not a state of the chain");
    TrajectorySample<typename C::state_type> out;
    out.seed = rng.seed();
    out.states.reserve(static_cast<std::size_t>(k) + 1);
    out.states.push_back(std::move(start));
    for (std::int64_t i = 0; i < k; ++i) out.states.push_back(chain.step(out.states.back(), rng));
    return out;
}

template <SteppableChain C>
TrajectorySample<typename C::state_type> sample_trajectory(const C& chain, typename C::state_type start,
                                                           std::int64_t k, std::uint64_t seed) {
    Rng rng(seed);
    return sample_trajectory(chain, std::move(start), k, rng);
}

template <LabeledChain C>
std::vector<double> trajectory_labels(const C& chain, const std::vector<typename C::state_type>& states) {
    std::vector<double> out;
    out.reserve(states.size());
    for (const auto& s : states) out.push_back(static_cast<double>(chain.label(s)));
    return out;
}

/// Simple random walk on the N-cycle: X_i = X_{i-1} +/- 1 mod N, each with
/// probability 1/2. Labels are the positions themselves.
class CycleWalk {
public:
    using state_type = std::int64_t;

    explicit CycleWalk(std::int64_t n_positions) : n_(n_positions) {
        if (n_ < 3) throw InvalidInput("a cycle walk needs at least 3 positions");
    }

    std::int64_t n_positions() const { return n_; }
    bool is_valid_state(std::int64_t s) const { return s >= 0 && s < n_; }
    std::int64_t step(std::int64_t s, Rng& rng) const { return rng.coin() ? (s + 1) % n_ : (s + n_ - 1) % n_; }
    double label(std::int64_t s) const { return static_cast<double>(s); }
    /// Uniform start, the walk's stationary law.
    std::int64_t draw_stationary(Rng& rng) const {
        return static_cast<std::int64_t>(rng.uniform_below(static_cast<std::uint64_t>(n_)));
    }

private:
    std::int64_t n_;
};

}  // namespace sqrteps
