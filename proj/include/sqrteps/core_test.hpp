#pragma once

// Arithmetic of the sqrt(epsilon) outlier test.
//
// A presented state sigma_0 is compared against the labels seen along a
// trajectory sigma_0, ..., sigma_k started from it. If sigma_0's label is an
// epsilon-outlier (at most epsilon*(k+1) indices i, index 0 included, have
// label_i <= label_0), then under the null X_0 ~ pi for a reversible chain the
// observation is significant at p = sqrt(2*epsilon). Only the ranking of the
// labels matters.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace sqrteps {

/// Labels omega(X_0), ..., omega(X_k); index 0 is the presented state.
class LabeledTrajectory {
public:
    /// Throws InvalidInput if `labels` is empty or holds a non-finite value.
    explicit LabeledTrajectory(std::vector<double> labels);

    std::span<const double> labels() const { return labels_; }
    std::int64_t k() const { return static_cast<std::int64_t>(labels_.size()) - 1; }
    double presented() const { return labels_.front(); }

private:
    std::vector<double> labels_;
};

struct OutlierReport {
    std::int64_t k = 0;
    std::int64_t count_le = 0;  // #{i in 0..k : label_i <= label_0}
    double epsilon = 1.0;       // count_le / (k+1)
    std::int64_t ell = 0;       // count_le - 1
    double p_value = 1.0;
    std::optional<double> tv_slack;
};

struct PowerParams {
    double epsilon = 0.0;  // pi-mass of states labelled at or below the presented one
    std::int64_t k = 0;    // steps
    double tau2 = 1.0;     // relaxation time 1/(1 - lambda_2)
    double pi_min = 1.0;
    double chi = 1.0;      // sqrt(sum_s Pr(X_0=s)^2 / pi(s))

    /// Throws InvalidInput unless tau2 > 0, 0 < pi_min <= 1, chi >= 1,
    /// 0 <= epsilon <= 1 and k >= 0.
    void validate() const;
};

/// #{i : label_i <= label_0}. Ties count, and index 0 counts itself.
std::int64_t count_le(std::span<const double> labels);
std::int64_t count_le(const LabeledTrajectory& traj);

/// #{i != j : label_i <= label_j}; label_j is ell-small iff the result <= ell.
std::int64_t ell_small_count(std::span<const double> labels, std::size_t j);

/// min(1, sqrt(2 epsilon)).
double sqrt_eps_pvalue(double epsilon);

/// min(1, sqrt(2 epsilon) + epsilon1), valid when TV(X_0, pi) <= epsilon1.
double pvalue_with_tv(double epsilon, double epsilon1);

OutlierReport run_sqrt_eps_test(const LabeledTrajectory& traj,
                                std::optional<double> tv_slack = std::nullopt);

/// min(1, sqrt((2 ell + 1)/(k + 1))), the bound on Pr(X_0 is ell-small).
double theorem_bound(std::int64_t ell, std::int64_t k);

/// Lower bound on the probability that the presented state shows up as a
/// 2*epsilon-outlier after k steps, clamped to [0, 1].
double power_lower_bound(const PowerParams& p);

/// Gillman's tail bound on Pr(N_n(A)/n - pi(A) > gamma). Not clamped.
double gillman_bound(double gamma, std::int64_t n, double tau2, double chi);

}  // namespace sqrteps
