#include "sqrteps/oracle.hpp"

#include <cmath>
#include <string>

#include "sqrteps/errors.hpp"

namespace sqrteps {

namespace {

// Neumaier-compensated accumulator; the Observation-1 symmetry is checked
// at 1e-12 on sums of up to 10^7 terms.
struct CompensatedSum {
    double sum = 0.0;
    double carry = 0.0;
    void add(double x) {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x))
            carry += (sum - t) + x;
        else
            carry += (x - t) + sum;
        sum = t;
    }
    double value() const { return sum + carry; }
};

class PathEnumerator {
public:
    PathEnumerator(const FiniteChain& chain, int k)
        : chain_(chain), k_(k), states_(static_cast<std::size_t>(k) + 1), labels_(states_.size()),
          buckets_(states_.size(), std::vector<CompensatedSum>(states_.size())) {}

    void run() {
        const auto pi = chain_.pi();
        for (std::size_t s = 0; s < chain_.n_states(); ++s) {
            if (pi[s] <= 0.0) continue;
            states_[0] = s;
            labels_[0] = chain_.label(s);
            extend(1, pi[s]);
        }
    }

    // buckets_[j][c] holds Pr(exactly c other indices have label <= label_j).
    std::vector<std::vector<double>> table() const {
        const std::size_t m = states_.size();
        std::vector<std::vector<double>> rho(m, std::vector<double>(m));
        for (std::size_t j = 0; j < m; ++j) {
            CompensatedSum run;
            for (std::size_t ell = 0; ell < m; ++ell) {
                run.add(buckets_[j][ell].value());
                rho[j][ell] = run.value();
            }
        }
        return rho;
    }

private:
    void extend(std::size_t depth, double prob) {
        if (depth == states_.size()) {
            record(prob);
            return;
        }
        const std::size_t prev = states_[depth - 1];
        for (std::size_t s = 0; s < chain_.n_states(); ++s) {
            const double step = chain_.p(prev, s);
            if (step <= 0.0) continue;
            states_[depth] = s;
            labels_[depth] = chain_.label(s);
            extend(depth + 1, prob * step);
        }
    }

    void record(double prob) {
        const std::size_t m = labels_.size();
        for (std::size_t j = 0; j < m; ++j) {
            std::size_t c = 0;
            for (std::size_t i = 0; i < m; ++i)
                if (i != j && labels_[i] <= labels_[j]) ++c;
            buckets_[j][c].add(prob);
        }
    }

    const FiniteChain& chain_;
    int k_;
    std::vector<std::size_t> states_;
    std::vector<double> labels_;
    std::vector<std::vector<CompensatedSum>> buckets_;
};

void check_guard(std::size_t n_states, int k) {
    if (k < 0) throw InvalidInput("k must be nonnegative");
    double paths = 1.0;
    for (int i = 0; i <= k; ++i) paths *= static_cast<double>(n_states);
    if (paths > static_cast<double>(kMaxEnumeratedPaths))
        throw ResourceLimit(std::to_string(n_states) + "^" + std::to_string(k + 1) +
                            " paths exceed the enumeration guard");
}

}  // namespace

std::vector<std::vector<double>> exact_ell_small_table(const FiniteChain& chain, int k) {
    check_guard(chain.n_states(), k);
    PathEnumerator e(chain, k);
    e.run();
    return e.table();
}

double exact_ell_small_probability(const FiniteChain& chain, int k, int ell, int j) {
    check_guard(chain.n_states(), k);
    if (j < 0 || j > k) throw InvalidInput("j must lie in 0..k");
    if (ell < 0) throw InvalidInput("ell must be nonnegative");
    if (ell > k) return 1.0;
    return exact_ell_small_table(chain, k)[static_cast<std::size_t>(j)][static_cast<std::size_t>(ell)];
}

double cycle_first_dominance_probability(std::int64_t k) {
    if (k < 2 || k % 2 != 0) throw InvalidInput("k must be even and at least 2");
    const std::int64_t m = k / 2;
    if (k <= 62) {
        // exact binomial, then a single rounding in ldexp
        unsigned __int128 c = 1;
        for (std::int64_t i = 1; i <= m; ++i) c = c * static_cast<unsigned>(m + i) / static_cast<unsigned>(i);
        return std::ldexp(static_cast<double>(c), -static_cast<int>(k + 1));
    }
    // C(2m, m) / 4^m = prod_{i=1..m} (2i-1)/(2i)
    double p = 0.5;
    for (std::int64_t i = 1; i <= m; ++i) p *= static_cast<double>(2 * i - 1) / static_cast<double>(2 * i);
    return p;
}

}  // namespace sqrteps
