#include "sqrteps/chain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sqrteps/errors.hpp"

namespace sqrteps {

namespace {

constexpr std::size_t kDirectSolveLimit = 2000;

void check_stochastic(const Eigen::MatrixXd& P) {
    if (P.rows() == 0 || P.rows() != P.cols()) throw InvalidInput("transition matrix must be square and nonempty");
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
        double sum = 0.0;
        for (Eigen::Index j = 0; j < P.cols(); ++j) {
            const double v = P(i, j);
            if (!std::isfinite(v) || v < 0.0)
                throw InvalidInput("transition entry (" + std::to_string(i) + "," + std::to_string(j) +
                                   ") is negative or not finite");
            sum += v;
        }
        if (std::abs(sum - 1.0) > kRowSumTolerance)
            throw InvalidInput("row " + std::to_string(i) + " sums to " + std::to_string(sum));
    }
}

double stationarity_residual(const Eigen::MatrixXd& P, std::span<const double> pi) {
    const Eigen::Map<const Eigen::RowVectorXd> v(pi.data(), static_cast<Eigen::Index>(pi.size()));
    return (v * P - v).cwiseAbs().maxCoeff();
}

// Strongly connected components of the positive-entry graph (Kosaraju,
// iterative). Returns component id per state, ids in reverse topological
// order of the condensation.
std::vector<int> strong_components(const Eigen::MatrixXd& P, int& n_components) {
    const auto n = static_cast<std::size_t>(P.rows());
    std::vector<std::vector<std::size_t>> fwd(n), back(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (P(i, j) > 0.0) {
                fwd[i].push_back(j);
                back[j].push_back(i);
            }

    std::vector<std::size_t> order;
    std::vector<char> seen(n, 0);
    for (std::size_t root = 0; root < n; ++root) {
        if (seen[root]) continue;
        std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
        seen[root] = 1;
        while (!stack.empty()) {
            auto& [v, next] = stack.back();
            if (next < fwd[v].size()) {
                const std::size_t w = fwd[v][next++];
                if (!seen[w]) {
                    seen[w] = 1;
                    stack.emplace_back(w, 0);
                }
            } else {
                order.push_back(v);
                stack.pop_back();
            }
        }
    }

    std::vector<int> comp(n, -1);
    n_components = 0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if (comp[*it] >= 0) continue;
        std::vector<std::size_t> stack{*it};
        comp[*it] = n_components;
        while (!stack.empty()) {
            const std::size_t v = stack.back();
            stack.pop_back();
            for (std::size_t w : back[v])
                if (comp[w] < 0) {
                    comp[w] = n_components;
                    stack.push_back(w);
                }
        }
        ++n_components;
    }
    return comp;
}

std::vector<double> solve_irreducible(const Eigen::MatrixXd& P) {
    const Eigen::Index n = P.rows();
    std::vector<double> pi(static_cast<std::size_t>(n));
    if (static_cast<std::size_t>(n) <= kDirectSolveLimit) {
        Eigen::MatrixXd A = P.transpose() - Eigen::MatrixXd::Identity(n, n);
        A.row(n - 1).setOnes();
        Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
        b(n - 1) = 1.0;
        const auto lu = A.partialPivLu();
        Eigen::VectorXd x = lu.solve(b);
        // one step of iterative refinement
        x += lu.solve(b - A * x);
        for (Eigen::Index i = 0; i < n; ++i) pi[static_cast<std::size_t>(i)] = x(i);
    } else {
        Eigen::RowVectorXd v = Eigen::RowVectorXd::Constant(n, 1.0 / static_cast<double>(n));
        for (int it = 0; it < 10'000'000; ++it) {
            Eigen::RowVectorXd next = 0.5 * (v + v * P);
            const double change = (next - v).cwiseAbs().sum();
            v = std::move(next);
            if (change < 1e-14) break;
        }
        for (Eigen::Index i = 0; i < n; ++i) pi[static_cast<std::size_t>(i)] = v(i);
    }
    for (double& x : pi) x = std::max(x, 0.0);
    const double total = std::accumulate(pi.begin(), pi.end(), 0.0);
    for (double& x : pi) x /= total;
    return pi;
}

}  // namespace

Stationary stationary_distribution(const Eigen::MatrixXd& P) {
    check_stochastic(P);
    int n_comp = 0;
    const std::vector<int> comp = strong_components(P, n_comp);
    if (n_comp == 1) return {solve_irreducible(P), true};

    // Pick the first closed class (no positive entry leaving it) and solve there.
    const auto n = static_cast<std::size_t>(P.rows());
    std::vector<char> closed(static_cast<std::size_t>(n_comp), 1);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (P(i, j) > 0.0 && comp[i] != comp[j]) closed[static_cast<std::size_t>(comp[i])] = 0;
    const int target = static_cast<int>(std::find(closed.begin(), closed.end(), 1) - closed.begin());

    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i)
        if (comp[i] == target) members.push_back(i);
    const auto m = static_cast<Eigen::Index>(members.size());
    Eigen::MatrixXd sub(m, m);
    for (Eigen::Index a = 0; a < m; ++a)
        for (Eigen::Index b = 0; b < m; ++b) sub(a, b) = P(members[a], members[b]);
    const std::vector<double> sub_pi = solve_irreducible(sub);

    Stationary out{std::vector<double>(n, 0.0), false};
    for (std::size_t a = 0; a < members.size(); ++a) out.pi[members[a]] = sub_pi[a];
    return out;
}

Stationary stationary_distribution(const FiniteChain& chain) { return stationary_distribution(chain.transition()); }

bool verify_reversibility(const Eigen::MatrixXd& P, std::span<const double> pi, double tol) {
    const auto n = static_cast<std::size_t>(P.rows());
    if (pi.size() != n) throw InvalidInput("pi has the wrong length");
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) worst = std::max(worst, std::abs(pi[i] * P(i, j) - pi[j] * P(j, i)));
    return worst <= tol;
}

bool verify_reversibility(const FiniteChain& chain, double tol) {
    return verify_reversibility(chain.transition(), chain.pi(), tol);
}

FiniteChain::FiniteChain(Eigen::MatrixXd transition, std::vector<double> labels,
                         std::optional<std::vector<double>> pi)
    : transition_(std::move(transition)), labels_(std::move(labels)) {
    check_stochastic(transition_);
    const auto n = static_cast<std::size_t>(transition_.rows());
    if (labels_.size() != n) throw InvalidInput("expected " + std::to_string(n) + " labels");
    if (pi) {
        if (pi->size() != n) throw InvalidInput("pi has the wrong length");
        pi_ = std::move(*pi);
        for (double x : pi_)
            if (!(x >= 0.0)) throw InvalidInput("pi has a negative entry");
        if (std::abs(std::accumulate(pi_.begin(), pi_.end(), 0.0) - 1.0) > kStationarityTolerance)
            throw InvalidInput("pi does not sum to 1");
    } else {
        pi_ = stationary_distribution(transition_).pi;
    }
    if (stationarity_residual(transition_, pi_) > kStationarityTolerance)
        throw InvalidInput("pi is not stationary for the transition matrix");

    cumulative_.resize(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        double run = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            run += transition_(i, j);
            cumulative_[i * n + j] = run;
        }
    }
    pi_cumulative_.resize(n);
    std::partial_sum(pi_.begin(), pi_.end(), pi_cumulative_.begin());
}

FiniteChain FiniteChain::reversible(Eigen::MatrixXd transition, std::vector<double> labels,
                                    std::optional<std::vector<double>> pi) {
    FiniteChain c(std::move(transition), std::move(labels), std::move(pi));
    if (!verify_reversibility(c, kStationarityTolerance)) throw InvalidInput("chain violates detailed balance");
    c.reversible_ = true;
    return c;
}

namespace {

// Inverse-CDF lookup; falls back to the last positive entry when rounding
// leaves u above the final running sum.
std::size_t pick(std::span<const double> cumulative, std::span<const double> weights, double u) {
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    std::size_t idx = static_cast<std::size_t>(it - cumulative.begin());
    if (idx >= cumulative.size()) idx = cumulative.size() - 1;
    while (idx > 0 && weights[idx] <= 0.0) --idx;
    return idx;
}

}  // namespace

std::size_t FiniteChain::step(std::size_t s, Rng& rng) const {
    const std::size_t n = n_states();
    const std::span<const double> cum(cumulative_.data() + s * n, n);
    const double u = rng.uniform01();
    const auto it = std::upper_bound(cum.begin(), cum.end(), u);
    std::size_t idx = static_cast<std::size_t>(it - cum.begin());
    if (idx >= n) idx = n - 1;
    while (idx > 0 && transition_(s, idx) <= 0.0) --idx;
    return idx;
}

std::size_t FiniteChain::draw_stationary(Rng& rng) const { return pick(pi_cumulative_, pi_, rng.uniform01()); }

FiniteChain read_finite_chain(std::istream& in) {
    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> line_numbers;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::vector<double> row;
        std::string tok;
        while (ls >> tok) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(tok, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != tok.size()) throw FormatError("line " + std::to_string(line_no) + ": bad number '" + tok + "'");
            row.push_back(v);
        }
        if (row.empty()) continue;
        rows.push_back(std::move(row));
        line_numbers.push_back(line_no);
    }
    if (rows.empty()) throw FormatError("empty chain file");
    if (rows[0].size() != 1 || rows[0][0] < 1 || rows[0][0] != std::floor(rows[0][0]))
        throw FormatError("line " + std::to_string(line_numbers[0]) + ": expected the state count");
    const auto n = static_cast<std::size_t>(rows[0][0]);
    if (rows.size() != n + 2 && rows.size() != n + 3)
        throw FormatError("expected " + std::to_string(n) + " matrix rows, an optional pi row and a labels row");
    for (std::size_t r = 1; r < rows.size(); ++r)
        if (rows[r].size() != n)
            throw FormatError("line " + std::to_string(line_numbers[r]) + ": expected " + std::to_string(n) + " values");

    Eigen::MatrixXd P(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i + 1][j];
    std::optional<std::vector<double>> pi;
    if (rows.size() == n + 3) pi = rows[n + 1];
    return FiniteChain(std::move(P), rows.back(), std::move(pi));
}

FiniteChain load_finite_chain(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    return read_finite_chain(in);
}

}  // namespace sqrteps
