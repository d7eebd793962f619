#include "sqrteps/flip_chain.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace sqrteps {

std::size_t boundary_capacity(const Geography& geo) { return 2 * geo.edges().size(); }

BoundarySet::BoundarySet(const Geography& geo, const Districting& districting)
    : n_districts_(districting.n_districts()),
      capacity_(boundary_capacity(geo)),
      slot_(geo.size() * static_cast<std::size_t>(districting.n_districts()), -1) {
    for (std::size_t p = 0; p < geo.size(); ++p) refresh(geo, districting, p);
}

bool BoundarySet::contains(std::size_t precinct, int district) const {
    return slot_[precinct * static_cast<std::size_t>(n_districts_) + static_cast<std::size_t>(district)] >= 0;
}

std::vector<BoundaryPair> BoundarySet::sorted() const {
    std::vector<BoundaryPair> out = pairs_;
    std::sort(out.begin(), out.end());
    return out;
}

void BoundarySet::insert(std::size_t precinct, int district) {
    auto& s = slot_[precinct * static_cast<std::size_t>(n_districts_) + static_cast<std::size_t>(district)];
    if (s >= 0) return;
    s = static_cast<std::int64_t>(pairs_.size());
    pairs_.push_back({precinct, district});
}

void BoundarySet::erase(std::size_t precinct, int district) {
    const std::size_t key = precinct * static_cast<std::size_t>(n_districts_) + static_cast<std::size_t>(district);
    const std::int64_t s = slot_[key];
    if (s < 0) return;
    const BoundaryPair last = pairs_.back();
    pairs_[static_cast<std::size_t>(s)] = last;
    slot_[last.precinct * static_cast<std::size_t>(n_districts_) + static_cast<std::size_t>(last.district)] = s;
    pairs_.pop_back();
    slot_[key] = -1;
}

void BoundarySet::refresh(const Geography& geo, const Districting& districting, std::size_t precinct) {
    const int own = districting.district_of(precinct);
    // districts adjacent to the precinct, in neighbour order
    for (int d = 0; d < n_districts_; ++d) {
        if (d == own) {
            erase(precinct, d);
            continue;
        }
        bool adjacent = false;
        for (const Neighbor& nb : geo.neighbors(precinct))
            if (districting.district_of(nb.precinct) == d) {
                adjacent = true;
                break;
            }
        if (adjacent)
            insert(precinct, d);
        else
            erase(precinct, d);
    }
}

BoundarySet boundary_pairs(const Geography& geo, const Districting& districting) { return {geo, districting}; }

FlipChain::FlipChain(const Geography& geo, ValidityConstraints constraints, Districting initial,
                     std::uint64_t audit_interval)
    : geo_(&geo),
      constraints_(constraints),
      state_(std::move(initial)),
      boundary_(geo, state_),
      audit_interval_(audit_interval),
      mark_(geo.size() + 1, 0) {
    constraints_.validate();
    if (auto r = is_valid(geo, state_, constraints_); !r) throw InvalidDistricting(std::move(r));
    for (std::size_t p = 0; p < geo.size(); ++p)
        if (geo.touches_outer_face(p)) exterior_.push_back(p);
}

// Are all `targets` in one component of the subgraph induced by precincts
// in `district` (inside) or not in it plus the outer face (outside), with
// `removed` deleted? Index geo.size() stands for the outer face.
bool FlipChain::connected_within(std::span<const std::size_t> targets, std::size_t removed, int district,
                                 bool inside) const {
    if (targets.size() <= 1) return true;
    const Geography& geo = *geo_;
    const std::size_t outer = geo.size();
    if (++epoch_ == 0) {
        std::fill(mark_.begin(), mark_.end(), 0);
        epoch_ = 1;
    }
    auto admissible = [&](std::size_t v) {
        return v != removed && (state_.district_of(v) == district) == inside;
    };
    std::size_t found = 1;
    stack_.clear();
    stack_.push_back(targets[0]);
    mark_[targets[0]] = epoch_;
    auto visit = [&](std::size_t w) {
        if (mark_[w] == epoch_) return false;
        mark_[w] = epoch_;
        if (std::find(targets.begin(), targets.end(), w) != targets.end() && ++found == targets.size()) return true;
        stack_.push_back(w);
        return false;
    };
    while (!stack_.empty()) {
        const std::size_t v = stack_.back();
        stack_.pop_back();
        if (v == outer) {
            for (std::size_t w : exterior_)
                if (admissible(w) && visit(w)) return true;
            continue;
        }
        if (!inside && geo.touches_outer_face(v) && visit(outer)) return true;
        for (const Neighbor& nb : geo.neighbors(v))
            if (admissible(nb.precinct) && visit(nb.precinct)) return true;
    }
    return false;
}

ValidityResult FlipChain::check_move(std::size_t precinct, int to) const {
    const Geography& geo = *geo_;
    const int from = state_.district_of(precinct);
    if (to == from || to < 0 || to >= state_.n_districts())
        throw InvalidInput("move target must be another existing district");
    const DistrictStats& src = state_.stats(from);
    if (src.precincts == 1)
        return {ValidityFailure::EmptyDistrict, from, "district " + std::to_string(from) + " would become empty"};

    const Precinct& p = geo.precinct(precinct);
    scratch_.assign(state_.all_stats().begin(), state_.all_stats().end());
    DistrictStats& a = scratch_[static_cast<std::size_t>(from)];
    DistrictStats& b = scratch_[static_cast<std::size_t>(to)];
    a.population -= p.population;
    b.population += p.population;
    const double mean = static_cast<double>(geo.total_population()) / state_.n_districts();
    for (const DistrictStats* s : {&a, &b}) {
        const double dev = std::abs(static_cast<double>(s->population) - mean) / mean;
        if (dev > constraints_.pop_tolerance)
            return {ValidityFailure::Population, s == &a ? from : to, "population deviation " + std::to_string(dev)};
    }

    a.area -= p.area;
    b.area += p.area;
    a.perimeter -= p.exterior_length;
    b.perimeter += p.exterior_length;
    std::size_t inside_targets[64];
    std::size_t n_inside = 0;
    std::size_t outside_targets[65];
    std::size_t n_outside = 0;
    const auto nbrs = geo.neighbors(precinct);
    if (nbrs.size() > 64) throw InvalidInput("precinct degree above 64 is not supported");
    for (const Neighbor& nb : nbrs) {
        const int dn = state_.district_of(nb.precinct);
        a.perimeter += dn == from ? nb.length : -nb.length;
        b.perimeter += dn == to ? -nb.length : nb.length;
        if (dn == from)
            inside_targets[n_inside++] = nb.precinct;
        if (dn != to) outside_targets[n_outside++] = nb.precinct;
    }
    if (geo.touches_outer_face(precinct)) outside_targets[n_outside++] = geo.size();
    const double score = compactness_score(scratch_, constraints_.compactness);
    if (score > constraints_.compactness_threshold)
        return {ValidityFailure::Compactness, -1, "compactness " + std::to_string(score)};

    if (!connected_within({inside_targets, n_inside}, precinct, from, true))
        return {ValidityFailure::Contiguity, from, "district " + std::to_string(from) + " would split"};
    if (!connected_within({outside_targets, n_outside}, precinct, to, false))
        return {ValidityFailure::SimpleConnectivity, to, "district " + std::to_string(to) + " would enclose a hole"};
    return {};
}

StepOutcome FlipChain::step(Rng& rng) {
    ++steps_;
    StepOutcome outcome = StepOutcome::Loop;
    // One draw on [0, N_max): values past N_S are the regularising loops, the
    // rest pick a boundary pair uniformly.
    const std::uint64_t u = rng.uniform_below(n_max());
    if (u < boundary_.size()) {
        const BoundaryPair pick = boundary_[u];
        if (check_move(pick.precinct, pick.district)) {
            apply(pick.precinct, pick.district);
            ++accepted_;
            outcome = StepOutcome::Accepted;
        } else {
            outcome = StepOutcome::Rejected;
        }
    }
    if (audit_interval_ != 0 && steps_ % audit_interval_ == 0) audit();
    return outcome;
}

void FlipChain::apply(std::size_t precinct, int to) {
    state_.move(*geo_, precinct, to);
    boundary_.refresh(*geo_, state_, precinct);
    for (const Neighbor& nb : geo_->neighbors(precinct)) boundary_.refresh(*geo_, state_, nb.precinct);
}

ValidityResult FlipChain::try_move(std::size_t precinct, int to) {
    ValidityResult r = check_move(precinct, to);
    if (r) apply(precinct, to);
    return r;
}

void FlipChain::audit() const {
    if (auto r = is_valid(*geo_, state_, constraints_); !r)
        throw std::logic_error("audit at step " + std::to_string(steps_) + ": " + r.message);
    if (!state_.caches_match(*geo_))
        throw std::logic_error("audit at step " + std::to_string(steps_) + ": district caches drifted");
    if (boundary_.sorted() != BoundarySet(*geo_, state_).sorted())
        throw std::logic_error("audit at step " + std::to_string(steps_) + ": boundary set out of date");
}

Districting chain_step(const Geography& geo, const Districting& districting, const ValidityConstraints& constraints,
                       Rng& rng) {
    FlipChain chain(geo, constraints, districting, 0);
    chain.step(rng);
    return chain.state();
}

std::optional<std::size_t> StateSpace::find(std::span<const int> assignment) const {
    const auto it = index.find(std::vector<int>(assignment.begin(), assignment.end()));
    if (it == index.end()) return std::nullopt;
    return it->second;
}

namespace {

// Moves are checked with the full is_valid, independently of FlipChain's
// incremental check.
void build_transitions(const Geography& geo, const ValidityConstraints& constraints, StateSpace& space,
                       bool grow) {
    using Triplet = Eigen::Triplet<double>;
    std::vector<Triplet> triplets;
    const double unit = 1.0 / static_cast<double>(space.n_max);
    for (std::size_t s = 0; s < space.states.size(); ++s) {
        const Districting current(geo, space.states[s], space.n_districts);
        const BoundarySet pairs(geo, current);
        std::size_t moves = 0;
        for (const BoundaryPair& pr : pairs.sorted()) {
            if (current.stats(current.district_of(pr.precinct)).precincts == 1) continue;
            Districting next = current;
            next.move(geo, pr.precinct, pr.district);
            if (!is_valid(geo, next, constraints)) continue;
            std::vector<int> key(next.assignment().begin(), next.assignment().end());
            auto it = space.index.find(key);
            if (it == space.index.end()) {
                if (!grow) throw std::logic_error("valid neighbour missing from the enumerated state set");
                if (space.states.size() >= kMaxEnumeratedStates)
                    throw ResourceLimit("more than " + std::to_string(kMaxEnumeratedStates) + " valid states");
                it = space.index.emplace(key, space.states.size()).first;
                space.states.push_back(std::move(key));
            }
            triplets.emplace_back(static_cast<int>(s), static_cast<int>(it->second), unit);
            ++moves;
        }
        triplets.emplace_back(static_cast<int>(s), static_cast<int>(s),
                              static_cast<double>(space.n_max - moves) / static_cast<double>(space.n_max));
    }
    const auto n = static_cast<Eigen::Index>(space.states.size());
    space.transition.resize(n, n);
    space.transition.setFromTriplets(triplets.begin(), triplets.end());
}

}  // namespace

StateSpace enumerate_states(const Geography& geo, const ValidityConstraints& constraints, int n_districts) {
    constraints.validate();
    if (n_districts < 1) throw InvalidInput("need at least one district");
    double total = 1.0;
    for (std::size_t i = 0; i < geo.size(); ++i) total *= n_districts;
    if (total > static_cast<double>(kMaxEnumeratedAssignments))
        throw ResourceLimit("d^n = " + std::to_string(total) + " assignments exceed the enumeration guard");

    StateSpace space;
    space.n_districts = n_districts;
    space.n_max = boundary_capacity(geo);
    std::vector<int> assignment(geo.size(), 0);
    std::vector<std::int64_t> counts(static_cast<std::size_t>(n_districts), 0);
    for (;;) {
        std::fill(counts.begin(), counts.end(), 0);
        for (int a : assignment) ++counts[static_cast<std::size_t>(a)];
        if (std::find(counts.begin(), counts.end(), 0) == counts.end()) {
            const Districting d(geo, assignment, n_districts);
            if (is_valid(geo, d, constraints)) {
                if (space.states.size() >= kMaxEnumeratedStates)
                    throw ResourceLimit("more than " + std::to_string(kMaxEnumeratedStates) + " valid states");
                space.index.emplace(assignment, space.states.size());
                space.states.push_back(assignment);
            }
        }
        // odometer, precinct 0 fastest
        std::size_t i = 0;
        while (i < assignment.size() && ++assignment[i] == n_districts) assignment[i++] = 0;
        if (i == assignment.size()) break;
    }
    build_transitions(geo, constraints, space, false);
    return space;
}

StateSpace enumerate_states(const Geography& geo, const ValidityConstraints& constraints, const Districting& seed) {
    constraints.validate();
    if (auto r = is_valid(geo, seed, constraints); !r) throw InvalidDistricting(std::move(r));
    StateSpace space;
    space.n_districts = seed.n_districts();
    space.n_max = boundary_capacity(geo);
    std::vector<int> start(seed.assignment().begin(), seed.assignment().end());
    space.index.emplace(start, 0);
    space.states.push_back(std::move(start));
    // build_transitions appends newly reached states while it scans, so one
    // pass over the growing list is a breadth-first flood fill.
    build_transitions(geo, constraints, space, true);
    return space;
}

double max_asymmetry(const StateSpace& space) {
    const Eigen::SparseMatrix<double, Eigen::RowMajor> transposed = space.transition.transpose();
    const Eigen::SparseMatrix<double, Eigen::RowMajor> diff = space.transition - transposed;
    double worst = 0.0;
    for (int k = 0; k < diff.outerSize(); ++k)
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(diff, k); it; ++it)
            worst = std::max(worst, std::abs(it.value()));
    return worst;
}

}  // namespace sqrteps
