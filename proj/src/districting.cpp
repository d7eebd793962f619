#include "sqrteps/districting.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

namespace sqrteps {

Districting::Districting(const Geography& geo, std::vector<int> assignment, int n_districts)
    : assignment_(std::move(assignment)) {
    if (n_districts < 1) throw InvalidInput("need at least one district");
    if (assignment_.size() != geo.size())
        throw InvalidInput("assignment covers " + std::to_string(assignment_.size()) + " precincts, geography has " +
                           std::to_string(geo.size()));
    for (std::size_t i = 0; i < assignment_.size(); ++i)
        if (assignment_[i] < 0 || assignment_[i] >= n_districts)
            throw InvalidInput("precinct '" + geo.precinct(i).id + "' assigned to district " +
                               std::to_string(assignment_[i]) + " outside 0.." + std::to_string(n_districts - 1));
    stats_.resize(static_cast<std::size_t>(n_districts));
    stats_ = recompute_stats(geo);
    for (int d = 0; d < n_districts; ++d)
        if (stats(d).precincts == 0) throw InvalidInput("district " + std::to_string(d) + " is empty");
}

std::vector<DistrictStats> Districting::recompute_stats(const Geography& geo) const {
    std::vector<DistrictStats> out(stats_.size());
    for (std::size_t i = 0; i < assignment_.size(); ++i) {
        DistrictStats& s = out[static_cast<std::size_t>(assignment_[i])];
        const Precinct& p = geo.precinct(i);
        ++s.precincts;
        s.population += p.population;
        s.area += p.area;
        s.perimeter += p.exterior_length;
        s.votes_dem += p.votes_dem;
        s.votes_total += p.votes_total;
    }
    for (const Adjacency& e : geo.edges()) {
        const int da = assignment_[e.a], db = assignment_[e.b];
        if (da != db) {
            out[static_cast<std::size_t>(da)].perimeter += e.length;
            out[static_cast<std::size_t>(db)].perimeter += e.length;
        }
    }
    return out;
}

bool Districting::caches_match(const Geography& geo, double tol) const {
    const auto fresh = recompute_stats(geo);
    for (std::size_t d = 0; d < fresh.size(); ++d) {
        const DistrictStats& a = stats_[d];
        const DistrictStats& b = fresh[d];
        if (a.precincts != b.precincts || a.population != b.population || a.votes_dem != b.votes_dem ||
            a.votes_total != b.votes_total)
            return false;
        if (std::abs(a.area - b.area) > tol || std::abs(a.perimeter - b.perimeter) > tol) return false;
    }
    return true;
}

void Districting::move(const Geography& geo, std::size_t precinct, int to) {
    const int from = assignment_[precinct];
    if (from == to) return;
    if (to < 0 || to >= n_districts()) throw InvalidInput("target district out of range");
    DistrictStats& src = stats_[static_cast<std::size_t>(from)];
    DistrictStats& dst = stats_[static_cast<std::size_t>(to)];
    if (src.precincts == 1) throw InvalidInput("move would empty district " + std::to_string(from));
    const Precinct& p = geo.precinct(precinct);

    --src.precincts;
    ++dst.precincts;
    src.population -= p.population;
    dst.population += p.population;
    src.area -= p.area;
    dst.area += p.area;
    src.votes_dem -= p.votes_dem;
    dst.votes_dem += p.votes_dem;
    src.votes_total -= p.votes_total;
    dst.votes_total += p.votes_total;

    src.perimeter -= p.exterior_length;
    dst.perimeter += p.exterior_length;
    for (const Neighbor& nb : geo.neighbors(precinct)) {
        const int dn = assignment_[nb.precinct];
        // edge leaves `from`'s boundary or becomes part of it
        if (dn == from)
            src.perimeter += nb.length;
        else
            src.perimeter -= nb.length;
        if (dn == to)
            dst.perimeter -= nb.length;
        else
            dst.perimeter += nb.length;
    }
    assignment_[precinct] = to;
}

std::string_view to_string(CompactnessMode mode) {
    switch (mode) {
        case CompactnessMode::Perimeter: return "perimeter";
        case CompactnessMode::L1: return "l1";
        case CompactnessMode::L2: return "l2";
        case CompactnessMode::LInf: return "linf";
    }
    return "?";
}

CompactnessMode parse_compactness_mode(std::string_view name) {
    std::string s(name);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (s == "perimeter") return CompactnessMode::Perimeter;
    if (s == "l1") return CompactnessMode::L1;
    if (s == "l2") return CompactnessMode::L2;
    if (s == "linf") return CompactnessMode::LInf;
    throw InvalidInput("unknown compactness measure '" + std::string(name) + "'");
}

void ValidityConstraints::validate() const {
    if (!(pop_tolerance > 0.0)) throw InvalidInput("population tolerance must be positive");
    if (!(compactness_threshold > 0.0)) throw InvalidInput("compactness threshold must be positive");
}

std::string_view to_string(ValidityFailure reason) {
    switch (reason) {
        case ValidityFailure::None: return "valid";
        case ValidityFailure::EmptyDistrict: return "empty-district";
        case ValidityFailure::Contiguity: return "contiguity";
        case ValidityFailure::SimpleConnectivity: return "simple-connectivity";
        case ValidityFailure::Population: return "population";
        case ValidityFailure::Compactness: return "compactness";
    }
    return "?";
}

bool is_contiguous(const Geography& geo, const Districting& districting, int district) {
    const auto assign = districting.assignment();
    const auto first = std::find(assign.begin(), assign.end(), district);
    if (first == assign.end()) return false;
    std::vector<char> seen(geo.size(), 0);
    std::vector<std::size_t> stack{static_cast<std::size_t>(first - assign.begin())};
    seen[stack.back()] = 1;
    std::int64_t reached = 1;
    while (!stack.empty()) {
        const std::size_t v = stack.back();
        stack.pop_back();
        for (const Neighbor& nb : geo.neighbors(v))
            if (!seen[nb.precinct] && assign[nb.precinct] == district) {
                seen[nb.precinct] = 1;
                ++reached;
                stack.push_back(nb.precinct);
            }
    }
    return reached == std::count(assign.begin(), assign.end(), district);
}

bool is_simply_connected(const Geography& geo, const Districting& districting, int district) {
    const auto assign = districting.assignment();
    const std::size_t n = geo.size();
    // Flood from the outer face through every precinct not in the district.
    std::vector<char> seen(n, 0);
    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < n; ++i)
        if (assign[i] != district && geo.touches_outer_face(i)) {
            seen[i] = 1;
            stack.push_back(i);
        }
    while (!stack.empty()) {
        const std::size_t v = stack.back();
        stack.pop_back();
        for (const Neighbor& nb : geo.neighbors(v))
            if (!seen[nb.precinct] && assign[nb.precinct] != district) {
                seen[nb.precinct] = 1;
                stack.push_back(nb.precinct);
            }
    }
    for (std::size_t i = 0; i < n; ++i)
        if (assign[i] != district && !seen[i]) return false;
    return true;
}

double polsby_popper(double area, double perimeter) {
    if (!(perimeter > 0.0)) throw InvalidInput("Polsby-Popper needs a positive perimeter");
    return 4.0 * std::numbers::pi * area / (perimeter * perimeter);
}

double polsby_popper(const Districting& districting, int district) {
    const DistrictStats& s = districting.stats(district);
    return polsby_popper(s.area, s.perimeter);
}

double compactness_score(std::span<const DistrictStats> stats, CompactnessMode mode) {
    double score = 0.0;
    for (const DistrictStats& s : stats) {
        if (mode == CompactnessMode::Perimeter) {
            score += s.perimeter;
            continue;
        }
        const double inv = 1.0 / polsby_popper(s.area, s.perimeter);
        switch (mode) {
            case CompactnessMode::L1: score += inv; break;
            case CompactnessMode::L2: score += inv * inv; break;
            case CompactnessMode::LInf: score = std::max(score, inv); break;
            case CompactnessMode::Perimeter: break;
        }
    }
    return score;
}

double max_population_deviation(std::span<const DistrictStats> stats, std::int64_t total_population) {
    const double mean = static_cast<double>(total_population) / static_cast<double>(stats.size());
    double worst = 0.0;
    for (const DistrictStats& s : stats)
        worst = std::max(worst, std::abs(static_cast<double>(s.population) - mean) / mean);
    return worst;
}

ValidityResult is_valid(const Geography& geo, const Districting& districting, const ValidityConstraints& constraints) {
    const int d = districting.n_districts();
    for (int k = 0; k < d; ++k)
        if (districting.stats(k).precincts == 0)
            return {ValidityFailure::EmptyDistrict, k, "district " + std::to_string(k) + " is empty"};
    for (int k = 0; k < d; ++k)
        if (!is_contiguous(geo, districting, k))
            return {ValidityFailure::Contiguity, k, "district " + std::to_string(k) + " is not contiguous"};
    for (int k = 0; k < d; ++k)
        if (!is_simply_connected(geo, districting, k))
            return {ValidityFailure::SimpleConnectivity, k, "district " + std::to_string(k) + " encloses a hole"};

    const auto stats = districting.recompute_stats(geo);
    const double mean = static_cast<double>(geo.total_population()) / d;
    for (int k = 0; k < d; ++k) {
        const double dev = std::abs(static_cast<double>(stats[static_cast<std::size_t>(k)].population) - mean) / mean;
        if (dev > constraints.pop_tolerance)
            return {ValidityFailure::Population, k,
                    "district " + std::to_string(k) + " deviates " + std::to_string(dev) + " from the mean population"};
    }
    const double score = compactness_score(stats, constraints.compactness);
    if (score > constraints.compactness_threshold)
        return {ValidityFailure::Compactness, -1,
                std::string(to_string(constraints.compactness)) + " compactness " + std::to_string(score) +
                    " exceeds threshold " + std::to_string(constraints.compactness_threshold)};
    return {};
}

std::vector<double> dem_shares(const Districting& districting) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(districting.n_districts()));
    for (const DistrictStats& s : districting.all_stats()) {
        if (s.votes_total <= 0) throw InvalidInput("a district has no votes");
        out.push_back(static_cast<double>(s.votes_dem) / static_cast<double>(s.votes_total));
    }
    return out;
}

// Both labels sort first so the value depends only on the multiset of
// shares, bit for bit, whatever the district numbering.
double omega_var(std::span<const double> shares) {
    if (shares.size() < 2) throw InvalidInput("omega_var needs at least two districts");
    std::vector<double> s(shares.begin(), shares.end());
    std::sort(s.begin(), s.end());
    const double d = static_cast<double>(s.size());
    double sum = 0.0, sum_sq = 0.0;
    for (double x : s) {
        sum += x;
        sum_sq += x * x;
    }
    const double mean = sum / d;
    return -(sum_sq / d - mean * mean);
}

double omega_var(const Districting& districting) { return omega_var(dem_shares(districting)); }

double omega_mm(std::span<const double> shares) {
    if (shares.size() < 2) throw InvalidInput("omega_mm needs at least two districts");
    std::vector<double> s(shares.begin(), shares.end());
    std::sort(s.begin(), s.end());
    const std::size_t m = s.size();
    const double median = m % 2 == 1 ? s[m / 2] : 0.5 * (s[m / 2 - 1] + s[m / 2]);
    const double mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(m);
    return median - mean;
}

double omega_mm(const Districting& districting) { return omega_mm(dem_shares(districting)); }

std::string_view to_string(LabelFunction f) { return f == LabelFunction::Var ? "var" : "mm"; }

LabelFunction parse_label_function(std::string_view name) {
    if (name == "var") return LabelFunction::Var;
    if (name == "mm") return LabelFunction::MM;
    throw InvalidInput("unknown label function '" + std::string(name) + "' (expected var or mm)");
}

double evaluate_label(LabelFunction f, const Districting& districting) {
    return f == LabelFunction::Var ? omega_var(districting) : omega_mm(districting);
}

Districting packed_sweep_districting(const Geography& geo, int n_districts) {
    if (!geo.grid()) throw InvalidInput("the packed sweep needs a grid geography");
    if (n_districts < 1 || static_cast<std::size_t>(n_districts) > geo.size())
        throw InvalidInput("district count must lie in 1..number of precincts");
    const int w = geo.grid()->width, h = geo.grid()->height;
    std::vector<std::size_t> order;
    order.reserve(geo.size());
    for (int step = 0; step < w; ++step) {
        const int c = w - 1 - step;
        for (int i = 0; i < h; ++i) {
            const int r = step % 2 == 0 ? i : h - 1 - i;
            order.push_back(static_cast<std::size_t>(r * w + c));
        }
    }
    const auto total = static_cast<double>(geo.total_population());
    std::vector<int> assignment(geo.size());
    double before = 0.0;
    for (std::size_t p : order) {
        assignment[p] = std::min(n_districts - 1, static_cast<int>(std::floor(before * n_districts / total)));
        before += static_cast<double>(geo.precinct(p).population);
    }
    return Districting(geo, std::move(assignment), n_districts);
}

nlohmann::json districting_to_json(const Geography& geo, const Districting& districting) {
    nlohmann::json doc;
    doc["format"] = 1;
    doc["districts"] = districting.n_districts();
    auto& a = doc["assignment"] = nlohmann::json::object();
    for (std::size_t i = 0; i < geo.size(); ++i) a[geo.precinct(i).id] = districting.district_of(i);
    return doc;
}

Districting districting_from_json(const Geography& geo, const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("format") || doc["format"] != 1)
        throw FormatError("districting document needs \"format\": 1");
    if (!doc.contains("districts") || !doc["districts"].is_number_integer())
        throw FormatError("districting document needs an integer \"districts\"");
    if (!doc.contains("assignment") || !doc["assignment"].is_object())
        throw FormatError("districting document needs an \"assignment\" object");
    const int d = doc["districts"].get<int>();
    std::vector<int> assignment(geo.size(), -1);
    for (const auto& [id, value] : doc["assignment"].items()) {
        const auto idx = geo.index_of(id);
        if (!idx) throw FormatError("assignment names unknown precinct '" + id + "'");
        if (!value.is_number_integer()) throw FormatError("assignment for '" + id + "' is not an integer");
        assignment[*idx] = value.get<int>();
    }
    for (std::size_t i = 0; i < geo.size(); ++i)
        if (assignment[i] < 0 && !doc["assignment"].contains(geo.precinct(i).id))
            throw FormatError("precinct '" + geo.precinct(i).id + "' has no district");
    return Districting(geo, std::move(assignment), d);
}

Districting load_districting(const Geography& geo, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(path + ": " + e.what());
    }
    return districting_from_json(geo, doc);
}

}  // namespace sqrteps
