#include "sqrteps/geography.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "sqrteps/rng.hpp"

namespace sqrteps {

namespace {

constexpr double kPerimeterTolerance = 1e-9;

using Kind = GeographyError::Kind;

}  // namespace

Geography::Geography(std::vector<Precinct> precincts, std::vector<Adjacency> edges,
                     std::optional<std::vector<double>> perimeters, std::optional<GridShape> grid)
    : precincts_(std::move(precincts)), edges_(std::move(edges)), grid_(grid) {
    const std::size_t n = precincts_.size();
    if (n == 0) throw GeographyError(Kind::BadRecord, "geography has no precincts");

    for (std::size_t i = 0; i < n; ++i) {
        const Precinct& p = precincts_[i];
        if (!index_.emplace(p.id, i).second) throw GeographyError(Kind::DuplicateId, "duplicate precinct id '" + p.id + "'");
        if (!(p.area > 0.0) || !std::isfinite(p.area))
            throw GeographyError(Kind::BadRecord, "precinct '" + p.id + "' has nonpositive area");
        if (!(p.exterior_length >= 0.0) || !std::isfinite(p.exterior_length))
            throw GeographyError(Kind::BadRecord, "precinct '" + p.id + "' has negative exterior length");
        if (p.population < 0 || p.votes_dem < 0 || p.votes_rep < 0 || p.votes_total < 0)
            throw GeographyError(Kind::BadRecord, "precinct '" + p.id + "' has a negative count");
        if (p.votes_dem + p.votes_rep > p.votes_total)
            throw GeographyError(Kind::BadRecord, "precinct '" + p.id + "' has more party votes than total votes");
        total_population_ += p.population;
    }

    std::vector<std::size_t> degree(n, 0);
    for (Adjacency& e : edges_) {
        if (e.a >= n || e.b >= n) throw GeographyError(Kind::UnknownId, "adjacency refers to an unknown precinct");
        if (e.a == e.b) throw GeographyError(Kind::SelfAdjacency, "precinct '" + precincts_[e.a].id + "' is adjacent to itself");
        if (!(e.length > 0.0) || !std::isfinite(e.length))
            throw GeographyError(Kind::NonpositiveLength, "adjacency ('" + precincts_[e.a].id + "', '" +
                                                              precincts_[e.b].id + "') has nonpositive shared length");
        if (e.a > e.b) std::swap(e.a, e.b);
        ++degree[e.a];
        ++degree[e.b];
    }
    std::sort(edges_.begin(), edges_.end(), [](const Adjacency& x, const Adjacency& y) {
        return std::tie(x.a, x.b) < std::tie(y.a, y.b);
    });
    for (std::size_t i = 1; i < edges_.size(); ++i)
        if (edges_[i].a == edges_[i - 1].a && edges_[i].b == edges_[i - 1].b)
            throw GeographyError(Kind::BadRecord, "adjacency ('" + precincts_[edges_[i].a].id + "', '" +
                                                      precincts_[edges_[i].b].id + "') listed twice");

    offsets_.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) offsets_[i + 1] = offsets_[i] + degree[i];
    neighbors_.resize(offsets_[n]);
    std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
    for (const Adjacency& e : edges_) {
        neighbors_[fill[e.a]++] = {e.b, e.length};
        neighbors_[fill[e.b]++] = {e.a, e.length};
    }

    perimeter_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double total = precincts_[i].exterior_length;
        for (const Neighbor& nb : neighbors(i)) total += nb.length;
        perimeter_[i] = total;
    }
    if (perimeters) {
        if (perimeters->size() != n) throw GeographyError(Kind::BadRecord, "perimeter list has the wrong length");
        for (std::size_t i = 0; i < n; ++i)
            if (std::abs((*perimeters)[i] - perimeter_[i]) > kPerimeterTolerance)
                throw GeographyError(Kind::PerimeterMismatch,
                                     "precinct '" + precincts_[i].id + "': exterior plus shared lengths " +
                                         std::to_string(perimeter_[i]) + " != perimeter " +
                                         std::to_string((*perimeters)[i]));
    }
}

std::optional<std::size_t> Geography::index_of(const std::string& id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

Geography geography_from_json(const nlohmann::json& doc) {
    auto bad = [](const std::string& what) { return GeographyError(Kind::BadRecord, what); };
    if (!doc.is_object()) throw bad("geography document must be a JSON object");
    if (!doc.contains("format") || doc["format"] != 1) throw bad("unsupported or missing \"format\" (expected 1)");
    if (!doc.contains("precincts") || !doc["precincts"].is_array()) throw bad("missing \"precincts\" array");
    if (!doc.contains("adjacency") || !doc["adjacency"].is_array()) throw bad("missing \"adjacency\" array");

    std::vector<Precinct> precincts;
    std::vector<double> perimeters;
    bool any_perimeter = false;
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < doc["precincts"].size(); ++i) {
        const auto& r = doc["precincts"][i];
        try {
            Precinct p;
            p.id = r.at("id").get<std::string>();
            p.area = r.at("area").get<double>();
            p.exterior_length = r.at("exterior_length").get<double>();
            p.population = r.at("population").get<std::int64_t>();
            p.votes_dem = r.at("votes_dem").get<std::int64_t>();
            p.votes_rep = r.at("votes_rep").get<std::int64_t>();
            p.votes_total = r.at("votes_total").get<std::int64_t>();
            if (r.contains("perimeter")) {
                any_perimeter = true;
                perimeters.push_back(r["perimeter"].get<double>());
            } else {
                perimeters.push_back(std::nan(""));
            }
            if (!index.emplace(p.id, i).second)
                throw GeographyError(Kind::DuplicateId, "duplicate precinct id '" + p.id + "'");
            precincts.push_back(std::move(p));
        } catch (const nlohmann::json::exception& e) {
            throw bad("precinct record " + std::to_string(i) + ": " + e.what());
        }
    }

    // Directed records keyed by (from, to); each must have its mirror.
    std::map<std::pair<std::size_t, std::size_t>, double> directed;
    for (std::size_t i = 0; i < doc["adjacency"].size(); ++i) {
        const auto& r = doc["adjacency"][i];
        std::string a, b;
        double len = 0.0;
        try {
            a = r.at("a").get<std::string>();
            b = r.at("b").get<std::string>();
            len = r.at("length").get<double>();
        } catch (const nlohmann::json::exception& e) {
            throw bad("adjacency record " + std::to_string(i) + ": " + e.what());
        }
        const auto ia = index.find(a), ib = index.find(b);
        if (ia == index.end() || ib == index.end())
            throw GeographyError(Kind::UnknownId, "adjacency record " + std::to_string(i) + " ('" + a + "', '" + b +
                                                      "') names an unknown precinct");
        if (ia->second == ib->second)
            throw GeographyError(Kind::SelfAdjacency, "adjacency record " + std::to_string(i) + ": '" + a +
                                                          "' is adjacent to itself");
        if (!(len > 0.0))
            throw GeographyError(Kind::NonpositiveLength, "adjacency record " + std::to_string(i) + " ('" + a +
                                                              "', '" + b + "') has nonpositive shared length");
        if (!directed.emplace(std::pair{ia->second, ib->second}, len).second)
            throw bad("adjacency ('" + a + "', '" + b + "') listed twice");
    }
    std::vector<Adjacency> edges;
    for (const auto& [key, len] : directed) {
        const auto mirror = directed.find({key.second, key.first});
        const std::string& a = precincts[key.first].id;
        const std::string& b = precincts[key.second].id;
        if (mirror == directed.end())
            throw GeographyError(Kind::Asymmetric, "adjacency ('" + a + "', '" + b + "') has no mirror ('" + b +
                                                       "', '" + a + "')");
        if (mirror->second != len)
            throw GeographyError(Kind::Asymmetric, "adjacency ('" + a + "', '" + b + "') lengths disagree");
        if (key.first < key.second) edges.push_back({key.first, key.second, len});
    }

    std::optional<std::vector<double>> perims;
    if (any_perimeter) {
        // fill missing entries with the computed value so only supplied ones are checked
        std::vector<double> computed(precincts.size());
        for (std::size_t i = 0; i < precincts.size(); ++i) computed[i] = precincts[i].exterior_length;
        for (const auto& e : edges) {
            computed[e.a] += e.length;
            computed[e.b] += e.length;
        }
        perims = perimeters;
        for (std::size_t i = 0; i < precincts.size(); ++i)
            if (std::isnan((*perims)[i])) (*perims)[i] = computed[i];
    }
    std::optional<GridShape> grid;
    if (doc.contains("grid")) grid = GridShape{doc["grid"].at("width").get<int>(), doc["grid"].at("height").get<int>()};
    return Geography(std::move(precincts), std::move(edges), std::move(perims), grid);
}

nlohmann::json geography_to_json(const Geography& geo) {
    nlohmann::json doc;
    doc["format"] = 1;
    if (geo.grid()) doc["grid"] = {{"width", geo.grid()->width}, {"height", geo.grid()->height}};
    auto& ps = doc["precincts"] = nlohmann::json::array();
    for (std::size_t i = 0; i < geo.size(); ++i) {
        const Precinct& p = geo.precinct(i);
        ps.push_back({{"id", p.id},
                      {"area", p.area},
                      {"exterior_length", p.exterior_length},
                      {"perimeter", geo.perimeter(i)},
                      {"population", p.population},
                      {"votes_dem", p.votes_dem},
                      {"votes_rep", p.votes_rep},
                      {"votes_total", p.votes_total}});
    }
    auto& adj = doc["adjacency"] = nlohmann::json::array();
    for (const Adjacency& e : geo.edges()) {
        adj.push_back({{"a", geo.precinct(e.a).id}, {"b", geo.precinct(e.b).id}, {"length", e.length}});
        adj.push_back({{"a", geo.precinct(e.b).id}, {"b", geo.precinct(e.a).id}, {"length", e.length}});
    }
    return doc;
}

Geography load_geography(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(path + ": " + e.what());
    }
    return geography_from_json(doc);
}

void save_geography(const Geography& geo, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << geography_to_json(geo).dump(1) << '\n';
}

Geography grid_geography(int width, int height, const PopulationModel& pop, const VoteModel& votes,
                         std::uint64_t seed) {
    if (width < 1 || height < 1) throw InvalidInput("grid dimensions must be positive");
    if (pop.base <= pop.jitter || pop.jitter < 0) throw InvalidInput("population model must keep populations positive");
    Rng rng(seed);
    std::vector<Precinct> precincts;
    precincts.reserve(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            Precinct p;
            p.id = "r" + std::to_string(r) + "c" + std::to_string(c);
            p.area = 1.0;
            p.exterior_length = (r == 0) + (r == height - 1) + (c == 0) + (c == width - 1);
            p.population = pop.base;
            if (pop.jitter > 0)
                p.population += static_cast<std::int64_t>(rng.uniform_below(static_cast<std::uint64_t>(2 * pop.jitter + 1))) -
                                pop.jitter;
            const double x = width > 1 ? static_cast<double>(c) / static_cast<double>(width - 1) - 0.5 : 0.0;
            double share = votes.mean_share + votes.gradient * x + votes.noise * (2.0 * rng.uniform01() - 1.0);
            share = std::clamp(share, 0.0, 1.0);
            p.votes_total = std::llround(votes.turnout * static_cast<double>(p.population));
            p.votes_dem = std::llround(share * static_cast<double>(p.votes_total));
            p.votes_rep = p.votes_total - p.votes_dem;
            precincts.push_back(std::move(p));
        }
    }
    std::vector<Adjacency> edges;
    auto at = [width](int r, int c) { return static_cast<std::size_t>(r * width + c); };
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) {
            if (c + 1 < width) edges.push_back({at(r, c), at(r, c + 1), 1.0});
            if (r + 1 < height) edges.push_back({at(r, c), at(r + 1, c), 1.0});
        }
    return Geography(std::move(precincts), std::move(edges), std::nullopt, GridShape{width, height});
}

}  // namespace sqrteps
