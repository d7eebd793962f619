#pragma once

// Precinct graphs: areas, boundary lengths, populations and vote counts.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "sqrteps/errors.hpp"

namespace sqrteps {

struct Precinct {
    std::string id;
    double area = 0.0;             // km^2
    double exterior_length = 0.0;  // km of boundary on the outer face
    std::int64_t population = 0;
    std::int64_t votes_dem = 0;
    std::int64_t votes_rep = 0;
    std::int64_t votes_total = 0;
};

/// Undirected adjacency, a < b. Precincts meeting only at a point are not adjacent.
struct Adjacency {
    std::size_t a = 0;
    std::size_t b = 0;
    double length = 0.0;
};

struct Neighbor {
    std::size_t precinct = 0;
    double length = 0.0;
};

struct GridShape {
    int width = 0;
    int height = 0;
};

class GeographyError : public FormatError {
public:
    enum class Kind {
        Asymmetric,
        NonpositiveLength,
        DuplicateId,
        PerimeterMismatch,
        UnknownId,
        SelfAdjacency,
        BadRecord,
    };
    GeographyError(Kind kind, const std::string& what) : FormatError(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Immutable after construction; safe to share between chain runs.
class Geography {
public:
    /// Validates every invariant; `perimeters`, when given, must equal each
    /// precinct's exterior plus shared lengths within 1e-9.
    Geography(std::vector<Precinct> precincts, std::vector<Adjacency> edges,
              std::optional<std::vector<double>> perimeters = std::nullopt,
              std::optional<GridShape> grid = std::nullopt);

    std::size_t size() const { return precincts_.size(); }
    const Precinct& precinct(std::size_t i) const { return precincts_[i]; }
    std::span<const Precinct> precincts() const { return precincts_; }
    std::span<const Adjacency> edges() const { return edges_; }
    std::span<const Neighbor> neighbors(std::size_t i) const {
        return {neighbors_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
    }
    double perimeter(std::size_t i) const { return perimeter_[i]; }
    bool touches_outer_face(std::size_t i) const { return precincts_[i].exterior_length > 0.0; }
    std::optional<std::size_t> index_of(const std::string& id) const;
    std::int64_t total_population() const { return total_population_; }
    const std::optional<GridShape>& grid() const { return grid_; }

private:
    std::vector<Precinct> precincts_;
    std::vector<Adjacency> edges_;
    std::vector<std::size_t> offsets_;
    std::vector<Neighbor> neighbors_;
    std::vector<double> perimeter_;
    std::unordered_map<std::string, std::size_t> index_;
    std::int64_t total_population_ = 0;
    std::optional<GridShape> grid_;
};

/// JSON document: {"format": 1, "precincts": [...], "adjacency": [...]} where
/// every adjacency is listed in both directions. See docs/geography.schema.json.
Geography geography_from_json(const nlohmann::json& doc);
nlohmann::json geography_to_json(const Geography& geo);
Geography load_geography(const std::string& path);
void save_geography(const Geography& geo, const std::string& path);

struct PopulationModel {
    std::int64_t base = 1000;
    std::int64_t jitter = 0;  // population = base + U{-jitter..jitter}
};

struct VoteModel {
    double mean_share = 0.5;  // Democratic share at the grid's centre column
    double gradient = 0.4;    // share change from the left edge to the right edge
    double noise = 0.05;      // uniform perturbation half-width
    double turnout = 0.6;
};

/// w x h unit squares, rook adjacency with shared length 1, row-major ids
/// "r<row>c<col>". Deterministic given the seed.
Geography grid_geography(int width, int height, const PopulationModel& pop, const VoteModel& votes,
                         std::uint64_t seed);

}  // namespace sqrteps
