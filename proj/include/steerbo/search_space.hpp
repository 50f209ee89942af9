#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace steerbo {

enum class ParamKind { discrete_ordered, continuous };

struct ParamSpec {
    std::string name;
    ParamKind kind = ParamKind::continuous;
    std::vector<double> levels; // discrete: ordered, strictly increasing
    double lo = 0.0;            // continuous bounds
    double hi = 0.0;
};

struct SearchSpace {
    std::vector<ParamSpec> params;

    size_t dimension() const { return params.size(); }
    const ParamSpec* find(const std::string& name) const;
    void validate() const; // throws ConfigError on a malformed space
};

// One point in the space; std::map keeps key order deterministic for
// serialization. Discrete entries hold exactly one of the levels.
using Configuration = std::map<std::string, double>;

struct UnitPoint {
    std::vector<double> coords; // one per param, each in [0,1]
};

// The 8-parameter hyperparameter domain used throughout: four ConvLSTM
// feature-map counts, 3D-conv feature maps, dense width, dropout rate and
// the Adam learning rate. Discrete parameters embed by level index (bin
// centers), which for the learning rate equals log-uniform spacing.
SearchSpace build_paper_space();

// Number of points in the all-discrete grid (product of level counts;
// continuous params contribute factor 1).
size_t discrete_grid_size(const SearchSpace& space);

UnitPoint encode(const Configuration& cfg, const SearchSpace& space);
Configuration decode(const UnitPoint& u, const SearchSpace& space);

bool config_valid(const Configuration& cfg, const SearchSpace& space);

// Raw Latin hypercube design on [0,1]^d: per dimension, one point per
// stratum at a random position, strata order randomly permuted.
std::vector<UnitPoint> lhs_unit(size_t dim, size_t n, uint64_t seed);

std::vector<Configuration> lhs_sample(const SearchSpace& space, size_t n, uint64_t seed);
std::vector<Configuration> random_sample(const SearchSpace& space, size_t n, uint64_t seed);

nlohmann::json space_to_json(const SearchSpace& space);
SearchSpace space_from_json(const nlohmann::json& j);
std::string space_digest(const SearchSpace& space);

nlohmann::json config_to_json(const Configuration& cfg);
Configuration config_from_json(const nlohmann::json& j);

} // namespace steerbo
