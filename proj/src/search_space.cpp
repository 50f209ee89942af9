#include "steerbo/search_space.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "steerbo/errors.hpp"
#include "steerbo/numfmt.hpp"
#include "steerbo/rng.hpp"

namespace steerbo {

const ParamSpec* SearchSpace::find(const std::string& name) const {
    for (const auto& p : params) {
        if (p.name == name) return &p;
    }
    return nullptr;
}

void SearchSpace::validate() const {
    if (params.empty()) throw ConfigError("search space has no parameters");
    std::set<std::string> seen;
    for (const auto& p : params) {
        if (!seen.insert(p.name).second)
            throw ConfigError("duplicate parameter name '" + p.name + "'");
        if (p.kind == ParamKind::discrete_ordered) {
            if (p.levels.empty())
                throw ConfigError("parameter '" + p.name + "' has no levels");
            for (size_t i = 1; i < p.levels.size(); ++i) {
                if (!(p.levels[i - 1] < p.levels[i]))
                    throw ConfigError("levels of '" + p.name + "' not strictly increasing");
            }
        } else {
            if (!(p.lo < p.hi))
                throw ConfigError("bounds of '" + p.name + "' must satisfy lo < hi");
        }
    }
}

SearchSpace build_paper_space() {
    SearchSpace s;
    const std::vector<double> maps = {4, 8, 10, 16};
    s.params.push_back({"convlstm1_maps", ParamKind::discrete_ordered, maps, 0, 0});
    s.params.push_back({"convlstm2_maps", ParamKind::discrete_ordered, maps, 0, 0});
    s.params.push_back({"convlstm3_maps", ParamKind::discrete_ordered, maps, 0, 0});
    s.params.push_back({"convlstm4_maps", ParamKind::discrete_ordered, maps, 0, 0});
    s.params.push_back({"conv3d_maps", ParamKind::discrete_ordered, {1, 2, 3}, 0, 0});
    s.params.push_back({"fc_neurons", ParamKind::discrete_ordered, {5, 10, 25, 50}, 0, 0});
    s.params.push_back({"dropout", ParamKind::continuous, {}, 0.0, 0.5});
    s.params.push_back({"learning_rate",
                        ParamKind::discrete_ordered,
                        {0.00001, 0.0001, 0.001, 0.01},
                        0,
                        0});
    s.validate();
    return s;
}

size_t discrete_grid_size(const SearchSpace& space) {
    size_t n = 1;
    for (const auto& p : space.params) {
        if (p.kind == ParamKind::discrete_ordered) n *= p.levels.size();
    }
    return n;
}

UnitPoint encode(const Configuration& cfg, const SearchSpace& space) {
    UnitPoint u;
    u.coords.reserve(space.dimension());
    for (const auto& p : space.params) {
        auto it = cfg.find(p.name);
        if (it == cfg.end())
            throw ConfigError("configuration missing parameter '" + p.name + "'");
        double v = it->second;
        if (p.kind == ParamKind::discrete_ordered) {
            // discrete levels embed at equal-width bin centers: index i of
            // k levels -> (i + 0.5) / k
            auto lit = std::find(p.levels.begin(), p.levels.end(), v);
            if (lit == p.levels.end())
                throw ConfigError("value " + format_double(v) + " is not a level of '" +
                                  p.name + "'");
            double i = static_cast<double>(lit - p.levels.begin());
            u.coords.push_back((i + 0.5) / static_cast<double>(p.levels.size()));
        } else {
            if (v < p.lo || v > p.hi)
                throw ConfigError("value " + format_double(v) + " outside [" +
                                  format_double(p.lo) + ", " + format_double(p.hi) +
                                  "] for '" + p.name + "'");
            u.coords.push_back((v - p.lo) / (p.hi - p.lo));
        }
    }
    if (cfg.size() != space.dimension())
        throw ConfigError("configuration has parameters unknown to the space");
    return u;
}

Configuration decode(const UnitPoint& u, const SearchSpace& space) {
    if (u.coords.size() != space.dimension())
        throw ConfigError("unit point dimension " + std::to_string(u.coords.size()) +
                          " does not match space dimension " +
                          std::to_string(space.dimension()));
    Configuration cfg;
    for (size_t i = 0; i < space.params.size(); ++i) {
        const ParamSpec& p = space.params[i];
        double c = u.coords[i];
        if (p.kind == ParamKind::discrete_ordered) {
            // bin containment; coordinate 1.0 belongs to the last bin
            size_t k = p.levels.size();
            size_t idx = static_cast<size_t>(c * static_cast<double>(k));
            if (idx >= k) idx = k - 1;
            cfg[p.name] = p.levels[idx];
        } else {
            cfg[p.name] = p.lo + c * (p.hi - p.lo);
        }
    }
    return cfg;
}

bool config_valid(const Configuration& cfg, const SearchSpace& space) {
    try {
        encode(cfg, space);
        return true;
    } catch (const ConfigError&) {
        return false;
    }
}

std::vector<UnitPoint> lhs_unit(size_t dim, size_t n, uint64_t seed) {
    if (n == 0) throw ConfigError("LHS design size must be >= 1");
    Rng rng(seed);
    std::vector<UnitPoint> pts(n);
    for (auto& p : pts) p.coords.resize(dim);
    std::vector<size_t> perm(n);
    for (size_t d = 0; d < dim; ++d) {
        for (size_t j = 0; j < n; ++j) perm[j] = j;
        rng.shuffle(perm);
        for (size_t j = 0; j < n; ++j) {
            pts[j].coords[d] =
                (static_cast<double>(perm[j]) + rng.uniform()) / static_cast<double>(n);
        }
    }
    return pts;
}

std::vector<Configuration> lhs_sample(const SearchSpace& space, size_t n, uint64_t seed) {
    auto pts = lhs_unit(space.dimension(), n, seed);
    std::vector<Configuration> out;
    out.reserve(n);
    for (const auto& p : pts) out.push_back(decode(p, space));
    return out;
}

std::vector<Configuration> random_sample(const SearchSpace& space, size_t n, uint64_t seed) {
    if (n == 0) throw ConfigError("sample size must be >= 1");
    Rng rng(seed);
    std::vector<Configuration> out;
    out.reserve(n);
    UnitPoint u;
    u.coords.resize(space.dimension());
    for (size_t j = 0; j < n; ++j) {
        for (size_t d = 0; d < space.dimension(); ++d) u.coords[d] = rng.uniform();
        out.push_back(decode(u, space));
    }
    return out;
}

nlohmann::json space_to_json(const SearchSpace& space) {
    nlohmann::json j;
    j["params"] = nlohmann::json::array();
    for (const auto& p : space.params) {
        nlohmann::json e;
        e["name"] = p.name;
        if (p.kind == ParamKind::discrete_ordered) {
            e["kind"] = "discrete-ordered";
            e["levels"] = p.levels;
        } else {
            e["kind"] = "continuous";
            e["lo"] = p.lo;
            e["hi"] = p.hi;
        }
        j["params"].push_back(e);
    }
    return j;
}

SearchSpace space_from_json(const nlohmann::json& j) {
    SearchSpace s;
    try {
        for (const auto& e : j.at("params")) {
            ParamSpec p;
            p.name = e.at("name").get<std::string>();
            std::string kind = e.at("kind").get<std::string>();
            if (kind == "discrete-ordered") {
                p.kind = ParamKind::discrete_ordered;
                p.levels = e.at("levels").get<std::vector<double>>();
            } else if (kind == "continuous") {
                p.kind = ParamKind::continuous;
                p.lo = e.at("lo").get<double>();
                p.hi = e.at("hi").get<double>();
            } else {
                throw ConfigError("unknown parameter kind '" + kind + "'");
            }
            s.params.push_back(std::move(p));
        }
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError(std::string("malformed search-space JSON: ") + ex.what());
    }
    s.validate();
    return s;
}

std::string space_digest(const SearchSpace& space) {
    return fnv1a64_hex(space_to_json(space).dump());
}

nlohmann::json config_to_json(const Configuration& cfg) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, value] : cfg) j[name] = value;
    return j;
}

Configuration config_from_json(const nlohmann::json& j) {
    Configuration cfg;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!it.value().is_number())
            throw ConfigError("configuration value for '" + it.key() + "' is not a number");
        cfg[it.key()] = it.value().get<double>();
    }
    return cfg;
}

} // namespace steerbo
