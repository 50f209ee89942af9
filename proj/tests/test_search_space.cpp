#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "steerbo/errors.hpp"
#include "steerbo/rng.hpp"
#include "steerbo/search_space.hpp"

using namespace steerbo;

TEST_CASE("paper space shape: 8 params, 7 discrete, 1 continuous") {
    SearchSpace s = build_paper_space();
    CHECK(s.dimension() == 8);
    int discrete = 0, continuous = 0;
    for (const auto& p : s.params) {
        (p.kind == ParamKind::discrete_ordered ? discrete : continuous)++;
    }
    CHECK(discrete == 7);
    CHECK(continuous == 1);
    CHECK(discrete_grid_size(s) == 12288); // 4*4*4*4*3*4*4

    const ParamSpec* lr = s.find("learning_rate");
    REQUIRE(lr != nullptr);
    REQUIRE(lr->levels.size() == 4);
    CHECK(lr->levels[0] == 0.00001);
    CHECK(lr->levels[3] == 0.01);
    for (size_t i = 1; i < lr->levels.size(); ++i) CHECK(lr->levels[i - 1] < lr->levels[i]);

    const ParamSpec* dr = s.find("dropout");
    REQUIRE(dr != nullptr);
    CHECK(dr->kind == ParamKind::continuous);
    CHECK(dr->lo == 0.0);
    CHECK(dr->hi == 0.5);
}

TEST_CASE("encode puts discrete params at bin centers") {
    SearchSpace s = build_paper_space();
    Configuration cfg = decode(UnitPoint{{0, 0, 0, 0, 0, 0, 0, 0}}, s);
    cfg["dropout"] = 0.0;
    cfg["convlstm1_maps"] = 8; // index 1 of 4 levels

    UnitPoint u = encode(cfg, s);
    CHECK(u.coords[0] == doctest::Approx(0.375).epsilon(1e-15)); // (1+0.5)/4
    CHECK(u.coords[6] == 0.0);                                   // dropout lower bound
}

TEST_CASE("decode: bin containment and last-bin closure") {
    SearchSpace s;
    s.params.push_back({"p", ParamKind::discrete_ordered, {10, 20, 30, 40}, 0, 0});
    CHECK(decode(UnitPoint{{0.999}}, s).at("p") == 40);
    CHECK(decode(UnitPoint{{1.0}}, s).at("p") == 40);
    CHECK(decode(UnitPoint{{0.0}}, s).at("p") == 10);
    CHECK(decode(UnitPoint{{0.25}}, s).at("p") == 20);
}

TEST_CASE("decode(encode(cfg)) is the identity on whole configurations") {
    SearchSpace s = build_paper_space();
    for (const auto& cfg : random_sample(s, 200, 77)) {
        Configuration back = decode(encode(cfg, s), s);
        CHECK(back == cfg);
    }
}

TEST_CASE("random unit points always decode to valid configurations") {
    SearchSpace s = build_paper_space();
    Rng r(123);
    UnitPoint u;
    u.coords.resize(s.dimension());
    for (int i = 0; i < 10000; ++i) {
        for (auto& c : u.coords) c = r.uniform();
        CHECK(config_valid(decode(u, s), s));
    }
}

TEST_CASE("LHS occupies every stratum in every dimension") {
    const size_t n = 5, dim = 8;
    auto pts = lhs_unit(dim, n, 42);
    REQUIRE(pts.size() == n);
    for (size_t d = 0; d < dim; ++d) {
        std::vector<bool> hit(n, false);
        for (const auto& p : pts) {
            double c = p.coords[d];
            CHECK(c >= 0.0);
            CHECK(c <= 1.0);
            size_t stratum = std::min(n - 1, static_cast<size_t>(c * n));
            hit[stratum] = true;
        }
        for (size_t k = 0; k < n; ++k) CHECK(hit[k]);
    }
}

TEST_CASE("sampling is a pure function of (space, n, seed)") {
    SearchSpace s = build_paper_space();
    CHECK(lhs_sample(s, 5, 9) == lhs_sample(s, 5, 9));
    CHECK(random_sample(s, 11, 4) == random_sample(s, 11, 4));
    CHECK(lhs_sample(s, 5, 9) != lhs_sample(s, 5, 10));
    for (const auto& cfg : lhs_sample(s, 5, 9)) CHECK(config_valid(cfg, s));
}

TEST_CASE("sampling rejects n = 0") {
    SearchSpace s = build_paper_space();
    CHECK_THROWS_AS(lhs_sample(s, 0, 1), ConfigError);
    CHECK_THROWS_AS(random_sample(s, 0, 1), ConfigError);
}

TEST_CASE("encode rejects invalid configurations") {
    SearchSpace s = build_paper_space();
    Configuration cfg = random_sample(s, 1, 5)[0];

    Configuration missing = cfg;
    missing.erase("dropout");
    CHECK_THROWS_AS(encode(missing, s), ConfigError);

    Configuration extra = cfg;
    extra["bogus"] = 1.0;
    CHECK_THROWS_AS(encode(extra, s), ConfigError);

    Configuration offlevel = cfg;
    offlevel["conv3d_maps"] = 7;
    CHECK_THROWS_AS(encode(offlevel, s), ConfigError);

    Configuration oob = cfg;
    oob["dropout"] = 0.6;
    CHECK_THROWS_AS(encode(oob, s), ConfigError);
}

TEST_CASE("decode rejects dimension mismatch") {
    SearchSpace s = build_paper_space();
    CHECK_THROWS_AS(decode(UnitPoint{{0.5, 0.5}}, s), ConfigError);
}

TEST_CASE("space JSON round-trip preserves every field") {
    SearchSpace s = build_paper_space();
    SearchSpace back = space_from_json(space_to_json(s));
    REQUIRE(back.dimension() == s.dimension());
    for (size_t i = 0; i < s.params.size(); ++i) {
        CHECK(back.params[i].name == s.params[i].name);
        CHECK(back.params[i].kind == s.params[i].kind);
        CHECK(back.params[i].levels == s.params[i].levels);
        CHECK(back.params[i].lo == s.params[i].lo);
        CHECK(back.params[i].hi == s.params[i].hi);
    }
    CHECK(space_digest(back) == space_digest(s));
    CHECK(space_digest(s).size() == 16);
}

TEST_CASE("malformed space JSON is rejected") {
    CHECK_THROWS_AS(space_from_json(nlohmann::json::object()), ConfigError);
    nlohmann::json bad = {{"params", {{{"name", "x"}, {"kind", "mystery"}}}}};
    CHECK_THROWS_AS(space_from_json(bad), ConfigError);
    nlohmann::json unsorted = {
        {"params", {{{"name", "x"}, {"kind", "discrete-ordered"}, {"levels", {3, 1}}}}}};
    CHECK_THROWS_AS(space_from_json(unsorted), ConfigError);
}

TEST_CASE("configuration JSON round-trip") {
    SearchSpace s = build_paper_space();
    Configuration cfg = random_sample(s, 1, 31)[0];
    Configuration back = config_from_json(config_to_json(cfg));
    CHECK(back == cfg);
    CHECK_THROWS_AS(config_from_json(nlohmann::json{{"a", "text"}}), ConfigError);
}
