#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>

#include "steerbo/data_pipeline.hpp"
#include "steerbo/errors.hpp"
#include "steerbo/objectives.hpp"
#include "steerbo/search_space.hpp"

using namespace steerbo;

namespace {

Configuration some_config() {
    Configuration cfg;
    cfg["convlstm1_maps"] = 8;
    cfg["convlstm2_maps"] = 4;
    cfg["convlstm3_maps"] = 16;
    cfg["convlstm4_maps"] = 10;
    cfg["conv3d_maps"] = 2;
    cfg["fc_neurons"] = 10;
    cfg["dropout"] = 0.2;
    cfg["learning_rate"] = 0.001;
    return cfg;
}

ObjectiveSpec command_spec(const std::string& cmd, double timeout = 10.0) {
    ObjectiveSpec spec;
    spec.kind = ObjectiveKind::external_command;
    spec.command = cmd;
    spec.timeout_seconds = timeout;
    return spec;
}

} // namespace

TEST_CASE("objective kind names round-trip, unknown names are rejected") {
    for (ObjectiveKind k : {ObjectiveKind::synthetic_paper_space, ObjectiveKind::synthetic_continuous,
                            ObjectiveKind::external_command, ObjectiveKind::toy_trainer}) {
        CHECK(parse_objective_kind(objective_kind_name(k)) == k);
    }
    CHECK_THROWS_WITH_AS(parse_objective_kind("simulated-annealing"),
                         doctest::Contains("unknown objective kind"), ConfigError);
}

TEST_CASE("stand-in landscape is deterministic and ignores the seed") {
    Configuration cfg = some_config();
    double a = eval_synthetic_paper_space(cfg, 0);
    double b = eval_synthetic_paper_space(cfg, 0);
    double c = eval_synthetic_paper_space(cfg, 981237);
    CHECK(a == b);
    CHECK(a == c);
    CHECK(std::isfinite(a));

    Configuration other = some_config();
    other["fc_neurons"] = 50;
    CHECK(eval_synthetic_paper_space(other, 0) != a);
}

TEST_CASE("stand-in landscape rejects configurations outside the domain") {
    Configuration missing = some_config();
    missing.erase("dropout");
    CHECK_THROWS_AS(eval_synthetic_paper_space(missing, 0), ConfigError);

    Configuration off_level = some_config();
    off_level["convlstm1_maps"] = 7; // not one of the allowed map counts
    CHECK_THROWS_AS(eval_synthetic_paper_space(off_level, 0), ConfigError);

    Configuration out_of_range = some_config();
    out_of_range["dropout"] = 0.9;
    CHECK_THROWS_AS(eval_synthetic_paper_space(out_of_range, 0), ConfigError);
}

TEST_CASE("frozen grid fixture matches a fresh exhaustive enumeration") {
    GridScan fresh = enumerate_paper_space_grid();
    GridScan frozen = paper_space_grid_fixture();
    CHECK(fresh.min_value == frozen.min_value);
    CHECK(fresh.max_value == frozen.max_value);
    CHECK(fresh.argmin == frozen.argmin);

    // The fixture's minimizer really evaluates to the fixture's minimum.
    CHECK(eval_synthetic_paper_space(frozen.argmin, 0) == frozen.min_value);
    CHECK(frozen.min_value < frozen.max_value);
}

TEST_CASE("grid minimum lower-bounds 1000 random configurations") {
    // The basin center sits on a dropout stratum midpoint, so even with
    // dropout sampled continuously nothing can dip below the grid minimum.
    GridScan frozen = paper_space_grid_fixture();
    SearchSpace space = build_paper_space();
    for (const auto& cfg : random_sample(space, 1000, 4242)) {
        CHECK(eval_synthetic_paper_space(cfg, 0) >= frozen.min_value - 1e-12);
    }
}

TEST_CASE("landscape values span the advertised range") {
    GridScan frozen = paper_space_grid_fixture();
    CHECK(frozen.min_value > 0.3);
    CHECK(frozen.min_value < 0.5);
    CHECK(frozen.max_value > 0.7);
    CHECK(frozen.max_value < 1.05);
}

TEST_CASE("continuous bowl is zero at 0.7 and symmetric around it") {
    SearchSpace s;
    s.params.push_back({"a", ParamKind::continuous, {}, 0.0, 1.0});
    s.params.push_back({"b", ParamKind::continuous, {}, 0.0, 1.0});
    s.validate();

    Configuration at_center{{"a", 0.7}, {"b", 0.7}};
    CHECK(eval_synthetic_continuous(at_center, s) == doctest::Approx(0.0).epsilon(1e-15));

    Configuration off{{"a", 0.2}, {"b", 0.7}};
    CHECK(eval_synthetic_continuous(off, s) == doctest::Approx(0.125)); // mean(0.25, 0)

    Configuration mirror{{"a", 1.0}, {"b", 0.4}};
    CHECK(eval_synthetic_continuous(mirror, s) ==
          doctest::Approx(eval_synthetic_continuous(Configuration{{"a", 0.4}, {"b", 1.0}}, s)));
}

TEST_CASE("external command: reply objective becomes the value") {
    auto spec = command_spec("cat > /dev/null; printf '{\"objective\": 0.25}'");
    EvaluationResult r = eval_external(some_config(), spec);
    CHECK(r.value == doctest::Approx(0.25));
    CHECK(r.diagnostics.empty());
}

TEST_CASE("external command: configuration arrives as JSON on stdin") {
    auto spec = command_spec(
        "grep -q learning_rate && printf '{\"objective\": 0.75}' || printf '{\"objective\": -1}'");
    EvaluationResult r = eval_external(some_config(), spec);
    CHECK(r.value == doctest::Approx(0.75));
}

TEST_CASE("external command: extra numeric reply fields become diagnostics") {
    auto spec = command_spec(
        "cat > /dev/null; printf '{\"objective\": 0.5, \"epochs\": 7, \"note\": \"hi\"}'");
    EvaluationResult r = eval_external(some_config(), spec);
    CHECK(r.value == doctest::Approx(0.5));
    REQUIRE(r.diagnostics.count("epochs") == 1);
    CHECK(r.diagnostics.at("epochs") == doctest::Approx(7.0));
    CHECK(r.diagnostics.count("note") == 0);
}

TEST_CASE("external command: each failure mode has its own message") {
    Configuration cfg = some_config();

    CHECK_THROWS_WITH_AS(eval_external(cfg, command_spec("cat > /dev/null; exit 3")),
                         doctest::Contains("exited with status 3"), DataError);

    CHECK_THROWS_WITH_AS(eval_external(cfg, command_spec("cat > /dev/null; printf 'not json'")),
                         doctest::Contains("invalid JSON"), DataError);

    CHECK_THROWS_WITH_AS(eval_external(cfg, command_spec("cat > /dev/null; printf '{\"result\": 1}'")),
                         doctest::Contains("missing a numeric 'objective'"), DataError);

    CHECK_THROWS_WITH_AS(
        eval_external(cfg, command_spec("cat > /dev/null; printf '{\"objective\": \"low\"}'")),
        doctest::Contains("missing a numeric 'objective'"), DataError);

    CHECK_THROWS_WITH_AS(eval_external(cfg, command_spec("kill -9 $$")),
                         doctest::Contains("was killed by signal 9"), DataError);

    CHECK_THROWS_WITH_AS(
        eval_external(cfg, command_spec("cat > /dev/null; head -c 2097152 /dev/zero | tr '\\0' 'x'")),
        doctest::Contains("more than 1 MiB"), DataError);
}

TEST_CASE("external command: hung processes are killed at the deadline") {
    auto spec = command_spec("sleep 30", 0.25);
    auto start = std::chrono::steady_clock::now();
    CHECK_THROWS_WITH_AS(eval_external(some_config(), spec), doctest::Contains("timed out"),
                         DataError);
    double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(seconds < 5.0); // the child must not run out its 30s sleep
}

TEST_CASE("external command: bad specs are rejected before spawning") {
    CHECK_THROWS_WITH_AS(eval_external(some_config(), command_spec("")),
                         doctest::Contains("needs a command"), ConfigError);
    CHECK_THROWS_WITH_AS(eval_external(some_config(), command_spec("true", 0.0)),
                         doctest::Contains("timeout must be positive"), ConfigError);
}

TEST_CASE("toy trainer: input rejection") {
    DatasetSplit empty;
    CHECK_THROWS_WITH_AS(eval_toy_trainer(some_config(), empty, 1),
                         doctest::Contains("train and validation"), ConfigError);

    DatasetSplit flat;
    Sample s;
    s.x = Tensor({1, 8, 16}); // rank 3: missing the frame axis
    flat.train.push_back(s);
    flat.validation.push_back(s);
    CHECK_THROWS_WITH_AS(eval_toy_trainer(some_config(), flat, 1),
                         doctest::Contains("expects (frames"), ConfigError);
}

TEST_CASE("toy trainer: deterministic in configuration, data, and seed") {
    DatasetSplit split = split_dataset(synth_dataset(18, 8, 16, 11));
    Configuration cfg = some_config();
    cfg["convlstm1_maps"] = 4;
    cfg["convlstm2_maps"] = 4;
    cfg["convlstm3_maps"] = 4;
    cfg["convlstm4_maps"] = 4;
    cfg["conv3d_maps"] = 1;
    cfg["fc_neurons"] = 5;

    TrainOptions caps;
    caps.epochs = 2;
    caps.batch_size = 8;

    EvaluationResult a = eval_toy_trainer(cfg, split, 7, caps);
    EvaluationResult b = eval_toy_trainer(cfg, split, 7, caps);
    CHECK(a.value == b.value);
    CHECK(a.diagnostics == b.diagnostics);
    CHECK(a.diagnostics.at("epochs_run") <= 2.0);
    CHECK(std::isfinite(a.value));

    EvaluationResult c = eval_toy_trainer(cfg, split, 8, caps);
    CHECK(c.value != a.value); // different init, different result
}

TEST_CASE("toy trainer: divergent run returns 10x the untrained validation error") {
    DatasetSplit split = split_dataset(synth_dataset(18, 8, 16, 11));
    Configuration cfg = some_config();
    cfg["convlstm1_maps"] = 4;
    cfg["convlstm2_maps"] = 4;
    cfg["convlstm3_maps"] = 4;
    cfg["convlstm4_maps"] = 4;
    cfg["conv3d_maps"] = 1;
    cfg["fc_neurons"] = 5;

    TrainOptions caps;
    caps.epochs = 0; // no updates: the value is the fresh network's MSE
    EvaluationResult untrained = eval_toy_trainer(cfg, split, 7, caps);
    CHECK(untrained.diagnostics.at("epochs_run") == 0.0);
    CHECK(untrained.diagnostics.at("diverged") == 0.0);

    // Adam steps scale with lr, so after one update the dense weights sit
    // near 1e155 and the next forward pass squares that into overflow.
    cfg["learning_rate"] = 1e155;
    caps.epochs = 3;
    EvaluationResult blown = eval_toy_trainer(cfg, split, 7, caps);
    CHECK(blown.diagnostics.at("diverged") == 1.0);
    CHECK(blown.value == doctest::Approx(10.0 * untrained.value).epsilon(1e-12));
    CHECK(std::isfinite(blown.value));
}

TEST_CASE("toy trainer: a sane configuration improves on the untrained error") {
    DatasetSplit split = split_dataset(synth_dataset(26, 8, 16, 5));
    Configuration cfg = some_config();
    cfg["convlstm1_maps"] = 4;
    cfg["convlstm2_maps"] = 4;
    cfg["convlstm3_maps"] = 4;
    cfg["convlstm4_maps"] = 4;
    cfg["conv3d_maps"] = 1;
    cfg["fc_neurons"] = 5;
    cfg["dropout"] = 0.0;
    cfg["learning_rate"] = 0.01;

    TrainOptions caps;
    caps.epochs = 0;
    EvaluationResult untrained = eval_toy_trainer(cfg, split, 3, caps);

    caps.epochs = 6;
    caps.batch_size = 8;
    caps.patience = 6;
    EvaluationResult trained = eval_toy_trainer(cfg, split, 3, caps);
    CHECK(trained.diagnostics.at("diverged") == 0.0);
    CHECK(trained.value < untrained.value);
}

TEST_CASE("make_objective: synthetic closures match the direct evaluators") {
    SearchSpace space = build_paper_space();
    ObjectiveSpec spec;
    spec.kind = ObjectiveKind::synthetic_paper_space;
    Objective f = make_objective(spec, space);

    Configuration cfg = some_config();
    CHECK(f(cfg, 1).value == eval_synthetic_paper_space(cfg, 1));
    CHECK(f(cfg, 1).value == f(cfg, 2).value); // seed is ignored

    spec.kind = ObjectiveKind::synthetic_continuous;
    Objective g = make_objective(spec, space);
    CHECK(g(cfg, 0).value == eval_synthetic_continuous(cfg, space));
}

TEST_CASE("make_objective: binding validates the spec up front") {
    SearchSpace space = build_paper_space();

    ObjectiveSpec no_data;
    no_data.kind = ObjectiveKind::toy_trainer;
    CHECK_THROWS_AS(make_objective(no_data, space), ConfigError);

    ObjectiveSpec no_cmd;
    no_cmd.kind = ObjectiveKind::external_command;
    CHECK_THROWS_AS(make_objective(no_cmd, space), ConfigError);
}
