#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>

#include "steerbo/data_pipeline.hpp"
#include "steerbo/models.hpp"
#include "steerbo/search_space.hpp"

namespace steerbo {

enum class ObjectiveKind {
    synthetic_paper_space,
    synthetic_continuous,
    external_command,
    toy_trainer,
};

ObjectiveKind parse_objective_kind(const std::string& name);
const char* objective_kind_name(ObjectiveKind kind);

struct ObjectiveSpec {
    ObjectiveKind kind = ObjectiveKind::synthetic_paper_space;

    // external-command: shell line spoken to over stdin/stdout
    std::string command;
    double timeout_seconds = 30.0;

    // toy-trainer: dataset plus epoch/batch/patience caps (the learning
    // rate always comes from the evaluated configuration)
    std::shared_ptr<DatasetSplit> data;
    TrainOptions caps;
};

struct EvaluationResult {
    double value = 0.0;
    std::map<std::string, double> diagnostics;
};

// Deterministic stand-in landscape over the 8-parameter tuning domain:
// two smooth anisotropic basins plus an anisotropic quadratic sharing the
// main basin's center, values roughly in [0.3, 1.0] on the unit encoding.
// The seed argument exists for interface uniformity and is ignored.
// Throws ConfigError on configurations outside the domain.
double eval_synthetic_paper_space(const Configuration& cfg, uint64_t seed);

// Smooth unimodal bowl mean((u - 0.7)^2) on any space's unit encoding;
// minimum 0 where every coordinate encodes to 0.7.
double eval_synthetic_continuous(const Configuration& cfg, const SearchSpace& space);

// Spawns the command through the shell, writes the configuration as one
// JSON object to its standard input, and expects one JSON object with a
// finite numeric "objective" field on its standard output within the
// timeout. Nonzero exit, malformed replies, and timeouts raise DataError
// with distinct messages.
EvaluationResult eval_external(const Configuration& cfg, const ObjectiveSpec& spec);

// Builds the sequence model from the configuration (shape taken from the
// dataset), trains it under the caps with early stopping, and returns the
// best validation MSE. A divergent run comes back as 10x the initial
// validation MSE with diagnostics["diverged"] = 1 so the optimizer sees a
// finite penalty instead of a failure. Deterministic in (cfg, data, seed).
EvaluationResult eval_toy_trainer(const Configuration& cfg, const DatasetSplit& data,
                                  uint64_t seed, const TrainOptions& caps = {});

// Extremes of the stand-in landscape over its evaluation grid (every
// discrete level combination crossed with the 8 dropout strata used by
// the proposal stage), plus the minimizing configuration.
struct GridScan {
    double min_value = 0.0;
    double max_value = 0.0;
    Configuration argmin;
};

// Exhaustive scan (98304 evaluations; cheap) and the frozen copy of its
// result. Tests assert the two agree, so the fixture can be trusted as
// exact ground truth by optimizer benchmarks.
GridScan enumerate_paper_space_grid();
GridScan paper_space_grid_fixture();

// Uniform closure handed to the optimization loop.
using Objective = std::function<EvaluationResult(const Configuration&, uint64_t)>;

// Binds an ObjectiveSpec to a callable. The space parameter is the domain
// the caller optimizes over; the stand-in landscape keeps its own fixed
// 8-parameter domain regardless.
Objective make_objective(const ObjectiveSpec& spec, const SearchSpace& space);

} // namespace steerbo
