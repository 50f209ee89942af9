#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "steerbo/acquisition.hpp"
#include "steerbo/objectives.hpp"
#include "steerbo/search_space.hpp"

namespace steerbo {

enum class TrialPhase { initial_design, bo };

const char* trial_phase_name(TrialPhase phase);

struct Trial {
    size_t index = 0;   // 0-based evaluation number, contiguous
    Configuration config;
    double value = 0.0; // objective value, finite
    TrialPhase phase = TrialPhase::initial_design;
    double wall_time = 0.0; // seconds spent inside the objective
};

struct RunLog {
    uint64_t seed = 0;
    AcquisitionKind acquisition;
    std::vector<Trial> trials;
    Incumbent incumbent;       // minimum over trials, first achiever on ties
    bool aborted = false;      // an evaluation failed; trials hold the prefix
    std::string abort_reason;  // failure message when aborted
};

struct BestSeenCurve {
    // Running minimum per optimization iteration; element 0 covers the
    // initial design, element k the design plus the first k proposals.
    std::vector<double> values;
};

struct AcquisitionSummary {
    AcquisitionKind kind;
    std::vector<RunLog> runs;            // seed order
    std::vector<double> mean_curve;      // pointwise over completed runs
    std::vector<double> std_curve;       // sample std, 0 for a single run
    std::vector<double> final_best_seen; // one per completed run, seed order
    bool complete = true;                // no run aborted
};

struct ExperimentSummary {
    std::vector<AcquisitionSummary> acquisitions; // declaration order
    size_t n_init = 0;
    size_t n_iter = 0;
    size_t n_runs = 0;
    uint64_t base_seed = 0;
};

// One optimization run: n_init space-filling evaluations, then n_iter
// rounds of refit, propose, evaluate. Deterministic given the seed and a
// deterministic objective. An objective failure (or a non-finite value)
// stops the run and comes back as an aborted log holding the completed
// prefix; nothing is thrown for it.
RunLog run_bo(const SearchSpace& space, const Objective& objective,
              const AcquisitionKind& kind, size_t n_init, size_t n_iter, uint64_t seed);

// Budget-matched baseline: n_evals independent uniform draws, no model.
RunLog run_random_search(const SearchSpace& space, const Objective& objective,
                         size_t n_evals, uint64_t seed);

// Running minimum of trial values. The initial design collapses into
// element 0, so a completed run yields n_iter + 1 points; a log aborted
// after k proposals yields k + 1.
BestSeenCurve best_seen_curve(const RunLog& log);

// Full protocol: every acquisition kind, n_runs seeds base_seed..
// base_seed+n_runs-1, aggregated pointwise. Runs are independent, so
// n_workers > 1 spreads them over threads (the objective must then be
// safe to call concurrently); results are identical to the serial order.
ExperimentSummary run_experiment(const SearchSpace& space, const Objective& objective,
                                 const std::vector<AcquisitionKind>& kinds, size_t n_init,
                                 size_t n_iter, size_t n_runs, uint64_t base_seed,
                                 size_t n_workers = 1);

// The kind whose final best-seen distribution has the smallest sample
// standard deviation; ties fall to the smaller final mean, then to
// declaration order.
AcquisitionKind select_acquisition(const ExperimentSummary& summary);

// One JSON object per line: a header carrying seed, acquisition, and the
// space digest, then one line per trial.
std::string run_log_jsonl(const RunLog& log, const SearchSpace& space,
                          size_t n_init, size_t n_iter);

// Figure-ready tables: per-iteration mean/std per acquisition, and the
// final best-seen value per (acquisition, seed).
std::string curves_csv(const ExperimentSummary& summary);
std::string finals_csv(const ExperimentSummary& summary);

} // namespace steerbo
