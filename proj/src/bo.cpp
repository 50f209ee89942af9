#include "steerbo/bo.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <thread>

#include <json.hpp>

#include "steerbo/errors.hpp"
#include "steerbo/gp.hpp"
#include "steerbo/numfmt.hpp"
#include "steerbo/rng.hpp"

namespace steerbo {

const char* trial_phase_name(TrialPhase phase) {
    switch (phase) {
        case TrialPhase::initial_design: return "initial-design";
        case TrialPhase::bo: return "bo";
    }
    throw ConfigError("unknown trial phase");
}

namespace {

// Seed streams inside one run. Each consumer gets its own derivation so
// adding a consumer never shifts the others.
constexpr uint64_t kStreamInit = 0;
constexpr uint64_t kStreamFit = 1;
constexpr uint64_t kStreamPropose = 2;
constexpr uint64_t kStreamEval = 3;

// Evaluates one configuration, timing it and folding failures (thrown or
// non-finite) into the aborted state. Returns false when the run must stop.
bool evaluate_into(const Objective& objective, const Configuration& cfg, TrialPhase phase,
                   uint64_t eval_seed, RunLog& log) {
    Trial t;
    t.index = log.trials.size();
    t.config = cfg;
    t.phase = phase;
    const auto started = std::chrono::steady_clock::now();
    try {
        const EvaluationResult r = objective(cfg, eval_seed);
        t.value = r.value;
    } catch (const std::exception& ex) {
        log.aborted = true;
        log.abort_reason = ex.what();
        return false;
    }
    t.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (!std::isfinite(t.value)) {
        log.aborted = true;
        log.abort_reason = "objective returned a non-finite value";
        return false;
    }
    if (log.trials.empty() || t.value < log.incumbent.best_value) {
        log.incumbent.best_value = t.value;
        log.incumbent.best_config = t.config;
    }
    log.trials.push_back(std::move(t));
    return true;
}

Eigen::MatrixXd encoded_rows(const std::vector<Trial>& trials, const SearchSpace& space) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(trials.size()),
                      static_cast<Eigen::Index>(space.dimension()));
    for (size_t i = 0; i < trials.size(); ++i) {
        const UnitPoint u = encode(trials[i].config, space);
        for (size_t d = 0; d < u.coords.size(); ++d)
            X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = u.coords[d];
    }
    return X;
}

double sample_mean(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = sample_mean(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

} // namespace

RunLog run_bo(const SearchSpace& space, const Objective& objective,
              const AcquisitionKind& kind, size_t n_init, size_t n_iter, uint64_t seed) {
    space.validate();
    if (n_init < 1) throw ConfigError("initial design needs at least one evaluation");

    RunLog log;
    log.seed = seed;
    log.acquisition = kind;

    const std::vector<Configuration> design =
        lhs_sample(space, n_init, derive_seed(seed, kStreamInit));
    for (const Configuration& cfg : design) {
        if (!evaluate_into(objective, cfg, TrialPhase::initial_design,
                           derive_seed(seed, kStreamEval + 8 * log.trials.size()), log))
            return log;
    }

    for (size_t iter = 0; iter < n_iter; ++iter) {
        const Eigen::MatrixXd X = encoded_rows(log.trials, space);
        Eigen::VectorXd y(static_cast<Eigen::Index>(log.trials.size()));
        for (size_t i = 0; i < log.trials.size(); ++i)
            y(static_cast<Eigen::Index>(i)) = log.trials[i].value;

        const GPModel model = GPModel::fit(X, y, derive_seed(seed, kStreamFit + 8 * iter));
        const Configuration next = propose_next(model, kind, log.incumbent, space,
                                                derive_seed(seed, kStreamPropose + 8 * iter));
        if (!evaluate_into(objective, next, TrialPhase::bo,
                           derive_seed(seed, kStreamEval + 8 * log.trials.size()), log))
            return log;
    }
    return log;
}

RunLog run_random_search(const SearchSpace& space, const Objective& objective,
                         size_t n_evals, uint64_t seed) {
    space.validate();
    if (n_evals < 1) throw ConfigError("random search needs at least one evaluation");

    RunLog log;
    log.seed = seed;
    log.acquisition = make_acquisition(AcqFamily::lcb); // unused by the baseline

    const std::vector<Configuration> draws =
        random_sample(space, n_evals, derive_seed(seed, kStreamInit));
    for (const Configuration& cfg : draws) {
        if (!evaluate_into(objective, cfg, TrialPhase::initial_design,
                           derive_seed(seed, kStreamEval + 8 * log.trials.size()), log))
            return log;
    }
    return log;
}

BestSeenCurve best_seen_curve(const RunLog& log) {
    if (log.trials.empty()) throw ConfigError("run log has no trials");

    size_t n_init = 0;
    while (n_init < log.trials.size() && log.trials[n_init].phase == TrialPhase::initial_design)
        ++n_init;
    if (n_init == 0) throw ConfigError("run log has no initial-design trials");

    BestSeenCurve curve;
    double best = log.trials.front().value;
    for (size_t i = 0; i < log.trials.size(); ++i) {
        best = std::min(best, log.trials[i].value);
        if (i + 1 >= n_init) curve.values.push_back(best);
    }
    return curve;
}

ExperimentSummary run_experiment(const SearchSpace& space, const Objective& objective,
                                 const std::vector<AcquisitionKind>& kinds, size_t n_init,
                                 size_t n_iter, size_t n_runs, uint64_t base_seed,
                                 size_t n_workers) {
    if (kinds.empty()) throw ConfigError("experiment needs at least one acquisition kind");
    if (n_runs < 1) throw ConfigError("experiment needs at least one run");

    ExperimentSummary summary;
    summary.n_init = n_init;
    summary.n_iter = n_iter;
    summary.n_runs = n_runs;
    summary.base_seed = base_seed;
    summary.acquisitions.resize(kinds.size());
    for (size_t k = 0; k < kinds.size(); ++k) {
        summary.acquisitions[k].kind = kinds[k];
        summary.acquisitions[k].runs.resize(n_runs);
    }

    // Independent (kind, seed) jobs pulled off an atomic counter; results
    // land in preassigned slots, so the outcome is order-independent.
    const size_t jobs = kinds.size() * n_runs;
    const size_t workers = std::max<size_t>(1, std::min(n_workers, jobs));
    std::atomic<size_t> next_job{0};
    std::vector<std::exception_ptr> failures(jobs);

    const auto worker = [&] {
        for (;;) {
            const size_t job = next_job.fetch_add(1);
            if (job >= jobs) return;
            const size_t k = job / n_runs;
            const size_t r = job % n_runs;
            try {
                summary.acquisitions[k].runs[r] =
                    run_bo(space, objective, kinds[k], n_init, n_iter,
                           base_seed + static_cast<uint64_t>(r));
            } catch (...) {
                failures[job] = std::current_exception();
            }
        }
    };
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }
    for (const std::exception_ptr& ep : failures)
        if (ep) std::rethrow_exception(ep);

    for (AcquisitionSummary& acq : summary.acquisitions) {
        std::vector<std::vector<double>> curves;
        for (const RunLog& run : acq.runs) {
            if (run.aborted) {
                acq.complete = false;
                continue;
            }
            BestSeenCurve c = best_seen_curve(run);
            acq.final_best_seen.push_back(c.values.back());
            curves.push_back(std::move(c.values));
        }
        if (curves.empty()) continue;
        const size_t len = curves.front().size();
        acq.mean_curve.resize(len);
        acq.std_curve.resize(len);
        std::vector<double> column(curves.size());
        for (size_t i = 0; i < len; ++i) {
            for (size_t c = 0; c < curves.size(); ++c) column[c] = curves[c][i];
            acq.mean_curve[i] = sample_mean(column);
            acq.std_curve[i] = sample_std(column);
        }
    }
    return summary;
}

AcquisitionKind select_acquisition(const ExperimentSummary& summary) {
    const AcquisitionSummary* best = nullptr;
    double best_std = 0.0;
    double best_mean = 0.0;
    for (const AcquisitionSummary& acq : summary.acquisitions) {
        if (acq.final_best_seen.empty()) continue;
        const double s = sample_std(acq.final_best_seen);
        const double m = sample_mean(acq.final_best_seen);
        if (best == nullptr || s < best_std || (s == best_std && m < best_mean)) {
            best = &acq;
            best_std = s;
            best_mean = m;
        }
    }
    if (best == nullptr) throw ConfigError("experiment summary has no completed runs");
    return best->kind;
}

std::string run_log_jsonl(const RunLog& log, const SearchSpace& space,
                          size_t n_init, size_t n_iter) {
    nlohmann::json header;
    header["seed"] = log.seed;
    header["acquisition"] = acquisition_name(log.acquisition.family);
    header["xi"] = log.acquisition.xi;
    header["space_digest"] = space_digest(space);
    header["n_init"] = n_init;
    header["n_iter"] = n_iter;
    if (log.aborted) {
        header["aborted"] = true;
        header["abort_reason"] = log.abort_reason;
    }

    std::string out = header.dump();
    out.push_back('\n');
    for (const Trial& t : log.trials) {
        nlohmann::json line;
        line["index"] = t.index;
        line["phase"] = trial_phase_name(t.phase);
        line["config"] = config_to_json(t.config);
        line["value"] = t.value;
        line["wall_time"] = t.wall_time;
        out += line.dump();
        out.push_back('\n');
    }
    return out;
}

std::string curves_csv(const ExperimentSummary& summary) {
    std::string out = "acquisition,iteration,mean,std\n";
    for (const AcquisitionSummary& acq : summary.acquisitions) {
        const std::string name = acquisition_name(acq.kind.family);
        for (size_t i = 0; i < acq.mean_curve.size(); ++i) {
            out += name;
            out.push_back(',');
            out += std::to_string(i);
            out.push_back(',');
            out += format_double(acq.mean_curve[i]);
            out.push_back(',');
            out += format_double(acq.std_curve[i]);
            out.push_back('\n');
        }
    }
    return out;
}

std::string finals_csv(const ExperimentSummary& summary) {
    std::string out = "acquisition,seed,final_best_seen\n";
    for (const AcquisitionSummary& acq : summary.acquisitions) {
        const std::string name = acquisition_name(acq.kind.family);
        size_t pos = 0;
        for (const RunLog& run : acq.runs) {
            if (run.aborted) continue;
            out += name;
            out.push_back(',');
            out += std::to_string(run.seed);
            out.push_back(',');
            out += format_double(acq.final_best_seen[pos++]);
            out.push_back('\n');
        }
    }
    return out;
}

} // namespace steerbo
