#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "steerbo/gp.hpp"
#include "steerbo/search_space.hpp"

namespace steerbo {

enum class AcqFamily { lcb, ei, mpi };

struct AcquisitionKind {
    AcqFamily family = AcqFamily::lcb;
    double xi = 2.0; // exploration weight, >= 0
};

// Defaults: LCB xi=2.0, EI/MPI xi=0.01.
AcquisitionKind make_acquisition(AcqFamily family);
AcquisitionKind parse_acquisition(const std::string& name); // "lcb" | "ei" | "mpi"
const char* acquisition_name(AcqFamily family);

struct Incumbent {
    double best_value = 0.0;   // minimum objective value observed so far
    Configuration best_config; // the configuration that attained it
};

// Lower confidence bound mu - xi*sigma; smaller is better (minimized).
double lcb(const Posterior& p, double xi);

// Expected improvement E[max(best - xi - G, 0)] for G ~ N(mu, sigma^2);
// 0 when sigma = 0. Larger is better.
double ei(const Posterior& p, double incumbent, double xi);

// Probability of improvement P(G <= best + xi); the indicator of
// mu <= best + xi when sigma = 0. Larger is better.
double mpi(const Posterior& p, double incumbent, double xi);

// Scores one posterior so that larger is always better (LCB negated).
double acquisition_score(const AcquisitionKind& kind, const Posterior& p,
                         double incumbent);

// Deterministic candidate set for the inner argmax: the full cross product
// of discrete levels with 8 stratified values per continuous parameter,
// followed by 2048 seeded uniform random configurations. `unit` rows are
// the encodings of `cfgs`, in the same pinned order.
struct CandidateSet {
    std::vector<Configuration> cfgs;
    Eigen::MatrixXd unit;
    size_t grid_count = 0; // leading rows that came from the grid
};

CandidateSet build_candidates(const SearchSpace& space, uint64_t seed);

// Argmax of the acquisition over the candidate set (argmin for LCB), ties
// broken by lowest candidate index. Candidates that coincide exactly with
// one of the model's training inputs are excluded: the objective is
// deterministic, so re-evaluation is wasted budget, and the probability
// of improvement scores its own incumbent at the plateau value.
Configuration propose_next(const GPModel& model, const AcquisitionKind& kind,
                           const Incumbent& incumbent, const SearchSpace& space,
                           uint64_t seed);

} // namespace steerbo
