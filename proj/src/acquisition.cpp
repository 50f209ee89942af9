#include "steerbo/acquisition.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "steerbo/errors.hpp"

namespace steerbo {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double norm_cdf(double z) { return 0.5 * std::erfc(-z * kInvSqrt2); }
double norm_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

// Candidate grids larger than this indicate a space this exhaustive inner
// optimizer was never meant for.
constexpr size_t kGridCap = size_t{1} << 22;
constexpr size_t kRandomCandidates = 2048;
constexpr size_t kContinuousStrata = 8;

} // namespace

AcquisitionKind make_acquisition(AcqFamily family) {
    AcquisitionKind k;
    k.family = family;
    k.xi = (family == AcqFamily::lcb) ? 2.0 : 0.01;
    return k;
}

AcquisitionKind parse_acquisition(const std::string& name) {
    std::string s;
    for (char c : name) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (s == "lcb") return make_acquisition(AcqFamily::lcb);
    if (s == "ei") return make_acquisition(AcqFamily::ei);
    if (s == "mpi") return make_acquisition(AcqFamily::mpi);
    throw ConfigError("unknown acquisition '" + name + "' (expected lcb, ei or mpi)");
}

const char* acquisition_name(AcqFamily family) {
    switch (family) {
        case AcqFamily::lcb: return "lcb";
        case AcqFamily::ei: return "ei";
        case AcqFamily::mpi: return "mpi";
    }
    return "?";
}

double lcb(const Posterior& p, double xi) { return p.mean - xi * p.std; }

double ei(const Posterior& p, double incumbent, double xi) {
    if (p.std <= 0.0) return 0.0;
    double gap = incumbent - p.mean - xi;
    double z = gap / p.std;
    double v = gap * norm_cdf(z) + p.std * norm_pdf(z);
    return std::max(0.0, v); // roundoff can leave a tiny negative
}

double mpi(const Posterior& p, double incumbent, double xi) {
    if (p.std <= 0.0) return (p.mean <= incumbent + xi) ? 1.0 : 0.0;
    return norm_cdf((incumbent + xi - p.mean) / p.std);
}

double acquisition_score(const AcquisitionKind& kind, const Posterior& p,
                         double incumbent) {
    switch (kind.family) {
        case AcqFamily::lcb: return -lcb(p, kind.xi);
        case AcqFamily::ei: return ei(p, incumbent, kind.xi);
        case AcqFamily::mpi: return mpi(p, incumbent, kind.xi);
    }
    throw ConfigError("unhandled acquisition family");
}

CandidateSet build_candidates(const SearchSpace& space, uint64_t seed) {
    space.validate();
    const size_t d = space.dimension();

    // Per-dimension unit coordinates: every level's bin center for discrete
    // parameters, 8 stratum centers for continuous ones.
    std::vector<std::vector<double>> axes(d);
    size_t grid = 1;
    for (size_t i = 0; i < d; ++i) {
        const ParamSpec& ps = space.params[i];
        size_t k = (ps.kind == ParamKind::discrete_ordered) ? ps.levels.size()
                                                            : kContinuousStrata;
        axes[i].resize(k);
        for (size_t j = 0; j < k; ++j) axes[i][j] = (j + 0.5) / static_cast<double>(k);
        if (grid > kGridCap / k)
            throw ConfigError("candidate grid exceeds " + std::to_string(kGridCap) +
                              " points; space too large for exhaustive proposal");
        grid *= k;
    }

    CandidateSet out;
    out.grid_count = grid;
    out.cfgs.reserve(grid + kRandomCandidates);
    out.unit.resize(static_cast<Eigen::Index>(grid + kRandomCandidates),
                    static_cast<Eigen::Index>(d));

    // Odometer enumeration: first declared parameter outermost, so the
    // order is pinned independent of seed.
    std::vector<size_t> idx(d, 0);
    UnitPoint u;
    u.coords.resize(d);
    for (size_t row = 0; row < grid; ++row) {
        for (size_t i = 0; i < d; ++i) u.coords[i] = axes[i][idx[i]];
        out.cfgs.push_back(decode(u, space));
        for (size_t i = 0; i < d; ++i)
            out.unit(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(i)) = u.coords[i];
        for (size_t i = d; i-- > 0;) {
            if (++idx[i] < axes[i].size()) break;
            idx[i] = 0;
        }
    }

    // Random block: configurations first, then their encodings, so each
    // scored point is exactly the encoding of the configuration returned.
    std::vector<Configuration> rnd = random_sample(space, kRandomCandidates, seed);
    for (size_t r = 0; r < rnd.size(); ++r) {
        UnitPoint e = encode(rnd[r], space);
        size_t row = grid + r;
        for (size_t i = 0; i < d; ++i)
            out.unit(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(i)) = e.coords[i];
        out.cfgs.push_back(std::move(rnd[r]));
    }
    return out;
}

namespace {

// Exact-coordinate membership of a candidate row among the model's
// training inputs. Uniform-random training points never collide with the
// grid, so this only fires for points the optimizer itself evaluated.
bool row_visited(const GPModel& model, const Eigen::MatrixXd& unit, Eigen::Index row) {
    const Eigen::MatrixXd& X = model.X();
    for (Eigen::Index p = 0; p < X.rows(); ++p) {
        bool same = true;
        for (Eigen::Index j = 0; j < X.cols() && same; ++j)
            same = X(p, j) == unit(row, j);
        if (same) return true;
    }
    return false;
}

} // namespace

Configuration propose_next(const GPModel& model, const AcquisitionKind& kind,
                           const Incumbent& incumbent, const SearchSpace& space,
                           uint64_t seed) {
    if (kind.xi < 0.0) throw ConfigError("acquisition xi must be non-negative");
    CandidateSet cand = build_candidates(space, seed);
    const Eigen::Index m = cand.unit.rows();
    if (m == 0) throw ConfigError("empty candidate set");

    // Candidates already evaluated are skipped: re-measuring a
    // deterministic objective carries no information, and the probability
    // of improvement sits at its plateau value on the incumbent itself,
    // which would pin the search there forever.
    size_t best_idx = 0;
    bool found = false;
    double best_score = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd mean, sd;
    const Eigen::Index chunk = 16384; // keeps the cross-kernel matrix small
    for (Eigen::Index lo = 0; lo < m; lo += chunk) {
        Eigen::Index n = std::min(chunk, m - lo);
        model.predict_batch(cand.unit.middleRows(lo, n), mean, sd);
        for (Eigen::Index i = 0; i < n; ++i) {
            double s = acquisition_score(kind, Posterior{mean(i), sd(i)},
                                         incumbent.best_value);
            if (s > best_score && !row_visited(model, cand.unit, lo + i)) {
                // strict inequality: ties keep the lowest index
                best_score = s;
                best_idx = static_cast<size_t>(lo + i);
                found = true;
            }
        }
    }
    if (!found) throw ConfigError("every candidate was already evaluated");
    return cand.cfgs[best_idx];
}

} // namespace steerbo
