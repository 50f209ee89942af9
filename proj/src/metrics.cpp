#include "steerbo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "steerbo/errors.hpp"
#include "steerbo/numfmt.hpp"

namespace steerbo {

namespace {

void check_pair(const std::vector<double>& y, const std::vector<double>& yhat,
                size_t min_n, const char* what) {
    if (y.size() != yhat.size())
        throw ConfigError(std::string(what) + ": length mismatch (" +
                          std::to_string(y.size()) + " vs " +
                          std::to_string(yhat.size()) + ")");
    if (y.size() < min_n)
        throw ConfigError(std::string(what) + " needs at least " +
                          std::to_string(min_n) + " observations, got " +
                          std::to_string(y.size()));
}

double mean(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Midranks of the pooled sample, in pooled order (a first, then b).
std::vector<double> midranks(const std::vector<double>& pooled) {
    const size_t n = pooled.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t i, size_t j) { return pooled[i] < pooled[j]; });

    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
        // ranks i+1 .. j+1 share one midrank
        const double r = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

struct ExactTally {
    double u_obs = 0.0;
    double base = 0.0; // n(n+1)/2 for the first sample
    size_t le = 0, ge = 0, total = 0;
};

// Walks every size-n index subset of the pooled ranks, accumulating how
// often the subset's U falls at or beyond the observed one. Rank sums are
// multiples of 1/2, so exact comparisons tolerate a fixed tiny slack.
void enumerate_subsets(const std::vector<double>& ranks, size_t pos, size_t remaining,
                       double sum, ExactTally& tally) {
    if (remaining == 0) {
        const double u = sum - tally.base;
        ++tally.total;
        if (u <= tally.u_obs + 1e-9) ++tally.le;
        if (u >= tally.u_obs - 1e-9) ++tally.ge;
        return;
    }
    if (ranks.size() - pos < remaining) return;
    enumerate_subsets(ranks, pos + 1, remaining - 1, sum + ranks[pos], tally);
    enumerate_subsets(ranks, pos + 1, remaining, sum, tally);
}

double combine_sides(Alternative alternative, double p_less, double p_greater) {
    switch (alternative) {
        case Alternative::less: return p_less;
        case Alternative::greater: return p_greater;
        case Alternative::two_sided:
            return std::min(1.0, 2.0 * std::min(p_less, p_greater));
    }
    throw ConfigError("unknown test alternative");
}

} // namespace

double mse(const std::vector<double>& y, const std::vector<double>& yhat) {
    check_pair(y, yhat, 1, "mse");
    double acc = 0.0;
    for (size_t i = 0; i < y.size(); ++i) {
        const double d = yhat[i] - y[i];
        acc += d * d;
    }
    return acc / static_cast<double>(y.size());
}

double mae(const std::vector<double>& y, const std::vector<double>& yhat) {
    check_pair(y, yhat, 1, "mae");
    double acc = 0.0;
    for (size_t i = 0; i < y.size(); ++i) acc += std::abs(yhat[i] - y[i]);
    return acc / static_cast<double>(y.size());
}

double st_ae(const std::vector<double>& y, const std::vector<double>& yhat) {
    check_pair(y, yhat, 2, "st_ae");
    const double center = mae(y, yhat);
    double acc = 0.0;
    for (size_t i = 0; i < y.size(); ++i) {
        const double d = std::abs(yhat[i] - y[i]) - center;
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(y.size() - 1));
}

std::pair<double, double> bias_variance(const std::vector<double>& y,
                                        const std::vector<double>& yhat) {
    check_pair(y, yhat, 1, "bias_variance");
    const double shift = mean(yhat) - mean(y);
    const double bias_sq = shift * shift;

    double err_bar = 0.0;
    for (size_t i = 0; i < y.size(); ++i) err_bar += y[i] - yhat[i];
    err_bar /= static_cast<double>(y.size());
    double variance = 0.0;
    for (size_t i = 0; i < y.size(); ++i) {
        const double d = (y[i] - yhat[i]) - err_bar;
        variance += d * d;
    }
    variance /= static_cast<double>(y.size());
    return {bias_sq, variance};
}

ErrorSummary error_summary(const std::vector<double>& y,
                           const std::vector<double>& yhat) {
    check_pair(y, yhat, 2, "error_summary");
    ErrorSummary s;
    s.n = y.size();
    s.mse = mse(y, yhat);
    s.mae = mae(y, yhat);
    s.st_ae = st_ae(y, yhat);
    std::tie(s.bias_sq, s.variance) = bias_variance(y, yhat);
    return s;
}

RankTestResult mann_whitney_u(const std::vector<double>& a,
                              const std::vector<double>& b, Alternative alternative,
                              RankMethod method) {
    if (a.empty() || b.empty())
        throw ConfigError("mann_whitney_u needs two non-empty samples");
    const size_t n = a.size(), m = b.size();

    std::vector<double> pooled = a;
    pooled.insert(pooled.end(), b.begin(), b.end());
    const std::vector<double> ranks = midranks(pooled);

    double rank_sum_a = 0.0;
    for (size_t i = 0; i < n; ++i) rank_sum_a += ranks[i];
    const double base = static_cast<double>(n) * static_cast<double>(n + 1) / 2.0;
    const double u = rank_sum_a - base;

    RankTestResult result;
    result.u_statistic = u;

    const bool exact = method == RankMethod::exact ||
                       (method == RankMethod::automatic && n <= 12 && m <= 12);
    if (exact) {
        ExactTally tally;
        tally.u_obs = u;
        tally.base = base;
        enumerate_subsets(ranks, 0, n, 0.0, tally);
        const double total = static_cast<double>(tally.total);
        result.p_value = combine_sides(alternative,
                                       static_cast<double>(tally.le) / total,
                                       static_cast<double>(tally.ge) / total);
        result.method = "exact";
        return result;
    }

    // normal approximation with tie correction and 0.5 continuity correction
    const double nn = static_cast<double>(n), mm = static_cast<double>(m);
    const double big_n = nn + mm;
    double tie_sum = 0.0;
    {
        std::vector<double> sorted = pooled;
        std::sort(sorted.begin(), sorted.end());
        size_t i = 0;
        while (i < sorted.size()) {
            size_t j = i;
            while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
            const double t = static_cast<double>(j - i + 1);
            tie_sum += t * t * t - t;
            i = j + 1;
        }
    }
    const double mu = nn * mm / 2.0;
    const double var =
        nn * mm / 12.0 * ((big_n + 1.0) - tie_sum / (big_n * (big_n - 1.0)));
    result.method = "normal-approx";
    if (var <= 0.0) {
        // every pooled value identical: U is always nm/2
        result.p_value = 1.0;
        return result;
    }
    const double sigma = std::sqrt(var);
    const double p_less = normal_cdf((u + 0.5 - mu) / sigma);
    const double p_greater = 1.0 - normal_cdf((u - 0.5 - mu) / sigma);
    result.p_value = combine_sides(alternative, p_less, p_greater);
    return result;
}

ModelComparison model_comparison_report(
    const std::vector<std::string>& names,
    const std::vector<std::vector<double>>& predictions, const std::vector<double>& y,
    Alternative alternative) {
    if (names.size() != predictions.size())
        throw ConfigError("model_comparison_report: one name per prediction vector");
    if (names.size() < 2)
        throw ConfigError("model_comparison_report compares at least two models");
    for (const auto& pred : predictions) check_pair(y, pred, 2, "model comparison");

    ModelComparison report;
    report.names = names;
    std::vector<std::vector<double>> abs_errors(predictions.size());
    for (size_t k = 0; k < predictions.size(); ++k) {
        report.rows.push_back(error_summary(y, predictions[k]));
        abs_errors[k].resize(y.size());
        for (size_t i = 0; i < y.size(); ++i)
            abs_errors[k][i] = std::abs(predictions[k][i] - y[i]);
    }

    report.p_values.assign(names.size(), std::vector<double>(names.size(), 1.0));
    for (size_t i = 0; i < names.size(); ++i)
        for (size_t j = i + 1; j < names.size(); ++j) {
            const double p =
                mann_whitney_u(abs_errors[i], abs_errors[j], alternative).p_value;
            report.p_values[i][j] = p;
            report.p_values[j][i] =
                alternative == Alternative::two_sided
                    ? p
                    : mann_whitney_u(abs_errors[j], abs_errors[i], alternative).p_value;
        }
    return report;
}

std::string summary_csv(const ModelComparison& report) {
    std::ostringstream out;
    out << "model,n,mse,mae,st_ae,bias_sq,variance\n";
    for (size_t k = 0; k < report.names.size(); ++k) {
        const ErrorSummary& s = report.rows[k];
        out << report.names[k] << ',' << s.n << ',' << format_double(s.mse) << ','
            << format_double(s.mae) << ',' << format_double(s.st_ae) << ','
            << format_double(s.bias_sq) << ',' << format_double(s.variance) << '\n';
    }
    return out.str();
}

std::string p_matrix_csv(const ModelComparison& report) {
    std::ostringstream out;
    out << "model";
    for (const std::string& name : report.names) out << ',' << name;
    out << '\n';
    for (size_t i = 0; i < report.names.size(); ++i) {
        out << report.names[i];
        for (size_t j = 0; j < report.names.size(); ++j)
            out << ',' << format_double(report.p_values[i][j]);
        out << '\n';
    }
    return out.str();
}

} // namespace steerbo
