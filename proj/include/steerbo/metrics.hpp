#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace steerbo {

// Prediction-error indicators over one evaluation set. The decomposition
// fields satisfy mse = bias_sq + variance exactly in exact arithmetic
// (bias is the squared mean residual, variance the residual spread).
struct ErrorSummary {
    double mse = 0.0;
    double mae = 0.0;
    double st_ae = 0.0;   // sample standard deviation (n-1) of |residual|
    double bias_sq = 0.0; // (mean prediction - mean truth)^2
    double variance = 0.0;
    size_t n = 0;
};

double mse(const std::vector<double>& y, const std::vector<double>& yhat);
double mae(const std::vector<double>& y, const std::vector<double>& yhat);
double st_ae(const std::vector<double>& y, const std::vector<double>& yhat);

// (bias_sq, variance) per the definitions above, using the 1/n variance.
std::pair<double, double> bias_variance(const std::vector<double>& y,
                                        const std::vector<double>& yhat);

ErrorSummary error_summary(const std::vector<double>& y,
                           const std::vector<double>& yhat);

enum class Alternative { two_sided, less, greater };
enum class RankMethod { automatic, exact, normal_approx };

struct RankTestResult {
    double u_statistic = 0.0; // U of the first sample
    double p_value = 1.0;
    std::string method;       // "exact" or "normal-approx"
};

// Mann-Whitney U test with midranks for ties. The exact p-value
// enumerates all C(n+m, n) group assignments of the pooled values and is
// chosen automatically when both samples have at most 12 elements; larger
// samples use the normal approximation with tie and continuity
// corrections. `alternative == less` asks whether the first sample tends
// to be smaller.
RankTestResult mann_whitney_u(const std::vector<double>& a,
                              const std::vector<double>& b,
                              Alternative alternative = Alternative::two_sided,
                              RankMethod method = RankMethod::automatic);

// Per-model error summaries plus the pairwise Mann-Whitney p-value matrix
// computed on absolute prediction errors.
struct ModelComparison {
    std::vector<std::string> names;
    std::vector<ErrorSummary> rows;
    std::vector<std::vector<double>> p_values; // p_values[i][j], diagonal 1
};

ModelComparison model_comparison_report(
    const std::vector<std::string>& names,
    const std::vector<std::vector<double>>& predictions,
    const std::vector<double>& y,
    Alternative alternative = Alternative::two_sided);

// CSV renderings with headers and a stable column order.
std::string summary_csv(const ModelComparison& report);
std::string p_matrix_csv(const ModelComparison& report);

} // namespace steerbo
