#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "steerbo/errors.hpp"
#include "steerbo/metrics.hpp"
#include "steerbo/rng.hpp"

using namespace steerbo;

namespace {

std::vector<double> random_vector(size_t n, Rng& rng, double lo = -10.0,
                                  double hi = 10.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

// Distribution of the rank sum of the first group under the null, for
// tie-free samples: ways[k][s] counts the size-k subsets of ranks 1..N
// summing to s. Independent of the subset walker in the library.
std::vector<std::vector<double>> rank_sum_table(size_t n, size_t big_n) {
    const size_t max_sum = big_n * (big_n + 1) / 2;
    std::vector<std::vector<double>> ways(n + 1,
                                          std::vector<double>(max_sum + 1, 0.0));
    ways[0][0] = 1.0;
    for (size_t r = 1; r <= big_n; ++r)
        for (size_t k = std::min(n, r); k >= 1; --k)
            for (size_t s = max_sum; s >= r; --s)
                ways[k][s] += ways[k - 1][s - r];
    return ways;
}

// Exact one- and two-sided p-values for tie-free samples via the counting
// table above, mirroring the library's sidedness convention.
double oracle_p(const std::vector<double>& a, const std::vector<double>& b,
                Alternative alt) {
    const size_t n = a.size(), m = b.size(), big_n = n + m;
    std::vector<double> pooled = a;
    pooled.insert(pooled.end(), b.begin(), b.end());
    std::vector<double> sorted = pooled;
    std::sort(sorted.begin(), sorted.end());

    double rank_sum = 0.0;
    for (double x : a)
        rank_sum += static_cast<double>(
            std::lower_bound(sorted.begin(), sorted.end(), x) - sorted.begin() + 1);
    const double u_obs = rank_sum - static_cast<double>(n * (n + 1)) / 2.0;

    auto ways = rank_sum_table(n, big_n);
    double total = 0.0, le = 0.0, ge = 0.0;
    const size_t base = n * (n + 1) / 2;
    for (size_t s = base; s < ways[n].size(); ++s) {
        const double cnt = ways[n][s];
        total += cnt;
        const double u = static_cast<double>(s - base);
        if (u <= u_obs + 1e-9) le += cnt;
        if (u >= u_obs - 1e-9) ge += cnt;
    }
    const double p_less = le / total, p_greater = ge / total;
    if (alt == Alternative::less) return p_less;
    if (alt == Alternative::greater) return p_greater;
    return std::min(1.0, 2.0 * std::min(p_less, p_greater));
}

} // namespace

TEST_CASE("error indicators: two-point hand computation") {
    std::vector<double> y = {1.0, 2.0};
    std::vector<double> yhat = {2.0, 4.0};
    CHECK(mse(y, yhat) == 2.5);
    CHECK(mae(y, yhat) == 1.5);
    CHECK(st_ae(y, yhat) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));

    ErrorSummary s = error_summary(y, yhat);
    CHECK(s.n == 2);
    CHECK(s.mse == 2.5);
    CHECK(s.mae == 1.5);
    // residuals y - yhat are (-1, -2): mean -1.5, spread 0.25
    CHECK(s.bias_sq == doctest::Approx(2.25).epsilon(1e-15));
    CHECK(s.variance == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("error indicators: perfect predictions vanish") {
    Rng rng(1);
    std::vector<double> y = random_vector(40, rng);
    CHECK(mse(y, y) == 0.0);
    CHECK(mae(y, y) == 0.0);
    CHECK(st_ae(y, y) == 0.0);
    auto [b, v] = bias_variance(y, y);
    CHECK(b == 0.0);
    CHECK(v == 0.0);
}

TEST_CASE("error indicators: constant shift isolates the bias") {
    Rng rng(2);
    std::vector<double> y = random_vector(60, rng);
    const double c = 1.75;
    std::vector<double> yhat = y;
    for (double& v : yhat) v += c;

    CHECK(mae(y, yhat) == doctest::Approx(c).epsilon(1e-14));
    CHECK(st_ae(y, yhat) < 1e-12);
    auto [b, v] = bias_variance(y, yhat);
    CHECK(b == doctest::Approx(c * c).epsilon(1e-13));
    CHECK(v < 1e-12);
}

TEST_CASE("error indicators: permutation invariance") {
    Rng rng(3);
    std::vector<double> y = random_vector(30, rng);
    std::vector<double> yhat = random_vector(30, rng);
    ErrorSummary before = error_summary(y, yhat);

    std::vector<size_t> order(30);
    for (size_t i = 0; i < 30; ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<double> yp(30), yhp(30);
    for (size_t i = 0; i < 30; ++i) {
        yp[i] = y[order[i]];
        yhp[i] = yhat[order[i]];
    }
    ErrorSummary after = error_summary(yp, yhp);
    CHECK(before.mse == doctest::Approx(after.mse).epsilon(1e-13));
    CHECK(before.mae == doctest::Approx(after.mae).epsilon(1e-13));
    CHECK(before.st_ae == doctest::Approx(after.st_ae).epsilon(1e-13));
}

TEST_CASE("decomposition identity holds on 1000 random instances") {
    Rng rng(4);
    for (int trial = 0; trial < 1000; ++trial) {
        const size_t n = 2 + rng.below(49);
        std::vector<double> y = random_vector(n, rng);
        std::vector<double> yhat = random_vector(n, rng);
        const double m = mse(y, yhat);
        auto [b, v] = bias_variance(y, yhat);
        CHECK(std::abs(m - (b + v)) < 1e-12 * std::max(1.0, m));
    }
}

TEST_CASE("decomposition identity on the published four-model rows") {
    // rows: train mse, bias^2, variance, val mse, bias^2, variance
    const double rows[4][6] = {
        {0.0209, 0.0004, 0.0205, 0.6814, 0.0350, 0.6464},
        {0.0114, 0.0002, 0.0112, 0.5842, 0.0440, 0.5402},
        {0.0405, 0.0001, 0.0404, 0.6139, 0.0755, 0.5384},
        {0.1831, 0.0002, 0.1829, 0.5019, 0.0130, 0.4881},
    };
    // Three values each rounded to 4 decimals can drift apart by at most
    // 1.5e-4. Seven of the eight published triples respect that bound.
    const double max_rounding = 1.5e-4 + 1e-12;
    for (int r = 0; r < 4; ++r) {
        CHECK(std::abs(rows[r][0] - (rows[r][1] + rows[r][2])) <= max_rounding);
        if (r != 3)
            CHECK(std::abs(rows[r][3] - (rows[r][4] + rows[r][5])) <= max_rounding);
    }
    // The last validation triple misses the identity by more than any
    // rounding can explain; pin the discrepancy so a change in these
    // fixtures is noticed.
    const double gap = std::abs(rows[3][3] - (rows[3][4] + rows[3][5]));
    CHECK(gap == doctest::Approx(0.0008).epsilon(1e-9));
}

TEST_CASE("mann-whitney: textbook two-against-two case") {
    RankTestResult r =
        mann_whitney_u({1.0, 2.0}, {3.0, 4.0}, Alternative::less);
    CHECK(r.method == "exact");
    CHECK(r.u_statistic == 0.0);
    CHECK(std::abs(r.p_value - 1.0 / 6.0) < 1e-15);

    // the mirrored question is near-certain
    RankTestResult g =
        mann_whitney_u({1.0, 2.0}, {3.0, 4.0}, Alternative::greater);
    CHECK(g.p_value == 1.0);
}

TEST_CASE("mann-whitney: identical samples give p = 1") {
    std::vector<double> a = {0.4, 1.2, 3.3, 0.4};
    RankTestResult r = mann_whitney_u(a, a, Alternative::two_sided);
    CHECK(r.method == "exact");
    CHECK(r.p_value == 1.0);
    CHECK(r.u_statistic == doctest::Approx(8.0)); // nm/2 with all midranks
}

TEST_CASE("mann-whitney: hand-enumerated tied case") {
    // pooled {1,2,2,2,3}: midranks 1, 3, 3, 3, 5. First sample rank sum
    // 1+3+3 = 7, U = 1. Of the ten subsets: three give U=1, four U=3,
    // three U=5.
    std::vector<double> a = {1.0, 2.0, 2.0};
    std::vector<double> b = {2.0, 3.0};
    RankTestResult less = mann_whitney_u(a, b, Alternative::less);
    CHECK(less.u_statistic == 1.0);
    CHECK(less.p_value == doctest::Approx(0.3).epsilon(1e-15));
    RankTestResult greater = mann_whitney_u(a, b, Alternative::greater);
    CHECK(greater.p_value == 1.0);
    RankTestResult two = mann_whitney_u(a, b, Alternative::two_sided);
    CHECK(two.p_value == doctest::Approx(0.6).epsilon(1e-15));
}

TEST_CASE("mann-whitney: swapping the samples mirrors the test") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> a = random_vector(6, rng);
        std::vector<double> b = random_vector(7, rng);
        RankTestResult ab = mann_whitney_u(a, b, Alternative::less);
        RankTestResult ba = mann_whitney_u(b, a, Alternative::greater);
        CHECK(ab.u_statistic + mann_whitney_u(b, a).u_statistic == 42.0); // n*m
        CHECK(ab.p_value == ba.p_value);
        CHECK(mann_whitney_u(a, b).p_value == mann_whitney_u(b, a).p_value);
    }
}

TEST_CASE("mann-whitney: exact p-values match the counting oracle, n,m <= 8") {
    Rng rng(6);
    for (size_t n = 1; n <= 8; ++n)
        for (size_t m = 1; m <= 8; ++m) {
            // continuous draws are tie-free with probability one
            std::vector<double> a = random_vector(n, rng);
            std::vector<double> b = random_vector(m, rng);
            for (Alternative alt :
                 {Alternative::less, Alternative::greater, Alternative::two_sided}) {
                RankTestResult r = mann_whitney_u(a, b, alt);
                REQUIRE(r.method == "exact");
                CHECK(r.p_value == doctest::Approx(oracle_p(a, b, alt)).epsilon(1e-12));
            }
        }
}

TEST_CASE("mann-whitney: normal approximation tracks the exact test at n=m=8") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> a = random_vector(8, rng);
        std::vector<double> b = random_vector(8, rng, -10.0 + trial * 0.2, 10.0);
        for (Alternative alt :
             {Alternative::less, Alternative::greater, Alternative::two_sided}) {
            double exact = mann_whitney_u(a, b, alt, RankMethod::exact).p_value;
            double approx =
                mann_whitney_u(a, b, alt, RankMethod::normal_approx).p_value;
            CHECK(std::abs(exact - approx) < 0.02);
        }
    }
}

TEST_CASE("mann-whitney: large samples switch to the approximation") {
    Rng rng(8);
    std::vector<double> a = random_vector(13, rng);
    std::vector<double> b = random_vector(5, rng);
    RankTestResult r = mann_whitney_u(a, b);
    CHECK(r.method == "normal-approx");
    CHECK(r.p_value >= 0.0);
    CHECK(r.p_value <= 1.0);

    // forcing the exact method on the same data still works
    RankTestResult e = mann_whitney_u(a, b, Alternative::two_sided, RankMethod::exact);
    CHECK(e.method == "exact");
    CHECK(std::abs(e.p_value - r.p_value) < 0.05);
}

TEST_CASE("mann-whitney: rejections") {
    CHECK_THROWS_AS(mann_whitney_u({}, {1.0}), ConfigError);
    CHECK_THROWS_AS(mann_whitney_u({1.0}, {}), ConfigError);
}

TEST_CASE("model comparison: identical models are indistinguishable") {
    Rng rng(9);
    std::vector<double> y = random_vector(20, rng);
    std::vector<double> pred = random_vector(20, rng);

    ModelComparison report =
        model_comparison_report({"first", "second"}, {pred, pred}, y);
    REQUIRE(report.rows.size() == 2);
    CHECK(report.rows[0].mse == report.rows[1].mse);
    CHECK(report.rows[0].st_ae == report.rows[1].st_ae);
    CHECK(report.p_values[0][1] == 1.0);
    CHECK(report.p_values[1][0] == 1.0);
    CHECK(report.p_values[0][0] == 1.0);
}

TEST_CASE("model comparison: shape, symmetry, determinism") {
    Rng rng(10);
    std::vector<double> y = random_vector(15, rng);
    std::vector<std::vector<double>> preds = {random_vector(15, rng),
                                              random_vector(15, rng),
                                              random_vector(15, rng)};
    ModelComparison report =
        model_comparison_report({"a", "b", "c"}, preds, y);
    REQUIRE(report.rows.size() == 3);
    REQUIRE(report.p_values.size() == 3);
    for (size_t i = 0; i < 3; ++i)
        for (size_t j = 0; j < 3; ++j)
            CHECK(report.p_values[i][j] == report.p_values[j][i]);

    std::string csv1 = summary_csv(report);
    std::string csv2 = summary_csv(model_comparison_report({"a", "b", "c"}, preds, y));
    CHECK(csv1 == csv2);
    CHECK(csv1.rfind("model,n,mse,mae,st_ae,bias_sq,variance\n", 0) == 0);
    CHECK(std::count(csv1.begin(), csv1.end(), '\n') == 4);

    std::string pm = p_matrix_csv(report);
    CHECK(pm.rfind("model,a,b,c\n", 0) == 0);
    CHECK(std::count(pm.begin(), pm.end(), '\n') == 4);
}

TEST_CASE("model comparison: rejections") {
    std::vector<double> y = {1.0, 2.0, 3.0};
    CHECK_THROWS_AS(model_comparison_report({"solo"}, {y}, y), ConfigError);
    CHECK_THROWS_AS(
        model_comparison_report({"a", "b"}, {y, {1.0, 2.0}}, y), ConfigError);
    CHECK_THROWS_AS(model_comparison_report({"a"}, {y, y}, y), ConfigError);
}

TEST_CASE("metric rejections: length and size guards") {
    std::vector<double> y = {1.0, 2.0};
    CHECK_THROWS_AS(mse(y, {1.0}), ConfigError);
    CHECK_THROWS_AS(mae({}, {}), ConfigError);
    CHECK_THROWS_AS(st_ae({1.0}, {1.0}), ConfigError);
    CHECK_THROWS_AS(bias_variance({}, {}), ConfigError);
}
