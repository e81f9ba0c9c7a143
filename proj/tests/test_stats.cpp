#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "coadapt/common.hpp"
#include "coadapt/rng.hpp"
#include "coadapt/stats.hpp"

using namespace coadapt;

namespace {

std::string temp_path(const char* name) {
    return std::string("/tmp/coadapt_test_") + name;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

RunScores random_scores(Rng& rng, std::size_t n_tasks) {
    RunScores rs;
    for (std::size_t t = 0; t < n_tasks; ++t) {
        std::vector<double> scores(1 + rng.uniform_int(4));
        // small integer scores make ties common
        for (double& s : scores) s = static_cast<double>(rng.uniform_int(5));
        rs.by_task["task" + std::to_string(t)] = std::move(scores);
    }
    return rs;
}

}  // namespace

TEST_CASE("iqm trims a quarter from each end") {
    CHECK(iqm({1, 2, 3, 4, 5, 6, 7, 8}) == 4.5);  // mean of (3,4,5,6)
    CHECK(iqm({3, 3, 3, 3, 3}) == 3.0);
    CHECK(iqm({2, 9, 4}) == 5.0);  // n = 3 drops nothing
    CHECK(iqm({7}) == 7.0);
    CHECK(iqm({10, 1, 5, 7, 100}) == doctest::Approx(22.0 / 3.0));  // drops 1 and 100
    CHECK(iqm({8, 1, 2, 7, 3, 6, 4, 5}) == 4.5);  // order never matters

    CHECK_THROWS_AS(iqm({}), DomainError);
    CHECK_THROWS_AS(iqm({1.0, std::numeric_limits<double>::quiet_NaN()}), DomainError);
    CHECK_THROWS_AS(iqm({1.0, std::numeric_limits<double>::infinity()}), DomainError);
}

TEST_CASE("iqm never decreases when a value increases") {
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> values(1 + rng.uniform_int(12));
        for (double& v : values) v = rng.uniform(-10.0, 10.0);
        const double before = iqm(values);
        values[rng.uniform_int(values.size())] += rng.uniform(0.0, 5.0);
        CHECK(iqm(values) >= before);
    }
}

TEST_CASE("bootstrap interval brackets the sample statistic") {
    std::vector<double> data(100);
    for (std::size_t i = 0; i < data.size(); ++i)
        data[i] = static_cast<double>(i + 1);

    Rng rng(3);
    const auto [lo, hi] = percentile_bootstrap_ci(data, 10000, 0.95, rng);
    const double sample = iqm(data);
    CHECK(lo <= sample);
    CHECK(hi >= sample);
    CHECK(lo < hi);
    CHECK(lo >= 1.0);
    CHECK(hi <= 100.0);

    // deterministic in the generator
    Rng a(9), b(9), c(10);
    const auto p1 = percentile_bootstrap_ci(data, 200, 0.9, a);
    const auto p2 = percentile_bootstrap_ci(data, 200, 0.9, b);
    CHECK(p1 == p2);
    CHECK(p1 != percentile_bootstrap_ci(data, 200, 0.9, c));

    // constant data collapses the interval
    Rng d(4);
    const auto flat = percentile_bootstrap_ci({5.0, 5.0, 5.0, 5.0}, 100, 0.5, d);
    CHECK(flat.first == 5.0);
    CHECK(flat.second == 5.0);

    // endpoints stay inside the observed range for arbitrary data
    Rng gen(13);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> values(1 + gen.uniform_int(10));
        double vmin = 1e300, vmax = -1e300;
        for (double& v : values) {
            v = gen.uniform(-50.0, 50.0);
            vmin = std::min(vmin, v);
            vmax = std::max(vmax, v);
        }
        // the statistic is a mean, so rounding can miss the range by an ulp
        const double slack = 1e-12 * std::max(1.0, std::max(std::abs(vmin), std::abs(vmax)));
        const auto [l, h] = percentile_bootstrap_ci(values, 150, 0.99, gen);
        CHECK(l >= vmin - slack);
        CHECK(h <= vmax + slack);
        CHECK(l <= h);
    }

    Rng e(1);
    CHECK_THROWS_AS(percentile_bootstrap_ci(data, 99, 0.95, e), DomainError);
    CHECK_THROWS_AS(percentile_bootstrap_ci(data, 100, 0.0, e), DomainError);
    CHECK_THROWS_AS(percentile_bootstrap_ci(data, 100, 1.0, e), DomainError);
    CHECK_THROWS_AS(percentile_bootstrap_ci({}, 100, 0.9, e), DomainError);
}

TEST_CASE("probability of improvement follows the pairwise win rule") {
    RunScores x, y;
    x.by_task["t"] = {1.0, 3.0};
    y.by_task["t"] = {2.0};
    CHECK(prob_improvement(x, y) == 0.5);  // wins (0, 1) out of two pairs
    CHECK(prob_improvement(y, x) == 0.5);

    RunScores dom, weak;
    dom.by_task["a"] = {10.0, 12.0};
    dom.by_task["b"] = {9.0};
    weak.by_task["a"] = {1.0, 2.0};
    weak.by_task["b"] = {3.0, 4.0};
    CHECK(prob_improvement(dom, weak) == 1.0);
    CHECK(prob_improvement(weak, dom) == 0.0);

    RunScores same;
    same.by_task["a"] = {1.0, 2.0};
    CHECK(prob_improvement(same, same) == 0.5);

    // per-task averaging: 0.5 on one task, 1.0 on the other
    RunScores mx, my;
    mx.by_task["a"] = {1.0, 3.0};
    my.by_task["a"] = {2.0};
    mx.by_task["b"] = {5.0};
    my.by_task["b"] = {1.0};
    CHECK(prob_improvement(mx, my) == 0.75);

    // ties count half
    RunScores tx, ty;
    tx.by_task["t"] = {2.0, 2.0};
    ty.by_task["t"] = {2.0};
    CHECK(prob_improvement(tx, ty) == 0.5);

    RunScores extra = mx;
    extra.by_task["c"] = {1.0};
    CHECK_THROWS_AS(prob_improvement(extra, my), DomainError);
    RunScores renamed;
    renamed.by_task["a"] = {1.0};
    renamed.by_task["z"] = {1.0};
    CHECK_THROWS_AS(prob_improvement(mx, renamed), DomainError);

    RunScores hollow;
    CHECK_THROWS_AS(prob_improvement(hollow, hollow), DomainError);
    RunScores bad;
    bad.by_task["t"] = {std::numeric_limits<double>::quiet_NaN()};
    CHECK_THROWS_AS(prob_improvement(bad, bad), DomainError);
}

TEST_CASE("improvement probabilities of the two directions sum to one exactly") {
    Rng rng(55);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n_tasks = 1 + rng.uniform_int(3);
        const RunScores x = random_scores(rng, n_tasks);
        const RunScores y = random_scores(rng, n_tasks);
        const double pxy = prob_improvement(x, y);
        const double pyx = prob_improvement(y, x);
        CHECK(pxy >= 0.0);
        CHECK(pxy <= 1.0);
        CHECK(pxy + pyx == 1.0);
    }
}

TEST_CASE("summary and pairwise tables embed provenance comments") {
    const std::string path = temp_path("summary.csv");
    write_summary_csv({{"sarsa", 1.5, 1.25, 1.0, 2.0}, {"td", 0.5, 0.5, 0.25, 0.75}},
                      path, {"analyze.input = runs/"});
    std::vector<std::string> lines = read_lines(path);
    REQUIRE(lines.size() == 5);
    CHECK(lines[0] == "# analyze.input = runs/");
    CHECK(lines[1] == "# stats.bootstrap = plain-percentile (non-stratified)");
    CHECK(lines[2] == std::string(kSummaryCsvHeader));
    CHECK(lines[3] == "sarsa,1.5,1.25,1,2");
    CHECK(lines[4] == "td,0.5,0.5,0.25,0.75");
    std::remove(path.c_str());

    const std::string ppath = temp_path("pairwise.csv");
    write_pairwise_csv({{"sarsa", "td", 0.75}}, ppath);
    lines = read_lines(ppath);
    REQUIRE(lines.size() == 2);
    CHECK(lines[0] == std::string(kPairwiseCsvHeader));
    CHECK(lines[1] == "sarsa,td,0.75");
    std::remove(ppath.c_str());

    CHECK_THROWS_AS(write_summary_csv({}, "/nonexistent_dir/x.csv"), IoError);
    CHECK_THROWS_AS(write_pairwise_csv({}, "/nonexistent_dir/x.csv"), IoError);
}
