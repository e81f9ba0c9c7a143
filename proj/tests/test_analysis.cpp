#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <vector>

#include "coadapt/analysis.hpp"
#include "coadapt/common.hpp"
#include "coadapt/decomp.hpp"
#include "coadapt/metric_trace.hpp"
#include "coadapt/rng.hpp"

using namespace coadapt;

namespace {

FeaturePair make_pair(std::initializer_list<std::initializer_list<double>> phi,
                      std::initializer_list<std::initializer_list<double>> phi_next,
                      double gamma) {
    FeaturePair fp;
    fp.phi = Matrix::from_rows(phi);
    fp.phi_next = Matrix::from_rows(phi_next);
    fp.gamma = gamma;
    return fp;
}

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double scl = 1.0) {
    Matrix m(r, c);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = scl * rng.normal();
    return m;
}

std::string temp_path(const char* name) {
    return std::string("/tmp/coadapt_test_") + name;
}

}  // namespace

TEST_CASE("feature pair validation") {
    FeaturePair fp = make_pair({{1.0, 2.0}}, {{3.0, 4.0}}, 0.9);
    CHECK_NOTHROW(fp.validate());
    fp.gamma = 1.0;
    CHECK_THROWS_AS(fp.validate(), DomainError);
    fp.gamma = 0.0;
    CHECK_THROWS_AS(fp.validate(), DomainError);
    fp.gamma = 0.9;
    fp.phi_next = Matrix(2, 2);
    CHECK_THROWS_AS(fp.validate(), ShapeError);
}

TEST_CASE("mean feature dot on a hand-worked pair") {
    // rows (1,2),(3,4) against (0,1),(5,6): dots are 2 and 39, mean 20.5
    FeaturePair fp = make_pair({{1.0, 2.0}, {3.0, 4.0}}, {{0.0, 1.0}, {5.0, 6.0}}, 0.95);
    CHECK(mean_feature_dot(fp) == doctest::Approx(20.5).epsilon(1e-14));
}

TEST_CASE("mean cosine: identical rows give one, zero rows are excluded") {
    Rng rng(41);
    Matrix phi = random_matrix(rng, 6, 4);
    FeaturePair same;
    same.phi = phi;
    same.phi_next = phi;
    same.gamma = 0.9;
    CosineStats stats = mean_cosine(same);
    CHECK(stats.mean == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(stats.excluded == 0);

    // opposite rows give -1
    same.phi_next = scale(phi, -2.0);
    CHECK(mean_cosine(same).mean == doctest::Approx(-1.0).epsilon(1e-12));

    // a zero row on either side drops that pair from the average
    FeaturePair fp = make_pair({{1.0, 0.0}, {0.0, 0.0}, {0.0, 1.0}},
                               {{1.0, 0.0}, {1.0, 1.0}, {0.0, 0.0}}, 0.9);
    stats = mean_cosine(fp);
    CHECK(stats.excluded == 2);
    CHECK(stats.mean == doctest::Approx(1.0).epsilon(1e-12));

    FeaturePair all_zero = make_pair({{0.0}, {0.0}}, {{1.0}, {2.0}}, 0.9);
    CHECK_THROWS_AS(mean_cosine(all_zero), DomainError);
}

TEST_CASE("srank on matrices with known spectra") {
    CHECK(srank(Matrix(5, 7)) == 0);
    CHECK(srank(Matrix(0, 0)) == 0);

    // singular values 10, 1, 1: 10/12 < 0.99, 11/12 < 0.99, so all three needed
    Matrix d3(3, 3);
    d3(0, 0) = 10.0;
    d3(1, 1) = 1.0;
    d3(2, 2) = 1.0;
    CHECK(srank(d3, 0.01) == 3);

    // identity: first 99 of 100 equal values reach the 0.99 mark exactly
    CHECK(srank(Matrix::identity(100), 0.01) == 99);

    Rng rng(7);
    Matrix u = random_matrix(rng, 8, 1);
    Matrix v = random_matrix(rng, 1, 5);
    CHECK(srank(matmul(u, v), 0.01) == 1);

    CHECK_THROWS_AS(srank(d3, 0.0), DomainError);
    CHECK_THROWS_AS(srank(d3, 1.0), DomainError);
}

TEST_CASE("srank is invariant to row permutation and positive scaling shifts rank only via spectrum") {
    Rng rng(19);
    Matrix phi = random_matrix(rng, 10, 6);
    const std::size_t base = srank(phi, 0.05);

    // permuting rows leaves singular values unchanged
    Matrix permuted(10, 6);
    std::vector<std::size_t> order{3, 1, 4, 0, 9, 2, 6, 8, 7, 5};
    for (std::size_t i = 0; i < order.size(); ++i)
        for (std::size_t j = 0; j < 6; ++j) permuted(i, j) = phi(order[i], j);
    CHECK(srank(permuted, 0.05) == base);

    // a global positive scale multiplies every singular value alike
    CHECK(srank(scale(phi, 3.75), 0.05) == base);
}

TEST_CASE("coadaptation trace test on scalar features") {
    // dot sum 2 >= (1/0.9) * norm sum 1
    FeaturePair holds = make_pair({{1.0}}, {{2.0}}, 0.9);
    CHECK(coadaptation_trace_test(holds));

    // dot sum 0.5 < 1/0.9
    FeaturePair fails = make_pair({{1.0}}, {{0.5}}, 0.9);
    CHECK_FALSE(coadaptation_trace_test(fails));

    // boundary: dot sum exactly norm_sum / gamma counts as holding
    FeaturePair boundary = make_pair({{1.0}}, {{2.0}}, 0.5);
    CHECK(coadaptation_trace_test(boundary));
}

TEST_CASE("stability spectrum: tabular cyclic permutation is stable") {
    // Phi = I4, Phi' = cyclic shift: M = I - gamma P with eigenvalues
    // 1 - gamma * (4th roots of unity)
    const double gamma = 0.9;
    Matrix phi = Matrix::identity(4);
    Matrix phi_next(4, 4);
    for (std::size_t i = 0; i < 4; ++i) phi_next(i, (i + 1) % 4) = 1.0;
    FeaturePair fp;
    fp.phi = phi;
    fp.phi_next = phi_next;
    fp.gamma = gamma;

    StabilityReport report = stability_spectrum(fp);
    CHECK(report.verdict == Verdict::Stable);
    CHECK_FALSE(report.trace_condition_holds);
    CHECK(report.min_real_part == doctest::Approx(1.0 - gamma).epsilon(1e-9));
    REQUIRE(report.eigenvalues.size() == 4);

    std::vector<std::complex<double>> expected{
        {1.0 + gamma, 0.0}, {1.0, gamma}, {1.0, -gamma}, {1.0 - gamma, 0.0}};
    for (const auto& want : expected) {
        bool found = false;
        for (const auto& got : report.eigenvalues)
            if (std::abs(got - want) < 1e-9) found = true;
        CHECK(found);
    }
}

TEST_CASE("stability spectrum: negative scalar and oscillatory cases are non-convergent") {
    FeaturePair neg = make_pair({{1.0}}, {{2.0}}, 0.9);
    StabilityReport report = stability_spectrum(neg);
    CHECK(report.verdict == Verdict::NonConvergent);
    CHECK(report.trace_condition_holds);
    CHECK(report.min_real_part == doctest::Approx(-0.8).epsilon(1e-12));

    // Phi = I2 and Phi' = (I - M)/gamma realize M = [[0,-1],[1,0]], a pure
    // rotation generator: eigenvalues +-i never contract
    const double gamma = 0.5;
    Matrix m_target = Matrix::from_rows({{0.0, -1.0}, {1.0, 0.0}});
    Matrix phi_next(2, 2);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            phi_next(i, j) = ((i == j ? 1.0 : 0.0) - m_target(i, j)) / gamma;
    FeaturePair osc;
    osc.phi = Matrix::identity(2);
    osc.phi_next = phi_next;
    osc.gamma = gamma;
    report = stability_spectrum(osc);
    CHECK(report.verdict == Verdict::NonConvergent);
    REQUIRE(report.eigenvalues.size() == 2);
    CHECK(std::abs(report.eigenvalues[0] - std::complex<double>(0.0, 1.0)) < 1e-10);
    CHECK(std::abs(report.eigenvalues[1] - std::complex<double>(0.0, -1.0)) < 1e-10);
}

TEST_CASE("stability spectrum: zero features sit on the borderline") {
    FeaturePair fp;
    fp.phi = Matrix(3, 2);
    fp.phi_next = Matrix(3, 2);
    fp.gamma = 0.9;
    StabilityReport report = stability_spectrum(fp);
    CHECK(report.verdict == Verdict::Borderline);
    CHECK(report.min_real_part == 0.0);
}

TEST_CASE("trace condition implies the verdict is never stable") {
    Rng rng(523);
    std::size_t holding = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.uniform_int(5);
        const std::size_t d = 1 + rng.uniform_int(6);
        const double gamma = 0.5 + 0.49 * rng.uniform();
        FeaturePair fp;
        fp.phi = random_matrix(rng, n, d);
        fp.gamma = gamma;
        if (trial % 2 == 0) {
            // amplified copy guarantees the dot-product condition holds
            fp.phi_next = scale(fp.phi, (1.0 + rng.uniform()) / gamma);
        } else {
            fp.phi_next = random_matrix(rng, n, d);
        }
        if (!coadaptation_trace_test(fp)) continue;
        ++holding;
        StabilityReport report = stability_spectrum(fp);
        CHECK(report.trace_condition_holds);
        CHECK(report.verdict != Verdict::Stable);
    }
    CHECK(holding >= 100);  // the amplified half always satisfies the condition
}

TEST_CASE("linear TD simulation converges to the scalar fixed point") {
    // phi = 1, phi' = 0.5, gamma = 0.9, r = 1: M = 0.55, w* = 1/0.55
    FeaturePair fp = make_pair({{1.0}}, {{0.5}}, 0.9);
    LinearTdResult result = simulate_linear_td(fp, {1.0}, 0.1, 2000);
    REQUIRE(result.fixed_point_exists);
    CHECK(result.w_star[0] == doctest::Approx(1.0 / 0.55).epsilon(1e-12));
    CHECK_FALSE(result.diverged);
    CHECK(result.errors.back() < 1e-10);
    CHECK(result.w_final[0] == doctest::Approx(1.0 / 0.55).epsilon(1e-8));
    CHECK(result.steps.front() == 0);
    CHECK(result.steps.back() == 2000);
    for (std::size_t i = 1; i < result.steps.size(); ++i)
        CHECK(result.steps[i] > result.steps[i - 1]);
}

TEST_CASE("linear TD simulation flags divergence for an expansive system") {
    // M = 1 - 0.9*2 = -0.8 < 0: iteration runs away from any start
    FeaturePair fp = make_pair({{1.0}}, {{2.0}}, 0.9);
    LinearTdResult result = simulate_linear_td(fp, {1.0}, 0.1, 2000);
    CHECK(result.diverged);
    CHECK(result.errors.back() > result.errors.front());
}

TEST_CASE("linear TD simulation reports a missing fixed point") {
    // Phi = I2 with Phi' = (1/gamma) diag(1, 0) gives M = diag(0, 1); the
    // target b = (1, 0) lies outside range(M), so M w = b has no solution
    const double gamma = 0.9;
    Matrix phi_next(2, 2);
    phi_next(0, 0) = 1.0 / gamma;
    FeaturePair fp;
    fp.phi = Matrix::identity(2);
    fp.phi_next = phi_next;
    fp.gamma = gamma;
    LinearTdResult result = simulate_linear_td(fp, {1.0, 0.0}, 0.1, 500);
    CHECK_FALSE(result.fixed_point_exists);
    // without a fixed point the monitored quantity is ||w||, which drifts
    // linearly along the unreachable direction
    CHECK(result.w_final[0] > 1.0);
    CHECK(std::fabs(result.w_final[1]) < 1e-12);

    CHECK_THROWS_AS(simulate_linear_td(fp, {1.0}, 0.1, 10), ShapeError);
    CHECK_THROWS_AS(simulate_linear_td(fp, {1.0, 0.0}, 0.0, 10), DomainError);
    CHECK_THROWS_AS(simulate_linear_td(fp, {1.0, 0.0}, 0.1, 0), DomainError);
}

TEST_CASE("lyapunov sigma matches the scalar closed form") {
    // sigma* = eta^2 m / (1 - (1 - eta g)^2) with g = m = 1, eta = 0.1
    Matrix g(1, 1), m(1, 1);
    g(0, 0) = 1.0;
    m(0, 0) = 1.0;
    Matrix sigma = lyapunov_sigma(g, m, 0.1);
    const double expected = 0.01 / (1.0 - 0.81);
    CHECK(sigma(0, 0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("lyapunov sigma satisfies its fixed-point equation on random SPD inputs") {
    Rng rng(977);
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t d = 2 + rng.uniform_int(3);
        // G = B^T B + 0.5 I keeps eigenvalues in a range where eta = 0.05
        // makes I - eta G a strict contraction
        Matrix b = random_matrix(rng, d, d, 0.4);
        Matrix g = matmul(transpose(b), b);
        for (std::size_t i = 0; i < d; ++i) g(i, i) += 0.5;
        Matrix c = random_matrix(rng, d, d, 0.7);
        Matrix m = matmul(transpose(c), c);

        const double eta = 0.05;
        Matrix sigma = lyapunov_sigma(g, m, eta, 600);

        Matrix a = Matrix::identity(d);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) a(i, j) -= eta * g(i, j);
        Matrix residual = sub(add(matmul(a, matmul(sigma, transpose(a))),
                                  scale(m, eta * eta)),
                              sigma);
        CHECK(frobenius_norm(residual) < 1e-8 * std::max(1.0, frobenius_norm(sigma)));

        // stationary covariances are symmetric and positive semidefinite
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                CHECK(sigma(i, j) == doctest::Approx(sigma(j, i)).epsilon(1e-10));
        for (const auto& ev : eig_complex(sigma)) CHECK(ev.real() > -1e-10);
    }
}

TEST_CASE("lyapunov sigma rejects non-contractive dynamics unless the noise misses them") {
    Matrix g(1, 1), m(1, 1);
    g(0, 0) = -1.0;  // I - eta G = 1.1 expands
    m(0, 0) = 1.0;
    CHECK_THROWS_AS(lyapunov_sigma(g, m, 0.1), NumericError);

    // with zero noise the expansion is never excited: the covariance stays 0
    Matrix zero(1, 1);
    Matrix sigma = lyapunov_sigma(g, zero, 0.1);
    CHECK(sigma(0, 0) == 0.0);

    // expansion confined to a direction outside the noise support is fine
    Matrix g2(2, 2), m2(2, 2);
    g2(0, 0) = 1.0;
    g2(1, 1) = -1.0;
    m2(0, 0) = 1.0;
    sigma = lyapunov_sigma(g2, m2, 0.1);
    CHECK(sigma(0, 0) == doctest::Approx(0.01 / 0.19).epsilon(1e-12));
    CHECK(sigma(1, 1) == 0.0);

    // skipping the check on a truly expansive pair blows up instead
    CHECK_THROWS_AS(lyapunov_sigma(g, m, 0.1, 2000, false), NumericError);

    Matrix asym = Matrix::from_rows({{0.0, 1.0}, {0.0, 0.0}});
    CHECK_THROWS_AS(lyapunov_sigma(g2, asym, 0.1), DomainError);
    CHECK_THROWS_AS(lyapunov_sigma(Matrix(2, 3), m2, 0.1), ShapeError);
    CHECK_THROWS_AS(lyapunov_sigma(g2, m2, 0.0), DomainError);
}

TEST_CASE("implicit regularizer: identity noise model") {
    // scalar: ||phi||^2 - gamma * dot = 1 - 0.9 * 2
    FeaturePair fp = make_pair({{1.0}}, {{2.0}}, 0.9);
    CHECK(implicit_reg_value(fp, NoiseModel::Identity) ==
          doctest::Approx(-0.8).epsilon(1e-14));

    // with Sigma = I the Lyapunov form collapses to the identity form
    Rng rng(301);
    FeaturePair rand_fp;
    rand_fp.phi = random_matrix(rng, 7, 5);
    rand_fp.phi_next = random_matrix(rng, 7, 5);
    rand_fp.gamma = 0.9;
    const double identity_val = implicit_reg_value(rand_fp, NoiseModel::Identity);
    const double lyap_val =
        implicit_reg_value(rand_fp, NoiseModel::Lyapunov, Matrix::identity(5));
    CHECK(lyap_val == doctest::Approx(identity_val).epsilon(1e-12));

    CHECK_THROWS_AS(
        implicit_reg_value(rand_fp, NoiseModel::Lyapunov, Matrix::identity(4)),
        ShapeError);
}

TEST_CASE("implicit regularizer: lyapunov form against a direct loop") {
    Rng rng(302);
    FeaturePair fp;
    fp.phi = random_matrix(rng, 6, 4);
    fp.phi_next = random_matrix(rng, 6, 4);
    fp.gamma = 0.8;
    Matrix c = random_matrix(rng, 4, 4);
    Matrix sigma = matmul(transpose(c), c);

    // direct: sum_i phi_i^T Sigma phi_i - gamma sum_i phi'_i^T Sigma phi_i
    double expected = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            double proj = 0.0;
            for (std::size_t k = 0; k < 4; ++k) proj += sigma(j, k) * fp.phi(i, k);
            expected += (fp.phi(i, j) - fp.gamma * fp.phi_next(i, j)) * proj;
        }
    }
    CHECK(implicit_reg_value(fp, NoiseModel::Lyapunov, sigma) ==
          doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("implicit regularizer is positive when next-features permute the rows") {
    // if phi' is a row permutation of phi, Cauchy-Schwarz bounds each dot by
    // the mean of the paired squared norms, so R >= (1 - gamma) sum ||phi||^2
    Rng rng(303);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 2 + rng.uniform_int(6);
        const std::size_t d = 1 + rng.uniform_int(5);
        const double gamma = 0.5 + 0.49 * rng.uniform();
        Matrix phi = random_matrix(rng, n, d);
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        for (std::size_t i = n; i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_int(i)]);
        Matrix permuted(n, d);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) permuted(i, j) = phi(order[i], j);

        FeaturePair fp;
        fp.phi = phi;
        fp.phi_next = permuted;
        fp.gamma = gamma;
        double norm_sum = 0.0;
        for (std::size_t i = 0; i < phi.size(); ++i)
            norm_sum += phi.data()[i] * phi.data()[i];
        CHECK(implicit_reg_value(fp, NoiseModel::Identity) >=
              (1.0 - gamma) * norm_sum - 1e-9);
    }
}

TEST_CASE("metric trace round-trips through its CSV file") {
    MetricTrace trace;
    trace.provenance = {"preset = demo", "seed = 7"};
    MetricRow r0;
    r0.step = 0;
    r0.loss = 1.5;
    r0.mean_q = -0.25;
    r0.feat_dot = 3.1415926535897931;
    r0.cosine = 0.125;
    r0.srank = 12;
    r0.eval_return = 0.5;
    r0.r_td = -2.0e-7;
    r0.diverged = false;
    MetricRow r1 = r0;
    r1.step = 1000;
    r1.loss = 0.0625;
    r1.diverged = true;
    trace.rows = {r0, r1};

    const std::string path = temp_path("metric_trace.csv");
    write_metric_trace(trace, path);
    MetricTrace back = read_metric_trace(path);
    REQUIRE(back.rows.size() == 2);
    REQUIRE(back.provenance.size() == 2);
    CHECK(back.provenance[0] == "preset = demo");
    CHECK(back.provenance[1] == "seed = 7");
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(back.rows[i].step == trace.rows[i].step);
        CHECK(back.rows[i].loss == trace.rows[i].loss);
        CHECK(back.rows[i].mean_q == trace.rows[i].mean_q);
        CHECK(back.rows[i].feat_dot == trace.rows[i].feat_dot);
        CHECK(back.rows[i].cosine == trace.rows[i].cosine);
        CHECK(back.rows[i].srank == trace.rows[i].srank);
        CHECK(back.rows[i].eval_return == trace.rows[i].eval_return);
        CHECK(back.rows[i].r_td == trace.rows[i].r_td);
        CHECK(back.rows[i].diverged == trace.rows[i].diverged);
    }
    std::remove(path.c_str());

    MetricTrace bad = trace;
    bad.rows[1].step = 0;
    CHECK_THROWS_AS(write_metric_trace(bad, temp_path("metric_bad.csv")), DomainError);
    CHECK_THROWS_AS(read_metric_trace("/nonexistent/trace.csv"), IoError);
}
