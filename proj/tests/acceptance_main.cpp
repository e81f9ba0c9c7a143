// End-to-end acceptance gate. Each criterion prints one [PASS]/[FAIL] line;
// the exit status is the number of failed criteria. The training criteria
// run the shipped preset protocols at full scale, so a complete pass takes
// roughly half an hour on one core.
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "coadapt/analysis.hpp"
#include "coadapt/cli.hpp"
#include "coadapt/common.hpp"
#include "coadapt/dataset.hpp"
#include "coadapt/losses.hpp"
#include "coadapt/matrix.hpp"
#include "coadapt/metric_trace.hpp"
#include "coadapt/mlp.hpp"
#include "coadapt/qnetwork.hpp"
#include "coadapt/rng.hpp"
#include "coadapt/stats.hpp"
#include "coadapt/train.hpp"

using namespace coadapt;

namespace {

struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool condition, const std::string& detail) {
    if (!condition) throw CheckFailure(detail);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
        .count();
}

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double scl = 1.0) {
    Matrix m(r, c);
    for (std::size_t i = 0; i < m.size(); ++i)
        m.data()[i] = rng.uniform(-scl, scl);
    return m;
}

// --- criterion 1 helpers (same conventions as the unit tests) ---

double rel_err(double a, double b) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-6});
}

double max_rel_err(const Gradients& a, const Gradients& b) {
    double worst = 0.0;
    for (std::size_t l = 0; l < a.d_weights.size(); ++l) {
        for (std::size_t i = 0; i < a.d_weights[l].size(); ++i)
            worst = std::max(worst, rel_err(a.d_weights[l].data()[i],
                                            b.d_weights[l].data()[i]));
        for (std::size_t i = 0; i < a.d_biases[l].size(); ++i)
            worst = std::max(worst, rel_err(a.d_biases[l][i], b.d_biases[l][i]));
    }
    return worst;
}

// Central differences are only trustworthy away from the ReLU kink.
bool far_from_kinks(const MlpParams& params, const std::vector<double>& input,
                    double margin = 1e-3) {
    MlpTape tape = mlp_forward_tape(params, input);
    for (std::size_t l = 0; l + 1 < params.n_layers(); ++l)
        for (double z : tape.pre[l])
            if (std::fabs(z) < margin) return false;
    return true;
}

std::string criterion_gradients() {
    const auto start = std::chrono::steady_clock::now();
    Rng rng(42);
    double worst = 0.0;
    int done = 0;
    while (done < 100) {
        const HeadMode mode = done % 2 == 0 ? HeadMode::StateInputMultiHead
                                            : HeadMode::StateActionInputScalar;
        const std::size_t in_dim = 2 + rng.uniform_int(4);
        const std::size_t hid = 3 + rng.uniform_int(6);
        const std::size_t out_dim =
            mode == HeadMode::StateInputMultiHead ? 2 + rng.uniform_int(4) : 1;
        MlpParams p = make_mlp({in_dim, hid, hid, out_dim}, mode, rng);
        for (auto& b : p.biases)
            for (double& v : b) v = rng.uniform(-0.5, 0.5);
        std::vector<double> input(in_dim);
        for (double& v : input) v = rng.uniform(-1.0, 1.0);
        if (!far_from_kinks(p, input)) continue;
        std::vector<double> upstream(out_dim);
        for (double& v : upstream) v = rng.uniform(-1.0, 1.0);
        worst = std::max(worst, max_rel_err(mlp_backward(p, input, upstream),
                                            finite_diff_grad(p, input, upstream)));
        ++done;
    }
    const double elapsed = seconds_since(start);
    require(worst < 1e-4, "max relative gradient error " + fmt(worst) + " >= 1e-4");
    require(elapsed < 10.0, "took " + fmt(elapsed) + " s (limit 10 s)");
    return "100 nets, both head modes, max rel err " + fmt(worst) + " in " +
           fmt(elapsed) + " s";
}

std::string criterion_lyapunov() {
    // scalar g = m = 1, eta = 0.1: sigma = eta / (2 - eta)
    const Matrix sigma1 =
        lyapunov_sigma(Matrix::from_rows({{1.0}}), Matrix::from_rows({{1.0}}), 0.1);
    const double expected = 0.1 / 1.9;
    require(std::fabs(sigma1(0, 0) - expected) <= 1e-9,
            "scalar fixed point " + fmt(sigma1(0, 0)) + " != " + fmt(expected));

    Rng rng(7);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix a = random_matrix(rng, 4, 4);
        Matrix g = matmul(transpose(a), a);
        for (std::size_t i = 0; i < 4; ++i) g(i, i) += 0.2;  // keep 1 - eta*G contractive
        const Matrix b = random_matrix(rng, 4, 4);
        const Matrix m = matmul(transpose(b), b);
        const double eta = 0.1;
        const Matrix sigma = lyapunov_sigma(g, m, eta, 4000);
        Matrix propagator = Matrix::identity(4);
        propagator = sub(propagator, scale(g, eta));
        const Matrix next =
            add(matmul(matmul(propagator, sigma), transpose(propagator)),
                scale(m, eta * eta));
        worst = std::max(worst, frobenius_norm(sub(sigma, next)));
    }
    require(worst < 1e-8, "worst fixed-point residual " + fmt(worst) + " >= 1e-8");
    return "scalar value " + fmt(sigma1(0, 0)) + ", worst 4x4 residual " + fmt(worst);
}

// Shared instance set for the spectral criteria: 500 feature pairs with
// n <= 6, d <= 8, gamma cycling {0.5, 0.9, 0.99}; odd indices are amplified
// copies so the dot-product condition is triggered often.
struct SpectralInstance {
    FeaturePair fp;
    std::vector<double> rewards;
};

const std::vector<SpectralInstance>& spectral_instances() {
    static const std::vector<SpectralInstance> instances = [] {
        Rng rng(99);
        const double gammas[3] = {0.5, 0.9, 0.99};
        std::vector<SpectralInstance> out;
        out.reserve(500);
        for (int trial = 0; trial < 500; ++trial) {
            const std::size_t n = 1 + rng.uniform_int(6);
            const std::size_t d = 1 + rng.uniform_int(8);
            SpectralInstance inst;
            inst.fp.gamma = gammas[trial % 3];
            inst.fp.phi = random_matrix(rng, n, d);
            inst.fp.phi_next =
                trial % 2 == 1
                    ? scale(inst.fp.phi, (1.0 + rng.uniform()) / inst.fp.gamma)
                    : random_matrix(rng, n, d);
            inst.rewards.resize(n);
            for (double& r : inst.rewards) r = rng.uniform(-1.0, 1.0);
            out.push_back(std::move(inst));
        }
        return out;
    }();
    return instances;
}

std::string criterion_trace_condition() {
    const auto start = std::chrono::steady_clock::now();
    std::size_t holding = 0;
    for (const SpectralInstance& inst : spectral_instances()) {
        if (!coadaptation_trace_test(inst.fp)) continue;
        ++holding;
        const StabilityReport report = stability_spectrum(inst.fp);
        require(report.trace_condition_holds,
                "report disagrees with the standalone dot-product test");
        require(report.verdict != Verdict::Stable,
                "dot-product condition held yet the verdict was Stable");
    }
    const double elapsed = seconds_since(start);
    require(holding >= 200, "only " + std::to_string(holding) + " instances triggered");
    require(elapsed < 30.0, "took " + fmt(elapsed) + " s (limit 30 s)");
    return std::to_string(holding) + "/500 instances triggered, 0 counterexamples, " +
           fmt(elapsed) + " s";
}

std::string criterion_spectrum_vs_simulation() {
    const auto start = std::chrono::steady_clock::now();
    std::size_t compared = 0, agreed = 0, strong = 0, strong_agreed = 0;
    for (const SpectralInstance& inst : spectral_instances()) {
        const StabilityReport report = stability_spectrum(inst.fp);
        if (report.verdict == Verdict::Borderline) continue;
        const LinearTdResult sim =
            simulate_linear_td(inst.fp, inst.rewards, 1e-3, 200000);
        const bool match = (report.verdict == Verdict::NonConvergent) == sim.diverged;
        ++compared;
        agreed += match;
        if (std::fabs(report.min_real_part) > 0.05) {
            ++strong;
            strong_agreed += match;
        }
    }
    const double elapsed = seconds_since(start);
    require(compared > 0, "every instance came out Borderline");
    require(strong_agreed == strong,
            std::to_string(strong - strong_agreed) + "/" + std::to_string(strong) +
                " clear-margin instances disagreed");
    const double overall =
        static_cast<double>(agreed) / static_cast<double>(compared);
    require(overall >= 0.95, "overall agreement " + fmt(overall) + " < 0.95");
    require(elapsed < 300.0, "took " + fmt(elapsed) + " s (limit 5 min)");
    return "clear margin " + std::to_string(strong_agreed) + "/" +
           std::to_string(strong) + ", overall " + std::to_string(agreed) + "/" +
           std::to_string(compared) + ", " + fmt(elapsed) + " s";
}

std::string criterion_srank() {
    require(srank(Matrix::identity(100), 0.01) == 99, "identity(100) srank != 99");

    Rng rng(5);
    const Matrix u = random_matrix(rng, 8, 1);
    const Matrix v = random_matrix(rng, 1, 6);
    require(srank(matmul(u, v)) == 1, "rank-1 srank != 1");

    Matrix diag(3, 3);
    diag(0, 0) = 10.0;
    diag(1, 1) = 1.0;
    diag(2, 2) = 1.0;
    require(srank(diag) == 3, "diag(10,1,1) srank != 3");

    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.uniform_int(7);
        const std::size_t d = 2 + rng.uniform_int(7);
        const Matrix m = random_matrix(rng, n, d);
        const std::size_t base = srank(m);

        std::vector<std::size_t> perm(n);
        for (std::size_t i = 0; i < n; ++i) perm[i] = i;
        for (std::size_t i = n; i > 1; --i)
            std::swap(perm[i - 1], perm[rng.uniform_int(i)]);
        Matrix permuted(n, d);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) permuted(i, j) = m(perm[i], j);
        require(srank(permuted) == base, "row permutation changed the srank");

        const Matrix scaled = scale(m, 0.1 + 10.0 * rng.uniform());
        require(srank(scaled) == base, "positive scaling changed the srank");
    }
    return "exact values and 100 invariance trials hold";
}

// --- training criteria: the preset protocol at full scale ---

const std::string kWorkDir = "acceptance_work";
const std::string kDatasetName = "grid16-sparse-256.ds";

const char* kSelectorSweepCfg =
    "data.path = ../grid16-sparse-256.ds\n"
    "data.expect_obs_dim = 64\n"
    "train.loss_head = plain\n"
    "train.lr = 0.02\n"
    "train.optimizer = sgd\n"
    "train.batch_size = 16\n"
    "train.target_period = 100\n"
    "train.total_steps = 100000\n"
    "train.eval_every = 2000\n"
    "train.hidden = 128,128\n"
    "train.head_mode = multihead\n"
    "sweep.selector = mc,sarsa,expected\n";

const char* kDr3SweepCfg =
    "data.path = ../grid16-sparse-256.ds\n"
    "data.expect_obs_dim = 64\n"
    "train.selector = max\n"
    "train.loss_head = cql\n"
    "train.cql_alpha = 10\n"
    "train.dr3.variant = dot\n"
    "train.lr = 3e-5\n"
    "train.optimizer = adam\n"
    "train.batch_size = 16\n"
    "train.target_period = 100\n"
    "train.total_steps = 100000\n"
    "train.eval_every = 2000\n"
    "train.hidden = 128,128\n"
    "train.head_mode = multihead\n"
    "sweep.dr3.c0 = 0,0.01\n";

void ensure_dataset() {
    if (std::filesystem::exists(kWorkDir + "/" + kDatasetName)) return;
    std::filesystem::create_directories(kWorkDir);
    const Preset preset = find_preset("grid16-sparse-256");
    cmd_gen_data(ConfigDoc::parse_text(preset.text), {kWorkDir, {}, 1});
}

MetricRow final_row(const std::string& path) {
    const MetricTrace trace = read_metric_trace(path);
    require(!trace.rows.empty(), path + " has no checkpoint rows");
    require(!trace.rows.back().diverged, path + " diverged");
    return trace.rows.back();
}

std::string criterion_coadaptation() {
    const auto start = std::chrono::steady_clock::now();
    ensure_dataset();
    const std::string out = kWorkDir + "/selector_sweep";
    cmd_train(ConfigDoc::parse_text(kSelectorSweepCfg), {out, {0, 1, 2, 3, 4}, 1});

    std::size_t dot_wins = 0;
    bool losses_ok = true;
    std::ostringstream dots;
    for (int seed = 0; seed < 5; ++seed) {
        const std::string suffix = "_seed" + std::to_string(seed) + ".csv";
        const MetricRow mc = final_row(out + "/trace_selector=mc" + suffix);
        const MetricRow sarsa = final_row(out + "/trace_selector=sarsa" + suffix);
        const MetricRow expected = final_row(out + "/trace_selector=expected" + suffix);
        dot_wins += expected.feat_dot > sarsa.feat_dot;
        losses_ok = losses_ok && sarsa.loss < 10.0 * mc.loss &&
                    expected.loss < 10.0 * mc.loss;
        dots << (seed ? " " : "") << fmt(expected.feat_dot) << ">"
             << fmt(sarsa.feat_dot) << "?";
    }
    const double elapsed = seconds_since(start);
    require(dot_wins >= 4, "expected-backup dot exceeded sarsa in only " +
                               std::to_string(dot_wins) + "/5 seeds [" + dots.str() +
                               "]");
    require(losses_ok, "a bootstrapped run missed the 10x regression-loss bound");
    require(elapsed < 5 * 20.0 * 60.0, "took " + fmt(elapsed) + " s");
    return "dot higher in " + std::to_string(dot_wins) +
           "/5 seeds, losses within 10x of the regression baseline, " + fmt(elapsed) +
           " s";
}

std::string criterion_dr3_effect() {
    const auto start = std::chrono::steady_clock::now();
    ensure_dataset();
    const std::string out = kWorkDir + "/dr3_sweep";
    cmd_train(ConfigDoc::parse_text(kDr3SweepCfg), {out, {0, 1, 2, 3, 4}, 1});

    std::size_t dot_lower = 0, srank_ok = 0;
    for (int seed = 0; seed < 5; ++seed) {
        const std::string suffix = "_seed" + std::to_string(seed) + ".csv";
        const MetricRow off = final_row(out + "/trace_dr3.c0=0" + suffix);
        const MetricRow on = final_row(out + "/trace_dr3.c0=0.01" + suffix);
        dot_lower += on.feat_dot < off.feat_dot;
        srank_ok += on.srank >= off.srank;
    }
    const double elapsed = seconds_since(start);
    require(dot_lower == 5, "regularized dot strictly lower in only " +
                                std::to_string(dot_lower) + "/5 seed pairs");
    require(srank_ok >= 4, "regularized srank at least as large in only " +
                               std::to_string(srank_ok) + "/5 seed pairs");
    return "dot lower 5/5, srank kept in " + std::to_string(srank_ok) + "/5, " +
           fmt(elapsed) + " s";
}

bool params_equal(const MlpParams& a, const MlpParams& b) {
    if (a.n_layers() != b.n_layers()) return false;
    for (std::size_t l = 0; l < a.n_layers(); ++l) {
        if (!a.weights[l].same_shape(b.weights[l])) return false;
        for (std::size_t i = 0; i < a.weights[l].size(); ++i)
            if (a.weights[l].data()[i] != b.weights[l].data()[i]) return false;
        if (a.biases[l] != b.biases[l]) return false;
    }
    return true;
}

std::string criterion_reductions() {
    // (a) generalized penalty with the covariance pinned to identity
    Rng rng(31);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix phi = random_matrix(rng, 5, 6);
        const Matrix phi_next = random_matrix(rng, 5, 6);
        const Matrix eye = Matrix::identity(6);
        const LabelNoiseResult res =
            dr3_label_noise_core(phi, phi_next, 0.95, 0.01, 20, &eye);
        Matrix grad_phi(5, 6), grad_next(5, 6);
        const double plain = dr3_penalty(phi, phi_next, false, &grad_phi, &grad_next);
        worst = std::max(worst, std::fabs(res.value - plain));
        worst = std::max(worst, max_abs(sub(res.grad_phi, grad_phi)));
        worst = std::max(worst, max_abs(sub(res.grad_phi_next, grad_next)));
    }
    require(worst <= 1e-10,
            "identity-covariance penalty deviates by " + fmt(worst));

    ensure_dataset();
    const OfflineDataset data = read_dataset(kWorkDir + "/" + kDatasetName);
    TrainConfig base;
    base.selector = SelectorKind::MaxAction;
    base.hidden = {16};
    base.batch_size = 8;
    base.total_steps = 400;
    base.eval_every = 200;
    base.target_period = 50;
    base.seed = 3;

    const auto run_final = [&](const TrainConfig& cfg) {
        Trainer trainer(data, cfg);
        trainer.run();
        return trainer.net().params;
    };
    const MlpParams plain_final = run_final(base);

    // (b) a one-head ensemble with squared error is plain TD
    TrainConfig rem = base;
    rem.loss_head = LossHead::Rem;
    rem.rem_heads = 1;
    rem.rem_squared = true;
    require(params_equal(run_final(rem), plain_final),
            "one-head squared-loss ensemble drifted from plain TD");

    // (c) zero conservatism weight is plain TD
    TrainConfig cql = base;
    cql.loss_head = LossHead::Cql;
    cql.cql_alpha = 0.0;
    require(params_equal(run_final(cql), plain_final),
            "zero-alpha conservative run drifted from plain TD");

    return "identity-covariance, one-head-ensemble, and zero-alpha reductions exact";
}

std::string criterion_statistics() {
    require(iqm({1, 2, 3, 4, 5, 6, 7, 8}) == 4.5, "iqm(1..8) != 4.5");

    Rng rng(19);
    const auto random_scores = [&](const std::vector<std::string>& tasks) {
        RunScores s;
        for (const std::string& t : tasks) {
            const std::size_t n = 1 + rng.uniform_int(6);
            for (std::size_t i = 0; i < n; ++i)
                s.by_task[t].push_back(rng.uniform(-1.0, 1.0));
        }
        return s;
    };
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::string> tasks = {"t0"};
        if (trial % 2) tasks.push_back("t1");
        if (trial % 3 == 0) tasks.push_back("t2");
        const RunScores x = random_scores(tasks);
        const RunScores y = random_scores(tasks);
        require(prob_improvement(x, y) + prob_improvement(y, x) == 1.0,
                "symmetry broke on trial " + std::to_string(trial));
    }

    RunScores lo, hi;
    lo.by_task["t"] = {0.0, 0.1, 0.2};
    hi.by_task["t"] = {1.0, 2.0};
    require(prob_improvement(hi, lo) == 1.0, "dominant case != 1.0");
    require(prob_improvement(lo, hi) == 0.0, "dominated case != 0.0");
    return "iqm oracle, 100 symmetry trials, dominance exact";
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

bool transitions_equal(const Transition& a, const Transition& b) {
    return a.state == b.state && a.action == b.action && a.reward == b.reward &&
           a.next_state == b.next_state && a.next_action == b.next_action &&
           a.terminal == b.terminal && a.obs == b.obs && a.next_obs == b.next_obs;
}

std::string criterion_determinism() {
    ensure_dataset();
    // a preset-scale run repeated with the same seed is byte-identical
    const std::string rerun = kWorkDir + "/dr3_rerun";
    cmd_train(ConfigDoc::parse_text(kDr3SweepCfg), {rerun, {0}, 1});
    for (const std::string name :
         {"trace_dr3.c0=0_seed0.csv", "trace_dr3.c0=0.01_seed0.csv"}) {
        require(slurp(kWorkDir + "/dr3_sweep/" + name) == slurp(rerun + "/" + name),
                name + " differs between identically seeded runs");
    }

    // dataset write -> read preserves every value
    const OfflineDataset ds = read_dataset(kWorkDir + "/" + kDatasetName);
    const std::string copy_path = kWorkDir + "/roundtrip.ds";
    write_dataset(ds, copy_path);
    const OfflineDataset back = read_dataset(copy_path);
    require(back.size() == ds.size(), "transition count changed");
    require(back.boundaries() == ds.boundaries(), "trajectory boundaries changed");
    require(back.gamma() == ds.gamma(), "gamma changed");
    require(back.meta().seed == ds.meta().seed &&
                back.meta().p_opt == ds.meta().p_opt &&
                back.meta().generated_at == ds.meta().generated_at &&
                back.meta().env_id == ds.meta().env_id &&
                back.meta().policy_desc == ds.meta().policy_desc,
            "metadata changed");
    for (std::size_t i = 0; i < ds.size(); ++i)
        require(transitions_equal(back.transitions()[i], ds.transitions()[i]),
                "transition " + std::to_string(i) + " changed");
    return "trace reruns byte-identical, dataset round-trip value-exact";
}

}  // namespace

int main() {
    std::filesystem::remove_all(kWorkDir);

    const std::vector<std::pair<std::string, std::function<std::string()>>> criteria = {
        {"backward pass matches finite differences", criterion_gradients},
        {"stationary-covariance fixed point", criterion_lyapunov},
        {"dot-product condition forbids a stable verdict", criterion_trace_condition},
        {"spectrum verdict agrees with simulated linear TD",
         criterion_spectrum_vs_simulation},
        {"effective rank exactness and invariances", criterion_srank},
        {"bootstrapped dots outgrow in-sample ones on the sparse grid",
         criterion_coadaptation},
        {"explicit regularizer shrinks dots and keeps rank", criterion_dr3_effect},
        {"degenerate losses reduce to plain TD", criterion_reductions},
        {"aggregate statistics oracles", criterion_statistics},
        {"determinism and dataset round-trip", criterion_determinism},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        std::string detail;
        bool ok = true;
        try {
            detail = criteria[i].second();
        } catch (const std::exception& e) {
            ok = false;
            detail = e.what();
        }
        if (!ok) ++failures;
        std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << i + 1 << ": "
                  << criteria[i].first << " -- " << detail << std::endl;
    }
    if (failures == 0)
        std::cout << "acceptance: all " << criteria.size() << " criteria passed"
                  << std::endl;
    else
        std::cout << "acceptance: " << failures << " criteria FAILED" << std::endl;
    return failures;
}
