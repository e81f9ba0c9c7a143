#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <complex>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "coadapt/analysis.hpp"
#include "coadapt/cli.hpp"
#include "coadapt/common.hpp"
#include "coadapt/dataset.hpp"
#include "coadapt/losses.hpp"
#include "coadapt/matrix.hpp"
#include "coadapt/metric_trace.hpp"
#include "coadapt/rng.hpp"
#include "coadapt/stats.hpp"

namespace py = pybind11;
using namespace coadapt;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const DoubleArray& arr, const char* name) {
    if (arr.ndim() != 2)
        throw ShapeError(std::string(name) + " must be a 2-d array");
    Matrix m(static_cast<std::size_t>(arr.shape(0)),
             static_cast<std::size_t>(arr.shape(1)));
    std::memcpy(m.data(), arr.data(), sizeof(double) * m.size());
    return m;
}

py::array_t<double> from_matrix(const Matrix& m) {
    py::array_t<double> arr({m.rows(), m.cols()});
    std::memcpy(arr.mutable_data(), m.data(), sizeof(double) * m.size());
    return arr;
}

FeaturePair to_pair(const DoubleArray& phi, const DoubleArray& phi_next, double gamma) {
    FeaturePair fp;
    fp.phi = to_matrix(phi, "phi");
    fp.phi_next = to_matrix(phi_next, "phi_next");
    fp.gamma = gamma;
    fp.validate();
    return fp;
}

RunScores to_scores(const std::map<std::string, std::vector<double>>& by_task) {
    RunScores s;
    s.by_task = by_task;
    s.validate();
    return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() =
        "Offline TD laboratory: gridworld datasets, from-scratch Q-networks, "
        "feature co-adaptation diagnostics, linear-TD stability analysis, and "
        "run statistics. Bulk operations are also reachable through run_cli().";
    m.attr("__version__") = "0.1.0";

    const py::exception<Error> base_exc(m, "CoadaptError", PyExc_RuntimeError);
    py::register_exception<ShapeError>(m, "ShapeError", base_exc);
    py::register_exception<DomainError>(m, "DomainError", base_exc);
    const py::exception<ConfigError> config_exc(m, "ConfigError", base_exc);
    py::register_exception<ParseError>(m, "ParseError", config_exc);
    py::register_exception<NumericError>(m, "NumericError", base_exc);
    py::register_exception<IoError>(m, "IoError", base_exc);

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::vector<const char*> argv;
            argv.push_back("coadapt");
            for (const std::string& a : args) argv.push_back(a.c_str());
            const py::gil_scoped_release release;
            return run_cli(static_cast<int>(argv.size()), argv.data());
        },
        py::arg("args"),
        "Drive the command-line interface; returns its exit code (0 ok, "
        "2 configuration, 3 numeric divergence, 4 I/O).");

    m.def(
        "presets",
        [] {
            py::list out;
            for (const Preset& p : all_presets()) {
                py::dict d;
                d["name"] = p.name;
                d["kind"] = p.kind;
                d["description"] = p.description;
                d["text"] = p.text;
                out.append(d);
            }
            return out;
        },
        "Built-in experiment presets as dicts of name/kind/description/text.");

    // --- feature diagnostics ---

    m.def(
        "srank",
        [](const DoubleArray& phi, double delta) {
            return srank(to_matrix(phi, "phi"), delta);
        },
        py::arg("phi"), py::arg("delta") = 0.01,
        "Effective rank: smallest k whose top-k singular values hold a "
        "(1 - delta) fraction of the total.");

    m.def(
        "mean_feature_dot",
        [](const DoubleArray& phi, const DoubleArray& phi_next, double gamma) {
            return mean_feature_dot(to_pair(phi, phi_next, gamma));
        },
        py::arg("phi"), py::arg("phi_next"), py::arg("gamma") = 0.95,
        "Mean dot product over aligned feature rows.");

    m.def(
        "coadaptation_trace_test",
        [](const DoubleArray& phi, const DoubleArray& phi_next, double gamma) {
            return coadaptation_trace_test(to_pair(phi, phi_next, gamma));
        },
        py::arg("phi"), py::arg("phi_next"), py::arg("gamma"),
        "True when sum <phi_i, phi'_i> >= (1/gamma) sum ||phi_i||^2.");

    m.def(
        "stability_spectrum",
        [](const DoubleArray& phi, const DoubleArray& phi_next, double gamma,
           double rel_tol) {
            const StabilityReport report =
                stability_spectrum(to_pair(phi, phi_next, gamma), rel_tol);
            py::array_t<std::complex<double>> eigs(report.eigenvalues.size());
            std::memcpy(eigs.mutable_data(), report.eigenvalues.data(),
                        sizeof(std::complex<double>) * report.eigenvalues.size());
            py::dict d;
            d["verdict"] = verdict_name(report.verdict);
            d["eigenvalues"] = eigs;
            d["trace_condition"] = report.trace_condition_holds;
            d["min_real_part"] = report.min_real_part;
            d["tol"] = report.tol;
            return d;
        },
        py::arg("phi"), py::arg("phi_next"), py::arg("gamma"),
        py::arg("rel_tol") = 1e-9,
        "Eigenvalues of Phi^T (Phi - gamma Phi') and the convergence verdict "
        "(Stable / NonConvergent / Borderline).");

    m.def(
        "simulate_linear_td",
        [](const DoubleArray& phi, const DoubleArray& phi_next, double gamma,
           const std::vector<double>& rewards, double eta, std::size_t steps,
           std::size_t record_every) {
            const FeaturePair fp = to_pair(phi, phi_next, gamma);
            LinearTdResult r;
            {
                const py::gil_scoped_release release;
                r = simulate_linear_td(fp, rewards, eta, steps, record_every);
            }
            py::dict d;
            d["diverged"] = r.diverged;
            d["fixed_point_exists"] = r.fixed_point_exists;
            d["w_star"] = r.w_star;
            d["w_final"] = r.w_final;
            d["steps"] = r.steps;
            d["errors"] = r.errors;
            return d;
        },
        py::arg("phi"), py::arg("phi_next"), py::arg("gamma"), py::arg("rewards"),
        py::arg("eta") = 1e-3, py::arg("steps") = 200000,
        py::arg("record_every") = 0,
        "Iterate w <- w - eta Phi^T (Phi w - r - gamma Phi' w) from zero and "
        "report the error curve plus a divergence flag.");

    m.def(
        "lyapunov_sigma",
        [](const DoubleArray& g, const DoubleArray& noise, double eta,
           std::size_t iters, bool check_contraction) {
            return from_matrix(lyapunov_sigma(to_matrix(g, "g"),
                                              to_matrix(noise, "m"), eta, iters,
                                              check_contraction));
        },
        py::arg("g"), py::arg("m"), py::arg("eta"), py::arg("iters") = 200,
        py::arg("check_contraction") = true,
        "Stationary covariance of theta <- (I - eta G) theta + eta eps, "
        "eps ~ N(0, M).");

    m.def(
        "dr3_penalty",
        [](const DoubleArray& phi, const DoubleArray& phi_next,
           bool stop_grad_second) {
            return dr3_penalty(to_matrix(phi, "phi"), to_matrix(phi_next, "phi_next"),
                               stop_grad_second);
        },
        py::arg("phi"), py::arg("phi_next"), py::arg("stop_grad_second") = false,
        "Sum of dot products over aligned feature rows (the explicit "
        "regularizer's value).");

    // --- run statistics ---

    m.def("iqm", &iqm, py::arg("values"),
          "Interquartile mean: drop floor(n/4) from each end after sorting.");

    m.def(
        "bootstrap_ci",
        [](const std::vector<double>& values, std::size_t resamples, double level,
           std::uint64_t seed) {
            Rng rng(seed);
            return percentile_bootstrap_ci(values, resamples, level, rng);
        },
        py::arg("values"), py::arg("resamples") = 2000, py::arg("level") = 0.95,
        py::arg("seed") = 0,
        "Percentile bootstrap confidence interval for the interquartile mean.");

    m.def(
        "prob_improvement",
        [](const std::map<std::string, std::vector<double>>& x,
           const std::map<std::string, std::vector<double>>& y) {
            return prob_improvement(to_scores(x), to_scores(y));
        },
        py::arg("x"), py::arg("y"),
        "Averaged Mann-Whitney probability that algorithm x beats y, from "
        "per-task run scores; exactly satisfies p(x,y) + p(y,x) = 1.");

    // --- file access ---

    m.def(
        "read_trace",
        [](const std::string& path) {
            const MetricTrace trace = read_metric_trace(path);
            std::vector<std::size_t> step, srank_col;
            std::vector<double> loss, mean_q, feat_dot, cosine, eval_return, r_td;
            std::vector<bool> diverged;
            for (const MetricRow& row : trace.rows) {
                step.push_back(row.step);
                loss.push_back(row.loss);
                mean_q.push_back(row.mean_q);
                feat_dot.push_back(row.feat_dot);
                cosine.push_back(row.cosine);
                srank_col.push_back(row.srank);
                eval_return.push_back(row.eval_return);
                r_td.push_back(row.r_td);
                diverged.push_back(row.diverged);
            }
            py::dict d;
            d["provenance"] = trace.provenance;
            d["step"] = step;
            d["loss"] = loss;
            d["mean_q"] = mean_q;
            d["feat_dot"] = feat_dot;
            d["cosine"] = cosine;
            d["srank"] = srank_col;
            d["eval_return"] = eval_return;
            d["r_td"] = r_td;
            d["diverged"] = diverged;
            return d;
        },
        py::arg("path"),
        "Columns and provenance of a training trace CSV.");

    m.def(
        "dataset_summary",
        [](const std::string& path) {
            const OfflineDataset ds = read_dataset(path);
            py::dict d;
            d["transitions"] = ds.size();
            d["trajectories"] = ds.n_trajectories();
            d["obs_dim"] = ds.obs_dim();
            d["gamma"] = ds.gamma();
            d["env_id"] = ds.grid().id;
            d["p_opt"] = ds.meta().p_opt;
            d["seed"] = ds.meta().seed;
            d["policy"] = ds.meta().policy_desc;
            return d;
        },
        py::arg("path"),
        "Shape and collection metadata of an offline dataset file.");
}
