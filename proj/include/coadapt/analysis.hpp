#pragma once

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "coadapt/matrix.hpp"

namespace coadapt {

// Rows of phi / phi_next are the features of Bellman-consecutive pairs
// (s_i, a_i) and (s'_i, a'_i) under discount gamma.
struct FeaturePair {
    Matrix phi;
    Matrix phi_next;
    double gamma = 0.95;
    void validate() const;
    std::size_t n() const { return phi.rows(); }
    std::size_t dim() const { return phi.cols(); }
};

// (1/n) sum_i <phi_i, phi'_i>
double mean_feature_dot(const FeaturePair& features);

struct CosineStats {
    double mean = 0.0;
    std::size_t excluded = 0;  // pairs where either side has zero norm
};
CosineStats mean_cosine(const FeaturePair& features);

// Smallest k whose top-k singular values hold a (1 - delta) fraction of the
// total; 0 for the zero matrix.
std::size_t srank(const Matrix& phi, double delta = 0.01);

// sum_i <phi_i, phi'_i>  >=  (1/gamma) sum_i ||phi_i||^2
bool coadaptation_trace_test(const FeaturePair& features);

enum class Verdict { Stable, NonConvergent, Borderline };
std::string verdict_name(Verdict verdict);

// Spectrum of M_phi = Phi^T (Phi - gamma Phi'), the matrix whose eigenvalue
// real parts decide whether linear TD iteration can contract.
struct StabilityReport {
    std::vector<std::complex<double>> eigenvalues;
    Verdict verdict = Verdict::Borderline;
    bool trace_condition_holds = false;
    double min_real_part = 0.0;
    double tol = 0.0;
};
// tol = rel_tol * ||M_phi||_F. Stable: every real part > tol. NonConvergent:
// some real part < -tol, or no real part above tol while an oscillatory
// (nonzero-imaginary) eigenvalue sits at nonpositive real part. Otherwise
// Borderline.
StabilityReport stability_spectrum(const FeaturePair& features, double rel_tol = 1e-9);

struct LinearTdResult {
    std::vector<std::size_t> steps;
    std::vector<double> errors;  // ||w - w*||, or ||w|| when no fixed point exists
    bool fixed_point_exists = false;
    std::vector<double> w_star;
    std::vector<double> w_final;
    bool diverged = false;
};
// Iterates w <- w - eta * Phi^T (Phi w - r - gamma Phi' w) from w = 0.
// Divergence: the monitored norm grew at least 10x over the final half of
// the run (or overflowed). record_every = 0 picks ~256 evenly spaced rows.
LinearTdResult simulate_linear_td(const FeaturePair& features,
                                  const std::vector<double>& rewards, double eta,
                                  std::size_t steps, std::size_t record_every = 0);

// Stationary covariance of theta_{k+1} = (I - eta G) theta_k + eta eps_k,
// eps ~ N(0, M): iterates Sigma <- (I-eta G) Sigma (I-eta G)^T + eta^2 M from
// Sigma = 0. When check_contraction is set, the spectral radius of (I-eta G)
// restricted to the support of M must be < 1 (via eig_complex), else a
// numeric error is raised; unbounded growth always raises.
Matrix lyapunov_sigma(const Matrix& g, const Matrix& m, double eta,
                      std::size_t iters = 200, bool check_contraction = true);

enum class NoiseModel { Identity, Lyapunov };

// Implicit regularizer evaluated on last-layer features.
//   Identity:  sum_i ||phi_i||^2 - gamma sum_i <phi_i, phi'_i>
//   Lyapunov:  sum_i phi_i^T Sigma phi_i - gamma sum_i trace(Sigma phi_i phi'_i^T)
// Evaluation only; nothing is differentiated here.
double implicit_reg_value(const FeaturePair& features, NoiseModel model,
                          const Matrix& sigma = Matrix());

}  // namespace coadapt
