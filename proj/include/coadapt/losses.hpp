#pragma once

#include <cstddef>
#include <vector>

#include "coadapt/dataset.hpp"
#include "coadapt/matrix.hpp"
#include "coadapt/qnetwork.hpp"
#include "coadapt/rng.hpp"

namespace coadapt {

// Bootstrap targets for the given batch (indices into data.transitions()),
// evaluated with the delayed parameters. Terminal transitions get bare r;
// constants w.r.t. the online parameters by construction. ExpectedBehavior
// needs `behavior`; MonteCarloRegression needs `returns` (per-transition
// return-to-go, aligned with data.transitions()).
std::vector<double> compute_targets(const QNetwork& net, const OfflineDataset& data,
                                    const std::vector<std::size_t>& batch,
                                    SelectorKind selector, double gamma,
                                    const StochasticPolicy* behavior = nullptr,
                                    const std::vector<double>* returns = nullptr);

// alpha * (logsumexp(q_row) - q_row[data_action]), max-shift stabilized.
// When grad is given, d(penalty)/d(q_row) is accumulated into it.
double cql_penalty(const std::vector<double>& q_row, std::size_t data_action,
                   double alpha, std::vector<double>* grad = nullptr);

// Fresh uniform-simplex weights: normalized exponentials of k draws.
std::vector<double> simplex_weights(Rng& rng, std::size_t k);

// Loss between the convex head combinations sum_k w_k q_k and sum_k w_k t_k:
// Huber with unit threshold, or plain squared error when `squared` is set.
// When grad_q is given, d(loss)/d(head_q) is accumulated into it.
double rem_loss(const std::vector<double>& head_q,
                const std::vector<double>& head_targets,
                const std::vector<double>& weights, bool squared = false,
                std::vector<double>* grad_q = nullptr);

// sum_i <phi_i, phi'_i> over aligned rows. Gradients (accumulated when the
// out-params are given): d/dphi = phi', d/dphi' = phi, or zero for the
// second factor under stop_grad_second.
double dr3_penalty(const Matrix& phi, const Matrix& phi_next, bool stop_grad_second,
                   Matrix* grad_phi = nullptr, Matrix* grad_phi_next = nullptr);

// Generalized dot-product penalty sum_i phi_i^T Sigma* phi'_i, where Sigma*
// solves the discrete Lyapunov recursion driven by the last-layer gradient
// covariance M = sum_i phi_i phi_i^T and pseudo-Hessian
// G = sum_i phi_i (phi_i - gamma phi'_i)^T. Sigma* is held constant for
// differentiation; gradients flow only through the bilinear form's feature
// factors. sigma_override short-circuits the recursion (diagnostics hook).
struct LabelNoiseResult {
    double value = 0.0;
    Matrix sigma;      // the Sigma* actually used
    Matrix grad_phi;   // d(value)/d(phi), Sigma* held fixed
    Matrix grad_phi_next;
};
LabelNoiseResult dr3_label_noise_core(const Matrix& phi, const Matrix& phi_next,
                                      double gamma, double eta, std::size_t iters,
                                      const Matrix* sigma_override = nullptr);

// Convenience wrapper: extracts the batch's feature pairs from the online
// network (next features at the selector's target action) and evaluates the
// generalized penalty.
double dr3_label_noise_penalty(const QNetwork& net, const OfflineDataset& data,
                               const std::vector<std::size_t>& batch,
                               SelectorKind selector, double gamma, double eta,
                               std::size_t iters,
                               const StochasticPolicy* behavior = nullptr,
                               const Matrix* sigma_override = nullptr);

}  // namespace coadapt
