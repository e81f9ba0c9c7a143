#include "coadapt/losses.hpp"

#include <algorithm>
#include <cmath>

#include "coadapt/analysis.hpp"
#include "coadapt/common.hpp"

namespace coadapt {

std::vector<double> compute_targets(const QNetwork& net, const OfflineDataset& data,
                                    const std::vector<std::size_t>& batch,
                                    SelectorKind selector, double gamma,
                                    const StochasticPolicy* behavior,
                                    const std::vector<double>* returns) {
    if (selector == SelectorKind::ExpectedBehavior && behavior == nullptr)
        throw ConfigError("compute_targets: ExpectedBehavior needs a behavior policy");
    if (selector == SelectorKind::MonteCarloRegression) {
        if (returns == nullptr)
            throw ConfigError("compute_targets: MonteCarloRegression needs returns");
        if (returns->size() != data.size())
            throw ShapeError("compute_targets: returns length disagrees with dataset");
    }
    std::vector<double> targets(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const std::size_t idx = batch[i];
        if (idx >= data.size())
            throw DomainError("compute_targets: batch index out of range");
        const Transition& tr = data.transitions()[idx];
        if (selector == SelectorKind::MonteCarloRegression) {
            targets[i] = (*returns)[idx];
            continue;
        }
        if (tr.terminal) {
            targets[i] = tr.reward;
            continue;
        }
        const std::vector<double> q_next =
            q_all_actions(net.target_params, tr.next_obs, kNumActions);
        double backup = 0.0;
        switch (selector) {
            case SelectorKind::SarsaDatasetAction:
                backup = q_next[tr.next_action];
                break;
            case SelectorKind::ExpectedBehavior:
                for (std::size_t a = 0; a < kNumActions; ++a)
                    backup += behavior->probs(tr.next_state, a) * q_next[a];
                break;
            case SelectorKind::MaxAction: {
                backup = q_next[0];
                for (std::size_t a = 1; a < kNumActions; ++a)
                    backup = std::max(backup, q_next[a]);
                break;
            }
            case SelectorKind::MonteCarloRegression:
                break;  // handled above
        }
        targets[i] = tr.reward + gamma * backup;
    }
    return targets;
}

double cql_penalty(const std::vector<double>& q_row, std::size_t data_action,
                   double alpha, std::vector<double>* grad) {
    if (q_row.empty()) throw ShapeError("cql_penalty: empty q_row");
    if (data_action >= q_row.size())
        throw DomainError("cql_penalty: data_action out of range");
    if (!(alpha >= 0.0)) throw DomainError("cql_penalty: alpha must be >= 0");
    const double shift = *std::max_element(q_row.begin(), q_row.end());
    double z = 0.0;
    for (double q : q_row) z += std::exp(q - shift);
    const double lse = shift + std::log(z);
    if (grad) {
        if (grad->size() != q_row.size())
            throw ShapeError("cql_penalty: gradient size disagrees with q_row");
        for (std::size_t j = 0; j < q_row.size(); ++j) {
            const double softmax = std::exp(q_row[j] - shift) / z;
            (*grad)[j] += alpha * (softmax - (j == data_action ? 1.0 : 0.0));
        }
    }
    return alpha * (lse - q_row[data_action]);
}

std::vector<double> simplex_weights(Rng& rng, std::size_t k) {
    if (k == 0) throw DomainError("simplex_weights: need at least one head");
    std::vector<double> w(k);
    double total = 0.0;
    for (double& x : w) {
        x = -std::log(1.0 - rng.uniform());
        total += x;
    }
    if (k == 1) return {1.0};
    if (total <= 0.0) {  // astronomically unlikely all-zero draw
        std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(k));
        return w;
    }
    for (double& x : w) x /= total;
    return w;
}

double rem_loss(const std::vector<double>& head_q,
                const std::vector<double>& head_targets,
                const std::vector<double>& weights, bool squared,
                std::vector<double>* grad_q) {
    if (weights.empty()) throw ShapeError("rem_loss: need at least one head");
    if (head_q.size() != weights.size() || head_targets.size() != weights.size())
        throw ShapeError("rem_loss: head/weight counts disagree");
    double sum = 0.0;
    for (double x : weights) {
        if (!(x >= 0.0)) throw DomainError("rem_loss: negative simplex weight");
        sum += x;
    }
    if (std::fabs(sum - 1.0) > 1e-12)
        throw DomainError("rem_loss: simplex weights must sum to 1");

    double prediction = 0.0, target = 0.0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
        prediction += weights[k] * head_q[k];
        target += weights[k] * head_targets[k];
    }
    const double u = prediction - target;
    double loss, du;
    if (squared) {
        loss = u * u;
        du = 2.0 * u;
    } else if (std::fabs(u) <= 1.0) {  // Huber, unit threshold
        loss = 0.5 * u * u;
        du = u;
    } else {
        loss = std::fabs(u) - 0.5;
        du = u > 0.0 ? 1.0 : -1.0;
    }
    if (grad_q) {
        if (grad_q->size() != weights.size())
            throw ShapeError("rem_loss: gradient size disagrees with heads");
        for (std::size_t k = 0; k < weights.size(); ++k)
            (*grad_q)[k] += du * weights[k];
    }
    return loss;
}

double dr3_penalty(const Matrix& phi, const Matrix& phi_next, bool stop_grad_second,
                   Matrix* grad_phi, Matrix* grad_phi_next) {
    if (!phi.same_shape(phi_next))
        throw ShapeError("dr3_penalty: feature shapes disagree");
    double acc = 0.0;
    for (std::size_t i = 0; i < phi.size(); ++i)
        acc += phi.data()[i] * phi_next.data()[i];
    if (grad_phi) {
        if (!grad_phi->same_shape(phi))
            throw ShapeError("dr3_penalty: grad_phi shape disagrees");
        for (std::size_t i = 0; i < phi.size(); ++i)
            grad_phi->data()[i] += phi_next.data()[i];
    }
    if (grad_phi_next && !stop_grad_second) {
        if (!grad_phi_next->same_shape(phi))
            throw ShapeError("dr3_penalty: grad_phi_next shape disagrees");
        for (std::size_t i = 0; i < phi.size(); ++i)
            grad_phi_next->data()[i] += phi.data()[i];
    }
    return acc;
}

LabelNoiseResult dr3_label_noise_core(const Matrix& phi, const Matrix& phi_next,
                                      double gamma, double eta, std::size_t iters,
                                      const Matrix* sigma_override) {
    if (!phi.same_shape(phi_next))
        throw ShapeError("dr3_label_noise_core: feature shapes disagree");
    if (phi.rows() == 0 || phi.cols() == 0)
        throw ShapeError("dr3_label_noise_core: empty feature batch");
    if (iters == 0) throw DomainError("dr3_label_noise_core: iters must be >= 1");
    if (!(gamma > 0.0 && gamma < 1.0))
        throw DomainError("dr3_label_noise_core: gamma must lie in (0, 1)");
    const std::size_t d = phi.cols();

    LabelNoiseResult out;
    if (sigma_override) {
        if (sigma_override->rows() != d || sigma_override->cols() != d)
            throw ShapeError("dr3_label_noise_core: sigma shape disagrees");
        out.sigma = *sigma_override;
    } else {
        if (!(eta > 0.0))
            throw DomainError("dr3_label_noise_core: lyapunov step must be positive");
        // last-layer label-noise covariance and pseudo-Hessian
        const Matrix m = matmul(transpose(phi), phi);
        const Matrix g = matmul(transpose(phi), sub(phi, scale(phi_next, gamma)));
        try {
            out.sigma = lyapunov_sigma(g, m, eta, iters, /*check_contraction=*/false);
        } catch (const NumericError&) {
            throw NumericError(
                "dr3_label_noise_core: Lyapunov iteration diverged; try a smaller "
                "lyapunov step");
        }
    }

    // value = sum_i phi_i^T Sigma phi'_i; Sigma held constant for gradients
    const Matrix projected = matmul(phi, out.sigma);
    double acc = 0.0;
    for (std::size_t i = 0; i < projected.size(); ++i)
        acc += projected.data()[i] * phi_next.data()[i];
    out.value = acc;
    out.grad_phi = matmul(phi_next, transpose(out.sigma));
    out.grad_phi_next = projected;
    return out;
}

}  // namespace coadapt
