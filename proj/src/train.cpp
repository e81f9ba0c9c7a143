#include "coadapt/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "coadapt/common.hpp"
#include "coadapt/gridworld.hpp"
#include "coadapt/observe.hpp"

namespace coadapt {

namespace {

std::size_t argmax_low(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

// per-action values of a REM network combined under the given head weights
std::vector<double> rem_combined_row(const MlpParams& params,
                                     const std::vector<double>& obs,
                                     std::size_t n_actions,
                                     const std::vector<double>& weights) {
    const Matrix rows = rem_q_all_actions(params, obs, n_actions, weights.size());
    std::vector<double> combined(n_actions, 0.0);
    for (std::size_t a = 0; a < n_actions; ++a)
        for (std::size_t k = 0; k < weights.size(); ++k)
            combined[a] += weights[k] * rows(k, a);
    return combined;
}

std::vector<double> features_at(const MlpParams& params, const std::vector<double>& obs,
                                std::size_t action, std::size_t n_actions) {
    if (params.head_mode == HeadMode::StateInputMultiHead)
        return mlp_forward(params, obs).features;
    return mlp_forward(params, scalar_head_input(obs, action, n_actions)).features;
}

bool params_finite(const MlpParams& params) {
    for (const Matrix& w : params.weights)
        if (!all_finite(w)) return false;
    for (const std::vector<double>& b : params.biases)
        for (double x : b)
            if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace

Matrix feature_matrix(const MlpParams& params, const OfflineDataset& data,
                      const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw DomainError("feature_matrix: no transitions listed");
    Matrix feats(indices.size(), params.feature_dim());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= data.size())
            throw DomainError("feature_matrix: transition index out of range");
        const Transition& tr = data.transitions()[indices[r]];
        const std::vector<double> row =
            features_at(params, tr.obs, tr.action, kNumActions);
        for (std::size_t j = 0; j < row.size(); ++j) feats(r, j) = row[j];
    }
    return feats;
}

FeaturePair selector_feature_pair(const QNetwork& net, const OfflineDataset& data,
                                  const std::vector<std::size_t>& indices,
                                  SelectorKind selector, double gamma,
                                  const StochasticPolicy* behavior,
                                  std::size_t rem_heads) {
    const bool multihead = net.params.head_mode == HeadMode::StateInputMultiHead;
    const bool scalar_expected =
        !multihead && selector == SelectorKind::ExpectedBehavior;
    if (scalar_expected && behavior == nullptr)
        throw ConfigError("selector_feature_pair: ExpectedBehavior needs a policy");

    const std::size_t d = net.params.feature_dim();
    std::vector<std::vector<double>> phi_rows, next_rows;
    for (std::size_t idx : indices) {
        if (idx >= data.size())
            throw DomainError("selector_feature_pair: transition index out of range");
        const Transition& tr = data.transitions()[idx];
        if (tr.terminal) continue;
        phi_rows.push_back(features_at(net.params, tr.obs, tr.action, kNumActions));
        if (multihead) {
            next_rows.push_back(mlp_forward(net.params, tr.next_obs).features);
            continue;
        }
        switch (selector) {
            case SelectorKind::SarsaDatasetAction:
            case SelectorKind::MonteCarloRegression:
                next_rows.push_back(
                    features_at(net.params, tr.next_obs, tr.next_action, kNumActions));
                break;
            case SelectorKind::MaxAction: {
                std::vector<double> q_next;
                if (rem_heads > 0) {
                    const std::vector<double> eq(rem_heads,
                                                 1.0 / static_cast<double>(rem_heads));
                    q_next = rem_combined_row(net.target_params, tr.next_obs,
                                              kNumActions, eq);
                } else {
                    q_next = q_all_actions(net.target_params, tr.next_obs, kNumActions);
                }
                next_rows.push_back(features_at(net.params, tr.next_obs,
                                                argmax_low(q_next), kNumActions));
                break;
            }
            case SelectorKind::ExpectedBehavior: {
                std::vector<double> blended(d, 0.0);
                for (std::size_t a = 0; a < kNumActions; ++a) {
                    const double p = behavior->probs(tr.next_state, a);
                    if (p == 0.0) continue;
                    const std::vector<double> row =
                        features_at(net.params, tr.next_obs, a, kNumActions);
                    for (std::size_t j = 0; j < d; ++j) blended[j] += p * row[j];
                }
                next_rows.push_back(std::move(blended));
                break;
            }
        }
    }
    if (phi_rows.empty())
        throw DomainError("selector_feature_pair: every listed transition is terminal");

    FeaturePair pair;
    pair.phi = Matrix(phi_rows.size(), d);
    pair.phi_next = Matrix(phi_rows.size(), d);
    for (std::size_t r = 0; r < phi_rows.size(); ++r) {
        for (std::size_t j = 0; j < d; ++j) {
            pair.phi(r, j) = phi_rows[r][j];
            pair.phi_next(r, j) = next_rows[r][j];
        }
    }
    pair.gamma = gamma;
    pair.validate();
    return pair;
}

Trainer::Trainer(const OfflineDataset& data, const TrainConfig& config)
    : data_(data), config_(config) {
    config_.validate();
    Rng root(config_.seed);
    Rng init = root.fork(0);
    rng_batch_ = root.fork(1);
    rng_noise_ = root.fork(2);
    rng_rem_ = root.fork(3);
    net_ = make_qnetwork(config_, data_.obs_dim(), kNumActions, init);
    if (config_.selector == SelectorKind::ExpectedBehavior) {
        behavior_ = make_behavior_policy(data_.grid(), value_iteration(data_.grid()),
                                         data_.meta().p_opt);
        has_behavior_ = true;
    }
    if (config_.selector == SelectorKind::MonteCarloRegression)
        returns_ = mc_returns(data_);
}

std::vector<std::size_t> Trainer::sample_batch() {
    std::vector<std::size_t> batch(config_.batch_size);
    for (std::size_t& idx : batch) idx = rng_batch_.uniform_int(data_.size());
    return batch;
}

LossComponents Trainer::step() { return train_step(sample_batch()); }

LossComponents Trainer::train_step(const std::vector<std::size_t>& batch) {
    const std::size_t b_size = batch.size();
    if (b_size == 0) throw DomainError("train_step: empty batch");
    for (std::size_t idx : batch)
        if (idx >= data_.size()) throw DomainError("train_step: batch index out of range");

    const std::size_t n_actions = kNumActions;
    const double inv_b = 1.0 / static_cast<double>(b_size);
    const bool multihead = config_.head_mode == HeadMode::StateInputMultiHead;
    const bool rem = config_.loss_head == LossHead::Rem;
    const std::size_t heads = rem ? config_.rem_heads : 1;

    // hard sync: the delayed copy trails by at most target_period steps
    if (net_.step_count % config_.target_period == 0) net_.target_params = net_.params;

    std::vector<MlpTape> tapes(b_size);
    for (std::size_t i = 0; i < b_size; ++i) {
        const Transition& tr = data_.transitions()[batch[i]];
        const std::vector<double> input =
            multihead ? tr.obs : scalar_head_input(tr.obs, tr.action, n_actions);
        tapes[i] = mlp_forward_tape(net_.params, input);
    }

    std::vector<double> weights;
    if (rem) weights = simplex_weights(rng_rem_, heads);

    std::vector<double> targets;
    if (!rem) {
        targets = compute_targets(
            net_, data_, batch, config_.selector, config_.gamma, behavior(),
            config_.selector == SelectorKind::MonteCarloRegression ? &returns_
                                                                   : nullptr);
        if (config_.noise == NoiseKind::LabelNoiseTargets)
            for (double& t : targets) t += config_.noise_scale * rng_noise_.normal();
    }

    // extra forward passes whose gradients must also flow: per-action rows for
    // the conservatism penalty in scalar mode, and the phi' factors of the
    // regularizer
    struct SideTape {
        MlpTape tape;
        std::vector<double> q_up;
        std::vector<double> f_up;
    };
    std::vector<SideTape> side;

    std::vector<std::vector<double>> q_up(
        b_size, std::vector<double>(net_.params.output_dim(), 0.0));
    std::vector<std::vector<double>> f_up(b_size);
    double head_sum = 0.0, cql_sum = 0.0, q_mean = 0.0;

    for (std::size_t i = 0; i < b_size; ++i) {
        const Transition& tr = data_.transitions()[batch[i]];
        if (!rem) {
            const std::size_t slot = multihead ? tr.action : 0;
            const double p = tapes[i].q_values()[slot];
            const double u = p - targets[i];
            head_sum += u * u;
            q_up[i][slot] += inv_b * 2.0 * u;
            q_mean += p;
            if (config_.loss_head == LossHead::Cql) {
                if (multihead) {
                    std::vector<double> pen_grad(n_actions, 0.0);
                    cql_sum += cql_penalty(tapes[i].q_values(), tr.action,
                                           config_.cql_alpha, &pen_grad);
                    for (std::size_t a = 0; a < n_actions; ++a)
                        q_up[i][a] += inv_b * pen_grad[a];
                } else {
                    std::vector<double> q_row(n_actions);
                    std::vector<std::size_t> side_pos(n_actions, b_size);
                    for (std::size_t a = 0; a < n_actions; ++a) {
                        if (a == tr.action) {
                            q_row[a] = p;
                            continue;
                        }
                        side.push_back({mlp_forward_tape(
                                            net_.params,
                                            scalar_head_input(tr.obs, a, n_actions)),
                                        std::vector<double>(1, 0.0),
                                        {}});
                        side_pos[a] = side.size() - 1;
                        q_row[a] = side.back().tape.q_values()[0];
                    }
                    std::vector<double> pen_grad(n_actions, 0.0);
                    cql_sum +=
                        cql_penalty(q_row, tr.action, config_.cql_alpha, &pen_grad);
                    for (std::size_t a = 0; a < n_actions; ++a) {
                        if (a == tr.action)
                            q_up[i][0] += inv_b * pen_grad[a];
                        else
                            side[side_pos[a]].q_up[0] += inv_b * pen_grad[a];
                    }
                }
            }
        } else {
            std::vector<double> head_q(heads);
            for (std::size_t k = 0; k < heads; ++k)
                head_q[k] = multihead ? tapes[i].q_values()[k * n_actions + tr.action]
                                      : tapes[i].q_values()[k];
            std::vector<double> head_t(heads, tr.reward);
            if (!tr.terminal) {
                const Matrix rows = rem_q_all_actions(net_.target_params, tr.next_obs,
                                                      n_actions, heads);
                std::vector<double> combined(n_actions, 0.0);
                for (std::size_t a = 0; a < n_actions; ++a)
                    for (std::size_t k = 0; k < heads; ++k)
                        combined[a] += weights[k] * rows(k, a);
                const std::size_t astar = argmax_low(combined);
                for (std::size_t k = 0; k < heads; ++k)
                    head_t[k] = tr.reward + config_.gamma * rows(k, astar);
            }
            std::vector<double> ghead(heads, 0.0);
            head_sum +=
                rem_loss(head_q, head_t, weights, config_.rem_squared, &ghead);
            double p = 0.0;
            for (std::size_t k = 0; k < heads; ++k) p += weights[k] * head_q[k];
            q_mean += p;
            for (std::size_t k = 0; k < heads; ++k)
                q_up[i][multihead ? k * n_actions + tr.action : k] += inv_b * ghead[k];
        }
    }
    q_mean *= inv_b;

    double dr3_value = 0.0;
    if (config_.dr3.variant != Dr3Variant::Off) {
        std::vector<std::size_t> nt;
        for (std::size_t i = 0; i < b_size; ++i)
            if (!data_.transitions()[batch[i]].terminal) nt.push_back(i);
        if (!nt.empty()) {
            const std::size_t d = net_.params.feature_dim();
            Matrix phi_b(nt.size(), d), phi_next_b(nt.size(), d);
            struct NextRef {
                std::size_t side_index;
                double weight;
            };
            std::vector<std::vector<NextRef>> next_refs(nt.size());

            auto push_next_tape = [&](std::size_t r, const std::vector<double>& input,
                                      double weight) {
                side.push_back({mlp_forward_tape(net_.params, input),
                                {},
                                std::vector<double>(d, 0.0)});
                next_refs[r].push_back({side.size() - 1, weight});
                const std::vector<double>& row =
                    side.back().tape.features(net_.params);
                for (std::size_t j = 0; j < d; ++j)
                    phi_next_b(r, j) += weight * row[j];
            };

            for (std::size_t r = 0; r < nt.size(); ++r) {
                const std::size_t i = nt[r];
                const Transition& tr = data_.transitions()[batch[i]];
                const std::vector<double>& phi_row = tapes[i].features(net_.params);
                for (std::size_t j = 0; j < d; ++j) phi_b(r, j) = phi_row[j];

                if (multihead) {
                    push_next_tape(r, tr.next_obs, 1.0);
                } else if (config_.selector == SelectorKind::SarsaDatasetAction ||
                           config_.selector == SelectorKind::MonteCarloRegression) {
                    push_next_tape(
                        r, scalar_head_input(tr.next_obs, tr.next_action, n_actions),
                        1.0);
                } else if (config_.selector == SelectorKind::MaxAction) {
                    std::vector<double> q_next;
                    if (rem) {
                        q_next = rem_combined_row(net_.target_params, tr.next_obs,
                                                  n_actions, weights);
                    } else {
                        q_next =
                            q_all_actions(net_.target_params, tr.next_obs, n_actions);
                    }
                    push_next_tape(
                        r,
                        scalar_head_input(tr.next_obs, argmax_low(q_next), n_actions),
                        1.0);
                } else {  // ExpectedBehavior
                    for (std::size_t a = 0; a < n_actions; ++a) {
                        const double p = behavior_.probs(tr.next_state, a);
                        if (p == 0.0) continue;
                        push_next_tape(r, scalar_head_input(tr.next_obs, a, n_actions),
                                       p);
                    }
                }
            }

            Matrix gphi(nt.size(), d), gnext(nt.size(), d);
            if (config_.dr3.variant == Dr3Variant::LabelNoiseGeneralized) {
                LabelNoiseResult res = dr3_label_noise_core(
                    phi_b, phi_next_b, config_.gamma, config_.dr3.lyapunov_eta,
                    config_.dr3.lyapunov_iters);
                dr3_value = res.value;
                gphi = std::move(res.grad_phi);
                gnext = std::move(res.grad_phi_next);
            } else {
                dr3_value = dr3_penalty(
                    phi_b, phi_next_b,
                    config_.dr3.variant == Dr3Variant::LastLayerDotStopGrad, &gphi,
                    &gnext);
            }

            const double c_scale = config_.dr3.c0 * inv_b;
            const bool stop_second =
                config_.dr3.variant == Dr3Variant::LastLayerDotStopGrad;
            for (std::size_t r = 0; r < nt.size(); ++r) {
                const std::size_t i = nt[r];
                if (f_up[i].empty()) f_up[i].assign(d, 0.0);
                for (std::size_t j = 0; j < d; ++j)
                    f_up[i][j] += c_scale * gphi(r, j);
                if (stop_second) continue;
                for (const NextRef& ref : next_refs[r])
                    for (std::size_t j = 0; j < d; ++j)
                        side[ref.side_index].f_up[j] +=
                            c_scale * ref.weight * gnext(r, j);
            }
        }
    }

    const double head_mean = head_sum * inv_b;
    const double cql_mean = cql_sum * inv_b;
    LossComponents lc;
    lc.head = head_mean;
    lc.cql = cql_mean;
    lc.dr3 = dr3_value;
    lc.total = head_mean + cql_mean + config_.dr3.c0 * dr3_value * inv_b;
    lc.batch_mean_q = q_mean;
    lc.finite = std::isfinite(lc.total) && std::isfinite(q_mean);
    if (!lc.finite) return lc;  // leave the parameters untouched

    Gradients grads = zero_gradients(net_.params);
    for (std::size_t i = 0; i < b_size; ++i)
        mlp_backward_accumulate(net_.params, tapes[i], q_up[i], f_up[i], grads);
    for (const SideTape& st : side)
        mlp_backward_accumulate(net_.params, st.tape, st.q_up, st.f_up, grads);

    if (config_.optimizer == OptimizerKind::Adam) {
        AdamConfig adam_cfg;
        adam_cfg.lr = config_.lr;
        adam_step(net_.params, net_.adam, grads, adam_cfg);
    } else {
        sgd_step(net_.params, grads, config_.lr);
    }

    if (config_.noise == NoiseKind::Isotropic) {
        for (Matrix& w : net_.params.weights)
            for (std::size_t i = 0; i < w.size(); ++i)
                w.data()[i] += config_.noise_scale * rng_noise_.normal();
        for (std::vector<double>& b : net_.params.biases)
            for (double& x : b) x += config_.noise_scale * rng_noise_.normal();
    }

    ++net_.step_count;
    return lc;
}

MetricRow Trainer::checkpoint_row(std::size_t step) const {
    MetricRow row;
    row.step = step;
    if (!params_finite(net_.params)) {
        row.loss = std::numeric_limits<double>::quiet_NaN();
        row.diverged = true;
        return row;
    }

    const std::size_t n = data_.size();
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    const bool multihead = config_.head_mode == HeadMode::StateInputMultiHead;
    const bool rem = config_.loss_head == LossHead::Rem;
    const std::size_t heads = rem ? config_.rem_heads : 1;

    double loss_sum = 0.0, q_sum = 0.0;
    if (!rem) {
        const std::vector<double> targets = compute_targets(
            net_, data_, all, config_.selector, config_.gamma, behavior(),
            config_.selector == SelectorKind::MonteCarloRegression ? &returns_
                                                                   : nullptr);
        for (std::size_t i = 0; i < n; ++i) {
            const Transition& tr = data_.transitions()[i];
            const std::vector<double> input =
                multihead ? tr.obs : scalar_head_input(tr.obs, tr.action, kNumActions);
            const MlpForward fwd = mlp_forward(net_.params, input);
            const double p = fwd.q_values[multihead ? tr.action : 0];
            const double u = p - targets[i];
            loss_sum += u * u;
            q_sum += p;
        }
    } else {
        const std::vector<double> eq(heads, 1.0 / static_cast<double>(heads));
        for (std::size_t i = 0; i < n; ++i) {
            const Transition& tr = data_.transitions()[i];
            const Matrix own =
                rem_q_all_actions(net_.params, tr.obs, kNumActions, heads);
            std::vector<double> head_q(heads), head_t(heads, tr.reward);
            for (std::size_t k = 0; k < heads; ++k) head_q[k] = own(k, tr.action);
            if (!tr.terminal) {
                const Matrix rows = rem_q_all_actions(net_.target_params, tr.next_obs,
                                                      kNumActions, heads);
                std::vector<double> combined(kNumActions, 0.0);
                for (std::size_t a = 0; a < kNumActions; ++a)
                    for (std::size_t k = 0; k < heads; ++k)
                        combined[a] += eq[k] * rows(k, a);
                const std::size_t astar = argmax_low(combined);
                for (std::size_t k = 0; k < heads; ++k)
                    head_t[k] = tr.reward + config_.gamma * rows(k, astar);
            }
            loss_sum += rem_loss(head_q, head_t, eq, config_.rem_squared);
            double p = 0.0;
            for (std::size_t k = 0; k < heads; ++k) p += eq[k] * head_q[k];
            q_sum += p;
        }
    }
    row.loss = loss_sum / static_cast<double>(n);
    row.mean_q = q_sum / static_cast<double>(n);

    const Matrix feats = feature_matrix(net_.params, data_, all);
    if (!all_finite(feats)) {
        row.diverged = true;
        return row;
    }
    row.srank = srank(feats);

    std::size_t non_terminal = 0;
    for (const Transition& tr : data_.transitions())
        if (!tr.terminal) ++non_terminal;
    if (non_terminal > 0) {
        const FeaturePair pair =
            selector_feature_pair(net_, data_, all, config_.selector, config_.gamma,
                                  behavior(), rem ? heads : 0);
        row.feat_dot = mean_feature_dot(pair);
        try {
            row.cosine = mean_cosine(pair).mean;
        } catch (const DomainError&) {
            row.cosine = 0.0;  // every pair had a zero-norm side
        }
        row.r_td = implicit_reg_value(pair, NoiseModel::Identity);
    }

    if (!rem) {
        row.eval_return = evaluate_policy(data_.grid(), data_.obs_map(), net_.params);
    } else {
        const GridSpec& grid = data_.grid();
        const std::vector<double> eq(heads, 1.0 / static_cast<double>(heads));
        std::size_t x = grid.start_x, y = grid.start_y;
        double total = 0.0;
        for (std::size_t t = 0; t < 100; ++t) {
            const std::vector<double> obs = observe(data_.obs_map(), x, y);
            const std::vector<double> q =
                rem_combined_row(net_.params, obs, kNumActions, eq);
            const StepResult sr =
                coadapt::step(grid, x, y, static_cast<Action>(argmax_low(q)));
            total += sr.reward;
            if (sr.terminal) break;
            x = sr.next_x;
            y = sr.next_y;
        }
        row.eval_return = total;
    }
    return row;
}

MetricTrace Trainer::run(const std::vector<std::string>& provenance) {
    MetricTrace trace;
    trace.provenance = provenance;
    const std::size_t total = config_.total_steps;
    if (total == 0) return trace;

    for (std::size_t s = 0; s < total; ++s) {
        if (s % config_.eval_every == 0) {
            MetricRow row = checkpoint_row(s);
            if (row.diverged || !std::isfinite(row.loss) ||
                !(std::fabs(row.mean_q) <= config_.q_cap)) {
                row.diverged = true;
                trace.rows.push_back(row);
                return trace;
            }
            trace.rows.push_back(row);
        }
        const LossComponents lc = step();
        if (!lc.finite || !(std::fabs(lc.batch_mean_q) <= config_.q_cap)) {
            MetricRow row;
            row.step = s + 1;
            row.loss = lc.total;
            row.mean_q = lc.batch_mean_q;
            row.diverged = true;
            trace.rows.push_back(row);
            return trace;
        }
    }
    MetricRow row = checkpoint_row(total);
    if (!std::isfinite(row.loss) || !(std::fabs(row.mean_q) <= config_.q_cap))
        row.diverged = true;
    trace.rows.push_back(row);
    return trace;
}

MetricTrace noisy_td_run(const OfflineDataset& data, TrainConfig config, NoiseKind kind,
                         double scale, const std::vector<std::string>& provenance) {
    if (kind == NoiseKind::None)
        throw ConfigError("noisy_td_run: pick isotropic or label-noise-targets");
    if (!(scale > 0.0)) throw DomainError("noisy_td_run: noise scale must be positive");
    config.loss_head = LossHead::PlainTD;
    config.cql_alpha = 0.0;
    config.rem_heads = 1;
    config.noise = kind;
    config.noise_scale = scale;
    Trainer trainer(data, config);
    return trainer.run(provenance);
}

double dr3_label_noise_penalty(const QNetwork& net, const OfflineDataset& data,
                               const std::vector<std::size_t>& batch,
                               SelectorKind selector, double gamma, double eta,
                               std::size_t iters, const StochasticPolicy* behavior,
                               const Matrix* sigma_override) {
    const FeaturePair pair =
        selector_feature_pair(net, data, batch, selector, gamma, behavior);
    return dr3_label_noise_core(pair.phi, pair.phi_next, gamma, eta, iters,
                                sigma_override)
        .value;
}

}  // namespace coadapt
