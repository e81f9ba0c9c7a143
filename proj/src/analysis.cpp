#include "coadapt/analysis.hpp"

#include <cmath>

#include "coadapt/decomp.hpp"

namespace coadapt {

void FeaturePair::validate() const {
    if (!phi.same_shape(phi_next))
        throw ShapeError("FeaturePair: phi and phi_next shapes disagree");
    if (phi.rows() == 0 || phi.cols() == 0)
        throw ShapeError("FeaturePair: empty feature matrix");
    if (!(gamma > 0.0 && gamma < 1.0))
        throw DomainError("FeaturePair: gamma must lie in (0, 1)");
}

double mean_feature_dot(const FeaturePair& features) {
    features.validate();
    const Matrix& a = features.phi;
    const Matrix& b = features.phi_next;
    double acc = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) acc += a(i, j) * b(i, j);
    return acc / static_cast<double>(a.rows());
}

CosineStats mean_cosine(const FeaturePair& features) {
    features.validate();
    const Matrix& a = features.phi;
    const Matrix& b = features.phi_next;
    CosineStats stats;
    double acc = 0.0;
    std::size_t counted = 0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double na = 0.0, nb = 0.0, d = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) {
            na += a(i, j) * a(i, j);
            nb += b(i, j) * b(i, j);
            d += a(i, j) * b(i, j);
        }
        if (na == 0.0 || nb == 0.0) {
            ++stats.excluded;
            continue;
        }
        acc += d / std::sqrt(na * nb);
        ++counted;
    }
    if (counted == 0)
        throw DomainError("mean_cosine: every feature pair has a zero-norm side");
    stats.mean = acc / static_cast<double>(counted);
    return stats;
}

std::size_t srank(const Matrix& phi, double delta) {
    if (!(delta > 0.0 && delta < 1.0))
        throw DomainError("srank: delta must lie in (0, 1)");
    if (phi.rows() == 0 || phi.cols() == 0) return 0;
    const std::vector<double> sigma = svd_values(phi);
    double total = 0.0;
    for (double s : sigma) total += s;
    if (total == 0.0) return 0;
    const double threshold = (1.0 - delta) * total;
    double cumulative = 0.0;
    for (std::size_t k = 0; k < sigma.size(); ++k) {
        cumulative += sigma[k];
        if (cumulative >= threshold) return k + 1;
    }
    return sigma.size();
}

bool coadaptation_trace_test(const FeaturePair& features) {
    features.validate();
    double dot_sum = 0.0, norm_sum = 0.0;
    const Matrix& a = features.phi;
    const Matrix& b = features.phi_next;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            dot_sum += a(i, j) * b(i, j);
            norm_sum += a(i, j) * a(i, j);
        }
    }
    return dot_sum >= norm_sum / features.gamma;
}

std::string verdict_name(Verdict verdict) {
    switch (verdict) {
        case Verdict::Stable: return "Stable";
        case Verdict::NonConvergent: return "NonConvergent";
        case Verdict::Borderline: return "Borderline";
    }
    throw DomainError("verdict_name: unknown verdict");
}

namespace {

// M_phi = Phi^T (Phi - gamma Phi')
Matrix td_matrix(const FeaturePair& features) {
    Matrix rhs = sub(features.phi, scale(features.phi_next, features.gamma));
    return matmul(transpose(features.phi), rhs);
}

}  // namespace

StabilityReport stability_spectrum(const FeaturePair& features, double rel_tol) {
    features.validate();
    if (rel_tol < 0.0) throw DomainError("stability_spectrum: rel_tol must be >= 0");
    const Matrix m = td_matrix(features);
    const double fro = frobenius_norm(m);
    StabilityReport report;
    report.tol = rel_tol * (fro > 0.0 ? fro : 1.0);
    report.eigenvalues = eig_complex(m);
    report.trace_condition_holds = coadaptation_trace_test(features);

    double min_real = report.eigenvalues.front().real();
    double max_real = min_real;
    bool oscillatory_nonpositive = false;
    for (const auto& ev : report.eigenvalues) {
        min_real = std::min(min_real, ev.real());
        max_real = std::max(max_real, ev.real());
        if (std::fabs(ev.imag()) > report.tol && ev.real() <= report.tol)
            oscillatory_nonpositive = true;
    }
    report.min_real_part = min_real;
    if (min_real > report.tol)
        report.verdict = Verdict::Stable;
    else if (min_real < -report.tol || (max_real <= report.tol && oscillatory_nonpositive))
        report.verdict = Verdict::NonConvergent;
    else
        report.verdict = Verdict::Borderline;
    return report;
}

LinearTdResult simulate_linear_td(const FeaturePair& features,
                                  const std::vector<double>& rewards, double eta,
                                  std::size_t steps, std::size_t record_every) {
    features.validate();
    if (rewards.size() != features.n())
        throw ShapeError("simulate_linear_td: reward count disagrees with features");
    if (eta <= 0.0) throw DomainError("simulate_linear_td: eta must be positive");
    if (steps == 0) throw DomainError("simulate_linear_td: need at least one step");
    if (record_every == 0) record_every = std::max<std::size_t>(1, steps / 256);

    const Matrix m = td_matrix(features);
    const std::vector<double> b = matvec_transposed(features.phi, rewards);
    const std::size_t d = features.dim();

    LinearTdResult result;
    result.w_star = pinv_solve(m, b);
    {
        std::vector<double> res = matvec(m, result.w_star);
        for (std::size_t i = 0; i < d; ++i) res[i] -= b[i];
        result.fixed_point_exists = norm2(res) <= 1e-8 * std::max(1.0, norm2(b));
    }

    std::vector<double> w(d, 0.0);
    auto monitored = [&]() {
        if (!result.fixed_point_exists) return norm2(w);
        double acc = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double diff = w[i] - result.w_star[i];
            acc += diff * diff;
        }
        return std::sqrt(acc);
    };

    result.steps.push_back(0);
    result.errors.push_back(monitored());
    const double blow_up = 1e12 * std::max(1.0, result.errors[0]);
    bool overflowed = false;
    for (std::size_t k = 1; k <= steps; ++k) {
        std::vector<double> grad = matvec(m, w);
        for (std::size_t i = 0; i < d; ++i) w[i] -= eta * (grad[i] - b[i]);
        if (k % record_every == 0 || k == steps) {
            const double err = monitored();
            result.steps.push_back(k);
            result.errors.push_back(err);
            if (!std::isfinite(err) || err > blow_up) {
                overflowed = true;
                break;
            }
        }
    }
    result.w_final = w;
    const double mid = result.errors[result.errors.size() / 2];
    const double last = result.errors.back();
    result.diverged = overflowed || (last >= 10.0 * mid && last > 1e-12);
    return result;
}

Matrix lyapunov_sigma(const Matrix& g, const Matrix& m, double eta,
                      std::size_t iters, bool check_contraction) {
    if (g.rows() != g.cols()) throw ShapeError("lyapunov_sigma: G must be square");
    if (!m.same_shape(g)) throw ShapeError("lyapunov_sigma: M shape disagrees with G");
    if (eta <= 0.0) throw DomainError("lyapunov_sigma: eta must be positive");
    const std::size_t d = g.rows();
    const double m_norm = frobenius_norm(m);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j)
            if (std::fabs(m(i, j) - m(j, i)) > 1e-8 * std::max(1.0, m_norm))
                throw DomainError("lyapunov_sigma: M must be symmetric");

    Matrix a = Matrix::identity(d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) a(i, j) -= eta * g(i, j);

    if (check_contraction && m_norm > 0.0) {
        // basis of range(M) via SVD; the noise only excites this subspace
        SvdResult ms = svd(m);
        std::size_t k = 0;
        while (k < ms.sigma.size() && ms.sigma[k] > 1e-12 * ms.sigma[0]) ++k;
        if (k > 0) {
            Matrix basis(d, k);
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < k; ++j) basis(i, j) = ms.u(i, j);
            const Matrix restricted = matmul(transpose(basis), matmul(a, basis));
            double rho = 0.0;
            for (const auto& ev : eig_complex(restricted))
                rho = std::max(rho, std::abs(ev));
            if (rho >= 1.0)
                throw NumericError(
                    "lyapunov_sigma: I - eta*G is not contractive on the noise "
                    "support; no stationary covariance exists");
        }
    }

    Matrix sigma(d, d);
    const double eta_sq = eta * eta;
    const double growth_cap = 1e12 * std::max(1.0, eta_sq * m_norm);
    for (std::size_t it = 0; it < iters; ++it) {
        Matrix next = matmul(a, matmul(sigma, transpose(a)));
        for (std::size_t i = 0; i < next.size(); ++i)
            next.data()[i] += eta_sq * m.data()[i];
        sigma = std::move(next);
        if (max_abs(sigma) > growth_cap || !all_finite(sigma))
            throw NumericError("lyapunov_sigma: iteration grew without bound");
    }
    // symmetrize away roundoff drift
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i + 1; j < d; ++j) {
            const double avg = 0.5 * (sigma(i, j) + sigma(j, i));
            sigma(i, j) = avg;
            sigma(j, i) = avg;
        }
    }
    return sigma;
}

double implicit_reg_value(const FeaturePair& features, NoiseModel model,
                          const Matrix& sigma) {
    features.validate();
    const Matrix& a = features.phi;
    const Matrix& b = features.phi_next;
    const std::size_t d = features.dim();
    if (model == NoiseModel::Identity) {
        double norms = 0.0, dots = 0.0;
        for (std::size_t i = 0; i < a.rows(); ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                norms += a(i, j) * a(i, j);
                dots += a(i, j) * b(i, j);
            }
        }
        return norms - features.gamma * dots;
    }
    if (sigma.rows() != d || sigma.cols() != d)
        throw ShapeError("implicit_reg_value: sigma shape disagrees with features");
    double term_self = 0.0, term_cross = 0.0;
    std::vector<double> phi_row(d), projected(d);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < d; ++j) phi_row[j] = a(i, j);
        projected = matvec(sigma, phi_row);
        for (std::size_t j = 0; j < d; ++j) {
            term_self += a(i, j) * projected[j];
            term_cross += b(i, j) * projected[j];
        }
    }
    return term_self - features.gamma * term_cross;
}

}  // namespace coadapt
