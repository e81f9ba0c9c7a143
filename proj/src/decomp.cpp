#include "coadapt/decomp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace coadapt {

namespace {

// One-sided Jacobi on the columns of `work` (m x n, m >= n): rotates column
// pairs until all are mutually orthogonal. Rotations are accumulated into
// `v` (n x n) when requested.
void jacobi_orthogonalize(Matrix& work, Matrix* v) {
    const std::size_t m = work.rows(), n = work.cols();
    if (v) *v = Matrix::identity(n);
    if (n < 2) return;
    const double eps = std::numeric_limits<double>::epsilon();
    const int max_sweeps = 60;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    const double xp = work(i, p), xq = work(i, q);
                    app += xp * xp;
                    aqq += xq * xq;
                    apq += xp * xq;
                }
                if (std::fabs(apq) <= eps * std::sqrt(app * aqq) || apq == 0.0) continue;
                rotated = true;
                const double zeta = (aqq - app) / (2.0 * apq);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double xp = work(i, p), xq = work(i, q);
                    work(i, p) = c * xp - s * xq;
                    work(i, q) = s * xp + c * xq;
                }
                if (v) {
                    for (std::size_t i = 0; i < n; ++i) {
                        const double vp = (*v)(i, p), vq = (*v)(i, q);
                        (*v)(i, p) = c * vp - s * vq;
                        (*v)(i, q) = s * vp + c * vq;
                    }
                }
            }
        }
        if (!rotated) return;
    }
    // Jacobi sweeps converge quadratically; falling out of the loop means the
    // matrix still improved each sweep, and column norms are already accurate
    // to roundoff, so proceed rather than fail.
}

struct ColumnOrder {
    std::vector<double> norms;
    std::vector<std::size_t> order;
};

ColumnOrder column_norms_sorted(const Matrix& work) {
    const std::size_t m = work.rows(), n = work.cols();
    ColumnOrder result;
    result.norms.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) acc += work(i, j) * work(i, j);
        result.norms[j] = std::sqrt(acc);
    }
    result.order.resize(n);
    std::iota(result.order.begin(), result.order.end(), std::size_t{0});
    std::stable_sort(result.order.begin(), result.order.end(),
                     [&](std::size_t a, std::size_t b) {
                         return result.norms[a] > result.norms[b];
                     });
    return result;
}

}  // namespace

std::vector<double> svd_values(const Matrix& a) {
    if (a.rows() == 0 || a.cols() == 0) return {};
    Matrix work = a.rows() >= a.cols() ? a : transpose(a);
    jacobi_orthogonalize(work, nullptr);
    ColumnOrder co = column_norms_sorted(work);
    std::vector<double> sigma(work.cols());
    for (std::size_t j = 0; j < work.cols(); ++j) sigma[j] = co.norms[co.order[j]];
    return sigma;
}

SvdResult svd(const Matrix& a) {
    if (a.rows() == 0 || a.cols() == 0)
        throw ShapeError("svd: matrix must be non-empty");
    const bool transposed = a.rows() < a.cols();
    Matrix work = transposed ? transpose(a) : a;
    const std::size_t m = work.rows(), n = work.cols();
    Matrix v;
    jacobi_orthogonalize(work, &v);
    ColumnOrder co = column_norms_sorted(work);

    Matrix u(m, n), vs(n, n);
    std::vector<double> sigma(n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = co.order[j];
        const double s = co.norms[src];
        sigma[j] = s;
        const double inv = s > 0.0 ? 1.0 / s : 0.0;
        for (std::size_t i = 0; i < m; ++i) u(i, j) = work(i, src) * inv;
        for (std::size_t i = 0; i < n; ++i) vs(i, j) = v(i, src);
    }
    if (transposed) return SvdResult{std::move(vs), std::move(sigma), std::move(u)};
    return SvdResult{std::move(u), std::move(sigma), std::move(vs)};
}

std::vector<double> pinv_solve(const Matrix& a, const std::vector<double>& b,
                               double rel_tol) {
    if (a.rows() != b.size()) throw ShapeError("pinv_solve: rhs length disagrees");
    SvdResult s = svd(a);
    const double cutoff = s.sigma.empty() ? 0.0 : rel_tol * s.sigma[0];
    std::vector<double> x(a.cols(), 0.0);
    for (std::size_t k = 0; k < s.sigma.size(); ++k) {
        if (s.sigma[k] <= cutoff || s.sigma[k] == 0.0) continue;
        double uk_b = 0.0;
        for (std::size_t i = 0; i < a.rows(); ++i) uk_b += s.u(i, k) * b[i];
        const double coeff = uk_b / s.sigma[k];
        for (std::size_t j = 0; j < a.cols(); ++j) x[j] += coeff * s.v(j, k);
    }
    return x;
}

namespace {

// EISPACK-style balancing: scale rows/columns by powers of 2 to equalize
// their 1-norms. Improves QR eigenvalue accuracy, exact in floating point.
void balance(Matrix& a) {
    const std::size_t n = a.rows();
    const double radix = 2.0;
    const double radix_sq = radix * radix;
    bool done = false;
    while (!done) {
        done = true;
        for (std::size_t i = 0; i < n; ++i) {
            double row = 0.0, col = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                col += std::fabs(a(j, i));
                row += std::fabs(a(i, j));
            }
            if (col == 0.0 || row == 0.0) continue;
            double g = row / radix;
            double f = 1.0;
            const double s = col + row;
            while (col < g) {
                f *= radix;
                col *= radix_sq;
            }
            g = row * radix;
            while (col > g) {
                f /= radix;
                col /= radix_sq;
            }
            if ((col + row) / f < 0.95 * s) {
                done = false;
                const double inv_f = 1.0 / f;
                for (std::size_t j = 0; j < n; ++j) a(i, j) *= inv_f;
                for (std::size_t j = 0; j < n; ++j) a(j, i) *= f;
            }
        }
    }
}

// Householder reduction to upper Hessenberg form, in place.
void hessenberg(Matrix& a) {
    const std::size_t n = a.rows();
    if (n < 3) return;
    std::vector<double> v(n, 0.0);
    for (std::size_t k = 0; k + 2 < n; ++k) {
        double scale = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) scale += std::fabs(a(i, k));
        if (scale == 0.0) continue;
        double sigma = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) {
            v[i] = a(i, k) / scale;
            sigma += v[i] * v[i];
        }
        double alpha = std::sqrt(sigma);
        if (v[k + 1] > 0.0) alpha = -alpha;
        const double beta = sigma - v[k + 1] * alpha;
        if (beta == 0.0) continue;
        v[k + 1] -= alpha;
        // Apply P = I - v v^T / beta from the left and right.
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t i = k + 1; i < n; ++i) acc += v[i] * a(i, j);
            acc /= beta;
            for (std::size_t i = k + 1; i < n; ++i) a(i, j) -= acc * v[i];
        }
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = k + 1; j < n; ++j) acc += a(i, j) * v[j];
            acc /= beta;
            for (std::size_t j = k + 1; j < n; ++j) a(i, j) -= acc * v[j];
        }
        a(k + 1, k) = scale * alpha;
        for (std::size_t i = k + 2; i < n; ++i) a(i, k) = 0.0;
    }
}

double sign_with(double magnitude, double sign_source) {
    return sign_source >= 0.0 ? std::fabs(magnitude) : -std::fabs(magnitude);
}

// Shifted QR on an upper Hessenberg matrix (Francis implicit double shift,
// eigenvalues only). Follows the classic EISPACK hqr organization.
std::vector<std::complex<double>> hqr_eigenvalues(Matrix& h) {
    const int n = static_cast<int>(h.rows());
    std::vector<std::complex<double>> eig(static_cast<std::size_t>(n));
    if (n == 0) return eig;

    double anorm = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = std::max(i - 1, 0); j < n; ++j) anorm += std::fabs(h(i, j));
    if (anorm == 0.0) {
        for (int i = 0; i < n; ++i) eig[i] = {0.0, 0.0};
        return eig;
    }

    const double eps = std::numeric_limits<double>::epsilon();
    int nn = n - 1;
    double t = 0.0;
    while (nn >= 0) {
        int its = 0;
        int l;
        do {
            for (l = nn; l >= 1; --l) {
                double s = std::fabs(h(l - 1, l - 1)) + std::fabs(h(l, l));
                if (s == 0.0) s = anorm;
                if (std::fabs(h(l, l - 1)) <= eps * s) {
                    h(l, l - 1) = 0.0;
                    break;
                }
            }
            double x = h(nn, nn);
            if (l == nn) {
                eig[nn] = {x + t, 0.0};
                --nn;
            } else {
                double y = h(nn - 1, nn - 1);
                double w = h(nn, nn - 1) * h(nn - 1, nn);
                if (l == nn - 1) {
                    double p = 0.5 * (y - x);
                    double q = p * p + w;
                    double z = std::sqrt(std::fabs(q));
                    x += t;
                    if (q >= 0.0) {
                        z = p + sign_with(z, p);
                        eig[nn - 1] = {x + z, 0.0};
                        eig[nn] = eig[nn - 1];
                        if (z != 0.0) eig[nn] = {x - w / z, 0.0};
                    } else {
                        eig[nn] = {x + p, z};
                        eig[nn - 1] = {x + p, -z};
                    }
                    nn -= 2;
                } else {
                    if (its == 60)
                        throw NumericError(
                            "eig_complex: QR iteration failed to converge");
                    if (its == 10 || its == 20 || its == 30 || its == 40 || its == 50) {
                        t += x;
                        for (int i = 0; i <= nn; ++i) h(i, i) -= x;
                        double s = std::fabs(h(nn, nn - 1)) + std::fabs(h(nn - 1, nn - 2));
                        y = x = 0.75 * s;
                        w = -0.4375 * s * s;
                    }
                    ++its;
                    double p = 0.0, q = 0.0, r = 0.0, z = 0.0;
                    int m;
                    for (m = nn - 2; m >= l; --m) {
                        z = h(m, m);
                        double rr = x - z;
                        double ss = y - z;
                        p = (rr * ss - w) / h(m + 1, m) + h(m, m + 1);
                        q = h(m + 1, m + 1) - z - rr - ss;
                        r = h(m + 2, m + 1);
                        double norm = std::fabs(p) + std::fabs(q) + std::fabs(r);
                        p /= norm;
                        q /= norm;
                        r /= norm;
                        if (m == l) break;
                        const double u = std::fabs(h(m, m - 1)) * (std::fabs(q) + std::fabs(r));
                        const double v = std::fabs(p) * (std::fabs(h(m - 1, m - 1)) +
                                                         std::fabs(z) +
                                                         std::fabs(h(m + 1, m + 1)));
                        if (u <= eps * v) break;
                    }
                    for (int i = m + 2; i <= nn; ++i) {
                        h(i, i - 2) = 0.0;
                        if (i != m + 2) h(i, i - 3) = 0.0;
                    }
                    for (int k = m; k <= nn - 1; ++k) {
                        if (k != m) {
                            p = h(k, k - 1);
                            q = h(k + 1, k - 1);
                            r = 0.0;
                            if (k + 1 != nn) r = h(k + 2, k - 1);
                            x = std::fabs(p) + std::fabs(q) + std::fabs(r);
                            if (x != 0.0) {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        double s = sign_with(std::sqrt(p * p + q * q + r * r), p);
                        if (s == 0.0) continue;
                        if (k == m) {
                            if (l != m) h(k, k - 1) = -h(k, k - 1);
                        } else {
                            h(k, k - 1) = -s * x;
                        }
                        p += s;
                        x = p / s;
                        y = q / s;
                        z = r / s;
                        q /= p;
                        r /= p;
                        for (int j = k; j <= nn; ++j) {
                            p = h(k, j) + q * h(k + 1, j);
                            if (k + 1 != nn) {
                                p += r * h(k + 2, j);
                                h(k + 2, j) -= p * z;
                            }
                            h(k + 1, j) -= p * y;
                            h(k, j) -= p * x;
                        }
                        const int mmin = nn < k + 3 ? nn : k + 3;
                        for (int i = l; i <= mmin; ++i) {
                            p = x * h(i, k) + y * h(i, k + 1);
                            if (k + 1 != nn) {
                                p += z * h(i, k + 2);
                                h(i, k + 2) -= p * r;
                            }
                            h(i, k + 1) -= p * q;
                            h(i, k) -= p;
                        }
                    }
                }
            }
        } while (l < nn - 1);
    }
    return eig;
}

}  // namespace

std::vector<std::complex<double>> eig_complex(const Matrix& a) {
    if (a.rows() != a.cols()) throw ShapeError("eig_complex: matrix must be square");
    const std::size_t n = a.rows();
    if (n == 0) return {};
    if (n == 1) return {std::complex<double>(a(0, 0), 0.0)};

    Matrix h = a;
    balance(h);
    hessenberg(h);
    std::vector<std::complex<double>> eig = hqr_eigenvalues(h);

    std::sort(eig.begin(), eig.end(), [](const auto& x, const auto& y) {
        if (x.real() != y.real()) return x.real() > y.real();
        return x.imag() > y.imag();
    });
    return eig;
}

}  // namespace coadapt
