#include "nasr/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "nasr/error.hpp"

namespace nasr {

namespace {

// Rows of the selected segment with their means removed.
Matrix centered_segment(const Matrix& window, CovarianceSegment segment) {
    const std::size_t c = window.rows(), w = window.cols();
    const std::size_t s = segment.kind == CovarianceSegment::Kind::full_window ? w : segment.s;
    if (s < 2) throw ParameterError("covariance segment needs S >= 2");
    if (s > w)
        throw ParameterError("covariance segment S=" + std::to_string(s) +
                             " exceeds window length " + std::to_string(w));
    const std::size_t first = w - s;

    Matrix centered(c, s);
    for (std::size_t ch = 0; ch < c; ++ch) {
        auto src = window.row(ch).subspan(first, s);
        const double mean = std::accumulate(src.begin(), src.end(), 0.0) / static_cast<double>(s);
        auto dst = centered.row(ch);
        for (std::size_t t = 0; t < s; ++t) dst[t] = src[t] - mean;
    }
    return centered;
}

// a a^T / divisor for the rows of a.
Matrix scaled_row_gram(const Matrix& a, double divisor) {
    const std::size_t n = a.rows(), s = a.cols();
    Matrix out(n, n);
    const double scale = 1.0 / divisor;
    for (std::size_t i = 0; i < n; ++i) {
        auto ri = a.row(i);
        for (std::size_t j = 0; j <= i; ++j) {
            auto rj = a.row(j);
            double acc = 0.0;
            for (std::size_t t = 0; t < s; ++t) acc += ri[t] * rj[t];
            out(i, j) = out(j, i) = acc * scale;
        }
    }
    return out;
}

}  // namespace

Matrix window_covariance(const Matrix& window, CovarianceSegment segment) {
    const Matrix xc = centered_segment(window, segment);
    return scaled_row_gram(xc, static_cast<double>(xc.cols() - 1));
}

namespace {

void require_symmetric(const Matrix& a) {
    if (a.rows() != a.cols()) throw ParameterError("eigendecomposition needs a square matrix");
    double scale = 0.0;
    for (double v : a.values()) scale = std::max(scale, std::abs(v));
    const double tol = 1e-9 * std::max(1.0, scale);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = i + 1; j < a.cols(); ++j)
            if (std::abs(a(i, j) - a(j, i)) > tol)
                throw ParameterError("eigendecomposition input is not symmetric");
}

}  // namespace

void canonicalize(EigenPair& eig) {
    const std::size_t n = eig.d.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return eig.d[a] > eig.d[b]; });

    EigenPair out{std::vector<double>(n), Matrix(n, n)};
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        out.d[j] = eig.d[src];
        std::size_t arg = 0;
        for (std::size_t i = 1; i < n; ++i)
            if (std::abs(eig.v(i, src)) > std::abs(eig.v(arg, src))) arg = i;
        const double sign = eig.v(arg, src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < n; ++i) out.v(i, j) = sign * eig.v(i, src);
    }
    eig = std::move(out);
}

// ----------------------------------------------------------------------------
// Cyclic Jacobi
// ----------------------------------------------------------------------------

EigenPair sym_eig(const Matrix& input, const JacobiOptions& opt) {
    require_symmetric(input);
    const std::size_t n = input.rows();
    Matrix a = input;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = 0.5 * (a(i, j) + a(j, i));

    // Rows of vt are the eigenvectors; rotations then touch contiguous memory.
    Matrix vt = Matrix::identity(n);

    double norm = 0.0;
    for (double v : a.values()) norm += v * v;
    const double tol = opt.tolerance * std::max(1.0, std::sqrt(norm));

    auto off_norm = [&] {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        return std::sqrt(2.0 * off);
    };

    int sweep = 0;
    for (; sweep <= opt.max_sweeps; ++sweep) {
        if (off_norm() < tol) break;
        if (sweep == opt.max_sweeps)
            throw NumericalError("Jacobi eigensolver did not converge after " +
                                 std::to_string(opt.max_sweeps) + " sweeps");
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                auto rp = a.row(p), rq = a.row(q);
                for (std::size_t k = 0; k < n; ++k) {
                    const double gp = rp[k], gq = rq[k];
                    rp[k] = c * gp - s * gq;
                    rq[k] = s * gp + c * gq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double gp = a(k, p), gq = a(k, q);
                    a(k, p) = c * gp - s * gq;
                    a(k, q) = s * gp + c * gq;
                }
                a(p, q) = a(q, p) = 0.0;

                auto vp = vt.row(p), vq = vt.row(q);
                for (std::size_t k = 0; k < n; ++k) {
                    const double gp = vp[k], gq = vq[k];
                    vp[k] = c * gp - s * gq;
                    vq[k] = s * gp + c * gq;
                }
            }
        }
    }

    EigenPair eig{std::vector<double>(n), vt.transposed()};
    for (std::size_t i = 0; i < n; ++i) eig.d[i] = a(i, i);
    canonicalize(eig);
    return eig;
}

// ----------------------------------------------------------------------------
// Householder tridiagonalisation + implicit QL (EISPACK tred2/tql2 structure)
// ----------------------------------------------------------------------------
// Both routines keep the accumulated basis transposed (vt(c, r) holds V(r, c))
// so the Householder updates and Givens rotations sweep contiguous rows.

namespace {

// sqrt(a^2 + b^2) without std::hypot's cost; falls back to it only where
// the plain form could overflow or underflow.
inline double hypot2(double a, double b) {
    const double s = a * a + b * b;
    if (s > 1e-290 && s < 1e290) return std::sqrt(s);
    return std::hypot(a, b);
}

void tridiagonalize(Matrix& vt, std::vector<double>& d, std::vector<double>& e) {
    const std::size_t n = vt.rows();
    const auto v = [&vt](std::size_t r, std::size_t c) -> double& { return vt(c, r); };
    for (std::size_t j = 0; j < n; ++j) d[j] = v(n - 1, j);

    for (std::size_t i = n - 1; i > 0; --i) {
        double scale = 0.0, h = 0.0;
        for (std::size_t k = 0; k < i; ++k) scale += std::abs(d[k]);
        if (scale == 0.0) {
            e[i] = d[i - 1];
            for (std::size_t j = 0; j < i; ++j) {
                d[j] = v(i - 1, j);
                v(i, j) = 0.0;
                v(j, i) = 0.0;
            }
        } else {
            for (std::size_t k = 0; k < i; ++k) {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            double f = d[i - 1];
            double g = std::sqrt(h);
            if (f > 0) g = -g;
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for (std::size_t j = 0; j < i; ++j) e[j] = 0.0;

            for (std::size_t j = 0; j < i; ++j) {
                f = d[j];
                v(j, i) = f;
                g = e[j] + v(j, j) * f;
                for (std::size_t k = j + 1; k + 1 <= i; ++k) {
                    g += v(k, j) * d[k];
                    e[k] += v(k, j) * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for (std::size_t j = 0; j < i; ++j) {
                e[j] /= h;
                f += e[j] * d[j];
            }
            const double hh = f / (h + h);
            for (std::size_t j = 0; j < i; ++j) e[j] -= hh * d[j];
            for (std::size_t j = 0; j < i; ++j) {
                f = d[j];
                g = e[j];
                for (std::size_t k = j; k + 1 <= i; ++k) v(k, j) -= (f * e[k] + g * d[k]);
                d[j] = v(i - 1, j);
                v(i, j) = 0.0;
            }
        }
        d[i] = h;
    }

    // Accumulate the Householder transformations.
    for (std::size_t i = 0; i + 1 < n; ++i) {
        v(n - 1, i) = v(i, i);
        v(i, i) = 1.0;
        const double h = d[i + 1];
        if (h != 0.0) {
            for (std::size_t k = 0; k <= i; ++k) d[k] = v(k, i + 1) / h;
            for (std::size_t j = 0; j <= i; ++j) {
                double g = 0.0;
                for (std::size_t k = 0; k <= i; ++k) g += v(k, i + 1) * v(k, j);
                for (std::size_t k = 0; k <= i; ++k) v(k, j) -= g * d[k];
            }
        }
        for (std::size_t k = 0; k <= i; ++k) v(k, i + 1) = 0.0;
    }
    for (std::size_t j = 0; j < n; ++j) {
        d[j] = v(n - 1, j);
        v(n - 1, j) = 0.0;
    }
    v(n - 1, n - 1) = 1.0;
    e[0] = 0.0;
}

void implicit_ql(Matrix& vt, std::vector<double>& d, std::vector<double>& e) {
    const std::size_t n = vt.rows();
    const auto v = [&vt](std::size_t r, std::size_t c) -> double& { return vt(c, r); };
    for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
    e[n - 1] = 0.0;

    double f = 0.0, tst1 = 0.0;
    constexpr double eps = 2.220446049250313e-16;
    const int max_iter = 30 * static_cast<int>(n) + 30;
    for (std::size_t l = 0; l < n; ++l) {
        tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
        std::size_t m = l;
        while (m < n && std::abs(e[m]) > eps * tst1) ++m;
        if (m == n) m = n - 1;

        if (m > l) {
            int iter = 0;
            do {
                if (++iter > max_iter)
                    throw NumericalError("QL eigensolver did not converge after " +
                                         std::to_string(max_iter) + " iterations");
                double g = d[l];
                double p = (d[l + 1] - g) / (2.0 * e[l]);
                double r = hypot2(p, 1.0);
                if (p < 0) r = -r;
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                const double dl1 = d[l + 1];
                double h = g - d[l];
                for (std::size_t i = l + 2; i < n; ++i) d[i] -= h;
                f += h;

                p = d[m];
                double c = 1.0, c2 = 1.0, c3 = 1.0;
                const double el1 = e[l + 1];
                double s = 0.0, s2 = 0.0;
                for (std::size_t ii = m; ii-- > l;) {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[ii];
                    h = c * p;
                    r = hypot2(p, e[ii]);
                    e[ii + 1] = s * r;
                    s = e[ii] / r;
                    c = p / r;
                    p = c * d[ii] - s * g;
                    d[ii + 1] = h + s * (c * g + s * d[ii]);
                    for (std::size_t k = 0; k < n; ++k) {
                        h = v(k, ii + 1);
                        v(k, ii + 1) = s * v(k, ii) + c * h;
                        v(k, ii) = c * v(k, ii) - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
            } while (std::abs(e[l]) > eps * tst1);
        }
        d[l] += f;
        e[l] = 0.0;
    }
}

}  // namespace

EigenPair sym_eig_ql(const Matrix& input) {
    require_symmetric(input);
    const std::size_t n = input.rows();
    EigenPair eig{std::vector<double>(n), input};
    if (n == 0) return eig;
    if (n == 1) {
        eig.d[0] = input(0, 0);
        eig.v = Matrix::identity(1);
        return eig;
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            eig.v(i, j) = eig.v(j, i) = 0.5 * (input(i, j) + input(j, i));
    std::vector<double> e(n);
    tridiagonalize(eig.v, eig.d, e);
    implicit_ql(eig.v, eig.d, e);
    eig.v = eig.v.transposed();
    canonicalize(eig);
    return eig;
}

EigenPair sym_eig(const Matrix& a, EigenSolver solver) {
    return solver == EigenSolver::jacobi ? sym_eig(a, JacobiOptions{}) : sym_eig_ql(a);
}

// With fewer samples than channels the covariance has rank < S, so the
// nonzero eigenpairs come from the S x S matrix Xc^T Xc / (S - 1): if u is
// one of its unit eigenvectors with eigenvalue lambda, Xc u / sqrt(lambda (S-1))
// is a unit eigenvector of the covariance. Householder QR of those columns
// re-orthogonalises them and completes the basis; the completion carries
// eigenvalue zero.
EigenPair covariance_spectrum(const Matrix& window, CovarianceSegment segment, EigenSolver solver) {
    const Matrix xc = centered_segment(window, segment);
    const std::size_t c = xc.rows(), s = xc.cols();
    const double divisor = static_cast<double>(s - 1);
    if (s >= c) return sym_eig(scaled_row_gram(xc, divisor), solver);

    const EigenPair small = sym_eig(scaled_row_gram(xc.transposed(), divisor), solver);
    const double lmax = small.d.empty() ? 0.0 : std::max(small.d.front(), 0.0);
    std::size_t r = 0;
    while (r < s && small.d[r] > kGramRankTolerance * lmax) ++r;

    // Columns to orthonormalise, stored as rows for contiguous access.
    Matrix a(r, c);
    for (std::size_t j = 0; j < r; ++j) {
        const double inv = 1.0 / std::sqrt(small.d[j] * static_cast<double>(s - 1));
        auto dst = a.row(j);
        for (std::size_t ch = 0; ch < c; ++ch) {
            auto x = xc.row(ch);
            double acc = 0.0;
            for (std::size_t t = 0; t < s; ++t) acc += x[t] * small.v(t, j);
            dst[ch] = acc * inv;
        }
    }

    // Householder vectors h_j (zero above j), Q = H_0 H_1 ... H_{r-1}.
    Matrix h(r, c);
    for (std::size_t j = 0; j < r; ++j) {
        auto col = a.row(j);
        double norm2 = 0.0;
        for (std::size_t i = j; i < c; ++i) norm2 += col[i] * col[i];
        const double alpha = col[j] >= 0.0 ? -std::sqrt(norm2) : std::sqrt(norm2);
        auto hv = h.row(j);
        for (std::size_t i = j; i < c; ++i) hv[i] = col[i];
        hv[j] -= alpha;
        double hn2 = 0.0;
        for (std::size_t i = j; i < c; ++i) hn2 += hv[i] * hv[i];
        if (hn2 == 0.0) continue;
        const double inv = 1.0 / std::sqrt(hn2);
        for (std::size_t i = j; i < c; ++i) hv[i] *= inv;
        for (std::size_t k = j + 1; k < r; ++k) {
            auto ck = a.row(k);
            double dot = 0.0;
            for (std::size_t i = j; i < c; ++i) dot += hv[i] * ck[i];
            dot *= 2.0;
            for (std::size_t i = j; i < c; ++i) ck[i] -= dot * hv[i];
        }
    }
    // Accumulate Q transposed: row k of qt is column k of Q.
    Matrix qt = Matrix::identity(c);
    for (std::size_t jj = r; jj-- > 0;) {
        auto hv = h.row(jj);
        for (std::size_t k = 0; k < c; ++k) {
            auto qk = qt.row(k);
            double dot = 0.0;
            for (std::size_t i = jj; i < c; ++i) dot += hv[i] * qk[i];
            if (dot == 0.0) continue;
            dot *= 2.0;
            for (std::size_t i = jj; i < c; ++i) qk[i] -= dot * hv[i];
        }
    }

    EigenPair eig{std::vector<double>(c, 0.0), qt.transposed()};
    for (std::size_t j = 0; j < r; ++j) eig.d[j] = small.d[j];
    canonicalize(eig);
    return eig;
}

}  // namespace nasr
