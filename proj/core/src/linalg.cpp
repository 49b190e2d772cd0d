#include "wavecast/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <string>

namespace wavecast {

namespace {

double sign_of(double a, double b) { return b >= 0.0 ? std::fabs(a) : -std::fabs(a); }

}  // namespace

Mat Mat::identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

CMat CMat::identity(std::size_t n) {
    CMat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

double norm1(const Vec& a) {
    double s = 0.0;
    for (double v : a) s += std::fabs(v);
    return s;
}

void axpy(double alpha, const Vec& x, Vec& y) {
    if (x.size() != y.size()) throw std::invalid_argument("axpy: size mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void scale(Vec& x, double alpha) {
    for (double& v : x) v *= alpha;
}

Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: shape mismatch");
    Mat c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.row(k);
            double* crow = c.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

Vec matvec(const Mat& a, const Vec& x) {
    if (a.cols() != x.size()) throw std::invalid_argument("matvec: shape mismatch");
    Vec y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* row = a.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) s += row[j] * x[j];
        y[i] = s;
    }
    return y;
}

Mat transpose(const Mat& a) {
    Mat t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

double frob(const Mat& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return std::sqrt(s);
}

double frob(const CMat& a) {
    double s = 0.0;
    for (const Complex& v : a.data()) s += std::norm(v);
    return std::sqrt(s);
}

CMat to_complex(const Mat& a) {
    CMat c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.data().size(); ++i) c.data()[i] = a.data()[i];
    return c;
}

CMat cmatmul(const CMat& a, const CMat& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("cmatmul: shape mismatch");
    CMat c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const Complex aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

CVec cmatvec(const CMat& a, const CVec& x) {
    if (a.cols() != x.size()) throw std::invalid_argument("cmatvec: shape mismatch");
    CVec y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        Complex s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

Vec solve(Mat a, Vec b) {
    const std::size_t n = a.rows();
    if (a.cols() != n || b.size() != n) throw std::invalid_argument("solve: shape mismatch");
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        double best = std::fabs(a(col, col));
        for (std::size_t r = col + 1; r < n; ++r) {
            const double v = std::fabs(a(r, col));
            if (v > best) { best = v; piv = r; }
        }
        if (best == 0.0) throw std::runtime_error("solve: singular matrix");
        if (piv != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a(col, c), a(piv, c));
            std::swap(b[col], b[piv]);
        }
        const double inv = 1.0 / a(col, col);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a(r, col) * inv;
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) a(r, c) -= f * a(col, c);
            b[r] -= f * b[col];
        }
    }
    Vec x(n, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= a(i, j) * x[j];
        x[i] = s / a(i, i);
    }
    return x;
}

namespace {

// LU with partial pivoting; zero pivots are replaced by a tiny multiple of
// the matrix scale so inverse iteration can run on exactly singular shifts.
struct CluFactors {
    CMat lu;
    std::vector<std::size_t> perm;
};

CluFactors clu_factor(CMat a, bool patch_singular, double scale_hint) {
    const std::size_t n = a.rows();
    CluFactors f{std::move(a), {}};
    f.perm.resize(n);
    for (std::size_t i = 0; i < n; ++i) f.perm[i] = i;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        double best = std::abs(f.lu(col, col));
        for (std::size_t r = col + 1; r < n; ++r) {
            const double v = std::abs(f.lu(r, col));
            if (v > best) { best = v; piv = r; }
        }
        if (piv != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(f.lu(col, c), f.lu(piv, c));
            std::swap(f.perm[col], f.perm[piv]);
        }
        if (std::abs(f.lu(col, col)) == 0.0) {
            if (!patch_singular) throw std::runtime_error("csolve: singular matrix");
            f.lu(col, col) = std::numeric_limits<double>::epsilon() * std::max(scale_hint, 1e-300);
        }
        const Complex inv = 1.0 / f.lu(col, col);
        for (std::size_t r = col + 1; r < n; ++r) {
            const Complex m = f.lu(r, col) * inv;
            f.lu(r, col) = m;
            if (m == 0.0) continue;
            for (std::size_t c = col + 1; c < n; ++c) f.lu(r, c) -= m * f.lu(col, c);
        }
    }
    return f;
}

CVec clu_solve(const CluFactors& f, const CVec& b) {
    const std::size_t n = f.lu.rows();
    CVec x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = b[f.perm[i]];
    for (std::size_t i = 1; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) x[i] -= f.lu(i, j) * x[j];
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t j = i + 1; j < n; ++j) x[i] -= f.lu(i, j) * x[j];
        x[i] /= f.lu(i, i);
    }
    return x;
}

}  // namespace

CVec csolve(CMat a, CVec b) {
    if (a.cols() != a.rows() || b.size() != a.rows())
        throw std::invalid_argument("csolve: shape mismatch");
    const CluFactors f = clu_factor(std::move(a), false, 0.0);
    return clu_solve(f, b);
}

CMat cinverse(const CMat& a) {
    const std::size_t n = a.rows();
    if (a.cols() != n) throw std::invalid_argument("cinverse: not square");
    const CluFactors f = clu_factor(a, false, 0.0);
    CMat inv(n, n);
    CVec e(n);
    for (std::size_t col = 0; col < n; ++col) {
        std::fill(e.begin(), e.end(), Complex{});
        e[col] = 1.0;
        const CVec x = clu_solve(f, e);
        for (std::size_t i = 0; i < n; ++i) inv(i, col) = x[i];
    }
    return inv;
}

double spectral_norm(const Mat& a) {
    if (a.rows() == 0 || a.cols() == 0) return 0.0;
    const Mat at = transpose(a);
    const Mat gram = (a.rows() >= a.cols()) ? matmul(at, a) : matmul(a, at);
    const SymmetricEigen eig = jacobi_eigen(gram);
    return std::sqrt(std::max(0.0, eig.values.front()));
}

SymmetricEigen jacobi_eigen(const Mat& a, double off_tol, int max_sweeps) {
    const std::size_t n = a.rows();
    if (a.cols() != n) throw std::invalid_argument("jacobi_eigen: not square");
    Mat w = a;
    Mat vt = Mat::identity(n);  // rows accumulate eigenvectors
    const double anorm = frob(a);

    auto off_mass = [&]() {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) s += w(i, j) * w(i, j);
        return std::sqrt(2.0 * s);
    };

    int sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
        const double off = off_mass();
        if (off <= off_tol * anorm || off == 0.0) break;
        // threshold strategy: damp tiny rotations during the first sweeps
        const double thresh = (sweep < 3) ? 0.2 * off * off / double(n * n) : 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = w(p, q);
                const double g = 100.0 * std::fabs(apq);
                if (sweep > 3 && std::fabs(w(p, p)) + g == std::fabs(w(p, p)) &&
                    std::fabs(w(q, q)) + g == std::fabs(w(q, q))) {
                    w(p, q) = w(q, p) = 0.0;
                    continue;
                }
                if (std::fabs(apq) <= thresh || apq == 0.0) continue;

                const double theta = 0.5 * (w(q, q) - w(p, p)) / apq;
                double tval;
                if (std::fabs(theta) > 1e154) {
                    tval = 0.5 / theta;  // avoid theta*theta overflow
                } else {
                    tval = sign_of(1.0, theta) /
                           (std::fabs(theta) + std::sqrt(1.0 + theta * theta));
                }
                const double c = 1.0 / std::sqrt(1.0 + tval * tval);
                const double s = tval * c;
                const double tau = s / (1.0 + c);

                const double new_pp = w(p, p) - tval * apq;
                const double new_qq = w(q, q) + tval * apq;
                // rotate rows p and q contiguously (old column = old row by
                // symmetry), then mirror the new rows into the columns; the
                // entries at positions p and q are fixed up afterwards
                double* wp = w.row(p);
                double* wq = w.row(q);
                for (std::size_t i = 0; i < n; ++i) {
                    const double gip = wp[i];
                    const double giq = wq[i];
                    wp[i] = gip - s * (giq + gip * tau);
                    wq[i] = giq + s * (gip - giq * tau);
                }
                wp[p] = new_pp;
                wq[q] = new_qq;
                wp[q] = wq[p] = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    w(i, p) = wp[i];
                    w(i, q) = wq[i];
                }
                double* vp = vt.row(p);
                double* vq = vt.row(q);
                for (std::size_t j = 0; j < n; ++j) {
                    const double gp = vp[j];
                    const double gq = vq[j];
                    vp[j] = gp - s * (gq + gp * tau);
                    vq[j] = gq + s * (gp - gq * tau);
                }
            }
        }
    }
    if (sweep == max_sweeps)
        throw std::runtime_error("jacobi_eigen: no convergence in " +
                                 std::to_string(max_sweeps) + " sweeps");

    // canonical sign: first nonzero coordinate positive
    for (std::size_t h = 0; h < n; ++h) {
        double* v = vt.row(h);
        for (std::size_t j = 0; j < n; ++j) {
            if (v[j] != 0.0) {
                if (v[j] < 0.0)
                    for (std::size_t i = 0; i < n; ++i) v[i] = -v[i];
                break;
            }
        }
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        const double di = w(i, i), dj = w(j, j);
        if (std::fabs(di - dj) > 1e-12 * std::max(1.0, std::max(std::fabs(di), std::fabs(dj))))
            return di > dj;
        // near-degenerate: lexicographic tie-break on canonicalized vectors
        const double* vi = vt.row(i);
        const double* vj = vt.row(j);
        for (std::size_t c = 0; c < n; ++c) {
            if (vi[c] != vj[c]) return vi[c] < vj[c];
        }
        return i < j;
    });

    SymmetricEigen out;
    out.values.resize(n);
    out.vectors = Mat(n, n);
    for (std::size_t h = 0; h < n; ++h) {
        out.values[h] = w(order[h], order[h]);
        const double* src = vt.row(order[h]);
        double* dst = out.vectors.row(h);
        for (std::size_t j = 0; j < n; ++j) dst[j] = src[j];
    }
    return out;
}

namespace {

// Reduction to upper Hessenberg form by stabilized elementary similarity
// transformations (pivoted eliminations).
void hessenberg_reduce(Mat& a) {
    const std::size_t n = a.rows();
    if (n < 3) return;
    for (std::size_t m = 1; m + 1 < n; ++m) {
        double x = 0.0;
        std::size_t piv = m;
        for (std::size_t j = m; j < n; ++j) {
            if (std::fabs(a(j, m - 1)) > std::fabs(x)) {
                x = a(j, m - 1);
                piv = j;
            }
        }
        if (piv != m) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a(piv, c), a(m, c));
            for (std::size_t r = 0; r < n; ++r) std::swap(a(r, piv), a(r, m));
        }
        if (x == 0.0) continue;
        for (std::size_t i = m + 1; i < n; ++i) {
            double y = a(i, m - 1);
            if (y == 0.0) continue;
            y /= x;
            a(i, m - 1) = 0.0;
            for (std::size_t j = m; j < n; ++j) a(i, j) -= y * a(m, j);
            for (std::size_t r = 0; r < n; ++r) a(r, m) += y * a(r, i);
        }
    }
}

// Francis implicit double-shift QR on an upper Hessenberg matrix.
CVec hqr_eigenvalues(Mat a) {
    const int n = int(a.rows());
    CVec w(n);
    if (n == 0) return w;
    const double eps = std::numeric_limits<double>::epsilon();

    double anorm = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = std::max(i - 1, 0); j < n; ++j) anorm += std::fabs(a(i, j));
    if (anorm == 0.0) return w;  // zero matrix

    int nn = n - 1;
    double t = 0.0;
    while (nn >= 0) {
        int its = 0;
        int l = 0;
        do {
            for (l = nn; l >= 1; --l) {
                double s = std::fabs(a(l - 1, l - 1)) + std::fabs(a(l, l));
                if (s == 0.0) s = anorm;
                if (std::fabs(a(l, l - 1)) <= eps * s) {
                    a(l, l - 1) = 0.0;
                    break;
                }
            }
            double x = a(nn, nn);
            if (l == nn) {
                w[nn--] = Complex(x + t, 0.0);
            } else {
                double y = a(nn - 1, nn - 1);
                double ww = a(nn, nn - 1) * a(nn - 1, nn);
                if (l == nn - 1) {
                    double p = 0.5 * (y - x);
                    double q = p * p + ww;
                    double z = std::sqrt(std::fabs(q));
                    x += t;
                    if (q >= 0.0) {
                        z = p + sign_of(z, p);
                        w[nn - 1] = w[nn] = Complex(x + z, 0.0);
                        if (z != 0.0) w[nn] = Complex(x - ww / z, 0.0);
                    } else {
                        w[nn] = Complex(x + p, z);
                        w[nn - 1] = std::conj(w[nn]);
                    }
                    nn -= 2;
                } else {
                    if (its == 60)
                        throw std::runtime_error("eigenvalues: QR iteration did not converge");
                    if (its == 10 || its == 20 || its == 30 || its == 40 || its == 50) {
                        t += x;
                        for (int i = 0; i <= nn; ++i) a(i, i) -= x;
                        double s = std::fabs(a(nn, nn - 1)) + std::fabs(a(nn - 1, nn - 2));
                        y = x = 0.75 * s;
                        ww = -0.4375 * s * s;
                    }
                    ++its;
                    int m;
                    double p = 0.0, q = 0.0, r = 0.0, z = 0.0;
                    for (m = nn - 2; m >= l; --m) {
                        z = a(m, m);
                        const double rr = x - z;
                        const double ss = y - z;
                        p = (rr * ss - ww) / a(m + 1, m) + a(m, m + 1);
                        q = a(m + 1, m + 1) - z - rr - ss;
                        r = a(m + 2, m + 1);
                        const double s2 = std::fabs(p) + std::fabs(q) + std::fabs(r);
                        p /= s2;
                        q /= s2;
                        r /= s2;
                        if (m == l) break;
                        const double u = std::fabs(a(m, m - 1)) * (std::fabs(q) + std::fabs(r));
                        const double v = std::fabs(p) * (std::fabs(a(m - 1, m - 1)) +
                                                         std::fabs(z) +
                                                         std::fabs(a(m + 1, m + 1)));
                        if (u <= eps * v) break;
                    }
                    for (int i = m; i <= nn - 2; ++i) {
                        a(i + 2, i) = 0.0;
                        if (i != m) a(i + 2, i - 1) = 0.0;
                    }
                    for (int k = m; k <= nn - 1; ++k) {
                        if (k != m) {
                            p = a(k, k - 1);
                            q = a(k + 1, k - 1);
                            r = (k != nn - 1) ? a(k + 2, k - 1) : 0.0;
                            x = std::fabs(p) + std::fabs(q) + std::fabs(r);
                            if (x != 0.0) {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        const double s3 = sign_of(std::sqrt(p * p + q * q + r * r), p);
                        if (s3 == 0.0) continue;
                        if (k == m) {
                            if (l != m) a(k, k - 1) = -a(k, k - 1);
                        } else {
                            a(k, k - 1) = -s3 * x;
                        }
                        p += s3;
                        x = p / s3;
                        y = q / s3;
                        z = r / s3;
                        q /= p;
                        r /= p;
                        for (int j = k; j <= nn; ++j) {
                            double pp = a(k, j) + q * a(k + 1, j);
                            if (k != nn - 1) {
                                pp += r * a(k + 2, j);
                                a(k + 2, j) -= pp * z;
                            }
                            a(k + 1, j) -= pp * y;
                            a(k, j) -= pp * x;
                        }
                        const int mmin = (nn < k + 3) ? nn : k + 3;
                        for (int i = l; i <= mmin; ++i) {
                            double pp = x * a(i, k) + y * a(i, k + 1);
                            if (k != nn - 1) {
                                pp += z * a(i, k + 2);
                                a(i, k + 2) -= pp * r;
                            }
                            a(i, k + 1) -= pp * q;
                            a(i, k) -= pp;
                        }
                    }
                }
            }
        } while (l < nn - 1 && nn >= 0);
    }
    return w;
}

struct EigenGroup {
    Complex value;  // Im >= 0 representative
    bool is_pair;
};

std::vector<EigenGroup> group_conjugate_pairs(const CVec& raw) {
    std::vector<EigenGroup> groups;
    std::vector<bool> used(raw.size(), false);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (used[i]) continue;
        const Complex v = raw[i];
        const double pair_tol = 1e-9 * (1.0 + std::abs(v));
        if (std::fabs(v.imag()) <= pair_tol) {
            groups.push_back({Complex(v.real(), 0.0), false});
            used[i] = true;
            continue;
        }
        // locate the conjugate partner (hqr emits it adjacently, but search
        // the whole list so any ordering is accepted)
        std::size_t best = raw.size();
        double best_d = std::numeric_limits<double>::max();
        for (std::size_t j = i + 1; j < raw.size(); ++j) {
            if (used[j]) continue;
            const double d = std::abs(raw[j] - std::conj(v));
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        if (best == raw.size() || best_d > 1e-6 * (1.0 + std::abs(v)))
            throw std::runtime_error("eig_decompose: spectrum is not conjugate-closed");
        used[i] = true;
        used[best] = true;
        groups.push_back({v.imag() > 0 ? v : std::conj(v), true});
    }
    std::sort(groups.begin(), groups.end(), [](const EigenGroup& a, const EigenGroup& b) {
        if (a.value.real() != b.value.real()) return a.value.real() > b.value.real();
        return a.value.imag() < b.value.imag();
    });
    return groups;
}

// One eigenvector by inverse iteration with the (possibly singular) shifted
// matrix.  Basis-vector starts keep canonical inputs canonical (the identity
// decomposes to psi = I), but a start can have zero overlap with the target
// eigendirection (block-diagonal matrices), so starts are retried under a
// residual check, ending with dense deterministic fallbacks.
CVec inverse_iteration_vector(const Mat& a, Complex lambda, std::size_t start_index,
                              double anorm) {
    const std::size_t n = a.rows();
    CMat shifted = to_complex(a);
    for (std::size_t i = 0; i < n; ++i) shifted(i, i) -= lambda;
    const CluFactors f = clu_factor(std::move(shifted), true, anorm);

    auto run_from = [&](const CVec& start) {
        CVec v = start;
        for (int iter = 0; iter < 3; ++iter) {
            CVec next = clu_solve(f, v);
            double mx = 0.0;
            for (const Complex& c : next) mx = std::max(mx, std::abs(c));
            if (mx == 0.0 || !std::isfinite(mx)) break;
            for (Complex& c : next) c /= mx;
            v = std::move(next);
        }
        double nrm = 0.0;
        for (const Complex& c : v) nrm += std::norm(c);
        nrm = std::sqrt(nrm);
        if (nrm > 0.0)
            for (Complex& c : v) c /= nrm;
        return v;
    };
    auto residual = [&](const CVec& v) {
        double r = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            Complex av = 0.0;
            for (std::size_t j = 0; j < n; ++j) av += a(i, j) * v[j];
            r += std::norm(av - lambda * v[i]);
        }
        return std::sqrt(r);
    };

    const double tol = 1e-8 * std::max(anorm, 1.0);
    CVec best;
    double best_res = std::numeric_limits<double>::max();
    for (std::size_t attempt = 0; attempt < n + 3; ++attempt) {
        CVec start(n, Complex{});
        if (attempt < n) {
            start[(start_index + attempt) % n] = 1.0;
        } else {
            // dense deterministic fallback
            std::uint64_t state = 0x5eed0000u + start_index * 131u + attempt;
            for (std::size_t i = 0; i < n; ++i) {
                state = state * 6364136223846793005ull + 1442695040888963407ull;
                start[i] = Complex(1.0 + double(state >> 40) * 0x1.0p-24, 0.0);
            }
        }
        const CVec v = run_from(start);
        const double r = residual(v);
        if (r < best_res) {
            best_res = r;
            best = v;
        }
        if (r <= tol) break;
    }

    // fix the phase: largest-modulus entry becomes real positive
    std::size_t arg = 0;
    double mx = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (std::abs(best[i]) > mx) {
            mx = std::abs(best[i]);
            arg = i;
        }
    }
    if (mx > 0.0) {
        const Complex phase = best[arg] / std::abs(best[arg]);
        for (Complex& c : best) c /= phase;
    }
    return best;
}

}  // namespace

CVec eigenvalues(const Mat& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("eigenvalues: not square");
    Mat h = a;
    hessenberg_reduce(h);
    return hqr_eigenvalues(std::move(h));
}

EigenDecomposition eig_decompose(const Mat& a, double residual_tol) {
    const std::size_t n = a.rows();
    if (a.cols() != n) throw std::invalid_argument("eig_decompose: not square");
    const CVec raw = eigenvalues(a);
    const std::vector<EigenGroup> groups = group_conjugate_pairs(raw);
    const double anorm = frob(a);

    EigenDecomposition d;
    d.lambda.reserve(n);
    d.psi = CMat(n, n);
    std::size_t col = 0;
    for (const EigenGroup& g : groups) {
        const CVec v = inverse_iteration_vector(a, g.value, col, anorm);
        d.lambda.push_back(g.value);
        for (std::size_t i = 0; i < n; ++i) d.psi(i, col) = v[i];
        ++col;
        if (g.is_pair) {
            d.lambda.push_back(std::conj(g.value));
            for (std::size_t i = 0; i < n; ++i) d.psi(i, col) = std::conj(v[i]);
            ++col;
        }
    }

    d.psi_inv = cinverse(d.psi);
    d.cond_product = frob(d.psi) * frob(d.psi_inv);

    // reconstruction residual ||psi diag(lambda) psi_inv - a||_F
    CMat lam_psinv = d.psi_inv;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) lam_psinv(i, j) *= d.lambda[i];
    const CMat rec = cmatmul(d.psi, lam_psinv);
    double res = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) res += std::norm(rec(i, j) - a(i, j));
    res = std::sqrt(res);
    d.reconstruction = (anorm > 0.0) ? res / anorm : res;
    if (d.reconstruction > residual_tol)
        throw std::runtime_error("eig_decompose: reconstruction residual " +
                                 std::to_string(d.reconstruction) +
                                 " exceeds tolerance (near-defective matrix)");
    return d;
}

double spectral_radius(const Mat& a) {
    double r = 0.0;
    for (const Complex& v : eigenvalues(a)) r = std::max(r, std::abs(v));
    return r;
}

}  // namespace wavecast
