#pragma once

#include <complex>
#include <cstddef>
#include <vector>

// Small dense linear algebra kernels sized for desk-scale systems
// (state dimension <= 64, filter horizons <= a few thousand).

namespace wavecast {

using Vec = std::vector<double>;
using Complex = std::complex<double>;
using CVec = std::vector<Complex>;

class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), a_(rows * cols, fill) {}

    static Mat identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return a_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a_[i * cols_ + j]; }

    double* row(std::size_t i) { return a_.data() + i * cols_; }
    const double* row(std::size_t i) const { return a_.data() + i * cols_; }

    Vec& data() { return a_; }
    const Vec& data() const { return a_; }

    bool operator==(const Mat& o) const = default;

private:
    std::size_t rows_ = 0, cols_ = 0;
    Vec a_;
};

class CMat {
public:
    CMat() = default;
    CMat(std::size_t rows, std::size_t cols, Complex fill = {})
        : rows_(rows), cols_(cols), a_(rows * cols, fill) {}

    static CMat identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    Complex& operator()(std::size_t i, std::size_t j) { return a_[i * cols_ + j]; }
    Complex operator()(std::size_t i, std::size_t j) const { return a_[i * cols_ + j]; }

    CVec& data() { return a_; }
    const CVec& data() const { return a_; }

private:
    std::size_t rows_ = 0, cols_ = 0;
    CVec a_;
};

// --- vector helpers ---
double dot(const Vec& a, const Vec& b);
double norm2(const Vec& a);
double norm1(const Vec& a);
void axpy(double alpha, const Vec& x, Vec& y);  // y += alpha*x
void scale(Vec& x, double alpha);

// --- matrix helpers ---
Mat matmul(const Mat& a, const Mat& b);
Vec matvec(const Mat& a, const Vec& x);
Mat transpose(const Mat& a);
double frob(const Mat& a);
double frob(const CMat& a);

CMat to_complex(const Mat& a);
CMat cmatmul(const CMat& a, const CMat& b);
CVec cmatvec(const CMat& a, const CVec& x);

// Solve a x = b by Gaussian elimination with partial pivoting.  Throws
// std::runtime_error on (numerically) singular input.
Vec solve(Mat a, Vec b);
CVec csolve(CMat a, CVec b);
CMat cinverse(const CMat& a);

// Largest singular value via the symmetric eigenproblem of a^T a.
double spectral_norm(const Mat& a);

// --- symmetric eigendecomposition (cyclic Jacobi) ---
struct SymmetricEigen {
    Vec values;   // descending
    Mat vectors;  // row h = unit eigenvector for values[h]
};

// Cyclic Jacobi sweeps over the full dense matrix.  Converges when the
// off-diagonal Frobenius mass drops below off_tol * ||a||_F.  Throws
// std::runtime_error if max_sweeps is exhausted first.
//
// Eigenvectors are canonicalized: the first nonzero coordinate of each is
// positive, and eigenvalues that agree within 1e-12 are ordered by their
// canonicalized vectors lexicographically, so results are reproducible.
SymmetricEigen jacobi_eigen(const Mat& a, double off_tol = 1e-14, int max_sweeps = 60);

// --- nonsymmetric eigendecomposition (Hessenberg + Francis QR) ---
struct EigenDecomposition {
    CVec lambda;       // eigenvalues; conjugate pairs adjacent (Im>0 first)
    CMat psi;          // columns are right eigenvectors
    CMat psi_inv;
    double cond_product;    // ||psi||_F * ||psi_inv||_F
    double reconstruction;  // ||psi diag(lambda) psi_inv - a||_F / ||a||_F
};

// Eigenvalues of a general real matrix via the implicitly shifted
// double-step QR iteration on the Hessenberg form.
CVec eigenvalues(const Mat& a);

// Full decomposition a = psi diag(lambda) psi_inv; eigenvectors by inverse
// iteration.  Throws std::runtime_error when the relative reconstruction
// residual exceeds `residual_tol` (near-defective input).
EigenDecomposition eig_decompose(const Mat& a, double residual_tol = 1e-8);

double spectral_radius(const Mat& a);

}  // namespace wavecast
