#include "doctest.h"

#include <cmath>

#include "wavecast/linalg.hpp"
#include "wavecast/rng.hpp"

#ifdef WAVECAST_HAVE_EIGEN_ORACLE
#include <Eigen/Dense>
#endif

using namespace wavecast;

namespace {

Mat random_symmetric(std::size_t n, Rng& rng) {
    Mat a(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) a(i, j) = a(j, i) = rng.gaussian();
    return a;
}

Mat rotation_block_matrix(const Vec& thetas, const Vec& radii) {
    const std::size_t d = 2 * thetas.size();
    Mat a(d, d);
    for (std::size_t b = 0; b < thetas.size(); ++b) {
        const double c = radii[b] * std::cos(thetas[b]);
        const double s = radii[b] * std::sin(thetas[b]);
        a(2 * b, 2 * b) = c;
        a(2 * b, 2 * b + 1) = -s;
        a(2 * b + 1, 2 * b) = s;
        a(2 * b + 1, 2 * b + 1) = c;
    }
    return a;
}

}  // namespace

TEST_CASE("solve recovers a known solution") {
    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 1 + std::size_t(trial);
        Mat a(n, n);
        for (double& v : a.data()) v = rng.gaussian();
        for (std::size_t i = 0; i < n; ++i) a(i, i) += 3.0;
        Vec x_true = rng.gaussian_vec(n);
        const Vec b = matvec(a, x_true);
        const Vec x = solve(a, b);
        for (std::size_t i = 0; i < n; ++i) CHECK(x[i] == doctest::Approx(x_true[i]).epsilon(1e-9));
    }
}

TEST_CASE("complex inverse multiplies back to identity") {
    Rng rng(11);
    const std::size_t n = 6;
    CMat a(n, n);
    for (Complex& v : a.data()) v = Complex(rng.gaussian(), rng.gaussian());
    const CMat inv = cinverse(a);
    const CMat prod = cmatmul(a, inv);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const Complex want = (i == j) ? Complex(1, 0) : Complex(0, 0);
            CHECK(std::abs(prod(i, j) - want) < 1e-10);
        }
}

TEST_CASE("jacobi eigen residuals and orthonormality") {
    Rng rng(3);
    for (std::size_t n : {2u, 5u, 13u, 40u}) {
        const Mat a = random_symmetric(n, rng);
        const SymmetricEigen e = jacobi_eigen(a);
        for (std::size_t h = 0; h < n; ++h) {
            Vec v(e.vectors.row(h), e.vectors.row(h) + n);
            CHECK(norm2(v) == doctest::Approx(1.0).epsilon(1e-12));
            Vec av = matvec(a, v);
            axpy(-e.values[h], v, av);
            CHECK(norm2(av) < 1e-9);
            for (std::size_t h2 = h + 1; h2 < n; ++h2) {
                Vec w(e.vectors.row(h2), e.vectors.row(h2) + n);
                CHECK(std::fabs(dot(v, w)) < 1e-10);
            }
        }
        for (std::size_t h = 0; h + 1 < n; ++h) CHECK(e.values[h] >= e.values[h + 1]);
    }
}

#ifdef WAVECAST_HAVE_EIGEN_ORACLE
TEST_CASE("jacobi eigenvalues agree with the Eigen oracle") {
    Rng rng(5);
    for (std::size_t n : {3u, 10u, 25u, 50u}) {
        const Mat a = random_symmetric(n, rng);
        const SymmetricEigen mine = jacobi_eigen(a);
        Eigen::MatrixXd ea(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) ea(i, j) = a(i, j);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ea);
        for (std::size_t h = 0; h < n; ++h)
            CHECK(mine.values[h] ==
                  doctest::Approx(es.eigenvalues()[Eigen::Index(n - 1 - h)]).epsilon(1e-11));
    }
}

TEST_CASE("qr eigenvalues agree with the Eigen oracle") {
    Rng rng(17);
    for (std::size_t n : {2u, 4u, 9u, 16u}) {
        Mat a(n, n);
        for (double& v : a.data()) v = rng.gaussian();
        CVec mine = eigenvalues(a);
        Eigen::MatrixXd ea(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) ea(i, j) = a(i, j);
        Eigen::EigenSolver<Eigen::MatrixXd> es(ea);
        std::vector<bool> used(n, false);
        for (std::size_t i = 0; i < n; ++i) {
            double best = 1e300;
            std::size_t bj = 0;
            for (std::size_t j = 0; j < n; ++j) {
                if (used[j]) continue;
                const double dist = std::abs(
                    mine[i] - Complex(es.eigenvalues()[Eigen::Index(j)].real(),
                                      es.eigenvalues()[Eigen::Index(j)].imag()));
                if (dist < best) {
                    best = dist;
                    bj = j;
                }
            }
            used[bj] = true;
            CHECK(best < 1e-10);
        }
    }
}
#endif

TEST_CASE("rotation blocks have the exact unit spectrum") {
    const Vec thetas{0.7, 2.1};
    const Vec radii{1.0, 1.0};
    const Mat a = rotation_block_matrix(thetas, radii);
    const EigenDecomposition d = eig_decompose(a);
    for (const Complex& l : d.lambda) CHECK(std::abs(l) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(d.reconstruction < 1e-10);
    // conjugate pairs adjacent
    for (std::size_t i = 0; i + 1 < d.lambda.size(); i += 2)
        CHECK(std::abs(d.lambda[i] - std::conj(d.lambda[i + 1])) < 1e-12);
}

TEST_CASE("identity decomposes canonically") {
    const EigenDecomposition d = eig_decompose(Mat::identity(4));
    for (const Complex& l : d.lambda) CHECK(std::abs(l - Complex(1, 0)) < 1e-14);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(std::abs(d.psi(i, j) - (i == j ? Complex(1, 0) : Complex(0, 0))) < 1e-12);
}

TEST_CASE("eig_decompose reconstructs random matrices") {
    Rng rng(23);
    for (std::size_t n : {2u, 5u, 10u, 20u}) {
        Mat a(n, n);
        for (double& v : a.data()) v = rng.gaussian();
        const EigenDecomposition d = eig_decompose(a);
        CHECK(d.reconstruction < 1e-8);
        CHECK(d.cond_product >= double(n));  // Frobenius products are at least n
    }
}

TEST_CASE("spectral_norm matches the 2x2 closed form") {
    Mat a(2, 2);
    a(0, 0) = 3.0;
    a(1, 1) = -4.0;
    CHECK(spectral_norm(a) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(spectral_radius(a) == doctest::Approx(4.0).epsilon(1e-12));
}
