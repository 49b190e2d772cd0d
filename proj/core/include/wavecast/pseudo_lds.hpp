#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "wavecast/hankel.hpp"
#include "wavecast/linalg.hpp"

namespace wavecast {

// Dimensions of the predictor parameterization (M, N, beta, P):
//   W    phase discretization count
//   k    number of wave-filters (0 disables the convolution features)
//   n,m  input / output dimensions
//   tau  autoregressive window
// lag_offset shifts every convolution feature: the kernel tap u multiplies
// x_{t - lag_offset - u}.  Zero gives the plain definition; the constructive
// compiler emits tau-1 (see compile.hpp).
struct PseudoDims {
    std::size_t W = 1;
    std::size_t k = 0;
    std::size_t n = 1;
    std::size_t m = 1;
    std::size_t tau = 1;
    bool matrix_beta = false;
    std::size_t lag_offset = 0;

    std::size_t conv_block() const { return W * k * n; }       // features per trig branch
    std::size_t tensor_size() const { return W * k * m * n; }  // M (or N) entries
    std::size_t beta_size() const { return matrix_beta ? tau * m * m : tau; }
    std::size_t p_size() const { return tau * m * n; }
    std::size_t parameter_count() const {
        return 2 * tensor_size() + beta_size() + p_size();
    }
    bool operator==(const PseudoDims&) const = default;
};

// Parameter bundle.  Flat row-major layouts:
//   M, N : ((p*k + h)*m + j)*n + i
//   beta : u-1                      (scalar mode)
//          ((u-1)*m + j)*m + j'     (matrix mode)
//   P    : (lag*m + j)*n + i        lag = 0..tau-1
struct PseudoLds {
    PseudoDims dims;
    Vec M, N, beta, P;

    static PseudoLds zeros(const PseudoDims& dims);
    void check_shapes() const;
    bool all_finite() const;

    double& m_at(std::size_t p, std::size_t h, std::size_t j, std::size_t i);
    double& n_at(std::size_t p, std::size_t h, std::size_t j, std::size_t i);
    double& p_at(std::size_t lag, std::size_t j, std::size_t i);
};

// Online history: inputs x_1..x_t and outputs y_1..y_{t-1}.  Indices <= 0
// read as zero vectors; reading an output at or past the current step throws
// (that is the causality guard the harness relies on).
class SeriesHistory {
public:
    SeriesHistory(std::size_t n, std::size_t m);

    void push_input(Vec x);
    void push_output(Vec y);

    std::size_t steps() const { return xs_.size(); }
    std::size_t input_dim() const { return n_; }
    std::size_t output_dim() const { return m_; }

    const Vec& x(std::int64_t s) const;  // 1-based
    const Vec& y(std::int64_t s) const;  // 1-based

private:
    std::size_t n_, m_;
    std::vector<Vec> xs_, ys_;
    Vec zero_x_, zero_y_;
};

// Features entering the prediction at one step:
//   cosf[(p*k + h)*n + i] = sum_u sigma_h^{1/4} phi_h(u) cos(2 pi u p / W) x_{t-L-u}(i)
//   sinf analogous with sin
//   xlags[lag*n + i] = x_{t-lag}(i),  ylags[(u-1)*m + j] = y_{t-u}(j)
struct FeatureVector {
    Vec cosf, sinf, xlags, ylags;
};

// Direct per-step evaluation of the convolution sums (online path).
FeatureVector compute_features(const SeriesHistory& history, const FilterBank& bank,
                               const PseudoDims& dims);

// Batch path over a known input sequence: per step, tap sums are first
// collected by residue class of u mod W, then one length-W discrete Fourier
// pass produces every phase at once.  Must agree with compute_features to
// 1e-10; lag features are still assembled from the live history so observed
// outputs never leak in early.
class FeatureBatch {
public:
    FeatureBatch(const std::vector<Vec>& inputs, const FilterBank& bank,
                 const PseudoDims& dims);

    // fills cosf/sinf for step t (1-based); lags come from `history`
    FeatureVector features_at(std::size_t t, const SeriesHistory& history) const;

private:
    PseudoDims dims_;
    std::size_t T_ = 0;
    Vec cos_store_, sin_store_;  // t-major blocks of size conv_block()
};

Vec predict(const PseudoLds& theta, const FeatureVector& f);
double loss(const PseudoLds& theta, const FeatureVector& f, const Vec& y_true);

// Exact gradients of the squared loss with respect to every block; the M/N
// entries carry the sigma^{1/4} scaling because the features do.
PseudoLds gradient(const PseudoLds& theta, const FeatureVector& f, const Vec& y_true);
// variant reusing an already computed residual 2*(yhat - y)
PseudoLds gradient_from_residual(const PseudoLds& theta, const FeatureVector& f,
                                 const Vec& twice_residual);

// ||M||_{2,q}: l_q norm across p-slices of slice Frobenius norms.  q must be
// >= 1; pass std::numeric_limits<double>::infinity() for the max version.
double mixed_norm_2q(const Vec& tensor, std::size_t W, double q);

// ||M||_{2,1} + ||N||_{2,1} + ||beta||_1 + sqrt(sum_j ||P_j||_F^2); matrix
// mode replaces ||beta||_1 by the sum of per-lag Frobenius norms.
double composite_norm(const PseudoLds& theta);

struct RegularizerExponents {
    double q = 2.0;
    double q_prime = 2.0;
    bool q_fallback = false;        // W too small for ln W/(ln W - 1)
    bool q_prime_fallback = false;  // same for tau
};

RegularizerExponents regularizer_exponents(const PseudoDims& dims);

// ||M||^2_{2,q} + ||N||^2_{2,q} + ||beta||^2_{q'} + sum_j ||P_j||_F^2 with
// q = ln W/(ln W - 1), q' = ln tau/(ln tau - 1) (falling back to 2 where the
// formula is undefined).
double regularizer(const PseudoLds& theta);

std::string pseudo_lds_to_json(const PseudoLds& theta);
PseudoLds pseudo_lds_from_json(const std::string& text);

}  // namespace wavecast
