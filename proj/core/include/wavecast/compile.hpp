#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wavecast/hankel.hpp"
#include "wavecast/lds.hpp"
#include "wavecast/pseudo_lds.hpp"

namespace wavecast {

// Monic real polynomial p(x) = sum_j coeffs[j] x^{deg-j} with coeffs[0] == 1.
// For phase polynomials every declared root has unit modulus and
// |p(root)| <= 1e-8.
struct PhasePolynomial {
    Vec coeffs;
    CVec roots_checked;

    std::size_t degree() const { return coeffs.empty() ? 0 : coeffs.size() - 1; }
};

Complex eval_poly(const Vec& coeffs, Complex x);

// Smallest monic real polynomial whose roots are the given unit-modulus
// phases (closed under conjugation; conjugates are added automatically and
// near-duplicates merged).
PhasePolynomial min_phase_polynomial(const CVec& phases);

// Monic real polynomial with the given (conjugate-closed) roots, not
// necessarily of unit modulus; used for characteristic polynomials.
PhasePolynomial poly_from_roots(const CVec& roots);

// ((1-r) r^{t-1})_{t=1..T}; the impulse-magnitude vector the wave-filters
// approximate.
Vec mu_vector(double r, std::size_t T);

// Pure autoregressive compilation: with p annihilating the whole spectrum of
// A, the system satisfies y_t = -sum_j e_j y_{t-j} + sum_j P_j x_{t-j} with
// P_j = sum_{i<=j} e_i C A^{j-i} B.  The returned beta are the predictor
// weights -e_j; D is folded into P_0.
struct ArCompiled {
    Vec beta;            // tau entries, beta_u = -e_u
    std::vector<Mat> P;  // tau matrices m x n

    // As a pseudo-LDS without convolution features (k = 0).
    PseudoLds to_pseudo_lds(std::size_t n, std::size_t m) const;
};

ArCompiled ar_compile(const LinearDynamicalSystem& sys, const PhasePolynomial& p);

struct CompileReport {
    std::size_t k = 0, W = 0, tau = 0;
    double max_error = 0.0;   // max per-step ||prediction - y|| on the validation trace
    double theta_norm = 0.0;  // composite norm
    std::size_t validation_T = 0;
    std::uint64_t validation_seed = 0;
};

struct CompiledApprox {
    PseudoLds theta;
    CompileReport report;
};

struct ValidationSpec {
    std::size_t T = 0;                     // 0: use the bank horizon
    std::uint64_t seed = 0xC0117EC7ull;    // input stream for the error report
};

// Wave-filter compilation following the constructive proof: per eigenvalue
// alpha_l = r_l omega_l the impulse magnitude mu(r_l) is projected onto the
// filter bank, the phase omega_l is rounded to the nearest of W grid points,
// and the complex per-mode blocks are realified into (M, N).  The AR part
// reuses ar_compile's construction with the phase polynomial.  The emitted
// theta uses lag_offset = tau - 1, which is the offset that makes the
// construction exact in the k, W -> infinity limit under this convolution
// convention.
CompiledApprox wavefilter_compile(const LinearDynamicalSystem& sys, const PhasePolynomial& p,
                                  const FilterBank& bank, std::size_t W,
                                  const ValidationSpec& validation = {});

std::string compile_report_to_json(const CompileReport& r);

}  // namespace wavecast
