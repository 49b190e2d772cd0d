#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wavecast/linalg.hpp"
#include "wavecast/rng.hpp"

namespace wavecast {

// Ground-truth system h_t = A h_{t-1} + B x_t + eta_t, y_t = C h_t + D x_t + xi_t.
struct LinearDynamicalSystem {
    Mat A, B, C, D;
    Vec h0;

    std::size_t state_dim() const { return A.rows(); }
    std::size_t input_dim() const { return B.cols(); }
    std::size_t output_dim() const { return C.rows(); }

    void check_shapes() const;  // throws std::invalid_argument on mismatch
};

// Declared size bounds for an LDS (assumptions on the comparator class).
struct SystemBounds {
    double R_x = 0.0, R_y = 0.0, R_theta = 0.0, R_psi = 0.0;
    double R_1 = 0.0, R_inf = 0.0;
    std::size_t tau = 0;
    Vec p_coeffs;  // monic: p_coeffs[0] == 1, highest degree first
};

struct NoiseSchedule {
    std::vector<Vec> eta;  // per-step hidden-state perturbations, length-d
    std::vector<Vec> xi;   // per-step observation perturbations, length-m
    double budget = 0.0;   // declared L

    double total_energy() const;
    static NoiseSchedule zeros(std::size_t T, std::size_t d, std::size_t m);
};

enum class NoisePattern { Spread, SingleSpikeHidden, SingleSpikeObs };

// Schedule meeting the budget invariant sum ||eta||^2 + ||xi||^2 == L.  The
// spread pattern rescales i.i.d. Gaussian draws so the total is exact; spike
// patterns place a single vector of squared norm L at step `spike_index`.
NoiseSchedule make_noise_schedule(std::size_t T, std::size_t d, std::size_t m, double L,
                                  NoisePattern pattern, std::size_t spike_index, Rng rng);

struct StepResult {
    Vec h;
    Vec y;
};

StepResult lds_step(const LinearDynamicalSystem& sys, const Vec& h_prev, const Vec& x,
                    const Vec& eta, const Vec& xi);

struct SimulationResult {
    std::vector<Vec> outputs;       // y_1..y_T
    std::vector<Vec> hidden_trace;  // h_1..h_T
};

// Folds lds_step over the input sequence.  With fold_h0_into_noise the initial
// state enters as an extra first-step hidden perturbation A*h0 and the
// recursion starts from zero (the two are equivalent).
SimulationResult simulate(const LinearDynamicalSystem& sys, const std::vector<Vec>& inputs,
                          const NoiseSchedule& noise, bool fold_h0_into_noise = false);

// Block-diagonal 2x2 rotation transition with Gaussian B, C and D = 0.
// Block angles are uniform on [0, 2pi); block radii are uniform on
// [radius_min, radius_max] (both 1 gives the marginally stable case).
struct RotationSystem {
    LinearDynamicalSystem system;
    Vec thetas;  // one per block
    Vec radii;   // one per block
};

RotationSystem random_rotation_lds(std::size_t d, std::size_t n, std::size_t m,
                                   std::uint64_t seed, double radius_min = 1.0,
                                   double radius_max = 1.0);

// Random diagonalizable system with well-separated spectrum and spectral
// radius <= rho_max: a real block-diagonal eigenstructure conjugated by a
// well-conditioned random similarity.  The exact characteristic polynomial
// (monic, highest degree first) is returned alongside.
struct DiagonalizableSystem {
    LinearDynamicalSystem system;
    CVec eigenvalues;
    Vec char_poly;
};

DiagonalizableSystem random_diagonalizable_lds(std::size_t d, std::size_t n, std::size_t m,
                                               double rho_max, std::uint64_t seed);

std::vector<Vec> gaussian_inputs(std::size_t T, std::size_t n, Rng rng);

// Gaussian block impulses: a fresh Gaussian vector held constant over each
// length-`block_len` block, zero during the gaps.  gap < 0 means a single
// block followed by zeros.
std::vector<Vec> block_impulse_inputs(std::size_t T, std::size_t n, std::size_t block_len,
                                      std::int64_t gap, Rng rng);

struct Diagonalization {
    CVec lambda;      // conjugate pairs adjacent
    CMat psi;         // columns v_l
    CMat psi_inv;     // rows w_l^*
    Vec radii;        // r_l = |lambda_l|
    CVec phases;      // omega_l = lambda_l / r_l (1 when r_l == 0)
    double cond_product = 0.0;
    double reconstruction = 0.0;
};

Diagonalization diagonalize(const Mat& a, double residual_tol = 1e-8);

struct BoundCheck {
    std::string name;
    bool pass = false;
    double measured = 0.0;
    double limit = 0.0;
};

struct BoundsReport {
    std::vector<BoundCheck> checks;
    bool all_pass() const;
    std::string to_json() const;
};

// Report-only validation of the declared assumptions against a system and a
// realized trace.
BoundsReport validate_bounds(const LinearDynamicalSystem& sys, const SystemBounds& bounds,
                             const std::vector<Vec>& inputs, const std::vector<Vec>& outputs);

// JSON round-trip of explicit system matrices.
std::string system_to_json(const LinearDynamicalSystem& sys);
LinearDynamicalSystem system_from_json(const std::string& text);

}  // namespace wavecast
