#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "wavecast/pseudo_lds.hpp"

namespace wavecast {

enum class LearnerMode { FtrlTheory, RidgePractical };
enum class StepSchedule { Constant, InvSqrt, Nlms };

struct LearnerConfig {
    LearnerMode mode = LearnerMode::FtrlTheory;
    // follow-the-regularized-leader
    double eta = 1.0;      // regularization weight (objective adds R/eta)
    double radius = 1.0;   // composite-norm ball radius
    int inner_iters = 50;
    double inner_tol = 1e-8;
    std::size_t probe_count = 16;
    std::uint64_t probe_seed = 0x9a0b5eedull;
    std::size_t stats_dim_cap = 4096;  // above this, keep raw history instead of Gram stats
    // ridge_practical
    StepSchedule schedule = StepSchedule::Nlms;
    double step_size = 0.5;
    double ridge_lambda = 0.0;
    // optimize over the subspace beta = 0 (an order-zero autoregressive
    // baseline keeps only the input terms)
    bool freeze_beta = false;

    void validate() const;  // throws std::invalid_argument
};

struct StepDiagnostics {
    std::size_t t = 0;
    double objective = 0.0;   // inner objective (ftrl) or per-step loss (ridge)
    double theta_norm = 0.0;  // composite norm after the update
    int inner_iterations = 0;
    bool converged = true;
};

// Euclidean projection onto {theta : composite_norm(theta) <= radius}.
// Solved by bisection on the multiplier of the blockwise shrinkage operator
// (group soft-threshold on the phase slices of M and N, soft-threshold on
// beta, radial shrink on the stacked P block); idempotent, and the result
// lands within 1e-9 * radius of the sphere from the feasible side.
PseudoLds project_onto_ball(const PseudoLds& theta, double radius);

class LearnerState {
public:
    LearnerState(const PseudoDims& dims, const LearnerConfig& config);

    const PseudoLds& theta() const { return theta_; }
    std::size_t step_count() const { return t_; }
    const LearnerConfig& config() const { return config_; }
    const std::vector<StepDiagnostics>& diagnostics() const { return diagnostics_; }

    // dispatches on config.mode
    void observe(const FeatureVector& f, const Vec& y_true);

    // re-solve the FTRL program on the current history (with no observations
    // this minimizes R/eta alone, i.e. returns zero)
    void resolve();

    // objective value after each accepted inner iteration of the most recent
    // solve; non-increasing by construction
    const Vec& last_objective_path() const { return objective_path_; }

private:
    friend void ftrl_step(LearnerState& state, const FeatureVector& f, const Vec& y_true);
    friend void ridge_step(LearnerState& state, const FeatureVector& f, const Vec& y_true);

    struct Stats;  // cumulative quadratic sufficient statistics

    double inner_objective(const PseudoLds& theta) const;
    PseudoLds inner_gradient(const PseudoLds& theta) const;
    void solve_inner(std::size_t step_label);

    PseudoDims dims_;
    LearnerConfig config_;
    PseudoLds theta_;
    std::size_t t_ = 0;
    std::vector<StepDiagnostics> diagnostics_;

    bool use_stats_ = false;
    std::shared_ptr<Stats> stats_;
    std::vector<FeatureVector> history_features_;
    std::vector<Vec> history_targets_;
    Vec objective_path_;
};

// One FTRL round: absorb the observation into the cumulative least-squares
// objective and re-solve argmin_{K} sum_u loss_u + R/eta by monotone
// projected gradient descent warm-started from the incumbent (and from the
// best of a deterministic probe set, so the returned point never loses to
// the previous theta, zero, or the sampled feasible probes).
void ftrl_step(LearnerState& state, const FeatureVector& f, const Vec& y_true);

// One practical-mode round: theta <- theta - step * (grad loss + 2 lambda theta).
void ridge_step(LearnerState& state, const FeatureVector& f, const Vec& y_true);

// sum ||yhat - y||^2 - sum ||y_star - y||^2 (may be negative).
double regret_accounting(const std::vector<Vec>& predictions,
                         const std::vector<Vec>& comparator_predictions,
                         const std::vector<Vec>& truths);

}  // namespace wavecast
