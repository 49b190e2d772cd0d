#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wavecast/compile.hpp"
#include "wavecast/lds.hpp"
#include "wavecast/learner.hpp"
#include "wavecast/pseudo_lds.hpp"

namespace wavecast {

struct SystemSpec {
    enum class Kind { Rotation, Diagonalizable, Explicit };
    Kind kind = Kind::Rotation;
    std::size_t d = 10, n = 10, m = 2;
    double radius_min = 1.0, radius_max = 1.0;  // rotation block moduli
    double rho_max = 0.95;                      // diagonalizable generator
    LinearDynamicalSystem explicit_system;      // kind == Explicit
};

struct InputSpec {
    enum class Kind { Gaussian, BlockImpulse };
    Kind kind = Kind::Gaussian;
    std::size_t block_len = 10;
    std::int64_t gap = 40;  // negative: one block, zeros afterwards
};

struct NoiseSpec {
    enum class Pattern { None, Spread, SpikeHidden, SpikeObs };
    Pattern pattern = Pattern::None;
    double L = 0.0;
    std::size_t spike_index = 1;
};

struct PredictorSpec {
    enum class Kind { Algorithm1, ArOnline, PreviousOutput, Compiled };
    enum class CompiledMode { Ar, Wavefilter };

    std::string name;
    Kind kind = Kind::Algorithm1;

    // pseudo-LDS dimensions (Algorithm1; ArOnline uses tau only)
    std::size_t k = 25, W = 100, tau = 10;
    std::int64_t lag_offset = -1;     // -1: tau - 1
    bool matrix_beta = false;
    std::size_t filter_horizon = 0;   // 0: experiment length
    bool batch_features = true;

    // learner settings
    LearnerMode mode = LearnerMode::RidgePractical;
    double eta = 0.0;     // 0: sqrt(T)
    double radius = 0.0;  // 0: 10 * sqrt(parameter count)
    int inner_iters = 50;
    double inner_tol = 1e-8;
    StepSchedule schedule = StepSchedule::Nlms;
    double step_size = 0.5;
    double ridge_lambda = 0.0;
    std::size_t stats_dim_cap = 2048;

    CompiledMode compiled_mode = CompiledMode::Wavefilter;
};

struct MetricSpec {
    std::size_t median_window = 51;
    bool exclude_warmup = false;      // drop the first tau steps from summaries
    std::string comparator;           // predictor name for regret accounting
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::size_t T = 2000;
    SystemSpec system;
    InputSpec inputs;
    NoiseSpec noise;
    std::vector<PredictorSpec> predictors;
    MetricSpec metrics;
    std::string out_dir;
};

ExperimentConfig experiment_config_from_json(const std::string& text);
std::string experiment_config_to_json(const ExperimentConfig& config);

struct PredictorTrace {
    std::string name;
    std::vector<Vec> predictions;
    Vec losses;  // ||yhat_t - y_t||^2
    double total_loss = 0.0;
    std::optional<double> regret;  // vs the declared comparator
    // learner aggregates (zero for parameter-free baselines)
    double mean_inner_iterations = 0.0;
    std::size_t nonconverged_steps = 0;
};

struct ExperimentTrace {
    std::vector<Vec> inputs;
    std::vector<Vec> outputs;
    std::vector<PredictorTrace> predictors;
    std::optional<double> regret;  // vs the declared comparator
    double wall_seconds = 0.0;
    std::string resolved_config_json;
    std::string system_json;  // realized matrices, generator-built or explicit

    const PredictorTrace& predictor(const std::string& name) const;
};

// Executes the online protocol: at step t every predictor sees x_{1:t} and
// y_{1:t-1} only (the history object refuses future outputs), y_t is revealed
// after all predictions are recorded.  Deterministic given config.seed.
ExperimentTrace run_experiment(const ExperimentConfig& config);

// Centered median filter with edge replication; window must be odd.
Vec median_filter(const Vec& series, std::size_t window);

// Mean of `series` over its final quartile (indices > 3/4 of the length).
double final_quartile_mean(const Vec& series);

// --- files ---

std::string trace_to_csv(const ExperimentTrace& trace);

struct ParsedTraceCsv {
    std::vector<std::string> columns;
    std::vector<Vec> rows;

    std::size_t column_index(const std::string& name) const;  // throws if absent
    std::vector<Vec> vector_series(const std::string& prefix) const;
};

ParsedTraceCsv parse_trace_csv(const std::string& text);

// Writes trace.csv, summary.json and chart.svg under config.out_dir and
// returns the paths.
std::vector<std::string> emit_outputs(const ExperimentTrace& trace,
                                      const ExperimentConfig& config);

std::string summary_to_json(const ExperimentTrace& trace, const ExperimentConfig& config);
std::string chart_to_svg(const ExperimentTrace& trace, const ExperimentConfig& config);

// Runs every *.json config in the directory (parallel, capped by the
// WAVECAST_THREADS environment variable); returns per-config output paths.
std::vector<std::string> run_sweep(const std::string& config_dir);

// CSV helpers shared by the CLI
std::string simulation_to_csv(const std::vector<Vec>& inputs, const std::vector<Vec>& outputs);

}  // namespace wavecast
