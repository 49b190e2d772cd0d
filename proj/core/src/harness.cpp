#include "wavecast/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace wavecast {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void check_predictor_name(const std::string& name) {
    if (name.empty()) throw std::invalid_argument("predictor name must be nonempty");
    for (char c : name)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'))
            throw std::invalid_argument("predictor name must be [A-Za-z0-9_-]: " + name);
}

}  // namespace

// ---------------------------------------------------------------- config io

namespace {

PredictorSpec predictor_spec_from_json(const nlohmann::json& j) {
    PredictorSpec s;
    s.name = j.at("name").get<std::string>();
    check_predictor_name(s.name);
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "algorithm1") {
        s.kind = PredictorSpec::Kind::Algorithm1;
    } else if (kind == "ar_online") {
        s.kind = PredictorSpec::Kind::ArOnline;
    } else if (kind == "previous_output") {
        s.kind = PredictorSpec::Kind::PreviousOutput;
    } else if (kind == "compiled") {
        s.kind = PredictorSpec::Kind::Compiled;
    } else {
        throw std::invalid_argument("unknown predictor kind: " + kind);
    }
    if (j.contains("k")) s.k = j.at("k").get<std::size_t>();
    if (j.contains("W")) s.W = j.at("W").get<std::size_t>();
    if (j.contains("tau")) s.tau = j.at("tau").get<std::size_t>();
    if (j.contains("lag_offset")) s.lag_offset = j.at("lag_offset").get<std::int64_t>();
    if (j.contains("beta_mode"))
        s.matrix_beta = j.at("beta_mode").get<std::string>() == "matrix";
    if (j.contains("filter_horizon")) s.filter_horizon = j.at("filter_horizon").get<std::size_t>();
    if (j.contains("batch_features")) s.batch_features = j.at("batch_features").get<bool>();
    if (j.contains("mode"))
        s.mode = j.at("mode").get<std::string>() == "ftrl_theory" ? LearnerMode::FtrlTheory
                                                                  : LearnerMode::RidgePractical;
    if (j.contains("eta")) s.eta = j.at("eta").get<double>();
    if (j.contains("radius")) s.radius = j.at("radius").get<double>();
    if (j.contains("inner_iters")) s.inner_iters = j.at("inner_iters").get<int>();
    if (j.contains("inner_tol")) s.inner_tol = j.at("inner_tol").get<double>();
    if (j.contains("step_schedule")) {
        const std::string sch = j.at("step_schedule").get<std::string>();
        if (sch == "constant")
            s.schedule = StepSchedule::Constant;
        else if (sch == "inv_sqrt")
            s.schedule = StepSchedule::InvSqrt;
        else if (sch == "nlms")
            s.schedule = StepSchedule::Nlms;
        else
            throw std::invalid_argument("unknown step_schedule: " + sch);
    }
    if (j.contains("step_size")) s.step_size = j.at("step_size").get<double>();
    if (j.contains("ridge_lambda")) s.ridge_lambda = j.at("ridge_lambda").get<double>();
    if (j.contains("stats_dim_cap")) s.stats_dim_cap = j.at("stats_dim_cap").get<std::size_t>();
    if (j.contains("compiled_mode"))
        s.compiled_mode = j.at("compiled_mode").get<std::string>() == "ar"
                              ? PredictorSpec::CompiledMode::Ar
                              : PredictorSpec::CompiledMode::Wavefilter;
    return s;
}

nlohmann::json predictor_spec_to_json(const PredictorSpec& s) {
    nlohmann::json j;
    j["name"] = s.name;
    switch (s.kind) {
        case PredictorSpec::Kind::Algorithm1: j["kind"] = "algorithm1"; break;
        case PredictorSpec::Kind::ArOnline: j["kind"] = "ar_online"; break;
        case PredictorSpec::Kind::PreviousOutput: j["kind"] = "previous_output"; break;
        case PredictorSpec::Kind::Compiled: j["kind"] = "compiled"; break;
    }
    if (s.kind == PredictorSpec::Kind::PreviousOutput) return j;
    j["tau"] = s.tau;
    j["beta_mode"] = s.matrix_beta ? "matrix" : "scalar";
    if (s.kind != PredictorSpec::Kind::ArOnline) {
        j["k"] = s.k;
        j["W"] = s.W;
        j["lag_offset"] = s.lag_offset;
        j["filter_horizon"] = s.filter_horizon;
    }
    if (s.kind == PredictorSpec::Kind::Compiled) {
        j["compiled_mode"] = s.compiled_mode == PredictorSpec::CompiledMode::Ar ? "ar" : "wavefilter";
        return j;
    }
    j["batch_features"] = s.batch_features;
    j["mode"] = s.mode == LearnerMode::FtrlTheory ? "ftrl_theory" : "ridge_practical";
    if (s.mode == LearnerMode::FtrlTheory) {
        j["eta"] = s.eta;
        j["radius"] = s.radius;
        j["inner_iters"] = s.inner_iters;
        j["inner_tol"] = s.inner_tol;
        j["stats_dim_cap"] = s.stats_dim_cap;
    } else {
        switch (s.schedule) {
            case StepSchedule::Constant: j["step_schedule"] = "constant"; break;
            case StepSchedule::InvSqrt: j["step_schedule"] = "inv_sqrt"; break;
            case StepSchedule::Nlms: j["step_schedule"] = "nlms"; break;
        }
        j["step_size"] = s.step_size;
        j["ridge_lambda"] = s.ridge_lambda;
    }
    return j;
}

}  // namespace

ExperimentConfig experiment_config_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    ExperimentConfig c;
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    c.T = j.at("T").get<std::size_t>();
    if (c.T < 1) throw std::invalid_argument("config: T must be >= 1");

    if (j.contains("system")) {
        const nlohmann::json& js = j.at("system");
        const std::string gen = js.value("generator", "rotation");
        if (gen == "rotation") {
            c.system.kind = SystemSpec::Kind::Rotation;
            c.system.d = js.value("d", std::size_t{10});
            c.system.n = js.value("n", std::size_t{10});
            c.system.m = js.value("m", std::size_t{2});
            c.system.radius_min = js.value("radius_min", 1.0);
            c.system.radius_max = js.value("radius_max", 1.0);
        } else if (gen == "diagonalizable") {
            c.system.kind = SystemSpec::Kind::Diagonalizable;
            c.system.d = js.value("d", std::size_t{4});
            c.system.n = js.value("n", std::size_t{4});
            c.system.m = js.value("m", std::size_t{2});
            c.system.rho_max = js.value("rho_max", 0.95);
        } else if (gen == "explicit") {
            c.system.kind = SystemSpec::Kind::Explicit;
            c.system.explicit_system = system_from_json(js.at("matrices").dump());
            c.system.d = c.system.explicit_system.state_dim();
            c.system.n = c.system.explicit_system.input_dim();
            c.system.m = c.system.explicit_system.output_dim();
        } else {
            throw std::invalid_argument("unknown system generator: " + gen);
        }
    }

    if (j.contains("inputs")) {
        const nlohmann::json& ji = j.at("inputs");
        const std::string kind = ji.value("kind", "gaussian");
        if (kind == "gaussian") {
            c.inputs.kind = InputSpec::Kind::Gaussian;
        } else if (kind == "block_impulse") {
            c.inputs.kind = InputSpec::Kind::BlockImpulse;
            c.inputs.block_len = ji.value("block_len", std::size_t{10});
            c.inputs.gap = ji.value("gap", std::int64_t{40});
        } else {
            throw std::invalid_argument("unknown input kind: " + kind);
        }
    }

    if (j.contains("noise")) {
        const nlohmann::json& jn = j.at("noise");
        const std::string pat = jn.value("pattern", "none");
        if (pat == "none")
            c.noise.pattern = NoiseSpec::Pattern::None;
        else if (pat == "spread")
            c.noise.pattern = NoiseSpec::Pattern::Spread;
        else if (pat == "spike_hidden")
            c.noise.pattern = NoiseSpec::Pattern::SpikeHidden;
        else if (pat == "spike_obs")
            c.noise.pattern = NoiseSpec::Pattern::SpikeObs;
        else
            throw std::invalid_argument("unknown noise pattern: " + pat);
        c.noise.L = jn.value("L", 0.0);
        c.noise.spike_index = jn.value("spike_index", std::size_t{1});
    }

    if (j.contains("predictors"))
        for (const nlohmann::json& jp : j.at("predictors"))
            c.predictors.push_back(predictor_spec_from_json(jp));

    if (j.contains("metrics")) {
        const nlohmann::json& jm = j.at("metrics");
        c.metrics.median_window = jm.value("median_window", std::size_t{51});
        c.metrics.exclude_warmup = jm.value("exclude_warmup", false);
        c.metrics.comparator = jm.value("comparator", std::string{});
    }
    c.out_dir = j.value("out_dir", std::string{});
    return c;
}

std::string experiment_config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["seed"] = c.seed;
    j["T"] = c.T;
    nlohmann::json js;
    switch (c.system.kind) {
        case SystemSpec::Kind::Rotation:
            js["generator"] = "rotation";
            js["d"] = c.system.d;
            js["n"] = c.system.n;
            js["m"] = c.system.m;
            js["radius_min"] = c.system.radius_min;
            js["radius_max"] = c.system.radius_max;
            break;
        case SystemSpec::Kind::Diagonalizable:
            js["generator"] = "diagonalizable";
            js["d"] = c.system.d;
            js["n"] = c.system.n;
            js["m"] = c.system.m;
            js["rho_max"] = c.system.rho_max;
            break;
        case SystemSpec::Kind::Explicit:
            js["generator"] = "explicit";
            js["matrices"] = nlohmann::json::parse(system_to_json(c.system.explicit_system));
            break;
    }
    j["system"] = js;
    nlohmann::json ji;
    ji["kind"] = c.inputs.kind == InputSpec::Kind::Gaussian ? "gaussian" : "block_impulse";
    if (c.inputs.kind == InputSpec::Kind::BlockImpulse) {
        ji["block_len"] = c.inputs.block_len;
        ji["gap"] = c.inputs.gap;
    }
    j["inputs"] = ji;
    nlohmann::json jn;
    switch (c.noise.pattern) {
        case NoiseSpec::Pattern::None: jn["pattern"] = "none"; break;
        case NoiseSpec::Pattern::Spread: jn["pattern"] = "spread"; break;
        case NoiseSpec::Pattern::SpikeHidden: jn["pattern"] = "spike_hidden"; break;
        case NoiseSpec::Pattern::SpikeObs: jn["pattern"] = "spike_obs"; break;
    }
    jn["L"] = c.noise.L;
    if (c.noise.pattern == NoiseSpec::Pattern::SpikeHidden ||
        c.noise.pattern == NoiseSpec::Pattern::SpikeObs)
        jn["spike_index"] = c.noise.spike_index;
    j["noise"] = jn;
    j["predictors"] = nlohmann::json::array();
    for (const PredictorSpec& p : c.predictors) j["predictors"].push_back(predictor_spec_to_json(p));
    j["metrics"] = {{"median_window", c.metrics.median_window},
                    {"exclude_warmup", c.metrics.exclude_warmup},
                    {"comparator", c.metrics.comparator}};
    j["out_dir"] = c.out_dir;
    return j.dump(2);
}

// ---------------------------------------------------------------- predictors

namespace {

class OnlinePredictor {
public:
    virtual ~OnlinePredictor() = default;
    virtual Vec predict_next(const SeriesHistory& history) = 0;
    virtual void observe(const Vec& y_true) {}
    virtual double mean_inner_iterations() const { return 0.0; }
    virtual std::size_t nonconverged_steps() const { return 0; }
};

class PreviousOutputPredictor final : public OnlinePredictor {
public:
    Vec predict_next(const SeriesHistory& history) override {
        return history.y(std::int64_t(history.steps()) - 1);
    }
};

class LearnerPredictor final : public OnlinePredictor {
public:
    LearnerPredictor(const PseudoDims& dims, const LearnerConfig& config, FilterBank bank,
                     std::unique_ptr<FeatureBatch> batch)
        : dims_(dims), bank_(std::move(bank)), batch_(std::move(batch)),
          state_(dims, config) {}

    Vec predict_next(const SeriesHistory& history) override {
        last_features_ = batch_ ? batch_->features_at(history.steps(), history)
                                : compute_features(history, bank_, dims_);
        return predict(state_.theta(), last_features_);
    }

    void observe(const Vec& y_true) override { state_.observe(last_features_, y_true); }

    double mean_inner_iterations() const override {
        if (state_.diagnostics().empty()) return 0.0;
        double s = 0.0;
        for (const StepDiagnostics& d : state_.diagnostics()) s += d.inner_iterations;
        return s / double(state_.diagnostics().size());
    }

    std::size_t nonconverged_steps() const override {
        std::size_t c = 0;
        for (const StepDiagnostics& d : state_.diagnostics())
            if (!d.converged) ++c;
        return c;
    }

private:
    PseudoDims dims_;
    FilterBank bank_;
    std::unique_ptr<FeatureBatch> batch_;
    LearnerState state_;
    FeatureVector last_features_;
};

class CompiledPredictor final : public OnlinePredictor {
public:
    CompiledPredictor(PseudoLds theta, FilterBank bank, std::unique_ptr<FeatureBatch> batch)
        : theta_(std::move(theta)), bank_(std::move(bank)), batch_(std::move(batch)) {}

    Vec predict_next(const SeriesHistory& history) override {
        const FeatureVector f = batch_ ? batch_->features_at(history.steps(), history)
                                       : compute_features(history, bank_, theta_.dims);
        return predict(theta_, f);
    }

private:
    PseudoLds theta_;
    FilterBank bank_;
    std::unique_ptr<FeatureBatch> batch_;
};

struct BuiltSystem {
    LinearDynamicalSystem sys;
    CVec eigenvalue_hint;  // generator-known spectrum; empty for explicit systems
};

BuiltSystem build_system(const SystemSpec& spec, Rng rng) {
    BuiltSystem out;
    switch (spec.kind) {
        case SystemSpec::Kind::Rotation: {
            const RotationSystem rs = random_rotation_lds(spec.d, spec.n, spec.m,
                                                          rng.next_u64(), spec.radius_min,
                                                          spec.radius_max);
            out.sys = rs.system;
            for (std::size_t b = 0; b < rs.thetas.size(); ++b) {
                const double r = rs.radii[b];
                out.eigenvalue_hint.push_back(
                    Complex(r * std::cos(rs.thetas[b]), r * std::sin(rs.thetas[b])));
                out.eigenvalue_hint.push_back(
                    Complex(r * std::cos(rs.thetas[b]), -r * std::sin(rs.thetas[b])));
            }
            break;
        }
        case SystemSpec::Kind::Diagonalizable: {
            const DiagonalizableSystem ds =
                random_diagonalizable_lds(spec.d, spec.n, spec.m, spec.rho_max, rng.next_u64());
            out.sys = ds.system;
            out.eigenvalue_hint = ds.eigenvalues;
            break;
        }
        case SystemSpec::Kind::Explicit:
            out.sys = spec.explicit_system;
            break;
    }
    return out;
}

CVec system_spectrum(const BuiltSystem& built) {
    if (!built.eigenvalue_hint.empty()) return built.eigenvalue_hint;
    return eigenvalues(built.sys.A);
}

PredictorSpec resolve_predictor_defaults(PredictorSpec spec, std::size_t T, std::size_t n,
                                         std::size_t m) {
    if (spec.kind == PredictorSpec::Kind::ArOnline) {
        spec.k = 0;
        spec.W = 1;
        spec.lag_offset = 0;
    }
    if (spec.kind == PredictorSpec::Kind::Algorithm1 && spec.tau < 1)
        throw std::invalid_argument("algorithm1 requires tau >= 1");
    if (spec.lag_offset < 0)
        spec.lag_offset = std::int64_t(std::max<std::size_t>(spec.tau, 1)) - 1;
    if (spec.filter_horizon == 0) spec.filter_horizon = T;
    if (spec.kind == PredictorSpec::Kind::Algorithm1 || spec.kind == PredictorSpec::Kind::ArOnline) {
        PseudoDims dims;
        dims.W = spec.W;
        dims.k = spec.k;
        dims.n = n;
        dims.m = m;
        dims.tau = std::max<std::size_t>(spec.tau, 1);
        dims.matrix_beta = spec.matrix_beta;
        if (spec.eta == 0.0) spec.eta = std::sqrt(double(T));
        if (spec.radius == 0.0)
            spec.radius = 10.0 * std::sqrt(double(dims.parameter_count()));
    }
    return spec;
}

std::unique_ptr<OnlinePredictor> build_predictor(const PredictorSpec& spec,
                                                 const BuiltSystem& built,
                                                 const std::vector<Vec>& inputs,
                                                 std::size_t n, std::size_t m, Rng rng) {
    switch (spec.kind) {
        case PredictorSpec::Kind::PreviousOutput:
            return std::make_unique<PreviousOutputPredictor>();
        case PredictorSpec::Kind::Algorithm1:
        case PredictorSpec::Kind::ArOnline: {
            PseudoDims dims;
            dims.W = spec.W;
            dims.k = spec.k;
            dims.n = n;
            dims.m = m;
            // tau = 0 requests an order-zero autoregression: keep the x_t
            // term but pin the output-lag weights at zero
            dims.tau = std::max<std::size_t>(spec.tau, 1);
            dims.matrix_beta = spec.matrix_beta;
            dims.lag_offset = std::size_t(spec.lag_offset);

            FilterBank bank;
            if (dims.k > 0) bank = compute_filter_bank(spec.filter_horizon, dims.k);

            LearnerConfig cfg;
            cfg.freeze_beta = spec.tau == 0;
            cfg.mode = spec.mode;
            cfg.eta = spec.eta;
            cfg.radius = spec.radius;
            cfg.inner_iters = spec.inner_iters;
            cfg.inner_tol = spec.inner_tol;
            cfg.schedule = spec.schedule;
            cfg.step_size = spec.step_size;
            cfg.ridge_lambda = spec.ridge_lambda;
            cfg.stats_dim_cap = spec.stats_dim_cap;
            cfg.probe_seed = rng.split("probes").next_u64();

            std::unique_ptr<FeatureBatch> batch;
            if (spec.batch_features && dims.k > 0)
                batch = std::make_unique<FeatureBatch>(inputs, bank, dims);
            return std::make_unique<LearnerPredictor>(dims, cfg, std::move(bank),
                                                      std::move(batch));
        }
        case PredictorSpec::Kind::Compiled: {
            const CVec spectrum = system_spectrum(built);
            if (spec.compiled_mode == PredictorSpec::CompiledMode::Ar) {
                const PhasePolynomial p = poly_from_roots(spectrum);
                const ArCompiled ar = ar_compile(built.sys, p);
                PseudoLds theta = ar.to_pseudo_lds(n, m);
                return std::make_unique<CompiledPredictor>(std::move(theta), FilterBank{},
                                                           nullptr);
            }
            CVec phases;
            for (const Complex& a : spectrum) {
                const double r = std::abs(a);
                phases.push_back(r > 0 ? a / r : Complex(1.0, 0.0));
            }
            const PhasePolynomial p = min_phase_polynomial(phases);
            FilterBank bank = compute_filter_bank(spec.filter_horizon, spec.k);
            ValidationSpec validation;
            validation.T = std::min<std::size_t>(spec.filter_horizon, 256);
            validation.seed = rng.split("compile.validation").next_u64();
            CompiledApprox compiled = wavefilter_compile(built.sys, p, bank, spec.W, validation);
            std::unique_ptr<FeatureBatch> batch;
            if (spec.batch_features)
                batch = std::make_unique<FeatureBatch>(inputs, bank, compiled.theta.dims);
            return std::make_unique<CompiledPredictor>(std::move(compiled.theta),
                                                       std::move(bank), std::move(batch));
        }
    }
    throw std::logic_error("build_predictor: unreachable");
}

}  // namespace

// ------------------------------------------------------------ run_experiment

const PredictorTrace& ExperimentTrace::predictor(const std::string& name) const {
    for (const PredictorTrace& p : predictors)
        if (p.name == name) return p;
    throw std::invalid_argument("trace has no predictor named " + name);
}

ExperimentTrace run_experiment(const ExperimentConfig& raw_config) {
    const auto started = std::chrono::steady_clock::now();
    ExperimentConfig config = raw_config;
    Rng master(config.seed);

    const BuiltSystem built = build_system(config.system, master.split("system"));
    const std::size_t n = built.sys.input_dim();
    const std::size_t m = built.sys.output_dim();
    const std::size_t d = built.sys.state_dim();

    std::vector<Vec> inputs;
    switch (config.inputs.kind) {
        case InputSpec::Kind::Gaussian:
            inputs = gaussian_inputs(config.T, n, master.split("inputs"));
            break;
        case InputSpec::Kind::BlockImpulse:
            inputs = block_impulse_inputs(config.T, n, config.inputs.block_len,
                                          config.inputs.gap, master.split("inputs"));
            break;
    }

    NoiseSchedule noise = NoiseSchedule::zeros(config.T, d, m);
    switch (config.noise.pattern) {
        case NoiseSpec::Pattern::None:
            break;
        case NoiseSpec::Pattern::Spread:
            noise = make_noise_schedule(config.T, d, m, config.noise.L, NoisePattern::Spread,
                                        1, master.split("noise"));
            break;
        case NoiseSpec::Pattern::SpikeHidden:
            noise = make_noise_schedule(config.T, d, m, config.noise.L,
                                        NoisePattern::SingleSpikeHidden,
                                        config.noise.spike_index, master.split("noise"));
            break;
        case NoiseSpec::Pattern::SpikeObs:
            noise = make_noise_schedule(config.T, d, m, config.noise.L,
                                        NoisePattern::SingleSpikeObs, config.noise.spike_index,
                                        master.split("noise"));
            break;
    }
    const SimulationResult sim = simulate(built.sys, inputs, noise);

    for (PredictorSpec& spec : config.predictors)
        spec = resolve_predictor_defaults(spec, config.T, n, m);

    std::vector<std::unique_ptr<OnlinePredictor>> predictors;
    for (const PredictorSpec& spec : config.predictors)
        predictors.push_back(
            build_predictor(spec, built, inputs, n, m, master.split("predictor." + spec.name)));

    ExperimentTrace trace;
    trace.inputs = inputs;
    trace.outputs = sim.outputs;
    trace.resolved_config_json = experiment_config_to_json(config);
    trace.system_json = system_to_json(built.sys);
    trace.predictors.resize(config.predictors.size());
    for (std::size_t p = 0; p < predictors.size(); ++p) {
        trace.predictors[p].name = config.predictors[p].name;
        trace.predictors[p].predictions.reserve(config.T);
        trace.predictors[p].losses.reserve(config.T);
    }

    SeriesHistory history(n, m);
    try {
        for (std::size_t t = 1; t <= config.T; ++t) {
            history.push_input(inputs[t - 1]);
            // predictions are recorded before y_t is revealed to anyone
            for (std::size_t p = 0; p < predictors.size(); ++p)
                trace.predictors[p].predictions.push_back(predictors[p]->predict_next(history));
            const Vec& y_t = sim.outputs[t - 1];
            for (std::size_t p = 0; p < predictors.size(); ++p) {
                const Vec& yhat = trace.predictors[p].predictions.back();
                double l = 0.0;
                for (std::size_t j = 0; j < m; ++j) {
                    const double r = yhat[j] - y_t[j];
                    l += r * r;
                }
                trace.predictors[p].losses.push_back(l);
                trace.predictors[p].total_loss += l;
                predictors[p]->observe(y_t);
            }
            history.push_output(y_t);
        }
    } catch (...) {
        // flush what exists of the trace before propagating
        if (!config.out_dir.empty()) {
            ExperimentTrace partial = trace;
            std::size_t done = history.steps() == 0 ? 0 : history.steps() - 1;
            for (const PredictorTrace& p : partial.predictors)
                done = std::min(done, p.losses.size());
            partial.inputs.resize(done);
            partial.outputs.resize(done);
            for (PredictorTrace& p : partial.predictors) {
                p.predictions.resize(done);
                p.losses.resize(done);
            }
            try {
                std::filesystem::create_directories(config.out_dir);
                std::ofstream out(std::filesystem::path(config.out_dir) / "partial_trace.csv",
                                  std::ios::binary);
                out << trace_to_csv(partial);
            } catch (...) {
            }
        }
        throw;
    }

    for (std::size_t p = 0; p < predictors.size(); ++p) {
        trace.predictors[p].mean_inner_iterations = predictors[p]->mean_inner_iterations();
        trace.predictors[p].nonconverged_steps = predictors[p]->nonconverged_steps();
    }

    if (!config.metrics.comparator.empty()) {
        const PredictorTrace& comp = trace.predictor(config.metrics.comparator);
        for (PredictorTrace& p : trace.predictors)
            p.regret = regret_accounting(p.predictions, comp.predictions, trace.outputs);
        if (!trace.predictors.empty()) trace.regret = trace.predictors.front().regret;
    }

    trace.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return trace;
}

// ---------------------------------------------------------------- metrics

Vec median_filter(const Vec& series, std::size_t window) {
    if (window < 1 || window % 2 == 0)
        throw std::invalid_argument("median_filter: window must be odd and >= 1");
    if (window == 1) return series;
    const std::int64_t half = std::int64_t(window) / 2;
    const std::int64_t N = std::int64_t(series.size());
    Vec out(series.size());
    Vec buf(window);
    for (std::int64_t i = 0; i < N; ++i) {
        for (std::int64_t o = -half; o <= half; ++o) {
            const std::int64_t j = std::clamp<std::int64_t>(i + o, 0, N - 1);
            buf[std::size_t(o + half)] = series[std::size_t(j)];
        }
        std::nth_element(buf.begin(), buf.begin() + half, buf.end());
        out[std::size_t(i)] = buf[std::size_t(half)];
    }
    return out;
}

double final_quartile_mean(const Vec& series) {
    if (series.empty()) throw std::invalid_argument("final_quartile_mean: empty series");
    const std::size_t start = (series.size() * 3) / 4;
    double s = 0.0;
    for (std::size_t i = start; i < series.size(); ++i) s += series[i];
    return s / double(series.size() - start);
}

// ---------------------------------------------------------------- files

std::string trace_to_csv(const ExperimentTrace& trace) {
    const std::size_t T = trace.outputs.size();
    const std::size_t n = T > 0 ? trace.inputs[0].size() : 0;
    const std::size_t m = T > 0 ? trace.outputs[0].size() : 0;
    std::string out;
    out += "t";
    for (std::size_t i = 1; i <= n; ++i) out += ",x_" + std::to_string(i);
    for (std::size_t j = 1; j <= m; ++j) out += ",y_" + std::to_string(j);
    for (const PredictorTrace& p : trace.predictors) {
        for (std::size_t j = 1; j <= m; ++j)
            out += ",yhat_" + p.name + "_" + std::to_string(j);
        out += ",loss_" + p.name;
    }
    out += "\n";
    for (std::size_t t = 0; t < T; ++t) {
        out += std::to_string(t + 1);
        for (std::size_t i = 0; i < n; ++i) out += "," + fmt_double(trace.inputs[t][i]);
        for (std::size_t j = 0; j < m; ++j) out += "," + fmt_double(trace.outputs[t][j]);
        for (const PredictorTrace& p : trace.predictors) {
            for (std::size_t j = 0; j < m; ++j)
                out += "," + fmt_double(p.predictions[t][j]);
            out += "," + fmt_double(p.losses[t]);
        }
        out += "\n";
    }
    return out;
}

std::string simulation_to_csv(const std::vector<Vec>& inputs, const std::vector<Vec>& outputs) {
    if (inputs.size() != outputs.size())
        throw std::invalid_argument("simulation_to_csv: length mismatch");
    const std::size_t n = inputs.empty() ? 0 : inputs[0].size();
    const std::size_t m = outputs.empty() ? 0 : outputs[0].size();
    std::string out = "t";
    for (std::size_t i = 1; i <= n; ++i) out += ",x_" + std::to_string(i);
    for (std::size_t j = 1; j <= m; ++j) out += ",y_" + std::to_string(j);
    out += "\n";
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        out += std::to_string(t + 1);
        for (std::size_t i = 0; i < n; ++i) out += "," + fmt_double(inputs[t][i]);
        for (std::size_t j = 0; j < m; ++j) out += "," + fmt_double(outputs[t][j]);
        out += "\n";
    }
    return out;
}

ParsedTraceCsv parse_trace_csv(const std::string& text) {
    ParsedTraceCsv out;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("parse_trace_csv: empty file");
    std::istringstream header(line);
    std::string tok;
    while (std::getline(header, tok, ',')) out.columns.push_back(tok);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        Vec row;
        row.reserve(out.columns.size());
        std::istringstream cells(line);
        while (std::getline(cells, tok, ',')) row.push_back(std::strtod(tok.c_str(), nullptr));
        if (row.size() != out.columns.size())
            throw std::invalid_argument("parse_trace_csv: ragged row");
        out.rows.push_back(std::move(row));
    }
    return out;
}

std::size_t ParsedTraceCsv::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return i;
    throw std::invalid_argument("trace csv has no column " + name);
}

std::vector<Vec> ParsedTraceCsv::vector_series(const std::string& prefix) const {
    std::vector<std::size_t> idx;
    for (std::size_t j = 1;; ++j) {
        const std::string name = prefix + "_" + std::to_string(j);
        bool found = false;
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) {
                idx.push_back(i);
                found = true;
                break;
            }
        if (!found) break;
    }
    if (idx.empty()) throw std::invalid_argument("trace csv has no columns " + prefix + "_*");
    std::vector<Vec> out(rows.size(), Vec(idx.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < idx.size(); ++c) out[r][c] = rows[r][idx[c]];
    return out;
}

std::string summary_to_json(const ExperimentTrace& trace, const ExperimentConfig& config) {
    nlohmann::json j;
    j["config"] = nlohmann::json::parse(trace.resolved_config_json);
    j["T"] = trace.outputs.size();
    j["wall_seconds"] = trace.wall_seconds;
    nlohmann::json preds = nlohmann::json::array();
    for (const PredictorTrace& p : trace.predictors) {
        nlohmann::json jp;
        jp["name"] = p.name;
        jp["total_loss"] = p.total_loss;
        const Vec filtered = median_filter(p.losses, config.metrics.median_window);
        jp["final_quartile_filtered_mse"] = final_quartile_mean(filtered);
        if (p.regret.has_value()) jp["regret_vs_comparator"] = *p.regret;
        jp["mean_inner_iterations"] = p.mean_inner_iterations;
        jp["nonconverged_steps"] = p.nonconverged_steps;
        if (config.metrics.exclude_warmup) {
            // skip the zero-padded warm-up of each learner (its tau steps)
            std::size_t tau = 0;
            for (const PredictorSpec& s : config.predictors)
                if (s.name == p.name) tau = s.tau;
            double total = 0.0;
            for (std::size_t t = tau; t < p.losses.size(); ++t) total += p.losses[t];
            jp["total_loss_excluding_warmup"] = total;
        }
        preds.push_back(std::move(jp));
    }
    j["predictors"] = preds;
    return j.dump(2);
}

namespace {

struct SvgSeries {
    std::string name;
    const Vec* values;
};

void append_panel(std::string& svg, const std::vector<SvgSeries>& series, double x0, double y0,
                  double width, double height, const std::string& title) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
    double lo = std::numeric_limits<double>::max();
    double hi = std::numeric_limits<double>::lowest();
    std::size_t T = 0;
    for (const SvgSeries& s : series) {
        T = std::max(T, s.values->size());
        for (double v : *s.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (T == 0) return;
    if (!(hi > lo)) hi = lo + 1.0;

    svg += "<rect x=\"" + fmt_double(x0) + "\" y=\"" + fmt_double(y0) + "\" width=\"" +
           fmt_double(width) + "\" height=\"" + fmt_double(height) +
           "\" fill=\"none\" stroke=\"#333333\"/>\n";
    svg += "<text x=\"" + fmt_double(x0 + 6) + "\" y=\"" + fmt_double(y0 + 16) +
           "\" font-size=\"13\" fill=\"#111111\">" + title + "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const Vec& v = *series[s].values;
        std::string pts;
        for (std::size_t t = 0; t < v.size(); ++t) {
            const double px = x0 + width * (v.size() > 1 ? double(t) / double(v.size() - 1) : 0.5);
            const double py = y0 + height - height * (v[t] - lo) / (hi - lo);
            pts += fmt_double(px) + "," + fmt_double(py) + " ";
        }
        const char* color = palette[s % (sizeof palette / sizeof palette[0])];
        svg += "<polyline fill=\"none\" stroke=\"";
        svg += color;
        svg += "\" stroke-width=\"1\" points=\"" + pts + "\"/>\n";
        svg += "<text x=\"" + fmt_double(x0 + width - 150) + "\" y=\"" +
               fmt_double(y0 + 16 + 14 * double(s)) + "\" font-size=\"11\" fill=\"";
        svg += color;
        svg += "\">" + series[s].name + "</text>\n";
    }
    // y-axis extremes
    svg += "<text x=\"" + fmt_double(x0 + 6) + "\" y=\"" + fmt_double(y0 + height - 4) +
           "\" font-size=\"10\" fill=\"#555555\">" + fmt_double(lo) + "</text>\n";
    svg += "<text x=\"" + fmt_double(x0 + 6) + "\" y=\"" + fmt_double(y0 + 30) +
           "\" font-size=\"10\" fill=\"#555555\">" + fmt_double(hi) + "</text>\n";
}

}  // namespace

std::string chart_to_svg(const ExperimentTrace& trace, const ExperimentConfig& config) {
    const std::size_t T = trace.outputs.size();
    const double width = 960, panel_h = 260, margin = 30;
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt_double(width) +
                      "\" height=\"" + fmt_double(2 * panel_h + 3 * margin) + "\">\n";

    Vec input_ch(T, 0.0), output_ch(T, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        input_ch[t] = trace.inputs[t].empty() ? 0.0 : trace.inputs[t][0];
        output_ch[t] = trace.outputs[t].empty() ? 0.0 : trace.outputs[t][0];
    }
    std::vector<Vec> pred_ch(trace.predictors.size(), Vec(T, 0.0));
    std::vector<Vec> filtered(trace.predictors.size());
    for (std::size_t p = 0; p < trace.predictors.size(); ++p) {
        for (std::size_t t = 0; t < T; ++t)
            pred_ch[p][t] = trace.predictors[p].predictions[t].empty()
                                ? 0.0
                                : trace.predictors[p].predictions[t][0];
        filtered[p] = median_filter(trace.predictors[p].losses, config.metrics.median_window);
    }

    std::vector<SvgSeries> signals{{"input[1]", &input_ch}, {"true y[1]", &output_ch}};
    for (std::size_t p = 0; p < trace.predictors.size(); ++p)
        signals.push_back({trace.predictors[p].name + " y[1]", &pred_ch[p]});
    append_panel(svg, signals, margin, margin, width - 2 * margin, panel_h, "signals (channel 1)");

    std::vector<SvgSeries> losses;
    for (std::size_t p = 0; p < trace.predictors.size(); ++p)
        losses.push_back({trace.predictors[p].name, &filtered[p]});
    if (!losses.empty())
        append_panel(svg, losses, margin, panel_h + 2 * margin, width - 2 * margin, panel_h,
                     "median-filtered loss (window " +
                         std::to_string(config.metrics.median_window) + ")");
    svg += "</svg>\n";
    return svg;
}

std::vector<std::string> emit_outputs(const ExperimentTrace& trace,
                                      const ExperimentConfig& config) {
    if (config.out_dir.empty())
        throw std::invalid_argument("emit_outputs: config.out_dir is empty");
    std::filesystem::create_directories(config.out_dir);
    const std::filesystem::path dir(config.out_dir);
    std::vector<std::string> paths;
    auto write_file = [&](const std::string& name, const std::string& content) {
        const std::filesystem::path p = dir / name;
        std::ofstream out(p, std::ios::binary);
        if (!out) throw std::runtime_error("emit_outputs: cannot write " + p.string());
        out << content;
        paths.push_back(p.string());
    };
    write_file("trace.csv", trace_to_csv(trace));
    write_file("summary.json", summary_to_json(trace, config));
    write_file("chart.svg", chart_to_svg(trace, config));
    return paths;
}

std::vector<std::string> run_sweep(const std::string& config_dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(config_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::invalid_argument("run_sweep: no *.json configs in " + config_dir);

    std::size_t cap = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("WAVECAST_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) cap = std::size_t(v);
    }
    cap = std::min(cap, files.size());

    std::vector<std::string> outputs;
    std::mutex mu;
    std::atomic<std::size_t> next{0};
    std::vector<std::string> errors;
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= files.size()) return;
            try {
                std::ifstream in(files[i], std::ios::binary);
                std::stringstream ss;
                ss << in.rdbuf();
                ExperimentConfig cfg = experiment_config_from_json(ss.str());
                if (cfg.out_dir.empty()) {
                    std::filesystem::path od = files[i];
                    od.replace_extension("");
                    cfg.out_dir = od.string() + "_out";
                }
                const ExperimentTrace trace = run_experiment(cfg);
                const std::vector<std::string> paths = emit_outputs(trace, cfg);
                std::lock_guard<std::mutex> lock(mu);
                outputs.insert(outputs.end(), paths.begin(), paths.end());
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(mu);
                errors.push_back(files[i].string() + ": " + e.what());
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < cap; ++w) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
    if (!errors.empty()) {
        std::string msg = "run_sweep: " + std::to_string(errors.size()) + " config(s) failed:";
        for (const std::string& e : errors) msg += "\n  " + e;
        throw std::runtime_error(msg);
    }
    std::sort(outputs.begin(), outputs.end());
    return outputs;
}

}  // namespace wavecast
