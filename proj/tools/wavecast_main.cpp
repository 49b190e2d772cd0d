// wavecast CLI: filter banks, simulation, predictor compilation and
// online-prediction experiments over synthetic linear dynamical systems.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "wavecast/compile.hpp"
#include "wavecast/harness.hpp"
#include "wavecast/hankel.hpp"
#include "wavecast/lds.hpp"
#include "wavecast/learner.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"online prediction for linear dynamical systems via spectral filtering"};
    app.require_subcommand(1);

    // filters
    auto* cmd_filters = app.add_subcommand("filters", "compute a wave-filter bank");
    std::size_t horizon = 100;
    std::size_t count = 25;
    std::string filters_out;
    cmd_filters->add_option("--horizon", horizon, "Hankel horizon T")->required();
    cmd_filters->add_option("--count", count, "number of filters k")->required();
    cmd_filters->add_option("--out", filters_out, "output JSON path")->required();

    // simulate
    auto* cmd_sim = app.add_subcommand("simulate", "simulate a system from a config");
    std::string sim_config, sim_out;
    cmd_sim->add_option("--config", sim_config, "experiment config JSON")->required();
    cmd_sim->add_option("--out", sim_out, "output directory")->required();

    // compile
    auto* cmd_compile = app.add_subcommand("compile", "compile a predictor from known matrices");
    std::string compile_system, compile_mode = "wavefilter", compile_out;
    std::size_t compile_k = 25, compile_w = 100, compile_horizon = 256;
    cmd_compile->add_option("--system", compile_system, "system JSON path")->required();
    cmd_compile->add_option("--mode", compile_mode, "ar | wavefilter");
    cmd_compile->add_option("--k", compile_k, "filter count (wavefilter mode)");
    cmd_compile->add_option("--W", compile_w, "phase count (wavefilter mode)");
    cmd_compile->add_option("--horizon", compile_horizon, "filter-bank horizon");
    cmd_compile->add_option("--out", compile_out, "output JSON path")->required();

    // run
    auto* cmd_run = app.add_subcommand("run", "run an online-prediction experiment");
    std::string run_config;
    cmd_run->add_option("--config", run_config, "experiment config JSON")->required();

    // sweep
    auto* cmd_sweep = app.add_subcommand("sweep", "run every config in a directory");
    std::string sweep_dir;
    cmd_sweep->add_option("--configs", sweep_dir, "directory of config JSONs")->required();

    // regret
    auto* cmd_regret = app.add_subcommand("regret", "regret of a trace vs a comparator trace");
    std::string regret_trace, regret_comp, regret_pred, regret_comp_pred;
    cmd_regret->add_option("--trace", regret_trace, "trace CSV")->required();
    cmd_regret->add_option("--comparator", regret_comp, "comparator trace CSV")->required();
    cmd_regret->add_option("--predictor", regret_pred, "predictor name in --trace");
    cmd_regret->add_option("--comparator-predictor", regret_comp_pred,
                           "predictor name in --comparator (default: same as --predictor)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_filters->parsed()) {
            const wavecast::FilterBank bank = wavecast::compute_filter_bank(horizon, count);
            write_file(filters_out, wavecast::filter_bank_to_json(bank));
            std::cout << "wrote " << filters_out << "\n";
        } else if (cmd_sim->parsed()) {
            wavecast::ExperimentConfig cfg =
                wavecast::experiment_config_from_json(read_file(sim_config));
            cfg.predictors.clear();  // simulation only
            cfg.metrics.comparator.clear();
            cfg.out_dir = sim_out;
            const wavecast::ExperimentTrace trace = wavecast::run_experiment(cfg);
            write_file((std::filesystem::path(sim_out) / "trace.csv").string(),
                       wavecast::simulation_to_csv(trace.inputs, trace.outputs));
            nlohmann::json sidecar;
            sidecar["config"] = nlohmann::json::parse(trace.resolved_config_json);
            sidecar["seed"] = cfg.seed;
            sidecar["system"] = nlohmann::json::parse(trace.system_json);
            sidecar["noise"] = nlohmann::json::parse(trace.resolved_config_json).at("noise");
            write_file((std::filesystem::path(sim_out) / "trace.json").string(), sidecar.dump(2));
            std::cout << "wrote " << sim_out << "/trace.csv\n";
        } else if (cmd_compile->parsed()) {
            const wavecast::LinearDynamicalSystem sys =
                wavecast::system_from_json(read_file(compile_system));
            nlohmann::json out;
            if (compile_mode == "ar") {
                const wavecast::PhasePolynomial p =
                    wavecast::poly_from_roots(wavecast::eigenvalues(sys.A));
                const wavecast::ArCompiled ar = wavecast::ar_compile(sys, p);
                const wavecast::PseudoLds theta =
                    ar.to_pseudo_lds(sys.input_dim(), sys.output_dim());
                out["theta"] = nlohmann::json::parse(wavecast::pseudo_lds_to_json(theta));
                out["mode"] = "ar";
            } else if (compile_mode == "wavefilter") {
                wavecast::CVec phases;
                for (const wavecast::Complex& a : wavecast::eigenvalues(sys.A)) {
                    const double r = std::abs(a);
                    phases.push_back(r > 0 ? a / r : wavecast::Complex(1.0, 0.0));
                }
                const wavecast::PhasePolynomial p = wavecast::min_phase_polynomial(phases);
                const wavecast::FilterBank bank =
                    wavecast::compute_filter_bank(compile_horizon, compile_k);
                const wavecast::CompiledApprox compiled =
                    wavecast::wavefilter_compile(sys, p, bank, compile_w);
                out["theta"] = nlohmann::json::parse(wavecast::pseudo_lds_to_json(compiled.theta));
                out["report"] =
                    nlohmann::json::parse(wavecast::compile_report_to_json(compiled.report));
                out["mode"] = "wavefilter";
            } else {
                throw std::invalid_argument("compile: mode must be ar or wavefilter");
            }
            write_file(compile_out, out.dump(2));
            std::cout << "wrote " << compile_out << "\n";
        } else if (cmd_run->parsed()) {
            const wavecast::ExperimentConfig cfg =
                wavecast::experiment_config_from_json(read_file(run_config));
            if (cfg.out_dir.empty())
                throw std::invalid_argument("run: config must set out_dir");
            const wavecast::ExperimentTrace trace = wavecast::run_experiment(cfg);
            for (const std::string& p : wavecast::emit_outputs(trace, cfg))
                std::cout << "wrote " << p << "\n";
        } else if (cmd_sweep->parsed()) {
            for (const std::string& p : wavecast::run_sweep(sweep_dir))
                std::cout << "wrote " << p << "\n";
        } else if (cmd_regret->parsed()) {
            const wavecast::ParsedTraceCsv ours = wavecast::parse_trace_csv(read_file(regret_trace));
            const wavecast::ParsedTraceCsv comp = wavecast::parse_trace_csv(read_file(regret_comp));
            auto first_predictor = [](const wavecast::ParsedTraceCsv& csv) -> std::string {
                for (const std::string& c : csv.columns)
                    if (c.rfind("loss_", 0) == 0) return c.substr(5);
                throw std::invalid_argument("trace csv has no predictor columns");
            };
            const std::string pname = regret_pred.empty() ? first_predictor(ours) : regret_pred;
            const std::string cname =
                regret_comp_pred.empty()
                    ? (regret_pred.empty() ? first_predictor(comp) : regret_pred)
                    : regret_comp_pred;
            const double regret = wavecast::regret_accounting(
                ours.vector_series("yhat_" + pname), comp.vector_series("yhat_" + cname),
                ours.vector_series("y"));
            nlohmann::json out{{"regret", regret}, {"predictor", pname}, {"comparator", cname}};
            std::cout << out.dump(2) << "\n";
        }
    } catch (const std::exception& e) {
        nlohmann::json err{{"error", {{"message", e.what()}}}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 0;
}
