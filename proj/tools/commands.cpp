#include "commands.hpp"

#include <cmath>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "pbrt/distribution.hpp"
#include "pbrt/driver.hpp"
#include "pbrt/errors.hpp"
#include "pbrt/io.hpp"
#include "pbrt/simgen.hpp"
#include "pbrt/training.hpp"

namespace pbrt::cli {

namespace fs = std::filesystem;

namespace {

struct SimulateArgs {
    std::string out;
    std::string config;
    std::optional<std::uint64_t> seed;
};

struct TrainArgs {
    std::string data;
    std::string out;
    int restarts = 3;
    bool block_diagonal = false;
    std::uint64_t seed = 42;
};

struct UpdateArgs {
    std::string model;
    std::string state;
    std::string event;
};

struct QueryArgs {
    std::string model;
    std::string state;
    std::string stimulus;
    std::optional<double> t_star;
    std::string percentiles = "10,50,90";
    bool conservative = true;
    std::string grid;
    std::string out;
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto a = item.find_first_not_of(" \t");
        const auto b = item.find_last_not_of(" \t");
        out.push_back(a == std::string::npos ? std::string() : item.substr(a, b - a + 1));
    }
    return out;
}

double parse_real(const std::string& s, const char* what) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (s.empty() || used != s.size() || !std::isfinite(v)) {
        throw InvalidInput(std::string("invalid ") + what + " '" + s + "'");
    }
    return v;
}

fs::path sidecar_path(const fs::path& csv) {
    fs::path p = csv;
    p.replace_extension(".truth.json");
    return p;
}

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
    SimConfig config = a.config.empty() ? default_config()
                                        : io::sim_config_from_json(io::read_file(a.config));
    if (a.seed) {
        config.seed = *a.seed;
    }
    const SimResult sim = generate(config);
    io::atomic_write(a.out, io::observations_to_csv(sim.training));
    io::atomic_write(sidecar_path(a.out), io::gamma_truth_to_json(sim.gamma_truth));
    out << sim.training.num_observations() << "\n";
    return kOk;
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    std::istringstream in(io::read_file(a.data));
    const TrainingSet ts = io::training_set_from_rows(io::parse_observation_csv(in));
    if (ts.drivers.size() < 2) {
        throw InvalidInput("at least 2 drivers required");
    }
    FitOptions opts;
    opts.restarts = a.restarts;
    opts.block_diagonal = a.block_diagonal;
    opts.seed = a.seed;
    const TrainedModel model = fit(ts, opts);
    io::atomic_write(a.out, io::model_to_json(model));
    out << "loglik," << io::format_number(model.fit_info.loglik) << "\n";
    out << "converged," << (model.fit_info.converged ? "true" : "false") << "\n";
    if (!model.fit_info.converged) {
        err << "warning: optimizer did not converge after " << model.fit_info.iterations
            << " iterations; model written anyway\n";
        return kNotConverged;
    }
    return kOk;
}

TrainedModel load_model(const std::string& path) {
    return io::model_from_json(io::read_file(path));
}

int cmd_update(const UpdateArgs& a, std::ostream& out) {
    const TrainedModel model = load_model(a.model);
    const fs::path state_path(a.state);
    DriverState state = fs::exists(state_path)
                            ? io::driver_state_from_json(io::read_file(state_path), model.stimuli)
                            : DriverState(state_path.stem().string());

    const auto fields = split_list(a.event);
    if (fields.size() != 3) {
        throw InvalidInput("event must be 'stimulus,headway,brt'");
    }
    Observation obs;
    obs.driver_id = state.driver_id();
    obs.stimulus = model.stimuli.id(fields[0]);
    obs.headway_s = parse_real(fields[1], "headway");
    obs.brt_s = parse_real(fields[2], "brt");
    state.add_observation(obs);

    const BlupResult& blup = state.blup(model);
    io::atomic_write(state_path, io::driver_state_to_json(state, model.stimuli));
    out << "n," << state.size() << "\n";
    out << "gamma_norm," << io::format_number(blup.gamma_hat.norm()) << "\n";
    return kOk;
}

/// The driver's BLUP, recomputed from the stored observations; the population
/// prior when no state file is given.
BlupResult query_blup(const QueryArgs& a, const TrainedModel& model) {
    if (a.state.empty()) {
        return compute_blup({}, model);
    }
    const DriverState state = io::driver_state_from_json(io::read_file(a.state), model.stimuli);
    const auto obs = state.observations();
    return compute_blup(obs, model);
}

int cmd_pbrt(const QueryArgs& a, std::ostream& out, std::ostream& err) {
    const TrainedModel model = load_model(a.model);
    const StimulusId stim = model.stimuli.id(a.stimulus);
    const double t_star = a.t_star.value_or(model.t_star);
    std::vector<double> qs;
    for (const auto& item : split_list(a.percentiles)) {
        const double pct = parse_real(item, "percentile");
        if (!(pct > 0.0 && pct < 100.0)) {
            throw InvalidQuantile("percentiles must lie strictly between 0 and 100");
        }
        qs.push_back(pct / 100.0);
    }
    const PbrtEstimate est = estimate_pbrt(model, query_blup(a, model), stim, t_star);
    out << "q,percentile_naive,percentile_conservative\n";
    for (double q : qs) {
        out << io::format_number(q) << ',' << io::format_number(percentile(est, q, false)) << ','
            << io::format_number(percentile(est, q, true)) << "\n";
    }
    err << "log-PBRT mean " << io::format_number(est.mu) << ", variance "
        << io::format_number(est.variance(a.conservative))
        << (a.conservative ? " (conservative)" : " (naive)") << "\n";
    return kOk;
}

int cmd_curve(const QueryArgs& a, std::ostream& out) {
    const auto parts = split_list(a.grid);
    if (parts.size() != 3) {
        throw InvalidInput("grid must be 'min,max,steps'");
    }
    const double lo = parse_real(parts[0], "grid min");
    const double hi = parse_real(parts[1], "grid max");
    const double steps_real = parse_real(parts[2], "grid steps");
    if (!(lo > 0.0) || !(hi > lo) || steps_real < 2.0 || steps_real != std::floor(steps_real) ||
        steps_real > 1e7) {
        throw InvalidInput("grid needs 0 < min < max and an integer steps >= 2");
    }
    const auto steps = static_cast<std::size_t>(steps_real);
    std::vector<double> grid(steps);
    for (std::size_t i = 0; i < steps; ++i) {
        grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps - 1);
    }

    const TrainedModel model = load_model(a.model);
    const StimulusId stim = model.stimuli.id(a.stimulus);
    const PbrtEstimate est =
        estimate_pbrt(model, query_blup(a, model), stim, a.t_star.value_or(model.t_star));
    const auto naive = density_curve(est, false, grid);
    const auto cons = density_curve(est, true, grid);
    std::string csv = "t_seconds,pdf_naive,pdf_conservative\n";
    for (std::size_t i = 0; i < steps; ++i) {
        csv += io::format_number(grid[i]) + ',' + io::format_number(naive[i].second) + ',' +
               io::format_number(cons[i].second) + '\n';
    }
    io::atomic_write(a.out, csv);
    out << steps << "\n";
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Potential brake response time estimation"};
    app.name("pbrt");
    app.require_subcommand(1, 1);

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic training study");
    simulate->add_option("--out", sim.out, "Observation CSV to write")->required();
    simulate->add_option("--config", sim.config, "Simulation config JSON");
    simulate->add_option("--seed", sim.seed, "Override the config seed");

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "Fit the population model");
    train_cmd->add_option("--data", train.data, "Observation CSV")->required();
    train_cmd->add_option("--out", train.out, "Model JSON to write")->required();
    train_cmd->add_option("--restarts", train.restarts, "Optimizer restarts")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    train_cmd->add_flag("--block-diagonal", train.block_diagonal,
                        "One random-effect block per stimulus");
    train_cmd->add_option("--seed", train.seed, "Seed for restart perturbations")
        ->capture_default_str();

    UpdateArgs upd;
    auto* update = app.add_subcommand("update", "Append a braking event to a driver state");
    update->add_option("--model", upd.model, "Model JSON")->required();
    update->add_option("--state", upd.state, "Driver state JSON (created if absent)")->required();
    update->add_option("--event", upd.event, "stimulus,headway,brt")->required();

    QueryArgs pq;
    auto* pbrt_cmd = app.add_subcommand("pbrt", "Print PBRT percentiles");
    pbrt_cmd->add_option("--model", pq.model, "Model JSON")->required();
    pbrt_cmd->add_option("--state", pq.state, "Driver state JSON");
    pbrt_cmd->add_option("--stimulus", pq.stimulus, "Stimulus name")->required();
    pbrt_cmd->add_option("--t-star", pq.t_star, "Reference headway in seconds");
    pbrt_cmd->add_option("--percentiles", pq.percentiles, "Comma-separated percentiles")
        ->capture_default_str();
    pbrt_cmd->add_option("--conservative", pq.conservative, "Report the conservative variance")
        ->capture_default_str();

    QueryArgs cq;
    auto* curve = app.add_subcommand("curve", "Write PBRT density curves");
    curve->add_option("--model", cq.model, "Model JSON")->required();
    curve->add_option("--state", cq.state, "Driver state JSON");
    curve->add_option("--stimulus", cq.stimulus, "Stimulus name")->required();
    curve->add_option("--grid", cq.grid, "min,max,steps")->required();
    curve->add_option("--out", cq.out, "Density CSV to write")->required();

    std::vector<std::string> argv_store;
    argv_store.reserve(args.size() + 1);
    argv_store.emplace_back("pbrt");
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : argv_store) {
        argv.push_back(s.data());
    }

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kValidation;
    }

    try {
        if (simulate->parsed()) {
            return cmd_simulate(sim, out);
        }
        if (train_cmd->parsed()) {
            return cmd_train(train, out, err);
        }
        if (update->parsed()) {
            return cmd_update(upd, out);
        }
        if (pbrt_cmd->parsed()) {
            return cmd_pbrt(pq, out, err);
        }
        return cmd_curve(cq, out);
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kIo;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kIo;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return kInternal;
    }
}

}  // namespace pbrt::cli
