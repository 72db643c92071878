#include "dfl/cli.hpp"
#include "dfl/datagen.hpp"
#include "dfl/random.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace dfl {

namespace fs = std::filesystem;

ServerGraph build_graph(const TopologyConfig& t) {
    if (t.kind == "complete") return ServerGraph::complete(t.servers);
    if (t.kind == "cycle") return ServerGraph::cycle(t.servers);
    if (t.kind == "path") return ServerGraph::path(t.servers);
    if (t.kind == "star") return ServerGraph::star(t.servers);
    if (t.kind == "erdos-renyi") return ServerGraph::erdos_renyi(t.servers, t.p, t.seed);
    if (t.kind == "edge-list") return ServerGraph::load_edge_list(t.path, t.servers);
    throw ConfigError("unknown topology kind " + t.kind);
}

std::vector<ClientDataset<double>> load_datasets(const ExperimentConfig& config, int num_servers) {
    if (config.data.source == "synthetic") {
        auto spec = config.synthetic_spec();
        spec.m = num_servers;
        return generate(spec);
    }
    auto datasets = read_dataset_csv(config.data.path);
    int servers = 0;
    for (const auto& d : datasets) servers = std::max(servers, d.server_id() + 1);
    if (servers != num_servers)
        throw ConfigError("dataset " + config.data.path + " has " + std::to_string(servers) +
                          " servers but the topology has " + std::to_string(num_servers));
    return datasets;
}

ServerMatrix<double> initial_models(const ExperimentConfig& config, int num_servers, Eigen::Index dim) {
    VectorXd w0 = VectorXd::Zero(dim);
    if (!config.init.w0.empty()) {
        if (static_cast<Eigen::Index>(config.init.w0.size()) != dim)
            throw ConfigError("init.w0 has " + std::to_string(config.init.w0.size()) + " entries, data dimension is " +
                              std::to_string(dim));
        for (Eigen::Index k = 0; k < dim; ++k) w0(k) = config.init.w0[static_cast<std::size_t>(k)];
    }
    ServerMatrix<double> initial(num_servers, dim);
    const std::uint64_t init_seed = splitmix64(config.run.seed ^ 0x696e6974ULL);
    for (int i = 0; i < num_servers; ++i) {
        initial.row(i) = w0.transpose();
        if (config.init.spread > 0.0) {
            RandomStream rng(stream_seed(init_seed, static_cast<std::uint64_t>(i)));
            for (Eigen::Index k = 0; k < dim; ++k) initial(i, k) += config.init.spread * rng.normal();
        }
    }
    return initial;
}

Experiment prepare_experiment(const ExperimentConfig& config) {
    ServerGraph graph = build_graph(config.topology);
    MixingMatrix<double> mixing = metropolis_weights<double>(graph);
    auto datasets = load_datasets(config, graph.num_servers());
    auto models = build_models(datasets, config.loss.kind, config.loss.ridge);
    std::vector<LossModel<double>> flat;
    for (const auto& server : models) flat.insert(flat.end(), server.begin(), server.end());
    const double ridge = config.loss.kind == LossKind::ridge ? config.loss.ridge : 0.0;
    VectorXd w_star = optimal_model(datasets, ridge);
    ServerMatrix<double> initial = initial_models(config, graph.num_servers(), w_star.size());

    RegionBall<double> region{row_mean(initial), 0.0};
    if (config.loss.region_radius) {
        region.radius = *config.loss.region_radius;
    } else {
        double far = 0.0;
        for (Eigen::Index i = 0; i < initial.rows(); ++i)
            far = std::max(far, (initial.row(i).transpose() - w_star).norm());
        region.radius = far > 0.0 ? 4.0 * far : 1.0;
    }
    const auto constants =
        estimate_constants(std::span<const LossModel<double>>(flat), region.center, region.radius);
    const double sigma_a = contraction_factor(mixing, config.schedule.t_s);
    const double gate = max_step_size(constants, config.schedule.t_c);
    const double gamma = config.step.gamma ? *config.step.gamma : 0.9 * gate;

    std::optional<TheoryBounds<double>> bounds;
    std::string unavailable;
    try {
        bounds = make_bounds(constants, sigma_a, gamma, EpochSchedule(config.schedule.t_c, config.schedule.t_s),
                             graph.num_servers(), disagreement_norm(initial), (region.center - w_star).norm());
    } catch (const PreconditionError& e) {
        unavailable = e.what();
    }
    return Experiment{config,         std::move(graph), std::move(mixing), std::move(datasets),
                      std::move(models), std::move(flat), std::move(w_star), std::move(initial),
                      std::move(region), constants,       sigma_a,           gate,
                      gamma,          std::move(bounds), std::move(unavailable)};
}

std::string run_directory(const ExperimentConfig& config) {
    return (fs::path(config.run.output_dir) / (config_hash(config).substr(0, 12) + "-s" + std::to_string(config.run.seed)))
        .string();
}

namespace {

std::string join_vector(const VectorXd& v) {
    std::string out;
    for (Eigen::Index k = 0; k < v.size(); ++k) out += (k ? "," : "") + format_real(v(k));
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

void write_models(const fs::path& path, const ServerMatrix<double>& servers) {
    std::ostringstream out;
    out << "server";
    for (Eigen::Index k = 0; k < servers.cols(); ++k) out << ",w" << k + 1;
    out << '\n';
    for (Eigen::Index i = 0; i < servers.rows(); ++i) {
        out << i + 1;
        for (Eigen::Index k = 0; k < servers.cols(); ++k) out << ',' << format_real(servers(i, k));
        out << '\n';
    }
    write_text(path, out.str());
}

void write_iterates(const fs::path& path, const TrajectoryRecord<double>& record, const Experiment& e) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "epoch,phase,step,server,client";
    for (Eigen::Index k = 0; k < e.w_star.size(); ++k) out << ",w" << k + 1;
    out << '\n';
    for (const auto& snap : record.snapshots) {
        if (!snap.log) continue;
        std::size_t slot = 0;
        for (std::size_t i = 0; i < e.models.size(); ++i) {
            for (std::size_t j = 0; j < e.models[i].size(); ++j, ++slot) {
                const auto& it = snap.log->client_iterates[slot];
                for (Eigen::Index s = 0; s < it.rows(); ++s) {
                    out << snap.epoch << ",client," << s << ',' << i + 1 << ',' << j + 1;
                    for (Eigen::Index k = 0; k < it.cols(); ++k) out << ',' << format_real(it(s, k));
                    out << '\n';
                }
            }
        }
        for (std::size_t t = 0; t < snap.log->consensus_iterates.size(); ++t) {
            const auto& w = snap.log->consensus_iterates[t];
            for (Eigen::Index i = 0; i < w.rows(); ++i) {
                out << snap.epoch << ",server," << t << ',' << i + 1 << ",0";
                for (Eigen::Index k = 0; k < w.cols(); ++k) out << ',' << format_real(w(i, k));
                out << '\n';
            }
        }
    }
}

std::string gate_message(const Experiment& e) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "step size gamma = " << e.gamma << " violates gamma < min{1/(L T_C), 1/(mu T_C)} = " << e.step_gate
        << " (mu = " << e.constants.mu << ", L = " << e.constants.L << ", T_C = " << e.config.schedule.t_c
        << "); pass --override-step-gate to run anyway";
    return msg.str();
}

}  // namespace

SimulationOutcome simulate_experiment(const Experiment& e, const std::string& dir) {
    SimulationOutcome outcome;
    const bool above_gate = e.gamma != 0.0 && !(e.gamma < e.step_gate);
    if (above_gate && !e.config.flags.override_step_gate) throw ConfigError(gate_message(e));

    auto fed = make_federation(e.models, e.graph, e.mixing,
                               EpochSchedule(e.config.schedule.t_c, e.config.schedule.t_s), e.gamma, e.initial);
    RunOptions<double> opts;
    opts.threads = e.config.run.threads;
    opts.record_iterates = e.config.flags.record_iterates;
    opts.override_step_gate = true;
    opts.reference = e.w_star;
    opts.region = e.region;
    if (e.config.run.stop_tolerance > 0.0) opts.stop_tolerance = e.config.run.stop_tolerance;

    outcome.record = run(fed, e.config.run.epochs, opts);
    outcome.metrics = compute_metrics(outcome.record, e.w_star, e.bounds, e.flat_models);
    if (e.bounds) outcome.check = check_record(outcome.record, *e.bounds, e.w_star);

    const auto& last = outcome.metrics.back();
    std::string verdict = "unavailable";
    if (outcome.check) {
        if (!outcome.check->certified)
            verdict = "skipped";
        else
            verdict = outcome.check->passed() ? "pass" : "fail";
    }
    std::ostringstream summary;
    summary << "epochs=" << outcome.record.completed_epochs() << " consensus_err=" << format_real(last.consensus_error)
            << " gap_max=" << format_real(last.optimality_gap)
            << " epsilon=" << (e.bounds ? format_real(e.bounds->epsilon) : std::string("nan"))
            << " within_epsilon=" << (e.bounds && last.optimality_gap <= e.bounds->epsilon + 1e-9 ? "yes" : "no")
            << " certified=" << (outcome.record.certified() ? "yes" : "no") << " bounds=" << verdict;
    if (!dir.empty()) summary << " run_dir=" << dir;
    outcome.message = summary.str();
    if (outcome.check && outcome.check->certified && !outcome.check->passed()) {
        outcome.exit_code = 3;
        outcome.message += "\n" + outcome.check->first_violation;
    }

    if (!dir.empty()) {
        fs::create_directories(dir);
        write_text(fs::path(dir) / "config.toml", to_toml(e.config));
        const auto format = e.config.flags.gnuplot ? MetricsFormat::gnuplot : MetricsFormat::csv;
        export_csv((fs::path(dir) / (e.config.flags.gnuplot ? "metrics.dat" : "metrics.csv")).string(),
                   outcome.metrics, format);
        write_models(fs::path(dir) / "models.csv", outcome.record.snapshots.back().servers);
        if (e.config.flags.record_iterates) write_iterates(fs::path(dir) / "iterates.csv", outcome.record, e);
        write_text(fs::path(dir) / "summary.txt", outcome.message + "\n");
    }
    return outcome;
}

namespace {

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        err << "dfl: " << e.what() << '\n';
        return e.exit_code();
    } catch (const fs::filesystem_error& e) {
        err << "dfl: i/o error: " << e.what() << '\n';
        return 2;
    }
}

void print_bounds(std::ostream& out, const Experiment& e) {
    out << "m=" << e.graph.num_servers() << '\n'
        << "n=" << e.models.front().size() << '\n'
        << "t_c=" << e.config.schedule.t_c << '\n'
        << "t_s=" << e.config.schedule.t_s << '\n'
        << "mu=" << format_real(e.constants.mu) << '\n'
        << "L=" << format_real(e.constants.L) << '\n'
        << "theta=" << format_real(e.constants.theta) << '\n'
        << "region_radius=" << format_real(e.constants.region_radius) << '\n'
        << "w_star=" << join_vector(e.w_star) << '\n'
        << "max_step_size=" << format_real(e.step_gate) << '\n'
        << "gamma=" << format_real(e.gamma) << '\n'
        << "sigma_a=" << format_real(e.sigma_a) << '\n';
    if (e.bounds) {
        out << "lambda=" << format_real(e.bounds->lambda) << '\n'
            << "capital_lambda=" << format_real(e.bounds->capital_lambda) << '\n'
            << "delta0=" << format_real(e.bounds->delta0) << '\n'
            << "y0=" << format_real(e.bounds->y0) << '\n'
            << "epsilon=" << format_real(e.bounds->epsilon) << '\n';
    }
}

}  // namespace

int cmd_gen_data(const ExperimentConfig& config, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (config.data.source != "synthetic") throw ConfigError("gen-data needs data.source = \"synthetic\"");
        const ServerGraph graph = build_graph(config.topology);
        auto spec = config.synthetic_spec();
        spec.m = graph.num_servers();
        const auto datasets = generate(spec);
        const std::string dir = run_directory(config);
        fs::create_directories(dir);
        const auto path = fs::path(dir) / "dataset.csv";
        write_dataset_csv(path.string(), datasets);

        std::ostringstream summary;
        std::size_t rows = 0;
        for (const auto& d : datasets) rows += static_cast<std::size_t>(d.size());
        summary << "dataset=" << path.string() << '\n' << "rows=" << rows << '\n';
        try {
            const Experiment e = prepare_experiment(config);
            summary << "w_star=" << join_vector(e.w_star) << '\n'
                    << "mu=" << format_real(e.constants.mu) << '\n'
                    << "L=" << format_real(e.constants.L) << '\n'
                    << "theta=" << format_real(e.constants.theta) << '\n'
                    << "region_radius=" << format_real(e.constants.region_radius) << '\n';
        } catch (const AssumptionViolation& e) {
            summary << "constants=unavailable (" << e.what() << ")\n";
        }
        write_text(fs::path(dir) / "summary.txt", summary.str());
        out << summary.str();
        return 0;
    });
}

int cmd_simulate(const ExperimentConfig& config, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Experiment e = prepare_experiment(config);
        const auto outcome = simulate_experiment(e, run_directory(config));
        (outcome.exit_code == 0 ? out : err) << outcome.message << '\n';
        return outcome.exit_code;
    });
}

int cmd_bounds(const ExperimentConfig& config, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Experiment e = prepare_experiment(config);
        if (e.gamma != 0.0 && !(e.gamma < e.step_gate) && !config.flags.override_step_gate)
            throw ConfigError(gate_message(e));
        print_bounds(out, e);
        if (!e.bounds) {
            err << "dfl: bounds unavailable: " << e.bounds_unavailable << '\n';
            return 2;
        }
        return 0;
    });
}

int cmd_sweep(const ExperimentConfig& config, const std::string& param, const std::vector<std::string>& values,
              int jobs, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (param != "gamma" && param != "t_c" && param != "t_s" && param != "topology")
            throw ConfigError("sweep parameter must be one of gamma, t_c, t_s, topology");
        if (values.empty()) throw ConfigError("sweep needs at least one value");
        std::vector<ExperimentConfig> configs;
        for (const auto& v : values) {
            const std::string key = param == "gamma"      ? "step.gamma"
                                    : param == "topology" ? "topology.kind"
                                                          : "schedule." + param;
            const std::string literal = param == "topology" || v == "auto" ? "\"" + v + "\"" : v;
            configs.push_back(parse_config(to_toml(config), {key + "=" + literal}));
        }
        const std::string base = run_directory(config);
        struct Row {
            int exit_code = 0;
            std::string message;
            std::vector<EpochMetrics> metrics;
            double sigma_a = std::numeric_limits<double>::quiet_NaN();
            double epsilon = std::numeric_limits<double>::quiet_NaN();
        };
        std::vector<Row> rows(values.size());
        parallel_for(values.size(), jobs, [&](std::size_t k) {
            std::ostringstream sink;
            rows[k].exit_code = guarded(sink, [&] {
                const Experiment e = prepare_experiment(configs[k]);
                rows[k].sigma_a = e.sigma_a;
                if (e.bounds) rows[k].epsilon = e.bounds->epsilon;
                auto outcome = simulate_experiment(e, (fs::path(base) / (param + "-" + values[k])).string());
                rows[k].message = outcome.message;
                rows[k].metrics = std::move(outcome.metrics);
                return outcome.exit_code;
            });
            if (rows[k].message.empty()) rows[k].message = sink.str();
            while (!rows[k].message.empty() && rows[k].message.back() == '\n') rows[k].message.pop_back();
        });

        fs::create_directories(base);
        std::ostringstream combined;
        combined << param << ',' << kMetricsHeader << '\n';
        std::ostringstream table;
        table << param << ",exit_code,sigma_a,epsilon,final_consensus_err,final_gap_max\n";
        int worst = 0;
        for (std::size_t k = 0; k < values.size(); ++k) {
            const auto& row = rows[k];
            std::ostringstream block;
            export_csv(block, row.metrics);
            std::string line;
            std::istringstream lines(block.str());
            std::getline(lines, line);
            while (std::getline(lines, line)) combined << values[k] << ',' << line << '\n';
            const double cons = row.metrics.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                    : row.metrics.back().consensus_error;
            const double gap = row.metrics.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                   : row.metrics.back().optimality_gap;
            table << values[k] << ',' << row.exit_code << ',' << format_real(row.sigma_a) << ','
                  << format_real(row.epsilon) << ',' << format_real(cons) << ',' << format_real(gap) << '\n';
            out << param << '=' << values[k] << " exit=" << row.exit_code << ' ' << row.message << '\n';
            worst = std::max(worst, row.exit_code);
        }
        write_text(fs::path(base) / "sweep.csv", combined.str());
        write_text(fs::path(base) / "sweep_summary.csv", table.str());
        out << "sweep=" << (fs::path(base) / "sweep.csv").string() << '\n';
        return worst;
    });
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Distributed federated learning simulator and bound checker", "dfl"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> sets;
    bool print_config = false;
    bool override_gate = false;
    bool record_iterates = false;
    bool gnuplot = false;
    std::optional<long> epochs;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> output_dir;
    std::optional<std::string> gamma;
    std::optional<int> t_c;
    std::optional<int> t_s;
    std::optional<std::string> topology;
    std::string sweep_param;
    std::vector<std::string> sweep_values;
    int jobs = 1;

    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "TOML experiment config")->required();
        sub->add_option("--set", sets, "Override a config key: section.key=value");
        sub->add_flag("--print-config", print_config, "Print the normalized config and exit");
        sub->add_flag("--override-step-gate", override_gate, "flags.override_step_gate = true");
        sub->add_flag("--record-iterates", record_iterates, "flags.record_iterates = true");
        sub->add_flag("--gnuplot", gnuplot, "flags.gnuplot = true");
        sub->add_option("--epochs", epochs, "run.epochs");
        sub->add_option("--seed", seed, "run.seed");
        sub->add_option("--threads", threads, "run.threads");
        sub->add_option("--output-dir", output_dir, "run.output_dir");
        sub->add_option("--gamma", gamma, "step.gamma (number or auto)");
        sub->add_option("--t-c", t_c, "schedule.t_c");
        sub->add_option("--t-s", t_s, "schedule.t_s");
        sub->add_option("--topology", topology, "topology.kind");
    };
    auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset and report w*, mu, L, theta");
    auto* sim = app.add_subcommand("simulate", "Run the federation and check every bound");
    auto* bnd = app.add_subcommand("bounds", "Report sigma_A, lambda, Lambda, Y_0, epsilon without simulating");
    auto* swp = app.add_subcommand("sweep", "Run one simulation per parameter value");
    for (auto* sub : {gen, sim, bnd, swp}) add_common(sub);
    swp->add_option("--param", sweep_param, "gamma | t_c | t_s | topology")->required();
    swp->add_option("--values", sweep_values, "Comma-separated values")->required()->delimiter(',');
    swp->add_option("--jobs", jobs, "Sweep points run concurrently")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    return guarded(err, [&] {
        ConfigOverrides overrides = sets;
        if (override_gate) overrides.push_back("flags.override_step_gate=true");
        if (record_iterates) overrides.push_back("flags.record_iterates=true");
        if (gnuplot) overrides.push_back("flags.gnuplot=true");
        if (epochs) overrides.push_back("run.epochs=" + std::to_string(*epochs));
        if (seed) overrides.push_back("run.seed=" + std::to_string(*seed));
        if (threads) overrides.push_back("run.threads=" + std::to_string(*threads));
        if (output_dir) overrides.push_back("run.output_dir=\"" + *output_dir + "\"");
        if (gamma) overrides.push_back("step.gamma=" + (*gamma == "auto" ? std::string("\"auto\"") : *gamma));
        if (t_c) overrides.push_back("schedule.t_c=" + std::to_string(*t_c));
        if (t_s) overrides.push_back("schedule.t_s=" + std::to_string(*t_s));
        if (topology) overrides.push_back("topology.kind=\"" + *topology + "\"");
        const ExperimentConfig config = load_config(config_path, overrides);
        if (print_config) {
            out << to_toml(config);
            return 0;
        }
        if (gen->parsed()) return cmd_gen_data(config, out, err);
        if (sim->parsed()) return cmd_simulate(config, out, err);
        if (bnd->parsed()) return cmd_bounds(config, out, err);
        return cmd_sweep(config, sweep_param, sweep_values, jobs, out, err);
    });
}

}  // namespace dfl
