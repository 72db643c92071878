// Command implementations behind the `dfl` executable. Each command returns
// the process exit code: 0 success, 2 config/precondition, 3 bound
// violation on a certified run, 4 numeric failure.
#ifndef DFL_CLI_HPP
#define DFL_CLI_HPP

#include "dfl/config.hpp"
#include "dfl/engine.hpp"
#include "dfl/metrics.hpp"
#include "dfl/theory.hpp"
#include "dfl/topology.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dfl {

/// Everything derived from a config before the simulation starts.
struct Experiment {
    ExperimentConfig config;
    ServerGraph graph;
    MixingMatrix<double> mixing;
    std::vector<ClientDataset<double>> datasets;
    std::vector<std::vector<LossModel<double>>> models;
    std::vector<LossModel<double>> flat_models;
    VectorXd w_star;
    ServerMatrix<double> initial;
    RegionBall<double> region;
    SmoothnessConstants<double> constants;
    double sigma_a = 0.0;
    double step_gate = 0.0;
    double gamma = 0.0;
    std::optional<TheoryBounds<double>> bounds;
    /// Why `bounds` is empty.
    std::string bounds_unavailable;
};

ServerGraph build_graph(const TopologyConfig& topology);
std::vector<ClientDataset<double>> load_datasets(const ExperimentConfig& config, int num_servers);
/// Per-server initial models: w0 plus `spread` times independent normals.
ServerMatrix<double> initial_models(const ExperimentConfig& config, int num_servers, Eigen::Index dim);
Experiment prepare_experiment(const ExperimentConfig& config);

/// `<output_dir>/<hash prefix>-s<seed>`.
std::string run_directory(const ExperimentConfig& config);

struct SimulationOutcome {
    int exit_code = 0;
    std::string message;
    TrajectoryRecord<double> record;
    std::vector<EpochMetrics> metrics;
    std::optional<BoundCheck<double>> check;
};

/// Runs the engine for a prepared experiment; writes outputs into `dir` when
/// it is non-empty.
SimulationOutcome simulate_experiment(const Experiment& experiment, const std::string& dir);

int cmd_gen_data(const ExperimentConfig& config, std::ostream& out, std::ostream& err);
int cmd_simulate(const ExperimentConfig& config, std::ostream& out, std::ostream& err);
int cmd_bounds(const ExperimentConfig& config, std::ostream& out, std::ostream& err);
int cmd_sweep(const ExperimentConfig& config, const std::string& param, const std::vector<std::string>& values,
              int jobs, std::ostream& out, std::ostream& err);

/// Entry point of the `dfl` executable.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dfl

#endif  // DFL_CLI_HPP
