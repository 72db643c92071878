// Experiment configuration: a single TOML file, schema-checked before use,
// with command-line overrides applied on top.
#ifndef DFL_CONFIG_HPP
#define DFL_CONFIG_HPP

#include "dfl/core.hpp"
#include "dfl/datagen.hpp"
#include "dfl/losses.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dfl {

struct TopologyConfig {
    /// complete | cycle | path | star | erdos-renyi | edge-list
    std::string kind = "cycle";
    int servers = 5;
    double p = 0.5;
    std::uint64_t seed = 1;
    std::string path;
};

struct ScheduleConfig {
    int t_c = 250;
    int t_s = 25;
};

struct StepConfig {
    /// Empty means `auto`: 0.9 times the step-size gate.
    std::optional<double> gamma;
};

struct LossConfig {
    LossKind kind = LossKind::least_squares;
    double ridge = 0.0;
    /// Empty means `auto`: 4 max_i |w^i_0 - w*|.
    std::optional<double> region_radius;
};

struct DataConfig {
    /// synthetic | csv
    std::string source = "synthetic";
    std::string path;
    int clients_per_server = 5;
    int points_per_client = 100;
    int dim = 2;
    std::vector<double> w_true{5.0, 2.0};
    double noise_std = 0.1;
    double feature_std = 1.0;
};

struct InitConfig {
    /// Shared initial model; empty means the zero vector.
    std::vector<double> w0;
    /// Std of per-server Gaussian perturbations of w0 (0 keeps w0 shared).
    double spread = 0.0;
};

struct RunConfig {
    long epochs = 200;
    /// 0 disables early stopping.
    double stop_tolerance = 0.0;
    std::uint64_t seed = 42;
    std::string output_dir = "runs";
    int threads = 1;
};

struct FlagsConfig {
    bool record_iterates = false;
    bool override_step_gate = false;
    bool gnuplot = false;
};

struct ExperimentConfig {
    TopologyConfig topology;
    ScheduleConfig schedule;
    StepConfig step;
    LossConfig loss;
    DataConfig data;
    InitConfig init;
    RunConfig run;
    FlagsConfig flags;

    /// Synthetic data spec; its seed is the run seed.
    SyntheticSpec synthetic_spec() const;
};

/// `section.key=value` assignments applied on top of the file. Values are
/// read as TOML literals, falling back to bare strings.
using ConfigOverrides = std::vector<std::string>;

/// Parses TOML text. Unknown tables or keys, wrong types, and out-of-range
/// values raise ConfigError.
ExperimentConfig parse_config(const std::string& toml_text, const ConfigOverrides& overrides = {});
ExperimentConfig load_config(const std::string& path, const ConfigOverrides& overrides = {});

/// Canonical TOML: every key, fixed order, full-precision numbers.
std::string to_toml(const ExperimentConfig& config);

/// FNV-1a 64 of the canonical TOML, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

}  // namespace dfl

#endif  // DFL_CONFIG_HPP
