// Per-epoch diagnostics derived from a trajectory and their CSV export.
#ifndef DFL_METRICS_HPP
#define DFL_METRICS_HPP

#include "dfl/core.hpp"
#include "dfl/engine.hpp"
#include "dfl/theory.hpp"

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dfl {

struct EpochMetrics {
    long epoch = 0;
    double consensus_error = 0;       // max_i |w^i_p - wbar_p|
    double mean_consensus_error = 0;  // mean_i |w^i_p - wbar_p|
    double optimality_gap = 0;        // max_i |w^i_p - w*|
    double avg_gap = 0;               // |wbar_p - w*|
    double lemma1_bound = 0;
    double lemma4_bound = 0;
    double epsilon = 0;
    double objective_value = 0;       // f(wbar_p)
};

inline constexpr const char* kMetricsHeader =
    "epoch,consensus_err_max,consensus_err_mean,gap_max,gap_avg,lemma1_bound,lemma4_bound,epsilon,objective";

enum class MetricsFormat { csv, gnuplot };

/// One entry per snapshot. Bound columns are NaN when `bounds` is absent.
std::vector<EpochMetrics> compute_metrics(const TrajectoryRecord<double>& record, const VectorXd& w_star,
                                          const std::optional<TheoryBounds<double>>& bounds,
                                          std::span<const LossModel<double>> models);

void export_csv(std::ostream& out, std::span<const EpochMetrics> metrics, MetricsFormat format = MetricsFormat::csv);
void export_csv(const std::string& path, std::span<const EpochMetrics> metrics,
                MetricsFormat format = MetricsFormat::csv);

/// Parses a file written by export_csv in CSV format.
std::vector<EpochMetrics> parse_metrics_csv(std::istream& in);

}  // namespace dfl

#endif  // DFL_METRICS_HPP
