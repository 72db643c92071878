#include "dfl/metrics.hpp"
#include "dfl/datagen.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace dfl {

std::vector<EpochMetrics> compute_metrics(const TrajectoryRecord<double>& record, const VectorXd& w_star,
                                          const std::optional<TheoryBounds<double>>& bounds,
                                          std::span<const LossModel<double>> models) {
    if (record.snapshots.empty()) throw InvalidInput("trajectory record is empty");
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<EpochMetrics> out;
    out.reserve(record.snapshots.size());
    for (const auto& snap : record.snapshots) {
        if (w_star.size() != snap.servers.cols())
            throw InvalidInput("w* has dimension " + std::to_string(w_star.size()) + ", models have " +
                               std::to_string(snap.servers.cols()));
        EpochMetrics row;
        row.epoch = snap.epoch;
        double sum_err = 0.0;
        for (Eigen::Index i = 0; i < snap.servers.rows(); ++i) {
            const double err = (snap.servers.row(i).transpose() - snap.average).norm();
            const double gap = (snap.servers.row(i).transpose() - w_star).norm();
            row.consensus_error = std::max(row.consensus_error, err);
            row.optimality_gap = std::max(row.optimality_gap, gap);
            sum_err += err;
        }
        row.mean_consensus_error = sum_err / double(snap.servers.rows());
        row.avg_gap = (snap.average - w_star).norm();
        row.lemma1_bound = bounds ? server_deviation_bound(*bounds, snap.epoch) : nan;
        row.lemma4_bound = bounds ? average_optimality_bound(*bounds, snap.epoch) : nan;
        row.epsilon = bounds ? epsilon_bound(*bounds) : nan;
        row.objective_value = models.empty() ? nan : global_objective(models, snap.average);
        out.push_back(row);
    }
    return out;
}

void export_csv(std::ostream& out, std::span<const EpochMetrics> metrics, MetricsFormat format) {
    const char sep = format == MetricsFormat::csv ? ',' : ' ';
    if (format == MetricsFormat::gnuplot) out << "# ";
    std::string header = kMetricsHeader;
    if (format == MetricsFormat::gnuplot)
        for (auto& ch : header)
            if (ch == ',') ch = ' ';
    out << header << '\n';
    for (const auto& m : metrics) {
        out << m.epoch;
        for (double v : {m.consensus_error, m.mean_consensus_error, m.optimality_gap, m.avg_gap, m.lemma1_bound,
                         m.lemma4_bound, m.epsilon, m.objective_value})
            out << sep << format_real(v);
        out << '\n';
    }
}

void export_csv(const std::string& path, std::span<const EpochMetrics> metrics, MetricsFormat format) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    export_csv(out, metrics, format);
    out.flush();
    if (!out) throw IoError("write failed for " + path);
}

std::vector<EpochMetrics> parse_metrics_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader) throw InvalidInput("unexpected metrics CSV header");
    std::vector<EpochMetrics> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string cell;
        std::vector<double> values;
        while (std::getline(fields, cell, ',')) values.push_back(std::strtod(cell.c_str(), nullptr));
        if (values.size() != 9) throw InvalidInput("metrics CSV row must have 9 columns");
        EpochMetrics m;
        m.epoch = static_cast<long>(values[0]);
        m.consensus_error = values[1];
        m.mean_consensus_error = values[2];
        m.optimality_gap = values[3];
        m.avg_gap = values[4];
        m.lemma1_bound = values[5];
        m.lemma4_bound = values[6];
        m.epsilon = values[7];
        m.objective_value = values[8];
        out.push_back(m);
    }
    return out;
}

}  // namespace dfl
