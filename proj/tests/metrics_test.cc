#include "dfl/datagen.hpp"
#include "dfl/metrics.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

namespace dfl {
namespace {

TrajectoryRecord<double> single_snapshot(const ServerMatrix<double>& servers, long epoch = 0) {
    EpochSnapshot<double> snap;
    snap.epoch = epoch;
    snap.servers = servers;
    snap.average = row_mean(servers);
    TrajectoryRecord<double> record;
    record.snapshots.push_back(snap);
    return record;
}

TEST(ComputeMetrics, AllAtOptimumIsZero) {
    const VectorXd w_star = (VectorXd(2) << 1.5, -2.0).finished();
    ServerMatrix<double> servers(3, 2);
    for (int i = 0; i < 3; ++i) servers.row(i) = w_star.transpose();
    const auto m = compute_metrics(single_snapshot(servers), w_star, std::nullopt, {});
    ASSERT_EQ(m.size(), 1u);
    EXPECT_EQ(m[0].consensus_error, 0.0);
    EXPECT_EQ(m[0].mean_consensus_error, 0.0);
    EXPECT_EQ(m[0].optimality_gap, 0.0);
    EXPECT_EQ(m[0].avg_gap, 0.0);
    EXPECT_TRUE(std::isnan(m[0].epsilon));
    EXPECT_TRUE(std::isnan(m[0].objective_value));
}

TEST(ComputeMetrics, SymmetricPair) {
    const VectorXd w_star = VectorXd::Zero(2);
    ServerMatrix<double> servers(2, 2);
    servers << 1, 0, -1, 0;
    const auto m = compute_metrics(single_snapshot(servers), w_star, std::nullopt, {});
    EXPECT_EQ(m[0].consensus_error, 1.0);
    EXPECT_EQ(m[0].mean_consensus_error, 1.0);
    EXPECT_EQ(m[0].optimality_gap, 1.0);
    EXPECT_EQ(m[0].avg_gap, 0.0);
}

TEST(ComputeMetrics, RejectsMismatchAndEmpty) {
    EXPECT_THROW(compute_metrics(TrajectoryRecord<double>{}, VectorXd::Zero(2), std::nullopt, {}), InvalidInput);
    EXPECT_THROW(compute_metrics(single_snapshot(ServerMatrix<double>::Zero(2, 3)), VectorXd::Zero(2), std::nullopt,
                                 {}),
                 InvalidInput);
}

TEST(ComputeMetrics, BoundsAndObjectiveColumns) {
    const VectorXd w_star = VectorXd::Zero(2);
    const auto model = LossModel<double>::least_squares(ClientDataset<double>(MatrixXd::Identity(2, 2), VectorXd::Zero(2), 0, 0));
    const std::vector<LossModel<double>> models{model};
    ServerMatrix<double> servers(1, 2);
    servers << 2, 0;
    const auto b = make_bounds(SmoothnessConstants<double>{0.5, 0.5, 1.0, 1.0}, 0.0, 0.1, EpochSchedule(2, 1), 1,
                               0.0, 2.0);
    const auto m = compute_metrics(single_snapshot(servers, 3), w_star, b, models);
    EXPECT_EQ(m[0].epoch, 3);
    EXPECT_EQ(m[0].lemma1_bound, server_deviation_bound(b, 3));
    EXPECT_EQ(m[0].lemma4_bound, average_optimality_bound(b, 3));
    EXPECT_EQ(m[0].epsilon, epsilon_bound(b));
    EXPECT_DOUBLE_EQ(m[0].objective_value, 0.5 * 0.5 * 4.0);
}

TEST(ExportCsv, EmptyIsHeaderOnly) {
    std::ostringstream out;
    export_csv(out, std::span<const EpochMetrics>{});
    EXPECT_EQ(out.str(), std::string(kMetricsHeader) + "\n");
}

TEST(ExportCsv, RowPerSnapshotAndExactParseBack) {
    RandomStream rng(8);
    std::vector<EpochMetrics> rows;
    for (long p = 0; p < 4; ++p) {
        EpochMetrics m;
        m.epoch = p;
        m.consensus_error = rng.uniform() / 3;
        m.mean_consensus_error = m.consensus_error * rng.uniform();
        m.optimality_gap = rng.normal();
        m.avg_gap = 1e-300 * rng.uniform();
        m.lemma1_bound = 1.0 / 7.0;
        m.lemma4_bound = std::numeric_limits<double>::quiet_NaN();
        m.epsilon = 12345.678901234567;
        m.objective_value = std::nextafter(1.0, 2.0);
        rows.push_back(m);
    }
    std::stringstream buffer;
    export_csv(buffer, rows);
    std::string text = buffer.str();
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
    const auto back = parse_metrics_csv(buffer);
    ASSERT_EQ(back.size(), rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        EXPECT_EQ(back[k].epoch, rows[k].epoch);
        EXPECT_EQ(back[k].consensus_error, rows[k].consensus_error);
        EXPECT_EQ(back[k].mean_consensus_error, rows[k].mean_consensus_error);
        EXPECT_EQ(back[k].optimality_gap, rows[k].optimality_gap);
        EXPECT_EQ(back[k].avg_gap, rows[k].avg_gap);
        EXPECT_EQ(back[k].lemma1_bound, rows[k].lemma1_bound);
        EXPECT_TRUE(std::isnan(back[k].lemma4_bound));
        EXPECT_EQ(back[k].epsilon, rows[k].epsilon);
        EXPECT_EQ(back[k].objective_value, rows[k].objective_value);
    }
}

TEST(ExportCsv, GnuplotLayout) {
    std::vector<EpochMetrics> rows(2);
    rows[1].epoch = 1;
    std::ostringstream out;
    export_csv(out, rows, MetricsFormat::gnuplot);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line.rfind("# epoch consensus_err_max", 0), 0u);
    std::getline(in, line);
    EXPECT_EQ(line.find(','), std::string::npos);
    EXPECT_EQ(std::count(line.begin(), line.end(), ' '), 8);
}

TEST(ParseMetricsCsv, RejectsBadInput) {
    std::istringstream bad_header("epoch,x\n");
    EXPECT_THROW(parse_metrics_csv(bad_header), InvalidInput);
    std::istringstream short_row(std::string(kMetricsHeader) + "\n0,1,2\n");
    EXPECT_THROW(parse_metrics_csv(short_row), InvalidInput);
}

TEST(ComputeMetrics, TriangleConsistencyOnSimulation) {
    SyntheticSpec spec;
    spec.m = 4;
    spec.n = 2;
    spec.d_points = 20;
    spec.seed = 31;
    const auto data = generate(spec);
    const VectorXd w_star = optimal_model(data);
    const auto models = build_models(data, LossKind::least_squares, 0.0);
    const auto graph = ServerGraph::cycle(4);
    RandomStream rng(4);
    ServerMatrix<double> init(4, 2);
    for (int i = 0; i < 4; ++i) init.row(i) = testing::random_vector(rng, 2, 3.0).transpose();
    auto fed = make_federation(models, graph, metropolis_weights<double>(graph), EpochSchedule(5, 2), 0.01, init);
    const auto record = run(fed, 30, RunOptions<double>{});
    const auto metrics = compute_metrics(record, w_star, std::nullopt, {});
    ASSERT_EQ(metrics.size(), 31u);
    for (const auto& m : metrics) {
        EXPECT_LE(m.optimality_gap, m.consensus_error + m.avg_gap + 1e-12);
        EXPECT_LE(m.mean_consensus_error, m.consensus_error + 1e-15);
        EXPECT_LE(m.avg_gap, m.optimality_gap + 1e-12);
    }
}

}  // namespace
}  // namespace dfl
