// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include "dfl/cli.hpp"
#include "dfl/datagen.hpp"
#include "dfl/engine.hpp"
#include "dfl/theory.hpp"
#include "dfl/topology.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace dfl;

namespace {

int failures = 0;
double worst_mean_shift = 0.0;
long mean_shift_runs = 0;
std::map<int, std::string> lines;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
    char head[64];
    std::snprintf(head, sizeof(head), "criterion %2d %s: ", id, pass ? "PASS" : "FAIL");
    lines[id] = head + name + "  [" + detail + "]";
    if (!pass) ++failures;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

void track_mean_shift(const TrajectoryRecord<double>& record) {
    for (const auto& snap : record.snapshots) worst_mean_shift = std::max(worst_mean_shift, snap.consensus_mean_shift);
    ++mean_shift_runs;
}

double disagreement_frobenius(const ServerMatrix<double>& w) {
    const VectorXd mean = row_mean(w);
    return (w.rowwise() - mean.transpose()).norm();
}

// ---------------------------------------------------------------------------

void default_setup_reproduction() {
    bool pass = true;
    std::ostringstream detail;
    for (double spread : {0.0, 1.0}) {
        ExperimentConfig config = parse_config("");
        config.run.seed = 2023;
        config.init.spread = spread;
        const Experiment e = prepare_experiment(config);
        const auto outcome = simulate_experiment(e, "");
        track_mean_shift(outcome.record);
        long settled = -1;
        for (const auto& m : outcome.metrics) {
            if (m.consensus_error < 1e-3) {
                if (settled < 0) settled = m.epoch;
            } else {
                settled = -1;
            }
        }
        const double gap = outcome.metrics.back().optimality_gap;
        const bool ok = e.bounds && settled >= 0 && settled <= 175 && gap <= e.bounds->epsilon &&
                        outcome.record.completed_epochs() == 200;
        pass = pass && ok;
        detail << "spread=" << spread << " consensus<1e-3 from epoch " << settled << ", gap_max " << fmt(gap)
               << " <= eps " << (e.bounds ? fmt(e.bounds->epsilon) : "n/a") << "; ";
    }
    report(1, "default-scale reproduction", pass, detail.str());
}

// ---------------------------------------------------------------------------

struct RandomRun {
    Experiment experiment;
    SimulationOutcome outcome;
    long epochs = 0;
};

ExperimentConfig random_config(RandomStream& rng, int index) {
    ExperimentConfig c = parse_config("");
    static const char* kinds[] = {"cycle", "star", "erdos-renyi"};
    c.topology.kind = kinds[index % 3];
    c.topology.servers = 2 + static_cast<int>(rng.next() % 7);
    c.topology.p = 0.4 + 0.4 * rng.uniform();
    c.topology.seed = rng.next() >> 1;
    c.data.clients_per_server = 1 + static_cast<int>(rng.next() % 5);
    c.data.dim = 2 + static_cast<int>(rng.next() % 4);
    c.data.points_per_client = 4 * c.data.dim + static_cast<int>(rng.next() % 20);
    c.data.w_true.clear();
    for (int k = 0; k < c.data.dim; ++k) c.data.w_true.push_back(3.0 * rng.normal());
    c.data.noise_std = 0.5 * rng.uniform();
    c.data.feature_std = 0.5 + rng.uniform();
    c.init.spread = 3.0 * rng.uniform();
    c.schedule.t_c = 1 + static_cast<int>(rng.next() % 40);
    c.schedule.t_s = 1 + static_cast<int>(rng.next() % 6);
    c.run.seed = rng.next() >> 1;
    return c;
}

std::vector<RandomRun> random_runs() {
    RandomStream rng(20240917);
    std::vector<RandomRun> runs;
    for (int k = 0; k < 20; ++k) {
        RandomRun r{prepare_experiment(random_config(rng, k)), {}, 0};
        if (!r.experiment.bounds) throw std::runtime_error("bounds unavailable: " + r.experiment.bounds_unavailable);
        r.epochs = epochs_to_settle(*r.experiment.bounds, 1e-12);
        r.experiment.config.run.epochs = r.epochs;
        r.outcome = simulate_experiment(r.experiment, "");
        track_mean_shift(r.outcome.record);
        runs.push_back(std::move(r));
    }
    return runs;
}

void bound_dominance(const std::vector<RandomRun>& runs) {
    int certified = 0;
    bool final_ok = true, l1 = true, l3 = true, l4 = true;
    double final_margin = -INFINITY, m1 = -INFINITY, m3 = -INFINITY, m4 = -INFINITY;
    long max_epochs = 0;
    std::string first;
    for (const auto& r : runs) {
        const auto& b = *r.experiment.bounds;
        const auto& check = *r.outcome.check;
        if (check.certified) ++certified;
        max_epochs = std::max(max_epochs, r.epochs);
        const long p = static_cast<long>(r.outcome.record.completed_epochs());
        const bool settled = std::pow(b.sigma_a, p) * b.delta0 < 1e-12 &&
                             std::pow(b.capital_lambda, p) * b.initial_avg_gap < 1e-12;
        const double gap = r.outcome.metrics.back().optimality_gap;
        final_margin = std::max(final_margin, gap - b.epsilon);
        final_ok = final_ok && settled && gap <= b.epsilon + 1e-9;
        l1 = l1 && check.deviation;
        l3 = l3 && check.drift;
        l4 = l4 && check.average;
        m1 = std::max(m1, check.deviation_margin);
        m3 = std::max(m3, check.drift_margin);
        m4 = std::max(m4, check.average_margin);
        if (first.empty()) first = check.first_violation;
    }
    const bool all_certified = certified == static_cast<int>(runs.size());
    const std::string cert = std::to_string(certified) + "/" + std::to_string(runs.size()) + " certified";
    report(2, "final gap within epsilon", all_certified && final_ok,
           cert + ", max(gap - eps) " + fmt(final_margin) + ", up to " + std::to_string(max_epochs) + " epochs");
    report(3, "server deviation bound per epoch", all_certified && l1, cert + ", max margin " + fmt(m1));
    report(4, "client drift bound", all_certified && l3, cert + ", max margin " + fmt(m3));
    report(5, "average optimality bound per epoch", all_certified && l4,
           cert + ", max margin " + fmt(m4) + (first.empty() ? "" : "; " + first));
}

// ---------------------------------------------------------------------------

void gradient_step_contraction() {
    RandomStream rng(606);
    double worst = -INFINITY;
    int checks = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int dim = 2 + trial % 4;
        const auto model = LossModel<double>::least_squares(testing::random_dataset(rng, 3 * dim, dim));
        const std::vector<LossModel<double>> one{model};
        const auto c = estimate_constants(std::span<const LossModel<double>>(one), VectorXd::Zero(dim), 1.0);
        const VectorXd w = testing::random_vector(rng, dim, 4.0);
        const VectorXd v = testing::random_vector(rng, dim, 4.0);
        for (double eta : {0.0, 0.5 / c.L, 1.0 / c.L}) {
            const double lhs = (w - v - eta * (loss_gradient(model, w) - loss_gradient(model, v))).norm();
            worst = std::max(worst, lhs - std::sqrt(1.0 - eta * c.mu) * (w - v).norm());
            ++checks;
        }
    }
    report(6, "gradient step contraction", worst <= 1e-10,
           std::to_string(checks) + " checks, max excess " + fmt(worst));
}

// ---------------------------------------------------------------------------

void degenerate_equivalence() {
    RandomStream rng(707);
    const ServerGraph single(1, {});
    const auto mixing = metropolis_weights<double>(single);

    const auto model = LossModel<double>::least_squares(testing::random_dataset(rng, 25, 3));
    const VectorXd w0 = testing::random_vector(rng, 3, 2.0);
    const double gamma = 0.05;
    auto fed = make_federation<double>({{model}}, single, mixing, EpochSchedule(1, 1), gamma, w0);
    const auto record = run(fed, 1000);
    track_mean_shift(record);
    VectorXd w = w0;
    long mismatches = 0;
    for (std::size_t k = 1; k <= 1000; ++k) {
        w = w - gamma * loss_gradient(model, w);
        if (VectorXd(record.snapshots[k].servers.row(0).transpose()) != w) ++mismatches;
    }

    std::vector<LossModel<double>> clients;
    for (int j = 0; j < 4; ++j) clients.push_back(LossModel<double>::least_squares(testing::random_dataset(rng, 15, 3, 0, j)));
    auto fedavg = make_federation<double>({clients}, single, mixing, EpochSchedule(7, 2), 0.02, w0);
    const auto avg_record = run(fedavg, 300);
    track_mean_shift(avg_record);
    VectorXd server = w0;
    double worst = 0.0;
    for (std::size_t p = 1; p <= 300; ++p) {
        VectorXd sum = VectorXd::Zero(3);
        for (const auto& c : clients) {
            VectorXd local = server;
            for (int s = 0; s < 7; ++s) local -= 0.02 * loss_gradient(c, local);
            sum += local;
        }
        server = sum / 4.0;
        worst = std::max(worst, (avg_record.snapshots[p].servers.row(0).transpose() - server).norm());
    }
    report(7, "degenerate equivalence", mismatches == 0 && worst <= 1e-12,
           "GD bitwise mismatches " + std::to_string(mismatches) + "/1000, federated averaging max diff " + fmt(worst));
}

// ---------------------------------------------------------------------------

double worst_ratio_excess(const ServerGraph& graph, int t_s, RandomStream& rng, int epochs, double* last_ratio) {
    const auto mixing = metropolis_weights<double>(graph);
    const double sigma = contraction_factor(mixing, t_s);
    const int m = graph.num_servers();
    std::vector<std::vector<LossModel<double>>> models;
    for (int i = 0; i < m; ++i)
        models.push_back({LossModel<double>::least_squares(testing::random_dataset(rng, 4, 2, i, 0))});
    ServerMatrix<double> init(m, 2);
    for (int i = 0; i < m; ++i) init.row(i) = testing::random_vector(rng, 2, 5.0).transpose();
    // Mean-zero start so the disagreement is not swamped by rounding of a large average.
    init.rowwise() -= row_mean(init).transpose();
    auto fed = make_federation(models, graph, mixing, EpochSchedule(1, t_s), 0.0, init);
    const auto record = run(fed, epochs);
    track_mean_shift(record);
    double worst = -INFINITY;
    for (std::size_t p = 1; p < record.snapshots.size(); ++p) {
        const double before = disagreement_frobenius(record.snapshots[p - 1].servers);
        if (before < 1e-9) break;
        const double ratio = disagreement_frobenius(record.snapshots[p].servers) / before;
        worst = std::max(worst, ratio - sigma);
        if (last_ratio) *last_ratio = ratio;
    }
    return worst;
}

void pure_consensus_rate() {
    RandomStream rng(808);
    double worst = -INFINITY;
    int graphs = 0;
    for (int k = 0; k < 30; ++k) {
        const int m = 2 + static_cast<int>(rng.next() % 9);
        const ServerGraph g = k % 3 == 0   ? ServerGraph::cycle(m)
                              : k % 3 == 1 ? ServerGraph::star(m)
                                           : ServerGraph::erdos_renyi(m, 0.5, rng.next());
        worst = std::max(worst, worst_ratio_excess(g, 1 + static_cast<int>(rng.next() % 4), rng, 60, nullptr));
        ++graphs;
    }
    double ratio = 0.0;
    worst = std::max(worst, worst_ratio_excess(ServerGraph::cycle(4), 1, rng, 40, &ratio));
    report(8, "pure consensus rate", worst <= 1e-10 && std::abs(ratio - 1.0 / 3.0) <= 1e-6,
           std::to_string(graphs + 1) + " graphs, max(ratio - sigma) " + fmt(worst) + ", 4-cycle ratio - 1/3 = " +
               fmt(ratio - 1.0 / 3.0));
}

// ---------------------------------------------------------------------------

void gradient_check() {
    RandomStream rng(1010);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int dim = 1 + trial % 6;
        const auto data = testing::random_dataset(rng, 2 + static_cast<int>(rng.next() % 30), dim);
        const auto model = trial % 2 ? LossModel<double>::ridge(data, rng.uniform())
                                     : LossModel<double>::least_squares(data);
        const VectorXd w = testing::random_vector(rng, dim, 3.0);
        const VectorXd g = loss_gradient(model, w);
        const VectorXd fd = testing::finite_difference_gradient(model, w);
        worst = std::max(worst, (g - fd).norm() / std::max(g.norm(), 1e-12));
    }
    report(10, "gradient check", worst < 1e-5, "100 instances, max relative error " + fmt(worst));
}

// ---------------------------------------------------------------------------

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void determinism() {
    const fs::path base = fs::temp_directory_path() / "dfl_acceptance_determinism";
    fs::remove_all(base);
    ExperimentConfig config = parse_config("");
    config.run.seed = 77;
    config.init.spread = 1.0;
    config.schedule.t_c = 50;
    config.schedule.t_s = 3;
    config.topology.kind = "erdos-renyi";
    config.topology.servers = 6;
    std::vector<std::string> files;
    for (int threads : {1, 1, 4, 4}) {
        config.run.threads = threads;
        const Experiment e = prepare_experiment(config);
        const auto dir = base / ("run" + std::to_string(files.size()));
        const auto outcome = simulate_experiment(e, dir.string());
        track_mean_shift(outcome.record);
        files.push_back(read_file(dir / "metrics.csv"));
    }
    fs::remove_all(base);
    const bool same = !files[0].empty() && std::all_of(files.begin(), files.end(), [&](const auto& f) { return f == files[0]; });
    report(11, "determinism", same, "4 runs (2 serial, 2 with 4 threads), " + std::to_string(files[0].size()) +
                                        " bytes each, identical=" + (same ? "yes" : "no"));
}

}  // namespace

int main() {
    const auto start = std::chrono::steady_clock::now();
    try {
        default_setup_reproduction();
        bound_dominance(random_runs());
        gradient_step_contraction();
        degenerate_equivalence();
        pure_consensus_rate();
        gradient_check();
        determinism();
        report(9, "average preserved by consensus", worst_mean_shift < 1e-12,
               std::to_string(mean_shift_runs) + " runs, max shift " + fmt(worst_mean_shift));
    } catch (const std::exception& e) {
        for (const auto& [id, line] : lines) std::printf("%s\n", line.c_str());
        std::printf("acceptance aborted: %s\n", e.what());
        return 1;
    }
    for (const auto& [id, line] : lines) std::printf("%s\n", line.c_str());
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s: %d failing criteria (%.1f s)\n", failures ? "FAIL" : "PASS", failures, seconds);
    return failures ? 1 : 0;
}
