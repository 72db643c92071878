// Lockstep simulation of the distributed federated learning loop: every epoch
// runs T_C local gradient steps on each client, averages clients into their
// server, mixes server models T_S times with the consensus matrix, and
// broadcasts each server model back to its clients.
#ifndef DFL_ENGINE_HPP
#define DFL_ENGINE_HPP

#include "dfl/core.hpp"
#include "dfl/losses.hpp"
#include "dfl/parallel.hpp"
#include "dfl/topology.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace dfl {

struct EpochSchedule {
    int t_c = 1;
    int t_s = 1;

    EpochSchedule() = default;
    EpochSchedule(int client_iterations, int server_iterations) : t_c(client_iterations), t_s(server_iterations) {
        if (t_c < 1) throw InvalidInput("client iterations per epoch must be >= 1");
        if (t_s < 1) throw InvalidInput("server iterations per epoch must be >= 1");
    }
    int t_e() const { return t_c + t_s; }
};

template <typename Scalar = double>
struct ClientState {
    Vector<Scalar> w;
    LossModel<Scalar> model;
};

template <typename Scalar = double>
struct ServerState {
    Vector<Scalar> w;
    std::vector<ClientState<Scalar>> clients;
    std::vector<int> neighbors;
};

template <typename Scalar = double>
struct FederationState {
    std::vector<ServerState<Scalar>> servers;
    MixingMatrix<Scalar> mixing;
    EpochSchedule schedule;
    Scalar gamma{};
    long epoch = 0;

    Eigen::Index dim() const { return servers.front().w.size(); }
    int num_servers() const { return static_cast<int>(servers.size()); }

    /// Stacked server models W (row i is w^i).
    ServerMatrix<Scalar> server_matrix() const {
        ServerMatrix<Scalar> w(num_servers(), dim());
        for (int i = 0; i < num_servers(); ++i) w.row(i) = servers[static_cast<std::size_t>(i)].w.transpose();
        return w;
    }

    std::vector<LossModel<Scalar>> all_models() const {
        std::vector<LossModel<Scalar>> out;
        for (const auto& s : servers)
            for (const auto& c : s.clients) out.push_back(c.model);
        return out;
    }
};

/// Builds a post-broadcast federation: client models start at their server's
/// model. `initial` holds one row per server.
template <typename Scalar>
FederationState<Scalar> make_federation(std::vector<std::vector<LossModel<Scalar>>> models_by_server,
                                        const ServerGraph& graph, MixingMatrix<Scalar> mixing,
                                        EpochSchedule schedule, Scalar gamma, const ServerMatrix<Scalar>& initial) {
    const auto m = static_cast<Eigen::Index>(models_by_server.size());
    if (m < 1) throw InvalidInput("federation needs at least one server");
    if (graph.num_servers() != m || mixing.size() != m)
        throw InvalidInput("graph/mixing size does not match the number of servers");
    if (initial.rows() != m) throw InvalidInput("initial models must have one row per server");
    if (!(gamma >= Scalar(0)) || !std::isfinite(static_cast<double>(gamma)))
        throw InvalidInput("step size must be finite and nonnegative");
    const Eigen::Index d = initial.cols();
    FederationState<Scalar> fed{{}, std::move(mixing), schedule, gamma, 0};
    for (Eigen::Index i = 0; i < m; ++i) {
        auto& models = models_by_server[static_cast<std::size_t>(i)];
        if (models.empty()) throw InvalidInput("server " + std::to_string(i + 1) + " has no clients");
        ServerState<Scalar> server;
        server.w = initial.row(i).transpose();
        server.neighbors = graph.neighbors(static_cast<int>(i));
        for (auto& model : models) {
            if (model.dataset.dim() != d) throw InvalidInput("client data dimension differs from model dimension");
            server.clients.push_back({server.w, std::move(model)});
        }
        fed.servers.push_back(std::move(server));
    }
    return fed;
}

template <typename Scalar>
FederationState<Scalar> make_federation(std::vector<std::vector<LossModel<Scalar>>> models_by_server,
                                        const ServerGraph& graph, MixingMatrix<Scalar> mixing,
                                        EpochSchedule schedule, Scalar gamma, const Vector<Scalar>& shared_init) {
    ServerMatrix<Scalar> initial(static_cast<Eigen::Index>(models_by_server.size()), shared_init.size());
    initial.rowwise() = shared_init.transpose();
    return make_federation(std::move(models_by_server), graph, std::move(mixing), schedule, gamma, initial);
}

/// Ball on which the gradient bound theta is certified.
template <typename Scalar = double>
struct RegionBall {
    Vector<Scalar> center;
    Scalar radius{};
};

/// Every iterate of one epoch, kept only when requested.
template <typename Scalar = double>
struct PhaseLog {
    /// One (T_C + 1) x d matrix per client in (server, client) row-major order;
    /// row s is the client model after s local steps.
    std::vector<Matrix<Scalar>> client_iterates;
    /// T_S + 1 stacked server matrices; entry 0 is the post-aggregation state.
    std::vector<ServerMatrix<Scalar>> consensus_iterates;
};

template <typename Scalar = double>
struct EpochSnapshot {
    long epoch = 0;
    ServerMatrix<Scalar> servers;
    Vector<Scalar> average;
    /// |w^i_p - wbar_p| per server.
    Vector<Scalar> consensus_error;
    /// |w^i_p - w*| per server; empty when no reference model was supplied.
    Vector<Scalar> optimality_gap;
    // Phase diagnostics; zero for the initial snapshot.
    Scalar max_client_drift{0};
    Scalar max_gradient_norm{0};
    Scalar max_region_distance{0};
    Scalar consensus_mean_shift{0};
    std::optional<PhaseLog<Scalar>> log;
};

template <typename Scalar = double>
struct TrajectoryRecord {
    std::vector<EpochSnapshot<Scalar>> snapshots;
    /// First epoch with an iterate outside the certification ball, or -1.
    long region_escape_epoch = -1;

    bool certified() const { return region_escape_epoch < 0; }
    std::size_t completed_epochs() const { return snapshots.empty() ? 0 : snapshots.size() - 1; }
};

template <typename Scalar = double>
struct RunOptions {
    int threads = 1;
    bool record_iterates = false;
    bool override_step_gate = false;
    std::optional<Vector<Scalar>> reference;
    std::optional<RegionBall<Scalar>> region;
    std::optional<Scalar> stop_tolerance;
};

/// Smallest and largest Hessian eigenvalue across the given clients.
template <typename Scalar>
std::pair<Scalar, Scalar> curvature_range(std::span<const LossModel<Scalar>> models) {
    Scalar lo = std::numeric_limits<Scalar>::infinity();
    Scalar hi{0};
    for (const auto& m : models) {
        const Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(loss_hessian(m), Eigen::EigenvaluesOnly);
        lo = std::min(lo, eig.eigenvalues().minCoeff());
        hi = std::max(hi, eig.eigenvalues().maxCoeff());
    }
    return {lo, hi};
}

/// min{1/(L T_C), 1/(mu T_C)}; gamma must be strictly below it.
template <typename Scalar>
Scalar step_size_gate(Scalar mu, Scalar L, int t_c) {
    return std::min(Scalar(1) / (L * Scalar(t_c)), Scalar(1) / (mu * Scalar(t_c)));
}

/// One local gradient step w <- w - gamma grad f(w).
template <typename Scalar>
ClientState<Scalar> client_local_update(ClientState<Scalar> c, Scalar gamma, long epoch = -1, long server = -1,
                                        long client = -1) {
    if (!(gamma >= Scalar(0))) throw InvalidInput("step size must be nonnegative");
    const Vector<Scalar> grad = loss_gradient(c.model, c.w);
    if (!grad.allFinite()) throw NumericOverflow("non-finite client gradient", epoch, server, client);
    c.w -= gamma * grad;
    if (!c.w.allFinite()) throw NumericOverflow("non-finite client model", epoch, server, client);
    return c;
}

/// (1/N) sum_j w^{ij}, summed in client-index order.
template <typename Scalar>
Vector<Scalar> aggregate(std::span<const Vector<Scalar>> client_models) {
    if (client_models.empty()) throw InvalidInput("cannot aggregate an empty set of client models");
    Vector<Scalar> sum = client_models.front();
    for (std::size_t j = 1; j < client_models.size(); ++j) {
        if (client_models[j].size() != sum.size()) throw InvalidInput("client models disagree on dimension");
        sum += client_models[j];
    }
    return sum / Scalar(client_models.size());
}

template <typename Scalar>
Vector<Scalar> aggregate(const ServerState<Scalar>&, std::span<const Vector<Scalar>> client_models) {
    return aggregate(client_models);
}

/// Row average (1/M) 1'W, summed in row order.
template <typename Scalar>
Vector<Scalar> row_mean(const ServerMatrix<Scalar>& w) {
    Vector<Scalar> sum = w.row(0).transpose();
    for (Eigen::Index i = 1; i < w.rows(); ++i) sum += w.row(i).transpose();
    return sum / Scalar(w.rows());
}

namespace detail {

template <typename Scalar>
struct ClientPhaseStats {
    Scalar drift{0};
    Scalar grad{0};
    Scalar region{0};
    std::exception_ptr error;
};

template <typename Scalar>
void run_one_client(ClientState<Scalar>& c, const Vector<Scalar>& start, Scalar gamma, int t_c, long epoch,
                    long server, long client, const RunOptions<Scalar>& opts, ClientPhaseStats<Scalar>& stats,
                    Matrix<Scalar>* log) {
    try {
        if (log) {
            log->resize(t_c + 1, start.size());
            log->row(0) = c.w.transpose();
        }
        for (int s = 0; s < t_c; ++s) {
            const Vector<Scalar> grad = loss_gradient(c.model, c.w);
            if (!grad.allFinite()) throw NumericOverflow("non-finite client gradient", epoch, server, client);
            stats.grad = std::max(stats.grad, grad.norm());
            c.w -= gamma * grad;
            if (!c.w.allFinite()) throw NumericOverflow("non-finite client model", epoch, server, client);
            stats.drift = std::max(stats.drift, (c.w - start).norm());
            if (opts.region) stats.region = std::max(stats.region, (c.w - opts.region->center).norm());
            if (log) log->row(s + 1) = c.w.transpose();
        }
    } catch (...) {
        stats.error = std::current_exception();
    }
}

}  // namespace detail

/// Runs T_C local steps on every client of `s` and returns the final client
/// models in client order. Clients must start from the server model.
template <typename Scalar>
std::vector<Vector<Scalar>> run_client_phase(ServerState<Scalar>& s, const EpochSchedule& schedule, Scalar gamma,
                                             int threads = 1) {
    for (const auto& c : s.clients)
        if (c.w != s.w) throw PreconditionError("client model differs from its server model before the client phase");
    std::vector<detail::ClientPhaseStats<Scalar>> stats(s.clients.size());
    const RunOptions<Scalar> opts;
    parallel_for(s.clients.size(), threads, [&](std::size_t j) {
        detail::run_one_client(s.clients[j], s.w, gamma, schedule.t_c, -1, -1, static_cast<long>(j), opts, stats[j],
                               static_cast<Matrix<Scalar>*>(nullptr));
    });
    for (const auto& st : stats)
        if (st.error) std::rethrow_exception(st.error);
    std::vector<Vector<Scalar>> out;
    out.reserve(s.clients.size());
    for (const auto& c : s.clients) out.push_back(c.w);
    return out;
}

namespace detail {

/// One synchronous mixing step: next_i = sum_{j in {i} u N_i} a_ij w_j, with j
/// ascending. Reads only `current`.
template <typename Scalar>
void mix_once(const FederationState<Scalar>& fed, const ServerMatrix<Scalar>& current, ServerMatrix<Scalar>& next,
              int threads) {
    const auto& a = fed.mixing;
    parallel_for(static_cast<std::size_t>(fed.num_servers()), threads, [&](std::size_t ii) {
        const auto i = static_cast<int>(ii);
        const auto& nbrs = fed.servers[ii].neighbors;
        bool first = true;
        auto accumulate = [&](int j) {
            if (first) {
                next.row(i) = a(i, j) * current.row(j);
                first = false;
            } else {
                next.row(i) += a(i, j) * current.row(j);
            }
        };
        auto it = nbrs.begin();
        for (; it != nbrs.end() && *it < i; ++it) accumulate(*it);
        accumulate(i);
        for (; it != nbrs.end(); ++it) accumulate(*it);
    });
}

}  // namespace detail

/// Applies W <- A W exactly T_S times and writes the result into the servers.
template <typename Scalar>
ServerMatrix<Scalar> run_consensus_phase(FederationState<Scalar>& fed, int threads = 1,
                                         std::vector<ServerMatrix<Scalar>>* log = nullptr) {
    ServerMatrix<Scalar> current = fed.server_matrix();
    ServerMatrix<Scalar> next(current.rows(), current.cols());
    if (log) log->push_back(current);
    for (int t = 0; t < fed.schedule.t_s; ++t) {
        detail::mix_once(fed, current, next, threads);
        std::swap(current, next);
        if (!current.allFinite()) {
            Eigen::Index bad = 0;
            while (bad < current.rows() && current.row(bad).allFinite()) ++bad;
            throw NumericOverflow("non-finite server model during consensus", fed.epoch + 1, static_cast<long>(bad),
                                  -1);
        }
        if (log) log->push_back(current);
    }
    for (int i = 0; i < fed.num_servers(); ++i) fed.servers[static_cast<std::size_t>(i)].w = current.row(i).transpose();
    return current;
}

/// Snapshot of the current (post-broadcast) server models.
template <typename Scalar>
EpochSnapshot<Scalar> take_snapshot(const FederationState<Scalar>& fed, const RunOptions<Scalar>& opts) {
    EpochSnapshot<Scalar> snap;
    snap.epoch = fed.epoch;
    snap.servers = fed.server_matrix();
    snap.average = row_mean(snap.servers);
    const auto m = snap.servers.rows();
    snap.consensus_error.resize(m);
    for (Eigen::Index i = 0; i < m; ++i)
        snap.consensus_error(i) = (snap.servers.row(i).transpose() - snap.average).norm();
    if (opts.reference) {
        if (opts.reference->size() != snap.servers.cols())
            throw InvalidInput("reference model dimension differs from the federation dimension");
        snap.optimality_gap.resize(m);
        for (Eigen::Index i = 0; i < m; ++i)
            snap.optimality_gap(i) = (snap.servers.row(i).transpose() - *opts.reference).norm();
    }
    if (opts.region)
        for (Eigen::Index i = 0; i < m; ++i)
            snap.max_region_distance =
                std::max(snap.max_region_distance, (snap.servers.row(i).transpose() - opts.region->center).norm());
    return snap;
}

/// client phase -> aggregate -> consensus -> broadcast; returns the new snapshot.
template <typename Scalar>
EpochSnapshot<Scalar> run_epoch(FederationState<Scalar>& fed, const RunOptions<Scalar>& opts = {}) {
    const long epoch = fed.epoch + 1;
    const auto m = static_cast<std::size_t>(fed.num_servers());

    std::vector<std::pair<std::size_t, std::size_t>> slots;
    for (std::size_t i = 0; i < m; ++i) {
        const auto& s = fed.servers[i];
        for (std::size_t j = 0; j < s.clients.size(); ++j) {
            if (s.clients[j].w != s.w)
                throw PreconditionError("client model differs from its server model at the start of epoch " +
                                        std::to_string(epoch));
            slots.emplace_back(i, j);
        }
    }

    std::optional<PhaseLog<Scalar>> log;
    if (opts.record_iterates) {
        log.emplace();
        log->client_iterates.resize(slots.size());
    }
    std::vector<detail::ClientPhaseStats<Scalar>> stats(slots.size());
    parallel_for(slots.size(), opts.threads, [&](std::size_t k) {
        const auto [i, j] = slots[k];
        auto& server = fed.servers[i];
        detail::run_one_client(server.clients[j], server.w, fed.gamma, fed.schedule.t_c, epoch, static_cast<long>(i),
                               static_cast<long>(j), opts, stats[k], log ? &log->client_iterates[k] : nullptr);
    });
    for (const auto& st : stats)
        if (st.error) std::rethrow_exception(st.error);

    for (auto& server : fed.servers) {
        std::vector<Vector<Scalar>> finals;
        finals.reserve(server.clients.size());
        for (const auto& c : server.clients) finals.push_back(c.w);
        server.w = aggregate(server, std::span<const Vector<Scalar>>(finals));
    }

    const Vector<Scalar> mean_before = row_mean(fed.server_matrix());
    run_consensus_phase(fed, opts.threads, log ? &log->consensus_iterates : nullptr);
    for (auto& server : fed.servers)
        for (auto& c : server.clients) c.w = server.w;
    fed.epoch = epoch;

    EpochSnapshot<Scalar> snap = take_snapshot(fed, opts);
    snap.consensus_mean_shift = (snap.average - mean_before).norm();
    for (const auto& st : stats) {
        snap.max_client_drift = std::max(snap.max_client_drift, st.drift);
        snap.max_gradient_norm = std::max(snap.max_gradient_norm, st.grad);
        snap.max_region_distance = std::max(snap.max_region_distance, st.region);
    }
    snap.log = std::move(log);
    return snap;
}

/// Runs up to `num_epochs` epochs, stopping early once every server moved less
/// than `opts.stop_tolerance` in one epoch. Unless overridden, gamma must be
/// strictly below min{1/(L T_C), 1/(mu T_C)}.
template <typename Scalar>
TrajectoryRecord<Scalar> run(FederationState<Scalar>& fed, long num_epochs, const RunOptions<Scalar>& opts = {}) {
    if (num_epochs < 0) throw InvalidInput("number of epochs must be nonnegative");
    if (!opts.override_step_gate) {
        const auto models = fed.all_models();
        const auto [mu, L] = curvature_range(std::span<const LossModel<Scalar>>(models));
        const Scalar gate = step_size_gate(mu, L, fed.schedule.t_c);
        if (!(fed.gamma < gate)) {
            std::ostringstream msg;
            msg.precision(17);
            msg << "step size " << fed.gamma << " violates gamma < min{1/(L T_C), 1/(mu T_C)} = " << gate
                << " (mu=" << mu << ", L=" << L << ", T_C=" << fed.schedule.t_c << ")";
            throw ConfigError(msg.str());
        }
    }
    TrajectoryRecord<Scalar> record;
    const auto note_region = [&](const EpochSnapshot<Scalar>& snap) {
        if (opts.region && record.region_escape_epoch < 0 &&
            snap.max_region_distance > opts.region->radius + Scalar(1e-12))
            record.region_escape_epoch = snap.epoch;
    };
    record.snapshots.push_back(take_snapshot(fed, opts));
    note_region(record.snapshots.back());
    for (long p = 0; p < num_epochs; ++p) {
        record.snapshots.push_back(run_epoch(fed, opts));
        note_region(record.snapshots.back());
        if (opts.stop_tolerance) {
            const auto& prev = record.snapshots[record.snapshots.size() - 2].servers;
            const auto& cur = record.snapshots.back().servers;
            Scalar moved{0};
            for (Eigen::Index i = 0; i < cur.rows(); ++i) moved = std::max(moved, (cur.row(i) - prev.row(i)).norm());
            if (moved < *opts.stop_tolerance) break;
        }
    }
    return record;
}

}  // namespace dfl

#endif  // DFL_ENGINE_HPP
