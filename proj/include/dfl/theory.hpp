// Closed-form constants and bounds of the convergence analysis: server
// deviation from the cross-server average, client drift within an epoch,
// distance of the average from the optimum, and the limiting tolerance.
#ifndef DFL_THEORY_HPP
#define DFL_THEORY_HPP

#include "dfl/core.hpp"
#include "dfl/engine.hpp"
#include "dfl/losses.hpp"
#include "dfl/topology.hpp"

#include <cmath>
#include <sstream>
#include <string>

namespace dfl {

template <typename Scalar = double>
struct TheoryBounds {
    Scalar sigma_a{};
    /// sqrt(1 - gamma mu): per-step contraction of a client gradient step.
    Scalar lambda{};
    /// sqrt(1 - gamma mu T_C): per-epoch contraction of the average model.
    Scalar capital_lambda{};
    Scalar y0{};
    Scalar epsilon{};
    /// |W_0 - 1 wbar_0'|_2.
    Scalar delta0{};
    /// |wbar_0 - w*|.
    Scalar initial_avg_gap{};
    SmoothnessConstants<Scalar> constants;
    Scalar gamma{};
    int t_c = 1;
    int t_s = 1;
    int m = 1;
};

/// min{1/(L T_C), 1/(mu T_C)}.
template <typename Scalar>
Scalar max_step_size(const SmoothnessConstants<Scalar>& c, int t_c) {
    if (t_c < 1) throw InvalidInput("client iterations per epoch must be >= 1");
    return step_size_gate(c.mu, c.L, t_c);
}

/// sqrt(1 - eta mu), valid for 0 <= eta <= 1/L.
template <typename Scalar>
Scalar lemma2_factor(Scalar eta, const SmoothnessConstants<Scalar>& c) {
    if (!(eta >= Scalar(0)) || eta > Scalar(1) / c.L) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "contraction factor needs 0 <= eta <= 1/L = " << Scalar(1) / c.L << ", got eta = " << eta;
        throw PreconditionError(msg.str());
    }
    return std::sqrt(std::max(Scalar(0), Scalar(1) - eta * c.mu));
}

/// Spectral norm of W - 1 wbar', the server disagreement matrix.
template <typename Scalar>
Scalar disagreement_norm(const ServerMatrix<Scalar>& w) {
    Matrix<Scalar> centered = w;
    centered.rowwise() -= row_mean(w).transpose();
    return spectral_norm(centered);
}

namespace detail {
/// Y_0 / (1 - Lambda); zero when Y_0 is zero (gamma = 0 leaves the average fixed).
template <typename Scalar>
Scalar steady_state_term(const TheoryBounds<Scalar>& b) {
    if (b.y0 == Scalar(0)) return Scalar(0);
    return b.y0 / (Scalar(1) - b.capital_lambda);
}

template <typename Scalar>
Scalar consensus_floor(const TheoryBounds<Scalar>& b) {
    return std::sqrt(Scalar(b.m)) * Scalar(b.t_c) * b.constants.theta * b.gamma * b.sigma_a /
           (Scalar(1) - b.sigma_a);
}
}  // namespace detail

/// Assembles every bound constant. Requires sigma_A < 1 and
/// 0 <= gamma < min{1/(L T_C), 1/(mu T_C)}.
template <typename Scalar>
TheoryBounds<Scalar> make_bounds(const SmoothnessConstants<Scalar>& constants, Scalar sigma_a, Scalar gamma,
                                 const EpochSchedule& schedule, int m, Scalar delta0, Scalar initial_avg_gap) {
    if (!(sigma_a >= Scalar(0) && sigma_a < Scalar(1)))
        throw PreconditionError("contraction factor sigma_A must lie in [0, 1)");
    const Scalar gate = max_step_size(constants, schedule.t_c);
    if (!(gamma >= Scalar(0) && (gamma == Scalar(0) || gamma < gate))) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "bounds need 0 <= gamma < min{1/(L T_C), 1/(mu T_C)} = " << gate << ", got " << gamma;
        throw PreconditionError(msg.str());
    }
    TheoryBounds<Scalar> b;
    b.constants = constants;
    b.sigma_a = sigma_a;
    b.gamma = gamma;
    b.t_c = schedule.t_c;
    b.t_s = schedule.t_s;
    b.m = m;
    b.delta0 = delta0;
    b.initial_avg_gap = initial_avg_gap;
    b.lambda = lemma2_factor(gamma, constants);
    b.capital_lambda = std::sqrt(std::max(Scalar(0), Scalar(1) - gamma * constants.mu * Scalar(schedule.t_c)));
    const Scalar gt = gamma * Scalar(schedule.t_c);
    const Scalar theta = constants.theta;
    const Scalar L = constants.L;
    b.y0 = gt * gt * theta * L + gt * gt * theta * L * std::sqrt(Scalar(m)) * sigma_a / (Scalar(1) - sigma_a) +
           gt * L * delta0;
    b.epsilon = detail::consensus_floor(b) + detail::steady_state_term(b);
    return b;
}

/// sigma_A^p delta_0 + sqrt(M) T_C theta gamma sigma_A / (1 - sigma_A).
template <typename Scalar>
Scalar server_deviation_bound(const TheoryBounds<Scalar>& b, long p) {
    return std::pow(b.sigma_a, Scalar(p)) * b.delta0 + detail::consensus_floor(b);
}

/// gamma T_C theta.
template <typename Scalar>
Scalar client_drift_bound(Scalar gamma, int t_c, Scalar theta) {
    return gamma * Scalar(t_c) * theta;
}

/// Lambda^p |wbar_0 - w*| + Y_0 / (1 - Lambda).
template <typename Scalar>
Scalar average_optimality_bound(const TheoryBounds<Scalar>& b, long p) {
    return std::pow(b.capital_lambda, Scalar(p)) * b.initial_avg_gap + detail::steady_state_term(b);
}

/// sqrt(M) gamma theta T_C sigma_A / (1 - sigma_A) + Y_0 / (1 - Lambda).
template <typename Scalar>
Scalar epsilon_bound(const TheoryBounds<Scalar>& b) {
    return b.epsilon;
}

/// Finite-epoch bound on |w^i_p - w*| from the triangle inequality.
template <typename Scalar>
Scalar server_optimality_bound(const TheoryBounds<Scalar>& b, long p) {
    return server_deviation_bound(b, p) + average_optimality_bound(b, p);
}

/// Epochs after which both transient terms sigma_A^p delta_0 and
/// Lambda^p |wbar_0 - w*| are below `threshold`.
template <typename Scalar>
long epochs_to_settle(const TheoryBounds<Scalar>& b, Scalar threshold) {
    const auto needed = [&](Scalar rate, Scalar scale) -> long {
        if (scale <= threshold || rate == Scalar(0)) return scale <= threshold ? 0 : 1;
        if (rate >= Scalar(1)) return -1;
        return static_cast<long>(std::ceil(std::log(threshold / scale) / std::log(rate))) + 1;
    };
    const long a = needed(b.sigma_a, b.delta0);
    const long c = needed(b.capital_lambda, b.initial_avg_gap);
    if (a < 0 || c < 0) return -1;
    return std::max(a, c);
}

/// Outcome of checking a recorded trajectory against every bound.
template <typename Scalar = double>
struct BoundCheck {
    bool certified = true;
    bool deviation = true;
    bool drift = true;
    bool average = true;
    bool finite_epoch = true;
    /// Largest measured-minus-bound value per check (negative when holding).
    Scalar deviation_margin = -std::numeric_limits<Scalar>::infinity();
    Scalar drift_margin = -std::numeric_limits<Scalar>::infinity();
    Scalar average_margin = -std::numeric_limits<Scalar>::infinity();
    Scalar finite_epoch_margin = -std::numeric_limits<Scalar>::infinity();
    std::string first_violation;

    bool passed() const { return !certified || (deviation && drift && average && finite_epoch); }
};

/// Checks every snapshot with additive slack. Uncertified records (an iterate
/// left the theta ball) report certified = false and are not judged.
template <typename Scalar>
BoundCheck<Scalar> check_record(const TrajectoryRecord<Scalar>& record, const TheoryBounds<Scalar>& b,
                                const Vector<Scalar>& w_star, Scalar slack = Scalar(1e-9)) {
    BoundCheck<Scalar> out;
    out.certified = record.certified();
    if (!out.certified) return out;
    const Scalar drift_bound = client_drift_bound(b.gamma, b.t_c, b.constants.theta);
    const auto judge = [&](bool& flag, Scalar& margin, Scalar measured, Scalar bound, const char* name, long p) {
        margin = std::max(margin, measured - bound);
        if (measured > bound + slack) {
            if (flag && out.first_violation.empty()) {
                std::ostringstream msg;
                msg.precision(17);
                msg << name << " at epoch " << p << ": measured " << measured << " > bound " << bound;
                out.first_violation = msg.str();
            }
            flag = false;
        }
    };
    for (const auto& snap : record.snapshots) {
        const long p = snap.epoch;
        const Scalar dev = snap.consensus_error.maxCoeff();
        judge(out.deviation, out.deviation_margin, dev, server_deviation_bound(b, p), "server deviation", p);
        if (p > 0) judge(out.drift, out.drift_margin, snap.max_client_drift, drift_bound, "client drift", p);
        const Scalar avg_gap = (snap.average - w_star).norm();
        judge(out.average, out.average_margin, avg_gap, average_optimality_bound(b, p), "average optimality", p);
        Scalar gap{0};
        for (Eigen::Index i = 0; i < snap.servers.rows(); ++i)
            gap = std::max(gap, (snap.servers.row(i).transpose() - w_star).norm());
        judge(out.finite_epoch, out.finite_epoch_margin, gap, server_optimality_bound(b, p), "server optimality", p);
    }
    return out;
}

}  // namespace dfl

#endif  // DFL_THEORY_HPP
