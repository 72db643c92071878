// Empirical risk functions of the federation: per-client quadratic losses,
// their gradients and Hessians, and the curvature/gradient constants the
// convergence analysis consumes.
#ifndef DFL_LOSSES_HPP
#define DFL_LOSSES_HPP

#include "dfl/core.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace dfl {

template <typename Scalar = double>
struct DataPoint {
    Vector<Scalar> x;
    Scalar y{};
};

/// The D labelled points owned by one client. Features are stored row-wise
/// (D x d). Server and client ids are 0-based in memory.
template <typename Scalar = double>
class ClientDataset {
public:
    ClientDataset() = default;

    ClientDataset(Matrix<Scalar> features, Vector<Scalar> labels, int server_id, int client_id)
        : features_(std::move(features)), labels_(std::move(labels)), server_id_(server_id), client_id_(client_id) {
        if (features_.rows() < 1) throw InvalidInput("client dataset must contain at least one point");
        if (features_.rows() != labels_.size())
            throw InvalidInput("feature rows (" + std::to_string(features_.rows()) + ") != labels (" +
                               std::to_string(labels_.size()) + ")");
        if (!features_.allFinite() || !labels_.allFinite())
            throw InvalidInput("client dataset contains non-finite entries");
    }

    static ClientDataset from_points(std::span<const DataPoint<Scalar>> points, int server_id, int client_id) {
        if (points.empty()) throw InvalidInput("client dataset must contain at least one point");
        const auto d = points.front().x.size();
        Matrix<Scalar> x(static_cast<Eigen::Index>(points.size()), d);
        Vector<Scalar> y(static_cast<Eigen::Index>(points.size()));
        for (std::size_t k = 0; k < points.size(); ++k) {
            if (points[k].x.size() != d) throw InvalidInput("data points disagree on feature dimension");
            x.row(static_cast<Eigen::Index>(k)) = points[k].x.transpose();
            y(static_cast<Eigen::Index>(k)) = points[k].y;
        }
        return ClientDataset(std::move(x), std::move(y), server_id, client_id);
    }

    Eigen::Index size() const { return features_.rows(); }
    Eigen::Index dim() const { return features_.cols(); }
    const Matrix<Scalar>& features() const { return features_; }
    const Vector<Scalar>& labels() const { return labels_; }
    int server_id() const { return server_id_; }
    int client_id() const { return client_id_; }

    DataPoint<Scalar> point(Eigen::Index k) const { return {features_.row(k).transpose(), labels_(k)}; }

private:
    Matrix<Scalar> features_;
    Vector<Scalar> labels_;
    int server_id_ = 0;
    int client_id_ = 0;
};

enum class LossKind { least_squares, ridge };

/// f(w) = (1/D) sum_k 1/2 (w'x_k - y_k)^2 + (reg/2)|w|^2, reg = 0 for least squares.
template <typename Scalar = double>
struct LossModel {
    LossKind kind = LossKind::least_squares;
    Scalar reg_coeff{0};
    ClientDataset<Scalar> dataset;

    static LossModel least_squares(ClientDataset<Scalar> data) {
        return {LossKind::least_squares, Scalar(0), std::move(data)};
    }
    static LossModel ridge(ClientDataset<Scalar> data, Scalar reg) {
        if (!(reg >= Scalar(0))) throw InvalidInput("ridge coefficient must be nonnegative");
        return {LossKind::ridge, reg, std::move(data)};
    }

    Scalar effective_reg() const { return kind == LossKind::ridge ? reg_coeff : Scalar(0); }
};

template <typename Scalar>
struct SmoothnessConstants {
    Scalar mu{};
    Scalar L{};
    Scalar theta{};
    Scalar region_radius{};
};

namespace detail {
template <typename Scalar, typename Derived>
void check_dim(const LossModel<Scalar>& model, const Eigen::MatrixBase<Derived>& w) {
    if (w.size() != model.dataset.dim())
        throw InvalidInput("model dimension " + std::to_string(w.size()) + " != data dimension " +
                           std::to_string(model.dataset.dim()));
}
}  // namespace detail

template <typename Scalar, typename Derived>
Scalar loss_value(const LossModel<Scalar>& model, const Eigen::MatrixBase<Derived>& w) {
    detail::check_dim(model, w);
    const auto& data = model.dataset;
    const Vector<Scalar> residual = data.features() * w - data.labels();
    Scalar value = residual.squaredNorm() / (Scalar(2) * Scalar(data.size()));
    const Scalar reg = model.effective_reg();
    if (reg != Scalar(0)) value += reg / Scalar(2) * w.squaredNorm();
    return value;
}

/// (1/D) sum_k (w'x_k - y_k) x_k + reg * w.
template <typename Scalar, typename Derived>
Vector<Scalar> loss_gradient(const LossModel<Scalar>& model, const Eigen::MatrixBase<Derived>& w) {
    detail::check_dim(model, w);
    const auto& data = model.dataset;
    const Vector<Scalar> residual = data.features() * w - data.labels();
    Vector<Scalar> grad = data.features().transpose() * residual / Scalar(data.size());
    const Scalar reg = model.effective_reg();
    if (reg != Scalar(0)) grad += reg * w;
    return grad;
}

/// Constant Hessian (1/D) X'X + reg I.
template <typename Scalar>
Matrix<Scalar> loss_hessian(const LossModel<Scalar>& model) {
    const auto& x = model.dataset.features();
    Matrix<Scalar> h = x.transpose() * x / Scalar(model.dataset.size());
    h.diagonal().array() += model.effective_reg();
    return h;
}

/// Global objective f(w): uniform average of all client risks. With equal
/// client counts per server this equals (1/M) sum_i (1/N) sum_j f^{ij}(w).
template <typename Scalar, typename Derived>
Scalar global_objective(std::span<const LossModel<Scalar>> models, const Eigen::MatrixBase<Derived>& w) {
    if (models.empty()) throw InvalidInput("no client models");
    Scalar total{0};
    for (const auto& m : models) total += loss_value(m, w);
    return total / Scalar(models.size());
}

template <typename Scalar, typename Derived>
Vector<Scalar> global_gradient(std::span<const LossModel<Scalar>> models, const Eigen::MatrixBase<Derived>& w) {
    if (models.empty()) throw InvalidInput("no client models");
    Vector<Scalar> total = Vector<Scalar>::Zero(w.size());
    for (const auto& m : models) total += loss_gradient(m, w);
    return total / Scalar(models.size());
}

/// mu and L are the extreme Hessian eigenvalues over all clients. theta
/// bounds every client gradient norm on the ball |w - w0| <= radius, using
/// |grad f(w)| <= |H| radius + |grad f(w0)| for quadratic f.
template <typename Scalar, typename Derived>
SmoothnessConstants<Scalar> estimate_constants(std::span<const LossModel<Scalar>> models,
                                               const Eigen::MatrixBase<Derived>& w0, Scalar region_radius) {
    if (models.empty()) throw InvalidInput("no client models");
    if (!(region_radius > Scalar(0))) throw InvalidInput("region radius must be positive");
    SmoothnessConstants<Scalar> out;
    out.mu = std::numeric_limits<Scalar>::infinity();
    out.L = Scalar(0);
    out.theta = Scalar(0);
    out.region_radius = region_radius;
    for (const auto& m : models) {
        detail::check_dim(m, w0);
        const Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(loss_hessian(m), Eigen::EigenvaluesOnly);
        const Scalar lo = eig.eigenvalues().minCoeff();
        const Scalar hi = eig.eigenvalues().maxCoeff();
        if (!(lo > Scalar(1e-12) * std::max(Scalar(1), hi)))
            throw AssumptionViolation("Hessian of client (server " + std::to_string(m.dataset.server_id() + 1) +
                                      ", client " + std::to_string(m.dataset.client_id() + 1) +
                                      ") is not positive definite; the loss is not strongly convex");
        out.mu = std::min(out.mu, lo);
        out.L = std::max(out.L, hi);
        out.theta = std::max(out.theta, hi * region_radius + loss_gradient(m, w0).norm());
    }
    return out;
}

}  // namespace dfl

#endif  // DFL_LOSSES_HPP
