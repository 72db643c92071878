// Server communication graph, doubly-stochastic mixing matrices on it, and
// the per-epoch contraction factor of the consensus phase.
#ifndef DFL_TOPOLOGY_HPP
#define DFL_TOPOLOGY_HPP

#include "dfl/core.hpp"

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <limits>
#include <istream>
#include <string>
#include <utility>
#include <vector>

namespace dfl {

/// Undirected simple graph on servers 0..M-1.
class ServerGraph {
public:
    using Edge = std::pair<int, int>;

    /// Edges are normalized to (min, max) and sorted. Throws InvalidInput on
    /// self-loops, duplicates, or out-of-range endpoints.
    ServerGraph(int num_servers, std::vector<Edge> edges);

    int num_servers() const { return num_servers_; }
    const std::vector<Edge>& edges() const { return edges_; }
    const std::vector<int>& neighbors(int i) const { return adjacency_.at(static_cast<std::size_t>(i)); }
    int degree(int i) const { return static_cast<int>(neighbors(i).size()); }
    bool has_edge(int i, int j) const;

    static ServerGraph complete(int m);
    static ServerGraph cycle(int m);
    static ServerGraph path(int m);
    /// Server 0 is the hub.
    static ServerGraph star(int m);
    /// G(m, p) resampled until connected.
    static ServerGraph erdos_renyi(int m, double p, std::uint64_t seed);

    /// One `i j` pair per line, 1-indexed. Blank lines and `#` comments are
    /// skipped. `num_servers` <= 0 infers M from the largest index.
    static ServerGraph parse_edge_list(std::istream& in, int num_servers = 0);
    static ServerGraph load_edge_list(const std::string& path, int num_servers = 0);
    std::string to_edge_list() const;

private:
    int num_servers_;
    std::vector<Edge> edges_;
    std::vector<std::vector<int>> adjacency_;
};

/// Breadth-first reachability from server 0.
bool is_connected(const ServerGraph& g);

/// Entry-wise nonnegative, supported on edges plus the diagonal, every
/// supported entry strictly above `alpha`, rows and columns summing to one.
template <typename Scalar = double>
class MixingMatrix {
public:
    static constexpr double kSumTolerance = 1e-12;

    /// Validates `entries` against `graph` and throws AssumptionViolation
    /// describing the first broken property.
    MixingMatrix(const ServerGraph& graph, Matrix<Scalar> entries) : entries_(std::move(entries)) {
        const int m = graph.num_servers();
        if (entries_.rows() != m || entries_.cols() != m)
            throw InvalidInput("mixing matrix must be " + std::to_string(m) + "x" + std::to_string(m));
        Scalar min_supported = std::numeric_limits<Scalar>::infinity();
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < m; ++j) {
                const Scalar a = entries_(i, j);
                if (!std::isfinite(static_cast<double>(a)) || a < Scalar(0))
                    throw AssumptionViolation("mixing weight a(" + std::to_string(i + 1) + "," +
                                              std::to_string(j + 1) + ") is negative or non-finite");
                const bool supported = i == j || graph.has_edge(i, j);
                if (!supported && a != Scalar(0))
                    throw AssumptionViolation("mixing weight a(" + std::to_string(i + 1) + "," +
                                              std::to_string(j + 1) + ") is nonzero off the graph");
                if (supported) min_supported = std::min(min_supported, a);
            }
        }
        for (int i = 0; i < m; ++i) {
            if (std::abs(static_cast<double>(entries_.row(i).sum()) - 1.0) > kSumTolerance)
                throw AssumptionViolation("row " + std::to_string(i + 1) + " of the mixing matrix does not sum to 1");
            if (std::abs(static_cast<double>(entries_.col(i).sum()) - 1.0) > kSumTolerance)
                throw AssumptionViolation("column " + std::to_string(i + 1) +
                                          " of the mixing matrix does not sum to 1");
        }
        alpha_ = min_supported - Scalar(1e-12);
        if (!(alpha_ > Scalar(0)))
            throw AssumptionViolation("a supported mixing weight is not bounded away from zero");
    }

    Eigen::Index size() const { return entries_.rows(); }
    const Matrix<Scalar>& entries() const { return entries_; }
    Scalar alpha() const { return alpha_; }
    Scalar operator()(Eigen::Index i, Eigen::Index j) const { return entries_(i, j); }
    bool is_symmetric() const { return entries_ == entries_.transpose(); }

private:
    Matrix<Scalar> entries_;
    Scalar alpha_{};
};

/// a_ij = 1/(1 + max(deg i, deg j)) on edges, diagonal absorbs the rest.
template <typename Scalar = double>
MixingMatrix<Scalar> metropolis_weights(const ServerGraph& g) {
    if (!is_connected(g)) throw AssumptionViolation("server graph is not connected");
    const int m = g.num_servers();
    Matrix<Scalar> a = Matrix<Scalar>::Zero(m, m);
    for (const auto& [i, j] : g.edges()) {
        const Scalar w = Scalar(1) / Scalar(1 + std::max(g.degree(i), g.degree(j)));
        a(i, j) = w;
        a(j, i) = w;
    }
    for (int i = 0; i < m; ++i) {
        Scalar off{0};
        for (int j : g.neighbors(i)) off += a(i, j);
        a(i, i) = Scalar(1) - off;
    }
    return MixingMatrix<Scalar>(g, std::move(a));
}

/// Uniform 1/M weights; valid only on the complete graph.
template <typename Scalar = double>
MixingMatrix<Scalar> uniform_weights(const ServerGraph& g) {
    const int m = g.num_servers();
    return MixingMatrix<Scalar>(g, Matrix<Scalar>::Constant(m, m, Scalar(1) / Scalar(m)));
}

template <typename Scalar>
Matrix<Scalar> matrix_power(const Matrix<Scalar>& a, int exponent) {
    if (exponent < 0) throw InvalidInput("negative matrix exponent");
    Matrix<Scalar> result = Matrix<Scalar>::Identity(a.rows(), a.cols());
    Matrix<Scalar> base = a;
    while (exponent > 0) {
        if (exponent & 1) result = result * base;
        exponent >>= 1;
        if (exponent > 0) base = base * base;
    }
    return result;
}

struct SpectralNormOptions {
    double tolerance = 1e-12;
    int max_iterations = 10000;
};

/// Largest singular value by power iteration on B'B. Stops once the
/// eigen-residual |B'Bv - rho v| falls below tolerance * rho. The start
/// vector is all-ones plus a deterministic irregular perturbation, so it is
/// never orthogonal to a dominant singular vector by symmetry alone.
template <typename Derived>
typename Derived::Scalar spectral_norm(const Eigen::MatrixBase<Derived>& b, SpectralNormOptions opts = {}) {
    using Scalar = typename Derived::Scalar;
    const Matrix<Scalar> gram = b.transpose() * b;
    const Eigen::Index n = gram.rows();
    if (n == 0) return Scalar(0);
    Vector<Scalar> v(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const double frac = std::fmod(0.6180339887498949 * double(k + 1), 1.0);
        v(k) = Scalar(1) + Scalar(frac);
    }
    v.normalize();
    Scalar rho{0};
    for (int it = 0; it < opts.max_iterations; ++it) {
        const Vector<Scalar> u = gram * v;
        const Scalar unorm = u.norm();
        if (unorm == Scalar(0)) return Scalar(0);
        rho = v.dot(u);
        const Scalar residual = (u - rho * v).norm();
        v = u / unorm;
        if (residual <= Scalar(opts.tolerance) * rho) break;
    }
    rho = v.dot(gram * v);
    return std::sqrt(std::max(rho, Scalar(0)));
}

/// sigma_A = |A^{T_S} - (1/M) 11'|_2.
template <typename Scalar>
Scalar contraction_factor(const MixingMatrix<Scalar>& a, int t_s) {
    if (t_s < 1) throw InvalidInput("consensus iterations per epoch must be >= 1");
    const auto m = a.size();
    Matrix<Scalar> b = matrix_power(a.entries(), t_s);
    b.array() -= Scalar(1) / Scalar(m);
    return spectral_norm(b);
}

}  // namespace dfl

#endif  // DFL_TOPOLOGY_HPP
