// Synthetic linear-regression federations, dataset CSV exchange, and the
// exact minimizer of the pooled objective.
#ifndef DFL_DATAGEN_HPP
#define DFL_DATAGEN_HPP

#include "dfl/core.hpp"
#include "dfl/losses.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace dfl {

struct SyntheticSpec {
    int m = 5;
    int n = 5;
    int d_points = 100;
    int dim = 2;
    VectorXd w_true = (VectorXd(2) << 5.0, 2.0).finished();
    double noise_std = 0.1;
    double feature_std = 1.0;
    std::uint64_t seed = 0;

    /// Throws InvalidInput on non-positive counts, a w_true of the wrong
    /// length, or invalid standard deviations.
    void validate() const;
};

/// M*N datasets in row-major (server, client) order. Client (i, j) draws from
/// its own stream `stream_seed(seed, i*N + j)`, so each dataset is independent
/// of generation order. Per point: `dim` features, then one noise draw.
std::vector<ClientDataset<double>> generate(const SyntheticSpec& spec);

/// Minimizer of (1/C) sum_c f_c(w) over all C clients, via a direct d x d
/// solve of the normal equations. Throws AssumptionViolation when the pooled
/// (regularized) Gram matrix is singular.
VectorXd optimal_model(std::span<const ClientDataset<double>> datasets, double ridge = 0.0);

/// Groups datasets by server into loss models. Requires every server to own
/// the same number of clients.
std::vector<std::vector<LossModel<double>>> build_models(std::span<const ClientDataset<double>> datasets,
                                                         LossKind kind, double ridge);

/// CSV with header `server,client,y,x1,...,xd`; ids are 1-based.
void write_dataset_csv(std::ostream& out, std::span<const ClientDataset<double>> datasets);
void write_dataset_csv(const std::string& path, std::span<const ClientDataset<double>> datasets);
/// Reads a dataset CSV back into row-major (server, client) order.
std::vector<ClientDataset<double>> read_dataset_csv(std::istream& in);
std::vector<ClientDataset<double>> read_dataset_csv(const std::string& path);

/// `%.17g`, enough digits to round-trip any double.
std::string format_real(double value);

}  // namespace dfl

#endif  // DFL_DATAGEN_HPP
