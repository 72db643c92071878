#include "dfl/datagen.hpp"
#include "dfl/random.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace dfl {

void SyntheticSpec::validate() const {
    if (m < 1 || n < 1 || d_points < 1 || dim < 1)
        throw InvalidInput("servers, clients, points and dimension must all be >= 1");
    if (w_true.size() != dim)
        throw InvalidInput("w_true has " + std::to_string(w_true.size()) + " entries, expected " +
                           std::to_string(dim));
    if (!w_true.allFinite()) throw InvalidInput("w_true must be finite");
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw InvalidInput("noise_std must be >= 0");
    if (!(feature_std > 0.0) || !std::isfinite(feature_std)) throw InvalidInput("feature_std must be > 0");
}

std::vector<ClientDataset<double>> generate(const SyntheticSpec& spec) {
    spec.validate();
    std::vector<ClientDataset<double>> out;
    out.reserve(static_cast<std::size_t>(spec.m) * static_cast<std::size_t>(spec.n));
    for (int i = 0; i < spec.m; ++i) {
        for (int j = 0; j < spec.n; ++j) {
            const auto index = static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(spec.n) +
                               static_cast<std::uint64_t>(j);
            RandomStream rng(stream_seed(spec.seed, index));
            MatrixXd x(spec.d_points, spec.dim);
            VectorXd y(spec.d_points);
            for (int k = 0; k < spec.d_points; ++k) {
                for (int c = 0; c < spec.dim; ++c) x(k, c) = spec.feature_std * rng.normal();
                const double noise = rng.normal();
                y(k) = x.row(k).dot(spec.w_true) + spec.noise_std * noise;
            }
            out.emplace_back(std::move(x), std::move(y), i, j);
        }
    }
    return out;
}

VectorXd optimal_model(std::span<const ClientDataset<double>> datasets, double ridge) {
    if (datasets.empty()) throw InvalidInput("no datasets");
    if (!(ridge >= 0.0)) throw InvalidInput("ridge coefficient must be nonnegative");
    const auto d = datasets.front().dim();
    MatrixXd gram = MatrixXd::Zero(d, d);
    VectorXd rhs = VectorXd::Zero(d);
    for (const auto& data : datasets) {
        if (data.dim() != d) throw InvalidInput("datasets disagree on feature dimension");
        const double scale = 1.0 / double(data.size());
        gram += scale * data.features().transpose() * data.features();
        rhs += scale * data.features().transpose() * data.labels();
    }
    const double clients = double(datasets.size());
    gram /= clients;
    rhs /= clients;
    gram.diagonal().array() += ridge;

    const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 1e-12 * std::max(1.0, hi)))
        throw AssumptionViolation("pooled Gram matrix is singular; the optimum is not unique");

    const Eigen::LDLT<MatrixXd> solver(gram);
    VectorXd w = solver.solve(rhs);
    // One refinement sweep on the residual of the normal equations.
    w += solver.solve(rhs - gram * w);
    return w;
}

std::vector<std::vector<LossModel<double>>> build_models(std::span<const ClientDataset<double>> datasets,
                                                         LossKind kind, double ridge) {
    if (datasets.empty()) throw InvalidInput("no datasets");
    int m = 0;
    for (const auto& data : datasets) m = std::max(m, data.server_id() + 1);
    std::vector<std::vector<LossModel<double>>> grouped(static_cast<std::size_t>(m));
    for (const auto& data : datasets) {
        auto model = kind == LossKind::ridge ? LossModel<double>::ridge(data, ridge)
                                             : LossModel<double>::least_squares(data);
        grouped[static_cast<std::size_t>(data.server_id())].push_back(std::move(model));
    }
    for (std::size_t i = 0; i < grouped.size(); ++i) {
        if (grouped[i].empty()) throw InvalidInput("server " + std::to_string(i + 1) + " owns no clients");
        if (grouped[i].size() != grouped.front().size())
            throw InvalidInput("every server must own the same number of clients");
    }
    return grouped;
}

std::string format_real(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

void write_dataset_csv(std::ostream& out, std::span<const ClientDataset<double>> datasets) {
    const auto d = datasets.empty() ? Eigen::Index(0) : datasets.front().dim();
    out << "server,client,y";
    for (Eigen::Index c = 0; c < d; ++c) out << ",x" << c + 1;
    out << '\n';
    for (const auto& data : datasets) {
        for (Eigen::Index k = 0; k < data.size(); ++k) {
            out << data.server_id() + 1 << ',' << data.client_id() + 1 << ',' << format_real(data.labels()(k));
            for (Eigen::Index c = 0; c < d; ++c) out << ',' << format_real(data.features()(k, c));
            out << '\n';
        }
    }
}

void write_dataset_csv(const std::string& path, std::span<const ClientDataset<double>> datasets) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    write_dataset_csv(out, datasets);
    if (!out) throw IoError("write failed for " + path);
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

double parse_real(const std::string& text, int line_no) {
    double value = 0.0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    while (begin < end && *begin == ' ') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end)
        throw InvalidInput("line " + std::to_string(line_no) + ": cannot parse number '" + text + "'");
    return value;
}

}  // namespace

std::vector<ClientDataset<double>> read_dataset_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw InvalidInput("dataset CSV is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv(line);
    if (header.size() < 4 || header[0] != "server" || header[1] != "client" || header[2] != "y")
        throw InvalidInput("dataset CSV header must be server,client,y,x1,...,xd");
    const auto d = static_cast<Eigen::Index>(header.size() - 3);
    for (Eigen::Index c = 0; c < d; ++c)
        if (header[static_cast<std::size_t>(3 + c)] != "x" + std::to_string(c + 1))
            throw InvalidInput("dataset CSV header column " + std::to_string(4 + c) + " must be x" +
                               std::to_string(c + 1));

    std::map<std::pair<int, int>, std::vector<DataPoint<double>>> groups;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_csv(line);
        if (fields.size() != header.size())
            throw InvalidInput("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                               " fields");
        const double server = parse_real(fields[0], line_no);
        const double client = parse_real(fields[1], line_no);
        if (server < 1 || client < 1 || server != std::floor(server) || client != std::floor(client))
            throw InvalidInput("line " + std::to_string(line_no) + ": server/client ids are positive integers");
        DataPoint<double> point{VectorXd(d), parse_real(fields[2], line_no)};
        for (Eigen::Index c = 0; c < d; ++c) point.x(c) = parse_real(fields[static_cast<std::size_t>(3 + c)], line_no);
        groups[{static_cast<int>(server) - 1, static_cast<int>(client) - 1}].push_back(std::move(point));
    }
    if (groups.empty()) throw InvalidInput("dataset CSV has no data rows");

    std::vector<ClientDataset<double>> out;
    int expected_server = -1;
    int expected_client = 0;
    for (const auto& [key, points] : groups) {
        if (key.first != expected_server) {
            if (key.first != expected_server + 1 || key.second != 0)
                throw InvalidInput("server/client ids in dataset CSV must be contiguous from 1");
            expected_server = key.first;
            expected_client = 0;
        }
        if (key.second != expected_client) throw InvalidInput("client ids in dataset CSV must be contiguous from 1");
        ++expected_client;
        out.push_back(ClientDataset<double>::from_points(points, key.first, key.second));
    }
    return out;
}

std::vector<ClientDataset<double>> read_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset " + path);
    return read_dataset_csv(in);
}

}  // namespace dfl
