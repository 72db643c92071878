#include "dfl/topology.hpp"
#include "dfl/random.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <sstream>

namespace dfl {

ServerGraph::ServerGraph(int num_servers, std::vector<Edge> edges) : num_servers_(num_servers) {
    if (num_servers < 1) throw InvalidInput("graph needs at least one server");
    for (auto& [i, j] : edges) {
        if (i < 0 || j < 0 || i >= num_servers || j >= num_servers)
            throw InvalidInput("edge (" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
                               ") references a server outside 1.." + std::to_string(num_servers));
        if (i == j) throw InvalidInput("self-loop at server " + std::to_string(i + 1));
        if (i > j) std::swap(i, j);
    }
    std::sort(edges.begin(), edges.end());
    if (auto dup = std::adjacent_find(edges.begin(), edges.end()); dup != edges.end())
        throw InvalidInput("duplicate edge (" + std::to_string(dup->first + 1) + "," +
                           std::to_string(dup->second + 1) + ")");
    edges_ = std::move(edges);
    adjacency_.resize(static_cast<std::size_t>(num_servers));
    for (const auto& [i, j] : edges_) {
        adjacency_[static_cast<std::size_t>(i)].push_back(j);
        adjacency_[static_cast<std::size_t>(j)].push_back(i);
    }
    for (auto& nbrs : adjacency_) std::sort(nbrs.begin(), nbrs.end());
}

bool ServerGraph::has_edge(int i, int j) const {
    if (i > j) std::swap(i, j);
    return std::binary_search(edges_.begin(), edges_.end(), Edge{i, j});
}

ServerGraph ServerGraph::complete(int m) {
    std::vector<Edge> edges;
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) edges.emplace_back(i, j);
    return ServerGraph(m, std::move(edges));
}

ServerGraph ServerGraph::cycle(int m) {
    if (m <= 2) return path(m);
    std::vector<Edge> edges;
    for (int i = 0; i < m; ++i) edges.emplace_back(i, (i + 1) % m);
    return ServerGraph(m, std::move(edges));
}

ServerGraph ServerGraph::path(int m) {
    std::vector<Edge> edges;
    for (int i = 0; i + 1 < m; ++i) edges.emplace_back(i, i + 1);
    return ServerGraph(m, std::move(edges));
}

ServerGraph ServerGraph::star(int m) {
    std::vector<Edge> edges;
    for (int i = 1; i < m; ++i) edges.emplace_back(0, i);
    return ServerGraph(m, std::move(edges));
}

ServerGraph ServerGraph::erdos_renyi(int m, double p, std::uint64_t seed) {
    if (!(p > 0.0 && p <= 1.0) && m > 1) throw InvalidInput("edge probability must lie in (0, 1]");
    RandomStream rng(seed);
    constexpr int kMaxAttempts = 100000;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        std::vector<Edge> edges;
        for (int i = 0; i < m; ++i)
            for (int j = i + 1; j < m; ++j)
                if (rng.uniform() < p) edges.emplace_back(i, j);
        ServerGraph g(m, std::move(edges));
        if (is_connected(g)) return g;
    }
    throw AssumptionViolation("no connected Erdos-Renyi sample after " + std::to_string(kMaxAttempts) +
                              " attempts");
}

ServerGraph ServerGraph::parse_edge_list(std::istream& in, int num_servers) {
    std::vector<Edge> edges;
    int max_index = 0;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream fields(line);
        long i = 0, j = 0;
        if (!(fields >> i)) continue;
        std::string rest;
        if (!(fields >> j) || (fields >> rest))
            throw InvalidInput("edge list line " + std::to_string(line_no) + ": expected `i j`");
        if (i < 1 || j < 1) throw InvalidInput("edge list line " + std::to_string(line_no) + ": indices are 1-based");
        max_index = std::max<int>(max_index, static_cast<int>(std::max(i, j)));
        edges.emplace_back(static_cast<int>(i - 1), static_cast<int>(j - 1));
    }
    if (num_servers <= 0) num_servers = std::max(max_index, 1);
    return ServerGraph(num_servers, std::move(edges));
}

ServerGraph ServerGraph::load_edge_list(const std::string& path, int num_servers) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open edge list " + path);
    return parse_edge_list(in, num_servers);
}

std::string ServerGraph::to_edge_list() const {
    std::ostringstream out;
    for (const auto& [i, j] : edges_) out << i + 1 << ' ' << j + 1 << '\n';
    return out.str();
}

bool is_connected(const ServerGraph& g) {
    const int m = g.num_servers();
    std::vector<bool> seen(static_cast<std::size_t>(m), false);
    std::queue<int> frontier;
    frontier.push(0);
    seen[0] = true;
    int reached = 1;
    while (!frontier.empty()) {
        const int v = frontier.front();
        frontier.pop();
        for (int u : g.neighbors(v)) {
            if (!seen[static_cast<std::size_t>(u)]) {
                seen[static_cast<std::size_t>(u)] = true;
                ++reached;
                frontier.push(u);
            }
        }
    }
    return reached == m;
}

}  // namespace dfl
