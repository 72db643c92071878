#include "dfl/config.hpp"

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace dfl {

SyntheticSpec ExperimentConfig::synthetic_spec() const {
    SyntheticSpec spec;
    spec.m = topology.servers;
    spec.n = data.clients_per_server;
    spec.d_points = data.points_per_client;
    spec.dim = data.dim;
    spec.w_true = Eigen::Map<const VectorXd>(data.w_true.data(), static_cast<Eigen::Index>(data.w_true.size()));
    spec.noise_std = data.noise_std;
    spec.feature_std = data.feature_std;
    spec.seed = run.seed;
    return spec;
}

namespace {

const std::map<std::string, std::set<std::string>>& schema() {
    static const std::map<std::string, std::set<std::string>> keys{
        {"topology", {"kind", "servers", "p", "seed", "path"}},
        {"schedule", {"t_c", "t_s"}},
        {"step", {"gamma"}},
        {"loss", {"kind", "ridge", "region_radius"}},
        {"data",
         {"source", "path", "clients_per_server", "points_per_client", "dim", "w_true", "noise_std", "feature_std"}},
        {"init", {"w0", "spread"}},
        {"run", {"epochs", "stop_tolerance", "seed", "output_dir", "threads"}},
        {"flags", {"record_iterates", "override_step_gate", "gnuplot"}},
    };
    return keys;
}

class Section {
public:
    Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

    std::string where(const std::string& key) const { return name_ + "." + key; }

    const toml::node* find(const std::string& key) const { return table_ ? table_->get(key) : nullptr; }

    long integer(const std::string& key, long fallback, long minimum) const {
        const auto* node = find(key);
        if (!node) return fallback;
        const auto v = node->value_exact<std::int64_t>();
        if (!v) throw ConfigError(where(key) + " must be an integer");
        if (*v < minimum) throw ConfigError(where(key) + " must be >= " + std::to_string(minimum));
        return static_cast<long>(*v);
    }

    double real(const std::string& key, double fallback) const {
        const auto* node = find(key);
        if (!node) return fallback;
        if (!node->is_number()) throw ConfigError(where(key) + " must be a number");
        const double v = *node->value<double>();
        if (!std::isfinite(v)) throw ConfigError(where(key) + " must be finite");
        return v;
    }

    std::optional<double> real_or_auto(const std::string& key, std::optional<double> fallback) const {
        const auto* node = find(key);
        if (!node) return fallback;
        if (node->is_string()) {
            if (*node->value<std::string>() != "auto") throw ConfigError(where(key) + " must be a number or \"auto\"");
            return std::nullopt;
        }
        return real(key, 0.0);
    }

    std::string string(const std::string& key, const std::string& fallback) const {
        const auto* node = find(key);
        if (!node) return fallback;
        const auto v = node->value_exact<std::string>();
        if (!v) throw ConfigError(where(key) + " must be a string");
        return *v;
    }

    bool boolean(const std::string& key, bool fallback) const {
        const auto* node = find(key);
        if (!node) return fallback;
        const auto v = node->value_exact<bool>();
        if (!v) throw ConfigError(where(key) + " must be a boolean");
        return *v;
    }

    std::vector<double> reals(const std::string& key, const std::vector<double>& fallback) const {
        const auto* node = find(key);
        if (!node) return fallback;
        const auto* arr = node->as_array();
        if (!arr) throw ConfigError(where(key) + " must be an array of numbers");
        std::vector<double> out;
        for (const auto& item : *arr) {
            if (!item.is_number()) throw ConfigError(where(key) + " must be an array of numbers");
            out.push_back(*item.value<double>());
            if (!std::isfinite(out.back())) throw ConfigError(where(key) + " entries must be finite");
        }
        return out;
    }

private:
    const toml::table* table_;
    std::string name_;
};

void apply_override(toml::table& root, const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
        throw ConfigError("override '" + assignment + "' must look like section.key=value");
    const std::string section = assignment.substr(0, dot);
    const std::string key = assignment.substr(dot + 1, eq - dot - 1);
    const std::string value = assignment.substr(eq + 1);
    if (!root.contains(section)) root.insert(section, toml::table{});
    auto* table = root[section].as_table();
    if (!table) throw ConfigError(section + " is not a table");
    try {
        auto parsed = toml::parse("v = " + value);
        parsed["v"].node()->visit([&](const auto& node) { table->insert_or_assign(key, node); });
    } catch (const toml::parse_error&) {
        table->insert_or_assign(key, value);
    }
}

ExperimentConfig from_table(const toml::table& root) {
    for (const auto& [key, node] : root) {
        const std::string name(key.str());
        const auto it = schema().find(name);
        if (it == schema().end()) throw ConfigError("unknown section [" + name + "]");
        const auto* table = node.as_table();
        if (!table) throw ConfigError("[" + name + "] must be a table");
        for (const auto& [inner, _] : *table)
            if (!it->second.contains(std::string(inner.str())))
                throw ConfigError("unknown key " + name + "." + std::string(inner.str()));
    }
    const auto section = [&](const char* name) { return Section(root[name].as_table(), name); };
    ExperimentConfig c;

    const auto topo = section("topology");
    c.topology.kind = topo.string("kind", c.topology.kind);
    static const std::set<std::string> kinds{"complete", "cycle", "path", "star", "erdos-renyi", "edge-list"};
    if (!kinds.contains(c.topology.kind))
        throw ConfigError("topology.kind must be one of complete, cycle, path, star, erdos-renyi, edge-list");
    c.topology.servers = static_cast<int>(topo.integer("servers", c.topology.servers, 0));
    c.topology.p = topo.real("p", c.topology.p);
    c.topology.seed = static_cast<std::uint64_t>(topo.integer("seed", static_cast<long>(c.topology.seed), 0));
    c.topology.path = topo.string("path", c.topology.path);
    if (c.topology.kind == "edge-list" && c.topology.path.empty())
        throw ConfigError("topology.path is required for an edge-list topology");
    if (c.topology.kind != "edge-list" && c.topology.servers < 1) throw ConfigError("topology.servers must be >= 1");
    if (c.topology.kind == "erdos-renyi" && !(c.topology.p > 0.0 && c.topology.p <= 1.0))
        throw ConfigError("topology.p must lie in (0, 1]");

    const auto sched = section("schedule");
    c.schedule.t_c = static_cast<int>(sched.integer("t_c", c.schedule.t_c, 1));
    c.schedule.t_s = static_cast<int>(sched.integer("t_s", c.schedule.t_s, 1));

    c.step.gamma = section("step").real_or_auto("gamma", c.step.gamma);
    if (c.step.gamma && *c.step.gamma < 0.0) throw ConfigError("step.gamma must be >= 0");

    const auto loss = section("loss");
    const auto kind = loss.string("kind", "least-squares");
    if (kind == "least-squares")
        c.loss.kind = LossKind::least_squares;
    else if (kind == "ridge")
        c.loss.kind = LossKind::ridge;
    else
        throw ConfigError("loss.kind must be least-squares or ridge");
    c.loss.ridge = loss.real("ridge", c.loss.ridge);
    if (c.loss.ridge < 0.0) throw ConfigError("loss.ridge must be >= 0");
    if (c.loss.kind == LossKind::least_squares && c.loss.ridge != 0.0)
        throw ConfigError("loss.ridge is only meaningful with loss.kind = \"ridge\"");
    c.loss.region_radius = loss.real_or_auto("region_radius", c.loss.region_radius);
    if (c.loss.region_radius && !(*c.loss.region_radius > 0.0)) throw ConfigError("loss.region_radius must be > 0");

    const auto data = section("data");
    c.data.source = data.string("source", c.data.source);
    if (c.data.source != "synthetic" && c.data.source != "csv")
        throw ConfigError("data.source must be synthetic or csv");
    c.data.path = data.string("path", c.data.path);
    if (c.data.source == "csv" && c.data.path.empty()) throw ConfigError("data.path is required for csv data");
    c.data.clients_per_server = static_cast<int>(data.integer("clients_per_server", c.data.clients_per_server, 1));
    c.data.points_per_client = static_cast<int>(data.integer("points_per_client", c.data.points_per_client, 1));
    c.data.dim = static_cast<int>(data.integer("dim", c.data.dim, 1));
    c.data.w_true = data.reals("w_true", c.data.w_true);
    if (static_cast<int>(c.data.w_true.size()) != c.data.dim)
        throw ConfigError("data.w_true must have data.dim = " + std::to_string(c.data.dim) + " entries");
    c.data.noise_std = data.real("noise_std", c.data.noise_std);
    c.data.feature_std = data.real("feature_std", c.data.feature_std);
    if (c.data.noise_std < 0.0) throw ConfigError("data.noise_std must be >= 0");
    if (!(c.data.feature_std > 0.0)) throw ConfigError("data.feature_std must be > 0");

    const auto init = section("init");
    c.init.w0 = init.reals("w0", c.init.w0);
    c.init.spread = init.real("spread", c.init.spread);
    if (c.init.spread < 0.0) throw ConfigError("init.spread must be >= 0");

    const auto run = section("run");
    c.run.epochs = run.integer("epochs", c.run.epochs, 0);
    c.run.stop_tolerance = run.real("stop_tolerance", c.run.stop_tolerance);
    if (c.run.stop_tolerance < 0.0) throw ConfigError("run.stop_tolerance must be >= 0");
    c.run.seed = static_cast<std::uint64_t>(run.integer("seed", static_cast<long>(c.run.seed), 0));
    c.run.output_dir = run.string("output_dir", c.run.output_dir);
    c.run.threads = static_cast<int>(run.integer("threads", c.run.threads, 1));

    const auto flags = section("flags");
    c.flags.record_iterates = flags.boolean("record_iterates", c.flags.record_iterates);
    c.flags.override_step_gate = flags.boolean("override_step_gate", c.flags.override_step_gate);
    c.flags.gnuplot = flags.boolean("gnuplot", c.flags.gnuplot);
    return c;
}

std::string toml_real(double v) {
    std::string text = format_real(v);
    if (text.find_first_of(".eEn") == std::string::npos) text += ".0";
    return text;
}

std::string toml_string(const std::string& s) {
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"' || ch == '\\') out += '\\';
        out += ch;
    }
    return out + "\"";
}

std::string toml_reals(const std::vector<double>& values) {
    std::string out = "[";
    for (std::size_t k = 0; k < values.size(); ++k) out += (k ? ", " : "") + toml_real(values[k]);
    return out + "]";
}

}  // namespace

ExperimentConfig parse_config(const std::string& toml_text, const ConfigOverrides& overrides) {
    toml::table root;
    try {
        root = toml::parse(toml_text);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << "TOML parse error at line " << e.source().begin.line << ": " << e.description();
        throw ConfigError(msg.str());
    }
    for (const auto& assignment : overrides) apply_override(root, assignment);
    return from_table(root);
}

ExperimentConfig load_config(const std::string& path, const ConfigOverrides& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str(), overrides);
}

std::string to_toml(const ExperimentConfig& c) {
    std::ostringstream out;
    out << "[topology]\n"
        << "kind = " << toml_string(c.topology.kind) << '\n'
        << "servers = " << c.topology.servers << '\n'
        << "p = " << toml_real(c.topology.p) << '\n'
        << "seed = " << c.topology.seed << '\n'
        << "path = " << toml_string(c.topology.path) << "\n\n";
    out << "[schedule]\n"
        << "t_c = " << c.schedule.t_c << '\n'
        << "t_s = " << c.schedule.t_s << "\n\n";
    out << "[step]\n"
        << "gamma = " << (c.step.gamma ? toml_real(*c.step.gamma) : "\"auto\"") << "\n\n";
    out << "[loss]\n"
        << "kind = " << (c.loss.kind == LossKind::ridge ? "\"ridge\"" : "\"least-squares\"") << '\n'
        << "ridge = " << toml_real(c.loss.ridge) << '\n'
        << "region_radius = " << (c.loss.region_radius ? toml_real(*c.loss.region_radius) : "\"auto\"") << "\n\n";
    out << "[data]\n"
        << "source = " << toml_string(c.data.source) << '\n'
        << "path = " << toml_string(c.data.path) << '\n'
        << "clients_per_server = " << c.data.clients_per_server << '\n'
        << "points_per_client = " << c.data.points_per_client << '\n'
        << "dim = " << c.data.dim << '\n'
        << "w_true = " << toml_reals(c.data.w_true) << '\n'
        << "noise_std = " << toml_real(c.data.noise_std) << '\n'
        << "feature_std = " << toml_real(c.data.feature_std) << "\n\n";
    out << "[init]\n"
        << "w0 = " << toml_reals(c.init.w0) << '\n'
        << "spread = " << toml_real(c.init.spread) << "\n\n";
    out << "[run]\n"
        << "epochs = " << c.run.epochs << '\n'
        << "stop_tolerance = " << toml_real(c.run.stop_tolerance) << '\n'
        << "seed = " << c.run.seed << '\n'
        << "output_dir = " << toml_string(c.run.output_dir) << '\n'
        << "threads = " << c.run.threads << "\n\n";
    out << "[flags]\n"
        << "record_iterates = " << (c.flags.record_iterates ? "true" : "false") << '\n'
        << "override_step_gate = " << (c.flags.override_step_gate ? "true" : "false") << '\n'
        << "gnuplot = " << (c.flags.gnuplot ? "true" : "false") << '\n';
    return out.str();
}

std::string config_hash(const ExperimentConfig& config) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : to_toml(config)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace dfl
