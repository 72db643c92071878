#include "dfl/config.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace dfl {
namespace {

TEST(ParseConfig, EmptyGivesDefaults) {
    const auto c = parse_config("");
    EXPECT_EQ(c.topology.kind, "cycle");
    EXPECT_EQ(c.topology.servers, 5);
    EXPECT_EQ(c.schedule.t_c, 250);
    EXPECT_EQ(c.schedule.t_s, 25);
    EXPECT_FALSE(c.step.gamma);
    EXPECT_EQ(c.loss.kind, LossKind::least_squares);
    EXPECT_FALSE(c.loss.region_radius);
    EXPECT_EQ(c.data.clients_per_server, 5);
    EXPECT_EQ(c.data.points_per_client, 100);
    EXPECT_EQ(c.data.w_true, (std::vector<double>{5.0, 2.0}));
    EXPECT_EQ(c.run.epochs, 200);
    EXPECT_EQ(c.run.seed, 42u);
}

TEST(ParseConfig, ReadsEveryTable) {
    const auto c = parse_config(R"(
[topology]
kind = "erdos-renyi"
servers = 7
p = 0.3
seed = 9
[schedule]
t_c = 10
t_s = 3
[step]
gamma = 1e-3
[loss]
kind = "ridge"
ridge = 0.25
region_radius = 12
[data]
clients_per_server = 2
points_per_client = 8
dim = 3
w_true = [1, 2.5, -1]
noise_std = 0
feature_std = 2.0
[init]
w0 = [0.5, 0.5, 0.5]
spread = 0.1
[run]
epochs = 17
stop_tolerance = 1e-9
seed = 5
output_dir = "out"
threads = 3
[flags]
record_iterates = true
override_step_gate = true
gnuplot = true
)");
    EXPECT_EQ(c.topology.kind, "erdos-renyi");
    EXPECT_EQ(c.topology.servers, 7);
    EXPECT_EQ(c.topology.p, 0.3);
    EXPECT_EQ(c.topology.seed, 9u);
    EXPECT_EQ(c.schedule.t_c, 10);
    EXPECT_EQ(*c.step.gamma, 1e-3);
    EXPECT_EQ(c.loss.kind, LossKind::ridge);
    EXPECT_EQ(c.loss.ridge, 0.25);
    EXPECT_EQ(*c.loss.region_radius, 12.0);
    EXPECT_EQ(c.data.w_true, (std::vector<double>{1, 2.5, -1}));
    EXPECT_EQ(c.data.noise_std, 0.0);
    EXPECT_EQ(c.init.w0.size(), 3u);
    EXPECT_EQ(c.run.epochs, 17);
    EXPECT_EQ(c.run.output_dir, "out");
    EXPECT_EQ(c.run.threads, 3);
    EXPECT_TRUE(c.flags.record_iterates && c.flags.override_step_gate && c.flags.gnuplot);
    const auto spec = c.synthetic_spec();
    EXPECT_EQ(spec.m, 7);
    EXPECT_EQ(spec.n, 2);
    EXPECT_EQ(spec.seed, 5u);
}

TEST(ParseConfig, RejectsUnknownNames) {
    EXPECT_THROW(parse_config("[topolgy]\nkind = \"cycle\"\n"), ConfigError);
    EXPECT_THROW(parse_config("[schedule]\nt_e = 3\n"), ConfigError);
    EXPECT_THROW(parse_config("stray = 1\n"), ConfigError);
}

TEST(ParseConfig, RejectsTypeAndRangeErrors) {
    for (const char* text : {
             "[schedule]\nt_c = 0\n",
             "[schedule]\nt_s = \"many\"\n",
             "[schedule]\nt_c = 2.5\n",
             "[step]\ngamma = -1.0\n",
             "[step]\ngamma = \"fast\"\n",
             "[topology]\nkind = \"torus\"\n",
             "[topology]\nkind = \"erdos-renyi\"\np = 0.0\n",
             "[topology]\nkind = \"edge-list\"\n",
             "[loss]\nkind = \"hinge\"\n",
             "[loss]\nridge = 0.5\n",
             "[loss]\nregion_radius = 0\n",
             "[data]\nsource = \"csv\"\n",
             "[data]\ndim = 3\n",
             "[data]\nnoise_std = -0.1\n",
             "[data]\nw_true = [1, \"x\"]\n",
             "[init]\nspread = -1\n",
             "[run]\nthreads = 0\n",
             "[flags]\ngnuplot = 1\n",
             "[topology\n",
         })
        EXPECT_THROW(parse_config(text), ConfigError) << text;
}

TEST(ParseConfig, OverridesApplyOnTop) {
    const auto c = parse_config("[schedule]\nt_c = 10\n",
                                {"schedule.t_c=20", "topology.kind=star", "step.gamma=0.5", "flags.gnuplot=true",
                                 "data.w_true=[1.0, 2.0]"});
    EXPECT_EQ(c.schedule.t_c, 20);
    EXPECT_EQ(c.topology.kind, "star");
    EXPECT_EQ(*c.step.gamma, 0.5);
    EXPECT_TRUE(c.flags.gnuplot);
    EXPECT_EQ(parse_config("", {"step.gamma=auto"}).step.gamma, std::nullopt);
    EXPECT_THROW(parse_config("", {"schedule.t_c"}), ConfigError);
    EXPECT_THROW(parse_config("", {"schedule.bogus=1"}), ConfigError);
    EXPECT_THROW(parse_config("", {"schedule.t_c=-4"}), ConfigError);
}

TEST(ToToml, RoundTripIsFixedPoint) {
    const auto c = parse_config("[step]\ngamma = 0.1\n[loss]\nkind = \"ridge\"\nridge = 0.3\n[init]\nspread = 1\n",
                                {"data.w_true=[0.1, 2.0]"});
    const std::string once = to_toml(c);
    const auto again = parse_config(once);
    EXPECT_EQ(to_toml(again), once);
    EXPECT_EQ(*again.step.gamma, 0.1);
    EXPECT_EQ(again.data.w_true[0], 0.1);
    EXPECT_EQ(config_hash(again), config_hash(c));
    EXPECT_NE(once.find("spread = 1.0"), std::string::npos);
    EXPECT_EQ(to_toml(parse_config(to_toml(parse_config("")))), to_toml(parse_config("")));
}

TEST(ConfigHash, StableAndSensitive) {
    const auto a = parse_config("");
    const auto h = config_hash(a);
    EXPECT_EQ(h.size(), 16u);
    EXPECT_EQ(h, config_hash(parse_config("[schedule]\nt_c = 250\n")));
    EXPECT_NE(h, config_hash(parse_config("", {"schedule.t_c=251"})));
}

TEST(LoadConfig, ReadsFileAndReportsMissing) {
    const auto path = std::filesystem::temp_directory_path() / "dfl_config_test.toml";
    {
        std::ofstream out(path);
        out << "[run]\nepochs = 3\n";
    }
    EXPECT_EQ(load_config(path.string()).run.epochs, 3);
    std::filesystem::remove(path);
    EXPECT_THROW(load_config(path.string()), ConfigError);
}

}  // namespace
}  // namespace dfl
