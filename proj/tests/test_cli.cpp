#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <fstream>

#include "pme/cli.hpp"
#include "pme/graph.hpp"
#include "test_util.hpp"

using namespace pme;
using nlohmann::json;
using testutil::TempDir;

namespace {

json read_json(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    json j;
    in >> j;
    return j;
}

int run(std::initializer_list<std::string> args) { return cli::dispatch(std::vector<std::string>(args)); }

}  // namespace

TEST_CASE("gen writes the requested synthetic graphs") {
    TempDir tmp;
    CHECK(run({"gen", "--kind", "cycle", "--n", "40", "--out", tmp.file("c40.edges")}) == 0);
    const Graph g = load_edge_list(tmp.file("c40.edges"));
    CHECK(g.n == 40);
    CHECK(g.edge_count() == 40);

    CHECK(run({"gen", "--kind", "ring_of_trees", "--ring", "8", "--branching", "2", "--depth", "2", "--n", "40",
               "--out", tmp.file("mix.edges")}) == 0);
    const Graph mix = load_edge_list(tmp.file("mix.edges"));
    CHECK(mix.n == 40);
    CHECK(mix.edge_count() == 40);

    CHECK(run({"gen", "--kind", "moebius", "--out", tmp.file("x.edges")}) == 1);
}

TEST_CASE("usage errors exit 1 without partial outputs") {
    TempDir tmp;
    CHECK(run({"recon", "--sig", "q9"}) == 1);  // missing required keys also count
    CHECK(run({"recon", "--graph", "nope.edges", "--sig", "q9", "--out", tmp.file("r")}) == 1);
    CHECK_FALSE(std::filesystem::exists(tmp.file("r/report.json")));
    CHECK(run({"recon", "--bogus-flag", "1"}) == 1);
    CHECK(run({"frobnicate"}) == 1);
    // runtime error (missing file) exits 2
    CHECK(run({"curvature", "--graph", tmp.file("missing.edges")}) == 2);
}

TEST_CASE("signature parse error names the bad term") {
    TempDir tmp;
    CHECK(run({"gen", "--kind", "cycle", "--n", "12", "--out", tmp.file("c.edges")}) == 0);
    CHECK(run({"recon", "--graph", tmp.file("c.edges"), "--sig", "q9", "--out", tmp.file("out")}) == 1);
}

TEST_CASE("recon run produces the full report set and is deterministic") {
    TempDir tmp;
    REQUIRE(run({"gen", "--kind", "cycle", "--n", "24", "--out", tmp.file("c.edges")}) == 0);
    auto recon = [&](const std::string& out) {
        return run({"recon", "--graph", tmp.file("c.edges"), "--sig", "h2,s1", "--seed", "5", "--opt.epochs", "60",
                    "--out", tmp.file(out)});
    };
    REQUIRE(recon("a") == 0);
    REQUIRE(recon("b") == 0);
    CHECK(std::filesystem::exists(tmp.file("a/report.json")));
    CHECK(std::filesystem::exists(tmp.file("a/trace.csv")));
    CHECK(std::filesystem::exists(tmp.file("a/checkpoint.bin")));
    CHECK(std::filesystem::exists(tmp.file("a/summary.csv")));

    json ja = read_json(tmp.file("a/report.json"));
    json jb = read_json(tmp.file("b/report.json"));
    CHECK(ja.contains("timing"));
    ja.erase("timing");
    jb.erase("timing");
    ja["config"].erase("out");
    jb["config"].erase("out");
    CHECK(ja.dump() == jb.dump());  // bitwise identical modulo wall-clock and paths

    CHECK(ja["eval"].contains("d_avg"));
    CHECK(ja["config"]["opt.seed"] == 5);
    CHECK(ja["signature"] == "h2,s1");

    // trace has the documented header
    std::ifstream trace(tmp.file("a/trace.csv"));
    std::string header;
    std::getline(trace, header);
    CHECK(header == "epoch,L_base,L_LP,L_e,s1,s2");
}

TEST_CASE("eval reloads a checkpoint and refuses mismatches") {
    TempDir tmp;
    REQUIRE(run({"gen", "--kind", "tree", "--branching", "2", "--n", "20", "--out", tmp.file("t.edges")}) == 0);
    REQUIRE(run({"gen", "--kind", "cycle", "--n", "20", "--out", tmp.file("c.edges")}) == 0);
    REQUIRE(run({"recon", "--graph", tmp.file("t.edges"), "--sig", "h2", "--seed", "1", "--opt.epochs", "40",
                 "--out", tmp.file("run")}) == 0);
    CHECK(run({"eval", "--graph", tmp.file("t.edges"), "--checkpoint", tmp.file("run/checkpoint.bin"), "--out",
               tmp.file("ev")}) == 0);
    const json je = read_json(tmp.file("ev/report.json"));
    const json jr = read_json(tmp.file("run/report.json"));
    CHECK(je["eval"]["d_avg"] == jr["eval"]["d_avg"]);
    // wrong graph: config-hash mismatch is a runtime refusal
    CHECK(run({"eval", "--graph", tmp.file("c.edges"), "--checkpoint", tmp.file("run/checkpoint.bin"), "--out",
               tmp.file("ev2")}) == 2);
}

TEST_CASE("curvature subcommand emits fractions and a suggestion") {
    TempDir tmp;
    REQUIRE(run({"gen", "--kind", "tree", "--branching", "2", "--n", "40", "--out", tmp.file("t.edges")}) == 0);
    REQUIRE(run({"curvature", "--graph", tmp.file("t.edges"), "--budget", "200", "--suggest_dim", "10", "--out",
                 tmp.file("curv.json")}) == 0);
    const json j = read_json(tmp.file("curv.json"));
    CHECK(j["fractions"].contains("negative"));
    CHECK(j["suggested_signature"].is_string());
    const double total = j["fractions"]["negative"].get<double>() + j["fractions"]["near_zero"].get<double>() +
                         j["fractions"]["positive"].get<double>();
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    // a binary tree probes mostly hyperbolic
    const std::string sig = j["suggested_signature"].get<std::string>();
    CHECK(sig.find('h') != std::string::npos);
}

TEST_CASE("config file merges beneath flags") {
    TempDir tmp;
    REQUIRE(run({"gen", "--kind", "cycle", "--n", "16", "--out", tmp.file("c.edges")}) == 0);
    {
        std::ofstream cfg(tmp.file("cfg.json"));
        cfg << R"({"opt.epochs": 30, "opt.seed": 9, "gating.enabled": false})";
    }
    REQUIRE(run({"recon", "--graph", tmp.file("c.edges"), "--sig", "e2", "--out", tmp.file("r"), "--config",
                 tmp.file("cfg.json"), "--opt.seed", "4"}) == 0);
    const json j = read_json(tmp.file("r/report.json"));
    CHECK(j["config"]["opt.epochs"] == 30);     // from file
    CHECK(j["config"]["opt.seed"] == 4);        // flag wins
    CHECK(j["config"]["gating.enabled"] == false);

    {
        std::ofstream cfg(tmp.file("bad.json"));
        cfg << R"({"opt.bogus": 1})";
    }
    CHECK(run({"recon", "--graph", tmp.file("c.edges"), "--sig", "e2", "--out", tmp.file("r2"), "--config",
               tmp.file("bad.json")}) == 1);
}

TEST_CASE("help lists every accepted dotted key") {
    for (const std::string& sub : cli::subcommand_names()) {
        const std::string help = cli::help_text(sub);
        for (const auto& opt : cli::schema_for(sub)) {
            CHECK_MESSAGE(help.find("--" + std::string(opt.key)) != std::string::npos,
                          "subcommand ", sub, " missing key ", opt.key);
        }
    }
    // dispatch prints help with exit 0
    CHECK(run({"recon", "--help"}) == 0);
    CHECK(run({"--help"}) == 0);
}

TEST_CASE("kg train and eval round trip on a toy store") {
    TempDir tmp;
    std::filesystem::create_directories(tmp.file("kgdata"));
    {
        std::ofstream train(tmp.file("kgdata/train.txt"));
        train << "a\tup\tb\nb\tup\tc\nc\tup\td\nd\tup\te\ne\tup\tf\nb\tdown\ta\nc\tdown\tb\nd\tdown\tc\n";
        std::ofstream valid(tmp.file("kgdata/valid.txt"));
        valid << "e\tdown\td\n";
        std::ofstream test(tmp.file("kgdata/test.txt"));
        test << "f\tdown\te\n";
    }
    REQUIRE(run({"kg", "train", "--data", tmp.file("kgdata"), "--sig", "e4", "--opt.epochs", "60", "--out",
                 tmp.file("kgrun")}) == 0);
    CHECK(std::filesystem::exists(tmp.file("kgrun/report.json")));
    CHECK(std::filesystem::exists(tmp.file("kgrun/checkpoint.bin")));
    const json j = read_json(tmp.file("kgrun/report.json"));
    CHECK(j["eval"].contains("mrr"));

    REQUIRE(run({"kg", "eval", "--data", tmp.file("kgdata"), "--checkpoint", tmp.file("kgrun/checkpoint.bin"),
                 "--out", tmp.file("kgev")}) == 0);
    const json je = read_json(tmp.file("kgev/report.json"));
    CHECK(je["eval"]["mrr"] == j["eval"]["mrr"]);
}
