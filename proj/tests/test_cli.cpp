#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code;
    std::string out;
};

RunResult run_cli(const std::string& args) {
    const std::string out_file = "/tmp/hgt_cli_out.txt";
    std::string cmd = std::string(HGT_CLI_PATH) + " " + args + " > " + out_file + " 2>&1";
    int status = std::system(cmd.c_str());
    std::ifstream in(out_file);
    std::stringstream ss;
    ss << in.rdbuf();
    return {WEXITSTATUS(status), ss.str()};
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("help for every subcommand exits zero; unknown flags do not") {
    CHECK(run_cli("--help").exit_code == 0);
    for (const char* sub : {"ingest", "synth", "sample", "train", "eval", "export-attention",
                            "param-count"}) {
        auto r = run_cli(std::string(sub) + " --help");
        CHECK(r.exit_code == 0);
        CHECK(r.out.find("--") != std::string::npos);
    }
    CHECK(run_cli("synth --definitely-not-a-flag x --out /tmp/y").exit_code != 0);
    CHECK(run_cli("no-such-subcommand").exit_code != 0);
}

TEST_CASE("toy fixture counts and byte-identical re-ingestion") {
    const std::string raw = "/tmp/hgt_cli_toy_raw";
    const std::string bundle = "/tmp/hgt_cli_toy_bundle";
    fs::remove_all(raw);
    fs::remove_all(bundle);

    auto synth = run_cli("synth --preset toy-academic --out " + raw);
    REQUIRE(synth.exit_code == 0);

    auto ingest = run_cli("ingest --schema " + raw + "/schema.json --nodes " + raw +
                          "/nodes.tsv --edges " + raw + "/edges.tsv --features " + raw +
                          " --out " + bundle);
    REQUIRE(ingest.exit_code == 0);
    auto counts = nlohmann::json::parse(ingest.out);
    CHECK(counts["nodes"]["paper"] == 40);
    CHECK(counts["nodes"]["author"] == 25);
    CHECK(counts["nodes"]["venue"] == 5);
    CHECK(counts["nodes"]["field"] == 10);
    CHECK(counts["nodes"]["institute"] == 3);

    std::string manifest_before = slurp(bundle + "/manifest.json");
    std::string adj_before = slurp(bundle + "/adj.0.bin");
    auto again = run_cli("ingest --schema " + raw + "/schema.json --nodes " + raw +
                         "/nodes.tsv --edges " + raw + "/edges.tsv --features " + raw + " --out " +
                         bundle);
    REQUIRE(again.exit_code == 0);
    CHECK(slurp(bundle + "/manifest.json") == manifest_before);
    CHECK(slurp(bundle + "/adj.0.bin") == adj_before);
}

TEST_CASE("missing features file aborts ingestion naming the node type") {
    const std::string raw = "/tmp/hgt_cli_nofeat";
    fs::remove_all(raw);
    auto synth = run_cli("synth --preset toy-academic --out " + raw);
    REQUIRE(synth.exit_code == 0);
    fs::remove(raw + "/features.venue.f32");
    auto ingest = run_cli("ingest --schema " + raw + "/schema.json --nodes " + raw +
                          "/nodes.tsv --edges " + raw + "/edges.tsv --features " + raw +
                          " --out /tmp/hgt_cli_nofeat_bundle");
    CHECK(ingest.exit_code == 3);
    CHECK(ingest.out.find("venue") != std::string::npos);
}

TEST_CASE("sample subcommand is deterministic and structured") {
    const std::string raw = "/tmp/hgt_cli_sample_raw";
    const std::string bundle = "/tmp/hgt_cli_sample_bundle";
    fs::remove_all(raw);
    fs::remove_all(bundle);
    REQUIRE(run_cli("synth --preset toy-academic --out " + raw).exit_code == 0);
    REQUIRE(run_cli("ingest --schema " + raw + "/schema.json --nodes " + raw + "/nodes.tsv" +
                    " --edges " + raw + "/edges.tsv --features " + raw + " --out " + bundle)
                .exit_code == 0);

    std::ofstream seeds("/tmp/hgt_cli_seeds.txt");
    seeds << "paper 0\npaper 3\n";
    seeds.close();

    auto s1 = run_cli("sample --graph " + bundle +
                      " --seeds /tmp/hgt_cli_seeds.txt --n 4 --depth 2 --rng-seed 11 --out "
                      "/tmp/hgt_cli_sg1.json");
    REQUIRE(s1.exit_code == 0);
    auto s2 = run_cli("sample --graph " + bundle +
                      " --seeds /tmp/hgt_cli_seeds.txt --n 4 --depth 2 --rng-seed 11 --out "
                      "/tmp/hgt_cli_sg2.json");
    REQUIRE(s2.exit_code == 0);
    CHECK(slurp("/tmp/hgt_cli_sg1.json") == slurp("/tmp/hgt_cli_sg2.json"));

    auto j = nlohmann::json::parse(slurp("/tmp/hgt_cli_sg1.json"));
    CHECK(j.contains("config_hash"));
    CHECK(j["seed"] == 11);
    CHECK(j["nodes"].size() >= 2);
    for (const auto& e : j["edges"]) {
        CHECK(e.contains("rel"));
        CHECK(e.contains("time"));
    }
    // the HGT_DATA_DIR fallback reaches the same bundle
    std::string env_cmd = "HGT_DATA_DIR=" + bundle + " " + std::string(HGT_CLI_PATH) +
                          " sample --seeds /tmp/hgt_cli_seeds.txt --n 4 --depth 2 --rng-seed 11 "
                          "--out /tmp/hgt_cli_sg3.json > /dev/null 2>&1";
    REQUIRE(std::system(env_cmd.c_str()) == 0);
    CHECK(slurp("/tmp/hgt_cli_sg3.json") == slurp("/tmp/hgt_cli_sg1.json"));
}

TEST_CASE("train, eval and export-attention round trip through the CLI") {
    const std::string raw = "/tmp/hgt_cli_train_raw";
    const std::string bundle = "/tmp/hgt_cli_train_bundle";
    const std::string run = "/tmp/hgt_cli_train_run";
    fs::remove_all(raw);
    fs::remove_all(bundle);
    fs::remove_all(run);
    REQUIRE(run_cli("synth --papers 60 --authors 30 --fields 5 --venues 5 --institutes 2"
                    " --classes 3 --correlation 0.9 --seed 1 --out " +
                    raw)
                .exit_code == 0);
    REQUIRE(run_cli("ingest --schema " + raw + "/schema.json --nodes " + raw + "/nodes.tsv" +
                    " --edges " + raw + "/edges.tsv --features " + raw + " --out " + bundle)
                .exit_code == 0);

    std::ofstream cfg("/tmp/hgt_cli_run.json");
    cfg << R"({"seed": 4, "dtype": "f32",
               "sampler": {"n": 6, "depth": 2},
               "model": {"hidden_dim": 8, "heads": 2, "layers": 2},
               "schedule": {"base_lr": 0.005, "min_lr": 1e-6, "epochs": 2},
               "task": {"kind": "node-class", "classes": 3, "seed_batch": 32}})";
    cfg.close();

    auto train = run_cli("train --graph " + bundle + " --config /tmp/hgt_cli_run.json --out " + run);
    REQUIRE_MESSAGE(train.exit_code == 0, train.out);
    CHECK(fs::exists(run + "/history.csv"));
    CHECK(fs::exists(run + "/checkpoint/params.bin"));
    auto tj = nlohmann::json::parse(train.out);
    CHECK(tj["epochs"] == 2);

    auto eval = run_cli("eval --graph " + bundle + " --ckpt " + run +
                        " --out /tmp/hgt_cli_metrics.json --per-query /tmp/hgt_cli_pq.csv");
    REQUIRE_MESSAGE(eval.exit_code == 0, eval.out);
    auto ej = nlohmann::json::parse(slurp("/tmp/hgt_cli_metrics.json"));
    CHECK(ej["task"] == "node-class");
    CHECK(ej.contains("ndcg"));
    CHECK(ej.contains("mrr"));
    CHECK(ej.contains("n_queries"));
    CHECK(slurp("/tmp/hgt_cli_pq.csv").find("query_id") != std::string::npos);

    auto eval2 = run_cli("eval --graph " + bundle + " --ckpt " + run +
                         " --out /tmp/hgt_cli_metrics2.json");
    REQUIRE(eval2.exit_code == 0);
    CHECK(slurp("/tmp/hgt_cli_metrics.json") == slurp("/tmp/hgt_cli_metrics2.json"));

    std::ofstream seeds("/tmp/hgt_cli_att_seeds.txt");
    seeds << "paper 1\n";
    seeds.close();
    auto att = run_cli("export-attention --graph " + bundle + " --ckpt " + run +
                       " --seeds /tmp/hgt_cli_att_seeds.txt --rng-seed 2 --out /tmp/hgt_cli_att.csv");
    REQUIRE_MESSAGE(att.exit_code == 0, att.out);
    std::string att_csv = slurp("/tmp/hgt_cli_att.csv");
    CHECK(att_csv.find("target_type") != std::string::npos);
    CHECK(att_csv.find(",a1") != std::string::npos);
}

TEST_CASE("param-count reports the enumerated totals") {
    const std::string raw = "/tmp/hgt_cli_pc_raw";
    fs::remove_all(raw);
    REQUIRE(run_cli("synth --preset toy-academic --out " + raw).exit_code == 0);
    auto pc = run_cli("param-count --schema " + raw + "/schema.json --d 32 --heads 4 --layers 2");
    REQUIRE(pc.exit_code == 0);
    auto j = nlohmann::json::parse(pc.out);
    CHECK(j["per_layer"].get<int64_t>() > 0);
    CHECK(j["total"].get<int64_t>() ==
          j["per_layer"].get<int64_t>() * 2 + j["adapters"].get<int64_t>());

    auto shared = run_cli("param-count --schema " + raw + "/schema.json --d 32 --heads 4"
                          " --layers 2 --no-heter");
    REQUIRE(shared.exit_code == 0);
    auto js = nlohmann::json::parse(shared.out);
    CHECK(js["per_layer"].get<int64_t>() < j["per_layer"].get<int64_t>());
}
