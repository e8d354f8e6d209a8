#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "hgt/graph.hpp"
#include "hgt/model.hpp"
#include "hgt/run_config.hpp"
#include "hgt/sampler.hpp"
#include "hgt/synth.hpp"
#include "hgt/tasks.hpp"
#include "hgt/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string default_graph_dir() {
    const char* env = std::getenv("HGT_DATA_DIR");
    return env ? env : "";
}

void require_graph_dir(std::string& dir) {
    if (dir.empty()) dir = default_graph_dir();
    if (dir.empty())
        throw hgt::Error::config("BadConfig", "no graph directory (use --graph or HGT_DATA_DIR)");
}

void emit(const json& j, const std::string& out_path) {
    std::string text = j.dump(2) + "\n";
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) throw hgt::Error::data("WriteFailed", "cannot write '" + out_path + "'");
        out << text;
    }
    std::cout << text;
}

std::vector<hgt::Seed> load_seeds(const hgt::HeteroGraph& graph, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw hgt::Error::data("MissingFile", "cannot open seeds file '" + path + "'");
    std::vector<hgt::Seed> seeds;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string type;
        int64_t id;
        if (!(ss >> type >> id)) {
            if (lineno == 1 && line.starts_with("type")) continue;
            throw hgt::Error::data("BadRecord", "seeds line " + std::to_string(lineno));
        }
        hgt::Seed seed;
        seed.node = {graph.schema().node_type(type), id};
        hgt::Timestamp t;
        if (ss >> t) seed.time = t;
        seeds.push_back(seed);
    }
    return seeds;
}

uint64_t fnv_hash(const std::string& text) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

int cmd_ingest(const std::string& schema_path, const std::string& nodes, const std::string& edges,
               std::string features_dir, const std::string& out_dir, bool self_loops) {
    hgt::Schema schema = hgt::Schema::load(schema_path);
    if (features_dir.empty()) features_dir = fs::path(nodes).parent_path().string();
    if (features_dir.empty()) features_dir = ".";
    hgt::HeteroGraph graph = hgt::ingest_graph(schema, nodes, edges, features_dir, self_loops);
    const uint64_t config_hash =
        fnv_hash(graph.schema().to_json() + (self_loops ? "self_loops" : ""));
    graph.save(out_dir, config_hash, 0);
    for (const auto& entry : fs::directory_iterator(features_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.starts_with("labels.") && name.ends_with(".tsv"))
            fs::copy_file(entry.path(), fs::path(out_dir) / name,
                          fs::copy_options::overwrite_existing);
    }

    json counts;
    counts["config_hash"] = config_hash;
    counts["seed"] = 0;
    counts["out"] = out_dir;
    counts["nodes"] = json::object();
    for (hgt::NodeTypeId t = 0; t < graph.schema().num_node_types(); ++t)
        counts["nodes"][graph.schema().node_info(t).name] = graph.num_nodes(t);
    counts["edges"] = json::object();
    for (hgt::EdgeTypeId e = 0; e < graph.schema().num_edge_types(); ++e)
        counts["edges"][graph.schema().edge_info(e).name] = graph.edge_count(e);
    counts["total_nodes"] = graph.total_nodes();
    counts["total_edges"] = graph.total_edges();
    emit(counts, "");
    return 0;
}

int cmd_synth(const hgt::SynthConfig& cfg, const std::string& out_dir) {
    hgt::write_synth_graph(cfg, out_dir);
    json j = json::parse(hgt::synth_config_json(cfg));
    j["config_hash"] = fnv_hash(hgt::synth_config_json(cfg));
    j["out"] = out_dir;
    emit(j, "");
    return 0;
}

int cmd_sample(const std::string& graph_dir, const std::string& seeds_path, int64_t n,
               int64_t depth, uint64_t rng_seed, const std::string& out_path) {
    hgt::HeteroGraph graph = hgt::HeteroGraph::load(graph_dir);
    auto seeds = load_seeds(graph, seeds_path);
    hgt::SamplerConfig cfg;
    cfg.nodes_per_type = n;
    cfg.depth = depth;
    cfg.rng_seed = rng_seed;
    hgt::SampledSubgraph sg = hgt::hg_sample(graph, seeds, cfg);

    json j;
    j["config_hash"] =
        fnv_hash(graph.schema().to_json() + std::to_string(n) + "/" + std::to_string(depth));
    j["seed"] = rng_seed;
    j["nodes"] = json::array();
    for (hgt::NodeTypeId t = 0; t < graph.schema().num_node_types(); ++t)
        for (const auto& entry : sg.entries[t])
            j["nodes"].push_back({{"type", graph.schema().node_info(t).name},
                                  {"id", entry.id},
                                  {"time", entry.time}});
    j["edges"] = json::array();
    for (hgt::EdgeTypeId e = 0; e < graph.schema().num_edge_types(); ++e) {
        const auto& info = graph.schema().edge_info(e);
        for (const auto& edge : sg.adjacency[e]) {
            const auto& s = sg.entries[info.src_type][edge.src_entry];
            const auto& t = sg.entries[info.tgt_type][edge.tgt_entry];
            j["edges"].push_back({{"rel", info.name},
                                  {"src_type", graph.schema().node_info(info.src_type).name},
                                  {"src", s.id},
                                  {"src_time", s.time},
                                  {"tgt_type", graph.schema().node_info(info.tgt_type).name},
                                  {"tgt", t.id},
                                  {"tgt_time", t.time},
                                  {"time", edge.time}});
        }
    }
    emit(j, out_path);
    return 0;
}

int cmd_train(const std::string& graph_dir, const std::string& config_path,
              const std::string& task_override, const std::string& out_dir, bool ablate) {
    hgt::HeteroGraph graph = hgt::HeteroGraph::load(graph_dir);
    hgt::RunConfig cfg = config_path.empty() ? hgt::RunConfig{} : hgt::RunConfig::load(config_path);
    if (!task_override.empty()) {
        if (task_override == "node-class")
            cfg.task.kind = hgt::TaskKind::node_class;
        else if (task_override == "link")
            cfg.task.kind = hgt::TaskKind::link;
        else
            throw hgt::Error::config("BadConfig", "unknown task '" + task_override + "'");
    }
    if (ablate) {
        auto rows = hgt::run_ablation(graph, cfg, graph_dir, out_dir);
        json j;
        j["config_hash"] = cfg.hash(graph.schema());
        j["seed"] = cfg.seed;
        j["ablation"] = json::array();
        for (const auto& r : rows)
            j["ablation"].push_back({{"variant", r.variant},
                                     {"best_val_loss", r.best_val_loss},
                                     {"test_ndcg", r.test_ndcg},
                                     {"test_mrr", r.test_mrr},
                                     {"test_accuracy", r.test_accuracy}});
        emit(j, "");
        return 0;
    }
    hgt::FitResult result = hgt::fit(graph, cfg, graph_dir, out_dir);
    json j;
    j["config_hash"] = cfg.hash(graph.schema());
    j["seed"] = cfg.seed;
    j["best_epoch"] = result.best_epoch;
    j["best_val_loss"] = result.best_val_loss;
    j["checkpoint"] = result.checkpoint_dir;
    j["history"] = out_dir.empty() ? "" : out_dir + "/history.csv";
    j["epochs"] = result.history.size();
    emit(j, "");
    return 0;
}

int cmd_eval(const std::string& graph_dir, const std::string& ckpt_dir, const std::string& out_json,
             const std::string& per_query_csv) {
    hgt::HeteroGraph graph = hgt::HeteroGraph::load(graph_dir);
    hgt::RunConfig cfg = hgt::RunConfig::load(ckpt_dir + "/config.json");
    hgt::EvalResult result = hgt::evaluate(graph, ckpt_dir, graph_dir);
    json j;
    j["task"] = result.task;
    j["ndcg"] = result.ndcg;
    j["mrr"] = result.mrr;
    j["n_queries"] = result.n_queries;
    if (result.task == "node-class") j["accuracy"] = result.accuracy;
    j["config_hash"] = cfg.hash(graph.schema());
    j["seed"] = cfg.seed;
    emit(j, out_json);
    if (!per_query_csv.empty()) {
        std::ofstream out(per_query_csv);
        if (!out) throw hgt::Error::data("WriteFailed", "cannot write '" + per_query_csv + "'");
        out << "# config_hash=" << cfg.hash(graph.schema()) << " seed=" << cfg.seed << "\n";
        out << result.per_query_header << "\n";
        for (const auto& row : result.per_query_rows) out << row << "\n";
    }
    return 0;
}

int cmd_export_attention(const std::string& graph_dir, const std::string& ckpt_dir,
                         const std::string& seeds_path, int64_t n, int64_t depth, uint64_t rng_seed,
                         const std::string& out_csv) {
    hgt::HeteroGraph graph = hgt::HeteroGraph::load(graph_dir);
    hgt::RunConfig cfg = hgt::RunConfig::load(ckpt_dir + "/config.json");
    auto seeds = load_seeds(graph, seeds_path);
    hgt::SamplerConfig sc = cfg.sampler;
    if (n > 0) sc.nodes_per_type = n;
    if (depth > 0) sc.depth = depth;
    sc.rng_seed = rng_seed;
    hgt::SampledSubgraph sg = hgt::hg_sample(graph, seeds, sc);

    hgt::AttentionSink sink;
    const std::string store_dir = ckpt_dir + "/checkpoint";
    const std::string dtype = hgt::ParamStoreT<double>::stored_dtype(store_dir);
    auto run = [&](auto real_tag) {
        using Real = decltype(real_tag);
        hgt::HgtModelT<Real> model(graph.schema(), cfg.model);
        // task heads live in the same checkpoint; declare them so load matches
        if (cfg.task.kind == hgt::TaskKind::node_class)
            hgt::ClassificationHeadT<Real>(model.params(), cfg.model.hidden_dim, cfg.task.classes);
        else
            hgt::NtnHeadT<Real>(model.params(), cfg.model.hidden_dim, cfg.task.ntn_slices);
        model.params().load(store_dir);
        hgt::TapeT<Real> tape;
        model.forward(tape, sg, &sink);
        tape.clear();
    };
    if (dtype == "f64")
        run(double{});
    else
        run(float{});

    std::ofstream out(out_csv);
    if (!out) throw hgt::Error::data("WriteFailed", "cannot write '" + out_csv + "'");
    out << "# config_hash=" << cfg.hash(graph.schema()) << " seed=" << rng_seed << "\n";
    out << "layer,target_type,target_id,target_time,source_type,source_id,source_time,relation";
    for (int64_t i = 0; i < cfg.model.heads; ++i) out << ",a" << i;
    out << "\n";
    for (const auto& rec : sink) {
        out << rec.layer << "," << graph.schema().node_info(rec.tgt_type).name << "," << rec.tgt.id
            << "," << rec.tgt.time << "," << graph.schema().node_info(rec.src_type).name << ","
            << rec.src.id << "," << rec.src.time << ","
            << graph.schema().edge_info(rec.edge_type).name;
        for (double w : rec.weights) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.17g", w);
            out << "," << buf;
        }
        out << "\n";
    }
    std::cout << "{\"edges\": " << sink.size() << ", \"out\": \"" << out_csv << "\"}\n";
    return 0;
}

int cmd_param_count(const std::string& schema_path, int64_t d, int64_t heads, int64_t layers,
                    bool no_heter, bool no_rte) {
    hgt::Schema schema = hgt::Schema::load(schema_path);
    hgt::HgtConfig cfg;
    cfg.hidden_dim = d;
    cfg.heads = heads;
    cfg.layers = layers;
    cfg.use_heter = !no_heter;
    cfg.use_rte = !no_rte;
    hgt::HgtModelT<double> model(schema, cfg);
    json j;
    j["node_types"] = schema.num_node_types();
    j["edge_types"] = schema.num_edge_types();
    j["meta_relations"] = schema.relations().size();
    j["hidden_dim"] = d;
    j["heads"] = heads;
    j["layers"] = layers;
    j["use_heter"] = cfg.use_heter;
    j["use_rte"] = cfg.use_rte;
    j["per_layer"] = model.layer_param_count();
    j["adapters"] = model.adapter_param_count();
    j["total"] = model.params().param_count();
    j["config_hash"] = fnv_hash(schema.to_json());
    j["seed"] = 0;
    emit(j, "");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hgt: heterogeneous graph transformer engine"};
    app.require_subcommand(1);

    auto* ingest = app.add_subcommand("ingest", "validate and pack a graph into a binary bundle");
    std::string in_schema, in_nodes, in_edges, in_features, in_out;
    bool in_self_loops = false;
    ingest->add_option("--schema", in_schema, "schema.json path")->required();
    ingest->add_option("--nodes", in_nodes, "nodes.tsv path")->required();
    ingest->add_option("--edges", in_edges, "edges.tsv path")->required();
    ingest->add_option("--features", in_features, "directory holding features.<type>.f32");
    ingest->add_option("--out", in_out, "output bundle directory")->required();
    ingest->add_flag("--self-loops", in_self_loops, "add one self-loop edge type per node type");

    auto* synth = app.add_subcommand("synth", "generate a synthetic planted-class graph");
    hgt::SynthConfig sy;
    std::string sy_out, sy_preset;
    synth->add_option("--out", sy_out, "output directory")->required();
    synth->add_option("--preset", sy_preset, "toy-academic: the bundled small fixture");
    synth->add_option("--papers", sy.papers, "paper count");
    synth->add_option("--authors", sy.authors, "author count");
    synth->add_option("--fields", sy.fields, "field count");
    synth->add_option("--venues", sy.venues, "venue count");
    synth->add_option("--institutes", sy.institutes, "institute count");
    synth->add_option("--classes", sy.classes, "planted class count");
    synth->add_option("--correlation", sy.correlation, "class-structure correlation in [0,1]");
    synth->add_option("--cites", sy.cites_per_paper, "citations per paper");
    synth->add_option("--fields-per-paper", sy.fields_per_paper, "field links per paper");
    synth->add_option("--authors-per-paper", sy.authors_per_paper, "authors per paper");
    synth->add_option("--time-range", sy.time_range, "timestamps are uniform in [0, range)");
    synth->add_option("--seed", sy.seed, "generator seed");

    auto* sample = app.add_subcommand("sample", "sample one subgraph and dump it as JSON");
    std::string sa_graph, sa_seeds, sa_out;
    int64_t sa_n = 32, sa_depth = 3;
    uint64_t sa_seed = 0;
    sample->add_option("--graph", sa_graph, "graph bundle directory (or HGT_DATA_DIR)");
    sample->add_option("--seeds", sa_seeds, "seed file: type id [timestamp] per line")->required();
    sample->add_option("--n", sa_n, "nodes sampled per type per round");
    sample->add_option("--depth", sa_depth, "sampling rounds");
    sample->add_option("--rng-seed", sa_seed, "sampler rng seed");
    sample->add_option("--out", sa_out, "output subgraph.json")->required();

    auto* train = app.add_subcommand("train", "train a model on a graph bundle");
    std::string tr_graph, tr_config, tr_task, tr_out;
    bool tr_ablate = false;
    train->add_option("--graph", tr_graph, "graph bundle directory (or HGT_DATA_DIR)");
    train->add_option("--config", tr_config, "run.json with every knob");
    train->add_option("--task", tr_task, "node-class | link (overrides run.json)");
    train->add_option("--out", tr_out, "output directory for history + checkpoint")->required();
    train->add_flag("--ablate", tr_ablate, "run full/-heter/-rte under identical seeds");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    std::string ev_graph, ev_ckpt, ev_out, ev_csv;
    eval->add_option("--graph", ev_graph, "graph bundle directory (or HGT_DATA_DIR)");
    eval->add_option("--ckpt", ev_ckpt, "training output directory")->required();
    eval->add_option("--out", ev_out, "metrics JSON path (also printed)");
    eval->add_option("--per-query", ev_csv, "per-query CSV path");

    auto* expatt = app.add_subcommand("export-attention", "dump per-edge attention as CSV");
    std::string ex_graph, ex_ckpt, ex_seeds, ex_out;
    int64_t ex_n = 0, ex_depth = 0;
    uint64_t ex_seed = 0;
    expatt->add_option("--graph", ex_graph, "graph bundle directory (or HGT_DATA_DIR)");
    expatt->add_option("--ckpt", ex_ckpt, "training output directory")->required();
    expatt->add_option("--seeds", ex_seeds, "seed file")->required();
    expatt->add_option("--n", ex_n, "override sampled nodes per type");
    expatt->add_option("--depth", ex_depth, "override sampling rounds");
    expatt->add_option("--rng-seed", ex_seed, "sampler rng seed");
    expatt->add_option("--out", ex_out, "output CSV")->required();

    auto* pc = app.add_subcommand("param-count", "report trainable parameter counts");
    std::string pc_schema;
    int64_t pc_d = 256, pc_h = 8, pc_layers = 3;
    bool pc_no_heter = false, pc_no_rte = false;
    pc->add_option("--schema", pc_schema, "schema.json path")->required();
    pc->add_option("--d", pc_d, "hidden dimension");
    pc->add_option("--heads", pc_h, "attention heads");
    pc->add_option("--layers", pc_layers, "layer count");
    pc->add_flag("--no-heter", pc_no_heter, "share one weight set across meta relations");
    pc->add_flag("--no-rte", pc_no_rte, "drop the temporal encoder");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(ingest))
            return cmd_ingest(in_schema, in_nodes, in_edges, in_features, in_out, in_self_loops);
        if (app.got_subcommand(synth)) {
            if (sy_preset == "toy-academic") {
                hgt::SynthConfig preset = hgt::toy_academic_config();
                preset.seed = sy.seed;
                return cmd_synth(preset, sy_out);
            }
            if (!sy_preset.empty())
                throw hgt::Error::config("BadConfig", "unknown preset '" + sy_preset + "'");
            return cmd_synth(sy, sy_out);
        }
        if (app.got_subcommand(sample)) {
            require_graph_dir(sa_graph);
            return cmd_sample(sa_graph, sa_seeds, sa_n, sa_depth, sa_seed, sa_out);
        }
        if (app.got_subcommand(train)) {
            require_graph_dir(tr_graph);
            return cmd_train(tr_graph, tr_config, tr_task, tr_out, tr_ablate);
        }
        if (app.got_subcommand(eval)) {
            require_graph_dir(ev_graph);
            return cmd_eval(ev_graph, ev_ckpt, ev_out, ev_csv);
        }
        if (app.got_subcommand(expatt)) {
            require_graph_dir(ex_graph);
            return cmd_export_attention(ex_graph, ex_ckpt, ex_seeds, ex_n, ex_depth, ex_seed,
                                        ex_out);
        }
        if (app.got_subcommand(pc))
            return cmd_param_count(pc_schema, pc_d, pc_h, pc_layers, pc_no_heter, pc_no_rte);
    } catch (const hgt::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
