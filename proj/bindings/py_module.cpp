#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "hgt/graph.hpp"
#include "hgt/model.hpp"
#include "hgt/run_config.hpp"
#include "hgt/sampler.hpp"
#include "hgt/synth.hpp"
#include "hgt/tasks.hpp"
#include "hgt/train.hpp"

namespace py = pybind11;
using namespace hgt;

namespace {

Seed make_seed(const HeteroGraph& g, const std::string& type, int64_t id,
               std::optional<Timestamp> time) {
    Seed s;
    s.node = {g.schema().node_type(type), id};
    s.time = time;
    return s;
}

py::dict subgraph_to_dict(const HeteroGraph& g, const SampledSubgraph& sg) {
    py::dict out;
    py::list nodes;
    for (NodeTypeId t = 0; t < g.schema().num_node_types(); ++t)
        for (const auto& entry : sg.entries[t]) {
            py::dict n;
            n["type"] = g.schema().node_info(t).name;
            n["id"] = entry.id;
            n["time"] = entry.time;
            nodes.append(n);
        }
    py::list edges;
    for (EdgeTypeId e = 0; e < g.schema().num_edge_types(); ++e) {
        const auto& info = g.schema().edge_info(e);
        for (const auto& edge : sg.adjacency[e]) {
            py::dict d;
            d["rel"] = info.name;
            d["src_type"] = g.schema().node_info(info.src_type).name;
            d["src"] = sg.entries[info.src_type][edge.src_entry].id;
            d["src_time"] = sg.entries[info.src_type][edge.src_entry].time;
            d["tgt_type"] = g.schema().node_info(info.tgt_type).name;
            d["tgt"] = sg.entries[info.tgt_type][edge.tgt_entry].id;
            d["tgt_time"] = sg.entries[info.tgt_type][edge.tgt_entry].time;
            d["time"] = edge.time;
            edges.append(d);
        }
    }
    out["nodes"] = nodes;
    out["edges"] = edges;
    return out;
}

}  // namespace

PYBIND11_MODULE(_hgt, m) {
    m.doc() = "heterogeneous graph transformer engine";

    py::register_exception<Error>(m, "EngineError");

    py::class_<HeteroGraph>(m, "HeteroGraph")
        .def_static("load", &HeteroGraph::load, py::arg("dir"))
        .def("total_nodes", &HeteroGraph::total_nodes)
        .def("total_edges", &HeteroGraph::total_edges)
        .def("num_nodes",
             [](const HeteroGraph& g, const std::string& type) {
                 return g.num_nodes(g.schema().node_type(type));
             })
        .def("node_types",
             [](const HeteroGraph& g) {
                 std::vector<std::string> out;
                 for (NodeTypeId t = 0; t < g.schema().num_node_types(); ++t)
                     out.push_back(g.schema().node_info(t).name);
                 return out;
             })
        .def("edge_types",
             [](const HeteroGraph& g) {
                 std::vector<std::string> out;
                 for (EdgeTypeId e = 0; e < g.schema().num_edge_types(); ++e)
                     out.push_back(g.schema().edge_info(e).name);
                 return out;
             })
        .def("neighbors",
             [](const HeteroGraph& g, const std::string& tgt_type, int64_t id,
                const std::string& edge_type) {
                 const Schema& s = g.schema();
                 MetaRelation rel = s.relation(s.edge_type(edge_type));
                 std::vector<std::pair<int64_t, Timestamp>> out;
                 for (const auto& in : g.neighbors({s.node_type(tgt_type), id}, rel))
                     out.emplace_back(in.src, in.time);
                 return out;
             })
        .def("relation_degree", [](const HeteroGraph& g, const std::string& tgt_type, int64_t id,
                                   const std::string& edge_type) {
            const Schema& s = g.schema();
            return g.relation_degree({s.node_type(tgt_type), id}, s.relation(s.edge_type(edge_type)));
        });

    m.def(
        "ingest",
        [](const std::string& schema_path, const std::string& nodes, const std::string& edges,
           const std::string& features_dir, const std::string& out_dir, bool self_loops) {
            Schema schema = Schema::load(schema_path);
            HeteroGraph g = ingest_graph(schema, nodes, edges, features_dir, self_loops);
            g.save(out_dir, schema.hash(), 0);
            return g;
        },
        py::arg("schema"), py::arg("nodes"), py::arg("edges"), py::arg("features_dir"),
        py::arg("out_dir"), py::arg("self_loops") = false);

    m.def(
        "synth",
        [](const std::string& out_dir, const py::kwargs& kwargs) {
            SynthConfig cfg;
            auto geti = [&](const char* name, int64_t dflt) {
                return kwargs.contains(name) ? kwargs[name].cast<int64_t>() : dflt;
            };
            cfg.papers = geti("papers", cfg.papers);
            cfg.authors = geti("authors", cfg.authors);
            cfg.fields = geti("fields", cfg.fields);
            cfg.venues = geti("venues", cfg.venues);
            cfg.institutes = geti("institutes", cfg.institutes);
            cfg.classes = geti("classes", cfg.classes);
            cfg.seed = static_cast<uint64_t>(geti("seed", 0));
            cfg.time_range = geti("time_range", cfg.time_range);
            if (kwargs.contains("correlation"))
                cfg.correlation = kwargs["correlation"].cast<double>();
            write_synth_graph(cfg, out_dir);
        },
        py::arg("out_dir"));

    m.def("toy_academic", [](const std::string& out_dir, uint64_t seed) {
        SynthConfig cfg = toy_academic_config();
        cfg.seed = seed;
        write_synth_graph(cfg, out_dir);
    }, py::arg("out_dir"), py::arg("seed") = 0);

    m.def(
        "sample",
        [](const HeteroGraph& g,
           const std::vector<std::tuple<std::string, int64_t, std::optional<Timestamp>>>& seeds,
           int64_t n, int64_t depth, uint64_t rng_seed) {
            std::vector<Seed> ss;
            for (const auto& [type, id, time] : seeds) ss.push_back(make_seed(g, type, id, time));
            SamplerConfig cfg;
            cfg.nodes_per_type = n;
            cfg.depth = depth;
            cfg.rng_seed = rng_seed;
            return subgraph_to_dict(g, hg_sample(g, ss, cfg));
        },
        py::arg("graph"), py::arg("seeds"), py::arg("n") = 32, py::arg("depth") = 3,
        py::arg("rng_seed") = 0);

    m.def(
        "param_count",
        [](const std::string& schema_path, int64_t d, int64_t heads, int64_t layers, bool heter,
           bool rte) {
            Schema schema = Schema::load(schema_path);
            HgtConfig cfg;
            cfg.hidden_dim = d;
            cfg.heads = heads;
            cfg.layers = layers;
            cfg.use_heter = heter;
            cfg.use_rte = rte;
            HgtModelT<double> model(schema, cfg);
            py::dict out;
            out["per_layer"] = model.layer_param_count();
            out["adapters"] = model.adapter_param_count();
            out["total"] = model.params().param_count();
            return out;
        },
        py::arg("schema"), py::arg("d") = 256, py::arg("heads") = 8, py::arg("layers") = 3,
        py::arg("heter") = true, py::arg("rte") = true);

    m.def(
        "train",
        [](const HeteroGraph& g, const std::string& graph_dir, const std::string& out_dir,
           const std::string& run_json) {
            RunConfig cfg = run_json.empty() ? RunConfig{} : RunConfig::from_json(run_json);
            FitResult r = fit(g, cfg, graph_dir, out_dir);
            py::dict out;
            out["best_epoch"] = r.best_epoch;
            out["best_val_loss"] = r.best_val_loss;
            out["checkpoint"] = r.checkpoint_dir;
            py::list history;
            for (const auto& s : r.history) {
                py::dict row;
                row["epoch"] = s.epoch;
                row["lr"] = s.lr;
                row["train_loss"] = s.train_loss;
                row["val_loss"] = s.val_loss;
                history.append(row);
            }
            out["history"] = history;
            return out;
        },
        py::arg("graph"), py::arg("graph_dir"), py::arg("out_dir"), py::arg("run_json") = "");

    m.def(
        "evaluate",
        [](const HeteroGraph& g, const std::string& ckpt_dir, const std::string& graph_dir) {
            EvalResult r = evaluate(g, ckpt_dir, graph_dir);
            py::dict out;
            out["task"] = r.task;
            out["ndcg"] = r.ndcg;
            out["mrr"] = r.mrr;
            out["accuracy"] = r.accuracy;
            out["n_queries"] = r.n_queries;
            return out;
        },
        py::arg("graph"), py::arg("ckpt_dir"), py::arg("graph_dir"));

    m.def("ndcg", [](const std::vector<double>& rel, std::optional<int64_t> k) {
        return ndcg(rel, k);
    }, py::arg("relevances"), py::arg("k") = std::nullopt);
    m.def("mrr", [](const std::vector<int>& rel) { return mrr(rel); }, py::arg("binary"));

    m.def(
        "rte_base",
        [](Timestamp dt, int64_t d) {
            Schema schema;
            schema.add_node_type("t", 1, true);
            schema.finalize_inverses();
            HgtConfig cfg;
            cfg.hidden_dim = d;
            cfg.heads = 1;
            cfg.layers = 1;
            HgtModelT<double> model(schema, cfg);
            return model.rte_base(dt);
        },
        py::arg("dt"), py::arg("d") = 256);
}
