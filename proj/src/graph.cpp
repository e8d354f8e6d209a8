#include "hgt/graph.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hgt/error.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace hgt {

namespace {

void write_blob(const std::string& path, const void* data, size_t bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error::data("WriteFailed", "cannot write '" + path + "'");
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
}

std::vector<char> read_blob(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw Error::data("MissingFile", "cannot open '" + path + "'");
    auto size = in.tellg();
    std::vector<char> buf(static_cast<size_t>(size));
    in.seekg(0);
    in.read(buf.data(), size);
    return buf;
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        size_t pos = line.find('\t', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

int64_t parse_int(const std::string& s, int64_t line, const char* what) {
    try {
        size_t used = 0;
        int64_t v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw Error::data("BadRecord",
                          std::string("line ") + std::to_string(line) + ": bad " + what + " '" + s + "'");
    }
}

}  // namespace

int64_t HeteroGraph::total_nodes() const {
    int64_t n = 0;
    for (int64_t c : node_counts_) n += c;
    return n;
}

int64_t HeteroGraph::total_edges() const {
    int64_t n = 0;
    for (const auto& adj : adjacency_) n += static_cast<int64_t>(adj.entries.size());
    return n;
}

int64_t HeteroGraph::edge_count(EdgeTypeId e) const {
    return static_cast<int64_t>(adjacency_.at(e).entries.size());
}

Timestamp HeteroGraph::node_time(NodeRef n) const {
    if (!is_event(n.type))
        throw Error::data("MissingTimestamp",
                          "plain node " + schema_.node_info(n.type).name + "/" + std::to_string(n.id) +
                              " has no fixed timestamp");
    return node_times_.at(n.type).at(n.id);
}

std::span<const IncidentEdge> HeteroGraph::neighbors(NodeRef target, const MetaRelation& rel) const {
    if (rel.edge_type < 0 || rel.edge_type >= schema_.num_edge_types())
        throw Error::data("UnknownType", "edge type id " + std::to_string(rel.edge_type));
    const auto& info = schema_.edge_info(rel.edge_type);
    if (info.src_type != rel.src_type || info.tgt_type != rel.tgt_type)
        throw Error::data("UnknownType", "relation does not match schema binding of '" + info.name + "'");
    if (target.type != rel.tgt_type)
        throw Error::data("TypeMismatch",
                          "node of type '" + schema_.node_info(target.type).name +
                              "' queried under relation targeting '" +
                              schema_.node_info(rel.tgt_type).name + "'");
    if (target.id < 0 || target.id >= node_counts_.at(target.type))
        throw Error::data("NodeOutOfRange", "node id " + std::to_string(target.id));
    const auto& adj = adjacency_.at(rel.edge_type);
    int64_t lo = adj.indptr[target.id], hi = adj.indptr[target.id + 1];
    return {adj.entries.data() + lo, static_cast<size_t>(hi - lo)};
}

int64_t HeteroGraph::relation_degree(NodeRef target, const MetaRelation& rel) const {
    return static_cast<int64_t>(neighbors(target, rel).size());
}

std::span<const float> HeteroGraph::features(NodeRef n) const {
    int64_t dim = feature_dim(n.type);
    const auto& rows = features_.at(n.type);
    return {rows.data() + n.id * dim, static_cast<size_t>(dim)};
}

GraphBuilder::GraphBuilder(Schema schema, bool add_self_loops)
    : schema_(std::move(schema)), self_loops_(add_self_loops) {
    schema_.finalize_inverses();
    if (self_loops_) schema_.add_self_loop_types();
    nodes_.resize(schema_.num_node_types());
    features_.resize(schema_.num_node_types());
}

void GraphBuilder::add_node(const NodeRecord& rec) {
    NodeTypeId t = schema_.find_node_type(rec.type);
    if (t < 0)
        throw Error::data("UnknownType",
                          "line " + std::to_string(rec.line) + ": node type '" + rec.type + "'");
    nodes_[t].push_back(rec);
}

void GraphBuilder::add_edge(const EdgeRecord& rec) {
    EdgeTypeId e = schema_.find_edge_type(rec.edge_type);
    if (e < 0)
        throw Error::data("UnknownType",
                          "line " + std::to_string(rec.line) + ": edge type '" + rec.edge_type + "'");
    const auto& info = schema_.edge_info(e);
    NodeTypeId src_t = schema_.find_node_type(rec.src_type);
    NodeTypeId tgt_t = schema_.find_node_type(rec.tgt_type);
    if (src_t != info.src_type || tgt_t != info.tgt_type)
        throw Error::data("UnknownType", "line " + std::to_string(rec.line) + ": edge type '" +
                                             rec.edge_type + "' does not connect '" + rec.src_type +
                                             "' to '" + rec.tgt_type + "'");
    edges_.push_back({e, rec.src, rec.tgt, rec.time, rec.line});
}

void GraphBuilder::set_features(NodeTypeId type, std::vector<float> row_major) {
    features_.at(type) = std::move(row_major);
}

HeteroGraph GraphBuilder::finish() {
    if (finished_) throw Error::data("BuilderReused", "finish() called twice");
    finished_ = true;

    HeteroGraph g;
    g.schema_ = schema_;
    g.node_counts_.assign(schema_.num_node_types(), 0);
    g.node_times_.resize(schema_.num_node_types());
    g.features_.resize(schema_.num_node_types());

    for (NodeTypeId t = 0; t < schema_.num_node_types(); ++t) {
        auto& recs = nodes_[t];
        int64_t n = static_cast<int64_t>(recs.size());
        g.node_counts_[t] = n;
        std::vector<int64_t> seen_line(n, -1);
        const bool event = schema_.node_info(t).is_event;
        if (event) g.node_times_[t].assign(n, 0);
        for (const auto& rec : recs) {
            if (rec.id < 0 || rec.id >= n)
                throw Error::data("BadRecord", "line " + std::to_string(rec.line) + ": node id " +
                                                   std::to_string(rec.id) + " outside dense range 0.." +
                                                   std::to_string(n - 1));
            if (seen_line[rec.id] >= 0)
                throw Error::data("DuplicateNodeId",
                                  "line " + std::to_string(rec.line) + ": node " + rec.type + "/" +
                                      std::to_string(rec.id) + " already declared at line " +
                                      std::to_string(seen_line[rec.id]));
            seen_line[rec.id] = rec.line;
            if (event) {
                if (!rec.has_time)
                    throw Error::data("MissingTimestamp", "line " + std::to_string(rec.line) +
                                                              ": event node without timestamp");
                g.node_times_[t][rec.id] = rec.time;
            } else if (rec.has_time) {
                throw Error::data("UnexpectedTimestamp",
                                  "line " + std::to_string(rec.line) + ": plain node carries a timestamp");
            }
        }
        int64_t dim = schema_.node_info(t).feature_dim;
        auto& feats = features_[t];
        if (feats.empty() && dim > 0 && n > 0)
            throw Error::data("MissingFeatures",
                              "no features for node type '" + schema_.node_info(t).name + "'");
        if (static_cast<int64_t>(feats.size()) != n * dim)
            throw Error::data("BadFeatures", "node type '" + schema_.node_info(t).name + "': got " +
                                                 std::to_string(feats.size()) + " floats, want " +
                                                 std::to_string(n * dim));
        g.features_[t] = std::move(feats);
    }

    if (self_loops_) {
        for (NodeTypeId t = 0; t < schema_.num_node_types(); ++t) {
            EdgeTypeId self = schema_.edge_type("self~" + schema_.node_info(t).name);
            const bool event = schema_.node_info(t).is_event;
            for (int64_t v = 0; v < g.node_counts_[t]; ++v)
                edges_.push_back({self, v, v, event ? g.node_times_[t][v] : 0, 0});
        }
    }

    // Mirror every edge, then counting-sort per relation by target so the
    // per-target entry order matches production order.
    struct Produced {
        int64_t tgt, src;
        Timestamp time;
    };
    std::vector<std::vector<Produced>> produced(schema_.num_edge_types());
    for (const auto& pe : edges_) {
        const auto& info = schema_.edge_info(pe.etype);
        if (pe.src < 0 || pe.src >= g.node_counts_[info.src_type] || pe.tgt < 0 ||
            pe.tgt >= g.node_counts_[info.tgt_type])
            throw Error::data("DanglingEdge", "line " + std::to_string(pe.line) + ": edge '" +
                                                  info.name + "' " + std::to_string(pe.src) + "->" +
                                                  std::to_string(pe.tgt) + " references a missing node");
        produced[pe.etype].push_back({pe.tgt, pe.src, pe.time});
        const bool same_entry = info.symmetric && pe.src == pe.tgt;
        if (!same_entry) produced[info.inverse].push_back({pe.src, pe.tgt, pe.time});
    }

    g.adjacency_.resize(schema_.num_edge_types());
    for (EdgeTypeId e = 0; e < schema_.num_edge_types(); ++e) {
        const auto& info = schema_.edge_info(e);
        int64_t n_tgt = g.node_counts_[info.tgt_type];
        auto& adj = g.adjacency_[e];
        adj.indptr.assign(n_tgt + 1, 0);
        for (const auto& p : produced[e]) adj.indptr[p.tgt + 1]++;
        for (int64_t i = 0; i < n_tgt; ++i) adj.indptr[i + 1] += adj.indptr[i];
        adj.entries.resize(produced[e].size());
        std::vector<int64_t> cursor(adj.indptr.begin(), adj.indptr.end() - 1);
        for (const auto& p : produced[e]) adj.entries[cursor[p.tgt]++] = {p.src, p.time};
    }
    return g;
}

HeteroGraph ingest_graph(const Schema& schema, const std::string& nodes_tsv,
                         const std::string& edges_tsv, const std::string& features_dir,
                         bool self_loops) {
    GraphBuilder builder(schema, self_loops);

    std::ifstream nodes_in(nodes_tsv);
    if (!nodes_in) throw Error::data("MissingFile", "cannot open '" + nodes_tsv + "'");
    std::string line;
    int64_t lineno = 0;
    while (std::getline(nodes_in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cols = split_tabs(line);
        if (lineno == 1 && cols[0] == "type") continue;  // header
        if (cols.size() != 3)
            throw Error::data("BadRecord",
                              "line " + std::to_string(lineno) + ": want 3 tab-separated columns");
        NodeRecord rec;
        rec.type = cols[0];
        rec.id = parse_int(cols[1], lineno, "node id");
        rec.has_time = !cols[2].empty();
        if (rec.has_time) rec.time = parse_int(cols[2], lineno, "timestamp");
        rec.line = lineno;
        builder.add_node(rec);
    }

    std::ifstream edges_in(edges_tsv);
    if (!edges_in) throw Error::data("MissingFile", "cannot open '" + edges_tsv + "'");
    lineno = 0;
    while (std::getline(edges_in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cols = split_tabs(line);
        if (lineno == 1 && cols[0] == "edge_type") continue;
        if (cols.size() != 6)
            throw Error::data("BadRecord",
                              "line " + std::to_string(lineno) + ": want 6 tab-separated columns");
        EdgeRecord rec;
        rec.edge_type = cols[0];
        rec.src_type = cols[1];
        rec.src = parse_int(cols[2], lineno, "source id");
        rec.tgt_type = cols[3];
        rec.tgt = parse_int(cols[4], lineno, "target id");
        rec.time = parse_int(cols[5], lineno, "timestamp");
        rec.line = lineno;
        builder.add_edge(rec);
    }

    for (NodeTypeId t = 0; t < schema.num_node_types(); ++t) {
        const auto& info = schema.node_info(t);
        if (info.feature_dim == 0) continue;
        std::string path = features_dir + "/features." + info.name + ".f32";
        if (!fs::exists(path))
            throw Error::data("MissingFeatures",
                              "node type '" + info.name + "': missing features file '" + path + "'");
        auto blob = read_blob(path);
        if (blob.size() % sizeof(float) != 0)
            throw Error::data("BadFeatures", "'" + path + "' is not a whole number of f32 values");
        std::vector<float> feats(blob.size() / sizeof(float));
        std::memcpy(feats.data(), blob.data(), blob.size());
        builder.set_features(t, std::move(feats));
    }
    return builder.finish();
}

void HeteroGraph::save(const std::string& dir, uint64_t config_hash, uint64_t seed) const {
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["version"] = 1;
    manifest["config_hash"] = config_hash;
    manifest["seed"] = seed;
    manifest["schema"] = nlohmann::json::parse(schema_.to_json());
    manifest["node_counts"] = nlohmann::json::object();
    for (NodeTypeId t = 0; t < schema_.num_node_types(); ++t)
        manifest["node_counts"][schema_.node_info(t).name] = node_counts_[t];
    manifest["edge_counts"] = nlohmann::json::object();
    for (EdgeTypeId e = 0; e < schema_.num_edge_types(); ++e)
        manifest["edge_counts"][schema_.edge_info(e).name] = edge_count(e);
    {
        std::ofstream out(dir + "/manifest.json");
        if (!out) throw Error::data("WriteFailed", "cannot write manifest in '" + dir + "'");
        out << manifest.dump(2) << "\n";
    }
    for (NodeTypeId t = 0; t < schema_.num_node_types(); ++t) {
        const auto& info = schema_.node_info(t);
        if (info.is_event)
            write_blob(dir + "/times." + info.name + ".i64", node_times_[t].data(),
                       node_times_[t].size() * sizeof(Timestamp));
        if (info.feature_dim > 0)
            write_blob(dir + "/features." + info.name + ".f32", features_[t].data(),
                       features_[t].size() * sizeof(float));
    }
    for (EdgeTypeId e = 0; e < schema_.num_edge_types(); ++e) {
        const auto& adj = adjacency_[e];
        std::vector<int64_t> buf;
        buf.reserve(2 + adj.indptr.size() + 2 * adj.entries.size());
        buf.push_back(static_cast<int64_t>(adj.indptr.size()));
        buf.push_back(static_cast<int64_t>(adj.entries.size()));
        buf.insert(buf.end(), adj.indptr.begin(), adj.indptr.end());
        for (const auto& in : adj.entries) {
            buf.push_back(in.src);
            buf.push_back(in.time);
        }
        write_blob(dir + "/adj." + std::to_string(e) + ".bin", buf.data(),
                   buf.size() * sizeof(int64_t));
    }
}

HeteroGraph HeteroGraph::load(const std::string& dir) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw Error::data("MissingFile", "no graph manifest in '" + dir + "'");
    nlohmann::json manifest = nlohmann::json::parse(in);
    if (manifest.value("version", 0) != 1)
        throw Error::data("BadBundle", "unsupported graph bundle version");

    HeteroGraph g;
    g.schema_ = Schema::from_json(manifest["schema"].dump());
    g.node_counts_.assign(g.schema_.num_node_types(), 0);
    g.node_times_.resize(g.schema_.num_node_types());
    g.features_.resize(g.schema_.num_node_types());
    for (NodeTypeId t = 0; t < g.schema_.num_node_types(); ++t) {
        const auto& info = g.schema_.node_info(t);
        g.node_counts_[t] = manifest["node_counts"].at(info.name).get<int64_t>();
        if (info.is_event) {
            auto blob = read_blob(dir + "/times." + info.name + ".i64");
            g.node_times_[t].resize(blob.size() / sizeof(Timestamp));
            std::memcpy(g.node_times_[t].data(), blob.data(), blob.size());
        }
        if (info.feature_dim > 0) {
            auto blob = read_blob(dir + "/features." + info.name + ".f32");
            g.features_[t].resize(blob.size() / sizeof(float));
            std::memcpy(g.features_[t].data(), blob.data(), blob.size());
            if (static_cast<int64_t>(g.features_[t].size()) != g.node_counts_[t] * info.feature_dim)
                throw Error::data("BadFeatures", "feature file size mismatch for '" + info.name + "'");
        }
    }
    g.adjacency_.resize(g.schema_.num_edge_types());
    for (EdgeTypeId e = 0; e < g.schema_.num_edge_types(); ++e) {
        auto blob = read_blob(dir + "/adj." + std::to_string(e) + ".bin");
        const int64_t* p = reinterpret_cast<const int64_t*>(blob.data());
        int64_t n_indptr = p[0], n_entries = p[1];
        auto& adj = g.adjacency_[e];
        adj.indptr.assign(p + 2, p + 2 + n_indptr);
        adj.entries.resize(n_entries);
        const int64_t* q = p + 2 + n_indptr;
        for (int64_t i = 0; i < n_entries; ++i) adj.entries[i] = {q[2 * i], q[2 * i + 1]};
    }
    return g;
}

}  // namespace hgt
