#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hgt/schema.hpp"

namespace hgt {

using Timestamp = int64_t;

// Global node identity: dense per-type index plus its type.
struct NodeRef {
    NodeTypeId type = -1;
    int64_t id = -1;

    auto operator<=>(const NodeRef&) const = default;
};

struct IncidentEdge {
    int64_t src = -1;     // source node id (within the relation's source type)
    Timestamp time = 0;   // edge timestamp
};

struct NodeRecord {
    std::string type;
    int64_t id = -1;
    bool has_time = false;
    Timestamp time = 0;
    int64_t line = 0;  // provenance for error messages
};

struct EdgeRecord {
    std::string edge_type;
    std::string src_type;
    int64_t src = -1;
    std::string tgt_type;
    int64_t tgt = -1;
    Timestamp time = 0;
    int64_t line = 0;
};

// Immutable typed multigraph. Adjacency is stored per meta relation in CSR
// keyed by target node; every edge has its reverse-relation mirror
// materialized with the same timestamp.
class HeteroGraph {
public:
    const Schema& schema() const { return schema_; }

    int64_t num_nodes(NodeTypeId t) const { return node_counts_.at(t); }
    int64_t total_nodes() const;
    int64_t total_edges() const;  // stored directed entries (mirrors included)
    int64_t edge_count(EdgeTypeId e) const;

    bool is_event(NodeTypeId t) const { return schema_.node_info(t).is_event; }
    Timestamp node_time(NodeRef n) const;  // event nodes only

    // Incident sources of `target` under one relation, in insertion order.
    std::span<const IncidentEdge> neighbors(NodeRef target, const MetaRelation& rel) const;
    int64_t relation_degree(NodeRef target, const MetaRelation& rel) const;

    std::span<const float> features(NodeRef n) const;
    int64_t feature_dim(NodeTypeId t) const { return schema_.node_info(t).feature_dim; }

    void save(const std::string& dir, uint64_t config_hash, uint64_t seed) const;
    static HeteroGraph load(const std::string& dir);

private:
    friend class GraphBuilder;

    struct RelationAdjacency {
        std::vector<int64_t> indptr;       // size num_nodes(tgt_type) + 1
        std::vector<IncidentEdge> entries;
    };

    Schema schema_;
    std::vector<int64_t> node_counts_;                // per node type
    std::vector<std::vector<Timestamp>> node_times_;  // per node type; empty for plain types
    std::vector<std::vector<float>> features_;        // per node type, row-major
    std::vector<RelationAdjacency> adjacency_;        // per edge type
};

// Single-threaded construction; the result is immutable and safe for
// concurrent reads.
class GraphBuilder {
public:
    explicit GraphBuilder(Schema schema, bool add_self_loops = false);

    void add_node(const NodeRecord& rec);
    void add_edge(const EdgeRecord& rec);
    void set_features(NodeTypeId type, std::vector<float> row_major);

    HeteroGraph finish();

private:
    struct PendingEdge {
        EdgeTypeId etype;
        int64_t src, tgt;
        Timestamp time;
        int64_t line;
    };

    void store_edge(EdgeTypeId etype, int64_t src, int64_t tgt, Timestamp time);

    Schema schema_;
    bool self_loops_;
    std::vector<std::vector<NodeRecord>> nodes_;   // per type
    std::vector<PendingEdge> edges_;
    std::vector<std::vector<float>> features_;
    bool finished_ = false;
};

// Text ingestion per the on-disk formats: nodes.tsv, edges.tsv and one
// features.<type>.f32 sidecar per node type.
HeteroGraph ingest_graph(const Schema& schema, const std::string& nodes_tsv,
                         const std::string& edges_tsv, const std::string& features_dir,
                         bool self_loops);

}  // namespace hgt
