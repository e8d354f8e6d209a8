#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hgt {

using NodeTypeId = int32_t;
using EdgeTypeId = int32_t;

// <source type, edge type, target type>: the triple that keys every
// relation-dependent parameter and adjacency list.
struct MetaRelation {
    NodeTypeId src_type = -1;
    EdgeTypeId edge_type = -1;
    NodeTypeId tgt_type = -1;

    auto operator<=>(const MetaRelation&) const = default;
};

struct NodeTypeInfo {
    std::string name;
    int64_t feature_dim = 0;
    bool is_event = false;  // event nodes carry their own timestamp
};

struct EdgeTypeInfo {
    std::string name;
    NodeTypeId src_type = -1;
    NodeTypeId tgt_type = -1;
    bool symmetric = false;       // symmetric edge types are their own inverse
    EdgeTypeId inverse = -1;
    bool is_self_loop = false;
};

// Type tables. Every non-symmetric edge type has an inverse; missing inverses
// are generated with a "~rev" name suffix at load/build time.
class Schema {
public:
    NodeTypeId add_node_type(const std::string& name, int64_t feature_dim, bool is_event);
    EdgeTypeId add_edge_type(const std::string& name, NodeTypeId src, NodeTypeId tgt,
                             bool symmetric = false);
    // Declare two edge types as each other's inverse. src/tgt must be swapped.
    void bind_inverse(EdgeTypeId a, EdgeTypeId b);
    // Generate "~rev" inverses for any unpaired non-symmetric edge type.
    void finalize_inverses();
    // Add one symmetric self-loop edge type per node type ("self~<type>").
    void add_self_loop_types();

    NodeTypeId node_type(const std::string& name) const;        // throws UnknownType
    EdgeTypeId edge_type(const std::string& name) const;        // throws UnknownType
    NodeTypeId find_node_type(const std::string& name) const;   // -1 if absent
    EdgeTypeId find_edge_type(const std::string& name) const;

    const NodeTypeInfo& node_info(NodeTypeId t) const { return node_types_.at(t); }
    const EdgeTypeInfo& edge_info(EdgeTypeId e) const { return edge_types_.at(e); }
    EdgeTypeId inverse(EdgeTypeId e) const { return edge_types_.at(e).inverse; }

    int32_t num_node_types() const { return static_cast<int32_t>(node_types_.size()); }
    int32_t num_edge_types() const { return static_cast<int32_t>(edge_types_.size()); }
    bool has_self_loops() const { return has_self_loops_; }

    MetaRelation relation(EdgeTypeId e) const {
        const auto& info = edge_types_.at(e);
        return MetaRelation{info.src_type, e, info.tgt_type};
    }
    // All realized meta relations, one per edge type, in edge-type-id order.
    std::vector<MetaRelation> relations() const;

    std::string to_json() const;
    static Schema from_json(const std::string& text);
    static Schema load(const std::string& path);
    void save(const std::string& path) const;

    // Stable hash of the canonical schema JSON; used for checkpoint/graph
    // compatibility checks.
    uint64_t hash() const;

private:
    std::vector<NodeTypeInfo> node_types_;
    std::vector<EdgeTypeInfo> edge_types_;
    bool has_self_loops_ = false;
};

}  // namespace hgt
