#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "hgt/graph.hpp"
#include "hgt/rng.hpp"

namespace hgt {

// A node instantiated at a timestamp. Plain nodes may appear under several
// timestamps; each (id, time) pair is handled as a distinct entry.
struct TimedNode {
    int64_t id = -1;
    Timestamp time = 0;

    auto operator<=>(const TimedNode&) const = default;
};

// Candidate frontier for one node type: entry -> cumulative normalized degree.
// Ordered by (id, time) so categorical draws break ties on the lowest node id.
using TypeBudget = std::map<TimedNode, double>;

struct Seed {
    NodeRef node;
    std::optional<Timestamp> time;  // event seeds may omit; their own is used
};

// (src, tgt, edge_type) whose presence would leak a prediction label; removed
// from the reconstructed adjacency together with its mirror.
struct EdgeExclusion {
    int64_t src = -1;
    int64_t tgt = -1;
    EdgeTypeId edge_type = -1;
};

struct SamplerConfig {
    int64_t nodes_per_type = 32;  // n: newly sampled entries per type per round
    int64_t depth = 3;            // L: rounds
    uint64_t rng_seed = 0;
    bool with_replacement = false;
    bool induced_adjacency = true;  // false: keep only edges traversed during expansion
};

struct SubgraphEdge {
    int64_t src_entry = -1;  // index into entries[rel.src_type]
    int64_t tgt_entry = -1;  // index into entries[rel.tgt_type]
    Timestamp time = 0;      // edge timestamp from the parent graph
};

struct SampledSubgraph {
    const HeteroGraph* graph = nullptr;
    // Output set OS, grouped by type; seeds come first in seed order.
    std::vector<std::vector<TimedNode>> entries;       // per node type
    std::vector<std::vector<SubgraphEdge>> adjacency;  // per edge type, sorted by target entry
    std::vector<std::vector<float>> features;          // per type, row-major copies

    int64_t entry_count(NodeTypeId t) const { return static_cast<int64_t>(entries[t].size()); }
    int64_t total_entries() const;
    int64_t total_edges() const;
    std::optional<int64_t> find_entry(NodeTypeId t, TimedNode n) const;
};

// Optional record of everything a sampling run did; lets tests replay the
// expansion and re-draw from every budget the run saw.
struct SampleTrace {
    struct BudgetAdd {
        NodeTypeId type;
        TimedNode child;
        NodeRef parent;
        Timestamp parent_time;
        double increment;
    };
    struct RoundDraw {
        int64_t round;
        NodeTypeId type;
        std::vector<TimedNode> budget_keys;  // snapshot before drawing
        std::vector<double> budget_values;
        std::vector<TimedNode> drawn;
    };
    std::vector<BudgetAdd> adds;
    std::vector<RoundDraw> draws;
};

// Own timestamp for event nodes, the parent's for plain nodes.
Timestamp assign_timestamp(const HeteroGraph& graph, NodeRef node, Timestamp parent_time);

// Expand `parent`'s in-neighborhood into the budget: every unsampled neighbor
// under each relation of degree d > 0 gains 1/d.
void add_in_budget(std::vector<TypeBudget>& budget, const HeteroGraph& graph, NodeRef parent,
                   Timestamp parent_time, const std::vector<std::map<TimedNode, bool>>& sampled,
                   SampleTrace* trace = nullptr);

// prob[s] = budget[s]^2 / ||budget||_2^2 over one type's budget, in key order.
std::vector<double> sampling_prob(const TypeBudget& budget_for_type);

// One categorical draw by inverse CDF over the budget's key order.
size_t categorical_draw(const std::vector<double>& prob, double u);

SampledSubgraph hg_sample(const HeteroGraph& graph, const std::vector<Seed>& seeds,
                          const SamplerConfig& cfg,
                          const std::vector<EdgeExclusion>& exclusions = {},
                          SampleTrace* trace = nullptr);

}  // namespace hgt
