#pragma once

#include <vector>

#include "hgt/model.hpp"
#include "test_util.hpp"

namespace hgt::testutil {

struct SubEdge {
    std::string etype;
    int64_t src_entry, tgt_entry;
    Timestamp time = 0;
};

// Assemble a SampledSubgraph directly; features are row-major per type.
inline SampledSubgraph make_subgraph(const Schema& schema,
                                     std::vector<std::vector<TimedNode>> entries,
                                     std::vector<std::vector<float>> features,
                                     const std::vector<SubEdge>& edges) {
    SampledSubgraph sg;
    sg.entries = std::move(entries);
    sg.entries.resize(schema.num_node_types());
    sg.features = std::move(features);
    sg.features.resize(schema.num_node_types());
    sg.adjacency.resize(schema.num_edge_types());
    for (const auto& e : edges)
        sg.adjacency[schema.edge_type(e.etype)].push_back({e.src_entry, e.tgt_entry, e.time});
    return sg;
}

template <class Real>
void set_identity(const TensorPtr<Real>& t) {
    std::fill(t->v.begin(), t->v.end(), Real(0));
    if (t->shape.rank == 2) {
        for (int64_t i = 0; i < std::min(t->shape.dim[0], t->shape.dim[1]); ++i)
            t->v[i * t->shape.dim[1] + i] = Real(1);
    } else if (t->shape.rank == 3) {
        for (int64_t b = 0; b < t->shape.dim[0]; ++b)
            for (int64_t i = 0; i < t->shape.dim[1]; ++i)
                t->v[b * t->shape.dim[1] * t->shape.dim[2] + i * t->shape.dim[2] + i] = Real(1);
    }
}

// Identity projections, zero biases, unit priors everywhere.
template <class Real>
void set_identity_params(HgtModelT<Real>& model) {
    for (const auto& t : model.params().tensors()) {
        if (t->name.ends_with(".b"))
            std::fill(t->v.begin(), t->v.end(), Real(0));
        else if (t->name.find(".prior.") != std::string::npos)
            std::fill(t->v.begin(), t->v.end(), Real(1));
        else
            set_identity(t);
    }
}

// Single node type "t" with one edge type "e" (plus generated inverse).
inline Schema chain_schema(int64_t feature_dim) {
    Schema s;
    NodeTypeId t = s.add_node_type("t", feature_dim, true);
    s.add_edge_type("e", t, t);
    s.finalize_inverses();
    return s;
}

}  // namespace hgt::testutil
