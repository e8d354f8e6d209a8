#include "hgt/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include "hgt/error.hpp"

namespace hgt {

int64_t SampledSubgraph::total_entries() const {
    int64_t n = 0;
    for (const auto& v : entries) n += static_cast<int64_t>(v.size());
    return n;
}

int64_t SampledSubgraph::total_edges() const {
    int64_t n = 0;
    for (const auto& v : adjacency) n += static_cast<int64_t>(v.size());
    return n;
}

std::optional<int64_t> SampledSubgraph::find_entry(NodeTypeId t, TimedNode n) const {
    const auto& list = entries.at(t);
    for (size_t i = 0; i < list.size(); ++i)
        if (list[i] == n) return static_cast<int64_t>(i);
    return std::nullopt;
}

Timestamp assign_timestamp(const HeteroGraph& graph, NodeRef node, Timestamp parent_time) {
    return graph.is_event(node.type) ? graph.node_time(node) : parent_time;
}

void add_in_budget(std::vector<TypeBudget>& budget, const HeteroGraph& graph, NodeRef parent,
                   Timestamp parent_time, const std::vector<std::map<TimedNode, bool>>& sampled,
                   SampleTrace* trace) {
    const Schema& schema = graph.schema();
    for (EdgeTypeId e = 0; e < schema.num_edge_types(); ++e) {
        const auto& info = schema.edge_info(e);
        if (info.tgt_type != parent.type) continue;
        auto incident = graph.neighbors(parent, schema.relation(e));
        if (incident.empty()) continue;
        const double increment = 1.0 / static_cast<double>(incident.size());
        const NodeTypeId src_type = info.src_type;
        for (const auto& in : incident) {
            TimedNode child{in.src, assign_timestamp(graph, {src_type, in.src}, parent_time)};
            if (sampled[src_type].contains(child)) continue;
            budget[src_type][child] += increment;
            if (trace)
                trace->adds.push_back({src_type, child, parent, parent_time, increment});
        }
    }
}

std::vector<double> sampling_prob(const TypeBudget& budget_for_type) {
    if (budget_for_type.empty())
        throw Error::data("EmptyBudget", "sampling probability over an empty budget");
    double sum_sq = 0.0;
    for (const auto& [key, value] : budget_for_type) sum_sq += value * value;
    std::vector<double> prob;
    prob.reserve(budget_for_type.size());
    for (const auto& [key, value] : budget_for_type) prob.push_back(value * value / sum_sq);
    return prob;
}

size_t categorical_draw(const std::vector<double>& prob, double u) {
    double cum = 0.0;
    for (size_t i = 0; i < prob.size(); ++i) {
        cum += prob[i];
        if (u < cum) return i;
    }
    return prob.size() - 1;  // guard against accumulated rounding
}

namespace {

// n draws from one type's budget. Without replacement the remaining mass is
// renormalized after each draw.
std::vector<TimedNode> draw_from_budget(const TypeBudget& budget, int64_t n, bool with_replacement,
                                        CounterRng& rng) {
    std::vector<TimedNode> keys;
    std::vector<double> values;
    keys.reserve(budget.size());
    values.reserve(budget.size());
    for (const auto& [key, value] : budget) {
        keys.push_back(key);
        values.push_back(value);
    }
    std::vector<TimedNode> drawn;
    if (with_replacement) {
        auto prob = sampling_prob(budget);
        std::set<TimedNode> unique;
        for (int64_t i = 0; i < n; ++i) {
            size_t idx = categorical_draw(prob, rng.next_double());
            if (unique.insert(keys[idx]).second) drawn.push_back(keys[idx]);
        }
        return drawn;
    }
    int64_t take = std::min<int64_t>(n, static_cast<int64_t>(keys.size()));
    for (int64_t i = 0; i < take; ++i) {
        double sum_sq = 0.0;
        for (double v : values) sum_sq += v * v;
        double u = rng.next_double() * sum_sq;
        double cum = 0.0;
        size_t idx = values.size() - 1;
        for (size_t j = 0; j < values.size(); ++j) {
            cum += values[j] * values[j];
            if (u < cum) {
                idx = j;
                break;
            }
        }
        drawn.push_back(keys[idx]);
        keys.erase(keys.begin() + static_cast<int64_t>(idx));
        values.erase(values.begin() + static_cast<int64_t>(idx));
    }
    return drawn;
}

}  // namespace

SampledSubgraph hg_sample(const HeteroGraph& graph, const std::vector<Seed>& seeds,
                          const SamplerConfig& cfg, const std::vector<EdgeExclusion>& exclusions,
                          SampleTrace* trace) {
    if (seeds.empty()) throw Error::data("EmptySeedSet", "hg_sample needs at least one seed");
    if (cfg.nodes_per_type < 1 || cfg.depth < 1)
        throw Error::config("BadSamplerConfig", "nodes_per_type and depth must be >= 1");

    const Schema& schema = graph.schema();
    const int32_t n_types = schema.num_node_types();

    SampledSubgraph sg;
    sg.graph = &graph;
    sg.entries.resize(n_types);
    sg.adjacency.resize(schema.num_edge_types());
    sg.features.resize(n_types);

    std::vector<std::map<TimedNode, bool>> sampled(n_types);
    std::vector<TypeBudget> budget(n_types);

    for (const auto& seed : seeds) {
        Timestamp t;
        if (seed.time.has_value())
            t = *seed.time;
        else if (graph.is_event(seed.node.type))
            t = graph.node_time(seed.node);
        else
            throw Error::data("MissingTimestamp",
                              "plain seed node " + std::to_string(seed.node.id) +
                                  " needs an explicit timestamp");
        TimedNode entry{seed.node.id, t};
        if (sampled[seed.node.type].contains(entry)) continue;
        sampled[seed.node.type][entry] = true;
        sg.entries[seed.node.type].push_back(entry);
    }
    for (NodeTypeId t = 0; t < n_types; ++t)
        for (const auto& entry : sg.entries[t])
            add_in_budget(budget, graph, {t, entry.id}, entry.time, sampled, trace);

    CounterRng rng = CounterRng::split(cfg.rng_seed, "hg_sample");
    for (int64_t round = 0; round < cfg.depth; ++round) {
        for (NodeTypeId t = 0; t < n_types; ++t) {
            if (budget[t].empty()) continue;
            SampleTrace::RoundDraw draw_rec;
            if (trace) {
                draw_rec.round = round;
                draw_rec.type = t;
                for (const auto& [key, value] : budget[t]) {
                    draw_rec.budget_keys.push_back(key);
                    draw_rec.budget_values.push_back(value);
                }
            }
            auto drawn = draw_from_budget(budget[t], cfg.nodes_per_type, cfg.with_replacement, rng);
            for (const auto& entry : drawn) {
                sg.entries[t].push_back(entry);
                sampled[t][entry] = true;
                add_in_budget(budget, graph, {t, entry.id}, entry.time, sampled, trace);
                budget[t].erase(entry);
            }
            if (trace) {
                draw_rec.drawn = drawn;
                trace->draws.push_back(std::move(draw_rec));
            }
        }
    }

    // Label-edge exclusions apply in both directions.
    std::set<std::tuple<int64_t, int64_t, EdgeTypeId>> excluded;
    for (const auto& ex : exclusions) {
        excluded.insert({ex.src, ex.tgt, ex.edge_type});
        excluded.insert({ex.tgt, ex.src, schema.inverse(ex.edge_type)});
    }

    // Reconstruct the adjacency among the sampled entries. Self-loop relations
    // attach each entry to itself at its assigned timestamp.
    std::vector<std::map<int64_t, std::vector<int64_t>>> entries_by_id(n_types);
    for (NodeTypeId t = 0; t < n_types; ++t)
        for (size_t i = 0; i < sg.entries[t].size(); ++i)
            entries_by_id[t][sg.entries[t][i].id].push_back(static_cast<int64_t>(i));

    for (EdgeTypeId e = 0; e < schema.num_edge_types(); ++e) {
        const auto& info = schema.edge_info(e);
        auto& out = sg.adjacency[e];
        if (info.is_self_loop) {
            if (graph.edge_count(e) == 0) continue;
            for (size_t i = 0; i < sg.entries[info.tgt_type].size(); ++i) {
                const auto& entry = sg.entries[info.tgt_type][i];
                out.push_back({static_cast<int64_t>(i), static_cast<int64_t>(i), entry.time});
            }
            continue;
        }
        if (!cfg.induced_adjacency) continue;  // handled below from the expansion log
        MetaRelation rel = schema.relation(e);
        const auto& tgt_entries = sg.entries[info.tgt_type];
        for (size_t j = 0; j < tgt_entries.size(); ++j) {
            for (const auto& in : graph.neighbors({info.tgt_type, tgt_entries[j].id}, rel)) {
                if (excluded.contains({in.src, tgt_entries[j].id, e})) continue;
                auto it = entries_by_id[info.src_type].find(in.src);
                if (it == entries_by_id[info.src_type].end()) continue;
                for (int64_t si : it->second)
                    out.push_back({si, static_cast<int64_t>(j), in.time});
            }
        }
    }

    if (!cfg.induced_adjacency) {
        if (!trace)
            throw Error::config("BadSamplerConfig",
                                "traversed-only adjacency needs a trace; use induced_adjacency");
        for (const auto& add : trace->adds) {
            // child -> parent traversal corresponds to a stored child-source edge
            auto child_idx = sg.find_entry(add.type, add.child);
            if (!child_idx) continue;
            TimedNode parent_entry{add.parent.id, add.parent_time};
            auto parent_idx = sg.find_entry(add.parent.type, parent_entry);
            if (!parent_idx) continue;
            for (EdgeTypeId e = 0; e < schema.num_edge_types(); ++e) {
                const auto& info = schema.edge_info(e);
                if (info.src_type != add.type || info.tgt_type != add.parent.type ||
                    info.is_self_loop)
                    continue;
                for (const auto& in : graph.neighbors({info.tgt_type, parent_entry.id},
                                                      schema.relation(e))) {
                    if (in.src != add.child.id) continue;
                    if (excluded.contains({in.src, parent_entry.id, e})) continue;
                    sg.adjacency[e].push_back({*child_idx, *parent_idx, in.time});
                    sg.adjacency[schema.inverse(e)].push_back({*parent_idx, *child_idx, in.time});
                }
            }
        }
    }

    for (auto& edges : sg.adjacency) {
        if (!cfg.induced_adjacency) {
            // the expansion log can traverse the same pair more than once
            std::sort(edges.begin(), edges.end(), [](const SubgraphEdge& a, const SubgraphEdge& b) {
                return std::tie(a.tgt_entry, a.src_entry, a.time) <
                       std::tie(b.tgt_entry, b.src_entry, b.time);
            });
            edges.erase(std::unique(edges.begin(), edges.end(),
                                    [](const SubgraphEdge& a, const SubgraphEdge& b) {
                                        return a.tgt_entry == b.tgt_entry &&
                                               a.src_entry == b.src_entry && a.time == b.time;
                                    }),
                        edges.end());
        }
        std::stable_sort(edges.begin(), edges.end(), [](const SubgraphEdge& a, const SubgraphEdge& b) {
            return a.tgt_entry < b.tgt_entry;
        });
    }

    for (NodeTypeId t = 0; t < n_types; ++t) {
        int64_t dim = graph.feature_dim(t);
        sg.features[t].resize(sg.entries[t].size() * dim);
        for (size_t i = 0; i < sg.entries[t].size(); ++i) {
            auto row = graph.features({t, sg.entries[t][i].id});
            std::copy(row.begin(), row.end(), sg.features[t].begin() + static_cast<int64_t>(i) * dim);
        }
    }
    return sg;
}

}  // namespace hgt
