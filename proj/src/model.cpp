#include "hgt/model.hpp"

#include <algorithm>
#include <numeric>
#include <cmath>
#include <map>
#include <numeric>

namespace hgt {

template <class Real>
HgtModelT<Real>::HgtModelT(Schema schema, HgtConfig cfg)
    : schema_(std::move(schema)), cfg_(cfg) {
    cfg_.validate();
    if (!cfg_.use_heter) {
        shared_adapter_ = true;
        int64_t dim = schema_.num_node_types() ? schema_.node_info(0).feature_dim : 0;
        for (NodeTypeId t = 1; t < schema_.num_node_types(); ++t)
            if (schema_.node_info(t).feature_dim != dim) shared_adapter_ = false;
    }
    declare_params();
}

template <class Real>
std::string HgtModelT<Real>::type_key(NodeTypeId t) const {
    return cfg_.use_heter ? schema_.node_info(t).name : "shared";
}

template <class Real>
std::string HgtModelT<Real>::edge_key(EdgeTypeId e) const {
    return cfg_.use_heter ? schema_.edge_info(e).name : "shared";
}

template <class Real>
void HgtModelT<Real>::declare_params() {
    const int64_t d = cfg_.hidden_dim;
    const int64_t h = cfg_.heads;
    const int64_t dh = d / h;

    auto declare_once = [&](const std::string& name, Shape shape) {
        if (!params_.has(name)) params_.create(name, shape);
    };

    for (NodeTypeId t = 0; t < schema_.num_node_types(); ++t) {
        std::string key = shared_adapter_ ? "shared" : schema_.node_info(t).name;
        declare_once("adapt." + key + ".W", {schema_.node_info(t).feature_dim, d});
        declare_once("adapt." + key + ".b", {d});
    }
    for (int64_t l = 0; l < cfg_.layers; ++l) {
        const std::string lp = "l" + std::to_string(l) + ".";
        for (NodeTypeId t = 0; t < schema_.num_node_types(); ++t) {
            const std::string key = type_key(t);
            for (const char* role : {"k", "q", "m", "out"}) {
                declare_once(lp + role + "." + key + ".W", {d, d});
                declare_once(lp + role + "." + key + ".b", {d});
            }
        }
        for (EdgeTypeId e = 0; e < schema_.num_edge_types(); ++e) {
            const std::string key = edge_key(e);
            declare_once(lp + "att." + key, {h, dh, dh});
            declare_once(lp + "msg." + key, {h, dh, dh});
        }
        for (EdgeTypeId e = 0; e < schema_.num_edge_types(); ++e)
            declare_once(lp + "prior." + edge_key(e), {1});
        if (cfg_.use_rte) {
            declare_once(lp + "rte.W", {d, d});
            declare_once(lp + "rte.b", {d});
        }
    }
}

template <class Real>
void HgtModelT<Real>::init_params(CounterRng& rng) {
    const int64_t dh = cfg_.hidden_dim / cfg_.heads;
    for (const auto& t : params_.tensors()) {
        const std::string& name = t->name;
        if (name.ends_with(".b")) {
            std::fill(t->v.begin(), t->v.end(), Real(0));
        } else if (name.find(".prior.") != std::string::npos) {
            std::fill(t->v.begin(), t->v.end(), Real(1));
        } else if (t->shape.rank == 3) {
            const double a = std::sqrt(6.0 / static_cast<double>(dh + dh));
            for (auto& v : t->v) v = static_cast<Real>(rng.next_uniform(-a, a));
        } else {
            const double a =
                std::sqrt(6.0 / static_cast<double>(t->shape.dim[0] + t->shape.dim[1]));
            for (auto& v : t->v) v = static_cast<Real>(rng.next_uniform(-a, a));
        }
    }
}

template <class Real>
int64_t HgtModelT<Real>::layer_param_count() const {
    int64_t n = 0;
    for (const auto& t : params_.tensors())
        if (t->name.starts_with("l0.")) n += t->numel();
    return n;
}

template <class Real>
int64_t HgtModelT<Real>::adapter_param_count() const {
    int64_t n = 0;
    for (const auto& t : params_.tensors())
        if (t->name.starts_with("adapt.")) n += t->numel();
    return n;
}

int64_t hgt_layer_param_formula(int64_t num_node_types, int64_t num_edge_types,
                                int64_t num_meta_relations, int64_t hidden_dim, int64_t heads,
                                bool use_heter, bool use_rte) {
    const int64_t d = hidden_dim;
    const int64_t dh = d / heads;
    const int64_t a = use_heter ? num_node_types : 1;
    const int64_t r = use_heter ? num_edge_types : 1;
    const int64_t m = use_heter ? num_meta_relations : 1;
    int64_t n = a * 3 * (d * d + d);      // key/query/message projections
    n += a * (d * d + d);                 // output projection
    n += r * 2 * heads * dh * dh;         // attention + message relation blocks
    n += m;                               // relation priors
    if (use_rte) n += d * d + d;          // temporal encoder
    return n;
}

template <class Real>
TensorPtr<Real> HgtModelT<Real>::adapt_input(TapeT<Real>& tape, const TensorPtr<Real>& features,
                                             NodeTypeId type) const {
    const std::string key = shared_adapter_ ? "shared" : schema_.node_info(type).name;
    auto W = params_.get("adapt." + key + ".W");
    if (features->cols() != W->shape.dim[0])
        throw Error::numeric("ShapeMismatch",
                             "features for '" + schema_.node_info(type).name + "' have dim " +
                                 std::to_string(features->cols()) + ", schema says " +
                                 std::to_string(W->shape.dim[0]));
    return linear(tape, features, W, params_.get("adapt." + key + ".b"));
}

template <class Real>
std::vector<Real> HgtModelT<Real>::rte_base(Timestamp dt) const {
    const int64_t d = cfg_.hidden_dim;
    std::vector<Real> base(static_cast<size_t>(d));
    const double t = static_cast<double>(dt);
    for (int64_t j = 0; j < d; ++j) {
        const double freq = std::pow(10000.0, static_cast<double>(j) / static_cast<double>(d));
        base[j] = static_cast<Real>(j % 2 == 0 ? std::sin(t / freq) : std::cos(t / freq));
    }
    return base;
}

template <class Real>
TensorPtr<Real> HgtModelT<Real>::rte_encode(TapeT<Real>& tape, Timestamp dt, int64_t layer) const {
    auto base = make_tensor<Real>({1, cfg_.hidden_dim}, rte_base(dt));
    const std::string lp = "l" + std::to_string(layer) + ".";
    return linear(tape, base, params_.get(lp + "rte.W"), params_.get(lp + "rte.b"));
}

template <class Real>
TensorPtr<Real> HgtModelT<Real>::apply_rte(TapeT<Real>& tape, const TensorPtr<Real>& h_src,
                                           Timestamp t_tgt, Timestamp t_src, int64_t layer) const {
    if (!cfg_.use_rte) return h_src;
    auto enc = rte_encode(tape, t_tgt - t_src, layer);
    return add(tape, h_src, enc);
}

template <class Real>
TensorPtr<Real> HgtModelT<Real>::att_head_scores(TapeT<Real>& tape, const TensorPtr<Real>& s_aug,
                                                 const TensorPtr<Real>& t_repr,
                                                 const MetaRelation& rel, int64_t layer) const {
    if (rel.edge_type < 0 || rel.edge_type >= schema_.num_edge_types())
        throw Error::data("UnknownRelation", "edge type id " + std::to_string(rel.edge_type));
    const std::string lp = "l" + std::to_string(layer) + ".";
    auto K = linear(tape, s_aug, params_.get(lp + "k." + type_key(rel.src_type) + ".W"),
                    params_.get(lp + "k." + type_key(rel.src_type) + ".b"));
    auto Q = linear(tape, t_repr, params_.get(lp + "q." + type_key(rel.tgt_type) + ".W"),
                    params_.get(lp + "q." + type_key(rel.tgt_type) + ".b"));
    auto scores = bilinear_head_scores(tape, K, Q, params_.get(lp + "att." + edge_key(rel.edge_type)));
    const Real inv_sqrt_d = Real(1) / std::sqrt(static_cast<Real>(cfg_.hidden_dim));
    return scale_by_scalar(tape, scores, params_.get(lp + "prior." + edge_key(rel.edge_type)),
                           inv_sqrt_d);
}

template <class Real>
TensorPtr<Real> HgtModelT<Real>::hetero_attention(TapeT<Real>& tape,
                                                  const TensorPtr<Real>& scores) const {
    if (scores->rows() == 0)
        throw Error::numeric("NoNeighbors", "attention over an empty neighbor set");
    return softmax_rows(tape, scores, {0, scores->rows()});
}

template <class Real>
TensorPtr<Real> HgtModelT<Real>::message(TapeT<Real>& tape, const TensorPtr<Real>& s_aug,
                                         const MetaRelation& rel, int64_t layer) const {
    if (rel.edge_type < 0 || rel.edge_type >= schema_.num_edge_types())
        throw Error::data("UnknownRelation", "edge type id " + std::to_string(rel.edge_type));
    const std::string lp = "l" + std::to_string(layer) + ".";
    auto M = linear(tape, s_aug, params_.get(lp + "m." + type_key(rel.src_type) + ".W"),
                    params_.get(lp + "m." + type_key(rel.src_type) + ".b"));
    return block_matmul_heads(tape, M, params_.get(lp + "msg." + edge_key(rel.edge_type)));
}

template <class Real>
TensorPtr<Real> HgtModelT<Real>::aggregate(TapeT<Real>& tape, const TensorPtr<Real>& attn,
                                           const TensorPtr<Real>& messages,
                                           const TensorPtr<Real>& h_prev_t, NodeTypeId tgt_type,
                                           int64_t layer) const {
    auto pooled = segment_weighted_sum(tape, attn, messages, {0, attn->rows()});
    auto activated = activate(tape, pooled, cfg_.activation);
    const std::string lp = "l" + std::to_string(layer) + ".";
    auto out = linear(tape, activated, params_.get(lp + "out." + type_key(tgt_type) + ".W"),
                      params_.get(lp + "out." + type_key(tgt_type) + ".b"));
    return add(tape, out, h_prev_t);
}

template <class Real>
std::vector<TensorPtr<Real>> HgtModelT<Real>::input_features(const SampledSubgraph& sg) const {
    std::vector<TensorPtr<Real>> xs(schema_.num_node_types());
    for (NodeTypeId t = 0; t < schema_.num_node_types(); ++t) {
        const int64_t n = sg.entry_count(t);
        const int64_t dim = schema_.node_info(t).feature_dim;
        std::vector<Real> vals(static_cast<size_t>(n * dim));
        for (size_t i = 0; i < sg.features[t].size(); ++i)
            vals[i] = static_cast<Real>(sg.features[t][i]);
        xs[t] = make_tensor<Real>({n, dim}, std::move(vals));
    }
    return xs;
}

template <class Real>
std::vector<TensorPtr<Real>> HgtModelT<Real>::forward_layer(TapeT<Real>& tape,
                                                            const std::vector<TensorPtr<Real>>& h,
                                                            const SampledSubgraph& sg,
                                                            int64_t layer,
                                                            AttentionSink* sink) const {
    const int64_t d = cfg_.hidden_dim;
    const std::string lp = "l" + std::to_string(layer) + ".";
    const Real inv_sqrt_d = Real(1) / std::sqrt(static_cast<Real>(d));

    // Distinct time gaps used by this subgraph; the encoder runs once per gap.
    std::map<Timestamp, int64_t> dt_index;
    TensorPtr<Real> rte_rows;
    if (cfg_.use_rte) {
        for (EdgeTypeId e = 0; e < schema_.num_edge_types(); ++e) {
            const auto& info = schema_.edge_info(e);
            for (const auto& edge : sg.adjacency[e]) {
                Timestamp dt = sg.entries[info.tgt_type][edge.tgt_entry].time -
                               sg.entries[info.src_type][edge.src_entry].time;
                dt_index.emplace(dt, 0);
            }
        }
        int64_t next = 0;
        std::vector<Real> base_vals;
        base_vals.reserve(dt_index.size() * static_cast<size_t>(d));
        for (auto& [dt, idx] : dt_index) {
            idx = next++;
            auto row = rte_base(dt);
            base_vals.insert(base_vals.end(), row.begin(), row.end());
        }
        if (next > 0) {
            auto base = make_tensor<Real>({next, d}, std::move(base_vals));
            rte_rows = linear(tape, base, params_.get(lp + "rte.W"), params_.get(lp + "rte.b"));
        }
    }

    // Per-type projections of the current representations. The temporal term
    // distributes through the key/message projections, so per-edge rows are
    // assembled from per-node and per-gap pieces.
    std::vector<TensorPtr<Real>> k_nodes(schema_.num_node_types());
    std::vector<TensorPtr<Real>> m_nodes(schema_.num_node_types());
    std::vector<TensorPtr<Real>> q_nodes(schema_.num_node_types());
    std::vector<TensorPtr<Real>> k_rte(schema_.num_node_types());
    std::vector<TensorPtr<Real>> m_rte(schema_.num_node_types());
    auto type_proj = [&](NodeTypeId t) {
        if (k_nodes[t]) return;
        const std::string key = type_key(t);
        k_nodes[t] = linear(tape, h[t], params_.get(lp + "k." + key + ".W"),
                            params_.get(lp + "k." + key + ".b"));
        m_nodes[t] = linear(tape, h[t], params_.get(lp + "m." + key + ".W"),
                            params_.get(lp + "m." + key + ".b"));
        if (rte_rows) {
            k_rte[t] = matmul(tape, rte_rows, params_.get(lp + "k." + key + ".W"));
            m_rte[t] = matmul(tape, rte_rows, params_.get(lp + "m." + key + ".W"));
        }
    };
    auto query_proj = [&](NodeTypeId t) {
        if (q_nodes[t]) return;
        const std::string key = type_key(t);
        q_nodes[t] = linear(tape, h[t], params_.get(lp + "q." + key + ".W"),
                            params_.get(lp + "q." + key + ".b"));
    };

    std::vector<TensorPtr<Real>> h_next(schema_.num_node_types());
    for (NodeTypeId tt = 0; tt < schema_.num_node_types(); ++tt) {
        struct EdgeRef {
            EdgeTypeId etype;
            int64_t src_entry, tgt_entry;
        };
        std::vector<EdgeRef> refs;
        std::vector<TensorPtr<Real>> score_parts, msg_parts;
        for (EdgeTypeId e = 0; e < schema_.num_edge_types(); ++e) {
            const auto& info = schema_.edge_info(e);
            if (info.tgt_type != tt || sg.adjacency[e].empty()) continue;
            const auto& edges = sg.adjacency[e];
            const NodeTypeId st = info.src_type;
            type_proj(st);
            query_proj(tt);

            std::vector<int64_t> src_rows, tgt_rows, dt_rows;
            src_rows.reserve(edges.size());
            tgt_rows.reserve(edges.size());
            for (const auto& edge : edges) {
                src_rows.push_back(edge.src_entry);
                tgt_rows.push_back(edge.tgt_entry);
                if (rte_rows)
                    dt_rows.push_back(dt_index.at(sg.entries[tt][edge.tgt_entry].time -
                                                  sg.entries[st][edge.src_entry].time));
                refs.push_back({e, edge.src_entry, edge.tgt_entry});
            }
            auto K = gather_rows(tape, k_nodes[st], src_rows);
            auto M = gather_rows(tape, m_nodes[st], src_rows);
            if (rte_rows) {
                K = add(tape, K, gather_rows(tape, k_rte[st], dt_rows));
                M = add(tape, M, gather_rows(tape, m_rte[st], dt_rows));
            }
            auto Q = gather_rows(tape, q_nodes[tt], std::move(tgt_rows));
            auto scores = bilinear_head_scores(tape, K, Q, params_.get(lp + "att." + edge_key(e)));
            scores = scale_by_scalar(tape, scores, params_.get(lp + "prior." + edge_key(e)),
                                     inv_sqrt_d);
            score_parts.push_back(scores);
            msg_parts.push_back(block_matmul_heads(tape, M, params_.get(lp + "msg." + edge_key(e))));
        }
        if (refs.empty()) {
            h_next[tt] = h[tt];  // no incoming edges: every target passes through
            continue;
        }

        auto scores = score_parts.size() == 1 ? score_parts[0] : vcat(tape, score_parts);
        auto msgs = msg_parts.size() == 1 ? msg_parts[0] : vcat(tape, msg_parts);

        // Pool all relations per target: order rows by target entry.
        std::vector<int64_t> perm(refs.size());
        std::iota(perm.begin(), perm.end(), 0);
        std::stable_sort(perm.begin(), perm.end(), [&](int64_t a, int64_t b) {
            return refs[a].tgt_entry < refs[b].tgt_entry;
        });
        scores = gather_rows(tape, scores, perm);
        msgs = gather_rows(tape, msgs, perm);

        std::vector<int64_t> offsets{0};
        std::vector<int64_t> active;
        for (size_t i = 0; i < perm.size(); ++i) {
            const int64_t tgt = refs[perm[i]].tgt_entry;
            if (active.empty() || active.back() != tgt) {
                if (!active.empty()) offsets.push_back(static_cast<int64_t>(i));
                active.push_back(tgt);
            }
        }
        offsets.push_back(static_cast<int64_t>(perm.size()));

        auto attn = softmax_rows(tape, scores, offsets);
        if (sink) {
            for (size_t i = 0; i < perm.size(); ++i) {
                const auto& ref = refs[perm[i]];
                AttentionRecord rec;
                rec.layer = layer;
                rec.tgt_type = tt;
                rec.tgt = sg.entries[tt][ref.tgt_entry];
                rec.src_type = schema_.edge_info(ref.etype).src_type;
                rec.src = sg.entries[rec.src_type][ref.src_entry];
                rec.edge_type = ref.etype;
                for (int64_t j = 0; j < cfg_.heads; ++j)
                    rec.weights.push_back(static_cast<double>(attn->v[i * cfg_.heads + j]));
                sink->push_back(std::move(rec));
            }
        }
        auto pooled = segment_weighted_sum(tape, attn, msgs, std::move(offsets));
        auto activated = activate(tape, pooled, cfg_.activation);
        auto out = linear(tape, activated, params_.get(lp + "out." + type_key(tt) + ".W"),
                          params_.get(lp + "out." + type_key(tt) + ".b"));
        out = add(tape, out, gather_rows(tape, h[tt], active));
        h_next[tt] = scatter_rows_update(tape, h[tt], std::move(active), out);
    }
    return h_next;
}

template <class Real>
std::vector<TensorPtr<Real>> HgtModelT<Real>::forward(TapeT<Real>& tape, const SampledSubgraph& sg,
                                                      AttentionSink* sink) const {
    auto xs = input_features(sg);
    std::vector<TensorPtr<Real>> h(schema_.num_node_types());
    for (NodeTypeId t = 0; t < schema_.num_node_types(); ++t)
        h[t] = adapt_input(tape, xs[t], t);
    for (int64_t l = 0; l < cfg_.layers; ++l) h = forward_layer(tape, h, sg, l, sink);
    return h;
}

template class HgtModelT<float>;
template class HgtModelT<double>;

}  // namespace hgt
