#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hgt/params.hpp"
#include "hgt/sampler.hpp"
#include "hgt/schema.hpp"
#include "hgt/tensor.hpp"

namespace hgt {

struct HgtConfig {
    int64_t hidden_dim = 256;
    int64_t heads = 8;
    int64_t layers = 3;
    bool use_heter = true;  // false: one shared weight set for all meta relations
    bool use_rte = true;    // false: temporal encoding disabled
    Activation activation = Activation::gelu;
    bool self_loops = false;  // recorded; takes effect when the graph is built

    void validate() const {
        if (hidden_dim < 1 || heads < 1 || hidden_dim % heads != 0)
            throw Error::config("BadConfig", "hidden_dim must be a positive multiple of heads");
        if (layers < 1) throw Error::config("BadConfig", "layers must be >= 1");
    }
};

// Post-softmax attention for one edge, captured during forward.
struct AttentionRecord {
    int64_t layer;
    NodeTypeId tgt_type;
    TimedNode tgt;
    NodeTypeId src_type;
    TimedNode src;
    EdgeTypeId edge_type;
    std::vector<double> weights;  // one value per head
};
using AttentionSink = std::vector<AttentionRecord>;

// The layer stack: per-type input adaptation, then `layers` rounds of
// relation-parameterized attention + message passing + residual aggregation.
template <class Real>
class HgtModelT {
public:
    HgtModelT(Schema schema, HgtConfig cfg);

    void init_params(CounterRng& rng);

    ParamStoreT<Real>& params() { return params_; }
    const ParamStoreT<Real>& params() const { return params_; }
    const HgtConfig& config() const { return cfg_; }
    const Schema& schema() const { return schema_; }

    int64_t layer_param_count() const;  // trainable entries in one layer
    int64_t adapter_param_count() const;

    // H^(0): per-type projection of raw features into the hidden space.
    TensorPtr<Real> adapt_input(TapeT<Real>& tape, const TensorPtr<Real>& features,
                                NodeTypeId type) const;

    // Sinusoid basis for a time gap; entries lie in [-1, 1].
    std::vector<Real> rte_base(Timestamp dt) const;
    // T-Linear applied to the basis, for one layer's encoder.
    TensorPtr<Real> rte_encode(TapeT<Real>& tape, Timestamp dt, int64_t layer = 0) const;
    // h_src + encoding of (t_tgt - t_src); identity when RTE is disabled.
    TensorPtr<Real> apply_rte(TapeT<Real>& tape, const TensorPtr<Real>& h_src, Timestamp t_tgt,
                              Timestamp t_src, int64_t layer = 0) const;

    // Single-edge attention logits [1 x heads] for an augmented source row and
    // a target row under one relation.
    TensorPtr<Real> att_head_scores(TapeT<Real>& tape, const TensorPtr<Real>& s_aug,
                                    const TensorPtr<Real>& t_repr, const MetaRelation& rel,
                                    int64_t layer = 0) const;
    // Joint softmax across a target's pooled neighbor scores [n x heads].
    TensorPtr<Real> hetero_attention(TapeT<Real>& tape, const TensorPtr<Real>& scores) const;
    // Relation-projected message for one augmented source row.
    TensorPtr<Real> message(TapeT<Real>& tape, const TensorPtr<Real>& s_aug,
                            const MetaRelation& rel, int64_t layer = 0) const;
    // Attention-weighted message sum -> activation -> output projection -> residual.
    TensorPtr<Real> aggregate(TapeT<Real>& tape, const TensorPtr<Real>& attn,
                              const TensorPtr<Real>& messages, const TensorPtr<Real>& h_prev_t,
                              NodeTypeId tgt_type, int64_t layer = 0) const;

    // Raw per-type features of a subgraph as constant tensors.
    std::vector<TensorPtr<Real>> input_features(const SampledSubgraph& sg) const;

    // Full stack: H^(0) from features, then all layers. Output rows align with
    // sg.entries. Timestamps are only read when RTE is enabled.
    std::vector<TensorPtr<Real>> forward(TapeT<Real>& tape, const SampledSubgraph& sg,
                                         AttentionSink* sink = nullptr) const;

    // One layer update given current representations.
    std::vector<TensorPtr<Real>> forward_layer(TapeT<Real>& tape,
                                               const std::vector<TensorPtr<Real>>& h,
                                               const SampledSubgraph& sg, int64_t layer,
                                               AttentionSink* sink = nullptr) const;

    // Parameter accessors honor the -Heter aliasing.
    TensorPtr<Real> param(const std::string& name) const { return params_.get(name); }
    std::string type_key(NodeTypeId t) const;
    std::string edge_key(EdgeTypeId e) const;

private:
    void declare_params();

    Schema schema_;
    HgtConfig cfg_;
    ParamStoreT<Real> params_;
    bool shared_adapter_ = false;
};

using HgtModel = HgtModelT<double>;

// Closed-form trainable-entry count of one layer for a schema, matching the
// enumeration in HgtModelT::layer_param_count.
int64_t hgt_layer_param_formula(int64_t num_node_types, int64_t num_edge_types,
                                int64_t num_meta_relations, int64_t hidden_dim, int64_t heads,
                                bool use_heter, bool use_rte);

}  // namespace hgt
