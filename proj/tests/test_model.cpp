#include <cmath>
#include <set>

#include "doctest.h"
#include "hgt/gradcheck.hpp"
#include "hgt/model.hpp"
#include "hgt/tasks.hpp"
#include "model_util.hpp"

using namespace hgt;
using namespace hgt::testutil;

namespace {

HgtConfig small_cfg(int64_t d, int64_t h, int64_t layers, bool rte = true) {
    HgtConfig cfg;
    cfg.hidden_dim = d;
    cfg.heads = h;
    cfg.layers = layers;
    cfg.use_rte = rte;
    return cfg;
}

// two X, two Y, two Z event nodes over four edge types (two declared + inverses)
struct TriTypeFixture {
    Schema schema;
    SampledSubgraph sg;

    TriTypeFixture() {
        NodeTypeId x = schema.add_node_type("x", 3, true);
        NodeTypeId y = schema.add_node_type("y", 4, true);
        NodeTypeId z = schema.add_node_type("z", 5, true);
        schema.add_edge_type("exy", x, y);
        schema.add_edge_type("eyz", y, z);
        schema.finalize_inverses();
        CounterRng rng(17);
        std::vector<std::vector<float>> feats(3);
        auto fill = [&](int64_t n, int64_t dim) {
            std::vector<float> v(n * dim);
            for (auto& f : v) f = static_cast<float>(rng.next_normal());
            return v;
        };
        feats[0] = fill(2, 3);
        feats[1] = fill(2, 4);
        feats[2] = fill(2, 5);
        sg = make_subgraph(schema,
                           {{{0, 10}, {1, 20}}, {{0, 12}, {1, 21}}, {{0, 15}, {1, 30}}},
                           std::move(feats),
                           {{"exy", 0, 0, 10},
                            {"exy", 1, 0, 12},
                            {"exy", 1, 1, 20},
                            {"exy~rev", 0, 0, 10},
                            {"exy~rev", 0, 1, 12},
                            {"exy~rev", 1, 1, 20},
                            {"eyz", 0, 0, 12},
                            {"eyz", 1, 1, 21},
                            {"eyz~rev", 0, 0, 12},
                            {"eyz~rev", 1, 1, 21}});
        (void)x;
        (void)y;
        (void)z;
    }
};

}  // namespace

TEST_CASE("rte basis: zero gap gives alternating 0/1, all entries bounded") {
    HgtModelT<double> model(chain_schema(2), small_cfg(8, 2, 1));
    auto base0 = model.rte_base(0);
    for (size_t j = 0; j < base0.size(); ++j)
        CHECK(base0[j] == doctest::Approx(j % 2 == 0 ? 0.0 : 1.0).epsilon(1e-15));

    CounterRng rng(1);
    for (int i = 0; i < 200; ++i) {
        Timestamp dt = static_cast<Timestamp>(rng.next_below(2000001)) - 1000000;
        for (double v : model.rte_base(dt)) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("rte basis hand values at d=4, gap 1") {
    HgtModelT<double> model(chain_schema(2), small_cfg(4, 2, 1));
    auto base = model.rte_base(1);
    REQUIRE(base.size() == 4);
    CHECK(base[0] == doctest::Approx(std::sin(1.0)).epsilon(1e-12));
    CHECK(base[1] == doctest::Approx(std::cos(1.0 / std::pow(10000.0, 1.0 / 4))).epsilon(1e-12));
    CHECK(base[2] == doctest::Approx(std::sin(1.0 / std::pow(10000.0, 2.0 / 4))).epsilon(1e-12));
    CHECK(base[3] == doctest::Approx(std::cos(1.0 / std::pow(10000.0, 3.0 / 4))).epsilon(1e-12));
}

TEST_CASE("apply_rte: ablated identity, zero encoder identity, additive shift") {
    Schema schema = chain_schema(2);
    auto h = make_tensor<double>({1, 4}, {1.0, -2.0, 0.5, 3.0});

    SUBCASE("use_rte=false returns the input unchanged") {
        HgtModelT<double> model(schema, small_cfg(4, 2, 1, /*rte=*/false));
        TapeT<double> tape;
        auto out = model.apply_rte(tape, h, 2019, 1999);
        CHECK(out.get() == h.get());
    }
    SUBCASE("zero T-Linear and equal timestamps keep the value") {
        HgtModelT<double> model(schema, small_cfg(4, 2, 1));
        for (const auto& t : model.params().tensors()) std::fill(t->v.begin(), t->v.end(), 0.0);
        TapeT<double> tape;
        auto out = model.apply_rte(tape, h, 7, 7);
        for (size_t i = 0; i < 4; ++i) CHECK(out->v[i] == h->v[i]);
    }
    SUBCASE("the shift does not depend on the representation") {
        HgtModelT<double> model(schema, small_cfg(4, 2, 1));
        CounterRng rng(2);
        model.init_params(rng);
        TapeT<double> tape;
        auto h2 = make_tensor<double>({1, 4}, {-9.0, 4.0, 4.5, 0.25});
        auto d1 = model.apply_rte(tape, h, 30, 10);
        auto d2 = model.apply_rte(tape, h2, 30, 10);
        for (size_t i = 0; i < 4; ++i)
            CHECK(d1->v[i] - h->v[i] == doctest::Approx(d2->v[i] - h2->v[i]).epsilon(1e-12));
    }
}

TEST_CASE("attention scores: zero prior, identity cancellation, linearity in the prior") {
    Schema schema = chain_schema(4);
    const int64_t d = 4, heads = 2;
    HgtModelT<double> model(schema, small_cfg(d, heads, 1));
    set_identity_params(model);
    MetaRelation rel = schema.relation(schema.edge_type("e"));

    CounterRng rng(3);
    std::vector<double> sv(d), tv(d);
    for (auto& v : sv) v = rng.next_normal();
    for (auto& v : tv) v = rng.next_normal();
    auto s_aug = make_tensor<double>({1, d}, std::vector<double>(sv));
    auto t_repr = make_tensor<double>({1, d}, std::vector<double>(tv));

    SUBCASE("zero prior zeroes every head") {
        model.param("l0.prior.e")->v[0] = 0.0;
        TapeT<double> tape;
        auto scores = model.att_head_scores(tape, s_aug, t_repr, rel);
        for (double v : scores->v) CHECK(v == 0.0);
    }
    SUBCASE("identity relation blocks with prior sqrt(d) reduce to per-head dot products") {
        model.param("l0.prior.e")->v[0] = std::sqrt(static_cast<double>(d));
        TapeT<double> tape;
        auto scores = model.att_head_scores(tape, s_aug, t_repr, rel);
        const int64_t dh = d / heads;
        for (int64_t i = 0; i < heads; ++i) {
            double dot = 0;
            for (int64_t j = 0; j < dh; ++j) dot += sv[i * dh + j] * tv[i * dh + j];
            CHECK(scores->v[i] == doctest::Approx(dot).epsilon(1e-12));
        }
    }
    SUBCASE("doubling the prior doubles every head score") {
        model.param("l0.prior.e")->v[0] = 0.8;
        TapeT<double> tape;
        auto once = model.att_head_scores(tape, s_aug, t_repr, rel);
        model.param("l0.prior.e")->v[0] = 1.6;
        auto twice = model.att_head_scores(tape, s_aug, t_repr, rel);
        for (int64_t i = 0; i < heads; ++i)
            CHECK(twice->v[i] == doctest::Approx(2.0 * once->v[i]).epsilon(1e-12));
    }
    SUBCASE("unknown relation is rejected") {
        TapeT<double> tape;
        MetaRelation bogus{0, 99, 0};
        CHECK_THROWS_AS(model.att_head_scores(tape, s_aug, t_repr, bogus), Error);
    }
}

TEST_CASE("pooled attention: singleton, symmetry, per-head normalization") {
    HgtModelT<double> model(chain_schema(4), small_cfg(4, 2, 1));
    TapeT<double> tape;

    auto single = make_tensor<double>({1, 2}, {3.7, -12.0});
    auto a1 = model.hetero_attention(tape, single);
    CHECK(a1->v[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a1->v[1] == doctest::Approx(1.0).epsilon(1e-12));

    auto twin = make_tensor<double>({2, 2}, {0.4, -1.0, 0.4, -1.0});
    auto a2 = model.hetero_attention(tape, twin);
    for (double v : a2->v) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));

    CounterRng rng(9);
    std::vector<double> vals(10 * 2);
    for (auto& v : vals) v = rng.next_uniform(-5, 5);
    auto big = model.hetero_attention(tape, make_tensor<double>({10, 2}, std::move(vals)));
    for (int64_t head = 0; head < 2; ++head) {
        double sum = 0;
        for (int64_t r = 0; r < 10; ++r) sum += big->at(r, head);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }

    auto empty = make_tensor<double>({0, 2});
    CHECK_THROWS_AS(model.hetero_attention(tape, empty), Error);
}

TEST_CASE("message: identity chain and zero input") {
    Schema schema = chain_schema(4);
    HgtModelT<double> model(schema, small_cfg(4, 2, 1));
    set_identity_params(model);
    MetaRelation rel = schema.relation(schema.edge_type("e"));
    TapeT<double> tape;

    auto s_aug = make_tensor<double>({1, 4}, {0.5, -1.0, 2.0, 0.25});
    auto msg = model.message(tape, s_aug, rel);
    for (size_t i = 0; i < 4; ++i) CHECK(msg->v[i] == doctest::Approx(s_aug->v[i]).epsilon(1e-12));

    auto zero = make_tensor<double>({1, 4});
    auto msg0 = model.message(tape, zero, rel);
    for (double v : msg0->v) CHECK(v == 0.0);
}

TEST_CASE("aggregate: identity chain, zero projection, neighbor permutation invariance") {
    Schema schema = chain_schema(4);
    HgtConfig cfg = small_cfg(4, 2, 1);
    cfg.activation = Activation::identity;
    HgtModelT<double> model(schema, cfg);
    set_identity_params(model);
    TapeT<double> tape;

    auto h_prev = make_tensor<double>({1, 4}, {1.0, 1.0, 2.0, -1.0});
    SUBCASE("single neighbor with unit attention adds the message to the residual") {
        auto attn = make_tensor<double>({1, 2}, {1.0, 1.0});
        auto msg = make_tensor<double>({1, 4}, {0.1, 0.2, 0.3, 0.4});
        auto out = model.aggregate(tape, attn, msg, h_prev, 0);
        for (size_t i = 0; i < 4; ++i)
            CHECK(out->v[i] == doctest::Approx(msg->v[i] + h_prev->v[i]).epsilon(1e-12));
    }
    SUBCASE("zero output projection leaves only the residual") {
        std::fill(model.param("l0.out.t.W")->v.begin(), model.param("l0.out.t.W")->v.end(), 0.0);
        auto attn = make_tensor<double>({2, 2}, {0.5, 0.25, 0.5, 0.75});
        auto msg = make_tensor<double>({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
        auto out = model.aggregate(tape, attn, msg, h_prev, 0);
        for (size_t i = 0; i < 4; ++i) CHECK(out->v[i] == h_prev->v[i]);
    }
    SUBCASE("permuting neighbors leaves the sum unchanged") {
        auto attn = make_tensor<double>({2, 2}, {0.25, 0.8, 0.75, 0.2});
        auto msg = make_tensor<double>({2, 4}, {1, -2, 3, -4, 0.5, 0.25, -1, 2});
        auto out1 = model.aggregate(tape, attn, msg, h_prev, 0);
        auto attn_p = make_tensor<double>({2, 2}, {0.75, 0.2, 0.25, 0.8});
        auto msg_p = make_tensor<double>({2, 4}, {0.5, 0.25, -1, 2, 1, -2, 3, -4});
        auto out2 = model.aggregate(tape, attn_p, msg_p, h_prev, 0);
        for (size_t i = 0; i < 4; ++i)
            CHECK(out1->v[i] == doctest::Approx(out2->v[i]).epsilon(1e-12));
    }
}

TEST_CASE("forward on a zero-edge subgraph is residual-only") {
    Schema schema = chain_schema(3);
    HgtModelT<double> model(schema, small_cfg(6, 2, 3));
    CounterRng rng(4);
    model.init_params(rng);

    auto sg = make_subgraph(schema, {{{0, 1}, {1, 2}}}, {{1, 2, 3, 4, 5, 6}}, {});
    TapeT<double> tape;
    auto h0 = model.adapt_input(tape, model.input_features(sg)[0], 0);
    auto out = model.forward(tape, sg);
    REQUIRE(out[0]->v.size() == h0->v.size());
    for (size_t i = 0; i < h0->v.size(); ++i) CHECK(out[0]->v[i] == h0->v[i]);
}

TEST_CASE("one-layer hand trace on a three-node path with identity parameters") {
    Schema schema = chain_schema(2);
    HgtConfig cfg = small_cfg(2, 1, 1, /*rte=*/false);
    cfg.activation = Activation::identity;
    HgtModelT<double> model(schema, cfg);
    set_identity_params(model);
    const double sqrt2 = std::sqrt(2.0);
    model.param("l0.prior.e")->v[0] = sqrt2;
    model.param("l0.prior.e~rev")->v[0] = sqrt2;

    // path 0 -> 1 -> 2 with mirrors
    auto sg = make_subgraph(schema, {{{0, 0}, {1, 0}, {2, 0}}}, {{1, 0, 0, 1, 1, 1}},
                            {{"e", 0, 1}, {"e", 1, 2}, {"e~rev", 1, 0}, {"e~rev", 2, 1}});
    TapeT<double> tape;
    auto out = model.forward(tape, sg);

    const double w = std::exp(1.0) / (1.0 + std::exp(1.0));  // attention on node 2's message
    CHECK(out[0]->at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out[0]->at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out[0]->at(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out[0]->at(1, 1) == doctest::Approx(1.0 + w).epsilon(1e-12));
    CHECK(out[0]->at(2, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out[0]->at(2, 1) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("two-layer gradient check on the six-node three-type fixture") {
    TriTypeFixture fx;
    HgtConfig cfg = small_cfg(8, 2, 2);
    HgtModelT<double> model(fx.schema, cfg);
    CounterRng rng(23);
    model.init_params(rng);
    ClassificationHeadT<double> head(model.params(), 8, 2);
    CounterRng head_rng(24);
    head.init(head_rng);

    double err = grad_check<double>(model.params(), [&](TapeT<double>& tape) {
        auto h = model.forward(tape, fx.sg);
        auto rows = gather_rows(tape, h[2], {0, 1});
        return head.loss(tape, rows, {0, 1});
    });
    CHECK(err < 1e-4);
}

TEST_CASE("attention sums to one per target and head during a full forward") {
    TriTypeFixture fx;
    HgtModelT<double> model(fx.schema, small_cfg(8, 4, 2));
    CounterRng rng(31);
    model.init_params(rng);
    AttentionSink sink;
    TapeT<double> tape;
    model.forward(tape, fx.sg, &sink);
    tape.clear();

    std::map<std::tuple<NodeTypeId, int64_t, Timestamp>, std::vector<double>> sums;
    for (const auto& rec : sink) {
        auto& acc = sums[{rec.tgt_type, rec.tgt.id, rec.tgt.time}];
        acc.resize(rec.weights.size(), 0.0);
        for (size_t i = 0; i < rec.weights.size(); ++i) acc[i] += rec.weights[i];
    }
    REQUIRE(!sums.empty());
    for (const auto& [key, acc] : sums)
        for (double s : acc) CHECK(std::abs(s - 2.0) < 2e-6);  // two layers, each summing to 1
}

TEST_CASE("relabeling nodes within a type permutes outputs identically") {
    Schema schema = chain_schema(2);
    HgtModelT<double> model(schema, small_cfg(4, 2, 2, /*rte=*/false));
    CounterRng rng(5);
    model.init_params(rng);

    auto sg1 = make_subgraph(schema, {{{0, 3}, {1, 7}, {2, 9}}}, {{1, 0, 0, 1, 1, 1}},
                             {{"e", 0, 1, 3}, {"e~rev", 1, 0, 3}, {"e", 1, 2, 7},
                              {"e~rev", 2, 1, 7}});
    // swap entries 0 and 2
    auto sg2 = make_subgraph(schema, {{{2, 9}, {1, 7}, {0, 3}}}, {{1, 1, 0, 1, 1, 0}},
                             {{"e", 2, 1, 3}, {"e~rev", 1, 2, 3}, {"e", 1, 0, 7},
                              {"e~rev", 0, 1, 7}});
    TapeT<double> tape;
    auto out1 = model.forward(tape, sg1);
    auto out2 = model.forward(tape, sg2);
    for (int64_t c = 0; c < 4; ++c) {
        CHECK(out1[0]->at(0, c) == doctest::Approx(out2[0]->at(2, c)).epsilon(1e-12));
        CHECK(out1[0]->at(1, c) == doctest::Approx(out2[0]->at(1, c)).epsilon(1e-12));
        CHECK(out1[0]->at(2, c) == doctest::Approx(out2[0]->at(0, c)).epsilon(1e-12));
    }
}

TEST_CASE("disabling the temporal encoder makes outputs timestamp-invariant to the bit") {
    Schema schema = chain_schema(2);
    HgtModelT<double> model(schema, small_cfg(4, 2, 2, /*rte=*/false));
    CounterRng rng(6);
    model.init_params(rng);

    auto sg1 = make_subgraph(schema, {{{0, 0}, {1, 50}}}, {{1, 2, 3, 4}},
                             {{"e", 0, 1, 10}, {"e~rev", 1, 0, 10}});
    auto sg2 = make_subgraph(schema, {{{0, 999}, {1, -4}}}, {{1, 2, 3, 4}},
                             {{"e", 0, 1, -77}, {"e~rev", 1, 0, 123}});
    TapeT<double> tape;
    auto out1 = model.forward(tape, sg1);
    auto out2 = model.forward(tape, sg2);
    for (size_t i = 0; i < out1[0]->v.size(); ++i) CHECK(out1[0]->v[i] == out2[0]->v[i]);
}

TEST_CASE("shared-weight ablation is blind to type labels") {
    Schema schema;
    NodeTypeId a = schema.add_node_type("a", 2, true);
    NodeTypeId b = schema.add_node_type("b", 2, true);
    schema.add_edge_type("xa", a, a);
    schema.add_edge_type("xb", b, b);
    schema.finalize_inverses();

    HgtConfig cfg = small_cfg(4, 2, 2);
    cfg.use_heter = false;
    HgtModelT<double> model(schema, cfg);
    CounterRng rng(8);
    model.init_params(rng);

    std::vector<float> feats{1.0f, -0.5f, 0.25f, 2.0f};
    auto sg_a = make_subgraph(schema, {{{0, 1}, {1, 2}}, {}},
                              {std::vector<float>(feats), {}},
                              {{"xa", 0, 1, 1}, {"xa~rev", 1, 0, 1}});
    auto sg_b = make_subgraph(schema, {{}, {{0, 1}, {1, 2}}},
                              {{}, std::vector<float>(feats)},
                              {{"xb", 0, 1, 1}, {"xb~rev", 1, 0, 1}});
    TapeT<double> tape;
    auto out_a = model.forward(tape, sg_a);
    auto out_b = model.forward(tape, sg_b);
    REQUIRE(out_a[a]->v.size() == out_b[b]->v.size());
    for (size_t i = 0; i < out_a[a]->v.size(); ++i) CHECK(out_a[a]->v[i] == out_b[b]->v[i]);
}

TEST_CASE("per-layer parameter count matches the closed form") {
    auto check_formula = [&](int64_t n_types, int64_t declared_edges, int64_t d, int64_t h,
                             bool heter, bool rte) {
        Schema schema;
        for (int64_t t = 0; t < n_types; ++t)
            schema.add_node_type("n" + std::to_string(t), 4, true);
        for (int64_t e = 0; e < declared_edges; ++e)
            schema.add_edge_type("e" + std::to_string(e),
                                 static_cast<NodeTypeId>(e % n_types),
                                 static_cast<NodeTypeId>((e + 1) % n_types));
        schema.finalize_inverses();
        const int64_t R = schema.num_edge_types();  // declared + inverses

        HgtConfig cfg = small_cfg(d, h, 2, rte);
        cfg.use_heter = heter;
        HgtModelT<double> model(schema, cfg);
        const int64_t expect =
            hgt_layer_param_formula(n_types, R, R, d, h, heter, rte);
        CHECK(model.layer_param_count() == expect);
        return model.params().param_count();
    };
    int64_t full = check_formula(3, 4, 16, 4, true, true);
    int64_t shared = check_formula(3, 4, 16, 4, false, true);
    CHECK(shared < full);
    check_formula(2, 1, 8, 2, true, false);
}

TEST_CASE("receptive field stops at exactly L hops") {
    Schema schema = chain_schema(2);
    const int64_t layers = 2;
    HgtModelT<double> model(schema, small_cfg(4, 2, layers, /*rte=*/false));
    CounterRng rng(12);
    model.init_params(rng);

    // path 0-1-2-3-4
    auto features = [](float bump3) {
        return std::vector<float>{1, 0, 0, 1, 1, 1, 2 + bump3, 0, 0, 2};
    };
    std::vector<SubEdge> edges;
    for (int64_t i = 0; i + 1 < 5; ++i) {
        edges.push_back({"e", i, i + 1, 0});
        edges.push_back({"e~rev", i + 1, i, 0});
    }
    auto entries = std::vector<std::vector<TimedNode>>{
        {{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4, 0}}};

    TapeT<double> tape;
    auto base = model.forward(tape, make_subgraph(schema, entries, {features(0.0f)}, edges));

    // perturb node 2 (two hops from node 0): output must move
    auto two_hop_feats = features(0.0f);
    two_hop_feats[2 * 2] += 1.0f;
    auto bumped2 =
        model.forward(tape, make_subgraph(schema, entries, {two_hop_feats}, edges));
    bool changed = false;
    for (int64_t c = 0; c < 4; ++c)
        if (bumped2[0]->at(0, c) != base[0]->at(0, c)) changed = true;
    CHECK(changed);

    // perturb node 3 (three hops): node 0's output is bitwise identical
    auto bumped3 = model.forward(tape, make_subgraph(schema, entries, {features(5.0f)}, edges));
    for (int64_t c = 0; c < 4; ++c) CHECK(bumped3[0]->at(0, c) == base[0]->at(0, c));
}
