#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "hgt/model.hpp"
#include "hgt/synth.hpp"
#include "hgt/tasks.hpp"
#include "hgt/train.hpp"

using namespace hgt;

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

HeteroGraph small_synth(const std::string& dir, uint64_t seed = 0) {
    SynthConfig cfg;
    cfg.papers = 80;
    cfg.authors = 40;
    cfg.fields = 6;
    cfg.venues = 6;
    cfg.institutes = 2;
    cfg.classes = 3;
    cfg.correlation = 0.9;
    cfg.cites_per_paper = 3;
    cfg.seed = seed;
    fs::remove_all(dir);
    write_synth_graph(cfg, dir);
    Schema schema = Schema::load(dir + "/schema.json");
    return ingest_graph(schema, dir + "/nodes.tsv", dir + "/edges.tsv", dir, false);
}

RunConfig small_run() {
    RunConfig cfg;
    cfg.seed = 3;
    cfg.dtype = "f64";
    cfg.sampler.nodes_per_type = 6;
    cfg.sampler.depth = 2;
    cfg.model.hidden_dim = 8;
    cfg.model.heads = 2;
    cfg.model.layers = 2;
    cfg.schedule.epochs = 3;
    cfg.schedule.base_lr = 5e-3;
    cfg.task.classes = 3;
    cfg.task.seed_batch = 32;
    return cfg;
}

}  // namespace

TEST_CASE("adamw: zero gradient is a fixed point without decay") {
    ParamStoreT<double> store;
    auto p = store.create("p", {3});
    p->v = {1.0, -2.0, 0.5};
    store.zero_grad();
    OptimConfig oc;
    oc.weight_decay = 0.0;
    AdamWT<double> opt(store, oc);
    opt.step(0.1);
    CHECK(p->v[0] == 1.0);
    CHECK(p->v[1] == -2.0);
    CHECK(p->v[2] == 0.5);
}

TEST_CASE("adamw: decoupled decay shrinks weights by (1 - lr*lambda)") {
    ParamStoreT<double> store;
    auto p = store.create("p", {2});
    p->v = {4.0, -8.0};
    store.zero_grad();
    OptimConfig oc;
    oc.weight_decay = 0.25;
    AdamWT<double> opt(store, oc);
    opt.step(0.1);
    CHECK(p->v[0] == doctest::Approx(4.0 * (1 - 0.1 * 0.25)).epsilon(1e-15));
    CHECK(p->v[1] == doctest::Approx(-8.0 * (1 - 0.1 * 0.25)).epsilon(1e-15));
}

TEST_CASE("adamw: constant gradients drive steps toward -lr * sign(g)") {
    ParamStoreT<double> store;
    auto p = store.create("p", {2});
    p->v = {0.0, 0.0};
    OptimConfig oc;
    oc.weight_decay = 0.0;
    AdamWT<double> opt(store, oc);
    const double lr = 1e-3;
    double prev0 = p->v[0], prev1 = p->v[1];
    for (int i = 0; i < 2000; ++i) {
        p->g = {0.37, -42.0};
        prev0 = p->v[0];
        prev1 = p->v[1];
        opt.step(lr);
    }
    CHECK(p->v[0] - prev0 == doctest::Approx(-lr).epsilon(1e-3));
    CHECK(p->v[1] - prev1 == doctest::Approx(lr).epsilon(1e-3));
}

TEST_CASE("adamw refuses parameters without gradient buffers") {
    ParamStoreT<double> store;
    auto p = store.create("p", {2});
    AdamWT<double> opt(store, {});
    p->g.clear();
    try {
        opt.step(0.1);
        FAIL("expected MissingGradient");
    } catch (const Error& e) {
        CHECK(e.kind() == "MissingGradient");
    }
}

TEST_CASE("cosine schedule endpoints and midpoint") {
    ScheduleConfig cfg;
    cfg.base_lr = 1e-3;
    cfg.min_lr = 1e-6;
    cfg.epochs = 200;
    CHECK(cosine_lr(0, cfg) == doctest::Approx(1e-3).epsilon(1e-12));
    CHECK(cosine_lr(200, cfg) == doctest::Approx(1e-6).epsilon(1e-12));
    CHECK(cosine_lr(100, cfg) == doctest::Approx((1e-3 + 1e-6) / 2).epsilon(1e-12));
    CHECK_THROWS_AS(cosine_lr(-1, cfg), Error);
    CHECK_THROWS_AS(cosine_lr(201, cfg), Error);
}

TEST_CASE("temporal split respects the boundaries") {
    std::string dir = "/tmp/hgt_split_fix";
    HeteroGraph g = small_synth(dir);
    RunConfig cfg = small_run();
    DataSplit split = load_split(g, cfg.task, cfg.split, dir);
    const NodeTypeId paper = g.schema().node_type("paper");
    CHECK(!split.train_ids.empty());
    CHECK(!split.test_ids.empty());
    for (int64_t id : split.train_ids) CHECK(g.node_time({paper, id}) < 70);
    for (int64_t id : split.val_ids) {
        CHECK(g.node_time({paper, id}) >= 70);
        CHECK(g.node_time({paper, id}) < 80);
    }
    for (int64_t id : split.test_ids) CHECK(g.node_time({paper, id}) >= 80);
    CHECK(split.train_ids.size() + split.val_ids.size() + split.test_ids.size() ==
          static_cast<size_t>(g.num_nodes(paper)));
}

TEST_CASE("zero-epoch fit returns the initialization and is reproducible") {
    std::string dir = "/tmp/hgt_fit0_graph";
    HeteroGraph g = small_synth(dir);
    RunConfig cfg = small_run();
    cfg.schedule.epochs = 0;

    std::string out1 = "/tmp/hgt_fit0_a", out2 = "/tmp/hgt_fit0_b";
    fs::remove_all(out1);
    fs::remove_all(out2);
    FitResult r1 = fit(g, cfg, dir, out1);
    FitResult r2 = fit(g, cfg, dir, out2);
    CHECK(r1.history.empty());
    CHECK(r1.best_epoch == -1);
    CHECK(read_file(out1 + "/checkpoint/params.bin") == read_file(out2 + "/checkpoint/params.bin"));

    // training moves the weights away from the initialization
    cfg.schedule.epochs = 1;
    std::string out3 = "/tmp/hgt_fit0_c";
    fs::remove_all(out3);
    fit(g, cfg, dir, out3);
    CHECK(read_file(out1 + "/checkpoint/params.bin") != read_file(out3 + "/checkpoint/params.bin"));
}

TEST_CASE("identical run configs produce bitwise-identical history and checkpoints") {
    std::string dir = "/tmp/hgt_det_graph";
    HeteroGraph g = small_synth(dir);
    RunConfig cfg = small_run();

    std::string out1 = "/tmp/hgt_det_a", out2 = "/tmp/hgt_det_b";
    fs::remove_all(out1);
    fs::remove_all(out2);
    FitResult r1 = fit(g, cfg, dir, out1);
    FitResult r2 = fit(g, cfg, dir, out2);
    CHECK(r1.best_epoch == r2.best_epoch);
    CHECK(read_file(out1 + "/history.csv") == read_file(out2 + "/history.csv"));
    CHECK(read_file(out1 + "/checkpoint/params.bin") == read_file(out2 + "/checkpoint/params.bin"));
    for (size_t e = 0; e < r1.history.size(); ++e) {
        CHECK(r1.history[e].train_loss == r2.history[e].train_loss);
        CHECK(r1.history[e].val_loss == r2.history[e].val_loss);
    }
}

TEST_CASE("worker count does not change training results") {
    std::string dir = "/tmp/hgt_worker_graph";
    HeteroGraph g = small_synth(dir);
    RunConfig cfg = small_run();
    cfg.deterministic = false;
    cfg.workers = 1;
    std::string out1 = "/tmp/hgt_work_a", out2 = "/tmp/hgt_work_b";
    fs::remove_all(out1);
    fs::remove_all(out2);
    FitResult r1 = fit(g, cfg, dir, out1);
    cfg.workers = 3;
    FitResult r2 = fit(g, cfg, dir, out2);
    CHECK(read_file(out1 + "/history.csv") == read_file(out2 + "/history.csv"));
    CHECK(read_file(out1 + "/checkpoint/params.bin") == read_file(out2 + "/checkpoint/params.bin"));
    (void)r1;
    (void)r2;
}

TEST_CASE("checkpoint reload evaluates to bitwise-identical metrics") {
    std::string dir = "/tmp/hgt_eval_graph";
    HeteroGraph g = small_synth(dir);
    RunConfig cfg = small_run();
    std::string out = "/tmp/hgt_eval_run";
    fs::remove_all(out);
    fit(g, cfg, dir, out);

    EvalResult a = evaluate(g, out, dir);
    EvalResult b = evaluate(g, out, dir);
    CHECK(a.n_queries > 0);
    CHECK(a.ndcg == b.ndcg);
    CHECK(a.mrr == b.mrr);
    CHECK(a.accuracy == b.accuracy);
}

TEST_CASE("schema changes are refused at evaluation time") {
    std::string dir = "/tmp/hgt_mismatch_graph";
    HeteroGraph g = small_synth(dir);
    RunConfig cfg = small_run();
    std::string out = "/tmp/hgt_mismatch_run";
    fs::remove_all(out);
    cfg.schedule.epochs = 1;
    fit(g, cfg, dir, out);

    std::string dir2 = "/tmp/hgt_mismatch_graph2";
    HeteroGraph g2 = small_synth(dir2, /*seed=*/9);  // same schema, fine
    CHECK(evaluate(g2, out, dir2).n_queries >= 0);

    // different schema: change a feature dim
    SynthConfig sc;
    sc.papers = 30;
    sc.authors = 10;
    sc.fields = 4;
    sc.venues = 3;
    sc.institutes = 2;
    sc.classes = 3;
    sc.paper_feature_dim = 7;
    std::string dir3 = "/tmp/hgt_mismatch_graph3";
    fs::remove_all(dir3);
    write_synth_graph(sc, dir3);
    Schema schema3 = Schema::load(dir3 + "/schema.json");
    HeteroGraph g3 = ingest_graph(schema3, dir3 + "/nodes.tsv", dir3 + "/edges.tsv", dir3, false);
    try {
        evaluate(g3, out, dir3);
        FAIL("expected SchemaMismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == "SchemaMismatch");
    }
}

TEST_CASE("an in-memory model evaluates without touching disk checkpoints") {
    std::string dir = "/tmp/hgt_inmem_graph";
    HeteroGraph g = small_synth(dir);
    RunConfig cfg = small_run();
    HgtModelT<double> model(g.schema(), cfg.model);
    CounterRng rng = CounterRng::split(cfg.seed, "init");
    model.init_params(rng);
    ClassificationHeadT<double> head(model.params(), cfg.model.hidden_dim, cfg.task.classes);
    CounterRng head_rng = CounterRng::split(cfg.seed, "head");
    head.init(head_rng);

    EvalResult r = evaluate_model(g, cfg, model, dir);
    CHECK(r.task == "node-class");
    CHECK(r.n_queries > 0);
    CHECK(r.ndcg >= 0.0);
}

TEST_CASE("the ablation harness runs all three variants under one seed") {
    std::string dir = "/tmp/hgt_abl_graph";
    HeteroGraph g = small_synth(dir);
    RunConfig cfg = small_run();
    cfg.schedule.epochs = 1;
    std::string out = "/tmp/hgt_abl_run";
    fs::remove_all(out);
    auto rows = run_ablation(g, cfg, dir, out);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].variant == "full");
    CHECK(rows[1].variant == "-heter");
    CHECK(rows[2].variant == "-rte");
    for (const auto& r : rows) CHECK(std::isfinite(r.best_val_loss));
    std::string csv = read_file(out + "/ablation.csv");
    CHECK(csv.find("variant,best_val_loss") != std::string::npos);
    CHECK(csv.find("-heter") != std::string::npos);
}

TEST_CASE("a diverging run aborts with the offending batch") {
    std::string dir = "/tmp/hgt_blowup_graph";
    HeteroGraph g = small_synth(dir);
    RunConfig cfg = small_run();
    cfg.schedule.epochs = 8;
    cfg.schedule.base_lr = 1e18;  // guaranteed blow-up
    cfg.schedule.min_lr = 1e17;
    cfg.optim.clip_norm = 0.0;
    try {
        fit(g, cfg, dir, "");
        FAIL("expected NonFiniteLoss");
    } catch (const Error& e) {
        CHECK(e.kind() == "NonFiniteLoss");
        CHECK(std::string(e.what()).find("batch") != std::string::npos);
    }

    // the error must also drain a multi-worker sampling pool cleanly
    cfg.deterministic = false;
    cfg.workers = 3;
    cfg.task.seed_batch = 8;
    try {
        fit(g, cfg, dir, "");
        FAIL("expected NonFiniteLoss");
    } catch (const Error& e) {
        CHECK(e.kind() == "NonFiniteLoss");
    }
}

TEST_CASE("link task trains and separates planted pairs from negatives") {
    std::string dir = "/tmp/hgt_link_graph";
    HeteroGraph g = small_synth(dir);
    RunConfig cfg = small_run();
    cfg.task.kind = TaskKind::link;
    cfg.task.eval_candidates = 5;
    cfg.schedule.epochs = 4;
    std::string out = "/tmp/hgt_link_run";
    fs::remove_all(out);
    FitResult r = fit(g, cfg, dir, out);
    CHECK(!r.history.empty());
    for (const auto& s : r.history) CHECK(std::isfinite(s.train_loss));
    EvalResult er = evaluate(g, out, dir);
    CHECK(er.task == "link");
    CHECK(er.n_queries > 0);
    CHECK(er.mrr > 0.0);
    CHECK(er.ndcg > 0.0);
}
