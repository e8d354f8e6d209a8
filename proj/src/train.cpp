#include "hgt/train.hpp"

#include <algorithm>
#include <numeric>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "hgt/model.hpp"
#include "hgt/tasks.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace hgt {

double cosine_lr(int64_t epoch, const ScheduleConfig& cfg) {
    cfg.validate();
    if (epoch < 0 || epoch > cfg.epochs)
        throw Error::config("EpochOutOfRange", "epoch " + std::to_string(epoch) + " outside [0, " +
                                                   std::to_string(cfg.epochs) + "]");
    const double phase = cfg.epochs == 0
                             ? 0.0
                             : static_cast<double>(epoch) / static_cast<double>(cfg.epochs);
    return cfg.min_lr + 0.5 * (cfg.base_lr - cfg.min_lr) * (1.0 + std::cos(3.141592653589793 * phase));
}

DataSplit load_split(const HeteroGraph& graph, const TaskSpec& task, const SplitConfig& split,
                     const std::string& graph_dir) {
    const Schema& schema = graph.schema();
    NodeTypeId tt = schema.node_type(task.target_type);
    if (!schema.node_info(tt).is_event)
        throw Error::config("BadConfig",
                            "temporal split needs an event target type, '" + task.target_type +
                                "' is plain");
    DataSplit out;
    if (task.kind == TaskKind::node_class) {
        out.labels.assign(graph.num_nodes(tt), -1);
        std::string path = task.labels_file;
        if (!fs::path(path).is_absolute() && !graph_dir.empty())
            path = graph_dir + "/" + task.labels_file;
        std::ifstream in(path);
        if (!in) throw Error::data("MissingFile", "cannot open labels file '" + path + "'");
        std::string line;
        int64_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            std::istringstream ss(line);
            int64_t id, label;
            if (!(ss >> id >> label))
                throw Error::data("BadRecord", "labels line " + std::to_string(lineno));
            if (id < 0 || id >= graph.num_nodes(tt))
                throw Error::data("DanglingEdge",
                                  "labels line " + std::to_string(lineno) + ": no such node");
            if (label < 0 || label >= task.classes)
                throw Error::data("LabelOutOfRange", "labels line " + std::to_string(lineno));
            out.labels[id] = label;
        }
    }
    for (int64_t id = 0; id < graph.num_nodes(tt); ++id) {
        if (task.kind == TaskKind::node_class && out.labels[id] < 0) continue;
        Timestamp t = graph.node_time({tt, id});
        if (t < split.train_before)
            out.train_ids.push_back(id);
        else if (t < split.val_before)
            out.val_ids.push_back(id);
        else
            out.test_ids.push_back(id);
    }
    return out;
}

namespace {

struct Batch {
    SampledSubgraph sg;
    std::vector<int64_t> target_rows;
    std::vector<int64_t> labels;        // node-class
    std::vector<int64_t> cand_rows;     // link, aligned with target_rows
    std::vector<double> pair_targets;   // link, 0/1
    int64_t examples = 0;
};

std::vector<std::map<TimedNode, int64_t>> entry_rows(const SampledSubgraph& sg) {
    std::vector<std::map<TimedNode, int64_t>> maps(sg.entries.size());
    for (size_t t = 0; t < sg.entries.size(); ++t)
        for (size_t i = 0; i < sg.entries[t].size(); ++i)
            maps[t][sg.entries[t][i]] = static_cast<int64_t>(i);
    return maps;
}

uint64_t stream_seed(uint64_t root, std::string_view domain, uint64_t index) {
    return CounterRng::split(root, domain, index).next_u64();
}

// Positive candidate ids for one target node under the link relation.
std::vector<int64_t> link_positives(const HeteroGraph& graph, const MetaRelation& rel,
                                    int64_t target_id) {
    std::vector<int64_t> out;
    for (const auto& in : graph.neighbors({rel.tgt_type, target_id}, rel)) {
        if (std::find(out.begin(), out.end(), in.src) == out.end()) out.push_back(in.src);
    }
    return out;
}

Batch build_node_class_batch(const HeteroGraph& graph, const RunConfig& cfg,
                             const DataSplit& split, std::span<const int64_t> ids,
                             uint64_t sample_seed) {
    const Schema& schema = graph.schema();
    NodeTypeId tt = schema.node_type(cfg.task.target_type);
    std::vector<Seed> seeds;
    seeds.reserve(ids.size());
    for (int64_t id : ids) seeds.push_back({{tt, id}, std::nullopt});
    SamplerConfig sc = cfg.sampler;
    sc.rng_seed = sample_seed;
    Batch batch;
    batch.sg = hg_sample(graph, seeds, sc);
    auto rows = entry_rows(batch.sg);
    for (int64_t id : ids) {
        TimedNode entry{id, graph.node_time({tt, id})};
        batch.target_rows.push_back(rows[tt].at(entry));
        batch.labels.push_back(split.labels[id]);
    }
    batch.examples = static_cast<int64_t>(ids.size());
    return batch;
}

Batch build_link_batch(const HeteroGraph& graph, const RunConfig& cfg,
                       std::span<const int64_t> ids, uint64_t sample_seed, uint64_t negative_seed) {
    const Schema& schema = graph.schema();
    NodeTypeId tt = schema.node_type(cfg.task.target_type);
    EdgeTypeId link = schema.edge_type(cfg.task.link_edge_type);
    MetaRelation rel = schema.relation(link);
    if (rel.tgt_type != tt)
        throw Error::config("BadConfig", "link edge type '" + cfg.task.link_edge_type +
                                             "' does not target '" + cfg.task.target_type + "'");
    const NodeTypeId ct = rel.src_type;
    const int64_t n_cand = graph.num_nodes(ct);
    const bool cand_event = schema.node_info(ct).is_event;
    CounterRng neg_rng(negative_seed);

    std::vector<Seed> seeds;
    std::vector<EdgeExclusion> exclusions;
    struct Pair {
        TimedNode target, cand;
        double label;
    };
    std::vector<Pair> pairs;
    for (int64_t id : ids) {
        auto positives = link_positives(graph, rel, id);
        if (positives.empty()) continue;
        if (static_cast<int64_t>(positives.size()) > cfg.task.positives_per_query)
            positives.resize(cfg.task.positives_per_query);
        const Timestamp t = graph.node_time({tt, id});
        TimedNode target{id, t};
        seeds.push_back({{tt, id}, std::nullopt});
        auto all_pos = link_positives(graph, rel, id);
        for (int64_t pos : positives) {
            Timestamp ct_time = cand_event ? graph.node_time({ct, pos}) : t;
            seeds.push_back({{ct, pos}, cand_event ? std::optional<Timestamp>{} : std::optional{t}});
            pairs.push_back({target, {pos, ct_time}, 1.0});
            // one negative per positive
            for (int attempt = 0; attempt < 128; ++attempt) {
                int64_t neg = static_cast<int64_t>(neg_rng.next_below(static_cast<uint64_t>(n_cand)));
                if (std::find(all_pos.begin(), all_pos.end(), neg) != all_pos.end()) continue;
                Timestamp nt = cand_event ? graph.node_time({ct, neg}) : t;
                seeds.push_back(
                    {{ct, neg}, cand_event ? std::optional<Timestamp>{} : std::optional{t}});
                pairs.push_back({target, {neg, nt}, 0.0});
                break;
            }
        }
        for (int64_t pos : all_pos) exclusions.push_back({pos, id, link});
    }
    Batch batch;
    if (pairs.empty()) return batch;
    SamplerConfig sc = cfg.sampler;
    sc.rng_seed = sample_seed;
    batch.sg = hg_sample(graph, seeds, sc, exclusions);
    auto rows = entry_rows(batch.sg);
    for (const auto& p : pairs) {
        batch.target_rows.push_back(rows[tt].at(p.target));
        batch.cand_rows.push_back(rows[ct].at(p.cand));
        batch.pair_targets.push_back(p.label);
    }
    batch.examples = static_cast<int64_t>(pairs.size());
    return batch;
}

Batch build_batch(const HeteroGraph& graph, const RunConfig& cfg, const DataSplit& split,
                  std::span<const int64_t> ids, uint64_t root, std::string_view domain,
                  uint64_t index) {
    if (cfg.task.kind == TaskKind::node_class)
        return build_node_class_batch(graph, cfg, split, ids, stream_seed(root, domain, index));
    return build_link_batch(graph, cfg, ids, stream_seed(root, domain, index),
                            stream_seed(root, "negatives", index));
}

// Runs make(i) for i in [0, n) on `workers` threads and feeds the results to
// consume(i, batch) in index order. Batch content is a pure function of the
// index, so worker count never changes results. Any exception from either
// side drains the pool and rethrows on the calling thread.
void for_each_batch(int64_t n, int64_t workers, const std::function<Batch(int64_t)>& make,
                    const std::function<void(int64_t, Batch&)>& consume) {
    if (workers <= 1) {
        for (int64_t i = 0; i < n; ++i) {
            Batch b = make(i);
            consume(i, b);
        }
        return;
    }
    const int64_t capacity = workers * 2;
    std::mutex mu;
    std::condition_variable cv;
    std::map<int64_t, Batch> ready;
    int64_t next_make = 0, next_consume = 0;
    bool abort = false;
    std::exception_ptr worker_error;
    std::vector<std::thread> pool;
    for (int64_t w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            while (true) {
                int64_t mine;
                {
                    std::unique_lock lock(mu);
                    cv.wait(lock, [&] {
                        return abort || next_make >= n || next_make - next_consume < capacity;
                    });
                    if (abort || next_make >= n) return;
                    mine = next_make++;
                }
                try {
                    Batch b = make(mine);
                    std::lock_guard lock(mu);
                    ready.emplace(mine, std::move(b));
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!worker_error) worker_error = std::current_exception();
                    abort = true;
                }
                cv.notify_all();
            }
        });
    }
    auto drain = [&]() {
        {
            std::lock_guard lock(mu);
            abort = true;
        }
        cv.notify_all();
        for (auto& t : pool) t.join();
    };
    try {
        std::unique_lock lock(mu);
        while (next_consume < n) {
            cv.wait(lock, [&] { return abort || ready.contains(next_consume); });
            if (abort) break;
            Batch b = std::move(ready.at(next_consume));
            ready.erase(next_consume);
            lock.unlock();
            consume(next_consume, b);
            lock.lock();
            ++next_consume;
            cv.notify_all();
        }
    } catch (...) {
        drain();
        throw;
    }
    drain();
    if (worker_error) std::rethrow_exception(worker_error);
}

template <class Real>
struct Pipeline {
    HgtModelT<Real> model;
    std::optional<ClassificationHeadT<Real>> cls;
    std::optional<NtnHeadT<Real>> ntn;
    NodeTypeId target_type;
    NodeTypeId cand_type = -1;

    Pipeline(const HeteroGraph& graph, const RunConfig& cfg)
        : model(graph.schema(), cfg.model),
          target_type(graph.schema().node_type(cfg.task.target_type)) {
        if (cfg.task.kind == TaskKind::node_class) {
            cls.emplace(model.params(), cfg.model.hidden_dim, cfg.task.classes);
        } else {
            ntn.emplace(model.params(), cfg.model.hidden_dim, cfg.task.ntn_slices);
            EdgeTypeId link = graph.schema().edge_type(cfg.task.link_edge_type);
            cand_type = graph.schema().edge_info(link).src_type;
        }
    }

    void init(uint64_t seed) {
        CounterRng model_rng = CounterRng::split(seed, "init");
        model.init_params(model_rng);
        CounterRng head_rng = CounterRng::split(seed, "head");
        if (cls) cls->init(head_rng);
        if (ntn) ntn->init(head_rng);
    }

    TensorPtr<Real> loss(TapeT<Real>& tape, const Batch& batch) const {
        auto h = model.forward(tape, batch.sg);
        if (cls) {
            auto rows = gather_rows(tape, h[target_type], batch.target_rows);
            return cls->loss(tape, rows, batch.labels);
        }
        auto p = gather_rows(tape, h[target_type], batch.target_rows);
        auto a = gather_rows(tape, h[cand_type], batch.cand_rows);
        std::vector<Real> targets(batch.pair_targets.begin(), batch.pair_targets.end());
        return bce_with_logits(tape, ntn->logits(tape, p, a), targets);
    }
};

std::vector<std::vector<int64_t>> make_batches(std::vector<int64_t> ids, int64_t batch_size,
                                               CounterRng* shuffle_rng) {
    if (shuffle_rng) {
        for (size_t i = ids.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(shuffle_rng->next_below(i));
            std::swap(ids[i - 1], ids[j]);
        }
    }
    std::vector<std::vector<int64_t>> out;
    for (size_t i = 0; i < ids.size(); i += static_cast<size_t>(batch_size)) {
        size_t end = std::min(ids.size(), i + static_cast<size_t>(batch_size));
        out.emplace_back(ids.begin() + static_cast<int64_t>(i), ids.begin() + static_cast<int64_t>(end));
    }
    return out;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

template <class Real>
FitResult fit_impl(const HeteroGraph& graph, const RunConfig& cfg, const std::string& graph_dir,
                   const std::string& out_dir) {
    cfg.validate();
    const int64_t workers = cfg.deterministic ? 1 : cfg.workers;
    DataSplit split = load_split(graph, cfg.task, cfg.split, graph_dir);

    Pipeline<Real> pipe(graph, cfg);
    pipe.init(cfg.seed);
    AdamWT<Real> opt(pipe.model.params(), cfg.optim);

    FitResult result;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<std::vector<Real>> best_params;
    auto snapshot = [&]() {
        best_params.clear();
        for (const auto& t : pipe.model.params().tensors())
            best_params.emplace_back(t->v.begin(), t->v.end());
    };
    snapshot();  // zero-epoch runs return the initialization

    for (int64_t epoch = 0; epoch < cfg.schedule.epochs; ++epoch) {
        const double lr = cosine_lr(epoch, cfg.schedule);
        CounterRng shuffle_rng = CounterRng::split(cfg.seed, "shuffle", static_cast<uint64_t>(epoch));
        auto train_batches = make_batches(split.train_ids, cfg.task.seed_batch, &shuffle_rng);
        const uint64_t epoch_tag = static_cast<uint64_t>(epoch) << 24;

        double train_loss_sum = 0.0;
        int64_t train_examples = 0;
        for_each_batch(
            static_cast<int64_t>(train_batches.size()), workers,
            [&](int64_t i) {
                return build_batch(graph, cfg, split, train_batches[static_cast<size_t>(i)],
                                   cfg.seed, "sample", epoch_tag + static_cast<uint64_t>(i));
            },
            [&](int64_t i, Batch& batch) {
                if (batch.examples == 0) return;
                TapeT<Real> tape;
                pipe.model.params().zero_grad();
                auto loss = pipe.loss(tape, batch);
                const double value = static_cast<double>(loss->v[0]);
                if (!std::isfinite(value))
                    throw Error::numeric("NonFiniteLoss", "epoch " + std::to_string(epoch) +
                                                              " batch " + std::to_string(i));
                tape.backward(loss);
                clip_gradients(pipe.model.params(), cfg.optim.clip_norm);
                opt.step(lr);
                train_loss_sum += value * static_cast<double>(batch.examples);
                train_examples += batch.examples;
            });

        double val_loss_sum = 0.0;
        int64_t val_examples = 0;
        auto val_batches = make_batches(split.val_ids, cfg.task.seed_batch, nullptr);
        for_each_batch(
            static_cast<int64_t>(val_batches.size()), workers,
            [&](int64_t i) {
                return build_batch(graph, cfg, split, val_batches[static_cast<size_t>(i)],
                                   cfg.seed, "valsample", epoch_tag + static_cast<uint64_t>(i));
            },
            [&](int64_t i, Batch& batch) {
                if (batch.examples == 0) return;
                TapeT<Real> tape;
                auto loss = pipe.loss(tape, batch);
                tape.clear();
                const double value = static_cast<double>(loss->v[0]);
                if (!std::isfinite(value))
                    throw Error::numeric("NonFiniteLoss", "epoch " + std::to_string(epoch) +
                                                              " val batch " + std::to_string(i));
                val_loss_sum += value * static_cast<double>(batch.examples);
                val_examples += batch.examples;
            });

        EpochStats stats;
        stats.epoch = epoch;
        stats.lr = lr;
        stats.train_loss = train_examples ? train_loss_sum / static_cast<double>(train_examples)
                                          : std::numeric_limits<double>::quiet_NaN();
        stats.val_loss = val_examples ? val_loss_sum / static_cast<double>(val_examples)
                                      : std::numeric_limits<double>::quiet_NaN();
        result.history.push_back(stats);

        const double selection = val_examples ? stats.val_loss : stats.train_loss;
        if (selection < best_val) {
            best_val = selection;
            result.best_epoch = epoch;
            snapshot();
        }
    }
    result.best_val_loss = best_val;

    // restore the selected weights
    const auto& tensors = pipe.model.params().tensors();
    for (size_t i = 0; i < tensors.size(); ++i)
        tensors[i]->v.assign(best_params[i].begin(), best_params[i].end());

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        {
            std::ofstream hist(out_dir + "/history.csv");
            hist << "epoch,lr,train_loss,val_loss\n";
            for (const auto& s : result.history)
                hist << s.epoch << "," << fmt_double(s.lr) << "," << fmt_double(s.train_loss) << ","
                     << fmt_double(s.val_loss) << "\n";
        }
        cfg.save(out_dir + "/config.json");
        result.checkpoint_dir = out_dir + "/checkpoint";
        pipe.model.params().save(result.checkpoint_dir, cfg.hash(graph.schema()), cfg.seed);
    }
    return result;
}

struct Query {
    int64_t rank = 0;  // 1-based rank of the first positive
    double ndcg_score = 0.0;
    double mrr_score = 0.0;
    int64_t id = -1;
    int64_t predicted = -1;
    int64_t truth = -1;
};

template <class Real>
EvalResult eval_impl(const HeteroGraph& graph, const RunConfig& cfg, Pipeline<Real>& pipe,
                     const std::string& graph_dir) {
    DataSplit split = load_split(graph, cfg.task, cfg.split, graph_dir);
    const Schema& schema = graph.schema();
    NodeTypeId tt = pipe.target_type;
    EvalResult out;
    std::vector<Query> queries;

    if (cfg.task.kind == TaskKind::node_class) {
        out.task = "node-class";
        auto batches = make_batches(split.test_ids, cfg.task.seed_batch, nullptr);
        for (size_t b = 0; b < batches.size(); ++b) {
            Batch batch = build_node_class_batch(graph, cfg, split, batches[b],
                                                 stream_seed(cfg.seed, "evalsample", b));
            TapeT<Real> tape;
            auto h = pipe.model.forward(tape, batch.sg);
            auto rows = gather_rows(tape, h[tt], batch.target_rows);
            auto logits = pipe.cls->logits(tape, rows);
            tape.clear();
            const int64_t C = cfg.task.classes;
            for (size_t qi = 0; qi < batches[b].size(); ++qi) {
                std::vector<int64_t> order(C);
                std::iota(order.begin(), order.end(), 0);
                const Real* row = logits->v.data() + static_cast<int64_t>(qi) * C;
                std::stable_sort(order.begin(), order.end(),
                                 [&](int64_t a, int64_t c) { return row[a] > row[c]; });
                const int64_t truth = batch.labels[qi];
                Query q;
                q.id = batches[b][qi];
                q.truth = truth;
                q.predicted = order[0];
                std::vector<double> rel(C, 0.0);
                std::vector<int> bin(C, 0);
                for (int64_t r = 0; r < C; ++r)
                    if (order[r] == truth) {
                        rel[r] = 1.0;
                        bin[r] = 1;
                        q.rank = r + 1;
                    }
                q.ndcg_score = ndcg(rel);
                q.mrr_score = mrr(bin);
                queries.push_back(q);
            }
        }
        out.per_query_header = "query_id,rank,ndcg,mrr,predicted,truth";
    } else {
        out.task = "link";
        EdgeTypeId link = schema.edge_type(cfg.task.link_edge_type);
        MetaRelation rel = schema.relation(link);
        const NodeTypeId ct = rel.src_type;
        const bool cand_event = schema.node_info(ct).is_event;
        const int64_t n_cand = graph.num_nodes(ct);

        std::vector<int64_t> usable;
        for (int64_t id : split.test_ids)
            if (!link_positives(graph, rel, id).empty()) usable.push_back(id);
        auto batches = make_batches(usable, std::max<int64_t>(1, cfg.task.seed_batch / 16), nullptr);

        for (size_t b = 0; b < batches.size(); ++b) {
            std::vector<Seed> seeds;
            std::vector<EdgeExclusion> exclusions;
            struct QueryPlan {
                int64_t id;
                TimedNode target;
                std::vector<TimedNode> candidates;  // [0] is the positive
            };
            std::vector<QueryPlan> plans;
            CounterRng neg_rng = CounterRng::split(cfg.seed, "evalneg", b);
            for (int64_t id : batches[b]) {
                auto positives = link_positives(graph, rel, id);
                const Timestamp t = graph.node_time({tt, id});
                QueryPlan plan;
                plan.id = id;
                plan.target = {id, t};
                seeds.push_back({{tt, id}, std::nullopt});
                auto add_candidate = [&](int64_t cid) {
                    Timestamp candt = cand_event ? graph.node_time({ct, cid}) : t;
                    plan.candidates.push_back({cid, candt});
                    seeds.push_back(
                        {{ct, cid}, cand_event ? std::optional<Timestamp>{} : std::optional{t}});
                };
                add_candidate(positives[0]);
                while (static_cast<int64_t>(plan.candidates.size()) < cfg.task.eval_candidates) {
                    int64_t neg =
                        static_cast<int64_t>(neg_rng.next_below(static_cast<uint64_t>(n_cand)));
                    if (std::find(positives.begin(), positives.end(), neg) != positives.end())
                        continue;
                    bool dup = false;
                    for (const auto& c : plan.candidates)
                        if (c.id == neg) dup = true;
                    if (dup) continue;
                    add_candidate(neg);
                }
                for (int64_t pos : positives) exclusions.push_back({pos, id, link});
                plans.push_back(std::move(plan));
            }
            if (plans.empty()) continue;
            SamplerConfig sc = cfg.sampler;
            sc.rng_seed = stream_seed(cfg.seed, "evalsample", b);
            SampledSubgraph sg = hg_sample(graph, seeds, sc, exclusions);
            auto rows = entry_rows(sg);

            std::vector<int64_t> target_rows, cand_rows;
            for (const auto& plan : plans)
                for (const auto& cand : plan.candidates) {
                    target_rows.push_back(rows[tt].at(plan.target));
                    cand_rows.push_back(rows[ct].at(cand));
                }
            TapeT<Real> tape;
            auto h = pipe.model.forward(tape, sg);
            auto p = gather_rows(tape, h[tt], target_rows);
            auto a = gather_rows(tape, h[ct], cand_rows);
            auto probs = pipe.ntn->prob(tape, p, a);
            tape.clear();

            int64_t cursor = 0;
            for (const auto& plan : plans) {
                const int64_t k = static_cast<int64_t>(plan.candidates.size());
                std::vector<int64_t> order(k);
                std::iota(order.begin(), order.end(), 0);
                const Real* score = probs->v.data() + cursor;
                std::stable_sort(order.begin(), order.end(),
                                 [&](int64_t x, int64_t y) { return score[x] > score[y]; });
                Query q;
                q.id = plan.id;
                std::vector<double> rel_vec(k, 0.0);
                std::vector<int> bin(k, 0);
                for (int64_t r = 0; r < k; ++r)
                    if (order[r] == 0) {
                        rel_vec[r] = 1.0;
                        bin[r] = 1;
                        q.rank = r + 1;
                    }
                q.ndcg_score = ndcg(rel_vec);
                q.mrr_score = mrr(bin);
                queries.push_back(q);
                cursor += k;
            }
        }
        out.per_query_header = "query_id,rank,ndcg,mrr";
    }

    double ndcg_sum = 0, mrr_sum = 0;
    int64_t correct = 0;
    for (const auto& q : queries) {
        ndcg_sum += q.ndcg_score;
        mrr_sum += q.mrr_score;
        if (q.predicted >= 0 && q.predicted == q.truth) ++correct;
        std::string row = std::to_string(q.id) + "," + std::to_string(q.rank) + "," +
                          fmt_double(q.ndcg_score) + "," + fmt_double(q.mrr_score);
        if (cfg.task.kind == TaskKind::node_class)
            row += "," + std::to_string(q.predicted) + "," + std::to_string(q.truth);
        out.per_query_rows.push_back(row);
    }
    out.n_queries = static_cast<int64_t>(queries.size());
    if (out.n_queries > 0) {
        out.ndcg = ndcg_sum / static_cast<double>(out.n_queries);
        out.mrr = mrr_sum / static_cast<double>(out.n_queries);
        out.accuracy = cfg.task.kind == TaskKind::node_class
                           ? static_cast<double>(correct) / static_cast<double>(out.n_queries)
                           : 0.0;
    }
    return out;
}

}  // namespace

FitResult fit(const HeteroGraph& graph, const RunConfig& cfg, const std::string& graph_dir,
              const std::string& out_dir) {
    if (cfg.dtype == "f64") return fit_impl<double>(graph, cfg, graph_dir, out_dir);
    return fit_impl<float>(graph, cfg, graph_dir, out_dir);
}

template <class Real>
EvalResult evaluate_model(const HeteroGraph& graph, const RunConfig& cfg, HgtModelT<Real>& model,
                          const std::string& graph_dir) {
    Pipeline<Real> pipe(graph, cfg);
    // share the caller's weights
    const auto& src = model.params().tensors();
    const auto& dst = pipe.model.params().tensors();
    if (src.size() < dst.size())
        throw Error::data("SchemaMismatch", "model store is missing task-head tensors");
    for (const auto& d : dst) {
        const auto& src_t = model.params().get(d->name)->v;
        d->v.assign(src_t.begin(), src_t.end());
    }
    return eval_impl<Real>(graph, cfg, pipe, graph_dir);
}

template EvalResult evaluate_model<float>(const HeteroGraph&, const RunConfig&, HgtModelT<float>&,
                                          const std::string&);
template EvalResult evaluate_model<double>(const HeteroGraph&, const RunConfig&,
                                           HgtModelT<double>&, const std::string&);

EvalResult evaluate(const HeteroGraph& graph, const std::string& ckpt_dir,
                    const std::string& graph_dir) {
    RunConfig cfg = RunConfig::load(ckpt_dir + "/config.json");
    const std::string store_dir = ckpt_dir + "/checkpoint";
    const uint64_t want = cfg.hash(graph.schema());
    const uint64_t have = ParamStoreT<double>::stored_config_hash(store_dir);
    if (want != have)
        throw Error::data("SchemaMismatch",
                          "checkpoint was trained against a different schema/config");
    const std::string dtype = ParamStoreT<double>::stored_dtype(store_dir);
    if (dtype == "f64") {
        Pipeline<double> pipe(graph, cfg);
        pipe.model.params().load(store_dir);
        return eval_impl<double>(graph, cfg, pipe, graph_dir);
    }
    Pipeline<float> pipe(graph, cfg);
    pipe.model.params().load(store_dir);
    return eval_impl<float>(graph, cfg, pipe, graph_dir);
}

std::vector<AblationRow> run_ablation(const HeteroGraph& graph, const RunConfig& cfg,
                                      const std::string& graph_dir, const std::string& out_dir) {
    struct Variant {
        std::string name;
        bool heter, rte;
    };
    std::vector<AblationRow> rows;
    for (const Variant& v : {Variant{"full", true, true}, Variant{"-heter", false, true},
                             Variant{"-rte", true, false}}) {
        RunConfig c = cfg;
        c.model.use_heter = v.heter;
        c.model.use_rte = v.rte;
        std::string variant_dir = out_dir.empty() ? "" : out_dir + "/" + v.name;
        FitResult fr = fit(graph, c, graph_dir, variant_dir);
        AblationRow row;
        row.variant = v.name;
        row.best_val_loss = fr.best_val_loss;
        if (!variant_dir.empty()) {
            EvalResult er = evaluate(graph, variant_dir, graph_dir);
            row.test_ndcg = er.ndcg;
            row.test_mrr = er.mrr;
            row.test_accuracy = er.accuracy;
        }
        rows.push_back(row);
    }
    if (!out_dir.empty()) {
        std::ofstream out(out_dir + "/ablation.csv");
        out << "variant,best_val_loss,test_ndcg,test_mrr,test_accuracy\n";
        for (const auto& r : rows)
            out << r.variant << "," << fmt_double(r.best_val_loss) << "," << fmt_double(r.test_ndcg)
                << "," << fmt_double(r.test_mrr) << "," << fmt_double(r.test_accuracy) << "\n";
    }
    return rows;
}

}  // namespace hgt
