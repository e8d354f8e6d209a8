#include "hgt/run_config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace hgt {

void RunConfig::validate() const {
    model.validate();
    schedule.validate();
    if (dtype != "f32" && dtype != "f64")
        throw Error::config("BadConfig", "dtype must be f32 or f64");
    if (workers < 1) throw Error::config("BadConfig", "workers must be >= 1");
    if (task.kind == TaskKind::node_class && task.classes < 2)
        throw Error::config("BadConfig", "node-class task needs classes >= 2");
    if (task.seed_batch < 1) throw Error::config("BadConfig", "seed_batch must be >= 1");
    if (task.eval_candidates < 2)
        throw Error::config("BadConfig", "eval_candidates must be >= 2");
}

std::string RunConfig::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["deterministic"] = deterministic;
    j["dtype"] = dtype;
    j["workers"] = workers;
    j["sampler"] = {{"n", sampler.nodes_per_type},
                    {"depth", sampler.depth},
                    {"with_replacement", sampler.with_replacement},
                    {"induced", sampler.induced_adjacency}};
    j["model"] = {{"hidden_dim", model.hidden_dim}, {"heads", model.heads},
                  {"layers", model.layers},         {"use_heter", model.use_heter},
                  {"use_rte", model.use_rte},       {"activation", activation_name(model.activation)},
                  {"self_loops", model.self_loops}};
    j["schedule"] = {{"base_lr", schedule.base_lr},
                     {"min_lr", schedule.min_lr},
                     {"epochs", schedule.epochs}};
    j["optim"] = {{"beta1", optim.beta1},
                  {"beta2", optim.beta2},
                  {"eps", optim.eps},
                  {"weight_decay", optim.weight_decay},
                  {"clip_norm", optim.clip_norm}};
    j["task"] = {{"kind", task.kind == TaskKind::node_class ? "node-class" : "link"},
                 {"target_type", task.target_type},
                 {"labels", task.labels_file},
                 {"classes", task.classes},
                 {"link_edge_type", task.link_edge_type},
                 {"eval_candidates", task.eval_candidates},
                 {"positives_per_query", task.positives_per_query},
                 {"ntn_slices", task.ntn_slices},
                 {"seed_batch", task.seed_batch}};
    j["split"] = {{"train_before", split.train_before}, {"val_before", split.val_before}};
    return j.dump(2) + "\n";
}

RunConfig RunConfig::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error::config("BadConfig", std::string("run config is not valid JSON: ") + e.what());
    }
    RunConfig c;
    c.seed = j.value("seed", uint64_t{0});
    c.deterministic = j.value("deterministic", true);
    c.dtype = j.value("dtype", std::string("f32"));
    c.workers = j.value("workers", int64_t{1});
    if (j.contains("sampler")) {
        const auto& s = j["sampler"];
        c.sampler.nodes_per_type = s.value("n", int64_t{32});
        c.sampler.depth = s.value("depth", int64_t{3});
        c.sampler.with_replacement = s.value("with_replacement", false);
        c.sampler.induced_adjacency = s.value("induced", true);
    }
    if (j.contains("model")) {
        const auto& m = j["model"];
        c.model.hidden_dim = m.value("hidden_dim", int64_t{256});
        c.model.heads = m.value("heads", int64_t{8});
        c.model.layers = m.value("layers", int64_t{3});
        c.model.use_heter = m.value("use_heter", true);
        c.model.use_rte = m.value("use_rte", true);
        c.model.activation = activation_from_name(m.value("activation", std::string("gelu")));
        c.model.self_loops = m.value("self_loops", false);
    }
    if (j.contains("schedule")) {
        const auto& s = j["schedule"];
        c.schedule.base_lr = s.value("base_lr", 1e-3);
        c.schedule.min_lr = s.value("min_lr", 1e-6);
        c.schedule.epochs = s.value("epochs", int64_t{200});
    }
    if (j.contains("optim")) {
        const auto& o = j["optim"];
        c.optim.beta1 = o.value("beta1", 0.9);
        c.optim.beta2 = o.value("beta2", 0.999);
        c.optim.eps = o.value("eps", 1e-8);
        c.optim.weight_decay = o.value("weight_decay", 0.01);
        c.optim.clip_norm = o.value("clip_norm", 1.0);
    }
    if (j.contains("task")) {
        const auto& t = j["task"];
        std::string kind = t.value("kind", std::string("node-class"));
        if (kind == "node-class")
            c.task.kind = TaskKind::node_class;
        else if (kind == "link")
            c.task.kind = TaskKind::link;
        else
            throw Error::config("BadConfig", "unknown task kind '" + kind + "'");
        c.task.target_type = t.value("target_type", std::string("paper"));
        c.task.labels_file = t.value("labels", std::string("labels.paper.tsv"));
        c.task.classes = t.value("classes", int64_t{0});
        c.task.link_edge_type = t.value("link_edge_type", std::string("writes"));
        c.task.eval_candidates = t.value("eval_candidates", int64_t{10});
        c.task.positives_per_query = t.value("positives_per_query", int64_t{2});
        c.task.ntn_slices = t.value("ntn_slices", int64_t{4});
        c.task.seed_batch = t.value("seed_batch", int64_t{256});
    }
    if (j.contains("split")) {
        const auto& s = j["split"];
        c.split.train_before = s.value("train_before", Timestamp{70});
        c.split.val_before = s.value("val_before", Timestamp{80});
    }
    // the sampler draws from the run seed; a separate field is not accepted
    c.sampler.rng_seed = c.seed;
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error::config("MissingFile", "cannot open run config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

void RunConfig::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error::data("WriteFailed", "cannot write '" + path + "'");
    out << to_json();
}

uint64_t RunConfig::hash(const Schema& schema) const {
    std::string text = to_json() + schema.to_json();
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace hgt
