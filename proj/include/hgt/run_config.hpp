#pragma once

#include <cstdint>
#include <string>

#include "hgt/model.hpp"
#include "hgt/sampler.hpp"

namespace hgt {

struct OptimConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    double clip_norm = 1.0;  // <= 0 disables clipping
};

struct ScheduleConfig {
    double base_lr = 1e-3;
    double min_lr = 1e-6;
    int64_t epochs = 200;

    void validate() const {
        if (!(min_lr > 0.0) || !(min_lr <= base_lr))
            throw Error::config("BadConfig", "schedule needs 0 < min_lr <= base_lr");
        if (epochs < 0) throw Error::config("BadConfig", "epochs must be >= 0");
    }
};

struct SplitConfig {
    Timestamp train_before = 70;  // train: t < train_before
    Timestamp val_before = 80;    // val: train_before <= t < val_before; test: t >= val_before
};

enum class TaskKind { node_class, link };

struct TaskSpec {
    TaskKind kind = TaskKind::node_class;
    std::string target_type = "paper";
    std::string labels_file = "labels.paper.tsv";  // node_class: id<TAB>class
    int64_t classes = 0;
    std::string link_edge_type = "writes";  // link: candidate -> target edges
    int64_t eval_candidates = 10;
    int64_t positives_per_query = 2;
    int64_t ntn_slices = 4;
    int64_t seed_batch = 256;
};

struct RunConfig {
    uint64_t seed = 0;
    bool deterministic = true;
    std::string dtype = "f32";  // f32 | f64
    int64_t workers = 1;
    SamplerConfig sampler;
    HgtConfig model;
    ScheduleConfig schedule;
    OptimConfig optim;
    TaskSpec task;
    SplitConfig split;

    void validate() const;
    uint64_t hash(const Schema& schema) const;  // config + schema fingerprint

    std::string to_json() const;
    static RunConfig from_json(const std::string& text);
    static RunConfig load(const std::string& path);
    void save(const std::string& path) const;
};

}  // namespace hgt
