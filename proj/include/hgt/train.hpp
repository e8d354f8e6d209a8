#pragma once

#include <string>
#include <vector>

#include "hgt/graph.hpp"
#include "hgt/params.hpp"
#include "hgt/run_config.hpp"

namespace hgt {

// AdamW with decoupled weight decay: decay scales the weights directly and
// the adaptive step uses bias-corrected moments.
template <class Real>
class AdamWT {
public:
    AdamWT(ParamStoreT<Real>& params, OptimConfig cfg) : params_(&params), cfg_(cfg) {
        for (const auto& t : params.tensors()) {
            m_.emplace_back(t->v.size(), Real(0));
            v_.emplace_back(t->v.size(), Real(0));
        }
    }

    void step(double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        const auto& tensors = params_->tensors();
        for (size_t i = 0; i < tensors.size(); ++i) {
            auto& t = *tensors[i];
            if (t.g.size() != t.v.size())
                throw Error::numeric("MissingGradient", "parameter '" + t.name + "' has no gradient");
            auto& m = m_[i];
            auto& v = v_[i];
            for (size_t j = 0; j < t.v.size(); ++j) {
                t.v[j] -= static_cast<Real>(lr * cfg_.weight_decay) * t.v[j];
                const Real g = t.g[j];
                m[j] = static_cast<Real>(cfg_.beta1) * m[j] + static_cast<Real>(1 - cfg_.beta1) * g;
                v[j] = static_cast<Real>(cfg_.beta2) * v[j] +
                       static_cast<Real>(1 - cfg_.beta2) * g * g;
                const double mhat = static_cast<double>(m[j]) / bc1;
                const double vhat = static_cast<double>(v[j]) / bc2;
                t.v[j] -= static_cast<Real>(lr * mhat / (std::sqrt(vhat) + cfg_.eps));
            }
        }
    }

    int64_t steps() const { return t_; }

private:
    ParamStoreT<Real>* params_;
    OptimConfig cfg_;
    std::vector<std::vector<Real>> m_, v_;
    int64_t t_ = 0;
};

// lr(epoch) = min + (base - min) * (1 + cos(pi * epoch / total)) / 2
double cosine_lr(int64_t epoch, const ScheduleConfig& cfg);

// Scales gradients in place so the global L2 norm is at most max_norm.
// Returns the pre-clip norm.
template <class Real>
double clip_gradients(ParamStoreT<Real>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& t : params.tensors())
        for (Real g : t->g) sq += static_cast<double>(g) * static_cast<double>(g);
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const Real s = static_cast<Real>(max_norm / norm);
        for (const auto& t : params.tensors())
            for (Real& g : t->g) g *= s;
    }
    return norm;
}

struct EpochStats {
    int64_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct FitResult {
    std::vector<EpochStats> history;
    int64_t best_epoch = -1;
    double best_val_loss = 0.0;
    std::string checkpoint_dir;  // empty when out_dir was empty
};

// Target-type node ids bucketed by the temporal split.
struct DataSplit {
    std::vector<int64_t> train_ids, val_ids, test_ids;
    std::vector<int64_t> labels;  // per target node id; empty for link tasks
};

DataSplit load_split(const HeteroGraph& graph, const TaskSpec& task, const SplitConfig& split,
                     const std::string& graph_dir);

// Full mini-batch training loop. When out_dir is nonempty, writes history.csv,
// config.json and the best checkpoint (lowest validation loss) under it.
FitResult fit(const HeteroGraph& graph, const RunConfig& cfg, const std::string& graph_dir,
              const std::string& out_dir);

struct EvalResult {
    std::string task;
    double ndcg = 0.0;
    double mrr = 0.0;
    double accuracy = 0.0;  // node classification only
    int64_t n_queries = 0;
    std::vector<std::string> per_query_rows;  // CSV lines without header
    std::string per_query_header;
};

// Evaluates a stored checkpoint on the test split of its recorded task.
EvalResult evaluate(const HeteroGraph& graph, const std::string& ckpt_dir,
                    const std::string& graph_dir);

// Evaluation with an in-memory model whose store already holds the weights
// (and any task-head tensors) to score with.
template <class Real>
EvalResult evaluate_model(const HeteroGraph& graph, const RunConfig& cfg, HgtModelT<Real>& model,
                          const std::string& graph_dir);

struct AblationRow {
    std::string variant;
    double best_val_loss = 0.0;
    double test_ndcg = 0.0;
    double test_mrr = 0.0;
    double test_accuracy = 0.0;
};

// Runs {full, -Heter, -RTE} under identical seeds; writes ablation.csv when
// out_dir is nonempty. No ordering is asserted anywhere.
std::vector<AblationRow> run_ablation(const HeteroGraph& graph, const RunConfig& cfg,
                                      const std::string& graph_dir, const std::string& out_dir);

}  // namespace hgt
