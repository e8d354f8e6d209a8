#include "hgt/tasks.hpp"

#include <algorithm>
#include <cmath>

#include "hgt/error.hpp"

namespace hgt {

double ndcg(const std::vector<double>& ranked_relevances, std::optional<int64_t> cutoff) {
    for (double r : ranked_relevances)
        if (r < 0.0) throw Error::data("BadRelevance", "relevance values must be non-negative");
    const int64_t n = static_cast<int64_t>(ranked_relevances.size());
    const int64_t k = cutoff ? std::min<int64_t>(*cutoff, n) : n;

    double dcg = 0.0;
    for (int64_t i = 0; i < k; ++i)
        dcg += ranked_relevances[i] / std::log2(static_cast<double>(i + 2));

    std::vector<double> ideal = ranked_relevances;
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    double idcg = 0.0;
    for (int64_t i = 0; i < k; ++i) idcg += ideal[i] / std::log2(static_cast<double>(i + 2));

    if (idcg == 0.0) return 0.0;  // no positive relevance anywhere
    return dcg / idcg;
}

double mrr(const std::vector<int>& ranked_binary) {
    for (size_t i = 0; i < ranked_binary.size(); ++i)
        if (ranked_binary[i]) return 1.0 / static_cast<double>(i + 1);
    throw Error::data("NoPositive", "mrr needs at least one positive item");
}

double mean_mrr(const std::vector<std::vector<int>>& queries) {
    if (queries.empty()) throw Error::data("NoPositive", "mean_mrr over zero queries");
    double sum = 0.0;
    for (const auto& q : queries) sum += mrr(q);
    return sum / static_cast<double>(queries.size());
}

}  // namespace hgt
