#include <cmath>

#include "core/errors.hpp"
#include "evaluation/evaluation.hpp"

namespace adrrec::evaluation {

int64_t rank_of_target(const std::vector<double>& scores, size_t target_pos) {
    if (target_pos >= scores.size()) throw ProtocolError("target not among candidates");
    const double t = scores[target_pos];
    if (!std::isfinite(t)) throw ProtocolError("non-finite target score");
    int64_t rank = 1;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (i == target_pos) continue;
        if (!std::isfinite(scores[i])) throw ProtocolError("non-finite candidate score");
        if (scores[i] >= t) ++rank;
    }
    return rank;
}

double ndcg_at_k(int64_t rank, int64_t k) {
    if (rank < 1 || k < 1) throw InvariantError("ndcg_at_k: rank and k must be >= 1");
    if (rank > k) return 0.0;
    return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

double recall_at_k(int64_t rank, int64_t k) {
    if (rank < 1 || k < 1) throw InvariantError("recall_at_k: rank and k must be >= 1");
    return rank <= k ? 1.0 : 0.0;
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json j;
    j["protocol"] = protocol;
    if (protocol == "ood") j["ood_fraction"] = ood_fraction;
    j["k"] = ks;
    nlohmann::json nd = nlohmann::json::object(), rc = nlohmann::json::object();
    for (const auto& [k, v] : ndcg) nd[std::to_string(k)] = v;
    for (const auto& [k, v] : recall) rc[std::to_string(k)] = v;
    j["ndcg"] = nd;
    j["recall"] = rc;
    j["n_users"] = n_users;
    j["n_negatives"] = n_negatives;
    j["seeds"] = seeds;
    if (!mean.empty()) {
        j["mean"] = mean;
        j["std"] = stddev;
        nlohmann::json ps = nlohmann::json::array();
        for (const auto& r : per_seed) ps.push_back(r.to_json());
        j["per_seed"] = ps;
    }
    return j;
}

}  // namespace adrrec::evaluation
