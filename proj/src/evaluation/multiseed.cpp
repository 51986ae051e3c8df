#include <cmath>

#include "core/errors.hpp"
#include "evaluation/evaluation.hpp"
#include "training/trainer.hpp"

namespace adrrec::evaluation {

MetricsReport multiseed_eval(const training::TrainConfig& cfg,
                             const corpus::UserSequences& corpus,
                             const std::vector<uint64_t>& seed_list, const EvalOptions& opts) {
    if (seed_list.size() < 2) throw ConfigError("multiseed needs at least two seeds");

    MetricsReport agg;
    agg.protocol = "standard";
    agg.ks = opts.ks;
    agg.n_negatives = opts.n_negatives;
    agg.seeds = seed_list;

    for (uint64_t seed : seed_list) {
        training::TrainConfig per_seed = cfg;
        per_seed.seeds = training::derive_seeds(seed, cfg.seeds.negatives);
        auto fitted = training::fit(per_seed, corpus);
        EvalOptions eo = opts;
        eo.target = TargetKind::Test;
        auto rep = evaluate(fitted.best, corpus, eo);
        rep.seeds = {seed};
        agg.per_seed.push_back(std::move(rep));
    }

    auto metric_key = [](const char* name, int64_t k) {
        return std::string(name) + "@" + std::to_string(k);
    };
    for (int64_t k : opts.ks) {
        for (const char* name : {"ndcg", "recall"}) {
            std::vector<double> vals;
            for (const auto& rep : agg.per_seed)
                vals.push_back(name == std::string("ndcg") ? rep.ndcg.at(k) : rep.recall.at(k));
            double mean = 0.0;
            for (double v : vals) mean += v;
            mean /= static_cast<double>(vals.size());
            double var = 0.0;
            for (double v : vals) var += (v - mean) * (v - mean);
            var /= static_cast<double>(vals.size());  // population std
            agg.mean[metric_key(name, k)] = mean;
            agg.stddev[metric_key(name, k)] = std::sqrt(var);
        }
    }
    // Headline metrics mirror the aggregate means.
    for (int64_t k : opts.ks) {
        agg.ndcg[k] = agg.mean[metric_key("ndcg", k)];
        agg.recall[k] = agg.mean[metric_key("recall", k)];
        agg.n_users = agg.per_seed.front().n_users;
    }
    return agg;
}

}  // namespace adrrec::evaluation
