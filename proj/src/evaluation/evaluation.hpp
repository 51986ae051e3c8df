#pragma once

#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "corpus/corpus.hpp"
#include "encoder/model.hpp"

namespace adrrec::training {
struct TrainConfig;  // multiseed runs full fits
}

namespace adrrec::evaluation {

struct MetricsReport {
    std::string protocol = "standard";  // "standard" | "ood"
    double ood_fraction = 0.0;
    std::vector<int64_t> ks;
    std::map<int64_t, double> ndcg;
    std::map<int64_t, double> recall;
    int64_t n_users = 0;
    int64_t n_negatives = 0;
    std::vector<uint64_t> seeds;
    // Multi-seed aggregates (keys like "ndcg@10"); empty otherwise.
    std::map<std::string, double> mean;
    std::map<std::string, double> stddev;
    std::vector<MetricsReport> per_seed;

    nlohmann::json to_json() const;
};

// rank = 1 + #{score > target} + #{ties other than the target} (pessimistic).
int64_t rank_of_target(const std::vector<double>& scores, size_t target_pos);

double ndcg_at_k(int64_t rank, int64_t k);   // rank <= k ? 1/log2(rank+1) : 0
double recall_at_k(int64_t rank, int64_t k); // rank <= k ? 1 : 0

enum class TargetKind { Test, Val };

struct EvalOptions {
    std::vector<int64_t> ks = {5, 10};
    int64_t n_negatives = 100;  // 0 = rank against the full vocabulary
    uint64_t seed = 1;          // drives negative sampling and OOD spans
    double ood_fraction = 0.0;  // 0 = standard protocol
    int64_t batch_size = 128;
    TargetKind target = TargetKind::Test;
};

// Leave-one-out protocol: hidden state at the last real position scores the
// held-out target against sampled negatives; the held-out timestamp is
// assigned to that readout step. Noise and dropout are disabled.
MetricsReport evaluate(const model::ModelParams& mp, const corpus::UserSequences& corpus,
                       const EvalOptions& opts);

// Masks a contiguous ~fraction of each test context (never the last position)
// before scoring.
MetricsReport ood_mask_eval(const model::ModelParams& mp, const corpus::UserSequences& corpus,
                            double fraction, const EvalOptions& opts);

// One row of the OOD protocol: replaces ceil(fraction * len) contiguous real
// positions (never the last) with pad. Returns false when the row is too
// short to mask.
bool apply_ood_mask(corpus::SequenceBatch& batch, int64_t row, double fraction, uint64_t seed,
                    int32_t user);

// Full fit + evaluate per seed; reports per-metric mean and population std.
MetricsReport multiseed_eval(const training::TrainConfig& cfg,
                             const corpus::UserSequences& corpus,
                             const std::vector<uint64_t>& seed_list, const EvalOptions& opts);

// Convenience for the training loop: mean NDCG@10 on validation targets.
double validation_ndcg10(const model::ModelParams& mp, const corpus::UserSequences& corpus,
                         int64_t n_negatives, uint64_t seed);

}  // namespace adrrec::evaluation
