#pragma once

#include <optional>
#include <string>
#include <vector>

#include "corpus/corpus.hpp"
#include "encoder/model.hpp"
#include "training/config.hpp"

namespace adrrec::training {

struct OptimizerState {
    std::string kind = "adam";
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t t = 0;

    void step(model::ModelParams& mp);
};

OptimizerState make_optimizer(const TrainConfig& cfg);

struct Streams {
    RngStream dropout;
    RngStream noise;
};

struct StepResult {
    double task_loss = 0.0;
    double reg = 0.0;
};

// One Algorithm-style update: clean forward, optional perturbed forward,
// total = task + lambda * R, one optimizer step. Deterministic given streams.
StepResult train_step(const corpus::SequenceBatch& batch, model::ModelParams& mp,
                      const TrainConfig& cfg, OptimizerState& opt, int64_t t_min,
                      Streams& streams);

struct EpochRecord {
    int64_t epoch = 0;
    double mean_task_loss = 0.0;
    double mean_reg = 0.0;
    double val_ndcg10 = 0.0;
    double wall_clock_s = 0.0;  // reported to stderr/sidecar, not the JSONL contract
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    int64_t best_epoch = 0;   // 0 = initial parameters
    double best_val = -1.0;
};

struct FitResult {
    TrainReport report;
    model::ModelParams best;  // best-validation parameters
    OptimizerState opt;       // optimizer state at the best epoch
};

FitResult fit(const TrainConfig& cfg, const corpus::UserSequences& corpus);

// fit + artifacts: checkpoint.adrk, report.jsonl, effective_config.json,
// timing.log under out_dir.
TrainReport fit_to_dir(const TrainConfig& cfg, const corpus::UserSequences& corpus,
                       const std::string& out_dir);

// --- gradient verification ---
struct GradCheckResult {
    double worst_rel = 0.0;
    std::string worst_param;
    bool pass = false;
};

// Central finite differences (step h) vs analytic gradients of
// task_loss + lambda * R on a fixed batch with fixed noise, dropout off.
GradCheckResult gradcheck_model(model::ModelParams& mp, const corpus::SequenceBatch& batch,
                                int64_t t_min, double lambda,
                                const noisereg::LnsrConfig& lnsr_cfg, uint64_t noise_seed,
                                double h = 1e-5, double tol = 1e-4);

// The built-in tiny-model check used by the CLI.
GradCheckResult builtin_gradcheck();

std::vector<Tensor> snapshot_values(const model::ModelParams& mp);
void restore_values(model::ModelParams& mp, const std::vector<Tensor>& snap);

}  // namespace adrrec::training
