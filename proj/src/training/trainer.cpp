#include "training/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "core/errors.hpp"
#include "evaluation/evaluation.hpp"

namespace adrrec::training {

OptimizerState make_optimizer(const TrainConfig& cfg) {
    if (cfg.lr <= 0.0) throw ConfigError("learning rate must be positive");
    OptimizerState opt;
    opt.kind = cfg.optimizer;
    opt.lr = cfg.lr;
    return opt;
}

void OptimizerState::step(model::ModelParams& mp) {
    ++t;
    if (kind == "sgd") {
        for (model::Param* p : mp.params.all())
            for (int64_t i = 0; i < p->value.numel(); ++i) p->value[i] -= lr * p->grad[i];
        return;
    }
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (model::Param* p : mp.params.all()) {
        p->ensure_opt_state();
        for (int64_t i = 0; i < p->value.numel(); ++i) {
            const double g = p->grad[i];
            p->m[i] = beta1 * p->m[i] + (1.0 - beta1) * g;
            p->v[i] = beta2 * p->v[i] + (1.0 - beta2) * g * g;
            const double mhat = p->m[i] / bc1;
            const double vhat = p->v[i] / bc2;
            p->value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

namespace {

struct TotalLoss {
    ag::ValuePtr total;
    double task = 0.0;
    double reg = 0.0;
};

// Shared forward builder: clean pass, plus the perturbed pass when noise is
// active. The perturbation enters as the noisy projection's output-space
// delta, emb @ (|sigma_w| o eps_w) + |sigma_b| o eps_b, so sigma receives
// gradients through the regularizer.
TotalLoss build_total_loss(ag::Graph& g, model::Binding& bind, model::ModelParams& mp,
                           const corpus::SequenceBatch& batch, int64_t t_min, double lambda,
                           const noisereg::LnsrConfig& lnsr_cfg,
                           const model::DropoutPlan* plan, const Tensor* eps_w,
                           const Tensor* eps_b) {
    auto enc = model::encoder_forward(g, bind, mp, batch, t_min, plan);
    auto logits = model::predict_scores(g, bind, mp, enc.hidden);
    auto task = ag::cross_entropy_masked(g, logits, batch.targets, batch.pad_mask);

    TotalLoss out;
    out.task = task->val[0];
    if (eps_w && eps_b) {
        auto emb = ag::embedding(g, bind(mp.item_table), batch.items);
        auto zero_w = g.constant(Tensor::zeros(mp.in_sigma_w->value.shape()));
        auto zero_b = g.constant(Tensor::zeros(mp.in_sigma_b->value.shape()));
        auto sw = ag::abs_perturb(g, zero_w, bind(mp.in_sigma_w), *eps_w);
        auto sb = ag::abs_perturb(g, zero_b, bind(mp.in_sigma_b), *eps_b);
        auto delta = ag::add_rowvec(g, ag::matmul_lastdim(g, emb, sw), sb);
        auto noisy = model::encoder_forward(g, bind, mp, batch, t_min, plan, delta);
        auto reg = noisereg::lnsr_graph(g, enc.taps, noisy.taps, lnsr_cfg, batch.pad_mask);
        out.reg = reg->val[0];
        out.total = ag::add_scaled(g, task, reg, lambda);
    } else {
        out.total = task;
    }
    return out;
}

}  // namespace

StepResult train_step(const corpus::SequenceBatch& batch, model::ModelParams& mp,
                      const TrainConfig& cfg, OptimizerState& opt, int64_t t_min,
                      Streams& streams) {
    ag::Graph g;
    model::Binding bind(g, /*trainable=*/true);
    const int64_t b = batch.items.dim(0);

    model::DropoutPlan plan;
    if (cfg.model.dropout > 0.0)
        plan = model::make_dropout_plan(mp.cfg, b, cfg.model.dropout, streams.dropout);

    const bool noisy = mp.mode.noise_enabled && cfg.lambda > 0.0;
    Tensor eps_w, eps_b;
    if (noisy) {
        eps_w = noisereg::sample_noise(mp.in_sigma_w->value.shape(), streams.noise,
                                       cfg.lnsr.delta);
        eps_b = noisereg::sample_noise(mp.in_sigma_b->value.shape(), streams.noise,
                                       cfg.lnsr.delta);
    }
    auto loss = build_total_loss(g, bind, mp, batch, t_min, cfg.lambda, cfg.lnsr,
                                 plan.masks.empty() ? nullptr : &plan,
                                 noisy ? &eps_w : nullptr, noisy ? &eps_b : nullptr);
    if (!std::isfinite(loss.task) || !std::isfinite(loss.reg))
        throw NumericalError("non-finite loss (task=" + std::to_string(loss.task) +
                             ", reg=" + std::to_string(loss.reg) +
                             ", lambda=" + std::to_string(cfg.lambda) + ")");
    g.backward(loss.total);
    bind.collect_grads(mp);

    double grad_norm_sq = 0.0;
    for (model::Param* p : mp.params.all())
        for (int64_t i = 0; i < p->grad.numel(); ++i) grad_norm_sq += p->grad[i] * p->grad[i];
    if (!std::isfinite(grad_norm_sq))
        throw NumericalError("non-finite gradient (task=" + std::to_string(loss.task) +
                             ", reg=" + std::to_string(loss.reg) +
                             ", lambda=" + std::to_string(cfg.lambda) + ")");

    opt.step(mp);
    return {loss.task, loss.reg};
}

std::vector<Tensor> snapshot_values(const model::ModelParams& mp) {
    std::vector<Tensor> snap;
    for (const model::Param* p : mp.params.all()) snap.push_back(p->value);
    return snap;
}

void restore_values(model::ModelParams& mp, const std::vector<Tensor>& snap) {
    auto params = mp.params.all();
    if (params.size() != snap.size()) throw InvariantError("snapshot size mismatch");
    for (size_t i = 0; i < params.size(); ++i) params[i]->value = snap[i];
}

FitResult fit(const TrainConfig& cfg_in, const corpus::UserSequences& corpus) {
    TrainConfig cfg = cfg_in;
    cfg.model.n_items = corpus.n_items();
    cfg.validate();

    auto mp = model::ModelParams::init(cfg.model, cfg.seeds.init);
    auto opt = make_optimizer(cfg);
    Streams streams{RngStream(cfg.seeds.dropout), RngStream(cfg.seeds.noise)};

    FitResult result;
    auto best_snap = snapshot_values(mp);
    auto best_opt = opt;

    for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        auto batches = corpus::make_batches(corpus, cfg.model.max_len, cfg.batch_size,
                                            hash_combine(cfg.seeds.shuffle,
                                                         static_cast<uint64_t>(epoch)));
        double sum_task = 0.0, sum_reg = 0.0;
        int64_t steps = 0;
        for (const auto& batch : batches) {
            try {
                auto r = train_step(batch, mp, cfg, opt, corpus.t_min, streams);
                sum_task += r.task_loss;
                sum_reg += r.reg;
            } catch (const NumericalError& e) {
                throw NumericalError("epoch " + std::to_string(epoch) + " step " +
                                     std::to_string(steps) + ": " + e.what());
            }
            ++steps;
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.mean_task_loss = steps ? sum_task / static_cast<double>(steps) : 0.0;
        rec.mean_reg = steps ? sum_reg / static_cast<double>(steps) : 0.0;
        rec.val_ndcg10 = evaluation::validation_ndcg10(mp, corpus, cfg.n_negatives,
                                                       cfg.seeds.negatives);
        rec.wall_clock_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.report.epochs.push_back(rec);
        if (rec.val_ndcg10 > result.report.best_val) {
            result.report.best_val = rec.val_ndcg10;
            result.report.best_epoch = epoch;
            best_snap = snapshot_values(mp);
            best_opt = opt;
        }
    }

    restore_values(mp, best_snap);
    result.best = std::move(mp);
    result.opt = best_opt;
    return result;
}

TrainReport fit_to_dir(const TrainConfig& cfg, const corpus::UserSequences& corpus,
                       const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    auto result = fit(cfg, corpus);

    {
        std::ofstream out(fs::path(out_dir) / "effective_config.json");
        out << train_config_to_json(cfg).dump(2) << "\n";
    }
    model::save_checkpoint(result.best, (fs::path(out_dir) / "checkpoint.adrk").string());
    {
        std::ofstream out(fs::path(out_dir) / "report.jsonl");
        for (const auto& rec : result.report.epochs) {
            nlohmann::json j = {{"epoch", rec.epoch},
                                {"task_loss", rec.mean_task_loss},
                                {"reg", rec.mean_reg},
                                {"val_ndcg10", rec.val_ndcg10}};
            out << j.dump() << "\n";
        }
    }
    {
        // Wall-clock lives outside the reproducibility contract.
        std::ofstream out(fs::path(out_dir) / "timing.log");
        for (const auto& rec : result.report.epochs)
            out << "epoch " << rec.epoch << " " << rec.wall_clock_s << "s\n";
    }
    return result.report;
}

// ------------------------------------------------------------------ gradcheck

namespace {

double eval_total(model::ModelParams& mp, const corpus::SequenceBatch& batch, int64_t t_min,
                  double lambda, const noisereg::LnsrConfig& lnsr_cfg, const Tensor* eps_w,
                  const Tensor* eps_b, bool want_grads) {
    ag::Graph g;
    model::Binding bind(g, want_grads);
    auto loss = build_total_loss(g, bind, mp, batch, t_min, lambda, lnsr_cfg, nullptr,
                                 eps_w, eps_b);
    if (want_grads) {
        g.backward(loss.total);
        bind.collect_grads(mp);
    }
    return loss.total->val[0];
}

}  // namespace

GradCheckResult gradcheck_model(model::ModelParams& mp, const corpus::SequenceBatch& batch,
                                int64_t t_min, double lambda,
                                const noisereg::LnsrConfig& lnsr_cfg, uint64_t noise_seed,
                                double h, double tol) {
    const bool noisy = mp.mode.noise_enabled && lambda > 0.0;
    Tensor eps_w, eps_b;
    if (noisy) {
        RngStream noise(noise_seed);
        eps_w = noisereg::sample_noise(mp.in_sigma_w->value.shape(), noise, lnsr_cfg.delta);
        eps_b = noisereg::sample_noise(mp.in_sigma_b->value.shape(), noise, lnsr_cfg.delta);
    }
    const Tensor* pw = noisy ? &eps_w : nullptr;
    const Tensor* pb = noisy ? &eps_b : nullptr;

    eval_total(mp, batch, t_min, lambda, lnsr_cfg, pw, pb, /*want_grads=*/true);
    std::vector<Tensor> analytic;
    for (model::Param* p : mp.params.all()) analytic.push_back(p->grad);

    GradCheckResult result;
    auto params = mp.params.all();
    for (size_t pi = 0; pi < params.size(); ++pi) {
        model::Param* p = params[pi];
        for (int64_t i = 0; i < p->value.numel(); ++i) {
            const double orig = p->value[i];
            p->value[i] = orig + h;
            const double f1 = eval_total(mp, batch, t_min, lambda, lnsr_cfg, pw, pb, false);
            p->value[i] = orig - h;
            const double f2 = eval_total(mp, batch, t_min, lambda, lnsr_cfg, pw, pb, false);
            p->value[i] = orig;
            const double numeric = (f1 - f2) / (2.0 * h);
            const double ana = analytic[pi][i];
            // Floor keeps FD rounding noise on near-zero coordinates from
            // registering as relative error.
            const double rel =
                std::abs(numeric - ana) / std::max({1e-3, std::abs(numeric), std::abs(ana)});
            if (rel > result.worst_rel) {
                result.worst_rel = rel;
                result.worst_param = p->name + "[" + std::to_string(i) + "]";
            }
        }
    }
    result.pass = result.worst_rel < tol;
    return result;
}

GradCheckResult builtin_gradcheck() {
    // Tiny model exercising every head kind plus the noise path. The flagship
    // mode has five heads, so d_model = 10 is the smallest width with the
    // cos/sin pairing intact.
    model::ModelConfig mc;
    mc.mode = "p-b-s-l-r-o";
    mc.d_model = 10;
    mc.n_layers = 2;
    mc.d_ff = 16;
    mc.max_len = 4;
    mc.n_items = 10;
    mc.dropout = 0.0;
    // Small offsets keep kernel phase sensitivities inside the regime where
    // an h=1e-5 central difference is a valid derivative estimate.
    mc.tau_seconds = 60.0;
    auto mp = model::ModelParams::init(mc, /*seed=*/7);

    corpus::SequenceBatch batch;
    const int64_t b = 2, n = 4;
    batch.items = ITensor({b, n});
    batch.times = ITensor({b, n});
    batch.targets = ITensor({b, n});
    batch.pad_mask = BTensor({b, n});
    const int64_t base = 978307200;
    const int64_t items[2][4] = {{0, 3, 5, 2}, {1, 4, 9, 7}};
    const int64_t offsets[2][4] = {{0, 60, 180, 300}, {0, 120, 240, 420}};
    const int64_t targets[2][4] = {{0, 5, 2, 8}, {4, 9, 7, 6}};
    for (int64_t r = 0; r < b; ++r)
        for (int64_t i = 0; i < n; ++i) {
            batch.items.at(r, i) = items[r][i];
            batch.times.at(r, i) = base + offsets[r][i];
            batch.targets.at(r, i) = targets[r][i];
            batch.pad_mask.at(r, i) = (r == 0 && i == 0) ? 0 : 1;  // one pad position
        }
    batch.targets.at(0, 0) = 0;
    batch.items.at(0, 0) = 0;

    noisereg::LnsrConfig lnsr_cfg;
    return gradcheck_model(mp, batch, base, /*lambda=*/0.1, lnsr_cfg,
                           /*noise_seed=*/99);
}

}  // namespace adrrec::training
