#include <algorithm>
#include <cmath>

#include "core/errors.hpp"
#include "evaluation/evaluation.hpp"

namespace adrrec::evaluation {

namespace {

struct EvalUser {
    int32_t user = 0;
    std::vector<corpus::Event> ctx;
    corpus::Event target;
};

std::vector<EvalUser> collect_users(const corpus::UserSequences& corpus, TargetKind kind) {
    std::vector<EvalUser> out;
    for (int32_t u = 0; u < corpus.n_users(); ++u) {
        const auto& seq = corpus.seqs[static_cast<size_t>(u)];
        auto sp = corpus::split_leave_one_out(seq);
        if (!sp) continue;
        EvalUser eu;
        eu.user = u;
        if (kind == TargetKind::Test) {
            // Context is everything before the test target.
            eu.ctx.assign(seq.begin(), seq.end() - 1);
            eu.target = sp->test;
        } else {
            eu.ctx = sp->train;
            eu.target = sp->val;
        }
        if (eu.ctx.empty()) continue;
        out.push_back(std::move(eu));
    }
    return out;
}

// Left-padded eval batch; the readout step carries the held-out timestamp.
corpus::SequenceBatch build_batch(const std::vector<EvalUser>& users, size_t lo, size_t hi,
                                  int64_t max_len) {
    const int64_t b = static_cast<int64_t>(hi - lo);
    corpus::SequenceBatch batch;
    batch.items = ITensor({b, max_len});
    batch.times = ITensor({b, max_len});
    batch.targets = ITensor({b, max_len});
    batch.pad_mask = BTensor({b, max_len});
    for (int64_t r = 0; r < b; ++r) {
        const EvalUser& eu = users[lo + static_cast<size_t>(r)];
        batch.users.push_back(eu.user);
        const int64_t m = static_cast<int64_t>(eu.ctx.size());
        const int64_t take = std::min<int64_t>(m, max_len);
        const int64_t pad = max_len - take;
        for (int64_t k = 0; k < take; ++k) {
            const corpus::Event& ev = eu.ctx[static_cast<size_t>(m - take + k)];
            batch.items.at(r, pad + k) = ev.item;
            batch.times.at(r, pad + k) = ev.ts;
            batch.pad_mask.at(r, pad + k) = 1;
        }
        batch.times.at(r, max_len - 1) = eu.target.ts;
    }
    return batch;
}

}  // namespace

bool apply_ood_mask(corpus::SequenceBatch& batch, int64_t row, double fraction,
                    uint64_t seed, int32_t user) {
    const int64_t n = batch.items.dim(1);
    int64_t len = 0;
    for (int64_t i = 0; i < n; ++i) len += batch.pad_mask.at(row, i) ? 1 : 0;
    const int64_t span = static_cast<int64_t>(std::ceil(fraction * static_cast<double>(len)));
    if (span == 0) return true;
    if (span > len - 1) return false;  // cannot mask without touching the last position
    RngStream rng(hash_combine(hash_combine(seed, 0x00D5EEDULL), static_cast<uint64_t>(user)));
    const int64_t first_real = n - len;
    const int64_t start = first_real + static_cast<int64_t>(rng.bounded(
                                           static_cast<uint64_t>(len - span)));
    for (int64_t i = start; i < start + span; ++i) {
        batch.items.at(row, i) = 0;
        batch.pad_mask.at(row, i) = 0;
    }
    return true;
}

namespace {

std::vector<uint8_t> history_mask(const corpus::UserSequences& corpus, int32_t user) {
    std::vector<uint8_t> mask(static_cast<size_t>(corpus.n_items() + 1), 0);
    for (const auto& e : corpus.seqs[static_cast<size_t>(user)])
        mask[static_cast<size_t>(e.item)] = 1;
    return mask;
}

MetricsReport run_protocol(const model::ModelParams& mp, const corpus::UserSequences& corpus,
                           const EvalOptions& opts, double ood_fraction) {
    if (ood_fraction < 0.0 || ood_fraction >= 1.0)
        throw ConfigError("ood fraction must be in [0, 1)");
    const int64_t v = corpus.n_items();
    if (mp.cfg.n_items != v)
        throw ConfigError("checkpoint vocabulary (" + std::to_string(mp.cfg.n_items) +
                          ") does not match corpus (" + std::to_string(v) + ")");

    MetricsReport report;
    report.protocol = ood_fraction > 0.0 ? "ood" : "standard";
    report.ood_fraction = ood_fraction;
    report.ks = opts.ks;
    report.n_negatives = opts.n_negatives;
    report.seeds = {opts.seed};
    for (int64_t k : opts.ks) {
        report.ndcg[k] = 0.0;
        report.recall[k] = 0.0;
    }

    auto users = collect_users(corpus, opts.target);
    const int64_t d = mp.cfg.d_model;
    const double* table = mp.item_table->value.data();

    for (size_t lo = 0; lo < users.size(); lo += static_cast<size_t>(opts.batch_size)) {
        const size_t hi = std::min(users.size(), lo + static_cast<size_t>(opts.batch_size));
        auto batch = build_batch(users, lo, hi, mp.cfg.max_len);
        std::vector<uint8_t> row_ok(hi - lo, 1);
        if (ood_fraction > 0.0)
            for (size_t r = 0; r < hi - lo; ++r)
                row_ok[r] = apply_ood_mask(batch, static_cast<int64_t>(r), ood_fraction,
                                           opts.seed, users[lo + r].user)
                                ? 1
                                : 0;

        ag::Graph g;
        model::Binding bind(g, /*trainable=*/false);
        auto enc = model::encoder_forward(g, bind, mp, batch, corpus.t_min);
        const Tensor& hidden = enc.hidden->val;
        const int64_t n = hidden.dim(1);

        for (size_t r = 0; r < hi - lo; ++r) {
            if (!row_ok[r]) continue;
            const EvalUser& eu = users[lo + r];
            const double* h = hidden.data() + (static_cast<int64_t>(r) * n + (n - 1)) * d;
            std::vector<double> scores;
            size_t target_pos = 0;
            if (opts.n_negatives > 0) {
                auto negs = corpus::sample_negatives(eu.user, opts.n_negatives, v,
                                                     history_mask(corpus, eu.user), opts.seed);
                scores.reserve(negs.size() + 1);
                auto dot = [&](int32_t item) {
                    const double* row = table + static_cast<int64_t>(item) * d;
                    double s = 0.0;
                    for (int64_t j = 0; j < d; ++j) s += h[j] * row[j];
                    return s;
                };
                target_pos = 0;
                scores.push_back(dot(eu.target.item));
                for (int32_t it : negs) scores.push_back(dot(it));
            } else {
                // Full-vocabulary ranking.
                scores.resize(static_cast<size_t>(v));
                for (int64_t item = 1; item <= v; ++item) {
                    const double* row = table + item * d;
                    double s = 0.0;
                    for (int64_t j = 0; j < d; ++j) s += h[j] * row[j];
                    scores[static_cast<size_t>(item - 1)] = s;
                }
                target_pos = static_cast<size_t>(eu.target.item - 1);
            }
            const int64_t rank = rank_of_target(scores, target_pos);
            for (int64_t k : opts.ks) {
                report.ndcg[k] += ndcg_at_k(rank, k);
                report.recall[k] += recall_at_k(rank, k);
            }
            ++report.n_users;
        }
    }

    if (report.n_users == 0) throw ProtocolError("no users eligible for evaluation");
    for (int64_t k : opts.ks) {
        report.ndcg[k] /= static_cast<double>(report.n_users);
        report.recall[k] /= static_cast<double>(report.n_users);
    }
    return report;
}

}  // namespace

MetricsReport evaluate(const model::ModelParams& mp, const corpus::UserSequences& corpus,
                       const EvalOptions& opts) {
    return run_protocol(mp, corpus, opts, opts.ood_fraction);
}

MetricsReport ood_mask_eval(const model::ModelParams& mp, const corpus::UserSequences& corpus,
                            double fraction, const EvalOptions& opts) {
    return run_protocol(mp, corpus, opts, fraction);
}

double validation_ndcg10(const model::ModelParams& mp, const corpus::UserSequences& corpus,
                         int64_t n_negatives, uint64_t seed) {
    EvalOptions opts;
    opts.ks = {10};
    opts.n_negatives = n_negatives;
    opts.seed = seed;
    opts.target = TargetKind::Val;
    return evaluate(mp, corpus, opts).ndcg.at(10);
}

}  // namespace adrrec::evaluation
