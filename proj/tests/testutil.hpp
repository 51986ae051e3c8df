#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "core/graph.hpp"
#include "core/rng.hpp"
#include "corpus/corpus.hpp"
#include "encoder/model.hpp"
#include "training/config.hpp"

namespace testutil {

using namespace adrrec;

// Deterministic cyclic corpus: every user walks item 1..period in order from
// a user-specific offset, one event per hour. The next item is a pure
// function of the previous one.
inline corpus::UserSequences cyclic_corpus(int n_users, int period, int events_per_user) {
    std::vector<corpus::Interaction> recs;
    const int64_t base = 1'000'000'000;
    for (int u = 0; u < n_users; ++u) {
        for (int e = 0; e < events_per_user; ++e) {
            const int item = 1 + (u + e) % period;
            recs.push_back({"u" + std::to_string(u), "i" + std::to_string(item),
                            base + static_cast<int64_t>(u) * 86400 +
                                static_cast<int64_t>(e) * 3600});
        }
    }
    return corpus::build_sequences(recs, 1);
}

// Random implicit-feedback corpus for calibration tests.
inline corpus::UserSequences random_corpus(int n_users, int vocab, int len, uint64_t seed) {
    RngStream rng(seed);
    std::vector<corpus::Interaction> recs;
    const int64_t base = 1'200'000'000;
    for (int u = 0; u < n_users; ++u)
        for (int e = 0; e < len; ++e)
            recs.push_back({"u" + std::to_string(u),
                            "i" + std::to_string(1 + rng.bounded(static_cast<uint64_t>(vocab))),
                            base + static_cast<int64_t>(u) * 100000 +
                                static_cast<int64_t>(e) * 7200});
    return corpus::build_sequences(recs, 1);
}

// Sessionized corpus where timing carries signal: a session opens with a
// weekday-determined item and then walks a weekday-parity item bank. Within a
// session events are an hour apart; sessions are days apart.
inline corpus::UserSequences tempo_corpus(int n_users, int events_per_user, uint64_t seed) {
    RngStream rng(seed);
    std::vector<corpus::Interaction> recs;
    const int64_t base = 1'000'000'000;  // 2001-09-09, a Sunday
    const int session_len = 5;
    for (int u = 0; u < n_users; ++u) {
        int64_t t = base + static_cast<int64_t>(rng.bounded(7)) * 86400 +
                    static_cast<int64_t>(rng.bounded(12)) * 3600;
        int cursor = 0;
        int in_session = 0;
        for (int e = 0; e < events_per_user; ++e) {
            int item;
            const auto civ = kernels::civil_from_unix(t);
            if (in_session == 0) {
                item = 41 + civ.weekday;  // session opener: items 41..47
                cursor = (u + civ.weekday) % 20;
            } else {
                const int bank = (civ.weekday % 2 == 0) ? 0 : 20;  // items 1..20 or 21..40
                item = 1 + bank + cursor;
                cursor = (cursor + 1) % 20;
            }
            recs.push_back({"u" + std::to_string(u), "i" + std::to_string(item), t});
            ++in_session;
            if (in_session > session_len) {
                in_session = 0;
                t += (2 + static_cast<int64_t>(rng.bounded(5))) * 86400;
            } else {
                t += 3600;
            }
        }
    }
    return corpus::build_sequences(recs, 1);
}

inline corpus::SequenceBatch make_batch(const std::vector<std::vector<int64_t>>& items,
                                        const std::vector<std::vector<int64_t>>& times,
                                        const std::vector<std::vector<int64_t>>& targets) {
    const int64_t b = static_cast<int64_t>(items.size());
    const int64_t n = static_cast<int64_t>(items[0].size());
    corpus::SequenceBatch batch;
    batch.items = ITensor({b, n});
    batch.times = ITensor({b, n});
    batch.targets = ITensor({b, n});
    batch.pad_mask = BTensor({b, n});
    for (int64_t r = 0; r < b; ++r)
        for (int64_t i = 0; i < n; ++i) {
            batch.items.at(r, i) = items[static_cast<size_t>(r)][static_cast<size_t>(i)];
            batch.times.at(r, i) = times[static_cast<size_t>(r)][static_cast<size_t>(i)];
            batch.targets.at(r, i) = targets[static_cast<size_t>(r)][static_cast<size_t>(i)];
            batch.pad_mask.at(r, i) = batch.items.at(r, i) != 0 ? 1 : 0;
        }
    return batch;
}

inline Tensor random_tensor(std::vector<int64_t> shape, uint64_t seed, double scale = 1.0) {
    Tensor t(std::move(shape));
    RngStream rng(seed);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
    return t;
}

// Central-difference check for a scalar-valued graph builder differentiated
// with respect to one leaf tensor.
inline double fd_worst_rel(
    const std::function<ag::ValuePtr(ag::Graph&, ag::ValuePtr)>& build, Tensor x0,
    double h = 1e-6) {
    ag::Graph g;
    auto x = g.leaf(x0, true);
    auto y = build(g, x);
    g.backward(y);
    Tensor analytic = x->grad;

    double worst = 0.0;
    for (int64_t i = 0; i < x0.numel(); ++i) {
        const double orig = x0[i];
        auto eval = [&](double v) {
            x0[i] = v;
            ag::Graph g2;
            auto xx = g2.leaf(x0, false);
            return build(g2, xx)->val[0];
        };
        const double f1 = eval(orig + h);
        const double f2 = eval(orig - h);
        x0[i] = orig;
        const double num = (f1 - f2) / (2.0 * h);
        const double rel =
            std::abs(num - analytic[i]) / std::max({1e-3, std::abs(num), std::abs(analytic[i])});
        worst = std::max(worst, rel);
    }
    return worst;
}

inline model::ModelConfig tiny_config(const std::string& mode, int64_t d_model,
                                      int64_t n_items = 10, int64_t max_len = 4) {
    model::ModelConfig mc;
    mc.mode = mode;
    mc.d_model = d_model;
    mc.n_layers = 2;
    mc.d_ff = 16;
    mc.max_len = max_len;
    mc.n_items = n_items;
    mc.dropout = 0.0;
    mc.tau_seconds = 60.0;
    return mc;
}

// Same shape as the builtin gradcheck batch: short offsets, one pad slot.
inline corpus::SequenceBatch tiny_batch(int64_t base = 978307200) {
    return make_batch(
        {{0, 3, 5, 2}, {1, 4, 9, 7}},
        {{base, base + 60, base + 180, base + 300},
         {base, base + 120, base + 240, base + 420}},
        {{0, 5, 2, 8}, {4, 9, 7, 6}});
}

}  // namespace testutil
