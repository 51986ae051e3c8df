#include <numeric>

#include "core/errors.hpp"
#include "corpus/corpus.hpp"

namespace adrrec::corpus {

std::vector<SequenceBatch> make_batches(const UserSequences& s, int64_t max_len,
                                        int64_t batch_size, uint64_t shuffle_seed) {
    if (max_len < 2) throw ConfigError("max_len must be >= 2");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");

    std::vector<int32_t> order;
    for (int32_t u = 0; u < s.n_users(); ++u) {
        auto sp = split_leave_one_out(s.seqs[static_cast<size_t>(u)]);
        if (sp && sp->train.size() >= 2) order.push_back(u);
    }
    RngStream rng(shuffle_seed);
    rng.shuffle(order);

    std::vector<SequenceBatch> out;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
        const int64_t b = std::min<int64_t>(batch_size, static_cast<int64_t>(order.size() - start));
        SequenceBatch batch;
        batch.items = ITensor({b, max_len});
        batch.times = ITensor({b, max_len});
        batch.targets = ITensor({b, max_len});
        batch.pad_mask = BTensor({b, max_len});
        for (int64_t r = 0; r < b; ++r) {
            const int32_t u = order[start + static_cast<size_t>(r)];
            batch.users.push_back(u);
            const auto& seq = s.seqs[static_cast<size_t>(u)];
            const auto train = split_leave_one_out(seq)->train;
            // Most recent max_len+1 events; inputs are all but the last,
            // targets the shifted-by-one remainder.
            const int64_t m = static_cast<int64_t>(train.size());
            const int64_t take = std::min<int64_t>(m, max_len + 1);
            const int64_t n_real = take - 1;
            const int64_t pad = max_len - n_real;
            const int64_t first = m - take;
            for (int64_t k = 0; k < n_real; ++k) {
                const Event& ev = train[static_cast<size_t>(first + k)];
                const Event& nx = train[static_cast<size_t>(first + k + 1)];
                batch.items.at(r, pad + k) = ev.item;
                batch.times.at(r, pad + k) = ev.ts;
                batch.targets.at(r, pad + k) = nx.item;
                batch.pad_mask.at(r, pad + k) = 1;
            }
        }
        out.push_back(std::move(batch));
    }
    return out;
}

std::vector<int32_t> sample_negatives(int32_t user, int64_t n, int64_t n_items,
                                      const std::vector<uint8_t>& history_mask, uint64_t seed) {
    if (static_cast<int64_t>(history_mask.size()) != n_items + 1)
        throw InvariantError("sample_negatives: history mask must cover [0, n_items]");
    int64_t hist = 0;
    for (int64_t i = 1; i <= n_items; ++i) hist += history_mask[static_cast<size_t>(i)] ? 1 : 0;
    if (n_items - hist < n)
        throw ProtocolError("cannot sample " + std::to_string(n) + " negatives from " +
                            std::to_string(n_items - hist) + " candidates");

    RngStream rng(hash_combine(seed, static_cast<uint64_t>(user) + 1));
    std::vector<uint8_t> taken(history_mask);
    std::vector<int32_t> out;
    out.reserve(static_cast<size_t>(n));
    while (static_cast<int64_t>(out.size()) < n) {
        const int32_t cand = static_cast<int32_t>(1 + rng.bounded(static_cast<uint64_t>(n_items)));
        if (taken[static_cast<size_t>(cand)]) continue;
        taken[static_cast<size_t>(cand)] = 1;
        out.push_back(cand);
    }
    return out;
}

}  // namespace adrrec::corpus
