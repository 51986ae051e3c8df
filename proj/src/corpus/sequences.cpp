#include <algorithm>
#include <limits>
#include <unordered_map>

#include "core/errors.hpp"
#include "corpus/corpus.hpp"

namespace adrrec::corpus {

int64_t UserSequences::n_actions() const {
    int64_t n = 0;
    for (const auto& s : seqs) n += static_cast<int64_t>(s.size());
    return n;
}

UserSequences build_sequences(const std::vector<Interaction>& interactions, int min_count) {
    if (min_count < 1) throw ConfigError("min_count must be >= 1");

    // Intern raw ids once; filtering then works over integer arrays.
    std::unordered_map<std::string, int32_t> user_lut, item_lut;
    std::vector<std::string> users, items;
    struct Ev {
        int32_t u, i;
        int64_t ts;
    };
    std::vector<Ev> events;
    events.reserve(interactions.size());
    for (const auto& r : interactions) {
        auto ui = user_lut.try_emplace(r.user, static_cast<int32_t>(users.size()));
        if (ui.second) users.push_back(r.user);
        auto ii = item_lut.try_emplace(r.item, static_cast<int32_t>(items.size()));
        if (ii.second) items.push_back(r.item);
        events.push_back({ui.first->second, ii.first->second, r.ts});
    }

    std::vector<uint8_t> user_ok(users.size(), 1), item_ok(items.size(), 1);
    std::vector<int64_t> ucount(users.size()), icount(items.size());
    for (bool changed = true; changed;) {
        changed = false;
        std::fill(ucount.begin(), ucount.end(), 0);
        std::fill(icount.begin(), icount.end(), 0);
        for (const auto& e : events) {
            if (!user_ok[e.u] || !item_ok[e.i]) continue;
            ++ucount[e.u];
            ++icount[e.i];
        }
        for (size_t u = 0; u < users.size(); ++u)
            if (user_ok[u] && ucount[u] < min_count) {
                user_ok[u] = 0;
                changed = true;
            }
        for (size_t i = 0; i < items.size(); ++i)
            if (item_ok[i] && icount[i] < min_count) {
                item_ok[i] = 0;
                changed = true;
            }
    }

    // Dense ids in first-appearance order over the surviving event stream.
    UserSequences out;
    out.item_ids.push_back("");  // pad slot
    std::vector<int32_t> user_map(users.size(), -1), item_map(items.size(), -1);
    int64_t t_min = std::numeric_limits<int64_t>::max();
    for (const auto& e : events) {
        if (!user_ok[e.u] || !item_ok[e.i]) continue;
        if (user_map[e.u] < 0) {
            user_map[e.u] = static_cast<int32_t>(out.user_ids.size());
            out.user_ids.push_back(users[e.u]);
            out.seqs.emplace_back();
        }
        if (item_map[e.i] < 0) {
            item_map[e.i] = static_cast<int32_t>(out.item_ids.size());
            out.item_ids.push_back(items[e.i]);
        }
        out.seqs[static_cast<size_t>(user_map[e.u])].push_back({item_map[e.i], e.ts});
        t_min = std::min(t_min, e.ts);
    }
    if (out.seqs.empty()) throw DataError("min-count filtering removed every interaction");
    out.t_min = t_min;

    for (auto& seq : out.seqs)
        std::stable_sort(seq.begin(), seq.end(),
                         [](const Event& a, const Event& b) { return a.ts < b.ts; });
    return out;
}

DatasetStats dataset_stats(const UserSequences& s) {
    if (s.seqs.empty()) throw DataError("empty corpus");
    DatasetStats st;
    st.n_users = s.n_users();
    st.n_items = s.n_items();
    st.n_actions = s.n_actions();
    st.avg_length = static_cast<double>(st.n_actions) / static_cast<double>(st.n_users);
    return st;
}

std::optional<Split> split_leave_one_out(const std::vector<Event>& seq) {
    if (seq.size() < 3) return std::nullopt;
    Split sp;
    sp.test = seq.back();
    sp.val = seq[seq.size() - 2];
    sp.train.assign(seq.begin(), seq.end() - 2);
    return sp;
}

}  // namespace adrrec::corpus
