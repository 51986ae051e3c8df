#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace adrrec::corpus {

// One (user, item, timestamp) event, raw ids as found in the source.
struct Interaction {
    std::string user;
    std::string item;
    int64_t ts = 0;
};

struct ParseResult {
    std::vector<Interaction> interactions;
    int64_t malformed = 0;
};

enum class SourceFormat { MovielensDat, AmazonCsv, Jsonl };

SourceFormat parse_format(const std::string& tag);  // throws ConfigError

// Streaming parse: one Interaction per well-formed record, input order kept,
// malformed lines counted.
ParseResult parse_interactions(std::istream& in, SourceFormat format);
ParseResult parse_interactions_file(const std::string& path, SourceFormat format);

struct Event {
    int32_t item = 0;  // dense index in [1, n_items]
    int64_t ts = 0;
};

// Filtered corpus: per-user chronological event lists plus both vocabularies.
// Item index 0 is reserved for padding.
struct UserSequences {
    std::vector<std::string> user_ids;              // dense user -> raw id
    std::vector<std::string> item_ids;              // [0]="" pad, dense item -> raw id
    std::vector<std::vector<Event>> seqs;           // indexed by dense user
    int64_t t_min = 0;

    int64_t n_users() const { return static_cast<int64_t>(seqs.size()); }
    int64_t n_items() const { return static_cast<int64_t>(item_ids.size()) - 1; }
    int64_t n_actions() const;
};

struct DatasetStats {
    int64_t n_users = 0;
    int64_t n_items = 0;
    int64_t n_actions = 0;
    double avg_length = 0.0;
};

// Iterative (fixpoint) min-count filter, chronological sort with ties broken
// by input order, dense ids in first-appearance order.
UserSequences build_sequences(const std::vector<Interaction>& interactions, int min_count);

DatasetStats dataset_stats(const UserSequences& s);

struct Split {
    std::vector<Event> train;  // everything before val target
    Event val;
    Event test;
};

// Last event is the test target, second-to-last the validation target.
// Sequences shorter than 3 yield nullopt (caller counts skips).
std::optional<Split> split_leave_one_out(const std::vector<Event>& seq);

// Padded training minibatch. Pads form a contiguous left prefix; items and
// targets are 0 wherever pad_mask is false.
struct SequenceBatch {
    ITensor items;    // B x N
    ITensor times;    // B x N
    ITensor targets;  // B x N
    BTensor pad_mask; // B x N, true = real token
    std::vector<int32_t> users;
};

// Batches over the leave-one-out training prefixes. User order is shuffled by
// `shuffle_seed` (callers derive a per-epoch seed). Users whose prefix has
// fewer than two events are skipped.
std::vector<SequenceBatch> make_batches(const UserSequences& s, int64_t max_len,
                                        int64_t batch_size, uint64_t shuffle_seed);

// n distinct items uniform over vocab \ history, deterministic per (user, seed).
std::vector<int32_t> sample_negatives(int32_t user, int64_t n, int64_t n_items,
                                      const std::vector<uint8_t>& history_mask, uint64_t seed);

// Versioned binary cache (magic "ADRC").
void save_cache(const UserSequences& s, const std::string& path);
UserSequences load_cache(const std::string& path);

}  // namespace adrrec::corpus
