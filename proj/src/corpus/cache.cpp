#include <cstring>
#include <fstream>

#include "core/errors.hpp"
#include "corpus/corpus.hpp"

namespace adrrec::corpus {

namespace {

constexpr char kMagic[4] = {'A', 'D', 'R', 'C'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("corpus cache truncated");
    return v;
}

void put_str(std::ostream& out, const std::string& s) {
    put<uint32_t>(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_str(std::istream& in) {
    const uint32_t n = get<uint32_t>(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw DataError("corpus cache truncated");
    return s;
}

}  // namespace

void save_cache(const UserSequences& s, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write corpus cache '" + path + "'");
    out.write(kMagic, 4);
    put<uint32_t>(out, kVersion);
    put<int64_t>(out, s.n_users());
    put<int64_t>(out, s.n_items());
    put<int64_t>(out, s.t_min);
    for (const auto& id : s.user_ids) put_str(out, id);
    for (size_t i = 1; i < s.item_ids.size(); ++i) put_str(out, s.item_ids[i]);
    for (const auto& seq : s.seqs) {
        put<uint64_t>(out, seq.size());
        for (const Event& e : seq) {
            put<int32_t>(out, e.item);
            put<int64_t>(out, e.ts);
        }
    }
    if (!out) throw DataError("write failure on corpus cache '" + path + "'");
}

UserSequences load_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open corpus cache '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("'" + path + "' is not a corpus cache");
    const uint32_t version = get<uint32_t>(in);
    if (version != kVersion)
        throw DataError("unsupported corpus cache version " + std::to_string(version));
    const int64_t n_users = get<int64_t>(in);
    const int64_t n_items = get<int64_t>(in);
    UserSequences s;
    s.t_min = get<int64_t>(in);
    s.user_ids.reserve(static_cast<size_t>(n_users));
    for (int64_t u = 0; u < n_users; ++u) s.user_ids.push_back(get_str(in));
    s.item_ids.push_back("");
    for (int64_t i = 0; i < n_items; ++i) s.item_ids.push_back(get_str(in));
    s.seqs.resize(static_cast<size_t>(n_users));
    for (auto& seq : s.seqs) {
        const uint64_t count = get<uint64_t>(in);
        seq.resize(count);
        for (auto& e : seq) {
            e.item = get<int32_t>(in);
            e.ts = get<int64_t>(in);
            if (e.item < 1 || e.item > n_items) throw DataError("corpus cache: item id out of range");
        }
    }
    return s;
}

}  // namespace adrrec::corpus
