#include <fstream>
#include <istream>
#include <nlohmann/json.hpp>
#include <string_view>

#include "core/errors.hpp"
#include "corpus/corpus.hpp"

namespace adrrec::corpus {

SourceFormat parse_format(const std::string& tag) {
    if (tag == "movielens-dat") return SourceFormat::MovielensDat;
    if (tag == "amazon-csv") return SourceFormat::AmazonCsv;
    if (tag == "jsonl") return SourceFormat::Jsonl;
    throw ConfigError("unknown dataset format '" + tag + "'");
}

namespace {

bool parse_ts(std::string_view s, int64_t& out) {
    if (s.empty()) return false;
    int64_t v = 0;
    for (char c : s) {
        if (c < '0' || c > '9') return false;
        v = v * 10 + (c - '0');
        if (v < 0) return false;
    }
    out = v;
    return true;
}

std::vector<std::string_view> split(std::string_view line, std::string_view sep) {
    std::vector<std::string_view> out;
    size_t pos = 0;
    while (true) {
        size_t next = line.find(sep, pos);
        if (next == std::string_view::npos) {
            out.push_back(line.substr(pos));
            break;
        }
        out.push_back(line.substr(pos, next - pos));
        pos = next + sep.size();
    }
    return out;
}

bool parse_line(std::string_view line, SourceFormat format, Interaction& out) {
    switch (format) {
        case SourceFormat::MovielensDat: {
            // UserID::MovieID::Rating::Timestamp
            auto f = split(line, "::");
            if (f.size() != 4 || f[0].empty() || f[1].empty()) return false;
            if (!parse_ts(f[3], out.ts)) return false;
            out.user.assign(f[0]);
            out.item.assign(f[1]);
            return true;
        }
        case SourceFormat::AmazonCsv: {
            // user,item,rating,timestamp
            auto f = split(line, ",");
            if (f.size() != 4 || f[0].empty() || f[1].empty()) return false;
            if (!parse_ts(f[3], out.ts)) return false;
            out.user.assign(f[0]);
            out.item.assign(f[1]);
            return true;
        }
        case SourceFormat::Jsonl: {
            auto doc = nlohmann::json::parse(line, nullptr, false);
            if (doc.is_discarded() || !doc.is_object()) return false;
            if (!doc.contains("user") || !doc.contains("item") || !doc.contains("ts")) return false;
            const auto& u = doc["user"];
            const auto& it = doc["item"];
            const auto& ts = doc["ts"];
            if (!ts.is_number_integer() && !ts.is_number_unsigned()) return false;
            const int64_t t = ts.get<int64_t>();
            if (t < 0) return false;
            out.user = u.is_string() ? u.get<std::string>() : u.dump();
            out.item = it.is_string() ? it.get<std::string>() : it.dump();
            if (out.user.empty() || out.item.empty()) return false;
            out.ts = t;
            return true;
        }
    }
    return false;
}

}  // namespace

ParseResult parse_interactions(std::istream& in, SourceFormat format) {
    if (!in.good()) throw DataError("unreadable interaction source");
    ParseResult result;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        Interaction rec;
        if (parse_line(line, format, rec))
            result.interactions.push_back(std::move(rec));
        else
            ++result.malformed;
    }
    return result;
}

ParseResult parse_interactions_file(const std::string& path, SourceFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    return parse_interactions(in, format);
}

}  // namespace adrrec::corpus
