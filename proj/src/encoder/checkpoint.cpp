#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "core/errors.hpp"
#include "encoder/model.hpp"

namespace adrrec::model {

namespace {

constexpr char kMagic[4] = {'A', 'D', 'R', 'K'};
constexpr uint32_t kVersion = 1;

nlohmann::json config_to_json(const ModelConfig& cfg) {
    nlohmann::json units = nlohmann::json::array();
    for (auto u : cfg.time_units) units.push_back(kernels::time_unit_name(u));
    return {
        {"mode", cfg.mode},
        {"d_model", cfg.d_model},
        {"layers", cfg.n_layers},
        {"d_ff", cfg.d_ff},
        {"max_len", cfg.max_len},
        {"n_items", cfg.n_items},
        {"pos_kind", cfg.pos_kind == PosKind::Learnable ? "learnable" : "fixed"},
        {"tau_seconds", cfg.tau_seconds},
        {"freq_base", cfg.freq_base},
        {"dropout", cfg.dropout},
        {"sigma_init", cfg.sigma_init},
        {"time_units", units},
        {"epoch_year", cfg.epoch_year},
        {"n_years", cfg.n_years},
    };
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.mode = j.at("mode").get<std::string>();
    cfg.d_model = j.at("d_model").get<int64_t>();
    cfg.n_layers = j.at("layers").get<int64_t>();
    cfg.d_ff = j.at("d_ff").get<int64_t>();
    cfg.max_len = j.at("max_len").get<int64_t>();
    cfg.n_items = j.at("n_items").get<int64_t>();
    const auto pk = j.at("pos_kind").get<std::string>();
    if (pk == "learnable")
        cfg.pos_kind = PosKind::Learnable;
    else if (pk == "fixed")
        cfg.pos_kind = PosKind::Fixed;
    else
        throw ConfigError("pos_kind must be 'learnable' or 'fixed'");
    cfg.tau_seconds = j.at("tau_seconds").get<double>();
    cfg.freq_base = j.at("freq_base").get<double>();
    cfg.dropout = j.at("dropout").get<double>();
    cfg.sigma_init = j.at("sigma_init").get<double>();
    cfg.time_units.clear();
    for (const auto& u : j.at("time_units"))
        cfg.time_units.push_back(kernels::parse_time_unit(u.get<std::string>()));
    cfg.epoch_year = j.at("epoch_year").get<int>();
    cfg.n_years = j.at("n_years").get<int>();
    return cfg;
}

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("checkpoint truncated");
    return v;
}

}  // namespace

void save_checkpoint(const ModelParams& mp, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint '" + path + "'");
    out.write(kMagic, 4);
    put<uint32_t>(out, kVersion);
    const std::string header = config_to_json(mp.cfg).dump();
    put<uint64_t>(out, header.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    const auto params = mp.params.all();
    put<uint64_t>(out, params.size());
    for (const Param* p : params) {
        put<uint32_t>(out, static_cast<uint32_t>(p->name.size()));
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        put<uint32_t>(out, static_cast<uint32_t>(p->value.rank()));
        for (int i = 0; i < p->value.rank(); ++i) put<int64_t>(out, p->value.dim(i));
        out.write(reinterpret_cast<const char*>(p->value.data()),
                  static_cast<std::streamsize>(p->value.numel() * sizeof(double)));
    }
    if (!out) throw DataError("write failure on checkpoint '" + path + "'");
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("'" + path + "' is not a checkpoint");
    if (get<uint32_t>(in) != kVersion) throw DataError("unsupported checkpoint version");
    const uint64_t hlen = get<uint64_t>(in);
    std::string header(hlen, '\0');
    in.read(header.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw DataError("checkpoint truncated");
    auto doc = nlohmann::json::parse(header, nullptr, false);
    if (doc.is_discarded()) throw DataError("checkpoint header is not valid JSON");

    ModelParams mp = ModelParams::init(config_from_json(doc), /*seed=*/0);
    const uint64_t count = get<uint64_t>(in);
    if (count != mp.params.size())
        throw DataError("checkpoint parameter count mismatch");
    for (uint64_t i = 0; i < count; ++i) {
        const uint32_t nlen = get<uint32_t>(in);
        std::string name(nlen, '\0');
        in.read(name.data(), nlen);
        if (!in) throw DataError("checkpoint truncated");
        Param* p = mp.params.find(name);
        if (!p) throw DataError("checkpoint has unknown parameter '" + name + "'");
        const uint32_t rank = get<uint32_t>(in);
        std::vector<int64_t> shape(rank);
        for (auto& d : shape) d = get<int64_t>(in);
        if (shape != p->value.shape())
            throw DataError("checkpoint shape mismatch for '" + name + "'");
        in.read(reinterpret_cast<char*>(p->value.data()),
                static_cast<std::streamsize>(p->value.numel() * sizeof(double)));
        if (!in) throw DataError("checkpoint truncated");
    }
    return mp;
}

}  // namespace adrrec::model
