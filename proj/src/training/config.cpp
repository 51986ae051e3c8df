#include "training/config.hpp"

#include <fstream>
#include <set>

#include "core/errors.hpp"
#include "core/rng.hpp"

namespace adrrec::training {

using nlohmann::json;

Seeds derive_seeds(uint64_t master, uint64_t negatives_seed) {
    Seeds s;
    s.init = hash_combine(master, 1);
    s.shuffle = hash_combine(master, 2);
    s.dropout = hash_combine(master, 3);
    s.noise = hash_combine(master, 4);
    s.negatives = negatives_seed;
    return s;
}

void TrainConfig::validate() const {
    model.parsed_mode();  // mode letters, H | d_model, head width constraints
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("lambda must be in [0, 1]");
    if (lr <= 0.0) throw ConfigError("lr must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (model.dropout < 0.0 || model.dropout >= 1.0)
        throw ConfigError("dropout must be in [0, 1)");
    if (model.max_len < 2) throw ConfigError("max_len must be >= 2");
    if (model.n_layers < 1) throw ConfigError("layers must be >= 1");
    if (model.d_ff < 1) throw ConfigError("d_ff must be >= 1");
    if (model.tau_seconds <= 0.0) throw ConfigError("tau_seconds must be positive");
    if (model.freq_base <= 1.0) throw ConfigError("freq_base must be > 1");
    if (model.sigma_init < 0.0) throw ConfigError("sigma_init must be >= 0");
    if (model.n_years < 1) throw ConfigError("n_years must be >= 1");
    if (lnsr.first_layer < 1 || lnsr.first_layer > model.n_layers)
        throw ConfigError("lnsr.first_layer must be in [1, layers]");
    if (lnsr.layer_weight < 0.0) throw ConfigError("lnsr.layer_weight must be >= 0");
    if (lnsr.delta <= 0.0) throw ConfigError("lnsr.delta must be positive");
    if (optimizer != "adam" && optimizer != "sgd")
        throw ConfigError("optimizer must be 'adam' or 'sgd'");
    if (n_negatives < 0) throw ConfigError("n_negatives must be >= 0");
    if (eval_ks.empty()) throw ConfigError("eval_ks must not be empty");
    for (int64_t k : eval_ks)
        if (k < 1) throw ConfigError("eval_ks entries must be >= 1");
    if (min_count < 1) throw ConfigError("min_count must be >= 1");
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw ConfigError("unknown config key '" + where + it.key() + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        try {
            out = j.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(std::string("config key '") + key + "' has the wrong type");
        }
    }
}

}  // namespace

TrainConfig train_config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    static const std::set<std::string> top = {
        "mode",       "d_model",   "layers",     "d_ff",     "max_len",   "pos_kind",
        "tau_seconds", "freq_base", "dropout",    "time_units", "epoch_year", "n_years",
        "batch_size", "epochs",    "lr",         "lambda",   "lnsr",      "seeds",
        "optimizer",  "n_negatives", "eval_ks",  "dataset",  "format",    "min_count"};
    reject_unknown(j, top, "");

    TrainConfig cfg;
    read(j, "mode", cfg.model.mode);
    read(j, "d_model", cfg.model.d_model);
    read(j, "layers", cfg.model.n_layers);
    read(j, "d_ff", cfg.model.d_ff);
    read(j, "max_len", cfg.model.max_len);
    if (j.contains("pos_kind")) {
        const auto pk = j.at("pos_kind").get<std::string>();
        if (pk == "learnable")
            cfg.model.pos_kind = model::PosKind::Learnable;
        else if (pk == "fixed")
            cfg.model.pos_kind = model::PosKind::Fixed;
        else
            throw ConfigError("pos_kind must be 'learnable' or 'fixed'");
    }
    read(j, "tau_seconds", cfg.model.tau_seconds);
    read(j, "freq_base", cfg.model.freq_base);
    read(j, "dropout", cfg.model.dropout);
    if (j.contains("time_units")) {
        cfg.model.time_units.clear();
        for (const auto& u : j.at("time_units"))
            cfg.model.time_units.push_back(kernels::parse_time_unit(u.get<std::string>()));
    }
    read(j, "epoch_year", cfg.model.epoch_year);
    read(j, "n_years", cfg.model.n_years);
    read(j, "batch_size", cfg.batch_size);
    read(j, "epochs", cfg.epochs);
    read(j, "lr", cfg.lr);
    read(j, "lambda", cfg.lambda);
    if (j.contains("lnsr")) {
        const auto& l = j.at("lnsr");
        reject_unknown(l, {"first_layer", "layer_weight", "sigma_init", "delta"}, "lnsr.");
        read(l, "first_layer", cfg.lnsr.first_layer);
        read(l, "layer_weight", cfg.lnsr.layer_weight);
        read(l, "sigma_init", cfg.lnsr.sigma_init);
        read(l, "delta", cfg.lnsr.delta);
    }
    cfg.model.sigma_init = cfg.lnsr.sigma_init;
    if (j.contains("seeds")) {
        const auto& s = j.at("seeds");
        reject_unknown(s, {"init", "shuffle", "dropout", "noise", "negatives"}, "seeds.");
        read(s, "init", cfg.seeds.init);
        read(s, "shuffle", cfg.seeds.shuffle);
        read(s, "dropout", cfg.seeds.dropout);
        read(s, "noise", cfg.seeds.noise);
        read(s, "negatives", cfg.seeds.negatives);
    }
    read(j, "optimizer", cfg.optimizer);
    read(j, "n_negatives", cfg.n_negatives);
    read(j, "eval_ks", cfg.eval_ks);
    read(j, "dataset", cfg.dataset);
    read(j, "format", cfg.format);
    read(j, "min_count", cfg.min_count);
    cfg.validate();
    return cfg;
}

json train_config_to_json(const TrainConfig& cfg) {
    json units = json::array();
    for (auto u : cfg.model.time_units) units.push_back(kernels::time_unit_name(u));
    return {
        {"mode", cfg.model.mode},
        {"d_model", cfg.model.d_model},
        {"layers", cfg.model.n_layers},
        {"d_ff", cfg.model.d_ff},
        {"max_len", cfg.model.max_len},
        {"pos_kind", cfg.model.pos_kind == model::PosKind::Learnable ? "learnable" : "fixed"},
        {"tau_seconds", cfg.model.tau_seconds},
        {"freq_base", cfg.model.freq_base},
        {"dropout", cfg.model.dropout},
        {"time_units", units},
        {"epoch_year", cfg.model.epoch_year},
        {"n_years", cfg.model.n_years},
        {"batch_size", cfg.batch_size},
        {"epochs", cfg.epochs},
        {"lr", cfg.lr},
        {"lambda", cfg.lambda},
        {"lnsr",
         {{"first_layer", cfg.lnsr.first_layer},
          {"layer_weight", cfg.lnsr.layer_weight},
          {"sigma_init", cfg.lnsr.sigma_init},
          {"delta", cfg.lnsr.delta}}},
        {"seeds",
         {{"init", cfg.seeds.init},
          {"shuffle", cfg.seeds.shuffle},
          {"dropout", cfg.seeds.dropout},
          {"noise", cfg.seeds.noise},
          {"negatives", cfg.seeds.negatives}}},
        {"optimizer", cfg.optimizer},
        {"n_negatives", cfg.n_negatives},
        {"eval_ks", cfg.eval_ks},
        {"dataset", cfg.dataset},
        {"format", cfg.format},
        {"min_count", cfg.min_count},
    };
}

TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config '" + path + "' is not valid JSON");
    return train_config_from_json(j);
}

}  // namespace adrrec::training
