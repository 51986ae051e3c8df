#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "encoder/model.hpp"
#include "noisereg/noisereg.hpp"

namespace adrrec::training {

struct Seeds {
    uint64_t init = 1;
    uint64_t shuffle = 2;
    uint64_t dropout = 3;
    uint64_t noise = 4;
    uint64_t negatives = 5;
};

// Derive the five explicit streams from one master seed (multiseed protocol).
Seeds derive_seeds(uint64_t master, uint64_t negatives_seed);

struct TrainConfig {
    model::ModelConfig model;
    int64_t batch_size = 64;
    int64_t epochs = 10;
    double lr = 1e-3;
    double lambda = 0.1;  // objective weight on the stability regularizer
    noisereg::LnsrConfig lnsr;
    Seeds seeds;
    std::string optimizer = "adam";  // or "sgd" for the literal update rule
    int64_t n_negatives = 100;
    std::vector<int64_t> eval_ks = {5, 10};
    std::string dataset;  // corpus cache path (CLI convenience)
    std::string format;   // raw input format tag (prepare)
    int64_t min_count = 5;

    void validate() const;  // throws ConfigError
};

// Strict parse: unknown keys rejected, defaults materialized.
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig load_config(const std::string& path);

}  // namespace adrrec::training
