#include "adrrec.h"

#include <cstring>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "core/errors.hpp"
#include "corpus/corpus.hpp"
#include "encoder/model.hpp"
#include "evaluation/evaluation.hpp"
#include "training/trainer.hpp"

using nlohmann::json;

struct adrrec_corpus {
    adrrec::corpus::UserSequences seqs;
};

struct adrrec_model {
    adrrec::model::ModelParams params;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
int guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return ADRREC_OK;
    } catch (const adrrec::ConfigError& e) {
        g_last_error = e.what();
        return ADRREC_ERR_CONFIG;
    } catch (const adrrec::DataError& e) {
        g_last_error = e.what();
        return ADRREC_ERR_DATA;
    } catch (const adrrec::ProtocolError& e) {
        g_last_error = e.what();
        return ADRREC_ERR_DATA;
    } catch (const adrrec::NumericalError& e) {
        g_last_error = e.what();
        return ADRREC_ERR_NUMERIC;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return ADRREC_ERR_INTERNAL;
    }
}

char* dup_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.data(), s.size() + 1);
    return out;
}

void require(bool cond, const char* what) {
    if (!cond) throw adrrec::ConfigError(std::string("null argument: ") + what);
}

adrrec::training::TrainConfig parse_config(const char* config_json) {
    require(config_json, "config_json");
    json j = json::parse(config_json, nullptr, false);
    if (j.is_discarded()) throw adrrec::ConfigError("config is not valid JSON");
    return adrrec::training::train_config_from_json(j);
}

adrrec::evaluation::EvalOptions parse_eval_options(const char* options_json) {
    adrrec::evaluation::EvalOptions opts;
    if (!options_json || !*options_json) return opts;
    json j = json::parse(options_json, nullptr, false);
    if (j.is_discarded()) throw adrrec::ConfigError("eval options are not valid JSON");
    if (!j.is_object()) throw adrrec::ConfigError("eval options must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto& key = it.key();
        if (key == "k")
            opts.ks = it.value().get<std::vector<int64_t>>();
        else if (key == "negatives")
            opts.n_negatives = it.value().get<int64_t>();
        else if (key == "seed")
            opts.seed = it.value().get<uint64_t>();
        else if (key == "batch_size")
            opts.batch_size = it.value().get<int64_t>();
        else
            throw adrrec::ConfigError("unknown eval option '" + key + "'");
    }
    if (opts.ks.empty()) throw adrrec::ConfigError("eval option 'k' must not be empty");
    for (int64_t k : opts.ks)
        if (k < 1) throw adrrec::ConfigError("eval cutoffs must be >= 1");
    if (opts.n_negatives < 0) throw adrrec::ConfigError("negatives must be >= 0");
    if (opts.batch_size < 1) throw adrrec::ConfigError("batch_size must be >= 1");
    return opts;
}

}  // namespace

extern "C" {

const char* adrrec_version(void) { return "1.0.0"; }

const char* adrrec_last_error(void) { return g_last_error.c_str(); }

void adrrec_string_free(char* s) { delete[] s; }

int adrrec_corpus_prepare(const char* input_path, const char* format, int min_count,
                          adrrec_corpus** out) {
    return guarded([&] {
        require(input_path, "input_path");
        require(format, "format");
        require(out, "out");
        auto fmt = adrrec::corpus::parse_format(format);
        auto parsed = adrrec::corpus::parse_interactions_file(input_path, fmt);
        auto seqs = adrrec::corpus::build_sequences(parsed.interactions, min_count);
        *out = new adrrec_corpus{std::move(seqs)};
    });
}

int adrrec_corpus_load(const char* cache_path, adrrec_corpus** out) {
    return guarded([&] {
        require(cache_path, "cache_path");
        require(out, "out");
        *out = new adrrec_corpus{adrrec::corpus::load_cache(cache_path)};
    });
}

int adrrec_corpus_save(const adrrec_corpus* corpus, const char* cache_path) {
    return guarded([&] {
        require(corpus, "corpus");
        require(cache_path, "cache_path");
        adrrec::corpus::save_cache(corpus->seqs, cache_path);
    });
}

int adrrec_corpus_stats_json(const adrrec_corpus* corpus, char** json_out) {
    return guarded([&] {
        require(corpus, "corpus");
        require(json_out, "json_out");
        auto st = adrrec::corpus::dataset_stats(corpus->seqs);
        json j = {{"n_users", st.n_users},
                  {"n_items", st.n_items},
                  {"n_actions", st.n_actions},
                  {"avg_length", st.avg_length}};
        *json_out = dup_string(j.dump());
    });
}

void adrrec_corpus_free(adrrec_corpus* corpus) { delete corpus; }

int adrrec_config_default_json(char** json_out) {
    return guarded([&] {
        require(json_out, "json_out");
        adrrec::training::TrainConfig cfg;
        *json_out = dup_string(adrrec::training::train_config_to_json(cfg).dump());
    });
}

int adrrec_config_validate(const char* config_json) {
    return guarded([&] { parse_config(config_json); });
}

int adrrec_train(const adrrec_corpus* corpus, const char* config_json, const char* out_dir,
                 adrrec_model** out_model) {
    return guarded([&] {
        require(corpus, "corpus");
        require(out_dir, "out_dir");
        auto cfg = parse_config(config_json);
        adrrec::training::fit_to_dir(cfg, corpus->seqs, out_dir);
        if (out_model) {
            auto path = std::filesystem::path(out_dir) / "checkpoint.adrk";
            *out_model = new adrrec_model{adrrec::model::load_checkpoint(path.string())};
        }
    });
}

int adrrec_model_load(const char* checkpoint_path, adrrec_model** out) {
    return guarded([&] {
        require(checkpoint_path, "checkpoint_path");
        require(out, "out");
        *out = new adrrec_model{adrrec::model::load_checkpoint(checkpoint_path)};
    });
}

int adrrec_model_save(const adrrec_model* model, const char* checkpoint_path) {
    return guarded([&] {
        require(model, "model");
        require(checkpoint_path, "checkpoint_path");
        adrrec::model::save_checkpoint(model->params, checkpoint_path);
    });
}

void adrrec_model_free(adrrec_model* model) { delete model; }

int adrrec_evaluate_json(const adrrec_model* model, const adrrec_corpus* corpus,
                         const char* options_json, char** report_json) {
    return guarded([&] {
        require(model, "model");
        require(corpus, "corpus");
        require(report_json, "report_json");
        auto opts = parse_eval_options(options_json);
        auto rep = adrrec::evaluation::evaluate(model->params, corpus->seqs, opts);
        *report_json = dup_string(rep.to_json().dump());
    });
}

int adrrec_ood_eval_json(const adrrec_model* model, const adrrec_corpus* corpus,
                         double fraction, const char* options_json, char** report_json) {
    return guarded([&] {
        require(model, "model");
        require(corpus, "corpus");
        require(report_json, "report_json");
        auto opts = parse_eval_options(options_json);
        auto rep =
            adrrec::evaluation::ood_mask_eval(model->params, corpus->seqs, fraction, opts);
        *report_json = dup_string(rep.to_json().dump());
    });
}

int adrrec_multiseed_json(const adrrec_corpus* corpus, const char* config_json,
                          const char* seeds_csv, const char* options_json,
                          char** report_json) {
    return guarded([&] {
        require(corpus, "corpus");
        require(seeds_csv, "seeds_csv");
        require(report_json, "report_json");
        auto cfg = parse_config(config_json);
        std::vector<uint64_t> seeds;
        std::string tok;
        for (const char* p = seeds_csv;; ++p) {
            if (*p == ',' || *p == '\0') {
                if (!tok.empty()) seeds.push_back(std::stoull(tok));
                tok.clear();
                if (*p == '\0') break;
            } else {
                tok += *p;
            }
        }
        auto opts = parse_eval_options(options_json);
        auto rep = adrrec::evaluation::multiseed_eval(cfg, corpus->seqs, seeds, opts);
        *report_json = dup_string(rep.to_json().dump());
    });
}

int adrrec_gradcheck(double* worst_rel_out) {
    int rc = guarded([&] {
        auto result = adrrec::training::builtin_gradcheck();
        if (worst_rel_out) *worst_rel_out = result.worst_rel;
        if (!result.pass)
            throw adrrec::NumericalError("gradient check failed: worst relative error " +
                                         std::to_string(result.worst_rel) + " at " +
                                         result.worst_param);
    });
    return rc;
}

}  // extern "C"
