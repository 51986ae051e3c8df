// Command-line front end. Links against the C API only; all JSON plumbing
// happens here, all math in the shared library.
#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <string>
#include <vector>

#include "adrrec.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliError {
    int code;
    std::string message;
};

[[noreturn]] void fail(int code, const std::string& msg) { throw CliError{code, msg}; }

void check(int rc, const std::string& what) {
    if (rc != ADRREC_OK) fail(rc, what + ": " + adrrec_last_error());
}

std::string take_string(char* s) {
    std::string out = s ? s : "";
    adrrec_string_free(s);
    return out;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ADRREC_ERR_CONFIG, "cannot open config '" + path + "'");
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) fail(ADRREC_ERR_CONFIG, "'" + path + "' is not valid JSON");
    return j;
}

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path);
    if (!out) fail(ADRREC_ERR_DATA, "cannot write '" + path.string() + "'");
    out << content;
    if (!content.empty() && content.back() != '\n') out << "\n";
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string tok;
    for (char c : s) {
        if (c == ',') {
            if (!tok.empty()) out.push_back(tok);
            tok.clear();
        } else {
            tok += c;
        }
    }
    if (!tok.empty()) out.push_back(tok);
    return out;
}

struct CorpusHandle {
    adrrec_corpus* ptr = nullptr;
    ~CorpusHandle() { adrrec_corpus_free(ptr); }
};

struct ModelHandle {
    adrrec_model* ptr = nullptr;
    ~ModelHandle() { adrrec_model_free(ptr); }
};

void load_corpus(const std::string& cache_path, CorpusHandle& corpus) {
    if (cache_path.empty())
        fail(ADRREC_ERR_CONFIG, "no corpus given (use --dataset or the config's dataset key)");
    check(adrrec_corpus_load(cache_path.c_str(), &corpus.ptr), "loading corpus");
}

json eval_options(int64_t negatives, uint64_t seed, const std::vector<int64_t>& ks) {
    return json{{"negatives", negatives}, {"seed", seed}, {"k", ks}};
}

// --- command payloads ---

struct PrepareArgs {
    std::string input, format = "movielens-dat", out = "prep_out", config;
    int min_count = 5;
};

int cmd_prepare(PrepareArgs& a) {
    if (!a.config.empty()) {
        json j = read_json_file(a.config);
        if (j.value("command", "prepare") != "prepare")
            fail(ADRREC_ERR_CONFIG, "config is for command '" + j.value("command", "") + "'");
        if (a.input.empty()) a.input = j.value("in", "");
        a.format = j.value("format", a.format);
        a.min_count = j.value("min_count", a.min_count);
    }
    if (a.input.empty()) fail(ADRREC_ERR_CONFIG, "prepare needs --in <raw data file>");
    CorpusHandle corpus;
    check(adrrec_corpus_prepare(a.input.c_str(), a.format.c_str(), a.min_count, &corpus.ptr),
          "preparing corpus");
    fs::create_directories(a.out);
    check(adrrec_corpus_save(corpus.ptr, (fs::path(a.out) / "corpus.adrc").string().c_str()),
          "saving corpus cache");
    char* stats_raw = nullptr;
    check(adrrec_corpus_stats_json(corpus.ptr, &stats_raw), "corpus stats");
    const std::string stats = take_string(stats_raw);
    write_file(fs::path(a.out) / "stats.json", json::parse(stats).dump(2));
    write_file(fs::path(a.out) / "effective_config.json",
               json{{"command", "prepare"},
                    {"in", a.input},
                    {"format", a.format},
                    {"min_count", a.min_count}}
                   .dump(2));
    std::cout << stats << "\n";
    return 0;
}

struct TrainArgs {
    std::string config, dataset, mode, out = "train_out";
    int64_t epochs = -1;
    int64_t seed = -1;
};

json compose_train_config(const TrainArgs& a) {
    json cfg = json::object();
    if (!a.config.empty()) cfg = read_json_file(a.config);
    if (!a.dataset.empty()) cfg["dataset"] = a.dataset;
    if (!a.mode.empty()) cfg["mode"] = a.mode;
    if (a.epochs >= 0) cfg["epochs"] = a.epochs;
    if (a.seed >= 0)
        cfg["seeds"] = json{{"init", a.seed * 10 + 1},
                            {"shuffle", a.seed * 10 + 2},
                            {"dropout", a.seed * 10 + 3},
                            {"noise", a.seed * 10 + 4},
                            {"negatives", a.seed * 10 + 5}};
    check(adrrec_config_validate(cfg.dump().c_str()), "validating config");
    return cfg;
}

int cmd_train(TrainArgs& a) {
    json cfg = compose_train_config(a);
    CorpusHandle corpus;
    load_corpus(cfg.value("dataset", ""), corpus);
    check(adrrec_train(corpus.ptr, cfg.dump().c_str(), a.out.c_str(), nullptr), "training");
    std::cout << "wrote " << (fs::path(a.out) / "checkpoint.adrk").string() << "\n";
    return 0;
}

struct EvalArgs {
    std::string config, checkpoint, dataset, out = "eval_out";
    int64_t negatives = 100;
    uint64_t seed = 1;
    std::string ks = "5,10";
    std::string fractions;  // ood-eval only
    bool ood = false;
};

int cmd_eval(EvalArgs& a) {
    if (!a.config.empty()) {
        json j = read_json_file(a.config);
        const std::string want = a.ood ? "ood-eval" : "eval";
        if (j.value("command", want) != want)
            fail(ADRREC_ERR_CONFIG, "config is for command '" + j.value("command", "") + "'");
        if (a.checkpoint.empty()) a.checkpoint = j.value("checkpoint", "");
        if (a.dataset.empty()) a.dataset = j.value("dataset", "");
        a.negatives = j.value("negatives", a.negatives);
        a.seed = j.value("seed", a.seed);
        if (j.contains("k")) {
            a.ks.clear();
            for (const auto& k : j["k"]) a.ks += (a.ks.empty() ? "" : ",") + k.dump();
        }
        if (a.ood && j.contains("fractions")) {
            a.fractions.clear();
            for (const auto& f : j["fractions"])
                a.fractions += (a.fractions.empty() ? "" : ",") + f.dump();
        }
    }
    if (a.checkpoint.empty()) fail(ADRREC_ERR_CONFIG, "missing --checkpoint");
    if (a.ood && a.fractions.empty()) fail(ADRREC_ERR_CONFIG, "missing --mask-fraction");

    std::vector<int64_t> ks;
    for (const auto& t : split_csv(a.ks)) ks.push_back(std::stoll(t));
    ModelHandle model;
    check(adrrec_model_load(a.checkpoint.c_str(), &model.ptr), "loading checkpoint");
    CorpusHandle corpus;
    load_corpus(a.dataset, corpus);
    const std::string opts = eval_options(a.negatives, a.seed, ks).dump();

    fs::create_directories(a.out);
    json effective = {{"command", a.ood ? "ood-eval" : "eval"}, {"checkpoint", a.checkpoint},
                      {"dataset", a.dataset},                   {"negatives", a.negatives},
                      {"seed", a.seed},                         {"k", ks}};

    if (!a.ood) {
        char* rep = nullptr;
        check(adrrec_evaluate_json(model.ptr, corpus.ptr, opts.c_str(), &rep), "evaluating");
        const std::string report = take_string(rep);
        write_file(fs::path(a.out) / "metrics.json", json::parse(report).dump(2));
        std::cout << report << "\n";
    } else {
        std::vector<double> fractions;
        for (const auto& t : split_csv(a.fractions)) fractions.push_back(std::stod(t));
        effective["fractions"] = fractions;
        json combined = json::array();
        for (double f : fractions) {
            char* rep = nullptr;
            check(adrrec_ood_eval_json(model.ptr, corpus.ptr, f, opts.c_str(), &rep),
                  "ood evaluation");
            json parsed = json::parse(take_string(rep));
            const std::string tag = std::to_string(static_cast<int>(f * 100.0 + 0.5));
            write_file(fs::path(a.out) / ("metrics_ood_" + tag + ".json"), parsed.dump(2));
            combined.push_back(parsed);
        }
        write_file(fs::path(a.out) / "ood_report.json", combined.dump(2));
        std::cout << combined.dump() << "\n";
    }
    write_file(fs::path(a.out) / "effective_config.json", effective.dump(2));
    return 0;
}

struct MultiseedArgs {
    std::string config, dataset, seeds = "1,2,3", out = "multiseed_out";
    int64_t negatives = 100;
    std::string ks = "5,10";
};

int cmd_multiseed(MultiseedArgs& a) {
    json cfg = json::object();
    if (!a.config.empty()) {
        json j = read_json_file(a.config);
        if (j.contains("command")) {
            if (j.value("command", "") != "multiseed")
                fail(ADRREC_ERR_CONFIG, "config is for command '" + j.value("command", "") + "'");
            cfg = j.value("train", json::object());
            if (a.dataset.empty()) a.dataset = j.value("dataset", "");
            a.seeds = j.value("seeds", a.seeds);
            a.negatives = j.value("negatives", a.negatives);
        } else {
            cfg = j;  // plain train config
        }
    }
    if (!a.dataset.empty()) cfg["dataset"] = a.dataset;
    check(adrrec_config_validate(cfg.dump().c_str()), "validating config");

    std::vector<int64_t> ks;
    for (const auto& t : split_csv(a.ks)) ks.push_back(std::stoll(t));
    CorpusHandle corpus;
    load_corpus(cfg.value("dataset", ""), corpus);
    const std::string opts = eval_options(a.negatives, 1, ks).dump();

    char* rep = nullptr;
    check(adrrec_multiseed_json(corpus.ptr, cfg.dump().c_str(), a.seeds.c_str(), opts.c_str(),
                                &rep),
          "multiseed evaluation");
    json parsed = json::parse(take_string(rep));
    fs::create_directories(a.out);
    const auto seed_tags = split_csv(a.seeds);
    for (size_t i = 0; i < seed_tags.size() && i < parsed["per_seed"].size(); ++i)
        write_file(fs::path(a.out) / ("metrics_seed_" + seed_tags[i] + ".json"),
                   parsed["per_seed"][i].dump(2));
    write_file(fs::path(a.out) / "multiseed.json", parsed.dump(2));
    write_file(fs::path(a.out) / "effective_config.json",
               json{{"command", "multiseed"},
                    {"train", cfg},
                    {"dataset", cfg.value("dataset", "")},
                    {"seeds", a.seeds},
                    {"negatives", a.negatives}}
                   .dump(2));
    std::cout << parsed.dump() << "\n";
    return 0;
}

struct AblateArgs {
    std::string config, dataset, modes, out = "ablate_out";
    int64_t negatives = 100;
    uint64_t seed = 1;
};

int cmd_ablate(AblateArgs& a) {
    json cfg = json::object();
    if (!a.config.empty()) {
        json j = read_json_file(a.config);
        if (j.contains("command")) {
            if (j.value("command", "") != "ablate")
                fail(ADRREC_ERR_CONFIG, "config is for command '" + j.value("command", "") + "'");
            cfg = j.value("train", json::object());
            if (a.dataset.empty()) a.dataset = j.value("dataset", "");
            if (a.modes.empty()) a.modes = j.value("modes", "");
            a.negatives = j.value("negatives", a.negatives);
        } else {
            cfg = j;
        }
    }
    if (!a.dataset.empty()) cfg["dataset"] = a.dataset;
    if (a.modes.empty()) fail(ADRREC_ERR_CONFIG, "missing --modes");
    CorpusHandle corpus;
    load_corpus(cfg.value("dataset", ""), corpus);

    json summary = json::object();
    for (const auto& mode : split_csv(a.modes)) {
        json mode_cfg = cfg;
        mode_cfg["mode"] = mode;
        check(adrrec_config_validate(mode_cfg.dump().c_str()),
              "validating config for mode " + mode);
        const auto mode_dir = fs::path(a.out) / mode;
        ModelHandle model;
        check(adrrec_train(corpus.ptr, mode_cfg.dump().c_str(), mode_dir.string().c_str(),
                           &model.ptr),
              "training mode " + mode);
        char* rep = nullptr;
        check(adrrec_evaluate_json(model.ptr, corpus.ptr,
                                   eval_options(a.negatives, a.seed, {5, 10}).dump().c_str(),
                                   &rep),
              "evaluating mode " + mode);
        json parsed = json::parse(take_string(rep));
        write_file(mode_dir / "metrics.json", parsed.dump(2));
        summary[mode] = parsed;
    }
    write_file(fs::path(a.out) / "ablate.json", summary.dump(2));
    write_file(fs::path(a.out) / "effective_config.json",
               json{{"command", "ablate"},
                    {"train", cfg},
                    {"dataset", cfg.value("dataset", "")},
                    {"modes", a.modes},
                    {"negatives", a.negatives},
                    {"seed", a.seed}}
                   .dump(2));
    std::cout << summary.dump() << "\n";
    return 0;
}

int cmd_gradcheck() {
    double worst = 0.0;
    const int rc = adrrec_gradcheck(&worst);
    std::cout << "gradcheck worst relative error: " << worst << "\n";
    if (rc != ADRREC_OK) fail(rc, std::string("gradcheck: ") + adrrec_last_error());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adrrec: adaptive robust sequential recommender"};
    app.require_subcommand(1);

    PrepareArgs prep;
    auto* prepare = app.add_subcommand("prepare", "ingest raw interactions into a corpus cache");
    prepare->add_option("--in,--dataset", prep.input, "raw interactions file");
    prepare->add_option("--format", prep.format, "movielens-dat | amazon-csv | jsonl");
    prepare->add_option("--min-count", prep.min_count, "min-count filter threshold");
    prepare->add_option("--out", prep.out, "output directory");
    prepare->add_option("--config", prep.config, "effective config from a previous run");

    TrainArgs train;
    auto* tr = app.add_subcommand("train", "train a model and keep the best checkpoint");
    tr->add_option("--config", train.config, "training config JSON");
    tr->add_option("--dataset", train.dataset, "corpus cache path");
    tr->add_option("--mode", train.mode, "embedding mode string, e.g. p-b-s-l-r-o");
    tr->add_option("--epochs", train.epochs, "override epoch count");
    tr->add_option("--seed", train.seed, "master seed (derives all streams)");
    tr->add_option("--out", train.out, "output directory");

    EvalArgs ev;
    auto* evc = app.add_subcommand("eval", "leave-one-out evaluation of a checkpoint");
    evc->add_option("--config", ev.config, "effective config from a previous run");
    evc->add_option("--checkpoint", ev.checkpoint, "checkpoint path");
    evc->add_option("--dataset", ev.dataset, "corpus cache path");
    evc->add_option("--negatives", ev.negatives, "negatives per user (0 = full vocabulary)");
    evc->add_option("--seed", ev.seed, "protocol seed");
    evc->add_option("--k", ev.ks, "cutoffs, comma separated");
    evc->add_option("--out", ev.out, "output directory");

    EvalArgs ood;
    ood.ood = true;
    ood.out = "ood_out";
    auto* oodc = app.add_subcommand("ood-eval", "evaluation with masked context spans");
    oodc->add_option("--config", ood.config, "effective config from a previous run");
    oodc->add_option("--checkpoint", ood.checkpoint, "checkpoint path");
    oodc->add_option("--dataset", ood.dataset, "corpus cache path");
    oodc->add_option("--negatives", ood.negatives, "negatives per user (0 = full vocabulary)");
    oodc->add_option("--seed", ood.seed, "protocol seed");
    oodc->add_option("--k", ood.ks, "cutoffs, comma separated");
    oodc->add_option("--mask-fraction", ood.fractions, "fractions, e.g. 0.1,0.3");
    oodc->add_option("--out", ood.out, "output directory");

    MultiseedArgs ms;
    auto* msc = app.add_subcommand("multiseed", "fit + evaluate across seeds, report mean/std");
    msc->add_option("--config", ms.config, "training config JSON");
    msc->add_option("--dataset", ms.dataset, "corpus cache path");
    msc->add_option("--seeds", ms.seeds, "seeds, comma separated");
    msc->add_option("--negatives", ms.negatives, "negatives per user (0 = full vocabulary)");
    msc->add_option("--k", ms.ks, "cutoffs, comma separated");
    msc->add_option("--out", ms.out, "output directory");

    AblateArgs ab;
    auto* abc = app.add_subcommand("ablate", "train + evaluate one model per mode string");
    abc->add_option("--config", ab.config, "training config JSON");
    abc->add_option("--dataset", ab.dataset, "corpus cache path");
    abc->add_option("--modes", ab.modes, "mode strings, comma separated");
    abc->add_option("--negatives", ab.negatives, "negatives per user (0 = full vocabulary)");
    abc->add_option("--seed", ab.seed, "protocol seed");
    abc->add_option("--out", ab.out, "output directory");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference check on the built-in model");
    (void)gc;

    CLI11_PARSE(app, argc, argv);

    try {
        if (prepare->parsed()) return cmd_prepare(prep);
        if (tr->parsed()) return cmd_train(train);
        if (evc->parsed()) return cmd_eval(ev);
        if (oodc->parsed()) return cmd_eval(ood);
        if (msc->parsed()) return cmd_multiseed(ms);
        if (abc->parsed()) return cmd_ablate(ab);
        if (gc->parsed()) return cmd_gradcheck();
    } catch (const CliError& e) {
        std::cerr << "error: " << e.message << "\n";
        return e.code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return ADRREC_ERR_INTERNAL;
    }
    return 0;
}
