#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "core/graph.hpp"
#include "core/tensor.hpp"
#include "corpus/corpus.hpp"
#include "kernels/kernels.hpp"

namespace adrrec::model {

enum class PosKind { Fixed, Learnable };

struct ModelConfig {
    std::string mode = "p-b-s-l";
    int64_t d_model = 64;
    int64_t n_layers = 2;
    int64_t d_ff = 256;
    int64_t max_len = 200;
    int64_t n_items = 0;  // vocabulary size V; item ids in [1, V]
    PosKind pos_kind = PosKind::Learnable;
    double tau_seconds = 3600.0;
    double freq_base = 10000.0;
    double dropout = 0.2;
    double sigma_init = 0.017;
    std::vector<kernels::TimeUnit> time_units = {
        kernels::TimeUnit::Year, kernels::TimeUnit::Month, kernels::TimeUnit::Weekday,
        kernels::TimeUnit::Hour};
    int epoch_year = 1970;
    int n_years = 80;

    kernels::EmbeddingMode parsed_mode() const;  // validates H | d_model etc.
    int64_t d_head() const;
};

struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor m, v;  // optimizer moments

    void ensure_opt_state() {
        if (m.numel() != value.numel()) {
            m.reset(value.shape());
            v.reset(value.shape());
        }
    }
};

class ParamSet {
public:
    Param& add(const std::string& name, Tensor init);
    Param* find(const std::string& name);
    const Param* find(const std::string& name) const;
    std::vector<Param*> all();                  // insertion order
    std::vector<const Param*> all() const;
    size_t size() const { return order_.size(); }

private:
    std::vector<std::unique_ptr<Param>> order_;
    std::unordered_map<std::string, Param*> index_;
};

// All learnable state plus the structural description needed to rebuild it.
struct ModelParams {
    ModelConfig cfg;
    kernels::EmbeddingMode mode;
    ParamSet params;

    Param* item_table = nullptr;  // [V+1, d_model], row 0 = pad
    Param* in_mu_w = nullptr;     // noisy input projection
    Param* in_sigma_w = nullptr;
    Param* in_mu_b = nullptr;
    Param* in_sigma_b = nullptr;
    Param* pos_table = nullptr;   // learnable positional (null when fixed)
    Param* boch_w = nullptr;
    Param* boch_b = nullptr;
    struct TimeUnitParams {
        kernels::TimeUnit unit;
        int64_t width = 0;
        Param* table = nullptr;  // [card, width]
        Param* w = nullptr;      // [width]
        Param* b = nullptr;      // [width]
    };
    std::vector<TimeUnitParams> cal_units;  // for 't'
    Param* sin_w = nullptr;
    Param* sin_b = nullptr;
    Param* gauss_mu = nullptr;
    Param* gauss_sigma_raw = nullptr;

    struct HeadParams {
        char letter = 'p';
        Param* wq = nullptr;
        Param* wk = nullptr;
        Param* wv = nullptr;
        Param* wqa = nullptr;  // absolute heads
        Param* wka = nullptr;
        Param* wr = nullptr;   // relative heads (s/e/l)
        Param* br = nullptr;
    };
    struct LayerParams {
        std::vector<HeadParams> heads;
        Param* wo = nullptr;
        Param* bo = nullptr;
        Param* ffn_w1 = nullptr;
        Param* ffn_b1 = nullptr;
        Param* ffn_w2 = nullptr;
        Param* ffn_b2 = nullptr;
        Param* ln1_g = nullptr;
        Param* ln1_b = nullptr;
        Param* ln2_g = nullptr;
        Param* ln2_b = nullptr;
    };
    std::vector<LayerParams> layers;

    static ModelParams init(const ModelConfig& cfg, uint64_t seed);
    void zero_grads();
};

// Memoizes one graph leaf per Param so both passes of a double forward share
// nodes (and therefore accumulate gradients jointly).
class Binding {
public:
    Binding(ag::Graph& g, bool trainable) : g_(g), trainable_(trainable) {}
    ag::ValuePtr operator()(Param* p);
    // Copies node grads back into Param::grad (zeros where untouched).
    void collect_grads(ModelParams& mp);

private:
    ag::Graph& g_;
    bool trainable_;
    std::unordered_map<Param*, ag::ValuePtr> cache_;
};

// Dropout masks drawn once per step so clean and noisy passes share them.
struct DropoutPlan {
    std::vector<Tensor> masks;  // input, then (attn, ffn) per layer
};
DropoutPlan make_dropout_plan(const ModelConfig& cfg, int64_t batch, double rate,
                              RngStream& rng);

struct EncoderOutput {
    ag::ValuePtr hidden;                             // [B,N,d_model]
    std::vector<ag::ValuePtr> taps;                  // one per layer
    std::vector<std::vector<ag::ValuePtr>> attn;     // per layer, per head [B,N,N]
};

// Causal + pad mask: key j visible from query i iff j <= i and (j is real or
// j == i). Every row keeps at least itself.
BTensor attention_mask(const BTensor& pad_mask);

EncoderOutput encoder_forward(ag::Graph& g, Binding& bind, const ModelParams& mp,
                              const corpus::SequenceBatch& batch, int64_t t_min,
                              const DropoutPlan* dropout = nullptr,
                              ag::ValuePtr noise_input = nullptr, bool want_attn = false);

// Weight-tied readout: logits[b,n,v] = hidden . item_table[v]; pad column -inf.
ag::ValuePtr predict_scores(ag::Graph& g, Binding& bind, const ModelParams& mp,
                            ag::ValuePtr hidden);

// --- checkpoint io (versioned container, bit-exact round trip) ---
void save_checkpoint(const ModelParams& mp, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace adrrec::model
