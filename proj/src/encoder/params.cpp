#include <cmath>

#include "core/errors.hpp"
#include "core/rng.hpp"
#include "encoder/model.hpp"

namespace adrrec::model {

kernels::EmbeddingMode ModelConfig::parsed_mode() const {
    auto m = kernels::parse_mode(mode);
    if (d_model <= 0) throw ConfigError("d_model must be positive");
    if (d_model % m.n_heads() != 0)
        throw ConfigError("mode '" + mode + "' has " + std::to_string(m.n_heads()) +
                          " heads, which does not divide d_model=" + std::to_string(d_model));
    const int64_t dh = d_model / m.n_heads();
    if ((m.has('b') || m.has('s')) && dh % 2 != 0)
        throw ConfigError("head width " + std::to_string(dh) +
                          " must be even for cos/sin kernels (letters b, s)");
    if (m.has('t')) kernels::unit_widths(dh, time_units.size());
    return m;
}

int64_t ModelConfig::d_head() const { return d_model / parsed_mode().n_heads(); }

Param& ParamSet::add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw InvariantError("duplicate parameter '" + name + "'");
    auto p = std::make_unique<Param>();
    p->name = name;
    p->value = std::move(init);
    Param* raw = p.get();
    order_.push_back(std::move(p));
    index_[name] = raw;
    return *raw;
}

Param* ParamSet::find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : it->second;
}

const Param* ParamSet::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : it->second;
}

std::vector<Param*> ParamSet::all() {
    std::vector<Param*> v;
    for (auto& p : order_) v.push_back(p.get());
    return v;
}

std::vector<const Param*> ParamSet::all() const {
    std::vector<const Param*> v;
    for (auto& p : order_) v.push_back(p.get());
    return v;
}

namespace {

Tensor trunc_normal(std::vector<int64_t> shape, double stddev, RngStream& rng) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.trunc_normal(stddev);
    return t;
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, uint64_t seed) {
    if (cfg.n_items < 1) throw ConfigError("model needs a positive item vocabulary");
    if (cfg.n_layers < 1) throw ConfigError("need at least one layer");
    if (cfg.d_ff < 1) throw ConfigError("d_ff must be positive");
    if (cfg.max_len < 2) throw ConfigError("max_len must be >= 2");
    if (cfg.sigma_init < 0.0) throw ConfigError("sigma_init must be >= 0");

    ModelParams mp;
    mp.cfg = cfg;
    mp.mode = cfg.parsed_mode();
    const int64_t d = cfg.d_model;
    const int64_t dh = d / mp.mode.n_heads();
    RngStream rng(seed);
    constexpr double kStd = 0.02;

    mp.item_table = &mp.params.add("item_table", trunc_normal({cfg.n_items + 1, d}, kStd, rng));
    // Pad row stays zero so pad embeddings carry no signal.
    for (int64_t j = 0; j < d; ++j) mp.item_table->value.at(0, j) = 0.0;

    // Input projection initialized near identity so the item embedding scale
    // survives layer 1 at step 0.
    {
        Tensor w = trunc_normal({d, d}, kStd, rng);
        for (int64_t i = 0; i < d; ++i) w.at(i, i) += 1.0;
        mp.in_mu_w = &mp.params.add("input_proj.mu_w", std::move(w));
        mp.in_sigma_w =
            &mp.params.add("input_proj.sigma_w", Tensor::full({d, d}, cfg.sigma_init));
        mp.in_mu_b = &mp.params.add("input_proj.mu_b", Tensor::zeros({d}));
        mp.in_sigma_b =
            &mp.params.add("input_proj.sigma_b", Tensor::full({d}, cfg.sigma_init));
    }

    if (mp.mode.has('p') && cfg.pos_kind == PosKind::Learnable)
        mp.pos_table = &mp.params.add("kernel.p.table", trunc_normal({cfg.max_len, dh}, kStd, rng));

    if (mp.mode.has('b')) {
        Tensor w({dh / 2}), b = Tensor::zeros({dh / 2});
        for (int64_t i = 0; i < dh / 2; ++i)
            w[i] = 1.0 / (cfg.tau_seconds *
                          std::pow(cfg.freq_base,
                                   2.0 * static_cast<double>(i) / static_cast<double>(dh)));
        mp.boch_w = &mp.params.add("kernel.b.w", std::move(w));
        mp.boch_b = &mp.params.add("kernel.b.b", std::move(b));
    }

    if (mp.mode.has('t')) {
        const auto widths = kernels::unit_widths(dh, cfg.time_units.size());
        for (size_t u = 0; u < cfg.time_units.size(); ++u) {
            TimeUnitParams tp;
            tp.unit = cfg.time_units[u];
            tp.width = widths[u];
            const auto name = "kernel.t." + kernels::time_unit_name(tp.unit);
            const int64_t card = kernels::unit_cardinality(tp.unit, cfg.n_years);
            tp.table = &mp.params.add(name + ".table", trunc_normal({card, tp.width}, kStd, rng));
            tp.w = &mp.params.add(name + ".w", Tensor::full({tp.width}, 1.0));
            tp.b = &mp.params.add(name + ".b", Tensor::zeros({tp.width}));
            mp.cal_units.push_back(tp);
        }
    }

    if (mp.mode.has('s')) {
        Tensor w({dh / 2}), b = Tensor::zeros({dh / 2});
        for (int64_t i = 0; i < dh / 2; ++i)
            w[i] = 1.0 / std::pow(cfg.freq_base,
                                  2.0 * static_cast<double>(i) / static_cast<double>(dh));
        mp.sin_w = &mp.params.add("kernel.s.w", std::move(w));
        mp.sin_b = &mp.params.add("kernel.s.b", std::move(b));
    }

    if (mp.mode.has('r')) {
        mp.gauss_mu = &mp.params.add("kernel.r.mu", Tensor::zeros({1}));
        // softplus(raw) = 1 at init
        mp.gauss_sigma_raw =
            &mp.params.add("kernel.r.sigma_raw", Tensor::full({1}, std::log(std::exp(1.0) - 1.0)));
    }

    const auto letters = [&] {
        std::vector<char> v = mp.mode.absolute;
        v.insert(v.end(), mp.mode.relative.begin(), mp.mode.relative.end());
        return v;
    }();

    for (int64_t l = 0; l < cfg.n_layers; ++l) {
        LayerParams lp;
        const std::string prefix = "layers." + std::to_string(l) + ".";
        for (size_t h = 0; h < letters.size(); ++h) {
            HeadParams hp;
            hp.letter = letters[h];
            const std::string hp_name = prefix + "heads." + std::string(1, hp.letter) + ".";
            hp.wq = &mp.params.add(hp_name + "wq", trunc_normal({d, dh}, kStd, rng));
            hp.wk = &mp.params.add(hp_name + "wk", trunc_normal({d, dh}, kStd, rng));
            hp.wv = &mp.params.add(hp_name + "wv", trunc_normal({d, dh}, kStd, rng));
            const bool absolute = hp.letter == 'p' || hp.letter == 'b' || hp.letter == 't';
            const bool relative = hp.letter == 's' || hp.letter == 'e' || hp.letter == 'l';
            if (absolute) {
                hp.wqa = &mp.params.add(hp_name + "wqa", trunc_normal({dh, dh}, kStd, rng));
                hp.wka = &mp.params.add(hp_name + "wka", trunc_normal({dh, dh}, kStd, rng));
            }
            if (relative) {
                hp.wr = &mp.params.add(hp_name + "wr", trunc_normal({dh, dh}, kStd, rng));
                hp.br = &mp.params.add(hp_name + "br", Tensor::zeros({dh}));
            }
            lp.heads.push_back(hp);
        }
        lp.wo = &mp.params.add(prefix + "wo", trunc_normal({d, d}, kStd, rng));
        lp.bo = &mp.params.add(prefix + "bo", Tensor::zeros({d}));
        lp.ffn_w1 = &mp.params.add(prefix + "ffn_w1", trunc_normal({d, cfg.d_ff}, kStd, rng));
        lp.ffn_b1 = &mp.params.add(prefix + "ffn_b1", Tensor::zeros({cfg.d_ff}));
        lp.ffn_w2 = &mp.params.add(prefix + "ffn_w2", trunc_normal({cfg.d_ff, d}, kStd, rng));
        lp.ffn_b2 = &mp.params.add(prefix + "ffn_b2", Tensor::zeros({d}));
        lp.ln1_g = &mp.params.add(prefix + "ln1_g", Tensor::full({d}, 1.0));
        lp.ln1_b = &mp.params.add(prefix + "ln1_b", Tensor::zeros({d}));
        lp.ln2_g = &mp.params.add(prefix + "ln2_g", Tensor::full({d}, 1.0));
        lp.ln2_b = &mp.params.add(prefix + "ln2_b", Tensor::zeros({d}));
        mp.layers.push_back(lp);
    }
    return mp;
}

void ModelParams::zero_grads() {
    for (Param* p : params.all()) {
        if (p->grad.numel() != p->value.numel()) p->grad.reset(p->value.shape());
        p->grad.fill(0.0);
    }
}

ag::ValuePtr Binding::operator()(Param* p) {
    auto it = cache_.find(p);
    if (it != cache_.end()) return it->second;
    auto node = g_.leaf(p->value, trainable_);
    cache_[p] = node;
    return node;
}

void Binding::collect_grads(ModelParams& mp) {
    mp.zero_grads();
    for (auto& [param, node] : cache_) {
        if (!node->grad_init) continue;
        for (int64_t i = 0; i < param->grad.numel(); ++i) param->grad[i] = node->grad[i];
    }
}

}  // namespace adrrec::model
