#include <cmath>
#include <limits>

#include "core/errors.hpp"
#include "encoder/model.hpp"

namespace adrrec::model {

using ag::ValuePtr;

BTensor attention_mask(const BTensor& pad_mask) {
    const int64_t b = pad_mask.dim(0), n = pad_mask.dim(1);
    BTensor allowed({b, n, n});
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j <= i; ++j)
                allowed.at(bi, i, j) = (pad_mask.at(bi, j) || j == i) ? 1 : 0;
    return allowed;
}

DropoutPlan make_dropout_plan(const ModelConfig& cfg, int64_t batch, double rate,
                              RngStream& rng) {
    DropoutPlan plan;
    if (rate <= 0.0) return plan;
    if (rate >= 1.0) throw ConfigError("dropout rate must be in [0, 1)");
    const double keep = 1.0 - rate;
    const int64_t count = 1 + 2 * cfg.n_layers;
    for (int64_t k = 0; k < count; ++k) {
        Tensor m({batch, cfg.max_len, cfg.d_model});
        for (int64_t i = 0; i < m.numel(); ++i) m[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
        plan.masks.push_back(std::move(m));
    }
    return plan;
}

namespace {

// Readout helper: copy of x with column 0 forced to -inf (pad item).
ValuePtr pad_col_neg_inf(ag::Graph& g, ValuePtr x) {
    const int64_t c = x->val.dim(x->val.rank() - 1);
    const int64_t rows = x->val.numel() / c;
    Tensor out = x->val;
    for (int64_t r = 0; r < rows; ++r)
        out[r * c] = -std::numeric_limits<double>::infinity();
    auto node = g.make(std::move(out), {x});
    if (node->requires_grad) {
        ag::Node* self = node.get();
        ag::Node* px = x.get();
        node->backward = [self, px, rows, c] {
            Tensor& gx = px->grad_ref();
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t j = 1; j < c; ++j) gx[r * c + j] += self->grad[r * c + j];
        };
    }
    return node;
}

struct KernelNodes {
    ValuePtr pos;      // [N, dh]
    ValuePtr boch;     // [B, N, dh]
    ValuePtr cal;      // [B, N, dh]
    ValuePtr sin_raw;  // [B, N, N, dh]
    ValuePtr exp_raw;
    ValuePtr log_raw;
    ValuePtr gauss;    // [N, N]
};

KernelNodes build_kernels(ag::Graph& g, Binding& bind, const ModelParams& mp,
                          const corpus::SequenceBatch& batch, int64_t t_min) {
    KernelNodes kn;
    const auto& cfg = mp.cfg;
    const int64_t b = batch.items.dim(0), n = batch.items.dim(1);
    const int64_t dh = cfg.d_model / mp.mode.n_heads();

    if (mp.mode.has('p')) {
        if (cfg.pos_kind == PosKind::Learnable) {
            if (n > cfg.max_len)
                throw DataError("sequence length " + std::to_string(n) +
                                " exceeds positional table " + std::to_string(cfg.max_len));
            ITensor pos_ids({n});
            for (int64_t i = 0; i < n; ++i) pos_ids.data[static_cast<size_t>(i)] = i;
            kn.pos = ag::embedding(g, bind(mp.pos_table), pos_ids);
        } else {
            kn.pos = g.constant(kernels::fixed_positional(n, dh, cfg.freq_base));
        }
    }

    if (mp.mode.has('b')) {
        Tensor tprime({b, n});
        for (int64_t bi = 0; bi < b; ++bi)
            for (int64_t i = 0; i < n; ++i)
                tprime.at(bi, i) = static_cast<double>(batch.times.at(bi, i) - t_min);
        kn.boch = ag::bochner(g, tprime, bind(mp.boch_w), bind(mp.boch_b));
    }

    if (mp.mode.has('t')) {
        std::vector<ValuePtr> parts;
        for (const auto& up : mp.cal_units) {
            ITensor ids({b, n});
            for (int64_t bi = 0; bi < b; ++bi)
                for (int64_t i = 0; i < n; ++i) {
                    const auto civ = kernels::civil_from_unix(batch.times.at(bi, i));
                    ids.at(bi, i) =
                        kernels::unit_index(up.unit, civ, cfg.epoch_year, cfg.n_years);
                }
            auto rows = ag::embedding(g, bind(up.table), ids);
            parts.push_back(
                ag::add_rowvec(g, ag::mul_rowvec(g, rows, bind(up.w)), bind(up.b)));
        }
        kn.cal = ag::concat_lastdim(g, parts);
    }

    const bool need_diff = mp.mode.has('s') || mp.mode.has('e') || mp.mode.has('l');
    if (need_diff) {
        const Tensor d = kernels::time_diff_batch(batch.times, cfg.tau_seconds);
        const auto ladder = kernels::freq_ladder(dh, cfg.freq_base);
        if (mp.mode.has('s'))
            kn.sin_raw = ag::sinusoid_kernel(g, d, bind(mp.sin_w), bind(mp.sin_b));
        if (mp.mode.has('e')) kn.exp_raw = g.constant(kernels::exp_diff_kernel(d, ladder));
        if (mp.mode.has('l')) kn.log_raw = g.constant(kernels::log1p_diff_kernel(d, ladder));
    }

    if (mp.mode.has('r'))
        kn.gauss = ag::gaussian_weights(g, bind(mp.gauss_mu), bind(mp.gauss_sigma_raw), n);
    return kn;
}

}  // namespace

EncoderOutput encoder_forward(ag::Graph& g, Binding& bind, const ModelParams& mp,
                              const corpus::SequenceBatch& batch, int64_t t_min,
                              const DropoutPlan* dropout, ValuePtr noise_input,
                              bool want_attn) {
    const auto& cfg = mp.cfg;
    const int64_t dh = cfg.d_model / mp.mode.n_heads();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const BTensor allowed = attention_mask(batch.pad_mask);

    auto emb = ag::embedding(g, bind(mp.item_table), batch.items);
    auto x = ag::add_rowvec(g, ag::matmul_lastdim(g, emb, bind(mp.in_mu_w)), bind(mp.in_mu_b));
    if (noise_input) x = ag::add(g, x, noise_input);
    if (dropout && !dropout->masks.empty()) x = ag::mul_mask(g, x, dropout->masks[0]);

    const KernelNodes kn = build_kernels(g, bind, mp, batch, t_min);

    EncoderOutput out;
    for (size_t l = 0; l < mp.layers.size(); ++l) {
        const auto& lp = mp.layers[l];
        std::vector<ValuePtr> head_outs;
        std::vector<ValuePtr> head_attn;
        for (const auto& hp : lp.heads) {
            auto q = ag::matmul_lastdim(g, x, bind(hp.wq));
            auto k = ag::matmul_lastdim(g, x, bind(hp.wk));
            auto v = ag::matmul_lastdim(g, x, bind(hp.wv));
            ValuePtr head;
            ValuePtr weights;
            switch (hp.letter) {
                case 'p':
                case 'b':
                case 't': {
                    ValuePtr a = hp.letter == 'p' ? kn.pos : (hp.letter == 'b' ? kn.boch : kn.cal);
                    auto qa = ag::matmul_lastdim(g, a, bind(hp.wqa));
                    auto ka = ag::matmul_lastdim(g, a, bind(hp.wka));
                    // Positional kernels are [N, dh] and broadcast over the batch.
                    auto qh = a->val.rank() == 2 ? ag::add_bcast0(g, q, qa) : ag::add(g, q, qa);
                    auto kh = a->val.rank() == 2 ? ag::add_bcast0(g, k, ka) : ag::add(g, k, ka);
                    weights =
                        ag::masked_softmax(g, ag::attn_scores(g, qh, kh, scale), allowed);
                    head = ag::attn_apply(g, weights, v);
                    break;
                }
                case 's':
                case 'e':
                case 'l': {
                    ValuePtr raw = hp.letter == 's' ? kn.sin_raw
                                                    : (hp.letter == 'e' ? kn.exp_raw : kn.log_raw);
                    auto w1 = ag::masked_softmax(g, ag::attn_scores(g, q, k, scale), allowed);
                    auto term1 = ag::attn_apply(g, w1, v);
                    auto kr = ag::matmul_lastdim(g, raw, bind(hp.wr));
                    auto qb = ag::add_rowvec(g, q, bind(hp.br));
                    auto w2 = ag::masked_softmax(g, ag::rel_scores(g, qb, kr, scale), allowed);
                    auto term2 = ag::attn_apply(g, w2, v);
                    head = ag::add(g, term1, term2);
                    weights = w1;
                    break;
                }
                case 'r': {
                    auto s = ag::mul_bcast_batch(g, ag::attn_scores(g, q, k, scale), kn.gauss);
                    weights = ag::masked_softmax(g, s, allowed);
                    head = ag::attn_apply(g, weights, v);
                    break;
                }
                default:
                    throw InvariantError("unknown head letter");
            }
            head_outs.push_back(head);
            if (want_attn) head_attn.push_back(weights);
        }
        auto cat = head_outs.size() == 1 ? head_outs[0] : ag::concat_lastdim(g, head_outs);
        auto o = ag::add_rowvec(g, ag::matmul_lastdim(g, cat, bind(lp.wo)), bind(lp.bo));
        if (dropout && !dropout->masks.empty())
            o = ag::mul_mask(g, o, dropout->masks[1 + 2 * l]);
        auto h = ag::layer_norm(g, ag::add(g, x, o), bind(lp.ln1_g), bind(lp.ln1_b));
        auto f = ag::add_rowvec(g, ag::matmul_lastdim(g, h, bind(lp.ffn_w1)), bind(lp.ffn_b1));
        f = ag::relu(g, f);
        f = ag::add_rowvec(g, ag::matmul_lastdim(g, f, bind(lp.ffn_w2)), bind(lp.ffn_b2));
        if (dropout && !dropout->masks.empty())
            f = ag::mul_mask(g, f, dropout->masks[2 + 2 * l]);
        x = ag::layer_norm(g, ag::add(g, h, f), bind(lp.ln2_g), bind(lp.ln2_b));
        out.taps.push_back(x);
        if (want_attn) out.attn.push_back(std::move(head_attn));
    }
    out.hidden = x;
    return out;
}

ValuePtr predict_scores(ag::Graph& g, Binding& bind, const ModelParams& mp, ValuePtr hidden) {
    auto logits = ag::matmul_lastdim_bt(g, hidden, bind(mp.item_table));
    return pad_col_neg_inf(g, logits);
}

}  // namespace adrrec::model
