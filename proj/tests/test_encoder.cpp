#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "core/errors.hpp"
#include "encoder/model.hpp"
#include "testutil.hpp"
#include "training/trainer.hpp"

using namespace adrrec;
using namespace adrrec::model;
using testutil::random_tensor;
using testutil::tiny_batch;
using testutil::tiny_config;

namespace {

// SASRec-style single-head block chain, built op by op as an independent
// reference for the encoder wiring.
Tensor plain_forward(ModelParams& mp, const corpus::SequenceBatch& batch) {
    ag::Graph g;
    Binding bind(g, false);
    const int64_t dh = mp.cfg.d_model;  // single head
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const BTensor allowed = attention_mask(batch.pad_mask);

    auto emb = ag::embedding(g, bind(mp.item_table), batch.items);
    auto x = ag::add_rowvec(g, ag::matmul_lastdim(g, emb, bind(mp.in_mu_w)), bind(mp.in_mu_b));
    for (const auto& lp : mp.layers) {
        const auto& hp = lp.heads[0];
        auto q = ag::matmul_lastdim(g, x, bind(hp.wq));
        auto k = ag::matmul_lastdim(g, x, bind(hp.wk));
        auto v = ag::matmul_lastdim(g, x, bind(hp.wv));
        auto w = ag::masked_softmax(g, ag::attn_scores(g, q, k, scale), allowed);
        auto head = ag::attn_apply(g, w, v);
        auto o = ag::add_rowvec(g, ag::matmul_lastdim(g, head, bind(lp.wo)), bind(lp.bo));
        auto h = ag::layer_norm(g, ag::add(g, x, o), bind(lp.ln1_g), bind(lp.ln1_b));
        auto f = ag::add_rowvec(g, ag::matmul_lastdim(g, h, bind(lp.ffn_w1)), bind(lp.ffn_b1));
        f = ag::relu(g, f);
        f = ag::add_rowvec(g, ag::matmul_lastdim(g, f, bind(lp.ffn_w2)), bind(lp.ffn_b2));
        x = ag::layer_norm(g, ag::add(g, h, f), bind(lp.ln2_g), bind(lp.ln2_b));
    }
    return x->val;
}

Tensor forward_hidden(ModelParams& mp, const corpus::SequenceBatch& batch, int64_t t_min) {
    ag::Graph g;
    Binding bind(g, false);
    auto enc = encoder_forward(g, bind, mp, batch, t_min);
    return enc.hidden->val;
}

bool bits_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (int64_t i = 0; i < a.numel(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

}  // namespace

TEST_CASE("attention mask: causal, pads excluded, self always allowed") {
    BTensor pad({1, 4});
    pad.at(0, 0) = 0;
    pad.at(0, 1) = 0;
    pad.at(0, 2) = 1;
    pad.at(0, 3) = 1;
    auto allowed = attention_mask(pad);
    CHECK(allowed.at(0, 0, 0) == 1);
    CHECK(allowed.at(0, 1, 0) == 0);
    CHECK(allowed.at(0, 1, 1) == 1);
    CHECK(allowed.at(0, 2, 2) == 1);
    CHECK(allowed.at(0, 3, 2) == 1);
    CHECK(allowed.at(0, 3, 3) == 1);
    CHECK(allowed.at(0, 3, 1) == 0);  // pad key
    CHECK(allowed.at(0, 2, 3) == 0);  // future key
}

TEST_CASE("masked softmax spec cases") {
    ag::Graph g;
    const int64_t n = 2;
    BTensor allowed({1, n, n});
    allowed.at(0, 0, 0) = 1;
    allowed.at(0, 1, 0) = 1;
    allowed.at(0, 1, 1) = 1;

    SUBCASE("zero logits give uniform weights over allowed keys") {
        auto s = g.leaf(Tensor::zeros({1, n, n}), false);
        auto w = ag::masked_softmax(g, s, allowed);
        CHECK(w->val.at(0, 0, 0) == doctest::Approx(1.0));
        CHECK(w->val.at(0, 0, 1) == doctest::Approx(0.0));
        CHECK(w->val.at(0, 1, 0) == doctest::Approx(0.5));
        CHECK(w->val.at(0, 1, 1) == doctest::Approx(0.5));
    }
    SUBCASE("logits [0, ln 3] give weights [0.25, 0.75]") {
        Tensor s({1, n, n});
        s.at(0, 1, 0) = 0.0;
        s.at(0, 1, 1) = std::log(3.0);
        auto w = ag::masked_softmax(g, g.leaf(s, false), allowed);
        CHECK(w->val.at(0, 1, 0) == doctest::Approx(0.25));
        CHECK(w->val.at(0, 1, 1) == doctest::Approx(0.75));
    }
    SUBCASE("single allowed key returns that value row exactly") {
        auto w = ag::masked_softmax(g, g.leaf(random_tensor({1, n, n}, 3), false), allowed);
        auto v = g.leaf(random_tensor({1, n, 3}, 4), false);
        auto out = ag::attn_apply(g, w, v);
        for (int64_t j = 0; j < 3; ++j) CHECK(out->val.at(0, 0, j) == v->val.at(0, 0, j));
    }
}

TEST_CASE("relative head algebra at the op level") {
    ag::Graph g;
    const int64_t b = 1, n = 1, d = 3;
    BTensor allowed({b, n, n});
    allowed.at(0, 0, 0) = 1;
    auto q = g.leaf(random_tensor({b, n, d}, 5), false);
    auto v = g.leaf(random_tensor({b, n, d}, 6), false);

    SUBCASE("self-only mask doubles the value row") {
        auto w1 = ag::masked_softmax(g, ag::attn_scores(g, q, q, 0.5), allowed);
        auto t1 = ag::attn_apply(g, w1, v);
        auto kr = g.leaf(random_tensor({b, n, n, d}, 7), false);
        auto w2 = ag::masked_softmax(g, ag::rel_scores(g, q, kr, 0.5), allowed);
        auto t2 = ag::attn_apply(g, w2, v);
        auto head = ag::add(g, t1, t2);
        for (int64_t j = 0; j < d; ++j)
            CHECK(head->val.at(0, 0, j) == doctest::Approx(2.0 * v->val.at(0, 0, j)));
    }
    SUBCASE("zero relative keys make the second term a causal mean") {
        const int64_t nn = 3;
        BTensor mask({1, nn, nn});
        for (int64_t i = 0; i < nn; ++i)
            for (int64_t j = 0; j <= i; ++j) mask.at(0, i, j) = 1;
        auto q3 = g.leaf(random_tensor({1, nn, d}, 8), false);
        auto v3 = g.leaf(random_tensor({1, nn, d}, 9), false);
        auto kr0 = g.leaf(Tensor::zeros({1, nn, nn, d}), false);
        auto w2 = ag::masked_softmax(g, ag::rel_scores(g, q3, kr0, 0.5), mask);
        auto t2 = ag::attn_apply(g, w2, v3);
        for (int64_t i = 0; i < nn; ++i)
            for (int64_t j = 0; j < d; ++j) {
                double mean = 0.0;
                for (int64_t k = 0; k <= i; ++k) mean += v3->val.at(0, k, j);
                mean /= static_cast<double>(i + 1);
                CHECK(t2->val.at(0, i, j) == doctest::Approx(mean));
            }
    }
}

TEST_CASE("absolute head reduces to a plain block when the kernel is zero") {
    auto mc = tiny_config("p", 8);
    auto mp = ModelParams::init(mc, 3);
    mp.pos_table->value.fill(0.0);
    auto batch = tiny_batch();
    auto mixed = forward_hidden(mp, batch, 978307200);
    auto plain = plain_forward(mp, batch);
    CHECK(bits_equal(mixed, plain));
}

TEST_CASE("distance head recovers the plain block as sigma grows") {
    auto mc = tiny_config("r", 8);
    auto mp = ModelParams::init(mc, 3);
    mp.gauss_sigma_raw->value[0] = 1e6;  // softplus(raw) ~ 1e6
    mp.gauss_mu->value[0] = 0.0;
    auto batch = tiny_batch();
    auto dist = forward_hidden(mp, batch, 978307200);
    auto plain = plain_forward(mp, batch);
    REQUIRE(dist.same_shape(plain));
    for (int64_t i = 0; i < dist.numel(); ++i)
        CHECK(dist[i] == doctest::Approx(plain[i]).epsilon(1e-6));
}

TEST_CASE("multiplying logits by an all-ones matrix changes nothing") {
    ag::Graph g;
    auto s = g.leaf(random_tensor({2, 3, 3}, 10), false);
    auto ones = g.leaf(Tensor::full({3, 3}, 1.0), false);
    auto out = ag::mul_bcast_batch(g, s, ones);
    CHECK(bits_equal(out->val, s->val));
}

TEST_CASE("encoder causality is exact") {
    auto mc = tiny_config("p-b-s-l-r-o", 10);
    auto mp = ModelParams::init(mc, 11);
    auto batch = tiny_batch();
    auto base = forward_hidden(mp, batch, 978307200);

    auto mutated = batch;
    mutated.items.at(0, 3) = 9;
    mutated.times.at(0, 3) += 60;
    auto changed = forward_hidden(mp, mutated, 978307200);
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t j = 0; j < mc.d_model; ++j)
            CHECK(changed.at(0, i, j) == base.at(0, i, j));
    for (int64_t i = 0; i < 4; ++i)
        for (int64_t j = 0; j < mc.d_model; ++j)
            CHECK(changed.at(1, i, j) == base.at(1, i, j));
    bool moved = false;
    for (int64_t j = 0; j < mc.d_model; ++j)
        moved = moved || changed.at(0, 3, j) != base.at(0, 3, j);
    CHECK(moved);
}

TEST_CASE("pad positions cannot influence real outputs") {
    auto mc = tiny_config("p-b-s-l-r-o", 10);
    auto mp = ModelParams::init(mc, 12);
    auto batch = tiny_batch();
    REQUIRE(batch.pad_mask.at(0, 0) == 0);
    auto base = forward_hidden(mp, batch, 978307200);

    auto mutated = batch;
    mutated.items.at(0, 0) = 7;
    mutated.times.at(0, 0) += 1200;
    auto changed = forward_hidden(mp, mutated, 978307200);
    for (int64_t i = 1; i < 4; ++i)
        for (int64_t j = 0; j < mc.d_model; ++j)
            CHECK(changed.at(0, i, j) == base.at(0, i, j));
}

TEST_CASE("zero noise input is the identity") {
    auto mc = tiny_config("p-s", 8);
    auto mp = ModelParams::init(mc, 13);
    auto batch = tiny_batch();
    auto clean = forward_hidden(mp, batch, 978307200);

    ag::Graph g;
    Binding bind(g, false);
    auto zero = g.constant(Tensor::zeros({2, 4, 8}));
    auto noisy = encoder_forward(g, bind, mp, batch, 978307200, nullptr, zero);
    CHECK(bits_equal(noisy.hidden->val, clean));

    ag::Graph g2;
    Binding bind2(g2, false);
    auto bump = g2.constant(Tensor::full({2, 4, 8}, 0.1));
    auto moved = encoder_forward(g2, bind2, mp, batch, 978307200, nullptr, bump);
    CHECK_FALSE(bits_equal(moved.hidden->val, clean));
}

TEST_CASE("forward is deterministic with dropout off") {
    auto mc = tiny_config("p-b-s-l-r-o", 10);
    auto mp = ModelParams::init(mc, 14);
    auto batch = tiny_batch();
    CHECK(bits_equal(forward_hidden(mp, batch, 978307200),
                     forward_hidden(mp, batch, 978307200)));
}

TEST_CASE("shape and head-count contracts across modes") {
    auto batch = tiny_batch();
    for (const auto& [mode, d] : std::vector<std::pair<std::string, int64_t>>{
             {"p", 8}, {"p-s", 8}, {"b-e-r", 12}, {"p-b-s-l-r-o", 10}, {"t", 8}}) {
        auto mc = tiny_config(mode, d);
        auto mp = ModelParams::init(mc, 15);
        CHECK(mp.layers[0].heads.size() ==
              static_cast<size_t>(kernels::parse_mode(mode).n_heads()));
        ag::Graph g;
        Binding bind(g, false);
        auto enc = encoder_forward(g, bind, mp, batch, 978307200, nullptr, nullptr, true);
        CHECK(enc.hidden->val.shape() == std::vector<int64_t>{2, 4, d});
        CHECK(enc.taps.size() == 2);
        CHECK(enc.attn.size() == 2);
        CHECK(enc.attn[0].size() == static_cast<size_t>(kernels::parse_mode(mode).n_heads()));
    }
}

TEST_CASE("attention rows sum to one over allowed keys") {
    auto mc = tiny_config("p-b-s-l-r-o", 10);
    auto mp = ModelParams::init(mc, 16);
    auto batch = tiny_batch();
    ag::Graph g;
    Binding bind(g, false);
    auto enc = encoder_forward(g, bind, mp, batch, 978307200, nullptr, nullptr, true);
    for (const auto& layer : enc.attn)
        for (const auto& head : layer) {
            const Tensor& w = head->val;
            for (int64_t b = 0; b < w.dim(0); ++b)
                for (int64_t i = 0; i < w.dim(1); ++i) {
                    double sum = 0.0;
                    for (int64_t j = 0; j < w.dim(2); ++j) sum += w.at(b, i, j);
                    CHECK(std::abs(sum - 1.0) < 1e-6);
                }
        }
}

TEST_CASE("calendar head ignores timestamps beyond its units") {
    auto mc = tiny_config("t", 8);
    mc.time_units = {kernels::TimeUnit::Month, kernels::TimeUnit::Weekday};
    auto mp = ModelParams::init(mc, 17);
    auto batch = tiny_batch();
    auto base = forward_hidden(mp, batch, 978307200);

    // One week keeps both month and weekday, so nothing may change.
    auto shifted = batch;
    shifted.times.at(0, 2) += 7 * 86400;
    CHECK(bits_equal(forward_hidden(mp, shifted, 978307200), base));

    // With unit scales zeroed the embedding is just the biases: even a month
    // change does nothing.
    for (auto& up : mp.cal_units) up.w->value.fill(0.0);
    auto scale_free = forward_hidden(mp, batch, 978307200);
    auto other_month = batch;
    other_month.times.at(0, 2) += 40 * 86400;
    CHECK(bits_equal(forward_hidden(mp, other_month, 978307200), scale_free));
}

TEST_CASE("predict_scores is a weight-tied readout with pad at -inf") {
    auto mc = tiny_config("p", 4, /*n_items=*/3);
    auto mp = ModelParams::init(mc, 18);
    mp.item_table->value.fill(0.0);
    for (int64_t v = 1; v <= 3; ++v) mp.item_table->value.at(v, v - 1) = 1.0;

    ag::Graph g;
    Binding bind(g, false);
    Tensor hidden({1, 1, 4});
    hidden.at(0, 0, 1) = 1.0;  // matches item 2's table row
    auto scores = predict_scores(g, bind, mp, g.constant(hidden));
    CHECK(scores->val.shape() == std::vector<int64_t>{1, 1, 4});
    CHECK(scores->val.at(0, 0, 0) == -std::numeric_limits<double>::infinity());
    CHECK(scores->val.at(0, 0, 2) == doctest::Approx(1.0));
    CHECK(scores->val.at(0, 0, 1) == doctest::Approx(0.0));
    int64_t argmax = 1;
    for (int64_t v = 2; v <= 3; ++v)
        if (scores->val.at(0, 0, v) > scores->val.at(0, 0, argmax)) argmax = v;
    CHECK(argmax == 2);

    ag::Graph g2;
    Binding bind2(g2, false);
    auto zero = predict_scores(g2, bind2, mp, g2.constant(Tensor::zeros({1, 1, 4})));
    for (int64_t v = 1; v <= 3; ++v) CHECK(zero->val.at(0, 0, v) == 0.0);
}

TEST_CASE("learnable positions past the table are a bounds error") {
    auto mc = tiny_config("p", 8, 10, /*max_len=*/4);
    auto mp = ModelParams::init(mc, 19);
    corpus::SequenceBatch batch = testutil::make_batch(
        {{1, 2, 3, 4, 5, 6}},
        {{10, 20, 30, 40, 50, 60}},
        {{2, 3, 4, 5, 6, 7}});
    ag::Graph g;
    Binding bind(g, false);
    CHECK_THROWS_AS(encoder_forward(g, bind, mp, batch, 0), DataError);
}

TEST_CASE("mode/width validation") {
    CHECK_THROWS_AS(tiny_config("p-b-s-l-r-o", 8).parsed_mode(), ConfigError);  // 5 heads
    CHECK_THROWS_AS(tiny_config("p-s", 6).parsed_mode(), ConfigError);  // odd head width
    auto bad_t = tiny_config("t", 2);
    CHECK_THROWS_AS(bad_t.parsed_mode(), ConfigError);  // 4 units in width 2
    CHECK(tiny_config("p-b-s-l-r-o", 10).d_head() == 2);
}

TEST_CASE("gradient check across mode families") {
    using training::gradcheck_model;
    noisereg::LnsrConfig lnsr_cfg;
    auto batch = tiny_batch();
    for (const auto& [mode, d] : std::vector<std::pair<std::string, int64_t>>{
             {"p", 8}, {"p-s", 8}, {"b-e-r", 12}, {"t", 8}}) {
        auto mc = tiny_config(mode, d);
        auto mp = ModelParams::init(mc, 23);
        auto res = gradcheck_model(mp, batch, 978307200, /*lambda=*/0.0, lnsr_cfg, 1);
        INFO(mode, " worst ", res.worst_rel, " at ", res.worst_param);
        CHECK(res.pass);
    }
}

TEST_CASE("checkpoint round trip is bit-exact") {
    auto mc = tiny_config("p-b-s-l-r-o", 10);
    auto mp = ModelParams::init(mc, 20);
    const std::string p1 = "/tmp/adrrec_ckpt1.adrk", p2 = "/tmp/adrrec_ckpt2.adrk";
    save_checkpoint(mp, p1);
    auto loaded = load_checkpoint(p1);
    CHECK(loaded.cfg.mode == mc.mode);
    CHECK(loaded.cfg.tau_seconds == mc.tau_seconds);
    auto params = mp.params.all();
    auto lparams = loaded.params.all();
    REQUIRE(params.size() == lparams.size());
    for (size_t i = 0; i < params.size(); ++i) {
        CHECK(params[i]->name == lparams[i]->name);
        CHECK(bits_equal(params[i]->value, lparams[i]->value));
    }
    save_checkpoint(loaded, p2);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);

    CHECK_THROWS_AS(load_checkpoint("/nonexistent.adrk"), DataError);
}
