#include <doctest.h>

#include <cmath>

#include "core/errors.hpp"
#include "core/graph.hpp"
#include "testutil.hpp"

using namespace adrrec;
using testutil::fd_worst_rel;
using testutil::random_tensor;

namespace {

Tensor ones_like(const Tensor& t) { return Tensor::full(t.shape(), 1.0); }

}  // namespace

TEST_CASE("elementwise forward values") {
    ag::Graph g;
    Tensor a({2, 2}), b({2, 2});
    a[0] = 1; a[1] = 2; a[2] = 3; a[3] = 4;
    b[0] = 5; b[1] = 6; b[2] = 7; b[3] = 8;
    auto pa = g.leaf(a, true), pb = g.leaf(b, true);
    CHECK(ag::add(g, pa, pb)->val[2] == 10.0);
    CHECK(ag::sub(g, pa, pb)->val[0] == -4.0);
    CHECK(ag::mul(g, pa, pb)->val[3] == 32.0);
    CHECK(ag::scale(g, pa, -2.0)->val[1] == -4.0);
    CHECK(ag::add_scaled(g, pa, pb, 0.5)->val[0] == doctest::Approx(3.5));
}

TEST_CASE("matmul against hand computation") {
    ag::Graph g;
    Tensor x({2, 3});
    for (int64_t i = 0; i < 6; ++i) x[i] = static_cast<double>(i + 1);
    Tensor w({3, 2});
    for (int64_t i = 0; i < 6; ++i) w[i] = static_cast<double>(i);
    auto y = ag::matmul_lastdim(g, g.leaf(x, false), g.leaf(w, false));
    // row0 = [1,2,3] @ [[0,1],[2,3],[4,5]] = [16, 22]
    CHECK(y->val.at(0, 0) == doctest::Approx(16.0));
    CHECK(y->val.at(0, 1) == doctest::Approx(22.0));
    CHECK(y->val.at(1, 0) == doctest::Approx(34.0));
}

TEST_CASE("gradient accumulation through shared nodes") {
    // f = sum(x*x + x) => df/dx = 2x + 1
    ag::Graph g;
    Tensor x0({3});
    x0[0] = 1.0; x0[1] = -2.0; x0[2] = 0.5;
    auto x = g.leaf(x0, true);
    auto y = ag::add(g, ag::mul(g, x, x), x);
    auto s = ag::weighted_sum(g, y, ones_like(x0));
    g.backward(s);
    for (int64_t i = 0; i < 3; ++i) CHECK(x->grad[i] == doctest::Approx(2.0 * x0[i] + 1.0));
}

TEST_CASE("finite differences: elementwise and broadcast ops") {
    const Tensor w = random_tensor({2, 3, 4}, 11);
    const Tensor wv = random_tensor({4}, 12);

    CHECK(fd_worst_rel([&](ag::Graph& g, ag::ValuePtr x) {
              return ag::weighted_sum(g, ag::relu(g, x), w);
          }, random_tensor({2, 3, 4}, 1)) < 1e-6);

    CHECK(fd_worst_rel([&](ag::Graph& g, ag::ValuePtr x) {
              auto v = g.leaf(random_tensor({4}, 2), false);
              return ag::weighted_sum(g, ag::add_rowvec(g, x, v), w);
          }, random_tensor({2, 3, 4}, 3)) < 1e-6);

    CHECK(fd_worst_rel([&](ag::Graph& g, ag::ValuePtr x) {
              auto full = ag::mul_rowvec(g, g.leaf(random_tensor({2, 3, 4}, 4), false),
                                         ag::relu(g, x));
              return ag::weighted_sum(g, full, w);
          }, random_tensor({4}, 5)) < 1e-6);

    CHECK(fd_worst_rel([&](ag::Graph& g, ag::ValuePtr x) {
              auto y = g.leaf(random_tensor({3, 4}, 6), false);
              return ag::weighted_sum(g, ag::add_bcast0(g, x, y), w);
          }, random_tensor({2, 3, 4}, 7)) < 1e-6);

    CHECK(fd_worst_rel([&](ag::Graph& g, ag::ValuePtr x) {
              auto y = g.leaf(random_tensor({2, 3, 4}, 8), false);
              return ag::weighted_sum(g, ag::mul(g, x, y), w);
          }, random_tensor({2, 3, 4}, 9)) < 1e-6);

    CHECK(fd_worst_rel([&](ag::Graph& g, ag::ValuePtr x) {
              return ag::weighted_sum(g, ag::mul_rowvec(g, x, g.leaf(wv, false)), w);
          }, random_tensor({2, 3, 4}, 10)) < 1e-6);
}

TEST_CASE("finite differences: matmul family") {
    const Tensor w = random_tensor({2, 3, 5}, 20);
    CHECK(fd_worst_rel([&](ag::Graph& g, ag::ValuePtr x) {
              auto m = g.leaf(random_tensor({4, 5}, 21), false);
              return ag::weighted_sum(g, ag::matmul_lastdim(g, x, m), w);
          }, random_tensor({2, 3, 4}, 22)) < 1e-6);

    CHECK(fd_worst_rel([&](ag::Graph& g, ag::ValuePtr x) {
              auto m = g.leaf(random_tensor({2, 3, 4}, 23), false);
              return ag::weighted_sum(g, ag::matmul_lastdim(g, m, x), w);
          }, random_tensor({4, 5}, 24)) < 1e-6);

    CHECK(fd_worst_rel([&](ag::Graph& g, ag::ValuePtr x) {
              auto m = g.leaf(random_tensor({2, 3, 4}, 25), false);
              return ag::weighted_sum(g, ag::matmul_lastdim_bt(g, m, x), w);
          }, random_tensor({5, 4}, 26)) < 1e-6);
}

TEST_CASE("finite differences: layer norm") {
    const Tensor w = random_tensor({2, 2, 6}, 30);
    CHECK(fd_worst_rel([&](ag::Graph& g, ag::ValuePtr x) {
              auto gain = g.leaf(random_tensor({6}, 31, 0.3), false);
              auto bias = g.leaf(random_tensor({6}, 32, 0.3), false);
              return ag::weighted_sum(g, ag::layer_norm(g, x, gain, bias), w);
          }, random_tensor({2, 2, 6}, 33)) < 1e-5);

    CHECK(fd_worst_rel([&](ag::Graph& g, ag::ValuePtr x) {
              auto in = g.leaf(random_tensor({2, 2, 6}, 34), false);
              auto bias = g.leaf(random_tensor({6}, 35, 0.3), false);
              return ag::weighted_sum(g, ag::layer_norm(g, in, x, bias), w);
          }, random_tensor({6}, 36, 0.5)) < 1e-5);
}

TEST_CASE("finite differences: embedding gather") {
    ITensor ids({2, 3});
    ids.data = {0, 2, 1, 3, 2, 2};
    const Tensor w = random_tensor({2, 3, 4}, 40);
    CHECK(fd_worst_rel([&](ag::Graph& g, ag::ValuePtr x) {
              return ag::weighted_sum(g, ag::embedding(g, x, ids), w);
          }, random_tensor({4, 4}, 41)) < 1e-6);
}

TEST_CASE("finite differences: attention ops") {
    const int64_t b = 2, n = 3, d = 4;
    BTensor allowed({b, n, n});
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j <= i; ++j) allowed.at(bi, i, j) = 1;
    const Tensor w = random_tensor({b, n, d}, 50);
    const Tensor ws = random_tensor({b, n, n}, 51);

    CHECK(fd_worst_rel([&](ag::Graph& g, ag::ValuePtr x) {
              auto k = g.leaf(random_tensor({b, n, d}, 52), false);
              return ag::weighted_sum(g, ag::attn_scores(g, x, k, 0.5), ws);
          }, random_tensor({b, n, d}, 53)) < 1e-6);

    CHECK(fd_worst_rel([&](ag::Graph& g, ag::ValuePtr x) {
              auto q = g.leaf(random_tensor({b, n, d}, 54), false);
              return ag::weighted_sum(g, ag::attn_scores(g, q, x, 0.5), ws);
          }, random_tensor({b, n, d}, 55)) < 1e-6);

    CHECK(fd_worst_rel([&](ag::Graph& g, ag::ValuePtr x) {
              auto s = ag::attn_scores(g, x, x, 0.7);  // shared q/k
              auto sm = ag::masked_softmax(g, s, allowed);
              auto v = g.leaf(random_tensor({b, n, d}, 56), false);
              return ag::weighted_sum(g, ag::attn_apply(g, sm, v), w);
          }, random_tensor({b, n, d}, 57)) < 1e-5);

    CHECK(fd_worst_rel([&](ag::Graph& g, ag::ValuePtr x) {
              auto q = g.leaf(random_tensor({b, n, d}, 58), false);
              return ag::weighted_sum(g, ag::rel_scores(g, q, x, 0.5), ws);
          }, random_tensor({b, n, n, d}, 59)) < 1e-6);

    CHECK(fd_worst_rel([&](ag::Graph& g, ag::ValuePtr x) {
              auto kr = g.leaf(random_tensor({b, n, n, d}, 60), false);
              return ag::weighted_sum(g, ag::rel_scores(g, x, kr, 0.5), ws);
          }, random_tensor({b, n, d}, 61)) < 1e-6);

    CHECK(fd_worst_rel([&](ag::Graph& g, ag::ValuePtr x) {
              auto s = g.leaf(random_tensor({b, n, n}, 62), false);
              return ag::weighted_sum(g, ag::mul_bcast_batch(g, s, x), ws);
          }, random_tensor({n, n}, 63)) < 1e-6);

    CHECK(fd_worst_rel([&](ag::Graph& g, ag::ValuePtr x) {
              auto v = g.leaf(random_tensor({b, n, d}, 64), false);
              auto sm = ag::masked_softmax(g, x, allowed);
              return ag::weighted_sum(g, ag::attn_apply(g, sm, v), w);
          }, random_tensor({b, n, n}, 65)) < 1e-5);
}

TEST_CASE("finite differences: kernel builders") {
    const Tensor targ = random_tensor({2, 3}, 70, 3.0);
    const Tensor w4 = random_tensor({2, 3, 4}, 71);

    CHECK(fd_worst_rel([&](ag::Graph& g, ag::ValuePtr x) {
              auto b = g.leaf(random_tensor({2}, 72), false);
              return ag::weighted_sum(g, ag::bochner(g, targ, x, b), w4);
          }, random_tensor({2}, 73)) < 1e-5);

    CHECK(fd_worst_rel([&](ag::Graph& g, ag::ValuePtr x) {
              auto w = g.leaf(random_tensor({2}, 74), false);
              return ag::weighted_sum(g, ag::bochner(g, targ, w, x), w4);
          }, random_tensor({2}, 75)) < 1e-5);

    const Tensor wg = random_tensor({5, 5}, 76);
    CHECK(fd_worst_rel([&](ag::Graph& g, ag::ValuePtr x) {
              auto sraw = g.leaf(Tensor::full({1}, 0.8), false);
              return ag::weighted_sum(g, ag::gaussian_weights(g, x, sraw, 5), wg);
          }, random_tensor({1}, 77)) < 1e-6);

    CHECK(fd_worst_rel([&](ag::Graph& g, ag::ValuePtr x) {
              auto mu = g.leaf(Tensor::full({1}, 0.3), false);
              return ag::weighted_sum(g, ag::gaussian_weights(g, mu, x, 5), wg);
          }, random_tensor({1}, 78)) < 1e-6);

    const Tensor eps = random_tensor({3, 4}, 79);
    const Tensor wab = random_tensor({3, 4}, 80);
    CHECK(fd_worst_rel([&](ag::Graph& g, ag::ValuePtr x) {
              auto mu = g.leaf(random_tensor({3, 4}, 81), false);
              return ag::weighted_sum(g, ag::abs_perturb(g, mu, x, eps), wab);
          }, random_tensor({3, 4}, 82)) < 1e-5);
}

TEST_CASE("finite differences: losses") {
    ITensor targets({2, 3});
    targets.data = {1, 2, 3, 4, 1, 2};
    BTensor mask({2, 3});
    mask.data = {0, 1, 1, 1, 1, 1};

    CHECK(fd_worst_rel([&](ag::Graph& g, ag::ValuePtr x) {
              return ag::cross_entropy_masked(g, x, targets, mask);
          }, random_tensor({2, 3, 5}, 90)) < 1e-6);

    CHECK(fd_worst_rel([&](ag::Graph& g, ag::ValuePtr x) {
              return ag::masked_sq_mean(g, x, mask, 0.2);
          }, random_tensor({2, 3, 4}, 91)) < 1e-6);
}

TEST_CASE("cross entropy ignores the pad column and masked rows") {
    ITensor targets({1, 2});
    targets.data = {0, 2};
    BTensor mask({1, 2});
    mask.data = {0, 1};
    Tensor logits({1, 2, 4});
    logits.fill(0.0);

    ag::Graph g;
    auto base = ag::cross_entropy_masked(g, g.leaf(logits, false), targets, mask);
    // uniform over 3 real items -> ln 3
    CHECK(base->val[0] == doctest::Approx(std::log(3.0)).epsilon(1e-12));

    logits.at(0, 0, 1) = 100.0;   // masked row: must not matter
    logits.at(0, 1, 0) = 1000.0;  // pad column: must not matter
    ag::Graph g2;
    auto same = ag::cross_entropy_masked(g2, g2.leaf(logits, false), targets, mask);
    CHECK(same->val[0] == base->val[0]);
}

TEST_CASE("masked softmax rejects a row with no allowed keys") {
    ag::Graph g;
    BTensor allowed({1, 2, 2});
    allowed.at(0, 0, 0) = 1;  // row 1 has no keys
    auto s = g.leaf(Tensor::zeros({1, 2, 2}), false);
    CHECK_THROWS_AS(ag::masked_softmax(g, s, allowed), InvariantError);
}
