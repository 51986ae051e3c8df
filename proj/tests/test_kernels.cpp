#include <doctest.h>

#include <cmath>

#include "core/errors.hpp"
#include "core/graph.hpp"
#include "kernels/kernels.hpp"
#include "testutil.hpp"

using namespace adrrec;
using namespace adrrec::kernels;

TEST_CASE("parse_mode classifies letters") {
    auto full = parse_mode("p-b-s-l-r-o");
    CHECK(full.absolute == std::vector<char>{'p', 'b'});
    CHECK(full.relative == std::vector<char>{'s', 'l', 'r'});
    CHECK(full.noise_enabled);
    CHECK(full.n_heads() == 5);

    auto robust = parse_mode("p-s-l-e");
    CHECK(robust.absolute == std::vector<char>{'p'});
    CHECK(robust.relative == std::vector<char>{'s', 'e', 'l'});
    CHECK_FALSE(robust.noise_enabled);
    CHECK(robust.n_heads() == 4);

    auto degenerate = parse_mode("p");
    CHECK(degenerate.absolute == std::vector<char>{'p'});
    CHECK(degenerate.relative.empty());
    CHECK_FALSE(degenerate.noise_enabled);
    CHECK(degenerate.n_heads() == 1);
}

TEST_CASE("parse_mode errors") {
    CHECK_THROWS_AS(parse_mode("x-y"), ConfigError);
    CHECK_THROWS_AS(parse_mode("p-p"), ConfigError);
    CHECK_THROWS_AS(parse_mode(""), ConfigError);
    CHECK_THROWS_AS(parse_mode("o"), ConfigError);  // no kernel letters
    CHECK_THROWS_AS(parse_mode("p--s"), ConfigError);
    CHECK_THROWS_AS(parse_mode("ps"), ConfigError);
}

TEST_CASE("parse_mode is order-insensitive with a canonical form") {
    auto a = parse_mode("o-r-l-s-b-p");
    auto b = parse_mode("p-b-s-l-r-o");
    CHECK(a == b);
    CHECK(a.to_string() == "p-b-s-l-r-o");
    // Bijection: canonical string -> mode -> same string, for a sample of
    // legal letter sets.
    for (const char* m : {"p", "t", "b-e", "p-s-l-e", "p-b-t-s-e-l-r-o", "r-o", "s"}) {
        auto parsed = parse_mode(m);
        auto again = parse_mode(parsed.to_string());
        CHECK(parsed == again);
    }
    CHECK(parse_mode("e-b").to_string() == "b-e");
}

TEST_CASE("fixed positional encoding") {
    auto t = fixed_positional(3, 4);
    // position 0 -> [sin 0, cos 0, ...] = [0, 1, 0, 1]
    CHECK(t.at(0, 0) == doctest::Approx(0.0));
    CHECK(t.at(0, 1) == doctest::Approx(1.0));
    CHECK(t.at(0, 2) == doctest::Approx(0.0));
    CHECK(t.at(0, 3) == doctest::Approx(1.0));

    auto t2 = fixed_positional(2, 2);
    CHECK(t2.at(1, 0) == doctest::Approx(std::sin(1.0)).epsilon(1e-9));  // 0.8415
    CHECK(t2.at(1, 1) == doctest::Approx(std::cos(1.0)).epsilon(1e-9));  // 0.5403
}

TEST_CASE("learnable positional lookup returns identical rows for one index") {
    ag::Graph g;
    auto table = g.leaf(testutil::random_tensor({8, 4}, 5), false);
    ITensor ids({2});
    ids.data = {3, 3};
    auto rows = ag::embedding(g, table, ids);
    for (int64_t j = 0; j < 4; ++j) CHECK(rows->val.at(0, j) == rows->val.at(1, j));
}

TEST_CASE("time_diff_matrix") {
    auto d = time_diff_matrix({0, 60, 180}, 60.0);
    const double want[3][3] = {{0, -1, -3}, {1, 0, -2}, {3, 2, 0}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(d.at(i, j) == doctest::Approx(want[i][j]));

    auto z = time_diff_matrix({7, 7, 7, 7}, 3.0);
    for (int64_t i = 0; i < z.numel(); ++i) CHECK(z[i] == 0.0);

    // antisymmetry on random stamps
    RngStream rng(11);
    std::vector<int64_t> ts;
    for (int i = 0; i < 6; ++i) ts.push_back(static_cast<int64_t>(rng.bounded(100000)));
    auto r = time_diff_matrix(ts, 17.0);
    for (int i = 0; i < 6; ++i) {
        CHECK(r.at(i, i) == 0.0);
        for (int j = 0; j < 6; ++j) CHECK(r.at(i, j) == doctest::Approx(-r.at(j, i)));
    }
    CHECK_THROWS_AS(time_diff_matrix({1, 2}, 0.0), ConfigError);
}

TEST_CASE("bochner embedding closed forms") {
    ag::Graph g;
    Tensor w({1}), b({1});

    SUBCASE("zero argument") {
        w[0] = 0.3;
        b[0] = 0.0;
        Tensor tprime({1, 1});
        tprime[0] = 0.0;  // t == t_min
        auto out = ag::bochner(g, tprime, g.leaf(w, false), g.leaf(b, false));
        CHECK(out->val[0] == doctest::Approx(1.0));
        CHECK(out->val[1] == doctest::Approx(0.0));
    }
    SUBCASE("quarter period") {
        w[0] = M_PI / 2.0;
        b[0] = 0.0;
        Tensor tprime({1, 1});
        tprime[0] = 1.0;
        auto out = ag::bochner(g, tprime, g.leaf(w, false), g.leaf(b, false));
        CHECK(out->val[0] == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(out->val[1] == doctest::Approx(1.0));
    }
}

TEST_CASE("bochner translation invariance of dot products") {
    // With zero phases, phi(t1) . phi(t2) = sum_i cos(w_i (t1 - t2)).
    const int h = 6;
    Tensor w({h}), b = Tensor::zeros({h});
    RngStream rng(21);
    for (int i = 0; i < h; ++i) w[i] = 0.01 + 0.3 * rng.uniform();

    auto phi = [&](double t) {
        ag::Graph g;
        Tensor tp({1});
        tp[0] = t;
        auto out = ag::bochner(g, tp, g.leaf(w, false), g.leaf(b, false));
        std::vector<double> v(static_cast<size_t>(2 * h));
        for (int i = 0; i < 2 * h; ++i) v[static_cast<size_t>(i)] = out->val[i];
        return v;
    };
    double max_dev = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const double t1 = 1000.0 * rng.uniform(), t2 = 1000.0 * rng.uniform();
        auto a = phi(t1), c = phi(t2);
        double dot = 0.0;
        for (size_t i = 0; i < a.size(); ++i) dot += a[i] * c[i];
        double expect = 0.0;
        for (int i = 0; i < h; ++i) expect += std::cos(w[i] * (t1 - t2));
        max_dev = std::max(max_dev, std::abs(dot - expect));
    }
    CHECK(max_dev < 1e-6);
}

TEST_CASE("sinusoid diff kernel closed forms and range") {
    ag::Graph g;
    Tensor w({1}), b = Tensor::zeros({1});

    w[0] = M_PI;
    Tensor d({1, 1, 1});
    d[0] = 1.0;
    auto out = ag::sinusoid_kernel(g, d, g.leaf(w, false), g.leaf(b, false));
    CHECK(out->val[0] == doctest::Approx(-1.0));
    CHECK(out->val[1] == doctest::Approx(0.0).epsilon(1e-12));

    d[0] = 0.0;
    auto zero = ag::sinusoid_kernel(g, d, g.leaf(w, false), g.leaf(b, false));
    CHECK(zero->val[0] == doctest::Approx(1.0));
    CHECK(zero->val[1] == doctest::Approx(0.0));

    Tensor wide({4}), bb({4});
    RngStream rng(31);
    for (int i = 0; i < 4; ++i) {
        wide[i] = rng.normal();
        bb[i] = rng.normal();
    }
    Tensor rd({3, 3});
    for (int64_t i = 0; i < 9; ++i) rd[i] = 50.0 * rng.normal();
    auto big = ag::sinusoid_kernel(g, rd, g.leaf(wide, false), g.leaf(bb, false));
    for (int64_t i = 0; i < big->val.numel(); ++i) {
        CHECK(big->val[i] >= -1.0);
        CHECK(big->val[i] <= 1.0);
    }
}

TEST_CASE("exponential diff kernel") {
    auto freqs = freq_ladder(3, 10000.0);
    CHECK(freqs[0] == doctest::Approx(1.0));
    CHECK(freqs[1] < freqs[2]);  // strictly increasing

    Tensor d({2});
    d[0] = 0.0;
    d[1] = 1.0;
    auto k = exp_diff_kernel(d, freqs);
    for (int c = 0; c < 3; ++c) CHECK(k.at(0, c) == doctest::Approx(1.0));
    CHECK(k.at(1, 0) == doctest::Approx(std::exp(-1.0)));  // 0.3679

    // strictly decreasing in |d|, range (0, 1], sign-symmetric
    Tensor seq({4});
    seq[0] = -9.0; seq[1] = 0.5; seq[2] = 2.0; seq[3] = 9.0;
    auto ks = exp_diff_kernel(seq, freqs);
    for (int c = 0; c < 3; ++c) {
        CHECK(ks.at(1, c) > ks.at(2, c));
        CHECK(ks.at(2, c) > ks.at(3, c));
        CHECK(ks.at(0, c) == doctest::Approx(ks.at(3, c)));
        for (int r = 0; r < 4; ++r) {
            CHECK(ks.at(r, c) > 0.0);
            CHECK(ks.at(r, c) <= 1.0);
        }
    }
}

TEST_CASE("log1p diff kernel") {
    auto freqs = freq_ladder(2, 10000.0);
    Tensor d({3});
    d[0] = 0.0;
    d[1] = std::exp(1.0) - 1.0;
    d[2] = -(std::exp(1.0) - 1.0);
    auto k = log1p_diff_kernel(d, freqs);
    CHECK(k.at(0, 0) == doctest::Approx(0.0));
    CHECK(k.at(1, 0) == doctest::Approx(1.0));
    CHECK(k.at(2, 0) == doctest::Approx(1.0));  // |d|

    // strictly increasing and concave in |d|
    Tensor seq({3});
    seq[0] = 1.0; seq[1] = 2.0; seq[2] = 3.0;
    auto ks = log1p_diff_kernel(seq, freqs);
    CHECK(ks.at(0, 0) < ks.at(1, 0));
    CHECK(ks.at(1, 0) < ks.at(2, 0));
    CHECK(ks.at(1, 0) - ks.at(0, 0) > ks.at(2, 0) - ks.at(1, 0));
}

TEST_CASE("kernels stay finite at extreme differences") {
    auto freqs = freq_ladder(2, 10000.0);
    Tensor d({3});
    d[0] = 1e15; d[1] = -1e15; d[2] = 0.0;
    for (const Tensor& k : {exp_diff_kernel(d, freqs), log1p_diff_kernel(d, freqs)})
        for (int64_t i = 0; i < k.numel(); ++i) CHECK(std::isfinite(k[i]));
    ag::Graph g;
    Tensor w({1}), b({1});
    w[0] = 2.0;
    auto s = ag::sinusoid_kernel(g, d, g.leaf(w, false), g.leaf(b, false));
    for (int64_t i = 0; i < s->val.numel(); ++i) CHECK(std::isfinite(s->val[i]));
}

TEST_CASE("gaussian distance weights") {
    ag::Graph g;
    auto mu = g.leaf(Tensor::zeros({1}), false);
    // softplus(raw) = 1
    auto sraw = g.leaf(Tensor::full({1}, std::log(std::exp(1.0) - 1.0)), false);
    auto w = ag::gaussian_weights(g, mu, sraw, 4);
    for (int i = 0; i < 4; ++i) CHECK(w->val.at(i, i) == doctest::Approx(1.0));
    CHECK(w->val.at(1, 0) == doctest::Approx(std::exp(-0.5)));  // 0.6065
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            CHECK(w->val.at(i, j) == doctest::Approx(w->val.at(j, i)));  // mu=0 symmetry
            CHECK(w->val.at(i, j) > 0.0);
            CHECK(w->val.at(i, j) <= 1.0);
        }
}

TEST_CASE("civil calendar decomposition") {
    auto epoch = civil_from_unix(0);
    CHECK(epoch.year == 1970);
    CHECK(epoch.month == 1);
    CHECK(epoch.day == 1);
    CHECK(epoch.weekday == 4);  // Thursday
    CHECK(epoch.hour == 0);

    auto y2k1 = civil_from_unix(978307200);  // 2001-01-01 00:00:00 UTC
    CHECK(y2k1.year == 2001);
    CHECK(y2k1.month == 1);
    CHECK(y2k1.day == 1);
    CHECK(y2k1.weekday == 1);  // Monday

    auto ml = civil_from_unix(978300760);  // 2000-12-31 22:12:40 UTC
    CHECK(ml.year == 2000);
    CHECK(ml.month == 12);
    CHECK(ml.day == 31);
    CHECK(ml.hour == 22);
    CHECK(ml.minute == 12);

    // same (month, weekday) pair decomposes identically
    auto a = civil_from_unix(978307200);
    auto b = civil_from_unix(978307200 + 7 * 86400 + 120);
    CHECK(a.month == b.month);
    CHECK(a.weekday == b.weekday);
}

TEST_CASE("unit index bounds") {
    auto c = civil_from_unix(978307200);
    CHECK(unit_index(TimeUnit::Year, c, 1970, 80) == 31);
    CHECK(unit_index(TimeUnit::Month, c, 1970, 80) == 0);
    CHECK_THROWS_AS(unit_index(TimeUnit::Year, c, 2010, 80), DataError);
    CHECK_THROWS_AS(unit_index(TimeUnit::Year, c, 1970, 10), DataError);
    CHECK(unit_cardinality(TimeUnit::Weekday, 80) == 7);
    CHECK_THROWS_AS(parse_time_unit("fortnight"), ConfigError);
}

TEST_CASE("unit widths split evenly with remainder to the front") {
    CHECK(unit_widths(8, 4) == std::vector<int64_t>{2, 2, 2, 2});
    CHECK(unit_widths(10, 4) == std::vector<int64_t>{3, 3, 2, 2});
    CHECK(unit_widths(7, 3) == std::vector<int64_t>{3, 2, 2});
    CHECK_THROWS_AS(unit_widths(3, 4), ConfigError);
}
