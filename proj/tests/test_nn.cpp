#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "lmtl/autograd.hpp"
#include "lmtl/rng.hpp"
#include "lmtl/tensor.hpp"

using namespace lmtl;

namespace {

using DTape = Tape<double>;
using Id = DTape::Id;

Tensor<double> random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
    auto t = Tensor<double>::zeros(std::move(shape));
    for (auto& v : t.values) v = (rng.uniform() * 2.0 - 1.0) * scale;
    return t;
}

// Reduce an arbitrary node to a scalar with fixed random weights so the
// gradient check exercises every output coordinate independently.
Id weighted_sum(DTape& t, Id x, uint64_t seed) {
    Rng rng(seed);
    auto w = random_tensor(t.value(x).shape, rng);
    return t.sum(t.mul_elem(x, t.leaf(std::move(w))));
}

std::vector<uint8_t> full_mask(std::size_t n) { return std::vector<uint8_t>(n, 1); }

}  // namespace

TEST_CASE("matmul forward basics") {
    DTape t;
    auto x = t.leaf(Tensor<double>({2, 2}, {5, 6, 7, 8}));
    auto eye = t.leaf(Tensor<double>({2, 2}, {1, 0, 0, 1}));
    CHECK(t.value(t.matmul(eye, x)).values == std::vector<double>{5, 6, 7, 8});
    CHECK(t.value(t.matmul(x, eye)).values == std::vector<double>{5, 6, 7, 8});

    auto a = t.leaf(Tensor<double>({2, 2}, {1, 2, 3, 4}));
    auto ones = t.leaf(Tensor<double>({2, 1}, {1, 1}));
    CHECK(t.value(t.matmul(a, ones)).values == std::vector<double>{3, 7});

    auto zero = t.leaf(Tensor<double>::zeros({2, 2}));
    CHECK(t.value(t.matmul(zero, x)).values == std::vector<double>{0, 0, 0, 0});
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
    DTape t;
    auto a = t.leaf(Tensor<double>::zeros({2, 3}));
    auto b = t.leaf(Tensor<double>::zeros({2, 3}));
    try {
        t.matmul(a, b);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        std::string msg = e.what();
        CHECK(msg.find("[2, 3]") != std::string::npos);
    }
}

TEST_CASE("softmax forward") {
    DTape t;
    auto u = t.softmax(t.leaf(Tensor<double>({1, 4}, {0, 0, 0, 0})));
    for (double v : t.value(u).values) CHECK(v == doctest::Approx(0.25));

    auto s = t.softmax(t.leaf(Tensor<double>({1, 2}, {0.0, std::log(3.0)})));
    CHECK(t.value(s).values[0] == doctest::Approx(0.25));
    CHECK(t.value(s).values[1] == doctest::Approx(0.75));

    // Shift invariance and row normalization.
    Rng rng(3);
    auto raw = random_tensor({3, 5}, rng, 4.0);
    auto shifted = raw;
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t c = 0; c < 5; ++c) shifted.values[r * 5 + c] += 17.5;
    }
    auto p0 = t.value(t.softmax(t.leaf(raw)));
    auto p1 = t.value(t.softmax(t.leaf(shifted)));
    for (std::size_t i = 0; i < p0.values.size(); ++i) {
        CHECK(p0.values[i] == doctest::Approx(p1.values[i]).epsilon(1e-12));
    }
    for (std::size_t r = 0; r < 3; ++r) {
        double row_sum = 0;
        for (std::size_t c = 0; c < 5; ++c) row_sum += p0.values[r * 5 + c];
        CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("layer_norm forward") {
    DTape t;
    auto gain = t.leaf(Tensor<double>({3}, {1, 1, 1}));
    auto bias = t.leaf(Tensor<double>({3}, {0, 0, 0}));
    auto constant = t.layer_norm(t.leaf(Tensor<double>({1, 3}, {4, 4, 4})), gain, bias);
    for (double v : t.value(constant).values) CHECK(v == doctest::Approx(0.0));

    auto gain2 = t.leaf(Tensor<double>({2}, {1, 1}));
    auto bias2 = t.leaf(Tensor<double>({2}, {0, 0}));
    auto pm = t.layer_norm(t.leaf(Tensor<double>({1, 2}, {1, -1})), gain2, bias2);
    CHECK(t.value(pm).values[0] == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(t.value(pm).values[1] == doctest::Approx(-1.0).epsilon(1e-4));

    auto zero_gain = t.leaf(Tensor<double>({2}, {0, 0}));
    auto b = t.leaf(Tensor<double>({2}, {0.5, -2.0}));
    auto out = t.layer_norm(t.leaf(Tensor<double>({2, 2}, {3, 1, -4, 9})), zero_gain, b);
    CHECK(t.value(out).values == std::vector<double>{0.5, -2.0, 0.5, -2.0});
}

TEST_CASE("cross entropy with label smoothing") {
    DTape t;
    auto logits = t.leaf(Tensor<double>::zeros({3, 4}), true);
    auto loss = t.cross_entropy_ls(logits, {0, 3, 1}, 0.1, -100);
    CHECK(t.value(loss).values[0] == doctest::Approx(std::log(4.0)).epsilon(1e-9));

    // Strongly peaked, no smoothing: loss tends to zero.
    DTape t2;
    auto peaked = Tensor<double>::zeros({2, 5});
    peaked.values[0 * 5 + 2] = 50.0;
    peaked.values[1 * 5 + 4] = 50.0;
    auto l2 = t2.cross_entropy_ls(t2.leaf(peaked), {2, 4}, 0.0, -100);
    CHECK(t2.value(l2).values[0] == doctest::Approx(0.0).epsilon(1e-9));

    // All positions ignored: zero loss, zero gradients.
    DTape t3;
    Rng rng(11);
    auto lg = t3.leaf(random_tensor({2, 4}, rng), true);
    auto l3 = t3.cross_entropy_ls(lg, {0, 0}, 0.1, 0);
    CHECK(t3.value(l3).values[0] == 0.0);
    t3.backward(l3);
    for (double g : t3.grad(lg).values) CHECK(g == 0.0);

    CHECK_THROWS_AS(t3.cross_entropy_ls(lg, {7, 0}, 0.1, 0), DataError);
}

TEST_CASE("cross entropy gradients ignore pad rows") {
    DTape t;
    Rng rng(5);
    auto lg = t.leaf(random_tensor({3, 4}, rng), true);
    auto loss = t.cross_entropy_ls(lg, {2, 0, 1}, 0.1, 0);
    t.backward(loss);
    const auto& g = t.grad(lg).values;
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(g[1 * 4 + j] == 0.0);  // pad row
    }
    double live = 0;
    for (std::size_t j = 0; j < 4; ++j) live += std::abs(g[0 * 4 + j]);
    CHECK(live > 0.0);
}

TEST_CASE("embedding gathers and scatters") {
    DTape t;
    auto table = t.leaf(Tensor<double>({3, 2}, {1, 2, 3, 4, 5, 6}), true);
    auto rows = t.embedding(table, {2, 0, 2});
    CHECK(t.value(rows).values == std::vector<double>{5, 6, 1, 2, 5, 6});
    auto loss = t.sum(rows);
    t.backward(loss);
    CHECK(t.grad(table).values == std::vector<double>{1, 1, 0, 0, 2, 2});
    CHECK_THROWS_AS(t.embedding(table, {3}), DataError);
    CHECK_THROWS_AS(t.embedding(table, {-1}), DataError);
}

TEST_CASE("dropout") {
    DTape t;
    Rng data_rng(7);
    auto x = t.leaf(random_tensor({20, 10}, data_rng), true);

    Rng r0(99);
    auto kept = t.dropout(x, 0.0, r0);
    CHECK(kept == x);  // rate 0 is the identity node

    Rng r1(99), r2(99);
    auto d1 = t.dropout(x, 0.25, r1);
    auto d2 = t.dropout(x, 0.25, r2);
    CHECK(t.value(d1).values == t.value(d2).values);  // seeded determinism

    std::size_t zeros = 0;
    const auto& xin = t.value(x).values;
    const auto& dout = t.value(d1).values;
    for (std::size_t i = 0; i < dout.size(); ++i) {
        if (dout[i] == 0.0) {
            ++zeros;
        } else {
            CHECK(dout[i] == doctest::Approx(xin[i] / 0.75).epsilon(1e-12));
        }
    }
    double frac = static_cast<double>(zeros) / static_cast<double>(dout.size());
    CHECK(frac > 0.1);
    CHECK(frac < 0.4);
}

TEST_CASE("attention forward sanity") {
    // Single query, single key: output equals the value row.
    DTape t;
    auto q = t.leaf(Tensor<double>({1, 4}, {0.3, -1, 2, 0.7}));
    auto k = t.leaf(Tensor<double>({1, 4}, {1, 1, 1, 1}));
    auto v = t.leaf(Tensor<double>({1, 4}, {5, 6, 7, 8}));
    auto out = t.attention(q, k, v, full_mask(1), 1, 1, 1, 2);
    CHECK(t.value(out).values == std::vector<double>{5, 6, 7, 8});

    // Zero queries attend uniformly over allowed keys.
    DTape t2;
    auto q2 = t2.leaf(Tensor<double>::zeros({2, 2}));
    auto k2 = t2.leaf(Tensor<double>({3, 2}, {1, 0, 0, 1, 1, 1}));
    auto v2 = t2.leaf(Tensor<double>({3, 2}, {3, 0, 0, 3, 9, 9}));
    std::vector<uint8_t> mask = {1, 1, 1, 1, 1, 0};  // row 1 may not see key 2
    auto out2 = t2.attention(q2, k2, v2, mask, 1, 2, 3, 1);
    CHECK(t2.value(out2).values[0] == doctest::Approx(4.0));   // mean of 3,0,9
    CHECK(t2.value(out2).values[1] == doctest::Approx(4.0));
    CHECK(t2.value(out2).values[2] == doctest::Approx(1.5));   // mean of 3,0
    CHECK(t2.value(out2).values[3] == doctest::Approx(1.5));
}

TEST_CASE("attention respects the mask under perturbation") {
    Rng rng(21);
    std::size_t L = 4, D = 6;
    auto q = random_tensor({L, D}, rng);
    auto k = random_tensor({L, D}, rng);
    auto v = random_tensor({L, D}, rng);
    // Causal mask.
    std::vector<uint8_t> mask(L * L, 0);
    for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t j = 0; j <= i; ++j) mask[i * L + j] = 1;
    }
    DTape t;
    auto base = t.value(t.attention(t.leaf(q), t.leaf(k), t.leaf(v), mask, 1, L, L, 3));
    // Perturb the last key/value rows: earlier outputs must not move.
    auto k2 = k;
    auto v2 = v;
    for (std::size_t c = 0; c < D; ++c) {
        k2.values[(L - 1) * D + c] += 3.0;
        v2.values[(L - 1) * D + c] -= 5.0;
    }
    DTape t2;
    auto moved = t2.value(t2.attention(t2.leaf(q), t2.leaf(k2), t2.leaf(v2), mask, 1, L, L, 3));
    for (std::size_t i = 0; i + 1 < L; ++i) {
        for (std::size_t c = 0; c < D; ++c) {
            CHECK(moved.values[i * D + c] == base.values[i * D + c]);
        }
    }
}

TEST_CASE("grad_check closed forms") {
    // f(x) = x^2 at x = 3.
    TapeFunction<double> square = [](DTape& t, const std::vector<Id>& ids) {
        return t.sum(t.mul_elem(ids[0], ids[0]));
    };
    CHECK(grad_check<double>(square, {Tensor<double>({1}, {3.0})}) < 1e-7);

    // Constant function: zero gradient both ways.
    TapeFunction<double> constant = [](DTape& t, const std::vector<Id>& ids) {
        auto zero = t.scale(ids[0], 0.0);
        return t.sum(zero);
    };
    CHECK(grad_check<double>(constant, {Tensor<double>({4}, {1, 2, 3, 4})}) == 0.0);
}

TEST_CASE("grad_check per op") {
    Rng rng(2024);

    TapeFunction<double> f_add = [](DTape& t, const std::vector<Id>& ids) {
        return weighted_sum(t, t.add(ids[0], ids[1]), 1);
    };
    CHECK(grad_check<double>(f_add, {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)}) <
          1e-4);

    TapeFunction<double> f_bias = [](DTape& t, const std::vector<Id>& ids) {
        return weighted_sum(t, t.add_rowbias(ids[0], ids[1]), 2);
    };
    CHECK(grad_check<double>(f_bias, {random_tensor({3, 4}, rng), random_tensor({4}, rng)}) < 1e-4);

    TapeFunction<double> f_scale = [](DTape& t, const std::vector<Id>& ids) {
        return weighted_sum(t, t.scale(ids[0], -1.7), 3);
    };
    CHECK(grad_check<double>(f_scale, {random_tensor({5}, rng)}) < 1e-4);

    TapeFunction<double> f_mm = [](DTape& t, const std::vector<Id>& ids) {
        return weighted_sum(t, t.matmul(ids[0], ids[1]), 4);
    };
    CHECK(grad_check<double>(f_mm, {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)}) <
          1e-4);

    TapeFunction<double> f_mmnt = [](DTape& t, const std::vector<Id>& ids) {
        return weighted_sum(t, t.matmul_nt(ids[0], ids[1]), 5);
    };
    CHECK(grad_check<double>(f_mmnt, {random_tensor({3, 4}, rng), random_tensor({5, 4}, rng)}) <
          1e-4);

    TapeFunction<double> f_gelu = [](DTape& t, const std::vector<Id>& ids) {
        return weighted_sum(t, t.gelu(ids[0]), 6);
    };
    CHECK(grad_check<double>(f_gelu, {random_tensor({4, 3}, rng, 2.0)}) < 1e-4);

    TapeFunction<double> f_ln = [](DTape& t, const std::vector<Id>& ids) {
        return weighted_sum(t, t.layer_norm(ids[0], ids[1], ids[2]), 7);
    };
    CHECK(grad_check<double>(f_ln, {random_tensor({3, 6}, rng), random_tensor({6}, rng),
                                    random_tensor({6}, rng)}) < 1e-4);

    TapeFunction<double> f_sm = [](DTape& t, const std::vector<Id>& ids) {
        return weighted_sum(t, t.softmax(ids[0]), 8);
    };
    CHECK(grad_check<double>(f_sm, {random_tensor({3, 5}, rng, 3.0)}) < 1e-4);

    TapeFunction<double> f_emb = [](DTape& t, const std::vector<Id>& ids) {
        return weighted_sum(t, t.embedding(ids[0], {0, 2, 1, 2}), 9);
    };
    CHECK(grad_check<double>(f_emb, {random_tensor({3, 4}, rng)}) < 1e-4);

    TapeFunction<double> f_mul = [](DTape& t, const std::vector<Id>& ids) {
        return t.sum(t.mul_elem(ids[0], ids[1]));
    };
    CHECK(grad_check<double>(f_mul, {random_tensor({7}, rng), random_tensor({7}, rng)}) < 1e-4);

    TapeFunction<double> f_drop = [](DTape& t, const std::vector<Id>& ids) {
        Rng fixed(77);
        return weighted_sum(t, t.dropout(ids[0], 0.3, fixed), 10);
    };
    CHECK(grad_check<double>(f_drop, {random_tensor({4, 5}, rng)}) < 1e-4);
}

TEST_CASE("grad_check attention and cross entropy") {
    Rng rng(31);
    std::size_t B = 2, Lq = 3, Lk = 4, D = 6;
    std::vector<uint8_t> mask(B * Lq * Lk, 1);
    mask[2] = 0;
    mask[B * Lq * Lk - 1] = 0;
    TapeFunction<double> f_attn = [&](DTape& t, const std::vector<Id>& ids) {
        return weighted_sum(t, t.attention(ids[0], ids[1], ids[2], mask, B, Lq, Lk, 2), 11);
    };
    CHECK(grad_check<double>(f_attn,
                             {random_tensor({B * Lq, D}, rng), random_tensor({B * Lk, D}, rng),
                              random_tensor({B * Lk, D}, rng)},
                             1e-4, 24) < 1e-4);

    std::vector<int32_t> targets = {2, 0, 4, 1};  // 0 is the ignore id here
    TapeFunction<double> f_ce = [&](DTape& t, const std::vector<Id>& ids) {
        return t.cross_entropy_ls(ids[0], targets, 0.1, 0);
    };
    CHECK(grad_check<double>(f_ce, {random_tensor({4, 5}, rng, 2.0)}, 1e-4, 20) < 1e-4);
}

TEST_CASE("backward requires a scalar root") {
    DTape t;
    auto x = t.leaf(Tensor<double>({2}, {1, 2}), true);
    CHECK_THROWS_AS(t.backward(x), DataError);
}

TEST_CASE("gelu matches erf closed form") {
    DTape t;
    auto x = t.leaf(Tensor<double>({3}, {-1.0, 0.0, 2.0}));
    auto y = t.value(t.gelu(x));
    CHECK(y.values[0] == doctest::Approx(-0.15865525).epsilon(1e-6));
    CHECK(y.values[1] == doctest::Approx(0.0));
    CHECK(y.values[2] == doctest::Approx(1.95449974).epsilon(1e-6));
}
