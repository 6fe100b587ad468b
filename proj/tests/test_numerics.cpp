#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "syncmask/gradcheck.hpp"
#include "syncmask/kernels.hpp"
#include "syncmask/ops.hpp"
#include "syncmask/rng.hpp"
#include "syncmask/selfcheck.hpp"

using namespace syncmask;

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) {
        v = rng.uniform(-1.0, 1.0);
    }
    return t;
}

}  // namespace

TEST_CASE("rng streams are reproducible and derived seeds differ") {
    Rng a(42);
    Rng b(42);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    CHECK(derive_seed(1, 2) != derive_seed(1, 3));
    CHECK(derive_seed(1, "text") != derive_seed(1, "image"));
    CHECK(Rng(5).derive("x").next_u64() == Rng(5).derive("x").next_u64());

    Rng r(9);
    int counts[5] = {};
    for (int i = 0; i < 50000; ++i) {
        const auto k = r.uniform_index(5);
        REQUIRE(k < 5);
        ++counts[k];
    }
    for (const int c : counts) {
        CHECK(std::abs(c - 10000) < 500);
    }
    double s = 0.0;
    double ss = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double x = r.normal();
        s += x;
        ss += x * x;
    }
    CHECK(std::abs(s / 20000) < 0.03);
    CHECK(std::abs(ss / 20000 - 1.0) < 0.05);
}

TEST_CASE("matmul hand-computed values") {
    Tape tape;
    const Var i2 = tape.constant(Tensor::matrix({{1, 0}, {0, 1}}));
    const Tensor b = Tensor::matrix({{7, 1}, {2, 5}});
    CHECK(matmul(i2, tape.constant(b)).value() == b);

    const Var a = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
    const Var c = tape.constant(Tensor::matrix({{5}, {6}}));
    CHECK(matmul(a, c).value() == Tensor::matrix({{17}, {39}}));
}

TEST_CASE("matmul rejects mismatched shapes and names both") {
    Tape tape;
    const Var a = tape.constant(Tensor({2, 3}));
    const Var b = tape.constant(Tensor({2, 3}));
    try {
        matmul(a, b);
        FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
    }
}

TEST_CASE("matmul gradient matches finite differences at 3x3") {
    Rng rng(3);
    const std::vector<Tensor> inputs{random_tensor({3, 3}, rng), random_tensor({3, 3}, rng)};
    const auto r = check_gradients([](Tape&, const std::vector<Var>& x) { return sum(matmul(x[0], x[1])); }, inputs);
    CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("matmul is associative at 4x4") {
    Rng rng(4);
    Tape tape;
    const Var a = tape.constant(random_tensor({4, 4}, rng));
    const Var b = tape.constant(random_tensor({4, 4}, rng));
    const Var c = tape.constant(random_tensor({4, 4}, rng));
    const Tensor left = matmul(matmul(a, b), c).value();
    const Tensor right = matmul(a, matmul(b, c)).value();
    for (std::size_t i = 0; i < left.size(); ++i) {
        CHECK(std::abs(left[i] - right[i]) < 1e-9);
    }
}

TEST_CASE("softmax rows: symmetric, closed form, shift invariant") {
    Tape tape;
    const Tensor flat = softmax_rows(tape.constant(Tensor::matrix({{3, 3, 3, 3}}))).value();
    for (const double v : flat.data()) {
        CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
    }
    const Tensor two = softmax_rows(tape.constant(Tensor::matrix({{0, std::log(2.0)}}))).value();
    CHECK(std::abs(two[0] - 1.0 / 3.0) < 1e-15);
    CHECK(std::abs(two[1] - 2.0 / 3.0) < 1e-15);

    Rng rng(8);
    const Tensor x = random_tensor({4, 6}, rng);
    Tensor shifted = x;
    for (double& v : shifted.data()) {
        v += 12.5;
    }
    const Tensor p = softmax_rows(tape.constant(x)).value();
    const Tensor q = softmax_rows(tape.constant(shifted)).value();
    for (int r = 0; r < 4; ++r) {
        double total = 0.0;
        for (int c = 0; c < 6; ++c) {
            CHECK(std::abs(p.at(r, c) - q.at(r, c)) < 1e-12);
            CHECK(p.at(r, c) > 0.0);
            CHECK(p.at(r, c) < 1.0);
            total += p.at(r, c);
        }
        CHECK(std::abs(total - 1.0) < 1e-12);
    }
    const Tensor big = softmax_rows(tape.constant(Tensor::matrix({{1000, 0}}))).value();
    CHECK(big.all_finite());
}

TEST_CASE("layer norm cases") {
    Tape tape;
    const Var ones = tape.constant(Tensor::full({4}, 1.0));
    const Var zeros = tape.constant(Tensor::full({4}, 0.0));
    const Tensor flat = layer_norm(tape.constant(Tensor::full({1, 4}, 7.0)), ones, zeros).value();
    for (const double v : flat.data()) {
        CHECK(v == 0.0);
    }
    const Var g2 = tape.constant(Tensor::full({2}, 1.0));
    const Var b2 = tape.constant(Tensor::full({2}, 0.0));
    const Tensor y = layer_norm(tape.constant(Tensor::matrix({{1, 3}})), g2, b2, 0.0).value();
    CHECK(y[0] == doctest::Approx(-1.0));
    CHECK(y[1] == doctest::Approx(1.0));

    CHECK_THROWS_AS(layer_norm(tape.constant(Tensor::matrix({{1}})), tape.constant(Tensor::vector({1})),
                               tape.constant(Tensor::vector({0}))),
                    std::invalid_argument);

    Rng rng(12);
    const std::vector<Tensor> in{random_tensor({1, 8}, rng), random_tensor({8}, rng), random_tensor({8}, rng)};
    const auto w = random_tensor({1, 8}, rng);
    const auto r = check_gradients(
        [&](Tape& t, const std::vector<Var>& x) { return sum(mul(layer_norm(x[0], x[1], x[2]), t.constant(w))); },
        in);
    CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("backward identities") {
    Rng rng(1);
    Tape tape;
    const Var x = tape.leaf(random_tensor({3, 2}, rng));
    tape.backward(sum(x));
    const Tensor gx = tape.grad(x);
    for (const double g : gx.data()) {
        CHECK(g == 1.0);
    }

    Tape t2;
    const Tensor xv = random_tensor({5}, rng);
    const Var y = t2.leaf(xv);
    t2.backward(scale(sum(mul(y, y)), 0.5));
    const Tensor g = t2.grad(y);
    for (std::size_t i = 0; i < xv.size(); ++i) {
        CHECK(g[i] == doctest::Approx(xv[i]).epsilon(1e-15));
    }

    Tape t3;
    const Var z = t3.leaf(Tensor({2, 2}));
    CHECK_THROWS_AS(t3.backward(z), std::invalid_argument);
}

TEST_CASE("backward replays ops in exact reverse order") {
    Tape tape;
    const Var x = tape.leaf(Tensor::matrix({{1, 2}}));
    const Var a = exp(x);
    const Var b = scale(a, 2.0);
    const Var c = sum(b);
    std::vector<std::string> order;
    tape.backward(c, [&](std::size_t, std::string_view name) { order.emplace_back(name); });
    REQUIRE(order.size() == 3);
    CHECK(order[0] == tape.op_name(2));
    CHECK(order[1] == tape.op_name(1));
    CHECK(order[2] == tape.op_name(0));
}

TEST_CASE("constant-only tapes record nothing") {
    Tape tape;
    const Var a = tape.constant(Tensor::matrix({{1, 2}}));
    sum(exp(a));
    CHECK(tape.op_count() == 0);
    CHECK(tape.trainable_labels().empty());
}

TEST_CASE("finite difference oracle") {
    const Tensor x = Tensor::vector({1, 2});
    const Tensor g1 = finite_diff_grad([](const Tensor& t) { return t[0] + t[1]; }, x);
    CHECK(g1[0] == doctest::Approx(1.0));
    CHECK(g1[1] == doctest::Approx(1.0));
    const Tensor g2 = finite_diff_grad([](const Tensor& t) { return t[0] * t[0] + t[1] * t[1]; }, x);
    CHECK(std::abs(g2[0] - 2.0) < 1e-8);
    CHECK(std::abs(g2[1] - 4.0) < 1e-8);
    CHECK_THROWS_AS(finite_diff_grad([](const Tensor&) { return NAN; }, x), std::domain_error);
}

TEST_CASE("every op passes gradient checks over 100 seeds") {
    double worst = 0.0;
    std::string worst_name;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        for (const GradCase& c : op_grad_cases(seed)) {
            const auto r = check_gradients(c.build, c.inputs);
            if (r.max_rel_error > worst) {
                worst = r.max_rel_error;
                worst_name = c.name;
            }
        }
    }
    INFO("worst case: " << worst_name);
    CHECK(worst < 1e-4);
}

TEST_CASE("identical op sequences give bit-identical outputs") {
    auto run = [] {
        Rng rng(77);
        Tape tape;
        const Var a = tape.constant(random_tensor({6, 5}, rng));
        const Var b = tape.constant(random_tensor({5, 7}, rng));
        return softmax_rows(gelu(matmul(a, b))).value();
    };
    CHECK(run() == run());
}

TEST_CASE("serial and parallel kernels agree bit for bit") {
    Rng rng(21);
    const int m = 67;
    const int k = 45;
    const int n = 53;
    const Tensor a = random_tensor({m, k}, rng);
    const Tensor b = random_tensor({k, n}, rng);
    const Tensor at = random_tensor({k, m}, rng);
    const Tensor bt = random_tensor({n, k}, rng);
    for (const bool acc : {false, true}) {
        Tensor c1 = random_tensor({m, n}, rng);
        Tensor c2 = c1;
        kernels::gemm_serial(a.data(), b.data(), c1.data(), m, k, n, acc);
        kernels::gemm_parallel(a.data(), b.data(), c2.data(), m, k, n, acc);
        CHECK(c1 == c2);

        Tensor d1 = random_tensor({m, n}, rng);
        Tensor d2 = d1;
        kernels::gemm_tn_serial(at.data(), b.data(), d1.data(), m, k, n, acc);
        kernels::gemm_tn_parallel(at.data(), b.data(), d2.data(), m, k, n, acc);
        CHECK(d1 == d2);

        Tensor e1 = random_tensor({m, n}, rng);
        Tensor e2 = e1;
        kernels::gemm_nt_serial(a.data(), bt.data(), e1.data(), m, k, n, acc);
        kernels::gemm_nt_parallel(a.data(), bt.data(), e2.data(), m, k, n, acc);
        CHECK(e1 == e2);
    }
    Tensor s1 = random_tensor({m, n}, rng);
    Tensor s2(s1.shape());
    Tensor s3(s1.shape());
    kernels::softmax_rows_serial(s1.data(), s2.data(), m, n);
    kernels::softmax_rows_parallel(s1.data(), s3.data(), m, n);
    CHECK(s2 == s3);
    // in place
    kernels::softmax_rows_serial(s1.data(), s1.data(), m, n);
    CHECK(s1 == s2);
}

TEST_CASE("gemm variants agree with the naive triple loop") {
    Rng rng(5);
    const Tensor a = random_tensor({3, 4}, rng);
    const Tensor b = random_tensor({4, 2}, rng);
    Tensor c({3, 2});
    kernels::gemm(a.data(), b.data(), c.data(), 3, 4, 2, false);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 2; ++j) {
            double s = 0.0;
            for (int p = 0; p < 4; ++p) {
                s += a.at(i, p) * b.at(p, j);
            }
            CHECK(c.at(i, j) == doctest::Approx(s).epsilon(1e-14));
        }
    }
    const Tensor at = transpose(a);
    Tensor c2({3, 2});
    kernels::gemm_tn(at.data(), b.data(), c2.data(), 3, 4, 2, false);
    CHECK(c2 == c);
    const Tensor bt = transpose(b);
    Tensor c3({3, 2});
    kernels::gemm_nt(a.data(), bt.data(), c3.data(), 3, 4, 2, false);
    CHECK(c3 == c);
}
