// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "../support/gradcheck.hpp"
#include "mteo/adam.hpp"
#include "mteo/autodiff.hpp"
#include "mteo/kernels.hpp"
#include "mteo/rng.hpp"

using namespace mteo;
using mteo::testing::random_tensor;

TEST_SUITE("tensor") {
    TEST_CASE("shape and data length agree") {
        Tensor t({3, 4}, 1.0);
        CHECK(t.numel() == 12);
        CHECK(t.rows() == 3);
        CHECK(t.cols() == 4);
        CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>(3)), Error);
        CHECK_THROWS_AS(Tensor(Shape{0, 2}), Error);
    }

    TEST_CASE("bitwise equality") {
        Tensor a({2}, {0.0, 1.0});
        Tensor b({2}, {-0.0, 1.0});
        CHECK_FALSE(a == b);
        CHECK(a == Tensor({2}, {0.0, 1.0}));
    }
}

TEST_SUITE("kernels") {
    TEST_CASE("parallel kernels match serial references bitwise") {
        Rng rng(3, "kernels");
        for (std::size_t trial = 0; trial < 6; ++trial) {
            const std::size_t m = 1 + rng.below(300), k = 1 + rng.below(70), n = 1 + rng.below(70);
            const Tensor a = random_tensor(rng, {m, k}), b = random_tensor(rng, {k, n}), bt = random_tensor(rng, {n, k});
            const Tensor g = random_tensor(rng, {m, n});
            Tensor c1({m, n}), c2({m, n});
            kernels::matmul(a.data(), b.data(), c1.data(), m, k, n);
            kernels::matmul_serial(a.data(), b.data(), c2.data(), m, k, n);
            CHECK(c1 == c2);
            Tensor d1({m, n}, 0.5), d2({m, n}, 0.5);
            kernels::matmul_nt_acc(a.data(), bt.data(), d1.data(), m, k, n);
            kernels::matmul_nt_acc_serial(a.data(), bt.data(), d2.data(), m, k, n);
            CHECK(d1 == d2);
            Tensor e1({k, n}, 0.25), e2({k, n}, 0.25);
            kernels::matmul_tn_acc(a.data(), g.data(), e1.data(), m, k, n);
            kernels::matmul_tn_acc_serial(a.data(), g.data(), e2.data(), m, k, n);
            CHECK(e1 == e2);
            const double p1 = kernels::pairwise_distance_sum(a.data(), m, a.data(), m, k, true);
            const double p2 = kernels::pairwise_distance_sum_serial(a.data(), m, a.data(), m, k, true);
            CHECK(p1 == p2);
        }
    }

    TEST_CASE("matmul against a naive triple loop") {
        Rng rng(4, "kernels");
        const Tensor a = random_tensor(rng, {5, 7}), b = random_tensor(rng, {7, 3});
        Tensor c({5, 3});
        kernels::matmul(a.data(), b.data(), c.data(), 5, 7, 3);
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 3; ++j) {
                double s = 0.0;
                for (std::size_t p = 0; p < 7; ++p) s += a.at(i, p) * b.at(p, j);
                CHECK(c.at(i, j) == doctest::Approx(s).epsilon(1e-13));
            }
    }
}

TEST_SUITE("autodiff") {
    TEST_CASE("matmul with the identity returns the operand") {
        Rng rng(5, "ad");
        ad::Tape tape;
        const Tensor a = random_tensor(rng, {3, 3});
        Tensor eye({3, 3}, 0.0);
        for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
        CHECK(ad::matmul(tape.constant(eye), tape.constant(a)).value() == a);
    }

    TEST_CASE("silu(0) is 0 and the sum of a 2x2 ones tensor is 4") {
        ad::Tape tape;
        CHECK(ad::silu(tape.constant(Tensor({1, 1}, 0.0))).value().item() == 0.0);
        CHECK(ad::sum(tape.constant(Tensor({2, 2}, 1.0))).value().item() == 4.0);
    }

    TEST_CASE("d(x^2)/dx at 3 is 6") {
        ad::Tape tape;
        const ad::Var x = tape.leaf(Tensor({1, 1}, 3.0));
        tape.backward(ad::sum(ad::square(x)));
        CHECK(tape.grad(x).item() == doctest::Approx(6.0));
    }

    TEST_CASE("silu derivative at 1 matches a central difference") {
        ad::Tape tape;
        const ad::Var x = tape.leaf(Tensor({1, 1}, 1.0));
        tape.backward(ad::sum(ad::silu(x)));
        auto f = [](double v) { return v / (1.0 + std::exp(-v)); };
        const double h = 1e-5;
        const double fd = (f(1.0 + h) - f(1.0 - h)) / (2 * h);
        CHECK(std::abs(tape.grad(x).item() - fd) / std::abs(fd) < 1e-6);
    }

    TEST_CASE("two backward calls without zeroing double the gradient") {
        ad::Tape tape;
        const ad::Var x = tape.leaf(Tensor({1, 1}, 2.0));
        const ad::Var loss = ad::sum(ad::square(x));
        tape.backward(loss);
        const double g1 = tape.grad(x).item();
        tape.backward(loss);
        CHECK(tape.grad(x).item() == 2.0 * g1);
        tape.zero_grad();
        CHECK(tape.grad(x).item() == 0.0);
    }

    TEST_CASE("every primitive matches central finite differences") {
        const auto cases = mteo::testing::random_cases(88, 11);
        for (std::size_t i = 0; i < cases.size(); ++i) {
            CAPTURE(cases[i].name);
            CHECK(mteo::testing::gradcheck(cases[i], i) < 1e-4);
        }
    }

    TEST_CASE("backward is linear in the loss") {
        Rng rng(6, "ad");
        const Tensor xv = random_tensor(rng, {4, 3});
        auto f1 = [](const ad::Var& x) { return ad::sum(ad::sin(x)); };
        auto f2 = [](const ad::Var& x) { return ad::mean(ad::square(ad::exp(x))); };
        ad::Tape t1, t2, t3;
        const ad::Var a = t1.leaf(xv), b = t2.leaf(xv), c = t3.leaf(xv);
        t1.backward(f1(a));
        t1.backward(f2(a));
        t2.backward(ad::add(f1(b), f2(b)));
        t3.backward(f1(c));
        const Tensor g1 = t3.grad(c);
        for (std::size_t e = 0; e < xv.numel(); ++e)
            CHECK(t1.grad(a)[e] == doctest::Approx(t2.grad(b)[e]).epsilon(1e-14));
        CHECK(g1.numel() == xv.numel());
    }

    TEST_CASE("detach blocks gradient flow") {
        ad::Tape tape;
        const ad::Var x = tape.leaf(Tensor({2, 2}, 1.5));
        const ad::Var w = tape.leaf(Tensor({2, 2}, 0.5));
        const ad::Var y = ad::detach(ad::square(x));
        tape.backward(ad::sum(ad::mul(y, w)));
        for (double g : tape.grad(x).data()) CHECK(g == 0.0);
        CHECK(tape.grad(w) == y.value());
    }

    TEST_CASE("shape errors name the op and both shapes") {
        ad::Tape tape;
        const ad::Var a = tape.constant(Tensor({2, 3})), b = tape.constant(Tensor({3, 2}));
        try {
            (void)ad::add(a, b);
            FAIL("expected a shape error");
        } catch (const Error& e) {
            const std::string msg = e.what();
            CHECK(msg.find("add") != std::string::npos);
            CHECK(msg.find("[2x3]") != std::string::npos);
            CHECK(msg.find("[3x2]") != std::string::npos);
        }
        CHECK_THROWS_AS((void)ad::matmul(a, a), Error);
    }

    TEST_CASE("backward rejects non-scalar and detached losses") {
        ad::Tape tape;
        const ad::Var x = tape.leaf(Tensor({2, 2}, 1.0));
        CHECK_THROWS_AS(tape.backward(ad::square(x)), Error);
        CHECK_THROWS_AS(tape.backward(tape.constant(Tensor::scalar(1.0))), Error);
    }

    TEST_CASE("stale handles are rejected after clear") {
        ad::Tape tape;
        const ad::Var x = tape.leaf(Tensor({1, 1}, 1.0));
        const ad::Var y = ad::sum(ad::square(x));
        tape.clear();
        CHECK(tape.size() == 0);
        CHECK_THROWS_AS(tape.backward(y), Error);
        CHECK_THROWS_AS((void)x.value(), Error);
    }

    TEST_CASE("parameters accumulate gradients through param()") {
        ad::Parameter p("w", Tensor({1, 2}, {1.0, -2.0}));
        ad::Tape tape;
        tape.backward(ad::sum(ad::square(tape.param(p))));
        CHECK(p.grad[0] == doctest::Approx(2.0));
        CHECK(p.grad[1] == doctest::Approx(-4.0));
    }
}

TEST_SUITE("adam") {
    TEST_CASE("zero gradient leaves parameters unchanged") {
        ad::Parameter p("w", Tensor({1, 3}, {1.0, 2.0, 3.0}));
        std::vector<ad::Parameter*> ps{&p};
        AdamState st(ps, {});
        const Tensor before = p.value;
        st.step(ps, 0.1);
        CHECK(p.value == before);
        CHECK(st.steps() == 1);
    }

    TEST_CASE("first bias-corrected step moves by about lr") {
        ad::Parameter p("w", Tensor({1}, {0.0}));
        std::vector<ad::Parameter*> ps{&p};
        AdamState st(ps, {});
        p.grad = Tensor({1}, {1.0});
        st.step(ps, 0.1);
        // m_hat = 1, v_hat = 1: update = lr * 1 / (1 + eps)
        CHECK(p.value[0] == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-12));
    }

    TEST_CASE("lr = 0 leaves parameters unchanged") {
        Rng rng(8, "adam");
        ad::Parameter p("w", random_tensor(rng, {3, 3}));
        std::vector<ad::Parameter*> ps{&p};
        AdamState st(ps, {});
        const Tensor before = p.value;
        for (int i = 0; i < 5; ++i) {
            p.grad = random_tensor(rng, {3, 3});
            st.step(ps, 0.0);
        }
        CHECK(p.value == before);
    }

    TEST_CASE("NaN gradient names the parameter") {
        ad::Parameter p("bank.step3", Tensor({1}, {0.0}));
        std::vector<ad::Parameter*> ps{&p};
        AdamState st(ps, {});
        p.grad = Tensor({1}, {std::nan("")});
        try {
            st.step(ps, 0.1);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("bank.step3") != std::string::npos);
        }
    }

    TEST_CASE("identical inputs give identical updates") {
        auto run = [] {
            Rng rng(9, "adam");
            ad::Parameter p("w", random_tensor(rng, {2, 2}));
            std::vector<ad::Parameter*> ps{&p};
            AdamState st(ps, {});
            for (int i = 0; i < 10; ++i) {
                p.grad = random_tensor(rng, {2, 2});
                st.step(ps, 0.05);
            }
            return p.value;
        };
        CHECK(run() == run());
    }
}
