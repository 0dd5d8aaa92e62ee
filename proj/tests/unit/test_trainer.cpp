// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>

#include "../support/gradcheck.hpp"
#include "mteo/gmm.hpp"
#include "mteo/trainer.hpp"

using namespace mteo;

namespace {

const Denoiser& net() {
    static const Denoiser n(testing::tiny_net(), 17);
    return n;
}

const Schedule& student() {
    static const Schedule s = make_schedule(ScheduleKind::polynomial, 5);
    return s;
}

const TeacherSet& teachers() {
    static const TeacherSet t = gen_teachers(net(), student(), 3, SolverKind::ipndm, 100, 131, 1, net().digest());
    return t;
}

MteoConfig small_cfg() {
    MteoConfig c;
    c.e_max = 6;
    c.patience = 2;
    c.batch = 8;
    c.seed = 3;
    return c;
}

std::vector<std::uint64_t> checksums(const EmbeddingBank& b) {
    std::vector<std::uint64_t> out;
    for (std::size_t i = 0; i < b.n_steps(); ++i) out.push_back(b.step_checksum(i));
    return out;
}

}  // namespace

TEST_SUITE("teacher") {
    TEST_CASE("records student times only, starting from the latent draw") {
        const TeacherSet& t = teachers();
        CHECK(t.student.times == student().times);
        REQUIRE(t.states.size() == student().size());
        CHECK(t.n_seeds() == 32);
        CHECK(t.states[0] == initial_state(1, 100, 32, 80.0));
        CHECK_NOTHROW(t.validate());
    }

    TEST_CASE("k = 1 with DDIM equals the student rollout") {
        const TeacherSet t = gen_teachers(net(), student(), 1, SolverKind::ddim, 0, 9, 2);
        const Trajectory tr = sample(SolverKind::ddim, student(), net(), initial_state(2, 0, 10, 80.0));
        for (std::size_t i = 0; i < student().size(); ++i) CHECK(t.states[i] == tr.states[i]);
    }

    TEST_CASE("seed subsets are consistent with the full set") {
        const TeacherSet part = gen_teachers(net(), student(), 3, SolverKind::ipndm, 110, 119, 1);
        const TeacherSet sub = teachers().subset(110, 119);
        for (std::size_t i = 0; i < student().size(); ++i) {
            CHECK(part.states[i] == sub.states[i]);
            for (std::size_t e = 0; e < part.states[i].numel(); ++e)
                CHECK(part.states[i][e] == teachers().states[i][20 + e]);
        }
        CHECK_THROWS_AS(teachers().subset(90, 110), Error);
    }

    TEST_CASE("larger k moves the endpoint closer to a 1024-step reference") {
        const AnalyticModel model(GmmSpec::circle());
        const Tensor x = initial_state(5, 0, 64, 80.0);
        const Tensor ref = sample(SolverKind::ipndm, refine_schedule(student(), 256), model, x).final_state();
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t k : {2u, 5u, 10u}) {
            const TeacherSet t = gen_teachers(model, student(), k, SolverKind::ipndm, 0, 63, 5);
            double err = 0.0;
            for (std::size_t e = 0; e < ref.numel(); ++e) err += std::abs(t.states.back()[e] - ref[e]);
            CHECK(err < prev);
            prev = err;
        }
    }

    TEST_CASE("validation errors") {
        TeacherSet t = teachers();
        t.states.pop_back();
        CHECK_THROWS_AS(t.validate(), Error);
        t = teachers();
        t.seed_hi = t.seed_lo + 3;
        CHECK_THROWS_AS(t.validate(), Error);
        CHECK_THROWS_AS(gen_teachers(net(), student(), 2, SolverKind::ipndm, 5, 4, 1), Error);
    }
}

TEST_SUITE("bank") {
    TEST_CASE("parameter counts") {
        const Denoiser full(NetConfig{}, 1);
        CHECK(init_bank(full, student(), BankVariant::multi_layer).parameter_count() == 768);
        CHECK(init_bank(full, student(), BankVariant::single).parameter_count() == 4 * 32);
        CHECK(init_bank(full, student(), BankVariant::deep).parameter_count() == 4 * 6 * 2 * 64);
    }

    TEST_CASE("fresh banks of every variant give the vanilla per-step loss") {
        const auto vanilla = per_step_loss(nullptr, teachers(), net(), SolverKind::ddim);
        const EmbeddingBank ml = init_bank(net(), student(), BankVariant::multi_layer);
        CHECK(per_step_loss(&ml, teachers(), net(), SolverKind::ddim) == vanilla);
        const EmbeddingBank deep = init_bank(net(), student(), BankVariant::deep);
        const auto d = per_step_loss(&deep, teachers(), net(), SolverKind::ddim);
        for (std::size_t i = 0; i < d.size(); ++i) CHECK(d[i] == doctest::Approx(vanilla[i]).epsilon(1e-12));
    }

    TEST_CASE("compatibility checks") {
        const EmbeddingBank b = init_bank(net(), student(), BankVariant::multi_layer);
        CHECK_NOTHROW(b.check_compatible(student(), net()));
        CHECK_THROWS_AS(b.check_compatible(make_schedule(ScheduleKind::logsnr, 5), net()), Error);
        CHECK_THROWS_AS(b.check_compatible(make_schedule(ScheduleKind::polynomial, 6), net()), Error);
        CHECK_THROWS_AS(b.check_compatible(student(), Denoiser(testing::tiny_net(), 18)), Error);
    }

    TEST_CASE("variant names round trip") {
        for (auto v : {BankVariant::multi_layer, BankVariant::single, BankVariant::deep})
            CHECK(parse_bank_variant(to_string(v)) == v);
        CHECK_THROWS_AS(parse_bank_variant("wide"), Error);
    }
}

TEST_SUITE("trainer") {
    TEST_CASE("schedules for eps and lr") {
        MteoConfig c;
        CHECK(c.eps_at(0, 4) == c.eps);
        CHECK(c.eps_at(3, 4) == doctest::Approx(c.eps_min).epsilon(1e-12));
        CHECK(c.eps_at(1, 4) == doctest::Approx(c.eps * std::pow(c.eps_min / c.eps, 1.0 / 3.0)));
        CHECK(c.lr_at(0) == c.lr);
        CHECK(c.lr_at(c.e_max - 1) == doctest::Approx(c.lr_min).epsilon(1e-12));
    }

    TEST_CASE("config validation") {
        MteoConfig c;
        c.eps_min = 2 * c.eps;
        CHECK_THROWS_AS(c.validate(), Error);
        c = {};
        c.patience = 0;
        CHECK_THROWS_AS(c.validate(), Error);
        c = {};
        c.e_max = 0;
        CHECK_THROWS_AS(c.validate(), Error);
        CHECK(parse_prev_mode("frozen-initial") == PrevMode::frozen_initial);
        CHECK_THROWS_AS(parse_prev_mode("sometimes"), Error);
    }

    TEST_CASE("lr = 0 leaves the bank unchanged with constant losses") {
        MteoConfig c = small_cfg();
        c.lr = c.lr_min = 0.0;
        c.batch = 64;
        EmbeddingBank b = init_bank(net(), student(), BankVariant::multi_layer);
        const auto before = checksums(b);
        const TrainReport r = train(b, teachers(), net(), SolverKind::ddim, c);
        CHECK(checksums(b) == before);
        for (const auto& s : r.steps)
            for (double l : s.epoch_loss) CHECK(l == doctest::Approx(s.epoch_loss.front()).epsilon(1e-14));
    }

    TEST_CASE("E_max = 1 gives one epoch per step") {
        MteoConfig c = small_cfg();
        c.e_max = 1;
        EmbeddingBank b = init_bank(net(), student(), BankVariant::multi_layer);
        const TrainReport r = train(b, teachers(), net(), SolverKind::ddim, c);
        for (std::size_t i = 0; i < r.steps.size(); ++i) {
            CHECK(r.steps[i].epochs == 1);
            CHECK(r.steps[i].reason == (i + 1 == r.steps.size() ? StopReason::forced_full : StopReason::budget));
        }
    }

    TEST_CASE("epoch bounds, forced final step and early stopping") {
        MteoConfig c = small_cfg();
        c.e_max = 9;
        c.patience = 2;
        c.eps = c.eps_min = 1e6;  // every epoch counts as stalled
        EmbeddingBank b = init_bank(net(), student(), BankVariant::multi_layer);
        const TrainReport r = train(b, teachers(), net(), SolverKind::ddim, c);
        for (std::size_t i = 0; i + 1 < r.steps.size(); ++i) {
            CHECK(r.steps[i].epochs == c.patience + 1);
            CHECK(r.steps[i].reason == StopReason::threshold);
        }
        CHECK(r.steps.back().epochs == c.e_max);
        CHECK(r.steps.back().reason == StopReason::forced_full);
        for (auto mode : {PrevMode::rolling, PrevMode::frozen_initial}) {
            MteoConfig d = small_cfg();
            d.prev_mode = mode;
            EmbeddingBank e = init_bank(net(), student(), BankVariant::multi_layer);
            for (const auto& s : train(e, teachers(), net(), SolverKind::ddim, d).steps) {
                CHECK(s.epochs <= d.e_max);
                CHECK(s.epoch_loss.size() == s.epochs);
            }
        }
    }

    TEST_CASE("training a step never touches the other steps") {
        EmbeddingBank b = init_bank(net(), student(), BankVariant::multi_layer);
        auto prev = checksums(b);
        std::size_t calls = 0;
        train(b, teachers(), net(), SolverKind::ddim, small_cfg(), [&](std::size_t i, const EmbeddingBank& bank) {
            const auto now = checksums(bank);
            for (std::size_t j = 0; j < now.size(); ++j)
                if (j != i) CHECK(now[j] == prev[j]);
            CHECK(now[i] != prev[i]);
            prev = now;
            ++calls;
        });
        CHECK(calls == student().intervals());
    }

    TEST_CASE("every variant improves on vanilla and never ends worse than it started") {
        const auto vanilla = per_step_loss(nullptr, teachers(), net(), SolverKind::ddim);
        for (auto v : {BankVariant::multi_layer, BankVariant::single, BankVariant::deep}) {
            CAPTURE(to_string(v));
            EmbeddingBank b = init_bank(net(), student(), v);
            const TrainReport r = train(b, teachers(), net(), SolverKind::ddim, small_cfg());
            CHECK(r.steps[0].initial_loss == doctest::Approx(vanilla[0]).epsilon(1e-12));
            for (const auto& s : r.steps) CHECK(s.final_loss <= s.initial_loss);
            const auto trained = per_step_loss(&b, teachers(), net(), SolverKind::ddim);
            for (std::size_t i = 0; i < trained.size(); ++i) {
                CHECK(trained[i] == doctest::Approx(r.steps[i].final_loss).epsilon(1e-12));
                CHECK(trained[i] < vanilla[i]);
            }
        }
    }

    TEST_CASE("variant wrappers match train on a fresh bank") {
        TrainReport r;
        const EmbeddingBank a = train_single(teachers(), net(), SolverKind::ddim, small_cfg(), &r);
        EmbeddingBank b = init_bank(net(), student(), BankVariant::single);
        train(b, teachers(), net(), SolverKind::ddim, small_cfg());
        CHECK(checksums(a) == checksums(b));
        CHECK(r.steps.size() == 4);
        CHECK(train_deep(teachers(), net(), SolverKind::ddim, small_cfg()).variant == BankVariant::deep);
        CHECK(train_multi_layer(teachers(), net(), SolverKind::ddim, small_cfg()).variant == BankVariant::multi_layer);
    }

    TEST_CASE("training is deterministic") {
        EmbeddingBank a = init_bank(net(), student(), BankVariant::multi_layer);
        EmbeddingBank b = init_bank(net(), student(), BankVariant::multi_layer);
        train(a, teachers(), net(), SolverKind::ipndm, small_cfg());
        train(b, teachers(), net(), SolverKind::ipndm, small_cfg());
        CHECK(checksums(a) == checksums(b));
        EmbeddingBank c = init_bank(net(), student(), BankVariant::multi_layer);
        MteoConfig other = small_cfg();
        other.seed = 4;
        train(c, teachers(), net(), SolverKind::ipndm, other);
        CHECK(checksums(a) != checksums(c));
    }

    TEST_CASE("fingerprint mismatch and non-finite loss abort") {
        EmbeddingBank b = init_bank(net(), student(), BankVariant::multi_layer);
        TeacherSet t = teachers();
        t.backbone_fingerprint = 0x1234;
        try {
            train(b, t, net(), SolverKind::ddim, small_cfg());
            FAIL("expected a fingerprint error");
        } catch (const Error& e) {
            const std::string msg = e.what();
            CHECK(msg.find("1234") != std::string::npos);
        }
        t = teachers();
        t.states[2][0] = std::numeric_limits<double>::infinity();
        try {
            train(b, t, net(), SolverKind::ddim, small_cfg());
            FAIL("expected a non-finite loss error");
        } catch (const Error& e) {
            const std::string msg = e.what();
            CHECK(msg.find("step 1") != std::string::npos);
            CHECK(msg.find("epoch 0") != std::string::npos);
        }
    }
}
