// Copyright (C) 2026 The mteo-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "../support/gradcheck.hpp"
#include "mteo/cli.hpp"
#include "mteo/config.hpp"
#include "mteo/io.hpp"

using namespace mteo;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("mteo-test-" + tag + "-" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

struct CliResult {
    int code;
    std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

const char* kTinyConfig = R"(# small but complete pipeline
[run]
seed = 5
[net]
n_blocks = 2
hidden = 8
embed_dim = 8
n_fourier = 4
[backbone]
n_samples = 256
epochs = 2
batch = 64
[teacher]
k = 2
seed_lo = 0
seed_hi = 31
[mteo]
e_max = 3
batch = 16
[eval]
n_samples = 64
n_ref = 256
n_proj = 8
[analysis]
dense_steps = 9
dense_seeds = 4
substeps = 2
film_iterations = 5
noise_reps = 2
)";

fs::path write_config(const fs::path& dir, const std::string& text) {
    const fs::path p = dir / "run.cfg";
    std::ofstream(p) << text;
    return p;
}

const Denoiser& net() {
    static const Denoiser n(testing::tiny_net(), 29);
    return n;
}

}  // namespace

TEST_SUITE("io") {
    TEST_CASE("container round trip is bitwise") {
        Container c;
        c.set("kind", "test");
        c.set("empty", "");
        Tensor t({2, 3});
        t[0] = -0.0;
        t[1] = 1e-310;
        t[2] = std::numeric_limits<double>::max();
        t[3] = 0.1;
        c.add("a", t);
        c.add("scalar", Tensor::scalar(3.5));
        const std::string bytes = encode_container(c);
        CHECK(bytes.substr(0, 8) == std::string(kContainerMagic, 8));
        const Container d = decode_container(bytes);
        CHECK(d == c);
        CHECK(encode_container(d) == bytes);
        CHECK(std::signbit(d.tensor("a")[0]));
    }

    TEST_CASE("corrupted containers are rejected") {
        Container c;
        c.set("k", "v");
        c.add("t", Tensor({2, 2}, 1.0));
        std::string bytes = encode_container(c);
        std::string bad = bytes;
        bad[0] = 'X';
        CHECK_THROWS_AS(decode_container(bad), Error);
        bad = bytes;
        bad[8] = 2;
        CHECK_THROWS_AS(decode_container(bad), Error);
        CHECK_THROWS_AS(decode_container(bytes.substr(0, bytes.size() - 3)), Error);
        CHECK_THROWS_AS(decode_container(bytes + "x"), Error);
        CHECK_THROWS_AS(decode_container(""), Error);
    }

    TEST_CASE("header accessors") {
        Container c;
        c.set("n", "42");
        c.set("h", "0xff");
        c.set("x", "0.25");
        CHECK(c.get_u64("n") == 42);
        CHECK(c.get_u64("h") == 255);
        CHECK(c.get_f64("x") == 0.25);
        CHECK_THROWS_AS(c.get("missing"), Error);
        CHECK_THROWS_AS(c.tensor("missing"), Error);
        c.set("n", "43");
        CHECK(c.get_u64("n") == 43);
    }

    TEST_CASE("number formatting round trips") {
        for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 80.0, 6.02214076e23}) CHECK(parse_double(format_double(v)) == v);
        CHECK_THROWS_AS(parse_double("1.5x"), Error);
        CHECK(hex64(255) == "0x00000000000000ff");
    }

    TEST_CASE("files are written atomically and missing files are named") {
        TempDir dir("files");
        const fs::path p = dir.path / "x.bin";
        write_file_atomic(p, "hello");
        CHECK(read_file(p) == "hello");
        write_file_atomic(p, "again");
        CHECK(read_file(p) == "again");
        std::size_t entries = 0;
        for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path)) ++entries;
        CHECK(entries == 1);
        try {
            read_file(dir.path / "nope.bin");
            FAIL("expected a missing-file error");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("nope.bin") != std::string::npos);
        }
    }

    TEST_CASE("denoiser, bank and teacher files round trip") {
        TempDir dir("artifacts");
        save_denoiser(dir.path / "n.ckpt", net());
        const Denoiser n2 = load_denoiser(dir.path / "n.ckpt");
        CHECK(n2.digest() == net().digest());
        CHECK(n2.config() == net().config());
        const Tensor x = initial_state(1, 0, 4, 3.0);
        CHECK(n2.forward(x, 3.0) == net().forward(x, 3.0));

        const Schedule s = make_schedule(ScheduleKind::logsnr, 4);
        for (auto v : {BankVariant::multi_layer, BankVariant::single, BankVariant::deep}) {
            EmbeddingBank b = init_bank(net(), s, v);
            b.steps[1][0].value[0] = 0.125;
            save_bank(dir.path / "b.bin", b, s);
            Schedule s2;
            const EmbeddingBank b2 = load_bank(dir.path / "b.bin", &s2);
            CHECK(s2.times == s.times);
            CHECK(b2.variant == v);
            CHECK(b2.n_steps() == b.n_steps());
            for (std::size_t i = 0; i < b.n_steps(); ++i) CHECK(b2.step_checksum(i) == b.step_checksum(i));
            CHECK(b2.schedule_fingerprint == b.schedule_fingerprint);
            CHECK(b2.backbone_fingerprint == b.backbone_fingerprint);
            CHECK(encode_container(to_container(b2, s2)) == encode_container(to_container(b, s)));
        }

        const TeacherSet t = gen_teachers(net(), s, 2, SolverKind::ipndm, 7, 12, 3, net().digest());
        save_teachers(dir.path / "t.bin", t);
        const TeacherSet t2 = load_teachers(dir.path / "t.bin");
        CHECK(t2.student.times == t.student.times);
        CHECK(t2.k == t.k);
        CHECK(t2.kind == t.kind);
        CHECK(t2.seed_lo == 7);
        CHECK(t2.seed_hi == 12);
        CHECK(t2.backbone_fingerprint == t.backbone_fingerprint);
        for (std::size_t i = 0; i < t.states.size(); ++i) CHECK(t2.states[i] == t.states[i]);
    }

    TEST_CASE("a tampered schedule is caught on load") {
        const Schedule s = make_schedule(ScheduleKind::polynomial, 4);
        Container c = to_container(init_bank(net(), s, BankVariant::single), s);
        for (auto& [name, t] : c.tensors)
            if (name == "schedule.times") t[1] += 1e-9;
        CHECK_THROWS_AS(bank_from(c), Error);
        c.set("kind", "checkpoint");
        CHECK_THROWS_AS(bank_from(c), Error);
    }

    TEST_CASE("csv writer") {
        CsvWriter w({"a", "b"});
        w.row({"1", "x"}).row({"2", "y"});
        CHECK(w.str() == "a,b\n1,x\n2,y\n");
        CHECK(w.rows() == 2);
        CHECK_THROWS_AS(w.row({"1"}), Error);
        CHECK_THROWS_AS(w.row({"1", "a,b"}), Error);
        CHECK_THROWS_AS(w.row({"1", "a\nb"}), Error);
    }
}

TEST_SUITE("config") {
    TEST_CASE("defaults build valid objects") {
        const RunConfig c;
        CHECK(c.net() == NetConfig{});
        CHECK(c.schedule().times == make_schedule(ScheduleKind::polynomial, 5).times);
        CHECK(c.solver() == SolverKind::ddim);
        CHECK(c.variant() == BankVariant::multi_layer);
        const MteoConfig m = c.mteo();
        CHECK(m.eps == 0.01);
        CHECK(m.patience == 10);
        CHECK(m.e_max == 300);
        CHECK(m.batch == 64);
        CHECK(c.get_u64("teacher", "seed_lo") == 50000);
        CHECK(c.get_u64("teacher", "seed_hi") == 50255);
        CHECK(c.gmm().n_components() == 8);
    }

    TEST_CASE("parse, override and dump round trip") {
        RunConfig c = RunConfig::parse("[schedule]\nsteps = 7 # comment\n\n[solver]\nkind=ipndm\n");
        CHECK(c.schedule().size() == 7);
        CHECK(c.solver() == SolverKind::ipndm);
        c.set("mteo.lr=0.5");
        CHECK(c.mteo().lr == 0.5);
        const RunConfig d = RunConfig::parse(c.dump());
        CHECK(d.dump() == c.dump());
    }

    TEST_CASE("unknown sections and keys carry the location") {
        try {
            RunConfig::parse("[net]\nhidden = 4\nwidth = 3\n", "x.cfg");
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("x.cfg:3") != std::string::npos);
            CHECK(std::string(e.what()).find("width") != std::string::npos);
        }
        CHECK_THROWS_AS(RunConfig::parse("[nets]\n"), Error);
        CHECK_THROWS_AS(RunConfig::parse("hidden = 3\n"), Error);
        CHECK_THROWS_AS(RunConfig::parse("[net]\nhidden\n"), Error);
        RunConfig c;
        CHECK_THROWS_AS(c.set("net.hidden"), Error);
        c.set("net.hidden=abc");
        CHECK_THROWS_AS(c.net(), Error);
    }

    TEST_CASE("artifact paths resolve against the output directory") {
        RunConfig c;
        c.set("run.out=/tmp/o");
        CHECK(c.path("bank") == fs::path("/tmp/o/bank.bin"));
        c.set("paths.bank=/abs/b.bin");
        CHECK(c.path("bank") == fs::path("/abs/b.bin"));
    }

    TEST_CASE("subset specifications") {
        const auto s = parse_subsets("none; singletons; all; 0 2", 3);
        REQUIRE(s.size() == 6);
        CHECK(s[0].empty());
        CHECK(s[1] == std::vector<std::size_t>{0});
        CHECK(s[3] == std::vector<std::size_t>{2});
        CHECK(s[4] == std::vector<std::size_t>{0, 1, 2});
        CHECK(s[5] == std::vector<std::size_t>{0, 2});
        CHECK_THROWS_AS(parse_subsets("5", 3), Error);
        CHECK_THROWS_AS(parse_subsets("a", 3), Error);
    }
}

TEST_SUITE("cli") {
    TEST_CASE("missing artifacts and bad arguments fail cleanly") {
        TempDir dir("cli-missing");
        CliResult r = cli({"gen-teachers", "--out", dir.path.string()});
        CHECK(r.code != 0);
        CHECK(r.err.find("missing artifact") != std::string::npos);
        CHECK(r.err.find("backbone.ckpt") != std::string::npos);
        r = cli({"train-mteo", "--config", (dir.path / "none.cfg").string()});
        CHECK(r.code != 0);
        CHECK(r.err.find("none.cfg") != std::string::npos);
        CHECK(cli({"frobnicate"}).code != 0);
        CHECK(cli({}).code != 0);
        CHECK(cli({"sample", "--set", "net.width=3", "--out", dir.path.string()}).code != 0);
    }

    TEST_CASE("pipeline runs end to end and is reproducible") {
        TempDir a("cli-a"), b("cli-b");
        const std::vector<std::string> steps[] = {
            {"train-backbone"}, {"gen-teachers"}, {"train-mteo"}, {"sample"}, {"eval"},
            {"analyze", "sweep"}, {"analyze", "layer-sweep"}, {"analyze", "feature-pca"}, {"analyze", "film"},
            {"analyze", "emb-pca"}, {"analyze", "gain-drop"}, {"analyze", "step-transfer"}};
        for (const TempDir* d : {&a, &b}) {
            const fs::path cfg = write_config(d->path, kTinyConfig);
            for (auto args : steps) {
                args.insert(args.end(), {"--config", cfg.string(), "--out", (d->path / "out").string()});
                const CliResult r = cli(args);
                CAPTURE(args[0]);
                CAPTURE(r.err);
                REQUIRE(r.code == 0);
            }
        }
        std::size_t csvs = 0;
        for (const auto& e : fs::directory_iterator(a.path / "out")) {
            const auto name = e.path().filename();
            if (e.path().extension() == ".csv" || e.path().extension() == ".bin" || e.path().extension() == ".ckpt") {
                CAPTURE(name.string());
                CHECK(read_file(e.path()) == read_file(b.path / "out" / name));
                csvs += e.path().extension() == ".csv";
            }
        }
        CHECK(csvs >= 15);
        CHECK(fs::exists(a.path / "out" / "manifest-train-mteo.json"));
        CHECK(fs::exists(a.path / "out" / "manifest-analyze-gain-drop.json"));
    }

    TEST_CASE("a fresh bank evaluates exactly like no bank") {
        TempDir d("cli-fresh");
        const fs::path cfg = write_config(d.path, kTinyConfig);
        const std::string out = (d.path / "out").string();
        auto run = [&](std::vector<std::string> args) {
            args.insert(args.end(), {"--config", cfg.string(), "--out", out});
            const CliResult r = cli(args);
            CAPTURE(r.err);
            REQUIRE(r.code == 0);
        };
        run({"train-backbone"});
        run({"gen-teachers"});
        run({"train-mteo", "--set", "mteo.lr=0", "--set", "mteo.lr_min=0"});
        run({"eval", "--set", "eval.use_bank=true"});
        const std::string with_bank = read_file(d.path / "out" / "eval.csv");
        run({"eval", "--set", "eval.use_bank=false"});
        CHECK(read_file(d.path / "out" / "eval.csv") == with_bank);
    }

    TEST_CASE("paper-default train-mteo block parses and runs") {
        TempDir d("cli-paper");
        const fs::path cfg = write_config(d.path, std::string(kTinyConfig) + R"(
[teacher]
seed_lo = 50000
seed_hi = 50255
[mteo]
lr = 0.02
lr_min = 0.001
eps = 0.01
eps_min = 0.001
patience = 10
e_max = 300
batch = 64
)");
        const std::string out = (d.path / "out").string();
        for (std::string cmd : {"train-backbone", "gen-teachers", "train-mteo"}) {
            const CliResult r = cli({cmd, "--config", cfg.string(), "--out", out});
            CAPTURE(r.err);
            REQUIRE(r.code == 0);
        }
        const TeacherSet t = load_teachers(d.path / "out" / "teachers.bin");
        CHECK(t.n_seeds() == 256);
        CHECK(fs::exists(d.path / "out" / "bank.bin"));
    }

    TEST_CASE("a bank from another backbone is rejected with both fingerprints") {
        TempDir d("cli-fp");
        const fs::path cfg = write_config(d.path, kTinyConfig);
        const std::string out = (d.path / "out").string();
        for (std::string cmd : {"train-backbone", "gen-teachers", "train-mteo"})
            REQUIRE(cli({cmd, "--config", cfg.string(), "--out", out}).code == 0);
        const EmbeddingBank bank = load_bank(d.path / "out" / "bank.bin");
        REQUIRE(cli({"train-backbone", "--config", cfg.string(), "--out", out, "--seed", "6"}).code == 0);
        const Denoiser other = load_denoiser(d.path / "out" / "backbone.ckpt");
        const CliResult r = cli({"eval", "--config", cfg.string(), "--out", out, "--seed", "6"});
        CHECK(r.code != 0);
        CHECK(r.err.find(hex64(bank.backbone_fingerprint)) != std::string::npos);
        CHECK(r.err.find(hex64(other.digest())) != std::string::npos);
    }
}
