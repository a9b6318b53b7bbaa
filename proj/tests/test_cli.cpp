#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "dali/commands.hpp"
#include "test_util.hpp"

using namespace dali;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = 0;
    std::string out, err;
};

Run cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    Run r;
    r.code = run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

const char* kTinyConfig = R"({
  "seed": 3,
  "dataset": {"num_ids": 5, "train_per_id": 4, "eval_per_id": 2, "size": 8},
  "train": {"epochs": 2, "P": 3, "K": 2, "hidden": [12], "embedding_dim": 6,
            "proxies_per_class": 2, "negatives": 4}
})";

}  // namespace

TEST_CASE("gen-data writes a manifest and is reproducible", "[cli]") {
    testutil::TempDir dir("cli_gen");
    write(dir / "cfg.json", kTinyConfig);
    const auto cfg = (dir / "cfg.json").string();
    REQUIRE(cli({"--config", cfg, "--out", (dir / "a").string(), "gen-data"}).code == 0);
    REQUIRE(cli({"--config", cfg, "--out", (dir / "b").string(), "gen-data"}).code == 0);
    std::size_t images = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir / "a"))
        if (e.path().extension() == ".pgm") {
            ++images;
            CHECK(slurp(e.path()) == slurp(dir / "b" / fs::relative(e.path(), dir / "a")));
        }
    CHECK(images == 5 * 6);
    CHECK(slurp(dir / "a/manifest.json") == slurp(dir / "b/manifest.json"));
    CHECK(load_dataset(dir / "a").samples.size() == 30);
}

TEST_CASE("gen-data into an unwritable location exits 3", "[cli]") {
    testutil::TempDir dir("cli_io");
    write(dir / "blocker", "x");
    const auto r = cli({"--out", (dir / "blocker" / "sub").string(), "gen-data"});
    CHECK(r.code == 3);
    CHECK_FALSE(r.err.empty());
}

TEST_CASE("distort command", "[cli]") {
    testutil::TempDir dir("cli_distort");
    write(dir / "cfg.json", kTinyConfig);
    REQUIRE(cli({"--config", (dir / "cfg.json").string(), "--out", (dir / "ds").string(), "gen-data"}).code == 0);

    REQUIRE(cli({"distort", "--in", (dir / "ds").string(), "--level", "0", "--out", (dir / "l0").string()}).code == 0);
    for (const auto& e : fs::recursive_directory_iterator(dir / "ds"))
        if (e.is_regular_file()) CHECK(slurp(e.path()) == slurp(dir / "l0" / fs::relative(e.path(), dir / "ds")));

    REQUIRE(cli({"distort", "--in", (dir / "ds").string(), "--level", "4", "--out", (dir / "l4").string()}).code == 0);
    REQUIRE(cli({"distort", "--in", (dir / "ds").string(), "--level", "4", "--out", (dir / "l4b").string()}).code == 0);
    CHECK(slurp(dir / "l4/id_0/img_0.pgm") == slurp(dir / "l4b/id_0/img_0.pgm"));
    CHECK_FALSE(slurp(dir / "l4/id_0/img_0.pgm") == slurp(dir / "ds/id_0/img_0.pgm"));

    CHECK(cli({"distort", "--in", (dir / "ds").string(), "--level", "9", "--out", (dir / "x").string()}).code == 2);
    CHECK(cli({"distort", "--in", (dir / "ds").string(), "--level", "2"}).code == 2);
}

TEST_CASE("train, resume and evaluate through the CLI", "[cli]") {
    testutil::TempDir dir("cli_train");
    write(dir / "cfg.json", kTinyConfig);
    const auto cfg = (dir / "cfg.json").string();
    const auto ds = (dir / "ds").string();
    REQUIRE(cli({"--config", cfg, "--out", ds, "gen-data"}).code == 0);
    for (const char* mode : {"clean", "adaptive"})
        REQUIRE(cli({"--config", cfg, "--out", (dir / mode).string(), "train", "--mode", mode, "--dataset", ds}).code ==
                0);
    CHECK(fs::exists(dir / "clean/checkpoint.dck"));
    CHECK(fs::exists(dir / "adaptive/epoch_log.csv"));

    // Stop after one epoch, then resume to the end.
    REQUIRE(cli({"--config", cfg, "--out", (dir / "part").string(), "train", "--mode", "adaptive", "--dataset", ds,
                 "--stop-after", "1"})
                .code == 0);
    REQUIRE(cli({"--config", cfg, "--out", (dir / "part").string(), "train", "--mode", "adaptive", "--dataset", ds,
                 "--resume", (dir / "part/checkpoint.dck").string()})
                .code == 0);
    CHECK(slurp(dir / "part/checkpoint.dck") == slurp(dir / "adaptive/checkpoint.dck"));
    CHECK(slurp(dir / "part/epoch_log.csv") == slurp(dir / "adaptive/epoch_log.csv"));

    const auto a = (dir / "clean/checkpoint.dck").string();
    const auto b = (dir / "adaptive/checkpoint.dck").string();
    const auto single = cli({"--config", cfg, "eval", "--checkpoint", a, "--dataset", ds});
    REQUIRE(single.code == 0);
    CHECK(single.out.rfind("metric,value\n", 0) == 0);

    // The library computes the same report.
    const auto run_cfg = load_config(cfg);
    EvalRequest req;
    req.seed = run_cfg.seed;
    req.distortion = run_cfg.train.distortion;
    const auto lib = evaluate(load_checkpoint(a), nullptr, load_dataset(ds), req);
    CHECK(single.out == lib.report.to_csv());

    // Fusing a backbone with itself reproduces the single-backbone metrics.
    const auto self = cli({"--config", cfg, "eval", "--checkpoint", a, "--checkpoint-b", a, "--fuse", "--dataset", ds});
    REQUIRE(self.code == 0);
    CHECK(self.out == single.out);

    const auto fused = cli({"--config", cfg, "--out", (dir / "m.csv").string(), "eval", "--checkpoint", a,
                            "--checkpoint-b", b, "--fuse", "--dataset", ds, "--query-level", "3", "--features",
                            (dir / "f.dfs").string()});
    REQUIRE(fused.code == 0);
    CHECK(slurp(dir / "m.csv").rfind("metric,value\n", 0) == 0);
    CHECK(FeatureStore::decode(slurp(dir / "f.dfs")).records().size() > 0);

    for (const char* p : {"map", "verify", "tarfar", "tpirfpir"})
        CHECK(cli({"--config", cfg, "eval", "--checkpoint", a, "--dataset", ds, "--protocol", p}).code == 0);

    CHECK(cli({"eval", "--checkpoint", a, "--dataset", ds, "--fuse"}).code == 2);
    CHECK(cli({"eval", "--checkpoint", (dir / "nope.dck").string(), "--dataset", ds}).code == 3);
    write(dir / "junk.dck", "not a checkpoint");
    CHECK(cli({"eval", "--checkpoint", (dir / "junk.dck").string(), "--dataset", ds}).code == 3);
}

TEST_CASE("schedule-plot endpoints", "[cli]") {
    testutil::TempDir dir("cli_sched");
    write(dir / "cfg.json", R"({"schedule": {"total_steps": 100}})");
    const auto r = cli({"--config", (dir / "cfg.json").string(), "schedule-plot"});
    REQUIRE(r.code == 0);
    std::istringstream in(r.out);
    std::string line;
    std::getline(in, line);
    CHECK(line == "step,level,weight");
    std::map<std::pair<long, int>, double> w;
    while (std::getline(in, line)) {
        long step;
        int level;
        double value;
        REQUIRE(std::sscanf(line.c_str(), "%ld,%d,%lf", &step, &level, &value) == 3);
        w[{step, level}] = value;
    }
    CHECK(w.size() == 101 * 6);
    const std::array<double, 6> w0{1.0, 0.8, 0.65, 0.5, 0.35, 0.2};
    for (int l = 0; l <= 5; ++l) {
        CHECK(w[{0, l}] == Catch::Approx(w0[static_cast<std::size_t>(l)]).margin(1e-9));
        CHECK(w[{100, l}] == Catch::Approx(1.0).margin(1e-9));
        CHECK(w[{50, l}] == Catch::Approx((1.0 + w0[static_cast<std::size_t>(l)]) / 2).margin(1e-9));
    }
}

TEST_CASE("usage and config errors exit 2", "[cli]") {
    testutil::TempDir dir("cli_usage");
    CHECK(cli({}).code == 2);
    CHECK(cli({"bogus"}).code == 2);
    write(dir / "bad.json", R"({"unknown_key": 1})");
    const auto r = cli({"--config", (dir / "bad.json").string(), "schedule-plot"});
    CHECK(r.code == 2);
    CHECK(r.err.find("unknown_key") != std::string::npos);
    CHECK(cli({"--config", (dir / "missing.json").string(), "schedule-plot"}).code != 0);
    CHECK(cli({"--help"}).code == 0);
}
