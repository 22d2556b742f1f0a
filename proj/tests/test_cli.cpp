#include <doctest.h>

#include <cstdlib>
#include <map>
#include <sys/wait.h>

#include "gazereg/bytes.hpp"
#include "gazereg/dataset_io.hpp"
#include "gazereg/image.hpp"
#include "support.hpp"

using namespace gazereg;
using nlohmann::json;

namespace {

int run(const std::string &args) {
  const std::string cmd = std::string(GAZEREG_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, Bytes> tree(const fs::path &root) {
  std::map<std::string, Bytes> out;
  for (const auto &e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path());
  }
  return out;
}

struct Workspace {
  fs::path dir = testing::scratch_dir("cli");
  std::string p(const std::string &rel) const { return (dir / rel).string(); }

  Workspace() {
    write_text(dir / "spec.json", R"({"scene": {"duration_s": 2}})");
  }
};

} // namespace

TEST_CASE("synth") {
  Workspace w;
  REQUIRE(run("synth --spec " + w.p("spec.json") + " --out " + w.p("a") + " --count 3 --seed 7") == 0);
  REQUIRE(run("synth --spec " + w.p("spec.json") + " --out " + w.p("b") + " --count 3 --seed 7") == 0);
  CHECK(tree(w.dir / "a") == tree(w.dir / "b"));
  const json m = read_json(w.dir / "a" / "manifest.json");
  CHECK(m.at("samples").size() == 3);
  CHECK(m.at("config_hash").get<std::string>().size() == 16);
  CHECK(fs::exists(w.dir / "a" / "s00002" / "frames" / "1.pgm"));
  CHECK(fs::exists(w.dir / "a" / "s00001" / "flow" / "1000_967.flo"));
  // P5 grammar
  const Frame f = decode_pgm(read_file(w.dir / "a" / "s00000" / "frames" / "0.pgm"));
  CHECK(f.rows() == 64);

  REQUIRE(run("synth --spec " + w.p("spec.json") + " --out " + w.p("c") + " --count 3 --seed 8") == 0);
  CHECK(tree(w.dir / "a") != tree(w.dir / "c"));

  CHECK(run("synth --out " + w.p("empty") + " --count 0") == 0);
  CHECK(read_json(w.dir / "empty" / "manifest.json").at("samples").empty());

  write_text(w.dir / "bad.json", R"({"scene": {"colour": 1}})");
  CHECK(run("synth --spec " + w.p("bad.json") + " --out " + w.p("x") + " --count 1") == 2);
  CHECK(run("synth --spec " + w.p("missing.json") + " --out " + w.p("x") + " --count 1") == 2);
  CHECK(run("synth --out " + w.p("x")) == 2);
  CHECK(run("frobnicate") == 2);
}

TEST_CASE("pipeline") {
  Workspace w;
  REQUIRE(run("synth --spec " + w.p("spec.json") + " --out " + w.p("data") + " --count 6 --seed 1") == 0);
  REQUIRE(run("preprocess --data " + w.p("data") + " --out " + w.p("tg") + " --sigma 8") == 0);
  const json meta = read_json(w.dir / "tg" / "meta.json");
  CHECK(meta.at("config_hash") == read_json(w.dir / "data" / "manifest.json").at("config_hash"));
  CHECK(meta.at("supervision").at("sigma") == 8.0);
  CHECK(fs::exists(w.dir / "tg" / "s00000" / "targets.csv"));
  CHECK(fs::exists(w.dir / "tg" / "s00000" / "occlusion.csv"));

  SUBCASE("train and eval are deterministic") {
    const std::string train = "train --data " + w.p("data") + " --targets " + w.p("tg") + " --lambda 1 --epochs 3 --lr 0.02 --seed 4";
    REQUIRE(run(train + " --out " + w.p("m1.bin")) == 0);
    REQUIRE(run(train + " --out " + w.p("m2.bin")) == 0);
    CHECK(read_file(w.dir / "m1.bin") == read_file(w.dir / "m2.bin"));
    CHECK(read_text(w.dir / "m1.log.jsonl") == read_text(w.dir / "m2.log.jsonl"));
    const std::string log = read_text(w.dir / "m1.log.jsonl");
    CHECK(std::count(log.begin(), log.end(), '\n') == 3);
    CHECK(json::parse(log.substr(0, log.find('\n'))).at("epoch") == 1);

    const std::string eval = "eval --model " + w.p("m1.bin") + " --data " + w.p("data") + " --targets " + w.p("tg");
    REQUIRE(run(eval + " --report " + w.p("r1.json")) == 0);
    REQUIRE(run(eval + " --report " + w.p("r2.json")) == 0);
    CHECK(read_file(w.dir / "r1.json") == read_file(w.dir / "r2.json"));
    const json r = read_json(w.dir / "r1.json");
    CHECK(r.at("k") == 10);
    CHECK(r.at("n_samples") == 6);
    CHECK(r.at("config_hash") == decode_checkpoint(read_file(w.dir / "m1.bin")).second.at("config_hash"));

    REQUIRE(run(eval + " --oracle --report " + w.p("ro.json")) == 0);
    CHECK(read_json(w.dir / "ro.json").at("mean_overlap") == 1.0);

    REQUIRE(run("render --frame " + w.p("data/s00000/frames/1.pgm") + " --model " + w.p("m1.bin") + " --sample " +
                w.p("data/s00000") + " --index 1 --out " + w.p("att.pgm")) == 0);
    CHECK(decode_pgm8(read_file(w.dir / "att.pgm")).rows() == 64);
  }
  SUBCASE("epochs 0 writes the initialisation") {
    REQUIRE(run("train --data " + w.p("data") + " --targets " + w.p("tg") + " --epochs 0 --seed 2 --out " + w.p("m0.bin")) == 0);
    const auto [params, cfg] = decode_checkpoint(read_file(w.dir / "m0.bin"));
    ModelConfig mc = cfg.at("model").get<ModelConfig>();
    RngState rng(mc.seed);
    CHECK(params.flatten() == ModelParams::init(mc, rng).flatten());
  }
  SUBCASE("divergence exits 3") {
    CHECK(run("train --data " + w.p("data") + " --targets " + w.p("tg") + " --lambda 1e100 --lr 1e200 --epochs 2 --out " +
              w.p("md.bin")) == 3);
    CHECK_FALSE(fs::exists(w.dir / "md.bin"));
  }
  SUBCASE("mismatched targets exit 4") {
    REQUIRE(run("train --data " + w.p("data") + " --targets " + w.p("tg") + " --epochs 1 --out " + w.p("m.bin")) == 0);
    REQUIRE(run("preprocess --data " + w.p("data") + " --out " + w.p("tg2") + " --sigma 12") == 0);
    CHECK(run("eval --model " + w.p("m.bin") + " --data " + w.p("data") + " --targets " + w.p("tg2") + " --report " +
              w.p("r.json")) == 4);
    REQUIRE(run("synth --out " + w.p("other") + " --count 6 --seed 1") == 0);
    CHECK(run("train --data " + w.p("other") + " --targets " + w.p("tg") + " --epochs 1 --out " + w.p("mx.bin")) == 4);
  }
  SUBCASE("preprocess modes and fallbacks") {
    REQUIRE(run("preprocess --data " + w.p("data") + " --out " + w.p("sg") + " --sigma 8 --mode singular") == 0);
    CHECK(read_text(w.dir / "sg" / "s00000" / "occlusion.csv") == "frame_id,tau_ms,observed_ratio,verdict\n");
    REQUIRE(run("preprocess --data " + w.p("data") + " --out " + w.p("p12") + " --max-points 12 --window-ms 400") == 0);
    CHECK(read_json(w.dir / "p12" / "meta.json").at("supervision").at("max_points") == 12);

    // drop the gaze of frame 1 of one sample and every flow file of another
    fs::remove_all(w.dir / "data" / "s00004" / "flow");
    fs::create_directories(w.dir / "data" / "s00004" / "flow");
    auto trace = parse_gaze_csv(read_text(w.dir / "data" / "s00003" / "gaze.csv"));
    std::erase_if(trace, [](const GazeSample &g) { return g.timestamp_ms > 700; });
    write_text(w.dir / "data" / "s00003" / "gaze.csv", format_gaze_csv(trace));
    REQUIRE(run("preprocess --data " + w.p("data") + " --out " + w.p("fb")) == 0);
    const std::string warn = read_text(w.dir / "fb" / "warnings.log");
    CHECK(warn.find("s00003 frame 1") != std::string::npos);
    CHECK(warn.find("uniform") != std::string::npos);
    const auto rows = read_targets(w.dir / "fb" / "s00003");
    CHECK(rows[1] == uniform_distribution(64));
    CHECK(read_text(w.dir / "fb" / "s00004" / "occlusion.csv").find("missing") != std::string::npos);
    CHECK(warn.find("s00004 frame 1: missing flow 1000_967.flo") != std::string::npos);

    write_text(w.dir / "data" / "s00002" / "gaze.csv", "timestamp_ms,x,y\n0,1,oops\n");
    CHECK(run("preprocess --data " + w.p("data") + " --out " + w.p("bad")) == 2);
  }
  SUBCASE("render") {
    const std::string frame = w.p("data/s00000/frames/0.pgm");
    REQUIRE(run("render --frame " + frame + " --overlay " + w.p("tg/s00000/heatmaps/0.gzhm") + " --out " + w.p("o.pgm")) == 0);
    const auto img = decode_pgm8(read_file(w.dir / "o.pgm"));
    CHECK(img.cols() == 64);
    CHECK(run("render --frame " + frame + " --out " + w.p("o2.pgm")) == 2);
    Heatmap small;
    small.mass = Tensor::Constant(3, 3, 1.0 / 9);
    write_file(w.dir / "small.gzhm", encode_heatmap(small));
    CHECK(run("render --frame " + frame + " --overlay " + w.p("small.gzhm") + " --out " + w.p("o3.pgm")) == 2);
  }
}

TEST_CASE("ablate") {
  Workspace w;
  write_text(w.dir / "ab.json",
             R"({"scene": {"duration_s": 2}, "train_count": 4, "test_count": 3, "model": {"epochs": 1}})");
  REQUIRE(run("ablate --data-spec " + w.p("ab.json") + " --variants lambda=0,1 --variants mode=singular --seeds 2 --out " +
              w.p("ab")) == 0);
  const std::string csv = read_text(w.dir / "ab" / "ablation.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3 * 2);
  CHECK(fs::exists(w.dir / "ab" / "cells" / "mode=singular_seed1.jsonl"));
  CHECK(read_json(w.dir / "ab" / "ablation.json").at("summary").size() == 3);

  REQUIRE(run("ablate --data-spec " + w.p("ab.json") + " --variants lambda=1 --seeds 1 --out " + w.p("one")) == 0);
  const std::string one = read_text(w.dir / "one" / "ablation.csv");
  CHECK(std::count(one.begin(), one.end(), '\n') == 2);
  CHECK(run("ablate --data-spec " + w.p("ab.json") + " --variants depth=1 --out " + w.p("bad")) == 2);
}
