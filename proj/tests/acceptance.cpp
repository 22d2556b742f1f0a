// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero if any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <string>
#include <sys/wait.h>

#include "gazereg/bytes.hpp"
#include "gazereg/dataset_io.hpp"
#include "gazereg/eval.hpp"
#include "gazereg/flow.hpp"
#include "gazereg/gaze.hpp"
#include "gazereg/image.hpp"
#include "gazereg/model.hpp"
#include "gazereg/numerics.hpp"
#include "gazereg/pipeline.hpp"
#include "gazereg/synth.hpp"

using namespace gazereg;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;
int skipped = 0;
std::vector<int> selected; // empty: run every criterion

void report(int id, const std::string &name, double budget_s, const std::function<Outcome()> &body) {
  if (!selected.empty() && std::find(selected.begin(), selected.end(), id) == selected.end()) {
    ++skipped;
    return;
  }
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception &e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (secs > budget_s) {
    o.pass = false;
    o.detail += " (over budget)";
  }
  if (!o.pass) ++failures;
  std::printf("[%s] %d %s: %s [%.1fs / %.0fs]\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), secs,
              budget_s);
  std::fflush(stdout);
}

std::string fmt(const char *f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

Tensor uniform_tensor(RngStream &rng, Eigen::Index rows, Eigen::Index cols, double lo, double hi) {
  Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

// --- 1 ----------------------------------------------------------------------------

Outcome gradient_check() {
  const double lambdas[] = {0.0, 1.0, 100.0};
  double worst = 0.0;
  int pairs = 0;
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    ModelConfig cfg;
    cfg.d_model = 3 + int(seed % 3);
    cfg.d_k = 2 + int(seed % 2);
    cfg.n_classes = 3;
    cfg.lambda = lambdas[seed % 3];
    cfg.seed = seed;
    RngState rng(seed);
    ModelParams p = ModelParams::init(cfg, rng);
    auto &st = rng.stream("batch");
    p.embed_bias = uniform_tensor(st, 1, cfg.d_model, -0.1, 0.1);
    p.b_q = uniform_tensor(st, 1, cfg.d_k, -0.1, 0.1);
    p.b_v = uniform_tensor(st, 1, cfg.d_model, -0.1, 0.1);
    p.head_bias = uniform_tensor(st, 1, cfg.n_classes, -0.1, 0.1);
    Batch b;
    b.label = int(seed % 3);
    for (int t = 0; t < 2 + int(seed % 2); ++t) {
      b.frames.push_back(uniform_tensor(st, 16, 16, 0.0, 1.0));
      Vector h = uniform_tensor(st, 4, 1, 0.0, 1.0);
      b.targets.push_back(h / h.sum());
    }
    const Vector an = backward(b, p, cfg).grad.flatten();
    const Vector x0 = p.flatten();
    Vector fd(x0.size());
    const double step = 1e-5;
    for (Eigen::Index i = 0; i < x0.size(); ++i) {
      Vector xp = x0, xm = x0;
      xp[i] += step;
      xm[i] -= step;
      ModelParams qp = p, qm = p;
      qp.assign(xp);
      qm.assign(xm);
      fd[i] = (total_loss(b, qp, cfg).total - total_loss(b, qm, cfg).total) / (2 * step);
    }
    worst = std::max(worst, (an - fd).norm() / std::max(fd.norm(), 1e-12));
    ++pairs;
  }
  return {worst < 1e-4, fmt("%g (config, seed) pairs, lambda in {0, 1, 100}, max relative error %.2e", pairs, worst)};
}

// --- 2 ----------------------------------------------------------------------------

Outcome supervision_oracles() {
  RngState rng(2);
  auto &st = rng.stream("oracles");
  double norm_err = 0.0, patch_err = 0.0, warp_err = 0.0;
  for (int i = 0; i < 50; ++i) {
    const FrameDims dims{16 + int(st.below(48)), 16 + int(st.below(48))};
    const GazeSample g{0, st.uniform(0, dims.width - 1), st.uniform(0, dims.height - 1)};
    const Heatmap h = make_heatmap(g, dims, SmoothingConfig{st.uniform(1.0, 25.0)});
    norm_err = std::max(norm_err, std::abs(h.mass.sum() - 1.0));
  }
  const PatchGrid grid{4, 4, 4};
  for (int i = 0; i < 20; ++i) {
    Heatmap h{uniform_tensor(st, 16, 16, 0.0, 1.0), false};
    h.mass /= h.mass.sum();
    h.normalized = true;
    const PatchDistribution p = patchify(h, grid);
    Vector oracle = Vector::Zero(16);
    double total = 0.0;
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) {
        oracle[(y / 4) * 4 + x / 4] += h.mass(y, x);
        total += h.mass(y, x);
      }
    }
    oracle /= total;
    patch_err = std::max(patch_err, (p - oracle).cwiseAbs().maxCoeff());
  }
  for (int i = 0; i < 20; ++i) {
    const int sx = int(st.below(5)) - 2, sy = int(st.below(5)) - 2;
    Heatmap h{Tensor::Zero(32, 32), false};
    h.mass.block(4, 4, 24, 24) = uniform_tensor(st, 24, 24, 0.0, 1.0);
    h.mass /= h.mass.sum();
    h.normalized = true;
    const FlowField f(Tensor::Constant(32, 32, sx), Tensor::Constant(32, 32, sy));
    const Heatmap w = warp_heatmap(h, f);
    warp_err = std::max(warp_err, std::abs(w.mass.sum() - 1.0));
  }
  const bool ok = norm_err < 1e-9 && patch_err < 1e-12 && warp_err < 1e-9;
  return {ok, fmt("heatmap sum error %.1e, patchify error %.1e over 20 maps, warp mass error %.1e", norm_err, patch_err,
                  warp_err)};
}

// --- 3 ----------------------------------------------------------------------------

double sample_or_zero(const Tensor &f, double x, double y) {
  const auto h = f.rows(), w = f.cols();
  if (x < 0 || y < 0 || x > double(w - 1) || y > double(h - 1)) return 0.0;
  const int x0 = int(std::floor(x)), y0 = int(std::floor(y));
  const int x1 = std::min<int>(x0 + 1, int(w - 1)), y1 = std::min<int>(y0 + 1, int(h - 1));
  const double fx = x - x0, fy = y - y0;
  return (1 - fy) * ((1 - fx) * f(y0, x0) + fx * f(y0, x1)) + fy * ((1 - fx) * f(y1, x0) + fx * f(y1, x1));
}

bool brute_force_verdict(const FlowField &fwd, const FlowField &bwd, double eps, double eta) {
  long count = 0;
  for (Eigen::Index y = 0; y < fwd.height(); ++y) {
    for (Eigen::Index x = 0; x < fwd.width(); ++x) {
      const double px = double(x) + fwd.u(y, x), py = double(y) + fwd.v(y, x);
      const double du = fwd.u(y, x) + sample_or_zero(bwd.u, px, py);
      const double dv = fwd.v(y, x) + sample_or_zero(bwd.v, px, py);
      if (std::sqrt(du * du + dv * dv) > eps) ++count;
    }
  }
  return double(count) > eta * double(fwd.height() * fwd.width());
}

Outcome occlusion_exactness() {
  SceneSpec spec;
  spec.occlusion_rate = 0.5;
  int pairs = 0, agree = 0, occluded_standard = 0, occluded_stress = 0;
  RngState rng(3);
  auto &noise = rng.stream("disturbance");
  for (std::uint64_t seed = 0; pairs < 50; ++seed) {
    const SyntheticSample s = generate_sample(spec, 1000 + seed);
    const std::int64_t t_ms = s.frame_ms(s.spec.n_frames() - 1);
    const int t_tick = *s.tick_at_ms(t_ms);
    for (int back : {1, 3, 6}) {
      if (pairs == 50) break;
      const std::int64_t tau_ms = tick_ms(t_tick - back, s.spec.gaze_hz);
      const FlowField fwd = s.true_flow(tau_ms, t_ms);
      FlowField bwd = s.true_flow(t_ms, tau_ms);
      // every other pair gets a scripted disturbance so the stress threshold sees borderline pixels
      if (pairs % 2 == 1) {
        const double amp = 2.0 + 2.0 * double(pairs % 5);
        for (Eigen::Index i = 0; i < bwd.u.size(); ++i) bwd.u.data()[i] += noise.uniform(-amp, amp);
      }
      for (const OcclusionConfig cfg : {OcclusionConfig{20.0, 0.60}, OcclusionConfig{3.0, 0.60}}) {
        const bool got = occlusion_check(fwd, bwd, cfg).occluded;
        if (got == brute_force_verdict(fwd, bwd, cfg.eps, cfg.eta)) ++agree;
        if (got) ++(cfg.eps == 20.0 ? occluded_standard : occluded_stress);
      }
      ++pairs;
    }
  }
  return {agree == 2 * pairs, fmt("%g/%g verdicts agree; occluded at eps 20: %g, at eps 3: %g", agree, 2 * pairs,
                                  occluded_standard, occluded_stress)};
}

// --- 4 ----------------------------------------------------------------------------

Outcome gating_invariance() {
  RngState rng(4);
  auto &st = rng.stream("windows");
  int identical = 0;
  for (int w = 0; w < 20; ++w) {
    const int h = 16 + int(st.below(16)), wd = 16 + int(st.below(16));
    auto make_entry = [&](bool occluded, bool current) {
      WindowEntry e;
      e.map = Heatmap{uniform_tensor(st, h, wd, 0.0, 1.0), false};
      e.map.mass /= e.map.mass.sum();
      e.map.normalized = true;
      e.flow_to_t = FlowField(uniform_tensor(st, h, wd, -3, 3), uniform_tensor(st, h, wd, -3, 3));
      e.verdict.occluded = occluded;
      e.verdict.observed_ratio = occluded ? 0.9 : 0.1;
      e.current = current;
      return e;
    };
    std::vector<WindowEntry> entries;
    const int n = 2 + int(st.below(6));
    for (int i = 0; i < n; ++i) entries.push_back(make_entry(i > 0 && st.below(2) == 0, i == 0));
    entries.push_back(make_entry(true, false));
    std::vector<WindowEntry> scrambled = entries;
    for (auto &e : scrambled) {
      if (!e.verdict.occluded) continue;
      e.map.mass = uniform_tensor(st, h, wd, 0.0, 50.0);
      e.flow_to_t.u = uniform_tensor(st, h, wd, -40, 40);
      e.flow_to_t.v.setConstant(std::nan(""));
      e.verdict.observed_ratio = st.uniform(0.61, 1.0);
    }
    if (aggregate_window(entries).mass == aggregate_window(scrambled).mass) ++identical;
  }
  return {identical == 20, fmt("%g/20 windows bit-identical after rewriting occluded entries", identical)};
}

// --- 5, 6, 7 ----------------------------------------------------------------------

RunConfig suite_config() {
  RunConfig c;
  c.train_count = 200;
  c.test_count = 100;
  c.supervision.smoothing.sigma = 16.0;
  return c;
}

constexpr double kModerate = 0.5;

struct Cell {
  double acc = 0.0, overlap = 0.0;
  bool ok = false;
};

// means[v] over ok seeds; per[v][s]
struct Sweep {
  std::vector<std::string> variants;
  std::map<std::string, std::vector<Cell>> per;
  std::map<std::string, Cell> mean;
};

Sweep sweep(const RunConfig &base, const std::string &variants) {
  Sweep s;
  const auto vs = parse_variants(variants);
  for (const auto &v : vs) s.variants.push_back(v.label());
  const auto results = run_ablation(base, vs, {0, 1, 2});
  for (const auto &r : results) s.per[r.variant].push_back({r.accuracy, r.mean_overlap, r.ok});
  for (const auto &[name, cells] : s.per) {
    Cell m;
    int n = 0;
    for (const auto &c : cells) {
      if (!c.ok) continue;
      m.acc += c.acc;
      m.overlap += c.overlap;
      ++n;
    }
    m.ok = n == int(cells.size());
    m.acc = n ? m.acc / n : std::nan("");
    m.overlap = n ? m.overlap / n : std::nan("");
    s.mean[name] = m;
  }
  return s;
}

std::string describe(const Sweep &s) {
  std::string out;
  for (const auto &v : s.variants) {
    const Cell &m = s.mean.at(v);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s acc %.3f overlap %.3f%s; ", v.c_str(), m.acc, m.overlap, m.ok ? "" : " (diverged)");
    out += buf;
  }
  if (!out.empty()) out.resize(out.size() - 2);
  return out;
}

// a > b, or a >= b when allow_equal; failed (non-finite) cells never satisfy the trend
bool beats(const Cell &a, const Cell &b, bool allow_equal) {
  if (!a.ok || !b.ok) return false;
  return allow_equal ? a.acc >= b.acc && a.overlap >= b.overlap : a.acc > b.acc && a.overlap > b.overlap;
}

Sweep lambda_sweep;

Outcome lambda_trend() {
  const std::string zero = "lambda=0", mod = "lambda=" + fmt("%g", kModerate), big = "lambda=" + fmt("%g", 10 * kModerate);
  lambda_sweep = sweep(suite_config(), zero + "," + fmt("%g", kModerate) + "," + fmt("%g", 10 * kModerate));
  const auto &m = lambda_sweep.mean;
  // the non-monotone part is judged on task accuracy; overlap keeps rising with lambda
  auto not_above = [](const Cell &large, const Cell &moderate) {
    return large.ok && moderate.ok && large.acc <= moderate.acc;
  };
  bool ok = beats(m.at(mod), m.at(zero), false) && not_above(m.at(big), m.at(mod));
  int violations = 0;
  for (int s = 0; s < 3; ++s) {
    const Cell &z = lambda_sweep.per.at(zero)[s], &md = lambda_sweep.per.at(mod)[s], &b = lambda_sweep.per.at(big)[s];
    if (!beats(md, z, false) || !not_above(b, md)) ++violations;
  }
  ok = ok && violations <= 1;
  return {ok, describe(lambda_sweep) + fmt("; per-seed violations %g/3", violations)};
}

Outcome alignment_gain() {
  const Cell &z = lambda_sweep.mean.at("lambda=0"), &m = lambda_sweep.mean.at("lambda=" + fmt("%g", kModerate));
  const double gain = 100.0 * (m.overlap - z.overlap);
  return {z.ok && m.ok && gain >= 15.0,
          fmt("top-10 overlap %.1f%% (lambda 0) -> %.1f%% (moderate), gain %.1f pp", 100 * z.overlap, 100 * m.overlap, gain)};
}

Outcome aggregation_trend() {
  RunConfig c = suite_config();
  c.scene.occlusion_rate = 0.6;
  c.model.lambda = kModerate;
  const Sweep s = sweep(c, "mode=singular,aggregated");
  const bool ok = beats(s.mean.at("mode=aggregated"), s.mean.at("mode=singular"), true);
  return {ok, "occlusion_rate 0.6: " + describe(s)};
}

// --- 8 ----------------------------------------------------------------------------

int run_cli(const std::string &args) {
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

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "gazereg_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto p = [&](const std::string &rel) { return (dir / rel).string(); };
  int bad_exit = 0;
  for (const std::string r : {"1", "2"}) {
    bad_exit += run_cli("synth --out " + p("data" + r) + " --count 8 --seed 11") != 0;
    bad_exit += run_cli("preprocess --data " + p("data" + r) + " --out " + p("tg" + r)) != 0;
    bad_exit += run_cli("train --data " + p("data" + r) + " --targets " + p("tg" + r) +
                        " --lambda 1 --epochs 4 --seed 3 --out " + p("m" + r + ".bin")) != 0;
    bad_exit += run_cli("eval --model " + p("m" + r + ".bin") + " --data " + p("data" + r) + " --targets " +
                        p("tg" + r) + " --report " + p("r" + r + ".json")) != 0;
  }
  if (bad_exit) return {false, fmt("%g commands exited nonzero", bad_exit)};
  const bool synth = tree(dir / "data1") == tree(dir / "data2");
  const bool prep = tree(dir / "tg1") == tree(dir / "tg2");
  const bool model = read_file(dir / "m1.bin") == read_file(dir / "m2.bin") &&
                     read_file(dir / "m1.log.jsonl") == read_file(dir / "m2.log.jsonl");
  const bool eval = read_file(dir / "r1.json") == read_file(dir / "r2.json");
  fs::remove_all(dir);
  return {synth && prep && model && eval,
          fmt("byte-identical reruns: synth %g, preprocess %g, train %g, eval %g", synth, prep, model, eval)};
}

// --- 9 ----------------------------------------------------------------------------

Outcome round_trips() {
  RngState rng(9);
  auto &st = rng.stream("fields");
  int flo_ok = 0, heat_ok = 0, pgm_ok = 0;
  for (int i = 0; i < 100; ++i) {
    const int h = 1 + int(st.below(40)), w = 1 + int(st.below(40));
    // .flo stores float32, so draw float-representable values
    const Tensor u = uniform_tensor(st, h, w, -50, 50).cast<float>().cast<double>();
    const Tensor v = uniform_tensor(st, h, w, -50, 50).cast<float>().cast<double>();
    const FlowField back = read_flo(write_flo(FlowField(u, v)));
    flo_ok += back.u == u && back.v == v;

    Heatmap hm{uniform_tensor(st, h, w, 0.0, 1.0), false};
    hm.mass = (hm.mass / hm.mass.sum()).cast<float>().cast<double>();
    hm.normalized = true;
    const Heatmap hb = decode_heatmap(encode_heatmap(hm));
    heat_ok += hb.mass == hm.mass && hb.normalized;

    const Frame f = uniform_tensor(st, h, w, 0.0, 1.0);
    const Bytes pgm = render_heatmap_pgm(f, uniform_tensor(st, h, w, 0.0, 1.0));
    const auto px = decode_pgm8(pgm);
    const std::string header = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    pgm_ok += px.rows() == h && px.cols() == w && pgm.size() == header.size() + std::size_t(h * w) &&
              std::equal(header.begin(), header.end(), pgm.begin());
  }
  return {flo_ok == 100 && heat_ok == 100 && pgm_ok == 100,
          fmt(".flo %g/100, heatmap %g/100 bit-exact; rendered PGM %g/100 parse as P5", flo_ok, heat_ok, pgm_ok)};
}

} // namespace

// Optional arguments select criteria by number, e.g. `acceptance 1 4 9`.
int main(int argc, char **argv) {
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  report(1, "gradient correctness", 60, gradient_check);
  report(2, "supervision oracles", 60, supervision_oracles);
  report(3, "occlusion check exactness", 60, occlusion_exactness);
  report(4, "gating invariance", 10, gating_invariance);
  report(5, "lambda trend", 900, lambda_trend);
  report(6, "alignment gain", 900, alignment_gain);
  report(7, "aggregation vs singular", 900, aggregation_trend);
  report(8, "determinism", 120, determinism);
  report(9, "format round trips", 10, round_trips);
  std::printf("%d/%d criteria passed\n", 9 - skipped - failures, 9 - skipped);
  return failures == 0 ? 0 : 1;
}
