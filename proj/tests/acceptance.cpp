// Acceptance run: one PASS/FAIL line per criterion. The training criteria
// drive the real command pipeline (gen-data, train, resume) on the desk
// configs in configs/, then evaluate the resulting checkpoints.
//
//   acceptance [--workdir DIR] [--configs DIR] [--only N[,N...]]

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "adaptct/cli.hpp"

using namespace adaptct;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

// ---------------------------------------------------------------------------
// 1. adjoint

Verdict adjoint_check() {
  const Projector p(Geometry::for_image(64));
  Rng rng(2024);
  double worst = 0.0;
  for (int pair = 0; pair < 100; ++pair) {
    Image x(64);
    for (double& v : x.pixels) v = uniform(rng, -1, 1);
    std::vector<double> y(p.geometry().detector_count);
    for (double& v : y) v = uniform(rng, -1, 1);
    for (int a = 0; a < kAngleCount; ++a) {
      const auto ax = p.forward(x, a);
      const Image aty = p.back(y, a);
      double lhs = 0, rhs = 0;
      for (std::size_t b = 0; b < y.size(); ++b) lhs += ax[b] * y[b];
      for (std::size_t k = 0; k < x.size(); ++k) rhs += x.pixels[k] * aty.pixels[k];
      worst = std::max(worst, std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs)));
    }
  }
  return {worst < 1e-10, "100 pairs x 180 angles at 64 px, worst relative discrepancy " + fmt("%.3g", worst)};
}

// ---------------------------------------------------------------------------
// 2. gradients

struct Tally {
  int checked = 0, passed = 0;
  void add(double analytic, double numeric) {
    ++checked;
    passed += rel_err(analytic, numeric) < 1e-4;
  }
  double rate() const { return checked ? static_cast<double>(passed) / checked : 0.0; }
};

void fd_sample(nn::Tensor& x, const nn::Tensor& analytic, const std::function<double()>& loss, int samples, Rng& rng,
               Tally& t) {
  constexpr double h = 1e-5;
  for (int s = 0; s < samples; ++s) {
    const std::size_t i = uniform_index(rng, x.size());
    const double keep = x[i];
    x[i] = keep + h;
    const double up = loss();
    x[i] = keep - h;
    const double down = loss();
    x[i] = keep;
    t.add(analytic[i], (up - down) / (2 * h));
  }
}

nn::Tensor random_tensor(std::vector<int> shape, Rng& rng) {
  nn::Tensor t(std::move(shape));
  for (double& v : t.values) v = uniform(rng, -1, 1);
  return t;
}

double weighted(const nn::Tensor& out, const nn::Tensor& w) {
  double s = 0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * w[i];
  return s;
}

// Which side of every kink a forward pass sits on: the sign of each leaky
// ReLU input and the winner of each pooling window.
std::vector<int> activation_pattern(const AgentForward& f) {
  std::vector<int> pat;
  for (std::size_t b = 0; b < 3; ++b) {
    const nn::Tensor& pre = f.encoder.norm_out[b];
    for (double v : pre.values) pat.push_back(v > 0);
    const int c = pre.dim(0), h = pre.dim(1), w = pre.dim(2);
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; y += 2)
        for (int x = 0; x < w; x += 2) {
          int best = 0;
          double top = -INFINITY;
          for (int k = 0; k < 4; ++k) {
            double a = pre[(static_cast<std::size_t>(ch) * h + y + k / 2) * w + x + k % 2];
            a = a > 0 ? a : 0.01 * a;
            if (a > top) top = a, best = k;
          }
          pat.push_back(best);
        }
  }
  for (const auto* head : {&f.actor, &f.critic})
    for (double v : head->hidden_pre) pat.push_back(v > 0);
  return pat;
}

Verdict gradient_check() {
  using namespace nn;
  Rng rng(99);
  std::vector<std::pair<std::string, Tally>> parts;
  {  // conv on a 32x32 map
    Tally t;
    Tensor in = random_tensor({2, 32, 32}, rng), k = random_tensor({4, 2, 3, 3}, rng), b = random_tensor({4}, rng);
    const Tensor w = random_tensor({4, 32, 32}, rng);
    Tensor din(in.shape), dk(k.shape), db(b.shape);
    conv2d_backward(in, k, w, &din, dk, db);
    auto loss = [&] { return weighted(conv2d(in, k, b), w); };
    fd_sample(in, din, loss, 40, rng, t);
    fd_sample(k, dk, loss, 40, rng, t);
    fd_sample(b, db, loss, 4, rng, t);
    parts.emplace_back("conv", t);
  }
  {
    Tally t;
    Tensor in = random_tensor({8, 32, 32}, rng), g = random_tensor({8}, rng), be = random_tensor({8}, rng);
    const Tensor w = random_tensor({8, 32, 32}, rng);
    GroupNormCache cache;
    group_norm(in, 4, g, be, &cache);
    Tensor dg(g.shape), dbe(be.shape);
    const Tensor din = group_norm_backward(cache, 4, g, w, dg, dbe);
    auto loss = [&] { return weighted(group_norm(in, 4, g, be), w); };
    fd_sample(in, din, loss, 40, rng, t);
    fd_sample(g, dg, loss, 8, rng, t);
    fd_sample(be, dbe, loss, 8, rng, t);
    parts.emplace_back("group_norm", t);
  }
  {
    Tally t;
    Tensor in = random_tensor({4, 32, 32}, rng);
    for (double& v : in.values)
      if (std::abs(v) < 1e-3) v = 0.5;  // keep clear of the kink
    const Tensor w = random_tensor(in.shape, rng);
    const Tensor din = leaky_relu_backward(in, w);
    fd_sample(in, din, [&] { return weighted(leaky_relu(in), w); }, 40, rng, t);
    parts.emplace_back("leaky_relu", t);
  }
  {
    Tally t;
    Tensor in({4, 32, 32});
    // distinct values: no ties inside a pooling window
    for (std::size_t i = 0; i < in.size(); ++i) in[i] = std::sin(1.0 + 0.37 * static_cast<double>(i));
    const Tensor w = random_tensor({4, 16, 16}, rng);
    MaxPoolCache cache;
    max_pool2(in, &cache);
    const Tensor din = max_pool2_backward(cache, w);
    fd_sample(in, din, [&] { return weighted(max_pool2(in), w); }, 40, rng, t);
    parts.emplace_back("max_pool", t);
  }
  {
    Tally t;
    Tensor x = random_tensor({1024}, rng), wt = random_tensor({16, 1024}, rng), b = random_tensor({16}, rng);
    const Tensor g = random_tensor({16}, rng);
    Tensor dw(wt.shape), db(b.shape), dx({1024});
    dx.values = dense_backward(x.values, wt, g.values, dw, db);
    auto loss = [&] {
      const auto o = dense(x.values, wt, b);
      double s = 0;
      for (int r = 0; r < 16; ++r) s += o[r] * g[r];
      return s;
    };
    fd_sample(x, dx, loss, 20, rng, t);
    fd_sample(wt, dw, loss, 20, rng, t);
    fd_sample(b, db, loss, 4, rng, t);
    parts.emplace_back("dense", t);
  }
  {
    Tally t;
    Tensor z = random_tensor({180}, rng);
    const Tensor w = random_tensor({180}, rng);
    Tensor dz({180});
    dz.values = softmax_backward(softmax(z.values), w.values);
    auto loss = [&] {
      Tensor q({180});
      q.values = softmax(z.values);
      return weighted(q, w);
    };
    fd_sample(z, dz, loss, 40, rng, t);
    parts.emplace_back("softmax", t);
  }
  {  // the full combined actor-critic loss on a 32x32 input
    Tally t;
    AgentConfig ac;
    ac.image_size = 32;
    ac.hidden = 64;
    TrainConfig tc;
    Rng init(5);
    AgentParams p = init_agent(ac, init);
    p.for_each([&](const std::string&, Tensor& x) {
      if (x.rank() == 1)
        for (double& v : x.values) v += uniform(rng, -0.2, 0.2);
    });
    Image img(32);
    for (double& v : img.pixels) v = uniform01(rng);
    std::vector<double> b(kAngleCount, 0.0);
    b[12] = b[100] = 1.0;
    const int action = 57;
    const AgentForward f = agent_forward(img, b, p);
    const std::vector<int> base = activation_pattern(f);
    const double delta = 2.5, target = f.value + delta;
    AgentParams pg = p.zeros_like(), vg = p.zeros_like();
    agent_backward(f, p, policy_logit_gradient(f.probs, action, delta, tc), -2.0 * tc.critic_weight * delta, pg, vg);
    std::vector<Tensor*> ps, gp, gv;
    p.for_each([&](const std::string&, Tensor& x) { ps.push_back(&x); });
    pg.for_each([&](const std::string&, Tensor& x) { gp.push_back(&x); });
    vg.for_each([&](const std::string&, Tensor& x) { gv.push_back(&x); });
    // A central difference straddling a kink measures neither one-sided
    // derivative; such coordinates are replaced by fresh draws.
    constexpr double h = 1e-5;
    int skipped = 0;
    auto probe = [&](bool& crossed) {
      const AgentForward g = agent_forward(img, b, p);
      crossed = crossed || activation_pattern(g) != base;
      return combined_loss(g, action, delta, target, tc);
    };
    for (std::size_t k = 0; k < ps.size(); ++k) {
      Tensor total = *gp[k];
      for (std::size_t i = 0; i < total.size(); ++i) total[i] += (*gv[k])[i];
      for (int s = 0; s < 20;) {
        const std::size_t i = uniform_index(rng, total.size());
        const double keep = (*ps[k])[i];
        bool crossed = false;
        (*ps[k])[i] = keep + h;
        const double up = probe(crossed);
        (*ps[k])[i] = keep - h;
        const double down = probe(crossed);
        (*ps[k])[i] = keep;
        if (crossed) {
          ++skipped;
          continue;
        }
        t.add(total[i], (up - down) / (2 * h));
        ++s;
      }
    }
    parts.emplace_back("combined_loss (" + std::to_string(skipped) + " kink-straddling draws replaced)", t);
  }
  int checked = 0;
  bool every = true;
  std::string detail;
  for (const auto& [name, t] : parts) {
    checked += t.checked;
    every = every && t.rate() >= 0.99;
    detail += (detail.empty() ? "" : ", ") + name + " " + std::to_string(t.passed) + "/" + std::to_string(t.checked);
  }
  return {every && checked >= 300, std::to_string(checked) + " coordinates; " + detail};
}

// ---------------------------------------------------------------------------
// 3. reward identities

Verdict reward_identities() {
  DatasetSpec ds;
  ds.image_size = 64;
  ds.count = 100;
  ds.shape_kinds = {ShapeKind::ellipse, ShapeKind::triangle, ShapeKind::circle};
  const auto data = generate_dataset(ds);
  auto proj = std::make_shared<const Projector>(Geometry::for_image(64));
  ReconConfig rc;
  rc.iterations = 50;
  const Environment e2e(proj, rc, RewardMode::end_to_end), inc(proj, rc, RewardMode::incremental);
  int nonzero = 0;
  double worst = 0.0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    Rng rng = stream_rng(31, k);
    const int horizon = 2 + static_cast<int>(k % 4);
    const double noise = k % 2 ? 0.05 : 0.0;
    EpisodeState a = e2e.reset(data[k].image, horizon, noise), b = inc.reset(data[k].image, horizon, noise);
    double total = 0.0;
    while (!a.done()) {
      const int angle = static_cast<int>(uniform_index(rng, kAngleCount));
      Rng ra = rng, rb = rng;
      const StepResult r = e2e.step(a, angle, ra);
      if (!r.done && r.reward != 0.0) ++nonzero;
      total += inc.step(b, angle, rb).reward;
      rng = ra;
    }
    worst = std::max(worst, std::abs(total - (b.psnr_curve.back() - psnr(Image(64), data[k].image))));
  }
  return {nonzero == 0 && worst < 1e-9, "100 episodes: " + std::to_string(nonzero) +
                                            " non-zero intermediate end-to-end rewards; worst telescoping error " +
                                            fmt("%.3g", worst)};
}

// ---------------------------------------------------------------------------
// 4-8. desk-scale training runs through the command pipeline

struct Cmd {
  std::ostringstream out, err;
};

int run_cmd(const std::function<int(const cli::Options&, std::ostream&, std::ostream&)>& f, const cli::Options& o,
            const fs::path& log) {
  Cmd c;
  const int code = f(o, c.out, c.err);
  std::ofstream(log, std::ios::app) << c.out.str() << c.err.str();
  if (code != 0) std::cerr << c.err.str();
  return code;
}

struct RunResult {
  bool ok = false;
  double learned = 0, equidistant = 0, conc_learned = 0, conc_equi = 0;
  bool conc_defined = false;
  double first500 = 0, last500 = 0;
};

// gen-data + train into dir/run_a; evaluates the final checkpoint.
RunResult desk_run(const fs::path& cfg, const fs::path& dir, const std::string& run_name) {
  RunResult res;
  const fs::path log = dir / "log.txt";
  fs::create_directories(dir);
  cli::Options gen;
  gen.config_path = cfg.string();
  gen.out = (dir / "data").string();
  if (!fs::exists(dir / "data/test.ctph") && run_cmd(cli::cmd_gen_data, gen, log) != 0) return res;
  cli::Options tr;
  tr.config_path = cfg.string();
  tr.out = (dir / run_name).string();
  tr.data_dir = gen.out;
  const auto t0 = std::chrono::steady_clock::now();
  if (run_cmd(cli::cmd_train, tr, log) != 0) return res;
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  std::cout << "  [" << dir.filename().string() << "/" << run_name << "] trained in " << fmt("%.1f", minutes) << " min\n"
            << std::flush;

  const CsvTable m = parse_csv(slurp(dir / run_name / "metrics.csv"));
  const std::size_t n = m.rows.size();
  for (std::size_t r = 0; r < std::min<std::size_t>(500, n); ++r) res.first500 += csv_number(m, r, 1) / 500.0;
  for (std::size_t r = n >= 500 ? n - 500 : 0; r < n; ++r) res.last500 += csv_number(m, r, 1) / 500.0;

  const RunConfig rc = load_config(cfg.string());
  const Checkpoint ck = load_checkpoint((dir / run_name / "checkpoint.ctac").string());
  const PhantomCorpus test = load_phantoms((dir / "data/test.ctph").string());
  const Environment env(std::make_shared<const Projector>(rc.geometry()), rc.recon, rc.env.reward_mode);
  const double noise = rc.eval_noise_level();
  const int m_angles = rc.env.horizon;
  const EvalReport L = evaluate(PolicySpec::learned(ck.state.params), env, test.phantoms, m_angles, noise, rc.eval.seed);
  const EvalReport Q = evaluate(PolicySpec::equidistant(), env, test.phantoms, m_angles, noise, rc.eval.seed);
  std::ofstream(dir / run_name / "report_learned_greedy.csv") << report_csv(L);
  std::ofstream(dir / run_name / "report_equidistant.csv") << report_csv(Q);
  res.learned = L.mean;
  res.equidistant = Q.mean;
  const auto cl = angle_concentration(L, 2), cq = angle_concentration(Q, 2);
  res.conc_defined = cl.defined && cq.defined;
  res.conc_learned = cl.median;
  res.conc_equi = cq.median;
  std::cout << "  [" << dir.filename().string() << "/" << run_name << "] learned greedy " << summary_cell(L)
            << ", equidistant " << summary_cell(Q) << " dB; mean return first/last 500 episodes "
            << fmt("%.3f", res.first500) << " / " << fmt("%.3f", res.last500) << "\n"
            << std::flush;
  res.ok = true;
  return res;
}

// Resumes dir/run_a's mid-run checkpoint into dir/run_resumed, seeded with
// run_a's metrics up to that point, and compares the outputs.
Verdict persistence(const fs::path& cfg, const fs::path& dir) {
  const RunConfig rc = load_config(cfg.string());
  const int at = rc.train.checkpoint_every;
  const fs::path a = dir / "run_a", b = dir / "run_b", r = dir / "run_resumed";
  const bool same = slurp(a / "metrics.csv") == slurp(b / "metrics.csv") && !slurp(a / "metrics.csv").empty();
  fs::remove_all(r);
  fs::create_directories(r);
  const fs::path ck = a / ("checkpoint_" + std::to_string(at) + ".ctac");
  if (!fs::exists(ck)) return {false, "missing " + ck.string()};
  fs::copy_file(ck, r / "start.ctac");
  {
    std::istringstream in(slurp(a / "metrics.csv"));
    std::ofstream out(r / "metrics.csv", std::ios::binary);
    std::string line;
    for (int k = 0; k <= at && std::getline(in, line); ++k) out << line << '\n';
  }
  cli::Options o;
  o.resume = (r / "start.ctac").string();
  o.out = r.string();
  o.data_dir = (dir / "data").string();
  if (run_cmd(cli::cmd_train, o, dir / "log.txt") != 0) return {false, "resume failed"};
  const bool metrics_equal = slurp(r / "metrics.csv") == slurp(a / "metrics.csv");
  const bool ck_equal = slurp(r / "checkpoint.ctac") == slurp(a / "checkpoint.ctac");
  return {same && metrics_equal && ck_equal,
          std::string("repeat run metrics ") + (same ? "identical" : "DIFFER") + "; resumed at episode " +
              std::to_string(at) + ": metrics " + (metrics_equal ? "identical" : "DIFFER") + ", final checkpoint " +
              (ck_equal ? "identical" : "DIFFERS")};
}

// ---------------------------------------------------------------------------
// 9. SIRT sanity

Verdict sirt_sanity() {
  const int n = 128;
  const Projector p(Geometry::for_image(n));
  ReconConfig rc;  // 150 iterations
  Rng none(0);
  std::string detail;
  bool ok = true;
  for (ShapeKind kind : {ShapeKind::circle, ShapeKind::ellipse, ShapeKind::triangle, ShapeKind::pentagon, ShapeKind::hexagon}) {
    ShapeSpec s;
    s.kind = kind;
    s.rotation_deg = 35.0;
    s.scale = 0.35;
    s.center_x = s.center_y = (n - 1) / 2.0;
    const Image truth = rasterize_shape(s, n);
    std::vector<Measurement> ms;
    for (int a = 0; a < kAngleCount; ++a) ms.push_back(simulate_measurement(truth, a, 0.0, none, p));
    const double res = relative_residual(ms, p, sirt_reconstruct(ms, p, rc, Image(n)));
    ok = ok && res < 0.05;
    detail += std::string(to_string(kind)) + " " + fmt("%.4f", res) + ", ";
  }
  DatasetSpec ds;
  ds.image_size = n;
  ds.count = 20;
  ds.shape_kinds = {ShapeKind::circle, ShapeKind::ellipse, ShapeKind::triangle};
  const auto batch = generate_dataset(ds);
  double previous = -1e9;
  for (int m : {3, 5, 7}) {
    double total = 0;
    for (const auto& ph : batch) {
      std::vector<Measurement> ms;
      for (int a : equidistant_angles(m)) ms.push_back(simulate_measurement(ph.image, a, 0.0, none, p));
      total += psnr(sirt_reconstruct(ms, p, rc, Image(n)), ph.image);
    }
    const double mean = total / batch.size();
    ok = ok && mean >= previous;
    detail += "M=" + std::to_string(m) + " " + fmt("%.2f", mean) + " dB" + (m < 7 ? ", " : "");
    previous = mean;
  }
  return {ok, "residuals after 150 iterations: " + detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string workdir = "acceptance_runs";
  std::string configs = ADAPTCT_CONFIG_DIR;
  std::vector<int> only;
  app.add_option("--workdir", workdir, "Directory for the training runs")->capture_default_str();
  app.add_option("--configs", configs, "Directory holding the desk configs")->capture_default_str();
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  auto want = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };
  const fs::path work(workdir), cfgdir(configs);

  int failures = 0;
  auto report = [&](int id, const std::string& name, const Verdict& v) {
    std::cout << "criterion " << id << ": " << (v.pass ? "PASS" : "FAIL") << "  " << name << " -- " << v.detail << "\n"
              << std::flush;
    failures += !v.pass;
  };

  if (want(1)) report(1, "adjoint correctness", adjoint_check());
  if (want(2)) report(2, "gradient fidelity", gradient_check());
  if (want(3)) report(3, "reward identities", reward_identities());
  if (want(9)) report(9, "SIRT sanity", sirt_sanity());

  const bool need_ellipse = want(4) || want(6) || want(7) || want(8);
  RunResult ell;
  if (need_ellipse) ell = desk_run(cfgdir / "desk_ellipse.cfg", work / "ellipse", "run_a");
  if (want(4)) {
    const double gap = ell.learned - ell.equidistant;
    report(4, "adaptive gain on ellipses",
           {ell.ok && gap >= 0.3, "learned " + fmt("%.3f", ell.learned) + " dB vs equidistant " +
                                      fmt("%.3f", ell.equidistant) + " dB, gap " + fmt("%+.3f", gap) + " (need >= +0.3)"});
  }
  if (want(5)) {
    const RunResult c = desk_run(cfgdir / "desk_circle.cfg", work / "circle", "run_a");
    const double d = c.learned - c.equidistant;
    report(5, "no-preference parity on circles",
           {c.ok && std::abs(d) <= 1.0 && d <= 0.2, "learned " + fmt("%.3f", c.learned) + " dB vs equidistant " +
                                                       fmt("%.3f", c.equidistant) + " dB, difference " +
                                                       fmt("%+.3f", d) + " (need |d| <= 1.0 and d <= 0.2)"});
  }
  if (want(6)) {
    report(6, "angle concentration on ellipses",
           {ell.ok && ell.conc_defined && ell.conc_learned < ell.conc_equi,
            "median distance to the major axis, steps 2..3: learned " + fmt("%.2f", ell.conc_learned) +
                " deg vs equidistant " + fmt("%.2f", ell.conc_equi) + " deg"});
  }
  if (want(7)) {
    const RunResult noisy = desk_run(cfgdir / "desk_ellipse_noise5.cfg", work / "ellipse_noise5", "run_a");
    const double clean = ell.learned - ell.equidistant, gap = noisy.learned - noisy.equidistant;
    report(7, "noise narrows the gap",
           {ell.ok && noisy.ok && gap < clean,
            "gap with 5% noise " + fmt("%+.3f", gap) + " dB vs noiseless " + fmt("%+.3f", clean) + " dB"});
  }
  if (want(8)) {
    const RunResult again = desk_run(cfgdir / "desk_ellipse.cfg", work / "ellipse", "run_b");
    report(8, "determinism and persistence",
           again.ok && ell.ok ? persistence(cfgdir / "desk_ellipse.cfg", work / "ellipse") : Verdict{false, "runs failed"});
  }
  return failures == 0 ? 0 : 1;
}
