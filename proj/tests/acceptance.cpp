// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   acceptance [--work DIR] [--reuse] [--only 1,2,...]
//
// The full run generates a corpus and trains a bundle through the bdci tool
// (tens of minutes on one core).  --reuse keeps a previously trained bundle
// in DIR when its corpus manifest still matches; the training-time part of
// criterion 4 is then reported from the saved timing.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "bdci/bdci_all.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace bdci;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int shell(const std::string& cmd) {
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

const std::string kCli = BDCI_CLI_PATH;

// ---------------------------------------------------------------- criterion 1

RDCurveSamples scaled(const RDCurveSamples& s, double rate_factor, double quality_shift) {
  std::vector<RDPoint> pts;
  for (const auto& p : s.points()) pts.push_back({p.rate * rate_factor, p.quality + quality_shift});
  return validate_samples(pts, s.metric_name(), "shifted");
}

Outcome ac1_analytic_shifts() {
  const auto t0 = Clock::now();
  std::vector<RDCurveSamples> anchors;
  anchors.push_back(read_rd_file(std::string(BDCI_FIXTURES) + "/anchor6.csv"));
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto fam = synth::kAllFamilies[seed % 4];
    const auto c = synth::gen_curve(fam, 500 + seed, synth::MetricKind::PsnrLike);
    anchors.push_back(synth::sample_points(c, 5 + static_cast<int>(seed % 4), synth::SamplingPolicy::Jittered, seed));
  }
  double worst_br = 0.0, worst_q = 0.0;
  int checks = 0;
  for (const auto& a : anchors) {
    const auto rate = scaled(a, 0.8, 0.0);
    const auto qual = scaled(a, 1.0, 0.5);
    for (Method m : {Method::Cubic, Method::Csi, Method::Pchip, Method::Akima}) {
      const BDValue br = compute_bd(a, rate, Mode::BDRate, m);
      const BDValue q = compute_bd(a, qual, Mode::BDQuality, m);
      worst_br = std::max(worst_br, std::abs(*br.delta_percent + 20.0));
      worst_q = std::max(worst_q, std::abs(q.delta - 0.5));
      checks += 2;
    }
  }
  const double secs = seconds_since(t0);
  // -20% is checked in percent units; 1e-6 absolute on the percentage.
  const bool pass = worst_br <= 1e-6 && worst_q <= 1e-6 && secs < 1.0;
  return {pass, fmt("%d checks, max |BD-BR+20%%| %.2e, max |BD-Q-0.5| %.2e, %.3f s", checks, worst_br, worst_q, secs)};
}

// ---------------------------------------------------------------- criterion 2

Outcome ac2_interpolators() {
  const auto t0 = Clock::now();
  Rng rng(2002);
  double worst = 0.0;
  const Method methods[] = {Method::Cubic, Method::Csi, Method::Pchip, Method::Akima};
  for (int t = 0; t < 100; ++t) {
    const Method m = methods[t % 4];
    const int n = 5 + static_cast<int>(rng.index(4));
    std::vector<double> xs(n), ys(n);
    double x = rng.uniform(-2, 2), y = rng.uniform(-5, 5);
    for (int i = 0; i < n; ++i) {
      xs[i] = x += rng.uniform(0.2, 1.5);
      ys[i] = y += rng.uniform(0.05, 3.0);
    }
    const XYSeries s(xs, ys, Mode::BDQuality);
    const Fit f = fit_series(s, m);
    const double lo = xs.front() + rng.uniform(0, 0.3) * (xs.back() - xs.front());
    const double hi = xs.back() - rng.uniform(0, 0.3) * (xs.back() - xs.front());
    const double exact = integrate_fit(f, IntegrationInterval(lo, hi));
    const double simpson = testing::composite_simpson([&](double u) { return evaluate(f, u); }, lo, hi, 1000000);
    worst = std::max(worst, std::abs(exact - simpson) / std::max(1.0, std::abs(simpson)));
  }
  std::size_t violations = 0;
  for (int t = 0; t < 100; ++t) {
    const int n = 4 + static_cast<int>(rng.index(8));
    std::vector<double> xs(n), ys(n);
    double x = 0, y = 0;
    const bool inc = t % 2 == 0;
    for (int i = 0; i < n; ++i) {
      xs[i] = x += rng.uniform(0.01, 2.0);
      // Occasional near-flat steps and jumps stress the limiter.
      const double step = rng.bernoulli(0.3) ? rng.uniform(1e-6, 1e-3) : rng.uniform(0.1, 10.0);
      ys[i] = y += inc ? step : -step;
    }
    const PiecewiseCubic p = fit_pchip(XYSeries(xs, ys, Mode::BDQuality));
    double prev = evaluate(p, xs.front());
    for (int g = 1; g <= 10000; ++g) {
      const double u = std::min(xs.back(), xs.front() + (xs.back() - xs.front()) * g / 10000.0);
      const double v = evaluate(p, u);
      if (inc ? v < prev : v > prev) ++violations;
      prev = v;
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = worst <= 1e-8 && violations == 0 && secs < 30.0;
  return {pass, fmt("max rel err vs 1e6-panel Simpson %.2e over 100 fits, %zu monotonicity violations on 100x1e4 grid, %.1f s",
                    worst, violations, secs)};
}

// ---------------------------------------------------------------- criterion 3

Outcome ac3_gradients() {
  const auto t0 = Clock::now();
  Rng rng(303);
  std::size_t checked = 0, bad = 0;
  double worst = 0.0;
  for (int in : {8, 9}) {
    nn::MLP m = nn::MLP::standard(in);
    nn::init_parameters(m, rng);
    // Give the head real weights so every layer carries gradient.
    auto head = m.weights(m.num_layers() - 1);
    for (Eigen::Index r = 0; r < head.rows(); ++r)
      for (Eigen::Index c = 0; c < head.cols(); ++c) head(r, c) = rng.uniform(-0.1, 0.1);
    std::vector<double> x(in);
    for (double& v : x) v = rng.uniform();
    const double target = 0.3;
    const auto g = nn::backward(m, x, target);
    auto loss = [&] {
      const nn::Output o = nn::forward(m, x);
      return nn::nll_loss(o.mu, o.log_sigma, target);
    };
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
      const std::size_t begin = m.weight_offset(l);
      const std::size_t end = m.bias_offset(l) + static_cast<std::size_t>(m.layer_dims()[l + 1]);
      for (int k = 0; k < 50; ++k) {
        const std::size_t i = begin + rng.index(end - begin);
        double& p = m.parameters()[i];
        const double keep = p;
        p = keep + 1e-4;
        const double up = loss();
        p = keep - 1e-4;
        const double down = loss();
        p = keep;
        const double fd = (up - down) / 2e-4;
        const double err = std::abs(fd - g[i]);
        const double tol = std::max(1e-6, 1e-4 * std::max(std::abs(fd), std::abs(g[i])));
        ++checked;
        if (err > tol) ++bad;
        worst = std::max(worst, err / std::max(1e-6, std::abs(fd)));
      }
    }
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && secs < 10.0,
          fmt("%zu parameters (50 per layer, widths 8 and 9), %zu outside tolerance, worst rel %.2e, %.2f s",
              checked, bad, worst, secs)};
}

// ----------------------------------------------------------- criteria 4 to 7

struct Trained {
  ModelBundle bundle;
  std::string bundle_sha;
  double train_seconds = 0.0;
  std::size_t records = 0;
  std::vector<synth::BDCase> cases;
  std::string error;
};

constexpr const char* kCorpusArgs = "--curves 42000 --pairs 200 --seed 7";
constexpr const char* kTrainArgs = "--seed 7";

Trained prepare(const fs::path& work, bool reuse) {
  Trained t;
  const fs::path corpus = work / "corpus";
  const fs::path bundle = work / "bundle.bin";
  const fs::path timing = work / "train_seconds.txt";
  const fs::path stamp = work / "stamp.txt";
  const std::string wanted = std::string(kCorpusArgs) + " | " + kTrainArgs + " | " + std::string(kToolVersion);

  bool have = reuse && fs::exists(bundle) && fs::exists(timing) && fs::exists(stamp) &&
              synth::read_text_file(stamp) == wanted;
  if (have) {
    // The corpus generator is deterministic; regenerate and compare.
    fs::remove_all(work / "corpus_check");
    have = shell(kCli + " gen-corpus --out " + (work / "corpus_check").string() + " " + kCorpusArgs + " >/dev/null 2>&1") == 0 &&
           synth::read_text_file(corpus / "train" / "manifest.json") ==
               synth::read_text_file(work / "corpus_check" / "train" / "manifest.json");
    fs::remove_all(work / "corpus_check");
  }
  if (!have) {
    fs::remove_all(work);
    fs::create_directories(work);
    if (shell(kCli + " gen-corpus --out " + corpus.string() + " " + kCorpusArgs + " >/dev/null 2>" +
              (work / "gen.log").string()) != 0) {
      t.error = "gen-corpus failed";
      return t;
    }
    const auto t0 = Clock::now();
    if (shell(kCli + " train --corpus " + corpus.string() + " --out " + bundle.string() + " " + kTrainArgs +
              " 2>" + (work / "train.log").string()) != 0) {
      t.error = "train failed, see " + (work / "train.log").string();
      return t;
    }
    t.train_seconds = seconds_since(t0);
    synth::write_text_file(timing, fmt("%.3f\n", t.train_seconds));
    synth::write_text_file(stamp, wanted);
  } else {
    t.train_seconds = std::stod(synth::read_text_file(timing));
  }
  const auto bytes = read_file_bytes(bundle.string());
  t.bundle = load_bundle(bytes);
  t.bundle_sha = to_hex(sha256(bytes));
  t.records = synth::load_corpus(corpus / "train", false, false).manifest.at("counts").at("records").get<std::size_t>();
  t.cases = synth::load_corpus(corpus / "test", false, true).cases;
  return t;
}

const std::vector<int> kAllN = {4, 5, 6, 7, 8};

Outcome ac4_calibration(const Trained& t, const bench::CalibrationReport& cal, double eval_seconds) {
  const double frac = cal.outside_fraction();
  const bool pass = t.records >= 50000 && cal.evaluated >= 1000 && frac <= 0.02 &&
                    t.train_seconds <= 1800.0 && eval_seconds < 60.0;
  return {pass, fmt("%zu/%zu outside 3-sigma (%.2f%%; br %.2f%%, quality %.2f%%), %zu training records, training %.0f s, evaluation %.1f s",
                    cal.outside, cal.evaluated, 100.0 * frac, 100.0 * cal.outside_fraction(Mode::BDRate),
                    100.0 * cal.outside_fraction(Mode::BDQuality), t.records, t.train_seconds, eval_seconds)};
}

Outcome ac5_widths(const bench::CalibrationReport& cal, double eval_seconds) {
  bool pass = eval_seconds < 60.0;
  std::string detail;
  for (Mode m : synth::kAllModes) {
    const double w4 = cal.widths.at({m, 4}).mean_width;
    const double w6 = cal.widths.at({m, 6}).mean_width;
    const double w8 = cal.widths.at({m, 8}).mean_width;
    pass = pass && w4 > w6 && w6 > w8;
    detail += fmt("%s mean width n=4/6/8: %.4g > %.4g > %.4g; ", std::string(to_string(m)).c_str(), w4, w6, w8);
  }
  return {pass, detail.substr(0, detail.size() - 2)};
}

Outcome ac6_bias(const bench::BiasReport& bias) {
  const double ours = bias.overall.at({Method::BdciMean, Mode::BDRate}).mse;
  const double pchip = bias.overall.at({Method::Pchip, Mode::BDRate}).mse;
  std::istringstream table(bias.to_table());
  std::string line;
  while (std::getline(table, line)) std::printf("    %s\n", line.c_str());
  return {ours <= 1.25 * pchip, fmt("BD-BR MSE bdci-mean %.4e vs pchip %.4e (ratio %.3f, limit 1.25)", ours, pchip, ours / pchip)};
}

Outcome ac7_runtime(const ModelBundle& b) {
  const auto rows = bench::eval_runtime(b, {4, 6, 8}, 1000);
  const bool pass = rows[0].median_ms <= 50.0 && rows[2].median_ms <= 100.0;
  return {pass, fmt("median over 1000 reps: n=4 %.3f ms, n=6 %.3f ms, n=8 %.3f ms", rows[0].median_ms,
                    rows[1].median_ms, rows[2].median_ms)};
}

// ---------------------------------------------------------------- criterion 8

Outcome ac8_determinism(const fs::path& work) {
  const auto t0 = Clock::now();
  std::vector<std::string> files = {"corpus/train/manifest.json", "corpus/train/records.txt",
                                    "corpus/test/cases.jsonl",    "bundle.bin",
                                    "bundle.bin.report.json",     "bench.json",
                                    "bench.json.widths.csv"};
  std::array<std::vector<std::string>, 2> contents;
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = work / ("determinism_" + std::to_string(run));
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string cd = "cd " + dir.string() + " && ";
    const bool ok =
        shell(cd + kCli + " gen-corpus --out corpus --curves 4000 --pairs 20 --seed 11 >/dev/null 2>&1") == 0 &&
        shell(cd + kCli + " train --corpus corpus --out bundle.bin --seed 11 --epochs 3 >/dev/null 2>&1") == 0 &&
        shell(cd + kCli + " bench --corpus corpus --models bundle.bin --report bench.json >/dev/null 2>&1") == 0;
    if (!ok) return {false, "pipeline failed in run " + std::to_string(run)};
    for (const auto& f : files) contents[run].push_back(synth::read_text_file(dir / f));
  }
  std::string differing;
  for (std::size_t i = 0; i < files.size(); ++i)
    if (contents[0][i] != contents[1][i]) differing += " " + files[i];
  const std::string sha = sha256_hex(contents[0][3]);
  return {differing.empty(), differing.empty()
                                 ? fmt("gen->train->bench twice: %zu artifacts byte-identical, bundle %.16s..., %.1f s",
                                       files.size(), sha.c_str(), seconds_since(t0))
                                 : "differs:" + differing};
}

// ---------------------------------------------------------------- criterion 9

Outcome ac9_properties() {
  Rng rng(909);
  std::size_t fail_anti = 0, fail_comm = 0, fail_affine = 0, fail_bundle = 0;
  const int trials = 1000;

  for (int t = 0; t < trials; ++t) {
    const auto a = synth::gen_curve(synth::kAllFamilies[t % 4], 9000 + t, synth::MetricKind::PsnrLike);
    const auto b = synth::gen_curve(synth::kAllFamilies[(t / 4) % 4], 19000 + t, synth::MetricKind::PsnrLike);
    const auto sa = synth::sample_points(a, 4 + t % 5, synth::SamplingPolicy::Jittered, t);
    const auto sb = synth::sample_points(b, 4 + (t / 5) % 5, synth::SamplingPolicy::UniformLogX, t);
    const Method m = t % 5 == 0 || std::min(sa.size(), sb.size()) < 5 ? Method::Pchip
                                                                      : std::array{Method::Cubic, Method::Csi, Method::Akima}[t % 3];
    try {
      const double ab = compute_bd(sa, sb, Mode::BDRate, m).delta;
      const double ba = compute_bd(sb, sa, Mode::BDRate, m).delta;
      if (std::abs(ab + ba) > 1e-12 * std::max(1.0, std::abs(ab))) ++fail_anti;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptyIntersection) ++fail_anti;
    }
    for (Mode mode : synth::kAllModes) {
      const XYSeries xa = project_axes(to_log_rate(sa), mode), xb = project_axes(to_log_rate(sb), mode);
      int thrown = 0;
      std::optional<IntegrationInterval> i1, i2;
      try { i1 = intersect_intervals(xa, xb); } catch (const Error&) { ++thrown; }
      try { i2 = intersect_intervals(xb, xa); } catch (const Error&) { ++thrown; }
      if (thrown == 1 || (i1 && (i1->lo != i2->lo || i1->hi != i2->hi))) ++fail_comm;
    }
  }

  for (int t = 0; t < trials; ++t) {
    const int n = 4 + static_cast<int>(rng.index(5));
    std::vector<double> xs(n), ys(n), xs2(n), ys2(n);
    double x = rng.uniform(-5, 5), y = rng.uniform(-5, 5);
    const double sx = rng.log_uniform(0.01, 100), ox = rng.uniform(-50, 50);
    const double sy = (rng.bernoulli(0.5) ? 1 : -1) * rng.log_uniform(0.01, 100), oy = rng.uniform(-50, 50);
    for (int i = 0; i < n; ++i) {
      xs[i] = x += rng.uniform(0.1, 2);
      ys[i] = y += rng.uniform(0.1, 2);
      xs2[i] = sx * xs[i] + ox;
      ys2[i] = sy * ys[i] + oy;
    }
    const auto [na, pa] = normalize_series(XYSeries(xs, ys, Mode::BDQuality));
    const auto [nb, pb] = normalize_series(XYSeries(xs2, ys2, Mode::BDQuality));
    const auto ca = canonical_orientation(na).first, cb = canonical_orientation(nb).first;
    const double lo = xs[0] + (xs[n - 1] - xs[0]) * rng.uniform(0, 0.4);
    const double hi = xs[0] + (xs[n - 1] - xs[0]) * rng.uniform(0.6, 1);
    try {
      const auto s1 = segment_interval(ca.xs(), pa.to_x(lo), pa.to_x(hi));
      const auto s2 = segment_interval(cb.xs(), pb.to_x(sx * lo + ox), pb.to_x(sx * hi + ox));
      bool same = s1.size() == s2.size();
      for (std::size_t k = 0; same && k < s1.size(); ++k) {
        same = s1[k].category == s2[k].category;
        const auto i1 = build_input(s1[k], ca), i2 = build_input(s2[k], cb);
        for (std::size_t j = 0; same && j < i1.size(); ++j) same = std::abs(i1[j] - i2[j]) <= 1e-9;
      }
      if (!same) ++fail_affine;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateSpan) ++fail_affine;
    }
  }

  for (int t = 0; t < trials; ++t) {
    std::map<SegmentCategory, nn::MLP> models;
    const int hidden = 1 + static_cast<int>(rng.index(16));
    for (SegmentCategory c : kAllCategories) {
      nn::MLP m({input_width(c), hidden, hidden, 2});
      nn::init_parameters(m, rng);
      for (double& p : m.parameters()) p = rng.uniform(-3, 3);
      models.emplace(c, std::move(m));
    }
    const ModelBundle back = load_bundle(save_bundle(models, {{"trial", t}}));
    bool same = back.metadata().at("trial") == t;
    for (SegmentCategory c : kAllCategories) {
      std::vector<double> in(input_width(c));
      for (double& v : in) v = rng.uniform();
      const nn::Output o1 = nn::forward(models.at(c), in), o2 = nn::forward(back.model(c), in);
      same = same && o1.mu == o2.mu && o1.log_sigma == o2.log_sigma && back.model(c) == models.at(c);
    }
    if (!same) ++fail_bundle;
  }
  const bool pass = fail_anti + fail_comm + fail_affine + fail_bundle == 0;
  return {pass, fmt("failures over %d trials each: antisymmetry %zu, intersect commutativity %zu, affine invariance %zu, bundle round trip %zu",
                    trials, fail_anti, fail_comm, fail_affine, fail_bundle)};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::path(BDCI_BUILD_DIR) / "acceptance_work";
  bool reuse = false;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--reuse") {
      reuse = true;
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else {
      std::fprintf(stderr, "usage: acceptance [--work DIR] [--reuse] [--only 1,2,...]\n");
      return 64;
    }
  }
  auto wanted = [&](int k) { return only.empty() || only.count(k); };

  int failed = 0;
  auto report = [&](int k, const char* name, const Outcome& o) {
    std::printf("AC%d %s %s: %s\n", k, o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  };
  auto guarded = [&](int k, const char* name, const std::function<Outcome()>& fn) {
    if (!wanted(k)) return;
    try {
      report(k, name, fn());
    } catch (const std::exception& e) {
      report(k, name, {false, std::string("exception: ") + e.what()});
    }
  };

  guarded(1, "analytic shifts", ac1_analytic_shifts);
  guarded(2, "interpolator oracles", ac2_interpolators);
  guarded(3, "gradient check", ac3_gradients);

  if (wanted(4) || wanted(5) || wanted(6) || wanted(7)) {
    std::optional<Trained> t;
    try {
      t = prepare(work / "main", reuse);
    } catch (const std::exception& e) {
      t = Trained{};
      t->error = e.what();
    }
    if (!t->error.empty()) {
      for (int k = 4; k <= 7; ++k)
        if (wanted(k)) report(k, "trained bundle", {false, "setup failed: " + t->error});
    } else {
      const std::vector<Method> estimators = {Method::Cubic, Method::Csi, Method::Pchip, Method::Akima, Method::BdciMean};
      const auto e0 = Clock::now();
      const auto cal = bench::eval_calibration(t->cases, t->bundle, kAllN);
      const double eval_seconds = seconds_since(e0);
      guarded(4, "calibration", [&] { return ac4_calibration(*t, cal, eval_seconds); });
      guarded(5, "width monotonicity", [&] { return ac5_widths(cal, eval_seconds); });
      guarded(6, "estimation bias", [&] {
        return ac6_bias(bench::eval_bias(t->cases, estimators, {Mode::BDRate, Mode::BDQuality}, kAllN, &t->bundle));
      });
      guarded(7, "runtime", [&] { return ac7_runtime(t->bundle); });
    }
  }
  guarded(8, "determinism", [&] { return ac8_determinism(work); });
  guarded(9, "property suite", ac9_properties);

  std::printf("%s\n", failed ? fmt("%d criteria failed", failed).c_str() : "all criteria passed");
  return failed ? 1 : 0;
}
