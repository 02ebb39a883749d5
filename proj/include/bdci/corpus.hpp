#pragma once

// Training/evaluation corpora built from synthetic curves.
//
// A corpus directory holds one split:
//   manifest.json  seeds, config, curve-id ranges, counts, file digests
//   records.txt    per-segment training pairs (header line + one record per line)
//   cases.jsonl    BD evaluation cases with ground truth (header line + one case per line)
//
// Curve ids of the train and test splits live in disjoint ranges, and every
// random draw is seeded from (master seed, curve id), so the contents do not
// depend on generation order or thread count.

#include <array>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bdci/digest.hpp"
#include "bdci/error.hpp"
#include "bdci/nn.hpp"
#include "bdci/parallel.hpp"
#include "bdci/random.hpp"
#include "bdci/rd_core.hpp"
#include "bdci/segments.hpp"
#include "bdci/synth.hpp"

namespace bdci::synth {

enum class Split { Train, Test };

constexpr std::string_view to_string(Split s) { return s == Split::Train ? "train" : "test"; }

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  fail(ErrorCode::ParseError, "unknown split '" + std::string(s) + "'");
}

inline constexpr int kCorpusVersion = 1;
inline constexpr std::uint64_t kTestIdBase = std::uint64_t{1} << 32;

struct SegmentSampleRecord {
  SegmentCategory category;
  Mode mode;
  std::uint64_t curve_id = 0;
  std::uint64_t sampling_seed = 0;
  double target_norm = 0.0;
  std::vector<double> input;
};

struct ModeTruth {
  bool valid = false;
  double lo = 0.0;
  double hi = 0.0;
  double delta = 0.0;  // delta log-rate (BD-BR) or delta quality
};

struct BDCase {
  std::uint64_t case_id = 0;
  std::uint64_t pair_id = 0;
  int n = 0;
  AnalyticCurve anchor;
  AnalyticCurve target;
  std::vector<RDPoint> anchor_points;
  std::vector<RDPoint> target_points;
  std::array<ModeTruth, 2> truth;  // indexed by mode_index()

  RDCurveSamples anchor_samples() const {
    return validate_samples(anchor_points, std::string(to_string(anchor.metric())), "anchor");
  }
  RDCurveSamples target_samples() const {
    return validate_samples(target_points, std::string(to_string(target.metric())), "target");
  }
};

constexpr std::size_t mode_index(Mode m) { return m == Mode::BDRate ? 0 : 1; }
inline constexpr std::array<Mode, 2> kAllModes = {Mode::BDRate, Mode::BDQuality};

struct CorpusConfig {
  std::size_t num_curves = 1000;  // curves feeding segment records
  std::size_t num_pairs = 200;    // anchor/target pairs feeding BD cases
  int n_min = 4;
  int n_max = 8;
  std::uint64_t seed = 1;
  Split split = Split::Train;
  int samplings_per_curve = 1;
  int anchor_points = 50;
  unsigned jobs = 1;

  void validate() const {
    if (n_min < 4 || n_max < n_min || n_max > 64) {
      fail(ErrorCode::InvalidArgument, "sample-count range must satisfy 4 <= n_min <= n_max");
    }
    if (num_curves + num_pairs == 0) fail(ErrorCode::InvalidArgument, "corpus would be empty");
    if (samplings_per_curve < 1) fail(ErrorCode::InvalidArgument, "samplings_per_curve >= 1");
    if (anchor_points < 20) fail(ErrorCode::InvalidArgument, "anchor_points must be >= 20");
  }

  nlohmann::json to_json() const {
    return {{"num_curves", num_curves},   {"num_pairs", num_pairs},
            {"n_min", n_min},             {"n_max", n_max},
            {"seed", seed},               {"split", std::string(to_string(split))},
            {"samplings_per_curve", samplings_per_curve},
            {"anchor_points", anchor_points}};
  }
};

struct Corpus {
  CorpusConfig config;
  std::vector<SegmentSampleRecord> records;
  std::vector<BDCase> cases;
  std::array<std::size_t, kNumCategories> category_counts{};
  std::size_t skipped_degenerate = 0;
  std::size_t invalid_truths = 0;

  std::uint64_t id_base() const { return config.split == Split::Train ? 0 : kTestIdBase; }
};

namespace detail {

enum SeedTag : std::uint64_t {
  kTagCurve = 0x43,
  kTagSampling = 0x53,
  kTagInterval = 0x49,
  kTagPair = 0x50,
  kTagCase = 0x4341,
  kTagVariant = 0x56,
};

inline std::pair<double, double> draw_interval(double x0, double x1, Rng& rng) {
  const double span = x1 - x0;
  auto inner = [&] { return x0 + span * rng.uniform(0.05, 0.95); };
  double lo = rng.bernoulli(0.2) ? x0 : inner();
  double hi = rng.bernoulli(0.2) ? x1 : inner();
  if (lo > hi) std::swap(lo, hi);
  return {lo, hi};
}

struct CurveRecords {
  std::vector<SegmentSampleRecord> records;
  std::size_t skipped = 0;
};

inline AnalyticCurve corpus_curve(std::uint64_t master, std::uint64_t curve_id) {
  Rng pick(derive_seed(master, curve_id, kTagCurve));
  const Family fam = kAllFamilies[pick.index(kAllFamilies.size())];
  const MetricKind metric = kAllMetricKinds[pick.index(kAllMetricKinds.size())];
  return gen_curve(fam, pick.next(), metric);
}

inline AnalyticCurve perturbed_target(const AnalyticCurve& anchor, Rng& rng) {
  const double x_lo = anchor.x_lo() * rng.log_uniform(0.6, 1.6);
  const double x_hi = std::max(anchor.x_hi() * rng.log_uniform(0.6, 1.6), x_lo * 4.0);
  QualityRange q{anchor.value(anchor.x_lo()), anchor.value(anchor.x_hi())};
  switch (anchor.metric()) {
    case MetricKind::PsnrLike:
      q.at_lo += rng.uniform(-2.0, 2.0);
      q.at_hi += rng.uniform(-2.0, 2.0);
      break;
    case MetricKind::MsssimLike:
      q.at_lo += rng.uniform(-0.03, 0.03);
      q.at_hi = std::min(0.999, q.at_hi + rng.uniform(-0.01, 0.005));
      break;
    case MetricKind::LpipsLike:
      q.at_lo *= rng.log_uniform(0.75, 1.33);
      q.at_hi *= rng.log_uniform(0.75, 1.33);
      break;
  }
  const Family fam = kAllFamilies[rng.index(kAllFamilies.size())];
  for (;;) {
    AnalyticCurve c = make_curve(fam, anchor.metric(), x_lo, x_hi, q, rng);
    if (strictly_monotone_on_grid(c)) return c;
  }
}

/// Training curves: half are drawn like anchors, half are perturbed the same
/// way BD-case targets are, so the networks see both populations.
inline AnalyticCurve training_curve(std::uint64_t master, std::uint64_t curve_id) {
  const AnalyticCurve base = corpus_curve(master, curve_id);
  Rng rng(derive_seed(master, curve_id, kTagVariant));
  return rng.bernoulli(0.5) ? perturbed_target(base, rng) : base;
}

inline CurveRecords records_for_curve(const CorpusConfig& cfg, std::uint64_t curve_id) {
  CurveRecords out;
  const AnalyticCurve curve = training_curve(cfg.seed, curve_id);
  for (Mode mode : kAllModes) {
    for (int s = 0; s < cfg.samplings_per_curve; ++s) {
      const std::uint64_t tag = kTagSampling + 16 * mode_index(mode) + 256 * static_cast<std::uint64_t>(s);
      Rng rng(derive_seed(cfg.seed, curve_id, tag));
      const int n = cfg.n_min + static_cast<int>(rng.index(static_cast<std::size_t>(cfg.n_max - cfg.n_min + 1)));
      const std::uint64_t sampling_seed = rng.next();
      const RDCurveSamples samples = sample_points(curve, n, SamplingPolicy::JitteredLogX, sampling_seed);
      const XYSeries series = project_axes(to_log_rate(samples), mode);
      const auto [norm_series, p] = normalize_series(series);
      const auto [net_series, flipped] = canonical_orientation(norm_series);
      const auto [lo, hi] = draw_interval(series.x_min(), series.x_max(), rng);
      std::vector<SegmentInstance> segs;
      try {
        if (is_degenerate_width(lo, hi)) fail(ErrorCode::DegenerateSpan, "empty draw");
        segs = segment_interval(norm_series.xs(), p.to_x(lo), p.to_x(hi));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::DegenerateSpan && e.code() != ErrorCode::DegenerateInterval) throw;
        ++out.skipped;
        continue;
      }
      for (const SegmentInstance& seg : segs) {
        const double a = p.x_min + seg.a * p.x_span();
        const double b = p.x_min + seg.b * p.x_span();
        const double integral = projected_integral(curve, mode, a, b);
        SegmentSampleRecord r;
        r.category = seg.category;
        r.mode = mode;
        r.curve_id = curve_id;
        r.sampling_seed = sampling_seed;
        const double t = (integral - p.y_min * (b - a)) / (p.x_span() * p.y_span());
        r.target_norm = flipped ? (seg.b - seg.a) - t : t;
        r.input = build_input(seg, net_series);
        out.records.push_back(std::move(r));
      }
    }
  }
  return out;
}

inline ModeTruth truth_for(const AnalyticCurve& anchor, const RDCurveSamples& a_samples,
                           const AnalyticCurve& target, const RDCurveSamples& t_samples,
                           Mode mode) {
  ModeTruth t;
  try {
    const XYSeries a = project_axes(to_log_rate(a_samples), mode);
    const XYSeries b = project_axes(to_log_rate(t_samples), mode);
    const IntegrationInterval iv = intersect_intervals(a, b);
    const double ia = projected_integral(anchor, mode, iv.lo, iv.hi);
    const double ib = projected_integral(target, mode, iv.lo, iv.hi);
    t = {true, iv.lo, iv.hi, (ib - ia) / iv.width()};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptyIntersection) throw;
  }
  return t;
}

inline std::vector<BDCase> cases_for_pair(const CorpusConfig& cfg, std::uint64_t pair_id,
                                          std::uint64_t anchor_id) {
  const AnalyticCurve anchor = corpus_curve(cfg.seed, anchor_id);
  Rng rng(derive_seed(cfg.seed, anchor_id + 1, kTagPair));
  const AnalyticCurve target = perturbed_target(anchor, rng);
  const RDCurveSamples a_samples =
      sample_points(anchor, cfg.anchor_points, SamplingPolicy::UniformLogX, 0, "anchor");

  std::vector<BDCase> out;
  for (int n = cfg.n_min; n <= cfg.n_max; ++n) {
    const std::uint64_t seed = derive_seed(cfg.seed, pair_id, kTagCase + static_cast<std::uint64_t>(n));
    const RDCurveSamples t_samples = sample_points(target, n, SamplingPolicy::JitteredLogX, seed, "target");
    BDCase c{0, pair_id, n, anchor, target, a_samples.points(), t_samples.points(), {}};
    for (Mode m : kAllModes) c.truth[mode_index(m)] = truth_for(anchor, a_samples, target, t_samples, m);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace detail

inline Corpus build_corpus(const CorpusConfig& cfg) {
  cfg.validate();
  Corpus corpus;
  corpus.config = cfg;
  const std::uint64_t base = corpus.id_base();

  std::vector<detail::CurveRecords> per_curve(cfg.num_curves);
  parallel_for(cfg.num_curves, cfg.jobs, [&](std::size_t i) {
    per_curve[i] = detail::records_for_curve(cfg, base + i);
  });
  for (auto& pc : per_curve) {
    corpus.skipped_degenerate += pc.skipped;
    for (auto& r : pc.records) {
      ++corpus.category_counts[index_of(r.category)];
      corpus.records.push_back(std::move(r));
    }
  }

  std::vector<std::vector<BDCase>> per_pair(cfg.num_pairs);
  parallel_for(cfg.num_pairs, cfg.jobs, [&](std::size_t p) {
    const std::uint64_t anchor_id = base + cfg.num_curves + 2 * p;
    per_pair[p] = detail::cases_for_pair(cfg, base + p, anchor_id);
  });
  for (auto& cases : per_pair) {
    for (auto& c : cases) {
      c.case_id = corpus.cases.size();
      for (const ModeTruth& t : c.truth) corpus.invalid_truths += t.valid ? 0 : 1;
      corpus.cases.push_back(std::move(c));
    }
  }
  return corpus;
}

/// Training sets per category, in corpus order.
inline std::array<nn::TrainingSet, kNumCategories> training_sets(
    const std::vector<SegmentSampleRecord>& records) {
  std::array<nn::TrainingSet, kNumCategories> sets = {
      nn::TrainingSet(8), nn::TrainingSet(8), nn::TrainingSet(8), nn::TrainingSet(9),
      nn::TrainingSet(9), nn::TrainingSet(9), nn::TrainingSet(9)};
  for (const auto& r : records) sets[index_of(r.category)].add(r.input, r.target_norm);
  return sets;
}

// ------------------------------------------------------------------------ I/O

namespace detail {

inline void append_double(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    fail(ErrorCode::ParseError, "bad number '" + std::string(s) + "'");
  }
  return v;
}

inline std::uint64_t parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    fail(ErrorCode::ParseError, "bad integer '" + std::string(s) + "'");
  }
  return v;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && line[i] == ' ') ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline nlohmann::json header_json(const Corpus& c, std::string_view kind) {
  return {{"format", "bdci-" + std::string(kind)},
          {"version", kCorpusVersion},
          {"seed", c.config.seed},
          {"split", std::string(to_string(c.config.split))}};
}

inline nlohmann::json truth_json(const ModeTruth& t) {
  return {{"valid", t.valid}, {"lo", t.lo}, {"hi", t.hi}, {"delta", t.delta}};
}

inline nlohmann::json points_json(const std::vector<RDPoint>& pts) {
  nlohmann::json a = nlohmann::json::array();
  for (const RDPoint& p : pts) a.push_back({p.rate, p.quality});
  return a;
}

inline std::vector<RDPoint> points_from_json(const nlohmann::json& j) {
  std::vector<RDPoint> pts;
  for (const auto& p : j) pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return pts;
}

}  // namespace detail

/// Column layout: category mode curve_id sampling_seed target_norm input...
inline std::string serialize_records(const Corpus& c) {
  std::string out = detail::header_json(c, "records").dump();
  out.push_back('\n');
  for (const auto& r : c.records) {
    out += std::to_string(index_of(r.category));
    out += r.mode == Mode::BDRate ? " br " : " quality ";
    out += std::to_string(r.curve_id);
    out.push_back(' ');
    out += std::to_string(r.sampling_seed);
    out.push_back(' ');
    detail::append_double(out, r.target_norm);
    for (double v : r.input) {
      out.push_back(' ');
      detail::append_double(out, v);
    }
    out.push_back('\n');
  }
  return out;
}

inline nlohmann::json case_to_json(const BDCase& c) {
  return {{"case_id", c.case_id},
          {"pair_id", c.pair_id},
          {"n", c.n},
          {"anchor", c.anchor.to_json()},
          {"target", c.target.to_json()},
          {"anchor_points", detail::points_json(c.anchor_points)},
          {"target_points", detail::points_json(c.target_points)},
          {"truth",
           {{"br", detail::truth_json(c.truth[0])}, {"quality", detail::truth_json(c.truth[1])}}}};
}

inline BDCase case_from_json(const nlohmann::json& j) {
  BDCase c{j.at("case_id").get<std::uint64_t>(),
           j.at("pair_id").get<std::uint64_t>(),
           j.at("n").get<int>(),
           AnalyticCurve::from_json(j.at("anchor")),
           AnalyticCurve::from_json(j.at("target")),
           detail::points_from_json(j.at("anchor_points")),
           detail::points_from_json(j.at("target_points")),
           {}};
  const char* keys[2] = {"br", "quality"};
  for (int m = 0; m < 2; ++m) {
    const auto& t = j.at("truth").at(keys[m]);
    c.truth[m] = {t.at("valid").get<bool>(), t.at("lo").get<double>(), t.at("hi").get<double>(),
                  t.at("delta").get<double>()};
  }
  return c;
}

inline std::string serialize_cases(const Corpus& c) {
  std::string out = detail::header_json(c, "cases").dump();
  out.push_back('\n');
  for (const auto& bc : c.cases) {
    out += case_to_json(bc).dump();
    out.push_back('\n');
  }
  return out;
}

inline nlohmann::json manifest_json(const Corpus& c, const std::string& records_text,
                                    const std::string& cases_text) {
  nlohmann::json per_cat = nlohmann::json::object();
  for (SegmentCategory cat : kAllCategories) {
    per_cat[std::string(to_string(cat))] = c.category_counts[index_of(cat)];
  }
  const std::uint64_t base = c.id_base();
  return {
      {"format", "bdci-corpus"},
      {"version", kCorpusVersion},
      {"split", std::string(to_string(c.config.split))},
      {"seed", c.config.seed},
      {"config", c.config.to_json()},
      {"curve_ids",
       {{"records", {base, base + c.config.num_curves}},
        {"pairs", {base + c.config.num_curves, base + c.config.num_curves + 2 * c.config.num_pairs}}}},
      {"counts",
       {{"records", c.records.size()}, {"cases", c.cases.size()}, {"per_category", per_cat}}},
      {"skipped", {{"degenerate_span", c.skipped_degenerate}, {"invalid_truth", c.invalid_truths}}},
      {"files",
       {{"records.txt", {{"sha256", sha256_hex(records_text)}, {"bytes", records_text.size()}}},
        {"cases.jsonl", {{"sha256", sha256_hex(cases_text)}, {"bytes", cases_text.size()}}}}},
  };
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) fail(ErrorCode::Io, "short write to " + path.string());
}

inline void write_corpus(const Corpus& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string records = serialize_records(c);
  const std::string cases = serialize_cases(c);
  write_text_file(dir / "records.txt", records);
  write_text_file(dir / "cases.jsonl", cases);
  write_text_file(dir / "manifest.json", manifest_json(c, records, cases).dump(2) + "\n");
}

/// `path` is either a split directory (has manifest.json) or a corpus root
/// holding `train/` and `test/`.
inline std::filesystem::path resolve_split_dir(const std::filesystem::path& path, Split wanted) {
  if (std::filesystem::exists(path / "manifest.json")) return path;
  const auto sub = path / std::string(to_string(wanted));
  if (std::filesystem::exists(sub / "manifest.json")) return sub;
  fail(ErrorCode::CorpusMismatch, "no corpus manifest under " + path.string());
}

struct LoadedCorpus {
  nlohmann::json manifest;
  std::string manifest_sha256;
  Split split = Split::Train;
  std::vector<SegmentSampleRecord> records;
  std::vector<BDCase> cases;
};

inline LoadedCorpus load_corpus(const std::filesystem::path& dir, bool with_records = true,
                                bool with_cases = true) {
  LoadedCorpus lc;
  const std::string manifest_text = read_text_file(dir / "manifest.json");
  lc.manifest = nlohmann::json::parse(manifest_text, nullptr, false);
  if (lc.manifest.is_discarded() || lc.manifest.value("format", "") != "bdci-corpus") {
    fail(ErrorCode::CorpusMismatch, "manifest in " + dir.string() + " is not a corpus manifest");
  }
  if (lc.manifest.value("version", 0) != kCorpusVersion) {
    fail(ErrorCode::CorpusMismatch, "unsupported corpus version");
  }
  lc.manifest_sha256 = sha256_hex(manifest_text);
  lc.split = parse_split(lc.manifest.at("split").get<std::string>());

  auto checked = [&](const char* name) {
    const std::string text = read_text_file(dir / name);
    const auto& entry = lc.manifest.at("files").at(name);
    if (entry.at("bytes").get<std::size_t>() != text.size() ||
        entry.at("sha256").get<std::string>() != sha256_hex(text)) {
      fail(ErrorCode::CorpusMismatch, std::string(name) + " does not match the manifest (partial corpus?)");
    }
    return text;
  };

  if (with_records) {
    const std::string text = checked("records.txt");
    std::size_t pos = text.find('\n');
    if (pos == std::string::npos) fail(ErrorCode::CorpusMismatch, "records.txt has no header");
    ++pos;
    while (pos < text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string::npos) end = text.size();
      const auto cols = detail::split_ws(std::string_view(text).substr(pos, end - pos));
      pos = end + 1;
      if (cols.empty()) continue;
      if (cols.size() < 5) fail(ErrorCode::ParseError, "short record line");
      SegmentSampleRecord r;
      r.category = category_from_index(detail::parse_u64(cols[0]));
      r.mode = parse_mode(cols[1]);
      r.curve_id = detail::parse_u64(cols[2]);
      r.sampling_seed = detail::parse_u64(cols[3]);
      r.target_norm = detail::parse_double(cols[4]);
      for (std::size_t k = 5; k < cols.size(); ++k) r.input.push_back(detail::parse_double(cols[k]));
      if (static_cast<int>(r.input.size()) != input_width(r.category)) {
        fail(ErrorCode::ParseError, "record input width does not match its category");
      }
      lc.records.push_back(std::move(r));
    }
    if (lc.records.size() != lc.manifest.at("counts").at("records").get<std::size_t>()) {
      fail(ErrorCode::CorpusMismatch, "record count differs from the manifest");
    }
  }
  if (with_cases) {
    std::istringstream in(checked("cases.jsonl"));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      lc.cases.push_back(case_from_json(nlohmann::json::parse(line)));
    }
    if (lc.cases.size() != lc.manifest.at("counts").at("cases").get<std::size_t>()) {
      fail(ErrorCode::CorpusMismatch, "case count differs from the manifest");
    }
  }
  return lc;
}

}  // namespace bdci::synth
