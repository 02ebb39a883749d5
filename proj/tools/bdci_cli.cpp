// bdci: BD and BDCI from R-D files, plus corpus generation, training and
// benchmarking of the neural estimator.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bdci/bdci_all.hpp"

namespace fs = std::filesystem;
using namespace bdci;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitValidation = 2;
constexpr int kExitEmptyIntersection = 3;
constexpr int kExitBundle = 4;
constexpr int kExitUsage = 64;

// Error raised while handling a specific file.
struct FileError {
  Error error;
  std::string file;
};

int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::EmptyIntersection: return kExitEmptyIntersection;
    case ErrorCode::BadMagic:
    case ErrorCode::VersionUnsupported:
    case ErrorCode::ChecksumMismatch:
    case ErrorCode::MissingCategory: return kExitBundle;
    default: return kExitValidation;
  }
}

std::string quoted(std::string_view s) {
  return nlohmann::json(std::string(s)).dump();
}

int report_error(const Error& e, const std::string& file = {}) {
  std::cerr << "error code=" << to_string(e.code());
  if (!file.empty()) std::cerr << " file=" << quoted(file);
  std::cerr << " message=" << quoted(e.detail()) << "\n";
  return exit_code_for(e.code());
}

template <class Fn>
auto with_file(const std::string& file, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw FileError{e, file};
  }
}

RDCurveSamples load_curve(const std::string& path, std::size_t min_points) {
  return with_file(path, [&] {
    RDCurveSamples s = read_rd_file(path);
    if (s.size() < min_points) {
      fail(ErrorCode::TooFewPoints, std::to_string(s.size()) + " points, need at least " +
                                        std::to_string(min_points));
    }
    return s;
  });
}

struct LoadedBundle {
  ModelBundle bundle;
  std::string sha256;
};

LoadedBundle load_models(const std::string& path) {
  return with_file(path, [&] {
    const auto bytes = read_file_bytes(path);
    return LoadedBundle{load_bundle(bytes), to_hex(sha256(bytes))};
  });
}

void print_document(const nlohmann::json& doc, const std::string& human, const std::string& format) {
  if (format == "json") {
    std::cout << doc.dump(2) << "\n";
  } else {
    std::cout << human;
  }
}

// ------------------------------------------------------------------------ bd

struct BdArgs {
  std::string anchor, target;
  std::string mode = "br";
  std::string method = "pchip";
  std::size_t dense_threshold = 0;
  std::string format = "text";
};

int cmd_bd(const BdArgs& a) {
  const Method method = parse_method(a.method);
  const std::size_t need = min_points_for(method);
  const RDCurveSamples anchor = load_curve(a.anchor, need);
  const RDCurveSamples target = load_curve(a.target, need);
  const bool dense = a.dense_threshold > 0 && anchor.size() >= a.dense_threshold;
  const BDValue v = dense ? compute_bd_dense_anchor(anchor, target, parse_mode(a.mode), method, a.dense_threshold)
                          : compute_bd(anchor, target, parse_mode(a.mode), method);
  nlohmann::json doc = bd_document(v, describe_input(a.anchor), describe_input(a.target));
  doc["dense_anchor"] = dense;
  print_document(doc, bd_human(v), a.format);
  return kExitOk;
}

// ---------------------------------------------------------------------- bdci

struct BdciArgs {
  std::string anchor, target, models;
  std::string mode = "br";
  std::size_t dense_threshold = kDefaultDenseThreshold;
  std::string format = "text";
};

int cmd_bdci(const BdciArgs& a) {
  const LoadedBundle lb = load_models(a.models);
  const RDCurveSamples anchor = load_curve(a.anchor, kMinBdPoints);
  const RDCurveSamples target = load_curve(a.target, kMinBdPoints);
  const BDCIResult r = compute_bdci(anchor, target, parse_mode(a.mode), lb.bundle, a.dense_threshold);
  const nlohmann::json doc =
      bdci_document(r, describe_input(a.anchor), describe_input(a.target), lb.sha256);
  print_document(doc, bdci_human(r), a.format);
  return kExitOk;
}

// ---------------------------------------------------------------- gen-corpus

struct GenArgs {
  std::string out;
  std::size_t curves = 20000;
  std::size_t test_curves = 0;
  std::size_t train_pairs = 0;
  std::size_t pairs = 200;
  std::uint64_t seed = 1;
  int n_min = 4, n_max = 8;
  int samplings = 1;
  std::string split = "both";
  unsigned jobs = 1;
};

int cmd_gen_corpus(const GenArgs& a) {
  std::vector<synth::Split> splits;
  if (a.split == "both" || a.split == "train") splits.push_back(synth::Split::Train);
  if (a.split == "both" || a.split == "test") splits.push_back(synth::Split::Test);
  for (synth::Split s : splits) {
    synth::CorpusConfig cfg;
    cfg.split = s;
    cfg.num_curves = s == synth::Split::Train ? a.curves : a.test_curves;
    cfg.num_pairs = s == synth::Split::Train ? a.train_pairs : a.pairs;
    cfg.seed = a.seed;
    cfg.n_min = a.n_min;
    cfg.n_max = a.n_max;
    cfg.samplings_per_curve = a.samplings;
    cfg.jobs = a.jobs;
    const synth::Corpus c = synth::build_corpus(cfg);
    const fs::path dir = fs::path(a.out) / std::string(synth::to_string(s));
    synth::write_corpus(c, dir);
    std::cerr << "wrote " << dir.string() << ": " << c.records.size() << " segment records, "
              << c.cases.size() << " BD cases\n";
  }
  return kExitOk;
}

// --------------------------------------------------------------------- train

struct TrainArgs {
  std::string corpus, out, report;
  nn::TrainConfig config;
  unsigned jobs = 1;
  bool verbose = false;
};

nlohmann::json train_config_json(const nn::TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"seed", c.seed},
          {"log_sigma_lo", c.log_sigma_lo},
          {"log_sigma_hi", c.log_sigma_hi},
          {"validation_fraction", c.validation_fraction},
          {"lr_decay_patience", c.lr_decay_patience},
          {"lr_decay_factor", c.lr_decay_factor},
          {"min_learning_rate", c.min_learning_rate}};
}

nlohmann::json train_report_json(const nn::TrainReport& r) {
  return {{"train_nll", r.train_nll},   {"val_nll", r.val_nll},
          {"epochs_run", r.epochs_run}, {"best_epoch", r.best_epoch},
          {"train_size", r.train_size}, {"val_size", r.val_size},
          {"final_learning_rate", r.final_learning_rate}, {"val_history", r.val_history}};
}

int cmd_train(const TrainArgs& a) {
  a.config.validate();
  const fs::path dir = synth::resolve_split_dir(a.corpus, synth::Split::Train);
  const synth::LoadedCorpus lc = synth::load_corpus(dir, true, false);
  if (lc.split != synth::Split::Train) {
    std::cerr << "warning: training on a corpus whose manifest says split="
              << synth::to_string(lc.split) << "\n";
  }
  const auto sets = synth::training_sets(lc.records);

  std::array<std::optional<nn::TrainResult>, kNumCategories> results;
  const auto t0 = std::chrono::steady_clock::now();
  parallel_for(kNumCategories, a.jobs, [&](std::size_t i) {
    nn::TrainConfig cfg = a.config;
    cfg.seed = derive_seed(a.config.seed, i, 0x7261696e);
    nn::ProgressFn progress;
    if (a.verbose) {
      progress = [i](int epoch, double tr, double va, double lr) {
        std::fprintf(stderr, "[%s] epoch %d train %.5f val %.5f lr %.2e\n",
                     std::string(to_string(category_from_index(i))).c_str(), epoch, tr, va, lr);
      };
    }
    results[i] = nn::train_category(sets[i], cfg, progress);
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::map<SegmentCategory, nn::MLP> models;
  nlohmann::json reports = nlohmann::json::object();
  nlohmann::json taxonomy = nlohmann::json::array();
  for (SegmentCategory c : kAllCategories) {
    const auto& r = *results[index_of(c)];
    models.emplace(c, r.model);
    reports[std::string(to_string(c))] = train_report_json(r.report);
    taxonomy.push_back({{"index", index_of(c)},
                        {"name", std::string(to_string(c))},
                        {"input_width", input_width(c)}});
  }
  nlohmann::json meta{{"format", "bdci-bundle"},
                      {"tool_version", kToolVersion},
                      {"seed", a.config.seed},
                      {"corpus_manifest_sha256", lc.manifest_sha256},
                      {"config", train_config_json(a.config)},
                      {"architecture",
                       {{"hidden_layers", nn::kHiddenLayers},
                        {"hidden_width", nn::kHiddenWidth},
                        {"activation", "relu"},
                        {"outputs", {"mu", "log_sigma"}}}},
                      {"taxonomy", taxonomy},
                      {"training", reports}};
  const auto bytes = save_bundle(models, meta);
  write_file_bytes(a.out, bytes);
  const std::string report_path = a.report.empty() ? a.out + ".report.json" : a.report;
  nlohmann::json report{{"bundle", a.out},
                        {"bundle_sha256", to_hex(sha256(bytes))},
                        {"corpus_manifest_sha256", lc.manifest_sha256},
                        {"records", lc.records.size()},
                        {"config", train_config_json(a.config)},
                        {"categories", reports}};
  synth::write_text_file(report_path, report.dump(2) + "\n");
  std::cerr << "trained " << kNumCategories << " models on " << lc.records.size() << " records in "
            << secs << " s; bundle sha256 " << to_hex(sha256(bytes)) << "\n";
  return kExitOk;
}

// --------------------------------------------------------------------- bench

struct BenchArgs {
  std::string corpus, models, report, plot;
  std::vector<std::string> estimators = {"cubic", "csi", "pchip", "akima", "bdci-mean"};
  std::vector<int> n_values = {4, 5, 6, 7, 8};
  std::size_t runtime_reps = 0;
  unsigned jobs = 1;
};

int cmd_bench(const BenchArgs& a) {
  const LoadedBundle lb = load_models(a.models);
  const fs::path dir = synth::resolve_split_dir(a.corpus, synth::Split::Test);
  const synth::LoadedCorpus lc = synth::load_corpus(dir, false, true);
  if (lc.split != synth::Split::Test) {
    std::cerr << "warning: manifest says split=" << synth::to_string(lc.split)
              << "; benchmarking on training data overstates accuracy\n";
  }
  std::vector<Method> estimators;
  for (const auto& e : a.estimators) estimators.push_back(parse_method(e));

  const auto bias = bench::eval_bias(lc.cases, estimators, {synth::kAllModes.begin(), synth::kAllModes.end()},
                                     a.n_values, &lb.bundle, a.jobs);
  const auto calib = bench::eval_calibration(lc.cases, lb.bundle, a.n_values, a.jobs);

  nlohmann::json report{{"tool_version", kToolVersion},
                        {"bundle_sha256", lb.sha256},
                        {"corpus_manifest_sha256", lc.manifest_sha256},
                        {"corpus_split", std::string(synth::to_string(lc.split))},
                        {"cases", lc.cases.size()},
                        {"bias", bias.to_json()},
                        {"calibration", calib.to_json()}};
  std::cout << "bundle sha256 " << lb.sha256 << "\n" << bias.to_table() << "\n" << calib.to_table();
  if (!a.report.empty()) synth::write_text_file(a.report, report.dump(2) + "\n");
  const std::string plot =
      !a.plot.empty() ? a.plot : (a.report.empty() ? std::string() : a.report + ".widths.csv");
  if (!plot.empty()) synth::write_text_file(plot, calib.width_plot_csv());

  if (a.runtime_reps > 0) {
    std::cout << "\n" << bench::runtime_table(bench::eval_runtime(lb.bundle, {4, 6, 8}, a.runtime_reps));
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BD-rate / BD-quality with neural confidence intervals"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  const std::vector<std::string> classical = {"cubic", "csi", "pchip", "akima"};

  BdArgs bd;
  auto* sub_bd = app.add_subcommand("bd", "classical BD from two rate,quality files");
  sub_bd->add_option("anchor", bd.anchor, "anchor curve file")->required();
  sub_bd->add_option("target", bd.target, "target curve file")->required();
  sub_bd->add_option("--mode", bd.mode, "br or quality")->check(CLI::IsMember({"br", "quality"}));
  sub_bd->add_option("--method", bd.method)->check(CLI::IsMember(classical));
  sub_bd->add_option("--dense-anchor-threshold", bd.dense_threshold,
                     "anchors with at least this many points are fitted with PCHIP (0 = off)");
  sub_bd->add_option("--format", bd.format)->check(CLI::IsMember({"text", "json"}));

  BdciArgs bc;
  auto* sub_bdci = app.add_subcommand("bdci", "neural BD estimate with 3-sigma interval");
  sub_bdci->add_option("anchor", bc.anchor)->required();
  sub_bdci->add_option("target", bc.target)->required();
  sub_bdci->add_option("--models", bc.models, "model bundle")->required();
  sub_bdci->add_option("--mode", bc.mode)->check(CLI::IsMember({"br", "quality"}));
  sub_bdci->add_option("--dense-anchor-threshold", bc.dense_threshold,
                       "curves with at least this many points are integrated exactly");
  sub_bdci->add_option("--format", bc.format)->check(CLI::IsMember({"text", "json"}));

  GenArgs gen;
  auto* sub_gen = app.add_subcommand("gen-corpus", "write a synthetic train/test corpus");
  sub_gen->add_option("--out", gen.out)->required();
  sub_gen->add_option("--curves", gen.curves, "training curves (segment records)");
  sub_gen->add_option("--test-curves", gen.test_curves, "test curves (segment records)");
  sub_gen->add_option("--pairs", gen.pairs, "test anchor/target pairs (BD cases)");
  sub_gen->add_option("--train-pairs", gen.train_pairs);
  sub_gen->add_option("--seed", gen.seed);
  sub_gen->add_option("--n-min", gen.n_min);
  sub_gen->add_option("--n-max", gen.n_max);
  sub_gen->add_option("--samplings", gen.samplings, "sample sets drawn per training curve");
  sub_gen->add_option("--split", gen.split)->check(CLI::IsMember({"train", "test", "both"}));
  sub_gen->add_option("--jobs", gen.jobs);

  TrainArgs tr;
  auto* sub_train = app.add_subcommand("train", "train the seven segment networks");
  sub_train->add_option("--corpus", tr.corpus)->required();
  sub_train->add_option("--out", tr.out, "bundle path")->required();
  sub_train->add_option("--report", tr.report, "training report (default <out>.report.json)");
  sub_train->add_option("--seed", tr.config.seed);
  sub_train->add_option("--lr", tr.config.learning_rate);
  sub_train->add_option("--batch", tr.config.batch_size);
  sub_train->add_option("--epochs", tr.config.max_epochs);
  sub_train->add_option("--patience", tr.config.patience);
  sub_train->add_option("--val-fraction", tr.config.validation_fraction);
  sub_train->add_option("--lr-decay-patience", tr.config.lr_decay_patience);
  sub_train->add_option("--lr-decay-factor", tr.config.lr_decay_factor);
  sub_train->add_option("--jobs", tr.jobs, "train categories in parallel");
  sub_train->add_flag("--verbose", tr.verbose);

  BenchArgs be;
  auto* sub_bench = app.add_subcommand("bench", "bias, calibration and runtime on a test corpus");
  sub_bench->add_option("--corpus", be.corpus)->required();
  sub_bench->add_option("--models", be.models)->required();
  sub_bench->add_option("--report", be.report, "JSON report path");
  sub_bench->add_option("--plot-data", be.plot, "CSV of mean width per n (default <report>.widths.csv)");
  sub_bench->add_option("--estimators", be.estimators)
      ->check(CLI::IsMember({"cubic", "csi", "pchip", "akima", "bdci-mean", "oracle"}));
  sub_bench->add_option("--n", be.n_values);
  sub_bench->add_option("--runtime-reps", be.runtime_reps, "also time BDCI at n=4,6,8");
  sub_bench->add_option("--jobs", be.jobs);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*sub_bd) return cmd_bd(bd);
    if (*sub_bdci) return cmd_bdci(bc);
    if (*sub_gen) return cmd_gen_corpus(gen);
    if (*sub_train) return cmd_train(tr);
    if (*sub_bench) return cmd_bench(be);
  } catch (const FileError& fe) {
    return report_error(fe.error, fe.file);
  } catch (const Error& e) {
    return report_error(e);
  } catch (const std::exception& e) {
    std::cerr << "error code=Internal message=" << quoted(e.what()) << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
