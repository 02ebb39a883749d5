// Compares a set of codecs against a reference curve.
//
//   bdci_sample REFERENCE.csv CODEC.csv... [--models BUNDLE]
//
// Prints BD-BR for the four classical interpolators and, with a bundle,
// the network mean with its 3-sigma interval.

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "bdci/bdci_all.hpp"

using namespace bdci;

int main(int argc, char** argv) {
  std::vector<std::string> files;
  std::optional<ModelBundle> bundle;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--models" && i + 1 < argc) {
      bundle = load_bundle_file(argv[++i]);
    } else {
      files.push_back(a);
    }
  }
  if (files.size() < 2) {
    std::fprintf(stderr, "usage: bdci_sample REFERENCE.csv CODEC.csv... [--models BUNDLE]\n");
    return 64;
  }
  try {
    const RDCurveSamples ref = read_rd_file(files[0]);
    std::printf("%-28s %10s %10s %10s %10s", "codec", "cubic", "csi", "pchip", "akima");
    if (bundle) std::printf("  %10s %24s", "bdci", "3-sigma");
    std::printf("\n");
    for (std::size_t f = 1; f < files.size(); ++f) {
      const RDCurveSamples s = read_rd_file(files[f]);
      std::printf("%-28s", files[f].substr(files[f].find_last_of('/') + 1).c_str());
      for (Method m : {Method::Cubic, Method::Csi, Method::Pchip, Method::Akima}) {
        if (s.size() < min_points_for(m) || ref.size() < min_points_for(m)) {
          std::printf(" %10s", "n/a");
          continue;
        }
        std::printf(" %9.3f%%", *compute_bd(ref, s, Mode::BDRate, m).delta_percent);
      }
      if (bundle) {
        const BDCIResult r = compute_bdci(ref, s, Mode::BDRate, *bundle);
        const auto iv = *r.interval_percent;
        std::printf("  %9.3f%%   [%8.3f%%, %8.3f%%]", *r.mean_percent, iv[0], iv[1]);
      }
      std::printf("\n");
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
