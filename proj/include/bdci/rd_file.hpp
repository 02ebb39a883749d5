#pragma once

// On-disk formats used by the command line tool: the `rate,quality` text
// table and the JSON result document.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bdci/bdci.hpp"
#include "bdci/corpus.hpp"
#include "bdci/digest.hpp"
#include "bdci/rd_core.hpp"

namespace bdci {

inline constexpr std::string_view kToolVersion = "1.0.0";

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

}  // namespace detail

/// Parses a `rate,quality` table.  Blank lines and `#` comments are skipped;
/// the header must be the first non-comment line.  Errors name the line.
inline RDCurveSamples parse_rd_text(std::string_view text, std::string label = "",
                                    std::string metric = "quality") {
  std::vector<RDPoint> pts;
  bool header = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto where = label + ":" + std::to_string(line_no);
    const auto comma = line.find(',');
    if (comma == std::string_view::npos || line.find(',', comma + 1) != std::string_view::npos) {
      fail(ErrorCode::ParseError, where + ": expected two comma-separated fields");
    }
    const auto f0 = detail::trim(line.substr(0, comma));
    const auto f1 = detail::trim(line.substr(comma + 1));
    if (!header) {
      if (f0 != "rate") fail(ErrorCode::ParseError, where + ": header must be 'rate,<metric>'");
      if (f1.empty()) fail(ErrorCode::ParseError, where + ": empty metric name");
      if (f1 != "quality") metric = std::string(f1);
      header = true;
      continue;
    }
    try {
      pts.push_back({synth::detail::parse_double(f0), synth::detail::parse_double(f1)});
    } catch (const Error&) {
      fail(ErrorCode::ParseError, where + ": not a number");
    }
  }
  if (!header) fail(ErrorCode::ParseError, label + ": missing 'rate,quality' header");
  return validate_samples(std::move(pts), std::move(metric), std::move(label));
}

inline RDCurveSamples read_rd_file(const std::filesystem::path& path) {
  return parse_rd_text(synth::read_text_file(path), path.string());
}

/// Fixed 4-decimal rendering that never prints "-0.0000".
inline std::string format4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  std::string s(buf);
  if (s == "-0.0000") s = "0.0000";
  return s;
}

struct InputFile {
  std::string path;
  std::string sha256;
};

inline InputFile describe_input(const std::filesystem::path& path) {
  return {path.string(), sha256_hex(synth::read_text_file(path))};
}

inline nlohmann::json interval_json(const IntegrationInterval& iv) { return {iv.lo, iv.hi}; }

/// Machine document for `bd`.
inline nlohmann::json bd_document(const BDValue& v, const InputFile& anchor, const InputFile& target) {
  nlohmann::json j;
  j["tool"] = "bdci";
  j["version"] = kToolVersion;
  j["command"] = "bd";
  j["mode"] = to_string(v.mode);
  j["method"] = to_string(v.method);
  j["interval"] = interval_json(v.interval);
  j["delta"] = v.delta;
  j["delta_percent"] = v.delta_percent ? nlohmann::json(*v.delta_percent) : nlohmann::json(nullptr);
  j["inputs"] = {{"anchor", {{"path", anchor.path}, {"sha256", anchor.sha256}}},
                 {"target", {{"path", target.path}, {"sha256", target.sha256}}}};
  return j;
}

inline std::string_view to_string(IntegralSource s) {
  switch (s) {
    case IntegralSource::Network: return "network";
    case IntegralSource::DenseExact: return "dense-exact";
    case IntegralSource::Flat: return "flat";
  }
  return "?";
}

/// Machine document for `bdci`.
inline nlohmann::json bdci_document(const BDCIResult& r, const InputFile& anchor,
                                    const InputFile& target, const std::string& bundle_sha256) {
  nlohmann::json j;
  j["tool"] = "bdci";
  j["version"] = kToolVersion;
  j["command"] = "bdci";
  j["mode"] = to_string(r.mode);
  j["method"] = to_string(Method::BdciMean);
  j["interval"] = interval_json(r.interval);
  j["mean_delta"] = r.mean_delta;
  j["sigma_delta"] = r.sigma_delta;
  j["bdci_delta"] = r.interval_delta;
  j["mean_percent"] = r.mean_percent ? nlohmann::json(*r.mean_percent) : nlohmann::json(nullptr);
  j["bdci_percent"] =
      r.interval_percent ? nlohmann::json(*r.interval_percent) : nlohmann::json(nullptr);
  j["degenerate_fallback"] = r.degenerate_fallback;
  j["sources"] = {{"anchor", to_string(r.anchor.source)}, {"target", to_string(r.target.source)}};
  j["bundle_sha256"] = bundle_sha256;
  j["inputs"] = {{"anchor", {{"path", anchor.path}, {"sha256", anchor.sha256}}},
                 {"target", {{"path", target.path}, {"sha256", target.sha256}}}};
  return j;
}

inline std::string bd_human(const BDValue& v) {
  std::string out = std::string(v.mode == Mode::BDRate ? "BD-BR" : "BD-quality") + " (" +
                    std::string(to_string(v.method)) + "): ";
  if (v.delta_percent) {
    out += format4(*v.delta_percent) + "%";
  } else {
    out += format4(v.delta);
  }
  out += "\ninterval: [" + format4(v.interval.lo) + ", " + format4(v.interval.hi) + "]\n";
  return out;
}

inline std::string bdci_human(const BDCIResult& r) {
  const bool br = r.mode == Mode::BDRate;
  std::string out = std::string(br ? "BDCI-BR" : "BDCI-quality") + "\n";
  out += "mean delta: " + format4(r.mean_delta) + "  sigma: " + format4(r.sigma_delta) + "\n";
  out += "3-sigma interval (delta): [" + format4(r.interval_delta[0]) + ", " +
         format4(r.interval_delta[1]) + "]\n";
  if (br) {
    out += "mean: " + format4(*r.mean_percent) + "%\n";
    out += "3-sigma interval: [" + format4((*r.interval_percent)[0]) + "%, " +
           format4((*r.interval_percent)[1]) + "%]\n";
  }
  if (r.degenerate_fallback) {
    out += "note: degenerate span, PCHIP mean with scaled network sigma was used\n";
  }
  return out;
}

}  // namespace bdci
