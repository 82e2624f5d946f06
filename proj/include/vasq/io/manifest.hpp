#pragma once

// Every CLI run drops a manifest beside its outputs: the subcommand, the
// fully-resolved argument vector (defaults included), the config echo, and
// the produced files. Re-running the recorded argv with a fresh --out must
// reproduce each artifact byte-for-byte — the manifest carries everything
// the run depended on, and nothing time- or host-dependent.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vasq/io/json.hpp"

namespace vasq {

struct Manifest {
  std::string subcommand;
  std::string version = kVersion;
  std::vector<std::string> argv;     // resolved flags; replayable
  json config;                       // RunConfig::echo() or subcommand equivalent
  std::vector<std::string> outputs;  // files written, relative to the manifest
  std::vector<std::string> conventions;
};

// Manifests sit beside what they describe: <dir>/manifest.json when the
// output is a directory, <file>.manifest.json when it is a file.
inline std::filesystem::path manifest_path_for(const std::filesystem::path& out) {
  if (std::filesystem::is_directory(out)) return out / "manifest.json";
  std::filesystem::path p = out;
  p += ".manifest.json";
  return p;
}

inline json manifest_to_json(const Manifest& m) {
  json j;
  j["tool"] = "vasq";
  j["version"] = m.version;
  j["subcommand"] = m.subcommand;
  j["argv"] = m.argv;
  j["config"] = m.config;
  j["outputs"] = m.outputs;
  j["conventions"] = m.conventions;
  return j;
}

inline void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw validation_error("cannot write " + path.string());
  out << manifest_to_json(m).dump(2) << "\n";
  if (!out) throw validation_error("write failure on " + path.string());
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open manifest " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw validation_error("manifest " + path.string() + ": " + e.what());
  }
  Manifest m;
  m.subcommand = j.at("subcommand").get<std::string>();
  m.version = j.at("version").get<std::string>();
  m.argv = j.at("argv").get<std::vector<std::string>>();
  m.config = j.at("config");
  m.outputs = j.at("outputs").get<std::vector<std::string>>();
  m.conventions = j.at("conventions").get<std::vector<std::string>>();
  return m;
}

}  // namespace vasq
