#pragma once

// Resolved per-run configuration: input/output paths plus every tunable the
// pipeline stages consume. A config starts from library defaults, absorbs an
// optional TOML file, then CLI flags; whatever the run ends up using —
// defaulted or not — is echoed verbatim into the manifest, so no silent
// default ever leaves the run unrecorded.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vasq/cascade.hpp"
#include "vasq/enhance.hpp"
#include "vasq/io/json.hpp"
#include "vasq/io/toml.hpp"

namespace vasq {

struct RunConfig {
  // role -> path ("in", "truth", "out", ...); inputs must exist at validation
  std::map<std::string, std::string> paths;

  ClassicalConfig cascade;
  VesselnessParams vesselness;
  NoiseParams noise;

  // notes accumulated by the run (stage flags, fallbacks, encoding choices)
  std::vector<std::string> conventions;

  void validate_paths() const {
    for (const auto& [role, p] : paths) {
      if (role == "out" || role.rfind("out_", 0) == 0) continue;  // outputs are created
      if (!std::filesystem::exists(p))
        throw validation_error("config: " + role + " path does not exist: " + p);
    }
  }

  void apply(const TomlTable& table);
  json echo() const;
};

namespace detail {

inline double toml_number(const TomlValue& v, const std::string& key) {
  if (v.kind != TomlValue::Kind::Number)
    throw validation_error("config: key '" + key + "' must be a number");
  return v.number;
}

inline bool toml_boolean(const TomlValue& v, const std::string& key) {
  if (v.kind != TomlValue::Kind::Boolean)
    throw validation_error("config: key '" + key + "' must be true or false");
  return v.boolean;
}

inline std::vector<double> toml_numbers(const TomlValue& v, const std::string& key) {
  if (v.kind != TomlValue::Kind::Array)
    throw validation_error("config: key '" + key + "' must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : v.array) out.push_back(toml_number(e, key));
  return out;
}

inline std::vector<Index3> toml_voxel_list(const TomlValue& v, const std::string& key) {
  if (v.kind != TomlValue::Kind::Array)
    throw validation_error("config: key '" + key + "' must be an array of [x, y, z] triples");
  std::vector<Index3> out;
  for (const auto& e : v.array) {
    const std::vector<double> t = toml_numbers(e, key);
    if (t.size() != 3)
      throw validation_error("config: key '" + key + "' entries must be [x, y, z] triples");
    out.push_back({int(t[0]), int(t[1]), int(t[2])});
  }
  return out;
}

}  // namespace detail

inline void RunConfig::apply(const TomlTable& table) {
  for (const auto& [key, value] : table) {
    if (key == "cascade.tau") {
      const auto t = detail::toml_numbers(value, key);
      if (t.size() != 4)
        throw validation_error("config: cascade.tau needs exactly 4 stage thresholds, got " +
                               std::to_string(t.size()));
      for (std::size_t i = 0; i < 4; ++i) cascade.tau[i] = t[i];
    } else if (key == "cascade.gate") {
      cascade.gate = detail::toml_number(value, key);
    } else if (key == "cascade.prior_gate") {
      cascade.prior_gate = detail::toml_boolean(value, key);
    } else if (key == "cascade.band_halfwidth") {
      cascade.band_halfwidth = detail::toml_number(value, key);
    } else if (key == "cascade.kernel_sigma") {
      cascade.kernel_sigma = detail::toml_number(value, key);
    } else if (key == "cascade.artery_seeds") {
      cascade.artery_seeds = detail::toml_voxel_list(value, key);
    } else if (key == "cascade.vein_seeds") {
      cascade.vein_seeds = detail::toml_voxel_list(value, key);
    } else if (key == "vesselness.scales") {
      vesselness.scales = detail::toml_numbers(value, key);
    } else if (key == "vesselness.alpha") {
      vesselness.alpha = detail::toml_number(value, key);
    } else if (key == "vesselness.beta") {
      vesselness.beta = detail::toml_number(value, key);
    } else if (key == "vesselness.c") {
      if (value.kind == TomlValue::Kind::String && value.string == "auto")
        vesselness.c.reset();
      else
        vesselness.c = detail::toml_number(value, key);
    } else if (key == "noise.n0") {
      noise.incident_count = detail::toml_number(value, key);
    } else if (key == "noise.seed") {
      noise.seed = std::uint64_t(detail::toml_number(value, key));
    } else {
      throw validation_error("config: unknown key '" + key + "'");
    }
  }
}

inline json RunConfig::echo() const {
  json j;
  j["paths"] = paths;

  json casc;
  casc["tau"] = cascade.tau;
  casc["gate"] = cascade.gate;
  casc["prior_gate"] = cascade.prior_gate;
  casc["band_halfwidth"] = cascade.band_halfwidth;
  casc["kernel_sigma"] = cascade.kernel_sigma;
  json aseeds = json::array(), vseeds = json::array();
  for (const auto& s : cascade.artery_seeds) aseeds.push_back({s[0], s[1], s[2]});
  for (const auto& s : cascade.vein_seeds) vseeds.push_back({s[0], s[1], s[2]});
  casc["artery_seeds"] = std::move(aseeds);
  casc["vein_seeds"] = std::move(vseeds);
  j["cascade"] = std::move(casc);

  json ves;
  ves["scales"] = vesselness.scales;
  ves["alpha"] = vesselness.alpha;
  ves["beta"] = vesselness.beta;
  ves["c"] = vesselness.c ? json(*vesselness.c) : json("auto");
  j["vesselness"] = std::move(ves);

  json noi;
  noi["n0"] = noise.incident_count;
  noi["seed"] = noise.seed;
  j["noise"] = std::move(noi);
  return j;
}

}  // namespace vasq
