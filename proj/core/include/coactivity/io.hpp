#pragma once

#include "coactivity/chain.hpp"
#include "coactivity/data.hpp"
#include "coactivity/factors.hpp"
#include "coactivity/posteriors.hpp"
#include "coactivity/rjmcmc.hpp"
#include "coactivity/scenario.hpp"
#include "coactivity/summarize.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace coact::io {

namespace fs = std::filesystem;

inline constexpr int kFormatVersion = 1;

std::string_view version();

// Shortest text that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view s, const std::string& where);

// Equirectangular projection about `origin`; x east, y north, meters.
Vec2 latlon_to_local(double lat_deg, double lon_deg, const GeoOrigin& origin);
GeoOrigin local_to_latlon(const Vec2& p, const GeoOrigin& origin);

// Writes to a sibling temporary file, then renames over `path`.
void write_atomic(const fs::path& path, std::string_view content);
std::string read_file(const fs::path& path);

// 64-bit FNV-1a, as 16 hex digits.
std::string content_hash(std::string_view bytes);

// Dataset directory layout.
struct BundlePaths {
  fs::path actors;
  fs::path gps;
  fs::path frames;
  fs::path faces;

  static BundlePaths in(const fs::path& dir);
};

struct LoadOptions {
  // GPS columns are lat/lon in degrees; converted about this origin, or about
  // the first GPS row when unset.
  bool latlon = false;
  std::optional<GeoOrigin> origin;
};

std::string actors_csv(const DataBundle& b);
std::string gps_csv(const DataBundle& b);
std::string frames_csv(const DataBundle& b);
std::string faces_csv(const DataBundle& b);

// Missing frame or face files load as empty streams.
DataBundle load_bundle(const BundlePaths& paths, const LoadOptions& options = {});
void save_bundle(const DataBundle& b, const fs::path& dir);

// Instances with participant names from `actors`.
std::string instances_csv(std::span<const ActivityInstance> instances,
                          const std::vector<std::string>& actors);
std::vector<ActivityInstance> parse_instances_csv(std::string_view text,
                                                  const std::vector<std::string>& actors,
                                                  const std::string& file);

std::string matches_csv(const MatchTable& m, const std::vector<std::string>& actors);
MatchTable parse_matches_csv(std::string_view text, const std::vector<std::string>& actors,
                             const std::string& file);

// One header record, then one sample per line.
std::string chain_jsonl(const ChainSamples& chain);
ChainSamples parse_chain_jsonl(std::string_view text, const std::string& file);

// `conditioned` is 1 where the mixture differs from the unconditioned posterior.
std::string localization_csv(const LocalizationPosterior& loc, const std::string& actor);

struct SummarizeSettings {
  int keyframes = 10;
  double vote_floor = 0.1;
  FrameDistanceWeights distance;
  int map_rings = 4;
  TrellisWeights trellis;
  int t_out = 20;
};

struct DataSettings {
  fs::path dir;
  bool latlon = false;
  std::optional<GeoOrigin> origin;
};

struct RunConfig {
  std::uint64_t seed = 1;
  int n_chains = 1;
  GpHyperParams gp;
  ActivityModel model;
  SamplerConfig sampler;
  ScenarioConfig scenario;
  DataSettings data;
  double iou_threshold = 0.3;
  int localize_thin = 10;
  AuxMode aux_mode = AuxMode::kStatic;
  std::vector<double> sweep_stds_m{50.0, 150.0, 300.0, 700.0};
  int sweep_trials = 20;
  SummarizeSettings summarize;

  void validate() const;
};

// Scenario model and scenario inference settings.
RunConfig default_run_config();

// Unknown keys and mistyped values raise ConfigError naming the key; absent
// keys keep their defaults. A document without "model" uses the scenario
// model of its "scenario" section.
RunConfig parse_run_config(std::string_view json, const std::string& file);
std::string run_config_json(const RunConfig& cfg);

std::string config_hash(const RunConfig& cfg);

struct ManifestEntry {
  std::string path;
  std::string hash;
};

std::string manifest_json(std::string_view command, const RunConfig& cfg,
                          std::span<const ManifestEntry> outputs);

}  // namespace coact::io
