#pragma once

#include "coactivity/activity.hpp"
#include "coactivity/chain.hpp"
#include "coactivity/gp.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace coact {

// Copies of `frames` with each face detection attached to its observer's
// nearest frame in time (earlier frame on ties).
std::vector<FrameRecord> frames_with_faces(std::span<const FrameRecord> frames,
                                           std::span<const FaceDetection> faces);

// Votes per frame: (sample, instance) pairs whose span contains the frame
// time and whose participants include the frame's actor.
std::vector<std::int64_t> activity_votes(std::span<const ChainSamples> chains,
                                         std::span<const FrameRecord> frames);

struct FrameDistanceWeights {
  double w_ac = 1.0;
  double w_feat = 0.0;
  double w_time = 0.0;
  double w_id = 0.0;
  double feat_scale = 1.0;  // features divided by this
  double time_scale = 1.0;  // seconds divided by this

  void validate() const;
};

double frame_distance(const FrameRecord& a, const FrameRecord& b,
                      std::span<const ChainSamples> chains, const FrameDistanceWeights& w);

// Precomputed coverage indicators for repeated distance queries.
class FrameDistanceTable {
 public:
  FrameDistanceTable(std::span<const FrameRecord> frames, std::span<const ChainSamples> chains,
                     FrameDistanceWeights w);

  double operator()(std::size_t i, std::size_t j) const;
  double activity_disagreement(std::size_t i, std::size_t j) const;

 private:
  std::span<const FrameRecord> frames_;
  FrameDistanceWeights w_;
  std::size_t n_pairs_ = 0;
  std::size_t words_ = 0;
  std::vector<std::uint64_t> bits_;  // [frame * words_ + word]
};

struct KeyframeSummary {
  std::vector<std::size_t> frames;      // indices into the input, time-ordered
  std::vector<std::int64_t> votes;      // votes of each selected frame
  std::vector<std::size_t> pick_order;  // FPS selection order
  bool floor_fallback = false;          // no frame had a vote; all kept
  bool truncated_k = false;             // fewer survivors than k
};

KeyframeSummary select_keyframes(std::span<const FrameRecord> frames, int k,
                                 std::span<const ChainSamples> chains,
                                 const FrameDistanceWeights& weights, double vote_floor = 0.1);

struct MapCircle {
  std::size_t instance = 0;  // index in the maximum-score configuration
  Vec2 center = Vec2::Zero();
  double radius = 0.0;
};

struct MapPlacement {
  std::size_t frame = 0;
  std::size_t circle = 0;
  Vec2 position = Vec2::Zero();
};

struct MapSummary {
  std::vector<MapCircle> circles;
  std::vector<MapPlacement> placements;
};

// Candidate positions inside a circle: the center, then rings of 6k points.
std::vector<Vec2> disc_lattice(const Vec2& center, double radius, int rings = 4);

MapSummary map_summary(const KeyframeSummary& summary, std::span<const FrameRecord> frames,
                       std::span<const ChainSamples> chains, int rings = 4);

struct LocationDisc {
  Vec2 center = Vec2::Zero();
  double radius = 0.0;
};

struct TrellisConstraints {
  std::optional<double> t_begin;              // c1
  std::optional<double> t_end;                // c1
  std::vector<LocationDisc> permitted;        // c2; empty means anywhere
  std::vector<LocationDisc> prohibited;       // c2
  std::optional<double> max_jump_s;           // c3
  int min_run = 1;                            // c4
  int max_run = 1 << 20;                      // c4
};

struct TrellisWeights {
  double w_q = 1.0;
  double w_f = 1.0;
  double w_a = 1.0;
  std::vector<double> w_actor;  // per actor; missing entries are 1
  double w_nm = 1.0;
  double w_sf = 1.0;
  double w_sa = 1.0;
  double w_delta = 0.0;  // per meter
  double w_T = 0.0;      // per second
  double w_N = 1.0;
  int super_node_size = 3;
  TrellisConstraints constraints;

  void validate() const;
  double actor_weight(ActorId a) const;
};

// Keypoint match counts between frame pairs, keyed by (actor, t) of both
// frames; lookups are symmetric.
class MatchTable {
 public:
  void set(ActorId ai, double ti, ActorId aj, double tj, double matches);
  double get(ActorId ai, double ti, ActorId aj, double tj) const;
  std::size_t size() const { return m_.size(); }

  struct Entry {
    ActorId ai;
    double ti;
    ActorId aj;
    double tj;
    double matches;
  };
  std::vector<Entry> entries() const;

 private:
  std::map<std::tuple<std::uint32_t, double, std::uint32_t, double>, double> m_;
};

// Dataset-level inputs shared by the cost functions.
struct TrellisContext {
  std::span<const FrameRecord> frames;
  std::span<const GpPosterior> posteriors;  // per actor, for positions
  const MatchTable* matches = nullptr;
  Configuration map_config;
  std::vector<std::optional<std::size_t>> frame_instance;  // in map_config
  std::vector<Vec2> frame_position;
  double kp_bar = 0.0;
  double m_bar = 0.0;
  bool kp_bar_zero = false;  // quality term dropped
  bool m_bar_zero = false;   // matching term dropped
};

// kp_bar is the mean keypoint count; m_bar the mean match count over frame
// pairs allowed by c2 with time gap within c3.
TrellisContext make_trellis_context(std::span<const FrameRecord> frames,
                                    std::span<const ChainSamples> chains,
                                    std::span<const GpPosterior> posteriors,
                                    const MatchTable* matches, const TrellisWeights& w);

bool frame_identified(const FrameRecord& f);

double node_cost(std::size_t frame, const TrellisContext& ctx, const TrellisWeights& w);

// `represented` flags map_config instances already shown in the prefix.
double edge_cost(std::size_t from, std::size_t to, const TrellisContext& ctx,
                 const TrellisWeights& w, const std::vector<char>& represented);

struct VideoStep {
  ActorId actor;
  std::vector<std::size_t> node;  // candidate frames of the chosen Super Node
  std::vector<std::size_t> path;  // frames appended, a subsequence of node
  double mean_cost = 0.0;
};

struct VideoSummary {
  std::vector<std::size_t> frames;
  std::vector<VideoStep> steps;
  std::size_t trimmed = 0;  // frames dropped from a short trailing run
  bool empty = false;       // no frame satisfies the constraints
};

VideoSummary summarize_video(const TrellisContext& ctx, const TrellisWeights& w, int t_out);

// Constraint violations of a frame sequence, one message each.
std::vector<std::string> validate_video(std::span<const std::size_t> sequence,
                                        const TrellisContext& ctx, const TrellisWeights& w);

}  // namespace coact
