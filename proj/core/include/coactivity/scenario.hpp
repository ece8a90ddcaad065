#pragma once

#include "coactivity/chain.hpp"
#include "coactivity/data.hpp"
#include "coactivity/factors.hpp"
#include "coactivity/gp.hpp"
#include "coactivity/rjmcmc.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace coact {

struct ScenarioConfig {
  int n_actors = 8;
  int n_turns = 6;
  double travel_s = 120.0;  // moving phase at the start of each turn
  int n_places = 3;
  double location_std_m = 700.0;  // spread of meeting places around the origin
  double p_meet = 0.5;
  double gps_noise_std_m = 30.0;
  double gps_rate_hz = 0.2;
  double area_extent_m = 1500.0;  // own locations uniform in [-e, e]^2
  stats::LogNormal radius_prior{30.0, 0.1};
  stats::LogNormal span_prior{60.0, 0.05};  // dwell length per turn
  double frame_interval_s = 10.0;
  int feature_dim = 4;
  double feature_separation = 1.0;  // meeting minus background mean, per dim
  double keypoint_mean = 100.0;
  double face_rate_participant_per_min = 2.0;
  double face_rate_nonparticipant_per_min = 0.05;
  double face_corruption = 0.15;  // label replaced by another actor
  double face_score_margin = 4.0;
  double excursion_rate_per_s = 0.2;  // presence factor of the inference model
  std::uint64_t seed = 1;

  void validate() const;
};

// Piecewise-linear true path.
struct TruePath {
  std::vector<double> t;
  std::vector<Vec2> pos;

  Vec2 at(double time) const;
};

struct SyntheticDataset {
  ScenarioConfig config;
  DataBundle bundle;
  std::vector<TruePath> paths;                 // by actor
  std::vector<ActivityInstance> truth;
  std::vector<std::vector<int>> attendance;    // [turn][actor]: place or -1
  std::vector<Vec2> places;
  std::vector<ActorId> face_truth;             // true identity per bundle face
};

SyntheticDataset generate(const ScenarioConfig& cfg);

// The activity model the generator draws from: one meeting type.
ActivityModel scenario_model(const ScenarioConfig& cfg);

struct DenialWindow {
  ActorId actor;
  double t0 = 0.0;
  double t1 = 0.0;
};

// Drops GPS observations inside the windows; time support is kept.
SyntheticDataset inject_denial(SyntheticDataset ds, std::span<const DenialWindow> windows);

// Temporal IoU times the IoU of the two discs.
double cylinder_iou(const ActivityInstance& a, const ActivityInstance& b);

struct MatchResult {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (detected, truth)
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Greedy matching by decreasing IoU, pairs below the threshold excluded.
MatchResult match_instances(std::span<const ActivityInstance> detected,
                            std::span<const ActivityInstance> truth, double iou_threshold);

struct SampleEval {
  std::size_t n_detected = 0;
  double count_error = 0.0;         // |n_det - n_true| / n_true, or absolute
  double signed_count_error = 0.0;  // (n_det - n_true) / n_true, or signed absolute
  MatchResult match;
};

struct EvalReport {
  std::size_t n_true = 0;
  bool absolute_count_error = false;  // n_true == 0
  double count_error = 0.0;
  double signed_count_error = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<SampleEval> per_sample;
};

EvalReport evaluate(const ChainSamples& chain, std::span<const ActivityInstance> truth,
                    double iou_threshold = 0.3);

struct InferenceSettings {
  GpHyperParams gp;
  SamplerConfig sampler;
  double iou_threshold = 0.3;
};

// Settings that suit generated scenarios.
InferenceSettings scenario_inference_defaults();

struct SweepPoint {
  double location_std_m = 0.0;
  std::vector<double> trial_errors;  // NaN for failed cells
  std::vector<std::string> failures;
  double mean = 0.0;
  double std = 0.0;
};

struct SweepCurve {
  std::vector<SweepPoint> points;
};

// Trial j uses the same scenario seed for every std value.
SweepCurve sweep_location_std(const ScenarioConfig& base, std::span<const double> stds,
                              int n_trials, const InferenceSettings& settings,
                              int threads = 1);

}  // namespace coact
