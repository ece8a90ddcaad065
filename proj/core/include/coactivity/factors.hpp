#pragma once

#include "coactivity/activity.hpp"
#include "coactivity/data.hpp"
#include "coactivity/gp.hpp"

#include <Eigen/Core>

#include <optional>
#include <span>
#include <vector>

namespace coact {

// Activity types, their overlap relations, and the remaining model constants.
struct ActivityModel {
  std::vector<ActivityType> types;
  OverlapMatrix overlap;
  ModelParams params;

  void validate() const;
  const ActivityType& type(TypeId id) const;
};

// Linear interpolation of one actor's draw on the grid.
Vec2 position_at(const Eigen::MatrixX2d& draw, const TimeGrid& grid, double t);

// -c_u * (number of observations no instance covers) for one joint draw;
// draw_by_actor is indexed by ActorId.
double coverage_logfactor(const Configuration& config, std::span<const GpsObservation> gps,
                          std::span<const Eigen::MatrixX2d> draw_by_actor,
                          const TimeGrid& grid, double uncovered_penalty);

// Ensemble average (log-mean-exp over draws) of the above; ensembles are
// indexed by ActorId and share the draw count.
double coverage_logfactor(const Configuration& config, std::span<const GpsObservation> gps,
                          std::span<const TrajectoryEnsemble> ensembles,
                          const TimeGrid& grid, double uncovered_penalty);

// Time within the activity span that `draw` spends farther than the radius
// from the center, by grid quadrature.
double excursion_time(const ActivityInstance& a, const Eigen::MatrixX2d& draw,
                      const TimeGrid& grid);

// log-mean-exp over draws of -rate * (summed participant excursion time).
// Throws ContractError if the span leaves the grid.
double presence_logfactor(const ActivityInstance& a,
                          std::span<const TrajectoryEnsemble> ensembles,
                          const TimeGrid& grid, double excursion_rate_per_s);

// Log-normal span and radius densities plus the log-mass of the participant
// count under the discretized log-normal renormalized over counts >= 2.
double span_radius_logprior(const ActivityInstance& a, const ActivityType& type);

// Log of P(|participants| = n) under that count prior.
double participant_count_logpmf(int n, const stats::LogNormal& prior);

// Index of the instance a frame is attributed to: the covering instance in
// which the frame lies deepest (largest distance to a span boundary); ties go
// to the earliest start, then the lower index.
std::optional<std::size_t> frame_assignment(const FrameRecord& frame,
                                            const Configuration& config);

double frame_feature_loglik(std::span<const double> features, std::span<const double> mean,
                            std::span<const double> var);

double scene_logfactor(std::span<const FrameRecord> frames, const Configuration& config,
                       std::span<const ActivityType> types, const ModelParams& params);

// Poisson log-pmf of per-actor detection counts seen from participants'
// streams inside one instance's span.
double face_logfactor(std::span<const FaceDetection> detections, const ActivityInstance& a,
                      const ActivityType& type, std::size_t n_actors);

double face_logfactor(std::span<const FaceDetection> detections, const Configuration& config,
                      std::span<const ActivityType> types, std::size_t n_actors);

struct LogProbTerms {
  double coverage = 0.0;
  double scene = 0.0;
  std::vector<double> presence;
  std::vector<double> span_radius;
  std::vector<double> face;
  bool overlap_ok = true;

  double total() const;
};

// Unnormalized log score of a configuration. The GP term is the same for
// every configuration given fixed ensembles and is left out.
LogProbTerms config_logprob_terms(const Configuration& config, const DataBundle& data,
                                  std::span<const TrajectoryEnsemble> ensembles,
                                  const TimeGrid& grid, const ActivityModel& model);

double config_logprob(const Configuration& config, const DataBundle& data,
                      std::span<const TrajectoryEnsemble> ensembles, const TimeGrid& grid,
                      const ActivityModel& model);

// Identity posterior of one detection, averaged over configuration samples.
// Covering instances (observer participates, time in span) contribute a
// prior uniform over their participants and `epsilon` elsewhere.
std::vector<double> face_posterior(const FaceDetection& det,
                                   std::span<const Configuration> samples,
                                   std::size_t n_actors, double epsilon);

}  // namespace coact
