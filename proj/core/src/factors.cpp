#include "coactivity/factors.hpp"

#include "coactivity/errors.hpp"
#include "coactivity/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace coact {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <typename DrawOf>
std::size_t uncovered_count(const Configuration& config, std::span<const GpsObservation> gps,
                            const TimeGrid& grid, DrawOf&& draw_of) {
  std::size_t uncovered = 0;
  for (const auto& o : gps) {
    bool covered = false;
    for (const auto& a : config.instances) {
      if (!a.covers(o.actor, o.t)) continue;
      const Vec2 x = position_at(draw_of(o.actor), grid, o.t);
      if ((x - a.center).norm() <= a.radius) {
        covered = true;
        break;
      }
    }
    if (!covered) ++uncovered;
  }
  return uncovered;
}

void check_span_on_grid(const ActivityInstance& a, const TimeGrid& grid) {
  if (a.start < grid.t_start - 1e-9 || a.end() > grid.t_end + 1e-9) {
    throw ContractError("activity span [" + std::to_string(a.start) + ", " +
                        std::to_string(a.end()) + "] leaves the trajectory grid");
  }
}

}  // namespace

void ActivityModel::validate() const {
  if (types.empty()) throw ConfigError("at least one activity type is required");
  if (overlap.size() != types.size()) throw ConfigError("overlap matrix size != type count");
  for (const auto& t : types) t.validate();
  overlap.validate();
  params.validate();
}

const ActivityType& ActivityModel::type(TypeId id) const {
  if (id.value >= types.size()) throw ContractError("unknown activity type index");
  return types[id.value];
}

Vec2 position_at(const Eigen::MatrixX2d& draw, const TimeGrid& grid, double t) {
  auto [i, w] = grid.locate(t);
  return ((1.0 - w) * draw.row(i) + w * draw.row(i + 1)).transpose();
}

double coverage_logfactor(const Configuration& config, std::span<const GpsObservation> gps,
                          std::span<const Eigen::MatrixX2d> draw_by_actor,
                          const TimeGrid& grid, double uncovered_penalty) {
  const auto n = uncovered_count(config, gps, grid, [&](ActorId a) -> const Eigen::MatrixX2d& {
    if (a.value >= draw_by_actor.size()) throw ContractError("coverage: actor has no draw");
    return draw_by_actor[a.value];
  });
  return -uncovered_penalty * static_cast<double>(n);
}

double coverage_logfactor(const Configuration& config, std::span<const GpsObservation> gps,
                          std::span<const TrajectoryEnsemble> ensembles,
                          const TimeGrid& grid, double uncovered_penalty) {
  if (ensembles.empty()) throw ContractError("coverage: no ensembles");
  const std::size_t n_draws = ensembles.front().size();
  std::vector<double> per_draw(n_draws);
  for (std::size_t d = 0; d < n_draws; ++d) {
    const auto n = uncovered_count(config, gps, grid, [&](ActorId a) -> const Eigen::MatrixX2d& {
      if (a.value >= ensembles.size() || ensembles[a.value].size() != n_draws) {
        throw ContractError("coverage: actor ensemble missing or of different size");
      }
      return ensembles[a.value].draws[d];
    });
    per_draw[d] = -uncovered_penalty * static_cast<double>(n);
  }
  return stats::log_mean_exp(per_draw);
}

double excursion_time(const ActivityInstance& a, const Eigen::MatrixX2d& draw,
                      const TimeGrid& grid) {
  double t = 0.0;
  for (const auto& [i, w] : grid.span_quadrature(a.start, a.end())) {
    if ((draw.row(i).transpose() - a.center).norm() > a.radius) t += w;
  }
  return t;
}

double presence_logfactor(const ActivityInstance& a,
                          std::span<const TrajectoryEnsemble> ensembles,
                          const TimeGrid& grid, double excursion_rate_per_s) {
  check_span_on_grid(a, grid);
  if (a.participants.empty()) return 0.0;
  const auto first = a.participants.front().value;
  if (first >= ensembles.size()) throw ContractError("presence: participant has no ensemble");
  const std::size_t n_draws = ensembles[first].size();
  std::vector<double> per_draw(n_draws, 0.0);
  for (ActorId p : a.participants) {
    if (p.value >= ensembles.size() || ensembles[p.value].size() != n_draws) {
      throw ContractError("presence: participant ensemble missing or of different size");
    }
    for (std::size_t d = 0; d < n_draws; ++d) {
      per_draw[d] -= excursion_rate_per_s * excursion_time(a, ensembles[p.value].draws[d], grid);
    }
  }
  return stats::log_mean_exp(per_draw);
}

double participant_count_logpmf(int n, const stats::LogNormal& prior) {
  if (n < 2) return -kInf;
  const double tail = 1.0 - prior.cdf(1.5);
  const double mass = prior.cdf(n + 0.5) - prior.cdf(n - 0.5);
  return std::log(mass) - std::log(tail);
}

double span_radius_logprior(const ActivityInstance& a, const ActivityType& type) {
  if (!(a.span > 0.0)) throw ContractError("span_radius_logprior: span must be > 0");
  if (!(a.radius > 0.0)) throw ContractError("span_radius_logprior: radius must be > 0");
  return type.span_prior.log_pdf(a.span) + type.radius_prior.log_pdf(a.radius) +
         participant_count_logpmf(static_cast<int>(a.participants.size()),
                                  type.participants_prior);
}

std::optional<std::size_t> frame_assignment(const FrameRecord& frame,
                                            const Configuration& config) {
  std::optional<std::size_t> best;
  double best_depth = -kInf;
  for (std::size_t i = 0; i < config.instances.size(); ++i) {
    const auto& a = config.instances[i];
    if (!a.covers(frame.actor, frame.t)) continue;
    const double depth = std::min(frame.t - a.start, a.end() - frame.t);
    if (!best || depth > best_depth ||
        (depth == best_depth && a.start < config.instances[*best].start)) {
      best = i;
      best_depth = depth;
    }
  }
  return best;
}

double frame_feature_loglik(std::span<const double> features, std::span<const double> mean,
                            std::span<const double> var) {
  if (features.size() != mean.size() || features.size() != var.size()) {
    throw ContractError("feature dimension mismatch: frame has " +
                        std::to_string(features.size()) + ", prior has " +
                        std::to_string(mean.size()));
  }
  double ll = 0.0;
  for (std::size_t v = 0; v < features.size(); ++v) {
    ll += stats::normal_log_pdf(features[v], mean[v], var[v]);
  }
  return ll;
}

double scene_logfactor(std::span<const FrameRecord> frames, const Configuration& config,
                       std::span<const ActivityType> types, const ModelParams& params) {
  double total = 0.0;
  for (const auto& f : frames) {
    const auto idx = frame_assignment(f, config);
    if (idx) {
      const auto t = config.instances[*idx].type.value;
      if (t >= types.size()) throw ContractError("scene: unknown activity type");
      total += frame_feature_loglik(f.features, types[t].feature_mean, types[t].feature_var);
    } else {
      total += frame_feature_loglik(f.features, params.background_mean, params.background_var);
    }
  }
  return total;
}

double face_logfactor(std::span<const FaceDetection> detections, const ActivityInstance& a,
                      const ActivityType& type, std::size_t n_actors) {
  std::vector<std::int64_t> counts(n_actors, 0);
  for (const auto& d : detections) {
    if (!d.detected || !a.covers_time(d.t) || !a.has_participant(d.observer)) continue;
    if (d.detected->value < n_actors) ++counts[d.detected->value];
  }
  const double minutes = a.span / 60.0;
  double ll = 0.0;
  for (std::size_t p = 0; p < n_actors; ++p) {
    const bool participant = a.has_participant(ActorId(static_cast<std::uint32_t>(p)));
    const double rate = (participant ? type.face_rate_participant_per_min
                                     : type.face_rate_nonparticipant_per_min) * minutes;
    ll += stats::poisson_log_pmf(counts[p], rate);
  }
  return ll;
}

double face_logfactor(std::span<const FaceDetection> detections, const Configuration& config,
                      std::span<const ActivityType> types, std::size_t n_actors) {
  double total = 0.0;
  for (const auto& a : config.instances) {
    if (a.type.value >= types.size()) throw ContractError("face: unknown activity type");
    total += face_logfactor(detections, a, types[a.type.value], n_actors);
  }
  return total;
}

double LogProbTerms::total() const {
  if (!overlap_ok) return -kInf;
  double t = coverage + scene;
  for (std::size_t i = 0; i < presence.size(); ++i) {
    t += presence[i] + span_radius[i] + face[i];
  }
  return t;
}

LogProbTerms config_logprob_terms(const Configuration& config, const DataBundle& data,
                                  std::span<const TrajectoryEnsemble> ensembles,
                                  const TimeGrid& grid, const ActivityModel& model) {
  LogProbTerms terms;
  terms.overlap_ok = satisfies_overlap(config, model.overlap);
  terms.coverage = coverage_logfactor(config, data.gps, ensembles, grid,
                                      model.params.uncovered_penalty);
  terms.scene = scene_logfactor(data.frames, config, model.types, model.params);
  for (const auto& a : config.instances) {
    const auto& type = model.type(a.type);
    terms.presence.push_back(presence_logfactor(a, ensembles, grid, type.excursion_rate_per_s));
    terms.span_radius.push_back(span_radius_logprior(a, type));
    terms.face.push_back(face_logfactor(data.faces, a, type, data.n_actors()));
  }
  return terms;
}

double config_logprob(const Configuration& config, const DataBundle& data,
                      std::span<const TrajectoryEnsemble> ensembles, const TimeGrid& grid,
                      const ActivityModel& model) {
  return config_logprob_terms(config, data, ensembles, grid, model).total();
}

std::vector<double> face_posterior(const FaceDetection& det,
                                   std::span<const Configuration> samples,
                                   std::size_t n_actors, double epsilon) {
  if (det.scores.empty()) throw ContractError("face_posterior: detection has no score vector");
  if (det.scores.size() != n_actors) {
    throw ContractError("face_posterior: score vector size != number of actors");
  }
  if (samples.empty()) throw ContractError("face_posterior: no configuration samples");
  const double log_eps = std::log(epsilon);

  std::vector<double> avg(n_actors, 0.0);
  std::vector<double> lp(n_actors);
  for (const auto& config : samples) {
    for (std::size_t a = 0; a < n_actors; ++a) lp[a] = det.scores[a];
    for (const auto& inst : config.instances) {
      if (!inst.covers(det.observer, det.t)) continue;
      const double log_member = -std::log(static_cast<double>(inst.participants.size()));
      for (std::size_t a = 0; a < n_actors; ++a) {
        lp[a] += inst.has_participant(ActorId(static_cast<std::uint32_t>(a))) ? log_member
                                                                              : log_eps;
      }
    }
    const double z = stats::log_sum_exp(lp);
    for (std::size_t a = 0; a < n_actors; ++a) avg[a] += std::exp(lp[a] - z);
  }
  for (double& p : avg) p /= static_cast<double>(samples.size());
  return avg;
}

}  // namespace coact
