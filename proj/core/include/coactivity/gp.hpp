#pragma once

#include "coactivity/activity.hpp"
#include "coactivity/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace coact {

struct GpsObservation {
  ActorId actor;
  double t = 0.0;
  Vec2 pos = Vec2::Zero();  // meters, local planar frame
  double noise_std = 1.0;   // meters

  bool operator==(const GpsObservation&) const = default;
};

enum class KernelKind { kSquaredExponential, kMatern52 };

struct GpHyperParams {
  KernelKind kernel = KernelKind::kMatern52;
  double length_scale_s = 120.0;
  double signal_std_m = 200.0;
  Vec2 mean = Vec2::Zero();
  double jitter = 1e-9;  // relative to signal_std^2

  void validate() const;
  double covariance(double dt) const;
};

// Equidistant time points t_start .. t_end inclusive.
struct TimeGrid {
  double t_start = 0.0;
  double t_end = 1.0;
  int n_points = 500;

  void validate() const;
  double step() const { return (t_end - t_start) / (n_points - 1); }
  double at(int i) const { return t_start + i * step(); }
  bool contains(double t) const { return t >= t_start && t <= t_end; }

  // Lower grid index and interpolation weight of the upper neighbor, with t
  // clamped to the grid.
  std::pair<int, double> locate(double t) const;

  // Indices i with t0 <= at(i) <= t1.
  std::pair<int, int> index_range(double t0, double t1) const;

  // Quadrature nodes for integrating over [t0, t1]: the in-span grid points,
  // each weighted (t1 - t0) / count, or the point nearest the midpoint when
  // no grid point falls inside. Weights sum to t1 - t0.
  std::vector<std::pair<int, double>> span_quadrature(double t0, double t1) const;

  bool operator==(const TimeGrid&) const = default;
};

// Gaussian posterior over one or more actors' trajectories on a shared grid.
// State is stacked actor-major: row k * n_points + i is actor k at grid i.
// The x and y coordinates are independent with identical covariance, so a
// single covariance matrix serves both.
class GpPosterior {
 public:
  GpPosterior(std::vector<ActorId> actors, TimeGrid grid, Eigen::MatrixX2d mean,
              Eigen::MatrixXd covariance, std::vector<GpsObservation> source_obs,
              double signal_var);

  const std::vector<ActorId>& actors() const { return actors_; }
  const TimeGrid& grid() const { return grid_; }
  const Eigen::MatrixX2d& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return cov_; }
  const std::vector<GpsObservation>& source_obs() const { return source_obs_; }
  double signal_var() const { return signal_var_; }
  int dim() const { return static_cast<int>(mean_.rows()); }

  // Offset of `actor`'s block; throws ContractError if absent.
  int block_of(ActorId actor) const;
  // Marginal posterior of one actor.
  GpPosterior marginal(ActorId actor) const;
  // Pointwise marginal variance (shared by both coordinates).
  Eigen::VectorXd variance() const { return cov_.diagonal(); }

 private:
  std::vector<ActorId> actors_;
  TimeGrid grid_;
  Eigen::MatrixX2d mean_;
  Eigen::MatrixXd cov_;
  std::vector<GpsObservation> source_obs_;
  double signal_var_;
};

struct TrajectoryEnsemble {
  std::vector<Eigen::MatrixX2d> draws;  // each dim x 2
  std::uint64_t seed = 0;
  std::vector<double> log_density;

  std::size_t size() const { return draws.size(); }
};

// Exact GP regression of one actor's observations onto `grid`, per coordinate.
// With no observations the prior on the grid is returned.
GpPosterior build_gp(ActorId actor, std::span<const GpsObservation> obs,
                     const GpHyperParams& hyper, const TimeGrid& grid);

TrajectoryEnsemble sample_trajectories(const GpPosterior& post, int n_draws,
                                       std::uint64_t seed);

double log_density(const GpPosterior& post, const Eigen::MatrixX2d& draw);

enum class AuxMode { kStatic, kDynamic };

// A zero-target linear observation on the stacked state, applied to x and y
// alike: sum_k coeff_k * state[index_k] = noise, noise ~ N(0, sigma^2).
struct LinearConstraint {
  std::vector<std::pair<int, double>> coeffs;
};

struct AuxObservationSet {
  AuxMode mode = AuxMode::kStatic;
  std::size_t activity_ref = 0;
  double sigma_aux_m = 10.0;
  std::vector<LinearConstraint> constraints;
};

// Stack independent posteriors (sharing one grid) into a block-diagonal joint.
GpPosterior stack_posteriors(std::span<const GpPosterior* const> parts);

// Proximity constraints for `activity` on the stacked state of `joint`.
// Empty when no grid point lies inside the span.
AuxObservationSet make_aux_observations(const GpPosterior& joint,
                                        const ActivityInstance& activity,
                                        std::size_t activity_ref, AuxMode mode,
                                        double sigma_aux_m);

// Exact linear-Gaussian update of `prior` with every constraint in `sets`.
GpPosterior condition_on_constraints(const GpPosterior& prior,
                                     std::span<const AuxObservationSet> sets);

struct ConditionedPosterior {
  GpPosterior joint;
  bool span_outside_grid = false;  // warning: nothing was conditioned
};

// Joint posterior of the activity's participants conditioned on auxiliary
// proximity observations. `posteriors` must contain every participant.
ConditionedPosterior condition_on_activity(std::span<const GpPosterior> posteriors,
                                           const ActivityInstance& activity,
                                           AuxMode mode, double sigma_aux_m);

// Factor of a symmetric PSD matrix for sampling: cov = F F^T. Tries a
// pivoted LDLT, then escalating diagonal jitter from 1e-9 to 1e-3 of
// `scale`. Throws NumericalError when all attempts fail.
Eigen::MatrixXd sampling_factor(const Eigen::MatrixXd& cov, double scale);

}  // namespace coact
