#pragma once

#include "coactivity/chain.hpp"
#include "coactivity/gp.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace coact {

// Uniform mixture over configuration samples of one actor's trajectory
// posterior, each component conditioned on the sample's instances.
struct LocalizationPosterior {
  ActorId actor;
  TimeGrid grid;
  std::vector<Eigen::MatrixX2d> component_means;
  std::vector<Eigen::VectorXd> component_vars;
  Eigen::MatrixX2d mean;  // mixture mean
  Eigen::MatrixX2d std;   // mixture std per coordinate
  Eigen::MatrixX2d prior_mean;
  Eigen::VectorXd prior_std;
  std::size_t conditioned_components = 0;  // components with at least one instance

  std::size_t n_components() const { return component_means.size(); }
};

// `posteriors` holds one single-actor posterior per registry actor. Every
// `thin`-th sample of each chain becomes one component.
LocalizationPosterior localize(std::span<const ChainSamples> chains,
                               std::span<const GpPosterior> posteriors, ActorId actor,
                               int thin = 10, AuxMode mode = AuxMode::kStatic,
                               double sigma_aux_m = 10.0);

struct UncertaintyReport {
  Vec2 before = Vec2::Zero();  // mean unconditioned std per coordinate
  Vec2 after = Vec2::Zero();   // mean mixture std per coordinate
  int n_points = 0;
};

// Averages pointwise std over grid points in [t0, t1].
UncertaintyReport uncertainty_report(const LocalizationPosterior& loc, double t0, double t1);

}  // namespace coact
