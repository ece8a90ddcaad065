#include "coactivity/posteriors.hpp"

#include "coactivity/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <tuple>

namespace coact {

namespace {

struct Component {
  Eigen::MatrixX2d mean;
  Eigen::VectorXd var;
};

// Instances that bear on the actor, reduced to what conditioning depends on.
using CacheKey = std::vector<std::tuple<std::vector<std::uint32_t>, int, int>>;

Component condition(const GpPosterior& prior_of_actor, std::span<const GpPosterior> posteriors,
                    ActorId actor, const std::vector<const ActivityInstance*>& instances,
                    AuxMode mode, double sigma_aux_m) {
  if (instances.empty()) return {prior_of_actor.mean(), prior_of_actor.variance()};
  std::vector<ActorId> members;
  for (const auto* a : instances) {
    members.insert(members.end(), a->participants.begin(), a->participants.end());
  }
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  std::vector<const GpPosterior*> parts;
  for (ActorId m : members) {
    if (m.value >= posteriors.size()) throw ContractError("localize: participant has no posterior");
    parts.push_back(&posteriors[m.value]);
  }
  const GpPosterior joint = stack_posteriors(parts);
  std::vector<AuxObservationSet> sets;
  for (std::size_t k = 0; k < instances.size(); ++k) {
    sets.push_back(make_aux_observations(joint, *instances[k], k, mode, sigma_aux_m));
  }
  const GpPosterior post = condition_on_constraints(joint, sets);
  const int b = post.block_of(actor);
  const int n = post.grid().n_points;
  return {post.mean().middleRows(b, n), post.covariance().diagonal().segment(b, n)};
}

}  // namespace

LocalizationPosterior localize(std::span<const ChainSamples> chains,
                               std::span<const GpPosterior> posteriors, ActorId actor,
                               int thin, AuxMode mode, double sigma_aux_m) {
  if (chains.empty()) throw ContractError("localize: no chains");
  if (thin < 1) throw ContractError("localize: thin must be >= 1");
  if (actor.value >= posteriors.size()) {
    throw ContractError("localize: actor " + std::to_string(actor.value) + " has no posterior");
  }
  const GpPosterior& prior = posteriors[actor.value];
  const int n = prior.grid().n_points;

  LocalizationPosterior loc;
  loc.actor = actor;
  loc.grid = prior.grid();
  loc.prior_mean = prior.mean();
  loc.prior_std = prior.variance().cwiseMax(0.0).cwiseSqrt();

  std::map<CacheKey, Component> cache;
  for (const auto& chain : chains) {
    for (std::size_t s = 0; s < chain.samples.size(); s += static_cast<std::size_t>(thin)) {
      const auto& config = chain.samples[s].config;
      std::vector<const ActivityInstance*> mine;
      CacheKey key;
      for (const auto& a : config.instances) {
        if (!a.has_participant(actor)) continue;
        mine.push_back(&a);
        auto [lo, hi] = loc.grid.index_range(a.start, a.end());
        std::vector<std::uint32_t> ids;
        for (ActorId p : a.participants) ids.push_back(p.value);
        key.emplace_back(std::move(ids), lo, hi);
      }
      std::sort(key.begin(), key.end());
      auto it = cache.find(key);
      if (it == cache.end()) {
        it = cache.emplace(key, condition(prior, posteriors, actor, mine, mode, sigma_aux_m)).first;
      }
      if (!mine.empty()) ++loc.conditioned_components;
      loc.component_means.push_back(it->second.mean);
      loc.component_vars.push_back(it->second.var);
    }
  }
  if (loc.component_means.empty()) throw ContractError("localize: chains hold no samples");

  // Accumulate deviations from the prior so identical components reproduce
  // it exactly.
  const double k = static_cast<double>(loc.n_components());
  Eigen::MatrixX2d dmean = Eigen::MatrixX2d::Zero(n, 2);
  Eigen::VectorXd dvar = Eigen::VectorXd::Zero(n);
  for (std::size_t c = 0; c < loc.n_components(); ++c) {
    dmean += loc.component_means[c] - loc.prior_mean;
    dvar += loc.component_vars[c] - prior.variance();
  }
  loc.mean = loc.prior_mean + dmean / k;
  const Eigen::VectorXd within = prior.variance() + dvar / k;
  Eigen::MatrixX2d between = Eigen::MatrixX2d::Zero(n, 2);
  for (const auto& m : loc.component_means) between += (m - loc.mean).cwiseAbs2();
  between /= k;
  loc.std.resize(n, 2);
  for (int c = 0; c < 2; ++c) {
    loc.std.col(c) = (within + between.col(c)).cwiseMax(0.0).cwiseSqrt();
  }
  return loc;
}

UncertaintyReport uncertainty_report(const LocalizationPosterior& loc, double t0, double t1) {
  if (!(t1 >= t0)) throw ContractError("uncertainty_report: window end before start");
  if (t0 < loc.grid.t_start - 1e-9 || t1 > loc.grid.t_end + 1e-9) {
    throw ContractError("uncertainty_report: window leaves the grid");
  }
  auto [lo, hi] = loc.grid.index_range(t0, t1);
  if (hi < lo) throw ContractError("uncertainty_report: window contains no grid point");
  UncertaintyReport r;
  r.n_points = hi - lo + 1;
  for (int i = lo; i <= hi; ++i) {
    r.before += Vec2::Constant(loc.prior_std(i));
    r.after += loc.std.row(i).transpose();
  }
  r.before /= r.n_points;
  r.after /= r.n_points;
  return r;
}

}  // namespace coact
