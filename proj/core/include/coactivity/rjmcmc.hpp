#pragma once

#include "coactivity/chain.hpp"
#include "coactivity/data.hpp"
#include "coactivity/factors.hpp"
#include "coactivity/gp.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>

namespace coact {

using Rng = std::mt19937_64;

struct MoveWeights {
  std::array<double, kMoveKindCount> w{1, 1, 1, 1, 1, 1, 1, 1, 1, 1};

  double of(MoveKind k) const { return w[static_cast<std::size_t>(k)]; }
  void set(MoveKind k, double v) { w[static_cast<std::size_t>(k)] = v; }
  // Birth == Death and Split == Merge are required for reversibility.
  void validate() const;
  MoveKind pick(Rng& rng) const;
};

struct SamplerConfig {
  std::int64_t n_iters = 10000;
  std::int64_t burn_in = 2000;
  std::int64_t sample_thin = 1;
  // Ensembles are re-drawn every refresh_period iterations; 0 disables.
  std::int64_t refresh_period = 500;
  int grid_points = 500;
  int n_draws = 50;
  std::size_t max_instances = 0;  // 0: unbounded

  stats::LogNormal radius_proposal{30.0, 0.03};
  stats::LogNormal span_proposal{300.0, 0.005};
  double center_displacement_std_m = 20.0;
  stats::LogNormal participants_prior{2.0, 0.5};
  bool aux_conditioning = false;

  // Weight of the data-driven / local component in every proposal mixture.
  double local_mix = 0.5;
  double rw_center_std_m = 10.0;
  double rw_start_std_s = 5.0;
  double rw_log_span_std = 0.05;
  double rw_log_radius_std = 0.05;
  double split_center_std_m = 5.0;
  double split_radius_log_std = 0.05;

  // Co-location clusters that seed data-driven births.
  double cluster_distance_m = 60.0;
  double cluster_min_duration_s = 20.0;
  double cluster_max_gap_s = 20.0;  // shorter separations do not break a run
  double birth_start_std_s = 5.0;
  double birth_span_log_std = 0.1;
  double birth_center_std_m = 10.0;

  MoveWeights weights;

  void validate() const;
};

// A candidate meeting found from posterior-mean proximity.
struct CoLocationCluster {
  std::vector<ActorId> participants;
  double start = 0.0;
  double end = 0.0;
  Vec2 center = Vec2::Zero();
};

std::vector<CoLocationCluster> find_colocation_clusters(std::span<const GpPosterior> posteriors,
                                                        double distance_m,
                                                        double min_duration_s,
                                                        double max_gap_s = 0.0);

// Data and trajectory state shared by proposals and scoring.
struct ChainContext {
  const DataBundle* data = nullptr;
  const ActivityModel* model = nullptr;
  TimeGrid grid;
  std::vector<TrajectoryEnsemble> ensembles;  // indexed by ActorId
  double t_min = 0.0;
  double t_max = 0.0;
  Vec2 box_lo = Vec2::Zero();
  Vec2 box_hi = Vec2::Zero();
  std::vector<CoLocationCluster> clusters;
  std::vector<double> count_log_pmf;  // birth participant count, by count
  SamplerConfig config;

  std::size_t n_actors() const { return data->n_actors(); }
  std::size_t n_types() const { return model->types.size(); }
  bool in_support(const ActivityInstance& a) const;
};

// Distributions used to draw new instances (Birth) and to resample one field
// of an existing instance (parameter moves).
class InstanceProposer {
 public:
  virtual ~InstanceProposer() = default;

  virtual ActivityInstance draw_birth(const ChainContext& ctx, Rng& rng) const = 0;
  virtual double log_birth_density(const ChainContext& ctx, const ActivityInstance& a) const = 0;

  virtual ActivityInstance draw_update(MoveKind kind, const ChainContext& ctx,
                                       const ActivityInstance& from, Rng& rng) const = 0;
  virtual double log_update_density(MoveKind kind, const ChainContext& ctx,
                                    const ActivityInstance& from,
                                    const ActivityInstance& to) const = 0;
};

// The continuous proposals: each broad proposal mixed with a data-driven or
// random-walk component of weight config.local_mix.
class ContinuousProposer final : public InstanceProposer {
 public:
  ActivityInstance draw_birth(const ChainContext& ctx, Rng& rng) const override;
  double log_birth_density(const ChainContext& ctx, const ActivityInstance& a) const override;
  ActivityInstance draw_update(MoveKind kind, const ChainContext& ctx,
                               const ActivityInstance& from, Rng& rng) const override;
  double log_update_density(MoveKind kind, const ChainContext& ctx, const ActivityInstance& from,
                            const ActivityInstance& to) const override;
};

// Uniform proposals over a finite set of values per field. Used for
// quantized problems whose posterior can be enumerated exactly.
struct Lattice {
  std::vector<TypeId> types;
  std::vector<Vec2> centers;
  std::vector<double> radii;
  std::vector<double> starts;
  std::vector<double> spans;
  std::vector<std::vector<ActorId>> participant_sets;

  std::vector<ActivityInstance> enumerate() const;
};

class LatticeProposer final : public InstanceProposer {
 public:
  explicit LatticeProposer(Lattice lattice) : lattice_(std::move(lattice)) {}

  ActivityInstance draw_birth(const ChainContext& ctx, Rng& rng) const override;
  double log_birth_density(const ChainContext& ctx, const ActivityInstance& a) const override;
  ActivityInstance draw_update(MoveKind kind, const ChainContext& ctx,
                               const ActivityInstance& from, Rng& rng) const override;
  double log_update_density(MoveKind kind, const ChainContext& ctx, const ActivityInstance& from,
                            const ActivityInstance& to) const override;

  const Lattice& lattice() const { return lattice_; }

 private:
  Lattice lattice_;
};

struct Proposal {
  MoveKind kind = MoveKind::kBirth;
  bool auto_reject = false;
  // Proposed state: current instances minus `removed` (order kept), then
  // `added` appended.
  Configuration config;
  std::vector<std::size_t> removed;  // indices into the current state, ascending
  std::vector<ActivityInstance> added;
  double log_q_ratio = 0.0;  // log q(old | new) - log q(new | old)
};

Proposal propose(MoveKind kind, const Configuration& state, const ChainContext& ctx,
                 const InstanceProposer& proposer, Rng& rng);

// Incremental evaluation of config_logprob for proposals.
class IncrementalScorer {
 public:
  explicit IncrementalScorer(const ChainContext& ctx);

  struct State {
    Configuration config;
    std::vector<double> instance_terms;  // presence + span_radius + face
    std::vector<std::uint16_t> cover_counts;  // [draw * n_obs + obs]
    std::vector<int> uncovered;               // per draw
    double coverage = 0.0;
    double scene = 0.0;
    double total = 0.0;
  };

  struct Evaluation {
    double total = 0.0;
    double coverage = 0.0;
    double scene = 0.0;
    std::vector<double> added_terms;
    std::vector<std::pair<std::size_t, int>> count_deltas;
    std::vector<int> uncovered;
  };

  State score(const Configuration& config) const;
  Evaluation evaluate(const State& cur, const Proposal& p) const;
  void commit(State& cur, Proposal&& p, Evaluation&& e) const;

 private:
  void accumulate_cover(const ActivityInstance& a, int sign) const;
  double instance_term(const ActivityInstance& a) const;
  double frame_loglik(std::size_t frame, const Configuration& config) const;

  const ChainContext& ctx_;
  std::size_t n_obs_ = 0;
  std::size_t n_draws_ = 0;
  std::vector<std::vector<std::size_t>> obs_by_actor_;  // sorted by time
  std::vector<double> obs_t_;
  std::vector<Vec2> obs_pos_;  // [draw * n_obs + obs]
  std::vector<std::vector<std::size_t>> frames_by_actor_;
  std::vector<std::vector<double>> frame_type_ll_;  // [frame][type]
  std::vector<double> frame_bg_ll_;
  // Scratch for evaluate(); the scorer is single-threaded per chain.
  mutable std::vector<int> scratch_;
  mutable std::vector<char> cover_mark_;
  mutable std::vector<std::size_t> touched_;
  mutable std::vector<char> frame_mark_;
};

// Metropolis-Hastings decision for log acceptance ratio `log_alpha`.
bool mh_accept(double log_alpha, Rng& rng);

// Applies MH to a proposal; returns whether it was accepted. Non-finite
// ratios other than -inf are rejected and counted in `numerical_warnings`.
bool accept(IncrementalScorer::State& state, Proposal&& proposal,
            const IncrementalScorer& scorer, Rng& rng, std::int64_t& numerical_warnings);

// One GP posterior per registry actor over `grid`.
std::vector<GpPosterior> build_posteriors(const DataBundle& data, const GpHyperParams& hyper,
                                          const TimeGrid& grid);

// Default trajectory grid: the data time support with `points` nodes.
TimeGrid data_grid(const DataBundle& data, int points);

// Ensembles per actor. With `condition_on` set, actors sharing instances are
// first conditioned jointly on the static auxiliary observations and drawn
// jointly; their log_density entries then hold the joint draw's density.
std::vector<TrajectoryEnsemble> draw_ensembles(std::span<const GpPosterior> posteriors,
                                               int n_draws, std::uint64_t seed,
                                               const Configuration* condition_on = nullptr,
                                               double sigma_aux_m = 10.0);

ChainContext make_context(const DataBundle& data, const ActivityModel& model,
                          std::span<const GpPosterior> posteriors,
                          std::vector<TrajectoryEnsemble> ensembles,
                          const SamplerConfig& config);

// Runs one chain from the empty configuration on a prepared context.
ChainSamples run_chain(ChainContext& ctx, const InstanceProposer& proposer,
                       std::span<const GpPosterior> posteriors, std::uint64_t seed);

// Full pipeline: GP posteriors, ensembles, continuous proposals, one chain.
ChainSamples run_chain(const DataBundle& data, const ActivityModel& model,
                       const GpHyperParams& hyper, const SamplerConfig& config,
                       std::uint64_t seed);

}  // namespace coact
