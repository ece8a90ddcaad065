#include "coactivity/rjmcmc.hpp"

#include "coactivity/errors.hpp"
#include "coactivity/stats.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <numeric>
#include <string>

namespace coact {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

double normal(Rng& rng, double mean, double sd) {
  return std::normal_distribution<double>(mean, sd)(rng);
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

double draw_lognormal(Rng& rng, const stats::LogNormal& d) {
  return d.median * std::exp(normal(rng, 0.0, d.log_std));
}

double normal2_log_pdf(const Vec2& x, const Vec2& mean, double sd) {
  const double v = sd * sd;
  return -stats::kLog2Pi - std::log(v) - 0.5 * (x - mean).squaredNorm() / v;
}

Vec2 draw_normal2(Rng& rng, const Vec2& mean, double sd) {
  const double x = normal(rng, mean.x(), sd);
  const double y = normal(rng, mean.y(), sd);
  return {x, y};
}

// log((1 - w) exp(a) + w exp(b)) with w in [0, 1].
double log_mix(double w, double a, double b) {
  if (w <= 0.0) return a;
  if (w >= 1.0) return b;
  const double la = std::log1p(-w) + a;
  const double lb = std::log(w) + b;
  const double m = std::max(la, lb);
  if (m == -kInf) return -kInf;
  return m + std::log(std::exp(la - m) + std::exp(lb - m));
}

std::vector<ActorId> draw_participants(Rng& rng, std::size_t n_actors, int k) {
  std::vector<std::uint32_t> ids(n_actors);
  std::iota(ids.begin(), ids.end(), 0u);
  for (int i = 0; i < k; ++i) {
    const std::size_t j = i + uniform_index(rng, n_actors - i);
    std::swap(ids[i], ids[j]);
  }
  std::vector<ActorId> out;
  out.reserve(k);
  for (int i = 0; i < k; ++i) out.emplace_back(ids[i]);
  std::sort(out.begin(), out.end());
  return out;
}

int draw_count(Rng& rng, std::span<const double> log_pmf) {
  double u = uniform01(rng);
  int last = -1;
  for (std::size_t n = 0; n < log_pmf.size(); ++n) {
    if (log_pmf[n] == -kInf) continue;
    last = static_cast<int>(n);
    u -= std::exp(log_pmf[n]);
    if (u < 0.0) return last;
  }
  return last;
}

// Prior-style density of a participant set: count pmf times uniform identities.
double participants_log_density(const ChainContext& ctx, const std::vector<ActorId>& p) {
  const std::size_t k = p.size();
  if (k >= ctx.count_log_pmf.size()) return -kInf;
  return ctx.count_log_pmf[k] -
         stats::log_choose(static_cast<std::int64_t>(ctx.n_actors()), static_cast<std::int64_t>(k));
}

std::vector<ActorId> toggle(const std::vector<ActorId>& p, ActorId a) {
  std::vector<ActorId> out = p;
  auto it = std::lower_bound(out.begin(), out.end(), a);
  if (it != out.end() && *it == a) {
    out.erase(it);
  } else {
    out.insert(it, a);
  }
  return out;
}

bool differ_by_one(const std::vector<ActorId>& a, const std::vector<ActorId>& b) {
  std::vector<ActorId> diff;
  std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(diff));
  return diff.size() == 1;
}

bool structurally_valid(const ActivityInstance& a, std::size_t n_actors, std::size_t n_types) {
  if (!(a.radius > 0.0) || !(a.span > 0.0) || !std::isfinite(a.start)) return false;
  if (!a.center.allFinite() || a.type.value >= n_types) return false;
  if (a.participants.size() < 2) return false;
  for (std::size_t i = 0; i < a.participants.size(); ++i) {
    if (a.participants[i].value >= n_actors) return false;
    if (i > 0 && !(a.participants[i - 1] < a.participants[i])) return false;
  }
  return true;
}

Proposal make_proposal(MoveKind kind, const Configuration& state,
                       std::vector<std::size_t> removed, std::vector<ActivityInstance> added) {
  Proposal p;
  p.kind = kind;
  std::sort(removed.begin(), removed.end());
  p.config.instances.reserve(state.size() - removed.size() + added.size());
  std::size_t r = 0;
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (r < removed.size() && removed[r] == i) {
      ++r;
      continue;
    }
    p.config.instances.push_back(state.instances[i]);
  }
  for (const auto& a : added) p.config.instances.push_back(a);
  p.removed = std::move(removed);
  p.added = std::move(added);
  return p;
}

Proposal rejected(MoveKind kind, const Configuration& state) {
  Proposal p;
  p.kind = kind;
  p.auto_reject = true;
  p.config = state;
  return p;
}

double split_log_density(const ChainContext& ctx, const ActivityInstance& parent, double u,
                         const ActivityInstance& second) {
  const auto& c = ctx.config;
  return -std::log(parent.span) - std::log(parent.end() - u) +
         normal2_log_pdf(second.center, parent.center, c.split_center_std_m) +
         stats::LogNormal{parent.radius, c.split_radius_log_std}.log_pdf(second.radius);
}

double log_pairs(std::size_t n) {
  return std::log(static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view to_string(MoveKind kind) {
  switch (kind) {
    case MoveKind::kBirth: return "birth";
    case MoveKind::kDeath: return "death";
    case MoveKind::kSplit: return "split";
    case MoveKind::kMerge: return "merge";
    case MoveKind::kType: return "type";
    case MoveKind::kCenter: return "center";
    case MoveKind::kRadius: return "radius";
    case MoveKind::kSpan: return "span";
    case MoveKind::kStartTime: return "start_time";
    case MoveKind::kParticipants: return "participants";
  }
  return "unknown";
}

std::optional<MoveKind> parse_move_kind(std::string_view name) {
  for (MoveKind k : kAllMoveKinds) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

std::vector<Configuration> ChainSamples::configurations() const {
  std::vector<Configuration> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.config);
  return out;
}

const ChainSample& ChainSamples::best() const {
  if (samples.empty()) throw ContractError("ChainSamples::best on an empty chain");
  const ChainSample* b = &samples.front();
  for (const auto& s : samples) {
    if (s.log_score > b->log_score) b = &s;
  }
  return *b;
}

std::vector<MoveKind> ChainSamples::stalled_kinds(std::span<const double> weights) const {
  std::vector<MoveKind> out;
  for (std::size_t k = 0; k < kMoveKindCount; ++k) {
    const bool enabled = k < weights.size() && weights[k] > 0.0;
    if (enabled && stats[k].proposed > 0 && stats[k].accepted == 0) out.push_back(kAllMoveKinds[k]);
  }
  return out;
}

void MoveWeights::validate() const {
  double sum = 0.0;
  for (double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("move weights must be finite and >= 0");
    sum += v;
  }
  if (!(sum > 0.0)) throw ConfigError("move weights must not all be zero");
  if (of(MoveKind::kBirth) != of(MoveKind::kDeath)) {
    throw ConfigError("birth and death weights must be equal");
  }
  if (of(MoveKind::kSplit) != of(MoveKind::kMerge)) {
    throw ConfigError("split and merge weights must be equal");
  }
}

MoveKind MoveWeights::pick(Rng& rng) const {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  double u = uniform01(rng) * total;
  std::size_t last = 0;
  for (std::size_t k = 0; k < kMoveKindCount; ++k) {
    if (w[k] <= 0.0) continue;
    last = k;
    u -= w[k];
    if (u < 0.0) break;
  }
  return kAllMoveKinds[last];
}

void SamplerConfig::validate() const {
  if (n_iters <= 0) throw ConfigError("n_iters must be > 0");
  if (burn_in < 0 || burn_in >= n_iters) throw ConfigError("burn_in must be in [0, n_iters)");
  if (sample_thin <= 0) throw ConfigError("sample_thin must be > 0");
  if (refresh_period < 0) throw ConfigError("refresh_period must be >= 0");
  if (grid_points < 2) throw ConfigError("grid_points must be >= 2");
  if (n_draws < 1) throw ConfigError("n_draws must be >= 1");
  for (const auto* d : {&radius_proposal, &span_proposal, &participants_prior}) {
    if (!(d->median > 0.0) || !(d->log_std > 0.0)) {
      throw ConfigError("proposal log-normals need positive median and log-std");
    }
  }
  if (!(local_mix >= 0.0 && local_mix <= 1.0)) throw ConfigError("local_mix must be in [0, 1]");
  if (!(cluster_max_gap_s >= 0.0)) throw ConfigError("cluster_max_gap_s must be >= 0");
  for (double v : {center_displacement_std_m, rw_center_std_m, rw_start_std_s, rw_log_span_std,
                   rw_log_radius_std, split_center_std_m, split_radius_log_std,
                   cluster_distance_m, cluster_min_duration_s, birth_start_std_s,
                   birth_span_log_std, birth_center_std_m}) {
    if (!(v > 0.0)) throw ConfigError("sampler scale parameters must be > 0");
  }
  weights.validate();
}

bool ChainContext::in_support(const ActivityInstance& a) const {
  if (!structurally_valid(a, n_actors(), n_types())) return false;
  if (a.start < t_min || a.end() > t_max) return false;
  return (a.center.array() >= box_lo.array()).all() && (a.center.array() <= box_hi.array()).all();
}

// ---------------------------------------------------------------------------

std::vector<CoLocationCluster> find_colocation_clusters(std::span<const GpPosterior> posteriors,
                                                        double distance_m,
                                                        double min_duration_s,
                                                        double max_gap_s) {
  std::vector<CoLocationCluster> out;
  if (posteriors.size() < 2) return out;
  const TimeGrid& grid = posteriors.front().grid();
  const int n = grid.n_points;
  const double h = grid.step();
  auto pos = [&](std::size_t a, int i) -> Vec2 { return posteriors[a].mean().row(i).transpose(); };
  auto close = [&](std::size_t a, std::size_t b, int i) {
    return (pos(a, i) - pos(b, i)).norm() <= distance_m;
  };
  struct Key {
    std::vector<ActorId> p;
    int lo, hi;
    bool operator==(const Key&) const = default;
  };
  std::vector<Key> seen;

  auto emit = [&](std::size_t a, std::size_t b, int i, int j) {
    if ((j - i) * h < min_duration_s) return;
    std::vector<std::size_t> members{a, b};
    for (std::size_t c = 0; c < posteriors.size(); ++c) {
      if (c == a || c == b) continue;
      int hits = 0;
      for (int k = i; k <= j; ++k) hits += (close(c, a, k) || close(c, b, k)) ? 1 : 0;
      if (2 * hits >= j - i + 1) members.push_back(c);
    }
    std::sort(members.begin(), members.end());
    Key key{{}, i, j};
    for (std::size_t m : members) key.p.emplace_back(static_cast<std::uint32_t>(m));
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) return;
    Vec2 center = Vec2::Zero();
    for (std::size_t m : members) {
      for (int k = i; k <= j; ++k) center += pos(m, k);
    }
    center /= static_cast<double>(members.size() * (j - i + 1));
    out.push_back({key.p, grid.at(i), grid.at(j), center});
    seen.push_back(std::move(key));
  };

  for (std::size_t a = 0; a < posteriors.size(); ++a) {
    for (std::size_t b = a + 1; b < posteriors.size(); ++b) {
      int i = 0;
      while (i < n) {
        if (!close(a, b, i)) {
          ++i;
          continue;
        }
        // Extend the run across separations no longer than max_gap_s.
        int j = i;
        for (;;) {
          while (j + 1 < n && close(a, b, j + 1)) ++j;
          int k = j + 1;
          while (k < n && !close(a, b, k) && (k - j) * h <= max_gap_s) ++k;
          if (k < n && close(a, b, k) && (k - j - 1) * h <= max_gap_s) {
            j = k;
          } else {
            break;
          }
        }
        // Cut the run where the pair's centroid leaves the segment's mean
        // position, so joint travel separates consecutive stops.
        int seg = i;
        Vec2 sum = 0.5 * (pos(a, i) + pos(b, i));
        for (int k = i + 1; k <= j; ++k) {
          const Vec2 c = 0.5 * (pos(a, k) + pos(b, k));
          if ((c - sum / (k - seg)).norm() > distance_m) {
            emit(a, b, seg, k - 1);
            seg = k;
            sum = c;
          } else {
            sum += c;
          }
        }
        emit(a, b, seg, j);
        i = j + 1;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

ActivityInstance ContinuousProposer::draw_birth(const ChainContext& ctx, Rng& rng) const {
  const auto& c = ctx.config;
  ActivityInstance a;
  a.type = TypeId(static_cast<std::uint32_t>(uniform_index(rng, ctx.n_types())));
  const auto& type = ctx.model->type(a.type);
  const bool local = !ctx.clusters.empty() && uniform01(rng) < c.local_mix;
  if (local) {
    const auto& cl = ctx.clusters[uniform_index(rng, ctx.clusters.size())];
    a.participants = cl.participants;
    a.start = normal(rng, cl.start, c.birth_start_std_s);
    a.span = draw_lognormal(rng, {std::max(cl.end - cl.start, 1.0), c.birth_span_log_std});
    a.center = draw_normal2(rng, cl.center, c.birth_center_std_m);
  } else {
    a.participants = draw_participants(rng, ctx.n_actors(), draw_count(rng, ctx.count_log_pmf));
    a.start = ctx.t_min + uniform01(rng) * (ctx.t_max - ctx.t_min);
    a.span = draw_lognormal(rng, type.span_prior);
    a.center = ctx.box_lo + (ctx.box_hi - ctx.box_lo).cwiseProduct(
                                Vec2(uniform01(rng), uniform01(rng)));
  }
  a.radius = draw_lognormal(rng, type.radius_prior);
  return a;
}

double ContinuousProposer::log_birth_density(const ChainContext& ctx,
                                             const ActivityInstance& a) const {
  const auto& c = ctx.config;
  const auto& type = ctx.model->type(a.type);
  const double log_type = -std::log(static_cast<double>(ctx.n_types()));
  const double log_radius = type.radius_prior.log_pdf(a.radius);

  const Vec2 extent = ctx.box_hi - ctx.box_lo;
  double broad = participants_log_density(ctx, a.participants) -
                 std::log(ctx.t_max - ctx.t_min) + type.span_prior.log_pdf(a.span) -
                 std::log(extent.x() * extent.y());
  const bool inside = a.start >= ctx.t_min && a.start <= ctx.t_max &&
                      (a.center.array() >= ctx.box_lo.array()).all() &&
                      (a.center.array() <= ctx.box_hi.array()).all();
  if (!inside) broad = -kInf;

  double local = -kInf;
  double w = 0.0;
  if (!ctx.clusters.empty()) {
    w = c.local_mix;
    std::vector<double> terms;
    for (const auto& cl : ctx.clusters) {
      if (cl.participants != a.participants) continue;
      terms.push_back(
          stats::normal_log_pdf(a.start, cl.start, c.birth_start_std_s * c.birth_start_std_s) +
          stats::LogNormal{std::max(cl.end - cl.start, 1.0), c.birth_span_log_std}.log_pdf(a.span) +
          normal2_log_pdf(a.center, cl.center, c.birth_center_std_m));
    }
    if (!terms.empty()) {
      local = stats::log_sum_exp(terms) - std::log(static_cast<double>(ctx.clusters.size()));
    }
  }
  return log_type + log_radius + log_mix(w, broad, local);
}

namespace {

// Gaussian kernel mixture around participants' sampled positions in the span.
double center_broad_log_density(const ChainContext& ctx, const ActivityInstance& a,
                                const Vec2& x) {
  const auto nodes = ctx.grid.span_quadrature(a.start, a.end());
  const double sd = ctx.config.center_displacement_std_m;
  const double inv2v = 0.5 / (sd * sd);
  // Shift by the nearest kernel for stable log-sum-exp.
  double best = kInf;
  std::size_t m = 0;
  for (ActorId p : a.participants) {
    for (const auto& draw : ctx.ensembles[p.value].draws) {
      for (const auto& [i, w] : nodes) {
        best = std::min(best, (draw.row(i).transpose() - x).squaredNorm());
        ++m;
      }
    }
  }
  double sum = 0.0;
  for (ActorId p : a.participants) {
    for (const auto& draw : ctx.ensembles[p.value].draws) {
      for (const auto& [i, w] : nodes) {
        sum += std::exp(-((draw.row(i).transpose() - x).squaredNorm() - best) * inv2v);
      }
    }
  }
  return -stats::kLog2Pi - 2.0 * std::log(sd) - best * inv2v + std::log(sum) -
         std::log(static_cast<double>(m));
}

}  // namespace

ActivityInstance ContinuousProposer::draw_update(MoveKind kind, const ChainContext& ctx,
                                                 const ActivityInstance& from, Rng& rng) const {
  const auto& c = ctx.config;
  ActivityInstance to = from;
  const bool local = uniform01(rng) < c.local_mix;
  switch (kind) {
    case MoveKind::kType:
      to.type = TypeId(static_cast<std::uint32_t>(uniform_index(rng, ctx.n_types())));
      break;
    case MoveKind::kCenter:
      if (local) {
        to.center = draw_normal2(rng, from.center, c.rw_center_std_m);
      } else {
        const ActorId p = from.participants[uniform_index(rng, from.participants.size())];
        const auto nodes = ctx.grid.span_quadrature(from.start, from.end());
        const auto& ens = ctx.ensembles[p.value];
        const auto& draw = ens.draws[uniform_index(rng, ens.size())];
        const int i = nodes[uniform_index(rng, nodes.size())].first;
        to.center = draw_normal2(rng, draw.row(i).transpose(), c.center_displacement_std_m);
      }
      break;
    case MoveKind::kRadius:
      to.radius = local ? draw_lognormal(rng, {from.radius, c.rw_log_radius_std})
                        : draw_lognormal(rng, c.radius_proposal);
      break;
    case MoveKind::kSpan:
      to.span = local ? draw_lognormal(rng, {from.span, c.rw_log_span_std})
                      : draw_lognormal(rng, c.span_proposal);
      break;
    case MoveKind::kStartTime:
      to.start = local ? normal(rng, from.start, c.rw_start_std_s)
                       : ctx.t_min + uniform01(rng) * (ctx.t_max - ctx.t_min);
      break;
    case MoveKind::kParticipants:
      if (local) {
        to.participants = toggle(
            from.participants, ActorId(static_cast<std::uint32_t>(uniform_index(rng, ctx.n_actors()))));
      } else {
        to.participants =
            draw_participants(rng, ctx.n_actors(), draw_count(rng, ctx.count_log_pmf));
      }
      break;
    default:
      throw ContractError("draw_update: not a parameter move");
  }
  return to;
}

double ContinuousProposer::log_update_density(MoveKind kind, const ChainContext& ctx,
                                              const ActivityInstance& from,
                                              const ActivityInstance& to) const {
  const auto& c = ctx.config;
  const double w = c.local_mix;
  switch (kind) {
    case MoveKind::kType:
      return -std::log(static_cast<double>(ctx.n_types()));
    case MoveKind::kCenter:
      return log_mix(w, center_broad_log_density(ctx, from, to.center),
                     normal2_log_pdf(to.center, from.center, c.rw_center_std_m));
    case MoveKind::kRadius:
      return log_mix(w, c.radius_proposal.log_pdf(to.radius),
                     stats::LogNormal{from.radius, c.rw_log_radius_std}.log_pdf(to.radius));
    case MoveKind::kSpan:
      return log_mix(w, c.span_proposal.log_pdf(to.span),
                     stats::LogNormal{from.span, c.rw_log_span_std}.log_pdf(to.span));
    case MoveKind::kStartTime: {
      const bool inside = to.start >= ctx.t_min && to.start <= ctx.t_max;
      const double broad = inside ? -std::log(ctx.t_max - ctx.t_min) : -kInf;
      return log_mix(w, broad,
                     stats::normal_log_pdf(to.start, from.start,
                                           c.rw_start_std_s * c.rw_start_std_s));
    }
    case MoveKind::kParticipants: {
      const double local = differ_by_one(from.participants, to.participants)
                               ? -std::log(static_cast<double>(ctx.n_actors()))
                               : -kInf;
      return log_mix(w, participants_log_density(ctx, to.participants), local);
    }
    default:
      throw ContractError("log_update_density: not a parameter move");
  }
}

// ---------------------------------------------------------------------------

std::vector<ActivityInstance> Lattice::enumerate() const {
  std::vector<ActivityInstance> out;
  for (TypeId t : types) {
    for (const auto& c : centers) {
      for (double r : radii) {
        for (double s : starts) {
          for (double l : spans) {
            for (const auto& p : participant_sets) {
              out.push_back({t, c, r, s, l, p});
            }
          }
        }
      }
    }
  }
  return out;
}

namespace {

template <typename T>
T pick(Rng& rng, const std::vector<T>& v) {
  return v[uniform_index(rng, v.size())];
}

template <typename T>
double uniform_log_mass(const std::vector<T>& v, const T& x) {
  return std::find(v.begin(), v.end(), x) != v.end() ? -std::log(static_cast<double>(v.size()))
                                                     : -kInf;
}

}  // namespace

ActivityInstance LatticeProposer::draw_birth(const ChainContext&, Rng& rng) const {
  ActivityInstance a;
  a.type = pick(rng, lattice_.types);
  a.center = pick(rng, lattice_.centers);
  a.radius = pick(rng, lattice_.radii);
  a.start = pick(rng, lattice_.starts);
  a.span = pick(rng, lattice_.spans);
  a.participants = pick(rng, lattice_.participant_sets);
  return a;
}

double LatticeProposer::log_birth_density(const ChainContext&, const ActivityInstance& a) const {
  return uniform_log_mass(lattice_.types, a.type) + uniform_log_mass(lattice_.centers, a.center) +
         uniform_log_mass(lattice_.radii, a.radius) + uniform_log_mass(lattice_.starts, a.start) +
         uniform_log_mass(lattice_.spans, a.span) +
         uniform_log_mass(lattice_.participant_sets, a.participants);
}

ActivityInstance LatticeProposer::draw_update(MoveKind kind, const ChainContext&,
                                              const ActivityInstance& from, Rng& rng) const {
  ActivityInstance to = from;
  switch (kind) {
    case MoveKind::kType: to.type = pick(rng, lattice_.types); break;
    case MoveKind::kCenter: to.center = pick(rng, lattice_.centers); break;
    case MoveKind::kRadius: to.radius = pick(rng, lattice_.radii); break;
    case MoveKind::kSpan: to.span = pick(rng, lattice_.spans); break;
    case MoveKind::kStartTime: to.start = pick(rng, lattice_.starts); break;
    case MoveKind::kParticipants: to.participants = pick(rng, lattice_.participant_sets); break;
    default: throw ContractError("draw_update: not a parameter move");
  }
  return to;
}

double LatticeProposer::log_update_density(MoveKind kind, const ChainContext&,
                                           const ActivityInstance&,
                                           const ActivityInstance& to) const {
  switch (kind) {
    case MoveKind::kType: return uniform_log_mass(lattice_.types, to.type);
    case MoveKind::kCenter: return uniform_log_mass(lattice_.centers, to.center);
    case MoveKind::kRadius: return uniform_log_mass(lattice_.radii, to.radius);
    case MoveKind::kSpan: return uniform_log_mass(lattice_.spans, to.span);
    case MoveKind::kStartTime: return uniform_log_mass(lattice_.starts, to.start);
    case MoveKind::kParticipants: return uniform_log_mass(lattice_.participant_sets, to.participants);
    default: throw ContractError("log_update_density: not a parameter move");
  }
}

// ---------------------------------------------------------------------------

Proposal propose(MoveKind kind, const Configuration& state, const ChainContext& ctx,
                 const InstanceProposer& proposer, Rng& rng) {
  const std::size_t n = state.size();
  const std::size_t cap = ctx.config.max_instances;
  Proposal p;
  switch (kind) {
    case MoveKind::kBirth: {
      if (cap > 0 && n >= cap) return rejected(kind, state);
      ActivityInstance a = proposer.draw_birth(ctx, rng);
      if (!ctx.in_support(a)) return rejected(kind, state);
      const double lq = proposer.log_birth_density(ctx, a);
      p = make_proposal(kind, state, {}, {std::move(a)});
      p.log_q_ratio = -std::log(static_cast<double>(n + 1)) - lq;
      break;
    }
    case MoveKind::kDeath: {
      if (n == 0) return rejected(kind, state);
      const std::size_t i = uniform_index(rng, n);
      const double lq = proposer.log_birth_density(ctx, state.instances[i]);
      p = make_proposal(kind, state, {i}, {});
      p.log_q_ratio = std::log(static_cast<double>(n)) + lq;
      break;
    }
    case MoveKind::kSplit: {
      if (n == 0 || (cap > 0 && n >= cap)) return rejected(kind, state);
      const auto& c = ctx.config;
      const std::size_t i = uniform_index(rng, n);
      const ActivityInstance& parent = state.instances[i];
      const double u = parent.start + uniform01(rng) * parent.span;
      const double g = uniform01(rng) * (parent.end() - u);
      ActivityInstance first = parent;
      first.span = u - parent.start;
      ActivityInstance second = parent;
      second.start = u + g;
      second.span = parent.end() - second.start;
      second.center = draw_normal2(rng, parent.center, c.split_center_std_m);
      second.radius = draw_lognormal(rng, {parent.radius, c.split_radius_log_std});
      if (!ctx.in_support(first) || !ctx.in_support(second)) return rejected(kind, state);
      const double lq = -std::log(static_cast<double>(n)) + split_log_density(ctx, parent, u, second);
      p = make_proposal(kind, state, {i}, {std::move(first), std::move(second)});
      p.log_q_ratio = -log_pairs(n + 1) - lq;
      break;
    }
    case MoveKind::kMerge: {
      if (n < 2) return rejected(kind, state);
      std::size_t i = uniform_index(rng, n);
      std::size_t j = uniform_index(rng, n - 1);
      if (j >= i) ++j;
      const ActivityInstance* a = &state.instances[i];
      const ActivityInstance* b = &state.instances[j];
      if (b->start < a->start) std::swap(a, b);
      if (a->type != b->type || a->participants != b->participants || a->end() > b->start) {
        return rejected(kind, state);
      }
      ActivityInstance merged = *a;
      merged.span = b->end() - a->start;
      if (!ctx.in_support(merged)) return rejected(kind, state);
      const double lq_split =
          -std::log(static_cast<double>(n - 1)) + split_log_density(ctx, merged, a->end(), *b);
      p = make_proposal(kind, state, {i, j}, {std::move(merged)});
      p.log_q_ratio = lq_split + log_pairs(n);
      break;
    }
    default: {
      if (n == 0) return rejected(kind, state);
      const std::size_t i = uniform_index(rng, n);
      const ActivityInstance& from = state.instances[i];
      ActivityInstance to = proposer.draw_update(kind, ctx, from, rng);
      if (!ctx.in_support(to)) return rejected(kind, state);
      const double fwd = proposer.log_update_density(kind, ctx, from, to);
      const double rev = proposer.log_update_density(kind, ctx, to, from);
      p = make_proposal(kind, state, {i}, {std::move(to)});
      p.log_q_ratio = rev - fwd;
      break;
    }
  }
  if (!std::isfinite(p.log_q_ratio)) return rejected(kind, state);
  return p;
}

// ---------------------------------------------------------------------------

IncrementalScorer::IncrementalScorer(const ChainContext& ctx) : ctx_(ctx) {
  const DataBundle& data = *ctx.data;
  const std::size_t n_actors = data.n_actors();
  if (ctx.ensembles.size() != n_actors) {
    throw ContractError("scorer: one ensemble per actor is required");
  }
  n_draws_ = ctx.ensembles.empty() ? 0 : ctx.ensembles.front().size();
  for (const auto& e : ctx.ensembles) {
    if (e.size() != n_draws_) throw ContractError("scorer: ensembles differ in draw count");
  }
  if (n_draws_ == 0) throw ContractError("scorer: empty ensembles");

  n_obs_ = data.gps.size();
  obs_t_.resize(n_obs_);
  obs_by_actor_.assign(n_actors, {});
  obs_pos_.resize(n_obs_ * n_draws_);
  for (std::size_t o = 0; o < n_obs_; ++o) {
    const auto& g = data.gps[o];
    if (g.actor.value >= n_actors) throw ContractError("scorer: GPS actor out of range");
    obs_t_[o] = g.t;
    obs_by_actor_[g.actor.value].push_back(o);
    for (std::size_t d = 0; d < n_draws_; ++d) {
      obs_pos_[d * n_obs_ + o] = position_at(ctx.ensembles[g.actor.value].draws[d], ctx.grid, g.t);
    }
  }
  for (auto& v : obs_by_actor_) {
    std::stable_sort(v.begin(), v.end(), [&](std::size_t a, std::size_t b) {
      return obs_t_[a] < obs_t_[b];
    });
  }

  const auto& types = ctx.model->types;
  frames_by_actor_.assign(n_actors, {});
  frame_type_ll_.resize(data.frames.size());
  frame_bg_ll_.resize(data.frames.size());
  for (std::size_t f = 0; f < data.frames.size(); ++f) {
    const auto& fr = data.frames[f];
    if (fr.actor.value >= n_actors) throw ContractError("scorer: frame actor out of range");
    frames_by_actor_[fr.actor.value].push_back(f);
    frame_bg_ll_[f] = frame_feature_loglik(fr.features, ctx.model->params.background_mean,
                                           ctx.model->params.background_var);
    frame_type_ll_[f].resize(types.size());
    for (std::size_t k = 0; k < types.size(); ++k) {
      frame_type_ll_[f][k] =
          frame_feature_loglik(fr.features, types[k].feature_mean, types[k].feature_var);
    }
  }
  for (auto& v : frames_by_actor_) {
    std::stable_sort(v.begin(), v.end(), [&](std::size_t a, std::size_t b) {
      return data.frames[a].t < data.frames[b].t;
    });
  }
  scratch_.assign(n_obs_ * n_draws_, 0);
  cover_mark_.assign(n_obs_ * n_draws_, 0);
  frame_mark_.assign(data.frames.size(), 0);
}

double IncrementalScorer::instance_term(const ActivityInstance& a) const {
  const auto& type = ctx_.model->type(a.type);
  const double presence =
      presence_logfactor(a, ctx_.ensembles, ctx_.grid, type.excursion_rate_per_s);
  const double span_radius = span_radius_logprior(a, type);
  const double face = face_logfactor(ctx_.data->faces, a, type, ctx_.data->n_actors());
  return presence + span_radius + face;
}

double IncrementalScorer::frame_loglik(std::size_t frame, const Configuration& config) const {
  const auto idx = frame_assignment(ctx_.data->frames[frame], config);
  if (!idx) return frame_bg_ll_[frame];
  return frame_type_ll_[frame][config.instances[*idx].type.value];
}

void IncrementalScorer::accumulate_cover(const ActivityInstance& a, int sign) const {
  for (ActorId p : a.participants) {
    const auto& obs = obs_by_actor_[p.value];
    auto lo = std::lower_bound(obs.begin(), obs.end(), a.start,
                               [&](std::size_t o, double t) { return obs_t_[o] < t; });
    for (auto it = lo; it != obs.end() && obs_t_[*it] <= a.end(); ++it) {
      for (std::size_t d = 0; d < n_draws_; ++d) {
        const std::size_t idx = d * n_obs_ + *it;
        if ((obs_pos_[idx] - a.center).norm() > a.radius) continue;
        if (!cover_mark_[idx]) {
          cover_mark_[idx] = 1;
          touched_.push_back(idx);
        }
        scratch_[idx] += sign;
      }
    }
  }
}

IncrementalScorer::State IncrementalScorer::score(const Configuration& config) const {
  State s;
  s.config = config;
  s.cover_counts.assign(n_obs_ * n_draws_, 0);
  s.uncovered.assign(n_draws_, static_cast<int>(n_obs_));
  for (const auto& a : config.instances) {
    touched_.clear();
    accumulate_cover(a, +1);
    for (std::size_t idx : touched_) {
      if (s.cover_counts[idx]++ == 0) --s.uncovered[idx / n_obs_];
      scratch_[idx] = 0;
      cover_mark_[idx] = 0;
    }
  }
  touched_.clear();
  std::vector<double> per_draw(n_draws_);
  const double cu = ctx_.model->params.uncovered_penalty;
  for (std::size_t d = 0; d < n_draws_; ++d) per_draw[d] = -cu * s.uncovered[d];
  s.coverage = stats::log_mean_exp(per_draw);

  s.scene = 0.0;
  for (std::size_t f = 0; f < frame_bg_ll_.size(); ++f) s.scene += frame_loglik(f, config);

  for (const auto& a : config.instances) s.instance_terms.push_back(instance_term(a));
  if (!satisfies_overlap(config, ctx_.model->overlap)) {
    s.total = -kInf;
  } else {
    s.total = s.coverage + s.scene;
    for (double t : s.instance_terms) s.total += t;
  }
  return s;
}

IncrementalScorer::Evaluation IncrementalScorer::evaluate(const State& cur,
                                                          const Proposal& p) const {
  Evaluation e;
  const std::size_t n_kept = p.config.size() - p.added.size();
  for (std::size_t k = 0; k < p.added.size(); ++k) {
    const auto& a = p.added[k];
    for (std::size_t j = 0; j < n_kept + k; ++j) {
      if (!compatible(a, p.config.instances[j], ctx_.model->overlap)) {
        e.total = -kInf;
        return e;
      }
    }
  }
  for (const auto& a : p.added) e.added_terms.push_back(instance_term(a));

  // Coverage: only observations covered by removed or added instances change.
  touched_.clear();
  for (std::size_t r : p.removed) accumulate_cover(cur.config.instances[r], -1);
  for (const auto& a : p.added) accumulate_cover(a, +1);
  e.uncovered = cur.uncovered;
  for (std::size_t idx : touched_) {
    const int delta = scratch_[idx];
    scratch_[idx] = 0;
    cover_mark_[idx] = 0;
    if (delta == 0) continue;
    const int old = cur.cover_counts[idx];
    const int now = old + delta;
    if (old == 0 && now > 0) --e.uncovered[idx / n_obs_];
    if (old > 0 && now == 0) ++e.uncovered[idx / n_obs_];
    e.count_deltas.emplace_back(idx, delta);
  }
  touched_.clear();
  std::vector<double> per_draw(n_draws_);
  const double cu = ctx_.model->params.uncovered_penalty;
  for (std::size_t d = 0; d < n_draws_; ++d) per_draw[d] = -cu * e.uncovered[d];
  e.coverage = stats::log_mean_exp(per_draw);

  // Scene: only frames inside a removed or added instance can be reassigned.
  const auto& frames = ctx_.data->frames;
  std::vector<std::size_t> marked;
  auto mark = [&](const ActivityInstance& a) {
    for (ActorId q : a.participants) {
      const auto& fs = frames_by_actor_[q.value];
      auto lo = std::lower_bound(fs.begin(), fs.end(), a.start,
                                 [&](std::size_t f, double t) { return frames[f].t < t; });
      for (auto it = lo; it != fs.end() && frames[*it].t <= a.end(); ++it) {
        if (!frame_mark_[*it]) {
          frame_mark_[*it] = 1;
          marked.push_back(*it);
        }
      }
    }
  };
  for (std::size_t r : p.removed) mark(cur.config.instances[r]);
  for (const auto& a : p.added) mark(a);
  std::sort(marked.begin(), marked.end());
  double delta = 0.0;
  for (std::size_t f : marked) {
    frame_mark_[f] = 0;
    delta += frame_loglik(f, p.config) - frame_loglik(f, cur.config);
  }
  e.scene = cur.scene + delta;

  e.total = e.coverage + e.scene;
  std::size_t r = 0;
  for (std::size_t i = 0; i < cur.instance_terms.size(); ++i) {
    if (r < p.removed.size() && p.removed[r] == i) {
      ++r;
      continue;
    }
    e.total += cur.instance_terms[i];
  }
  for (double t : e.added_terms) e.total += t;
  return e;
}

void IncrementalScorer::commit(State& cur, Proposal&& p, Evaluation&& e) const {
  for (const auto& [idx, delta] : e.count_deltas) {
    cur.cover_counts[idx] = static_cast<std::uint16_t>(cur.cover_counts[idx] + delta);
  }
  cur.uncovered = std::move(e.uncovered);
  for (auto it = p.removed.rbegin(); it != p.removed.rend(); ++it) {
    cur.instance_terms.erase(cur.instance_terms.begin() + static_cast<std::ptrdiff_t>(*it));
  }
  for (double t : e.added_terms) cur.instance_terms.push_back(t);
  cur.config = std::move(p.config);
  cur.coverage = e.coverage;
  cur.scene = e.scene;
  cur.total = e.total;
}

// ---------------------------------------------------------------------------

bool mh_accept(double log_alpha, Rng& rng) {
  if (log_alpha >= 0.0) return true;
  if (log_alpha == -kInf) return false;
  return std::log(uniform01(rng)) < log_alpha;
}

bool accept(IncrementalScorer::State& state, Proposal&& proposal,
            const IncrementalScorer& scorer, Rng& rng, std::int64_t& numerical_warnings) {
  if (proposal.auto_reject) return false;
  IncrementalScorer::Evaluation e = scorer.evaluate(state, proposal);
  const double log_alpha = e.total - state.total + proposal.log_q_ratio;
  if (std::isnan(log_alpha) || log_alpha == kInf) {
    ++numerical_warnings;
    return false;
  }
  if (!mh_accept(log_alpha, rng)) return false;
  scorer.commit(state, std::move(proposal), std::move(e));
  return true;
}

// ---------------------------------------------------------------------------

TimeGrid data_grid(const DataBundle& data, int points) {
  TimeGrid g{data.t_min, data.t_max, points};
  if (!(g.t_end > g.t_start)) throw ContractError("data time support is empty");
  g.validate();
  return g;
}

std::vector<GpPosterior> build_posteriors(const DataBundle& data, const GpHyperParams& hyper,
                                          const TimeGrid& grid) {
  std::vector<GpPosterior> out;
  out.reserve(data.n_actors());
  for (std::size_t a = 0; a < data.n_actors(); ++a) {
    const ActorId id(static_cast<std::uint32_t>(a));
    const auto obs = data.gps_of(id);
    out.push_back(build_gp(id, obs, hyper, grid));
  }
  return out;
}

std::vector<TrajectoryEnsemble> draw_ensembles(std::span<const GpPosterior> posteriors,
                                               int n_draws, std::uint64_t seed,
                                               const Configuration* condition_on,
                                               double sigma_aux_m) {
  const std::size_t n = posteriors.size();
  std::vector<TrajectoryEnsemble> out(n);
  std::vector<std::size_t> root(n);
  std::iota(root.begin(), root.end(), 0);
  auto find = [&](std::size_t x) {
    while (root[x] != x) x = root[x] = root[root[x]];
    return x;
  };
  std::vector<char> linked(n, 0);
  if (condition_on) {
    for (const auto& a : condition_on->instances) {
      for (ActorId p : a.participants) {
        linked[p.value] = 1;
        root[find(p.value)] = find(a.participants.front().value);
      }
    }
  }
  for (std::size_t a = 0; a < n; ++a) {
    if (!linked[a]) out[a] = sample_trajectories(posteriors[a], n_draws, stats::derive_seed(seed, a));
  }
  for (std::size_t r = 0; r < n; ++r) {
    if (!linked[r] || find(r) != r) continue;
    std::vector<const GpPosterior*> parts;
    for (std::size_t a = 0; a < n; ++a) {
      if (linked[a] && find(a) == r) parts.push_back(&posteriors[a]);
    }
    const GpPosterior joint = stack_posteriors(parts);
    std::vector<AuxObservationSet> sets;
    for (std::size_t k = 0; k < condition_on->size(); ++k) {
      const auto& inst = condition_on->instances[k];
      if (find(inst.participants.front().value) != r) continue;
      sets.push_back(make_aux_observations(joint, inst, k, AuxMode::kStatic, sigma_aux_m));
    }
    const GpPosterior cond = condition_on_constraints(joint, sets);
    const TrajectoryEnsemble ens = sample_trajectories(cond, n_draws, stats::derive_seed(seed, n + r));
    const int np = cond.grid().n_points;
    for (ActorId id : cond.actors()) {
      TrajectoryEnsemble& e = out[id.value];
      e.seed = ens.seed;
      e.log_density = ens.log_density;
      const int block = cond.block_of(id);
      for (const auto& d : ens.draws) e.draws.emplace_back(d.middleRows(block, np));
    }
  }
  return out;
}

ChainContext make_context(const DataBundle& data, const ActivityModel& model,
                          std::span<const GpPosterior> posteriors,
                          std::vector<TrajectoryEnsemble> ensembles,
                          const SamplerConfig& config) {
  config.validate();
  model.validate();
  if (posteriors.empty()) throw ContractError("make_context: no posteriors");
  ChainContext ctx;
  ctx.data = &data;
  ctx.model = &model;
  ctx.grid = posteriors.front().grid();
  ctx.t_min = ctx.grid.t_start;
  ctx.t_max = ctx.grid.t_end;
  ctx.config = config;
  ctx.ensembles = std::move(ensembles);

  ctx.box_lo = Vec2::Constant(kInf);
  ctx.box_hi = Vec2::Constant(-kInf);
  for (const auto& e : ctx.ensembles) {
    for (const auto& d : e.draws) {
      ctx.box_lo = ctx.box_lo.cwiseMin(d.colwise().minCoeff().transpose());
      ctx.box_hi = ctx.box_hi.cwiseMax(d.colwise().maxCoeff().transpose());
    }
  }
  if (!ctx.box_lo.allFinite() || !ctx.box_hi.allFinite()) {
    throw ContractError("make_context: ensembles are empty");
  }
  // Guard against a degenerate box.
  const Vec2 pad =
      ((ctx.box_hi - ctx.box_lo).array() < 1.0).select(Vec2::Constant(0.5), Vec2::Zero());
  ctx.box_lo -= pad;
  ctx.box_hi += pad;

  ctx.clusters = find_colocation_clusters(posteriors, config.cluster_distance_m,
                                          config.cluster_min_duration_s,
                                          config.cluster_max_gap_s);

  const int n_actors = static_cast<int>(data.n_actors());
  ctx.count_log_pmf.assign(static_cast<std::size_t>(std::max(n_actors, 0)) + 1, -kInf);
  if (n_actors >= 2) {
    const stats::DiscretizedLogNormal counts(config.participants_prior, 2, n_actors,
                                             stats::DiscretizedLogNormal::Tail::kClamp);
    for (int k = 2; k <= n_actors; ++k) ctx.count_log_pmf[k] = counts.log_pmf(k);
  }
  return ctx;
}

ChainSamples run_chain(ChainContext& ctx, const InstanceProposer& proposer,
                       std::span<const GpPosterior> posteriors, std::uint64_t seed) {
  const SamplerConfig& cfg = ctx.config;
  Rng rng(seed);
  ChainSamples out;
  out.seed = seed;
  out.burn_in = cfg.burn_in;
  out.n_iters = cfg.n_iters;

  auto scorer = std::make_unique<IncrementalScorer>(ctx);
  IncrementalScorer::State state = scorer->score(Configuration{});

  for (std::int64_t it = 1; it <= cfg.n_iters; ++it) {
    if (cfg.aux_conditioning && cfg.refresh_period > 0 && it % cfg.refresh_period == 0) {
      const std::uint64_t s = rng();
      ctx.ensembles = draw_ensembles(posteriors, cfg.n_draws, s, &state.config,
                                     ctx.model->params.sigma_aux_m);
      scorer = std::make_unique<IncrementalScorer>(ctx);
      state = scorer->score(state.config);
    }
    const MoveKind kind = cfg.weights.pick(rng);
    auto& st = out.stats[static_cast<std::size_t>(kind)];
    ++st.proposed;
    Proposal p = propose(kind, state.config, ctx, proposer, rng);
    if (p.auto_reject) {
      ++st.auto_rejected;
    } else if (accept(state, std::move(p), *scorer, rng, out.numerical_warnings)) {
      ++st.accepted;
    }
    if (it > cfg.burn_in && (it - cfg.burn_in) % cfg.sample_thin == 0) {
      out.samples.push_back({it, state.total, state.config});
    }
  }
  return out;
}

ChainSamples run_chain(const DataBundle& data, const ActivityModel& model,
                       const GpHyperParams& hyper, const SamplerConfig& config,
                       std::uint64_t seed) {
  config.validate();
  bool enough = false;
  for (std::size_t a = 0; a < data.n_actors(); ++a) {
    if (data.gps_of(ActorId(static_cast<std::uint32_t>(a))).size() >= 2) enough = true;
  }
  if (!enough) throw ContractError("run_chain: no actor has at least 2 GPS observations");
  const TimeGrid grid = data_grid(data, config.grid_points);
  const auto posteriors = build_posteriors(data, hyper, grid);
  auto ensembles = draw_ensembles(posteriors, config.n_draws, stats::derive_seed(seed, 0xE5));
  ChainContext ctx = make_context(data, model, posteriors, std::move(ensembles), config);
  const ContinuousProposer proposer;
  return run_chain(ctx, proposer, posteriors, seed);
}

}  // namespace coact
