#include "coactivity/summarize.hpp"

#include "coactivity/errors.hpp"
#include "coactivity/factors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace coact {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool earlier(const FrameRecord& a, const FrameRecord& b) {
  return a.t < b.t || (a.t == b.t && a.actor < b.actor);
}

const ChainSample* best_sample(std::span<const ChainSamples> chains) {
  const ChainSample* best = nullptr;
  for (const auto& c : chains) {
    for (const auto& s : c.samples) {
      if (!best || s.log_score > best->log_score) best = &s;
    }
  }
  return best;
}

bool in_disc(const Vec2& p, const LocationDisc& d) { return (p - d.center).norm() <= d.radius; }

bool location_allowed(const Vec2& p, const TrellisConstraints& c) {
  if (!c.permitted.empty() &&
      std::none_of(c.permitted.begin(), c.permitted.end(), [&](const auto& d) { return in_disc(p, d); })) {
    return false;
  }
  return std::none_of(c.prohibited.begin(), c.prohibited.end(),
                      [&](const auto& d) { return in_disc(p, d); });
}

bool frame_allowed(std::size_t i, const TrellisContext& ctx, const TrellisConstraints& c) {
  const double t = ctx.frames[i].t;
  if (c.t_begin && t < *c.t_begin) return false;
  if (c.t_end && t > *c.t_end) return false;
  return location_allowed(ctx.frame_position[i], c);
}

std::vector<std::uint32_t> identities(const FrameRecord& f) {
  std::vector<std::uint32_t> ids;
  for (const auto& d : f.faces) {
    if (d.detected) ids.push_back(d.detected->value);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

std::vector<FrameRecord> frames_with_faces(std::span<const FrameRecord> frames,
                                           std::span<const FaceDetection> faces) {
  std::vector<FrameRecord> out(frames.begin(), frames.end());
  std::vector<std::vector<std::size_t>> by_actor;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto a = out[i].actor.value;
    if (a >= by_actor.size()) by_actor.resize(a + 1);
    by_actor[a].push_back(i);
  }
  for (auto& lane : by_actor) {
    std::sort(lane.begin(), lane.end(), [&](std::size_t x, std::size_t y) { return out[x].t < out[y].t; });
  }
  for (const auto& d : faces) {
    if (d.observer.value >= by_actor.size() || by_actor[d.observer.value].empty()) continue;
    const auto& lane = by_actor[d.observer.value];
    auto it = std::lower_bound(lane.begin(), lane.end(), d.t,
                               [&](std::size_t f, double t) { return out[f].t < t; });
    std::size_t pick;
    if (it == lane.end()) {
      pick = lane.back();
    } else if (it == lane.begin()) {
      pick = *it;
    } else {
      const std::size_t hi = *it;
      const std::size_t lo = *(it - 1);
      pick = (d.t - out[lo].t <= out[hi].t - d.t) ? lo : hi;
    }
    out[pick].faces.push_back(d);
  }
  return out;
}

std::vector<std::int64_t> activity_votes(std::span<const ChainSamples> chains,
                                         std::span<const FrameRecord> frames) {
  if (chains.empty()) throw ContractError("activity_votes: no chains");
  std::vector<std::int64_t> votes(frames.size(), 0);
  for (const auto& c : chains) {
    for (const auto& s : c.samples) {
      for (const auto& a : s.config.instances) {
        for (std::size_t f = 0; f < frames.size(); ++f) {
          if (a.covers(frames[f].actor, frames[f].t)) ++votes[f];
        }
      }
    }
  }
  return votes;
}

void FrameDistanceWeights::validate() const {
  for (double v : {w_ac, w_feat, w_time, w_id}) {
    if (!(v >= 0.0)) throw ConfigError("frame distance weights must be >= 0");
  }
  if (!(w_ac + w_feat + w_time + w_id > 0.0)) {
    throw ConfigError("at least one frame distance weight must be > 0");
  }
  if (!(feat_scale > 0.0) || !(time_scale > 0.0)) {
    throw ConfigError("frame distance scales must be > 0");
  }
}

namespace {

double feature_distance(const FrameRecord& a, const FrameRecord& b) {
  if (a.features.size() != b.features.size()) {
    throw ContractError("frame_distance: feature dimension mismatch");
  }
  double s = 0.0;
  for (std::size_t v = 0; v < a.features.size(); ++v) {
    const double d = a.features[v] - b.features[v];
    s += d * d;
  }
  return std::sqrt(s);
}

double base_distance(const FrameRecord& a, const FrameRecord& b, const FrameDistanceWeights& w) {
  double d = 0.0;
  if (w.w_feat > 0.0) d += w.w_feat * feature_distance(a, b) / w.feat_scale;
  if (w.w_time > 0.0) d += w.w_time * std::abs(a.t - b.t) / w.time_scale;
  if (w.w_id > 0.0 && a.actor != b.actor) d += w.w_id;
  return d;
}

}  // namespace

double frame_distance(const FrameRecord& a, const FrameRecord& b,
                      std::span<const ChainSamples> chains, const FrameDistanceWeights& w) {
  w.validate();
  std::size_t pairs = 0;
  std::size_t disagree = 0;
  for (const auto& c : chains) {
    for (const auto& s : c.samples) {
      for (const auto& inst : s.config.instances) {
        ++pairs;
        if (inst.covers(a.actor, a.t) != inst.covers(b.actor, b.t)) ++disagree;
      }
    }
  }
  const double d_ac = pairs > 0 ? static_cast<double>(disagree) / static_cast<double>(pairs) : 0.0;
  return w.w_ac * d_ac + base_distance(a, b, w);
}

FrameDistanceTable::FrameDistanceTable(std::span<const FrameRecord> frames,
                                       std::span<const ChainSamples> chains,
                                       FrameDistanceWeights w)
    : frames_(frames), w_(w) {
  w_.validate();
  for (const auto& c : chains) {
    for (const auto& s : c.samples) n_pairs_ += s.config.size();
  }
  words_ = (n_pairs_ + 63) / 64;
  bits_.assign(frames.size() * words_, 0);
  std::size_t p = 0;
  for (const auto& c : chains) {
    for (const auto& s : c.samples) {
      for (const auto& inst : s.config.instances) {
        for (std::size_t f = 0; f < frames.size(); ++f) {
          if (inst.covers(frames[f].actor, frames[f].t)) {
            bits_[f * words_ + p / 64] |= std::uint64_t{1} << (p % 64);
          }
        }
        ++p;
      }
    }
  }
}

double FrameDistanceTable::activity_disagreement(std::size_t i, std::size_t j) const {
  if (n_pairs_ == 0) return 0.0;
  std::size_t diff = 0;
  for (std::size_t k = 0; k < words_; ++k) {
    diff += static_cast<std::size_t>(std::popcount(bits_[i * words_ + k] ^ bits_[j * words_ + k]));
  }
  return static_cast<double>(diff) / static_cast<double>(n_pairs_);
}

double FrameDistanceTable::operator()(std::size_t i, std::size_t j) const {
  return w_.w_ac * activity_disagreement(i, j) + base_distance(frames_[i], frames_[j], w_);
}

KeyframeSummary select_keyframes(std::span<const FrameRecord> frames, int k,
                                 std::span<const ChainSamples> chains,
                                 const FrameDistanceWeights& weights, double vote_floor) {
  if (k < 1) throw ContractError("select_keyframes: k must be >= 1");
  if (!(vote_floor >= 0.0 && vote_floor <= 1.0)) {
    throw ContractError("select_keyframes: vote_floor must be in [0, 1]");
  }
  KeyframeSummary out;
  if (frames.empty()) return out;
  const auto votes = activity_votes(chains, frames);
  const std::int64_t max_votes = *std::max_element(votes.begin(), votes.end());

  std::vector<std::size_t> survivors;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (static_cast<double>(votes[f]) >= vote_floor * static_cast<double>(max_votes)) {
      survivors.push_back(f);
    }
  }
  out.floor_fallback = max_votes == 0;
  std::sort(survivors.begin(), survivors.end(),
            [&](std::size_t a, std::size_t b) { return earlier(frames[a], frames[b]); });

  const FrameDistanceTable dist(frames, chains, weights);
  std::size_t seed = survivors.front();
  for (std::size_t f : survivors) {
    if (votes[f] > votes[seed]) seed = f;
  }
  const std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(k), survivors.size());
  out.truncated_k = static_cast<std::size_t>(k) > survivors.size();

  std::vector<char> taken(frames.size(), 0);
  std::vector<double> dmin(frames.size(), kInf);
  std::size_t pick = seed;
  while (out.pick_order.size() < want) {
    out.pick_order.push_back(pick);
    taken[pick] = 1;
    for (std::size_t f : survivors) {
      if (!taken[f]) dmin[f] = std::min(dmin[f], dist(pick, f));
    }
    double best = -kInf;
    for (std::size_t f : survivors) {
      if (!taken[f] && dmin[f] > best) {
        best = dmin[f];
        pick = f;
      }
    }
  }
  out.frames = out.pick_order;
  std::sort(out.frames.begin(), out.frames.end(),
            [&](std::size_t a, std::size_t b) { return earlier(frames[a], frames[b]); });
  for (std::size_t f : out.frames) out.votes.push_back(votes[f]);
  return out;
}

std::vector<Vec2> disc_lattice(const Vec2& center, double radius, int rings) {
  if (!(radius > 0.0) || rings < 1) throw ContractError("disc_lattice: bad radius or ring count");
  std::vector<Vec2> pts{center};
  for (int k = 1; k <= rings; ++k) {
    const double rho = radius * k / rings;
    const int m = 6 * k;
    for (int j = 0; j < m; ++j) {
      const double phi = 2.0 * std::numbers::pi * j / m;
      pts.push_back(center + rho * Vec2(std::cos(phi), std::sin(phi)));
    }
  }
  return pts;
}

MapSummary map_summary(const KeyframeSummary& summary, std::span<const FrameRecord> frames,
                       std::span<const ChainSamples> chains, int rings) {
  const ChainSample* best = best_sample(chains);
  if (!best || best->config.empty()) {
    throw ContractError("map_summary: the maximum-score sample has no instance");
  }
  const Configuration& config = best->config;
  MapSummary out;
  std::vector<std::vector<Vec2>> lattice;
  for (std::size_t i = 0; i < config.size(); ++i) {
    const auto& a = config.instances[i];
    out.circles.push_back({i, a.center, a.radius});
    lattice.push_back(disc_lattice(a.center, a.radius, rings));
  }
  std::vector<std::vector<Vec2>> placed(config.size());
  for (std::size_t f : summary.frames) {
    if (f >= frames.size()) throw ContractError("map_summary: frame index out of range");
    const auto inst = frame_assignment(frames[f], config);
    if (!inst) continue;
    const auto& cand = lattice[*inst];
    auto& used = placed[*inst];
    std::size_t pick = 0;
    if (!used.empty()) {
      double best_d = -kInf;
      for (std::size_t c = 0; c < cand.size(); ++c) {
        double d = kInf;
        for (const auto& u : used) d = std::min(d, (cand[c] - u).norm());
        if (d > best_d) {
          best_d = d;
          pick = c;
        }
      }
    }
    used.push_back(cand[pick]);
    out.placements.push_back({f, *inst, cand[pick]});
  }
  return out;
}

void TrellisWeights::validate() const {
  for (double v : {w_q, w_f, w_a, w_nm, w_sf, w_sa, w_delta, w_T, w_N}) {
    if (!(v >= 0.0)) throw ConfigError("trellis weights must be >= 0");
  }
  for (double v : w_actor) {
    if (!(v >= 0.0)) throw ConfigError("per-actor trellis weights must be >= 0");
  }
  if (super_node_size < 1 || super_node_size > 16) {
    throw ConfigError("super node size must be in [1, 16]");
  }
  const auto& c = constraints;
  if (c.min_run < 1 || c.max_run < c.min_run) {
    throw ConfigError("run constraint needs 1 <= min <= max");
  }
  if (c.t_begin && c.t_end && *c.t_end < *c.t_begin) throw ConfigError("t_end before t_begin");
  if (c.max_jump_s && !(*c.max_jump_s >= 0.0)) throw ConfigError("max jump must be >= 0");
  for (const auto* v : {&c.permitted, &c.prohibited}) {
    for (const auto& d : *v) {
      if (!(d.radius >= 0.0)) throw ConfigError("location disc radius must be >= 0");
    }
  }
}

double TrellisWeights::actor_weight(ActorId a) const {
  return a.value < w_actor.size() ? w_actor[a.value] : 1.0;
}

void MatchTable::set(ActorId ai, double ti, ActorId aj, double tj, double matches) {
  auto k1 = std::make_tuple(ai.value, ti, aj.value, tj);
  auto k2 = std::make_tuple(aj.value, tj, ai.value, ti);
  m_[std::min(k1, k2)] = matches;
}

double MatchTable::get(ActorId ai, double ti, ActorId aj, double tj) const {
  auto k1 = std::make_tuple(ai.value, ti, aj.value, tj);
  auto k2 = std::make_tuple(aj.value, tj, ai.value, ti);
  auto it = m_.find(std::min(k1, k2));
  return it == m_.end() ? 0.0 : it->second;
}

std::vector<MatchTable::Entry> MatchTable::entries() const {
  std::vector<Entry> out;
  for (const auto& [k, v] : m_) {
    out.push_back({ActorId(std::get<0>(k)), std::get<1>(k), ActorId(std::get<2>(k)), std::get<3>(k), v});
  }
  return out;
}

TrellisContext make_trellis_context(std::span<const FrameRecord> frames,
                                    std::span<const ChainSamples> chains,
                                    std::span<const GpPosterior> posteriors,
                                    const MatchTable* matches, const TrellisWeights& w) {
  w.validate();
  TrellisContext ctx;
  ctx.frames = frames;
  ctx.posteriors = posteriors;
  ctx.matches = matches;
  if (const ChainSample* best = best_sample(chains)) ctx.map_config = best->config;
  for (const auto& f : frames) {
    if (f.actor.value >= posteriors.size()) {
      throw ContractError("trellis: frame actor " + std::to_string(f.actor.value) +
                          " has no trajectory posterior");
    }
    const auto& post = posteriors[f.actor.value];
    ctx.frame_position.push_back(position_at(post.mean(), post.grid(), f.t));
    ctx.frame_instance.push_back(frame_assignment(f, ctx.map_config));
  }

  double kp = 0.0;
  for (const auto& f : frames) kp += f.keypoint_count;
  ctx.kp_bar = frames.empty() ? 0.0 : kp / static_cast<double>(frames.size());
  ctx.kp_bar_zero = !(ctx.kp_bar > 0.0);

  // Pairs allowed by c2 with time gap within c3.
  const auto& c = w.constraints;
  std::vector<std::size_t> ok;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (location_allowed(ctx.frame_position[i], c)) ok.push_back(i);
  }
  std::sort(ok.begin(), ok.end(), [&](std::size_t a, std::size_t b) { return frames[a].t < frames[b].t; });
  const double jump = c.max_jump_s.value_or(kInf);
  double n_pairs = 0.0;
  for (std::size_t lo = 0, hi = 0; lo < ok.size(); ++lo) {
    hi = std::max(hi, lo);
    while (hi + 1 < ok.size() && frames[ok[hi + 1]].t - frames[ok[lo]].t <= jump) ++hi;
    n_pairs += static_cast<double>(hi - lo);
  }
  double m_sum = 0.0;
  if (matches) {
    std::map<std::pair<std::uint32_t, double>, std::size_t> index;
    for (std::size_t i : ok) index[{frames[i].actor.value, frames[i].t}] = i;
    for (const auto& e : matches->entries()) {
      auto a = index.find({e.ai.value, e.ti});
      auto b = index.find({e.aj.value, e.tj});
      if (a == index.end() || b == index.end() || a->second == b->second) continue;
      if (std::abs(e.ti - e.tj) <= jump) m_sum += e.matches;
    }
  }
  ctx.m_bar = n_pairs > 0.0 ? m_sum / n_pairs : 0.0;
  ctx.m_bar_zero = !(ctx.m_bar > 0.0);
  return ctx;
}

bool frame_identified(const FrameRecord& f) {
  return std::any_of(f.faces.begin(), f.faces.end(), [](const auto& d) { return d.detected.has_value(); });
}

double node_cost(std::size_t frame, const TrellisContext& ctx, const TrellisWeights& w) {
  const auto& f = ctx.frames[frame];
  const double quality = ctx.kp_bar_zero ? 0.0 : 1.0 - f.keypoint_count / ctx.kp_bar;
  const double d_f = frame_identified(f) ? 1.0 : 0.0;
  const double d_a = ctx.frame_instance[frame] ? 1.0 : 0.0;
  return (quality * w.w_q + (1.0 - d_f) * w.w_f + (1.0 - d_a) * w.w_a) * w.actor_weight(f.actor);
}

double edge_cost(std::size_t from, std::size_t to, const TrellisContext& ctx,
                 const TrellisWeights& w, const std::vector<char>& represented) {
  const auto& a = ctx.frames[from];
  const auto& b = ctx.frames[to];
  double match = 0.0;
  if (!ctx.m_bar_zero) {
    const double m = ctx.matches ? ctx.matches->get(a.actor, a.t, b.actor, b.t) : 0.0;
    match = 1.0 - m / ctx.m_bar;
  }
  const auto ia = identities(a);
  const auto ib = identities(b);
  std::vector<std::uint32_t> shared;
  std::set_intersection(ia.begin(), ia.end(), ib.begin(), ib.end(), std::back_inserter(shared));
  const double d_sf = shared.empty() ? 0.0 : 1.0;
  const auto& ka = ctx.frame_instance[from];
  const auto& kb = ctx.frame_instance[to];
  const double d_sa = (ka && kb && *ka == *kb) ? 1.0 : 0.0;
  const double delta = (ctx.frame_position[from] - ctx.frame_position[to]).norm();
  const double gap = std::abs(b.t - a.t);
  const bool is_new = kb && (*kb >= represented.size() || !represented[*kb]);
  const double d_n = is_new ? 1.0 : 0.0;
  const double base = match * w.w_nm + (1.0 - d_sf) * w.w_sf + (1.0 - d_sa) * w.w_sa +
                      delta * w.w_delta + gap * w.w_T;
  return base * (d_n * w.w_N + (1.0 - d_n));
}

VideoSummary summarize_video(const TrellisContext& ctx, const TrellisWeights& w, int t_out) {
  if (t_out < 1) throw ContractError("summarize_video: T_out must be >= 1");
  w.validate();
  const auto& c = w.constraints;
  const auto& frames = ctx.frames;
  VideoSummary out;

  std::uint32_t n_actors = 0;
  for (const auto& f : frames) n_actors = std::max(n_actors, f.actor.value + 1);
  std::vector<std::vector<std::size_t>> lanes(n_actors);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frame_allowed(i, ctx, c)) lanes[frames[i].actor.value].push_back(i);
  }
  bool any = false;
  for (auto& lane : lanes) {
    std::sort(lane.begin(), lane.end(),
              [&](std::size_t a, std::size_t b) { return earlier(frames[a], frames[b]); });
    any = any || !lane.empty();
  }
  if (!any) {
    out.empty = true;
    return out;
  }

  std::vector<char> represented(ctx.map_config.size(), 0);
  std::optional<std::size_t> last;
  ActorId cur_actor;
  int cur_run = 0;
  const double jump = c.max_jump_s.value_or(kInf);
  const auto s = static_cast<std::size_t>(w.super_node_size);

  while (out.frames.size() < static_cast<std::size_t>(t_out)) {
    std::optional<VideoStep> chosen;
    double chosen_first_t = kInf;
    const double cur_time = last ? frames[*last].t : -kInf;
    for (std::uint32_t a = 0; a < n_actors; ++a) {
      const ActorId actor(a);
      const bool same = last && actor == cur_actor;
      if (last && !same && cur_run < c.min_run) continue;
      std::vector<std::size_t> node;
      for (std::size_t f : lanes[a]) {
        if (frames[f].t > cur_time) node.push_back(f);
        if (node.size() == s) break;
      }
      if (node.empty()) continue;

      double best_mean = kInf;
      std::vector<std::size_t> best_path;
      const std::uint32_t n_masks = 1u << node.size();
      for (std::uint32_t mask = 1; mask < n_masks; ++mask) {
        const int len = std::popcount(mask);
        if (out.frames.size() + static_cast<std::size_t>(len) > static_cast<std::size_t>(t_out)) continue;
        if ((same ? cur_run + len : len) > c.max_run) continue;
        std::vector<std::size_t> path;
        for (std::size_t b = 0; b < node.size(); ++b) {
          if (mask & (1u << b)) path.push_back(node[b]);
        }
        bool ok = true;
        std::optional<std::size_t> prev = last;
        for (std::size_t f : path) {
          if (prev && (frames[f].t <= frames[*prev].t || frames[f].t - frames[*prev].t > jump)) {
            ok = false;
            break;
          }
          prev = f;
        }
        if (!ok) continue;
        std::vector<char> rep = represented;
        prev = last;
        double total = 0.0;
        for (std::size_t f : path) {
          if (prev) total += edge_cost(*prev, f, ctx, w, rep);
          total += node_cost(f, ctx, w);
          if (const auto& k = ctx.frame_instance[f]; k && *k < rep.size()) rep[*k] = 1;
          prev = f;
        }
        const double mean = total / len;
        bool better = mean < best_mean;
        if (!better && mean == best_mean) {
          if (path.size() != best_path.size()) {
            better = path.size() > best_path.size();
          } else {
            better = std::lexicographical_compare(
                path.begin(), path.end(), best_path.begin(), best_path.end(),
                [&](std::size_t x, std::size_t y) { return earlier(frames[x], frames[y]); });
          }
        }
        if (better) {
          best_mean = mean;
          best_path = std::move(path);
        }
      }
      if (best_path.empty()) continue;
      const double first_t = frames[best_path.front()].t;
      if (!chosen || best_mean < chosen->mean_cost ||
          (best_mean == chosen->mean_cost && first_t < chosen_first_t)) {
        chosen = VideoStep{actor, node, best_path, best_mean};
        chosen_first_t = first_t;
      }
    }
    if (!chosen) break;
    for (std::size_t f : chosen->path) {
      out.frames.push_back(f);
      if (const auto& k = ctx.frame_instance[f]; k && *k < represented.size()) represented[*k] = 1;
    }
    cur_run = (last && chosen->actor == cur_actor) ? cur_run + static_cast<int>(chosen->path.size())
                                                   : static_cast<int>(chosen->path.size());
    cur_actor = chosen->actor;
    last = chosen->path.back();
    out.steps.push_back(std::move(*chosen));
    if (c.t_end && frames[*last].t >= *c.t_end) break;
  }

  if (!out.frames.empty() && cur_run < c.min_run) {
    out.trimmed = static_cast<std::size_t>(cur_run);
    out.frames.resize(out.frames.size() - out.trimmed);
  }
  out.empty = out.frames.empty();
  return out;
}

std::vector<std::string> validate_video(std::span<const std::size_t> sequence,
                                        const TrellisContext& ctx, const TrellisWeights& w) {
  std::vector<std::string> v;
  const auto& c = w.constraints;
  const auto& frames = ctx.frames;
  for (std::size_t k = 0; k < sequence.size(); ++k) {
    const std::size_t i = sequence[k];
    if (i >= frames.size()) {
      v.push_back("position " + std::to_string(k) + ": frame index out of range");
      continue;
    }
    const double t = frames[i].t;
    if ((c.t_begin && t < *c.t_begin) || (c.t_end && t > *c.t_end)) {
      v.push_back("c1: frame at t=" + std::to_string(t) + " outside [t_begin, t_end]");
    }
    const Vec2& p = ctx.frame_position[i];
    bool permitted = c.permitted.empty();
    for (const auto& d : c.permitted) permitted = permitted || (p - d.center).norm() <= d.radius;
    if (!permitted) v.push_back("c2: frame at t=" + std::to_string(t) + " outside permitted areas");
    for (const auto& d : c.prohibited) {
      if ((p - d.center).norm() <= d.radius) {
        v.push_back("c2: frame at t=" + std::to_string(t) + " inside a prohibited area");
      }
    }
    if (k > 0 && sequence[k - 1] < frames.size()) {
      const double prev = frames[sequence[k - 1]].t;
      if (!(t > prev)) v.push_back("order: times not strictly increasing at position " + std::to_string(k));
      if (c.max_jump_s && t - prev > *c.max_jump_s) {
        v.push_back("c3: jump of " + std::to_string(t - prev) + " s at position " + std::to_string(k));
      }
    }
  }
  std::size_t start = 0;
  while (start < sequence.size()) {
    std::size_t end = start;
    while (end + 1 < sequence.size() && sequence[end + 1] < frames.size() &&
           sequence[start] < frames.size() &&
           frames[sequence[end + 1]].actor == frames[sequence[start]].actor) {
      ++end;
    }
    const auto len = static_cast<int>(end - start + 1);
    if (len < c.min_run || len > c.max_run) {
      v.push_back("c4: run of " + std::to_string(len) + " frames at position " + std::to_string(start));
    }
    start = end + 1;
  }
  return v;
}

}  // namespace coact
