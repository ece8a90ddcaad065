#include "coactivity/scenario.hpp"

#include "coactivity/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <thread>

namespace coact {

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vec2 gaussian2(Rng& rng, double sd) {
  std::normal_distribution<double> n(0.0, sd);
  const double x = n(rng);
  const double y = n(rng);
  return {x, y};
}

Vec2 in_disc(Rng& rng, const Vec2& c, double r) {
  const double rho = r * std::sqrt(uniform(rng, 0.0, 1.0));
  const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  return c + rho * Vec2(std::cos(phi), std::sin(phi));
}

double draw(Rng& rng, const stats::LogNormal& d) {
  return d.median * std::exp(std::normal_distribution<double>(0.0, d.log_std)(rng));
}

// Area of the intersection of two discs.
double lens_area(double d, double r1, double r2) {
  if (d >= r1 + r2) return 0.0;
  const double rmin = std::min(r1, r2);
  if (d <= std::abs(r1 - r2)) return std::numbers::pi * rmin * rmin;
  const double a1 = std::acos(std::clamp((d * d + r1 * r1 - r2 * r2) / (2 * d * r1), -1.0, 1.0));
  const double a2 = std::acos(std::clamp((d * d + r2 * r2 - r1 * r1) / (2 * d * r2), -1.0, 1.0));
  const double k = std::sqrt(std::max(0.0, (-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) *
                                               (d + r1 + r2)));
  return r1 * r1 * a1 + r2 * r2 * a2 - 0.5 * k;
}

}  // namespace

void ScenarioConfig::validate() const {
  if (n_actors < 1) throw ConfigError("scenario: n_actors must be >= 1");
  if (n_turns < 1) throw ConfigError("scenario: n_turns must be >= 1");
  if (n_places < 1) throw ConfigError("scenario: n_places must be >= 1");
  if (!(travel_s > 0.0)) throw ConfigError("scenario: travel_s must be > 0");
  if (!(location_std_m >= 0.0)) throw ConfigError("scenario: location_std_m must be >= 0");
  if (!(p_meet >= 0.0 && p_meet <= 1.0)) throw ConfigError("scenario: p_meet must be in [0, 1]");
  if (!(gps_noise_std_m >= 0.0)) throw ConfigError("scenario: gps_noise_std_m must be >= 0");
  if (!(gps_rate_hz > 0.0)) throw ConfigError("scenario: gps_rate_hz must be > 0");
  if (!(area_extent_m > 0.0)) throw ConfigError("scenario: area_extent_m must be > 0");
  if (!(frame_interval_s > 0.0)) throw ConfigError("scenario: frame_interval_s must be > 0");
  if (feature_dim < 0) throw ConfigError("scenario: feature_dim must be >= 0");
  if (!(face_corruption >= 0.0 && face_corruption <= 1.0)) {
    throw ConfigError("scenario: face_corruption must be in [0, 1]");
  }
  for (const auto* d : {&radius_prior, &span_prior}) {
    if (!(d->median > 0.0) || !(d->log_std > 0.0)) {
      throw ConfigError("scenario: log-normal priors need positive median and log-std");
    }
  }
  if (!(face_rate_participant_per_min >= 0.0) || !(face_rate_nonparticipant_per_min >= 0.0) ||
      !(keypoint_mean >= 0.0) || !(face_score_margin > 0.0) || !(excursion_rate_per_s >= 0.0)) {
    throw ConfigError("scenario: rates and margins must be nonnegative");
  }
}

Vec2 TruePath::at(double time) const {
  if (t.empty()) throw ContractError("TruePath::at on an empty path");
  if (time <= t.front()) return pos.front();
  if (time >= t.back()) return pos.back();
  const auto it = std::upper_bound(t.begin(), t.end(), time);
  const std::size_t j = static_cast<std::size_t>(it - t.begin());
  const double w = (time - t[j - 1]) / (t[j] - t[j - 1]);
  return (1.0 - w) * pos[j - 1] + w * pos[j];
}

SyntheticDataset generate(const ScenarioConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  SyntheticDataset ds;
  ds.config = cfg;
  const auto n = static_cast<std::size_t>(cfg.n_actors);
  const double e = cfg.area_extent_m;

  for (int k = 0; k < cfg.n_places; ++k) ds.places.push_back(gaussian2(rng, cfg.location_std_m));

  ds.paths.resize(n);
  for (auto& p : ds.paths) {
    p.t.push_back(0.0);
    p.pos.emplace_back(uniform(rng, -e, e), uniform(rng, -e, e));
  }

  double t = 0.0;
  for (int turn = 0; turn < cfg.n_turns; ++turn) {
    const double arrive = t + cfg.travel_s;
    const double dwell = draw(rng, cfg.span_prior);
    std::vector<int> where(n, -1);
    for (auto& w : where) {
      if (uniform(rng, 0.0, 1.0) < cfg.p_meet) {
        w = std::uniform_int_distribution<int>(0, cfg.n_places - 1)(rng);
      }
    }
    std::vector<Vec2> target(n);
    for (std::size_t a = 0; a < n; ++a) {
      if (where[a] < 0) target[a] = Vec2(uniform(rng, -e, e), uniform(rng, -e, e));
    }
    for (int k = 0; k < cfg.n_places; ++k) {
      std::vector<ActorId> attendees;
      for (std::size_t a = 0; a < n; ++a) {
        if (where[a] == k) attendees.emplace_back(static_cast<std::uint32_t>(a));
      }
      if (attendees.empty()) continue;
      const double r = draw(rng, cfg.radius_prior);
      for (ActorId a : attendees) target[a.value] = in_disc(rng, ds.places[k], 0.5 * r);
      if (attendees.size() >= 2) {
        ds.truth.push_back({TypeId(0), ds.places[k], r, arrive, dwell, attendees});
      }
    }
    for (std::size_t a = 0; a < n; ++a) {
      auto& p = ds.paths[a];
      p.t.push_back(arrive);
      p.pos.push_back(target[a]);
      p.t.push_back(arrive + dwell);
      p.pos.push_back(target[a]);
    }
    ds.attendance.push_back(std::move(where));
    t = arrive + dwell;
  }
  const double t_end = t + cfg.travel_s;
  for (auto& p : ds.paths) {
    p.t.push_back(t_end);
    p.pos.emplace_back(uniform(rng, -e, e), uniform(rng, -e, e));
  }

  DataBundle& b = ds.bundle;
  for (std::size_t a = 0; a < n; ++a) b.actors.push_back("a" + std::to_string(a));

  std::normal_distribution<double> noise(0.0, 1.0);
  const auto n_gps = static_cast<long>(std::floor(t_end * cfg.gps_rate_hz));
  for (std::size_t a = 0; a < n; ++a) {
    for (long j = 0; j <= n_gps; ++j) {
      const double tj = static_cast<double>(j) / cfg.gps_rate_hz;
      const double nx = noise(rng);
      const double ny = noise(rng);
      const Vec2 pos = ds.paths[a].at(tj) + cfg.gps_noise_std_m * Vec2(nx, ny);
      b.gps.push_back({ActorId(static_cast<std::uint32_t>(a)), tj, pos, cfg.gps_noise_std_m});
    }
  }

  const ActivityModel model = scenario_model(cfg);
  const auto& meeting = model.types.front();
  const auto covering = [&](ActorId a, double tf) {
    for (const auto& inst : ds.truth) {
      if (inst.covers(a, tf)) return true;
    }
    return false;
  };
  for (std::size_t a = 0; a < n; ++a) {
    const ActorId id(static_cast<std::uint32_t>(a));
    for (double tf = 0.5 * cfg.frame_interval_s; tf <= t_end; tf += cfg.frame_interval_s) {
      FrameRecord f;
      f.actor = id;
      f.t = tf;
      const bool in = covering(id, tf);
      const auto& mean = in ? meeting.feature_mean : model.params.background_mean;
      const auto& var = in ? meeting.feature_var : model.params.background_var;
      for (int v = 0; v < cfg.feature_dim; ++v) f.features.push_back(mean[v] + std::sqrt(var[v]) * noise(rng));
      f.keypoint_count = static_cast<int>(std::poisson_distribution<int>(cfg.keypoint_mean)(rng));
      b.frames.push_back(std::move(f));
    }
  }

  std::vector<std::pair<FaceDetection, ActorId>> faces;
  for (const auto& inst : ds.truth) {
    const double minutes = inst.span / 60.0;
    for (std::size_t p = 0; p < n; ++p) {
      const ActorId who(static_cast<std::uint32_t>(p));
      const bool member = inst.has_participant(who);
      const double rate = (member ? cfg.face_rate_participant_per_min
                                  : cfg.face_rate_nonparticipant_per_min) * minutes;
      std::vector<ActorId> observers;
      for (ActorId o : inst.participants) {
        if (o != who) observers.push_back(o);
      }
      const int count = std::poisson_distribution<int>(rate)(rng);
      for (int c = 0; c < count; ++c) {
        FaceDetection d;
        d.observer = observers[std::uniform_int_distribution<std::size_t>(0, observers.size() - 1)(rng)];
        d.t = uniform(rng, inst.start, inst.end());
        ActorId label = who;
        const bool corrupt = n > 1 && uniform(rng, 0.0, 1.0) < cfg.face_corruption;
        if (corrupt) {
          auto other = std::uniform_int_distribution<std::uint32_t>(0, static_cast<std::uint32_t>(n - 2))(rng);
          if (other >= who.value) ++other;
          label = ActorId(other);
        }
        d.detected = label;
        d.scores.resize(n);
        for (std::size_t j = 0; j < n; ++j) {
          d.scores[j] = -cfg.face_score_margin - std::abs(noise(rng));
        }
        d.scores[label.value] = 0.0;
        if (corrupt) d.scores[who.value] = -uniform(rng, 0.0, cfg.face_score_margin);
        faces.emplace_back(std::move(d), who);
      }
    }
  }
  std::stable_sort(faces.begin(), faces.end(), [](const auto& x, const auto& y) {
    return std::tie(x.first.t, x.first.observer) < std::tie(y.first.t, y.first.observer);
  });
  for (auto& [d, who] : faces) {
    b.faces.push_back(std::move(d));
    ds.face_truth.push_back(who);
  }
  b.finalize();
  return ds;
}

ActivityModel scenario_model(const ScenarioConfig& cfg) {
  ActivityModel m;
  ActivityType t;
  t.id = "meeting";
  t.label = "meeting";
  t.span_prior = cfg.span_prior;
  t.radius_prior = cfg.radius_prior;
  t.participants_prior = {2.0, 0.5};
  t.feature_mean.assign(static_cast<std::size_t>(cfg.feature_dim), cfg.feature_separation);
  t.feature_var.assign(static_cast<std::size_t>(cfg.feature_dim), 1.0);
  t.face_rate_participant_per_min = std::max(cfg.face_rate_participant_per_min, 1e-6);
  t.face_rate_nonparticipant_per_min = std::max(cfg.face_rate_nonparticipant_per_min, 1e-6);
  t.excursion_rate_per_s = cfg.excursion_rate_per_s;
  m.types.push_back(std::move(t));
  m.overlap = OverlapMatrix(1, Overlap::kDisjoint);
  m.params.background_mean.assign(static_cast<std::size_t>(cfg.feature_dim), 0.0);
  m.params.background_var.assign(static_cast<std::size_t>(cfg.feature_dim), 1.0);
  return m;
}

SyntheticDataset inject_denial(SyntheticDataset ds, std::span<const DenialWindow> windows) {
  const auto& b = ds.bundle;
  for (const auto& w : windows) {
    if (w.actor.value >= b.n_actors()) throw ContractError("inject_denial: unknown actor");
    if (!(w.t1 >= w.t0) || w.t0 < b.t_min || w.t1 > b.t_max) {
      throw ContractError("inject_denial: window outside the data support");
    }
  }
  std::erase_if(ds.bundle.gps, [&](const GpsObservation& g) {
    for (const auto& w : windows) {
      if (g.actor == w.actor && g.t >= w.t0 && g.t <= w.t1) return true;
    }
    return false;
  });
  return ds;
}

double cylinder_iou(const ActivityInstance& a, const ActivityInstance& b) {
  const double inter_t = std::max(0.0, std::min(a.end(), b.end()) - std::max(a.start, b.start));
  const double union_t = a.span + b.span - inter_t;
  if (inter_t <= 0.0 || union_t <= 0.0) return 0.0;
  const double inter_s = lens_area((a.center - b.center).norm(), a.radius, b.radius);
  const double union_s =
      std::numbers::pi * (a.radius * a.radius + b.radius * b.radius) - inter_s;
  if (inter_s <= 0.0) return 0.0;
  return (inter_t / union_t) * (inter_s / union_s);
}

MatchResult match_instances(std::span<const ActivityInstance> detected,
                            std::span<const ActivityInstance> truth, double iou_threshold) {
  struct Cand {
    double iou;
    std::size_t d, t;
  };
  std::vector<Cand> cands;
  for (std::size_t i = 0; i < detected.size(); ++i) {
    for (std::size_t j = 0; j < truth.size(); ++j) {
      const double v = cylinder_iou(detected[i], truth[j]);
      if (v >= iou_threshold && v > 0.0) cands.push_back({v, i, j});
    }
  }
  std::stable_sort(cands.begin(), cands.end(),
                   [](const Cand& x, const Cand& y) { return x.iou > y.iou; });
  MatchResult r;
  std::vector<char> used_d(detected.size(), 0), used_t(truth.size(), 0);
  for (const auto& c : cands) {
    if (used_d[c.d] || used_t[c.t]) continue;
    used_d[c.d] = used_t[c.t] = 1;
    r.pairs.emplace_back(c.d, c.t);
  }
  const double m = static_cast<double>(r.pairs.size());
  r.precision = detected.empty() ? 1.0 : m / static_cast<double>(detected.size());
  r.recall = truth.empty() ? 1.0 : m / static_cast<double>(truth.size());
  r.f1 = r.precision + r.recall > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

EvalReport evaluate(const ChainSamples& chain, std::span<const ActivityInstance> truth,
                    double iou_threshold) {
  if (chain.samples.empty()) throw ContractError("evaluate: chain has no samples");
  EvalReport rep;
  rep.n_true = truth.size();
  rep.absolute_count_error = truth.empty();
  const double nt = static_cast<double>(truth.size());
  for (const auto& s : chain.samples) {
    SampleEval se;
    se.n_detected = s.config.size();
    const double diff = static_cast<double>(se.n_detected) - nt;
    se.signed_count_error = rep.absolute_count_error ? diff : diff / nt;
    se.count_error = std::abs(se.signed_count_error);
    se.match = match_instances(s.config.instances, truth, iou_threshold);
    rep.count_error += se.count_error;
    rep.signed_count_error += se.signed_count_error;
    rep.precision += se.match.precision;
    rep.recall += se.match.recall;
    rep.f1 += se.match.f1;
    rep.per_sample.push_back(std::move(se));
  }
  const double k = static_cast<double>(chain.samples.size());
  rep.count_error /= k;
  rep.signed_count_error /= k;
  rep.precision /= k;
  rep.recall /= k;
  rep.f1 /= k;
  return rep;
}

InferenceSettings scenario_inference_defaults() {
  InferenceSettings s;
  s.gp.kernel = KernelKind::kMatern52;
  s.gp.length_scale_s = 45.0;
  s.gp.signal_std_m = 500.0;
  s.sampler.n_iters = 10000;
  s.sampler.burn_in = 5000;
  s.sampler.sample_thin = 10;
  s.sampler.grid_points = 500;
  s.sampler.n_draws = 20;
  s.sampler.span_proposal = {60.0, 0.05};
  s.sampler.radius_proposal = {30.0, 0.1};
  s.sampler.local_mix = 0.8;
  auto& w = s.sampler.weights;
  w.set(MoveKind::kBirth, 3.0);
  w.set(MoveKind::kDeath, 3.0);
  w.set(MoveKind::kSplit, 0.5);
  w.set(MoveKind::kMerge, 0.5);
  w.set(MoveKind::kType, 0.0);
  w.set(MoveKind::kStartTime, 1.5);
  w.set(MoveKind::kParticipants, 1.5);
  return s;
}

SweepCurve sweep_location_std(const ScenarioConfig& base, std::span<const double> stds,
                              int n_trials, const InferenceSettings& settings, int threads) {
  if (n_trials < 2) throw ContractError("sweep: n_trials must be >= 2");
  base.validate();
  settings.sampler.validate();
  const std::size_t n_cells = stds.size() * static_cast<std::size_t>(n_trials);
  std::vector<double> err(n_cells, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::string> msg(n_cells);

  auto run_cell = [&](std::size_t cell) {
    const std::size_t si = cell / static_cast<std::size_t>(n_trials);
    const std::size_t trial = cell % static_cast<std::size_t>(n_trials);
    try {
      ScenarioConfig cfg = base;
      cfg.location_std_m = stds[si];
      cfg.seed = stats::derive_seed(base.seed, trial);
      const SyntheticDataset ds = generate(cfg);
      const ActivityModel model = scenario_model(cfg);
      const ChainSamples chain = run_chain(ds.bundle, model, settings.gp, settings.sampler,
                                           stats::derive_seed(cfg.seed, 0xC4A1));
      err[cell] = evaluate(chain, ds.truth, settings.iou_threshold).count_error;
    } catch (const std::exception& ex) {
      msg[cell] = ex.what();
    }
  };

  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(n_cells)));
  if (workers == 1) {
    for (std::size_t c = 0; c < n_cells; ++c) run_cell(c);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t c = next++; c < n_cells; c = next++) run_cell(c);
      });
    }
    for (auto& th : pool) th.join();
  }

  SweepCurve curve;
  for (std::size_t si = 0; si < stds.size(); ++si) {
    SweepPoint pt;
    pt.location_std_m = stds[si];
    std::vector<double> ok;
    for (int trial = 0; trial < n_trials; ++trial) {
      const std::size_t cell = si * static_cast<std::size_t>(n_trials) + trial;
      pt.trial_errors.push_back(err[cell]);
      if (!msg[cell].empty()) pt.failures.push_back("trial " + std::to_string(trial) + ": " + msg[cell]);
      if (std::isfinite(err[cell])) ok.push_back(err[cell]);
    }
    if (!ok.empty()) {
      double s = 0.0;
      for (double v : ok) s += v;
      pt.mean = s / static_cast<double>(ok.size());
      double ss = 0.0;
      for (double v : ok) ss += (v - pt.mean) * (v - pt.mean);
      pt.std = ok.size() > 1 ? std::sqrt(ss / static_cast<double>(ok.size() - 1)) : 0.0;
    } else {
      pt.mean = pt.std = std::numeric_limits<double>::quiet_NaN();
    }
    curve.points.push_back(std::move(pt));
  }
  return curve;
}

}  // namespace coact
