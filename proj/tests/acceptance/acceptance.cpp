#include "coactivity/errors.hpp"
#include "coactivity/factors.hpp"
#include "coactivity/gp.hpp"
#include "coactivity/io.hpp"
#include "coactivity/posteriors.hpp"
#include "coactivity/rjmcmc.hpp"
#include "coactivity/scenario.hpp"
#include "coactivity/summarize.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

namespace coact {
namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int thread_budget() {
  int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("COACTIVITY_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) n = std::min(n, cap);
  }
  return n;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// ---------------------------------------------------------------------------
// 1. Activity-count error against location spread.

Outcome count_error_curve() {
  const std::vector<double> stds{50.0, 150.0, 300.0, 700.0};
  const ScenarioConfig base;
  const auto curve = sweep_location_std(base, stds, 20, scenario_inference_defaults(), thread_budget());
  std::string detail;
  std::size_t failures = 0;
  for (const auto& p : curve.points) {
    detail += fmt("std=%g mean=%.3f sd=%.3f; ", p.location_std_m, p.mean, p.std);
    failures += p.failures.size();
  }
  const auto& pts = curve.points;
  int inversions = 0;
  bool tolerable = true;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double rise = pts[i].mean - pts[i - 1].mean;
    if (rise > 0.0) {
      ++inversions;
      if (rise > std::max(pts[i].std, pts[i - 1].std)) tolerable = false;
    }
  }
  const bool pass = failures == 0 && std::isfinite(pts.back().mean) && pts.back().mean <= 0.10 &&
                    inversions <= 1 && tolerable;
  detail += fmt("inversions=%d failed_cells=%zu", inversions, failures);
  return {pass, detail};
}

// ---------------------------------------------------------------------------
// 2. Localization through a GPS-denial window.

Outcome denial_localization() {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double t_end = 3000.0;
  const double meet_start = 900.0;
  const double meet_end = 2100.0;
  const double deny0 = 1200.0;
  const double deny1 = 1800.0;
  const Vec2 place(400.0, 400.0);
  const std::array<Vec2, 2> from{Vec2(-1100.0, 400.0), Vec2(400.0, -1100.0)};
  const std::array<Vec2, 2> to{Vec2(1900.0, 400.0), Vec2(400.0, 1900.0)};
  const double walk = 200.0;

  DataBundle b;
  b.actors = {"a", "b"};
  for (int a = 0; a < 2; ++a) {
    for (double t = 0.0; t <= t_end; t += 5.0) {
      if (t >= deny0 && t <= deny1) continue;
      Vec2 p;
      if (t < meet_start) {
        p = from[a] + (place - from[a]) * std::clamp((t - meet_start + walk) / walk, 0.0, 1.0);
      } else if (t <= meet_end) {
        p = place + Vec2(8.0 * std::sin(t / 90.0 + a), 8.0 * std::cos(t / 70.0 + a));
      } else {
        p = place + (to[a] - place) * std::clamp((t - meet_end) / walk, 0.0, 1.0);
      }
      const double sd = 15.0;
      b.gps.push_back({ActorId(static_cast<std::uint32_t>(a)), t,
                       p + Vec2(sd * noise(rng), sd * noise(rng)), sd});
    }
    for (double t = 0.0; t <= t_end; t += 10.0) {
      FrameRecord f;
      f.actor = ActorId(static_cast<std::uint32_t>(a));
      f.t = t;
      const double mu = t >= meet_start && t <= meet_end ? 1.0 : 0.0;
      for (int v = 0; v < 4; ++v) f.features.push_back(mu + noise(rng));
      b.frames.push_back(f);
    }
  }
  b.finalize();

  ActivityModel model;
  ActivityType type;
  type.id = "meeting";
  type.span_prior = {1200.0, 0.1};
  type.radius_prior = {50.0, 0.15};
  type.participants_prior = {2.0, 0.5};
  type.face_rate_participant_per_min = 2e-6;
  type.face_rate_nonparticipant_per_min = 1e-6;
  type.feature_mean.assign(4, 1.0);
  type.feature_var.assign(4, 1.0);
  type.excursion_rate_per_s = 0.02;
  model.types.push_back(type);
  model.overlap = OverlapMatrix(1, Overlap::kDisjoint);
  model.params.uncovered_penalty = 0.2;
  model.params.background_mean.assign(4, 0.0);
  model.params.background_var.assign(4, 1.0);

  auto settings = scenario_inference_defaults();
  settings.sampler.grid_points = 301;
  settings.sampler.span_proposal = {1200.0, 0.1};
  settings.sampler.radius_proposal = {50.0, 0.15};

  const auto start = std::chrono::steady_clock::now();
  const TimeGrid grid = data_grid(b, settings.sampler.grid_points);
  const auto posteriors = build_posteriors(b, settings.gp, grid);
  std::vector<ChainSamples> chains{run_chain(b, model, settings.gp, settings.sampler, 7)};
  double before = 0.0;
  double after = 0.0;
  std::size_t conditioned = 0;
  std::size_t components = 0;
  for (std::uint32_t a = 0; a < 2; ++a) {
    const auto loc = localize(chains, posteriors, ActorId(a), 10, AuxMode::kStatic,
                              model.params.sigma_aux_m);
    conditioned += loc.conditioned_components;
    components += loc.n_components();
    const auto rep = uncertainty_report(loc, deny0, deny1);
    before += rep.before.mean();
    after += rep.after.mean();
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double reduction = 1.0 - after / before;
  return {reduction >= 0.25,
          fmt("in-window std %.1f m -> %.1f m, reduction %.1f%%, %zu/%zu components conditioned, %.1f s",
              before / 2.0, after / 2.0, 100.0 * reduction, conditioned, components, secs)};
}

// ---------------------------------------------------------------------------
// 3. GP regression and activity conditioning against the dense oracle.

Outcome gp_oracle() {
  std::mt19937_64 rng(99);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n_actors = uniform_int(rng, 2, 4);
    const auto first = oracle::random_gp_case(rng, ActorId(0));
    std::vector<std::vector<GpsObservation>> obs{first.obs};
    for (int a = 1; a < n_actors; ++a) {
      auto extra = oracle::random_gp_case(rng, ActorId(static_cast<std::uint32_t>(a)));
      for (auto& o : extra.obs) o.t = uniform(rng, first.grid.t_start, first.grid.t_end);
      obs.push_back(extra.obs);
    }
    std::vector<GpPosterior> posts;
    for (int a = 0; a < n_actors; ++a) {
      posts.push_back(build_gp(ActorId(static_cast<std::uint32_t>(a)), obs[a], first.hyper, first.grid));
      const auto ref = oracle::gp_posterior(obs[a], first.hyper, first.grid);
      worst = std::max({worst, oracle::max_abs_diff(posts.back().mean(), ref.mean),
                        oracle::max_abs_diff(posts.back().covariance(), ref.cov)});
    }

    ActivityInstance act;
    for (int a = 0; a < n_actors; ++a) {
      if (uniform(rng, 0.0, 1.0) < 0.7) act.participants.push_back(ActorId(static_cast<std::uint32_t>(a)));
    }
    while (act.participants.size() < 2) {
      const ActorId extra(static_cast<std::uint32_t>(uniform_int(rng, 0, n_actors - 1)));
      if (!act.has_participant(extra)) act.participants.push_back(extra);
      std::sort(act.participants.begin(), act.participants.end());
    }
    const double range = first.grid.t_end - first.grid.t_start;
    act.start = first.grid.t_start + uniform(rng, 0.0, 0.6) * range;
    act.span = uniform(rng, 0.15, 0.4) * range;
    act.radius = 20.0;
    const bool dynamic = trial % 2 == 1;
    const double sigma = uniform(rng, 0.5, 5.0);
    const auto res = condition_on_activity(posts, act, dynamic ? AuxMode::kDynamic : AuxMode::kStatic, sigma);

    std::vector<oracle::Gaussian> parts;
    for (ActorId p : act.participants) parts.push_back(oracle::gp_posterior(obs[p.value], first.hyper, first.grid));
    const auto prior = oracle::stack(parts);
    const auto h = oracle::aux_rows(static_cast<int>(act.participants.size()), first.grid, act.start,
                                    act.end(), dynamic);
    const auto ref = oracle::condition_zero(prior, h, sigma);
    worst = std::max({worst, oracle::max_abs_diff(res.joint.mean(), ref.mean),
                      oracle::max_abs_diff(res.joint.covariance(), ref.cov)});
  }
  return {worst <= 1e-8, fmt("max abs diff %.3g over 100 cases", worst)};
}

// ---------------------------------------------------------------------------
// 4. Sampler against exhaustive enumeration on a quantized toy problem.

struct Toy {
  DataBundle data;
  ActivityModel model;
  std::vector<GpPosterior> posteriors;
  ChainContext ctx;
  Lattice lattice;
};

std::unique_ptr<Toy> make_toy() {
  auto toy = std::make_unique<Toy>();
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 1.0);
  DataBundle& b = toy->data;
  b.actors = {"a", "b"};
  for (std::uint32_t a = 0; a < 2; ++a) {
    for (double t = 0.0; t <= 100.0; t += 5.0) {
      const Vec2 p = t < 50.0 ? Vec2(0.0, 0.0) : Vec2(-20.0, 15.0);
      b.gps.push_back({ActorId(a), t, p + Vec2(6.0 * noise(rng), 6.0 * noise(rng)), 8.0});
    }
  }
  b.finalize();

  ActivityType type;
  type.id = "meeting";
  type.span_prior = {40.0, 0.5};
  type.radius_prior = {30.0, 0.5};
  type.excursion_rate_per_s = 0.01;
  toy->model.types.push_back(type);
  toy->model.overlap = OverlapMatrix(1, Overlap::kMayOverlap);
  toy->model.params.uncovered_penalty = 0.6;

  GpHyperParams hyper;
  hyper.length_scale_s = 20.0;
  hyper.signal_std_m = 80.0;
  const TimeGrid grid{0.0, 100.0, 41};
  toy->posteriors = build_posteriors(b, hyper, grid);
  auto ensembles = draw_ensembles(toy->posteriors, 4, 17);

  SamplerConfig cfg;
  cfg.n_iters = 100000;
  cfg.burn_in = 2000;
  cfg.sample_thin = 1;
  cfg.refresh_period = 0;
  cfg.grid_points = grid.n_points;
  cfg.max_instances = 2;
  for (MoveKind k : kAllMoveKinds) cfg.weights.set(k, 0.0);
  for (MoveKind k : {MoveKind::kBirth, MoveKind::kDeath, MoveKind::kCenter, MoveKind::kRadius,
                     MoveKind::kSpan, MoveKind::kStartTime}) {
    cfg.weights.set(k, 1.0);
  }
  toy->ctx = make_context(b, toy->model, toy->posteriors, std::move(ensembles), cfg);

  Lattice& l = toy->lattice;
  l.types = {TypeId(0)};
  l.centers = {Vec2(0.0, 0.0), Vec2(-20.0, 15.0)};
  l.radii = {20.0, 45.0};
  l.starts = {5.0, 50.0};
  l.spans = {30.0, 45.0};
  l.participant_sets = {{ActorId(0), ActorId(1)}};
  return toy;
}

using StateKey = std::vector<std::size_t>;

Outcome sampler_enumeration() {
  const auto toy = make_toy();
  const auto singles = toy->lattice.enumerate();
  for (const auto& a : singles) {
    if (!toy->ctx.in_support(a)) return {false, "toy lattice leaves the support"};
  }

  std::map<StateKey, double> log_w;
  auto add = [&](StateKey key) {
    Configuration c;
    for (std::size_t i : key) c.instances.push_back(singles[i]);
    double lw = config_logprob(c, toy->data, toy->ctx.ensembles, toy->ctx.grid, toy->model);
    if (key.size() == 2 && key[0] == key[1]) lw -= std::log(2.0);
    log_w[key] = lw;
  };
  add({});
  for (std::size_t i = 0; i < singles.size(); ++i) {
    add({i});
    for (std::size_t j = i; j < singles.size(); ++j) add({i, j});
  }
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& [k, v] : log_w) hi = std::max(hi, v);
  double z = 0.0;
  for (const auto& [k, v] : log_w) z += std::exp(v - hi);
  std::map<StateKey, double> exact;
  for (const auto& [k, v] : log_w) exact[k] = std::exp(v - hi) / z;

  const LatticeProposer proposer(toy->lattice);
  std::string detail;
  double worst = 0.0;
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    ChainContext ctx = toy->ctx;
    const auto chain = run_chain(ctx, proposer, toy->posteriors, seed);
    std::map<StateKey, double> freq;
    for (const auto& s : chain.samples) {
      StateKey key;
      for (const auto& a : s.config.instances) {
        key.push_back(static_cast<std::size_t>(std::find(singles.begin(), singles.end(), a) - singles.begin()));
      }
      std::sort(key.begin(), key.end());
      freq[key] += 1.0 / static_cast<double>(chain.samples.size());
    }
    double tv = 0.0;
    for (const auto& [k, p] : exact) tv += std::abs(p - (freq.count(k) ? freq[k] : 0.0));
    for (const auto& [k, p] : freq) {
      if (!exact.count(k)) tv += p;
    }
    tv /= 2.0;
    worst = std::max(worst, tv);
    detail += fmt("seed %llu TV=%.4f; ", static_cast<unsigned long long>(seed), tv);
  }
  double top = 0.0;
  int material = 0;
  for (const auto& [k, p] : exact) {
    top = std::max(top, p);
    material += p > 0.01;
  }
  detail += fmt("%zu states, %d above 1%%, largest %.3f", exact.size(), material, top);
  return {worst <= 0.05, detail};
}

// ---------------------------------------------------------------------------
// 5. Log score equals the sum of its factors.

ActivityInstance random_instance(std::mt19937_64& rng, const ChainContext& ctx, std::size_t n_actors) {
  ActivityInstance a;
  a.center = Vec2(uniform(rng, ctx.box_lo.x(), ctx.box_hi.x()), uniform(rng, ctx.box_lo.y(), ctx.box_hi.y()));
  a.radius = std::exp(uniform(rng, std::log(10.0), std::log(2000.0)));
  a.span = uniform(rng, 10.0, 0.5 * (ctx.t_max - ctx.t_min));
  a.start = uniform(rng, ctx.t_min, ctx.t_max - a.span);
  while (a.participants.size() < 2) {
    a.participants.clear();
    for (std::size_t p = 0; p < n_actors; ++p) {
      if (uniform(rng, 0.0, 1.0) < 0.5) a.participants.push_back(ActorId(static_cast<std::uint32_t>(p)));
    }
  }
  return a;
}

Outcome factor_decomposition() {
  ScenarioConfig sc;
  sc.n_actors = 5;
  sc.n_turns = 3;
  sc.location_std_m = 100.0;
  sc.seed = 31;
  const auto ds = generate(sc);
  ActivityModel model = scenario_model(sc);
  model.overlap = OverlapMatrix(1, Overlap::kMayOverlap);
  const auto& data = ds.bundle;
  GpHyperParams hyper = scenario_inference_defaults().gp;
  const TimeGrid grid = data_grid(data, 200);
  const auto posts = build_posteriors(data, hyper, grid);
  SamplerConfig cfg;
  cfg.grid_points = grid.n_points;
  const auto ctx = make_context(data, model, posts, draw_ensembles(posts, 6, 3), cfg);
  const IncrementalScorer scorer(ctx);
  const auto& type = model.types[0];

  std::mt19937_64 rng(8);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    Configuration config;
    const int n = uniform_int(rng, 0, 5);
    for (int i = 0; i < n; ++i) config.instances.push_back(random_instance(rng, ctx, data.n_actors()));

    double sum = coverage_logfactor(config, data.gps, ctx.ensembles, grid, model.params.uncovered_penalty) +
                 scene_logfactor(data.frames, config, model.types, model.params);
    for (const auto& a : config.instances) {
      sum += presence_logfactor(a, ctx.ensembles, grid, type.excursion_rate_per_s) +
             span_radius_logprior(a, type) + face_logfactor(data.faces, a, type, data.n_actors());
    }
    const double total = config_logprob(config, data, ctx.ensembles, grid, model);
    const double incremental = scorer.score(config).total;
    worst = std::max({worst, std::abs(total - sum), std::abs(incremental - sum)});
  }
  return {worst <= 1e-10, fmt("max |score - sum of factors| %.3g over 1000 configurations", worst)};
}

// ---------------------------------------------------------------------------
// 6. Face identity correction.

std::vector<double> bayes_oracle(const FaceDetection& det, const std::vector<Configuration>& samples,
                                 std::size_t n, double eps) {
  std::vector<double> out(n, 0.0);
  for (const auto& c : samples) {
    std::vector<double> w(n);
    for (std::size_t k = 0; k < n; ++k) {
      double prior = 1.0;
      for (const auto& a : c.instances) {
        const bool covers = det.t >= a.start && det.t <= a.start + a.span &&
                            std::find(a.participants.begin(), a.participants.end(), det.observer) !=
                                a.participants.end();
        if (!covers) continue;
        const bool member = std::find(a.participants.begin(), a.participants.end(),
                                      ActorId(static_cast<std::uint32_t>(k))) != a.participants.end();
        prior *= member ? 1.0 / static_cast<double>(a.participants.size()) : eps;
      }
      w[k] = std::exp(det.scores[k]) * prior;
    }
    double z = 0.0;
    for (double v : w) z += v;
    for (std::size_t k = 0; k < n; ++k) out[k] += w[k] / z / static_cast<double>(samples.size());
  }
  return out;
}

Outcome face_correction() {
  ScenarioConfig sc;
  sc.location_std_m = 700.0;
  sc.face_corruption = 0.15;
  sc.seed = 12;
  const auto ds = generate(sc);
  const auto settings = scenario_inference_defaults();
  const auto model = scenario_model(sc);
  const auto chain = run_chain(ds.bundle, model, settings.gp, settings.sampler, 5);
  const auto samples = chain.configurations();
  const std::size_t n = ds.bundle.n_actors();
  const double eps = 0.01 / static_cast<double>(n);

  int raw_errors = 0;
  int corrected_errors = 0;
  const auto& faces = ds.bundle.faces;
  for (std::size_t i = 0; i < faces.size(); ++i) {
    const auto post = face_posterior(faces[i], samples, n, eps);
    const auto best = static_cast<std::uint32_t>(std::max_element(post.begin(), post.end()) - post.begin());
    raw_errors += *faces[i].detected != ds.face_truth[i];
    corrected_errors += ActorId(best) != ds.face_truth[i];
  }

  std::mt19937_64 rng(41);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t na = static_cast<std::size_t>(uniform_int(rng, 2, 6));
    FaceDetection det;
    det.observer = ActorId(static_cast<std::uint32_t>(uniform_int(rng, 0, static_cast<int>(na) - 1)));
    det.t = uniform(rng, 0.0, 100.0);
    for (std::size_t k = 0; k < na; ++k) det.scores.push_back(uniform(rng, -8.0, 0.0));
    std::vector<Configuration> cs(static_cast<std::size_t>(uniform_int(rng, 1, 4)));
    for (auto& c : cs) {
      const int m = uniform_int(rng, 0, 2);
      for (int i = 0; i < m; ++i) {
        ActivityInstance a;
        a.start = uniform(rng, 0.0, 80.0);
        a.span = uniform(rng, 5.0, 60.0);
        for (std::size_t k = 0; k < na; ++k) {
          if (uniform(rng, 0.0, 1.0) < 0.6) a.participants.push_back(ActorId(static_cast<std::uint32_t>(k)));
        }
        if (a.participants.size() < 2) continue;
        c.instances.push_back(a);
      }
    }
    const double e = uniform(rng, 1e-4, 0.1);
    const auto got = face_posterior(det, cs, na, e);
    const auto want = bayes_oracle(det, cs, na, e);
    for (std::size_t k = 0; k < na; ++k) worst = std::max(worst, std::abs(got[k] - want[k]));
  }

  const double raw = static_cast<double>(raw_errors) / static_cast<double>(faces.size());
  const double fixed = static_cast<double>(corrected_errors) / static_cast<double>(faces.size());
  return {corrected_errors < raw_errors && worst <= 1e-12,
          fmt("%zu detections, identity error %.3f -> %.3f; oracle max diff %.3g", faces.size(), raw,
              fixed, worst)};
}

// ---------------------------------------------------------------------------
// 7. Summarization properties.

FrameRecord random_frame(std::mt19937_64& rng, int n_actors, double t_max, std::size_t dim) {
  FrameRecord f;
  f.actor = ActorId(static_cast<std::uint32_t>(uniform_int(rng, 0, n_actors - 1)));
  f.t = uniform(rng, 0.0, t_max);
  for (std::size_t v = 0; v < dim; ++v) f.features.push_back(uniform(rng, -2.0, 2.0));
  f.keypoint_count = uniform_int(rng, 0, 200);
  return f;
}

ChainSamples random_chain(std::mt19937_64& rng, int n_actors, double t_max, int n_samples) {
  ChainSamples c;
  for (int s = 0; s < n_samples; ++s) {
    ChainSample sample;
    sample.iteration = s;
    sample.log_score = uniform(rng, -10.0, 0.0);
    const int m = uniform_int(rng, 0, 3);
    for (int i = 0; i < m; ++i) {
      ActivityInstance a;
      a.center = Vec2(uniform(rng, -100.0, 100.0), uniform(rng, -100.0, 100.0));
      a.radius = uniform(rng, 10.0, 80.0);
      a.start = uniform(rng, 0.0, 0.7 * t_max);
      a.span = uniform(rng, 0.05, 0.3) * t_max;
      for (int p = 0; p < n_actors; ++p) {
        if (uniform(rng, 0.0, 1.0) < 0.6) a.participants.push_back(ActorId(static_cast<std::uint32_t>(p)));
      }
      if (a.participants.size() >= 2) sample.config.instances.push_back(a);
    }
    c.samples.push_back(sample);
  }
  return c;
}

FrameDistanceWeights random_weights(std::mt19937_64& rng) {
  FrameDistanceWeights w;
  w.w_ac = uniform(rng, 0.0, 2.0);
  w.w_feat = uniform(rng, 0.0, 2.0);
  w.w_time = uniform(rng, 0.0, 2.0);
  w.w_id = uniform(rng, 0.0, 2.0);
  w.feat_scale = uniform(rng, 0.5, 3.0);
  w.time_scale = uniform(rng, 10.0, 100.0);
  return w;
}

bool earlier_frame(const FrameRecord& a, const FrameRecord& b) {
  return a.t < b.t || (a.t == b.t && a.actor < b.actor);
}

int check_pseudometric(std::mt19937_64& rng) {
  int bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::vector<ChainSamples> chains{random_chain(rng, 3, 500.0, 6)};
    const auto w = random_weights(rng);
    const auto a = random_frame(rng, 3, 500.0, 3);
    const auto b = random_frame(rng, 3, 500.0, 3);
    const auto c = random_frame(rng, 3, 500.0, 3);
    const double ab = frame_distance(a, b, chains, w);
    const double ba = frame_distance(b, a, chains, w);
    const double bc = frame_distance(b, c, chains, w);
    const double ac = frame_distance(a, c, chains, w);
    const double aa = frame_distance(a, a, chains, w);
    if (aa != 0.0 || ab < 0.0 || ab != ba || ac > ab + bc + 1e-12) ++bad;
  }
  return bad;
}

int check_fps(std::mt19937_64& rng) {
  int bad = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<FrameRecord> frames;
    for (int i = 0; i < 12; ++i) frames.push_back(random_frame(rng, 3, 600.0, 2));
    const std::vector<ChainSamples> chains{random_chain(rng, 3, 600.0, 8)};
    const auto w = random_weights(rng);
    const int k = uniform_int(rng, 1, 12);
    const double floor = uniform(rng, 0.0, 0.6);
    const auto sum = select_keyframes(frames, k, chains, w, floor);

    const auto votes = activity_votes(chains, frames);
    const auto top = *std::max_element(votes.begin(), votes.end());
    std::vector<std::size_t> survivors;
    for (std::size_t f = 0; f < frames.size(); ++f) {
      if (static_cast<double>(votes[f]) >= floor * static_cast<double>(top)) survivors.push_back(f);
    }
    if (sum.pick_order.size() != std::min<std::size_t>(static_cast<std::size_t>(k), survivors.size()) ||
        votes[sum.pick_order.front()] != top) {
      ++bad;
      continue;
    }
    for (std::size_t s = 1; s < sum.pick_order.size(); ++s) {
      double best = -1.0;
      for (std::size_t f : survivors) {
        if (std::find(sum.pick_order.begin(), sum.pick_order.begin() + static_cast<std::ptrdiff_t>(s), f) !=
            sum.pick_order.begin() + static_cast<std::ptrdiff_t>(s)) {
          continue;
        }
        double dmin = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < s; ++j) dmin = std::min(dmin, frame_distance(frames[f], frames[sum.pick_order[j]], chains, w));
        best = std::max(best, dmin);
      }
      double chosen = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < s; ++j) {
        chosen = std::min(chosen, frame_distance(frames[sum.pick_order[s]], frames[sum.pick_order[j]], chains, w));
      }
      if (std::abs(chosen - best) > 1e-12) {
        ++bad;
        break;
      }
    }
  }
  return bad;
}

struct VideoFixture {
  std::vector<FrameRecord> frames;
  std::vector<ChainSamples> chains;
  std::vector<GpPosterior> posteriors;
  MatchTable matches;
};

VideoFixture video_fixture(std::mt19937_64& rng) {
  VideoFixture fx;
  const int n_actors = 3;
  const TimeGrid grid{0.0, 600.0, 61};
  GpHyperParams hyper;
  hyper.length_scale_s = 120.0;
  hyper.signal_std_m = 150.0;
  for (int a = 0; a < n_actors; ++a) {
    std::vector<GpsObservation> obs;
    for (double t = 0.0; t <= 600.0; t += 60.0) {
      obs.push_back({ActorId(static_cast<std::uint32_t>(a)), t,
                     Vec2(uniform(rng, -150.0, 150.0), uniform(rng, -150.0, 150.0)), 10.0});
    }
    fx.posteriors.push_back(build_gp(ActorId(static_cast<std::uint32_t>(a)), obs, hyper, grid));
  }
  for (int a = 0; a < n_actors; ++a) {
    for (double t = uniform(rng, 0.0, 20.0); t < 600.0; t += uniform(rng, 10.0, 40.0)) {
      FrameRecord f;
      f.actor = ActorId(static_cast<std::uint32_t>(a));
      f.t = t;
      f.keypoint_count = uniform_int(rng, 0, 150);
      if (uniform(rng, 0.0, 1.0) < 0.3) {
        FaceDetection d;
        d.observer = f.actor;
        d.t = t;
        d.detected = ActorId(static_cast<std::uint32_t>(uniform_int(rng, 0, n_actors - 1)));
        f.faces.push_back(d);
      }
      fx.frames.push_back(f);
    }
  }
  fx.chains.push_back(random_chain(rng, n_actors, 600.0, 5));
  for (std::size_t i = 0; i < fx.frames.size(); ++i) {
    for (std::size_t j = i + 1; j < fx.frames.size(); ++j) {
      if (uniform(rng, 0.0, 1.0) < 0.2) {
        fx.matches.set(fx.frames[i].actor, fx.frames[i].t, fx.frames[j].actor, fx.frames[j].t,
                       static_cast<double>(uniform_int(rng, 0, 60)));
      }
    }
  }
  return fx;
}

TrellisWeights random_trellis(std::mt19937_64& rng) {
  TrellisWeights w;
  w.w_q = uniform(rng, 0.0, 2.0);
  w.w_f = uniform(rng, 0.0, 2.0);
  w.w_a = uniform(rng, 0.0, 2.0);
  w.w_nm = uniform(rng, 0.0, 2.0);
  w.w_sf = uniform(rng, 0.0, 2.0);
  w.w_sa = uniform(rng, 0.0, 2.0);
  w.w_delta = uniform(rng, 0.0, 0.01);
  w.w_T = uniform(rng, 0.0, 0.01);
  w.w_N = uniform(rng, 0.2, 2.0);
  w.w_actor = {uniform(rng, 0.5, 2.0), uniform(rng, 0.5, 2.0)};
  w.super_node_size = uniform_int(rng, 1, 4);
  auto& c = w.constraints;
  if (uniform(rng, 0.0, 1.0) < 0.5) c.t_begin = uniform(rng, 0.0, 200.0);
  if (uniform(rng, 0.0, 1.0) < 0.5) c.t_end = uniform(rng, 300.0, 600.0);
  for (int i = uniform_int(rng, 0, 2); i > 0; --i) {
    c.permitted.push_back({Vec2(uniform(rng, -150.0, 150.0), uniform(rng, -150.0, 150.0)), uniform(rng, 80.0, 250.0)});
  }
  for (int i = uniform_int(rng, 0, 2); i > 0; --i) {
    c.prohibited.push_back({Vec2(uniform(rng, -150.0, 150.0), uniform(rng, -150.0, 150.0)), uniform(rng, 10.0, 80.0)});
  }
  if (uniform(rng, 0.0, 1.0) < 0.6) c.max_jump_s = uniform(rng, 20.0, 120.0);
  c.min_run = uniform_int(rng, 1, 3);
  c.max_run = c.min_run + uniform_int(rng, 0, 3);
  return w;
}

// Best in-node path by depth-first enumeration of increasing index sequences.
struct PathSearch {
  const TrellisContext& ctx;
  const TrellisWeights& w;
  const std::vector<std::size_t>& node;
  std::optional<std::size_t> last;
  std::vector<char> represented;
  std::size_t max_len = 0;
  double best_mean = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> best;

  bool preferred(const std::vector<std::size_t>& path, double mean) const {
    if (mean != best_mean) return mean < best_mean;
    if (path.size() != best.size()) return path.size() > best.size();
    return std::lexicographical_compare(path.begin(), path.end(), best.begin(), best.end(),
                                        [&](std::size_t x, std::size_t y) {
                                          return earlier_frame(ctx.frames[x], ctx.frames[y]);
                                        });
  }

  void dfs(std::size_t from, std::vector<std::size_t>& path, std::vector<char>& rep, double cost) {
    for (std::size_t i = from; i < node.size(); ++i) {
      const std::size_t f = node[i];
      const std::optional<std::size_t> prev = path.empty() ? last : std::optional(path.back());
      if (prev) {
        const double gap = ctx.frames[f].t - ctx.frames[*prev].t;
        if (gap <= 0.0) continue;
        if (w.constraints.max_jump_s && gap > *w.constraints.max_jump_s) continue;
      }
      double c = cost + node_cost(f, ctx, w);
      if (prev) c += edge_cost(*prev, f, ctx, w, rep);
      std::vector<char> next = rep;
      if (const auto& k = ctx.frame_instance[f]; k) next[*k] = 1;
      path.push_back(f);
      const double mean = c / static_cast<double>(path.size());
      if (preferred(path, mean)) {
        best_mean = mean;
        best = path;
      }
      if (path.size() < max_len) dfs(i + 1, path, next, c);
      path.pop_back();
    }
  }
};

std::pair<int, int> check_video(std::mt19937_64& rng) {
  int violations = 0;
  int path_mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto fx = video_fixture(rng);
    const auto w = random_trellis(rng);
    const auto ctx = make_trellis_context(fx.frames, fx.chains, fx.posteriors, &fx.matches, w);
    const int t_out = uniform_int(rng, 3, 25);
    const auto video = summarize_video(ctx, w, t_out);
    violations += static_cast<int>(validate_video(video.frames, ctx, w).size());
    if (video.frames.size() > static_cast<std::size_t>(t_out)) ++violations;

    std::vector<std::size_t> prefix;
    std::optional<ActorId> actor;
    int run = 0;
    for (const auto& step : video.steps) {
      PathSearch search{ctx, w, step.node, std::nullopt, std::vector<char>(ctx.map_config.size(), 0), 0,
                        std::numeric_limits<double>::infinity(), {}};
      if (!prefix.empty()) search.last = prefix.back();
      for (std::size_t f : prefix) {
        if (const auto& k = ctx.frame_instance[f]; k) search.represented[*k] = 1;
      }
      const bool same = actor && *actor == step.actor;
      const int run_room = w.constraints.max_run - (same ? run : 0);
      search.max_len = std::min<std::size_t>(static_cast<std::size_t>(std::max(run_room, 0)),
                                             static_cast<std::size_t>(t_out) - prefix.size());
      std::vector<std::size_t> path;
      std::vector<char> rep = search.represented;
      search.dfs(0, path, rep, 0.0);
      if (search.best != step.path || std::abs(search.best_mean - step.mean_cost) > 1e-12) ++path_mismatches;
      prefix.insert(prefix.end(), step.path.begin(), step.path.end());
      run = same ? run + static_cast<int>(step.path.size()) : static_cast<int>(step.path.size());
      actor = step.actor;
    }
  }
  return {violations, path_mismatches};
}

Outcome summarization_properties() {
  std::mt19937_64 rng(77);
  const int metric_bad = check_pseudometric(rng);
  const int fps_bad = check_fps(rng);
  const auto [violations, mismatches] = check_video(rng);
  return {metric_bad == 0 && fps_bad == 0 && violations == 0 && mismatches == 0,
          fmt("metric failures %d/1000, FPS mismatches %d/50, video violations %d/100 sets, "
              "path mismatches %d",
              metric_bad, fps_bad, violations, mismatches)};
}

// ---------------------------------------------------------------------------
// 8. Determinism and serialization round trips.

struct Artifacts {
  std::string bundle;
  std::string truth;
  std::string chain;
  std::string localization;
  std::string keyframes;
};

Artifacts pipeline(std::uint64_t seed) {
  ScenarioConfig sc;
  sc.n_actors = 4;
  sc.n_turns = 3;
  sc.location_std_m = 300.0;
  sc.seed = seed;
  const auto ds = generate(sc);
  auto settings = scenario_inference_defaults();
  settings.sampler.n_iters = 3000;
  settings.sampler.burn_in = 1000;
  settings.sampler.grid_points = 200;
  settings.sampler.n_draws = 8;
  const auto model = scenario_model(sc);
  const auto& b = ds.bundle;
  Artifacts out;
  out.bundle = io::actors_csv(b) + io::gps_csv(b) + io::frames_csv(b) + io::faces_csv(b);
  out.truth = io::instances_csv(ds.truth, b.actors);
  const std::vector<ChainSamples> chains{run_chain(b, model, settings.gp, settings.sampler, seed + 1)};
  out.chain = io::chain_jsonl(chains[0]);
  const auto posts = build_posteriors(b, settings.gp, data_grid(b, settings.sampler.grid_points));
  out.localization = io::localization_csv(localize(chains, posts, ActorId(0)), b.actors[0]);
  const auto frames = frames_with_faces(b.frames, b.faces);
  const auto keys = select_keyframes(frames, 6, chains, FrameDistanceWeights{});
  for (std::size_t f : keys.frames) out.keyframes += std::to_string(f) + ",";
  return out;
}

Outcome determinism_roundtrip() {
  const auto a = pipeline(21);
  const auto b = pipeline(21);
  const auto c = pipeline(22);
  const bool repeat = a.bundle == b.bundle && a.truth == b.truth && a.chain == b.chain &&
                      a.localization == b.localization && a.keyframes == b.keyframes;
  const bool varies = a.bundle != c.bundle;

  ScenarioConfig sc;
  sc.n_actors = 4;
  sc.n_turns = 3;
  sc.seed = 5;
  const auto ds = generate(sc);
  const auto dir = std::filesystem::temp_directory_path() /
                   ("coactivity_acceptance_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  io::save_bundle(ds.bundle, dir);
  const auto loaded = io::load_bundle(io::BundlePaths::in(dir));
  std::filesystem::remove_all(dir);
  const auto& o = ds.bundle;
  const bool bundle_rt = io::actors_csv(loaded) == io::actors_csv(o) && io::gps_csv(loaded) == io::gps_csv(o) &&
                         io::frames_csv(loaded) == io::frames_csv(o) &&
                         io::faces_csv(loaded) == io::faces_csv(o) && loaded == o;
  const auto parsed = io::parse_chain_jsonl(a.chain, "chain");
  const bool chain_rt = io::chain_jsonl(parsed) == a.chain;
  return {repeat && varies && bundle_rt && chain_rt,
          fmt("same-seed artifacts identical: %s, other seed differs: %s, bundle round trip: %s, "
              "chain round trip: %s",
              repeat ? "yes" : "no", varies ? "yes" : "no", bundle_rt ? "yes" : "no",
              chain_rt ? "yes" : "no")};
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace coact

int main(int argc, char** argv) {
  using namespace coact;
  const std::vector<Criterion> criteria{
      {"count error vs location spread", count_error_curve},
      {"localization through GPS denial", denial_localization},
      {"GP regression and conditioning oracle", gp_oracle},
      {"sampler vs exhaustive enumeration", sampler_enumeration},
      {"factor decomposition identity", factor_decomposition},
      {"face identity correction", face_correction},
      {"summarization properties", summarization_properties},
      {"determinism and round trips", determinism_roundtrip},
  };
  std::vector<int> which;
  for (int i = 1; i < argc; ++i) which.push_back(std::atoi(argv[i]));
  if (which.empty()) {
    for (int i = 1; i <= static_cast<int>(criteria.size()); ++i) which.push_back(i);
  }
  int failed = 0;
  for (int id : which) {
    if (id < 1 || id > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "unknown criterion %d\n", id);
      return 1;
    }
    const auto& c = criteria[static_cast<std::size_t>(id - 1)];
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] %d. %s (%.1f s): %s\n", out.pass ? "PASS" : "FAIL", id, c.name, secs,
                out.detail.c_str());
    std::fflush(stdout);
    failed += !out.pass;
  }
  return failed == 0 ? 0 : 1;
}
