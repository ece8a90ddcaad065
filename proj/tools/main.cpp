#include "coactivity/errors.hpp"
#include "coactivity/io.hpp"
#include "coactivity/posteriors.hpp"
#include "coactivity/rjmcmc.hpp"
#include "coactivity/scenario.hpp"
#include "coactivity/summarize.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <iostream>
#include <thread>

namespace fs = std::filesystem;
using namespace coact;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out = "out";
  std::string data;
  std::string chains;
};

struct Outputs {
  fs::path dir;
  std::vector<io::ManifestEntry> entries;

  void write(const std::string& name, const std::string& content) {
    io::write_atomic(dir / name, content);
    entries.push_back({name, io::content_hash(content)});
  }
  void manifest(const std::string& command, const io::RunConfig& cfg) {
    io::write_atomic(dir / ("manifest_" + command + ".json"), io::manifest_json(command, cfg, entries));
  }
};

int thread_cap() {
  int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("COACTIVITY_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) n = v;
  }
  return n;
}

io::RunConfig load_config(const Common& c) {
  io::RunConfig cfg = c.config.empty()
                          ? io::default_run_config()
                          : io::parse_run_config(io::read_file(c.config), c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.scenario.seed = *c.seed;
  }
  return cfg;
}

fs::path data_dir(const Common& c, const io::RunConfig& cfg) {
  if (!c.data.empty()) return c.data;
  if (!cfg.data.dir.empty()) return cfg.data.dir;
  return c.out;
}

DataBundle load_data(const Common& c, const io::RunConfig& cfg) {
  io::LoadOptions opt;
  opt.latlon = cfg.data.latlon;
  opt.origin = cfg.data.origin;
  return io::load_bundle(io::BundlePaths::in(data_dir(c, cfg)), opt);
}

std::vector<ChainSamples> load_chains(const Common& c) {
  const fs::path dir = c.chains.empty() ? fs::path(c.out) : fs::path(c.chains);
  std::vector<ChainSamples> out;
  for (int k = 0;; ++k) {
    const auto p = dir / ("chain_" + std::to_string(k) + ".jsonl");
    if (!fs::exists(p)) break;
    out.push_back(io::parse_chain_jsonl(io::read_file(p), p.string()));
  }
  if (out.empty()) throw DataError(dir.string(), "no chain_<k>.jsonl files");
  return out;
}

void add_common(CLI::App* app, Common& c, bool config_required = false) {
  app->add_option("--seed", c.seed, "Random seed (overrides the config)");
  auto* cfg = app->add_option("--config", c.config, "Run configuration JSON")->check(CLI::ExistingFile);
  if (config_required) cfg->required();
  app->add_option("--out", c.out, "Output directory")->capture_default_str();
}

void add_data(CLI::App* app, Common& c) {
  app->add_option("--data", c.data, "Dataset directory (default: config data.dir, then --out)");
}

void add_chains(CLI::App* app, Common& c) {
  app->add_option("--chains", c.chains, "Directory holding chain_<k>.jsonl (default: --out)");
}

int cmd_simulate(const Common& c, std::optional<double> location_std) {
  auto cfg = load_config(c);
  if (location_std) cfg.scenario.location_std_m = *location_std;
  cfg.scenario.seed = cfg.seed;
  const auto ds = generate(cfg.scenario);
  Outputs out{c.out, {}};
  out.write("actors.csv", io::actors_csv(ds.bundle));
  out.write("gps.csv", io::gps_csv(ds.bundle));
  out.write("frames.csv", io::frames_csv(ds.bundle));
  out.write("faces.csv", io::faces_csv(ds.bundle));
  out.write("truth.csv", io::instances_csv(ds.truth, ds.bundle.actors));
  out.manifest("simulate", cfg);
  std::cout << "simulated " << ds.bundle.n_actors() << " actors, " << ds.truth.size()
            << " meetings, " << ds.bundle.gps.size() << " GPS rows\n";
  return kOk;
}

int cmd_infer(const Common& c) {
  const auto cfg = load_config(c);
  const auto data = load_data(c, cfg);
  std::vector<ChainSamples> chains(static_cast<std::size_t>(cfg.n_chains));
  std::vector<std::exception_ptr> errors(chains.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k; (k = next++) < chains.size();) {
      try {
        chains[k] = run_chain(data, cfg.model, cfg.gp, cfg.sampler, stats::derive_seed(cfg.seed, k + 1));
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const int n_threads = std::min<int>(thread_cap(), cfg.n_chains);
  std::vector<std::thread> pool;
  for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  Outputs out{c.out, {}};
  for (std::size_t k = 0; k < chains.size(); ++k) {
    out.write("chain_" + std::to_string(k) + ".jsonl", io::chain_jsonl(chains[k]));
    const auto& ch = chains[k];
    std::cout << "chain " << k << ": " << ch.samples.size() << " samples";
    if (!ch.empty()) std::cout << ", best log score " << ch.best().log_score
                               << " with " << ch.best().config.size() << " instances";
    std::cout << "\n";
    for (MoveKind kind : ch.stalled_kinds(cfg.sampler.weights.w)) {
      std::cerr << "warning: chain " << k << " never accepted a " << to_string(kind) << " move\n";
    }
    if (ch.numerical_warnings > 0) {
      std::cerr << "warning: chain " << k << " rejected " << ch.numerical_warnings
                << " proposals with non-finite ratios\n";
    }
  }
  out.manifest("infer", cfg);
  return kOk;
}

std::vector<GpPosterior> posteriors_for(const DataBundle& data, const io::RunConfig& cfg) {
  return build_posteriors(data, cfg.gp, data_grid(data, cfg.sampler.grid_points));
}

int cmd_localize(const Common& c, const std::string& actor_name, std::vector<double> window) {
  const auto cfg = load_config(c);
  const auto data = load_data(c, cfg);
  const auto actor = data.find_actor(actor_name);
  if (!actor) throw DataError("--actor", "unknown actor '" + actor_name + "'");
  const auto chains = load_chains(c);
  const auto posts = posteriors_for(data, cfg);
  const auto loc = localize(chains, posts, *actor, cfg.localize_thin, cfg.aux_mode,
                            cfg.model.params.sigma_aux_m);
  Outputs out{c.out, {}};
  out.write("localization_" + actor_name + ".csv", io::localization_csv(loc, actor_name));
  if (window.size() == 2) {
    const auto r = uncertainty_report(loc, window[0], window[1]);
    std::cout << "mean std in window: before (" << r.before.x() << ", " << r.before.y()
              << ") m, after (" << r.after.x() << ", " << r.after.y() << ") m over " << r.n_points
              << " grid points\n";
  }
  out.manifest("localize", cfg);
  return kOk;
}

int cmd_faces(const Common& c) {
  const auto cfg = load_config(c);
  const auto data = load_data(c, cfg);
  const auto chains = load_chains(c);
  std::vector<Configuration> samples;
  for (const auto& ch : chains) {
    for (auto&& conf : ch.configurations()) samples.push_back(std::move(conf));
  }
  const double eps = cfg.model.params.face_epsilon.value_or(0.01 / static_cast<double>(data.n_actors()));
  std::string csv = "# format=coactivity-faces-corrected/1\nobserver,t_s,detected,corrected,probability\n";
  std::size_t changed = 0;
  for (const auto& d : data.faces) {
    const auto post = face_posterior(d, samples, data.n_actors(), eps);
    const auto best = static_cast<std::size_t>(std::max_element(post.begin(), post.end()) - post.begin());
    if (!d.detected || d.detected->value != best) ++changed;
    csv += data.actors[d.observer.value] + "," + io::format_double(d.t) + "," +
           (d.detected ? data.actors[d.detected->value] : std::string()) + "," + data.actors[best] +
           "," + io::format_double(post[best]) + "\n";
  }
  Outputs out{c.out, {}};
  out.write("faces_corrected.csv", csv);
  out.manifest("faces", cfg);
  std::cout << "corrected " << changed << " of " << data.faces.size() << " detections\n";
  return kOk;
}

std::string frame_row(const DataBundle& data, const FrameRecord& f) {
  return data.actors[f.actor.value] + "," + io::format_double(f.t);
}

int cmd_summarize(const Common& c, const std::string& mode, const std::string& matches_path) {
  const auto cfg = load_config(c);
  const auto data = load_data(c, cfg);
  const auto chains = load_chains(c);
  const auto& s = cfg.summarize;
  Outputs out{c.out, {}};
  if (mode == "keyframes" || mode == "map") {
    const auto key = select_keyframes(data.frames, s.keyframes, chains, s.distance, s.vote_floor);
    if (key.floor_fallback) std::cerr << "warning: no frame received a vote; the floor was not applied\n";
    if (key.truncated_k) std::cerr << "warning: fewer candidate frames than requested keyframes\n";
    if (mode == "keyframes") {
      std::string csv = "# format=coactivity-keyframes/1\nrank,actor,t,votes\n";
      for (std::size_t i = 0; i < key.frames.size(); ++i) {
        const auto f = key.frames[i];
        const auto rank = std::find(key.pick_order.begin(), key.pick_order.end(), f) - key.pick_order.begin();
        csv += std::to_string(rank) + "," + frame_row(data, data.frames[f]) + "," +
               std::to_string(key.votes[i]) + "\n";
      }
      out.write("keyframes.csv", csv);
    } else {
      const auto map = map_summary(key, data.frames, chains, s.map_rings);
      std::string csv = "# format=coactivity-map/1\ninstance_id,cx,cy,r,actor,t,px,py\n";
      for (const auto& p : map.placements) {
        const auto& cir = map.circles[p.circle];
        csv += std::to_string(cir.instance) + "," + io::format_double(cir.center.x()) + "," +
               io::format_double(cir.center.y()) + "," + io::format_double(cir.radius) + "," +
               frame_row(data, data.frames[p.frame]) + "," + io::format_double(p.position.x()) + "," +
               io::format_double(p.position.y()) + "\n";
      }
      out.write("map.csv", csv);
    }
  } else {
    std::optional<MatchTable> matches;
    if (!matches_path.empty()) matches = io::parse_matches_csv(io::read_file(matches_path), data.actors, matches_path);
    const auto frames = frames_with_faces(data.frames, data.faces);
    const auto posts = posteriors_for(data, cfg);
    const auto ctx = make_trellis_context(frames, chains, posts, matches ? &*matches : nullptr, s.trellis);
    const auto video = summarize_video(ctx, s.trellis, s.t_out);
    if (video.empty) std::cerr << "warning: no frame satisfies the constraints; summary is empty\n";
    std::string csv = "# format=coactivity-video/1\nactor,t_s\n";
    for (std::size_t f : video.frames) csv += frame_row(data, frames[f]) + "\n";
    out.write("video.csv", csv);
  }
  out.manifest("summarize", cfg);
  return kOk;
}

int cmd_sweep(const Common& c, const std::vector<double>& stds, std::optional<int> trials) {
  auto cfg = load_config(c);
  if (!stds.empty()) cfg.sweep_stds_m = stds;
  if (trials) cfg.sweep_trials = *trials;
  cfg.validate();
  InferenceSettings settings{cfg.gp, cfg.sampler, cfg.iou_threshold};
  auto base = cfg.scenario;
  base.seed = cfg.seed;
  const auto curve = sweep_location_std(base, cfg.sweep_stds_m, cfg.sweep_trials, settings, thread_cap());
  std::string csv = "# format=coactivity-sweep/1\nlocation_std_m,mean_error,std_error,n_failed,errors\n";
  for (const auto& p : curve.points) {
    std::string errs;
    for (std::size_t i = 0; i < p.trial_errors.size(); ++i) {
      errs += (i ? ";" : "") + io::format_double(p.trial_errors[i]);
    }
    csv += io::format_double(p.location_std_m) + "," + io::format_double(p.mean) + "," +
           io::format_double(p.std) + "," + std::to_string(p.failures.size()) + "," + errs + "\n";
    std::cout << "std " << p.location_std_m << " m: mean error " << p.mean << " (sd " << p.std << ")\n";
    for (const auto& f : p.failures) std::cerr << "warning: " << f << "\n";
  }
  Outputs out{c.out, {}};
  out.write("sweep.csv", csv);
  out.manifest("sweep", cfg);
  return kOk;
}

int cmd_eval(const Common& c, std::string truth_path) {
  const auto cfg = load_config(c);
  const auto data = load_data(c, cfg);
  if (truth_path.empty()) truth_path = (data_dir(c, cfg) / "truth.csv").string();
  const auto truth = io::parse_instances_csv(io::read_file(truth_path), data.actors, truth_path);
  const auto chains = load_chains(c);
  nlohmann::ordered_json j;
  j["format"] = "coactivity-eval/1";
  j["n_true"] = truth.size();
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < chains.size(); ++k) {
    const auto r = evaluate(chains[k], truth, cfg.iou_threshold);
    nlohmann::ordered_json e;
    e["chain"] = k;
    e["count_error"] = r.count_error;
    e["signed_count_error"] = r.signed_count_error;
    e["absolute_count_error"] = r.absolute_count_error;
    e["precision"] = r.precision;
    e["recall"] = r.recall;
    e["f1"] = r.f1;
    per.push_back(e);
    std::cout << "chain " << k << ": count error " << r.count_error << ", precision " << r.precision
              << ", recall " << r.recall << "\n";
  }
  j["chains"] = per;
  Outputs out{c.out, {}};
  out.write("eval.json", j.dump(2) + "\n");
  out.manifest("eval", cfg);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Co-activity detection from ego-centric GPS, video and face streams"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  Common c;
  std::optional<double> location_std;
  std::string actor;
  std::vector<double> window;
  std::string mode = "keyframes";
  std::string matches;
  std::string truth;

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset with ground truth");
  add_common(sim, c);
  sim->add_option("--location-std", location_std, "Override the meeting-place spread (m)");

  auto* inf = app.add_subcommand("infer", "Run RJ-MCMC chains and write chain_<k>.jsonl");
  add_common(inf, c, true);
  add_data(inf, c);

  auto* loc = app.add_subcommand("localize", "Export an actor's activity-conditioned trajectory");
  add_common(loc, c);
  add_data(loc, c);
  add_chains(loc, c);
  loc->add_option("--actor", actor, "Actor name")->required();
  loc->add_option("--window", window, "Report mean std over T0 T1 (s)")->expected(2);

  auto* faces = app.add_subcommand("faces", "Export posterior-corrected face identities");
  add_common(faces, c);
  add_data(faces, c);
  add_chains(faces, c);

  auto* sum = app.add_subcommand("summarize", "Keyframe, map or video summary");
  add_common(sum, c);
  add_data(sum, c);
  add_chains(sum, c);
  sum->add_option("--mode", mode, "keyframes, map or video")
      ->check(CLI::IsMember({"keyframes", "map", "video"}))
      ->capture_default_str();
  sum->add_option("--matches", matches, "Keypoint match table CSV (video mode)")->check(CLI::ExistingFile);

  auto* sweep = app.add_subcommand("sweep", "Count error against meeting-place spread");
  add_common(sweep, c);
  std::vector<double> stds;
  std::optional<int> trials;
  sweep->add_option("--stds", stds, "Meeting-place spreads (m), comma separated")->delimiter(',');
  sweep->add_option("--trials", trials, "Trials per spread");

  auto* ev = app.add_subcommand("eval", "Score chains against ground-truth instances");
  add_common(ev, c);
  add_data(ev, c);
  add_chains(ev, c);
  ev->add_option("--truth", truth, "Ground-truth CSV (default: <data>/truth.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*sim) return cmd_simulate(c, location_std);
    if (*inf) return cmd_infer(c);
    if (*loc) return cmd_localize(c, actor, window);
    if (*faces) return cmd_faces(c);
    if (*sum) return cmd_summarize(c, mode, matches);
    if (*sweep) return cmd_sweep(c, stds, trials);
    if (*ev) return cmd_eval(c, truth);
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
