#include "coactivity/io.hpp"

#include "coactivity/errors.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <system_error>

#ifndef COACTIVITY_VERSION
#define COACTIVITY_VERSION "0.0.0"
#endif

namespace coact::io {

using ojson = nlohmann::ordered_json;

namespace {

constexpr double kEarthRadiusM = 6371008.8;

std::string header_line(std::string_view kind) {
  return "# format=coactivity-" + std::string(kind) + "/" + std::to_string(kFormatVersion) + "\n";
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = s.find(sep, pos);
    if (next == std::string_view::npos) {
      out.push_back(s.substr(pos));
      return out;
    }
    out.push_back(s.substr(pos, next - pos));
    pos = next + 1;
  }
}

struct CsvLine {
  std::size_t number = 0;
  std::vector<std::string_view> fields;
};

// Table rows after the header; comment lines are returned separately.
struct CsvTable {
  std::vector<std::string_view> header;
  std::vector<CsvLine> rows;
  std::vector<std::string_view> comments;
};

CsvTable parse_csv(std::string_view text, const std::string& file) {
  CsvTable t;
  bool have_header = false;
  std::size_t number = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++number;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line.front() == '#') {
      t.comments.push_back(line.substr(1));
      continue;
    }
    if (!have_header) {
      t.header = split(line, ',');
      have_header = true;
      continue;
    }
    auto fields = split(line, ',');
    if (fields.size() != t.header.size()) {
      throw DataError(file + ":" + std::to_string(number),
                      "expected " + std::to_string(t.header.size()) + " fields, got " +
                          std::to_string(fields.size()));
    }
    t.rows.push_back({number, std::move(fields)});
  }
  return t;
}

void expect_header(const CsvTable& t, const std::vector<std::string>& want, const std::string& file) {
  if (t.header.empty() && t.rows.empty()) return;
  bool ok = t.header.size() == want.size();
  for (std::size_t i = 0; ok && i < want.size(); ++i) ok = t.header[i] == want[i];
  if (!ok) {
    std::string joined;
    for (const auto& w : want) joined += (joined.empty() ? "" : ",") + w;
    throw DataError(file + ":header", "expected columns " + joined);
  }
}

std::string where(const std::string& file, const CsvLine& l) {
  return file + ":" + std::to_string(l.number);
}

long long parse_int(std::string_view s, const std::string& at) {
  long long v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw DataError(at, "invalid integer '" + std::string(s) + "'");
  }
  return v;
}

ActorId actor_named(std::string_view name, const std::vector<std::string>& actors,
                    const std::string& at) {
  for (std::size_t i = 0; i < actors.size(); ++i) {
    if (actors[i] == name) return ActorId(static_cast<std::uint32_t>(i));
  }
  throw DataError(at, "unknown actor '" + std::string(name) + "'");
}

const std::string& name_of(ActorId a, const std::vector<std::string>& actors) {
  if (a.value >= actors.size()) throw ContractError("actor index outside the registry");
  return actors[a.value];
}

std::string join_doubles(std::span<const double> v, char sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += format_double(v[i]);
  }
  return s;
}

std::string participants_field(std::span<const ActorId> ps, const std::vector<std::string>& actors) {
  std::string s;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (i) s += ';';
    s += name_of(ps[i], actors);
  }
  return s;
}

void check_name(const std::string& name) {
  if (name.empty() || name.find_first_of(",;#\n\r") != std::string::npos) {
    throw ContractError("actor name '" + name + "' is empty or contains a reserved character");
  }
}

}  // namespace

std::string_view version() { return COACTIVITY_VERSION; }

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(std::string_view s, const std::string& at) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw DataError(at, "invalid number '" + std::string(s) + "'");
  }
  return v;
}

Vec2 latlon_to_local(double lat_deg, double lon_deg, const GeoOrigin& o) {
  constexpr double rad = std::numbers::pi / 180.0;
  return {kEarthRadiusM * (lon_deg - o.lon_deg) * rad * std::cos(o.lat_deg * rad),
          kEarthRadiusM * (lat_deg - o.lat_deg) * rad};
}

GeoOrigin local_to_latlon(const Vec2& p, const GeoOrigin& o) {
  constexpr double deg = 180.0 / std::numbers::pi;
  return {o.lat_deg + p.y() / kEarthRadiusM * deg,
          o.lon_deg + p.x() / (kEarthRadiusM * std::cos(o.lat_deg / deg)) * deg};
}

void write_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(tmp.string(), "cannot open for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw DataError(tmp.string(), "write failed");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw DataError(path.string(), "rename failed: " + ec.message());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string(), "cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

BundlePaths BundlePaths::in(const fs::path& dir) {
  return {dir / "actors.csv", dir / "gps.csv", dir / "frames.csv", dir / "faces.csv"};
}

std::string actors_csv(const DataBundle& b) {
  std::string s = header_line("actors") + "actor\n";
  for (const auto& a : b.actors) {
    check_name(a);
    s += a + "\n";
  }
  return s;
}

std::string gps_csv(const DataBundle& b) {
  std::string s = header_line("gps");
  if (b.origin) {
    s += "# origin=" + format_double(b.origin->lat_deg) + ";" + format_double(b.origin->lon_deg) + "\n";
  }
  s += "actor,t,x,y,noise_std\n";
  for (const auto& g : b.gps) {
    s += name_of(g.actor, b.actors) + "," + format_double(g.t) + "," + format_double(g.pos.x()) +
         "," + format_double(g.pos.y()) + "," + format_double(g.noise_std) + "\n";
  }
  return s;
}

std::string frames_csv(const DataBundle& b) {
  std::string s = header_line("frames") + "actor,t,kp_count";
  for (std::size_t v = 0; v < b.feature_dim; ++v) s += ",f" + std::to_string(v);
  s += "\n";
  for (const auto& f : b.frames) {
    s += name_of(f.actor, b.actors) + "," + format_double(f.t) + "," + std::to_string(f.keypoint_count);
    for (double x : f.features) s += "," + format_double(x);
    s += "\n";
  }
  return s;
}

std::string faces_csv(const DataBundle& b) {
  const bool scored = std::any_of(b.faces.begin(), b.faces.end(),
                                  [](const auto& d) { return !d.scores.empty(); });
  std::string s = header_line("faces") + "observer,t,detected_id";
  if (scored) {
    for (std::size_t k = 0; k < b.n_actors(); ++k) s += ",score_" + std::to_string(k);
  }
  s += "\n";
  for (const auto& d : b.faces) {
    s += name_of(d.observer, b.actors) + "," + format_double(d.t) + "," +
         (d.detected ? name_of(*d.detected, b.actors) : std::string());
    if (scored) {
      if (d.scores.empty()) {
        s += std::string(b.n_actors(), ',');
      } else {
        s += "," + join_doubles(d.scores, ',');
      }
    }
    s += "\n";
  }
  return s;
}

DataBundle load_bundle(const BundlePaths& paths, const LoadOptions& options) {
  DataBundle b;
  {
    const std::string file = paths.actors.string();
    const auto text = read_file(paths.actors);
    const auto t = parse_csv(text, file);
    expect_header(t, {"actor"}, file);
    for (const auto& row : t.rows) {
      const std::string name(row.fields[0]);
      if (name.empty()) throw DataError(where(file, row), "empty actor name");
      if (b.find_actor(name)) throw DataError(where(file, row), "duplicate actor '" + name + "'");
      b.actors.push_back(name);
    }
    if (b.actors.empty()) throw DataError(file, "actor registry is empty");
  }
  {
    const std::string file = paths.gps.string();
    const auto text = read_file(paths.gps);
    const auto t = parse_csv(text, file);
    for (auto c : t.comments) {
      constexpr std::string_view key = " origin=";
      if (c.starts_with(key)) {
        const auto parts = split(c.substr(key.size()), ';');
        if (parts.size() != 2) throw DataError(file, "origin comment needs lat;lon");
        b.origin = GeoOrigin{parse_double(parts[0], file), parse_double(parts[1], file)};
      }
    }
    expect_header(t, {"actor", "t", options.latlon ? "lat" : "x", options.latlon ? "lon" : "y", "noise_std"},
                  file);
    if (options.latlon) {
      if (options.origin) {
        b.origin = options.origin;
      } else if (!t.rows.empty()) {
        b.origin = GeoOrigin{parse_double(t.rows[0].fields[2], where(file, t.rows[0])),
                             parse_double(t.rows[0].fields[3], where(file, t.rows[0]))};
      }
    }
    for (const auto& row : t.rows) {
      const auto at = where(file, row);
      GpsObservation g;
      g.actor = actor_named(row.fields[0], b.actors, at);
      g.t = parse_double(row.fields[1], at);
      const double a = parse_double(row.fields[2], at);
      const double c = parse_double(row.fields[3], at);
      g.pos = options.latlon ? latlon_to_local(a, c, *b.origin) : Vec2(a, c);
      g.noise_std = parse_double(row.fields[4], at);
      if (!std::isfinite(g.t) || !g.pos.allFinite() || !(g.noise_std >= 0.0)) {
        throw DataError(at, "non-finite value or negative noise");
      }
      b.gps.push_back(g);
    }
  }
  if (fs::exists(paths.frames)) {
    const std::string file = paths.frames.string();
    const auto text = read_file(paths.frames);
    const auto t = parse_csv(text, file);
    if (!t.header.empty()) {
      if (t.header.size() < 3) throw DataError(file + ":header", "expected actor,t,kp_count,f0..");
      std::vector<std::string> want{"actor", "t", "kp_count"};
      for (std::size_t v = 3; v < t.header.size(); ++v) want.push_back("f" + std::to_string(v - 3));
      expect_header(t, want, file);
    }
    for (const auto& row : t.rows) {
      const auto at = where(file, row);
      FrameRecord f;
      f.actor = actor_named(row.fields[0], b.actors, at);
      f.t = parse_double(row.fields[1], at);
      const auto kp = parse_int(row.fields[2], at);
      if (kp < 0 || kp > std::numeric_limits<int>::max()) throw DataError(at, "keypoint count out of range");
      f.keypoint_count = static_cast<int>(kp);
      for (std::size_t v = 3; v < row.fields.size(); ++v) {
        f.features.push_back(parse_double(row.fields[v], at));
      }
      if (!std::isfinite(f.t)) throw DataError(at, "non-finite time");
      b.frames.push_back(std::move(f));
    }
  }
  if (fs::exists(paths.faces)) {
    const std::string file = paths.faces.string();
    const auto text = read_file(paths.faces);
    const auto t = parse_csv(text, file);
    if (!t.header.empty()) {
      std::vector<std::string> want{"observer", "t", "detected_id"};
      if (t.header.size() > 3) {
        for (std::size_t k = 0; k < b.n_actors(); ++k) want.push_back("score_" + std::to_string(k));
      }
      expect_header(t, want, file);
    }
    for (const auto& row : t.rows) {
      const auto at = where(file, row);
      FaceDetection d;
      d.observer = actor_named(row.fields[0], b.actors, at);
      d.t = parse_double(row.fields[1], at);
      if (!row.fields[2].empty()) d.detected = actor_named(row.fields[2], b.actors, at);
      const auto n_empty = std::count_if(row.fields.begin() + 3, row.fields.end(),
                                         [](auto f) { return f.empty(); });
      if (n_empty != 0 && n_empty != static_cast<std::ptrdiff_t>(row.fields.size() - 3)) {
        throw DataError(at, "score columns must be all filled or all empty");
      }
      if (n_empty == 0) {
        for (std::size_t k = 3; k < row.fields.size(); ++k) d.scores.push_back(parse_double(row.fields[k], at));
      }
      if (!std::isfinite(d.t)) throw DataError(at, "non-finite time");
      b.faces.push_back(std::move(d));
    }
  }
  b.finalize();
  return b;
}

void save_bundle(const DataBundle& b, const fs::path& dir) {
  const auto p = BundlePaths::in(dir);
  write_atomic(p.actors, actors_csv(b));
  write_atomic(p.gps, gps_csv(b));
  write_atomic(p.frames, frames_csv(b));
  write_atomic(p.faces, faces_csv(b));
}

std::string instances_csv(std::span<const ActivityInstance> instances,
                          const std::vector<std::string>& actors) {
  std::string s = header_line("instances") + "type,center_x,center_y,radius,start,span,participants\n";
  for (const auto& a : instances) {
    s += std::to_string(a.type.value) + "," + format_double(a.center.x()) + "," +
         format_double(a.center.y()) + "," + format_double(a.radius) + "," + format_double(a.start) +
         "," + format_double(a.span) + "," + participants_field(a.participants, actors) + "\n";
  }
  return s;
}

std::vector<ActivityInstance> parse_instances_csv(std::string_view text,
                                                  const std::vector<std::string>& actors,
                                                  const std::string& file) {
  const auto t = parse_csv(text, file);
  expect_header(t, {"type", "center_x", "center_y", "radius", "start", "span", "participants"}, file);
  std::vector<ActivityInstance> out;
  for (const auto& row : t.rows) {
    const auto at = where(file, row);
    ActivityInstance a;
    const auto type = parse_int(row.fields[0], at);
    if (type < 0) throw DataError(at, "negative type index");
    a.type = TypeId(static_cast<std::uint32_t>(type));
    a.center = {parse_double(row.fields[1], at), parse_double(row.fields[2], at)};
    a.radius = parse_double(row.fields[3], at);
    a.start = parse_double(row.fields[4], at);
    a.span = parse_double(row.fields[5], at);
    for (auto name : split(row.fields[6], ';')) a.participants.push_back(actor_named(name, actors, at));
    try {
      a.validate();
    } catch (const ContractError& e) {
      throw DataError(at, e.what());
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::string matches_csv(const MatchTable& m, const std::vector<std::string>& actors) {
  std::string s = header_line("matches") + "actor_i,t_i,actor_j,t_j,matches\n";
  for (const auto& e : m.entries()) {
    s += name_of(e.ai, actors) + "," + format_double(e.ti) + "," + name_of(e.aj, actors) + "," +
         format_double(e.tj) + "," + format_double(e.matches) + "\n";
  }
  return s;
}

MatchTable parse_matches_csv(std::string_view text, const std::vector<std::string>& actors,
                             const std::string& file) {
  const auto t = parse_csv(text, file);
  expect_header(t, {"actor_i", "t_i", "actor_j", "t_j", "matches"}, file);
  MatchTable m;
  for (const auto& row : t.rows) {
    const auto at = where(file, row);
    const double v = parse_double(row.fields[4], at);
    if (!(v >= 0.0)) throw DataError(at, "match count must be >= 0");
    m.set(actor_named(row.fields[0], actors, at), parse_double(row.fields[1], at),
          actor_named(row.fields[2], actors, at), parse_double(row.fields[3], at), v);
  }
  return m;
}

namespace {

ojson number_or_text(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

double number_from(const ojson& j, const std::string& at) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw DataError(at, "expected a number");
}

ojson parse_json(std::string_view text, const std::string& at) {
  try {
    return ojson::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(at, std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace

std::string chain_jsonl(const ChainSamples& chain) {
  ojson h;
  h["format"] = "coactivity-chain/" + std::to_string(kFormatVersion);
  h["seed"] = chain.seed;
  h["burn_in"] = chain.burn_in;
  h["n_iters"] = chain.n_iters;
  h["numerical_warnings"] = chain.numerical_warnings;
  h["n_samples"] = chain.samples.size();
  ojson st = ojson::object();
  for (MoveKind k : kAllMoveKinds) {
    const auto& m = chain.stats[static_cast<std::size_t>(k)];
    st[std::string(to_string(k))] = {m.proposed, m.accepted, m.auto_rejected};
  }
  h["stats"] = st;
  std::string out = h.dump() + "\n";
  for (const auto& s : chain.samples) {
    ojson j;
    j["iteration"] = s.iteration;
    j["log_score"] = number_or_text(s.log_score);
    ojson inst = ojson::array();
    for (const auto& a : s.config.instances) {
      ojson ps = ojson::array();
      for (auto p : a.participants) ps.push_back(p.value);
      inst.push_back({a.type.value, a.center.x(), a.center.y(), a.radius, a.start, a.span, ps});
    }
    j["instances"] = inst;
    out += j.dump() + "\n";
  }
  return out;
}

ChainSamples parse_chain_jsonl(std::string_view text, const std::string& file) {
  ChainSamples c;
  std::size_t number = 0;
  std::size_t pos = 0;
  bool have_header = false;
  std::size_t expected = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++number;
    if (line.empty()) continue;
    const std::string at = file + ":" + std::to_string(number);
    const auto j = parse_json(line, at);
    try {
      if (!have_header) {
        if (j.value("format", "") != "coactivity-chain/" + std::to_string(kFormatVersion)) {
          throw DataError(at, "missing or unsupported chain format header");
        }
        c.seed = j.at("seed").get<std::uint64_t>();
        c.burn_in = j.at("burn_in").get<std::int64_t>();
        c.n_iters = j.at("n_iters").get<std::int64_t>();
        c.numerical_warnings = j.at("numerical_warnings").get<std::int64_t>();
        expected = j.at("n_samples").get<std::size_t>();
        for (const auto& [name, v] : j.at("stats").items()) {
          const auto kind = parse_move_kind(name);
          if (!kind) throw DataError(at, "unknown move kind '" + name + "'");
          auto& m = c.stats[static_cast<std::size_t>(*kind)];
          m.proposed = v.at(0).get<std::int64_t>();
          m.accepted = v.at(1).get<std::int64_t>();
          m.auto_rejected = v.at(2).get<std::int64_t>();
        }
        have_header = true;
        continue;
      }
      ChainSample s;
      s.iteration = j.at("iteration").get<std::int64_t>();
      s.log_score = number_from(j.at("log_score"), at);
      for (const auto& a : j.at("instances")) {
        ActivityInstance inst;
        inst.type = TypeId(a.at(0).get<std::uint32_t>());
        inst.center = {a.at(1).get<double>(), a.at(2).get<double>()};
        inst.radius = a.at(3).get<double>();
        inst.start = a.at(4).get<double>();
        inst.span = a.at(5).get<double>();
        for (const auto& p : a.at(6)) inst.participants.emplace_back(p.get<std::uint32_t>());
        s.config.instances.push_back(std::move(inst));
      }
      c.samples.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(at, std::string("malformed record: ") + e.what());
    }
  }
  if (!have_header) throw DataError(file, "empty chain file");
  if (c.samples.size() != expected) {
    throw DataError(file, "header announces " + std::to_string(expected) + " samples, found " +
                              std::to_string(c.samples.size()));
  }
  return c;
}

std::string localization_csv(const LocalizationPosterior& loc, const std::string& actor) {
  std::string s = header_line("localization") + "actor,t,mean_x,mean_y,std_x,std_y,conditioned\n";
  for (int i = 0; i < loc.grid.n_points; ++i) {
    const bool changed = loc.mean(i, 0) != loc.prior_mean(i, 0) || loc.mean(i, 1) != loc.prior_mean(i, 1) ||
                         loc.std(i, 0) != loc.prior_std(i) || loc.std(i, 1) != loc.prior_std(i);
    s += actor + "," + format_double(loc.grid.at(i)) + "," + format_double(loc.mean(i, 0)) + "," +
         format_double(loc.mean(i, 1)) + "," + format_double(loc.std(i, 0)) + "," +
         format_double(loc.std(i, 1)) + "," + (changed ? "1" : "0") + "\n";
  }
  return s;
}

// ---- run configuration ----

namespace {

// Strict reader over one JSON object.
class Section {
 public:
  Section(const ojson& j, std::string path, std::string file)
      : j_(j), path_(std::move(path)), file_(std::move(file)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError(file_ + ": " + key + ": " + what);
  }

  const ojson* find(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string key(const char* k) const { return path_.empty() ? k : path_ + "." + k; }

  void get(const char* k, double& out) {
    if (const auto* v = find(k)) {
      if (!v->is_number()) fail(key(k), "expected a number");
      out = v->get<double>();
    }
  }
  void get(const char* k, std::optional<double>& out) {
    if (const auto* v = find(k)) {
      if (v->is_null()) {
        out.reset();
      } else if (v->is_number()) {
        out = v->get<double>();
      } else {
        fail(key(k), "expected a number or null");
      }
    }
  }
  template <class Int>
    requires std::is_integral_v<Int>
  void get(const char* k, Int& out) {
    if (const auto* v = find(k)) {
      if constexpr (std::is_same_v<Int, bool>) {
        if (!v->is_boolean()) fail(key(k), "expected true or false");
        out = v->get<bool>();
      } else {
        if (!v->is_number_integer()) fail(key(k), "expected an integer");
        if (std::is_unsigned_v<Int> && !v->is_number_unsigned()) fail(key(k), "expected a non-negative integer");
        out = v->get<Int>();
      }
    }
  }
  void get(const char* k, std::string& out) {
    if (const auto* v = find(k)) {
      if (!v->is_string()) fail(key(k), "expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const char* k, std::vector<double>& out) {
    if (const auto* v = find(k)) {
      if (!v->is_array()) fail(key(k), "expected an array of numbers");
      out.clear();
      for (const auto& x : *v) {
        if (!x.is_number()) fail(key(k), "expected an array of numbers");
        out.push_back(x.get<double>());
      }
    }
  }
  void get(const char* k, stats::LogNormal& out, const char* median_key) {
    if (const auto* v = find(k)) {
      Section s(*v, key(k), file_);
      s.get(median_key, out.median);
      s.get("log_std", out.log_std);
      s.finish();
    }
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) fail(path_.empty() ? k : path_ + "." + k, "unknown key");
    }
  }

  const std::string& file() const { return file_; }

 private:
  const ojson& j_;
  std::string path_;
  std::string file_;
  std::set<std::string> seen_;
};

ojson lognormal_json(const stats::LogNormal& d, const char* median_key) {
  ojson j;
  j[median_key] = d.median;
  j["log_std"] = d.log_std;
  return j;
}

std::string_view overlap_name(Overlap o) {
  switch (o) {
    case Overlap::kDisjoint: return "disjoint";
    case Overlap::kMayOverlap: return "may_overlap";
    case Overlap::kContains: return "contains";
  }
  return "may_overlap";
}

ojson gp_json(const GpHyperParams& g) {
  ojson j;
  j["kernel"] = g.kernel == KernelKind::kMatern52 ? "matern52" : "squared_exponential";
  j["length_scale_s"] = g.length_scale_s;
  j["signal_std_m"] = g.signal_std_m;
  j["mean_x_m"] = g.mean.x();
  j["mean_y_m"] = g.mean.y();
  j["jitter_rel"] = g.jitter;
  return j;
}

void read_gp(Section s, GpHyperParams& g) {
  std::string kernel = g.kernel == KernelKind::kMatern52 ? "matern52" : "squared_exponential";
  s.get("kernel", kernel);
  if (kernel == "matern52") {
    g.kernel = KernelKind::kMatern52;
  } else if (kernel == "squared_exponential") {
    g.kernel = KernelKind::kSquaredExponential;
  } else {
    s.fail(s.key("kernel"), "expected matern52 or squared_exponential");
  }
  s.get("length_scale_s", g.length_scale_s);
  s.get("signal_std_m", g.signal_std_m);
  s.get("mean_x_m", g.mean.x());
  s.get("mean_y_m", g.mean.y());
  s.get("jitter_rel", g.jitter);
  s.finish();
}

ojson model_json(const ActivityModel& m) {
  ojson types = ojson::array();
  for (const auto& t : m.types) {
    ojson j;
    j["id"] = t.id;
    j["label"] = t.label;
    j["span_prior"] = lognormal_json(t.span_prior, "median_s");
    j["radius_prior"] = lognormal_json(t.radius_prior, "median_m");
    j["participants_prior"] = lognormal_json(t.participants_prior, "median");
    j["feature_mean"] = t.feature_mean;
    j["feature_var"] = t.feature_var;
    j["face_rate_participant_per_min"] = t.face_rate_participant_per_min;
    j["face_rate_nonparticipant_per_min"] = t.face_rate_nonparticipant_per_min;
    j["excursion_rate_per_s"] = t.excursion_rate_per_s;
    types.push_back(j);
  }
  ojson overlap = ojson::array();
  for (std::size_t a = 0; a < m.overlap.size(); ++a) {
    ojson row = ojson::array();
    for (std::size_t b = 0; b < m.overlap.size(); ++b) {
      row.push_back(overlap_name(m.overlap.get(TypeId(static_cast<std::uint32_t>(a)),
                                               TypeId(static_cast<std::uint32_t>(b)))));
    }
    overlap.push_back(row);
  }
  ojson p;
  p["uncovered_penalty"] = m.params.uncovered_penalty;
  p["background_mean"] = m.params.background_mean;
  p["background_var"] = m.params.background_var;
  p["sigma_aux_m"] = m.params.sigma_aux_m;
  p["face_epsilon"] = m.params.face_epsilon ? ojson(*m.params.face_epsilon) : ojson(nullptr);
  ojson j;
  j["types"] = types;
  j["overlap"] = overlap;
  j["params"] = p;
  return j;
}

void read_model(Section s, ActivityModel& m) {
  if (const auto* types = s.find("types")) {
    if (!types->is_array()) s.fail(s.key("types"), "expected an array");
    m.types.clear();
    for (std::size_t i = 0; i < types->size(); ++i) {
      Section t((*types)[i], s.key("types") + "[" + std::to_string(i) + "]", s.file());
      ActivityType a;
      t.get("id", a.id);
      t.get("label", a.label);
      t.get("span_prior", a.span_prior, "median_s");
      t.get("radius_prior", a.radius_prior, "median_m");
      t.get("participants_prior", a.participants_prior, "median");
      t.get("feature_mean", a.feature_mean);
      t.get("feature_var", a.feature_var);
      t.get("face_rate_participant_per_min", a.face_rate_participant_per_min);
      t.get("face_rate_nonparticipant_per_min", a.face_rate_nonparticipant_per_min);
      t.get("excursion_rate_per_s", a.excursion_rate_per_s);
      t.finish();
      m.types.push_back(std::move(a));
    }
    m.overlap = OverlapMatrix(m.types.size());
  }
  if (const auto* ov = s.find("overlap")) {
    const auto n = m.types.size();
    const auto k = s.key("overlap");
    if (!ov->is_array() || ov->size() != n) s.fail(k, "expected an n_types x n_types array");
    OverlapMatrix om(n);
    for (std::size_t a = 0; a < n; ++a) {
      const auto& row = (*ov)[a];
      if (!row.is_array() || row.size() != n) s.fail(k, "expected an n_types x n_types array");
      for (std::size_t b = 0; b < n; ++b) {
        const auto name = row[b].is_string() ? row[b].get<std::string>() : std::string();
        Overlap rel;
        if (name == "disjoint") {
          rel = Overlap::kDisjoint;
        } else if (name == "may_overlap") {
          rel = Overlap::kMayOverlap;
        } else if (name == "contains") {
          rel = Overlap::kContains;
        } else {
          s.fail(k, "expected disjoint, may_overlap or contains");
        }
        om.set(TypeId(static_cast<std::uint32_t>(a)), TypeId(static_cast<std::uint32_t>(b)), rel);
      }
    }
    m.overlap = om;
  }
  if (const auto* p = s.find("params")) {
    Section ps(*p, s.key("params"), s.file());
    ps.get("uncovered_penalty", m.params.uncovered_penalty);
    ps.get("background_mean", m.params.background_mean);
    ps.get("background_var", m.params.background_var);
    ps.get("sigma_aux_m", m.params.sigma_aux_m);
    ps.get("face_epsilon", m.params.face_epsilon);
    ps.finish();
  }
  s.finish();
}

ojson sampler_json(const SamplerConfig& c) {
  ojson j;
  j["n_iters"] = c.n_iters;
  j["burn_in"] = c.burn_in;
  j["sample_thin"] = c.sample_thin;
  j["refresh_period"] = c.refresh_period;
  j["grid_points"] = c.grid_points;
  j["n_draws"] = c.n_draws;
  j["max_instances"] = c.max_instances;
  j["radius_proposal"] = lognormal_json(c.radius_proposal, "median_m");
  j["span_proposal"] = lognormal_json(c.span_proposal, "median_s");
  j["center_displacement_std_m"] = c.center_displacement_std_m;
  j["participants_prior"] = lognormal_json(c.participants_prior, "median");
  j["aux_conditioning"] = c.aux_conditioning;
  j["local_mix"] = c.local_mix;
  j["rw_center_std_m"] = c.rw_center_std_m;
  j["rw_start_std_s"] = c.rw_start_std_s;
  j["rw_log_span_std"] = c.rw_log_span_std;
  j["rw_log_radius_std"] = c.rw_log_radius_std;
  j["split_center_std_m"] = c.split_center_std_m;
  j["split_radius_log_std"] = c.split_radius_log_std;
  j["cluster_distance_m"] = c.cluster_distance_m;
  j["cluster_min_duration_s"] = c.cluster_min_duration_s;
  j["cluster_max_gap_s"] = c.cluster_max_gap_s;
  j["birth_start_std_s"] = c.birth_start_std_s;
  j["birth_span_log_std"] = c.birth_span_log_std;
  j["birth_center_std_m"] = c.birth_center_std_m;
  ojson w;
  for (MoveKind k : kAllMoveKinds) w[std::string(to_string(k))] = c.weights.of(k);
  j["move_weights"] = w;
  return j;
}

void read_sampler(Section s, SamplerConfig& c) {
  s.get("n_iters", c.n_iters);
  s.get("burn_in", c.burn_in);
  s.get("sample_thin", c.sample_thin);
  s.get("refresh_period", c.refresh_period);
  s.get("grid_points", c.grid_points);
  s.get("n_draws", c.n_draws);
  s.get("max_instances", c.max_instances);
  s.get("radius_proposal", c.radius_proposal, "median_m");
  s.get("span_proposal", c.span_proposal, "median_s");
  s.get("center_displacement_std_m", c.center_displacement_std_m);
  s.get("participants_prior", c.participants_prior, "median");
  s.get("aux_conditioning", c.aux_conditioning);
  s.get("local_mix", c.local_mix);
  s.get("rw_center_std_m", c.rw_center_std_m);
  s.get("rw_start_std_s", c.rw_start_std_s);
  s.get("rw_log_span_std", c.rw_log_span_std);
  s.get("rw_log_radius_std", c.rw_log_radius_std);
  s.get("split_center_std_m", c.split_center_std_m);
  s.get("split_radius_log_std", c.split_radius_log_std);
  s.get("cluster_distance_m", c.cluster_distance_m);
  s.get("cluster_min_duration_s", c.cluster_min_duration_s);
  s.get("cluster_max_gap_s", c.cluster_max_gap_s);
  s.get("birth_start_std_s", c.birth_start_std_s);
  s.get("birth_span_log_std", c.birth_span_log_std);
  s.get("birth_center_std_m", c.birth_center_std_m);
  if (const auto* w = s.find("move_weights")) {
    Section ws(*w, s.key("move_weights"), s.file());
    for (MoveKind k : kAllMoveKinds) {
      double v = c.weights.of(k);
      ws.get(std::string(to_string(k)).c_str(), v);
      c.weights.set(k, v);
    }
    ws.finish();
  }
  s.finish();
}

ojson scenario_json(const ScenarioConfig& c) {
  ojson j;
  j["n_actors"] = c.n_actors;
  j["n_turns"] = c.n_turns;
  j["travel_s"] = c.travel_s;
  j["n_places"] = c.n_places;
  j["location_std_m"] = c.location_std_m;
  j["p_meet"] = c.p_meet;
  j["gps_noise_std_m"] = c.gps_noise_std_m;
  j["gps_rate_hz"] = c.gps_rate_hz;
  j["area_extent_m"] = c.area_extent_m;
  j["radius_prior"] = lognormal_json(c.radius_prior, "median_m");
  j["span_prior"] = lognormal_json(c.span_prior, "median_s");
  j["frame_interval_s"] = c.frame_interval_s;
  j["feature_dim"] = c.feature_dim;
  j["feature_separation"] = c.feature_separation;
  j["keypoint_mean"] = c.keypoint_mean;
  j["face_rate_participant_per_min"] = c.face_rate_participant_per_min;
  j["face_rate_nonparticipant_per_min"] = c.face_rate_nonparticipant_per_min;
  j["face_corruption"] = c.face_corruption;
  j["face_score_margin"] = c.face_score_margin;
  j["excursion_rate_per_s"] = c.excursion_rate_per_s;
  return j;
}

void read_scenario(Section s, ScenarioConfig& c) {
  s.get("n_actors", c.n_actors);
  s.get("n_turns", c.n_turns);
  s.get("travel_s", c.travel_s);
  s.get("n_places", c.n_places);
  s.get("location_std_m", c.location_std_m);
  s.get("p_meet", c.p_meet);
  s.get("gps_noise_std_m", c.gps_noise_std_m);
  s.get("gps_rate_hz", c.gps_rate_hz);
  s.get("area_extent_m", c.area_extent_m);
  s.get("radius_prior", c.radius_prior, "median_m");
  s.get("span_prior", c.span_prior, "median_s");
  s.get("frame_interval_s", c.frame_interval_s);
  s.get("feature_dim", c.feature_dim);
  s.get("feature_separation", c.feature_separation);
  s.get("keypoint_mean", c.keypoint_mean);
  s.get("face_rate_participant_per_min", c.face_rate_participant_per_min);
  s.get("face_rate_nonparticipant_per_min", c.face_rate_nonparticipant_per_min);
  s.get("face_corruption", c.face_corruption);
  s.get("face_score_margin", c.face_score_margin);
  s.get("excursion_rate_per_s", c.excursion_rate_per_s);
  s.finish();
}

ojson optional_json(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

ojson discs_json(const std::vector<LocationDisc>& discs) {
  ojson a = ojson::array();
  for (const auto& d : discs) {
    ojson j;
    j["center_x_m"] = d.center.x();
    j["center_y_m"] = d.center.y();
    j["radius_m"] = d.radius;
    a.push_back(j);
  }
  return a;
}

void read_discs(Section& s, const char* k, std::vector<LocationDisc>& out) {
  if (const auto* v = s.find(k)) {
    if (!v->is_array()) s.fail(s.key(k), "expected an array");
    out.clear();
    for (std::size_t i = 0; i < v->size(); ++i) {
      Section d((*v)[i], s.key(k) + "[" + std::to_string(i) + "]", s.file());
      LocationDisc disc;
      d.get("center_x_m", disc.center.x());
      d.get("center_y_m", disc.center.y());
      d.get("radius_m", disc.radius);
      d.finish();
      out.push_back(disc);
    }
  }
}

ojson summarize_json(const SummarizeSettings& s) {
  ojson d;
  d["w_ac"] = s.distance.w_ac;
  d["w_feat"] = s.distance.w_feat;
  d["w_time"] = s.distance.w_time;
  d["w_id"] = s.distance.w_id;
  d["feat_scale"] = s.distance.feat_scale;
  d["time_scale_s"] = s.distance.time_scale;
  const auto& w = s.trellis;
  ojson c;
  c["t_begin_s"] = optional_json(w.constraints.t_begin);
  c["t_end_s"] = optional_json(w.constraints.t_end);
  c["permitted"] = discs_json(w.constraints.permitted);
  c["prohibited"] = discs_json(w.constraints.prohibited);
  c["max_jump_s"] = optional_json(w.constraints.max_jump_s);
  c["min_run"] = w.constraints.min_run;
  c["max_run"] = w.constraints.max_run;
  ojson t;
  t["w_q"] = w.w_q;
  t["w_f"] = w.w_f;
  t["w_a"] = w.w_a;
  t["w_actor"] = w.w_actor;
  t["w_nm"] = w.w_nm;
  t["w_sf"] = w.w_sf;
  t["w_sa"] = w.w_sa;
  t["w_delta_per_m"] = w.w_delta;
  t["w_T_per_s"] = w.w_T;
  t["w_N"] = w.w_N;
  t["super_node_size"] = w.super_node_size;
  t["constraints"] = c;
  ojson j;
  j["keyframes"] = s.keyframes;
  j["vote_floor"] = s.vote_floor;
  j["distance"] = d;
  j["map_rings"] = s.map_rings;
  j["t_out"] = s.t_out;
  j["trellis"] = t;
  return j;
}

void read_summarize(Section s, SummarizeSettings& out) {
  s.get("keyframes", out.keyframes);
  s.get("vote_floor", out.vote_floor);
  if (const auto* v = s.find("distance")) {
    Section d(*v, s.key("distance"), s.file());
    d.get("w_ac", out.distance.w_ac);
    d.get("w_feat", out.distance.w_feat);
    d.get("w_time", out.distance.w_time);
    d.get("w_id", out.distance.w_id);
    d.get("feat_scale", out.distance.feat_scale);
    d.get("time_scale_s", out.distance.time_scale);
    d.finish();
  }
  s.get("map_rings", out.map_rings);
  s.get("t_out", out.t_out);
  if (const auto* v = s.find("trellis")) {
    Section t(*v, s.key("trellis"), s.file());
    auto& w = out.trellis;
    t.get("w_q", w.w_q);
    t.get("w_f", w.w_f);
    t.get("w_a", w.w_a);
    t.get("w_actor", w.w_actor);
    t.get("w_nm", w.w_nm);
    t.get("w_sf", w.w_sf);
    t.get("w_sa", w.w_sa);
    t.get("w_delta_per_m", w.w_delta);
    t.get("w_T_per_s", w.w_T);
    t.get("w_N", w.w_N);
    t.get("super_node_size", w.super_node_size);
    if (const auto* cv = t.find("constraints")) {
      Section c(*cv, t.key("constraints"), s.file());
      c.get("t_begin_s", w.constraints.t_begin);
      c.get("t_end_s", w.constraints.t_end);
      read_discs(c, "permitted", w.constraints.permitted);
      read_discs(c, "prohibited", w.constraints.prohibited);
      c.get("max_jump_s", w.constraints.max_jump_s);
      c.get("min_run", w.constraints.min_run);
      c.get("max_run", w.constraints.max_run);
      c.finish();
    }
    t.finish();
  }
  s.finish();
}

ojson config_doc(const RunConfig& cfg) {
  ojson j;
  j["format"] = "coactivity-config/" + std::to_string(kFormatVersion);
  j["seed"] = cfg.seed;
  j["n_chains"] = cfg.n_chains;
  j["iou_threshold"] = cfg.iou_threshold;
  j["localize_thin"] = cfg.localize_thin;
  j["aux_mode"] = cfg.aux_mode == AuxMode::kStatic ? "static" : "dynamic";
  j["sweep_stds_m"] = cfg.sweep_stds_m;
  j["sweep_trials"] = cfg.sweep_trials;
  j["gp"] = gp_json(cfg.gp);
  j["model"] = model_json(cfg.model);
  j["sampler"] = sampler_json(cfg.sampler);
  j["scenario"] = scenario_json(cfg.scenario);
  ojson d;
  d["dir"] = cfg.data.dir.generic_string();
  d["latlon"] = cfg.data.latlon;
  d["origin_lat_deg"] = cfg.data.origin ? ojson(cfg.data.origin->lat_deg) : ojson(nullptr);
  d["origin_lon_deg"] = cfg.data.origin ? ojson(cfg.data.origin->lon_deg) : ojson(nullptr);
  j["data"] = d;
  j["summarize"] = summarize_json(cfg.summarize);
  return j;
}

}  // namespace

void RunConfig::validate() const {
  if (n_chains < 1) throw ConfigError("n_chains must be >= 1");
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) throw ConfigError("iou_threshold must be in (0, 1]");
  if (localize_thin < 1) throw ConfigError("localize_thin must be >= 1");
  if (sweep_trials < 2) throw ConfigError("sweep_trials must be >= 2");
  for (double s : sweep_stds_m) {
    if (!(s > 0.0)) throw ConfigError("sweep_stds_m entries must be > 0");
  }
  gp.validate();
  model.validate();
  sampler.validate();
  scenario.validate();
  if (summarize.keyframes < 1) throw ConfigError("summarize.keyframes must be >= 1");
  if (!(summarize.vote_floor >= 0.0 && summarize.vote_floor <= 1.0)) {
    throw ConfigError("summarize.vote_floor must be in [0, 1]");
  }
  if (summarize.map_rings < 1) throw ConfigError("summarize.map_rings must be >= 1");
  if (summarize.t_out < 1) throw ConfigError("summarize.t_out must be >= 1");
  summarize.distance.validate();
  summarize.trellis.validate();
}

RunConfig default_run_config() {
  RunConfig cfg;
  const auto inf = scenario_inference_defaults();
  cfg.gp = inf.gp;
  cfg.sampler = inf.sampler;
  cfg.iou_threshold = inf.iou_threshold;
  cfg.model = scenario_model(cfg.scenario);
  return cfg;
}

RunConfig parse_run_config(std::string_view json, const std::string& file) {
  const auto j = parse_json(json, file);
  RunConfig cfg = default_run_config();
  Section s(j, "", file);
  std::string format = "coactivity-config/" + std::to_string(kFormatVersion);
  s.get("format", format);
  if (format != "coactivity-config/" + std::to_string(kFormatVersion)) {
    s.fail("format", "unsupported version '" + format + "'");
  }
  s.get("seed", cfg.seed);
  s.get("n_chains", cfg.n_chains);
  s.get("iou_threshold", cfg.iou_threshold);
  s.get("localize_thin", cfg.localize_thin);
  std::string aux = "static";
  s.get("aux_mode", aux);
  if (aux == "static") {
    cfg.aux_mode = AuxMode::kStatic;
  } else if (aux == "dynamic") {
    cfg.aux_mode = AuxMode::kDynamic;
  } else {
    s.fail("aux_mode", "expected static or dynamic");
  }
  s.get("sweep_stds_m", cfg.sweep_stds_m);
  s.get("sweep_trials", cfg.sweep_trials);
  if (const auto* v = s.find("gp")) read_gp(Section(*v, "gp", file), cfg.gp);
  if (const auto* v = s.find("scenario")) read_scenario(Section(*v, "scenario", file), cfg.scenario);
  cfg.scenario.seed = cfg.seed;
  cfg.model = scenario_model(cfg.scenario);
  if (const auto* v = s.find("model")) read_model(Section(*v, "model", file), cfg.model);
  if (const auto* v = s.find("sampler")) read_sampler(Section(*v, "sampler", file), cfg.sampler);
  if (const auto* v = s.find("data")) {
    Section d(*v, "data", file);
    std::string dir;
    d.get("dir", dir);
    cfg.data.dir = dir;
    d.get("latlon", cfg.data.latlon);
    std::optional<double> lat, lon;
    d.get("origin_lat_deg", lat);
    d.get("origin_lon_deg", lon);
    if (lat.has_value() != lon.has_value()) d.fail("data.origin", "give both latitude and longitude");
    if (lat) cfg.data.origin = GeoOrigin{*lat, *lon};
    d.finish();
  }
  if (const auto* v = s.find("summarize")) read_summarize(Section(*v, "summarize", file), cfg.summarize);
  s.finish();
  cfg.validate();
  return cfg;
}

std::string run_config_json(const RunConfig& cfg) { return config_doc(cfg).dump(2) + "\n"; }

std::string config_hash(const RunConfig& cfg) { return content_hash(config_doc(cfg).dump()); }

std::string manifest_json(std::string_view command, const RunConfig& cfg,
                          std::span<const ManifestEntry> outputs) {
  ojson j;
  j["format"] = "coactivity-manifest/" + std::to_string(kFormatVersion);
  j["version"] = std::string(version());
  j["command"] = std::string(command);
  j["seed"] = cfg.seed;
  j["config_hash"] = config_hash(cfg);
  j["config"] = config_doc(cfg);
  ojson out = ojson::array();
  for (const auto& e : outputs) {
    ojson o;
    o["path"] = e.path;
    o["fnv1a64"] = e.hash;
    out.push_back(o);
  }
  j["outputs"] = out;
  return j.dump(2) + "\n";
}

}  // namespace coact::io
