#include "coactivity/data.hpp"

#include "coactivity/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <tuple>

namespace coact {

std::optional<ActorId> DataBundle::find_actor(const std::string& name) const {
  for (std::size_t i = 0; i < actors.size(); ++i) {
    if (actors[i] == name) return ActorId(static_cast<std::uint32_t>(i));
  }
  return std::nullopt;
}

std::vector<GpsObservation> DataBundle::gps_of(ActorId a) const {
  std::vector<GpsObservation> out;
  for (const auto& g : gps) {
    if (g.actor == a) out.push_back(g);
  }
  return out;
}

void DataBundle::finalize() {
  const auto n = n_actors();
  auto check = [&](ActorId a, const char* stream, std::size_t row) {
    if (a.value >= n) {
      throw DataError(std::string(stream) + " row " + std::to_string(row),
                      "actor index " + std::to_string(a.value) + " is not in the registry");
    }
  };
  for (std::size_t i = 0; i < gps.size(); ++i) {
    check(gps[i].actor, "gps", i);
    if (!std::isfinite(gps[i].t) || !gps[i].pos.allFinite()) {
      throw DataError("gps row " + std::to_string(i), "non-finite value");
    }
    if (!(gps[i].noise_std >= 0.0)) {
      throw DataError("gps row " + std::to_string(i), "noise std must be >= 0");
    }
  }
  feature_dim = frames.empty() ? 0 : frames.front().features.size();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    check(frames[i].actor, "frames", i);
    if (frames[i].features.size() != feature_dim) {
      throw DataError("frames row " + std::to_string(i),
                      "feature dimension " + std::to_string(frames[i].features.size()) +
                          " differs from " + std::to_string(feature_dim));
    }
  }
  for (std::size_t i = 0; i < faces.size(); ++i) {
    check(faces[i].observer, "faces", i);
    if (faces[i].detected) check(*faces[i].detected, "faces", i);
    if (!faces[i].scores.empty() && faces[i].scores.size() != n) {
      throw DataError("faces row " + std::to_string(i), "score vector size != actor count");
    }
  }

  std::stable_sort(gps.begin(), gps.end(), [](const auto& a, const auto& b) {
    return std::tie(a.t, a.actor) < std::tie(b.t, b.actor);
  });
  std::stable_sort(frames.begin(), frames.end(), [](const auto& a, const auto& b) {
    return std::tie(a.t, a.actor) < std::tie(b.t, b.actor);
  });
  std::stable_sort(faces.begin(), faces.end(), [](const auto& a, const auto& b) {
    return std::tie(a.t, a.observer) < std::tie(b.t, b.observer);
  });

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  if (!gps.empty()) {
    lo = gps.front().t;
    hi = gps.back().t;
  } else {
    for (const auto& f : frames) lo = std::min(lo, f.t), hi = std::max(hi, f.t);
    for (const auto& f : faces) lo = std::min(lo, f.t), hi = std::max(hi, f.t);
  }
  if (!(hi >= lo)) throw DataError("bundle", "no timestamped rows; time support is empty");
  t_min = lo;
  t_max = hi;
}

}  // namespace coact
