#pragma once

#include "coactivity/activity.hpp"
#include "coactivity/gp.hpp"

#include <optional>
#include <string>
#include <vector>

namespace coact {

struct GeoOrigin {
  double lat_deg = 0.0;
  double lon_deg = 0.0;

  bool operator==(const GeoOrigin&) const = default;
};

// All evidence streams of one dataset. Streams are sorted by time.
struct DataBundle {
  std::vector<std::string> actors;  // registry, indexed by ActorId
  std::vector<GpsObservation> gps;
  std::vector<FrameRecord> frames;
  std::vector<FaceDetection> faces;
  std::optional<GeoOrigin> origin;
  double t_min = 0.0;
  double t_max = 0.0;
  std::size_t feature_dim = 0;

  std::size_t n_actors() const { return actors.size(); }
  std::optional<ActorId> find_actor(const std::string& name) const;
  std::vector<GpsObservation> gps_of(ActorId a) const;

  // Recomputes time support and sorts streams; throws DataError on
  // inconsistent feature dimensions or unknown actor indices.
  void finalize();

  bool operator==(const DataBundle&) const = default;
};

}  // namespace coact
