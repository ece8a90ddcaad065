#pragma once

#include "coactivity/stats.hpp"
#include "coactivity/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace coact {

// Prior bundle for one kind of collaborative activity.
struct ActivityType {
  std::string id;
  std::string label;
  stats::LogNormal span_prior{300.0, 0.01};    // seconds
  stats::LogNormal radius_prior{30.0, 0.03};   // meters
  stats::LogNormal participants_prior{2.0, 0.5};
  std::vector<double> feature_mean;
  std::vector<double> feature_var;
  double face_rate_participant_per_min = 1.0;
  double face_rate_nonparticipant_per_min = 0.05;
  double excursion_rate_per_s = 1.0;

  void validate() const;
};

enum class Overlap { kDisjoint, kMayOverlap, kContains };

// Relation between ordered pairs of activity types. contains(a, b) means an
// instance of type b that meets an instance of type a must lie inside its span.
class OverlapMatrix {
 public:
  OverlapMatrix() = default;
  explicit OverlapMatrix(std::size_t n_types, Overlap fill = Overlap::kMayOverlap);

  std::size_t size() const { return n_; }
  Overlap get(TypeId a, TypeId b) const;
  void set(TypeId a, TypeId b, Overlap rel);
  void validate() const;

 private:
  std::size_t n_ = 0;
  std::vector<Overlap> rel_;
};

// One hypothesized meeting: a spatio-temporal cylinder plus participants.
struct ActivityInstance {
  TypeId type;
  Vec2 center = Vec2::Zero();
  double radius = 1.0;
  double start = 0.0;
  double span = 1.0;
  std::vector<ActorId> participants;  // sorted, unique

  double end() const { return start + span; }
  bool has_participant(ActorId a) const;
  bool covers_time(double t) const { return t >= start && t <= end(); }
  bool covers(ActorId a, double t) const { return covers_time(t) && has_participant(a); }

  // Throws ContractError on r <= 0, span <= 0, fewer than two participants
  // or unsorted/duplicate participants.
  void validate() const;

  bool operator==(const ActivityInstance&) const = default;
};

// Positive-length temporal overlap and overlapping discs.
bool intersects(const ActivityInstance& a, const ActivityInstance& b);

// Whether the pair is allowed under `overlap`.
bool compatible(const ActivityInstance& a, const ActivityInstance& b,
                const OverlapMatrix& overlap);

struct Configuration {
  std::vector<ActivityInstance> instances;

  std::size_t size() const { return instances.size(); }
  bool empty() const { return instances.empty(); }
  bool operator==(const Configuration&) const = default;
};

bool satisfies_overlap(const Configuration& config, const OverlapMatrix& overlap);

struct FaceDetection {
  ActorId observer;
  double t = 0.0;
  std::optional<ActorId> detected;  // empty: unrecognized
  std::vector<double> scores;       // per-identity log-likelihoods, optional

  bool operator==(const FaceDetection&) const = default;
};

struct FrameRecord {
  ActorId actor;
  double t = 0.0;
  std::vector<double> features;
  int keypoint_count = 0;
  std::vector<FaceDetection> faces;

  bool operator==(const FrameRecord&) const = default;
};

struct ModelParams {
  double uncovered_penalty = 0.5;  // c_u
  std::vector<double> background_mean;
  std::vector<double> background_var;
  double sigma_aux_m = 10.0;
  // Prior weight of a non-participant identity in face correction; unset
  // means 0.01 / number of actors.
  std::optional<double> face_epsilon;

  void validate() const;
};

}  // namespace coact
