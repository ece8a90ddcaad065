#include "coactivity/activity.hpp"

#include "coactivity/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace coact {

namespace {

void check_lognormal(const stats::LogNormal& ln, const std::string& what) {
  if (!(ln.median > 0.0) || !(ln.log_std > 0.0)) {
    throw ConfigError(what + ": median and log_std must be > 0");
  }
}

}  // namespace

void ActivityType::validate() const {
  check_lognormal(span_prior, "activity type '" + id + "' span prior");
  check_lognormal(radius_prior, "activity type '" + id + "' radius prior");
  check_lognormal(participants_prior, "activity type '" + id + "' participants prior");
  if (feature_mean.size() != feature_var.size()) {
    throw ConfigError("activity type '" + id + "': feature mean/var size mismatch");
  }
  for (double v : feature_var) {
    if (!(v > 0.0)) throw ConfigError("activity type '" + id + "': feature variance must be > 0");
  }
  if (!(face_rate_nonparticipant_per_min > 0.0) ||
      !(face_rate_participant_per_min > face_rate_nonparticipant_per_min)) {
    throw ConfigError("activity type '" + id +
                      "': need participant face rate > non-participant rate > 0");
  }
  if (!(excursion_rate_per_s >= 0.0)) {
    throw ConfigError("activity type '" + id + "': excursion rate must be >= 0");
  }
}

OverlapMatrix::OverlapMatrix(std::size_t n_types, Overlap fill)
    : n_(n_types), rel_(n_types * n_types, fill) {}

Overlap OverlapMatrix::get(TypeId a, TypeId b) const {
  if (a.value >= n_ || b.value >= n_) throw ContractError("overlap: type index out of range");
  return rel_[a.value * n_ + b.value];
}

void OverlapMatrix::set(TypeId a, TypeId b, Overlap rel) {
  if (a.value >= n_ || b.value >= n_) throw ContractError("overlap: type index out of range");
  rel_[a.value * n_ + b.value] = rel;
}

void OverlapMatrix::validate() const {
  for (std::uint32_t a = 0; a < n_; ++a) {
    for (std::uint32_t b = 0; b < n_; ++b) {
      if (get(TypeId(a), TypeId(b)) == Overlap::kContains &&
          get(TypeId(b), TypeId(a)) == Overlap::kDisjoint) {
        throw ConfigError("overlap: contains(a,b) conflicts with disjoint(b,a)");
      }
    }
  }
}

bool ActivityInstance::has_participant(ActorId a) const {
  return std::binary_search(participants.begin(), participants.end(), a);
}

void ActivityInstance::validate() const {
  if (!(radius > 0.0)) throw ContractError("activity radius must be > 0");
  if (!(span > 0.0)) throw ContractError("activity span must be > 0");
  if (!std::isfinite(start) || !center.allFinite()) {
    throw ContractError("activity start/center must be finite");
  }
  if (participants.size() < 2) throw ContractError("activity needs at least 2 participants");
  for (std::size_t i = 1; i < participants.size(); ++i) {
    if (!(participants[i - 1] < participants[i])) {
      throw ContractError("activity participants must be sorted and unique");
    }
  }
}

bool intersects(const ActivityInstance& a, const ActivityInstance& b) {
  const double overlap = std::min(a.end(), b.end()) - std::max(a.start, b.start);
  if (!(overlap > 0.0)) return false;
  return (a.center - b.center).norm() < a.radius + b.radius;
}

bool compatible(const ActivityInstance& a, const ActivityInstance& b,
                const OverlapMatrix& overlap) {
  if (!intersects(a, b)) return true;
  const Overlap ab = overlap.get(a.type, b.type);
  const Overlap ba = overlap.get(b.type, a.type);
  if (ab == Overlap::kDisjoint || ba == Overlap::kDisjoint) return false;
  const bool b_in_a = b.start >= a.start && b.end() <= a.end();
  const bool a_in_b = a.start >= b.start && a.end() <= b.end();
  if (ab == Overlap::kContains && ba == Overlap::kContains) return b_in_a || a_in_b;
  if (ab == Overlap::kContains) return b_in_a;
  if (ba == Overlap::kContains) return a_in_b;
  return true;
}

bool satisfies_overlap(const Configuration& config, const OverlapMatrix& overlap) {
  const auto& v = config.instances;
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (std::size_t j = i + 1; j < v.size(); ++j) {
      if (!compatible(v[i], v[j], overlap)) return false;
    }
  }
  return true;
}

void ModelParams::validate() const {
  if (!(uncovered_penalty >= 0.0)) throw ConfigError("uncovered penalty c_u must be >= 0");
  if (background_mean.size() != background_var.size()) {
    throw ConfigError("background feature mean/var size mismatch");
  }
  for (double v : background_var) {
    if (!(v > 0.0)) throw ConfigError("background feature variance must be > 0");
  }
  if (!(sigma_aux_m > 0.0)) throw ConfigError("sigma_aux must be > 0");
  if (face_epsilon && !(*face_epsilon > 0.0)) throw ConfigError("face epsilon must be > 0");
}

}  // namespace coact
