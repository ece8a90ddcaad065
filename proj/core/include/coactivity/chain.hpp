#pragma once

#include "coactivity/activity.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace coact {

enum class MoveKind {
  kBirth,
  kDeath,
  kSplit,
  kMerge,
  kType,
  kCenter,
  kRadius,
  kSpan,
  kStartTime,
  kParticipants,
};

inline constexpr std::size_t kMoveKindCount = 10;

inline constexpr std::array<MoveKind, kMoveKindCount> kAllMoveKinds = {
    MoveKind::kBirth,  MoveKind::kDeath,  MoveKind::kSplit,     MoveKind::kMerge,
    MoveKind::kType,   MoveKind::kCenter, MoveKind::kRadius,    MoveKind::kSpan,
    MoveKind::kStartTime, MoveKind::kParticipants};

std::string_view to_string(MoveKind kind);
std::optional<MoveKind> parse_move_kind(std::string_view name);

struct MoveStats {
  std::int64_t proposed = 0;
  std::int64_t accepted = 0;
  std::int64_t auto_rejected = 0;

  double acceptance_rate() const {
    return proposed > 0 ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0;
  }
  bool operator==(const MoveStats&) const = default;
};

struct ChainSample {
  std::int64_t iteration = 0;
  double log_score = 0.0;
  Configuration config;

  bool operator==(const ChainSample&) const = default;
};

// Post-burn-in configuration samples of one chain.
struct ChainSamples {
  std::vector<ChainSample> samples;
  std::array<MoveStats, kMoveKindCount> stats{};
  std::uint64_t seed = 0;
  std::int64_t burn_in = 0;
  std::int64_t n_iters = 0;
  std::int64_t numerical_warnings = 0;

  bool empty() const { return samples.empty(); }
  std::vector<Configuration> configurations() const;
  // Sample with the highest log score (first on ties). Requires non-empty.
  const ChainSample& best() const;
  // Kinds that were proposed but never accepted over the run.
  std::vector<MoveKind> stalled_kinds(std::span<const double> weights) const;

  bool operator==(const ChainSamples&) const = default;
};

}  // namespace coact
