#pragma once

#include <Eigen/Core>

#include <compare>
#include <cstdint>
#include <functional>

namespace coact {

using Vec2 = Eigen::Vector2d;

// Index into the actor registry of a dataset.
struct ActorId {
  std::uint32_t value = 0;

  constexpr ActorId() = default;
  constexpr explicit ActorId(std::uint32_t v) : value(v) {}

  constexpr auto operator<=>(const ActorId&) const = default;
};

// Index into the configured list of activity types.
struct TypeId {
  std::uint32_t value = 0;

  constexpr TypeId() = default;
  constexpr explicit TypeId(std::uint32_t v) : value(v) {}

  constexpr auto operator<=>(const TypeId&) const = default;
};

}  // namespace coact

template <>
struct std::hash<coact::ActorId> {
  std::size_t operator()(const coact::ActorId& a) const noexcept {
    return std::hash<std::uint32_t>{}(a.value);
  }
};
