#pragma once

#include <cstdint>

#include "crosslearn/simplex.hpp"

namespace crosslearn {

/// A round's context. Finite context sets use `id`; the auction uses the
/// real-valued `value`. `active` is the set of arms playable in it.
struct Context {
  std::uint64_t id = 0;
  double value = 0.0;
  ActiveSet active;

  static Context finite(std::uint64_t id, ActiveSet active) { return {id, 0.0, std::move(active)}; }
  static Context continuous(double value, ActiveSet active) { return {0, value, std::move(active)}; }
};

}  // namespace crosslearn
