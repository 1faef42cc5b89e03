#pragma once

#include <cstddef>
#include <functional>
#include <string_view>

#include "crosslearn/accumulator.hpp"
#include "crosslearn/context.hpp"

namespace crosslearn {

/// Returns the full loss function l_{t,A}(.) of the arm just played.
using FeedbackChannel = std::function<LossFunction(ArmIndex)>;

/// A sequential bandit learner with cross-learning feedback. `step` is called
/// once per round, in order; it plays an arm and pulls that arm's feedback.
class Learner {
 public:
  virtual ~Learner() = default;
  virtual ArmIndex step(const Context& context, const FeedbackChannel& feedback) = 0;
  virtual std::string_view name() const = 0;
  /// Rounds that played the snapshot instead of the FTRL distribution.
  virtual std::size_t fallback_count() const { return 0; }
};

}  // namespace crosslearn
