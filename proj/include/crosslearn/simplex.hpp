#pragma once

#include <Eigen/Core>

#include <cmath>
#include <compare>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "crosslearn/rng.hpp"

namespace crosslearn {

class ArmIndex {
 public:
  constexpr ArmIndex() = default;
  constexpr explicit ArmIndex(int k) : k_(k) {}
  constexpr int value() const { return k_; }
  friend constexpr auto operator<=>(const ArmIndex&, const ArmIndex&) = default;

 private:
  int k_ = 0;
};

/// Nonempty subset of the arms [0, K). Members are kept sorted; copies share
/// the member list.
class ActiveSet {
 public:
  ActiveSet(int num_arms, std::vector<int> members);

  static ActiveSet full(int num_arms);
  /// Arms whose bit is set in `mask`. Requires num_arms <= 64.
  static ActiveSet from_mask(int num_arms, std::uint64_t mask);

  int num_arms() const { return num_arms_; }
  std::size_t size() const { return members_->size(); }
  bool is_full() const { return static_cast<int>(members_->size()) == num_arms_; }
  std::span<const int> members() const { return *members_; }
  bool contains(ArmIndex arm) const;
  /// Bitmask of members; requires num_arms <= 64.
  std::uint64_t mask() const;

  friend bool operator==(const ActiveSet& a, const ActiveSet& b) {
    return a.num_arms_ == b.num_arms_ && *a.members_ == *b.members_;
  }

 private:
  int num_arms_;
  std::shared_ptr<const std::vector<int>> members_;
};

/// Distribution over K arms supported on an ActiveSet. Weights sum to one
/// within 1e-12 and are exactly zero off the support.
class ProbVector {
 public:
  ProbVector(Eigen::VectorXd weights, ActiveSet support);

  static ProbVector uniform(const ActiveSet& support);
  static ProbVector point_mass(int num_arms, ArmIndex arm);

  const Eigen::VectorXd& weights() const { return weights_; }
  const ActiveSet& support() const { return support_; }
  int num_arms() const { return static_cast<int>(weights_.size()); }
  double operator[](ArmIndex arm) const { return weights_[arm.value()]; }

 private:
  struct Trusted {};
  ProbVector(Trusted, Eigen::VectorXd weights, ActiveSet support)
      : weights_(std::move(weights)), support_(std::move(support)) {}

  template <typename Derived>
  friend ProbVector ftrl_distribution(const Eigen::MatrixBase<Derived>& cum_loss, double eta,
                                      const ActiveSet& active);

  Eigen::VectorXd weights_;
  ActiveSet support_;
};

/// Entropy-regularized FTRL over the active arms:
///   argmin_x <x, cum_loss> - eta^{-1} sum_i x_i log x_i,
/// i.e. exponential weights exp(-eta * cum_loss_k) normalized over `active`.
/// The exponent is shifted by the minimum active loss so no finite input
/// overflows.
template <typename Derived>
ProbVector ftrl_distribution(const Eigen::MatrixBase<Derived>& cum_loss, double eta,
                             const ActiveSet& active) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw std::invalid_argument("ftrl: eta must be positive");
  if (cum_loss.size() != active.num_arms())
    throw std::invalid_argument("ftrl: loss vector size does not match arm count");
  if (!cum_loss.allFinite()) throw std::invalid_argument("ftrl: cumulative loss is not finite");

  const auto members = active.members();
  double lowest = cum_loss(members[0]);
  for (int k : members) lowest = std::min(lowest, static_cast<double>(cum_loss(k)));

  Eigen::VectorXd w = Eigen::VectorXd::Zero(active.num_arms());
  double total = 0.0;
  for (int k : members) {
    w[k] = std::exp(-eta * (cum_loss(k) - lowest));
    total += w[k];
  }
  w /= total;
  return ProbVector(ProbVector::Trusted{}, std::move(w), active);
}

/// Draws an arm with probability equal to its weight; never leaves the support.
ArmIndex sample(const ProbVector& dist, RngStream& rng);

}  // namespace crosslearn
