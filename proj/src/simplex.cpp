#include "crosslearn/simplex.hpp"

#include <algorithm>
#include <bit>
#include <numeric>

namespace crosslearn {

ActiveSet::ActiveSet(int num_arms, std::vector<int> members) : num_arms_(num_arms) {
  if (num_arms <= 0) throw std::invalid_argument("ActiveSet: arm count must be positive");
  if (members.empty()) throw std::invalid_argument("ActiveSet: active set is empty");
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  if (members.front() < 0 || members.back() >= num_arms)
    throw std::invalid_argument("ActiveSet: member outside [0, K)");
  members_ = std::make_shared<const std::vector<int>>(std::move(members));
}

ActiveSet ActiveSet::full(int num_arms) {
  std::vector<int> all(static_cast<std::size_t>(std::max(num_arms, 0)));
  std::iota(all.begin(), all.end(), 0);
  return ActiveSet(num_arms, std::move(all));
}

ActiveSet ActiveSet::from_mask(int num_arms, std::uint64_t mask) {
  if (num_arms > 64) throw std::invalid_argument("ActiveSet: mask form needs K <= 64");
  if (num_arms < 64 && (mask >> num_arms) != 0)
    throw std::invalid_argument("ActiveSet: mask has bits beyond K");
  std::vector<int> members;
  members.reserve(static_cast<std::size_t>(std::popcount(mask)));
  for (int k = 0; k < num_arms; ++k)
    if ((mask >> k) & 1ULL) members.push_back(k);
  return ActiveSet(num_arms, std::move(members));
}

bool ActiveSet::contains(ArmIndex arm) const {
  const int k = arm.value();
  if (k < 0 || k >= num_arms_) return false;
  if (is_full()) return true;
  return std::binary_search(members_->begin(), members_->end(), k);
}

std::uint64_t ActiveSet::mask() const {
  if (num_arms_ > 64) throw std::logic_error("ActiveSet: mask form needs K <= 64");
  std::uint64_t m = 0;
  for (int k : *members_) m |= 1ULL << k;
  return m;
}

ProbVector::ProbVector(Eigen::VectorXd weights, ActiveSet support)
    : weights_(std::move(weights)), support_(std::move(support)) {
  if (weights_.size() != support_.num_arms())
    throw std::invalid_argument("ProbVector: weight count does not match arm count");
  double total = 0.0;
  for (Eigen::Index k = 0; k < weights_.size(); ++k) {
    const double w = weights_[k];
    if (!std::isfinite(w) || w < 0.0) throw std::invalid_argument("ProbVector: invalid weight");
    if (w != 0.0 && !support_.contains(ArmIndex(static_cast<int>(k))))
      throw std::invalid_argument("ProbVector: mass outside support");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("ProbVector: weights do not sum to 1");
}

ProbVector ProbVector::uniform(const ActiveSet& support) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(support.num_arms());
  const double mass = 1.0 / static_cast<double>(support.size());
  for (int k : support.members()) w[k] = mass;
  return ProbVector(Trusted{}, std::move(w), support);
}

ProbVector ProbVector::point_mass(int num_arms, ArmIndex arm) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(num_arms);
  w[arm.value()] = 1.0;
  return ProbVector(std::move(w), ActiveSet(num_arms, {arm.value()}));
}

ArmIndex sample(const ProbVector& dist, RngStream& rng) {
  const double u = rng.uniform();
  const auto members = dist.support().members();
  double cumulative = 0.0;
  int last_positive = members.front();
  for (int k : members) {
    const double w = dist.weights()[k];
    if (w <= 0.0) continue;
    last_positive = k;
    cumulative += w;
    if (u < cumulative) return ArmIndex(k);
  }
  // Rounding left u above the accumulated mass.
  return ArmIndex(last_positive);
}

}  // namespace crosslearn
