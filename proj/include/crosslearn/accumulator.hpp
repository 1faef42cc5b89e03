#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string_view>

#include "crosslearn/context.hpp"
#include "crosslearn/simplex.hpp"

namespace crosslearn {

/// How a loss function (and the accumulator holding sums of them) is stored.
///   Tabular  - one value per finite context id.
///   Affine   - a + b * v for a real context v in [0, 1].
///   Constant - a single value, independent of the context.
enum class Representation { Tabular, Affine, Constant };

std::string_view to_string(Representation r);

/// A loss function l(c) in [0, 1] revealed for the played arm.
class LossFunction {
 public:
  static LossFunction tabular(Eigen::VectorXd values);
  static LossFunction affine(double intercept, double slope);
  static LossFunction constant(double value);

  Representation representation() const { return kind_; }
  double eval(const Context& context) const;

  /// Tabular values; empty for other representations.
  const Eigen::VectorXd& table() const { return table_; }
  /// Affine intercept, or the constant value.
  double intercept() const { return intercept_; }
  double slope() const { return slope_; }

  friend bool operator==(const LossFunction& a, const LossFunction& b) {
    return a.kind_ == b.kind_ && a.intercept_ == b.intercept_ && a.slope_ == b.slope_ &&
           a.table_.size() == b.table_.size() && a.table_ == b.table_;
  }

 private:
  LossFunction(Representation kind, Eigen::VectorXd table, double intercept, double slope)
      : kind_(kind), table_(std::move(table)), intercept_(intercept), slope_(slope) {}

  Representation kind_;
  Eigen::VectorXd table_;
  double intercept_ = 0.0;
  double slope_ = 0.0;
};

class SnapshotHandle;

/// Per-arm running sum of weighted loss functions, evaluable at any context.
///
/// Storage is a K x m matrix whose width depends only on the representation
/// (m = |C| for Tabular, 2 for Affine, 1 for Constant), so memory does not
/// grow with the number of adds. Sums are Kahan-compensated.
class Accumulator {
 public:
  static Accumulator tabular(int num_arms, int num_contexts);
  static Accumulator affine(int num_arms);
  static Accumulator constant(int num_arms);

  /// Adds weight * loss to `arm`. Requires matching representations.
  void add(ArmIndex arm, double weight, const LossFunction& loss);

  double eval(const Context& context, ArmIndex arm) const;
  /// Cumulative loss of every arm at `context`.
  Eigen::VectorXd eval(const Context& context) const;

  SnapshotHandle snapshot(double eta) const;

  Representation representation() const { return kind_; }
  int num_arms() const { return static_cast<int>(sum_.rows()); }
  std::uint64_t version() const { return version_; }
  const Eigen::MatrixXd& storage() const { return sum_; }

 private:
  Accumulator(Representation kind, int num_arms, int width);
  Eigen::Index column_of(const Context& context) const;

  Representation kind_;
  Eigen::MatrixXd sum_;
  Eigen::MatrixXd carry_;
  std::uint64_t version_ = 0;
};

/// Frozen copy of an accumulator plus a learning rate; evaluates to the FTRL
/// distribution of the frozen state. Later adds to the source do not affect it.
class SnapshotHandle {
 public:
  SnapshotHandle(Accumulator frozen, double eta) : frozen_(std::move(frozen)), eta_(eta) {}

  ProbVector eval(const Context& context) const;
  double eta() const { return eta_; }
  const Accumulator& frozen() const { return frozen_; }

 private:
  Accumulator frozen_;
  double eta_;
};

}  // namespace crosslearn
