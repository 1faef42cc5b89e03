#include "crosslearn/accumulator.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace crosslearn {

namespace {

constexpr double kRangeSlack = 1e-12;

bool in_unit_range(double x) { return x >= -kRangeSlack && x <= 1.0 + kRangeSlack; }

}  // namespace

std::string_view to_string(Representation r) {
  switch (r) {
    case Representation::Tabular: return "tabular";
    case Representation::Affine: return "affine";
    case Representation::Constant: return "constant";
  }
  return "unknown";
}

LossFunction LossFunction::tabular(Eigen::VectorXd values) {
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (!in_unit_range(values[i])) throw std::invalid_argument("LossFunction: tabular value outside [0,1]");
  return LossFunction(Representation::Tabular, std::move(values), 0.0, 0.0);
}

LossFunction LossFunction::affine(double intercept, double slope) {
  if (!in_unit_range(intercept) || !in_unit_range(intercept + slope))
    throw std::invalid_argument("LossFunction: affine loss leaves [0,1] on v in [0,1]");
  return LossFunction(Representation::Affine, {}, intercept, slope);
}

LossFunction LossFunction::constant(double value) {
  if (!in_unit_range(value)) throw std::invalid_argument("LossFunction: constant outside [0,1]");
  return LossFunction(Representation::Constant, {}, value, 0.0);
}

double LossFunction::eval(const Context& context) const {
  switch (kind_) {
    case Representation::Tabular:
      if (context.id >= static_cast<std::uint64_t>(table_.size()))
        throw std::out_of_range("LossFunction: unknown context id");
      return table_[static_cast<Eigen::Index>(context.id)];
    case Representation::Affine: return intercept_ + slope_ * context.value;
    case Representation::Constant: return intercept_;
  }
  return 0.0;
}

Accumulator::Accumulator(Representation kind, int num_arms, int width)
    : kind_(kind),
      sum_(Eigen::MatrixXd::Zero(num_arms, width)),
      carry_(Eigen::MatrixXd::Zero(num_arms, width)) {
  if (num_arms <= 0 || width <= 0) throw std::invalid_argument("Accumulator: empty shape");
}

Accumulator Accumulator::tabular(int num_arms, int num_contexts) {
  return Accumulator(Representation::Tabular, num_arms, num_contexts);
}
Accumulator Accumulator::affine(int num_arms) { return Accumulator(Representation::Affine, num_arms, 2); }
Accumulator Accumulator::constant(int num_arms) {
  return Accumulator(Representation::Constant, num_arms, 1);
}

void Accumulator::add(ArmIndex arm, double weight, const LossFunction& loss) {
  if (loss.representation() != kind_)
    throw std::invalid_argument(std::string("Accumulator: cannot add ") +
                                std::string(to_string(loss.representation())) + " loss to " +
                                std::string(to_string(kind_)) + " accumulator");
  if (!std::isfinite(weight) || weight < 0.0) throw std::invalid_argument("Accumulator: invalid weight");
  const int k = arm.value();
  if (k < 0 || k >= num_arms()) throw std::out_of_range("Accumulator: arm out of range");

  auto kahan = [this, k](Eigen::Index j, double term) {
    const double y = term - carry_(k, j);
    const double t = sum_(k, j) + y;
    carry_(k, j) = (t - sum_(k, j)) - y;
    sum_(k, j) = t;
  };

  switch (kind_) {
    case Representation::Tabular: {
      const auto& table = loss.table();
      if (table.size() != sum_.cols()) throw std::invalid_argument("Accumulator: tabular width mismatch");
      for (Eigen::Index j = 0; j < table.size(); ++j) kahan(j, weight * table[j]);
      break;
    }
    case Representation::Affine:
      kahan(0, weight * loss.intercept());
      kahan(1, weight * loss.slope());
      break;
    case Representation::Constant: kahan(0, weight * loss.intercept()); break;
  }
  ++version_;
}

Eigen::Index Accumulator::column_of(const Context& context) const {
  if (context.id >= static_cast<std::uint64_t>(sum_.cols()))
    throw std::out_of_range("Accumulator: unknown context id");
  return static_cast<Eigen::Index>(context.id);
}

double Accumulator::eval(const Context& context, ArmIndex arm) const {
  const int k = arm.value();
  switch (kind_) {
    case Representation::Tabular: {
      const auto j = column_of(context);
      return sum_(k, j) - carry_(k, j);
    }
    case Representation::Affine:
      return (sum_(k, 0) - carry_(k, 0)) + (sum_(k, 1) - carry_(k, 1)) * context.value;
    case Representation::Constant: return sum_(k, 0) - carry_(k, 0);
  }
  return 0.0;
}

Eigen::VectorXd Accumulator::eval(const Context& context) const {
  switch (kind_) {
    case Representation::Tabular: {
      const auto j = column_of(context);
      return sum_.col(j) - carry_.col(j);
    }
    case Representation::Affine:
      return (sum_.col(0) - carry_.col(0)) + (sum_.col(1) - carry_.col(1)) * context.value;
    case Representation::Constant: return sum_.col(0) - carry_.col(0);
  }
  return {};
}

SnapshotHandle Accumulator::snapshot(double eta) const { return SnapshotHandle(*this, eta); }

ProbVector SnapshotHandle::eval(const Context& context) const {
  return ftrl_distribution(frozen_.eval(context), eta_, context.active);
}

}  // namespace crosslearn
