#pragma once

#include <cmath>
#include <compare>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "devopatch/image.hpp"

namespace devopatch {

using Label = int;

enum class DistanceNorm { L0Pixels, L1, L2 };

inline std::string_view to_string(DistanceNorm n) {
  switch (n) {
    case DistanceNorm::L0Pixels: return "l0";
    case DistanceNorm::L1: return "l1";
    case DistanceNorm::L2: return "l2";
  }
  return "l0";
}

inline DistanceNorm parse_norm(std::string_view s) {
  if (s == "l0" || s == "L0" || s == "l0-pixels") return DistanceNorm::L0Pixels;
  if (s == "l1" || s == "L1") return DistanceNorm::L1;
  if (s == "l2" || s == "L2") return DistanceNorm::L2;
  throw std::invalid_argument("unknown norm '" + std::string(s) + "' (expected l0, l1 or l2)");
}

/// Number of pixel positions where any channel differs.
inline std::size_t changed_pixels(const Image& x, const Image& x_adv) {
  require_same_shape(x, x_adv);
  std::size_t n = 0;
  for (int i = 0; i < x.height(); ++i) {
    for (int j = 0; j < x.width(); ++j) {
      for (int c = 0; c < x.channels(); ++c) {
        if (x.at(c, i, j) != x_adv.at(c, i, j)) {
          ++n;
          break;
        }
      }
    }
  }
  return n;
}

inline double distance(const Image& x, const Image& x_adv, DistanceNorm norm) {
  require_same_shape(x, x_adv);
  if (norm == DistanceNorm::L0Pixels) return static_cast<double>(changed_pixels(x, x_adv));
  const auto a = x.data();
  const auto b = x_adv.data();
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
    acc += norm == DistanceNorm::L1 ? std::abs(d) : d * d;
  }
  return norm == DistanceNorm::L1 ? acc : std::sqrt(acc);
}

/// Nonnegative fitness value, or Infeasible which orders after every finite value.
class FitnessScore {
 public:
  static FitnessScore infeasible() { return FitnessScore(); }

  static FitnessScore finite(double v) {
    if (!(v >= 0.0) || std::isinf(v)) throw std::invalid_argument("fitness must be finite and nonnegative");
    return FitnessScore(v);
  }

  bool feasible() const { return value_.has_value(); }

  double value() const {
    if (!value_) throw std::logic_error("infeasible fitness has no value");
    return *value_;
  }

  friend std::weak_ordering operator<=>(const FitnessScore& a, const FitnessScore& b) {
    if (!a.feasible() && !b.feasible()) return std::weak_ordering::equivalent;
    if (!a.feasible()) return std::weak_ordering::greater;
    if (!b.feasible()) return std::weak_ordering::less;
    if (*a.value_ < *b.value_) return std::weak_ordering::less;
    if (*a.value_ > *b.value_) return std::weak_ordering::greater;
    return std::weak_ordering::equivalent;
  }

  friend bool operator==(const FitnessScore& a, const FitnessScore& b) { return (a <=> b) == 0; }

 private:
  FitnessScore() = default;
  explicit FitnessScore(double v) : value_(v) {}

  std::optional<double> value_;
};

/// Targeted: predicted == label. Untargeted: predicted != label (the ground truth).
class SuccessPredicate {
 public:
  enum class Mode { Targeted, Untargeted };

  static SuccessPredicate targeted(Label target) { return {Mode::Targeted, target}; }
  static SuccessPredicate untargeted(Label ground_truth) { return {Mode::Untargeted, ground_truth}; }

  Mode mode() const { return mode_; }
  Label label() const { return label_; }

  bool operator()(Label predicted) const {
    return mode_ == Mode::Targeted ? predicted == label_ : predicted != label_;
  }

 private:
  SuccessPredicate(Mode mode, Label label) : mode_(mode), label_(label) {}

  Mode mode_;
  Label label_;
};

inline FitnessScore fitness(const Image& x, const Image& x_adv, Label predicted, const SuccessPredicate& success,
                            DistanceNorm norm) {
  const double d = distance(x, x_adv, norm);
  return success(predicted) ? FitnessScore::finite(d) : FitnessScore::infeasible();
}

}  // namespace devopatch
