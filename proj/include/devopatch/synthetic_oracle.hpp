#pragma once

#include <array>
#include <atomic>
#include <memory>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include "devopatch/oracle.hpp"
#include "devopatch/patch.hpp"

namespace devopatch {

// Desk-scale stand-ins for a black-box model. All are pure functions of the image
// except ScriptedLabels, which replays a fixed label sequence.

struct ConstantLabel {
  Label label = 0;
};

/// Argmax over the four quadrant mean intensities (0 top-left, 1 top-right,
/// 2 bottom-left, 3 bottom-right); ties go to the lowest index.
struct QuadrantMax {};

/// inside_label iff at least `fraction` of the region's pixels have mean intensity > 0.5.
struct ThresholdCoverage {
  Candidate region;  // inclusive rectangle
  double fraction = 0.5;
  Label inside_label = 1;
  Label outside_label = 0;
};

/// Argmax channel mean of a 3-channel image; ties go to the lowest channel.
struct DominantChannel {};

struct ScriptedLabels {
  std::vector<Label> labels;
};

using SyntheticOracleSpec = std::variant<ConstantLabel, QuadrantMax, ThresholdCoverage, DominantChannel, ScriptedLabels>;

namespace detail {

inline double pixel_mean(const Image& x, int i, int j) {
  double s = 0.0;
  for (int c = 0; c < x.channels(); ++c) s += x.at(c, i, j);
  return s / x.channels();
}

inline Label quadrant_max(const Image& x) {
  if (x.height() < 2 || x.width() < 2) throw std::invalid_argument("quadrant oracle needs H, W >= 2");
  const int hh = x.height() / 2;
  const int hw = x.width() / 2;
  std::array<double, 4> sum{};
  std::array<long, 4> count{};
  for (int c = 0; c < x.channels(); ++c) {
    for (int i = 0; i < x.height(); ++i) {
      for (int j = 0; j < x.width(); ++j) {
        const int q = (i >= hh ? 2 : 0) + (j >= hw ? 1 : 0);
        sum[q] += x.at(c, i, j);
        ++count[q];
      }
    }
  }
  Label best = 0;
  double best_mean = sum[0] / count[0];
  for (int q = 1; q < 4; ++q) {
    const double m = sum[q] / count[q];
    if (m > best_mean) {
      best_mean = m;
      best = q;
    }
  }
  return best;
}

inline Label threshold_coverage(const ThresholdCoverage& spec, const Image& x) {
  const auto& r = spec.region;
  if (!(0 <= r.i1 && r.i1 <= r.i2 && r.i2 < x.height() && 0 <= r.j1 && r.j1 <= r.j2 && r.j2 < x.width())) {
    throw std::invalid_argument("coverage region outside image");
  }
  long bright = 0;
  for (long i = r.i1; i <= r.i2; ++i)
    for (long j = r.j1; j <= r.j2; ++j) bright += pixel_mean(x, static_cast<int>(i), static_cast<int>(j)) > 0.5 ? 1 : 0;
  const long total = (r.i2 - r.i1 + 1) * (r.j2 - r.j1 + 1);
  return static_cast<double>(bright) >= spec.fraction * static_cast<double>(total) ? spec.inside_label
                                                                                   : spec.outside_label;
}

inline Label dominant_channel(const Image& x) {
  if (x.channels() != 3) throw std::invalid_argument("dominant-channel oracle needs 3 channels");
  std::array<double, 3> sum{};
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < x.height(); ++i)
      for (int j = 0; j < x.width(); ++j) sum[c] += x.at(c, i, j);
  Label best = 0;
  for (int c = 1; c < 3; ++c)
    if (sum[c] > sum[best]) best = c;
  return best;
}

}  // namespace detail

class SyntheticOracle final : public LabelOracle {
 public:
  explicit SyntheticOracle(SyntheticOracleSpec spec, std::optional<Shape> shape = std::nullopt)
      : LabelOracle(shape), spec_(std::move(spec)) {
    if (const auto* s = std::get_if<ScriptedLabels>(&spec_); s && s->labels.empty()) {
      throw std::invalid_argument("scripted oracle needs at least one label");
    }
  }

  const SyntheticOracleSpec& spec() const { return spec_; }

  bool deterministic() const override { return !std::holds_alternative<ScriptedLabels>(spec_); }

 protected:
  Label do_classify(const Image& x) override {
    struct Visitor {
      SyntheticOracle& self;
      const Image& x;
      Label operator()(const ConstantLabel& s) const { return s.label; }
      Label operator()(const QuadrantMax&) const { return detail::quadrant_max(x); }
      Label operator()(const ThresholdCoverage& s) const { return detail::threshold_coverage(s, x); }
      Label operator()(const DominantChannel&) const { return detail::dominant_channel(x); }
      Label operator()(const ScriptedLabels& s) const {
        const auto k = self.script_pos_.fetch_add(1, std::memory_order_relaxed);
        return s.labels[k % s.labels.size()];
      }
    };
    return std::visit(Visitor{*this, x}, spec_);
  }

 private:
  SyntheticOracleSpec spec_;
  std::atomic<std::size_t> script_pos_{0};
};

inline std::unique_ptr<LabelOracle> make_synthetic_oracle(const SyntheticOracleSpec& spec,
                                                          std::optional<Shape> shape = std::nullopt) {
  return std::make_unique<SyntheticOracle>(spec, shape);
}

}  // namespace devopatch
