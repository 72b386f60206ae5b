#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "devopatch/fitness.hpp"
#include "devopatch/image.hpp"
#include "devopatch/oracle.hpp"
#include "devopatch/patch.hpp"

namespace devopatch {

/// Failed initialization attempts for one slot before the margins collapse to 1.
inline constexpr int kMarginCollapseAfter = 10;
/// Attempts allowed with collapsed margins before a slot is declared unfillable.
inline constexpr int kMaxAttemptsAfterCollapse = 200;

struct EngineConfig {
  int population_size = 10;
  double initialization_rate = 0.35;
  int mutation_rate = 1;
  long query_budget = 10000;
  std::uint64_t seed = 0;
  DistanceNorm norm = DistanceNorm::L0Pixels;

  void validate() const {
    if (population_size < 3) throw std::invalid_argument("population_size must be >= 3");
    if (!(initialization_rate > 0.0 && initialization_rate <= 0.5))
      throw std::invalid_argument("initialization_rate must lie in (0, 0.5]");
    if (mutation_rate < 1) throw std::invalid_argument("mutation_rate must be a positive integer");
    if (query_budget < 0) throw std::invalid_argument("query_budget must be >= 0");
  }

  void validate_for(const Shape& shape) const;
};

struct Margins {
  long height = 0;
  long width = 0;
};

/// ⌊H·μ⌋ and ⌊W·μ⌋. The epsilon absorbs binary representation error in μ (e.g. 20·0.35).
inline Margins initialization_margins(int h, int w, double mu) {
  return {static_cast<long>(std::floor(h * mu + 1e-9)), static_cast<long>(std::floor(w * mu + 1e-9))};
}

inline void EngineConfig::validate_for(const Shape& shape) const {
  validate();
  if (shape.height < 2 || shape.width < 2) throw std::invalid_argument("image must be at least 2x2");
  const auto m = initialization_margins(shape.height, shape.width, initialization_rate);
  if (m.height < 1 || m.width < 1)
    throw std::invalid_argument("initialization_rate too small for a " + to_string(shape) + " image");
}

class InitializationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Population {
  std::vector<Candidate> candidates;
  std::vector<FitnessScore> scores;
  std::size_t best_index = 0;
  std::size_t worst_index = 0;

  std::size_t size() const { return candidates.size(); }

  /// Recomputes best/worst; ties go to the lowest index.
  void refresh() {
    best_index = worst_index = 0;
    for (std::size_t k = 1; k < scores.size(); ++k) {
      if (scores[k] < scores[best_index]) best_index = k;
      if (scores[k] > scores[worst_index]) worst_index = k;
    }
  }

  const Candidate& best() const { return candidates.at(best_index); }
  const FitnessScore& best_score() const { return scores.at(best_index); }
  const FitnessScore& worst_score() const { return scores.at(worst_index); }
};

struct TraceRecord {
  std::size_t query_index = 0;  // 1-based, initialization queries included
  FitnessScore best_score = FitnessScore::infeasible();
  std::optional<Candidate> best_candidate;
  /// Smallest perturbed-pixel count among feasible queries so far.
  std::optional<std::size_t> min_area_pixels;
};

struct AttackTrace {
  std::vector<TraceRecord> records;
  std::size_t total_queries = 0;
  std::size_t init_queries = 0;
  std::size_t queries_to_best = 0;
  std::size_t setup_queries = 0;
  /// False when the oracle may answer the same image differently; admitted candidates
  /// were then only known feasible at the time they were queried.
  bool oracle_deterministic = true;
};

struct AttackResult {
  Image adversarial;
  Candidate candidate;
  FitnessScore score = FitnessScore::infeasible();
  std::size_t perturbed_pixels = 0;
  Population population;
  AttackTrace trace;
};

inline Candidate mutate(const Candidate& best, const Candidate& v_j, const Candidate& v_q, long gamma) {
  return best + gamma * (v_j - v_q);
}

/// Adds independent uniform noise from {-1, 0, 1} to each coordinate, one draw per component.
template <class Rng>
Candidate crossover(const Candidate& v_r, Rng& rng) {
  std::uniform_int_distribution<long> noise(-1, 1);
  Candidate out = v_r;
  out.i1 += noise(rng);
  out.j1 += noise(rng);
  out.i2 += noise(rng);
  out.j2 += noise(rng);
  return out;
}

/// Clamps into the image and separates coincident or crossed key-points.
/// Output always satisfies 0 <= i1 < i2 < h and 0 <= j1 < j2 < w.
inline Candidate repair(const Candidate& c, int h, int w) {
  auto fix_axis = [](long lo, long hi, long extent) {
    lo = std::clamp(lo, 0L, extent - 2);
    hi = std::clamp(hi, 1L, extent - 1);
    if (lo >= hi) hi = lo + 1;  // lo <= extent - 2, so hi stays in range
    return std::pair{lo, hi};
  };
  const auto [i1, i2] = fix_axis(c.i1, c.i2, h);
  const auto [j1, j2] = fix_axis(c.j1, c.j2, w);
  return {i1, j1, i2, j2};
}

template <class Rng>
Candidate sample_initial_candidate(int h, int w, Margins m, Rng& rng) {
  std::uniform_int_distribution<long> top(0, m.height - 1);
  std::uniform_int_distribution<long> bottom(h - m.height, h - 1);
  std::uniform_int_distribution<long> left(0, m.width - 1);
  std::uniform_int_distribution<long> right(w - m.width, w - 1);
  Candidate c;
  c.i1 = top(rng);
  c.i2 = bottom(rng);
  c.j1 = left(rng);
  c.j2 = right(rng);
  return c;
}

/// Integer-domain differential evolution over paired key-points.
///
/// Every oracle query goes through evaluate(), which patches the source with the target
/// image under the candidate's mask, quantizes to 8 bits, queries, scores and appends a
/// trace record. The trace survives a thrown OracleFailure.
template <label_oracle Oracle>
class Attack {
 public:
  Attack(Oracle& oracle, Image source, Image target, SuccessPredicate success, EngineConfig cfg)
      : oracle_(oracle),
        source_(std::move(source).quantized()),
        target_(std::move(target).quantized()),
        success_(success),
        cfg_(cfg),
        rng_(cfg.seed) {
    require_same_shape(source_, target_);
    cfg_.validate_for(source_.shape());
    if constexpr (requires { oracle.deterministic(); }) trace_.oracle_deterministic = oracle.deterministic();
  }

  /// Two bookkeeping queries: the source must be labelled `ground_truth` and the target
  /// image must already satisfy the success predicate.
  void verify_preconditions(Label ground_truth) {
    const Label source_label = oracle_.classify(source_);
    ++trace_.setup_queries;
    if (source_label != ground_truth) {
      throw InitializationFailure("source image classified as " + std::to_string(source_label) + ", expected " +
                                  std::to_string(ground_truth));
    }
    const Label target_label = oracle_.classify(target_);
    ++trace_.setup_queries;
    if (!success_(target_label)) {
      throw InitializationFailure("target image classified as " + std::to_string(target_label) +
                                  ", which does not satisfy the attack goal");
    }
  }

  Population initialize() {
    const int h = source_.height();
    const int w = source_.width();
    const auto full = initialization_margins(h, w, cfg_.initialization_rate);
    Population pop;
    for (int slot = 0; slot < cfg_.population_size; ++slot) {
      Margins m = full;
      int failures = 0;
      bool collapsed = false;
      int collapsed_attempts = 0;
      FitnessScore slot_score = FitnessScore::infeasible();
      while (true) {
        if (collapsed && ++collapsed_attempts > kMaxAttemptsAfterCollapse) {
          throw InitializationFailure("could not fill population slot " + std::to_string(slot) + " after " +
                                      std::to_string(failures) + " attempts");
        }
        const Candidate v = sample_initial_candidate(h, w, m, rng_);
        const auto score = evaluate(v);
        ++trace_.init_queries;
        if (score.feasible() && score < slot_score) {
          pop.candidates.push_back(v);
          pop.scores.push_back(score);
          pop.refresh();
          record(pop);
          break;
        }
        record(pop);
        if (failures > kMarginCollapseAfter) {
          m = Margins{1, 1};
          collapsed = true;
        }
        ++failures;
      }
    }
    return pop;
  }

  /// One mutation/crossover/repair/query/selection iteration.
  void step(Population& pop) {
    const auto [j, q] = sample_pair(pop);
    Candidate child = mutate(pop.best(), pop.candidates[j], pop.candidates[q], cfg_.mutation_rate);
    child = crossover(child, rng_);
    child = repair(child, source_.height(), source_.width());
    const auto score = evaluate(child);
    if (score < pop.worst_score()) {
      pop.candidates[pop.worst_index] = child;
      pop.scores[pop.worst_index] = score;
      pop.refresh();
    }
    record(pop);
  }

  AttackResult search() {
    Population pop = initialize();
    for (long it = 0; it < cfg_.query_budget; ++it) step(pop);

    AttackResult result;
    result.candidate = pop.best();
    result.score = pop.best_score();
    result.adversarial = patched(result.candidate);
    result.perturbed_pixels = changed_pixels(source_, result.adversarial);
    for (const auto& r : trace_.records) {
      if (r.best_score == result.score) {
        trace_.queries_to_best = r.query_index;
        break;
      }
    }
    result.population = std::move(pop);
    result.trace = trace_;
    return result;
  }

  AttackResult run(Label ground_truth) {
    verify_preconditions(ground_truth);
    return search();
  }

  const AttackTrace& trace() const { return trace_; }
  const Image& source() const { return source_; }
  const Image& target() const { return target_; }

  /// Source with the candidate's rectangle copied from the target. Both inputs are held
  /// quantized to 8 bits, so the result is too.
  Image patched(const Candidate& c) const {
    return apply_patch(source_, target_, make_mask(c, source_.height(), source_.width()));
  }

 private:
  FitnessScore evaluate(const Candidate& c) {
    const Image adv = patched(c);
    const Label predicted = oracle_.classify(adv);
    ++trace_.total_queries;
    const auto score = fitness(source_, adv, predicted, success_, cfg_.norm);
    if (score.feasible()) {
      const auto area = changed_pixels(source_, adv);
      if (!min_area_ || area < *min_area_) min_area_ = area;
    }
    return score;
  }

  void record(const Population& pop) {
    TraceRecord r;
    r.query_index = trace_.total_queries;
    if (pop.size() > 0) {
      r.best_score = pop.best_score();
      r.best_candidate = pop.best();
    }
    r.min_area_pixels = min_area_;
    trace_.records.push_back(r);
  }

  /// Two distinct members other than the best, uniformly without replacement.
  std::pair<std::size_t, std::size_t> sample_pair(const Population& pop) {
    const auto others = static_cast<long>(pop.size()) - 1;
    std::uniform_int_distribution<long> first(0, others - 1);
    std::uniform_int_distribution<long> second(0, others - 2);
    long a = first(rng_);
    long b = second(rng_);
    if (b >= a) ++b;
    auto skip_best = [&](long k) {
      auto idx = static_cast<std::size_t>(k);
      return idx >= pop.best_index ? idx + 1 : idx;
    };
    return {skip_best(a), skip_best(b)};
  }

  Oracle& oracle_;
  Image source_;
  Image target_;
  SuccessPredicate success_;
  EngineConfig cfg_;
  std::mt19937_64 rng_;
  AttackTrace trace_;
  std::optional<std::size_t> min_area_;
};

struct InitResult {
  Population population;
  std::size_t queries_used = 0;
};

template <label_oracle Oracle>
InitResult init_population(Oracle& oracle, const Image& x, const Image& x_t, SuccessPredicate success,
                           const EngineConfig& cfg) {
  Attack<Oracle> attack(oracle, x, x_t, success, cfg);
  InitResult r;
  r.population = attack.initialize();
  r.queries_used = attack.trace().total_queries;
  return r;
}

template <label_oracle Oracle>
AttackResult run_attack(Oracle& oracle, const Image& x, Label y, const Image& x_t, SuccessPredicate success,
                        const EngineConfig& cfg) {
  Attack<Oracle> attack(oracle, x, x_t, success, cfg);
  return attack.run(y);
}

}  // namespace devopatch
