#pragma once

#include <json.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "devopatch/config.hpp"
#include "devopatch/engine.hpp"
#include "devopatch/image_io.hpp"
#include "devopatch/metrics.hpp"

namespace devopatch {

/// One source/target pair already decoded.
struct AttackPair {
  std::string id;
  Image source;
  Label label = 0;
  Image target;
  std::optional<Label> target_label;  // absent in untargeted mode
};

struct PairOutcome {
  ImageRecord record;
  std::optional<AttackResult> result;
  AttackTrace trace;  // complete on success, partial on failure
};

inline SuccessPredicate make_predicate(AttackMode mode, Label ground_truth, std::optional<Label> target_label) {
  if (mode == AttackMode::Untargeted) return SuccessPredicate::untargeted(ground_truth);
  if (!target_label) throw std::invalid_argument("targeted attack needs a target label");
  return SuccessPredicate::targeted(*target_label);
}

/// Runs one attack and folds every failure class into the record.
inline PairOutcome attack_pair(LabelOracle& oracle, const AttackPair& pair, AttackMode mode, const EngineConfig& cfg) {
  PairOutcome out;
  auto& rec = out.record;
  rec.id = pair.id;
  rec.query_budget = cfg.query_budget;
  rec.height = pair.source.height();
  rec.width = pair.source.width();
  std::optional<Attack<LabelOracle>> attack;
  try {
    attack.emplace(oracle, pair.source, pair.target, make_predicate(mode, pair.label, pair.target_label), cfg);
    auto result = attack->run(pair.label);
    rec.status = RecordStatus::Success;
    rec.final_area_pixels = result.perturbed_pixels;
    rec.final_area_percent = area_percent(result.perturbed_pixels, rec.height, rec.width);
    rec.candidate = result.candidate;
    out.trace = result.trace;
    out.result = std::move(result);
  } catch (const InitializationFailure& e) {
    rec.status = RecordStatus::InitializationFailure;
    rec.message = e.what();
  } catch (const OracleFailure& e) {
    rec.status = RecordStatus::OracleFailure;
    rec.message = std::string(to_string(e.kind())) + ": " + e.what();
  } catch (const std::exception& e) {
    rec.status = RecordStatus::Error;
    rec.message = e.what();
  }
  if (!out.result && attack) out.trace = attack->trace();
  rec.queries_to_best = out.trace.queries_to_best;
  rec.total_queries = out.trace.total_queries;
  rec.setup_queries = out.trace.setup_queries;
  return out;
}

using OracleFactory = std::function<std::unique_ptr<LabelOracle>()>;

/// Attacks every pair, `workers` at a time; each worker owns an oracle from the factory.
/// Pair k runs with seed cfg.seed + seed_offsets[k] (default k), so results do not depend
/// on scheduling.
inline std::vector<PairOutcome> run_batch(const std::vector<AttackPair>& pairs, AttackMode mode, const EngineConfig& cfg,
                                          const OracleFactory& make, int workers = 1,
                                          std::span<const std::size_t> seed_offsets = {}) {
  if (!seed_offsets.empty() && seed_offsets.size() != pairs.size())
    throw std::invalid_argument("one seed offset per pair required");
  std::vector<PairOutcome> outcomes(pairs.size());
  const int n_workers = std::max(1, std::min<int>(workers, static_cast<int>(pairs.size())));
  std::vector<std::unique_ptr<LabelOracle>> oracles;
  for (int w = 0; w < n_workers; ++w) oracles.push_back(make());

  std::atomic<std::size_t> next{0};
  auto work = [&](LabelOracle& oracle) {
    for (std::size_t k = next++; k < pairs.size(); k = next++) {
      EngineConfig pair_cfg = cfg;
      pair_cfg.seed = cfg.seed + (seed_offsets.empty() ? k : seed_offsets[k]);
      outcomes[k] = attack_pair(oracle, pairs[k], mode, pair_cfg);
    }
  };
  if (n_workers == 1) {
    work(*oracles.front());
  } else {
    std::vector<std::jthread> threads;
    for (int w = 0; w < n_workers; ++w) threads.emplace_back(work, std::ref(*oracles[w]));
  }
  return outcomes;
}

inline nlohmann::json trace_summary_json(const PairOutcome& o) {
  nlohmann::json j = o.record;
  j["init_queries"] = o.trace.init_queries;
  j["oracle_deterministic"] = o.trace.oracle_deterministic;
  return j;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

/// images/{id}.json, curves/{id}.csv and adversarial/{id}.png under `dir`.
inline void persist_outcome(const std::filesystem::path& dir, const PairOutcome& o) {
  write_text(dir / "images" / (o.record.id + ".json"), trace_summary_json(o).dump(2) + "\n");
  write_text(dir / "curves" / (o.record.id + ".csv"), convergence_csv(o.trace, o.record.height, o.record.width));
  if (o.result) save_image(dir / "adversarial" / (o.record.id + ".png"), o.result->adversarial);
}

/// Reads every images/*.json under `dir`, ordered by file name.
inline std::vector<ImageRecord> load_records(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir / "images"))
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<ImageRecord> records;
  for (const auto& f : files) {
    std::ifstream in(f);
    records.push_back(nlohmann::json::parse(in).get<ImageRecord>());
  }
  return records;
}

struct ExperimentSpec {
  RunConfig config;
  std::filesystem::path output_dir;
};

struct ExperimentResult {
  ExperimentReport report;
  std::vector<ImageRecord> records;
};

/// Decodes each pair, attacks the ones that load, persists per-image artifacts and
/// report.json. Oracle construction failures propagate; per-image failures are recorded.
inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
  const auto& cfg = spec.config;
  if (cfg.pairs.empty()) throw std::invalid_argument("experiment has no pairs");
  cfg.engine.validate();
  const OracleFactory factory = [&] { return make_oracle(cfg.oracle); };

  std::vector<AttackPair> loaded;
  std::vector<std::size_t> loaded_index;
  std::vector<std::optional<ImageRecord>> load_errors(cfg.pairs.size());
  for (std::size_t k = 0; k < cfg.pairs.size(); ++k) {
    const auto& p = cfg.pairs[k];
    try {
      AttackPair ap{p.id, load_image(p.source), *p.label, load_image(p.target), p.target_label};
      require_same_shape(ap.source, ap.target);
      loaded.push_back(std::move(ap));
      loaded_index.push_back(k);
    } catch (const std::exception& e) {
      ImageRecord rec;
      rec.id = p.id;
      rec.status = RecordStatus::Error;
      rec.query_budget = cfg.engine.query_budget;
      rec.message = e.what();
      load_errors[k] = rec;
    }
  }

  // Seeds follow each pair's position in the config, not its position among loaded pairs.
  std::vector<PairOutcome> outcomes;
  if (!loaded.empty()) outcomes = run_batch(loaded, cfg.mode, cfg.engine, factory, cfg.workers, loaded_index);

  ExperimentResult result;
  std::size_t next_loaded = 0;
  for (std::size_t k = 0; k < cfg.pairs.size(); ++k) {
    if (load_errors[k]) {
      persist_outcome(spec.output_dir, PairOutcome{*load_errors[k], std::nullopt, {}});
      result.records.push_back(*load_errors[k]);
    } else {
      const auto& o = outcomes[next_loaded++];
      persist_outcome(spec.output_dir, o);
      result.records.push_back(o.record);
    }
  }
  result.report = aggregate(result.records);
  write_text(spec.output_dir / "report.json", report_json(result.report, config_echo(cfg)).dump(2) + "\n");
  return result;
}

}  // namespace devopatch
