#pragma once

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cstdio>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "devopatch/engine.hpp"

namespace devopatch {

inline double area_percent(std::size_t area_pixels, int h, int w) {
  if (h <= 0 || w <= 0) throw std::invalid_argument("area_percent needs a nonempty image");
  return 100.0 * static_cast<double>(area_pixels) / (static_cast<double>(h) * static_cast<double>(w));
}

enum class RecordStatus { Success, InitializationFailure, OracleFailure, Error };

inline std::string to_string(RecordStatus s) {
  switch (s) {
    case RecordStatus::Success: return "success";
    case RecordStatus::InitializationFailure: return "initialization_failure";
    case RecordStatus::OracleFailure: return "oracle_failure";
    case RecordStatus::Error: return "error";
  }
  return "error";
}

inline RecordStatus parse_record_status(const std::string& s) {
  if (s == "success") return RecordStatus::Success;
  if (s == "initialization_failure") return RecordStatus::InitializationFailure;
  if (s == "oracle_failure") return RecordStatus::OracleFailure;
  if (s == "error") return RecordStatus::Error;
  throw std::invalid_argument("unknown record status '" + s + "'");
}

/// Outcome of one attacked image, persisted as images/{id}.json.
struct ImageRecord {
  std::string id;
  RecordStatus status = RecordStatus::Error;
  std::size_t final_area_pixels = 0;  // perturbed pixels of the returned adversarial
  double final_area_percent = 0.0;
  std::size_t queries_to_best = 0;
  std::size_t total_queries = 0;
  std::size_t setup_queries = 0;
  long query_budget = 0;
  std::optional<Candidate> candidate;
  int height = 0;
  int width = 0;
  std::string message;

  bool success() const { return status == RecordStatus::Success; }
};

inline void to_json(nlohmann::json& j, const ImageRecord& r) {
  j = nlohmann::json{{"id", r.id},
                     {"status", to_string(r.status)},
                     {"success", r.success()},
                     {"final_area_pixels", r.final_area_pixels},
                     {"final_area_percent", r.final_area_percent},
                     {"queries_to_best", r.queries_to_best},
                     {"total_queries", r.total_queries},
                     {"setup_queries", r.setup_queries},
                     {"query_budget", r.query_budget},
                     {"height", r.height},
                     {"width", r.width}};
  j["candidate"] = r.candidate ? nlohmann::json(r.candidate->as_array()) : nlohmann::json(nullptr);
  if (!r.message.empty()) j["message"] = r.message;
}

inline void from_json(const nlohmann::json& j, ImageRecord& r) {
  r.id = j.at("id").get<std::string>();
  r.status = parse_record_status(j.at("status").get<std::string>());
  r.final_area_pixels = j.at("final_area_pixels").get<std::size_t>();
  r.final_area_percent = j.at("final_area_percent").get<double>();
  r.queries_to_best = j.at("queries_to_best").get<std::size_t>();
  r.total_queries = j.at("total_queries").get<std::size_t>();
  r.setup_queries = j.at("setup_queries").get<std::size_t>();
  r.query_budget = j.at("query_budget").get<long>();
  r.height = j.at("height").get<int>();
  r.width = j.at("width").get<int>();
  r.candidate.reset();
  if (const auto& c = j.at("candidate"); !c.is_null()) {
    const auto a = c.get<std::array<long, 4>>();
    r.candidate = Candidate{a[0], a[1], a[2], a[3]};
  }
  r.message = j.value("message", std::string{});
}

struct ExperimentReport {
  double asr = 0.0;
  std::optional<double> apa;  // absent when nothing succeeded
  double anq = 0.0;
  std::size_t n_images = 0;
};

/// ASR over all records; APA over successes only; ANQ over all records, charging
/// successes their queries-to-best and failures the full query budget.
inline ExperimentReport aggregate(std::span<const ImageRecord> records) {
  if (records.empty()) throw std::invalid_argument("aggregate needs at least one record");
  std::vector<double> areas;
  std::vector<double> queries;
  for (const auto& r : records) {
    if (r.success()) {
      areas.push_back(r.final_area_percent);
      queries.push_back(static_cast<double>(r.queries_to_best));
    } else {
      queries.push_back(static_cast<double>(r.query_budget));
    }
  }
  // Summing in sorted order makes the result independent of record order.
  std::sort(areas.begin(), areas.end());
  std::sort(queries.begin(), queries.end());
  ExperimentReport rep;
  rep.n_images = records.size();
  rep.asr = 100.0 * static_cast<double>(areas.size()) / static_cast<double>(records.size());
  if (!areas.empty()) rep.apa = std::accumulate(areas.begin(), areas.end(), 0.0) / static_cast<double>(areas.size());
  rep.anq = std::accumulate(queries.begin(), queries.end(), 0.0) / static_cast<double>(records.size());
  return rep;
}

inline nlohmann::json report_json(const ExperimentReport& rep, const nlohmann::json& config_echo) {
  return {{"asr", rep.asr},
          {"apa", rep.apa ? nlohmann::json(*rep.apa) : nlohmann::json(nullptr)},
          {"anq", rep.anq},
          {"n_images", rep.n_images},
          {"config_echo", config_echo}};
}

/// (query_index, best_area_percent) rows from the first feasible query on.
inline std::string convergence_csv(const AttackTrace& trace, int h, int w) {
  std::string out = "query_index,best_area_percent\n";
  char buf[64];
  for (const auto& r : trace.records) {
    if (!r.min_area_pixels) continue;
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", r.query_index, area_percent(*r.min_area_pixels, h, w));
    out += buf;
  }
  return out;
}

}  // namespace devopatch
