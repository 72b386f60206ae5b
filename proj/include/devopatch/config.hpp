#pragma once

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "devopatch/engine.hpp"
#include "devopatch/http_oracle.hpp"
#include "devopatch/subprocess_oracle.hpp"
#include "devopatch/synthetic_oracle.hpp"

namespace devopatch {

/// Config-file schema problem; what() names the offending key.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class AttackMode { Targeted, Untargeted };

struct OracleConfig {
  std::string kind = "quadrant";  // constant | quadrant | threshold | dominant_channel | scripted | http | subprocess
  SyntheticOracleSpec synthetic = QuadrantMax{};
  HttpOracleOptions http;
  SubprocessOracleOptions subprocess;
  std::optional<Shape> shape;

  bool is_synthetic() const { return kind != "http" && kind != "subprocess"; }
};

inline std::unique_ptr<LabelOracle> make_oracle(const OracleConfig& cfg) {
  if (cfg.kind == "http") return std::make_unique<HttpOracle>(cfg.http, cfg.shape);
  if (cfg.kind == "subprocess") return std::make_unique<SubprocessOracle>(cfg.subprocess, cfg.shape);
  return std::make_unique<SyntheticOracle>(cfg.synthetic, cfg.shape);
}

struct PairSpec {
  std::string id;
  std::filesystem::path source;
  std::optional<Label> label;
  std::filesystem::path target;
  std::optional<Label> target_label;
};

struct RunConfig {
  EngineConfig engine;
  AttackMode mode = AttackMode::Targeted;
  OracleConfig oracle;
  std::vector<PairSpec> pairs;
  int workers = 1;
};

/// Command-line overrides; set fields win over the file.
struct ConfigOverrides {
  std::optional<int> population_size;
  std::optional<double> initialization_rate;
  std::optional<int> mutation_rate;
  std::optional<long> query_budget;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> norm;
  std::optional<std::string> mode;
  std::optional<std::string> oracle_kind;
  std::optional<std::string> endpoint;
  std::optional<std::string> command;
  std::optional<int> workers;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + where + key + "'");
  }
}

template <class T>
T get_key(const nlohmann::json& obj, const std::string& key, const std::string& where) {
  const auto& v = obj.at(key);
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw ConfigError("invalid value for '" + where + key + "': expected an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (v.is_number_unsigned() == false && v.get<long long>() < 0)
        throw ConfigError("invalid value for '" + where + key + "': expected a nonnegative integer");
    }
  }
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid value for '" + where + key + "': " + e.what());
  }
}

template <class T>
std::optional<T> get_opt(const nlohmann::json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  return get_key<T>(obj, key, where);
}

inline AttackMode parse_mode(const std::string& s) {
  if (s == "targeted") return AttackMode::Targeted;
  if (s == "untargeted") return AttackMode::Untargeted;
  throw ConfigError("invalid value for 'mode': expected targeted or untargeted, got '" + s + "'");
}

inline OracleConfig parse_oracle(const nlohmann::json& o) {
  if (!o.is_object()) throw ConfigError("'oracle' must be an object");
  reject_unknown_keys(o,
                      {"kind", "label", "labels", "region", "fraction", "inside_label", "outside_label", "endpoint",
                       "timeout_ms", "retries", "max_connections", "bearer_token", "encoding", "command", "shape"},
                      "oracle.");
  OracleConfig cfg;
  cfg.kind = get_opt<std::string>(o, "kind", "oracle.").value_or("quadrant");
  if (auto s = get_opt<std::array<int, 3>>(o, "shape", "oracle.")) cfg.shape = Shape{(*s)[0], (*s)[1], (*s)[2]};
  const std::string k = cfg.kind;
  if (k == "constant") {
    cfg.synthetic = ConstantLabel{get_opt<int>(o, "label", "oracle.").value_or(0)};
  } else if (k == "quadrant") {
    cfg.synthetic = QuadrantMax{};
  } else if (k == "dominant_channel") {
    cfg.synthetic = DominantChannel{};
  } else if (k == "scripted") {
    cfg.synthetic = ScriptedLabels{get_key<std::vector<int>>(o, "labels", "oracle.")};
    if (std::get<ScriptedLabels>(cfg.synthetic).labels.empty()) throw ConfigError("'oracle.labels' must be nonempty");
  } else if (k == "threshold") {
    ThresholdCoverage t;
    const auto r = get_key<std::array<long, 4>>(o, "region", "oracle.");
    t.region = Candidate{r[0], r[1], r[2], r[3]};
    t.fraction = get_opt<double>(o, "fraction", "oracle.").value_or(0.5);
    t.inside_label = get_opt<int>(o, "inside_label", "oracle.").value_or(1);
    t.outside_label = get_opt<int>(o, "outside_label", "oracle.").value_or(0);
    cfg.synthetic = t;
  } else if (k == "http") {
    cfg.http.endpoint = get_opt<std::string>(o, "endpoint", "oracle.").value_or("");
    if (auto v = get_opt<int>(o, "timeout_ms", "oracle.")) cfg.http.timeout_ms = *v;
    if (auto v = get_opt<int>(o, "retries", "oracle.")) cfg.http.retries = *v;
    if (auto v = get_opt<int>(o, "max_connections", "oracle.")) cfg.http.max_connections = *v;
    cfg.http.bearer_token = get_opt<std::string>(o, "bearer_token", "oracle.");
    const auto enc = get_opt<std::string>(o, "encoding", "oracle.").value_or("png");
    if (enc != "png" && enc != "raw") throw ConfigError("invalid value for 'oracle.encoding': expected png or raw");
    cfg.http.encoding = enc == "raw" ? WireEncoding::RawTensor : WireEncoding::Png;
  } else if (k == "subprocess") {
    cfg.subprocess.command = get_opt<std::string>(o, "command", "oracle.").value_or("");
    if (auto v = get_opt<int>(o, "timeout_ms", "oracle.")) cfg.subprocess.timeout_ms = *v;
  } else {
    throw ConfigError("invalid value for 'oracle.kind': '" + k + "'");
  }
  return cfg;
}

inline nlohmann::json oracle_json(const OracleConfig& cfg) {
  nlohmann::json o{{"kind", cfg.kind}};
  if (cfg.shape) o["shape"] = {cfg.shape->channels, cfg.shape->height, cfg.shape->width};
  if (const auto* c = std::get_if<ConstantLabel>(&cfg.synthetic); c && cfg.kind == "constant") o["label"] = c->label;
  if (const auto* s = std::get_if<ScriptedLabels>(&cfg.synthetic); s && cfg.kind == "scripted") o["labels"] = s->labels;
  if (const auto* t = std::get_if<ThresholdCoverage>(&cfg.synthetic); t && cfg.kind == "threshold") {
    o["region"] = t->region.as_array();
    o["fraction"] = t->fraction;
    o["inside_label"] = t->inside_label;
    o["outside_label"] = t->outside_label;
  }
  if (cfg.kind == "http") {
    o["endpoint"] = cfg.http.endpoint;
    o["timeout_ms"] = cfg.http.timeout_ms;
    o["retries"] = cfg.http.retries;
    o["max_connections"] = cfg.http.max_connections;
    o["encoding"] = cfg.http.encoding == WireEncoding::RawTensor ? "raw" : "png";
    // bearer_token is never echoed
  }
  if (cfg.kind == "subprocess") {
    o["command"] = cfg.subprocess.command;
    o["timeout_ms"] = cfg.subprocess.timeout_ms;
  }
  return o;
}

}  // namespace detail

/// Parses the JSON config and applies overrides. Absent engine keys take the defaults
/// p = 10, μ = 0.35, γ = 1, N = 10000, seed 0, norm l0, mode targeted.
inline RunConfig parse_config(const std::string& text, const ConfigOverrides& ov = {}) {
  nlohmann::json doc;
  try {
    doc = text.empty() ? nlohmann::json::object() : nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  detail::reject_unknown_keys(doc,
                              {"population_size", "initialization_rate", "mutation_rate", "query_budget", "seed", "norm",
                               "mode", "oracle", "pairs", "workers"},
                              "");
  RunConfig cfg;
  auto& e = cfg.engine;
  using detail::get_opt;
  e.population_size = ov.population_size.value_or(get_opt<int>(doc, "population_size", "").value_or(e.population_size));
  e.initialization_rate =
      ov.initialization_rate.value_or(get_opt<double>(doc, "initialization_rate", "").value_or(e.initialization_rate));
  e.mutation_rate = ov.mutation_rate.value_or(get_opt<int>(doc, "mutation_rate", "").value_or(e.mutation_rate));
  e.query_budget = ov.query_budget.value_or(get_opt<long>(doc, "query_budget", "").value_or(e.query_budget));
  e.seed = ov.seed.value_or(get_opt<std::uint64_t>(doc, "seed", "").value_or(e.seed));
  try {
    e.norm = parse_norm(ov.norm.value_or(get_opt<std::string>(doc, "norm", "").value_or("l0")));
  } catch (const std::invalid_argument& err) {
    throw ConfigError(std::string("invalid value for 'norm': ") + err.what());
  }
  cfg.mode = detail::parse_mode(ov.mode.value_or(get_opt<std::string>(doc, "mode", "").value_or("targeted")));
  cfg.workers = ov.workers.value_or(get_opt<int>(doc, "workers", "").value_or(1));
  if (cfg.workers < 1) throw ConfigError("invalid value for 'workers': must be >= 1");

  if (!(e.initialization_rate > 0.0 && e.initialization_rate <= 0.5))
    throw ConfigError("invalid value for 'initialization_rate': must lie in (0, 0.5]");
  if (e.population_size < 3) throw ConfigError("invalid value for 'population_size': must be >= 3");
  if (e.mutation_rate < 1) throw ConfigError("invalid value for 'mutation_rate': must be a positive integer");
  if (e.query_budget < 0) throw ConfigError("invalid value for 'query_budget': must be >= 0");

  if (doc.contains("oracle")) cfg.oracle = detail::parse_oracle(doc.at("oracle"));
  if (ov.oracle_kind) {
    nlohmann::json o = doc.contains("oracle") ? doc.at("oracle") : nlohmann::json::object();
    if (o.value("kind", std::string("quadrant")) != *ov.oracle_kind) o = nlohmann::json{{"kind", *ov.oracle_kind}};
    if (doc.contains("oracle") && doc.at("oracle").contains("shape")) o["shape"] = doc.at("oracle").at("shape");
    cfg.oracle = detail::parse_oracle(o);
  }
  if (ov.endpoint) cfg.oracle.http.endpoint = *ov.endpoint;
  if (ov.command) cfg.oracle.subprocess.command = *ov.command;

  if (doc.contains("pairs")) {
    const auto& pairs = doc.at("pairs");
    if (!pairs.is_array()) throw ConfigError("'pairs' must be an array");
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const auto& p = pairs[k];
      const std::string where = "pairs[" + std::to_string(k) + "].";
      if (!p.is_object()) throw ConfigError("'" + where.substr(0, where.size() - 1) + "' must be an object");
      detail::reject_unknown_keys(p, {"id", "source", "label", "target", "target_label"}, where);
      PairSpec ps;
      ps.id = get_opt<std::string>(p, "id", where).value_or("pair" + std::to_string(k));
      ps.source = detail::get_key<std::string>(p, "source", where);
      ps.target = detail::get_key<std::string>(p, "target", where);
      ps.label = get_opt<int>(p, "label", where);
      ps.target_label = get_opt<int>(p, "target_label", where);
      if (!ps.label) throw ConfigError("missing key '" + where + "label'");
      if (cfg.mode == AttackMode::Targeted && !ps.target_label)
        throw ConfigError("missing key '" + where + "target_label' (required in targeted mode)");
      for (const auto& other : cfg.pairs)
        if (other.id == ps.id) throw ConfigError("duplicate value for '" + where + "id': '" + ps.id + "'");
      cfg.pairs.push_back(std::move(ps));
    }
  }
  return cfg;
}

/// Effective configuration in the same schema parse_config reads.
inline nlohmann::json config_echo(const RunConfig& cfg) {
  const auto& e = cfg.engine;
  nlohmann::json j{{"population_size", e.population_size},
                   {"initialization_rate", e.initialization_rate},
                   {"mutation_rate", e.mutation_rate},
                   {"query_budget", e.query_budget},
                   {"seed", e.seed},
                   {"norm", std::string(to_string(e.norm))},
                   {"mode", cfg.mode == AttackMode::Targeted ? "targeted" : "untargeted"},
                   {"workers", cfg.workers},
                   {"oracle", detail::oracle_json(cfg.oracle)}};
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : cfg.pairs) {
    nlohmann::json pj{{"id", p.id}, {"source", p.source.string()}, {"target", p.target.string()}};
    if (p.label) pj["label"] = *p.label;
    if (p.target_label) pj["target_label"] = *p.target_label;
    pairs.push_back(pj);
  }
  j["pairs"] = pairs;
  return j;
}

}  // namespace devopatch
