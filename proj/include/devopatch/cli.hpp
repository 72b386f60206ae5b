#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "devopatch/config.hpp"
#include "devopatch/experiment.hpp"
#include "devopatch/image_io.hpp"
#include "devopatch/stub_server.hpp"

namespace devopatch::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitInitializationFailure = 2;
inline constexpr int kExitOracleFailure = 3;

struct AttackArgs {
  std::filesystem::path config;  // empty: defaults only
  std::filesystem::path source;
  std::filesystem::path target;
  std::filesystem::path out;
  std::optional<Label> label;         // inferred with one extra query when absent
  std::optional<Label> target_label;  // likewise, targeted mode only
  ConfigOverrides overrides;
};

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline RunConfig load_run_config(const std::filesystem::path& path, const ConfigOverrides& ov) {
  return parse_config(path.empty() ? std::string("{}") : read_text_file(path), ov);
}

/// Single attack. Writes adversarial.png, trace.json and curve.csv under args.out, then
/// re-classifies the decoded PNG to confirm the shipped file is adversarial.
/// Exit codes: 0 success, 1 usage/IO error, 2 initialization failure, 3 oracle failure.
inline int attack_once(const AttackArgs& args, std::ostream& diag = std::cerr) {
  RunConfig cfg;
  Image source, target;
  try {
    cfg = load_run_config(args.config, args.overrides);
    source = load_image(args.source);
    target = load_image(args.target);
    require_same_shape(source, target);
    cfg.engine.validate_for(source.shape());
  } catch (const std::exception& e) {
    diag << "devopatch attack: " << e.what() << "\n";
    return kExitUsage;
  }

  std::unique_ptr<LabelOracle> oracle;
  try {
    oracle = make_oracle(cfg.oracle);
  } catch (const std::exception& e) {
    diag << "devopatch attack: cannot construct oracle: " << e.what() << "\n";
    return kExitOracleFailure;
  }

  const auto& engine = cfg.engine;
  std::size_t inference_queries = 0;
  nlohmann::json trace_json;
  std::optional<Attack<LabelOracle>> attack;
  int status = kExitOk;
  try {
    Label y = 0;
    if (args.label) {
      y = *args.label;
    } else {
      y = oracle->classify(source.quantized());
      ++inference_queries;
    }
    std::optional<Label> target_label = args.target_label;
    if (cfg.mode == AttackMode::Targeted && !target_label) {
      target_label = oracle->classify(target.quantized());
      ++inference_queries;
    }
    attack.emplace(*oracle, source, target, make_predicate(cfg.mode, y, target_label), engine);
    const AttackResult result = attack->run(y);

    PairOutcome outcome;
    outcome.record.id = "attack";
    outcome.record.status = RecordStatus::Success;
    outcome.record.final_area_pixels = result.perturbed_pixels;
    outcome.record.final_area_percent = area_percent(result.perturbed_pixels, source.height(), source.width());
    outcome.record.candidate = result.candidate;
    outcome.trace = result.trace;
    outcome.result = result;

    const auto png_path = args.out / "adversarial.png";
    save_image(png_path, result.adversarial);
    const Image shipped = load_image(png_path);
    const Label shipped_label = oracle->classify(shipped);
    const bool verified = make_predicate(cfg.mode, y, target_label)(shipped_label);

    auto& rec = outcome.record;
    rec.query_budget = engine.query_budget;
    rec.height = source.height();
    rec.width = source.width();
    rec.queries_to_best = result.trace.queries_to_best;
    rec.total_queries = result.trace.total_queries;
    rec.setup_queries = result.trace.setup_queries + inference_queries;
    trace_json = trace_summary_json(outcome);
    trace_json["verified_label"] = shipped_label;
    trace_json["verified"] = verified;
    write_text(args.out / "curve.csv", convergence_csv(result.trace, source.height(), source.width()));
    if (!verified) {
      diag << "devopatch attack: written PNG classified as " << shipped_label << ", which is not adversarial\n";
      status = kExitUsage;
    }
  } catch (const InitializationFailure& e) {
    diag << "devopatch attack: initialization failure: " << e.what() << "\n";
    status = kExitInitializationFailure;
  } catch (const OracleFailure& e) {
    diag << "devopatch attack: oracle failure (" << to_string(e.kind()) << ", " << e.attempts()
         << " attempt(s)): " << e.what() << "\n";
    status = kExitOracleFailure;
  } catch (const std::exception& e) {
    diag << "devopatch attack: " << e.what() << "\n";
    status = kExitUsage;
  }

  if (trace_json.is_null()) {
    // Partial trace for failed runs.
    PairOutcome partial;
    partial.record.id = "attack";
    partial.record.status = status == kExitInitializationFailure ? RecordStatus::InitializationFailure
                            : status == kExitOracleFailure       ? RecordStatus::OracleFailure
                                                                 : RecordStatus::Error;
    partial.record.query_budget = engine.query_budget;
    partial.record.height = source.height();
    partial.record.width = source.width();
    if (attack) partial.trace = attack->trace();
    partial.record.total_queries = partial.trace.total_queries;
    partial.record.setup_queries = partial.trace.setup_queries + inference_queries;
    trace_json = trace_summary_json(partial);
    try {
      write_text(args.out / "curve.csv", convergence_csv(partial.trace, source.height(), source.width()));
    } catch (const std::exception&) {
    }
  }
  trace_json["config_echo"] = config_echo(cfg);
  try {
    write_text(args.out / "trace.json", trace_json.dump(2) + "\n");
  } catch (const std::exception& e) {
    diag << "devopatch attack: " << e.what() << "\n";
    if (status == kExitOk) status = kExitUsage;
  }
  return status;
}

inline int experiment(const std::filesystem::path& config, const std::filesystem::path& out,
                      const ConfigOverrides& overrides, std::ostream& log = std::cout, std::ostream& diag = std::cerr) {
  ExperimentSpec spec;
  try {
    spec.config = load_run_config(config, overrides);
    spec.output_dir = out;
  } catch (const std::exception& e) {
    diag << "devopatch experiment: " << e.what() << "\n";
    return kExitUsage;
  }
  try {
    make_oracle(spec.config.oracle);
  } catch (const std::exception& e) {
    diag << "devopatch experiment: cannot construct oracle: " << e.what() << "\n";
    return kExitOracleFailure;
  }
  try {
    const auto result = run_experiment(spec);
    log << "images " << result.report.n_images << "  ASR " << result.report.asr << "%  APA ";
    if (result.report.apa) {
      log << *result.report.apa << "%";
    } else {
      log << "-";
    }
    log << "  ANQ " << result.report.anq << "\n";
  } catch (const std::exception& e) {
    diag << "devopatch experiment: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitOk;
}

struct StubArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string oracle = "quadrant";
  int label = 0;
  std::vector<int> script;
  int delay_ms = 0;
  std::filesystem::path config;  // optional: oracle section overrides the flags above
};

inline StubServerOptions stub_options(const StubArgs& a) {
  StubServerOptions opts;
  opts.delay_ms = a.delay_ms;
  if (!a.config.empty()) {
    const auto cfg = load_run_config(a.config, {});
    if (!cfg.oracle.is_synthetic()) throw ConfigError("serve-stub needs a synthetic oracle kind");
    opts.oracle = cfg.oracle.synthetic;
    opts.shape = cfg.oracle.shape;
    return opts;
  }
  if (!a.script.empty()) {
    opts.oracle = ScriptedLabels{a.script};
    return opts;
  }
  nlohmann::json o{{"kind", a.oracle}};
  if (a.oracle == "constant") o["label"] = a.label;
  opts.oracle = detail::parse_oracle(o).synthetic;
  return opts;
}

/// Entry point shared by the `devopatch` binary.
inline int run(int argc, char** argv) {
  CLI::App app{"Hard-label adversarial patch search by integer differential evolution"};
  app.require_subcommand(1);

  auto add_overrides = [](CLI::App* sub, ConfigOverrides& ov) {
    sub->add_option("--population-size", ov.population_size, "population size p");
    sub->add_option("--initialization-rate", ov.initialization_rate, "initialization rate mu in (0, 0.5]");
    sub->add_option("--mutation-rate", ov.mutation_rate, "integer mutation rate gamma");
    sub->add_option("--query-budget", ov.query_budget, "main-loop query budget N");
    sub->add_option("--seed", ov.seed, "RNG seed");
    sub->add_option("--norm", ov.norm, "fitness norm: l0, l1 or l2");
    sub->add_option("--mode", ov.mode, "targeted or untargeted");
    sub->add_option("--oracle", ov.oracle_kind, "oracle kind");
    sub->add_option("--endpoint", ov.endpoint, "HTTP oracle endpoint");
    sub->add_option("--command", ov.command, "subprocess oracle command");
  };

  AttackArgs attack_args;
  auto* attack = app.add_subcommand("attack", "attack one source/target pair");
  attack->add_option("--config", attack_args.config, "JSON config file");
  attack->add_option("--source", attack_args.source, "source image (PNG or PPM)")->required();
  attack->add_option("--target", attack_args.target, "target image supplying the patch")->required();
  attack->add_option("--out", attack_args.out, "output directory")->required();
  attack->add_option("--label", attack_args.label, "ground-truth label of the source");
  attack->add_option("--target-label", attack_args.target_label, "label to force (targeted mode)");
  add_overrides(attack, attack_args.overrides);

  std::filesystem::path exp_config, exp_out;
  ConfigOverrides exp_overrides;
  auto* exp = app.add_subcommand("experiment", "run every pair of a config and report ASR/APA/ANQ");
  exp->add_option("--config", exp_config, "JSON config file with pairs")->required();
  exp->add_option("--out", exp_out, "output directory")->required();
  exp->add_option("--workers", exp_overrides.workers, "concurrent attacks");
  add_overrides(exp, exp_overrides);

  StubArgs stub_args;
  auto* stub = app.add_subcommand("serve-stub", "serve a synthetic oracle over HTTP");
  stub->add_option("--host", stub_args.host, "bind address");
  stub->add_option("--port", stub_args.port, "port (0 picks a free one)");
  stub->add_option("--oracle", stub_args.oracle, "constant, quadrant, dominant_channel");
  stub->add_option("--label", stub_args.label, "label for the constant oracle");
  stub->add_option("--script", stub_args.script, "label sequence replayed cyclically")->delimiter(',');
  stub->add_option("--delay-ms", stub_args.delay_ms, "artificial latency per request");
  stub->add_option("--config", stub_args.config, "JSON config whose oracle section is served");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  if (attack->parsed()) return attack_once(attack_args);
  if (exp->parsed()) return experiment(exp_config, exp_out, exp_overrides);

  try {
    StubServer server(stub_options(stub_args));
    const int port = server.bind(stub_args.host, stub_args.port);
    std::cout << "listening on " << server.endpoint() << std::endl;
    (void)port;
    server.serve();
  } catch (const std::exception& e) {
    std::cerr << "devopatch serve-stub: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitOk;
}

}  // namespace devopatch::cli
