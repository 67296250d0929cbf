// dvhkit command-line tool. Exit codes: 0 ok, 1 bad input, 2 internal.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>

#include "CLI11.hpp"

#include "dvhkit/error.hpp"
#include "dvhkit/library.hpp"
#include "dvhkit/pipeline.hpp"
#include "dvhkit/service.hpp"
#include "dvhkit/synth.hpp"
#include "dvhkit/text.hpp"
#include "dvhkit/version.hpp"

namespace fs = std::filesystem;
using namespace dvhkit;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out) {
  cmd->add_option("--seed", c.seed, "random seed (overrides the config)");
  cmd->add_option("--config", c.config_path, "key = value config file")->check(CLI::ExistingFile);
  auto* out = cmd->add_option("--out", c.out, "output path");
  if (needs_out) out->required();
}

Config load_config(const Common& c) {
  if (c.config_path.empty()) return Config{};
  auto config = Config::load(c.config_path);
  config.check_known_keys();
  return config;
}

std::uint64_t seed_of(const Common& c, const Config& config) {
  if (c.seed) return *c.seed;
  return static_cast<std::uint64_t>(config.get_int("seed", 42));
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_text_file(out, text);
  }
}

PredictionService* g_service = nullptr;

void on_signal(int) {
  if (g_service != nullptr) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dose-volume histogram prediction toolkit"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  // synth
  Common synth_c;
  std::optional<std::size_t> synth_n;
  std::optional<double> synth_noise;
  std::optional<std::string> synth_prefix;
  std::string synth_format = "library", synth_unit = "percent";
  auto* synth = app.add_subcommand("synth", "generate a seeded synthetic cohort");
  add_common(synth, synth_c, true);
  synth->add_option("-n,--n-patients", synth_n, "number of patients");
  synth->add_option("--noise", synth_noise, "per-bin noise std in percent");
  synth->add_option("--prefix", synth_prefix, "case id prefix");
  synth->add_option("--format", synth_format, "library | eclipse | tomo")
      ->check(CLI::IsMember({"library", "eclipse", "tomo"}));
  synth->add_option("--unit", synth_unit, "organ volume unit in exports")->check(CLI::IsMember({"percent", "cc"}));

  // ingest
  Common ingest_c;
  std::string ingest_dir;
  auto* ingest = app.add_subcommand("ingest", "parse a directory of TPS exports into a library");
  add_common(ingest, ingest_c, true);
  ingest->add_option("dir", ingest_dir, "export directory")->required();

  // train
  Common train_c;
  std::string train_lib;
  std::vector<std::string> train_algs;
  bool train_tune = false;
  auto* train = app.add_subcommand("train", "fit models and write a bundle");
  add_common(train, train_c, true);
  train->add_option("library", train_lib, "library JSON")->required()->check(CLI::ExistingFile);
  train->add_option("-a,--algorithms", train_algs, "subset of LR,EN,DT,RF,GBR,MLP,FRBP")->delimiter(',');
  train->add_flag("--tune", train_tune, "grid search with cross-validation on the training split");

  // evaluate
  Common eval_c;
  std::string eval_bundle, eval_lib;
  auto* evaluate = app.add_subcommand("evaluate", "score a bundle on a validation library");
  add_common(evaluate, eval_c, true);
  evaluate->add_option("bundle", eval_bundle)->required()->check(CLI::ExistingFile);
  evaluate->add_option("validation", eval_lib)->required()->check(CLI::ExistingFile);

  // predict
  Common pred_c;
  std::string pred_bundle, pred_features, pred_organ = "bladder", pred_format = "json", pred_constraints;
  std::vector<std::string> pred_algs;
  std::array<std::optional<double>, kNumFeatures> pred_values;
  auto* predict = app.add_subcommand("predict", "predict curves for one patient");
  add_common(predict, pred_c, false);
  predict->add_option("bundle", pred_bundle)->required()->check(CLI::ExistingFile);
  predict->add_option("--features", pred_features, "JSON file with the six features")->check(CLI::ExistingFile);
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    const auto name = std::string(FeatureVector::kNames[i]);
    std::string flag = "--" + name;
    std::replace(flag.begin() + 2, flag.end(), '_', '-');
    predict->add_option(flag, pred_values[i], name);
  }
  predict->add_option("--organ", pred_organ, "bladder | rectum");
  predict->add_option("-a,--algorithms", pred_algs, "algorithms (default: all in the bundle)")->delimiter(',');
  predict->add_option("--format", pred_format)->check(CLI::IsMember({"json", "csv"}));
  predict->add_option("--constraints", pred_constraints, "constraint config")->check(CLI::ExistingFile);

  // band
  Common band_c;
  std::string band_lib, band_organ = "bladder";
  std::optional<double> band_conf;
  auto* band = app.add_subcommand("band", "Weibull confidence band of a library");
  add_common(band, band_c, true);
  band->add_option("library", band_lib)->required()->check(CLI::ExistingFile);
  band->add_option("--organ", band_organ);
  band->add_option("--confidence", band_conf);

  // serve
  Common serve_c;
  std::string serve_bundle, serve_host = "127.0.0.1", serve_constraints;
  std::vector<std::string> serve_bands;
  int serve_port = 8080;
  auto* serve = app.add_subcommand("serve", "HTTP prediction API");
  add_common(serve, serve_c, false);
  serve->add_option("bundle", serve_bundle)->required()->check(CLI::ExistingFile);
  serve->add_option("--host", serve_host);
  serve->add_option("--port", serve_port)->check(CLI::Range(1, 65535));
  serve->add_option("--band", serve_bands, "organ=band.csv, replaces the bundle band");
  serve->add_option("--constraints", serve_constraints, "constraint config")->check(CLI::ExistingFile);

  // rules
  Common rules_c;
  std::string rules_lib, rules_organ = "bladder";
  double rules_dose = 5000.0;
  auto* rules = app.add_subcommand("rules", "print the fuzzy rule base at one dose");
  add_common(rules, rules_c, false);
  rules->add_option("library", rules_lib)->required()->check(CLI::ExistingFile);
  rules->add_option("--organ", rules_organ);
  rules->add_option("--dose", rules_dose, "dose in cGy");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*synth) {
      const auto config = load_config(synth_c);
      auto sc = synth_config_from_config(config);
      sc.seed = seed_of(synth_c, config);
      if (synth_n) sc.n_patients = *synth_n;
      if (synth_noise) sc.noise_std = *synth_noise;
      if (synth_prefix) sc.id_prefix = *synth_prefix;
      const auto cohort = synth_cohort(sc);
      if (synth_format == "library") {
        save_library(synth_c.out, cohort);
      } else {
        write_fixtures(cohort, synth_c.out, synth_format == "tomo" ? SourceKind::TomoCsv : SourceKind::EclipseText,
                       synth_unit == "cc" ? VolumeUnit::CC : VolumeUnit::Percent);
      }
      std::cerr << "wrote " << cohort.size() << " records to " << synth_c.out << "\n";
    } else if (*ingest) {
      const auto config = load_config(ingest_c);
      const auto result = cmd_ingest(ingest_dir, structure_rules_from_config(config), ingest_c.out);
      for (const auto& f : result.failures) std::cerr << "skipped " << f.file << ": " << f.message << "\n";
      std::cerr << "ingested " << result.records.size() << " records, " << result.failures.size() << " failures\n";
    } else if (*train) {
      const auto config = load_config(train_c);
      auto options = TrainOptions::from_config(config);
      options.seed = seed_of(train_c, config);
      if (train_tune) options.tune = true;
      if (!train_algs.empty()) {
        options.algorithms.clear();
        for (const auto& a : train_algs) options.algorithms.push_back(parse_algorithm(a));
      }
      const auto library = load_library(train_lib);
      const auto outcome = cmd_train(library, options);
      for (const auto& line : outcome.log) std::cout << line << "\n";
      save_bundle(train_c.out, outcome.bundle);
      std::cout << "fingerprint " << outcome.bundle.fingerprint << "\n";
    } else if (*evaluate) {
      load_config(eval_c);
      const auto bundle = load_bundle(eval_bundle);
      const auto validation = load_library(eval_lib);
      const auto outcome = cmd_evaluate(bundle, validation);
      write_evaluation(outcome, eval_c.out);
      for (const auto organ : kOrgans) {
        std::vector<ErrorReport> rows;
        for (const auto& r : outcome.reports) {
          if (r.organ == organ) rows.push_back(r);
        }
        std::cout << to_string(organ) << "\n" << report_csv(rows);
      }
    } else if (*predict) {
      const auto config = load_config(pred_c);
      const auto bundle = load_bundle(pred_bundle);
      PredictionContext ctx(bundle);
      if (!pred_constraints.empty()) {
        ctx.constraints = ConstraintSet::from_config(Config::load(pred_constraints));
      } else {
        ctx.constraints = ConstraintSet::from_config(config);
      }
      PredictRequest req;
      req.organ = parse_organ(pred_organ);
      for (const auto& a : pred_algs) req.algorithms.push_back(parse_algorithm(a));
      std::array<double, kNumFeatures> values{};
      if (!pred_features.empty()) values = parse_features_json(read_text_file(pred_features)).as_array();
      bool all_flags = true;
      for (std::size_t i = 0; i < kNumFeatures; ++i) {
        if (pred_values[i]) {
          values[i] = *pred_values[i];
        } else {
          all_flags = false;
        }
      }
      if (pred_features.empty() && !all_flags) {
        throw Error(ErrorCode::InvalidFeatures, "give --features or all six feature flags");
      }
      req.features = FeatureVector::from_array(values);
      emit(pred_c.out, pred_format == "csv" ? predict_csv(ctx, req) : predict_json(ctx, req) + "\n");
    } else if (*band) {
      const auto config = load_config(band_c);
      const double conf = band_conf.value_or(config.get_double("band.confidence", 0.95));
      const auto b = cmd_band(load_library(band_lib), parse_organ(band_organ), conf);
      write_text_file(band_c.out, band_csv(b));
    } else if (*serve) {
      const auto config = load_config(serve_c);
      std::map<Organ, ConfidenceBand> bands;
      for (const auto& arg : serve_bands) {
        const auto eq = arg.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::InvalidConfig, "--band wants organ=path, got " + arg);
        bands[parse_organ(arg.substr(0, eq))] = parse_band_csv(read_text_file(arg.substr(eq + 1)));
      }
      auto constraints = ConstraintSet::from_config(serve_constraints.empty() ? config : Config::load(serve_constraints));
      PredictionService service(load_bundle(serve_bundle), std::move(bands), std::move(constraints));
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on " << serve_host << ":" << serve_port << "\n";
      if (!service.serve(serve_host, serve_port)) {
        throw Error(ErrorCode::Io, "cannot listen on " + serve_host + ":" + std::to_string(serve_port));
      }
      g_service = nullptr;
    } else if (*rules) {
      const auto config = load_config(rules_c);
      emit(rules_c.out, cmd_rules(load_library(rules_lib), parse_organ(rules_organ), rules_dose,
                                  hyperparams_from_config(config, AlgorithmId::FRBP)));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_input_error(e.code()) ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
