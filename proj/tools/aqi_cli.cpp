// Command-line driver: synth | decompose | features | train | infer |
// evaluate | ablate | missing-study | importance.
//
// Exit codes: 0 success, 2 missing input or artifact, 3 validation failure,
// 4 numeric divergence.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "aqi/checkpoint.hpp"
#include "aqi/config.hpp"
#include "aqi/csv.hpp"
#include "aqi/dataset.hpp"
#include "aqi/decompose.hpp"
#include "aqi/error.hpp"
#include "aqi/evaluate.hpp"
#include "aqi/pipeline.hpp"
#include "aqi/synthcity.hpp"

namespace fs = std::filesystem;
using namespace aqi;

namespace {

constexpr const char* kVersion = "aqi 1.0.0";

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> pollutant;
};

struct Context {
  RunConfig config;
  fs::path out;
  fs::path data;
  int threads = 1;
  std::vector<std::string> outputs;

  fs::path features_dir() const { return out / ("features_" + to_string(config.pollutant)); }
  fs::path model_stem(int fold) const {
    return out / ("model_" + to_string(config.pollutant) + "_fold" + std::to_string(fold));
  }
  void write(const std::string& name, const std::string& content) {
    write_file_atomic(out / name, content);
    outputs.push_back(name);
  }
};

int threads_from_env() {
  const char* value = std::getenv("AQI_THREADS");
  if (!value || !*value) return 1;
  const long long n = parse_int(value);
  require(n >= 1, ErrorCode::kInvalidConfig, "AQI_THREADS must be >= 1");
  return static_cast<int>(n);
}

Context make_context(const Options& o) {
  Context c;
  c.config = o.config_path.empty() ? RunConfig{} : load_run_config(o.config_path);
  if (o.seed) {
    c.config.synth.seed = *o.seed;
    c.config.split_seed = *o.seed;
    c.config.experiment.model_seed = *o.seed;
    c.config.experiment.train.seed = *o.seed;
    c.config.evaluation.corruption_seed = *o.seed;
  }
  if (o.out) c.config.out_dir = *o.out;
  if (o.pollutant) c.config.pollutant = parse_pollutant(*o.pollutant);
  c.config.validate();
  // Relative data paths resolve against the config file's directory.
  const fs::path base = o.config_path.empty() ? fs::current_path() : fs::path(o.config_path).parent_path();
  c.data = fs::path(c.config.data_dir).is_absolute() ? fs::path(c.config.data_dir) : base / c.config.data_dir;
  c.out = c.config.out_dir;
  c.threads = threads_from_env();
  fs::create_directories(c.out);
  return c;
}

void write_manifest(Context& c, const std::string& command) {
  nlohmann::json m;
  m["command"] = command;
  m["version"] = kVersion;
  m["config_hash"] = c.config.hash();
  m["pollutant"] = to_string(c.config.pollutant);
  m["seeds"] = {{"synth", c.config.synth.seed},
                {"split", c.config.split_seed},
                {"model", c.config.experiment.model_seed},
                {"train", c.config.experiment.train.seed},
                {"corruption", c.config.evaluation.corruption_seed}};
  m["threads"] = c.threads;
  m["outputs"] = c.outputs;
  write_file_atomic(c.out / ("manifest_" + command + ".json"), m.dump(2) + "\n");
}

std::string metrics_header() { return "name,mae,rmse,r2\n"; }
std::string metrics_row(const std::string& name, const MetricTriple& m) {
  return name + "," + format_double(m.mae) + "," + format_double(m.rmse) + "," + format_double(m.r2) + "\n";
}

PreparedData load_prepared(const Context& c) {
  const DatasetBundle bundle = read_bundle(c.data);
  return read_prepared(c.features_dir(), bundle.grid(), bundle.timestamps());
}

std::vector<LoadedCheckpoint> load_models(const Context& c, const PreparedData& data) {
  std::vector<LoadedCheckpoint> out;
  for (std::size_t f = 0; f < data.split.folds.size(); ++f) {
    LoadedCheckpoint ck = read_checkpoint(c.model_stem(static_cast<int>(f)));
    out.push_back(std::move(ck));
  }
  return out;
}

PreparedData for_schema(const PreparedData& data, const FeatureSchema& schema) {
  if (schema.numeric_names == data.features.schema.numeric_names &&
      schema.categorical_names == data.features.schema.categorical_names)
    return data;
  return restrict_features(data, schema);
}

void cmd_synth(Context& c) {
  const DatasetBundle bundle = generate(c.config.synth);
  write_bundle(c.data, bundle);
  c.outputs.push_back(c.data.string());
}

void cmd_decompose(Context& c) {
  const DatasetBundle bundle = read_bundle(c.data);
  const auto it = bundle.readings.find(c.config.pollutant);
  require(it != bundle.readings.end(), ErrorCode::kMissingArtifact, "no readings for " + to_string(c.config.pollutant));
  CsvWriter series({"station_id", "t", "value", "trend", "seasonal", "residual", "trend_z"});
  CsvWriter spectrum({"station_id", "frequency", "power"});
  for (const Station& s : bundle.stations) {
    if (s.kind != StationKind::kMicro) continue;
    const auto found = it->second.find(s.id);
    if (found == it->second.end()) continue;
    const std::vector<double> filled = fill_missing(found->second);
    const Decomposition d = stl_decompose(filled, c.config.features.stl);
    const NormalizedSeries z = normalize_trend(d.trend);
    for (std::size_t t = 0; t < filled.size(); ++t)
      series.row(s.id, static_cast<int>(t), filled[t], d.trend[t], d.seasonal[t], d.residual[t], z.values[t]);
    for (const SpectrumBin& b : seasonality_psd(d.seasonal)) spectrum.row(s.id, b.frequency, b.power);
  }
  c.write("decomposition_" + to_string(c.config.pollutant) + ".csv", series.str());
  c.write("seasonality_" + to_string(c.config.pollutant) + ".csv", spectrum.str());
}

void cmd_features(Context& c) {
  const DatasetBundle bundle = read_bundle(c.data);
  const PreparedData data = prepare_data(bundle, c.config.pollutant, c.config.features, c.config.split_seed);
  write_prepared(c.features_dir(), data);
  c.outputs.push_back(c.features_dir().filename().string());
  CsvWriter split({"grid_id", "row", "col", "role", "fold"});
  const auto add = [&](const std::vector<int>& ids, const char* role, int fold) {
    for (int g : ids) split.row(g, data.graph.cells[static_cast<std::size_t>(g)].row,
                                data.graph.cells[static_cast<std::size_t>(g)].col, role, fold);
  };
  add(data.split.interpolation_ids, "interpolation", -1);
  add(data.split.test_ids, "test", -1);
  for (std::size_t f = 0; f < data.split.folds.size(); ++f) add(data.split.folds[f].validation_ids, "cv", static_cast<int>(f));
  c.write("split_" + to_string(c.config.pollutant) + ".csv", split.str());
}

void cmd_train(Context& c) {
  const PreparedData data = load_prepared(c);
  std::string table = metrics_header();
  std::vector<MetricTriple> triples;
  for (int f = 0; f < static_cast<int>(data.split.folds.size()); ++f) {
    const TrainedFold fold = train_fold(data, c.config.experiment, f);
    write_checkpoint(c.model_stem(f), fold.model,
                     {fold.model.config(), fold.schema, fold.scale, c.config.hash(), f});
    c.outputs.push_back(c.model_stem(f).filename().string() + ".bin");
    c.write("training_log_" + to_string(c.config.pollutant) + "_fold" + std::to_string(f) + ".csv", fold.log.to_csv());
    table += metrics_row("fold" + std::to_string(f), fold.test);
    triples.push_back(fold.test);
    std::cerr << "fold " << f << ": epochs " << fold.log.epochs.size() << ", test mae " << fold.test.mae << "\n";
  }
  table += metrics_row("mtstn", average(triples));
  c.write("train_metrics_" + to_string(c.config.pollutant) + ".csv", table);
}

void cmd_infer(Context& c) {
  const PreparedData data = load_prepared(c);
  const auto models = load_models(c, data);
  const int last = data.n_hours() - 1;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(data.n_grids());
  for (const LoadedCheckpoint& ck : models) {
    const PreparedData d = for_schema(data, ck.meta.schema);
    ExperimentConfig e = c.config.experiment;
    e.model = ck.meta.model_config;
    mean += predict_hour(ck.model, scale_features(d.features), experiment_graph(d, e), ck.meta.label_scale, last);
  }
  mean /= static_cast<double>(models.size());
  CsvWriter grid({"grid_id", "row", "col", "value"});
  for (int g = 0; g < data.n_grids(); ++g)
    grid.row(g, data.graph.cells[static_cast<std::size_t>(g)].row, data.graph.cells[static_cast<std::size_t>(g)].col,
             mean(g));
  c.write("inference_" + to_string(c.config.pollutant) + ".csv", grid.str());
}

void cmd_evaluate(Context& c) {
  const PreparedData data = load_prepared(c);
  const auto models = load_models(c, data);
  std::vector<MetricTriple> triples;
  CsvWriter preds({"fold", "grid_id", "t", "truth", "predicted"});
  for (std::size_t f = 0; f < models.size(); ++f) {
    const LoadedCheckpoint& ck = models[f];
    const PreparedData d = for_schema(data, ck.meta.schema);
    ExperimentConfig e = c.config.experiment;
    e.model = ck.meta.model_config;
    const TestPredictions p =
        predict_test(ck.model, d, scale_features(d.features), experiment_graph(d, e), ck.meta.label_scale);
    for (std::size_t i = 0; i < p.truth.size(); ++i)
      preds.row(static_cast<int>(f), p.grids[i], p.hours[i], p.truth[i], p.predicted[i]);
    triples.push_back(metrics(p.truth, p.predicted));
  }
  std::string table = metrics_header() + metrics_row("mtstn", average(triples));
  const int first_hour = models.front().meta.model_config.tau - 1;
  for (const std::string& b : c.config.evaluation.baselines)
    table += metrics_row(b, run_baseline(parse_baseline(b), data, first_hour, c.config.evaluation.knn_k,
                                         c.config.features.idw_power));
  c.write("metrics.csv", table);
  c.write("test_predictions_" + to_string(c.config.pollutant) + ".csv", preds.str());
}

void cmd_ablate(Context& c) {
  const PreparedData data = load_prepared(c);
  std::string table = "variant,mae,rmse,r2\n";
  for (const std::string& v : c.config.evaluation.variants) {
    const CvResult r = run_ablation(parse_variant(v), data, c.config.experiment);
    table += metrics_row(v, r.average);
    std::cerr << v << ": mae " << r.average.mae << "\n";
  }
  c.write("ablation_" + to_string(c.config.pollutant) + ".csv", table);
}

void cmd_missing_study(Context& c) {
  const DatasetBundle bundle = read_bundle(c.data);
  const auto rows = missing_ratio_study(bundle, c.config.pollutant, c.config.features, c.config.split_seed,
                                        c.config.evaluation.missing_ratios, c.config.experiment,
                                        c.config.evaluation.corruption_seed);
  std::string table = "ratio,mae,rmse,r2\n";
  for (const MissingRatioRow& r : rows) table += metrics_row(format_double(r.ratio), r.metrics);
  c.write("missing_ratio_" + to_string(c.config.pollutant) + ".csv", table);
}

void cmd_importance(Context& c) {
  const PreparedData data = load_prepared(c);
  const auto models = load_models(c, data);
  const LoadedCheckpoint& ck = models.front();
  const PreparedData d = for_schema(data, ck.meta.schema);
  ExperimentConfig e = c.config.experiment;
  e.model = ck.meta.model_config;
  TrainedFold fold{ck.meta.fold, ck.model, ck.meta.schema, ck.meta.label_scale, {}, {}, {}};
  ImportanceReport report = fold_importance(fold, d, e, c.config.evaluation.importance_stride);
  report.pollutant = to_string(c.config.pollutant);
  report.seed = c.config.experiment.model_seed;
  c.write("importance_" + to_string(c.config.pollutant) + ".csv", report.to_csv());
  const int top = std::min<int>(c.config.evaluation.importance_top, static_cast<int>(report.ranking.size()));
  const FeatureSchema kept = select_features(report, ck.meta.schema, top);
  c.write("importance_top" + std::to_string(top) + "_" + to_string(c.config.pollutant) + ".txt", kept.to_text());
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingArtifact:
    case ErrorCode::kIo:
      return 2;
    case ErrorCode::kDivergence:
      return 4;
    default:
      return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fine-grained air-quality inference with a multi-task spatio-temporal network"};
  app.require_subcommand(1);
  Options opts;
  app.add_option("--config", opts.config_path, "JSON run configuration");
  app.add_option("--seed", opts.seed, "override every seed in the configuration");
  app.add_option("--out", opts.out, "output directory");
  app.add_option("--pollutant", opts.pollutant, "target pollutant: NO2, O3 or PM25");
  app.set_version_flag("--version", kVersion);

  using Handler = void (*)(Context&);
  const std::vector<std::tuple<std::string, std::string, Handler>> commands = {
      {"synth", "generate a synthetic city dataset", cmd_synth},
      {"decompose", "STL decomposition of micro-station readings", cmd_decompose},
      {"features", "build features, adjacencies, labels and the split", cmd_features},
      {"train", "train one model per fold and write checkpoints", cmd_train},
      {"infer", "predict every grid at the last hour", cmd_infer},
      {"evaluate", "score checkpoints and baselines on the test grids", cmd_evaluate},
      {"ablate", "cross-validated ablation variants", cmd_ablate},
      {"missing-study", "accuracy under increasing missing-reading ratios", cmd_missing_study},
      {"importance", "gradient feature importance of a trained model", cmd_importance},
  };
  for (const auto& [name, help, handler] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 3;
  }
  try {
    Context ctx = make_context(opts);
    for (const auto& [name, help, handler] : commands) {
      if (!app.got_subcommand(name)) continue;
      handler(ctx);
      write_manifest(ctx, name);
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
