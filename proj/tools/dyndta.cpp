// dyndta: command-line driver for data preparation, training, evaluation,
// ablation, sweeps, prediction and attention export.
//
// Exit status: 0 on success, 2 on usage errors, 10 + ErrorCode for library
// errors, 1 for anything else.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dyndta/config.hpp"
#include "dyndta/csv.hpp"
#include "dyndta/data.hpp"
#include "dyndta/error.hpp"
#include "dyndta/model.hpp"
#include "dyndta/train_eval.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace dyndta;

namespace {

constexpr const char* kVersion = "0.1.0";

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string file_hash(const std::string& path) { return hex64(fnv1a(read_file(path))); }

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
  return out;
}

void prepare_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create '" + dir.string() + "': " + ec.message());
}

// Everything shared by commands that train: the config file, flag overrides
// and the resolved configuration.
struct RunSettings {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value, applied after the file
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<double> learning_rate;
  std::optional<std::size_t> batch_size;
  std::optional<std::string> fusion;
  bool parallel_folds = false;

  ModelConfig model;
  TrainConfig train;

  void resolve() {
    KeyValues kv;
    if (!config_path.empty()) kv = parse_key_values(read_file(config_path));
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos)
        throw Error(ErrorCode::InvalidValue, "--set expects key=value, got '" + o + "'");
      auto one = parse_key_values(o);
      for (auto& [k, v] : one) kv[k] = v;
    }
    if (seed) kv["seed"] = std::to_string(*seed);
    if (epochs) kv["epochs"] = std::to_string(*epochs);
    if (learning_rate) kv["learning_rate"] = format_double(*learning_rate);
    if (batch_size) kv["batch_size"] = std::to_string(*batch_size);
    if (fusion) kv["fusion"] = *fusion;
    model = model_config_from(kv);
    train = train_config_from(kv);
    if (!kv.empty()) throw Error(ErrorCode::InvalidValue, "unknown config key '" + kv.begin()->first + "'");
  }

  std::string effective_text() const { return to_text(model) + to_text(train); }
};

void add_run_options(CLI::App* cmd, RunSettings& s) {
  cmd->add_option("--config", s.config_path, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", s.overrides, "override one config key (key=value), repeatable");
  cmd->add_option("--seed", s.seed, "root random seed");
  cmd->add_option("--epochs", s.epochs, "training epochs");
  cmd->add_option("--lr", s.learning_rate, "Adam learning rate");
  cmd->add_option("--batch-size", s.batch_size, "minibatch size");
  cmd->add_option("--fusion", s.fusion, "concat | sum | average | hadamard | tfn");
}

class Manifest {
 public:
  explicit Manifest(std::string command) { doc_["command"] = std::move(command); }

  void config(const RunSettings& s) {
    doc_["config_file"] = s.config_path.empty() ? json(nullptr) : json(s.config_path);
    doc_["config_file_hash"] = s.config_path.empty() ? json(nullptr) : json(file_hash(s.config_path));
    doc_["config_hash"] = hex64(fnv1a(s.effective_text()));
    doc_["seed"] = s.train.seed;
    doc_["config"] = s.effective_text();
  }
  void input(const std::string& role, const std::string& path) {
    doc_["data"][role] = {{"path", path}, {"fnv1a64", file_hash(path)}};
  }
  void seed(std::uint64_t s) { doc_["seed"] = s; }
  void note(const std::string& key, json value) { doc_[key] = std::move(value); }
  void warn(const std::string& message) {
    std::cerr << "warning: " << message << "\n";
    warnings_.push_back(message);
  }
  std::size_t warnings() const { return warnings_.size(); }

  void write(const fs::path& dir) {
    doc_["warnings"] = warnings_.size();
    doc_["warning_messages"] = warnings_;
    doc_["version"] = kVersion;
    doc_["timestamp"] = utc_timestamp();
    open_out(dir / "manifest.json") << doc_.dump(2) << "\n";
  }

 private:
  json doc_;
  std::vector<std::string> warnings_;
};

LogFn stderr_log(bool quiet) {
  if (quiet) return {};
  return [](std::string_view line) { std::cerr << line << "\n"; };
}

EncodedDataset load_encoded(const std::string& path, const ModelConfig& model) {
  return encode_dataset(load_dataset(path), model);
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  auto out = open_out(path);
  body(out);
}

void write_report_files(const fs::path& dir, const std::string& name, const EvalReport& report, Manifest& manifest) {
  write_file(dir / "folds.csv", [&](std::ostream& o) { write_fold_table(o, report); });
  write_file(dir / "results.csv", [&](std::ostream& o) { write_results_table(o, {{name, report}}); });
  for (const auto& f : report.folds) {
    const std::string stem = "fold" + std::to_string(f.fold);
    write_file(dir / (stem + "_loss.csv"), [&](std::ostream& o) { write_loss_curve(o, f.loss_curve); });
    write_file(dir / (stem + "_scatter.csv"), [&](std::ostream& o) { write_scatter(o, f.y, f.y_hat); });
  }
  for (const auto& f : report.folds)
    if (std::isnan(f.pearson)) manifest.warn("fold " + std::to_string(f.fold) + ": pearson undefined (constant values)");
}

// ---- commands -----------------------------------------------------------------

struct PrepareArgs {
  std::string affinity, descriptors, out;
};

int cmd_prepare(const PrepareArgs& a) {
  const fs::path dir(a.out);
  const auto records = read_affinity_records(a.affinity);
  if (records.empty()) throw Error(ErrorCode::NoRecords, "no records in '" + a.affinity + "'");
  const auto table = read_descriptor_table(a.descriptors);
  FilterReport report;
  const auto dataset = prepare_dataset(records, table, report);
  prepare_out_dir(dir);
  Manifest manifest("prepare");
  manifest.input("affinity", a.affinity);
  manifest.input("descriptors", a.descriptors);
  save_dataset((dir / "dataset.bin").string(), dataset);
  const auto summary = summarize(dataset);
  write_file(dir / "summary.csv", [&](std::ostream& o) { write_summary(o, summary); });
  write_file(dir / "histogram.csv", [&](std::ostream& o) { write_histogram(o, summary); });
  write_file(dir / "drops.csv", [&](std::ostream& o) {
    o << "record,reason\n";
    for (const auto& d : report.drops) o << d.index << "," << d.reason << "\n";
  });
  manifest.note("filter", {{"input", report.input},
                           {"kept", report.kept},
                           {"negative_affinity", report.negative_affinity},
                           {"no_descriptor", report.no_descriptor},
                           {"bad_smiles", report.bad_smiles},
                           {"duplicates", report.duplicates}});
  if (report.duplicates > 0)
    manifest.warn(std::to_string(report.duplicates) + " duplicate (smiles, pdb_id, measure) records kept");
  manifest.write(dir);
  std::cout << "kept " << dataset.size() << " of " << report.input << " records (" << report.drops.size()
            << " dropped)\n";
  return 0;
}

struct SummarizeArgs {
  std::string data, out;
  double bin_width = 0.5;
};

int cmd_summarize(const SummarizeArgs& a) {
  const auto dataset = load_dataset(a.data);
  const fs::path dir(a.out);
  prepare_out_dir(dir);
  Manifest manifest("summarize");
  manifest.input("dataset", a.data);
  const auto summary = summarize(dataset, a.bin_width);
  write_file(dir / "summary.csv", [&](std::ostream& o) { write_summary(o, summary); });
  write_file(dir / "histogram.csv", [&](std::ostream& o) { write_histogram(o, summary); });
  manifest.write(dir);
  write_summary(std::cout, summary);
  return 0;
}

struct TrainArgs {
  std::string data, out;
  std::optional<std::size_t> fold;
  std::size_t k = 5;
  bool quiet = false;
};

int cmd_train(TrainArgs& a, RunSettings& s) {
  s.resolve();
  const auto data = load_encoded(a.data, s.model);
  const fs::path dir(a.out);
  prepare_out_dir(dir);
  Manifest manifest("train");
  manifest.config(s);
  manifest.input("dataset", a.data);

  std::vector<std::size_t> train_idx, test_idx;
  if (a.fold) {
    const auto split = kfold_split(data.size(), a.k, derive_seed(s.train.seed, 100));
    if (*a.fold >= a.k) throw Error(ErrorCode::InvalidValue, "--fold must be below --k");
    train_idx = split.train_indices(*a.fold);
    test_idx = split.test_indices(*a.fold);
    manifest.note("fold", *a.fold);
    manifest.note("k", a.k);
  } else {
    train_idx.resize(data.size());
    std::iota(train_idx.begin(), train_idx.end(), std::size_t{0});
  }
  const auto result = train(data, train_idx, s.model, s.train, {}, stderr_log(a.quiet));
  for (const auto& name : result.degenerate_descriptors)
    manifest.warn("descriptor " + name + " has a degenerate training range and was zeroed");
  save_checkpoint((dir / "model.ckpt").string(), {s.model, result.params, result.stats});
  write_file(dir / "loss.csv", [&](std::ostream& o) { write_loss_curve(o, result.loss_curve); });
  if (!test_idx.empty()) {
    const auto samples = make_samples(data, test_idx, result.stats);
    const auto y_hat = predict(result.params, s.model, samples, s.train.micro_batch);
    std::vector<double> y;
    for (auto i : test_idx) y.push_back(data.targets[i]);
    write_file(dir / "scatter.csv", [&](std::ostream& o) { write_scatter(o, y, y_hat); });
    json metrics = {{"rmse", rmse(y, y_hat)}};
    try {
      metrics["pearson"] = pearson(y, y_hat);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ZeroVariance) throw;
      metrics["pearson"] = nullptr;
      manifest.warn("pearson undefined (constant values)");
    }
    manifest.note("metrics", metrics);
    std::cout << "test rmse " << metrics["rmse"].get<double>() << "\n";
  }
  manifest.note("steps", result.steps);
  manifest.write(dir);
  return 0;
}

struct CvArgs {
  std::string data, out;
  std::size_t k = 5;
  bool checkpoints = false;
  bool quiet = false;
};

int cmd_cv(CvArgs& a, RunSettings& s) {
  s.resolve();
  const auto data = load_encoded(a.data, s.model);
  const fs::path dir(a.out);
  prepare_out_dir(dir);
  Manifest manifest("cv");
  manifest.config(s);
  manifest.input("dataset", a.data);
  CvOptions options;
  options.k = a.k;
  options.parallel_folds = s.parallel_folds;
  options.keep_params = a.checkpoints;
  options.log = stderr_log(a.quiet);
  const auto report = cross_validate(data, s.model, s.train, options);
  write_report_files(dir, "DynamicDTA", report, manifest);
  if (a.checkpoints)
    for (const auto& f : report.folds)
      save_checkpoint((dir / ("fold" + std::to_string(f.fold) + ".ckpt")).string(), {s.model, f.params, f.stats});
  manifest.note("k", a.k);
  manifest.write(dir);
  write_results_table(std::cout, {{"DynamicDTA", report}});
  return 0;
}

struct AblateArgs {
  std::string data, out, set = "components";
  std::size_t k = 5;
  bool quiet = false;
};

int cmd_ablate(AblateArgs& a, RunSettings& s) {
  s.resolve();
  std::vector<NamedConfig> configs;
  if (a.set == "components" || a.set == "all") configs = component_ablations(s.model);
  if (a.set == "fusion" || a.set == "all") {
    auto f = fusion_ablations(s.model);
    configs.insert(configs.end(), f.begin(), f.end());
  }
  if (configs.empty()) throw Error(ErrorCode::InvalidValue, "--set must be components, fusion or all");
  const auto data = load_encoded(a.data, s.model);
  const fs::path dir(a.out);
  prepare_out_dir(dir);
  Manifest manifest("ablate");
  manifest.config(s);
  manifest.input("dataset", a.data);
  manifest.note("set", a.set);
  CvOptions options;
  options.k = a.k;
  options.parallel_folds = s.parallel_folds;
  options.log = stderr_log(a.quiet);
  const auto rows = ablate(data, configs, s.train, options);
  write_file(dir / "results.csv", [&](std::ostream& o) { write_results_table(o, rows); });
  manifest.write(dir);
  write_results_table(std::cout, rows);
  return 0;
}

struct SweepArgs {
  std::string data, out, parameter;
  std::vector<double> values;
  std::size_t k = 5;
  bool quiet = false;
};

int cmd_sweep(SweepArgs& a, RunSettings& s) {
  s.resolve();
  const auto p = parse_sweep_parameter(a.parameter);
  const auto values = a.values.empty() ? sweep_grid(p) : a.values;
  for (double v : values) apply_sweep_value(s.model, p, v);
  const auto data = load_encoded(a.data, s.model);
  const fs::path dir(a.out);
  prepare_out_dir(dir);
  Manifest manifest("sweep");
  manifest.config(s);
  manifest.input("dataset", a.data);
  manifest.note("parameter", std::string(to_string(p)));
  manifest.note("values", values);
  CvOptions options;
  options.k = a.k;
  options.parallel_folds = s.parallel_folds;
  options.log = stderr_log(a.quiet);
  const auto rows = sweep(data, s.model, p, values, s.train, options);
  write_file(dir / "results.csv", [&](std::ostream& o) { write_results_table(o, rows); });
  manifest.write(dir);
  write_results_table(std::cout, rows);
  return 0;
}

struct PredictArgs {
  std::string checkpoint, candidates, descriptors, out;
};

struct Prediction {
  std::size_t input_order;
  std::string smiles, pdb_id;
  double value;
};

int cmd_predict(const PredictArgs& a) {
  const auto ckpt = load_checkpoint(a.checkpoint);
  if (!ckpt.stats) throw Error(ErrorCode::MalformedInput, "checkpoint carries no normalization stats");
  const auto table = read_descriptor_table(a.descriptors);
  std::ifstream in(a.candidates);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + a.candidates + "'");
  const auto csv = read_csv(in, a.candidates);
  const std::size_t c_smiles = csv.column("smiles"), c_seq = csv.column("protein_sequence"),
                    c_pdb = csv.column("pdb_id");
  const fs::path dir(a.out);
  prepare_out_dir(dir);
  Manifest manifest("predict");
  manifest.input("checkpoint", a.checkpoint);
  manifest.input("candidates", a.candidates);
  manifest.input("descriptors", a.descriptors);

  std::vector<Sample> samples;
  std::vector<Prediction> rows;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    const std::string where = "line " + std::to_string(csv.line_numbers[r]);
    const DynamicDescriptor* d = table.find(row[c_pdb]);
    if (d == nullptr) {
      manifest.warn(where + ": no descriptor for pdb_id '" + row[c_pdb] + "', skipped");
      continue;
    }
    try {
      samples.push_back(make_sample(row[c_smiles], row[c_seq], normalize_for_model(*d, *ckpt.stats), ckpt.config));
    } catch (const Error& e) {
      manifest.warn(where + ": " + e.what() + ", skipped");
      continue;
    }
    rows.push_back({r, row[c_smiles], row[c_pdb], 0.0});
  }
  const auto y_hat = predict(ckpt.params, ckpt.config, samples);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].value = y_hat[i];
  std::stable_sort(rows.begin(), rows.end(), [](const auto& x, const auto& y) { return x.value > y.value; });
  write_file(dir / "predictions.csv", [&](std::ostream& o) {
    o << "rank,input_row,smiles,pdb_id,predicted_affinity\n" << std::setprecision(17);
    for (std::size_t i = 0; i < rows.size(); ++i)
      o << i + 1 << "," << rows[i].input_order + 1 << "," << rows[i].smiles << "," << rows[i].pdb_id << ","
        << rows[i].value << "\n";
  });
  manifest.note("ranked", rows.size());
  manifest.write(dir);
  std::cout << "ranked " << rows.size() << " candidates, " << manifest.warnings() << " skipped\n";
  return 0;
}

struct AttentionArgs {
  std::string checkpoint, smiles, sequence, pdb_id, descriptors, out;
  std::vector<double> raw_descriptors;
  std::size_t top = 0;
};

int cmd_export_attention(const AttentionArgs& a) {
  const auto ckpt = load_checkpoint(a.checkpoint);
  if (!ckpt.stats) throw Error(ErrorCode::MalformedInput, "checkpoint carries no normalization stats");
  DynamicDescriptor d;
  if (!a.raw_descriptors.empty()) {
    if (a.raw_descriptors.size() != kNumDescriptors)
      throw Error(ErrorCode::InvalidValue, "--descriptor-values expects 4 numbers");
    d = DynamicDescriptor::from_values({a.raw_descriptors[0], a.raw_descriptors[1], a.raw_descriptors[2],
                                        a.raw_descriptors[3]});
  } else if (!a.descriptors.empty() && !a.pdb_id.empty()) {
    const auto table = read_descriptor_table(a.descriptors);
    const DynamicDescriptor* found = table.find(a.pdb_id);
    if (found == nullptr) throw Error(ErrorCode::MalformedInput, "no descriptor for pdb_id '" + a.pdb_id + "'");
    d = *found;
  } else {
    throw Error(ErrorCode::InvalidValue, "give --descriptor-values or both --descriptors and --pdb-id");
  }
  const Sample sample = make_sample(a.smiles, a.sequence, normalize_for_model(d, *ckpt.stats), ckpt.config);
  const Sample* batch[] = {&sample};
  const auto result = forward(batch, ckpt.params, ckpt.config, Mode::Eval);
  const fs::path dir(a.out);
  prepare_out_dir(dir);
  Manifest manifest("export-attention");
  manifest.input("checkpoint", a.checkpoint);
  if (!a.descriptors.empty()) manifest.input("descriptors", a.descriptors);
  manifest.note("smiles", a.smiles);
  manifest.note("top", a.top);
  write_file(dir / "attention.csv", [&](std::ostream& o) { write_attention(o, result.attention[0], a.top); });
  manifest.note("predicted_affinity", result.predictions[0]);
  manifest.write(dir);
  return 0;
}

int exit_code(ErrorCode c) { return 10 + static_cast<int>(c); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Drug-target affinity prediction with protein dynamics descriptors"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  PrepareArgs prep;
  auto* c_prep = app.add_subcommand("prepare", "filter, join and cache affinity records");
  c_prep->add_option("--affinity", prep.affinity, "affinity table")->required()->check(CLI::ExistingFile);
  c_prep->add_option("--descriptors", prep.descriptors, "descriptor table")->required()->check(CLI::ExistingFile);
  c_prep->add_option("--out", prep.out, "output directory")->required();

  SummarizeArgs summ;
  auto* c_summ = app.add_subcommand("summarize", "dataset statistics and affinity histogram");
  c_summ->add_option("--data", summ.data, "dataset cache")->required()->check(CLI::ExistingFile);
  c_summ->add_option("--out", summ.out, "output directory")->required();
  c_summ->add_option("--bin-width", summ.bin_width, "histogram bin width")->check(CLI::PositiveNumber);

  RunSettings run;
  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "train one model (all records, or one fold's training part)");
  c_train->add_option("--data", tr.data, "dataset cache")->required()->check(CLI::ExistingFile);
  c_train->add_option("--out", tr.out, "output directory")->required();
  c_train->add_option("--fold", tr.fold, "hold out this fold and evaluate on it");
  c_train->add_option("--k", tr.k, "number of folds for --fold");
  c_train->add_flag("--quiet", tr.quiet, "no progress output");
  add_run_options(c_train, run);

  CvArgs cv;
  auto* c_cv = app.add_subcommand("cv", "k-fold cross-validation");
  c_cv->add_option("--data", cv.data, "dataset cache")->required()->check(CLI::ExistingFile);
  c_cv->add_option("--out", cv.out, "output directory")->required();
  c_cv->add_option("--k", cv.k, "number of folds");
  c_cv->add_flag("--checkpoints", cv.checkpoints, "write one checkpoint per fold");
  c_cv->add_flag("--parallel-folds", run.parallel_folds, "train folds concurrently");
  c_cv->add_flag("--quiet", cv.quiet, "no progress output");
  add_run_options(c_cv, run);

  AblateArgs ab;
  auto* c_ab = app.add_subcommand("ablate", "component or fusion ablation table");
  c_ab->add_option("--data", ab.data, "dataset cache")->required()->check(CLI::ExistingFile);
  c_ab->add_option("--out", ab.out, "output directory")->required();
  c_ab->add_option("--set", ab.set, "components | fusion | all");
  c_ab->add_option("--k", ab.k, "number of folds");
  c_ab->add_flag("--parallel-folds", run.parallel_folds, "train folds concurrently");
  c_ab->add_flag("--quiet", ab.quiet, "no progress output");
  // --set is taken by the ablation family here; config overrides use --override.
  c_ab->add_option("--config", run.config_path, "key = value config file")->check(CLI::ExistingFile);
  c_ab->add_option("--override", run.overrides, "override one config key (key=value), repeatable");
  c_ab->add_option("--seed", run.seed, "root random seed");
  c_ab->add_option("--epochs", run.epochs, "training epochs");
  c_ab->add_option("--lr", run.learning_rate, "Adam learning rate");
  c_ab->add_option("--batch-size", run.batch_size, "minibatch size");

  SweepArgs sw;
  auto* c_sw = app.add_subcommand("sweep", "sensitivity sweep over P, D, H or L");
  c_sw->add_option("--data", sw.data, "dataset cache")->required()->check(CLI::ExistingFile);
  c_sw->add_option("--out", sw.out, "output directory")->required();
  c_sw->add_option("--param", sw.parameter, "P, D, H or L")->required();
  c_sw->add_option("--values", sw.values, "values to try (default: the standard grid)");
  c_sw->add_option("--k", sw.k, "number of folds");
  c_sw->add_flag("--parallel-folds", run.parallel_folds, "train folds concurrently");
  c_sw->add_flag("--quiet", sw.quiet, "no progress output");
  add_run_options(c_sw, run);

  PredictArgs pr;
  auto* c_pr = app.add_subcommand("predict", "rank candidate pairs with a trained checkpoint");
  c_pr->add_option("--checkpoint", pr.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  c_pr->add_option("--candidates", pr.candidates, "smiles, protein_sequence, pdb_id table")
      ->required()
      ->check(CLI::ExistingFile);
  c_pr->add_option("--descriptors", pr.descriptors, "descriptor table")->required()->check(CLI::ExistingFile);
  c_pr->add_option("--out", pr.out, "output directory")->required();

  AttentionArgs at;
  auto* c_at = app.add_subcommand("export-attention", "per-position attention weights for one pair");
  c_at->add_option("--checkpoint", at.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  c_at->add_option("--smiles", at.smiles, "ligand SMILES")->required();
  c_at->add_option("--sequence", at.sequence, "protein sequence")->required();
  c_at->add_option("--pdb-id", at.pdb_id, "descriptor row to use");
  c_at->add_option("--descriptors", at.descriptors, "descriptor table")->check(CLI::ExistingFile);
  c_at->add_option("--descriptor-values", at.raw_descriptors, "avg_rmsf avg_gyr div_se div_mm")->expected(4);
  c_at->add_option("--top", at.top, "keep only the top positions by mean weight");
  c_at->add_option("--out", at.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (c_prep->parsed()) return cmd_prepare(prep);
    if (c_summ->parsed()) return cmd_summarize(summ);
    if (c_train->parsed()) return cmd_train(tr, run);
    if (c_cv->parsed()) return cmd_cv(cv, run);
    if (c_ab->parsed()) return cmd_ablate(ab, run);
    if (c_sw->parsed()) return cmd_sweep(sw, run);
    if (c_pr->parsed()) return cmd_predict(pr);
    if (c_at->parsed()) return cmd_export_attention(at);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
