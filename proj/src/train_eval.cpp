#include "dyndta/train_eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <thread>

#include "dyndta/error.hpp"

namespace dyndta {

namespace {

[[noreturn]] void invalid(std::string_view field, const std::string& why) {
  throw Error(ErrorCode::InvalidValue, "config field '" + std::string(field) + "': " + why);
}

void check_pair(std::span<const double> y, std::span<const double> y_hat, const char* what) {
  if (y.size() != y_hat.size()) {
    throw Error(ErrorCode::LengthMismatch, std::string(what) + ": lengths " + std::to_string(y.size()) + " and " +
                                               std::to_string(y_hat.size()));
  }
  if (y.empty()) throw Error(ErrorCode::EmptyInput, std::string(what) + " needs at least one pair");
}

void shuffle_indices(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

std::vector<double> gather_targets(const EncodedDataset& data, std::span<const std::size_t> idx) {
  std::vector<double> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(data.targets[i]);
  return out;
}

double mse(std::span<const double> y, std::span<const double> y_hat) {
  const double r = rmse(y, y_hat);
  return r * r;
}

void log_line(const LogFn& log, const std::string& line) {
  if (log) log(line);
}

}  // namespace

// ---- config -----------------------------------------------------------------

void TrainConfig::validate() const {
  if (epochs == 0) invalid("epochs", "must be positive");
  if (batch_size == 0) invalid("batch_size", "must be positive");
  if (micro_batch == 0) invalid("micro_batch", "must be positive");
  if (!(learning_rate >= 0.0 && learning_rate < 1.0)) invalid("learning_rate", "must lie in [0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) invalid("beta1", "must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) invalid("beta2", "must lie in [0, 1)");
  if (!(epsilon > 0.0)) invalid("epsilon", "must be positive");
}

TrainConfig train_config_from(KeyValues& kv, TrainConfig c) {
  auto take = [&kv](std::string_view key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto size_field = [&](std::string_view key, std::size_t& dst) {
    if (auto v = take(key)) {
      const long long n = parse_int_field(key, *v);
      if (n < 0) invalid(key, "must be non-negative");
      dst = static_cast<std::size_t>(n);
    }
  };
  size_field("epochs", c.epochs);
  size_field("batch_size", c.batch_size);
  if (auto v = take("learning_rate")) c.learning_rate = parse_double_field("learning_rate", *v);
  if (auto v = take("beta1")) c.beta1 = parse_double_field("beta1", *v);
  if (auto v = take("beta2")) c.beta2 = parse_double_field("beta2", *v);
  if (auto v = take("epsilon")) c.epsilon = parse_double_field("epsilon", *v);
  if (auto v = take("seed")) {
    const long long s = parse_int_field("seed", *v);
    if (s < 0) invalid("seed", "must be non-negative");
    c.seed = static_cast<std::uint64_t>(s);
  }
  size_field("patience", c.patience);
  size_field("micro_batch", c.micro_batch);
  c.validate();
  return c;
}

std::string to_text(const TrainConfig& c) {
  std::string out;
  auto line = [&out](std::string_view key, const std::string& value) {
    out += std::string(key) + " = " + value + "\n";
  };
  line("epochs", std::to_string(c.epochs));
  line("batch_size", std::to_string(c.batch_size));
  line("learning_rate", format_double(c.learning_rate));
  line("beta1", format_double(c.beta1));
  line("beta2", format_double(c.beta2));
  line("epsilon", format_double(c.epsilon));
  line("seed", std::to_string(c.seed));
  line("patience", std::to_string(c.patience));
  line("micro_batch", std::to_string(c.micro_batch));
  return out;
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) noexcept {
  // splitmix64 finalizer over the combined value.
  std::uint64_t z = root + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// ---- optimizer --------------------------------------------------------------

AdamState make_adam_state(const ModelParams& params) {
  AdamState s;
  for (const auto& [name, t] : params.entries()) {
    s.m.emplace_back(t.numel(), 0.0);
    s.v.emplace_back(t.numel(), 0.0);
  }
  return s;
}

void adam_step(ModelParams& params, AdamState& state, const TrainConfig& config) {
  const auto& entries = params.entries();
  if (state.m.size() != entries.size()) throw Error(ErrorCode::InvalidArgument, "Adam state does not match parameters");
  for (const auto& [name, t] : entries) {
    if (!t.has_grad()) throw Error(ErrorCode::MissingGradient, "parameter '" + name + "' has no gradient");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t p = 0; p < entries.size(); ++p) {
    Tensor w = entries[p].second;
    auto g = w.grad();
    auto values = w.mutable_data();
    auto& m = state.m[p];
    auto& v = state.v[p];
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      values[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

// ---- metrics ----------------------------------------------------------------

double rmse(std::span<const double> y, std::span<const double> y_hat) {
  check_pair(y, y_hat, "rmse");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y_hat[i] - y[i];
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(y.size()));
}

double pearson(std::span<const double> y, std::span<const double> y_hat) {
  check_pair(y, y_hat, "pearson");
  const double n = static_cast<double>(y.size());
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  const double mp = std::accumulate(y_hat.begin(), y_hat.end(), 0.0) / n;
  double cov = 0.0, sy = 0.0, sp = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double a = y[i] - my;
    const double b = y_hat[i] - mp;
    cov += a * b;
    sy += a * a;
    sp += b * b;
  }
  if (sy == 0.0 || sp == 0.0) throw Error(ErrorCode::ZeroVariance, "pearson: one of the vectors is constant");
  return std::clamp(cov / (std::sqrt(sy) * std::sqrt(sp)), -1.0, 1.0);
}

// ---- datasets ----------------------------------------------------------------

EncodedDataset encode_dataset(const PreparedDataset& dataset, const ModelConfig& config) {
  EncodedDataset out;
  out.graphs.reserve(dataset.size());
  for (const auto& p : dataset) {
    out.graphs.push_back(smiles_to_graph(p.record.smiles));
    out.sequences.push_back(encode_sequence(p.record.protein_sequence, config.max_seq_len));
    out.descriptors.push_back(p.descriptor);
    out.targets.push_back(p.record.affinity);
  }
  return out;
}

std::array<double, kNumDescriptors> normalize_for_model(const DynamicDescriptor& d, const NormalizationStats& stats) {
  NormalizationStats usable = stats;
  std::array<bool, kNumDescriptors> degenerate{};
  for (std::size_t i = 0; i < kNumDescriptors; ++i) {
    if (stats.degenerate(i)) {
      degenerate[i] = true;
      usable.min[i] = 0.0;
      usable.max[i] = 1.0;
    }
  }
  auto out = normalize(d, usable);
  for (std::size_t i = 0; i < kNumDescriptors; ++i)
    if (degenerate[i]) out[i] = 0.0;
  return out;
}

std::vector<Sample> make_samples(const EncodedDataset& data, std::span<const std::size_t> indices,
                                 const NormalizationStats& stats) {
  std::vector<Sample> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    Sample s;
    s.graph = data.graphs[i];
    s.sequence_ids = data.sequences[i];
    s.descriptors = normalize_for_model(data.descriptors[i], stats);
    out.push_back(std::move(s));
  }
  return out;
}

// ---- training ---------------------------------------------------------------

std::vector<double> predict(const ModelParams& params, const ModelConfig& config, std::span<const Sample> samples,
                            std::size_t micro_batch) {
  std::vector<double> out;
  out.reserve(samples.size());
  std::vector<const Sample*> chunk;
  for (std::size_t start = 0; start < samples.size(); start += micro_batch) {
    chunk.clear();
    for (std::size_t i = start; i < std::min(samples.size(), start + micro_batch); ++i) chunk.push_back(&samples[i]);
    const auto r = forward(chunk, params, config, Mode::Eval);
    out.insert(out.end(), r.predictions.data().begin(), r.predictions.data().end());
  }
  return out;
}

TrainResult train(const EncodedDataset& data, std::span<const std::size_t> train_idx, const ModelConfig& model,
                  const TrainConfig& config, std::span<const std::size_t> validation_idx, const LogFn& log) {
  model.validate();
  config.validate();
  if (train_idx.empty()) throw Error(ErrorCode::EmptyInput, "train needs at least one training record");

  TrainResult result;
  std::vector<DynamicDescriptor> fit_set;
  fit_set.reserve(train_idx.size());
  for (std::size_t i : train_idx) fit_set.push_back(data.descriptors[i]);
  result.stats = fit_normalization(fit_set);
  for (std::size_t i = 0; i < kNumDescriptors; ++i)
    if (result.stats.degenerate(i)) result.degenerate_descriptors.emplace_back(kDescriptorNames[i]);

  const std::vector<Sample> samples = make_samples(data, train_idx, result.stats);
  const std::vector<double> targets = gather_targets(data, train_idx);
  const std::vector<Sample> val_samples = make_samples(data, validation_idx, result.stats);
  const std::vector<double> val_targets = gather_targets(data, validation_idx);

  result.params = init_params(model, derive_seed(config.seed, 1));
  std::mt19937_64 shuffle_rng(derive_seed(config.seed, 2));
  std::mt19937_64 dropout_rng(derive_seed(config.seed, 3));
  AdamState adam = make_adam_state(result.params);

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<const Sample*> chunk;
  std::vector<double> chunk_targets;

  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::optional<ModelParams> best_params;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_indices(order, shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double batch = static_cast<double>(end - start);
      result.params.zero_grad();
      for (std::size_t mb = start; mb < end; mb += config.micro_batch) {
        const std::size_t mb_end = std::min(end, mb + config.micro_batch);
        chunk.clear();
        chunk_targets.clear();
        for (std::size_t i = mb; i < mb_end; ++i) {
          chunk.push_back(&samples[order[i]]);
          chunk_targets.push_back(targets[order[i]]);
        }
        Tape tape;
        const Tensor pred = forward(chunk, result.params, model, Mode::Train, &dropout_rng).predictions;
        const Tensor y = Tensor::from({chunk.size()}, chunk_targets);
        // Weighted so the accumulated gradient equals the full-batch MSE's.
        tape.backward(scale(mse_loss(pred, y), static_cast<double>(chunk.size()) / batch));
      }
      adam_step(result.params, adam, config);
      ++result.steps;
    }
    result.epochs_run = epoch + 1;
    result.loss_curve.push_back(mse(targets, predict(result.params, model, samples, config.micro_batch)));

    if (!val_samples.empty()) {
      const double v = rmse(val_targets, predict(result.params, model, val_samples, config.micro_batch));
      result.validation_curve.push_back(v);
      if (config.patience > 0) {
        if (v < best_val) {
          best_val = v;
          since_best = 0;
          best_params = result.params.clone();
        } else if (++since_best >= config.patience) {
          log_line(log, "early stop at epoch " + std::to_string(epoch + 1));
          break;
        }
      }
    }
    if (log && ((epoch + 1) % 10 == 0 || epoch + 1 == config.epochs)) {
      log("epoch " + std::to_string(epoch + 1) + " train_mse " + format_double(result.loss_curve.back()));
    }
  }
  if (best_params) result.params = std::move(*best_params);
  result.params.zero_grad();
  return result;
}

// ---- cross-validation -------------------------------------------------------

std::pair<double, double> mean_std(std::span<const double> values) {
  if (values.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

EvalReport cross_validate(const EncodedDataset& data, const ModelConfig& model, const TrainConfig& config,
                          const CvOptions& options) {
  model.validate();
  config.validate();
  const FoldSplit split = kfold_split(data.size(), options.k, derive_seed(config.seed, 100));
  EvalReport report;
  report.folds.resize(options.k);

  auto run_fold = [&](std::size_t f) {
    FoldResult& fr = report.folds[f];
    fr.fold = f;
    const auto train_idx = split.train_indices(f);
    fr.test_indices = split.test_indices(f);
    fr.train_size = train_idx.size();
    fr.test_size = fr.test_indices.size();
    TrainConfig fold_config = config;
    fold_config.seed = derive_seed(config.seed, 200 + f);
    LogFn fold_log;
    if (options.log && !options.parallel_folds) {
      fold_log = [&options, f](std::string_view line) {
        options.log("fold " + std::to_string(f) + ": " + std::string(line));
      };
    }
    TrainResult tr = train(data, train_idx, model, fold_config, {}, fold_log);
    const auto test = make_samples(data, fr.test_indices, tr.stats);
    fr.y = gather_targets(data, fr.test_indices);
    fr.y_hat = predict(tr.params, model, test, config.micro_batch);
    fr.rmse = rmse(fr.y, fr.y_hat);
    try {
      fr.pearson = pearson(fr.y, fr.y_hat);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ZeroVariance) throw;
      fr.pearson = std::numeric_limits<double>::quiet_NaN();
    }
    fr.loss_curve = std::move(tr.loss_curve);
    fr.stats = tr.stats;
    if (options.keep_params) fr.params = std::move(tr.params);
  };

  if (options.parallel_folds) {
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(options.k);
    for (std::size_t f = 0; f < options.k; ++f) {
      threads.emplace_back([&, f] {
        try {
          run_fold(f);
        } catch (...) {
          errors[f] = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  } else {
    for (std::size_t f = 0; f < options.k; ++f) run_fold(f);
  }

  std::vector<double> rm, rr;
  for (const auto& fr : report.folds) {
    rm.push_back(fr.rmse);
    rr.push_back(fr.pearson);
    if (std::isnan(fr.pearson)) ++report.warnings;
    log_line(options.log, "fold " + std::to_string(fr.fold) + " rmse " + format_double(fr.rmse) + " r " +
                              format_double(fr.pearson));
  }
  std::tie(report.rmse_mean, report.rmse_std) = mean_std(rm);
  std::tie(report.r_mean, report.r_std) = mean_std(rr);
  return report;
}

// ---- ablation and sweeps ----------------------------------------------------

std::vector<NamedConfig> component_ablations(const ModelConfig& base) {
  auto masked = [&base](std::string name, std::initializer_list<std::size_t> drop) {
    ModelConfig c = base;
    c.descriptor_mask = {};
    for (std::size_t i : drop) c.descriptor_mask[i] = true;
    return NamedConfig{std::move(name), c};
  };
  ModelConfig standard = base;
  standard.dilated = false;
  return {{"w/o Dilated", standard},
          masked("w/o RMSF+Gyr", {0, 1}),
          masked("w/o SE+MM", {2, 3}),
          masked("w/o RMSF+Gyr+SE", {0, 1, 2}),
          masked("w/o Gyr+SE+MM", {1, 2, 3}),
          {"DynamicDTA", base}};
}

std::vector<NamedConfig> fusion_ablations(const ModelConfig& base) {
  std::vector<NamedConfig> out;
  const char* names[] = {"Concat", "Sum", "Average", "Hadamard product", "TFN"};
  for (std::size_t i = 0; i < kAllFusionVariants.size(); ++i) {
    ModelConfig c = base;
    c.fusion = kAllFusionVariants[i];
    out.push_back({names[i], c});
  }
  return out;
}

std::vector<ResultRow> ablate(const EncodedDataset& data, const std::vector<NamedConfig>& configs,
                              const TrainConfig& config, const CvOptions& options) {
  std::vector<ResultRow> rows;
  for (const auto& nc : configs) {
    log_line(options.log, "configuration " + nc.name);
    rows.push_back({nc.name, cross_validate(data, nc.config, config, options)});
  }
  return rows;
}

SweepParameter parse_sweep_parameter(std::string_view name) {
  if (name.size() == 1) {
    switch (std::toupper(static_cast<unsigned char>(name[0]))) {
      case 'P': return SweepParameter::P;
      case 'D': return SweepParameter::D;
      case 'H': return SweepParameter::H;
      case 'L': return SweepParameter::L;
      default: break;
    }
  }
  throw Error(ErrorCode::InvalidValue, "unknown sweep parameter '" + std::string(name) + "' (expected P, D, H or L)");
}

std::string_view to_string(SweepParameter p) noexcept {
  switch (p) {
    case SweepParameter::P: return "P";
    case SweepParameter::D: return "D";
    case SweepParameter::H: return "H";
    case SweepParameter::L: return "L";
  }
  return "?";
}

std::vector<double> sweep_grid(SweepParameter p) {
  switch (p) {
    case SweepParameter::P: return {0.1, 0.2, 0.3, 0.4};
    case SweepParameter::D: return {2, 4, 6, 8};
    case SweepParameter::H: return {2, 4, 8, 16};
    case SweepParameter::L: return {1, 3, 5, 7};
  }
  return {};
}

ModelConfig apply_sweep_value(const ModelConfig& base, SweepParameter p, double value) {
  ModelConfig c = base;
  const std::string field(to_string(p));
  if (p == SweepParameter::P) {
    if (!(value >= 0.0 && value < 1.0)) invalid(field, "dropout must lie in [0, 1), got " + format_double(value));
    c.dropout = value;
  } else {
    if (!(value >= 1.0) || value != std::floor(value) || value > 1e9) {
      invalid(field, "expected a positive integer, got " + format_double(value));
    }
    const auto n = static_cast<std::size_t>(value);
    if (p == SweepParameter::D) c.dilation_rate = n;
    if (p == SweepParameter::L) c.gcn_layers = n;
    if (p == SweepParameter::H) {
      if (c.embed_dim % n != 0) {
        invalid(field, std::to_string(n) + " heads do not divide embed_dim " + std::to_string(c.embed_dim));
      }
      c.attention_heads = n;
    }
  }
  c.validate();
  return c;
}

std::vector<ResultRow> sweep(const EncodedDataset& data, const ModelConfig& base, SweepParameter p,
                             const std::vector<double>& values, const TrainConfig& config,
                             const CvOptions& options) {
  std::vector<ModelConfig> configs;
  for (double v : values) configs.push_back(apply_sweep_value(base, p, v));
  std::vector<ResultRow> rows;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::string name = std::string(to_string(p)) + "=" + format_double(values[i]);
    log_line(options.log, "configuration " + name);
    rows.push_back({name, cross_validate(data, configs[i], config, options)});
  }
  return rows;
}

// ---- result files -----------------------------------------------------------

void write_results_table(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << "configuration,rmse_mean,rmse_std,r_mean,r_std\n";
  for (const auto& r : rows) {
    out << r.configuration << ',' << format_double(r.report.rmse_mean) << ',' << format_double(r.report.rmse_std)
        << ',' << format_double(r.report.r_mean) << ',' << format_double(r.report.r_std) << '\n';
  }
}

void write_fold_table(std::ostream& out, const EvalReport& report) {
  out << "fold,rmse,pearson,train_size,test_size\n";
  for (const auto& f : report.folds) {
    out << f.fold << ',' << format_double(f.rmse) << ',' << format_double(f.pearson) << ',' << f.train_size << ','
        << f.test_size << '\n';
  }
}

void write_loss_curve(std::ostream& out, std::span<const double> curve) {
  out << "epoch,train_mse\n";
  for (std::size_t e = 0; e < curve.size(); ++e) out << e + 1 << ',' << format_double(curve[e]) << '\n';
}

void write_scatter(std::ostream& out, std::span<const double> y, std::span<const double> y_hat) {
  check_pair(y, y_hat, "write_scatter");
  out << "y,y_hat\n";
  for (std::size_t i = 0; i < y.size(); ++i) out << format_double(y[i]) << ',' << format_double(y_hat[i]) << '\n';
}

}  // namespace dyndta
