#pragma once

// Optimization, metrics, cross-validation, ablation and sensitivity sweeps.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dyndta/config.hpp"
#include "dyndta/data.hpp"
#include "dyndta/model.hpp"

namespace dyndta {

struct TrainConfig {
  std::size_t epochs = 1000;
  std::size_t batch_size = 512;
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 42;
  // 0 disables early stopping; otherwise stop after this many epochs without
  // a validation improvement and keep the best parameters.
  std::size_t patience = 0;
  // Samples per forward/backward pass inside a minibatch. Bounds memory only;
  // gradients are identical to a single full-batch pass.
  std::size_t micro_batch = 32;

  // Throws InvalidValue naming the offending field.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

TrainConfig train_config_from(KeyValues& kv, TrainConfig base = {});
std::string to_text(const TrainConfig& config);

// Independent 64-bit stream seeds derived from one root seed.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) noexcept;

// ---- optimizer --------------------------------------------------------------

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t step = 0;
};

AdamState make_adam_state(const ModelParams& params);

// One bias-corrected Adam update from the gradients accumulated on params.
// Throws MissingGradient if any parameter holds no gradient.
void adam_step(ModelParams& params, AdamState& state, const TrainConfig& config);

// ---- metrics ----------------------------------------------------------------

// Throws LengthMismatch or EmptyInput.
double rmse(std::span<const double> y, std::span<const double> y_hat);
// Throws LengthMismatch, EmptyInput or ZeroVariance.
double pearson(std::span<const double> y, std::span<const double> y_hat);

// ---- datasets ----------------------------------------------------------------

// Per-record model inputs that do not depend on the fold: parsed graphs and
// encoded sequences. Descriptors stay raw until a fold's stats are fitted.
struct EncodedDataset {
  std::vector<MolecularGraph> graphs;
  std::vector<std::vector<int>> sequences;
  std::vector<DynamicDescriptor> descriptors;
  std::vector<double> targets;

  std::size_t size() const noexcept { return targets.size(); }
};

EncodedDataset encode_dataset(const PreparedDataset& dataset, const ModelConfig& config);

// Descriptors whose training range is degenerate are set to 0 and counted.
std::array<double, kNumDescriptors> normalize_for_model(const DynamicDescriptor& d, const NormalizationStats& stats);

std::vector<Sample> make_samples(const EncodedDataset& data, std::span<const std::size_t> indices,
                                 const NormalizationStats& stats);

// ---- training ---------------------------------------------------------------

using LogFn = std::function<void(std::string_view)>;

struct TrainResult {
  ModelParams params;
  NormalizationStats stats;
  // Eval-mode MSE on the training samples after each epoch.
  std::vector<double> loss_curve;
  // Validation RMSE per epoch; empty without validation indices.
  std::vector<double> validation_curve;
  std::size_t steps = 0;
  std::size_t epochs_run = 0;
  // Descriptors with a degenerate training range (zeroed for this run).
  std::vector<std::string> degenerate_descriptors;
};

// Fits normalization on train_idx only, then runs minibatch Adam on MSE.
TrainResult train(const EncodedDataset& data, std::span<const std::size_t> train_idx, const ModelConfig& model,
                  const TrainConfig& config, std::span<const std::size_t> validation_idx = {}, const LogFn& log = {});

// Eval-mode predictions, computed in micro-batches.
std::vector<double> predict(const ModelParams& params, const ModelConfig& config, std::span<const Sample> samples,
                            std::size_t micro_batch = 32);

// ---- cross-validation -------------------------------------------------------

struct FoldResult {
  std::size_t fold = 0;
  double rmse = 0.0;
  double pearson = 0.0;  // NaN when a fold's targets or predictions are constant
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::vector<double> loss_curve;
  std::vector<std::size_t> test_indices;
  std::vector<double> y;
  std::vector<double> y_hat;
  NormalizationStats stats;
  // Trained parameters; empty unless CvOptions::keep_params is set.
  ModelParams params;
};

struct EvalReport {
  std::vector<FoldResult> folds;
  double rmse_mean = 0.0;
  double rmse_std = 0.0;  // sample standard deviation
  double r_mean = 0.0;
  double r_std = 0.0;
  std::size_t warnings = 0;
};

// Sample mean and standard deviation (n - 1 denominator; 0 for one value).
std::pair<double, double> mean_std(std::span<const double> values);

struct CvOptions {
  std::size_t k = 5;
  bool parallel_folds = false;
  bool keep_params = false;
  LogFn log;
};

EvalReport cross_validate(const EncodedDataset& data, const ModelConfig& model, const TrainConfig& config,
                          const CvOptions& options = {});

// ---- ablation and sweeps ----------------------------------------------------

struct NamedConfig {
  std::string name;
  ModelConfig config;
};

// w/o Dilated, w/o RMSF+Gyr, w/o SE+MM, w/o RMSF+Gyr+SE, w/o Gyr+SE+MM, full model.
std::vector<NamedConfig> component_ablations(const ModelConfig& base);
// Concat, Sum, Average, Hadamard product, TFN.
std::vector<NamedConfig> fusion_ablations(const ModelConfig& base);

struct ResultRow {
  std::string configuration;
  EvalReport report;
};

std::vector<ResultRow> ablate(const EncodedDataset& data, const std::vector<NamedConfig>& configs,
                              const TrainConfig& config, const CvOptions& options = {});

enum class SweepParameter { P, D, H, L };

// Accepts "P", "D", "H", "L" (case-insensitive). Throws InvalidValue.
SweepParameter parse_sweep_parameter(std::string_view name);
std::string_view to_string(SweepParameter p) noexcept;
// {0.1,0.2,0.3,0.4}, {2,4,6,8}, {2,4,8,16}, {1,3,5,7}.
std::vector<double> sweep_grid(SweepParameter p);
// Throws InvalidValue for values the model cannot take.
ModelConfig apply_sweep_value(const ModelConfig& base, SweepParameter p, double value);

std::vector<ResultRow> sweep(const EncodedDataset& data, const ModelConfig& base, SweepParameter p,
                             const std::vector<double>& values, const TrainConfig& config,
                             const CvOptions& options = {});

// ---- result files -----------------------------------------------------------

// configuration,rmse_mean,rmse_std,r_mean,r_std
void write_results_table(std::ostream& out, const std::vector<ResultRow>& rows);
// fold,rmse,pearson,train_size,test_size
void write_fold_table(std::ostream& out, const EvalReport& report);
// epoch,train_mse
void write_loss_curve(std::ostream& out, std::span<const double> curve);
// y,y_hat
void write_scatter(std::ostream& out, std::span<const double> y, std::span<const double> y_hat);

}  // namespace dyndta
