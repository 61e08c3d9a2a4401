#pragma once

// The affinity network: GCN ligand encoder, dilated-convolution sequence
// encoder, MLP descriptor encoder, bidirectional multi-head cross-attention,
// fusion and a fully connected regression head.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dyndta/config.hpp"
#include "dyndta/protein.hpp"
#include "dyndta/smiles.hpp"
#include "dyndta/tensor.hpp"

namespace dyndta {

enum class FusionVariant { Concat, Sum, Average, Hadamard, Tfn };

inline constexpr std::array<FusionVariant, 5> kAllFusionVariants = {
    FusionVariant::Concat, FusionVariant::Sum, FusionVariant::Average, FusionVariant::Hadamard, FusionVariant::Tfn};

std::string_view to_string(FusionVariant v) noexcept;
// Accepts the names produced by to_string. Throws UnknownVariant.
FusionVariant parse_fusion_variant(std::string_view name);

struct ModelConfig {
  std::size_t embed_dim = 64;
  std::size_t gcn_layers = 3;
  std::size_t attention_heads = 4;
  double dropout = 0.2;
  std::size_t dilation_rate = 4;
  // false: every conv layer uses dilation 1.
  bool dilated = true;
  std::vector<std::size_t> conv_kernels = {7, 7, 7};
  // Output channels of all but the last conv layer; the last emits embed_dim.
  std::vector<std::size_t> conv_channels = {32, 64};
  std::size_t seq_vocab = kSequenceVocabulary;
  std::size_t max_seq_len = kMaxSequenceLength;
  std::vector<std::size_t> mlp_hidden = {32};
  std::vector<std::size_t> head_hidden = {512, 128};
  FusionVariant fusion = FusionVariant::Tfn;
  std::size_t fusion_dim = 64;
  // Dynamic-side queries attend over sequence positions instead of the
  // pooled target vector.
  bool attend_pre_pool = true;
  // Masked descriptors are zeroed after normalization.
  std::array<bool, kNumDescriptors> descriptor_mask{};

  // Throws InvalidValue naming the offending field.
  void validate() const;
  std::size_t head_width() const { return embed_dim / attention_heads; }
  std::size_t conv_dilation(std::size_t layer) const;
  // Sequence length after the conv stack.
  std::size_t conv_output_length() const;
  std::size_t fused_width() const;

  bool operator==(const ModelConfig&) const = default;
};

// Reads model keys from kv and erases the ones it consumed. Missing keys keep
// their defaults.
ModelConfig model_config_from(KeyValues& kv, ModelConfig base = {});
std::string to_text(const ModelConfig& config);

// Named parameter tensors in a fixed creation order.
class ModelParams {
 public:
  void add(std::string name, Tensor tensor);
  const Tensor& get(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<std::pair<std::string, Tensor>>& entries() const noexcept { return entries_; }
  std::size_t num_scalars() const;
  void zero_grad();
  // Deep copy; the copies require grad like the originals.
  ModelParams clone() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

// Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

struct Sample {
  MolecularGraph graph;
  std::vector<int> sequence_ids;  // length max_seq_len
  std::array<double, kNumDescriptors> descriptors{};  // normalized
};

Sample make_sample(std::string_view smiles, std::string_view sequence,
                   const std::array<double, kNumDescriptors>& normalized_descriptors, const ModelConfig& config);

// Ligand vector [d].
Tensor graph_encoder(const MolecularGraph& graph, const ModelParams& params, const ModelConfig& config);

struct SequenceEncoding {
  Tensor pooled;       // [d]
  Tensor feature_map;  // [N_out x d]
};

SequenceEncoding sequence_encoder(std::span<const int> ids, const ModelParams& params, const ModelConfig& config);

// Descriptor vector [d]. The descriptor mask is applied here.
Tensor vector_encoder(const std::array<double, kNumDescriptors>& descriptors, const ModelParams& params,
                      const ModelConfig& config);

// Per-head softmax weights over keys, one row per head.
struct AttentionWeights {
  // Target queries over dynamic keys (always one key).
  std::vector<std::vector<double>> target;
  // Dynamic queries over target keys (sequence positions when attend_pre_pool).
  std::vector<std::vector<double>> dynamic;
};

struct CrossAttentionOutput {
  Tensor target;   // X_t' [d]
  Tensor dynamic;  // X_d' [d]
  AttentionWeights weights;
};

// target_keys: [N x d] keys/values for the dynamic-side queries; pass an
// undefined tensor to attend over the pooled target vector.
CrossAttentionOutput cross_attention(const Tensor& target, const Tensor& dynamic, const Tensor& target_keys,
                                     const ModelParams& params, const ModelConfig& config);

// Flat outer product of the 1-augmented vectors, length (d+1)^3, with the
// target index slowest and the ligand index fastest.
Tensor tfn_tensor(const Tensor& target, const Tensor& dynamic, const Tensor& ligand);
// tfn_tensor followed by the fusion affine map, width fusion_dim.
Tensor tfn_fuse(const Tensor& target, const Tensor& dynamic, const Tensor& ligand, const ModelParams& params);
Tensor fuse_variant(const Tensor& target, const Tensor& dynamic, const Tensor& ligand, FusionVariant variant,
                    const ModelParams& params);

enum class Mode { Train, Eval };

struct ForwardResult {
  Tensor predictions;  // [B]
  std::vector<AttentionWeights> attention;
};

// Samples are processed independently; dropout draws from rng in Train mode.
ForwardResult forward(std::span<const Sample* const> batch, const ModelParams& params, const ModelConfig& config,
                      Mode mode, std::mt19937_64* rng = nullptr);

// Checkpoint, little-endian:
//   magic "DDTACKPT" | u32 version | str config_text | u8 has_stats |
//   f64 x4 min | f64 x4 max | u32 count | count x (str name | u32 rank |
//   u64 x rank dims | f64 x numel values)
//   str: u32 byte length | bytes
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  std::optional<NormalizationStats> stats;
};

void save_checkpoint(std::ostream& out, const Checkpoint& ckpt);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
// Rebuilds parameters from the stored config and checks every stored tensor
// against the expected name and shape (ShapeMismatch otherwise).
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::string& path);

// Columns: direction, head, position_index, weight. With top > 0 only the top
// positions of the dynamic direction are written, ranked by the head-averaged
// weight, with head reported as "mean".
void write_attention(std::ostream& out, const AttentionWeights& weights, std::size_t top = 0);

}  // namespace dyndta
