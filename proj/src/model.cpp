#include "dyndta/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>

#include "binary_io.hpp"
#include "dyndta/error.hpp"

namespace dyndta {

using namespace binio;

namespace {

constexpr const char* kCkptWhat = "checkpoint";
constexpr char kCkptMagic[8] = {'D', 'D', 'T', 'A', 'C', 'K', 'P', 'T'};

[[noreturn]] void invalid(std::string_view field, const std::string& why) {
  throw Error(ErrorCode::InvalidValue, "config field '" + std::string(field) + "': " + why);
}

std::string idx(std::string_view prefix, std::size_t i, std::string_view suffix = {}) {
  return std::string(prefix) + std::to_string(i) + std::string(suffix);
}

double glorot(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Tensor row(const Tensor& v) { return reshape(v, {1, v.numel()}); }

Tensor flat(const Tensor& v) { return reshape(v, {v.numel()}); }

Tensor affine(const Tensor& x, const ModelParams& p, const std::string& prefix) {
  return add_bias(matmul(x, p.get(prefix + ".W")), p.get(prefix + ".b"));
}

std::vector<double> copy_values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// One attention direction: queries from `query`, keys and values from the
// rows of `keys`. Returns the output projection [1 x d] and per-head weights.
Tensor attend(const Tensor& query, const Tensor& keys, const ModelParams& params, const ModelConfig& config,
              const std::string& q_side, const std::string& kv_side, std::vector<std::vector<double>>& weights) {
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(config.head_width()));
  std::vector<Tensor> heads;
  heads.reserve(config.attention_heads);
  weights.clear();
  for (std::size_t h = 0; h < config.attention_heads; ++h) {
    const Tensor q = matmul(query, params.get(idx("attn." + q_side + ".q", h)));
    const Tensor k = matmul(keys, params.get(idx("attn." + kv_side + ".k", h)));
    const Tensor v = matmul(keys, params.get(idx("attn." + kv_side + ".v", h)));
    const Tensor w = softmax_last(scale(matmul(q, transpose(k)), inv_sqrt_dk));
    weights.push_back(copy_values(w));
    heads.push_back(matmul(w, v));
  }
  return matmul(concat(heads), params.get("attn." + q_side + ".out"));
}

}  // namespace

std::string_view to_string(FusionVariant v) noexcept {
  switch (v) {
    case FusionVariant::Concat: return "concat";
    case FusionVariant::Sum: return "sum";
    case FusionVariant::Average: return "average";
    case FusionVariant::Hadamard: return "hadamard";
    case FusionVariant::Tfn: return "tfn";
  }
  return "?";
}

FusionVariant parse_fusion_variant(std::string_view name) {
  for (FusionVariant v : kAllFusionVariants)
    if (to_string(v) == name) return v;
  throw Error(ErrorCode::UnknownVariant, "unknown fusion variant '" + std::string(name) +
                                             "' (expected concat, sum, average, hadamard or tfn)");
}

// ---- config ----------------------------------------------------------------

std::size_t ModelConfig::conv_dilation(std::size_t layer) const {
  return (!dilated || layer == 0) ? 1 : dilation_rate;
}

std::size_t ModelConfig::conv_output_length() const {
  std::size_t shrink = 0;
  for (std::size_t l = 0; l < conv_kernels.size(); ++l) shrink += (conv_kernels[l] - 1) * conv_dilation(l);
  return max_seq_len > shrink ? max_seq_len - shrink : 0;
}

std::size_t ModelConfig::fused_width() const {
  switch (fusion) {
    case FusionVariant::Concat: return 3 * embed_dim;
    case FusionVariant::Tfn: return fusion_dim;
    default: return embed_dim;
  }
}

void ModelConfig::validate() const {
  auto positive = [](std::string_view field, std::size_t v) {
    if (v == 0) invalid(field, "must be positive");
  };
  positive("embed_dim", embed_dim);
  positive("gcn_layers", gcn_layers);
  positive("attention_heads", attention_heads);
  positive("dilation_rate", dilation_rate);
  positive("seq_vocab", seq_vocab);
  positive("max_seq_len", max_seq_len);
  positive("fusion_dim", fusion_dim);
  if (embed_dim % attention_heads != 0) {
    invalid("attention_heads", std::to_string(attention_heads) + " does not divide embed_dim " +
                                   std::to_string(embed_dim));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) invalid("dropout", "must lie in [0, 1)");
  if (conv_kernels.empty()) invalid("conv_kernels", "needs at least one layer");
  for (std::size_t k : conv_kernels)
    if (k == 0) invalid("conv_kernels", "sizes must be positive");
  if (conv_channels.size() + 1 != conv_kernels.size()) {
    invalid("conv_channels", "needs one entry per conv layer except the last (" +
                                 std::to_string(conv_kernels.size() - 1) + ")");
  }
  for (std::size_t c : conv_channels)
    if (c == 0) invalid("conv_channels", "must be positive");
  for (std::size_t c : mlp_hidden)
    if (c == 0) invalid("mlp_hidden", "must be positive");
  for (std::size_t c : head_hidden)
    if (c == 0) invalid("head_hidden", "must be positive");
  if (conv_output_length() == 0) {
    invalid("max_seq_len", std::to_string(max_seq_len) + " is too short for the conv stack's receptive field");
  }
}

ModelConfig model_config_from(KeyValues& kv, ModelConfig c) {
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
  size_field("embed_dim", c.embed_dim);
  size_field("gcn_layers", c.gcn_layers);
  size_field("attention_heads", c.attention_heads);
  if (auto v = take("dropout")) c.dropout = parse_double_field("dropout", *v);
  size_field("dilation_rate", c.dilation_rate);
  if (auto v = take("dilated")) c.dilated = parse_bool_field("dilated", *v);
  if (auto v = take("conv_kernels")) c.conv_kernels = parse_size_list_field("conv_kernels", *v);
  if (auto v = take("conv_channels")) c.conv_channels = parse_size_list_field("conv_channels", *v);
  size_field("seq_vocab", c.seq_vocab);
  size_field("max_seq_len", c.max_seq_len);
  if (auto v = take("mlp_hidden")) c.mlp_hidden = parse_size_list_field("mlp_hidden", *v);
  if (auto v = take("head_hidden")) c.head_hidden = parse_size_list_field("head_hidden", *v);
  if (auto v = take("fusion")) c.fusion = parse_fusion_variant(*v);
  size_field("fusion_dim", c.fusion_dim);
  if (auto v = take("attend_pre_pool")) c.attend_pre_pool = parse_bool_field("attend_pre_pool", *v);
  if (auto v = take("masked_descriptors")) {
    c.descriptor_mask = {};
    for (const auto& name : parse_string_list_field(*v)) {
      auto it = std::find(kDescriptorNames.begin(), kDescriptorNames.end(), name);
      if (it == kDescriptorNames.end()) invalid("masked_descriptors", "unknown descriptor '" + name + "'");
      c.descriptor_mask[static_cast<std::size_t>(it - kDescriptorNames.begin())] = true;
    }
  }
  c.validate();
  return c;
}

std::string to_text(const ModelConfig& c) {
  std::string masked;
  for (std::size_t i = 0; i < kNumDescriptors; ++i) {
    if (!c.descriptor_mask[i]) continue;
    if (!masked.empty()) masked += ",";
    masked += kDescriptorNames[i];
  }
  std::string out;
  auto line = [&out](std::string_view key, const std::string& value) {
    out += std::string(key) + " = " + value + "\n";
  };
  line("embed_dim", std::to_string(c.embed_dim));
  line("gcn_layers", std::to_string(c.gcn_layers));
  line("attention_heads", std::to_string(c.attention_heads));
  line("dropout", format_double(c.dropout));
  line("dilation_rate", std::to_string(c.dilation_rate));
  line("dilated", c.dilated ? "true" : "false");
  line("conv_kernels", format_size_list(c.conv_kernels));
  line("conv_channels", format_size_list(c.conv_channels));
  line("seq_vocab", std::to_string(c.seq_vocab));
  line("max_seq_len", std::to_string(c.max_seq_len));
  line("mlp_hidden", format_size_list(c.mlp_hidden));
  line("head_hidden", format_size_list(c.head_hidden));
  line("fusion", std::string(to_string(c.fusion)));
  line("fusion_dim", std::to_string(c.fusion_dim));
  line("attend_pre_pool", c.attend_pre_pool ? "true" : "false");
  line("masked_descriptors", masked);
  return out;
}

// ---- parameters ------------------------------------------------------------

void ModelParams::add(std::string name, Tensor tensor) {
  if (index_.count(name)) throw Error(ErrorCode::InvalidArgument, "duplicate parameter '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(tensor));
}

const Tensor& ModelParams::get(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::InvalidArgument, "no parameter named '" + std::string(name) + "'");
  return entries_[it->second].second;
}

bool ModelParams::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

std::size_t ModelParams::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

void ModelParams::zero_grad() {
  for (auto& [name, t] : entries_) {
    Tensor handle = t;
    handle.zero_grad();
  }
}

ModelParams ModelParams::clone() const {
  ModelParams out;
  for (const auto& [name, t] : entries_) out.add(name, t.clone());
  return out;
}

ModelParams init_params(const ModelConfig& c, std::uint64_t seed) {
  c.validate();
  std::mt19937_64 rng(seed);
  ModelParams p;
  const std::size_t d = c.embed_dim;
  auto weight = [&](const std::string& name, Shape shape, std::size_t fan_in, std::size_t fan_out) {
    p.add(name, Tensor::uniform(std::move(shape), glorot(fan_in, fan_out), rng, true));
  };
  auto bias = [&](const std::string& name, std::size_t n) { p.add(name, Tensor::zeros({n}, true)); };
  auto dense = [&](const std::string& prefix, std::size_t in, std::size_t out) {
    weight(prefix + ".W", {in, out}, in, out);
    bias(prefix + ".b", out);
  };

  for (std::size_t l = 0; l < c.gcn_layers; ++l) {
    const std::size_t in = l == 0 ? AtomFeatureSchema::kWidth : d;
    weight(idx("gcn.W", l), {in, d}, in, d);
  }

  weight("seq.embedding", {c.seq_vocab, d}, c.seq_vocab, d);
  std::size_t channels = d;
  for (std::size_t l = 0; l < c.conv_kernels.size(); ++l) {
    const std::size_t out = l + 1 < c.conv_kernels.size() ? c.conv_channels[l] : d;
    const std::size_t k = c.conv_kernels[l];
    weight(idx("seq.conv", l, ".w"), {out, channels, k}, channels * k, out * k);
    bias(idx("seq.conv", l, ".b"), out);
    channels = out;
  }

  std::size_t width = kNumDescriptors;
  for (std::size_t l = 0; l <= c.mlp_hidden.size(); ++l) {
    const std::size_t out = l < c.mlp_hidden.size() ? c.mlp_hidden[l] : d;
    dense(idx("dyn.fc", l), width, out);
    width = out;
  }

  const std::size_t dk = c.head_width();
  for (const char* side : {"t", "d"}) {
    for (std::size_t h = 0; h < c.attention_heads; ++h)
      for (const char* proj : {".q", ".k", ".v"})
        weight(idx(std::string("attn.") + side + proj, h), {d, dk}, d, dk);
    weight(std::string("attn.") + side + ".out", {d, d}, d, d);
  }

  if (c.fusion == FusionVariant::Tfn) {
    const std::size_t f = (d + 1) * (d + 1) * (d + 1);
    dense("fuse", f, c.fusion_dim);
  }

  width = c.fused_width();
  for (std::size_t l = 0; l < c.head_hidden.size(); ++l) {
    dense(idx("head.fc", l), width, c.head_hidden[l]);
    width = c.head_hidden[l];
  }
  dense("head.out", width, 1);
  return p;
}

Sample make_sample(std::string_view smiles, std::string_view sequence,
                   const std::array<double, kNumDescriptors>& normalized_descriptors, const ModelConfig& config) {
  Sample s;
  s.graph = smiles_to_graph(smiles);
  s.sequence_ids = encode_sequence(sequence, config.max_seq_len);
  s.descriptors = normalized_descriptors;
  return s;
}

// ---- encoders --------------------------------------------------------------

Tensor graph_encoder(const MolecularGraph& graph, const ModelParams& params, const ModelConfig& config) {
  if (!graph.norm_adjacency.defined() || !graph.node_features.defined()) {
    throw Error(ErrorCode::InvalidArgument, "graph_encoder needs a featurized graph with normalized adjacency");
  }
  const Tensor& w0 = params.get("gcn.W0");
  if (graph.node_features.rank() != 2 || graph.node_features.dim(1) != w0.dim(0)) {
    throw Error(ErrorCode::ShapeMismatch, "graph_encoder: node feature width " +
                                              std::to_string(graph.node_features.dim(1)) +
                                              " does not match the first GCN layer input " +
                                              std::to_string(w0.dim(0)));
  }
  Tensor h = graph.node_features;
  for (std::size_t l = 0; l < config.gcn_layers; ++l) {
    h = relu(matmul(graph.norm_adjacency, matmul(h, params.get(idx("gcn.W", l)))));
  }
  return global_max_pool(h);
}

SequenceEncoding sequence_encoder(std::span<const int> ids, const ModelParams& params, const ModelConfig& config) {
  Tensor x = transpose(embedding_lookup(params.get("seq.embedding"), ids));
  for (std::size_t l = 0; l < config.conv_kernels.size(); ++l) {
    x = relu(conv1d_dilated(x, params.get(idx("seq.conv", l, ".w")), params.get(idx("seq.conv", l, ".b")),
                            config.conv_dilation(l)));
  }
  SequenceEncoding enc;
  enc.feature_map = transpose(x);
  enc.pooled = global_max_pool(enc.feature_map);
  return enc;
}

Tensor vector_encoder(const std::array<double, kNumDescriptors>& descriptors, const ModelParams& params,
                      const ModelConfig& config) {
  std::vector<double> v(descriptors.begin(), descriptors.end());
  for (std::size_t i = 0; i < kNumDescriptors; ++i)
    if (config.descriptor_mask[i]) v[i] = 0.0;
  Tensor x = Tensor::from({1, kNumDescriptors}, std::move(v));
  for (std::size_t l = 0; l <= config.mlp_hidden.size(); ++l) x = relu(affine(x, params, idx("dyn.fc", l)));
  return flat(x);
}

CrossAttentionOutput cross_attention(const Tensor& target, const Tensor& dynamic, const Tensor& target_keys,
                                     const ModelParams& params, const ModelConfig& config) {
  const std::size_t d = config.embed_dim;
  if (target.numel() != d || dynamic.numel() != d) {
    throw Error(ErrorCode::ShapeMismatch, "cross_attention: inputs must have length " + std::to_string(d));
  }
  if (target_keys.defined() && (target_keys.rank() != 2 || target_keys.dim(1) != d)) {
    throw Error(ErrorCode::ShapeMismatch, "cross_attention: target keys must be [N x " + std::to_string(d) + "]");
  }
  const Tensor t = row(target);
  const Tensor dy = row(dynamic);
  CrossAttentionOutput out;
  out.target = flat(attend(t, dy, params, config, "t", "d", out.weights.target));
  out.dynamic = flat(attend(dy, target_keys.defined() ? target_keys : t, params, config, "d", "t",
                            out.weights.dynamic));
  return out;
}

// ---- fusion ----------------------------------------------------------------

Tensor tfn_tensor(const Tensor& target, const Tensor& dynamic, const Tensor& ligand) {
  auto augment = [](const Tensor& v) {
    const Tensor parts[] = {flat(v), Tensor::full({1}, 1.0)};
    return concat(parts);
  };
  return outer_product3(augment(target), augment(dynamic), augment(ligand));
}

Tensor tfn_fuse(const Tensor& target, const Tensor& dynamic, const Tensor& ligand, const ModelParams& params) {
  return flat(affine(row(tfn_tensor(target, dynamic, ligand)), params, "fuse"));
}

Tensor fuse_variant(const Tensor& target, const Tensor& dynamic, const Tensor& ligand, FusionVariant variant,
                    const ModelParams& params) {
  switch (variant) {
    case FusionVariant::Concat: {
      const Tensor parts[] = {flat(target), flat(dynamic), flat(ligand)};
      return concat(parts);
    }
    case FusionVariant::Sum: return add(add(target, dynamic), ligand);
    case FusionVariant::Average: return scale(add(add(target, dynamic), ligand), 1.0 / 3.0);
    case FusionVariant::Hadamard: return mul(mul(target, dynamic), ligand);
    case FusionVariant::Tfn: return tfn_fuse(target, dynamic, ligand, params);
  }
  throw Error(ErrorCode::UnknownVariant, "unknown fusion variant");
}

// ---- forward ---------------------------------------------------------------

ForwardResult forward(std::span<const Sample* const> batch, const ModelParams& params, const ModelConfig& config,
                      Mode mode, std::mt19937_64* rng) {
  if (batch.empty()) throw Error(ErrorCode::EmptyInput, "forward needs at least one sample");
  const bool training = mode == Mode::Train;
  if (training && config.dropout > 0.0 && rng == nullptr) {
    throw Error(ErrorCode::InvalidArgument, "training-mode forward with dropout needs an rng");
  }
  ForwardResult result;
  result.attention.reserve(batch.size());
  std::vector<Tensor> fused;
  fused.reserve(batch.size());
  for (const Sample* s : batch) {
    const Tensor ligand = graph_encoder(s->graph, params, config);
    const SequenceEncoding seq = sequence_encoder(s->sequence_ids, params, config);
    const Tensor dyn = vector_encoder(s->descriptors, params, config);
    CrossAttentionOutput ca =
        cross_attention(seq.pooled, dyn, config.attend_pre_pool ? seq.feature_map : Tensor{}, params, config);
    result.attention.push_back(std::move(ca.weights));
    // The TFN affine map is applied once to the stacked batch below.
    fused.push_back(config.fusion == FusionVariant::Tfn ? tfn_tensor(ca.target, ca.dynamic, ligand)
                                                        : fuse_variant(ca.target, ca.dynamic, ligand, config.fusion,
                                                                       params));
  }
  const std::size_t b = batch.size();
  const std::size_t width = fused.front().numel();
  Tensor h = reshape(concat(fused), {b, width});
  if (config.fusion == FusionVariant::Tfn) h = affine(h, params, "fuse");

  std::mt19937_64 unused;
  for (std::size_t l = 0; l < config.head_hidden.size(); ++l) {
    h = relu(affine(h, params, idx("head.fc", l)));
    h = dropout(h, config.dropout, training, rng ? *rng : unused);
  }
  result.predictions = reshape(affine(h, params, "head.out"), {b});
  return result;
}

// ---- checkpoints -----------------------------------------------------------

void save_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kCkptMagic, sizeof kCkptMagic);
  put_u32(out, kCheckpointVersion);
  put_str(out, to_text(ckpt.config));
  put_u8(out, ckpt.stats ? 1 : 0);
  const NormalizationStats stats = ckpt.stats.value_or(NormalizationStats{});
  for (double v : stats.min) put_f64(out, v);
  for (double v : stats.max) put_f64(out, v);
  put_u32(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, t] : ckpt.params.entries()) {
    put_str(out, name);
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t extent : t.shape()) put_u64(out, extent);
    for (double v : t.data()) put_f64(out, v);
  }
  if (!out) throw Error(ErrorCode::Io, "failed writing checkpoint");
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path + "' for writing");
  save_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(std::istream& in) {
  char magic[sizeof kCkptMagic];
  read_exact(in, magic, sizeof magic, kCkptWhat);
  if (!std::equal(std::begin(magic), std::end(magic), std::begin(kCkptMagic)))
    throw Error(ErrorCode::MalformedInput, "not a checkpoint file (bad magic)");
  const auto version = static_cast<std::uint32_t>(get_le(in, 4, kCkptWhat));
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::MalformedInput, "unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  KeyValues kv = parse_key_values(get_str(in, kCkptWhat));
  ckpt.config = model_config_from(kv);
  if (!kv.empty()) throw Error(ErrorCode::MalformedInput, "checkpoint config has unknown key '" + kv.begin()->first + "'");
  const bool has_stats = get_le(in, 1, kCkptWhat) != 0;
  NormalizationStats stats;
  for (double& v : stats.min) v = get_f64(in, kCkptWhat);
  for (double& v : stats.max) v = get_f64(in, kCkptWhat);
  if (has_stats) ckpt.stats = stats;

  ckpt.params = init_params(ckpt.config, 0);
  const auto count = static_cast<std::size_t>(get_le(in, 4, kCkptWhat));
  if (count != ckpt.params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "checkpoint holds " + std::to_string(count) + " tensors, config expects " +
                                              std::to_string(ckpt.params.size()));
  }
  for (std::size_t i = 0; i < count; ++i) {
    const std::string name = get_str(in, kCkptWhat);
    const auto& [expected_name, tensor] = ckpt.params.entries()[i];
    if (name != expected_name) {
      throw Error(ErrorCode::ShapeMismatch, "checkpoint tensor " + std::to_string(i) + " is '" + name +
                                                "', expected '" + expected_name + "'");
    }
    const auto rank = static_cast<std::size_t>(get_le(in, 4, kCkptWhat));
    Shape shape;
    for (std::size_t a = 0; a < rank && a < 8; ++a) shape.push_back(static_cast<std::size_t>(get_le(in, 8, kCkptWhat)));
    if (shape != tensor.shape()) {
      throw Error(ErrorCode::ShapeMismatch, "checkpoint tensor '" + name + "' has the wrong shape for its config");
    }
    Tensor handle = tensor;
    for (double& v : handle.mutable_data()) v = get_f64(in, kCkptWhat);
  }
  return ckpt;
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "' for reading");
  return load_checkpoint(in);
}

// ---- attention export ------------------------------------------------------

void write_attention(std::ostream& out, const AttentionWeights& weights, std::size_t top) {
  out << "direction,head,position_index,weight\n";
  if (top == 0) {
    auto dump = [&out](std::string_view direction, const std::vector<std::vector<double>>& per_head) {
      for (std::size_t h = 0; h < per_head.size(); ++h)
        for (std::size_t p = 0; p < per_head[h].size(); ++p)
          out << direction << ',' << h << ',' << p << ',' << format_double(per_head[h][p]) << '\n';
    };
    dump("target", weights.target);
    dump("dynamic", weights.dynamic);
    return;
  }
  if (weights.dynamic.empty()) return;
  const std::size_t positions = weights.dynamic.front().size();
  std::vector<double> mean(positions, 0.0);
  for (const auto& head : weights.dynamic)
    for (std::size_t p = 0; p < positions; ++p) mean[p] += head[p];
  for (double& m : mean) m /= static_cast<double>(weights.dynamic.size());
  std::vector<std::size_t> order(positions);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&mean](std::size_t a, std::size_t b) { return mean[a] > mean[b]; });
  order.resize(std::min(top, positions));
  for (std::size_t p : order) out << "dynamic,mean," << p << ',' << format_double(mean[p]) << '\n';
}

}  // namespace dyndta
