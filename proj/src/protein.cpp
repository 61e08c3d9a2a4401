#include "dyndta/protein.hpp"

#include <algorithm>
#include <cctype>

#include "dyndta/error.hpp"

namespace dyndta {

namespace {

constexpr std::array<int, 256> build_lookup() {
  std::array<int, 256> table{};
  for (std::size_t i = 0; i < kAminoAcidAlphabet.size(); ++i) {
    const auto upper = static_cast<unsigned char>(kAminoAcidAlphabet[i]);
    table[upper] = static_cast<int>(i + 1);
    table[upper - 'A' + 'a'] = static_cast<int>(i + 1);
  }
  return table;
}

constexpr auto kLookup = build_lookup();

}  // namespace

std::vector<int> encode_sequence(std::string_view sequence, std::size_t max_len) {
  std::vector<int> ids(max_len, 0);
  const std::size_t n = std::min(sequence.size(), max_len);
  for (std::size_t i = 0; i < n; ++i) ids[i] = kLookup[static_cast<unsigned char>(sequence[i])];
  return ids;
}

std::string decode_sequence(std::span<const int> ids) {
  std::string out;
  out.reserve(ids.size());
  for (int id : ids) {
    out.push_back(id >= 1 && static_cast<std::size_t>(id) <= kAminoAcidAlphabet.size()
                      ? kAminoAcidAlphabet[static_cast<std::size_t>(id - 1)]
                      : '-');
  }
  return out;
}

bool NormalizationStats::any_degenerate() const {
  for (std::size_t i = 0; i < kNumDescriptors; ++i)
    if (degenerate(i)) return true;
  return false;
}

NormalizationStats fit_normalization(std::span<const DynamicDescriptor> descriptors) {
  if (descriptors.empty()) throw Error(ErrorCode::EmptyInput, "fit_normalization needs at least one descriptor");
  NormalizationStats stats;
  stats.min = descriptors.front().values();
  stats.max = stats.min;
  for (const auto& d : descriptors) {
    const auto v = d.values();
    for (std::size_t i = 0; i < kNumDescriptors; ++i) {
      stats.min[i] = std::min(stats.min[i], v[i]);
      stats.max[i] = std::max(stats.max[i], v[i]);
    }
  }
  return stats;
}

std::array<double, kNumDescriptors> normalize(const DynamicDescriptor& d, const NormalizationStats& stats) {
  std::array<double, kNumDescriptors> out{};
  const auto v = d.values();
  for (std::size_t i = 0; i < kNumDescriptors; ++i) {
    if (stats.degenerate(i)) {
      throw Error(ErrorCode::DegenerateRange,
                  std::string(kDescriptorNames[i]) + " has min == max; cannot min-max normalize");
    }
    out[i] = std::clamp((v[i] - stats.min[i]) / (stats.max[i] - stats.min[i]), 0.0, 1.0);
  }
  return out;
}

ProteinInput make_protein_input(std::string_view sequence, const DynamicDescriptor& d,
                                const NormalizationStats& stats, std::size_t max_len) {
  ProteinInput p;
  p.sequence_ids = encode_sequence(sequence, max_len);
  p.raw_length = sequence.size();
  p.descriptors = d;
  p.normalized = normalize(d, stats);
  return p;
}

}  // namespace dyndta
