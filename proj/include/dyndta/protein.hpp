#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dyndta {

inline constexpr std::size_t kMaxSequenceLength = 1000;
// id 0 is padding / unknown; ids 1..25 follow this alphabet.
inline constexpr std::string_view kAminoAcidAlphabet = "ABCDEFGHIKLMNOPQRSTUVWXYZ";
inline constexpr std::size_t kSequenceVocabulary = kAminoAcidAlphabet.size() + 1;

// Upper-cases, maps residues to ids, truncates to max_len and zero-pads.
std::vector<int> encode_sequence(std::string_view sequence, std::size_t max_len = kMaxSequenceLength);

// Inverse over the encoder's own alphabet; padding and unknown ids decode to '-'.
std::string decode_sequence(std::span<const int> ids);

inline constexpr std::size_t kNumDescriptors = 4;
inline constexpr std::array<std::string_view, kNumDescriptors> kDescriptorNames = {
    "avg_rmsf", "avg_gyr", "div_se", "div_mm"};

struct DynamicDescriptor {
  double avg_rmsf = 0.0;
  double avg_gyr = 0.0;
  double div_se = 0.0;  // TM-score
  double div_mm = 0.0;  // TM-score

  // Fixed order: (avg_rmsf, avg_gyr, div_se, div_mm).
  std::array<double, kNumDescriptors> values() const { return {avg_rmsf, avg_gyr, div_se, div_mm}; }
  static DynamicDescriptor from_values(const std::array<double, kNumDescriptors>& v) {
    return {v[0], v[1], v[2], v[3]};
  }
  bool operator==(const DynamicDescriptor&) const = default;
};

// Per-descriptor min/max fitted on a training set.
struct NormalizationStats {
  std::array<double, kNumDescriptors> min{};
  std::array<double, kNumDescriptors> max{};

  bool degenerate(std::size_t i) const { return !(max[i] > min[i]); }
  bool any_degenerate() const;
};

// Throws EmptyInput on an empty list. Degenerate ranges are reported by
// NormalizationStats::degenerate rather than thrown here.
NormalizationStats fit_normalization(std::span<const DynamicDescriptor> descriptors);

// (x - min) / (max - min), clamped to [0, 1]. Throws DegenerateRange.
std::array<double, kNumDescriptors> normalize(const DynamicDescriptor& d, const NormalizationStats& stats);

struct ProteinInput {
  std::vector<int> sequence_ids;
  std::size_t raw_length = 0;
  DynamicDescriptor descriptors;
  std::array<double, kNumDescriptors> normalized{};
};

ProteinInput make_protein_input(std::string_view sequence, const DynamicDescriptor& d,
                                const NormalizationStats& stats, std::size_t max_len = kMaxSequenceLength);

}  // namespace dyndta
