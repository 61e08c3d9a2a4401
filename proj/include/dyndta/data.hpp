#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dyndta/protein.hpp"

namespace dyndta {

enum class Measure { Kd, Ki, IC50, KIBA };

std::string_view to_string(Measure m) noexcept;
// Case-insensitive; returns nullopt for anything else.
std::optional<Measure> parse_measure(std::string_view text) noexcept;

struct AffinityRecord {
  std::string smiles;
  std::string protein_sequence;
  std::string pdb_id;
  Measure measure = Measure::Kd;
  std::optional<double> raw_value;  // nM; absent for KIBA
  double affinity = 0.0;

  bool operator==(const AffinityRecord&) const = default;
};

// -log10(raw_nm / 1e9). Throws NonPositiveValue for raw_nm <= 0.
double transform_affinity(double raw_nm);

// Columns: smiles, protein_sequence, pdb_id, measure, value. Kd/Ki/IC50 values
// are raw nM and transformed on read; KIBA values are taken verbatim.
std::vector<AffinityRecord> read_affinity_records(std::istream& in, std::string_view source = "affinity input");
std::vector<AffinityRecord> read_affinity_records(const std::string& path);

// pdb_id -> descriptor, keys upper-cased.
class DescriptorTable {
 public:
  // Throws DuplicatePdbId if the key (case-insensitively) is already present.
  void add(std::string_view pdb_id, const DynamicDescriptor& d);
  const DynamicDescriptor* find(std::string_view pdb_id) const;
  std::size_t size() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }
  const std::map<std::string, DynamicDescriptor>& rows() const noexcept { return rows_; }

 private:
  std::map<std::string, DynamicDescriptor> rows_;
};

std::string normalize_pdb_id(std::string_view pdb_id);

// Columns: pdb_id, avg_rmsf, avg_gyr, div_se, div_mm.
DescriptorTable read_descriptor_table(std::istream& in, std::string_view source = "descriptor input");
DescriptorTable read_descriptor_table(const std::string& path);

struct DropEntry {
  std::size_t index;  // position in the input record list
  std::string reason;
};

struct FilterReport {
  std::size_t input = 0;
  std::size_t kept = 0;
  std::size_t negative_affinity = 0;
  std::size_t no_descriptor = 0;
  std::size_t bad_smiles = 0;
  std::size_t duplicates = 0;  // kept, counted as a warning
  std::vector<DropEntry> drops;
};

inline constexpr std::string_view kReasonNegative = "negative affinity";
inline constexpr std::string_view kReasonNoDescriptor = "no descriptor";
inline constexpr std::string_view kReasonBadSmiles = "unparseable smiles";

// Total: never throws on record content. Order of survivors is preserved.
std::vector<AffinityRecord> filter_records(const std::vector<AffinityRecord>& records, const DescriptorTable& table,
                                           FilterReport& report);

struct PreparedRecord {
  AffinityRecord record;
  DynamicDescriptor descriptor;

  bool operator==(const PreparedRecord&) const = default;
};

using PreparedDataset = std::vector<PreparedRecord>;

// Records without a descriptor row are dropped and counted in the report.
PreparedDataset join_descriptors(const std::vector<AffinityRecord>& records, const DescriptorTable& table,
                                 FilterReport& report);

// filter_records followed by join_descriptors.
PreparedDataset prepare_dataset(const std::vector<AffinityRecord>& records, const DescriptorTable& table,
                                FilterReport& report);

struct FoldSplit {
  std::size_t k = 0;
  std::vector<std::size_t> assignments;

  std::vector<std::size_t> test_indices(std::size_t fold) const;
  std::vector<std::size_t> train_indices(std::size_t fold) const;
  std::vector<std::size_t> fold_sizes() const;
};

// Seeded shuffle, then round-robin assignment. Throws TooFewRecords if n < k
// and InvalidArgument if k < 2.
FoldSplit kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

struct DatasetSummary {
  std::size_t targets = 0;
  std::size_t ligands = 0;
  std::size_t entries = 0;
  double min_affinity = 0.0;
  double max_affinity = 0.0;
  double bin_width = 0.5;
  std::vector<std::size_t> histogram;  // bin i covers [i*w, (i+1)*w)
};

// Targets are counted by normalized pdb_id, ligands by SMILES text.
DatasetSummary summarize(const PreparedDataset& dataset, double bin_width = 0.5);
void write_summary(std::ostream& out, const DatasetSummary& summary);
void write_histogram(std::ostream& out, const DatasetSummary& summary);

// Binary cache, little-endian throughout:
//   magic "DDTAPREP" | u32 version | u64 count | count records
//   record: str smiles | str sequence | str pdb_id | u8 measure | u8 has_raw |
//           f64 raw | f64 affinity | f64 x4 descriptors
//   str: u32 byte length | bytes
inline constexpr std::uint32_t kDatasetCacheVersion = 1;
void save_dataset(std::ostream& out, const PreparedDataset& dataset);
PreparedDataset load_dataset(std::istream& in);
void save_dataset(const std::string& path, const PreparedDataset& dataset);
PreparedDataset load_dataset(const std::string& path);

}  // namespace dyndta
