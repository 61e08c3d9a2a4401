#include "dyndta/data.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <tuple>

#include "dyndta/csv.hpp"
#include "dyndta/error.hpp"
#include "dyndta/smiles.hpp"
#include "binary_io.hpp"

namespace dyndta {

using namespace binio;

namespace {

constexpr const char* kCacheWhat = "dataset cache";

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "' for reading");
  return in;
}

constexpr char kMagic[8] = {'D', 'D', 'T', 'A', 'P', 'R', 'E', 'P'};

}  // namespace

std::string_view to_string(Measure m) noexcept {
  switch (m) {
    case Measure::Kd: return "Kd";
    case Measure::Ki: return "Ki";
    case Measure::IC50: return "IC50";
    case Measure::KIBA: return "KIBA";
  }
  return "?";
}

std::optional<Measure> parse_measure(std::string_view text) noexcept {
  std::string u;
  for (char c : text) u.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (u == "KD") return Measure::Kd;
  if (u == "KI") return Measure::Ki;
  if (u == "IC50") return Measure::IC50;
  if (u == "KIBA") return Measure::KIBA;
  return std::nullopt;
}

double transform_affinity(double raw_nm) {
  if (!(raw_nm > 0.0)) {
    throw Error(ErrorCode::NonPositiveValue, "affinity value must be > 0 nM, got " + std::to_string(raw_nm));
  }
  return -std::log10(raw_nm / 1e9);
}

std::vector<AffinityRecord> read_affinity_records(std::istream& in, std::string_view source) {
  const CsvTable table = read_csv(in, source);
  const std::size_t c_smiles = table.column("smiles");
  const std::size_t c_seq = table.column("protein_sequence");
  const std::size_t c_pdb = table.column("pdb_id");
  const std::size_t c_measure = table.column("measure");
  const std::size_t c_value = table.column("value");

  std::vector<AffinityRecord> records;
  records.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t line = table.line_numbers[r];
    AffinityRecord rec;
    rec.smiles = row[c_smiles];
    rec.protein_sequence = row[c_seq];
    rec.pdb_id = row[c_pdb];
    const auto measure = parse_measure(row[c_measure]);
    if (!measure) {
      throw Error(ErrorCode::MalformedInput,
                  std::string(source) + " line " + std::to_string(line) + ": unknown measure '" + row[c_measure] + "'");
    }
    rec.measure = *measure;
    const double value = parse_double(row[c_value], line, "value");
    if (rec.measure == Measure::KIBA) {
      rec.affinity = value;
    } else {
      if (!(value > 0.0)) {
        throw Error(ErrorCode::NonPositiveValue, std::string(source) + " line " + std::to_string(line) +
                                                     ": value must be > 0 nM, got " + row[c_value]);
      }
      rec.raw_value = value;
      rec.affinity = transform_affinity(value);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<AffinityRecord> read_affinity_records(const std::string& path) {
  auto in = open_in(path);
  return read_affinity_records(in, path);
}

std::string normalize_pdb_id(std::string_view pdb_id) { return upper(pdb_id); }

void DescriptorTable::add(std::string_view pdb_id, const DynamicDescriptor& d) {
  auto [it, inserted] = rows_.emplace(normalize_pdb_id(pdb_id), d);
  if (!inserted) throw Error(ErrorCode::DuplicatePdbId, "duplicate descriptor row for pdb_id '" + it->first + "'");
}

const DynamicDescriptor* DescriptorTable::find(std::string_view pdb_id) const {
  auto it = rows_.find(normalize_pdb_id(pdb_id));
  return it == rows_.end() ? nullptr : &it->second;
}

DescriptorTable read_descriptor_table(std::istream& in, std::string_view source) {
  const CsvTable csv = read_csv(in, source);
  const std::size_t c_pdb = csv.column("pdb_id");
  std::array<std::size_t, kNumDescriptors> cols{};
  for (std::size_t i = 0; i < kNumDescriptors; ++i) cols[i] = csv.column(kDescriptorNames[i]);

  DescriptorTable table;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    std::array<double, kNumDescriptors> v{};
    for (std::size_t i = 0; i < kNumDescriptors; ++i)
      v[i] = parse_double(row[cols[i]], csv.line_numbers[r], kDescriptorNames[i]);
    try {
      table.add(row[c_pdb], DynamicDescriptor::from_values(v));
    } catch (const Error& e) {
      throw Error(e.code(), std::string(source) + " line " + std::to_string(csv.line_numbers[r]) + ": " + e.what());
    }
  }
  return table;
}

DescriptorTable read_descriptor_table(const std::string& path) {
  auto in = open_in(path);
  return read_descriptor_table(in, path);
}

std::vector<AffinityRecord> filter_records(const std::vector<AffinityRecord>& records, const DescriptorTable& table,
                                           FilterReport& report) {
  report.input = records.size();
  std::vector<AffinityRecord> kept;
  std::set<std::tuple<std::string, std::string, Measure>> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    if (rec.affinity < 0.0) {
      ++report.negative_affinity;
      report.drops.push_back({i, std::string(kReasonNegative)});
      continue;
    }
    if (!table.find(rec.pdb_id)) {
      ++report.no_descriptor;
      report.drops.push_back({i, std::string(kReasonNoDescriptor)});
      continue;
    }
    try {
      (void)parse(tokenize(rec.smiles));
    } catch (const Error& e) {
      ++report.bad_smiles;
      report.drops.push_back({i, std::string(kReasonBadSmiles) + ": " + e.what()});
      continue;
    }
    if (!seen.emplace(rec.smiles, normalize_pdb_id(rec.pdb_id), rec.measure).second) ++report.duplicates;
    kept.push_back(rec);
  }
  report.kept = kept.size();
  return kept;
}

PreparedDataset join_descriptors(const std::vector<AffinityRecord>& records, const DescriptorTable& table,
                                 FilterReport& report) {
  PreparedDataset out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const DynamicDescriptor* d = table.find(records[i].pdb_id);
    if (!d) {
      ++report.no_descriptor;
      report.drops.push_back({i, std::string(kReasonNoDescriptor)});
      continue;
    }
    out.push_back({records[i], *d});
  }
  report.kept = out.size();
  return out;
}

PreparedDataset prepare_dataset(const std::vector<AffinityRecord>& records, const DescriptorTable& table,
                                FilterReport& report) {
  return join_descriptors(filter_records(records, table, report), table, report);
}

std::vector<std::size_t> FoldSplit::test_indices(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i)
    if (assignments[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldSplit::train_indices(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i)
    if (assignments[i] != fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldSplit::fold_sizes() const {
  std::vector<std::size_t> sizes(k, 0);
  for (std::size_t a : assignments) ++sizes[a];
  return sizes;
}

FoldSplit kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "k-fold split needs k >= 2");
  if (n < k) {
    throw Error(ErrorCode::TooFewRecords,
                "cannot split " + std::to_string(n) + " records into " + std::to_string(k) + " folds");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Fisher-Yates with raw engine output so the permutation does not depend
  // on the standard library's distribution implementation.
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  FoldSplit split;
  split.k = k;
  split.assignments.assign(n, 0);
  for (std::size_t p = 0; p < n; ++p) split.assignments[order[p]] = p % k;
  return split;
}

DatasetSummary summarize(const PreparedDataset& dataset, double bin_width) {
  if (!(bin_width > 0.0)) throw Error(ErrorCode::InvalidArgument, "histogram bin width must be > 0");
  DatasetSummary s;
  s.bin_width = bin_width;
  s.entries = dataset.size();
  if (dataset.empty()) return s;
  std::set<std::string> targets;
  std::set<std::string> ligands;
  s.min_affinity = s.max_affinity = dataset.front().record.affinity;
  for (const auto& p : dataset) {
    targets.insert(normalize_pdb_id(p.record.pdb_id));
    ligands.insert(p.record.smiles);
    s.min_affinity = std::min(s.min_affinity, p.record.affinity);
    s.max_affinity = std::max(s.max_affinity, p.record.affinity);
  }
  s.targets = targets.size();
  s.ligands = ligands.size();
  const auto bins = static_cast<std::size_t>(std::floor(std::max(0.0, s.max_affinity) / bin_width)) + 1;
  s.histogram.assign(bins, 0);
  for (const auto& p : dataset) {
    const double a = std::max(0.0, p.record.affinity);
    ++s.histogram[static_cast<std::size_t>(std::floor(a / bin_width))];
  }
  return s;
}

void write_summary(std::ostream& out, const DatasetSummary& s) {
  out << "targets,ligands,entries,min_affinity,max_affinity\n"
      << s.targets << ',' << s.ligands << ',' << s.entries << ',' << s.min_affinity << ',' << s.max_affinity << '\n';
}

void write_histogram(std::ostream& out, const DatasetSummary& s) {
  out << "bin_start,bin_end,count\n";
  for (std::size_t i = 0; i < s.histogram.size(); ++i) {
    out << static_cast<double>(i) * s.bin_width << ',' << static_cast<double>(i + 1) * s.bin_width << ','
        << s.histogram[i] << '\n';
  }
}

void save_dataset(std::ostream& out, const PreparedDataset& dataset) {
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kDatasetCacheVersion);
  put_u64(out, dataset.size());
  for (const auto& p : dataset) {
    put_str(out, p.record.smiles);
    put_str(out, p.record.protein_sequence);
    put_str(out, p.record.pdb_id);
    put_u8(out, static_cast<std::uint8_t>(p.record.measure));
    put_u8(out, p.record.raw_value ? 1 : 0);
    put_f64(out, p.record.raw_value.value_or(0.0));
    put_f64(out, p.record.affinity);
    for (double v : p.descriptor.values()) put_f64(out, v);
  }
  if (!out) throw Error(ErrorCode::Io, "failed writing dataset cache");
}

PreparedDataset load_dataset(std::istream& in) {
  char magic[sizeof kMagic];
  read_exact(in, magic, sizeof magic, kCacheWhat);
  if (!std::equal(std::begin(magic), std::end(magic), std::begin(kMagic)))
    throw Error(ErrorCode::MalformedInput, "not a prepared-dataset cache (bad magic)");
  const auto version = static_cast<std::uint32_t>(get_le(in, 4, kCacheWhat));
  if (version != kDatasetCacheVersion) {
    throw Error(ErrorCode::MalformedInput, "unsupported dataset cache version " + std::to_string(version));
  }
  const std::uint64_t count = get_le(in, 8, kCacheWhat);
  PreparedDataset out;
  for (std::uint64_t i = 0; i < count; ++i) {
    PreparedRecord p;
    p.record.smiles = get_str(in, kCacheWhat);
    p.record.protein_sequence = get_str(in, kCacheWhat);
    p.record.pdb_id = get_str(in, kCacheWhat);
    const auto measure = get_le(in, 1, kCacheWhat);
    if (measure > static_cast<std::uint64_t>(Measure::KIBA))
      throw Error(ErrorCode::MalformedInput, "dataset cache has invalid measure tag");
    p.record.measure = static_cast<Measure>(measure);
    const bool has_raw = get_le(in, 1, kCacheWhat) != 0;
    const double raw = get_f64(in, kCacheWhat);
    if (has_raw) p.record.raw_value = raw;
    p.record.affinity = get_f64(in, kCacheWhat);
    std::array<double, kNumDescriptors> v{};
    for (double& x : v) x = get_f64(in, kCacheWhat);
    p.descriptor = DynamicDescriptor::from_values(v);
    out.push_back(std::move(p));
  }
  return out;
}

void save_dataset(const std::string& path, const PreparedDataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path + "' for writing");
  save_dataset(out, dataset);
}

PreparedDataset load_dataset(const std::string& path) {
  auto in = open_in(path, std::ios::binary);
  return load_dataset(in);
}

}  // namespace dyndta
