#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dyndta/data.hpp"
#include "dyndta/error.hpp"

using namespace dyndta;

namespace {

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

template <class F>
std::string message_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

AffinityRecord rec(std::string smiles, std::string pdb, double affinity, Measure m = Measure::Kd) {
  AffinityRecord r;
  r.smiles = std::move(smiles);
  r.protein_sequence = "MKV";
  r.pdb_id = std::move(pdb);
  r.measure = m;
  r.affinity = affinity;
  return r;
}

DescriptorTable two_targets() {
  DescriptorTable t;
  t.add("4JMU", {1, 2, 0.3, 0.4});
  t.add("1abc", {5, 6, 0.7, 0.8});
  return t;
}

}  // namespace

TEST_CASE("transform_affinity anchors") {
  CHECK(transform_affinity(1e9) == 0.0);
  CHECK(transform_affinity(1.0) == 9.0);
  CHECK(transform_affinity(1000.0) == 6.0);
  CHECK(transform_affinity(1e10) == -1.0);
  CHECK(code_of([] { transform_affinity(0.0); }) == ErrorCode::NonPositiveValue);
  CHECK(code_of([] { transform_affinity(-3.0); }) == ErrorCode::NonPositiveValue);
}

TEST_CASE("transform_affinity is strictly decreasing") {
  double prev = transform_affinity(1e-3);
  for (double x = 2e-3; x < 1e12; x *= 1.7) {
    const double y = transform_affinity(x);
    CHECK(y < prev);
    prev = y;
  }
}

TEST_CASE("read_affinity_records") {
  std::istringstream in(
      "smiles,protein_sequence,pdb_id,measure,value\n"
      "CCO,MKV,4jmu,Kd,1000\n"
      "\n"
      "c1ccccc1,MKVL,1ABC,ki,1\n"
      "CC,MK,1ABC,KIBA,11.2\n");
  const auto r = read_affinity_records(in);
  REQUIRE(r.size() == 3);
  CHECK(r[0].affinity == 6.0);
  CHECK(r[0].raw_value == 1000.0);
  CHECK(r[1].measure == Measure::Ki);
  CHECK(r[1].affinity == 9.0);
  CHECK(r[2].measure == Measure::KIBA);
  CHECK_FALSE(r[2].raw_value.has_value());
  CHECK(r[2].affinity == 11.2);

  std::istringstream tabbed("smiles\tprotein_sequence\tpdb_id\tmeasure\tvalue\nCCO\tMKV\t4jmu\tIC50\t1e9\n");
  const auto t = read_affinity_records(tabbed);
  REQUIRE(t.size() == 1);
  CHECK(t[0].measure == Measure::IC50);
  CHECK(t[0].affinity == 0.0);
}

TEST_CASE("affinity reader errors name the line") {
  auto read = [](const std::string& text) {
    std::istringstream in(text);
    return read_affinity_records(in);
  };
  const std::string header = "smiles,protein_sequence,pdb_id,measure,value\n";
  CHECK(code_of([&] { read(header + "CCO,MKV,4jmu,Kd\n"); }) == ErrorCode::MalformedInput);
  CHECK(message_of([&] { read(header + "CCO,MKV,4jmu,Kd,1\nCCO,MKV,4jmu,Kd,abc\n"); }).find("line 3") !=
        std::string::npos);
  CHECK(code_of([&] { read(header + "CCO,MKV,4jmu,pIC50,1\n"); }) == ErrorCode::MalformedInput);
  CHECK(code_of([&] { read(header + "CCO,MKV,4jmu,Kd,0\n"); }) == ErrorCode::NonPositiveValue);
  CHECK(code_of([&] { read("smiles,pdb_id,measure,value\nCCO,4jmu,Kd,1\n"); }) == ErrorCode::MalformedInput);
  CHECK(code_of([&] { read(""); }) == ErrorCode::NoRecords);
}

TEST_CASE("descriptor table") {
  std::istringstream in("pdb_id,avg_rmsf,avg_gyr,div_se,div_mm\n4jmu,1.5,20,0.4,0.6\n1ABC,2,21,0.5,0.7\n");
  const auto t = read_descriptor_table(in);
  CHECK(t.size() == 2);
  REQUIRE(t.find("4JMU") != nullptr);
  CHECK(*t.find("4JMU") == DynamicDescriptor{1.5, 20, 0.4, 0.6});
  CHECK(t.find("4jmu") == t.find("4JMU"));
  CHECK(t.find("9xyz") == nullptr);

  std::istringstream dup("pdb_id,avg_rmsf,avg_gyr,div_se,div_mm\n4jmu,1,2,0.4,0.6\n4JMU,2,21,0.5,0.7\n");
  CHECK(code_of([&] { read_descriptor_table(dup); }) == ErrorCode::DuplicatePdbId);
}

TEST_CASE("filter_records") {
  const auto table = two_targets();
  const std::vector<AffinityRecord> records = {
      rec("CCO", "4jmu", 6.0),  rec("CCO", "4jmu", transform_affinity(1e10)), rec("CCO", "9zzz", 5.0),
      rec("C1CC", "1abc", 7.0), rec("CCO", "4JMU", 0.0),                       rec("CCO", "4jmu", 6.5)};
  FilterReport report;
  const auto kept = filter_records(records, table, report);
  CHECK(report.input == 6);
  CHECK(report.kept == 3);
  CHECK(kept.size() == 3);
  CHECK(report.negative_affinity == 1);
  CHECK(report.no_descriptor == 1);
  CHECK(report.bad_smiles == 1);
  CHECK(report.duplicates == 2);
  REQUIRE(report.drops.size() == 3);
  CHECK(report.drops[0].index == 1);
  CHECK(report.drops[0].reason == kReasonNegative);
  CHECK(report.drops[1].index == 2);
  CHECK(report.drops[1].reason == kReasonNoDescriptor);
  CHECK(report.drops[2].index == 3);
  CHECK(report.drops[2].reason.rfind(std::string(kReasonBadSmiles), 0) == 0);
  CHECK(kept[1].affinity == 0.0);
  for (const auto& r : kept) CHECK(r.affinity >= 0.0);
}

TEST_CASE("join_descriptors") {
  const auto table = two_targets();
  FilterReport report;
  const auto ds = prepare_dataset({rec("CCO", "4jmu", 6.0), rec("CC", "4JMU", 7.0), rec("C", "1ABC", 8.0)}, table,
                                  report);
  REQUIRE(ds.size() == 3);
  CHECK(ds[0].descriptor == ds[1].descriptor);
  CHECK(ds[0].descriptor == *table.find("4jmu"));
  CHECK(ds[2].descriptor == *table.find("1abc"));

  FilterReport empty_report;
  const auto none = prepare_dataset({rec("CCO", "4jmu", 6.0), rec("CC", "1abc", 7.0)}, DescriptorTable{},
                                    empty_report);
  CHECK(none.empty());
  CHECK(empty_report.no_descriptor == 2);
  CHECK(empty_report.kept == 0);
}

TEST_CASE("prepare is byte-stable across runs") {
  const auto table = two_targets();
  std::vector<AffinityRecord> records;
  for (int i = 0; i < 40; ++i) records.push_back(rec(i % 3 ? "CCO" : "c1ccccc1", i % 2 ? "4jmu" : "1ABC", i * 0.25));
  FilterReport r1, r2;
  std::ostringstream a, b;
  save_dataset(a, prepare_dataset(records, table, r1));
  save_dataset(b, prepare_dataset(records, table, r2));
  CHECK(a.str() == b.str());
}

TEST_CASE("kfold_split examples") {
  const auto ten = kfold_split(10, 5, 1);
  CHECK(ten.fold_sizes() == std::vector<std::size_t>{2, 2, 2, 2, 2});
  const auto eleven = kfold_split(11, 5, 1);
  CHECK(eleven.fold_sizes() == std::vector<std::size_t>{3, 2, 2, 2, 2});
  CHECK(kfold_split(11, 5, 99).assignments == kfold_split(11, 5, 99).assignments);
  CHECK(kfold_split(1000, 5, 1).assignments != kfold_split(1000, 5, 2).assignments);
  CHECK(code_of([] { kfold_split(4, 5, 0); }) == ErrorCode::TooFewRecords);
  CHECK(code_of([] { kfold_split(4, 1, 0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("folds partition the records with sizes differing by at most one") {
  for (std::size_t n = 5; n < 200; n += 7) {
    for (std::size_t k : {2u, 3u, 5u}) {
      const auto split = kfold_split(n, k, n * 31 + k);
      REQUIRE(split.assignments.size() == n);
      const auto sizes = split.fold_sizes();
      CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 1);
      std::vector<int> hits(n, 0);
      for (std::size_t f = 0; f < k; ++f) {
        const auto test = split.test_indices(f);
        const auto train = split.train_indices(f);
        CHECK(test.size() + train.size() == n);
        for (std::size_t i : test) ++hits[i];
        std::set<std::size_t> tr(train.begin(), train.end());
        for (std::size_t i : test) CHECK(tr.count(i) == 0);
      }
      for (int h : hits) CHECK(h == 1);
    }
  }
}

TEST_CASE("summarize") {
  const auto empty = summarize({});
  CHECK(empty.targets == 0);
  CHECK(empty.ligands == 0);
  CHECK(empty.entries == 0);

  const DynamicDescriptor d{1, 2, 0.3, 0.4};
  const PreparedDataset two = {{rec("CCO", "4jmu", 6.1), d}, {rec("CCO", "1abc", 6.9), d}};
  const auto s = summarize(two);
  CHECK(s.targets == 2);
  CHECK(s.ligands == 1);
  CHECK(s.entries == 2);

  const PreparedDataset hist = {{rec("C", "a", 0.0), d},
                                {rec("C", "a", 0.49), d},
                                {rec("C", "a", 0.5), d},
                                {rec("C", "A", 2.2), d}};
  const auto h = summarize(hist, 0.5);
  CHECK(h.targets == 1);
  CHECK(h.histogram == std::vector<std::size_t>{2, 1, 0, 0, 1});
  std::ostringstream out;
  write_histogram(out, h);
  CHECK(out.str().rfind("bin_start,bin_end,count\n0,0.5,2\n", 0) == 0);
}

TEST_CASE("dataset cache round-trips") {
  PreparedDataset ds = {{rec("CCO", "4jmu", 6.0), {1.25, 2, 0.3, 0.4}},
                        {rec("c1ccccc1", "1ABC", 11.2, Measure::KIBA), {5, 6, 0.7, 0.8}}};
  ds[0].record.raw_value = 1000.0;
  std::stringstream buf;
  save_dataset(buf, ds);
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 8) == "DDTAPREP");
  CHECK(static_cast<unsigned char>(bytes[8]) == kDatasetCacheVersion);
  CHECK(bytes[9] == 0);
  CHECK(static_cast<unsigned char>(bytes[12]) == 2);
  const auto back = load_dataset(buf);
  CHECK(back == ds);

  std::istringstream bad("NOTACACHE000000000000");
  CHECK(code_of([&] { load_dataset(bad); }) == ErrorCode::MalformedInput);
  std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK(code_of([&] { load_dataset(truncated); }) == ErrorCode::MalformedInput);
}
