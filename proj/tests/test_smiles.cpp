#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dyndta/smiles.hpp"

using namespace dyndta;

namespace {

struct GoldenMolecule {
  std::string name, smiles;
  std::size_t atoms, bonds;
};

std::vector<GoldenMolecule> load_golden() {
  std::ifstream in(std::string(DYNDTA_TEST_DATA_DIR) + "/golden_smiles.tsv");
  REQUIRE(in.good());
  std::vector<GoldenMolecule> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    GoldenMolecule m;
    fields >> m.name >> m.smiles >> m.atoms >> m.bonds;
    out.push_back(m);
  }
  return out;
}

ErrorCode code_of(std::string_view smiles) {
  try {
    smiles_to_graph(smiles);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error for " << smiles);
  return ErrorCode::InvalidArgument;
}

using S = AtomFeatureSchema;

}  // namespace

TEST_CASE("tokenize examples") {
  auto t = tokenize("CCO");
  REQUIRE(t.size() == 3);
  CHECK(t[0].kind == TokenKind::Atom);
  CHECK(t[0].element == "C");
  CHECK(t[2].element == "O");

  auto ring = tokenize("C1CC1");
  REQUIRE(ring.size() == 5);
  CHECK(ring[1].kind == TokenKind::Ring);
  CHECK(ring[1].ring == 1);
  CHECK(ring[4].ring == 1);

  auto two = tokenize("ClCBr[nH]%12");
  CHECK(two[0].element == "Cl");
  CHECK(two[2].element == "Br");
  CHECK(two[3].element == "N");
  CHECK(two[3].aromatic);
  CHECK(two[4].ring == 12);

  try {
    tokenize("C$C");
    FAIL("expected LexError");
  } catch (const ParseError& e) {
    CHECK(e.code() == ErrorCode::LexError);
    CHECK(e.offset() == 1);
  }
}

TEST_CASE("parse examples") {
  auto g = parse(tokenize("CCO"));
  CHECK(g.num_atoms() == 3);
  CHECK(g.bonds == std::vector<Bond>{{0, 1, BondOrder::Single}, {1, 2, BondOrder::Single}});

  auto cp = parse(tokenize("C1CC1"));
  CHECK(cp.num_atoms() == 3);
  CHECK(cp.num_bonds() == 3);
  CHECK(cp.bonds.back() == Bond{0, 2, BondOrder::Single});

  auto iso = parse(tokenize("CC(C)C"));
  CHECK(iso.bonds == std::vector<Bond>{{0, 1, BondOrder::Single}, {1, 2, BondOrder::Single},
                                       {1, 3, BondOrder::Single}});

  auto benz = parse(tokenize("c1ccccc1"));
  for (const auto& b : benz.bonds) CHECK(b.order == BondOrder::Aromatic);

  auto bonded_ring = parse(tokenize("C=1CCCCC1"));
  CHECK(bonded_ring.bonds.back().order == BondOrder::Double);
}

TEST_CASE("golden corpus atom and bond counts match the reference toolkit") {
  auto corpus = load_golden();
  REQUIRE(corpus.size() == 20);
  for (const auto& m : corpus) {
    INFO(m.name);
    auto g = smiles_to_graph(m.smiles);
    CHECK(g.num_atoms() == m.atoms);
    CHECK(g.num_bonds() == m.bonds);
  }
}

TEST_CASE("graph invariants over the corpus") {
  for (const auto& m : load_golden()) {
    INFO(m.name);
    auto g = smiles_to_graph(m.smiles);
    const std::size_t n = g.num_atoms();
    // round-trip stability
    auto again = smiles_to_graph(m.smiles);
    CHECK(again.bonds == g.bonds);
    CHECK(std::vector<double>(again.node_features.data().begin(), again.node_features.data().end()) ==
          std::vector<double>(g.node_features.data().begin(), g.node_features.data().end()));

    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& b : g.bonds) {
      CHECK(b.a < n);
      CHECK(b.b < n);
      CHECK(b.a != b.b);
      CHECK(seen.insert({b.a, b.b}).second);
    }

    // ring-closure bonds = matched digit pairs
    std::size_t ring_tokens = 0;
    for (const auto& t : tokenize(m.smiles)) ring_tokens += t.kind == TokenKind::Ring;
    std::size_t branch_bonds = 0;
    {
      auto tokens = tokenize(m.smiles);
      std::erase_if(tokens, [](const Token& t) { return t.kind == TokenKind::Ring; });
      branch_bonds = parse(tokens).num_bonds();
    }
    CHECK(g.num_bonds() - branch_bonds == ring_tokens / 2);

    // features are one-hot blocks in [0,1]
    CHECK(g.node_features.dim(1) == S::kWidth);
    for (std::size_t i = 0; i < n; ++i) {
      double el = 0, deg = 0, val = 0;
      for (std::size_t j = 0; j < S::kWidth; ++j) {
        const double v = g.node_features.at(i, j);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        if (j < S::kDegreeOffset) el += v;
        else if (j < S::kValenceOffset) deg += v;
        else if (j < S::kAromaticOffset) val += v;
      }
      CHECK(el == 1.0);
      CHECK(deg == 1.0);
      CHECK(val == 1.0);
    }

    // symmetric, eigenvalues within [-1, 1]
    Eigen::MatrixXd a(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        a(i, j) = g.norm_adjacency.at(i, j);
        CHECK(g.norm_adjacency.at(i, j) == g.norm_adjacency.at(j, i));
      }
    if (n <= 12) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a);
      CHECK(solver.eigenvalues().minCoeff() >= -1.0 - 1e-12);
      CHECK(solver.eigenvalues().maxCoeff() <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("featurize examples") {
  auto benz = smiles_to_graph("c1ccccc1");
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(benz.node_features.at(i, S::kAromaticOffset) == 1.0);
    CHECK(benz.node_features.at(i, S::kValenceOffset + 3) == 1.0);  // 1.5 + 1.5
  }

  auto methane = smiles_to_graph("C");
  CHECK(methane.node_features.at(0, S::kDegreeOffset + 0) == 1.0);
  CHECK(methane.node_features.at(0, S::kElementOffset + S::element_slot("C")) == 1.0);

  auto ethanol = smiles_to_graph("CCO");
  CHECK(ethanol.node_features.at(2, S::kElementOffset + S::element_slot("O")) == 1.0);
  CHECK(ethanol.node_features.at(2, S::kDegreeOffset + 1) == 1.0);
  CHECK(ethanol.node_features.at(2, S::kAromaticOffset) == 0.0);

  auto exotic = smiles_to_graph("[Fe]");
  CHECK(exotic.node_features.at(0, S::kElementSlots - 1) == 1.0);

  auto acid = smiles_to_graph("CC(=O)O");
  CHECK(acid.node_features.at(1, S::kValenceOffset + 4) == 1.0);  // 1 + 2 + 1
  CHECK(acid.node_features.at(1, S::kDegreeOffset + 3) == 1.0);
}

TEST_CASE("normalize_adjacency examples") {
  auto single = smiles_to_graph("C");
  CHECK(single.norm_adjacency.at(0, 0) == 1.0);
  auto pair = smiles_to_graph("CC");
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) CHECK(pair.norm_adjacency.at(i, j) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("malformed and unsupported input") {
  CHECK(code_of("C(C") == ErrorCode::UnclosedBranch);
  CHECK(code_of("CC)C") == ErrorCode::UnclosedBranch);
  CHECK(code_of("C1CC") == ErrorCode::UnmatchedRingClosure);
  CHECK(code_of("") == ErrorCode::EmptyMolecule);
  CHECK(code_of("C$C") == ErrorCode::LexError);
  CHECK(code_of("C[C") == ErrorCode::LexError);
  CHECK(code_of("C/C=C/C") == ErrorCode::Unsupported);
  CHECK(code_of("C[C@H](N)O") == ErrorCode::Unsupported);
  CHECK(code_of("[13C]") == ErrorCode::Unsupported);
  CHECK(code_of("CC.O") == ErrorCode::Unsupported);
  CHECK(code_of("C11") == ErrorCode::Unsupported);
  CHECK(code_of("C==C") == ErrorCode::MalformedInput);
  CHECK(code_of("(C)C") == ErrorCode::MalformedInput);
  CHECK(code_of("CC=") == ErrorCode::MalformedInput);
}

TEST_CASE("charges and explicit hydrogens are dropped") {
  auto g = smiles_to_graph("C[N+](C)(C)C");
  CHECK(g.num_atoms() == 5);
  CHECK(g.atoms[1].element == "N");
  auto h = smiles_to_graph("[NH4+]");
  CHECK(h.num_atoms() == 1);
}

TEST_CASE("write_graph") {
  std::ostringstream out;
  write_graph(out, smiles_to_graph("CO"));
  const std::string text = out.str();
  CHECK(text.rfind("graph 2 31 1\n", 0) == 0);
  CHECK(text.find("\n0 1 1\n") != std::string::npos);
}
