#pragma once

// SMILES subset parser producing featurized ligand graphs.
//
// Supported: organic-subset atoms, bracket atoms (charge and hydrogen counts
// are read and dropped), explicit bonds - = # :, branches, ring closures with
// single digits or %nn. Stereo marks, isotopes and dot-separated fragments are
// rejected with ErrorCode::Unsupported.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "dyndta/error.hpp"
#include "dyndta/tensor.hpp"

namespace dyndta {

enum class TokenKind { Atom, Bond, BranchOpen, BranchClose, Ring };

struct Token {
  TokenKind kind = TokenKind::Atom;
  std::size_t offset = 0;  // byte offset of the token's first character
  std::string text;
  // Atom tokens: canonical element symbol ("C", "Cl", "Se") and aromaticity.
  std::string element;
  bool aromatic = false;
  // Bond tokens: the bond character. Ring tokens: the closure number.
  char bond = 0;
  int ring = -1;

  bool operator==(const Token&) const = default;
};

enum class BondOrder { Single = 1, Double = 2, Triple = 3, Aromatic = 4 };

struct Atom {
  std::string element;
  bool aromatic = false;
};

struct Bond {
  std::size_t a;
  std::size_t b;  // a < b
  BondOrder order;

  bool operator==(const Bond&) const = default;
};

// Per-atom feature layout: element one-hot, degree one-hot, valence one-hot,
// aromatic flag.
struct AtomFeatureSchema {
  static constexpr std::string_view kElements[] = {"C", "N",  "O",  "S",  "F", "Cl", "Br", "I",
                                                   "P", "B",  "Si", "Se", "Na", "K", "Li"};
  static constexpr std::size_t kElementSlots = std::size(kElements) + 1;  // + "other"
  static constexpr std::size_t kDegreeSlots = 7;
  static constexpr std::size_t kValenceSlots = 7;
  static constexpr std::size_t kElementOffset = 0;
  static constexpr std::size_t kDegreeOffset = kElementSlots;
  static constexpr std::size_t kValenceOffset = kDegreeOffset + kDegreeSlots;
  static constexpr std::size_t kAromaticOffset = kValenceOffset + kValenceSlots;
  static constexpr std::size_t kWidth = kAromaticOffset + 1;

  static std::size_t element_slot(std::string_view element) noexcept;
};

static_assert(AtomFeatureSchema::kWidth == 31);

struct MolecularGraph {
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;
  Tensor node_features;   // [N x 31], filled by featurize
  Tensor norm_adjacency;  // [N x N], filled by normalize_adjacency

  std::size_t num_atoms() const noexcept { return atoms.size(); }
  std::size_t num_bonds() const noexcept { return bonds.size(); }
};

std::vector<Token> tokenize(std::string_view smiles);
MolecularGraph parse(const std::vector<Token>& tokens);
void featurize(MolecularGraph& graph);
void normalize_adjacency(MolecularGraph& graph);

// tokenize -> parse -> featurize -> normalize_adjacency.
MolecularGraph smiles_to_graph(std::string_view smiles);

// Debug dump: header "graph N C E", N feature rows, then E "a b order" lines.
void write_graph(std::ostream& out, const MolecularGraph& graph);

}  // namespace dyndta
