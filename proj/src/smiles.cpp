#include "dyndta/smiles.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <set>

namespace dyndta {

namespace {

constexpr std::string_view kAllElements[] = {
    "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si", "P",  "S",
    "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge",
    "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd",
    "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd",
    "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",  "Re", "Os", "Ir", "Pt", "Au", "Hg",
    "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U",  "Np", "Pu", "Am", "Cm",
    "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn",
    "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

// Aromatic symbols accepted inside brackets.
constexpr std::string_view kBracketAromatic[] = {"se", "as", "te", "b", "c", "n", "o", "p", "s"};

bool is_element(std::string_view sym) {
  return std::find(std::begin(kAllElements), std::end(kAllElements), sym) != std::end(kAllElements);
}

std::string capitalize(std::string_view s) {
  std::string out(s);
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

[[noreturn]] void lex_error(std::size_t offset, const std::string& msg) {
  throw ParseError(ErrorCode::LexError, offset, msg);
}

[[noreturn]] void unsupported(std::size_t offset, const std::string& construct) {
  throw ParseError(ErrorCode::Unsupported, offset, construct + " is not supported");
}

Token make_token(TokenKind kind, std::size_t offset, std::string text) {
  Token t;
  t.kind = kind;
  t.offset = offset;
  t.text = std::move(text);
  return t;
}

Token atom_token(std::size_t offset, std::string text, std::string element, bool aromatic) {
  Token t = make_token(TokenKind::Atom, offset, std::move(text));
  t.element = std::move(element);
  t.aromatic = aromatic;
  return t;
}

// Parses the contents of a bracket atom starting at text[open] == '['.
Token bracket_atom(std::string_view text, std::size_t open, std::size_t& pos) {
  const std::size_t close = text.find(']', open);
  if (close == std::string_view::npos) lex_error(open, "unterminated bracket atom");
  std::string_view body = text.substr(open + 1, close - open - 1);
  std::size_t i = 0;
  auto at = [&](std::size_t k) { return open + 1 + k; };
  if (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) unsupported(at(i), "isotope label");

  std::string element;
  bool aromatic = false;
  if (i < body.size() && std::isupper(static_cast<unsigned char>(body[i]))) {
    if (i + 1 < body.size() && std::islower(static_cast<unsigned char>(body[i + 1])) &&
        is_element(body.substr(i, 2))) {
      element = std::string(body.substr(i, 2));
      i += 2;
    } else if (is_element(body.substr(i, 1))) {
      element = std::string(body.substr(i, 1));
      i += 1;
    }
  } else if (i < body.size() && std::islower(static_cast<unsigned char>(body[i]))) {
    for (auto sym : kBracketAromatic) {
      if (body.substr(i, sym.size()) == sym) {
        element = capitalize(sym);
        aromatic = true;
        i += sym.size();
        break;
      }
    }
  }
  if (element.empty()) lex_error(at(i), "bracket atom without a valid element symbol");

  while (i < body.size()) {
    const char c = body[i];
    if (c == '@') unsupported(at(i), "stereochemistry '@'");
    if (c == 'H' || c == '+' || c == '-' || c == ':' || std::isdigit(static_cast<unsigned char>(c))) {
      ++i;  // hydrogen counts, charges and atom classes are read and discarded
      continue;
    }
    lex_error(at(i), std::string("unexpected character '") + c + "' in bracket atom");
  }
  pos = close + 1;
  return atom_token(open, std::string(text.substr(open, close - open + 1)), element, aromatic);
}

}  // namespace

std::size_t AtomFeatureSchema::element_slot(std::string_view element) noexcept {
  for (std::size_t i = 0; i < std::size(kElements); ++i)
    if (kElements[i] == element) return i;
  return kElementSlots - 1;
}

std::vector<Token> tokenize(std::string_view smiles) {
  if (smiles.empty()) throw ParseError(ErrorCode::EmptyMolecule, 0, "empty SMILES text");
  std::vector<Token> tokens;
  std::size_t pos = 0;
  while (pos < smiles.size()) {
    const char c = smiles[pos];
    const std::size_t start = pos;
    switch (c) {
      case 'C':
      case 'B': {
        const char next = pos + 1 < smiles.size() ? smiles[pos + 1] : '\0';
        if ((c == 'C' && next == 'l') || (c == 'B' && next == 'r')) {
          std::string sym{c, next};
          tokens.push_back(atom_token(start, sym, sym, false));
          pos += 2;
        } else {
          tokens.push_back(atom_token(start, std::string(1, c), std::string(1, c), false));
          ++pos;
        }
        break;
      }
      case 'N': case 'O': case 'P': case 'S': case 'F': case 'I':
        tokens.push_back(atom_token(start, std::string(1, c), std::string(1, c), false));
        ++pos;
        break;
      case 'b': case 'c': case 'n': case 'o': case 'p': case 's':
        tokens.push_back(atom_token(start, std::string(1, c), capitalize(std::string(1, c)), true));
        ++pos;
        break;
      case '[':
        tokens.push_back(bracket_atom(smiles, pos, pos));
        break;
      case '-': case '=': case '#': case ':': {
        Token t = make_token(TokenKind::Bond, start, std::string(1, c));
        t.bond = c;
        tokens.push_back(t);
        ++pos;
        break;
      }
      case '/': case '\\':
        unsupported(start, std::string("stereo bond '") + c + "'");
      case '.':
        unsupported(start, "multi-fragment '.'");
      case '(':
        tokens.push_back(make_token(TokenKind::BranchOpen, start, "("));
        ++pos;
        break;
      case ')':
        tokens.push_back(make_token(TokenKind::BranchClose, start, ")"));
        ++pos;
        break;
      case '%': {
        if (pos + 2 >= smiles.size() || !std::isdigit(static_cast<unsigned char>(smiles[pos + 1])) ||
            !std::isdigit(static_cast<unsigned char>(smiles[pos + 2]))) {
          lex_error(start, "'%' must be followed by two digits");
        }
        Token t = make_token(TokenKind::Ring, start, std::string(smiles.substr(pos, 3)));
        t.ring = (smiles[pos + 1] - '0') * 10 + (smiles[pos + 2] - '0');
        tokens.push_back(t);
        pos += 3;
        break;
      }
      default:
        if (std::isdigit(static_cast<unsigned char>(c))) {
          Token t = make_token(TokenKind::Ring, start, std::string(1, c));
          t.ring = c - '0';
          tokens.push_back(t);
          ++pos;
          break;
        }
        lex_error(start, std::string("unrecognized character '") + c + "'");
    }
  }
  return tokens;
}

MolecularGraph parse(const std::vector<Token>& tokens) {
  MolecularGraph g;
  std::set<std::pair<std::size_t, std::size_t>> bonded;
  std::optional<std::size_t> prev;
  std::optional<BondOrder> pending;
  std::size_t pending_offset = 0;
  std::vector<std::pair<std::size_t, std::size_t>> branches;  // (atom, offset of '(')
  struct OpenRing {
    std::size_t atom;
    std::optional<BondOrder> order;
    std::size_t offset;
  };
  std::map<int, OpenRing> rings;

  auto syntax = [](std::size_t offset, const std::string& msg) {
    throw ParseError(ErrorCode::MalformedInput, offset, msg);
  };
  auto implicit_order = [&](std::size_t a, std::size_t b) {
    return g.atoms[a].aromatic && g.atoms[b].aromatic ? BondOrder::Aromatic : BondOrder::Single;
  };
  auto connect = [&](std::size_t a, std::size_t b, BondOrder order, std::size_t offset) {
    auto key = std::minmax(a, b);
    if (a == b || !bonded.insert(key).second) unsupported(offset, "ring closure duplicating an existing bond");
    g.bonds.push_back({key.first, key.second, order});
  };

  for (const Token& t : tokens) {
    switch (t.kind) {
      case TokenKind::Atom: {
        const std::size_t idx = g.atoms.size();
        g.atoms.push_back({t.element, t.aromatic});
        if (prev) connect(*prev, idx, pending.value_or(implicit_order(*prev, idx)), t.offset);
        else if (pending) syntax(pending_offset, "bond without a preceding atom");
        prev = idx;
        pending.reset();
        break;
      }
      case TokenKind::Bond: {
        if (pending) syntax(t.offset, "two consecutive bond symbols");
        switch (t.bond) {
          case '-': pending = BondOrder::Single; break;
          case '=': pending = BondOrder::Double; break;
          case '#': pending = BondOrder::Triple; break;
          default: pending = BondOrder::Aromatic; break;
        }
        pending_offset = t.offset;
        break;
      }
      case TokenKind::BranchOpen:
        if (!prev) syntax(t.offset, "branch without a preceding atom");
        if (pending) syntax(t.offset, "bond symbol before '('");
        branches.emplace_back(*prev, t.offset);
        break;
      case TokenKind::BranchClose:
        if (branches.empty()) throw ParseError(ErrorCode::UnclosedBranch, t.offset, "')' without matching '('");
        if (pending) syntax(pending_offset, "dangling bond symbol before ')'");
        prev = branches.back().first;
        branches.pop_back();
        break;
      case TokenKind::Ring: {
        if (!prev) syntax(t.offset, "ring closure without a preceding atom");
        auto it = rings.find(t.ring);
        if (it == rings.end()) {
          rings[t.ring] = {*prev, pending, t.offset};
        } else {
          const OpenRing open = it->second;
          if (pending && open.order && *pending != *open.order) {
            syntax(t.offset, "conflicting bond orders on ring closure " + std::to_string(t.ring));
          }
          const BondOrder order = pending ? *pending : open.order.value_or(implicit_order(open.atom, *prev));
          connect(open.atom, *prev, order, t.offset);
          rings.erase(it);
        }
        pending.reset();
        break;
      }
    }
  }
  if (pending) syntax(pending_offset, "dangling bond symbol at end of input");
  if (!branches.empty()) throw ParseError(ErrorCode::UnclosedBranch, branches.back().second, "unclosed '('");
  if (!rings.empty()) {
    const auto& [num, open] = *rings.begin();
    throw ParseError(ErrorCode::UnmatchedRingClosure, open.offset,
                     "ring closure " + std::to_string(num) + " never closed");
  }
  if (g.atoms.empty()) throw ParseError(ErrorCode::EmptyMolecule, 0, "no atoms in SMILES");
  return g;
}

void featurize(MolecularGraph& graph) {
  using S = AtomFeatureSchema;
  const std::size_t n = graph.atoms.size();
  std::vector<std::size_t> degree(n, 0);
  std::vector<double> bond_sum(n, 0.0);
  for (const auto& b : graph.bonds) {
    const double order = b.order == BondOrder::Aromatic ? 1.5 : static_cast<double>(static_cast<int>(b.order));
    for (auto idx : {b.a, b.b}) {
      ++degree[idx];
      bond_sum[idx] += order;
    }
  }
  std::vector<double> features(n * S::kWidth, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = features.data() + i * S::kWidth;
    row[S::kElementOffset + S::element_slot(graph.atoms[i].element)] = 1.0;
    row[S::kDegreeOffset + std::min(degree[i], S::kDegreeSlots - 1)] = 1.0;
    const auto valence = static_cast<std::size_t>(std::floor(bond_sum[i]));
    row[S::kValenceOffset + std::min(valence, S::kValenceSlots - 1)] = 1.0;
    row[S::kAromaticOffset] = graph.atoms[i].aromatic ? 1.0 : 0.0;
  }
  graph.node_features = Tensor::from({n, S::kWidth}, std::move(features));
}

void normalize_adjacency(MolecularGraph& graph) {
  const std::size_t n = graph.atoms.size();
  std::vector<double> adj(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) adj[i * n + i] = 1.0;
  for (const auto& b : graph.bonds) {
    if (b.a >= n || b.b >= n) throw Error(ErrorCode::IndexOutOfRange, "bond index outside the atom list");
    adj[b.a * n + b.b] = 1.0;
    adj[b.b * n + b.a] = 1.0;
  }
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += adj[i * n + j];
    inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) adj[i * n + j] *= inv_sqrt_deg[i] * inv_sqrt_deg[j];
  graph.norm_adjacency = Tensor::from({n, n}, std::move(adj));
}

MolecularGraph smiles_to_graph(std::string_view smiles) {
  MolecularGraph g = parse(tokenize(smiles));
  featurize(g);
  normalize_adjacency(g);
  return g;
}

void write_graph(std::ostream& out, const MolecularGraph& graph) {
  const std::size_t c = graph.node_features.defined() ? graph.node_features.dim(1) : 0;
  out << "graph " << graph.num_atoms() << ' ' << c << ' ' << graph.num_bonds() << '\n';
  for (std::size_t i = 0; i < graph.num_atoms() && c > 0; ++i) {
    for (std::size_t j = 0; j < c; ++j) out << (j ? " " : "") << graph.node_features.at(i, j);
    out << '\n';
  }
  for (const auto& b : graph.bonds) out << b.a << ' ' << b.b << ' ' << static_cast<int>(b.order) << '\n';
}

}  // namespace dyndta
