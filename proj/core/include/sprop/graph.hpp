#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sprop/conllu.hpp"
#include "sprop/lexicon.hpp"

namespace sprop {

// Dependency categories used as edge features. The numeric value is the
// row of the dependency embedding table.
enum class DepCategory : std::uint8_t {
  Subject = 0,
  Object,
  Negation,
  NounModifier,
  VerbModifier,
  Complement,
  Coordination,
  Function,
  Compound,
  Discourse,
  Parataxis,
  Punct,
  Other,
  SentenceLink,
  SentenceSeq,
};
inline constexpr std::size_t kDepCategoryCount = 15;

std::string_view dep_category_name(DepCategory c);

// The 17 Universal POS tags in alphabetical order, then the reserved
// sentence-node category and UNK.
inline constexpr std::array<std::string_view, 17> kUniversalPos = {
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X"};
inline constexpr std::size_t kSentencePos = 17;
inline constexpr std::size_t kUnknownPos = 18;
inline constexpr std::size_t kPosCategoryCount = 19;

std::size_t pos_category(std::string_view upos);
std::string_view pos_category_name(std::size_t id);

// Label-only relabeling. Subtypes fall back to their base label
// (obl:tmod -> obl); unknown labels map to Other.
DepCategory remap_deprel(std::string_view deprel);

// Token-aware relabeling: negation (label `neg`, an advmod whose word is in
// the negation list, or a PART in the negation list) wins over the label.
DepCategory classify_dependency(const TokenRecord& child, const Lexicon& lex);

enum class NodeKind : std::uint8_t { Word = 0, Sentence = 1 };

struct Node {
  NodeKind kind = NodeKind::Word;
  std::vector<double> emotion;
  double position = 0.0;
  std::size_t pos_category = kUnknownPos;
  // Display only. Never read by the model.
  std::string debug_form;
  // Sentence this node belongs to (0-based).
  std::size_t sentence = 0;

  bool operator==(const Node&) const = default;
};

// Message direction is src -> dst.
struct Edge {
  std::size_t src = 0;
  std::size_t dst = 0;
  DepCategory dep = DepCategory::Other;

  bool operator==(const Edge&) const = default;
};

struct TextGraph {
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  std::size_t n_sentences = 0;
  std::string source_id;

  std::size_t emotion_dims() const { return nodes.empty() ? 0 : nodes.front().emotion.size(); }
  bool operator==(const TextGraph&) const = default;
};

struct GraphConfig {
  std::size_t emotion_dims = 1;
};

bool is_retained_punctuation(std::string_view form);
std::string normalize_ellipsis(std::string_view form);

// Stage-B graph: punctuation pruning, emotion attachment, bidirectional
// dependency edges, one sentence node per sentence linked to its words and
// to its neighbouring sentence nodes. Word nodes come first in document
// order, then the sentence nodes.
TextGraph build_graph(const ParsedDocument& doc, const Lexicon& lex, const GraphConfig& config);

// Lexicon-scoring view of a document (no pruning).
std::vector<ScoredToken> scored_tokens(const ParsedDocument& doc, const Lexicon& lex);

// Throws GraphError when a structural invariant does not hold.
void validate_graph(const TextGraph& g);
bool is_connected(const TextGraph& g);

// One JSON object (single line) with all numeric fields.
std::string graph_to_json(const TextGraph& g);
TextGraph graph_from_json(std::string_view json);

}  // namespace sprop
