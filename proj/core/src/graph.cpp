#include "sprop/graph.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <utility>

#include "json.hpp"
#include "sprop/error.hpp"
#include "sprop/text.hpp"

namespace sprop {
namespace {

using json = nlohmann::json;

constexpr std::array<std::string_view, kDepCategoryCount> kDepNames = {
    "SUBJECT",  "OBJECT",   "NEGATION",  "NOUN_MODIFIER", "VERB_MODIFIER",
    "COMPLEMENT", "COORDINATION", "FUNCTION", "COMPOUND",  "DISCOURSE",
    "PARATAXIS", "PUNCT",   "OTHER",     "SENTENCE_LINK", "SENTENCE_SEQ"};

const std::map<std::string, DepCategory, std::less<>>& deprel_table() {
  using D = DepCategory;
  static const std::map<std::string, DepCategory, std::less<>> table = {
      {"nsubj", D::Subject},         {"nsubj:pass", D::Subject},    {"csubj", D::Subject},
      {"expl", D::Subject},          {"obj", D::Object},            {"iobj", D::Object},
      {"obl", D::Object},            {"neg", D::Negation},          {"amod", D::NounModifier},
      {"nmod", D::NounModifier},     {"appos", D::NounModifier},    {"nummod", D::NounModifier},
      {"det:poss", D::NounModifier}, {"advmod", D::VerbModifier},   {"advcl", D::VerbModifier},
      {"ccomp", D::Complement},      {"xcomp", D::Complement},      {"acl", D::Complement},
      {"conj", D::Coordination},     {"cc", D::Coordination},       {"det", D::Function},
      {"aux", D::Function},          {"cop", D::Function},          {"mark", D::Function},
      {"case", D::Function},         {"compound", D::Compound},     {"flat", D::Compound},
      {"fixed", D::Compound},        {"goeswith", D::Compound},     {"discourse", D::Discourse},
      {"vocative", D::Discourse},    {"parataxis", D::Parataxis},   {"list", D::Parataxis},
      {"punct", D::Punct},
  };
  return table;
}

std::string base_label(std::string_view deprel) {
  const auto lower = text::utf8_lower(text::trim(deprel));
  return lower.substr(0, lower.find(':'));
}

}  // namespace

std::string_view dep_category_name(DepCategory c) { return kDepNames.at(static_cast<std::size_t>(c)); }

std::size_t pos_category(std::string_view upos) {
  for (std::size_t i = 0; i < kUniversalPos.size(); ++i) {
    if (kUniversalPos[i] == upos) return i;
  }
  return kUnknownPos;
}

std::string_view pos_category_name(std::size_t id) {
  if (id < kUniversalPos.size()) return kUniversalPos[id];
  if (id == kSentencePos) return "SENTENCE";
  return "UNK";
}

DepCategory remap_deprel(std::string_view deprel) {
  const auto& table = deprel_table();
  const auto lower = text::utf8_lower(text::trim(deprel));
  if (const auto it = table.find(lower); it != table.end()) return it->second;
  if (const auto it = table.find(base_label(lower)); it != table.end()) return it->second;
  return DepCategory::Other;
}

DepCategory classify_dependency(const TokenRecord& child, const Lexicon& lex) {
  const auto base = base_label(child.deprel);
  if (base == "neg") return DepCategory::Negation;
  if ((base == "advmod" || child.upos == "PART") && lex.is_negation(child.form, child.lemma)) {
    return DepCategory::Negation;
  }
  return remap_deprel(child.deprel);
}

std::string normalize_ellipsis(std::string_view form) {
  return form == "…" ? std::string("...") : std::string(form);
}

bool is_retained_punctuation(std::string_view form) {
  const auto f = normalize_ellipsis(form);
  return f == "..." || f == "!" || f == "?";
}

TextGraph build_graph(const ParsedDocument& doc, const Lexicon& lex, const GraphConfig& config) {
  if (lex.dims() != config.emotion_dims) {
    throw GraphError("lexicon has " + std::to_string(lex.dims()) + " metrics, graph config expects " +
                     std::to_string(config.emotion_dims));
  }
  const auto E = config.emotion_dims;

  struct Kept {
    std::size_t node;
    const TokenRecord* token;
  };
  // Surviving tokens per non-empty sentence, keyed by original 1-based index.
  std::vector<std::map<std::size_t, Kept>> sentences;

  TextGraph g;
  g.source_id = doc.source_id;

  for (const auto& sentence : doc.sentences) {
    std::vector<const TokenRecord*> survivors;
    for (const auto& t : sentence) {
      if (t.upos == "PUNCT" && !is_retained_punctuation(t.form)) continue;
      survivors.push_back(&t);
    }
    if (survivors.empty()) continue;

    const auto sentence_idx = sentences.size();
    auto& kept = sentences.emplace_back();
    const auto n = static_cast<double>(survivors.size());
    for (std::size_t k = 0; k < survivors.size(); ++k) {
      const auto& t = *survivors[k];
      Node node;
      node.kind = NodeKind::Word;
      node.sentence = sentence_idx;
      node.position = static_cast<double>(k + 1) / n;
      node.pos_category = pos_category(t.upos);
      node.debug_form = normalize_ellipsis(t.form);
      node.emotion.assign(E, 0.0);
      const bool punct = t.upos == "PUNCT";
      if (!punct && !lex.is_stopword(t.form, t.lemma) && !lex.is_negation(t.form, t.lemma)) {
        if (const auto v = lex.lookup(t.form, t.lemma)) node.emotion = v->values;
      }
      kept.emplace(t.index, Kept{g.nodes.size(), &t});
      g.nodes.push_back(std::move(node));
    }
  }
  if (sentences.empty()) throw GraphError("document `" + doc.source_id + "` is empty after pruning");

  g.n_sentences = sentences.size();
  const auto n_words = g.nodes.size();
  for (std::size_t s = 0; s < g.n_sentences; ++s) {
    Node node;
    node.kind = NodeKind::Sentence;
    node.sentence = s;
    node.position = static_cast<double>(s + 1) / static_cast<double>(g.n_sentences);
    node.pos_category = kSentencePos;
    node.debug_form = "S";
    node.emotion.assign(E, 0.0);
    g.nodes.push_back(std::move(node));
  }

  for (const auto& kept : sentences) {
    for (const auto& [index, child] : kept) {
      if (child.token->head == 0) continue;
      const auto head = kept.find(child.token->head);
      if (head == kept.end()) continue;
      const auto dep = classify_dependency(*child.token, lex);
      g.edges.push_back({child.node, head->second.node, dep});
      g.edges.push_back({head->second.node, child.node, dep});
    }
  }
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    const auto sentence_node = n_words + s;
    for (const auto& [index, word] : sentences[s]) {
      g.edges.push_back({word.node, sentence_node, DepCategory::SentenceLink});
      g.edges.push_back({sentence_node, word.node, DepCategory::SentenceLink});
    }
  }
  for (std::size_t s = 0; s + 1 < g.n_sentences; ++s) {
    g.edges.push_back({n_words + s, n_words + s + 1, DepCategory::SentenceSeq});
    g.edges.push_back({n_words + s + 1, n_words + s, DepCategory::SentenceSeq});
  }
  return g;
}

std::vector<ScoredToken> scored_tokens(const ParsedDocument& doc, const Lexicon& lex) {
  std::vector<ScoredToken> out;
  for (const auto& sentence : doc.sentences) {
    for (const auto& t : sentence) {
      ScoredToken st;
      st.form = t.form;
      st.lemma = t.lemma;
      st.punctuation = t.upos == "PUNCT";
      st.stopword = lex.is_stopword(t.form, t.lemma);
      st.negation = lex.is_negation(t.form, t.lemma);
      out.push_back(std::move(st));
    }
  }
  return out;
}

bool is_connected(const TextGraph& g) {
  if (g.nodes.empty()) return false;
  std::vector<std::vector<std::size_t>> adj(g.nodes.size());
  for (const auto& e : g.edges) {
    if (e.src >= g.nodes.size() || e.dst >= g.nodes.size()) return false;
    adj[e.src].push_back(e.dst);
    adj[e.dst].push_back(e.src);
  }
  std::vector<bool> seen(g.nodes.size(), false);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  std::size_t visited = 0;
  while (!stack.empty()) {
    const auto v = stack.back();
    stack.pop_back();
    ++visited;
    for (const auto w : adj[v]) {
      if (!seen[w]) {
        seen[w] = true;
        stack.push_back(w);
      }
    }
  }
  return visited == g.nodes.size();
}

void validate_graph(const TextGraph& g) {
  if (g.nodes.empty()) throw GraphError("graph has no nodes");
  const auto E = g.emotion_dims();
  std::vector<std::size_t> sentence_node(g.n_sentences, g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto& n = g.nodes[i];
    if (n.emotion.size() != E) throw GraphError("node " + std::to_string(i) + " has inconsistent emotion size");
    if (!(n.position > 0.0 && n.position <= 1.0)) throw GraphError("node " + std::to_string(i) + " position outside (0,1]");
    if (n.pos_category >= kPosCategoryCount) throw GraphError("node " + std::to_string(i) + " has invalid POS category");
    if (n.sentence >= g.n_sentences) throw GraphError("node " + std::to_string(i) + " has invalid sentence index");
    if (n.kind == NodeKind::Sentence) {
      if (n.pos_category != kSentencePos) throw GraphError("sentence node without the sentence POS category");
      if (std::any_of(n.emotion.begin(), n.emotion.end(), [](double x) { return x != 0.0; })) {
        throw GraphError("sentence node with non-zero emotion");
      }
      sentence_node[n.sentence] = i;
    }
  }
  std::set<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& e : g.edges) {
    if (e.src >= g.nodes.size() || e.dst >= g.nodes.size()) throw GraphError("dangling edge");
    if (e.src == e.dst) throw GraphError("self edge");
    if (static_cast<std::size_t>(e.dep) >= kDepCategoryCount) throw GraphError("invalid dependency category");
    pairs.emplace(e.src, e.dst);
  }
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto& n = g.nodes[i];
    if (n.kind != NodeKind::Word) continue;
    const auto s = sentence_node[n.sentence];
    if (s == g.nodes.size() || !pairs.contains({i, s})) {
      throw GraphError("word node " + std::to_string(i) + " is not linked to its sentence node");
    }
  }
  for (std::size_t s = 0; s + 1 < g.n_sentences; ++s) {
    if (!pairs.contains({sentence_node[s], sentence_node[s + 1]})) {
      throw GraphError("sentence nodes " + std::to_string(s) + " and " + std::to_string(s + 1) + " are not linked");
    }
  }
  if (!is_connected(g)) throw GraphError("graph is not connected");
}

std::string graph_to_json(const TextGraph& g) {
  json j;
  j["source_id"] = g.source_id;
  j["n_sentences"] = g.n_sentences;
  json nodes = json::array();
  for (const auto& n : g.nodes) {
    nodes.push_back({{"kind", n.kind == NodeKind::Word ? "word" : "sentence"},
                     {"emotion", n.emotion},
                     {"position", n.position},
                     {"pos", n.pos_category},
                     {"sentence", n.sentence},
                     {"form", n.debug_form}});
  }
  json edges = json::array();
  for (const auto& e : g.edges) {
    edges.push_back({{"src", e.src}, {"dst", e.dst}, {"dep", static_cast<int>(e.dep)}});
  }
  j["nodes"] = std::move(nodes);
  j["edges"] = std::move(edges);
  return j.dump();
}

TextGraph graph_from_json(std::string_view text) {
  try {
    const auto j = json::parse(text);
    TextGraph g;
    g.source_id = j.at("source_id").get<std::string>();
    g.n_sentences = j.at("n_sentences").get<std::size_t>();
    for (const auto& jn : j.at("nodes")) {
      Node n;
      n.kind = jn.at("kind").get<std::string>() == "sentence" ? NodeKind::Sentence : NodeKind::Word;
      n.emotion = jn.at("emotion").get<std::vector<double>>();
      n.position = jn.at("position").get<double>();
      n.pos_category = jn.at("pos").get<std::size_t>();
      n.sentence = jn.at("sentence").get<std::size_t>();
      n.debug_form = jn.value("form", std::string{});
      g.nodes.push_back(std::move(n));
    }
    for (const auto& je : j.at("edges")) {
      const auto dep = je.at("dep").get<int>();
      if (dep < 0 || dep >= static_cast<int>(kDepCategoryCount)) throw GraphError("invalid dependency category");
      g.edges.push_back({je.at("src").get<std::size_t>(), je.at("dst").get<std::size_t>(),
                         static_cast<DepCategory>(dep)});
    }
    return g;
  } catch (const json::exception& e) {
    throw GraphError(std::string("malformed graph JSON: ") + e.what());
  }
}

}  // namespace sprop
