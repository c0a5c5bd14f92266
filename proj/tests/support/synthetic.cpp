#include "synthetic.hpp"

#include <array>
#include <fstream>
#include <map>

#include <unistd.h>

#include "sprop/text.hpp"

namespace sprop::testkit {
namespace {

struct Word {
  const char* form;
  double valence;
};

constexpr std::array<Word, 20> kAdjectives = {{
    {"happy", 0.92}, {"wonderful", 0.95}, {"great", 0.88}, {"good", 0.8},   {"nice", 0.76},
    {"pleasant", 0.72}, {"calm", 0.66}, {"fine", 0.62},    {"okay", 0.55},  {"plain", 0.5},
    {"odd", 0.44},     {"boring", 0.35}, {"dull", 0.3},    {"sad", 0.18},   {"bad", 0.2},
    {"awful", 0.08},   {"terrible", 0.05}, {"angry", 0.15}, {"lonely", 0.22}, {"tired", 0.38},
}};

constexpr std::array<Word, 8> kNouns = {{
    {"movie", 0.55}, {"food", 0.6}, {"day", 0.58}, {"weather", 0.5},
    {"party", 0.75}, {"exam", 0.35}, {"trip", 0.65}, {"meeting", 0.42},
}};

}  // namespace

Lexicon synthetic_lexicon() {
  std::string tsv = "word\tvalence\n";
  for (const auto& w : kAdjectives) tsv += std::string(w.form) + "\t" + std::to_string(w.valence) + "\n";
  for (const auto& w : kNouns) tsv += std::string(w.form) + "\t" + std::to_string(w.valence) + "\n";
  return parse_lexicon(tsv).lexicon;
}

ParsedDocument make_doc(std::string id, const std::vector<std::vector<TokenSpec>>& sentences) {
  ParsedDocument doc;
  doc.source_id = std::move(id);
  for (const auto& s : sentences) {
    Sentence sentence;
    for (std::size_t i = 0; i < s.size(); ++i) {
      TokenRecord t;
      t.index = i + 1;
      t.form = s[i].form;
      t.lemma = text::utf8_lower(s[i].form);
      t.upos = s[i].upos;
      t.head = s[i].head;
      t.deprel = s[i].deprel;
      sentence.push_back(std::move(t));
    }
    doc.sentences.push_back(std::move(sentence));
  }
  return doc;
}

ParsedDocument i_am(const std::string& id, const std::string& adjective, bool negated) {
  if (negated) {
    return make_doc(id, {{{"I", "PRON", 4, "nsubj"},
                          {"am", "AUX", 4, "cop"},
                          {"not", "PART", 4, "advmod"},
                          {adjective, "ADJ", 0, "root"},
                          {".", "PUNCT", 4, "punct"}}});
  }
  return make_doc(id, {{{"I", "PRON", 3, "nsubj"}, {"am", "AUX", 3, "cop"}, {adjective, "ADJ", 0, "root"}, {".", "PUNCT", 3, "punct"}}});
}

double rule_valence(const ParsedDocument& doc, const Lexicon& lex) {
  double sum = 0.0;
  std::size_t count = 0;
  bool flipped = false;
  for (const auto& s : doc.sentences) {
    for (const auto& t : s) {
      if (t.upos == "PUNCT" || lex.is_stopword(t.form, t.lemma) || lex.is_negation(t.form, t.lemma)) continue;
      const auto v = lex.lookup(t.form, t.lemma);
      if (!v) continue;
      sum += (*v)[0];
      ++count;
      for (const auto& n : s) {
        if (lex.is_negation(n.form, n.lemma) && (n.head == t.index || (t.head != 0 && n.head == t.head))) flipped = true;
      }
    }
  }
  const double mean = count == 0 ? 0.5 : sum / static_cast<double>(count);
  return flipped ? 1.0 - mean : mean;
}

std::vector<ParsedDocument> synthetic_documents(std::size_t n, std::uint64_t seed, const std::string& prefix) {
  Rng rng(seed);
  std::vector<ParsedDocument> docs;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = prefix + std::to_string(i);
    const std::string adj = kAdjectives[uniform_index(rng, kAdjectives.size())].form;
    const std::string noun = kNouns[uniform_index(rng, kNouns.size())].form;
    const bool neg = uniform01(rng) < 0.5;
    switch (uniform_index(rng, 4)) {
      case 0:
        docs.push_back(i_am(id, adj, neg));
        break;
      case 1:  // The NOUN is [not] ADJ .
        if (neg) {
          docs.push_back(make_doc(id, {{{"The", "DET", 2, "det"}, {noun, "NOUN", 5, "nsubj"}, {"is", "AUX", 5, "cop"},
                                        {"not", "PART", 5, "advmod"}, {adj, "ADJ", 0, "root"}, {".", "PUNCT", 5, "punct"}}}));
        } else {
          docs.push_back(make_doc(id, {{{"The", "DET", 2, "det"}, {noun, "NOUN", 4, "nsubj"}, {"is", "AUX", 4, "cop"},
                                        {adj, "ADJ", 0, "root"}, {".", "PUNCT", 4, "punct"}}}));
        }
        break;
      case 2:  // This was [not] a ADJ NOUN !
        if (neg) {
          docs.push_back(make_doc(id, {{{"This", "PRON", 6, "nsubj"}, {"was", "AUX", 6, "cop"}, {"not", "PART", 6, "advmod"},
                                        {"a", "DET", 6, "det"}, {adj, "ADJ", 6, "amod"}, {noun, "NOUN", 0, "root"},
                                        {"!", "PUNCT", 6, "punct"}}}));
        } else {
          docs.push_back(make_doc(id, {{{"This", "PRON", 5, "nsubj"}, {"was", "AUX", 5, "cop"}, {"a", "DET", 5, "det"},
                                        {adj, "ADJ", 5, "amod"}, {noun, "NOUN", 0, "root"}, {"!", "PUNCT", 5, "punct"}}}));
        }
        break;
      default:  // The NOUN was very ADJ . It was [not] ADJ .
        if (neg) {
          docs.push_back(make_doc(id, {{{"It", "PRON", 4, "nsubj"}, {"was", "AUX", 4, "cop"}, {"not", "PART", 4, "advmod"},
                                        {adj, "ADJ", 0, "root"}, {"...", "PUNCT", 4, "punct"}}}));
        } else {
          docs.push_back(make_doc(id, {{{"It", "PRON", 4, "nsubj"}, {"was", "AUX", 4, "cop"}, {"very", "ADV", 4, "advmod"},
                                        {adj, "ADJ", 0, "root"}, {"...", "PUNCT", 4, "punct"}}}));
        }
        break;
    }
  }
  return docs;
}

std::vector<LabeledExample> synthetic_examples(std::size_t n, std::uint64_t seed, const Lexicon& lex,
                                               const std::string& prefix) {
  std::vector<LabeledExample> out;
  for (const auto& doc : synthetic_documents(n, seed, prefix)) {
    out.push_back({doc.source_id, build_graph(doc, lex, GraphConfig{lex.dims()}), std::vector<double>{rule_valence(doc, lex)}});
  }
  return out;
}

TextGraph random_graph(Rng& rng, std::size_t n, std::size_t emotion_dims) {
  TextGraph g;
  g.n_sentences = 1;
  g.source_id = "random";
  for (std::size_t i = 0; i < n; ++i) {
    Node node;
    const bool sentence = i + 1 == n;
    node.kind = sentence ? NodeKind::Sentence : NodeKind::Word;
    node.emotion.assign(emotion_dims, 0.0);
    if (!sentence && uniform01(rng) < 0.7) {
      for (auto& e : node.emotion) e = uniform01(rng);
    }
    node.position = sentence ? 1.0 : static_cast<double>(i + 1) / static_cast<double>(n - 1);
    node.pos_category = sentence ? kSentencePos : uniform_index(rng, kUniversalPos.size());
    node.debug_form = sentence ? "S" : "w" + std::to_string(i);
    g.nodes.push_back(std::move(node));
  }
  auto link = [&](std::size_t a, std::size_t b, DepCategory dep) {
    g.edges.push_back({a, b, dep});
    g.edges.push_back({b, a, dep});
  };
  // Random tree over the word nodes, then every word to the sentence node.
  for (std::size_t i = 1; i + 1 < n; ++i) {
    link(i, uniform_index(rng, i), static_cast<DepCategory>(uniform_index(rng, 13)));
  }
  for (std::size_t i = 0; i + 1 < n; ++i) link(i, n - 1, DepCategory::SentenceLink);
  return g;
}

std::vector<audit::StimulusRecord> audit_records(std::uint64_t seed, std::size_t per_cell, bool with_transformer) {
  Rng rng(seed);
  const std::array<const char*, 3> parties{"ruling", "opposition", "independent"};
  const std::array<double, 3> sprop_effect{0.0, -2.0, 1.0};
  const std::array<double, 3> transformer_effect{0.0, -6.0, 3.0};
  std::vector<audit::StimulusRecord> out;
  std::size_t id = 0;
  for (std::size_t a = 0; a < parties.size(); ++a) {
    for (int gender = 0; gender < 2; ++gender) {
      for (std::size_t k = 0; k < per_cell; ++k, ++id) {
        for (std::size_t s = 0; s < audit::kStimulusTypeCount; ++s) {
          audit::StimulusRecord r;
          r.politician_id = "pol" + std::to_string(id);
          r.stimulus = static_cast<audit::StimulusType>(s);
          r.affiliation = parties[a];
          r.gender = gender;
          const double base = 50.0 + 5.0 * static_cast<double>(s);
          r.y_sprop = base + sprop_effect[a] + 1.5 * gender + 4.0 * (uniform01(rng) - 0.5);
          if (with_transformer) {
            r.y_transformer = base + transformer_effect[a] + 5.0 * gender + 4.0 * (uniform01(rng) - 0.5);
          }
          out.push_back(std::move(r));
        }
      }
    }
  }
  return out;
}

std::string slurp(const std::filesystem::path& p) { return text::read_file(p.string()); }

Workspace write_workspace(const std::string& name, std::size_t n_docs, std::uint64_t seed) {
  Workspace w;
  w.dir = std::filesystem::temp_directory_path() / ("sprop_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(w.dir);
  std::filesystem::create_directories(w.dir);
  const auto lex = synthetic_lexicon();
  const auto docs = synthetic_documents(n_docs, seed, "doc");
  const auto put = [&](const char* file, const std::string& content) {
    const auto path = (w.dir / file).string();
    std::ofstream(path, std::ios::binary) << content;
    return path;
  };
  w.conllu = put("corpus.conllu", write_conllu(docs));
  std::string labels = "id,text_ref,valence\n";
  for (const auto& d : docs) labels += "l" + d.source_id + "," + d.source_id + "," + text::format_double(rule_valence(d, lex)) + "\n";
  w.labels = put("labels.csv", labels);
  w.lexicon = put("lexicon.tsv", serialize_lexicon(lex));
  std::string audit = "politician_id,stimulus_type,affiliation,gender,y_sprop,y_transformer\n";
  for (const auto& r : audit_records(seed, 2, true)) {
    audit += r.politician_id + "," + std::string(audit::stimulus_name(r.stimulus)) + "," + r.affiliation + "," +
             std::to_string(r.gender) + "," + text::format_double(r.y_sprop) + "," + text::format_double(*r.y_transformer) + "\n";
  }
  w.audit = put("audit.csv", audit);
  return w;
}

}  // namespace sprop::testkit
