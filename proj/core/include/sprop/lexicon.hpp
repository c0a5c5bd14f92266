#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sprop {

// Word-level emotion scores, one per configured metric, each in [0,1].
struct EmotionVector {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  bool operator==(const EmotionVector&) const = default;
};

using WordSet = std::set<std::string, std::less<>>;
using LexiconEntries = std::map<std::string, EmotionVector, std::less<>>;

struct LexiconConfig {
  // Expected metric columns; empty accepts whatever the header declares.
  std::vector<std::string> metric_names;
  std::string language = "en";
};

// Immutable word -> emotion map plus the stopword and negation sets used to
// decide which tokens carry emotion. Keys are lowercase and whitespace-free.
class Lexicon {
 public:
  Lexicon() = default;
  Lexicon(std::vector<std::string> metric_names, std::string language);

  const std::vector<std::string>& metric_names() const noexcept { return metric_names_; }
  std::size_t dims() const noexcept { return metric_names_.size(); }
  const std::string& language() const noexcept { return language_; }
  std::size_t size() const noexcept { return entries_.size(); }
  const LexiconEntries& entries() const noexcept { return entries_; }

  // Form first, then lemma; both lowercased.
  std::optional<EmotionVector> lookup(std::string_view form, std::string_view lemma) const;
  const EmotionVector* find(std::string_view key) const;

  bool is_stopword(std::string_view form, std::string_view lemma) const;
  bool is_negation(std::string_view form, std::string_view lemma) const;

  const WordSet& stopwords() const noexcept { return stopwords_; }
  const WordSet& negations() const noexcept { return negations_; }

  // Returns true when an existing key was replaced.
  bool insert(std::string key, EmotionVector v);
  void set_stopwords(WordSet words) { stopwords_ = std::move(words); }
  void set_negations(WordSet words) { negations_ = std::move(words); }

  bool operator==(const Lexicon&) const = default;

 private:
  std::vector<std::string> metric_names_;
  std::string language_;
  LexiconEntries entries_;
  WordSet stopwords_;
  WordSet negations_;
};

struct LexiconLoadReport {
  std::size_t rows = 0;
  std::size_t duplicates = 0;
  std::vector<std::string> duplicate_keys;
};

struct LoadedLexicon {
  Lexicon lexicon;
  LexiconLoadReport report;
};

// Reads a `word<TAB>metric...` TSV. Duplicate keys: last row wins, counted
// in the report. Stopword/negation sets default to the bundled English lists
// when language is "en", and are empty otherwise.
LoadedLexicon load_lexicon(const std::string& path, const LexiconConfig& config = {});
LoadedLexicon parse_lexicon(std::string_view tsv, const LexiconConfig& config = {});

std::string serialize_lexicon(const Lexicon& lex);

// One lowercase token per line; `#` starts a comment.
WordSet load_word_list(const std::string& path);
WordSet parse_word_list(std::string_view content);

WordSet default_stopwords(std::string_view language);
WordSet default_negations(std::string_view language);

// A token prepared for lexicon scoring.
struct ScoredToken {
  std::string form;
  std::string lemma;
  bool stopword = false;
  bool punctuation = false;
  bool negation = false;
};

// Mean emotion over tokens that are not stopwords, punctuation or negations
// and are present in the lexicon. nullopt when no token qualifies.
std::optional<EmotionVector> lexicon_baseline(std::span<const ScoredToken> tokens, const Lexicon& lex);

}  // namespace sprop
