#include "sprop/lexicon.hpp"

#include <fstream>
#include <sstream>

#include "sprop/error.hpp"
#include "sprop/text.hpp"
#include "sprop_default_lists.inc"

namespace sprop {

Lexicon::Lexicon(std::vector<std::string> metric_names, std::string language)
    : metric_names_(std::move(metric_names)), language_(std::move(language)) {}

const EmotionVector* Lexicon::find(std::string_view key) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

std::optional<EmotionVector> Lexicon::lookup(std::string_view form, std::string_view lemma) const {
  if (!form.empty()) {
    if (const auto* v = find(text::utf8_lower(form))) return *v;
  }
  if (!lemma.empty() && lemma != "_") {
    if (const auto* v = find(text::utf8_lower(lemma))) return *v;
  }
  return std::nullopt;
}

bool Lexicon::is_stopword(std::string_view form, std::string_view lemma) const {
  return stopwords_.contains(text::utf8_lower(form)) ||
         (!lemma.empty() && lemma != "_" && stopwords_.contains(text::utf8_lower(lemma)));
}

bool Lexicon::is_negation(std::string_view form, std::string_view lemma) const {
  return negations_.contains(text::utf8_lower(form)) ||
         (!lemma.empty() && lemma != "_" && negations_.contains(text::utf8_lower(lemma)));
}

bool Lexicon::insert(std::string key, EmotionVector v) {
  if (v.size() != metric_names_.size()) {
    throw LexiconError("emotion vector has " + std::to_string(v.size()) + " values, lexicon expects " +
                       std::to_string(metric_names_.size()));
  }
  auto [it, inserted] = entries_.insert_or_assign(std::move(key), std::move(v));
  return !inserted;
}

LoadedLexicon parse_lexicon(std::string_view tsv, const LexiconConfig& config) {
  std::size_t row = 0;
  std::size_t pos = 0;
  bool have_header = false;
  LoadedLexicon out;

  while (pos <= tsv.size()) {
    auto nl = tsv.find('\n', pos);
    if (nl == std::string_view::npos) nl = tsv.size();
    std::string_view line = tsv.substr(pos, nl - pos);
    pos = nl + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++row;
    if (text::trim(line).empty()) {
      if (nl == tsv.size()) break;
      continue;
    }
    const auto cols = text::split(line, '\t');

    if (!have_header) {
      if (cols.size() < 2 || text::trim(cols[0]) != "word") {
        throw LexiconError("lexicon header must be `word<TAB>metric...` (row " + std::to_string(row) + ")");
      }
      std::vector<std::string> names;
      for (std::size_t i = 1; i < cols.size(); ++i) names.emplace_back(text::trim(cols[i]));
      if (!config.metric_names.empty() && names != config.metric_names) {
        std::string expected;
        for (const auto& n : config.metric_names) expected += (expected.empty() ? "" : ",") + n;
        throw LexiconError("lexicon metric columns do not match the configured metrics (" + expected + ")");
      }
      out.lexicon = Lexicon(std::move(names), config.language);
      have_header = true;
      continue;
    }

    const auto dims = out.lexicon.dims();
    if (cols.size() != dims + 1) {
      throw LexiconError("expected " + std::to_string(dims + 1) + " columns at row " + std::to_string(row));
    }
    const auto raw_key = text::trim(cols[0]);
    if (raw_key.empty() || text::has_whitespace(raw_key)) {
      throw LexiconError("invalid key at row " + std::to_string(row));
    }
    EmotionVector v;
    v.values.reserve(dims);
    for (std::size_t i = 1; i < cols.size(); ++i) {
      const auto value = text::parse_double(cols[i]);
      if (!value) throw LexiconError("non-numeric score at row " + std::to_string(row));
      if (*value < 0.0 || *value > 1.0) throw LexiconError("score out of range at row " + std::to_string(row));
      v.values.push_back(*value);
    }
    std::string key = text::utf8_lower(raw_key);
    ++out.report.rows;
    if (out.lexicon.insert(key, std::move(v))) {
      ++out.report.duplicates;
      out.report.duplicate_keys.push_back(std::move(key));
    }
    if (nl == tsv.size()) break;
  }
  if (!have_header) throw LexiconError("lexicon file has no header row");

  out.lexicon.set_stopwords(default_stopwords(config.language));
  out.lexicon.set_negations(default_negations(config.language));
  return out;
}

LoadedLexicon load_lexicon(const std::string& path, const LexiconConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LexiconError("lexicon file not found: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_lexicon(ss.str(), config);
}

std::string serialize_lexicon(const Lexicon& lex) {
  std::string out = "word";
  for (const auto& n : lex.metric_names()) out += "\t" + n;
  out += "\n";
  for (const auto& [key, v] : lex.entries()) {
    out += key;
    for (const double x : v.values) out += "\t" + text::format_double(x);
    out += "\n";
  }
  return out;
}

WordSet parse_word_list(std::string_view content) {
  WordSet words;
  for (auto line : text::split(content, '\n')) {
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (!line.empty()) words.insert(text::utf8_lower(line));
  }
  return words;
}

WordSet load_word_list(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LexiconError("word list not found: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_word_list(ss.str());
}

WordSet default_stopwords(std::string_view language) {
  if (language == "en") return parse_word_list(detail::kDefaultStopwordsEn);
  return {};
}

WordSet default_negations(std::string_view language) {
  if (language == "en") return parse_word_list(detail::kDefaultNegationsEn);
  return {};
}

std::optional<EmotionVector> lexicon_baseline(std::span<const ScoredToken> tokens, const Lexicon& lex) {
  std::vector<double> sum(lex.dims(), 0.0);
  std::size_t count = 0;
  for (const auto& t : tokens) {
    if (t.stopword || t.punctuation || t.negation) continue;
    const auto v = lex.lookup(t.form, t.lemma);
    if (!v) continue;
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += (*v)[i];
    ++count;
  }
  if (count == 0) return std::nullopt;
  EmotionVector mean;
  mean.values.reserve(sum.size());
  for (const double s : sum) mean.values.push_back(s / static_cast<double>(count));
  return mean;
}

}  // namespace sprop
