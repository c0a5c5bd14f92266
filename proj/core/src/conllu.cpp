#include "sprop/conllu.hpp"

#include "sprop/error.hpp"
#include "sprop/text.hpp"

namespace sprop {
namespace {

struct PendingSentence {
  Sentence tokens;
  std::vector<std::size_t> lines;
};

// lines[i] is the input line of sentence[i]; empty when unknown.
void check_sentence(const Sentence& sentence, const std::vector<std::size_t>& lines) {
  const auto first_line = lines.empty() ? 0 : lines.front();
  if (sentence.empty()) throw ConlluError("empty sentence", first_line);
  std::size_t roots = 0;
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    const auto& t = sentence[i];
    const auto line = i < lines.size() ? lines[i] : 0;
    if (t.index != i + 1) throw ConlluError("token ids must be contiguous from 1", line);
    if (t.head > sentence.size()) {
      throw ConlluError("head " + std::to_string(t.head) + " out of range for sentence of " +
                            std::to_string(sentence.size()) + " tokens",
                        line);
    }
    if (t.head == t.index) throw ConlluError("token is its own head", line);
    if (t.head == 0) ++roots;
  }
  if (roots != 1) throw ConlluError("sentence must have exactly one root, found " + std::to_string(roots), first_line);
}

}  // namespace

void validate_sentence(const Sentence& sentence, std::size_t first_line) {
  std::vector<std::size_t> lines;
  if (first_line) {
    for (std::size_t i = 0; i < sentence.size(); ++i) lines.push_back(first_line + i);
  }
  check_sentence(sentence, lines);
}

std::vector<ParsedDocument> parse_conllu(std::string_view input) {
  std::vector<ParsedDocument> docs;
  PendingSentence pending;

  auto current_doc = [&]() -> ParsedDocument& {
    if (docs.empty()) docs.emplace_back();
    return docs.back();
  };
  auto flush = [&]() {
    if (pending.tokens.empty()) return;
    check_sentence(pending.tokens, pending.lines);
    current_doc().sentences.push_back(std::move(pending.tokens));
    pending = {};
  };

  std::size_t line_no = 0;
  for (auto line : text::split(input, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (text::trim(line).empty()) {
      flush();
      continue;
    }
    if (line.front() == '#') {
      const auto body = text::trim(line.substr(1));
      if (body.starts_with("newdoc")) {
        flush();
        ParsedDocument doc;
        if (const auto eq = body.find('='); eq != std::string_view::npos) {
          doc.source_id = std::string(text::trim(body.substr(eq + 1)));
        }
        docs.push_back(std::move(doc));
      }
      continue;
    }

    const auto cols = text::split(line, '\t');
    if (cols.size() != 10) {
      throw ConlluError("expected 10 tab-separated columns, found " + std::to_string(cols.size()), line_no);
    }
    const auto id = cols[0];
    if (id.find('-') != std::string_view::npos || id.find('.') != std::string_view::npos) continue;

    const auto index = text::parse_int(id);
    if (!index || *index < 1) throw ConlluError("invalid token id `" + std::string(id) + "`", line_no);
    const auto head = text::parse_int(cols[6]);
    if (!head || *head < 0) throw ConlluError("invalid head `" + std::string(cols[6]) + "`", line_no);

    pending.lines.push_back(line_no);
    TokenRecord t;
    t.index = static_cast<std::size_t>(*index);
    t.form = std::string(cols[1]);
    t.lemma = std::string(cols[2]);
    t.upos = std::string(cols[3]);
    t.head = static_cast<std::size_t>(*head);
    t.deprel = std::string(cols[7]);
    pending.tokens.push_back(std::move(t));
  }
  flush();

  std::erase_if(docs, [](const ParsedDocument& d) { return d.sentences.empty(); });
  if (docs.empty()) throw ConlluError("input contains no sentences", 0);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (docs[i].source_id.empty()) docs[i].source_id = "doc" + std::to_string(i + 1);
  }
  return docs;
}

std::string write_conllu(const std::vector<ParsedDocument>& docs) {
  std::string out;
  for (const auto& doc : docs) {
    out += "# newdoc id = " + doc.source_id + "\n";
    for (const auto& sentence : doc.sentences) {
      for (const auto& t : sentence) {
        out += std::to_string(t.index) + "\t" + t.form + "\t" + t.lemma + "\t" + t.upos + "\t_\t_\t" +
               std::to_string(t.head) + "\t" + t.deprel + "\t_\t_\n";
      }
      out += "\n";
    }
  }
  return out;
}

}  // namespace sprop
