#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace sprop {

// One syntactic word of a CoNLL-U sentence. head is 0 for the root,
// otherwise the 1-based index of the governing token.
struct TokenRecord {
  std::size_t index = 0;
  std::string form;
  std::string lemma;
  std::string upos;
  std::size_t head = 0;
  std::string deprel;

  bool operator==(const TokenRecord&) const = default;
};

using Sentence = std::vector<TokenRecord>;

struct ParsedDocument {
  std::vector<Sentence> sentences;
  std::string source_id;

  bool operator==(const ParsedDocument&) const = default;
};

// Reads standard 10-column CoNLL-U. Documents are delimited by `# newdoc`
// comments (the `id = ...` value becomes source_id); without any, the whole
// input is one document. Multiword ranges (1-2) and empty nodes (1.1) are
// skipped. Throws ConlluError with the offending line number.
std::vector<ParsedDocument> parse_conllu(std::string_view text);

// Checks the per-sentence invariants (contiguous 1-based ids, heads in
// range, no self-heads, exactly one root).
void validate_sentence(const Sentence& sentence, std::size_t first_line = 0);

std::string write_conllu(const std::vector<ParsedDocument>& docs);

}  // namespace sprop
