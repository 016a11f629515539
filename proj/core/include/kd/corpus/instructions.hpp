#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "kd/corpus/types.hpp"

namespace kd::corpus {

struct InstructionDoc {
  std::string doc_id;
  std::vector<std::string> sentences;
};

struct SkipRecord {
  std::string doc_id;
  std::string sentence;
  std::string reason;
};

struct ParseResult {
  ActionSeq actions;
  std::vector<SkipRecord> skipped;
};

// Extracts (verb, object) steps from imperative instructions following
//
//   sentence := clause ((',' | 'and' | 'then' | ', then' | 'and then') clause)*
//   clause   := Verb [particle] [the|a|an|some] [object words] [prep phrase]
//
// Verbs are lowercased; a particle directly after the verb (up, down, off,
// out, away, on) is hyphen-joined ("put-down"). Object words stop at the
// first preposition and are colon-joined head noun first
// ("cutting board" -> "board:cutting"). A verb-only clause linked to the next
// clause by 'and' or ',' shares that clause's object ("Wash and dry the
// board"); 'then' never shares. A clause without an object keeps the NONE
// sentinel. Clauses with no recognizable verb are skipped and reported.
ParseResult parse_instructions(const InstructionDoc& doc);

// One document per line, sentences separated by '.'. Blank lines are
// ignored; doc ids are "doc<line number>".
std::vector<InstructionDoc> read_instruction_corpus(std::istream& in);
std::vector<InstructionDoc> read_instruction_corpus(const std::filesystem::path& path);

// TSV rows: doc_id, sentence, reason (with a header line).
void write_skip_report(const std::vector<SkipRecord>& records, std::ostream& out);

// Inverse of the grammar for one step: ("put-down", "board:cutting") ->
// "Put down the cutting board". No trailing period.
std::string render_clause(const ActionStep& step);

// Renders an action sequence as one corpus line. Consecutive steps sharing
// an object are coordinated with "and"; others are separate sentences or
// joined with "then" (chosen by `then_mask` bit i for the boundary after step i).
std::string render_document(const ActionSeq& seq, std::uint64_t then_mask = 0);

}  // namespace kd::corpus
