#include "kd/corpus/instructions.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace kd::corpus {
namespace {

const std::unordered_set<std::string>& particles() {
  static const std::unordered_set<std::string> set{"up", "down", "off", "out", "away", "on"};
  return set;
}

const std::unordered_set<std::string>& determiners() {
  static const std::unordered_set<std::string> set{"the", "a", "an", "some"};
  return set;
}

const std::unordered_set<std::string>& prepositions() {
  static const std::unordered_set<std::string> set{"in",   "into",  "on",      "onto",  "with",  "to",
                                                   "for",  "from",  "at",      "over",  "under", "until",
                                                   "of",   "by",    "about",   "through", "inside"};
  return set;
}

// Words that can open a clause but are never an imperative verb.
const std::unordered_set<std::string>& non_verbs() {
  static const std::unordered_set<std::string> set{
      "the",  "a",    "an",   "some", "this",  "that",  "these", "those", "it",    "they",  "you",
      "we",   "i",    "he",   "she",  "is",    "are",   "was",   "were",  "be",    "been",  "there",
      "if",   "when", "once", "or",   "while", "after", "before", "meanwhile", "your", "my", "its",
      "in",   "into", "on",   "onto", "with",  "to",    "for",   "of",    "at",    "by",    "from",
      "over", "until"};
  return set;
}

bool is_word(const std::string& w) {
  if (w.empty()) return false;
  if (!std::isalpha(static_cast<unsigned char>(w.front()))) return false;
  return std::all_of(w.begin(), w.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '-'; });
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Splits on whitespace; ',' and ';' become standalone tokens; other
// punctuation is dropped.
std::vector<std::string> tokenize(const std::string& sentence) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      tokens.push_back(lower(cur));
      cur.clear();
    }
  };
  for (char ch : sentence) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (ch == ',' || ch == ';') {
      flush();
      tokens.emplace_back(",");
    } else if (std::isalnum(c) || ch == '-' || ch == '\'') {
      cur.push_back(ch);
    }
  }
  flush();
  return tokens;
}

enum class Joiner { kCoordinate, kSequence };

struct Clause {
  std::vector<std::string> tokens;
  Joiner next = Joiner::kSequence;  // link to the following clause
};

std::vector<Clause> split_clauses(const std::vector<std::string>& tokens) {
  std::vector<Clause> clauses(1);
  bool in_boundary = false;
  Joiner boundary = Joiner::kCoordinate;
  for (const auto& tok : tokens) {
    const bool sep = tok == "," || tok == "and" || tok == "then";
    if (sep) {
      if (!in_boundary) {
        in_boundary = true;
        boundary = Joiner::kCoordinate;
      }
      if (tok == "then") boundary = Joiner::kSequence;
      continue;
    }
    if (in_boundary) {
      if (!clauses.back().tokens.empty()) {
        clauses.back().next = boundary;
        clauses.emplace_back();
      }
      in_boundary = false;
    }
    clauses.back().tokens.push_back(tok);
  }
  if (clauses.back().tokens.empty()) clauses.pop_back();
  return clauses;
}

std::string join_object(const std::vector<std::string>& words) {
  if (words.empty()) return kNoneObject;
  std::string out = words.back();
  for (std::size_t i = 0; i + 1 < words.size(); ++i) {
    out += ':';
    out += words[i];
  }
  return out;
}

struct ParsedClause {
  ActionStep step;
  bool has_object = false;
};

}  // namespace

ParseResult parse_instructions(const InstructionDoc& doc) {
  ParseResult result;
  for (const auto& sentence : doc.sentences) {
    const auto clauses = split_clauses(tokenize(sentence));
    std::vector<ParsedClause> parsed;
    std::vector<Joiner> links;
    for (const auto& clause : clauses) {
      const auto& t = clause.tokens;
      if (!is_word(t[0]) || non_verbs().contains(t[0])) {
        result.skipped.push_back({doc.doc_id, trim(sentence), fmt::format("no recognizable verb in clause '{}'", t[0])});
        continue;
      }
      ParsedClause pc;
      pc.step.verb = t[0];
      std::size_t i = 1;
      if (i < t.size() && particles().contains(t[i])) {
        pc.step.verb += "-" + t[i];
        ++i;
      }
      if (i < t.size() && determiners().contains(t[i])) ++i;
      std::vector<std::string> words;
      for (; i < t.size() && !prepositions().contains(t[i]); ++i) {
        if (is_word(t[i])) words.push_back(t[i]);
      }
      pc.has_object = !words.empty();
      pc.step.object = join_object(words);
      parsed.push_back(std::move(pc));
      links.push_back(clause.next);
    }
    // Verb-only clauses coordinated with a following clause share its object.
    for (std::size_t j = parsed.size(); j-- > 1;) {
      auto& prev = parsed[j - 1];
      if (!prev.has_object && links[j - 1] == Joiner::kCoordinate && parsed[j].has_object) {
        prev.step.object = parsed[j].step.object;
        prev.has_object = true;
      }
    }
    for (auto& pc : parsed) {
      result.actions.steps.push_back(std::move(pc.step));
    }
  }
  return result;
}

std::vector<InstructionDoc> read_instruction_corpus(std::istream& in) {
  std::vector<InstructionDoc> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    InstructionDoc doc;
    doc.doc_id = fmt::format("doc{}", line_no);
    std::stringstream ss(line);
    std::string sentence;
    while (std::getline(ss, sentence, '.')) {
      sentence = trim(sentence);
      if (!sentence.empty()) doc.sentences.push_back(sentence);
    }
    if (!doc.sentences.empty()) docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<InstructionDoc> read_instruction_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error(fmt::format("cannot read instruction corpus {}", path.string()));
  }
  return read_instruction_corpus(in);
}

void write_skip_report(const std::vector<SkipRecord>& records, std::ostream& out) {
  auto clean = [](std::string s) {
    std::replace(s.begin(), s.end(), '\t', ' ');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
  };
  out << "doc_id\tsentence\treason\n";
  for (const auto& r : records) {
    out << clean(r.doc_id) << '\t' << clean(r.sentence) << '\t' << clean(r.reason) << '\n';
  }
}

namespace {

std::string render_verb(const std::string& verb) {
  std::string out = verb;
  std::replace(out.begin(), out.end(), '-', ' ');
  return out;
}

std::string render_object(const std::string& object) {
  std::vector<std::string> parts;
  std::stringstream ss(object);
  std::string part;
  while (std::getline(ss, part, ':')) parts.push_back(part);
  std::string out;
  for (std::size_t i = 1; i < parts.size(); ++i) out += parts[i] + " ";
  out += parts.front();
  return out;
}

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

}  // namespace

std::string render_clause(const ActionStep& step) {
  std::string out = render_verb(step.verb);
  if (step.object != kNoneObject) {
    out += " the " + render_object(step.object);
  }
  return out;
}

std::string render_document(const ActionSeq& seq, std::uint64_t then_mask) {
  std::string out;
  std::string sentence;
  const auto& steps = seq.steps;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const bool share_next = i + 1 < steps.size() && steps[i].object != kNoneObject &&
                            steps[i].object == steps[i + 1].object;
    const bool then_next = i + 1 < steps.size() && i < 64 && ((then_mask >> i) & 1U);
    if (share_next) {
      sentence += render_verb(steps[i].verb) + " and ";
      continue;
    }
    sentence += render_clause(steps[i]);
    if (then_next) {
      sentence += " then ";
      continue;
    }
    if (!out.empty()) out += ' ';
    out += capitalize(sentence) + ".";
    sentence.clear();
  }
  return out;
}

}  // namespace kd::corpus
