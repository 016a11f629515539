#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kd/corpus/types.hpp"

namespace kd::vocab {

struct ActionLabel {
  int action_id = -1;
  int verb_id = -1;
  int object_id = -1;

  auto operator<=>(const ActionLabel&) const = default;
};

// Token ids reserved ahead of the verb and object ranges.
enum SpecialToken : int { kPad = 0, kCls = 1, kMask = 2, kNone = 3 };
inline constexpr int kNumSpecialTokens = 4;

// Label spaces (action, verb, object) and the teacher's token space.
//
// Class ids follow lexicographic order of the label strings, so the
// vocabulary depends only on the set of labels seen, never on instance
// order. Token layout: [PAD, CLS, MASK, NONE, verbs..., objects...]; the
// object "NONE" always encodes as the NONE special token.
class Vocabulary {
 public:
  Vocabulary() = default;

  // Covers every verb/object/action in the given datasets (segments and targets).
  static Vocabulary build(std::span<const corpus::Dataset* const> datasets);
  static Vocabulary build(const corpus::Dataset& ds);
  static Vocabulary build(const corpus::Dataset& train, const corpus::Dataset& test);

  [[nodiscard]] int num_actions() const { return static_cast<int>(actions_.size()); }
  [[nodiscard]] int num_verbs() const { return static_cast<int>(verbs_.size()); }
  [[nodiscard]] int num_objects() const { return static_cast<int>(objects_.size()); }
  [[nodiscard]] int num_tokens() const { return kNumSpecialTokens + num_verbs() + num_objects(); }

  [[nodiscard]] ActionLabel label(const corpus::ActionStep& step) const;
  [[nodiscard]] int action_id(const corpus::ActionStep& step) const { return label(step).action_id; }
  [[nodiscard]] int verb_id(const std::string& verb) const;
  [[nodiscard]] int object_id(const std::string& object) const;

  [[nodiscard]] const corpus::ActionStep& action(int action_id) const;
  [[nodiscard]] ActionLabel label_of(int action_id) const;
  [[nodiscard]] std::string action_name(int action_id) const;
  [[nodiscard]] const std::string& verb(int verb_id) const;
  [[nodiscard]] const std::string& object(int object_id) const;

  [[nodiscard]] int verb_token(int verb_id) const { return kNumSpecialTokens + verb_id; }
  [[nodiscard]] int object_token(int object_id) const;
  [[nodiscard]] bool is_special(int token) const { return token >= 0 && token < kNumSpecialTokens; }

  // Keeps the last `context_len` steps and lays them out as
  // [PAD..., CLS, v1, o1, v2, o2, ...] with total length 1 + 2 * context_len.
  // Throws std::invalid_argument naming any unknown verb or object.
  [[nodiscard]] std::vector<int> encode_sequence(const corpus::ActionSeq& seq, int context_len) const;
  [[nodiscard]] corpus::ActionSeq decode_sequence(std::span<const int> tokens) const;

  // {"action":{name:id},"verb":{...},"object":{...},"specials":{...}}
  [[nodiscard]] nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

  bool operator==(const Vocabulary& other) const;

 private:
  void index();

  std::vector<corpus::ActionStep> actions_;
  std::vector<std::string> verbs_;
  std::vector<std::string> objects_;
  std::map<corpus::ActionStep, int> action_index_;
  std::map<std::string, int> verb_index_;
  std::map<std::string, int> object_index_;
  std::vector<ActionLabel> labels_;
};

// "put-down_board:cutting" -> {verb "put-down", object "board:cutting"}.
corpus::ActionStep parse_action_name(const std::string& name);
std::string format_action_name(const corpus::ActionStep& step);

}  // namespace kd::vocab
