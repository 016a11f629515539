#include "kd/vocab/vocabulary.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <stdexcept>

namespace kd::vocab {

corpus::ActionStep parse_action_name(const std::string& name) {
  const auto sep = name.find('_');
  if (sep == std::string::npos || sep == 0 || sep + 1 == name.size()) {
    throw std::invalid_argument(fmt::format("action name '{}' is not of the form verb_object", name));
  }
  return {name.substr(0, sep), name.substr(sep + 1)};
}

std::string format_action_name(const corpus::ActionStep& step) { return step.verb + "_" + step.object; }

Vocabulary Vocabulary::build(std::span<const corpus::Dataset* const> datasets) {
  std::set<corpus::ActionStep> actions;
  for (const auto* ds : datasets) {
    for (const auto& inst : ds->instances) {
      for (const auto& s : inst.segments.steps) actions.insert(s);
      actions.insert(inst.target);
    }
  }
  if (actions.empty()) {
    throw std::invalid_argument("build_vocab: no labels in the given datasets");
  }
  Vocabulary v;
  std::set<std::string> verbs;
  std::set<std::string> objects;
  for (const auto& a : actions) {
    verbs.insert(a.verb);
    objects.insert(a.object);
  }
  v.actions_.assign(actions.begin(), actions.end());
  std::sort(v.actions_.begin(), v.actions_.end(), [](const corpus::ActionStep& a, const corpus::ActionStep& b) {
    return format_action_name(a) < format_action_name(b);
  });
  v.verbs_.assign(verbs.begin(), verbs.end());
  v.objects_.assign(objects.begin(), objects.end());
  v.index();
  return v;
}

Vocabulary Vocabulary::build(const corpus::Dataset& ds) {
  const corpus::Dataset* list[] = {&ds};
  return build(list);
}

Vocabulary Vocabulary::build(const corpus::Dataset& train, const corpus::Dataset& test) {
  const corpus::Dataset* list[] = {&train, &test};
  return build(list);
}

void Vocabulary::index() {
  action_index_.clear();
  verb_index_.clear();
  object_index_.clear();
  labels_.clear();
  for (std::size_t i = 0; i < verbs_.size(); ++i) verb_index_.emplace(verbs_[i], static_cast<int>(i));
  for (std::size_t i = 0; i < objects_.size(); ++i) object_index_.emplace(objects_[i], static_cast<int>(i));
  for (std::size_t i = 0; i < actions_.size(); ++i) {
    const int id = static_cast<int>(i);
    if (!action_index_.emplace(actions_[i], id).second) {
      throw std::invalid_argument(fmt::format("duplicate action '{}'", format_action_name(actions_[i])));
    }
    labels_.push_back({id, verb_id(actions_[i].verb), object_id(actions_[i].object)});
  }
}

ActionLabel Vocabulary::label(const corpus::ActionStep& step) const {
  auto it = action_index_.find(step);
  if (it == action_index_.end()) {
    throw std::invalid_argument(fmt::format("unknown action '{}'", format_action_name(step)));
  }
  return labels_[static_cast<std::size_t>(it->second)];
}

int Vocabulary::verb_id(const std::string& verb) const {
  auto it = verb_index_.find(verb);
  if (it == verb_index_.end()) throw std::invalid_argument(fmt::format("unknown verb '{}'", verb));
  return it->second;
}

int Vocabulary::object_id(const std::string& object) const {
  auto it = object_index_.find(object);
  if (it == object_index_.end()) throw std::invalid_argument(fmt::format("unknown object '{}'", object));
  return it->second;
}

const corpus::ActionStep& Vocabulary::action(int action_id) const {
  if (action_id < 0 || action_id >= num_actions()) {
    throw std::out_of_range(fmt::format("action id {} outside [0, {})", action_id, num_actions()));
  }
  return actions_[static_cast<std::size_t>(action_id)];
}

ActionLabel Vocabulary::label_of(int action_id) const {
  static_cast<void>(action(action_id));
  return labels_[static_cast<std::size_t>(action_id)];
}

std::string Vocabulary::action_name(int action_id) const { return format_action_name(action(action_id)); }

const std::string& Vocabulary::verb(int verb_id) const {
  if (verb_id < 0 || verb_id >= num_verbs()) throw std::out_of_range(fmt::format("verb id {}", verb_id));
  return verbs_[static_cast<std::size_t>(verb_id)];
}

const std::string& Vocabulary::object(int object_id) const {
  if (object_id < 0 || object_id >= num_objects()) throw std::out_of_range(fmt::format("object id {}", object_id));
  return objects_[static_cast<std::size_t>(object_id)];
}

int Vocabulary::object_token(int object_id) const {
  if (object(object_id) == corpus::kNoneObject) return kNone;
  return kNumSpecialTokens + num_verbs() + object_id;
}

std::vector<int> Vocabulary::encode_sequence(const corpus::ActionSeq& seq, int context_len) const {
  if (context_len < 1) {
    throw std::invalid_argument(fmt::format("encode_sequence: context_len must be >= 1, got {}", context_len));
  }
  const auto& steps = seq.steps;
  const std::size_t keep = std::min(steps.size(), static_cast<std::size_t>(context_len));
  const std::size_t total = 1 + 2 * static_cast<std::size_t>(context_len);
  std::vector<int> tokens(total - 1 - 2 * keep, kPad);
  tokens.push_back(kCls);
  for (std::size_t i = steps.size() - keep; i < steps.size(); ++i) {
    tokens.push_back(verb_token(verb_id(steps[i].verb)));
    tokens.push_back(object_token(object_id(steps[i].object)));
  }
  return tokens;
}

corpus::ActionSeq Vocabulary::decode_sequence(std::span<const int> tokens) const {
  corpus::ActionSeq seq;
  std::vector<int> body;
  for (int t : tokens) {
    if (t == kPad || t == kCls) continue;
    body.push_back(t);
  }
  if (body.size() % 2 != 0) {
    throw std::invalid_argument("decode_sequence: odd number of label tokens");
  }
  const int verb_begin = kNumSpecialTokens;
  const int object_begin = kNumSpecialTokens + num_verbs();
  for (std::size_t i = 0; i < body.size(); i += 2) {
    const int vt = body[i];
    const int ot = body[i + 1];
    if (vt < verb_begin || vt >= object_begin) {
      throw std::invalid_argument(fmt::format("decode_sequence: token {} is not a verb", vt));
    }
    corpus::ActionStep step;
    step.verb = verbs_[static_cast<std::size_t>(vt - verb_begin)];
    if (ot == kNone) {
      step.object = corpus::kNoneObject;
    } else if (ot >= object_begin && ot < num_tokens()) {
      step.object = objects_[static_cast<std::size_t>(ot - object_begin)];
    } else {
      throw std::invalid_argument(fmt::format("decode_sequence: token {} is not an object", ot));
    }
    seq.steps.push_back(std::move(step));
  }
  return seq;
}

nlohmann::json Vocabulary::to_json() const {
  nlohmann::json j;
  j["action"] = nlohmann::json::object();
  for (std::size_t i = 0; i < actions_.size(); ++i) j["action"][format_action_name(actions_[i])] = i;
  j["verb"] = nlohmann::json::object();
  for (std::size_t i = 0; i < verbs_.size(); ++i) j["verb"][verbs_[i]] = i;
  j["object"] = nlohmann::json::object();
  for (std::size_t i = 0; i < objects_.size(); ++i) j["object"][objects_[i]] = i;
  j["specials"] = {{"PAD", kPad}, {"CLS", kCls}, {"MASK", kMask}, {"NONE", kNone}};
  return j;
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  auto read_map = [](const nlohmann::json& m, const char* what) {
    std::vector<std::string> out(m.size());
    for (const auto& [name, id] : m.items()) {
      const auto i = id.get<std::size_t>();
      if (i >= out.size() || !out[i].empty()) {
        throw std::invalid_argument(fmt::format("vocabulary {}: id {} out of range or repeated", what, i));
      }
      out[i] = name;
    }
    return out;
  };
  Vocabulary v;
  v.verbs_ = read_map(j.at("verb"), "verb");
  v.objects_ = read_map(j.at("object"), "object");
  for (const auto& name : read_map(j.at("action"), "action")) v.actions_.push_back(parse_action_name(name));
  v.index();
  return v;
}

bool Vocabulary::operator==(const Vocabulary& other) const {
  return actions_ == other.actions_ && verbs_ == other.verbs_ && objects_ == other.objects_;
}

}  // namespace kd::vocab
