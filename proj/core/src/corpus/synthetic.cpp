#include "kd/corpus/synthetic.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace kd::corpus {
namespace {

using Rng = std::mt19937_64;

constexpr std::array kVerbNames{"take",  "put",   "open",  "close",  "wash",   "cut",     "mix",
                                "pour",  "stir",  "peel",  "turn-on", "turn-off", "put-down", "pick-up",
                                "dry",   "fill",  "squeeze", "spread", "scoop", "shake",  "rinse",
                                "crack", "grate", "fold",  "flip",   "season", "drain",   "slice",
                                "knead", "whisk"};

constexpr std::array kObjectNames{"onion", "pan",   "board:cutting", "lid",    "spoon",  "knife",
                                  "bowl",  "pasta", "oil:olive",     "tap",    "plate",  "cup",
                                  "egg",   "bread", "cheese",        "tomato", "fridge", "drawer",
                                  "sponge", "towel", "pot",          "salt",   "pepper", "sauce:soy",
                                  "garlic", "carrot", "butter",      "flour",  "milk",   "rice"};

std::string indexed_name(const char* base, int round) {
  if (round == 0) return base;
  // Letter suffixes keep names inside the instruction grammar (no digits).
  std::string suffix;
  for (int r = round; r > 0; r /= 26) {
    suffix.insert(suffix.begin(), static_cast<char>('a' + (r - 1) % 26));
  }
  std::string name = base;
  const auto colon = name.find(':');
  if (colon == std::string::npos) return name + "-" + suffix;
  return name.substr(0, colon) + "-" + suffix + name.substr(colon);
}

template <std::size_t N>
std::string pick_name(const std::array<const char*, N>& names, int i) {
  return indexed_name(names[static_cast<std::size_t>(i) % N], i / static_cast<int>(N));
}

int sample_categorical(const std::vector<double>& probs, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double x = u(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (x < acc) return static_cast<int>(i);
  }
  // Rounding slack: return the last state with positive mass.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return static_cast<int>(i);
  }
  return 0;
}

}  // namespace

void SynthConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("SynthConfig: " + msg); };
  if (n_states < 1 || n_actions < 1 || n_verbs < 1 || n_objects < 1) fail("all counts must be >= 1");
  if (static_cast<long>(n_actions) > static_cast<long>(n_verbs) * n_objects) {
    fail(fmt::format("n_actions {} exceeds n_verbs * n_objects = {}", n_actions, n_verbs * n_objects));
  }
  if (!(emission_noise_sigma >= 0.0)) fail("emission_noise_sigma must be >= 0");
  if (frames_per_segment < 1 || context_len < 1 || feature_dim < 1) {
    fail("frames_per_segment, context_len and feature_dim must be >= 1");
  }
  if (branching < 1 || branching > n_states) fail(fmt::format("branching {} outside [1, n_states]", branching));
  if (transition_peak < 0.0) fail("transition_peak must be >= 0");
  if (trajectory_len < 1) fail("trajectory_len must be >= 1");
  if (n_train < 1 || n_test < 1) fail("n_train and n_test must be >= 1");
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = nlohmann::json{{"n_states", c.n_states},
                     {"n_actions", c.n_actions},
                     {"n_verbs", c.n_verbs},
                     {"n_objects", c.n_objects},
                     {"transition_seed", c.transition_seed},
                     {"emission_noise_sigma", c.emission_noise_sigma},
                     {"frames_per_segment", c.frames_per_segment},
                     {"context_len", c.context_len},
                     {"feature_dim", c.feature_dim},
                     {"branching", c.branching},
                     {"transition_peak", c.transition_peak},
                     {"trajectory_len", c.trajectory_len},
                     {"n_train", c.n_train},
                     {"n_test", c.n_test}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  c = SynthConfig{};
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("n_states", c.n_states);
  get("n_actions", c.n_actions);
  get("n_verbs", c.n_verbs);
  get("n_objects", c.n_objects);
  get("transition_seed", c.transition_seed);
  get("emission_noise_sigma", c.emission_noise_sigma);
  get("frames_per_segment", c.frames_per_segment);
  get("context_len", c.context_len);
  get("feature_dim", c.feature_dim);
  get("branching", c.branching);
  get("transition_peak", c.transition_peak);
  get("trajectory_len", c.trajectory_len);
  get("n_train", c.n_train);
  get("n_test", c.n_test);
}

std::vector<double> SyntheticWorld::action_stationary() const {
  std::vector<double> out(actions.size(), 0.0);
  for (std::size_t s = 0; s < stationary.size(); ++s) {
    out[static_cast<std::size_t>(emission[s])] += stationary[s];
  }
  return out;
}

double SyntheticWorld::embedding_spacing() const {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index a = 0; a < embeddings.rows(); ++a) {
    for (Eigen::Index b = a + 1; b < embeddings.rows(); ++b) {
      best = std::min(best, (embeddings.row(a) - embeddings.row(b)).norm());
    }
  }
  return best;
}

std::vector<double> stationary_distribution(const std::vector<std::vector<double>>& transition) {
  const std::size_t n = transition.size();
  std::vector<double> pi(n, 1.0 / static_cast<double>(n));
  std::vector<double> next(n);
  for (int iter = 0; iter < 200000; ++iter) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      next[i] += 0.5 * pi[i];
      for (std::size_t j = 0; j < n; ++j) {
        next[j] += 0.5 * pi[i] * transition[i][j];
      }
    }
    double delta = 0.0;
    for (std::size_t i = 0; i < n; ++i) delta += std::abs(next[i] - pi[i]);
    pi.swap(next);
    if (delta < 1e-15) break;
  }
  const double total = std::accumulate(pi.begin(), pi.end(), 0.0);
  for (double& p : pi) p /= total;
  return pi;
}

SyntheticWorld make_world(const SynthConfig& cfg) {
  cfg.validate();
  SyntheticWorld world;
  world.config = cfg;
  Rng rng(cfg.transition_seed);

  std::vector<std::pair<int, int>> pairs;
  for (int v = 0; v < cfg.n_verbs; ++v) {
    for (int o = 0; o < cfg.n_objects; ++o) pairs.emplace_back(v, o);
  }
  std::shuffle(pairs.begin(), pairs.end(), rng);
  for (int a = 0; a < cfg.n_actions; ++a) {
    const auto [v, o] = pairs[static_cast<std::size_t>(a)];
    world.actions.push_back({pick_name(kVerbNames, v), pick_name(kObjectNames, o)});
  }

  std::vector<int> perm(static_cast<std::size_t>(cfg.n_actions));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::uniform_int_distribution<int> any_action(0, cfg.n_actions - 1);
  for (int s = 0; s < cfg.n_states; ++s) {
    world.emission.push_back(s < cfg.n_actions ? perm[static_cast<std::size_t>(s)] : any_action(rng));
  }

  const auto n = static_cast<std::size_t>(cfg.n_states);
  world.transition.assign(n, std::vector<double>(n, 0.0));
  std::vector<int> states(n);
  std::iota(states.begin(), states.end(), 0);
  std::gamma_distribution<double> gamma(1.0, 1.0);
  for (std::size_t s = 0; s < n; ++s) {
    std::shuffle(states.begin(), states.end(), rng);
    std::vector<double> w(static_cast<std::size_t>(cfg.branching));
    for (double& x : w) x = gamma(rng);
    w[0] += cfg.transition_peak;
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (int b = 0; b < cfg.branching; ++b) {
      world.transition[s][static_cast<std::size_t>(states[static_cast<std::size_t>(b)])] =
          w[static_cast<std::size_t>(b)] / total;
    }
  }
  world.stationary = stationary_distribution(world.transition);

  std::normal_distribution<double> emb(0.0, 1.0 / std::sqrt(static_cast<double>(cfg.feature_dim)));
  world.embeddings.resize(cfg.n_actions, cfg.feature_dim);
  for (Eigen::Index i = 0; i < world.embeddings.size(); ++i) world.embeddings.data()[i] = emb(rng);
  return world;
}

namespace {

std::vector<int> sample_states(const SyntheticWorld& world, int length, Rng& rng) {
  std::vector<int> states;
  states.reserve(static_cast<std::size_t>(length));
  states.push_back(sample_categorical(world.stationary, rng));
  for (int i = 1; i < length; ++i) {
    states.push_back(sample_categorical(world.transition[static_cast<std::size_t>(states.back())], rng));
  }
  return states;
}

Dataset sample_split(const SyntheticWorld& world, const char* split, int n_instances, Rng& rng) {
  const auto& cfg = world.config;
  if (cfg.trajectory_len <= cfg.context_len) {
    throw std::invalid_argument(fmt::format(
        "trajectory {}/0 has {} actions but context_len {} needs at least {} (window plus target)", split,
        cfg.trajectory_len, cfg.context_len, cfg.context_len + 1));
  }
  const int windows = cfg.trajectory_len - cfg.context_len;
  const int fps = cfg.frames_per_segment;
  std::normal_distribution<double> noise(0.0, 1.0);

  Dataset ds;
  ds.instances.reserve(static_cast<std::size_t>(n_instances));
  for (int traj = 0; static_cast<int>(ds.instances.size()) < n_instances; ++traj) {
    const auto states = sample_states(world, cfg.trajectory_len, rng);
    std::vector<int> acts;
    for (int s : states) acts.push_back(world.emission[static_cast<std::size_t>(s)]);

    // Frames for the observable prefix of the trajectory.
    const int observed = cfg.trajectory_len - 1;
    nn::Matrix frames(static_cast<Eigen::Index>(observed) * fps, cfg.feature_dim);
    for (int seg = 0; seg < observed; ++seg) {
      for (int f = 0; f < fps; ++f) {
        auto row = frames.row(static_cast<Eigen::Index>(seg) * fps + f);
        row = world.embeddings.row(acts[static_cast<std::size_t>(seg)]);
        if (cfg.emission_noise_sigma > 0.0) {
          for (Eigen::Index d = 0; d < row.size(); ++d) row(d) += cfg.emission_noise_sigma * noise(rng);
        }
      }
    }
    for (int w = 0; w < windows && static_cast<int>(ds.instances.size()) < n_instances; ++w) {
      Instance inst;
      inst.id = fmt::format("{}-t{:05d}-w{}", split, traj, w);
      inst.frames = frames.middleRows(static_cast<Eigen::Index>(w) * fps, static_cast<Eigen::Index>(cfg.context_len) * fps);
      for (int k = 0; k < cfg.context_len; ++k) {
        inst.segments.steps.push_back(world.actions[static_cast<std::size_t>(acts[static_cast<std::size_t>(w + k)])]);
      }
      inst.target = world.actions[static_cast<std::size_t>(acts[static_cast<std::size_t>(w + cfg.context_len)])];
      ds.instances.push_back(std::move(inst));
    }
  }
  return ds;
}

}  // namespace

SyntheticSplit gen_synthetic(const SyntheticWorld& world, std::uint64_t seed) {
  Rng rng(seed);
  SyntheticSplit split;
  split.train = sample_split(world, "train", world.config.n_train, rng);
  split.test = sample_split(world, "test", world.config.n_test, rng);
  return split;
}

SyntheticSplit gen_synthetic(const SynthConfig& cfg, std::uint64_t seed) {
  return gen_synthetic(make_world(cfg), seed);
}

std::vector<ActionSeq> sample_action_sequences(const SyntheticWorld& world, int n_sequences, int length,
                                               std::uint64_t seed) {
  if (n_sequences < 1 || length < 1) {
    throw std::invalid_argument("sample_action_sequences: n_sequences and length must be >= 1");
  }
  Rng rng(seed);
  std::vector<ActionSeq> out;
  out.reserve(static_cast<std::size_t>(n_sequences));
  for (int i = 0; i < n_sequences; ++i) {
    ActionSeq seq;
    for (int s : sample_states(world, length, rng)) {
      seq.steps.push_back(world.actions[static_cast<std::size_t>(world.emission[static_cast<std::size_t>(s)])]);
    }
    out.push_back(std::move(seq));
  }
  return out;
}

std::vector<std::string> render_corpus(const std::vector<ActionSeq>& seqs, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> lines;
  lines.reserve(seqs.size());
  for (const auto& seq : seqs) {
    lines.push_back(render_document(seq, rng() & rng()));
  }
  return lines;
}

}  // namespace kd::corpus
