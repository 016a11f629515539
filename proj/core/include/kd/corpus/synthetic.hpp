#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "kd/corpus/instructions.hpp"
#include "kd/corpus/types.hpp"

namespace kd::corpus {

// Desk-scale stand-in for the egocentric cooking datasets: a first-order
// Markov chain over hidden states, each state emitting one action label.
struct SynthConfig {
  int n_states = 120;
  int n_actions = 30;
  int n_verbs = 10;
  int n_objects = 12;
  std::uint64_t transition_seed = 7;
  double emission_noise_sigma = 0.4;
  int frames_per_segment = 2;
  int context_len = 5;
  int feature_dim = 16;
  // Successor states per state (1 gives a deterministic chain).
  int branching = 2;
  // Added to the first successor's Gamma(1) weight before normalizing;
  // larger values sharpen the transition rows.
  double transition_peak = 0.0;
  // Emitted actions per trajectory; each yields trajectory_len - context_len
  // windows.
  int trajectory_len = 10;
  int n_train = 2000;
  int n_test = 500;

  // Throws std::invalid_argument describing the first violated invariant.
  void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& cfg);
void from_json(const nlohmann::json& j, SynthConfig& cfg);

// The chain itself, fixed by (config, transition_seed).
struct SyntheticWorld {
  SynthConfig config;
  std::vector<ActionStep> actions;          // action id -> (verb, object)
  std::vector<int> emission;                // state -> action id
  std::vector<std::vector<double>> transition;  // row-stochastic, n_states^2
  std::vector<double> stationary;           // stationary distribution over states
  nn::Matrix embeddings;                    // n_actions x feature_dim

  // Stationary distribution pushed through the emission map.
  [[nodiscard]] std::vector<double> action_stationary() const;
  // Smallest pairwise distance between action embeddings.
  [[nodiscard]] double embedding_spacing() const;
};

SyntheticWorld make_world(const SynthConfig& cfg);

// Stationary distribution of a row-stochastic matrix by power iteration on
// the lazy chain (P + I) / 2 started from uniform.
std::vector<double> stationary_distribution(const std::vector<std::vector<double>>& transition);

struct SyntheticSplit {
  Dataset train;
  Dataset test;
};

// Deterministic for fixed (cfg, seed). Train and test windows come from
// disjoint trajectories. Throws when trajectory_len cannot hold one window,
// naming the trajectory.
SyntheticSplit gen_synthetic(const SynthConfig& cfg, std::uint64_t seed);
SyntheticSplit gen_synthetic(const SyntheticWorld& world, std::uint64_t seed);

// Action sequences drawn from the same chain (for MLM pretraining corpora).
std::vector<ActionSeq> sample_action_sequences(const SyntheticWorld& world, int n_sequences, int length,
                                               std::uint64_t seed);

// The same sequences rendered as instruction text, one document per line.
std::vector<std::string> render_corpus(const std::vector<ActionSeq>& seqs, std::uint64_t seed);

}  // namespace kd::corpus
