#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "pqnet/seq2seq/model.hpp"
#include "pqnet/seq2seq/train.hpp"

namespace pqnet::tasks {

using seq2seq::StepVector;

/// Re-encodes the one-hot count of every step to the sequence length.
inline std::vector<StepVector> recount(const std::vector<StepVector>& steps, int code_dim, int k_max) {
  std::vector<StepVector> out;
  for (const auto& s : steps) {
    const auto p = seq2seq::unpack_step(s, code_dim, k_max);
    out.push_back(seq2seq::pack_step(p.g, p.b, static_cast<int>(steps.size()), k_max));
  }
  return out;
}

/// Removes r ∈ [0, k−1] random parts (order of the rest kept).
inline std::vector<StepVector> remove_parts(const std::vector<StepVector>& steps, int code_dim, int k_max,
                                            std::mt19937_64& rng) {
  require(!steps.empty(), "remove_parts: empty sequence");
  const int k = static_cast<int>(steps.size());
  const int r = std::uniform_int_distribution<int>(0, k - 1)(rng);
  std::vector<int> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(k - r);
  std::sort(idx.begin(), idx.end());
  std::vector<StepVector> kept;
  for (int i : idx) kept.push_back(steps[i]);
  return recount(kept, code_dim, k_max);
}

/// A uniformly random permutation of the parts.
inline std::vector<StepVector> scramble(const std::vector<StepVector>& steps, std::mt19937_64& rng) {
  std::vector<StepVector> out = steps;
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

enum class Corruption { kRemoveParts, kScramble };

template <class S>
std::vector<seq2seq::Seq2SeqLossRecord> train_corrupted(seq2seq::Seq2Seq<S>& model,
                                                        const std::vector<seq2seq::ShapeSequence>& corpus,
                                                        const seq2seq::Seq2SeqTrainConfig& cfg, Corruption mode) {
  const int C = model.config().code_dim, K = model.config().k_max;
  seq2seq::InputTransform t;
  if (mode == Corruption::kRemoveParts)
    t = [C, K](const std::vector<StepVector>& s, nn::Rng& rng) { return remove_parts(s, C, K, rng); };
  else
    t = [](const std::vector<StepVector>& s, nn::Rng& rng) { return scramble(s, rng); };
  return seq2seq::train_seq2seq(model, corpus, cfg, {}, t);
}

/// Encodes a partial sequence and decodes at least as many parts as given.
template <class S>
std::vector<seq2seq::DecodedStep> complete_shape(const std::vector<StepVector>& partial, seq2seq::Seq2Seq<S>& model) {
  require(!partial.empty(), "complete_shape: empty input");
  const auto hz = model.encode_sequence(partial);
  const int n = static_cast<int>(partial.size());
  return model.decode_sequence(hz, {std::max(n, model.config().k_max), n});
}

/// Re-orders a scrambled sequence; the output has exactly the input's length.
template <class S>
std::vector<seq2seq::DecodedStep> denoise_order(const std::vector<StepVector>& scrambled, seq2seq::Seq2Seq<S>& model) {
  require(!scrambled.empty(), "denoise_order: empty input");
  const int n = static_cast<int>(scrambled.size());
  if (n == 1) {
    // A single part has only one order.
    const auto p = seq2seq::unpack_step(scrambled[0], model.config().code_dim, model.config().k_max);
    seq2seq::DecodedStep st;
    st.g = p.g;
    st.b = p.b;
    st.s = 1.0;
    return {st};
  }
  const auto hz = model.encode_sequence(scrambled);
  return model.decode_sequence(hz, {n, n});
}

}  // namespace pqnet::tasks
