#pragma once

#include <vector>

#include "pqnet/latentgan/gan.hpp"
#include "pqnet/seq2seq/model.hpp"
#include "pqnet/tasks/assemble.hpp"

namespace pqnet::tasks {

struct GeneratedShape {
  Eigen::VectorXf latent;
  std::vector<seq2seq::DecodedStep> steps;
  AssembledShape shape;
};

/// Latent dimension of the generator must match the sequence model's.
template <class S>
void check_latent_dims(const latentgan::Mlp<S>& generator, const seq2seq::Seq2SeqConfig& cfg) {
  if (generator.out_dim() != cfg.latent_dim())
    throw InvalidInput("generator output dimension " + std::to_string(generator.out_dim()) +
                       " does not match the sequence latent dimension " + std::to_string(cfg.latent_dim()));
}

template <class S>
GeneratedShape decode_and_assemble(const Eigen::VectorXf& latent, seq2seq::Seq2Seq<S>& seq,
                                   const partae::PartAutoencoder<S>& partae, int res) {
  GeneratedShape g;
  g.latent = latent;
  g.steps = seq.decode_sequence(latent.cast<S>(), seq.config().k_max);
  g.shape = assemble_shape(g.steps, partae, res);
  return g;
}

/// sample_latents → decode_sequence → assemble_shape.
template <class S>
std::vector<GeneratedShape> generate_shapes(const latentgan::Mlp<S>& generator, const partae::PartAutoencoder<S>& partae,
                                            seq2seq::Seq2Seq<S>& seq, int count, std::uint64_t seed, int res) {
  check_latent_dims(generator, seq.config());
  std::vector<GeneratedShape> out;
  for (const auto& z : latentgan::sample_latents(generator, count, seed))
    out.push_back(decode_and_assemble(z, seq, partae, res));
  return out;
}

inline std::vector<Eigen::VectorXf> interpolate_latents(const Eigen::VectorXf& a, const Eigen::VectorXf& b,
                                                        const std::vector<double>& ts) {
  require(a.size() == b.size(), "interpolate: latent sizes differ");
  std::vector<Eigen::VectorXf> out;
  for (double t : ts) {
    require(t >= 0.0 && t <= 1.0, "interpolate: t must lie in [0,1], got " + std::to_string(t));
    if (t == 0.0) out.push_back(a);  // exact endpoints, even for signed zeros
    else if (t == 1.0) out.push_back(b);
    else out.push_back((static_cast<float>(1.0 - t) * a + static_cast<float>(t) * b).eval());
  }
  return out;
}

/// decode((1−t)·h_a + t·h_b) for every t.
template <class S>
std::vector<GeneratedShape> interpolate(const Eigen::VectorXf& h_a, const Eigen::VectorXf& h_b,
                                        const std::vector<double>& ts, seq2seq::Seq2Seq<S>& seq,
                                        const partae::PartAutoencoder<S>& partae, int res) {
  std::vector<GeneratedShape> out;
  for (const auto& z : interpolate_latents(h_a, h_b, ts)) out.push_back(decode_and_assemble(z, seq, partae, res));
  return out;
}

}  // namespace pqnet::tasks
