#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "pqnet/datakit/synth.hpp"
#include "pqnet/seq2seq/train.hpp"

using namespace pqnet;
using namespace pqnet::seq2seq;

namespace {

Seq2SeqConfig toy_config(int width = 8) {
  Seq2SeqConfig c;
  c.code_dim = 5;
  c.k_max = 4;
  c.enc_hidden = width / 2 > 0 ? width / 2 : 1;
  c.geo_hidden = width;
  c.box_hidden = width;
  c.stop_hidden = width;
  return c;
}

std::vector<StepVector> random_sequence(int k, const Seq2SeqConfig& c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<StepVector> out;
  for (int i = 0; i < k; ++i) {
    Eigen::VectorXd g(c.code_dim);
    for (auto& v : g) v = u(rng);
    std::array<double, 6> b{};
    for (auto& v : b) v = u(rng) * 0.5 + 0.1;
    out.push_back(pack_step(g, b, k, c.k_max));
  }
  return out;
}

double sigm(double v) { return 1 / (1 + std::exp(-v)); }

// Hand-unrolled single recurrence step from weights.
Eigen::VectorXd gru_step_oracle(nn::GruLayer<double>& g, const Eigen::VectorXd& x, const Eigen::VectorXd& h) {
  const int H = g.hidden();
  const auto& wi = g.weight_ih().value;
  const auto& wh = g.weight_hh().value;
  const auto& bi = g.bias_ih().value;
  const auto& bh = g.bias_hh().value;
  Eigen::VectorXd out(H);
  for (int i = 0; i < H; ++i) {
    double ar = bi(i, 0) + bh(i, 0), az = bi(H + i, 0) + bh(H + i, 0), xn = bi(2 * H + i, 0), hn = bh(2 * H + i, 0);
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      ar += wi(i, j) * x[j];
      az += wi(H + i, j) * x[j];
      xn += wi(2 * H + i, j) * x[j];
    }
    for (Eigen::Index j = 0; j < h.size(); ++j) {
      ar += wh(i, j) * h[j];
      az += wh(H + i, j) * h[j];
      hn += wh(2 * H + i, j) * h[j];
    }
    const double r = sigm(ar), z = sigm(az), n = std::tanh(xn + r * hn);
    out[i] = (1 - z) * n + z * h[i];
  }
  return out;
}

void rig_stop(Seq2Seq<float>& m, double prob) {
  auto& l = m.stop_output();
  l.weight().value.setZero();
  l.bias().value.setConstant(static_cast<float>(std::log(prob / (1 - prob))));
}

}  // namespace

TEST(StepVectors, AssembleExamples) {
  const auto shapes = datakit::synth_corpus({{{"lamp", 1}}, 3, false});
  const auto& shape = shapes[0];
  ASSERT_EQ(shape.parts.size(), 3u);
  std::vector<Eigen::VectorXd> codes(3, Eigen::VectorXd::Constant(128, 0.5));
  const auto steps = assemble_step_vectors(shape, codes, 10);
  ASSERT_EQ(steps.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(steps[i].size(), 144);
    EXPECT_EQ(steps[i].tail(10).sum(), 1.0);
    EXPECT_EQ(steps[i][134 + 2], 1.0);
    const auto b = shape.parts[i].box.as_array();
    for (int j = 0; j < 6; ++j) EXPECT_EQ(steps[i][128 + j], b[j]);
  }
  const auto at_max = assemble_step_vectors(shape, codes, 3);
  EXPECT_EQ(at_max[0][128 + 6 + 2], 1.0);
  EXPECT_THROW(assemble_step_vectors(shape, codes, 2), InvalidInput);
  EXPECT_THROW(assemble_step_vectors(shape, {codes[0]}, 10), InvalidInput);
}

TEST(StepVectors, PackUnpackRoundTrip) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-2, 2);
  std::uniform_int_distribution<int> k(1, 10);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd g(128);
    for (auto& v : g) v = u(rng);
    std::array<double, 6> b{};
    for (auto& v : b) v = u(rng);
    const int count = k(rng);
    const StepParts p = unpack_step(pack_step(g, b, count, 10), 128, 10);
    EXPECT_EQ(p.g, g);
    EXPECT_EQ(p.b, b);
    EXPECT_EQ(p.part_count, count);
  }
  EXPECT_THROW(pack_step(Eigen::VectorXd::Zero(128), {}, 11, 10), InvalidInput);
}

TEST(Losses, Reconstruction) {
  std::mt19937_64 rng(2);
  const Seq2SeqConfig c = toy_config();
  const auto truth = random_sequence(2, c, rng);
  std::vector<DecodedStep> pred(2);
  for (int i = 0; i < 2; ++i) {
    pred[i].g = truth[i].head(5);
    for (int j = 0; j < 6; ++j) pred[i].b[j] = truth[i][5 + j];
  }
  EXPECT_EQ(loss_reconstruction(pred, truth), 0.0);

  std::vector<DecodedStep> one(1);
  one[0].g = truth[0].head(5);
  for (int j = 0; j < 6; ++j) one[0].b[j] = truth[0][5 + j];
  one[0].b[0] += 1.0;
  EXPECT_NEAR(loss_reconstruction(one, {truth[0]}, 1.0), 1.0, 1e-12);

  // Two-part hand computation.
  pred[0].g[1] += 0.5;         // 0.25 geometry
  pred[0].b[3] -= 0.2;         // 0.04 box
  pred[1].g[0] -= 0.1;         // 0.01 geometry
  pred[1].b[5] += 0.3;         // 0.09 box
  EXPECT_NEAR(loss_reconstruction(pred, truth, 1.0), (0.25 + 0.04 + 0.01 + 0.09) / 2, 1e-9);
  EXPECT_NEAR(loss_reconstruction(pred, truth, 2.0), (0.5 + 0.04 + 0.02 + 0.09) / 2, 1e-9);
  EXPECT_THROW(loss_reconstruction(pred, {truth[0]}), InvalidInput);
}

TEST(Losses, Stop) {
  for (int k : {1, 2, 5, 10}) EXPECT_NEAR(loss_stop(std::vector<double>(k, 0.5), k), std::log(2.0), 1e-9);
  EXPECT_NEAR(loss_stop({0.2, 0.7}, 2), (-std::log(0.8) - std::log(0.7)) / 2, 1e-12);
  EXPECT_NEAR(loss_stop({0.2, 0.7}, 2), 0.2899092, 1e-7);
  const double eps = 1e-4;
  EXPECT_LE(loss_stop({eps, eps, 1 - eps}, 3), 3 * eps);
  EXPECT_THROW(loss_stop({0.0, 0.5}, 2), InvalidInput);
  EXPECT_THROW(loss_stop({0.5, 1.0}, 2), InvalidInput);
  EXPECT_THROW(loss_stop({0.5}, 2), InvalidInput);
}

TEST(Losses, StopMinimizedAtLabelPattern) {
  const std::vector<double> grid = {0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99};
  for (int k = 1; k <= 3; ++k) {
    double best = 1e9;
    std::vector<double> arg;
    std::vector<int> idx(k, 0);
    while (true) {
      std::vector<double> s;
      for (int i : idx) s.push_back(grid[i]);
      const double l = loss_stop(s, k);
      if (l < best) best = l, arg = s;
      int d = 0;
      while (d < k && ++idx[d] == static_cast<int>(grid.size())) idx[d++] = 0;
      if (d == k) break;
    }
    for (int i = 0; i < k; ++i) EXPECT_EQ(arg[i], i == k - 1 ? 0.99 : 0.01);
  }
}

TEST(Losses, Total) {
  EXPECT_EQ(loss_total(0.0, 0.0, 0.01), 0.0);
  EXPECT_EQ(loss_total(1.0, 1.0, 0.01), 1.01);
  EXPECT_NEAR(loss_total({{0.3, 0.5}, {0.1, 2.0}}, 0.01), ((0.3 + 0.005) + (0.1 + 0.02)) / 2, 1e-15);
}

TEST(Seq2Seq, DimensionAlgebraDefaultModel) {
  Seq2Seq<float> m(Seq2SeqConfig{}, 1);
  std::mt19937_64 rng(3);
  const auto seq = random_sequence(4, Seq2SeqConfig{}, rng);
  EXPECT_EQ(seq[0].size(), 144);
  const auto hz = m.encode_sequence(seq);
  EXPECT_EQ(hz.size(), 1024);
  const auto dec = m.decode_sequence(hz, 10);
  ASSERT_GE(dec.size(), 1u);
  ASSERT_LE(dec.size(), 10u);
  EXPECT_EQ(dec[0].g.size(), 128);
  EXPECT_GT(dec[0].s, 0.0);
  EXPECT_LT(dec[0].s, 1.0);
  EXPECT_THROW(m.encode_sequence({}), InvalidInput);
}

TEST(Seq2Seq, OrderSensitivity) {
  Seq2Seq<float> m(Seq2SeqConfig{}, 2);
  std::mt19937_64 rng(4);
  auto seq = random_sequence(2, Seq2SeqConfig{}, rng);
  const auto a = m.encode_sequence(seq);
  std::swap(seq[0], seq[1]);
  EXPECT_NE(m.encode_sequence(seq), a);
  EXPECT_EQ(m.encode_sequence(seq), m.encode_sequence(seq));
}

TEST(Seq2Seq, SingleStepMatchesHandUnrolledRecurrence) {
  Seq2SeqConfig c = toy_config(8);  // hidden 4 per encoder direction
  Seq2Seq<double> m(c, 5);
  std::mt19937_64 rng(6);
  const auto seq = random_sequence(1, c, rng);
  const auto hz = m.encode_sequence(seq);
  auto ps = m.encoder_params();
  // Rebuild the four layers from the parameter list (order: f1, b1, f2, b2).
  std::vector<nn::GruLayer<double>> layers;
  nn::Rng dummy(0);
  for (int l = 0; l < 4; ++l) {
    nn::GruLayer<double> g("x", l < 2 ? c.step_dim() : 8, 4, dummy);
    auto gp = g.params();
    for (int i = 0; i < 4; ++i) gp[i]->value = ps[4 * l + i]->value;
    layers.push_back(g);
  }
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(4);
  const Eigen::VectorXd f1 = gru_step_oracle(layers[0], seq[0], zero);
  const Eigen::VectorXd b1 = gru_step_oracle(layers[1], seq[0], zero);
  Eigen::VectorXd mid(8);
  mid << f1, b1;
  Eigen::VectorXd expect(16);
  expect << f1, b1, gru_step_oracle(layers[2], mid, zero), gru_step_oracle(layers[3], mid, zero);
  EXPECT_LT((hz - expect).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Seq2Seq, RiggedStopHead) {
  Seq2Seq<float> m(toy_config(), 7);
  nn::Vec<float> hz = nn::Vec<float>::Constant(m.config().latent_dim(), 0.1f);
  rig_stop(m, 0.9);
  EXPECT_EQ(m.decode_sequence(hz, 10).size(), 1u);
  rig_stop(m, 0.1);
  EXPECT_EQ(m.decode_sequence(hz, 10).size(), 10u);
  EXPECT_EQ(m.decode_sequence(hz, {6, 1}).size(), 6u);
  rig_stop(m, 0.9);
  EXPECT_EQ(m.decode_sequence(hz, {4, 4}).size(), 4u);
}

TEST(Seq2Seq, DecodeLengthBoundedForRandomLatents) {
  Seq2Seq<float> m(toy_config(), 8);
  std::mt19937_64 rng(9);
  std::normal_distribution<float> n(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    nn::Vec<float> hz(m.config().latent_dim());
    for (auto& v : hz) v = n(rng);
    const int max_steps = 1 + trial % 7;
    const auto d = m.decode_sequence(hz, max_steps);
    EXPECT_GE(d.size(), 1u);
    EXPECT_LE(static_cast<int>(d.size()), max_steps);
  }
}

TEST(Seq2Seq, MaskedBatchEqualsPerShapeLoss) {
  const Seq2SeqConfig c = toy_config();
  Seq2Seq<double> m(c, 10);
  std::mt19937_64 rng(11);
  std::vector<std::vector<StepVector>> seqs;
  for (int k : {1, 4, 2, 3}) seqs.push_back(random_sequence(k, c, rng));
  std::vector<const std::vector<StepVector>*> ptrs;
  for (const auto& s : seqs) ptrs.push_back(&s);
  const auto batched = seq2seq_forward(m, make_batch<double>(ptrs, c.step_dim()), {}, false, false);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const auto single = seq2seq_forward(m, make_batch<double>({&seqs[i]}, c.step_dim()), {}, false, false);
    EXPECT_NEAR(batched[i].reconstruction, single[0].reconstruction, 1e-6);
    EXPECT_NEAR(batched[i].stop, single[0].stop, 1e-6);
  }
}

TEST(Seq2Seq, TeacherForcedLossMatchesLossFunctions) {
  // The batch loss equals loss_reconstruction / loss_stop on the teacher-forced heads.
  const Seq2SeqConfig c = toy_config();
  Seq2Seq<double> m(c, 12);
  std::mt19937_64 rng(13);
  const auto seq = random_sequence(3, c, rng);
  const auto batch = make_batch<double>({&seq}, c.step_dim());
  const auto terms = seq2seq_forward(m, batch, {0.01, 1.0}, false, false);
  const auto hz = m.encode_batch(batch, false);
  const auto out = m.decode_teacher(hz, batch, false);
  std::vector<DecodedStep> pred(3);
  std::vector<double> signs;
  for (int t = 0; t < 3; ++t) {
    pred[t].g = out.g.col(t);
    for (int j = 0; j < 6; ++j) pred[t].b[j] = out.b(j, t);
    signs.push_back(sigm(out.stop_logit(0, t)));
  }
  EXPECT_NEAR(terms[0].reconstruction, loss_reconstruction(pred, seq), 1e-12);
  EXPECT_NEAR(terms[0].stop, loss_stop(signs, 3), 1e-12);
}

TEST(Seq2Seq, GradientCheckWidth8) {
  const Seq2SeqConfig c = toy_config(8);
  for (int batch_no = 0; batch_no < 10; ++batch_no) {
    Seq2Seq<double> m(c, 20 + batch_no);
    std::mt19937_64 rng(30 + batch_no);
    std::vector<std::vector<StepVector>> seqs;
    for (int k : {3, 1, 4}) seqs.push_back(random_sequence(k, c, rng));
    std::vector<const std::vector<StepVector>*> ptrs;
    for (const auto& s : seqs) ptrs.push_back(&s);
    const auto batch = make_batch<double>(ptrs, c.step_dim());
    const std::uint64_t drop_seed = rng();
    const Seq2SeqLossWeights w{0.3, 1.0};
    auto loss = [&] {
      Seq2Seq<double> copy = m;
      copy.rng() = nn::Rng(drop_seed);
      return batch_loss(seq2seq_forward(copy, batch, w, true, false), w.alpha);
    };
    nn::zero_grads(m.params());
    m.rng() = nn::Rng(drop_seed);
    seq2seq_forward(m, batch, w, true, true);
    const auto rep = gradcheck::compare(gradcheck::blocks(m.params()), loss, rng, 12);
    EXPECT_LT(rep.max_rel, 1e-4) << "batch " << batch_no << " worst " << rep.worst;
  }
}

TEST(TrainSeq2Seq, AlphaZeroLeavesStopHeadUntouched) {
  const Seq2SeqConfig c = toy_config();
  std::mt19937_64 rng(14);
  std::vector<ShapeSequence> corpus;
  for (int k : {2, 3}) corpus.push_back({"s" + std::to_string(k), random_sequence(k, c, rng)});
  Seq2SeqTrainConfig tc;
  tc.epochs = 3;
  tc.weights.alpha = 0.0;
  Seq2Seq<float> m(c, 15);
  const auto before = nn::checksum(m.stop_head_params());
  const auto all_before = nn::checksum(m.params());
  train_seq2seq(m, corpus, tc);
  EXPECT_EQ(nn::checksum(m.stop_head_params()), before);
  EXPECT_NE(nn::checksum(m.params()), all_before);
  tc.weights.alpha = 0.01;
  train_seq2seq(m, corpus, tc);
  EXPECT_NE(nn::checksum(m.stop_head_params()), before);
}

TEST(TrainSeq2Seq, SeededRunsIdenticalAndValidation) {
  const Seq2SeqConfig c = toy_config();
  std::mt19937_64 rng(16);
  std::vector<ShapeSequence> corpus;
  for (int k : {2, 3, 1, 4}) corpus.push_back({"s" + std::to_string(k), random_sequence(k, c, rng)});
  Seq2SeqTrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 3;
  tc.seed = 5;
  Seq2Seq<float> a(c, 1), b(c, 1);
  EXPECT_EQ(train_seq2seq(a, corpus, tc), train_seq2seq(b, corpus, tc));
  Seq2SeqConfig big = c;
  big.k_max = 5;
  corpus.push_back({"long", random_sequence(5, big, rng)});
  EXPECT_THROW(train_seq2seq(a, corpus, tc), InvalidInput);
  EXPECT_THROW(train_seq2seq(a, {}, tc), InvalidInput);
}

TEST(TrainSeq2Seq, OverfitsThreePartShape) {
  Seq2SeqConfig c = toy_config(32);
  Seq2Seq<float> m(c, 17);
  std::mt19937_64 rng(18);
  const std::vector<ShapeSequence> corpus{{"toy", random_sequence(3, c, rng)}};
  Seq2SeqTrainConfig tc;
  tc.epochs = 600;
  tc.weights.alpha = 0.1;
  train_seq2seq(m, corpus, tc);
  const auto ev = evaluate_seq2seq(m, corpus);
  EXPECT_EQ(ev.step_count_accuracy, 1.0);
  EXPECT_LT(ev.box_mse, 1e-3);
}

TEST(LatentTable, RoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "pqnet_latents.bin";
  LatentTable rows{{"a_00001", Eigen::VectorXf::LinSpaced(1024, 0, 1)}, {"b", Eigen::VectorXf::Zero(1024)}};
  write_latent_table(path, rows);
  EXPECT_EQ(read_latent_table(path), rows);
  std::filesystem::remove(path);
  EXPECT_THROW(read_latent_table(path), InvalidInput);
}

TEST(Seq2Seq, CheckpointRoundTrip) {
  Seq2Seq<float> m(toy_config(), 19);
  const auto path = std::filesystem::temp_directory_path() / "pqnet_seq.pqck";
  m.to_checkpoint().save(path);
  auto back = Seq2Seq<float>::from_checkpoint(nn::Checkpoint::load(path));
  std::mt19937_64 rng(1);
  const auto seq = random_sequence(3, m.config(), rng);
  EXPECT_EQ(back.encode_sequence(seq), m.encode_sequence(seq));
  std::filesystem::remove(path);
}
