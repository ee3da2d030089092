// Copyright 2026 The dptab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dptab/checkpoint.hpp"
#include "dptab/lm.hpp"
#include "dptab/transformer.hpp"
#include "gradcheck.hpp"
#include "toy.hpp"

using namespace dptab;

namespace {

ModelConfig tiny_config(int vocab, int rank = 0) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.context_length = 12;
  c.embed_dim = 8;
  c.num_layers = 2;
  c.num_heads = 2;
  c.ffn_dim = 16;
  c.adapter_rank = rank;
  return c;
}

// Scalar helpers for the hand-computed forward pass.
struct V2 {
  double a, b;
};
V2 ln2(V2 x, V2 gain = {1, 1}, V2 bias = {0, 0}) {
  const double m = (x.a + x.b) / 2;
  const double var = ((x.a - m) * (x.a - m) + (x.b - m) * (x.b - m)) / 2;
  const double r = 1 / std::sqrt(var + 1e-5);
  return {(x.a - m) * r * gain.a + bias.a, (x.b - m) * r * gain.b + bias.b};
}
double gelu(double x) { return 0.5 * x * (1 + std::tanh(std::sqrt(2 / M_PI) * (x + 0.044715 * x * x * x))); }

}  // namespace

TEST(ModelTest, InitIsDeterministic) {
  const auto a = Model::init(tiny_config(20, 4), 5);
  const auto b = Model::init(tiny_config(20, 4), 5);
  EXPECT_EQ(a.params(), b.params());
  const auto c = Model::init(tiny_config(20, 4), 6);
  EXPECT_NE(a.params(), c.params());
}

TEST(ModelTest, RejectsIndivisibleHeads) {
  ModelConfig c = tiny_config(20);
  c.embed_dim = 65;
  c.num_heads = 4;
  EXPECT_THROW(c.validate(), InputError);
  EXPECT_THROW(Model::init(c, 1), InputError);
}

TEST(ModelTest, ZeroInitAdaptersLeaveOutputUnchanged) {
  ModelConfig big = toy::small_model();
  big.vocab_size = 30;
  big.adapter_rank = 4;
  auto m = Model::init(big, 3);
  const std::vector<TokenId> ids{0, 4, 9, 17, 3};
  const Model::Mat before = m.forward(ids);
  // Adapter A matrices are random with std 0.02, B matrices zero.
  double sum2 = 0;
  Eigen::Index count = 0;
  for (const auto& slot : m.layout().slots()) {
    if (slot.group != ParamGroup::adapter) continue;
    auto p = m.param(slot.name);
    if (slot.name.find("_b") != std::string::npos) {
      EXPECT_EQ(p.cwiseAbs().maxCoeff(), 0.0f) << slot.name;
    } else {
      sum2 += p.cast<double>().squaredNorm();
      count += p.size();
    }
  }
  EXPECT_NEAR(std::sqrt(sum2 / count), 0.02, 0.003);
  for (const auto& slot : m.layout().slots()) {
    if (slot.group == ParamGroup::adapter) m.param(slot.name).setZero();
  }
  EXPECT_EQ(m.forward(ids), before);
}

TEST(ModelTest, CausalMaskKeepsEarlierLogits) {
  const auto m = Model::init(tiny_config(15), 2);
  std::vector<TokenId> ids{0, 5, 7, 3};
  const Model::Mat a = m.forward(ids);
  ids.push_back(9);
  const Model::Mat b = m.forward(ids);
  EXPECT_EQ(b.topRows(4), a);
}

TEST(ModelTest, SoftmaxRowsNormalize) {
  const auto m = Model::init(tiny_config(15), 2);
  const Model::Mat logits = m.forward(std::vector<TokenId>{0, 1, 2, 3, 4, 5});
  const LogitMatrix<float> lp = log_softmax_rows(LogitMatrix<float>(logits));
  for (Eigen::Index r = 0; r < lp.rows(); ++r) EXPECT_NEAR(lp.row(r).array().exp().sum(), 1.0f, 1e-6f);
}

TEST(ModelTest, HandComputedForwardOnTwoTokenVocab) {
  ModelConfig c;
  c.vocab_size = 2;
  c.context_length = 4;
  c.embed_dim = 2;
  c.num_layers = 1;
  c.num_heads = 1;
  c.ffn_dim = 2;
  using DM = TransformerLM<double>;
  DM m(c, DM::Vec::Zero(ParamLayout(c).total()));
  m.param("wte") << 1, 0, 0, 2;
  m.param("wpe").row(1) << 0.5, 0;
  m.param("h0.ln1.g") << 1, 1;
  m.param("h0.ln2.g") << 1, 1;
  auto qkv = m.param("h0.attn.w_qkv");  // q and k stay zero: uniform attention
  qkv(0, 4) = 1;
  qkv(1, 5) = 1;
  m.param("h0.attn.w_out") << 1, 0, 0, 1;
  m.param("h0.mlp.b_in") << 1, -1;
  m.param("h0.mlp.w_out") << 1, 0, 0, 1;
  m.param("ln_f.g") << 1, 1;
  m.param("ln_f.b") << 0, 0.5;
  m.param("lm_head") << 1, -1, 2, 0;

  const std::vector<TokenId> ids{0, 1};
  const DM::Mat got = m.forward(ids);

  const V2 x0{1, 0};
  const V2 x1{0 + 0.5, 2 + 0};
  const V2 a0 = ln2(x0), a1 = ln2(x1);
  const V2 att0 = a0, att1{(a0.a + a1.a) / 2, (a0.b + a1.b) / 2};
  const V2 mlp{gelu(1), gelu(-1)};
  const V2 r0{x0.a + att0.a + mlp.a, x0.b + att0.b + mlp.b};
  const V2 r1{x1.a + att1.a + mlp.a, x1.b + att1.b + mlp.b};
  for (int t = 0; t < 2; ++t) {
    const V2 h = ln2(t == 0 ? r0 : r1, {1, 1}, {0, 0.5});
    EXPECT_NEAR(got(t, 0), h.a * 1 + h.b * 2, 1e-12);
    EXPECT_NEAR(got(t, 1), h.a * -1 + h.b * 0, 1e-12);
  }
}

TEST(ModelTest, GradientsMatchFiniteDifferences) {
  const auto m = gradcheck::model12(17);
  Rng rng(5);
  for (int i = 0; i < 5; ++i) {
    const auto ex = gradcheck::example12(rng);
    EXPECT_LE(gradcheck::relative_error(m, ex, gradcheck::combined_soft_spec()), 1e-3);
  }
  LossSpec ce;
  ce.kind = LossKind::stage1_ce;
  EXPECT_LE(gradcheck::relative_error(m, gradcheck::example12(rng), ce), 1e-3);
}

TEST(ModelTest, DuplicatedExampleDuplicatesGradient) {
  const auto m = gradcheck::model12(3).cast<float>();
  Rng rng(2);
  const auto ex = gradcheck::example12(rng);
  const auto set = TrainableSet::groups(m.layout(), {ParamGroup::adapter, ParamGroup::embedding});
  const auto out = loss_and_per_example_grads(m, {ex, ex}, gradcheck::combined_soft_spec(), gradcheck::digits12(), set, 2);
  EXPECT_EQ(out.grads.row(0), out.grads.row(1));
  EXPECT_EQ(out.grads.cols(), set.size());
}

TEST(ModelTest, EmptyTrainableSetStillComputesLoss) {
  const auto m = gradcheck::model12(3).cast<float>();
  Rng rng(2);
  const auto ex = gradcheck::example12(rng);
  const auto out = loss_and_per_example_grads(m, {ex}, gradcheck::combined_soft_spec(), gradcheck::digits12(),
                                              TrainableSet{});
  EXPECT_EQ(out.grads.cols(), 0);
  EXPECT_GT(out.losses[0].total, 0.0);
}

TEST(SamplingTest, TemperatureZeroIsArgmax) {
  Eigen::RowVector3f logits(2.0f, 1.0f, 3.0f);
  Rng rng(1);
  EXPECT_EQ(sample_from_logits(logits, 0.0, rng), 2);
}

TEST(SamplingTest, DominantLogitAtTemperatureOne) {
  Eigen::RowVectorXf logits = Eigen::RowVectorXf::Zero(10);
  logits[0] = 100;
  Rng rng(1);
  int hits = 0;
  for (int i = 0; i < 10000; ++i) hits += sample_from_logits(logits, 1.0, rng) == 0;
  EXPECT_GT(hits / 10000.0, 0.999);
}

TEST(SamplingTest, SeededSequenceReproduces) {
  const auto m = Model::init(tiny_config(15), 2);
  auto draw = [&] {
    Rng rng(42);
    std::vector<TokenId> ids{0};
    for (int i = 0; i < 8; ++i) ids.push_back(sample_next(m, ids, 1.0, rng));
    return ids;
  };
  EXPECT_EQ(draw(), draw());
}

TEST(CheckpointTest, RoundTripIsBitExact) {
  Checkpoint ck;
  ck.schema = toy::schema();
  ck.vocab = build_vocab(ck.schema);
  ModelConfig c = toy::small_model();
  c.vocab_size = static_cast<int>(ck.vocab.size());
  ck.model = Model::init(c, 9);
  ck.ledger.record(0.01, 1.3, 25);
  ck.metadata = R"({"note":"x"})";
  const auto path = std::filesystem::temp_directory_path() / "dptab_ckpt_test.bin";
  save_checkpoint(path, ck);
  const Checkpoint back = load_checkpoint(path);
  const std::vector<TokenId> ids{0, 5, 6, 7};
  EXPECT_EQ(back.model.forward(ids), ck.model.forward(ids));
  EXPECT_EQ(back.vocab.tokens(), ck.vocab.tokens());
  EXPECT_EQ(back.ledger, ck.ledger);
  EXPECT_EQ(back.ledger.epsilon(1e-6), ck.ledger.epsilon(1e-6));
  EXPECT_EQ(back.metadata, ck.metadata);

  std::string bytes = serialize_checkpoint(ck);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 10)), CheckpointError);
  bytes[bytes.size() / 2] ^= 0x5a;
  EXPECT_THROW(deserialize_checkpoint(bytes), CheckpointError);
  std::filesystem::remove(path);
}
