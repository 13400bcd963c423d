#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lcnn/optim.hpp"

namespace lcnn {
namespace {

struct Fixture {
  Dataset data;
  Network net;
  LabelConsistencyHead head;
};

Fixture small_setup(std::uint64_t seed = 3, std::size_t m = 3) {
  Fixture s;
  s.data = gen_synthetic_clusters(m, 8, 60, 0.15, seed);
  standardize(s.data);
  const std::vector<std::size_t> widths{16, 12, m};
  s.net = make_network(8, widths, seed + 100);
  s.head = make_head(2, allocate_neurons(12, m, class_priority(s.data)), 0.0);
  return s;
}

TEST(Train, AlphaZeroLcnn2IsIdenticalToBaseline) {
  const Fixture s = small_setup();
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.alpha = 0.0;
  cfg.mode = TrainMode::LCNN2;
  const auto a = train(s.net, s.head, s.data, cfg);
  cfg.mode = TrainMode::Baseline;
  cfg.alpha = 0.05;  // ignored by the baseline
  const auto b = train(s.net, s.head, s.data, cfg);
  EXPECT_TRUE(same_metrics(a.record, b.record));
  EXPECT_EQ(a.net, b.net);
  EXPECT_EQ(a.head.transform, b.head.transform);
  EXPECT_EQ(b.head.transform, Matrix::identity(12));
}

TEST(Train, DeterministicForEqualInputs) {
  const Fixture s = small_setup();
  TrainConfig cfg;
  cfg.epochs = 4;
  const auto a = train(s.net, s.head, s.data, cfg);
  const auto b = train(s.net, s.head, s.data, cfg);
  EXPECT_TRUE(same_metrics(a.record, b.record));
  EXPECT_EQ(a.net, b.net);
  cfg.seed = 2;
  const auto c = train(s.net, s.head, s.data, cfg);
  EXPECT_FALSE(same_metrics(a.record, c.record));
}

TEST(Train, RecordedLossDecomposes) {
  const Fixture s = small_setup();
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.alpha = 0.05;
  const auto r = train(s.net, s.head, s.data, cfg).record;
  ASSERT_EQ(r.epochs(), 6u);
  EXPECT_EQ(r.train_err.size(), 6u);
  EXPECT_EQ(r.test_err.size(), 6u);
  EXPECT_EQ(r.epoch_seconds.size(), 6u);
  for (std::size_t e = 0; e < r.epochs(); ++e)
    EXPECT_NEAR(r.loss[e], r.loss_c[e] + 0.05 * r.loss_r[e], 1e-12);
}

// One SGD step on a 2-2-2 network, checked against scalar formulas for the
// closed-form gradients.
TEST(Train, SingleStepMatchesHandComputation) {
  Dataset d;
  d.num_classes = 2;
  d.features = Matrix{{0.8, -0.4}, {0.3, 1.1}};
  d.labels = {0, 1};
  d.split = {Split::Train, Split::Train};

  Layer l1{Matrix{{0.6, -0.2}, {0.4, 0.9}}, Matrix{{0.1}, {0.05}}, Activation::ReLU};
  Layer l2{Matrix{{0.7, -0.5}, {-0.3, 0.8}}, Matrix{{0.02}, {-0.01}}, Activation::Identity};
  const Network net(2, {l1, l2});
  const std::vector<int> priority{0, 1};
  LabelConsistencyHead head = make_head(1, allocate_neurons(2, 2, priority), 0.0);
  head.transform = Matrix{{1.1, 0.2}, {-0.1, 0.9}};

  const double alpha = 0.3, lr = 0.1;
  TrainConfig cfg;
  cfg.mode = TrainMode::LCNN2;
  cfg.alpha = alpha;
  cfg.learning_rate = lr;
  cfg.momentum = 0.9;  // first step: v = -lr * g regardless of momentum
  cfg.batch_size = 2;
  cfg.epochs = 1;
  const auto out = train(net, head, d, cfg);

  double gW1[2][2] = {}, gb1[2] = {}, gW2[2][2] = {}, gb2[2] = {}, gA[2][2] = {};
  for (int b = 0; b < 2; ++b) {
    const double x[2] = {d.features(0, b), d.features(1, b)};
    const int y = d.labels[b];
    double z1[2], h[2], z2[2];
    for (int i = 0; i < 2; ++i) {
      z1[i] = l1.weight(i, 0) * x[0] + l1.weight(i, 1) * x[1] + l1.bias(i, 0);
      h[i] = z1[i] > 0 ? z1[i] : 0;
    }
    for (int i = 0; i < 2; ++i)
      z2[i] = l2.weight(i, 0) * h[0] + l2.weight(i, 1) * h[1] + l2.bias(i, 0);
    const double mx = std::max(z2[0], z2[1]);
    const double e0 = std::exp(z2[0] - mx), e1 = std::exp(z2[1] - mx);
    const double p[2] = {e0 / (e0 + e1), e1 / (e0 + e1)};
    double dz2[2];
    for (int i = 0; i < 2; ++i) dz2[i] = (p[i] - (i == y ? 1.0 : 0.0)) / 2.0;
    const double q[2] = {y == 0 ? 1.0 : 0.0, y == 1 ? 1.0 : 0.0};
    double res[2];
    for (int i = 0; i < 2; ++i)
      res[i] = head.transform(i, 0) * h[0] + head.transform(i, 1) * h[1] - q[i];
    double dh[2];
    for (int k = 0; k < 2; ++k)
      dh[k] = l2.weight(0, k) * dz2[0] + l2.weight(1, k) * dz2[1] +
              2 * alpha / 2.0 * (head.transform(0, k) * res[0] + head.transform(1, k) * res[1]);
    for (int i = 0; i < 2; ++i) {
      const double dz1 = z1[i] > 0 ? dh[i] : 0.0;
      gb1[i] += dz1;
      gb2[i] += dz2[i];
      for (int k = 0; k < 2; ++k) {
        gW1[i][k] += dz1 * x[k];
        gW2[i][k] += dz2[i] * h[k];
        gA[i][k] += 2 * alpha / 2.0 * res[i] * h[k];
      }
    }
  }
  for (int i = 0; i < 2; ++i) {
    EXPECT_NEAR(out.net.layer(0).bias(i, 0), l1.bias(i, 0) - lr * gb1[i], 1e-14);
    EXPECT_NEAR(out.net.layer(1).bias(i, 0), l2.bias(i, 0) - lr * gb2[i], 1e-14);
    for (int k = 0; k < 2; ++k) {
      EXPECT_NEAR(out.net.layer(0).weight(i, k), l1.weight(i, k) - lr * gW1[i][k], 1e-14);
      EXPECT_NEAR(out.net.layer(1).weight(i, k), l2.weight(i, k) - lr * gW2[i][k], 1e-14);
      EXPECT_NEAR(out.head.transform(i, k), head.transform(i, k) - lr * gA[i][k], 1e-14);
    }
  }
}

TEST(Train, Lcnn2ReachesLowTrainingErrorOnSyntheticClusters) {
  const Fixture s = small_setup(5, 3);
  TrainConfig cfg;
  cfg.mode = TrainMode::LCNN2;
  cfg.alpha = 0.05;
  cfg.epochs = 30;
  const auto r = train(s.net, s.head, s.data, cfg).record;
  EXPECT_LT(r.train_err.back(), 0.05);
}

TEST(Train, Lcnn1LeavesOutputLayerUntouchedAndLearnsEmbedding) {
  const Fixture s = small_setup(6, 3);
  TrainConfig cfg;
  cfg.mode = TrainMode::LCNN1;
  cfg.epochs = 15;
  const auto out = train(s.net, s.head, s.data, cfg);
  EXPECT_EQ(out.head.alpha, 1.0);
  EXPECT_EQ(out.net.layer(2), s.net.layer(2));
  EXPECT_NE(out.net.layer(0), s.net.layer(0));
  EXPECT_LT(out.record.loss_r.back(), out.record.loss_r.front());
  EXPECT_LT(out.record.test_err.back(), 0.1);
  for (std::size_t e = 0; e < out.record.epochs(); ++e)
    EXPECT_EQ(out.record.loss[e], out.record.loss_r[e]);
}

TEST(Train, NonFiniteLossAbortsWithLocation) {
  Fixture s = small_setup();
  for (Layer& l : s.net.layers())
    for (double& w : l.weight.data()) w *= 1e80;
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.alpha = 0.05;
  try {
    train(s.net, s.head, s.data, cfg);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 0"), std::string::npos) << e.what();
  }
}

TEST(Train, RejectsMismatchedDimensions) {
  const Fixture s = small_setup();
  TrainConfig cfg;
  cfg.epochs = 1;
  const std::vector<std::size_t> widths{16, 12, 4};
  const Network wrong_out = make_network(8, widths, 1);
  EXPECT_THROW(train(wrong_out, s.head, s.data, cfg), ShapeError);
  const std::vector<int> p{0, 1, 2};
  const auto wide_head = make_head(2, allocate_neurons(10, 3, p), 0.0);
  EXPECT_THROW(train(s.net, wide_head, s.data, cfg), ShapeError);
  cfg.learning_rate = 0.0;
  EXPECT_THROW(train(s.net, s.head, s.data, cfg), ArgumentError);
}

TEST(EpochsToThreshold, Examples) {
  TrainRecord r;
  r.train_err = {0.9, 0.4, 0.1};
  EXPECT_EQ(epochs_to_threshold(r, 0.5), std::optional<std::size_t>(1));
  EXPECT_EQ(epochs_to_threshold(r, 0.05), std::nullopt);
  EXPECT_EQ(epochs_to_threshold(r, 0.1), std::optional<std::size_t>(2));
}

TEST(RecordCsv, HeaderAndRows) {
  TrainRecord r;
  r.loss = {1.5, 0.5};
  r.loss_c = {1.0, 0.25};
  r.loss_r = {10.0, 5.0};
  r.train_err = {0.5, 0.25};
  r.test_err = {0.75, std::nan("")};
  const auto path = (std::filesystem::temp_directory_path() / "lcnn_record_test.csv").string();
  write_record_csv(r, path);
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(),
            "epoch,loss,loss_c,loss_r,train_err,test_err\n"
            "0,1.5,1,10,0.5,0.75\n"
            "1,0.5,0.25,5,0.25,\n");
  std::filesystem::remove(path);
}

TEST(Mode, ParseAndEffectiveAlpha) {
  EXPECT_EQ(parse_mode("lcnn2"), TrainMode::LCNN2);
  EXPECT_EQ(parse_mode("bogus"), std::nullopt);
  TrainConfig cfg;
  cfg.alpha = 0.05;
  cfg.mode = TrainMode::Baseline;
  EXPECT_EQ(effective_alpha(cfg), 0.0);
  cfg.mode = TrainMode::LCNN1;
  EXPECT_EQ(effective_alpha(cfg), 1.0);
  EXPECT_EQ(classification_weight(cfg), 0.0);
  cfg.mode = TrainMode::LCNN2;
  EXPECT_EQ(effective_alpha(cfg), 0.05);
}

}  // namespace
}  // namespace lcnn
