#include <cmath>

#include <gtest/gtest.h>

#include "fusionkit/container.hpp"
#include "fusionkit/error.hpp"
#include "fusionkit/svm.hpp"
#include "test_util.hpp"

using namespace fusionkit;

namespace {

struct Instance {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
};

// n points in 2-D, labels forced to contain both signs.
Instance random_instance(Rng& rng, std::size_t n, bool overlapping) {
  Instance in;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = (i == 0) ? 1 : (i == 1) ? -1 : (rng.uniform() < 0.5 ? 1 : -1);
    const double shift = overlapping ? 0.3 : 1.5;
    in.x.push_back({rng.normal() + shift * y, rng.normal()});
    in.y.push_back(y);
  }
  return in;
}

SvmConfig raw(double c, double gamma) {
  SvmConfig cfg;
  cfg.c = c;
  cfg.gamma = gamma;
  cfg.standardize = false;
  cfg.tol = 1e-6;
  cfg.max_passes = 100000;
  return cfg;
}

double decision_at(const SvmModel& m, const std::vector<double>& x) { return predict(m, x).decision; }

}  // namespace

TEST(Rbf, KernelOfPointWithItselfIsOne) {
  const std::vector<double> a{1.5, -2.0, 3.0};
  EXPECT_EQ(rbf_kernel(a, a, 0.7), 1.0);
  const std::vector<double> b{0.0, 0.0, 0.0};
  EXPECT_NEAR(rbf_kernel(a, b, 0.1), std::exp(-0.1 * (2.25 + 4 + 9)), 1e-15);
}

TEST(SvmConfig, RejectsNonPositiveHyperparameters) {
  SvmConfig c;
  c.c = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = SvmConfig{};
  c.gamma = -1.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = SvmConfig{};
  c.tol = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(Smo, TwoSeparatedPointsAreBothSupportVectors) {
  const std::vector<std::vector<double>> x{{-1.0, 0.0}, {1.0, 0.0}};
  const std::vector<int> y{-1, 1};
  const SvmTrainResult r = train_smo(x, y, raw(10.0, 0.5), 1);
  EXPECT_EQ(r.model.support_vectors.rows(), 2u);
  // Symmetric pair: alpha = 1 / (1 - K(x1, x2)), b = 0.
  const double k12 = std::exp(-0.5 * 4.0);
  EXPECT_NEAR(r.alpha[0], 1.0 / (1.0 - k12), 1e-6);
  EXPECT_NEAR(r.alpha[1], r.alpha[0], 1e-9);
  EXPECT_NEAR(r.model.bias, 0.0, 1e-6);
  EXPECT_EQ(predict(r.model, x[0]).label, -1);
  EXPECT_EQ(predict(r.model, x[1]).label, 1);
}

TEST(Smo, SingleClassIsAnError) {
  const std::vector<std::vector<double>> x{{0.0}, {1.0}};
  const std::vector<int> y{1, 1};
  EXPECT_THROW(train_smo(x, y, SvmConfig{}, 0), InvalidArgument);
  const std::vector<int> bad{1, 0};
  EXPECT_THROW(train_smo(x, bad, SvmConfig{}, 0), InvalidArgument);
}

TEST(Smo, KktAndEqualityHoldAtConvergence) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Instance in = random_instance(rng, 10 + rng.uniform_index(30), trial % 2 == 0);
    SvmConfig cfg;
    cfg.c = trial % 3 == 0 ? 0.5 : 2.0;
    const SvmTrainResult r = train_smo(in.x, in.y, cfg, trial);
    double balance = 0;
    for (std::size_t i = 0; i < in.x.size(); ++i) {
      const double a = r.alpha[i];
      ASSERT_GE(a, 0.0);
      ASSERT_LE(a, cfg.c);
      balance += a * in.y[i];
      const double yf = in.y[i] * decision_at(r.model, in.x[i]);
      if (a == 0.0) {
        EXPECT_GE(yf, 1.0 - cfg.tol);
      } else if (a == cfg.c) {
        EXPECT_LE(yf, 1.0 + cfg.tol);
      } else {
        EXPECT_NEAR(yf, 1.0, cfg.tol);
      }
    }
    EXPECT_NEAR(balance, 0.0, 1e-9);
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.kkt_violation, cfg.tol);
  }
}

TEST(Smo, MatchesExactDualOnSmallInstances) {
  Rng rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(5);
    const Instance in = random_instance(rng, n, true);
    const double c = trial % 2 ? 0.3 : 3.0, gamma = 0.5;
    const SvmTrainResult r = train_smo(in.x, in.y, raw(c, gamma), trial);
    const oracle::DualOptimum best = oracle::svm_dual_exact(in.x, in.y, c, gamma);
    EXPECT_NEAR(r.dual_objective, best.objective, 1e-6) << "n=" << n;
    EXPECT_NEAR(oracle::svm_dual_objective(in.x, in.y, r.alpha, gamma), best.objective, 1e-6);
    EXPECT_GE(best.objective + 1e-9, oracle::svm_dual_grid(in.x, in.y, c, gamma, n <= 4 ? 40 : 12));
  }
}

TEST(Smo, ObjectiveNeverDecreases) {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Instance in = random_instance(rng, 30, true);
    SvmConfig cfg;
    cfg.record_objective = true;
    const SvmTrainResult r = train_smo(in.x, in.y, cfg, trial);
    ASSERT_FALSE(r.objective_trace.empty());
    for (std::size_t k = 1; k < r.objective_trace.size(); ++k)
      EXPECT_GE(r.objective_trace[k], r.objective_trace[k - 1] - 1e-12);
  }
}

TEST(Smo, ConflictingDuplicatesBothHitTheBox) {
  const std::vector<std::vector<double>> x{{0.0, 0.0}, {0.0, 0.0}, {3.0, 0.0}, {-3.0, 0.0}};
  const std::vector<int> y{1, -1, 1, -1};
  const double c = 0.7;
  const SvmTrainResult r = train_smo(x, y, raw(c, 0.5), 2);
  EXPECT_NEAR(r.alpha[0], c, 1e-9);
  EXPECT_NEAR(r.alpha[1], c, 1e-9);
}

TEST(Smo, DeterministicGivenSeed) {
  Rng rng(9);
  const Instance in = random_instance(rng, 40, true);
  const SvmTrainResult a = train_smo(in.x, in.y, SvmConfig{}, 17), b = train_smo(in.x, in.y, SvmConfig{}, 17);
  EXPECT_EQ(a.alpha, b.alpha);
  EXPECT_EQ(to_container(a.model).serialize(), to_container(b.model).serialize());
}

TEST(Smo, DefaultGammaIsInverseDimension) {
  Rng rng(10);
  Instance in;
  for (int i = 0; i < 8; ++i) {
    in.x.push_back({rng.normal(), rng.normal(), rng.normal(), rng.normal()});
    in.y.push_back(i % 2 ? 1 : -1);
  }
  EXPECT_EQ(train_smo(in.x, in.y, SvmConfig{}, 0).model.gamma, 0.25);
}

TEST(Predict, MarginSupportVectorsSitOnTheMargin) {
  Rng rng(11);
  const Instance in = random_instance(rng, 25, true);
  SvmConfig cfg;
  const SvmTrainResult r = train_smo(in.x, in.y, cfg, 3);
  for (std::size_t i = 0; i < in.x.size(); ++i) {
    if (r.alpha[i] > 0 && r.alpha[i] < cfg.c) {
      EXPECT_NEAR(decision_at(r.model, in.x[i]), in.y[i], cfg.tol);
    }
  }
}

TEST(Predict, BatchEqualsSingle) {
  Rng rng(12);
  const Instance in = random_instance(rng, 30, true);
  const SvmTrainResult r = train_smo(in.x, in.y, SvmConfig{}, 4);
  const Instance probe = random_instance(rng, 15, true);
  const auto batch = predict_batch(r.model, probe.x);
  for (std::size_t i = 0; i < probe.x.size(); ++i) {
    const SvmPrediction one = predict(r.model, probe.x[i]);
    EXPECT_EQ(batch[i].decision, one.decision);
    EXPECT_EQ(batch[i].label, one.label);
  }
}

TEST(Predict, DimensionMismatchIsAnError) {
  const std::vector<std::vector<double>> x{{-1.0, 0.0}, {1.0, 0.0}};
  const std::vector<int> y{-1, 1};
  const SvmTrainResult r = train_smo(x, y, SvmConfig{}, 0);
  const std::vector<double> bad{1.0, 2.0, 3.0};
  EXPECT_THROW(predict(r.model, bad), ShapeError);
}

TEST(Predict, ZeroDecisionMapsToPositive) {
  SvmModel m;
  m.support_vectors = Matrix(1, 1, 0.0);
  m.coefficients = {0.0};
  m.standardizer = Standardizer::identity(1);
  const std::vector<double> x{5.0};
  EXPECT_EQ(predict(m, x).decision, 0.0);
  EXPECT_EQ(predict(m, x).label, 1);
}

TEST(Standardizer, ZScoresTrainingData) {
  const std::vector<std::vector<double>> x{{1.0, 10.0}, {3.0, 10.0}, {5.0, 10.0}};
  const Standardizer s = Standardizer::fit(x);
  EXPECT_EQ(s.mean[0], 3.0);
  const auto z = s.apply(x[2]);
  EXPECT_NEAR(z[0], 2.0 / std::sqrt(8.0 / 3.0), 1e-12);
  EXPECT_EQ(z[1], 0.0);
  EXPECT_TRUE(std::isfinite(z[1]));
}

TEST(SvmContainer, RoundTripIsBitExact) {
  Rng rng(13);
  const Instance in = random_instance(rng, 20, true);
  const SvmModel m = train_smo(in.x, in.y, SvmConfig{}, 1).model;
  const SvmModel back = svm_from_container(Container::parse(to_container(m).serialize()));
  EXPECT_EQ(back.support_vectors, m.support_vectors);
  EXPECT_EQ(back.coefficients, m.coefficients);
  EXPECT_EQ(back.bias, m.bias);
  EXPECT_EQ(back.gamma, m.gamma);
  EXPECT_EQ(back.standardizer.mean, m.standardizer.mean);
  EXPECT_EQ(back.standardizer.scale, m.standardizer.scale);
  for (const auto& p : in.x) EXPECT_EQ(predict(back, p).decision, predict(m, p).decision);
}

TEST(Smo, ConvergesOnHeavilyOverlappingClasses) {
  Rng rng(14);
  for (double c : {1.0, 10.0}) {
    Instance in;
    for (int i = 0; i < 400; ++i) {
      const int y = i % 2 ? 1 : -1;
      in.x.push_back({rng.normal() + 0.1 * y, rng.normal(), rng.normal()});
      in.y.push_back(y);
    }
    SvmConfig cfg;
    cfg.c = c;
    const SvmTrainResult r = train_smo(in.x, in.y, cfg, 5);
    EXPECT_TRUE(r.converged) << c;
    EXPECT_LE(r.kkt_violation, cfg.tol) << c;
  }
}
