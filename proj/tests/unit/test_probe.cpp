#include <cmath>

#include <gtest/gtest.h>

#include "fusionkit/error.hpp"
#include "fusionkit/probe.hpp"

using namespace fusionkit;
using namespace fusionkit::harness;
using nlohmann::json;

TEST(Probe, AnswersEachOpLikeTheLibrary) {
  const Config cfg = Config::defaults();
  const json out = run_probe(cfg, json::array({
                                      {{"op", "tokenize"}, {"texts", {"Hi, @you #tag"}}},
                                      {{"op", "score_test"}, {"tuples", {{10, 3, 20, 15}}}},
                                      {{"op", "maxpool"}, {"vector", std::vector<double>(25, 2.0)}},
                                      {{"op", "silhouette"}, {"points", {{0.0}, {1.0}, {5.0}}}, {"assignment", {0, 0, 1}}},
                                  }));
  ASSERT_EQ(out.size(), 4u);
  EXPECT_EQ(out[0]["tokens"][0], json(tokenize("Hi, @you #tag").tokens));
  const ScoreTestResult st = score_test(10, 3, 20, 15);
  EXPECT_EQ(out[1]["results"][0]["z"].get<double>(), st.z);
  EXPECT_EQ(out[1]["results"][0]["p"].get<double>(), st.p);
  EXPECT_EQ(out[2]["reduced"], json({2.0, 2.0}));
  const std::vector<std::vector<double>> pts{{0.0}, {1.0}, {5.0}};
  const std::vector<std::size_t> asg{0, 0, 1};
  EXPECT_EQ(out[3]["mean"].get<double>(), silhouette(pts, asg).mean);
}

TEST(Probe, SvmAndKmeansReportSolverState) {
  const Config cfg = Config::defaults();
  const json svm = run_probe(cfg, {{"op", "svm"}, {"x", {{-1.0, 0.0}, {1.0, 0.0}}}, {"y", {-1, 1}}, {"seed", 0},
                                   {"c", 10.0}, {"gamma", 0.5}, {"standardize", false}});
  EXPECT_TRUE(svm["converged"].get<bool>());
  EXPECT_NEAR(svm["alpha"][0].get<double>(), 1.0 / (1.0 - std::exp(-2.0)), 1e-6);
  EXPECT_EQ(svm["tol"].get<double>(), 1e-3);
  const json km = run_probe(cfg, {{"op", "kmeans"}, {"points", {{0.0}, {0.1}, {9.0}, {9.1}}}, {"k", 2}, {"seed", 1}});
  EXPECT_NEAR(km["inertia"].get<double>(), 0.01, 1e-12);
}

TEST(Probe, EmbedUsesConfiguredTimesteps) {
  Config cfg = Config::defaults();
  cfg.set("text.timesteps", 4);
  const json out = run_probe(cfg, {{"op", "embed"}, {"tokens", {"a", "zz"}}, {"embeddings", {{"a", {1.0, 2.0}}}},
                                   {"dim", 2}, {"seed", 3}});
  EXPECT_EQ(out["values"].size(), 2u);
  EXPECT_EQ(out["values"][0].size(), 4u);
  EXPECT_EQ(out["real_token_count"], 1);
  EXPECT_EQ(out["values"][0][0], 1.0);
  EXPECT_EQ(out["values"][1][0], 2.0);
}

TEST(Probe, RejectsUnknownOpsAndMissingFields) {
  const Config cfg = Config::defaults();
  EXPECT_THROW(run_probe(cfg, {{"op", "nope"}}), InvalidArgument);
  EXPECT_THROW(run_probe(cfg, {{"op", "maxpool"}}), InvalidArgument);
  EXPECT_THROW(run_probe(cfg, json::array({1})), InvalidArgument);
  EXPECT_THROW(run_probe(cfg, {{"op", "embed"}, {"tokens", json::array()}, {"embeddings", {{"a", {1.0}}}},
                               {"dim", 2}, {"seed", 0}}),
               ShapeError);
}
