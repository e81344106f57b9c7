#include "fusionkit/probe.hpp"

#include <string>
#include <vector>

#include <fmt/format.h>

#include "fusionkit/error.hpp"

namespace fusionkit::harness {

namespace {

using nlohmann::json;
using Rows = std::vector<std::vector<double>>;

const json& field(const json& req, const char* key) {
  if (!req.contains(key)) throw InvalidArgument(fmt::format("probe '{}': missing field '{}'", req.value("op", ""), key));
  return req.at(key);
}

json op_assemble(const Config& cfg, const json& req) {
  std::vector<Tweet> tweets;
  for (const json& t : field(req, "tweets")) {
    tweets.push_back({t.at("user_id").get<std::string>(), t.at("text").get<std::string>(),
                      t.at("order").get<std::int64_t>(), parse_label(t.at("label").get<std::string>())});
  }
  json out = json::array();
  for (const SuperTweet& st : assemble_supertweets(group_by_user(std::move(tweets)), cfg.assembly())) {
    out.push_back({{"user_id", st.user_id},
                   {"label", std::string(label_name(st.label))},
                   {"window_index", st.window_index},
                   {"tweet_count", st.tweet_count},
                   {"token_count", st.tokens.size()}});
  }
  return {{"supertweets", out}};
}

json op_embed(const Config& cfg, const json& req) {
  const std::size_t dim = field(req, "dim").get<std::size_t>();
  EmbeddingTable table(dim);
  for (const auto& [tok, vec] : field(req, "embeddings").items()) {
    auto v = vec.get<std::vector<double>>();
    if (v.size() != dim) throw ShapeError(fmt::format("probe 'embed': vector for '{}' has {} values", tok, v.size()));
    table.insert(tok, std::move(v));
  }
  TokenSequence tokens{field(req, "tokens").get<std::vector<std::string>>()};
  const std::uint64_t seed = field(req, "seed").get<std::uint64_t>();
  Rng rng(seed);
  const SequenceMatrix m = embed_sequence(tokens, table, rng, cfg.embed_options(seed));
  Rows rows(m.dim(), std::vector<double>(m.timesteps()));
  for (std::size_t r = 0; r < m.dim(); ++r)
    for (std::size_t c = 0; c < m.timesteps(); ++c) rows[r][c] = m.values(r, c);
  return {{"values", rows}, {"real_token_count", m.real_token_count}, {"average", average_representation(m)}};
}

json op_svm(const Config& cfg, const json& req) {
  const Rows x = field(req, "x").get<Rows>();
  const std::vector<int> y = field(req, "y").get<std::vector<int>>();
  SvmConfig sc = cfg.svm();
  if (req.contains("c")) sc.c = req.at("c").get<double>();
  if (req.contains("gamma")) sc.gamma = req.at("gamma").get<double>();
  if (req.contains("tol")) sc.tol = req.at("tol").get<double>();
  if (req.contains("standardize")) sc.standardize = req.at("standardize").get<bool>();
  const SvmTrainResult r = train_smo(x, y, sc, field(req, "seed").get<std::uint64_t>());
  return {{"alpha", r.alpha},
          {"dual_objective", r.dual_objective},
          {"kkt_violation", r.kkt_violation},
          {"converged", r.converged},
          {"bias", r.model.bias},
          {"tol", sc.tol},
          {"gamma", r.model.gamma}};
}

json op_kmeans(const Config& cfg, const json& req) {
  const Rows points = field(req, "points").get<Rows>();
  KMeansConfig kc;
  kc.k = field(req, "k").get<std::size_t>();
  kc.restarts = req.value("restarts", cfg.at("cluster.restarts").get<std::size_t>());
  kc.max_iter = cfg.at("cluster.max_iter").get<std::size_t>();
  kc.plus_plus = cfg.at("cluster.plus_plus").get<bool>();
  kc.seed = field(req, "seed").get<std::uint64_t>();
  const ClusterModel m = kmeans(points, kc);
  return {{"inertia", m.inertia}, {"assignment", m.assignment}, {"restart", m.restart}};
}

json op_score_test(const json& req) {
  json out = json::array();
  for (const json& t : field(req, "tuples")) {
    const auto v = t.get<std::vector<std::size_t>>();
    if (v.size() != 4) throw InvalidArgument("probe 'score_test': each tuple is [n1, x1, n2, x2]");
    const ScoreTestResult r = score_test(v[0], v[1], v[2], v[3]);
    out.push_back({{"z", r.z}, {"p", r.p}});
  }
  return {{"results", out}};
}

json run_one(const Config& cfg, const json& req) {
  if (!req.is_object()) throw InvalidArgument("probe: each request must be a JSON object");
  const std::string op = field(req, "op").get<std::string>();
  if (op == "tokenize") {
    json out = json::array();
    for (const json& t : field(req, "texts")) out.push_back(tokenize(t.get<std::string>()).tokens);
    return {{"tokens", out}};
  }
  if (op == "assemble") return op_assemble(cfg, req);
  if (op == "embed") return op_embed(cfg, req);
  if (op == "maxpool") {
    const auto v = field(req, "vector").get<std::vector<double>>();
    return {{"reduced", maxpool_reduce(v, cfg.at("visual.window").get<std::size_t>(),
                                       cfg.at("visual.stride").get<std::size_t>())}};
  }
  if (op == "svm") return op_svm(cfg, req);
  if (op == "kmeans") return op_kmeans(cfg, req);
  if (op == "silhouette") {
    const Rows points = field(req, "points").get<Rows>();
    const auto assignment = field(req, "assignment").get<std::vector<std::size_t>>();
    const SilhouetteResult s = silhouette(points, assignment);
    return {{"mean", s.mean}, {"per_point", s.per_point}};
  }
  if (op == "score_test") return op_score_test(req);
  if (op == "config") return cfg.doc();
  throw InvalidArgument(fmt::format("probe: unknown op '{}'", op));
}

}  // namespace

json run_probe(const Config& cfg, const json& request) {
  if (!request.is_array()) return run_one(cfg, request);
  json out = json::array();
  for (const json& r : request) out.push_back(run_one(cfg, r));
  return out;
}

}  // namespace fusionkit::harness
