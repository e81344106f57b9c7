#include <cstdint>
#include <filesystem>
#include <iostream>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "fusionkit/error.hpp"
#include "fusionkit/harness.hpp"
#include "fusionkit/probe.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fusionkit;
using namespace fusionkit::harness;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
  std::vector<std::string> sets;
};

struct ModelFlags {
  std::string family = "lstm";
  std::optional<std::size_t> hidden;
  std::optional<std::size_t> embedding;
  std::optional<std::string> pooling;
};

void add_common(CLI::App* cmd, Common& c, bool out_required) {
  cmd->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "master seed (overrides config 'seed')");
  auto* out = cmd->add_option("--out", c.out, "output directory");
  if (out_required) out->required();
  cmd->add_option("--data", c.data, "input data directory (overrides config 'data.dir')");
  cmd->add_option("--set", c.sets, "override a config key, KEY=JSON (repeatable)");
}

void add_model_flags(CLI::App* cmd, ModelFlags& m) {
  cmd->add_option("--model-family", m.family, "lstm | svm-text | svm-profile | svm-pictures | fusion");
  cmd->add_option("--hidden", m.hidden, "LSTM hidden size")->check(CLI::PositiveNumber);
  cmd->add_option("--embedding", m.embedding, "word embedding dimension")->check(CLI::PositiveNumber);
  cmd->add_option("--pooling", m.pooling, "last | mean")->check(CLI::IsMember({"last", "mean"}));
}

Config build_config(const Common& c) {
  Config cfg = c.config.empty() ? Config::defaults() : Config::load(c.config);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw InvalidArgument(fmt::format("--set expects KEY=JSON, got '{}'", kv));
    json value;
    try {
      value = json::parse(kv.substr(eq + 1));
    } catch (const json::parse_error&) {
      value = kv.substr(eq + 1);  // bare strings need no quotes
    }
    cfg.set(kv.substr(0, eq), value);
  }
  if (!c.data.empty()) cfg.set("data.dir", fs::absolute(c.data).lexically_normal().string());
  if (c.seed) cfg.set("seed", *c.seed);
  return cfg;
}

ExperimentSpec build_spec(const Config& cfg, const ModelFlags& m) {
  ExperimentSpec s;
  s.family = parse_family(m.family);
  s.hidden = m.hidden.value_or(cfg.at("lstm.hidden_dim").get<std::size_t>());
  s.embedding = m.embedding.value_or(cfg.at("lstm.embedding_dim").get<std::size_t>());
  s.pooling = parse_pooling(m.pooling.value_or(cfg.at("lstm.pooling").get<std::string>()));
  s.seed = cfg.seed();
  return s;
}

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

json evaluation_json(const Evaluation& e) {
  return {{"accuracy", e.accuracy},
          {"total", e.total},
          {"confusion", {{e.confusion[0][0], e.confusion[0][1]}, {e.confusion[1][0], e.confusion[1][1]}}}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fusionkit: text + picture follower classification experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", FUSIONKIT_VERSION);

  Common synth_c, prep_c, train_c, eval_c, grid_c, clus_c, grad_c, probe_c;
  ModelFlags train_m, grid_m;
  std::string train_prepared, eval_prepared, eval_model, grid_prepared;
  std::optional<std::size_t> clus_k;
  std::string probe_input;

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  add_common(synth, synth_c, true);

  auto* prep = app.add_subcommand("prepare", "assemble super-tweets and user-level splits");
  add_common(prep, prep_c, true);

  auto* train = app.add_subcommand("train", "train one model and score it on the test split");
  add_common(train, train_c, true);
  add_model_flags(train, train_m);
  train->add_option("--prepared", train_prepared, "directory written by 'prepare'")->required();

  auto* eval = app.add_subcommand("eval", "score a saved model on the test split");
  add_common(eval, eval_c, true);
  eval->add_option("--model", eval_model, "model container")->required()->check(CLI::ExistingFile);
  eval->add_option("--prepared", eval_prepared, "directory written by 'prepare'")->required();

  auto* grid = app.add_subcommand("grid", "run the experiment grid");
  add_common(grid, grid_c, true);
  add_model_flags(grid, grid_m);
  grid->add_option("--prepared", grid_prepared, "directory written by 'prepare'")->required();

  auto* clus = app.add_subcommand("clusters", "cluster picture features and score-test group shares");
  add_common(clus, clus_c, true);
  clus->add_option("--k", clus_k, "fixed number of clusters (default: silhouette scan)")->check(CLI::PositiveNumber);

  auto* grad = app.add_subcommand("gradcheck", "compare BPTT gradients against finite differences");
  add_common(grad, grad_c, false);

  auto* probe = app.add_subcommand("probe", "run core routines on JSON inputs and write their raw outputs");
  add_common(probe, probe_c, true);
  probe->add_option("--input", probe_input, "JSON request (object or array of objects)")
      ->required()
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      const Config cfg = build_config(synth_c);
      const SynthFiles files = generate_corpus(cfg.synth(cfg.seed()), synth_c.out);
      std::cout << "wrote synthetic corpus to " << synth_c.out << " (" << files.embeddings.size()
                << " embedding files)\n";
    } else if (prep->parsed()) {
      const Config cfg = build_config(prep_c);
      const PreparedData data = prepare(cfg, cfg.seed());
      write_prepared(data, prep_c.out);
      const auto counts = data.counts();
      std::cout << fmt::format("{} super-tweets from {} users; train {}+{}, val {}+{}, test {}+{} (A+B)\n",
                               data.supertweets.size(), data.users.size(), counts[0][0], counts[0][1], counts[1][0],
                               counts[1][1], counts[2][0], counts[2][1]);
    } else if (train->parsed()) {
      const Config cfg = build_config(train_c);
      const ExperimentSpec spec = build_spec(cfg, train_m);
      Workspace ws(cfg, read_prepared(train_prepared));
      const RunResult r = ws.run(spec);
      const fs::path out(train_c.out);
      fs::create_directories(out);
      r.model.save(out / "model.fkc");
      write_json(out / "train_log.json", r.log);
      std::cout << fmt::format("{} test accuracy {:.4f} on {} examples\n", family_name(spec.family), r.test.accuracy,
                               r.test.total);
    } else if (eval->parsed()) {
      const Config cfg = build_config(eval_c);
      Workspace ws(cfg, read_prepared(eval_prepared));
      const Container model = Container::load(eval_model);
      const Evaluation e = ws.evaluate(model);
      json j = provenance(cfg, model.get_size("seed"));
      j["model"] = fs::path(eval_model).filename().string();
      j["model_config_hash"] = model.get("config_hash");
      j["spec"] = json::parse(model.get("spec"));
      j["test"] = evaluation_json(e);
      write_json(fs::path(eval_c.out) / "eval.json", j);
      std::cout << fmt::format("test accuracy {:.4f} on {} examples\n", e.accuracy, e.total);
    } else if (grid->parsed()) {
      Config cfg = build_config(grid_c);
      if (grid->count("--model-family")) cfg.set("grid.families", json::array({grid_m.family}));
      if (grid_m.hidden) cfg.set("grid.hidden", json::array({*grid_m.hidden}));
      if (grid_m.embedding) cfg.set("grid.embedding", json::array({*grid_m.embedding}));
      if (grid_m.pooling) cfg.set("grid.pooling", json::array({*grid_m.pooling}));
      Workspace ws(cfg, read_prepared(grid_prepared));
      const fs::path out(grid_c.out);
      const ResultsTable table = run_grid(ws, grid_specs(cfg, cfg.seed()), out / "logs");
      write_text_file(out / "results.csv", table.to_csv());
      write_text_file(out / "results.txt", table.to_text());
      std::cout << table.to_text();
    } else if (clus->parsed()) {
      Config cfg = build_config(clus_c);
      if (clus_k) cfg.set("cluster.k", *clus_k);
      const ClusterAnalysis a = analyze_clusters(cfg, cfg.seed());
      const fs::path out(clus_c.out);
      write_text_file(out / "clusters.csv", a.report.to_csv());
      write_json(out / "clusters.json", a.to_json(cfg, cfg.seed()));
      std::cout << a.report.to_csv();
    } else if (grad->parsed()) {
      const Config cfg = build_config(grad_c);
      const auto cases = run_gradcheck(cfg.seed());
      constexpr double kTolerance = 1e-4;
      json j = provenance(cfg, cfg.seed());
      j["tolerance"] = kTolerance;
      bool ok = true;
      for (const auto& c : cases) {
        const bool pass = c.result.max_relative_error <= kTolerance;
        ok = ok && pass;
        j["cases"].push_back({{"name", c.name},
                              {"max_relative_error", c.result.max_relative_error},
                              {"worst_index", c.result.worst_index},
                              {"pass", pass}});
        std::cout << fmt::format("{:<12} max relative error {:.3e}  {}\n", c.name, c.result.max_relative_error,
                                 pass ? "ok" : "FAIL");
      }
      j["pass"] = ok;
      if (!grad_c.out.empty()) write_json(fs::path(grad_c.out) / "gradcheck.json", j);
      return ok ? 0 : 1;
    } else if (probe->parsed()) {
      const Config cfg = build_config(probe_c);
      std::ifstream in(probe_input, std::ios::binary);
      json request;
      try {
        request = json::parse(in);
      } catch (const json::parse_error& e) {
        throw ParseError(probe_input, 0, e.what());
      }
      write_json(fs::path(probe_c.out) / "probe.json", run_probe(cfg, request));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
