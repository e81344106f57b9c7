#include "fusionkit/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>
#include <utility>

#include <fmt/format.h>

#include "fusionkit/error.hpp"
#include "fusionkit/log.hpp"
#include "fusionkit/rng.hpp"

namespace fusionkit::harness {

namespace {

using json = nlohmann::json;

json default_doc() {
  json doc = json::parse(R"({
    "seed": 0,
    "data": {
      "dir": ".",
      "tweets": "tweets.jsonl",
      "features": "features.tsv",
      "users": "users.tsv",
      "embeddings": "embeddings.d{dim}.txt",
      "feature_dim": 1000
    },
    "text": {
      "group_size": 20,
      "min_tokens": 100,
      "timesteps": 150,
      "oov_policy": "skip",
      "padding_variance": 0.1
    },
    "split": {
      "mode": "fraction",
      "train": 0.8,
      "val": 0.1,
      "test": 0.1,
      "balance_tolerance": 0.1
    },
    "lstm": { "hidden_dim": 100, "embedding_dim": 25, "pooling": "mean" },
    "train": {
      "optimizer": "adam",
      "learning_rate": 0.001,
      "batch_size": 32,
      "epochs": 10,
      "clip_norm": 5.0,
      "patience": 3
    },
    "svm": {
      "c": 1.0,
      "gamma": null,
      "tol": 0.001,
      "max_passes": 1000,
      "standardize": true,
      "max_train": 4000
    },
    "fusion": {
      "train_pairing": "random-one",
      "eval_pairing": "random-one",
      "missing_visual": "exclude",
      "freeze_visual": false,
      "warm_start": false
    },
    "visual": { "window": 10, "stride": 10 },
    "cluster": {
      "kind": "posted",
      "k": 0,
      "k_min": 2,
      "k_max": 10,
      "restarts": 10,
      "max_iter": 300,
      "plus_plus": true,
      "standardize": false,
      "alpha": 0.05
    },
    "grid": {
      "families": ["svm-profile", "svm-pictures", "svm-text", "lstm", "fusion"],
      "hidden": [100, 200],
      "embedding": [25, 50],
      "pooling": ["last", "mean"]
    }
  })");
  json synth = SynthConfig{}.to_json();
  synth.erase("seed");
  doc["synth"] = synth;
  return doc;
}

const json& defaults_cached() {
  static const json doc = default_doc();
  return doc;
}

std::string type_label(const json& def) {
  if (def.is_null()) return "a number or null";
  if (def.is_number_float()) return "a number";
  if (def.is_number()) return "a non-negative integer";
  if (def.is_string()) return "a string";
  if (def.is_boolean()) return "a boolean";
  if (def.is_array()) return "an array";
  return "an object";
}

bool compatible(const json& def, const json& v) {
  if (def.is_null()) return v.is_null() || v.is_number();
  if (def.is_number_float()) return v.is_number();
  if (def.is_number()) return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  if (def.is_string()) return v.is_string();
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_array()) {
    if (!v.is_array()) return false;
    if (def.empty()) return true;
    return std::all_of(v.begin(), v.end(), [&](const json& e) { return compatible(def.front(), e); });
  }
  return v.is_object();
}

void merge_checked(const json& def, json& target, const json& src, const std::string& prefix) {
  if (!src.is_object()) throw InvalidArgument(fmt::format("config '{}' must be an object", prefix.empty() ? "<root>" : prefix));
  for (const auto& [key, value] : src.items()) {
    const std::string dotted = prefix.empty() ? key : prefix + "." + key;
    if (!def.contains(key)) throw InvalidArgument(fmt::format("unknown config key '{}'", dotted));
    const json& d = def.at(key);
    if (d.is_object()) {
      merge_checked(d, target[key], value, dotted);
    } else {
      if (!compatible(d, value)) {
        throw InvalidArgument(fmt::format("config key '{}' expects {}", dotted, type_label(d)));
      }
      target[key] = value;
    }
  }
}

std::vector<std::string> split_dotted(std::string_view dotted) {
  std::vector<std::string> parts;
  std::size_t from = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', from);
    parts.emplace_back(dotted.substr(from, dot == std::string_view::npos ? dotted.npos : dot - from));
    if (dot == std::string_view::npos) break;
    from = dot + 1;
  }
  return parts;
}

std::size_t round_half_up(double x) { return static_cast<std::size_t>(std::floor(x + 0.5 + 1e-9)); }

int svm_label(Label l) { return l == Label::A ? 1 : -1; }
Label from_svm_label(int y) { return y > 0 ? Label::A : Label::B; }

json evaluation_json(const Evaluation& e) {
  return {{"accuracy", e.accuracy},
          {"total", e.total},
          {"confusion", {{e.confusion[0][0], e.confusion[0][1]}, {e.confusion[1][0], e.confusion[1][1]}}}};
}

json train_log_json(const TrainLog& log) {
  json epochs = json::array();
  for (const auto& e : log.epochs) {
    epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_accuracy", e.val_accuracy}});
  }
  return {{"epochs", epochs},
          {"best_epoch", log.best_epoch},
          {"best_val_accuracy", log.best_val_accuracy},
          {"early_stopped", log.early_stopped}};
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, Label> load_groups(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot open group file {}", path.string()));
  std::map<std::string, Label> groups;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(path.string(), line_no, "expected user_id<TAB>label");
    try {
      groups[line.substr(0, tab)] = parse_label(std::string_view(line).substr(tab + 1));
    } catch (const InvalidArgument& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
  return groups;
}

std::string sequence_key(const SuperTweet& st) { return fmt::format("{}/{}", st.user_id, st.window_index); }

}  // namespace

// ---------------------------------------------------------------- families

ModelFamily parse_family(std::string_view s) {
  for (ModelFamily f : all_families())
    if (family_name(f) == s) return f;
  throw InvalidArgument(
      fmt::format("unknown model family '{}' (expected lstm, svm-text, svm-profile, svm-pictures or fusion)", s));
}

std::string_view family_name(ModelFamily f) noexcept {
  switch (f) {
    case ModelFamily::lstm: return "lstm";
    case ModelFamily::svm_text: return "svm-text";
    case ModelFamily::svm_profile: return "svm-profile";
    case ModelFamily::svm_pictures: return "svm-pictures";
    case ModelFamily::fusion: return "fusion";
  }
  return "?";
}

bool is_svm(ModelFamily f) noexcept {
  return f == ModelFamily::svm_text || f == ModelFamily::svm_profile || f == ModelFamily::svm_pictures;
}

const std::vector<ModelFamily>& all_families() {
  static const std::vector<ModelFamily> order{ModelFamily::svm_profile, ModelFamily::svm_pictures,
                                              ModelFamily::svm_text, ModelFamily::lstm, ModelFamily::fusion};
  return order;
}

// ------------------------------------------------------------------ config

Config Config::defaults() {
  Config c;
  c.doc_ = defaults_cached();
  return c;
}

Config Config::from_json(const json& overrides, std::filesystem::path base_dir) {
  Config c = defaults();
  c.base_dir_ = std::move(base_dir);
  merge_checked(defaults_cached(), c.doc_, overrides, "");
  // Surface semantic errors (bad enum names, impossible values) at load time.
  (void)c.assembly();
  (void)c.embed_options(0);
  (void)c.train(0);
  (void)c.svm();
  (void)c.synth(0);
  parse_pooling(c.at("lstm.pooling").get<std::string>());
  parse_pairing_policy(c.at("fusion.train_pairing").get<std::string>());
  parse_pairing_policy(c.at("fusion.eval_pairing").get<std::string>());
  parse_image_kind(c.at("cluster.kind").get<std::string>());
  const std::string missing = c.at("fusion.missing_visual").get<std::string>();
  if (missing != "exclude" && missing != "zero") {
    throw InvalidArgument("config key 'fusion.missing_visual' must be 'exclude' or 'zero'");
  }
  for (const auto& f : c.at("grid.families")) parse_family(f.get<std::string>());
  for (const auto& p : c.at("grid.pooling")) parse_pooling(p.get<std::string>());
  const std::string mode = c.at("split.mode").get<std::string>();
  if (mode != "fraction" && mode != "count") throw InvalidArgument("config key 'split.mode' must be 'fraction' or 'count'");
  if (mode == "fraction") {
    const double tr = c.at("split.train").get<double>(), va = c.at("split.val").get<double>(),
                 te = c.at("split.test").get<double>();
    if (tr < 0 || va < 0 || te < 0 || std::abs(tr + va + te - 1.0) > 1e-9) {
      throw InvalidArgument("split fractions must be non-negative and sum to 1");
    }
  }
  if (c.at("cluster.k_min").get<std::size_t>() < 2 || c.at("cluster.k_max").get<std::size_t>() < c.at("cluster.k_min").get<std::size_t>()) {
    throw InvalidArgument("cluster k range must satisfy 2 <= k_min <= k_max");
  }
  if (c.at("visual.window").get<std::size_t>() == 0 || c.at("visual.stride").get<std::size_t>() == 0) {
    throw InvalidArgument("visual window and stride must be positive");
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  json overrides;
  try {
    overrides = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  try {
    return from_json(overrides, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void Config::set(std::string_view dotted_key, json value) {
  const auto parts = split_dotted(dotted_key);
  json patch = std::move(value);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, std::move(patch)}};
  json next = doc_;
  merge_checked(defaults_cached(), next, patch, "");
  *this = from_json(next, base_dir_);
}

const json& Config::at(std::string_view dotted_key) const {
  const json* node = &doc_;
  for (const auto& part : split_dotted(dotted_key)) {
    if (!node->is_object() || !node->contains(part)) {
      throw InvalidArgument(fmt::format("unknown config key '{}'", dotted_key));
    }
    node = &node->at(part);
  }
  return *node;
}

std::uint64_t Config::seed() const { return at("seed").get<std::uint64_t>(); }

std::string Config::hash() const { return fmt::format("{:016x}", fnv1a(doc_.dump())); }

std::filesystem::path Config::data_path(std::string_view key) const {
  return base_dir_ / at("data.dir").get<std::string>() / at(fmt::format("data.{}", key)).get<std::string>();
}

std::filesystem::path Config::embedding_path(std::size_t dim) const {
  std::string pattern = at("data.embeddings").get<std::string>();
  const std::string token = "{dim}";
  if (const auto pos = pattern.find(token); pos != std::string::npos) pattern.replace(pos, token.size(), std::to_string(dim));
  return base_dir_ / at("data.dir").get<std::string>() / pattern;
}

AssemblyConfig Config::assembly() const {
  AssemblyConfig a;
  a.group_size = at("text.group_size").get<std::size_t>();
  a.min_tokens = at("text.min_tokens").get<std::size_t>();
  if (a.group_size == 0) throw InvalidArgument("config key 'text.group_size' must be positive");
  return a;
}

EmbedOptions Config::embed_options(std::uint64_t seed) const {
  EmbedOptions o;
  o.timesteps = at("text.timesteps").get<std::size_t>();
  o.oov_policy = parse_oov_policy(at("text.oov_policy").get<std::string>());
  o.oov_seed = derive_seed(seed, "oov");
  o.padding_variance = at("text.padding_variance").get<double>();
  if (o.timesteps == 0) throw InvalidArgument("config key 'text.timesteps' must be positive");
  if (!(o.padding_variance >= 0.0)) throw InvalidArgument("config key 'text.padding_variance' must be non-negative");
  return o;
}

TrainConfig Config::train(std::uint64_t seed) const {
  TrainConfig t;
  t.optimizer = parse_optimizer(at("train.optimizer").get<std::string>());
  t.learning_rate = at("train.learning_rate").get<double>();
  t.batch_size = at("train.batch_size").get<std::size_t>();
  t.epochs = at("train.epochs").get<std::size_t>();
  t.clip_norm = at("train.clip_norm").get<double>();
  t.patience = at("train.patience").get<std::size_t>();
  t.seed = seed;
  t.validate();
  return t;
}

SvmConfig Config::svm() const {
  SvmConfig s;
  s.c = at("svm.c").get<double>();
  if (const json& g = at("svm.gamma"); !g.is_null()) s.gamma = g.get<double>();
  s.tol = at("svm.tol").get<double>();
  s.max_passes = at("svm.max_passes").get<std::size_t>();
  s.standardize = at("svm.standardize").get<bool>();
  s.validate();
  return s;
}

SynthConfig Config::synth(std::uint64_t seed) const {
  SynthConfig s = SynthConfig::from_json(at("synth"));
  s.seed = seed;
  return s;
}

json provenance(const Config& cfg, std::uint64_t seed) {
  return {{"seed", seed}, {"config_hash", cfg.hash()}, {"version", FUSIONKIT_VERSION}};
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out << content;
  if (!out) throw Error(fmt::format("write failed for {}", path.string()));
}

// ------------------------------------------------------------------ prepare

std::string_view split_name(Split s) noexcept {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw InvalidArgument(fmt::format("unknown split '{}'", s));
}

Split PreparedData::split_of(const std::string& user_id) const {
  const auto it = users.find(user_id);
  if (it == users.end()) throw InvalidArgument(fmt::format("user '{}' has no split assignment", user_id));
  return it->second;
}

std::array<std::array<std::size_t, 2>, 3> PreparedData::counts() const {
  std::array<std::array<std::size_t, 2>, 3> c{};
  for (const auto& st : supertweets) ++c[static_cast<int>(split_of(st.user_id))][label_index(st.label)];
  return c;
}

PreparedData prepare(const Config& cfg, std::uint64_t seed) {
  const auto timelines = group_by_user(load_tweets(cfg.data_path("tweets")));
  PreparedData d;
  d.seed = seed;
  d.config_hash = cfg.hash();
  d.supertweets = assemble_supertweets(timelines, cfg.assembly());

  std::array<std::vector<std::string>, 2> by_class;
  for (const auto& t : timelines) {
    d.user_labels[t.user_id] = t.label;
    by_class[label_index(t.label)].push_back(t.user_id);
  }
  const std::size_t n_users = timelines.size();
  const bool by_fraction = cfg.at("split.mode").get<std::string>() == "fraction";
  for (int c = 0; c < 2; ++c) {
    auto& ids = by_class[c];
    Rng rng(derive_seed(seed, fmt::format("split/{}", label_name(static_cast<Label>(c)))));
    rng.shuffle(ids);
    const std::size_t n = ids.size();
    std::size_t n_train = 0, n_val = 0;
    if (by_fraction) {
      n_train = std::min(n, round_half_up(cfg.at("split.train").get<double>() * static_cast<double>(n)));
      n_val = std::min(n - n_train, round_half_up(cfg.at("split.val").get<double>() * static_cast<double>(n)));
    } else {
      const double share = n_users ? static_cast<double>(n) / static_cast<double>(n_users) : 0.0;
      n_val = round_half_up(cfg.at("split.val").get<double>() * share);
      const std::size_t n_test = round_half_up(cfg.at("split.test").get<double>() * share);
      if (n_val + n_test > n) {
        throw InvalidArgument(fmt::format("split counts need {} users of class {}, only {} exist", n_val + n_test,
                                          label_name(static_cast<Label>(c)), n));
      }
      n_train = n - n_val - n_test;
    }
    for (std::size_t i = 0; i < n; ++i) {
      d.users[ids[i]] = i < n_train ? Split::train : (i < n_train + n_val ? Split::val : Split::test);
    }
  }

  const auto counts = d.counts();
  const std::size_t total = d.supertweets.size();
  if (total > 0) {
    std::size_t total_a = 0;
    for (const auto& row : counts) total_a += row[0];
    const double overall = static_cast<double>(total_a) / static_cast<double>(total);
    const double tol = cfg.at("split.balance_tolerance").get<double>();
    for (int s = 0; s < 3; ++s) {
      const std::size_t n = counts[s][0] + counts[s][1];
      if (n == 0) continue;
      const double share = static_cast<double>(counts[s][0]) / static_cast<double>(n);
      if (std::abs(share - overall) > tol) {
        throw InvalidArgument(fmt::format("split '{}' has class-A share {:.3f}, corpus share {:.3f}, tolerance {}",
                                          split_name(static_cast<Split>(s)), share, overall, tol));
      }
    }
  }
  return d;
}

void write_prepared(const PreparedData& data, const std::filesystem::path& dir) {
  std::string lines;
  for (const auto& st : data.supertweets) {
    json rec{{"user_id", st.user_id},
             {"label", std::string(label_name(st.label))},
             {"split", std::string(split_name(data.split_of(st.user_id)))},
             {"window", st.window_index},
             {"tweet_count", st.tweet_count},
             {"tokens", st.tokens.tokens}};
    lines += rec.dump();
    lines += '\n';
  }
  write_text_file(dir / "supertweets.jsonl", lines);

  json users = json::object();
  for (const auto& [id, split] : data.users) {
    users[id] = {{"split", std::string(split_name(split))}, {"label", std::string(label_name(data.user_labels.at(id)))}};
  }
  const auto counts = data.counts();
  json count_json = json::object();
  for (int s = 0; s < 3; ++s) {
    count_json[std::string(split_name(static_cast<Split>(s)))] = {{"A", counts[s][0]}, {"B", counts[s][1]}};
  }
  json splits{{"seed", data.seed},
              {"config_hash", data.config_hash},
              {"version", FUSIONKIT_VERSION},
              {"supertweets", data.supertweets.size()},
              {"counts", count_json},
              {"users", users}};
  write_text_file(dir / "splits.json", splits.dump(2) + "\n");
}

PreparedData read_prepared(const std::filesystem::path& dir) {
  PreparedData d;
  const auto splits_path = dir / "splits.json";
  json splits;
  try {
    splits = json::parse(read_file(splits_path));
    d.seed = splits.at("seed").get<std::uint64_t>();
    d.config_hash = splits.at("config_hash").get<std::string>();
    for (const auto& [id, entry] : splits.at("users").items()) {
      d.users[id] = parse_split(entry.at("split").get<std::string>());
      d.user_labels[id] = parse_label(entry.at("label").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw ParseError(splits_path.string(), 0, e.what());
  }

  const auto st_path = dir / "supertweets.jsonl";
  std::ifstream in(st_path);
  if (!in) throw Error(fmt::format("cannot open {}", st_path.string()));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      SuperTweet st;
      st.user_id = rec.at("user_id").get<std::string>();
      st.label = parse_label(rec.at("label").get<std::string>());
      st.window_index = rec.at("window").get<std::size_t>();
      st.tweet_count = rec.at("tweet_count").get<std::size_t>();
      st.tokens.tokens = rec.at("tokens").get<std::vector<std::string>>();
      if (!d.users.count(st.user_id)) throw InvalidArgument(fmt::format("user '{}' missing from splits.json", st.user_id));
      d.supertweets.push_back(std::move(st));
    } catch (const json::exception& e) {
      throw ParseError(st_path.string(), line_no, e.what());
    } catch (const InvalidArgument& e) {
      throw ParseError(st_path.string(), line_no, e.what());
    }
  }
  return d;
}

// -------------------------------------------------------------- experiments

json ExperimentSpec::to_json() const {
  json j{{"family", std::string(family_name(family))}, {"seed", seed}};
  if (!is_svm(family)) {
    j["hidden"] = hidden;
    j["pooling"] = std::string(pooling_name(pooling));
  }
  if (family != ModelFamily::svm_profile && family != ModelFamily::svm_pictures) j["embedding"] = embedding;
  return j;
}

ExperimentSpec ExperimentSpec::from_json(const json& j) {
  ExperimentSpec s;
  s.family = parse_family(j.at("family").get<std::string>());
  s.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("hidden")) s.hidden = j["hidden"].get<std::size_t>();
  if (j.contains("embedding")) s.embedding = j["embedding"].get<std::size_t>();
  if (j.contains("pooling")) s.pooling = parse_pooling(j["pooling"].get<std::string>());
  return s;
}

namespace {

using SequencePtr = std::shared_ptr<const SequenceMatrix>;
using Pool = std::shared_ptr<const std::vector<std::vector<double>>>;

struct SvmSets {
  std::array<std::vector<std::vector<double>>, 3> x;
  std::array<std::vector<int>, 3> y;
};

Evaluation svm_evaluate(const SvmModel& model, const std::vector<std::vector<double>>& x, const std::vector<int>& y) {
  std::vector<Label> truth, pred;
  const auto predictions = predict_batch(model, x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    truth.push_back(from_svm_label(y[i]));
    pred.push_back(from_svm_label(predictions[i].label));
  }
  return evaluate_predictions(truth, pred);
}

}  // namespace

struct Workspace::Impl {
  Config cfg;
  PreparedData data;
  std::map<std::size_t, EmbeddingTable> tables;
  std::optional<std::vector<FeatureRecord>> records;
  std::map<ImageKind, std::map<std::string, Pool>> reduced;
  std::optional<std::pair<std::size_t, std::uint64_t>> sequence_key_cached;
  std::vector<SequencePtr> sequences_cached;

  const EmbeddingTable& table(std::size_t dim) {
    auto it = tables.find(dim);
    if (it == tables.end()) it = tables.emplace(dim, load_embeddings(cfg.embedding_path(dim), dim)).first;
    return it->second;
  }

  const std::vector<SequencePtr>& sequences(std::size_t dim, std::uint64_t seed) {
    const auto key = std::make_pair(dim, seed);
    if (sequence_key_cached == key) return sequences_cached;
    sequences_cached.clear();
    sequence_key_cached.reset();
    const EmbeddingTable& t = table(dim);
    const EmbedOptions opts = cfg.embed_options(seed);
    const std::uint64_t padding_seed = derive_seed(seed, "padding");
    sequences_cached.reserve(data.supertweets.size());
    for (const auto& st : data.supertweets) {
      Rng rng(derive_seed(padding_seed, sequence_key(st)));
      sequences_cached.push_back(std::make_shared<const SequenceMatrix>(embed_sequence(st.tokens, t, rng, opts)));
    }
    sequence_key_cached = key;
    return sequences_cached;
  }

  const std::map<std::string, Pool>& reduced_by_user(ImageKind kind) {
    if (auto it = reduced.find(kind); it != reduced.end()) return it->second;
    if (!records) records = load_features(cfg.data_path("features"), cfg.at("data.feature_dim").get<std::size_t>());
    std::map<std::string, Pool> out;
    for (auto& [user, vecs] :
         reduce_by_user(*records, kind, cfg.at("visual.window").get<std::size_t>(), cfg.at("visual.stride").get<std::size_t>())) {
      out.emplace(user, std::make_shared<const std::vector<std::vector<double>>>(std::move(vecs)));
    }
    return reduced.emplace(kind, std::move(out)).first->second;
  }

  std::array<std::vector<LabeledSequence>, 3> lstm_sets(const ExperimentSpec& spec) {
    const auto& seqs = sequences(spec.embedding, spec.seed);
    std::array<std::vector<LabeledSequence>, 3> sets;
    for (std::size_t i = 0; i < data.supertweets.size(); ++i) {
      const auto& st = data.supertweets[i];
      sets[static_cast<int>(data.split_of(st.user_id))].push_back({seqs[i], st.label});
    }
    return sets;
  }

  std::array<std::vector<FusionExample>, 3> fusion_sets(const ExperimentSpec& spec, std::size_t& visual_dim,
                                                        std::size_t& excluded) {
    const auto& seqs = sequences(spec.embedding, spec.seed);
    const auto& pools = reduced_by_user(ImageKind::posted);
    if (pools.empty()) throw InvalidArgument("fusion needs posted-picture features, none were found");
    visual_dim = pools.begin()->second->front().size();
    const bool zero_fill = cfg.at("fusion.missing_visual").get<std::string>() == "zero";
    const PairingPolicy eval_policy = parse_pairing_policy(cfg.at("fusion.eval_pairing").get<std::string>());
    const std::uint64_t pairing_seed = derive_seed(spec.seed, "eval-pairing");
    excluded = 0;
    std::array<std::vector<FusionExample>, 3> sets;
    for (std::size_t i = 0; i < data.supertweets.size(); ++i) {
      const auto& st = data.supertweets[i];
      FusionExample ex;
      ex.sequence = seqs[i];
      ex.label = st.label;
      if (const auto it = pools.find(st.user_id); it != pools.end()) {
        ex.visual_pool = it->second;
        ex.visual = *user_visual_feature(*it->second, eval_policy, derive_seed(pairing_seed, sequence_key(st)));
      } else if (zero_fill) {
        ex.visual.assign(visual_dim, 0.0);
      } else {
        ++excluded;
        continue;
      }
      sets[static_cast<int>(data.split_of(st.user_id))].push_back(std::move(ex));
    }
    return sets;
  }

  SvmSets svm_sets(const ExperimentSpec& spec) {
    SvmSets s;
    auto add = [&](const std::string& user, std::vector<double> v) {
      const int split = static_cast<int>(data.split_of(user));
      s.x[split].push_back(std::move(v));
      s.y[split].push_back(svm_label(data.user_labels.at(user)));
    };
    switch (spec.family) {
      case ModelFamily::svm_text: {
        const auto& seqs = sequences(spec.embedding, spec.seed);
        for (std::size_t i = 0; i < data.supertweets.size(); ++i) {
          add(data.supertweets[i].user_id, average_representation(*seqs[i]));
        }
        break;
      }
      case ModelFamily::svm_profile:
        for (const auto& [user, pool] : reduced_by_user(ImageKind::profile)) {
          if (!data.users.count(user)) continue;
          add(user, *user_visual_feature(*pool, PairingPolicy::mean, 0));
        }
        break;
      case ModelFamily::svm_pictures:
        for (const auto& [user, pool] : reduced_by_user(ImageKind::posted)) {
          if (!data.users.count(user)) continue;
          for (const auto& v : *pool) add(user, v);
        }
        break;
      default: throw InvalidArgument("not an svm family");
    }
    return s;
  }

  Container wrap(const ExperimentSpec& spec, Container inner) const {
    Container c("model");
    c.set("family", std::string(family_name(spec.family)));
    c.set("spec", spec.to_json().dump());
    c.set("seed", static_cast<std::size_t>(spec.seed));
    c.set("config_hash", cfg.hash());
    c.set("version", std::string(FUSIONKIT_VERSION));
    c.add_child(std::move(inner));
    return c;
  }

  RunResult run(const ExperimentSpec& spec) {
    RunResult r;
    r.spec = spec;
    json log = provenance(cfg, spec.seed);
    log["spec"] = spec.to_json();
    log["prepared"] = {{"seed", data.seed}, {"config_hash", data.config_hash}};
    const TrainConfig tcfg = cfg.train(spec.seed);
    const LstmConfig lcfg{spec.embedding, spec.hidden, spec.pooling, cfg.at("text.timesteps").get<std::size_t>(), 2};

    if (spec.family == ModelFamily::lstm) {
      auto sets = lstm_sets(spec);
      if (sets[2].empty()) throw InvalidArgument("no test examples");
      auto res = train_lstm(sets[0], sets[1], tcfg, lcfg);
      r.test = fusionkit::evaluate(res.model, sets[2]);
      r.val_accuracy = res.log.best_val_accuracy;
      log["counts"] = {{"train", sets[0].size()}, {"val", sets[1].size()}, {"test", sets[2].size()}};
      log["training"] = train_log_json(res.log);
      r.model = wrap(spec, to_container(res.model));
    } else if (spec.family == ModelFamily::fusion) {
      std::size_t visual_dim = 0, excluded = 0;
      auto sets = fusion_sets(spec, visual_dim, excluded);
      if (sets[2].empty()) throw InvalidArgument("no test examples");
      FusionOptions opts;
      opts.train_pairing = parse_pairing_policy(cfg.at("fusion.train_pairing").get<std::string>());
      opts.freeze_visual = cfg.at("fusion.freeze_visual").get<bool>();
      if (cfg.at("fusion.warm_start").get<bool>()) {
        std::vector<LabeledSequence> train_text, val_text;
        for (const auto& ex : sets[0]) train_text.push_back({ex.sequence, ex.label});
        for (const auto& ex : sets[1]) val_text.push_back({ex.sequence, ex.label});
        opts.warm_start = train_lstm(train_text, val_text, tcfg, lcfg).model;
      }
      auto res = train_fusion(sets[0], sets[1], tcfg, lcfg, opts);
      r.test = fusionkit::evaluate(res.model, sets[2]);
      r.val_accuracy = res.log.best_val_accuracy;
      log["counts"] = {{"train", sets[0].size()}, {"val", sets[1].size()}, {"test", sets[2].size()},
                       {"excluded_missing_visual", excluded}};
      log["training"] = train_log_json(res.log);
      r.model = wrap(spec, to_container(res.model));
    } else {
      SvmSets sets = svm_sets(spec);
      if (sets.x[2].empty()) throw InvalidArgument("no test examples");
      std::vector<std::vector<double>> x = sets.x[0];
      std::vector<int> y = sets.y[0];
      const std::size_t cap = cfg.at("svm.max_train").get<std::size_t>();
      if (cap > 0 && x.size() > cap) {
        std::vector<std::size_t> idx(x.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        Rng rng(derive_seed(spec.seed, "svm-subsample"));
        rng.shuffle(idx);
        idx.resize(cap);
        std::sort(idx.begin(), idx.end());
        std::vector<std::vector<double>> xs;
        std::vector<int> ys;
        for (std::size_t i : idx) {
          xs.push_back(std::move(x[i]));
          ys.push_back(y[i]);
        }
        x = std::move(xs);
        y = std::move(ys);
      }
      std::vector<Label> labels;
      for (int v : y) labels.push_back(from_svm_label(v));
      require_both_classes(labels, "svm training set");
      auto res = train_smo(x, y, cfg.svm(), derive_seed(spec.seed, "smo"));
      r.test = svm_evaluate(res.model, sets.x[2], sets.y[2]);
      if (!sets.x[1].empty()) r.val_accuracy = svm_evaluate(res.model, sets.x[1], sets.y[1]).accuracy;
      log["counts"] = {{"train", x.size()}, {"train_available", sets.x[0].size()}, {"val", sets.x[1].size()},
                       {"test", sets.x[2].size()}};
      log["training"] = {{"passes", res.passes},
                         {"updates", res.updates},
                         {"support_vectors", res.model.coefficients.size()},
                         {"dual_objective", res.dual_objective},
                         {"kkt_violation", res.kkt_violation},
                         {"converged", res.converged},
                         {"tol", res.model.tol},
                         {"gamma", res.model.gamma}};
      r.model = wrap(spec, to_container(res.model));
    }
    log["test"] = evaluation_json(r.test);
    log["val_accuracy"] = r.val_accuracy ? json(*r.val_accuracy) : json(nullptr);
    r.log = std::move(log);
    return r;
  }

  Evaluation evaluate(const Container& model) {
    model.expect_kind("model");
    const ExperimentSpec spec = ExperimentSpec::from_json(json::parse(model.get("spec")));
    if (model.get("config_hash") != cfg.hash()) {
      log_warning(fmt::format("model was trained under config {}, evaluating under {}", model.get("config_hash"),
                              cfg.hash()));
    }
    switch (spec.family) {
      case ModelFamily::lstm: {
        const LstmModel m = lstm_from_container(model.child("lstm"));
        return fusionkit::evaluate(m, lstm_sets(spec)[2]);
      }
      case ModelFamily::fusion: {
        const FusionModel m = fusion_from_container(model.child("fusion"));
        std::size_t visual_dim = 0, excluded = 0;
        return fusionkit::evaluate(m, fusion_sets(spec, visual_dim, excluded)[2]);
      }
      default: {
        const SvmModel m = svm_from_container(model.child("svm"));
        const SvmSets sets = svm_sets(spec);
        return svm_evaluate(m, sets.x[2], sets.y[2]);
      }
    }
  }
};

Workspace::Workspace(Config cfg, PreparedData data) : impl_(std::make_unique<Impl>()) {
  impl_->cfg = std::move(cfg);
  impl_->data = std::move(data);
}
Workspace::~Workspace() = default;
Workspace::Workspace(Workspace&&) noexcept = default;
Workspace& Workspace::operator=(Workspace&&) noexcept = default;

const Config& Workspace::config() const noexcept { return impl_->cfg; }
const PreparedData& Workspace::data() const noexcept { return impl_->data; }
RunResult Workspace::run(const ExperimentSpec& spec) { return impl_->run(spec); }
Evaluation Workspace::evaluate(const Container& model) { return impl_->evaluate(model); }

// --------------------------------------------------------------------- grid

std::vector<ExperimentSpec> grid_specs(const Config& cfg, std::uint64_t seed) {
  std::vector<ExperimentSpec> specs;
  // Embedding outermost so the embedded-sequence cache is rebuilt once per dim.
  for (const auto& e : cfg.at("grid.embedding"))
    for (const auto& h : cfg.at("grid.hidden"))
      for (const auto& p : cfg.at("grid.pooling"))
        for (const auto& f : cfg.at("grid.families")) {
          specs.push_back({parse_family(f.get<std::string>()), h.get<std::size_t>(), e.get<std::size_t>(),
                           parse_pooling(p.get<std::string>()), seed});
        }
  return specs;
}

namespace {

std::string log_name(const ExperimentSpec& s) {
  switch (s.family) {
    case ModelFamily::svm_profile:
    case ModelFamily::svm_pictures: return fmt::format("{}.json", family_name(s.family));
    case ModelFamily::svm_text: return fmt::format("{}_e{}.json", family_name(s.family), s.embedding);
    default: return fmt::format("{}_h{}_e{}_{}.json", family_name(s.family), s.hidden, s.embedding, pooling_name(s.pooling));
  }
}

}  // namespace

ResultsTable run_grid(Workspace& ws, const std::vector<ExperimentSpec>& specs,
                      const std::optional<std::filesystem::path>& log_dir) {
  ResultsTable table;
  table.config_hash = ws.config().hash();
  table.seed = specs.empty() ? ws.config().seed() : specs.front().seed;
  std::set<ModelFamily> present;
  std::map<std::tuple<std::size_t, std::size_t, int>, GridRow> rows;
  std::map<std::string, std::pair<std::optional<double>, std::string>> svm_cache;

  for (const auto& spec : specs) {
    present.insert(spec.family);
    GridRow& row = rows[{spec.hidden, spec.embedding, static_cast<int>(spec.pooling)}];
    row.hidden = spec.hidden;
    row.embedding = spec.embedding;
    row.pooling = spec.pooling;
    const std::string cache_key = spec.to_json().dump();
    if (is_svm(spec.family)) {
      if (const auto it = svm_cache.find(cache_key); it != svm_cache.end()) {
        row.cells[spec.family] = it->second.first;
        if (!it->second.second.empty()) row.errors[spec.family] = it->second.second;
        continue;
      }
    }
    std::optional<double> cell;
    std::string error;
    json log;
    try {
      RunResult r = ws.run(spec);
      cell = r.test.accuracy;
      log = std::move(r.log);
    } catch (const std::exception& e) {
      error = e.what();
      log = provenance(ws.config(), spec.seed);
      log["spec"] = spec.to_json();
      log["error"] = error;
    }
    row.cells[spec.family] = cell;
    if (!error.empty()) row.errors[spec.family] = error;
    if (is_svm(spec.family)) svm_cache[cache_key] = {cell, error};
    if (log_dir) write_text_file(*log_dir / log_name(spec), log.dump(2) + "\n");
  }
  for (ModelFamily f : all_families())
    if (present.count(f)) table.families.push_back(f);
  for (auto& [key, row] : rows) table.rows.push_back(std::move(row));
  return table;
}

std::string ResultsTable::to_csv() const {
  std::string out = "hidden,embedding,pooling";
  for (ModelFamily f : families) fmt::format_to(std::back_inserter(out), ",{}", family_name(f));
  out += ",seed,config_hash\n";
  for (const auto& row : rows) {
    fmt::format_to(std::back_inserter(out), "{},{},{}", row.hidden, row.embedding, pooling_name(row.pooling));
    for (ModelFamily f : families) {
      const auto it = row.cells.find(f);
      if (it == row.cells.end()) {
        out += ",";
      } else if (!it->second) {
        out += ",error";
      } else {
        fmt::format_to(std::back_inserter(out), ",{:.6f}", *it->second);
      }
    }
    fmt::format_to(std::back_inserter(out), ",{},{}\n", seed, config_hash);
  }
  return out;
}

std::string ResultsTable::to_text() const {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"hidden", "embedding", "pooling"};
  for (ModelFamily f : families) header.emplace_back(family_name(f));
  cells.push_back(header);
  for (const auto& row : rows) {
    std::vector<std::string> line{std::to_string(row.hidden), std::to_string(row.embedding),
                                  std::string(pooling_name(row.pooling))};
    for (ModelFamily f : families) {
      const auto it = row.cells.find(f);
      if (it == row.cells.end()) line.emplace_back("-");
      else if (!it->second) line.emplace_back("error");
      else line.push_back(fmt::format("{:.2f}%", 100.0 * *it->second));
    }
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells)
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  std::string out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      if (c) out += "  ";
      out += c < 3 ? fmt::format("{:<{}}", cells[r][c], width[c]) : fmt::format("{:>{}}", cells[r][c], width[c]);
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t w : width) total += w;
      out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
    }
  }
  fmt::format_to(std::back_inserter(out), "seed {}  config {}  version {}\n", seed, config_hash, FUSIONKIT_VERSION);
  for (const auto& row : rows)
    for (const auto& [f, msg] : row.errors) {
      fmt::format_to(std::back_inserter(out), "error [{} {} {} {}]: {}\n", row.hidden, row.embedding,
                     pooling_name(row.pooling), family_name(f), msg);
    }
  return out;
}

// ----------------------------------------------------------------- clusters

json ClusterAnalysis::to_json(const Config& cfg, std::uint64_t seed) const {
  json j = provenance(cfg, seed);
  j["k"] = selection.k;
  j["silhouette"] = selection.score;
  json table = json::array();
  for (const auto& [k, s] : selection.table) table.push_back({{"k", k}, {"silhouette", s}});
  j["silhouette_by_k"] = table;
  j["inertia"] = selection.model.inertia;
  j["points"] = points;
  j["skipped"] = skipped;
  j["total_A"] = report.total_a;
  j["total_B"] = report.total_b;
  j["alpha"] = report.alpha;
  std::size_t flagged = 0;
  for (const auto& row : report.rows) flagged += row.significant != "none";
  j["significant_clusters"] = flagged;
  return j;
}

ClusterAnalysis analyze_clusters(const Config& cfg, std::uint64_t seed) {
  const auto records = load_features(cfg.data_path("features"), cfg.at("data.feature_dim").get<std::size_t>());
  std::map<std::string, Label> groups;
  if (cfg.at("data.users").get<std::string>().empty()) {
    for (const auto& t : load_tweets(cfg.data_path("tweets"))) groups.emplace(t.user_id, t.label);
  } else {
    groups = load_groups(cfg.data_path("users"));
  }
  const ImageKind kind = parse_image_kind(cfg.at("cluster.kind").get<std::string>());
  const std::size_t window = cfg.at("visual.window").get<std::size_t>();
  const std::size_t stride = cfg.at("visual.stride").get<std::size_t>();

  ClusterAnalysis a;
  std::vector<std::vector<double>> points;
  std::vector<Label> labels;
  for (const auto& r : records) {
    if (r.kind != kind) continue;
    const auto it = groups.find(r.user_id);
    if (it == groups.end()) {
      ++a.skipped;
      continue;
    }
    points.push_back(maxpool_reduce(r.vector, window, stride));
    labels.push_back(it->second);
  }
  if (a.skipped) log_warning(fmt::format("clusters: {} feature records have no group label", a.skipped));
  if (cfg.at("cluster.standardize").get<bool>() && !points.empty()) {
    const Standardizer z = Standardizer::fit(points);
    for (auto& p : points) p = z.apply(p);
  }
  a.points = points.size();

  KMeansConfig base;
  base.restarts = cfg.at("cluster.restarts").get<std::size_t>();
  base.max_iter = cfg.at("cluster.max_iter").get<std::size_t>();
  base.plus_plus = cfg.at("cluster.plus_plus").get<bool>();
  base.seed = derive_seed(seed, "kmeans");
  if (const std::size_t k = cfg.at("cluster.k").get<std::size_t>(); k > 0) {
    base.k = k;
    a.selection.k = k;
    a.selection.model = kmeans(points, base);
    if (k >= 2) a.selection.score = silhouette(points, a.selection.model.assignment).mean;
    a.selection.table.emplace_back(k, a.selection.score);
  } else {
    a.selection = select_k(points, cfg.at("cluster.k_min").get<std::size_t>(),
                           cfg.at("cluster.k_max").get<std::size_t>(), base);
  }
  a.report = build_report(a.selection.model.assignment, labels, cfg.at("cluster.alpha").get<double>());
  return a;
}

// ---------------------------------------------------------------- gradcheck

std::vector<GradCheckCase> run_gradcheck(std::uint64_t seed) {
  constexpr std::size_t kD = 3, kH = 4, kT = 5, kVisual = 6;
  Rng rng(seed);
  auto random_matrix = [&](std::size_t r, std::size_t c) {
    Matrix m(r, c);
    for (double& v : m.values()) v = rng.normal();
    return m;
  };
  auto perturb = [&](const std::vector<Matrix*>& params) {
    // Non-zero biases and a wider weight spread exercise every gradient path.
    for (Matrix* p : params)
      for (double& v : p->values()) v += rng.uniform(-0.5, 0.5);
  };
  std::vector<std::shared_ptr<const SequenceMatrix>> seqs;
  for (int b = 0; b < 2; ++b) {
    seqs.push_back(std::make_shared<const SequenceMatrix>(SequenceMatrix{random_matrix(kD, kT), kT}));
  }

  std::vector<GradCheckCase> cases;
  for (Pooling pooling : {Pooling::last, Pooling::mean}) {
    const LstmConfig lcfg{kD, kH, pooling, kT, 2};
    {
      LstmModel model = LstmModel::initialize(lcfg, rng);
      perturb(model.parameters());
      const std::vector<LabeledSequence> batch{{seqs[0], Label::A}, {seqs[1], Label::B}};
      LstmModel grad = LstmModel::zeros(lcfg);
      lstm_loss(model, batch, &grad);
      const auto point = flatten(std::as_const(model).parameters());
      const auto analytic = flatten(std::as_const(grad).parameters());
      const ScalarFunction f = [&](std::span<const double> p) {
        LstmModel m = model;
        unflatten(p, m.parameters());
        return lstm_loss(m, batch);
      };
      cases.push_back({fmt::format("lstm-{}", pooling_name(pooling)), grad_check(f, analytic, point)});
    }
    {
      FusionModel model = FusionModel::initialize(lcfg, kVisual, rng);
      perturb(model.trainable_parameters());
      std::vector<FusionExample> batch(2);
      for (int b = 0; b < 2; ++b) {
        batch[b].sequence = seqs[b];
        batch[b].label = b == 0 ? Label::A : Label::B;
        batch[b].visual.resize(kVisual);
        for (double& v : batch[b].visual) v = rng.normal();
      }
      FusionModel grad = FusionModel::zeros(lcfg, kVisual);
      fusion_loss(model, batch, &grad);
      const auto point = flatten(std::as_const(model).trainable_parameters());
      const auto analytic = flatten(std::as_const(grad).trainable_parameters());
      const ScalarFunction f = [&](std::span<const double> p) {
        FusionModel m = model;
        unflatten(p, m.trainable_parameters());
        return fusion_loss(m, batch);
      };
      cases.push_back({fmt::format("fusion-{}", pooling_name(pooling)), grad_check(f, analytic, point)});
    }
  }
  return cases;
}

}  // namespace fusionkit::harness
