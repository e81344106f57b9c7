#include "fusionkit/synth.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "fusionkit/error.hpp"
#include "fusionkit/rng.hpp"
#include "fusionkit/text.hpp"
#include "fusionkit/visual.hpp"

namespace fusionkit {

namespace {

std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : v) {
      x = rng.normal();
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

std::string shared_token(std::size_t i) { return fmt::format("w{:04d}", i); }
std::string exclusive_token(Label c, std::size_t i) {
  return fmt::format("x{}{:03d}", c == Label::A ? 'a' : 'b', i);
}

std::vector<double> expand_feature(std::span<const double> reduced, std::size_t window, Rng& rng) {
  std::vector<double> full(reduced.size() * window);
  for (std::size_t j = 0; j < reduced.size(); ++j) {
    const std::size_t peak = static_cast<std::size_t>(rng.uniform_index(window));
    for (std::size_t k = 0; k < window; ++k)
      full[j * window + k] = k == peak ? reduced[j] : reduced[j] - (0.05 + rng.uniform());
  }
  return full;
}

std::vector<double> class_feature(std::span<const double> direction, double separation, Label label, Rng& rng) {
  const double sign = label == Label::A ? 0.5 : -0.5;
  std::vector<double> r(direction.size());
  for (std::size_t d = 0; d < r.size(); ++d) r[d] = sign * separation * direction[d] + rng.normal();
  return r;
}

}  // namespace

std::string embedding_file_name(std::size_t dim) { return fmt::format("embeddings.d{}.txt", dim); }

void SynthConfig::validate() const {
  if (!(text_signal >= 0.0 && text_signal <= 1.0)) throw InvalidArgument("synth: text_signal must be in [0, 1]");
  if (!(visual_separation >= 0.0)) throw InvalidArgument("synth: visual_separation must be non-negative");
  if (profile_separation && !(*profile_separation >= 0.0)) {
    throw InvalidArgument("synth: profile_separation must be non-negative");
  }
  if (shared_vocab == 0 || exclusive_vocab == 0 || users_per_class == 0 || tweets_per_user == 0 ||
      tweet_length_min == 0 || pictures_per_user == 0 || feature_dim == 0 || pool_window == 0) {
    throw InvalidArgument("synth: counts must be positive");
  }
  if (tweet_length_max < tweet_length_min) throw InvalidArgument("synth: tweet_length_max < tweet_length_min");
  if (feature_dim % pool_window != 0) throw InvalidArgument("synth: feature_dim must be a multiple of pool_window");
  if (embedding_dims.empty()) throw InvalidArgument("synth: need at least one embedding dim");
  for (std::size_t d : embedding_dims)
    if (d == 0) throw InvalidArgument("synth: embedding dims must be positive");
}

nlohmann::json SynthConfig::to_json() const {
  nlohmann::json j;
  j["shared_vocab"] = shared_vocab;
  j["exclusive_vocab"] = exclusive_vocab;
  j["text_signal"] = text_signal;
  j["visual_separation"] = visual_separation;
  j["profile_separation"] = profile_separation ? nlohmann::json(*profile_separation) : nlohmann::json(nullptr);
  j["users_per_class"] = users_per_class;
  j["tweets_per_user"] = tweets_per_user;
  j["tweet_length_min"] = tweet_length_min;
  j["tweet_length_max"] = tweet_length_max;
  j["pictures_per_user"] = pictures_per_user;
  j["feature_dim"] = feature_dim;
  j["pool_window"] = pool_window;
  j["embedding_dims"] = embedding_dims;
  j["seed"] = seed;
  return j;
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  SynthConfig c;
  const nlohmann::json defaults = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw InvalidArgument(fmt::format("synth: unknown key '{}'", key));
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("shared_vocab", c.shared_vocab);
  get("exclusive_vocab", c.exclusive_vocab);
  get("text_signal", c.text_signal);
  get("visual_separation", c.visual_separation);
  if (j.contains("profile_separation") && !j["profile_separation"].is_null()) {
    c.profile_separation = j["profile_separation"].get<double>();
  }
  get("users_per_class", c.users_per_class);
  get("tweets_per_user", c.tweets_per_user);
  get("tweet_length_min", c.tweet_length_min);
  get("tweet_length_max", c.tweet_length_max);
  get("pictures_per_user", c.pictures_per_user);
  get("feature_dim", c.feature_dim);
  get("pool_window", c.pool_window);
  get("embedding_dims", c.embedding_dims);
  get("seed", c.seed);
  c.validate();
  return c;
}

SynthFiles generate_corpus(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  SynthFiles files;
  files.tweets = out_dir / "tweets.jsonl";
  files.features = out_dir / "features.tsv";
  files.users = out_dir / "users.tsv";
  files.manifest = out_dir / "manifest.json";

  const std::size_t n_users = 2 * cfg.users_per_class;
  auto user_id = [](std::size_t i) { return fmt::format("u{:05d}", i); };
  auto user_label = [](std::size_t i) { return i % 2 == 0 ? Label::A : Label::B; };

  {
    std::ofstream out(files.tweets, std::ios::binary);
    std::ofstream users(files.users, std::ios::binary);
    if (!out || !users) throw Error(fmt::format("cannot write into {}", out_dir.string()));
    std::string text;
    for (std::size_t u = 0; u < n_users; ++u) {
      const std::string id = user_id(u);
      const Label label = user_label(u);
      users << id << '\t' << label_name(label) << '\n';
      Rng rng(derive_seed(cfg.seed, "text/" + id));
      for (std::size_t t = 0; t < cfg.tweets_per_user; ++t) {
        const std::size_t len =
            cfg.tweet_length_min + static_cast<std::size_t>(rng.uniform_index(cfg.tweet_length_max - cfg.tweet_length_min + 1));
        text.clear();
        for (std::size_t k = 0; k < len; ++k) {
          if (k) text += ' ';
          if (rng.uniform() < cfg.text_signal) {
            text += exclusive_token(label, static_cast<std::size_t>(rng.uniform_index(cfg.exclusive_vocab)));
          } else {
            text += shared_token(static_cast<std::size_t>(rng.uniform_index(cfg.shared_vocab)));
          }
        }
        nlohmann::json rec;
        rec["user_id"] = id;
        rec["text"] = text;
        rec["order"] = t;
        rec["label"] = std::string(label_name(label));
        out << rec.dump() << '\n';
      }
    }
  }

  std::vector<std::string> vocab;
  for (std::size_t i = 0; i < cfg.shared_vocab; ++i) vocab.push_back(shared_token(i));
  for (Label c : {Label::A, Label::B})
    for (std::size_t i = 0; i < cfg.exclusive_vocab; ++i) vocab.push_back(exclusive_token(c, i));
  for (std::size_t dim : cfg.embedding_dims) {
    Rng rng(derive_seed(cfg.seed, fmt::format("embedding/{}", dim)));
    std::vector<std::pair<std::string, std::vector<double>>> entries;
    for (const auto& tok : vocab) entries.emplace_back(tok, random_unit(rng, dim));
    files.embeddings.push_back(out_dir / embedding_file_name(dim));
    write_embeddings(files.embeddings.back(), entries);
  }

  {
    const std::size_t reduced_dim = cfg.feature_dim / cfg.pool_window;
    Rng dir_rng(derive_seed(cfg.seed, "visual-direction"));
    const std::vector<double> direction = random_unit(dir_rng, reduced_dim);
    const double profile_sep = cfg.profile_separation.value_or(cfg.visual_separation);
    std::vector<FeatureRecord> records;
    for (std::size_t u = 0; u < n_users; ++u) {
      const std::string id = user_id(u);
      const Label label = user_label(u);
      Rng rng(derive_seed(cfg.seed, "visual/" + id));
      records.push_back({id + "-profile", id, ImageKind::profile,
                         expand_feature(class_feature(direction, profile_sep, label, rng), cfg.pool_window, rng)});
      for (std::size_t p = 0; p < cfg.pictures_per_user; ++p) {
        records.push_back({fmt::format("{}-post{:03d}", id, p), id, ImageKind::posted,
                           expand_feature(class_feature(direction, cfg.visual_separation, label, rng),
                                          cfg.pool_window, rng)});
      }
    }
    write_features(files.features, records);
  }

  nlohmann::json manifest;
  manifest["generator"] = "fusionkit-synth";
  manifest["version"] = FUSIONKIT_VERSION;
  manifest["config"] = cfg.to_json();
  manifest["labels"] = {{"A", 0}, {"B", 1}};
  manifest["users"] = n_users;
  manifest["files"]["tweets"] = files.tweets.filename().string();
  manifest["files"]["features"] = files.features.filename().string();
  manifest["files"]["users"] = files.users.filename().string();
  for (std::size_t k = 0; k < cfg.embedding_dims.size(); ++k) {
    manifest["files"]["embeddings"][std::to_string(cfg.embedding_dims[k])] = files.embeddings[k].filename().string();
  }
  std::ofstream(files.manifest, std::ios::binary) << manifest.dump(2) << '\n';
  return files;
}

}  // namespace fusionkit
