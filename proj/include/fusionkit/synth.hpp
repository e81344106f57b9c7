#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fusionkit {

/// Class-conditional synthetic corpus.
///
/// Text: every token of a class-c tweet is drawn from the class-c exclusive
/// vocabulary with probability text_signal and from the shared vocabulary
/// otherwise, uniformly within each. Token embeddings are random unit vectors.
///
/// Pictures: a reduced (pooled) feature r ~ N(+-visual_separation/2 * u, I)
/// for a fixed random unit direction u, sign by class. The full deep feature
/// places r_j at one random slot of window j and strictly smaller values in
/// the other slots, so max-pooling recovers r exactly.
struct SynthConfig {
  std::size_t shared_vocab = 500;
  std::size_t exclusive_vocab = 20;  ///< per class
  double text_signal = 0.0;          ///< in [0, 1]
  double visual_separation = 0.0;    ///< distance between class means of posted-picture features
  std::optional<double> profile_separation;  ///< defaults to visual_separation
  std::size_t users_per_class = 50;
  std::size_t tweets_per_user = 100;
  std::size_t tweet_length_min = 4;
  std::size_t tweet_length_max = 10;
  std::size_t pictures_per_user = 10;
  std::size_t feature_dim = 1000;
  std::size_t pool_window = 10;
  std::vector<std::size_t> embedding_dims{25, 50};
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  /// Keys absent from j keep their defaults; unknown keys are rejected.
  static SynthConfig from_json(const nlohmann::json& j);
};

struct SynthFiles {
  std::filesystem::path tweets;                    ///< tweets.jsonl
  std::vector<std::filesystem::path> embeddings;   ///< embeddings.d<D>.txt, one per dim
  std::filesystem::path features;                  ///< features.tsv
  std::filesystem::path users;                     ///< users.tsv (user_id \t label)
  std::filesystem::path manifest;                  ///< manifest.json
};

/// Writes the corpus into out_dir (created if needed). Same config, same bytes.
SynthFiles generate_corpus(const SynthConfig& cfg, const std::filesystem::path& out_dir);

std::string embedding_file_name(std::size_t dim);

}  // namespace fusionkit
