#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fusionkit/matrix.hpp"
#include "fusionkit/rng.hpp"

namespace fusionkit {

/// Class label. A is index 0, B is index 1.
enum class Label : int { A = 0, B = 1 };

Label parse_label(std::string_view s);
std::string_view label_name(Label label) noexcept;
inline int label_index(Label label) noexcept { return static_cast<int>(label); }

struct Tweet {
  std::string user_id;
  std::string text;
  std::int64_t order_index = 0;
  Label label = Label::A;
};

struct TokenSequence {
  std::vector<std::string> tokens;

  std::size_t size() const noexcept { return tokens.size(); }
  bool empty() const noexcept { return tokens.empty(); }
  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

/// Splits tweet text into tokens.
///
/// Rules, applied left to right within each whitespace-delimited chunk:
///  - a URL (`http://`, `https://` or `www.` prefix, ASCII case-insensitive)
///    runs to the end of the chunk, minus any trailing `.,;:!?)]}'"`
///    characters, which are emitted as a punctuation token;
///  - `@` or `#` directly followed by a word character starts a mention or
///    hashtag made of `@`/`#` plus the word characters that follow;
///  - a word is a run of word characters, optionally joined by single
///    apostrophes (`it's`, `o'neil`);
///  - any other run of non-word, non-space characters is one punctuation
///    token (`,` `!!!` `:-)`), broken before a mention/hashtag start.
/// Word characters are ASCII letters, digits, underscore and every byte of a
/// multi-byte UTF-8 sequence. Whitespace is ASCII space, tab, CR, LF, VT, FF.
TokenSequence tokenize(std::string_view text);

struct SuperTweet {
  std::string user_id;
  TokenSequence tokens;
  Label label = Label::A;
  /// Position of the window within the user's timeline (0-based).
  std::size_t window_index = 0;
  std::size_t tweet_count = 0;
};

struct UserTimeline {
  std::string user_id;
  Label label = Label::A;
  std::vector<Tweet> tweets;  ///< sorted by order_index
};

struct AssemblyConfig {
  std::size_t group_size = 20;
  std::size_t min_tokens = 100;
};

/// Reads the tweet JSON-lines format: one {"user_id","text","order","label"} object per line.
std::vector<Tweet> load_tweets(const std::filesystem::path& path);

/// Groups tweets per user (users in lexicographic id order, tweets by order_index).
/// Throws InvalidArgument when one user carries two labels.
std::vector<UserTimeline> group_by_user(std::vector<Tweet> tweets);

/// Consecutive non-overlapping windows of `group_size` tweets per user. Tweets
/// that are blank after trimming are skipped before windowing; a trailing
/// partial window is dropped, as is any window with fewer than `min_tokens`
/// tokens.
std::vector<SuperTweet> assemble_supertweets(const std::vector<UserTimeline>& timelines,
                                             const AssemblyConfig& cfg = {});

enum class OovPolicy { skip, zero_vector, random_fixed_per_token };

OovPolicy parse_oov_policy(std::string_view s);
std::string_view oov_policy_name(OovPolicy p) noexcept;

/// Token to vector map. Lookups try the ASCII-lowercased token first and fall
/// back to the raw token.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim = 0) : dim_(dim) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return entries_.size(); }

  /// Returns false (and leaves the table unchanged) if the token already exists.
  bool insert(std::string token, std::vector<double> vector);
  const std::vector<double>* find(std::string_view token) const;

 private:
  std::size_t dim_;
  std::unordered_map<std::string, std::vector<double>> entries_;
};

/// Parses the embedding text format: `token f1 ... fD` per line, no header.
/// Blank lines are ignored. Duplicate tokens keep the first occurrence and
/// log a warning.
EmbeddingTable load_embeddings(const std::filesystem::path& path, std::size_t expected_dim);

void write_embeddings(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, std::vector<double>>>& entries);

/// D x T embedded super-tweet. Columns past real_token_count are padding draws.
struct SequenceMatrix {
  Matrix values;
  std::size_t real_token_count = 0;

  std::size_t dim() const noexcept { return values.rows(); }
  std::size_t timesteps() const noexcept { return values.cols(); }
};

struct EmbedOptions {
  std::size_t timesteps = 150;
  OovPolicy oov_policy = OovPolicy::skip;
  /// Seeds the per-token vectors of OovPolicy::random_fixed_per_token.
  std::uint64_t oov_seed = 0;
  /// Padding draws are Normal(mean 0, variance padding_variance).
  double padding_variance = 0.1;
};

/// Looks up the first `timesteps` usable tokens and pads the remainder with
/// Gaussian draws from `rng`, filled column by column.
SequenceMatrix embed_sequence(const TokenSequence& tokens, const EmbeddingTable& table, Rng& rng,
                              const EmbedOptions& options = {});

/// Mean over all T columns, padding included: C_i = (sum_j w_ij) / T.
std::vector<double> average_representation(const SequenceMatrix& m);

}  // namespace fusionkit
