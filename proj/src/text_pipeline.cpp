#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "fusionkit/error.hpp"
#include "fusionkit/log.hpp"
#include "fusionkit/text.hpp"
#include "parse_util.hpp"

namespace fusionkit {

namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

LogSink& current_sink() {
  static LogSink sink;
  return sink;
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
  });
}

}  // namespace

LogSink set_warning_sink(LogSink sink) {
  std::lock_guard lock(sink_mutex());
  return std::exchange(current_sink(), std::move(sink));
}

void log_warning(std::string_view message) {
  std::lock_guard lock(sink_mutex());
  if (current_sink()) {
    current_sink()(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

Label parse_label(std::string_view s) {
  if (s == "A") return Label::A;
  if (s == "B") return Label::B;
  throw InvalidArgument(fmt::format("unknown label '{}' (expected A or B)", s));
}

std::string_view label_name(Label label) noexcept { return label == Label::A ? "A" : "B"; }

std::vector<Tweet> load_tweets(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot open tweet file {}", path.string()));
  std::vector<Tweet> tweets;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    try {
      const auto obj = nlohmann::json::parse(line);
      Tweet t;
      t.user_id = obj.at("user_id").get<std::string>();
      t.text = obj.at("text").get<std::string>();
      t.order_index = obj.at("order").get<std::int64_t>();
      t.label = parse_label(obj.at("label").get<std::string>());
      tweets.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string(), line_no, e.what());
    } catch (const InvalidArgument& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
  return tweets;
}

std::vector<UserTimeline> group_by_user(std::vector<Tweet> tweets) {
  std::map<std::string, UserTimeline> by_user;
  for (auto& t : tweets) {
    auto [it, inserted] = by_user.try_emplace(t.user_id);
    auto& tl = it->second;
    if (inserted) {
      tl.user_id = t.user_id;
      tl.label = t.label;
    } else if (tl.label != t.label) {
      throw InvalidArgument(fmt::format("user '{}' carries both labels", t.user_id));
    }
    tl.tweets.push_back(std::move(t));
  }
  std::vector<UserTimeline> out;
  out.reserve(by_user.size());
  for (auto& [id, tl] : by_user) {
    std::stable_sort(tl.tweets.begin(), tl.tweets.end(),
                     [](const Tweet& a, const Tweet& b) { return a.order_index < b.order_index; });
    out.push_back(std::move(tl));
  }
  return out;
}

std::vector<SuperTweet> assemble_supertweets(const std::vector<UserTimeline>& timelines,
                                             const AssemblyConfig& cfg) {
  if (cfg.group_size == 0) throw InvalidArgument("assemble_supertweets: group_size must be positive");
  std::vector<SuperTweet> out;
  for (const auto& tl : timelines) {
    std::vector<TokenSequence> usable;
    for (const auto& t : tl.tweets) {
      if (is_blank(t.text)) continue;
      usable.push_back(tokenize(t.text));
    }
    const std::size_t windows = usable.size() / cfg.group_size;
    for (std::size_t w = 0; w < windows; ++w) {
      SuperTweet st;
      st.user_id = tl.user_id;
      st.label = tl.label;
      st.window_index = w;
      st.tweet_count = cfg.group_size;
      for (std::size_t k = 0; k < cfg.group_size; ++k) {
        const auto& toks = usable[w * cfg.group_size + k].tokens;
        st.tokens.tokens.insert(st.tokens.tokens.end(), toks.begin(), toks.end());
      }
      if (st.tokens.size() < cfg.min_tokens) continue;
      out.push_back(std::move(st));
    }
  }
  return out;
}

OovPolicy parse_oov_policy(std::string_view s) {
  if (s == "skip") return OovPolicy::skip;
  if (s == "zero-vector") return OovPolicy::zero_vector;
  if (s == "random-fixed-per-token") return OovPolicy::random_fixed_per_token;
  throw InvalidArgument(fmt::format("unknown oov policy '{}'", s));
}

std::string_view oov_policy_name(OovPolicy p) noexcept {
  switch (p) {
    case OovPolicy::skip: return "skip";
    case OovPolicy::zero_vector: return "zero-vector";
    case OovPolicy::random_fixed_per_token: return "random-fixed-per-token";
  }
  return "skip";
}

bool EmbeddingTable::insert(std::string token, std::vector<double> vector) {
  if (vector.size() != dim_) {
    throw ShapeError(fmt::format("embedding for '{}' has {} values, table dim is {}", token, vector.size(), dim_));
  }
  return entries_.try_emplace(std::move(token), std::move(vector)).second;
}

const std::vector<double>* EmbeddingTable::find(std::string_view token) const {
  if (auto it = entries_.find(ascii_lower(token)); it != entries_.end()) return &it->second;
  if (auto it = entries_.find(std::string(token)); it != entries_.end()) return &it->second;
  return nullptr;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, std::size_t expected_dim) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot open embedding file {}", path.string()));
  EmbeddingTable table(expected_dim);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string_view> fields;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) continue;
    detail::split_fields(line, fields);
    if (fields.size() != expected_dim + 1) {
      throw ParseError(path.string(), line_no,
                       fmt::format("expected token plus {} floats, found {} floats", expected_dim,
                                   fields.empty() ? 0 : fields.size() - 1));
    }
    std::vector<double> vec(expected_dim);
    for (std::size_t i = 0; i < expected_dim; ++i) {
      if (!detail::parse_double(fields[i + 1], vec[i])) {
        throw ParseError(path.string(), line_no, fmt::format("unparseable float '{}'", fields[i + 1]));
      }
    }
    std::string token(fields[0]);
    if (!table.insert(token, std::move(vec))) {
      log_warning(fmt::format("{}:{}: duplicate token '{}' ignored", path.string(), line_no, token));
    }
  }
  return table;
}

void write_embeddings(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, std::vector<double>>>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write embedding file {}", path.string()));
  std::string line;
  for (const auto& [token, vec] : entries) {
    line = token;
    for (double v : vec) fmt::format_to(std::back_inserter(line), " {}", v);
    line += '\n';
    out << line;
  }
}

SequenceMatrix embed_sequence(const TokenSequence& tokens, const EmbeddingTable& table, Rng& rng,
                              const EmbedOptions& options) {
  const std::size_t dim = table.dim();
  const std::size_t steps = options.timesteps;
  SequenceMatrix m{Matrix(dim, steps), 0};
  std::size_t col = 0;
  std::vector<double> scratch(dim);
  for (const auto& tok : tokens.tokens) {
    if (col == steps) break;
    const std::vector<double>* vec = table.find(tok);
    if (vec == nullptr) {
      switch (options.oov_policy) {
        case OovPolicy::skip:
          continue;
        case OovPolicy::zero_vector:
          std::fill(scratch.begin(), scratch.end(), 0.0);
          break;
        case OovPolicy::random_fixed_per_token: {
          Rng token_rng(derive_seed(options.oov_seed, ascii_lower(tok)));
          const double sd = std::sqrt(options.padding_variance);
          for (double& v : scratch) v = token_rng.normal(0.0, sd);
          break;
        }
      }
      vec = &scratch;
    }
    for (std::size_t r = 0; r < dim; ++r) m.values(r, col) = (*vec)[r];
    ++col;
  }
  m.real_token_count = col;
  const double sd = std::sqrt(options.padding_variance);
  for (; col < steps; ++col)
    for (std::size_t r = 0; r < dim; ++r) m.values(r, col) = rng.normal(0.0, sd);
  return m;
}

std::vector<double> average_representation(const SequenceMatrix& m) {
  const auto& v = m.values;
  std::vector<double> out(v.rows(), 0.0);
  if (v.cols() == 0) return out;
  for (std::size_t r = 0; r < v.rows(); ++r) {
    double s = 0.0;
    for (double x : v.row(r)) s += x;
    out[r] = s / static_cast<double>(v.cols());
  }
  return out;
}

}  // namespace fusionkit
