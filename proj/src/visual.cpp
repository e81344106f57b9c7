#include "fusionkit/visual.hpp"

#include <algorithm>
#include <array>
#include <fstream>

#include <fmt/format.h>

#include "fusionkit/error.hpp"
#include "fusionkit/rng.hpp"
#include "parse_util.hpp"

namespace fusionkit {

ImageKind parse_image_kind(std::string_view s) {
  if (s == "profile") return ImageKind::profile;
  if (s == "posted") return ImageKind::posted;
  throw InvalidArgument(fmt::format("unknown image kind '{}' (expected profile or posted)", s));
}

std::string_view image_kind_name(ImageKind k) noexcept { return k == ImageKind::profile ? "profile" : "posted"; }

std::vector<FeatureRecord> load_features(const std::filesystem::path& path, std::size_t expected_dim) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot open feature file {}", path.string()));
  std::vector<FeatureRecord> records;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string_view> values;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string_view view(line);
    std::array<std::size_t, 3> tabs{};
    std::size_t from = 0;
    for (auto& t : tabs) {
      t = view.find('\t', from);
      if (t == std::string_view::npos) throw ParseError(path.string(), line_no, "expected 4 tab-separated fields");
      from = t + 1;
    }
    FeatureRecord rec;
    rec.image_id = std::string(view.substr(0, tabs[0]));
    rec.user_id = std::string(view.substr(tabs[0] + 1, tabs[1] - tabs[0] - 1));
    try {
      rec.kind = parse_image_kind(view.substr(tabs[1] + 1, tabs[2] - tabs[1] - 1));
    } catch (const InvalidArgument& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
    detail::split_fields(view.substr(tabs[2] + 1), values);
    if (values.size() != expected_dim) {
      throw ParseError(path.string(), line_no,
                       fmt::format("feature has {} values, expected {}", values.size(), expected_dim));
    }
    rec.vector.resize(expected_dim);
    for (std::size_t i = 0; i < expected_dim; ++i) {
      if (!detail::parse_double(values[i], rec.vector[i])) {
        throw ParseError(path.string(), line_no, fmt::format("unparseable float '{}'", values[i]));
      }
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void write_features(const std::filesystem::path& path, std::span<const FeatureRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write feature file {}", path.string()));
  std::string line;
  for (const auto& r : records) {
    line = fmt::format("{}\t{}\t{}\t", r.image_id, r.user_id, image_kind_name(r.kind));
    for (std::size_t i = 0; i < r.vector.size(); ++i) {
      if (i) line += ' ';
      fmt::format_to(std::back_inserter(line), "{}", r.vector[i]);
    }
    line += '\n';
    out << line;
  }
}

std::vector<double> maxpool_reduce(std::span<const double> v, std::size_t window, std::size_t stride) {
  if (v.empty()) throw InvalidArgument("maxpool_reduce: empty vector");
  if (window == 0 || stride == 0) throw InvalidArgument("maxpool_reduce: window and stride must be positive");
  if (v.size() < window) {
    throw InvalidArgument(fmt::format("maxpool_reduce: vector of length {} is shorter than window {}", v.size(),
                                      window));
  }
  const std::size_t count = (v.size() - window) / stride + 1;
  std::vector<double> out(count);
  for (std::size_t j = 0; j < count; ++j) {
    const auto begin = v.begin() + static_cast<std::ptrdiff_t>(j * stride);
    out[j] = *std::max_element(begin, begin + static_cast<std::ptrdiff_t>(window));
  }
  return out;
}

PairingPolicy parse_pairing_policy(std::string_view s) {
  if (s == "mean") return PairingPolicy::mean;
  if (s == "random-one") return PairingPolicy::random_one;
  throw InvalidArgument(fmt::format("unknown pairing policy '{}' (expected mean or random-one)", s));
}

std::string_view pairing_policy_name(PairingPolicy p) noexcept {
  return p == PairingPolicy::mean ? "mean" : "random-one";
}

std::optional<std::vector<double>> user_visual_feature(std::span<const std::vector<double>> reduced,
                                                       PairingPolicy policy, std::uint64_t seed) {
  if (reduced.empty()) return std::nullopt;
  if (policy == PairingPolicy::random_one) {
    Rng rng(seed);
    return reduced[static_cast<std::size_t>(rng.uniform_index(reduced.size()))];
  }
  std::vector<double> out(reduced[0].size(), 0.0);
  for (const auto& r : reduced) {
    if (r.size() != out.size()) throw ShapeError("user_visual_feature: records differ in length");
    for (std::size_t d = 0; d < out.size(); ++d) out[d] += r[d];
  }
  for (double& v : out) v /= static_cast<double>(reduced.size());
  return out;
}

std::map<std::string, std::vector<std::vector<double>>> reduce_by_user(std::span<const FeatureRecord> records,
                                                                       ImageKind kind, std::size_t window,
                                                                       std::size_t stride) {
  std::map<std::string, std::vector<std::vector<double>>> out;
  for (const auto& r : records)
    if (r.kind == kind) out[r.user_id].push_back(maxpool_reduce(r.vector, window, stride));
  return out;
}

}  // namespace fusionkit
