#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fusionkit {

enum class ImageKind { profile, posted };

ImageKind parse_image_kind(std::string_view s);
std::string_view image_kind_name(ImageKind k) noexcept;

/// One precomputed deep feature vector for one image.
struct FeatureRecord {
  std::string image_id;
  std::string user_id;
  ImageKind kind = ImageKind::posted;
  std::vector<double> vector;

  friend bool operator==(const FeatureRecord&, const FeatureRecord&) = default;
};

/// Reads `image_id \t user_id \t kind \t f1 f2 ... fD`, one record per line.
/// Every vector must have exactly `expected_dim` finite values.
std::vector<FeatureRecord> load_features(const std::filesystem::path& path, std::size_t expected_dim = 1000);
void write_features(const std::filesystem::path& path, std::span<const FeatureRecord> records);

/// out[j] = max(v[j*stride .. j*stride + window - 1]). A trailing partial
/// window is dropped. Throws if v is empty or shorter than one window.
std::vector<double> maxpool_reduce(std::span<const double> v, std::size_t window = 10, std::size_t stride = 10);

enum class PairingPolicy { mean, random_one };

PairingPolicy parse_pairing_policy(std::string_view s);
std::string_view pairing_policy_name(PairingPolicy p) noexcept;

/// One vector for a user from that user's reduced features: the elementwise
/// mean, or one record chosen by a generator seeded with `seed`. Returns
/// nullopt when the user has no records (missing modality).
std::optional<std::vector<double>> user_visual_feature(std::span<const std::vector<double>> reduced,
                                                       PairingPolicy policy, std::uint64_t seed);

/// Reduced features of one kind grouped by user id, in file order.
std::map<std::string, std::vector<std::vector<double>>> reduce_by_user(std::span<const FeatureRecord> records,
                                                                       ImageKind kind, std::size_t window = 10,
                                                                       std::size_t stride = 10);

}  // namespace fusionkit
