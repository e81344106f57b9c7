#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fusionkit/matrix.hpp"

namespace fusionkit {

/// Versioned text container used for every persisted model.
///
///   FUSIONKIT-CONTAINER 1
///   begin <kind>
///   meta <key> <value...>
///   tensor <name> <rows> <cols>
///   <one line of space-separated values per row>
///   begin <kind>        nested containers
///   ...
///   end
///   end
///
/// Doubles are written in shortest round-trip form, so save/load is bit-exact.
class Container {
 public:
  static constexpr int kVersion = 1;

  Container() = default;
  explicit Container(std::string kind) : kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

  void set(std::string key, std::string value);
  void set(std::string key, double value);
  void set(std::string key, std::size_t value);
  void add_tensor(std::string name, Matrix m);
  void add_child(Container child);

  const std::string& get(std::string_view key) const;
  double get_double(std::string_view key) const;
  std::size_t get_size(std::string_view key) const;
  bool has(std::string_view key) const;
  const Matrix& tensor(std::string_view name) const;
  const Container& child(std::string_view kind) const;

  const std::vector<std::pair<std::string, std::string>>& meta() const noexcept { return meta_; }
  const std::vector<std::pair<std::string, Matrix>>& tensors() const noexcept { return tensors_; }

  std::string serialize() const;
  static Container parse(std::string_view text, std::string_view source = "<container>");

  void save(const std::filesystem::path& path) const;
  static Container load(const std::filesystem::path& path);

  /// Throws unless kind() == expected.
  void expect_kind(std::string_view expected) const;

 private:
  void write(std::string& out) const;

  std::string kind_;
  std::vector<std::pair<std::string, std::string>> meta_;
  std::vector<std::pair<std::string, Matrix>> tensors_;
  std::vector<Container> children_;
};

std::string format_double(double v);

}  // namespace fusionkit
