#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fusionkit/cluster.hpp"
#include "fusionkit/container.hpp"
#include "fusionkit/fusion.hpp"
#include "fusionkit/gradcheck.hpp"
#include "fusionkit/lstm.hpp"
#include "fusionkit/optim.hpp"
#include "fusionkit/svm.hpp"
#include "fusionkit/synth.hpp"
#include "fusionkit/text.hpp"
#include "fusionkit/visual.hpp"

namespace fusionkit::harness {

enum class ModelFamily { lstm, svm_text, svm_profile, svm_pictures, fusion };

ModelFamily parse_family(std::string_view s);
std::string_view family_name(ModelFamily f) noexcept;
bool is_svm(ModelFamily f) noexcept;
/// Column order of the results table.
const std::vector<ModelFamily>& all_families();

/// Sectioned JSON configuration. Every key is declared by the built-in
/// defaults; a document may override any subset, and an unknown key or a
/// value of the wrong type is an InvalidArgument naming the dotted key.
class Config {
 public:
  static Config defaults();
  /// Relative data paths resolve against the config file's directory.
  static Config load(const std::filesystem::path& path);
  static Config from_json(const nlohmann::json& overrides, std::filesystem::path base_dir = ".");

  /// Schema-checked override of one dotted key, e.g. "lstm.hidden_dim".
  void set(std::string_view dotted_key, nlohmann::json value);
  const nlohmann::json& at(std::string_view dotted_key) const;
  const nlohmann::json& doc() const noexcept { return doc_; }
  const std::filesystem::path& base_dir() const noexcept { return base_dir_; }
  void set_base_dir(std::filesystem::path dir) { base_dir_ = std::move(dir); }

  std::uint64_t seed() const;
  /// 16 hex digits of FNV-1a over the canonical (sorted-key) JSON dump.
  std::string hash() const;

  std::filesystem::path data_path(std::string_view key) const;
  std::filesystem::path embedding_path(std::size_t dim) const;

  AssemblyConfig assembly() const;
  EmbedOptions embed_options(std::uint64_t seed) const;
  TrainConfig train(std::uint64_t seed) const;
  SvmConfig svm() const;
  SynthConfig synth(std::uint64_t seed) const;

 private:
  nlohmann::json doc_;
  std::filesystem::path base_dir_ = ".";
};

enum class Split { train, val, test };
std::string_view split_name(Split s) noexcept;
Split parse_split(std::string_view s);

/// Super-tweets plus the user-level split they were assigned.
struct PreparedData {
  std::vector<SuperTweet> supertweets;
  std::map<std::string, Split> users;
  std::map<std::string, Label> user_labels;
  std::uint64_t seed = 0;
  std::string config_hash;

  Split split_of(const std::string& user_id) const;
  /// Super-tweet counts per split and label: counts[split][label].
  std::array<std::array<std::size_t, 2>, 3> counts() const;
};

/// Loads tweets, assembles super-tweets and assigns whole users to
/// train/val/test, stratified per class, shuffled by a generator seeded with
/// `seed`. Fraction mode rounds each class's train and val counts half up, and
/// test takes the rest; count mode takes val and test user totals and
/// allocates them to classes in proportion.
PreparedData prepare(const Config& cfg, std::uint64_t seed);
void write_prepared(const PreparedData& data, const std::filesystem::path& dir);
PreparedData read_prepared(const std::filesystem::path& dir);

struct ExperimentSpec {
  ModelFamily family = ModelFamily::lstm;
  std::size_t hidden = 100;
  std::size_t embedding = 25;
  Pooling pooling = Pooling::mean;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static ExperimentSpec from_json(const nlohmann::json& j);
  friend bool operator==(const ExperimentSpec&, const ExperimentSpec&) = default;
};

struct RunResult {
  ExperimentSpec spec;
  Evaluation test;
  std::optional<double> val_accuracy;
  nlohmann::json log;
  Container model;
};

/// Holds a config, prepared data and lazily loaded inputs shared across runs.
class Workspace {
 public:
  Workspace(Config cfg, PreparedData data);
  ~Workspace();
  Workspace(Workspace&&) noexcept;
  Workspace& operator=(Workspace&&) noexcept;

  const Config& config() const noexcept;
  const PreparedData& data() const noexcept;

  RunResult run(const ExperimentSpec& spec);
  /// Re-derives the test examples of the model's recorded spec and scores them.
  Evaluation evaluate(const Container& model);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Every (hidden, embedding, pooling, family) combination the config's grid section names.
std::vector<ExperimentSpec> grid_specs(const Config& cfg, std::uint64_t seed);

struct GridRow {
  std::size_t hidden = 0;
  std::size_t embedding = 0;
  Pooling pooling = Pooling::mean;
  /// Test accuracy per family, or the error message of a failed run.
  std::map<ModelFamily, std::optional<double>> cells;
  std::map<ModelFamily, std::string> errors;
};

struct ResultsTable {
  std::vector<ModelFamily> families;
  std::vector<GridRow> rows;
  std::uint64_t seed = 0;
  std::string config_hash;

  std::string to_csv() const;
  std::string to_text() const;
};

/// Runs every spec; svm results are shared by every row that agrees on their
/// inputs. A run that throws becomes an error cell. Per-run logs go to
/// log_dir when given.
ResultsTable run_grid(Workspace& ws, const std::vector<ExperimentSpec>& specs,
                      const std::optional<std::filesystem::path>& log_dir = std::nullopt);

struct ClusterAnalysis {
  ClusterReport report;
  KSelection selection;
  std::size_t points = 0;
  std::size_t skipped = 0;  ///< features whose user has no group label
  nlohmann::json to_json(const Config& cfg, std::uint64_t seed) const;
};

/// Reduced picture features of the configured kind, grouped by the users
/// file labels, clustered at cluster.k or the silhouette-best k in
/// [cluster.k_min, cluster.k_max], then score-tested per cluster.
ClusterAnalysis analyze_clusters(const Config& cfg, std::uint64_t seed);

struct GradCheckCase {
  std::string name;
  GradCheckResult result;
};

/// LSTM (last and mean pooling) and fusion losses on a D=3, H=4, T=5, batch-2
/// instance drawn from `seed`.
std::vector<GradCheckCase> run_gradcheck(std::uint64_t seed);

/// Seed, config hash and version stamped into every artifact.
nlohmann::json provenance(const Config& cfg, std::uint64_t seed);

void write_text_file(const std::filesystem::path& path, std::string_view content);

}  // namespace fusionkit::harness
