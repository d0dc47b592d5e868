#pragma once

// Two-domain benchmark with a controllable domain gap, the category and
// train/val/test splits, and the oracle translator that stands in for an
// image-to-image model.
//
// Generative model: class prototypes live on the latent unit sphere; an
// instance latent is a noisy, renormalized prototype; each domain renders a
// latent through its own affine map followed by tanh and normalization.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "syncdr/matrix.hpp"
#include "syncdr/rng.hpp"

namespace syncdr {

enum class Domain : std::uint8_t { A = 0, B = 1 };

inline Domain opposite(Domain d) { return d == Domain::A ? Domain::B : Domain::A; }
inline const char* domain_name(Domain d) { return d == Domain::A ? "A" : "B"; }

struct BenchmarkConfig {
  int num_classes = 20;
  int samples_per_class = 50;  ///< per class, per domain
  int latent_dim = 8;
  int ambient_dim = 32;
  /// Per-coordinate latent noise. 0.15 keeps same-domain NCM accuracy of
  /// real test data above 0.9 at the other defaults.
  double within_class_std = 0.15;
  double domain_gap = 0.8;  ///< 0: identical domain maps, 1: independent maps
  std::uint64_t master_seed = 1;

  void validate() const;
};

/// Instance ids of synthetic samples are offset from their real sources.
inline constexpr std::int64_t kSyntheticIdBase = std::int64_t{1} << 40;

struct DomainSample {
  std::vector<double> vec;  ///< unit-norm observable
  Domain domain = Domain::A;
  int class_id = 0;  ///< hidden ground truth of the content
  std::int64_t instance_id = 0;
  std::vector<double> latent;  ///< hidden, oracle-only
  bool is_synthetic = false;
  std::optional<std::int64_t> pair_id;  ///< real source of a synthetic sample
  /// Label the translation was meant to preserve; equals class_id for real
  /// samples and for label-preserving translations.
  int source_class_id = 0;
};

/// Affine-tanh rendering map from latent space to a domain's observables.
struct DomainMap {
  Matrix weight;  ///< ambient_dim × latent_dim
  std::vector<double> bias;

  std::vector<double> render(std::span<const double> latent) const;
};

struct Dataset {
  BenchmarkConfig config;
  Matrix prototypes;  ///< num_classes × latent_dim, unit rows
  DomainMap map_a;
  DomainMap map_b;
  std::vector<DomainSample> samples;  ///< all real samples, both domains

  const DomainMap& map(Domain d) const { return d == Domain::A ? map_a : map_b; }
  /// Draws a fresh latent of class `c` from the given stream.
  std::vector<double> sample_latent(int c, RandomStream& stream) const;
};

Dataset generate_benchmark(const BenchmarkConfig& config);

// ---------------------------------------------------------------------------
// Splits

struct SplitSpec {
  double train_frac = 0.5;
  double val_frac = 0.2;
  double test_frac = 0.3;
  double overlap_frac = 0.0;
  std::uint64_t split_seed = 7;
  /// Exchanges the two category sets; the second half of the two-experiment
  /// protocol.
  bool swap_categories = false;

  void validate() const;
};

struct CategorySplit {
  std::vector<int> classes_a;  ///< sorted
  std::vector<int> classes_b;  ///< sorted
  int per_domain = 0;          ///< k
  int shared = 0;              ///< s
};

/// Per-domain count k = round(C / (2 - overlap)) clamped so that the shared
/// count s = 2k - C lies in [0, k]; both sets together cover all C classes.
CategorySplit split_categories(int num_classes, double overlap_frac, std::uint64_t seed);

enum class SplitPart : std::uint8_t { Train = 0, Val = 1, Test = 2 };

const char* split_part_name(SplitPart p);

struct DataSplit {
  CategorySplit categories;
  std::vector<DomainSample> train_a, train_b, val_a, val_b, test_a, test_b;
  /// Stratified part for every real sample, keyed by instance id (before the
  /// category filter on training data).
  std::unordered_map<std::int64_t, SplitPart> assignment;
};

DataSplit make_split(const Dataset& dataset, const SplitSpec& spec);

// ---------------------------------------------------------------------------
// Translation oracle

struct TranslationConfig {
  double p_keep = 1.0;         ///< probability the class is preserved
  double edit_strength = 1.0;  ///< 0: no edit, 1: full re-rendering
  double noise = 0.0;          ///< isotropic noise added before normalization
  std::uint64_t seed = 11;

  void validate() const;
  static TranslationConfig preset(const std::string& name);
};

/// Stream key for translating one sample; exposed so tests can reproduce a
/// single translation.
std::uint64_t translation_stream_key(const TranslationConfig& cfg, std::int64_t instance_id,
                                     Domain target);

DomainSample translate(const Dataset& dataset, const DomainSample& sample, Domain target,
                       const TranslationConfig& cfg);

/// One synthetic sample per real sample, each from its own keyed stream so
/// the result does not depend on input order.
std::vector<DomainSample> generate_synthetic_set(const Dataset& dataset,
                                                 std::span<const DomainSample> real_set,
                                                 Domain target, const TranslationConfig& cfg);

// ---------------------------------------------------------------------------
// Export / import

struct ExportOptions {
  bool with_oracle = false;  ///< include hidden latents
};

/// Writes manifest.json (configs, category split, per-sample split) and
/// samples.jsonl (one record per real and synthetic sample) into `dir`.
void export_dataset(const std::string& dir, const Dataset& dataset, const SplitSpec& spec,
                    const DataSplit& split, const TranslationConfig& translation,
                    std::span<const DomainSample> synthetic, const ExportOptions& options);

std::vector<DomainSample> import_samples(const std::string& samples_jsonl_path);

}  // namespace syncdr
