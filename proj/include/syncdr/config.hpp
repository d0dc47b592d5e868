#pragma once

// Experiment configuration and its flat text format:
//
//   # comment
//   benchmark.num_classes = 20
//   translation.preset = ideal
//   experiment.seeds = 0, 1, 2
//
// Keys are applied in document order, so a preset line followed by an
// explicit translation.p_keep line overrides the preset's value.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "syncdr/benchmark.hpp"
#include "syncdr/encoder.hpp"
#include "syncdr/losses.hpp"
#include "syncdr/metrics.hpp"
#include "syncdr/trainer.hpp"

namespace syncdr {

enum class Method {
  ImagenetInitOnly,  ///< no training: the initialized encoder
  InDomainId,        ///< in-domain instance discrimination only
  Cds,               ///< in-domain ID + cross-domain entropy, real data only
  SynCdr,            ///< CDS on real + synthetic pools, plus PPP
  SynCdrNoPpp,       ///< CDS on real + synthetic pools
  Distill,           ///< similarity distillation from the semantic oracle
};

const char* method_name(Method m);
Method parse_method(const std::string& name);

struct ExperimentConfig {
  std::string name = "default";
  Method method = Method::SynCdr;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  /// Train both category assignments per seed and average them.
  bool swap_protocol = true;
  Featurizer analysis_featurizer = Featurizer::Identity;

  BenchmarkConfig benchmark;
  SplitSpec split;
  std::string translation_preset = "ideal";
  TranslationConfig translation = TranslationConfig::preset("ideal");
  LossWeights loss = default_loss_weights();
  TrainConfig train;
  EncoderConfig encoder;

  // Sweep section (only read by the sweep command).
  std::string sweep_param;
  std::vector<double> sweep_values;

  static LossWeights default_loss_weights();

  /// Encoder input width follows the benchmark's ambient dimension.
  EncoderConfig resolved_encoder() const;
  void validate() const;
};

/// Applies one `key = value` assignment; throws ConfigError on unknown keys
/// or malformed values.
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);

ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::string& path);

/// Canonical text form; parse_config(render_config(c)) reproduces c.
std::string render_config(const ExperimentConfig& cfg);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace syncdr
