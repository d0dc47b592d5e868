#pragma once

// MLP feature extractor mapping observables onto the unit hypersphere:
// (affine, tanh)* then a final affine layer and row L2 normalization.

#include <cstdint>
#include <string>
#include <vector>

#include "syncdr/autodiff.hpp"
#include "syncdr/matrix.hpp"

namespace syncdr {

struct EncoderConfig {
  int input_dim = 32;
  std::vector<int> hidden_dims = {64, 64};
  int output_dim = 16;
  std::uint64_t init_seed = 3;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

struct EncoderLayer {
  ad::Tensor weight;  ///< fan_in × fan_out
  ad::Tensor bias;    ///< fan_out
};

struct EncoderParams {
  EncoderConfig config;
  std::vector<EncoderLayer> layers;

  /// Flat list of every trainable tensor, weights before biases per layer.
  std::vector<ad::Tensor> tensors() const;
  /// Deep copy; the copy shares no buffers with the original.
  EncoderParams clone() const;
  bool bitwise_equal(const EncoderParams& other) const;
};

EncoderParams init_encoder(const EncoderConfig& config);

/// Differentiable forward pass recorded into `graph`.
ad::Tensor encoder_forward(ad::Graph& graph, const EncoderParams& params, const ad::Tensor& batch);

/// Evaluation-only forward pass.
Matrix encode(const EncoderParams& params, const Matrix& batch);

// Checkpoint: 8-byte magic, u32 version, u64 header length, JSON header
// (config and tensor shapes), then every tensor's doubles in little-endian
// IEEE-754 order. Round trips are bit-exact.
void save_checkpoint(const std::string& path, const EncoderParams& params);
EncoderParams load_checkpoint(const std::string& path);

}  // namespace syncdr
