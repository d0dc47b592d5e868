#include "syncdr/encoder.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "syncdr/errors.hpp"
#include "syncdr/rng.hpp"

namespace syncdr {

namespace {

constexpr char kMagic[8] = {'S', 'Y', 'N', 'C', 'D', 'R', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

std::vector<int> layer_dims(const EncoderConfig& c) {
  std::vector<int> dims{c.input_dim};
  dims.insert(dims.end(), c.hidden_dims.begin(), c.hidden_dims.end());
  dims.push_back(c.output_dim);
  return dims;
}

}  // namespace

void EncoderConfig::validate() const {
  if (input_dim <= 0 || output_dim <= 0) throw ConfigError("encoder: dimensions must be positive");
  for (int h : hidden_dims) {
    if (h <= 0) throw ConfigError("encoder: hidden dimensions must be positive");
  }
}

std::vector<ad::Tensor> EncoderParams::tensors() const {
  std::vector<ad::Tensor> out;
  for (const EncoderLayer& l : layers) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

EncoderParams EncoderParams::clone() const {
  EncoderParams copy;
  copy.config = config;
  for (const EncoderLayer& l : layers) copy.layers.push_back({l.weight.clone(), l.bias.clone()});
  return copy;
}

bool EncoderParams::bitwise_equal(const EncoderParams& other) const {
  if (!(config == other.config) || layers.size() != other.layers.size()) return false;
  const auto mine = tensors();
  const auto theirs = other.tensors();
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].shape() != theirs[i].shape()) return false;
    if (std::memcmp(mine[i].values().data(), theirs[i].values().data(),
                    mine[i].size() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

EncoderParams init_encoder(const EncoderConfig& config) {
  config.validate();
  EncoderParams p;
  p.config = config;
  RandomStream stream(config.init_seed, "encoder-init");
  const auto dims = layer_dims(config);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const auto fan_in = static_cast<std::size_t>(dims[l]);
    const auto fan_out = static_cast<std::size_t>(dims[l + 1]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> w(fan_in * fan_out);
    for (double& x : w) x = stream.uniform(-bound, bound);
    p.layers.push_back({ad::Tensor::parameter({fan_in, fan_out}, std::move(w)),
                        ad::Tensor::parameter({fan_out}, std::vector<double>(fan_out, 0.0))});
  }
  return p;
}

ad::Tensor encoder_forward(ad::Graph& graph, const EncoderParams& params, const ad::Tensor& batch) {
  if (batch.rank() != 2 || batch.cols() != static_cast<std::size_t>(params.config.input_dim)) {
    throw DimensionError("encoder: batch " + ad::shape_string(batch.shape()) + " does not have " +
                         std::to_string(params.config.input_dim) + " columns");
  }
  ad::Tensor h = batch;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    h = graph.add_row_bias(graph.matmul(h, params.layers[l].weight), params.layers[l].bias);
    if (l + 1 < params.layers.size()) h = graph.tanh(h);
  }
  try {
    return graph.row_l2_normalize(h);
  } catch (const DegenerateInputError& e) {
    throw DegenerateInputError(std::string("encoder output collapsed: ") + e.what());
  }
}

Matrix encode(const EncoderParams& params, const Matrix& batch) {
  if (batch.rows == 0) return Matrix(0, static_cast<std::size_t>(params.config.output_dim));
  ad::Graph graph;
  return encoder_forward(graph, params, ad::Tensor::from_matrix(batch)).to_matrix();
}

void save_checkpoint(const std::string& path, const EncoderParams& params) {
  nlohmann::json header;
  header["input_dim"] = params.config.input_dim;
  header["hidden_dims"] = params.config.hidden_dims;
  header["output_dim"] = params.config.output_dim;
  header["init_seed"] = params.config.init_seed;
  nlohmann::json shapes = nlohmann::json::array();
  for (const ad::Tensor& t : params.tensors()) shapes.push_back(t.shape());
  header["shapes"] = shapes;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const ad::Tensor& t : params.tensors()) {
    out.write(reinterpret_cast<const char*>(t.values().data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw DataError("failed writing checkpoint " + path);
}

EncoderParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw DataError(path + ": not a checkpoint file");
  }
  if (version != kVersion) {
    throw DataError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  if (len > (1u << 24)) throw DataError(path + ": implausible header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));

  EncoderParams p;
  try {
    const auto header = nlohmann::json::parse(text);
    p.config.input_dim = header.at("input_dim").get<int>();
    p.config.hidden_dims = header.at("hidden_dims").get<std::vector<int>>();
    p.config.output_dim = header.at("output_dim").get<int>();
    p.config.init_seed = header.at("init_seed").get<std::uint64_t>();
    p.config.validate();
    const auto shapes = header.at("shapes").get<std::vector<ad::Shape>>();
    const auto dims = layer_dims(p.config);
    if (shapes.size() != 2 * (dims.size() - 1)) throw DataError(path + ": tensor count mismatch");
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      const ad::Shape ws{static_cast<std::size_t>(dims[l]), static_cast<std::size_t>(dims[l + 1])};
      const ad::Shape bs{static_cast<std::size_t>(dims[l + 1])};
      if (shapes[2 * l] != ws || shapes[2 * l + 1] != bs) {
        throw DataError(path + ": tensor shapes disagree with config");
      }
      std::vector<double> w(ws[0] * ws[1]);
      std::vector<double> b(bs[0]);
      in.read(reinterpret_cast<char*>(w.data()), static_cast<std::streamsize>(w.size() * sizeof(double)));
      in.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(b.size() * sizeof(double)));
      if (!in) throw DataError(path + ": truncated tensor data");
      p.layers.push_back({ad::Tensor::parameter(ws, std::move(w)), ad::Tensor::parameter(bs, std::move(b))});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": malformed header: " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(path + ": " + e.what());
  }
  return p;
}

}  // namespace syncdr
