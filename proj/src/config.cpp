#include "syncdr/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "syncdr/errors.hpp"

namespace syncdr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

int to_small_int(const std::string& key, const std::string& v) {
  const long long x = to_int(key, v);
  if (x < -1'000'000'000LL || x > 1'000'000'000LL) throw ConfigError(key + ": value out of range");
  return static_cast<int>(x);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"experiment.name", [](auto& c, auto&, auto& v) { c.name = v; }},
      {"experiment.method", [](auto& c, auto&, auto& v) { c.method = parse_method(v); }},
      {"experiment.seeds",
       [](auto& c, auto& k, auto& v) {
         c.seeds.clear();
         for (const auto& s : split_list(v)) c.seeds.push_back(to_u64(k, s));
       }},
      {"experiment.featurizer",
       [](auto& c, auto& k, auto& v) {
         if (v == "identity") c.analysis_featurizer = Featurizer::Identity;
         else if (v == "semantic") c.analysis_featurizer = Featurizer::Semantic;
         else throw ConfigError(k + ": expected identity or semantic");
       }},
      {"benchmark.num_classes", [](auto& c, auto& k, auto& v) { c.benchmark.num_classes = to_small_int(k, v); }},
      {"benchmark.samples_per_class",
       [](auto& c, auto& k, auto& v) { c.benchmark.samples_per_class = to_small_int(k, v); }},
      {"benchmark.latent_dim", [](auto& c, auto& k, auto& v) { c.benchmark.latent_dim = to_small_int(k, v); }},
      {"benchmark.ambient_dim", [](auto& c, auto& k, auto& v) { c.benchmark.ambient_dim = to_small_int(k, v); }},
      {"benchmark.within_class_std",
       [](auto& c, auto& k, auto& v) { c.benchmark.within_class_std = to_double(k, v); }},
      {"benchmark.domain_gap", [](auto& c, auto& k, auto& v) { c.benchmark.domain_gap = to_double(k, v); }},
      {"benchmark.master_seed", [](auto& c, auto& k, auto& v) { c.benchmark.master_seed = to_u64(k, v); }},
      {"split.train_frac", [](auto& c, auto& k, auto& v) { c.split.train_frac = to_double(k, v); }},
      {"split.val_frac", [](auto& c, auto& k, auto& v) { c.split.val_frac = to_double(k, v); }},
      {"split.test_frac", [](auto& c, auto& k, auto& v) { c.split.test_frac = to_double(k, v); }},
      {"split.overlap", [](auto& c, auto& k, auto& v) { c.split.overlap_frac = to_double(k, v); }},
      {"split.seed", [](auto& c, auto& k, auto& v) { c.split.split_seed = to_u64(k, v); }},
      {"split.swap", [](auto& c, auto& k, auto& v) { c.swap_protocol = to_bool(k, v); }},
      {"translation.preset",
       [](auto& c, auto&, auto& v) {
         const std::uint64_t seed = c.translation.seed;
         c.translation = TranslationConfig::preset(v);
         c.translation.seed = seed;
         c.translation_preset = v;
       }},
      {"translation.p_keep",
       [](auto& c, auto& k, auto& v) {
         c.translation.p_keep = to_double(k, v);
         c.translation_preset = "custom";
       }},
      {"translation.edit_strength",
       [](auto& c, auto& k, auto& v) {
         c.translation.edit_strength = to_double(k, v);
         c.translation_preset = "custom";
       }},
      {"translation.noise",
       [](auto& c, auto& k, auto& v) {
         c.translation.noise = to_double(k, v);
         c.translation_preset = "custom";
       }},
      {"translation.seed", [](auto& c, auto& k, auto& v) { c.translation.seed = to_u64(k, v); }},
      {"loss.lambda_cdm", [](auto& c, auto& k, auto& v) { c.loss.lambda_cdm = to_double(k, v); }},
      {"loss.tau_ppp", [](auto& c, auto& k, auto& v) { c.loss.tau_ppp = to_double(k, v); }},
      {"loss.tau_bank", [](auto& c, auto& k, auto& v) { c.loss.tau_bank = to_double(k, v); }},
      {"loss.bank_momentum", [](auto& c, auto& k, auto& v) { c.loss.bank_momentum = to_double(k, v); }},
      {"train.learning_rate", [](auto& c, auto& k, auto& v) { c.train.learning_rate = to_double(k, v); }},
      {"train.momentum", [](auto& c, auto& k, auto& v) { c.train.momentum = to_double(k, v); }},
      {"train.batch_size", [](auto& c, auto& k, auto& v) { c.train.batch_size = to_small_int(k, v); }},
      {"train.epochs", [](auto& c, auto& k, auto& v) { c.train.epochs = to_small_int(k, v); }},
      {"train.seed", [](auto& c, auto& k, auto& v) { c.train.seed = to_u64(k, v); }},
      {"encoder.hidden_dims",
       [](auto& c, auto& k, auto& v) {
         c.encoder.hidden_dims.clear();
         for (const auto& s : split_list(v)) c.encoder.hidden_dims.push_back(to_small_int(k, s));
       }},
      {"encoder.output_dim", [](auto& c, auto& k, auto& v) { c.encoder.output_dim = to_small_int(k, v); }},
      {"encoder.init_seed", [](auto& c, auto& k, auto& v) { c.encoder.init_seed = to_u64(k, v); }},
      {"sweep.param", [](auto& c, auto&, auto& v) { c.sweep_param = v; }},
      {"sweep.values",
       [](auto& c, auto& k, auto& v) {
         c.sweep_values.clear();
         for (const auto& s : split_list(v)) c.sweep_values.push_back(to_double(k, s));
       }},
  };
  return table;
}

template <typename T>
std::string join(const std::vector<T>& v, std::string (*fmt)(T)) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += fmt(v[i]);
  }
  return out;
}

}  // namespace

const char* method_name(Method m) {
  switch (m) {
    case Method::ImagenetInitOnly: return "imagenet-init-only";
    case Method::InDomainId: return "in-domain-id";
    case Method::Cds: return "cds";
    case Method::SynCdr: return "syncdr";
    case Method::SynCdrNoPpp: return "syncdr-no-ppp";
    case Method::Distill: return "distill";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::ImagenetInitOnly, Method::InDomainId, Method::Cds, Method::SynCdr, Method::SynCdrNoPpp,
                   Method::Distill}) {
    if (name == method_name(m)) return m;
  }
  throw ConfigError("unknown method '" + name +
                    "' (expected imagenet-init-only, in-domain-id, cds, syncdr, syncdr-no-ppp or distill)");
}

LossWeights ExperimentConfig::default_loss_weights() {
  LossWeights w;
  w.tau_ppp = 0.05;
  return w;
}

EncoderConfig ExperimentConfig::resolved_encoder() const {
  EncoderConfig e = encoder;
  e.input_dim = benchmark.ambient_dim;
  return e;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("experiment.seeds must not be empty");
  if (name.empty() || name.find_first_of(",/\"\n") != std::string::npos) {
    throw ConfigError("experiment.name must be nonempty and free of ',', '/', '\"' and newlines");
  }
  benchmark.validate();
  split.validate();
  translation.validate();
  loss.validate();
  train.validate();
  resolved_encoder().validate();
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  }
  return std::string(buf, ptr);
}

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown configuration key '" + key + "'");
  it->second(cfg, key, value);
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  ExperimentConfig cfg;
  std::stringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

std::string render_config(const ExperimentConfig& c) {
  std::ostringstream out;
  auto u64 = +[](std::uint64_t x) { return std::to_string(x); };
  auto i32 = +[](int x) { return std::to_string(x); };
  auto dbl = +[](double x) { return format_double(x); };
  out << "experiment.name = " << c.name << '\n'
      << "experiment.method = " << method_name(c.method) << '\n'
      << "experiment.seeds = " << join(c.seeds, u64) << '\n'
      << "experiment.featurizer = " << (c.analysis_featurizer == Featurizer::Identity ? "identity" : "semantic")
      << '\n'
      << "benchmark.num_classes = " << c.benchmark.num_classes << '\n'
      << "benchmark.samples_per_class = " << c.benchmark.samples_per_class << '\n'
      << "benchmark.latent_dim = " << c.benchmark.latent_dim << '\n'
      << "benchmark.ambient_dim = " << c.benchmark.ambient_dim << '\n'
      << "benchmark.within_class_std = " << dbl(c.benchmark.within_class_std) << '\n'
      << "benchmark.domain_gap = " << dbl(c.benchmark.domain_gap) << '\n'
      << "benchmark.master_seed = " << c.benchmark.master_seed << '\n'
      << "split.train_frac = " << dbl(c.split.train_frac) << '\n'
      << "split.val_frac = " << dbl(c.split.val_frac) << '\n'
      << "split.test_frac = " << dbl(c.split.test_frac) << '\n'
      << "split.overlap = " << dbl(c.split.overlap_frac) << '\n'
      << "split.seed = " << c.split.split_seed << '\n'
      << "split.swap = " << (c.swap_protocol ? "true" : "false") << '\n'
      << "translation.p_keep = " << dbl(c.translation.p_keep) << '\n'
      << "translation.edit_strength = " << dbl(c.translation.edit_strength) << '\n'
      << "translation.noise = " << dbl(c.translation.noise) << '\n'
      << "translation.seed = " << c.translation.seed << '\n'
      << "loss.lambda_cdm = " << dbl(c.loss.lambda_cdm) << '\n'
      << "loss.tau_ppp = " << dbl(c.loss.tau_ppp) << '\n'
      << "loss.tau_bank = " << dbl(c.loss.tau_bank) << '\n'
      << "loss.bank_momentum = " << dbl(c.loss.bank_momentum) << '\n'
      << "train.learning_rate = " << dbl(c.train.learning_rate) << '\n'
      << "train.momentum = " << dbl(c.train.momentum) << '\n'
      << "train.batch_size = " << c.train.batch_size << '\n'
      << "train.epochs = " << c.train.epochs << '\n'
      << "train.seed = " << c.train.seed << '\n'
      << "encoder.hidden_dims = " << join(c.encoder.hidden_dims, i32) << '\n'
      << "encoder.output_dim = " << c.encoder.output_dim << '\n'
      << "encoder.init_seed = " << c.encoder.init_seed << '\n';
  if (!c.sweep_param.empty()) {
    out << "sweep.param = " << c.sweep_param << '\n' << "sweep.values = " << join(c.sweep_values, dbl) << '\n';
  }
  return out.str();
}

}  // namespace syncdr
