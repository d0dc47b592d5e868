#include "syncdr/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "syncdr/errors.hpp"

namespace syncdr {

namespace {

// Rendering-map scales. Weights of unit variance put tanh pre-activations of
// unit-norm latents around ±1, which is nonlinear without saturating.
constexpr double kWeightStd = 1.0;
constexpr double kBiasStd = 0.5;

DomainMap random_map(const BenchmarkConfig& cfg, std::string_view tag) {
  RandomStream stream(cfg.master_seed, tag);
  DomainMap map;
  map.weight = Matrix(static_cast<std::size_t>(cfg.ambient_dim),
                      static_cast<std::size_t>(cfg.latent_dim));
  for (double& w : map.weight.data) w = kWeightStd * stream.normal();
  map.bias.resize(static_cast<std::size_t>(cfg.ambient_dim));
  for (double& b : map.bias) b = kBiasStd * stream.normal();
  return map;
}

std::int64_t real_instance_id(const BenchmarkConfig& cfg, Domain d, int c, int i) {
  const auto n = static_cast<std::int64_t>(cfg.samples_per_class);
  return static_cast<std::int64_t>(d) * cfg.num_classes * n + c * n + i;
}

}  // namespace

void BenchmarkConfig::validate() const {
  if (num_classes < 2) throw ConfigError("benchmark: num_classes must be at least 2");
  if (samples_per_class < 1) throw ConfigError("benchmark: samples_per_class must be positive");
  if (latent_dim < 1 || ambient_dim < 1) throw ConfigError("benchmark: dimensions must be positive");
  if (latent_dim > ambient_dim) throw ConfigError("benchmark: latent_dim must not exceed ambient_dim");
  if (!(within_class_std >= 0.0)) throw ConfigError("benchmark: within_class_std must be >= 0");
  if (!(domain_gap >= 0.0 && domain_gap <= 1.0)) {
    throw ConfigError("benchmark: domain_gap must lie in [0, 1]");
  }
}

std::vector<double> DomainMap::render(std::span<const double> latent) const {
  std::vector<double> out(weight.rows);
  for (std::size_t r = 0; r < weight.rows; ++r) {
    out[r] = std::tanh(dot(weight.row(r), latent) + bias[r]);
  }
  normalize_in_place(out);
  return out;
}

std::vector<double> Dataset::sample_latent(int c, RandomStream& stream) const {
  const auto proto = prototypes.row(static_cast<std::size_t>(c));
  std::vector<double> z(proto.begin(), proto.end());
  for (double& x : z) x += config.within_class_std * stream.normal();
  normalize_in_place(z);
  return z;
}

Dataset generate_benchmark(const BenchmarkConfig& config) {
  config.validate();
  Dataset ds;
  ds.config = config;

  const auto C = static_cast<std::size_t>(config.num_classes);
  const auto L = static_cast<std::size_t>(config.latent_dim);
  ds.prototypes = Matrix(C, L);
  RandomStream proto_stream(config.master_seed, "prototypes");
  for (std::size_t c = 0; c < C; ++c) {
    auto row = ds.prototypes.row(c);
    for (double& x : row) x = proto_stream.normal();
    normalize_in_place(row);
  }

  ds.map_a = random_map(config, "map_a");
  const DomainMap independent = random_map(config, "map_b");
  const double g = config.domain_gap;
  ds.map_b.weight = Matrix(ds.map_a.weight.rows, ds.map_a.weight.cols);
  for (std::size_t i = 0; i < ds.map_b.weight.data.size(); ++i) {
    ds.map_b.weight.data[i] = (1.0 - g) * ds.map_a.weight.data[i] + g * independent.weight.data[i];
  }
  ds.map_b.bias.resize(ds.map_a.bias.size());
  for (std::size_t i = 0; i < ds.map_b.bias.size(); ++i) {
    ds.map_b.bias[i] = (1.0 - g) * ds.map_a.bias[i] + g * independent.bias[i];
  }

  ds.samples.reserve(2 * C * static_cast<std::size_t>(config.samples_per_class));
  for (Domain d : {Domain::A, Domain::B}) {
    for (int c = 0; c < config.num_classes; ++c) {
      for (int i = 0; i < config.samples_per_class; ++i) {
        DomainSample s;
        s.domain = d;
        s.class_id = c;
        s.source_class_id = c;
        s.instance_id = real_instance_id(config, d, c, i);
        RandomStream stream(config.master_seed, "latent", static_cast<std::uint64_t>(s.instance_id));
        s.latent = ds.sample_latent(c, stream);
        s.vec = ds.map(d).render(s.latent);
        ds.samples.push_back(std::move(s));
      }
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Splits

void SplitSpec::validate() const {
  for (double f : {train_frac, val_frac, test_frac}) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("split: fractions must lie in [0, 1]");
  }
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
    throw ConfigError("split: fractions must sum to 1");
  }
  if (!(overlap_frac >= 0.0 && overlap_frac <= 1.0)) {
    throw ConfigError("split: overlap_frac must lie in [0, 1]");
  }
}

CategorySplit split_categories(int num_classes, double overlap_frac, std::uint64_t seed) {
  if (num_classes < 2) throw ConfigError("split_categories: need at least 2 classes");
  if (!(overlap_frac >= 0.0 && overlap_frac <= 1.0)) {
    throw ConfigError("split_categories: overlap fraction must lie in [0, 1]");
  }
  const int C = num_classes;
  int k = static_cast<int>(std::lround(C / (2.0 - overlap_frac)));
  // s = 2k - C must lie in [0, k]; when round(overlap * k) disagrees, s is
  // reduced first, which is what deriving it from k does.
  k = std::clamp(k, (C + 1) / 2, C);
  const int s = 2 * k - C;

  std::vector<int> perm(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) perm[static_cast<std::size_t>(c)] = c;
  RandomStream stream(seed, "categories");
  stream.shuffle(perm);

  CategorySplit out;
  out.per_domain = k;
  out.shared = s;
  out.classes_a.assign(perm.begin(), perm.begin() + k);
  out.classes_b.assign(perm.begin() + (k - s), perm.end());
  std::sort(out.classes_a.begin(), out.classes_a.end());
  std::sort(out.classes_b.begin(), out.classes_b.end());
  return out;
}

const char* split_part_name(SplitPart p) {
  switch (p) {
    case SplitPart::Train: return "train";
    case SplitPart::Val: return "val";
    case SplitPart::Test: return "test";
  }
  return "?";
}

DataSplit make_split(const Dataset& dataset, const SplitSpec& spec) {
  spec.validate();
  const BenchmarkConfig& cfg = dataset.config;

  DataSplit out;
  out.categories = split_categories(cfg.num_classes, spec.overlap_frac,
                                    mix_seed(spec.split_seed, tag_hash("category-split")));
  if (spec.swap_categories) std::swap(out.categories.classes_a, out.categories.classes_b);

  // Group sample indices by (domain, class), in generation order.
  std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const DomainSample& s = dataset.samples[i];
    if (s.is_synthetic) continue;
    groups[{static_cast<int>(s.domain), s.class_id}].push_back(i);
  }

  const std::uint64_t stratify_seed = mix_seed(spec.split_seed, tag_hash("stratify"));
  for (auto& [key, members] : groups) {
    const auto n = static_cast<int>(members.size());
    if (n < 4) {
      throw ConfigError("make_split: class " + std::to_string(key.second) + " in domain " +
                        domain_name(static_cast<Domain>(key.first)) + " has " +
                        std::to_string(n) + " samples; at least 4 are needed to stratify");
    }
    const int n_train = static_cast<int>(std::lround(spec.train_frac * n));
    const int n_val = static_cast<int>(std::lround(spec.val_frac * n));
    RandomStream stream(stratify_seed, "group",
                        static_cast<std::uint64_t>(key.first) * 1000003ULL +
                            static_cast<std::uint64_t>(key.second));
    stream.shuffle(members);
    for (int j = 0; j < n; ++j) {
      const SplitPart part = j < n_train           ? SplitPart::Train
                             : j < n_train + n_val ? SplitPart::Val
                                                   : SplitPart::Test;
      out.assignment[dataset.samples[members[static_cast<std::size_t>(j)]].instance_id] = part;
    }
  }

  auto in = [](const std::vector<int>& sorted, int c) {
    return std::binary_search(sorted.begin(), sorted.end(), c);
  };
  for (const DomainSample& s : dataset.samples) {
    if (s.is_synthetic) continue;
    const SplitPart part = out.assignment.at(s.instance_id);
    const bool is_a = s.domain == Domain::A;
    switch (part) {
      case SplitPart::Train:
        if (is_a && in(out.categories.classes_a, s.class_id)) out.train_a.push_back(s);
        if (!is_a && in(out.categories.classes_b, s.class_id)) out.train_b.push_back(s);
        break;
      case SplitPart::Val:
        (is_a ? out.val_a : out.val_b).push_back(s);
        break;
      case SplitPart::Test:
        (is_a ? out.test_a : out.test_b).push_back(s);
        break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Translation oracle

void TranslationConfig::validate() const {
  if (!(p_keep >= 0.0 && p_keep <= 1.0)) throw ConfigError("translation: p_keep must lie in [0, 1]");
  if (!(edit_strength >= 0.0 && edit_strength <= 1.0)) {
    throw ConfigError("translation: edit_strength must lie in [0, 1]");
  }
  if (!(noise >= 0.0)) throw ConfigError("translation: noise must be >= 0");
}

TranslationConfig TranslationConfig::preset(const std::string& name) {
  TranslationConfig cfg;
  if (name == "ideal") {
    cfg.p_keep = 1.0;
    cfg.edit_strength = 1.0;
  } else if (name == "high-fidelity") {
    cfg.p_keep = 0.9;
    cfg.edit_strength = 0.9;
  } else if (name == "low-edit") {
    cfg.p_keep = 0.95;
    cfg.edit_strength = 0.3;
  } else if (name == "noisy") {
    cfg.p_keep = 0.6;
    cfg.edit_strength = 1.0;
  } else {
    throw ConfigError("unknown translation preset '" + name +
                      "' (expected ideal, high-fidelity, low-edit or noisy)");
  }
  return cfg;
}

std::uint64_t translation_stream_key(const TranslationConfig& cfg, std::int64_t instance_id,
                                     Domain target) {
  return mix_seed(mix_seed(cfg.seed, static_cast<std::uint64_t>(instance_id)),
                  static_cast<std::uint64_t>(target) + 1);
}

DomainSample translate(const Dataset& dataset, const DomainSample& sample, Domain target,
                       const TranslationConfig& cfg) {
  if (sample.is_synthetic) {
    throw ContractViolation("translate: sample " + std::to_string(sample.instance_id) +
                            " is already synthetic");
  }
  if (target == sample.domain) {
    throw ContractViolation("translate: target domain must differ from the source domain");
  }
  if (sample.latent.empty()) {
    throw ContractViolation("translate: sample " + std::to_string(sample.instance_id) +
                            " carries no latent");
  }

  RandomStream stream(translation_stream_key(cfg, sample.instance_id, target));
  const int C = dataset.config.num_classes;

  DomainSample out;
  out.domain = target;
  out.instance_id = kSyntheticIdBase + sample.instance_id;
  out.is_synthetic = true;
  out.pair_id = sample.instance_id;
  out.source_class_id = sample.class_id;

  if (stream.uniform01() < cfg.p_keep) {
    out.class_id = sample.class_id;
    out.latent = sample.latent;
  } else {
    int other = static_cast<int>(stream.index(static_cast<std::size_t>(C - 1)));
    if (other >= sample.class_id) ++other;
    out.class_id = other;
    out.latent = dataset.sample_latent(other, stream);
  }

  const std::vector<double> rendered = dataset.map(target).render(out.latent);
  const double a = cfg.edit_strength;
  if (cfg.noise == 0.0 && a == 0.0) {
    out.vec = sample.vec;
  } else if (cfg.noise == 0.0 && a == 1.0) {
    out.vec = rendered;
  } else {
    out.vec.resize(rendered.size());
    for (std::size_t i = 0; i < rendered.size(); ++i) {
      out.vec[i] = (1.0 - a) * sample.vec[i] + a * rendered[i];
      if (cfg.noise > 0.0) out.vec[i] += cfg.noise * stream.normal();
    }
    if (normalize_in_place(out.vec) < 1e-12) {
      throw DegenerateInputError("translate: blended vector vanished for sample " +
                                 std::to_string(sample.instance_id));
    }
  }
  return out;
}

std::vector<DomainSample> generate_synthetic_set(const Dataset& dataset,
                                                 std::span<const DomainSample> real_set,
                                                 Domain target, const TranslationConfig& cfg) {
  cfg.validate();
  std::vector<DomainSample> out;
  out.reserve(real_set.size());
  for (const DomainSample& s : real_set) out.push_back(translate(dataset, s, target, cfg));
  return out;
}

// ---------------------------------------------------------------------------
// Export / import

namespace {

using nlohmann::json;

json sample_record(const DomainSample& s, const std::string& split, bool with_oracle) {
  json j;
  j["instance_id"] = s.instance_id;
  j["domain"] = domain_name(s.domain);
  j["class_id"] = s.class_id;
  j["source_class_id"] = s.source_class_id;
  j["split"] = split;
  j["is_synthetic"] = s.is_synthetic;
  j["pair_id"] = s.pair_id ? json(*s.pair_id) : json(nullptr);
  j["vec"] = s.vec;
  if (with_oracle) j["latent"] = s.latent;
  return j;
}

}  // namespace

void export_dataset(const std::string& dir, const Dataset& dataset, const SplitSpec& spec,
                    const DataSplit& split, const TranslationConfig& translation,
                    std::span<const DomainSample> synthetic, const ExportOptions& options) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  const BenchmarkConfig& b = dataset.config;
  json manifest;
  manifest["format_version"] = 1;
  manifest["benchmark"] = {{"num_classes", b.num_classes},
                           {"samples_per_class", b.samples_per_class},
                           {"latent_dim", b.latent_dim},
                           {"ambient_dim", b.ambient_dim},
                           {"within_class_std", b.within_class_std},
                           {"domain_gap", b.domain_gap},
                           {"master_seed", b.master_seed}};
  manifest["split"] = {{"train_frac", spec.train_frac},     {"val_frac", spec.val_frac},
                       {"test_frac", spec.test_frac},       {"overlap_frac", spec.overlap_frac},
                       {"split_seed", spec.split_seed},     {"swap_categories", spec.swap_categories}};
  manifest["translation"] = {{"p_keep", translation.p_keep},
                             {"edit_strength", translation.edit_strength},
                             {"noise", translation.noise},
                             {"seed", translation.seed}};
  manifest["categories"] = {{"classes_a", split.categories.classes_a},
                            {"classes_b", split.categories.classes_b},
                            {"per_domain", split.categories.per_domain},
                            {"shared", split.categories.shared}};
  manifest["with_oracle"] = options.with_oracle;
  manifest["samples_file"] = "samples.jsonl";

  auto count = [](const std::vector<DomainSample>& v) { return v.size(); };
  manifest["counts"] = {{"train_a", count(split.train_a)}, {"train_b", count(split.train_b)},
                        {"val_a", count(split.val_a)},     {"val_b", count(split.val_b)},
                        {"test_a", count(split.test_a)},   {"test_b", count(split.test_b)},
                        {"synthetic", synthetic.size()}};

  std::vector<std::int64_t> pool_ids;
  for (const auto* v : {&split.train_a, &split.train_b}) {
    for (const DomainSample& s : *v) pool_ids.push_back(s.instance_id);
  }
  std::sort(pool_ids.begin(), pool_ids.end());

  std::ofstream samples(fs::path(dir) / "samples.jsonl", std::ios::binary);
  if (!samples) throw DataError("cannot write " + (fs::path(dir) / "samples.jsonl").string());
  for (const DomainSample& s : dataset.samples) {
    const SplitPart part = split.assignment.at(s.instance_id);
    std::string name = split_part_name(part);
    if (part == SplitPart::Train &&
        !std::binary_search(pool_ids.begin(), pool_ids.end(), s.instance_id)) {
      name = "unused";
    }
    samples << sample_record(s, name, options.with_oracle).dump() << '\n';
  }
  for (const DomainSample& s : synthetic) {
    samples << sample_record(s, "train", options.with_oracle).dump() << '\n';
  }

  std::ofstream mf(fs::path(dir) / "manifest.json", std::ios::binary);
  if (!mf) throw DataError("cannot write " + (fs::path(dir) / "manifest.json").string());
  mf << manifest.dump(2) << '\n';
}

std::vector<DomainSample> import_samples(const std::string& samples_jsonl_path) {
  std::ifstream in(samples_jsonl_path, std::ios::binary);
  if (!in) throw DataError("cannot open " + samples_jsonl_path);
  std::vector<DomainSample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      DomainSample s;
      s.instance_id = j.at("instance_id").get<std::int64_t>();
      const std::string d = j.at("domain").get<std::string>();
      if (d != "A" && d != "B") throw DataError("bad domain '" + d + "'");
      s.domain = d == "A" ? Domain::A : Domain::B;
      s.class_id = j.at("class_id").get<int>();
      s.source_class_id = j.value("source_class_id", s.class_id);
      s.is_synthetic = j.at("is_synthetic").get<bool>();
      if (!j.at("pair_id").is_null()) s.pair_id = j.at("pair_id").get<std::int64_t>();
      s.vec = j.at("vec").get<std::vector<double>>();
      if (j.contains("latent")) s.latent = j.at("latent").get<std::vector<double>>();
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw DataError(samples_jsonl_path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(samples_jsonl_path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace syncdr
