#include "trivqa/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "trivqa/binary_io.hpp"

namespace trivqa::cli {

using nlohmann::json;

ConfigError::ConfigError(std::string field, const std::string& message)
    : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}

namespace {

/// Reads one JSON object, tracking consumed keys so leftovers can be rejected.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    const json* v = find(key);
    if (!v) return;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v->is_boolean()) throw ConfigError(field(key), "expected a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v->is_string()) throw ConfigError(field(key), "expected a string");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v->is_number()) throw ConfigError(field(key), "expected a number");
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v->is_number_unsigned()) throw ConfigError(field(key), "expected a nonnegative integer");
    } else {
      if (!v->is_number_integer()) throw ConfigError(field(key), "expected an integer");
    }
    out = v->get<T>();
  }

  Section child(const std::string& key) {
    const json* v = find(key);
    static const json empty = json::object();
    return Section(v ? *v : empty, field(key));
  }

  void reject_unknown() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(field(it.key()), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_attributes(Section& s, AttributeSchema& schema) {
  const json* v = s.find("attributes");
  if (!v) return;
  const std::string base = s.field("attributes");
  if (!v->is_array()) throw ConfigError(base, "expected an array");
  schema.attributes.clear();
  for (std::size_t i = 0; i < v->size(); ++i) {
    Section a((*v)[i], base + "[" + std::to_string(i) + "]");
    Attribute attr;
    a.read("name", attr.name);
    const json* c = a.find("cardinality");
    if (!c || !c->is_number_integer()) throw ConfigError(a.field("cardinality"), "expected an integer");
    const auto card = c->get<long long>();
    if (card < 2) throw ConfigError(a.field("cardinality"), "must be >= 2, got " + std::to_string(card));
    attr.cardinality = static_cast<std::size_t>(card);
    a.reject_unknown();
    schema.attributes.push_back(std::move(attr));
  }
}

void require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw ConfigError(field, message);
}

}  // namespace

void RunConfig::validate() const {
  if (dataset.source == DatasetSource::synth) {
    const auto& s = dataset.synth;
    require(s.n >= 1, "dataset.synth.n", "must be >= 1");
    require(s.d_v >= 1, "dataset.synth.d_v", "must be >= 1");
    require(s.d_q >= 1, "dataset.synth.d_q", "must be >= 1");
    require(std::isfinite(s.noise_sigma) && s.noise_sigma >= 0.0, "dataset.synth.noise_sigma", "must be >= 0");
    require(std::isfinite(s.class_sep) && s.class_sep > 0.0, "dataset.synth.class_sep", "must be > 0");
    require(s.centers >= 1, "dataset.synth.centers", "must be >= 1");
    require(std::isfinite(s.context_scale) && s.context_scale >= 0.0, "dataset.synth.context_scale", "must be >= 0");
    require(std::isfinite(s.quality_spread) && s.quality_spread >= 0.0, "dataset.synth.quality_spread",
            "must be >= 0");
    require(s.attribute_coupling >= 0.0 && s.attribute_coupling <= 1.0, "dataset.synth.attribute_coupling",
            "must lie in [0, 1]");
    require(!s.schema.attributes.empty(), "dataset.synth.attributes", "at least one attribute is required");
    std::set<std::string> names;
    for (std::size_t i = 0; i < s.schema.size(); ++i) {
      const std::string f = "dataset.synth.attributes[" + std::to_string(i) + "]";
      require(!s.schema[i].name.empty(), f + ".name", "must be non-empty");
      require(names.insert(s.schema[i].name).second, f + ".name", "duplicate attribute '" + s.schema[i].name + "'");
      require(s.schema[i].cardinality >= 2, f + ".cardinality", "must be >= 2");
    }
  } else {
    require(!dataset.manifest.empty(), "dataset.manifest", "path required when source is manifest");
  }

  require(model.d >= 1, "model.d", "must be >= 1");

  for (auto t : loss::all_terms()) {
    const std::string f = std::string("loss.weights.") + loss::to_string(t);
    const double w = weights[t];
    require(std::isfinite(w) && w >= 0.0, f, "must be finite and >= 0");
    require(!(w > 0.0) || loss::term_active(mode, t), f,
            std::string("is positive but mode ") + loss::to_string(mode) + " excludes that term");
  }
  require(weights[loss::Term::ce_forward] > 0.0, "loss.weights.ce_forward", "must be > 0");

  require(std::isfinite(optimizer.base_lr) && optimizer.base_lr > 0.0, "optimizer.base_lr", "must be > 0");
  require(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0, "optimizer.momentum", "must lie in [0, 1)");
  require(std::isfinite(optimizer.decay_factor) && optimizer.decay_factor > 0.0, "optimizer.decay_factor",
          "must be > 0");
  require(optimizer.decay_period >= 1, "optimizer.decay_period", "must be >= 1");

  require(training.epochs >= 1, "training.epochs", "must be >= 1");
  require(training.batch_size >= 1, "training.batch_size", "must be >= 1");
  require(training.test_fraction > 0.0 && training.test_fraction < 1.0, "training.test_fraction",
          "must lie in (0, 1)");
  require(!out_dir.empty(), "out_dir", "must be non-empty");
}

model::ModelConfig RunConfig::model_config(std::size_t d_v, std::size_t d_q) const {
  model::ModelConfig m;
  m.d_v = d_v;
  m.d_q = d_q;
  m.d = model.d;
  m.forward_hidden_layers = model.forward_hidden_layers;
  m.reverse_hidden_layers = model.reverse_hidden_layers;
  m.diag_hidden_layers = model.diag_hidden_layers;
  m.fusion = model.fusion;
  m.reverse_stop_gradient = model.reverse_stop_gradient;
  return m;
}

data::SynthConfig RunConfig::synth_config() const {
  data::SynthConfig s = dataset.synth;
  s.seed = derive_seed(seed, 0);
  return s;
}

RunConfig parse_config(const json& j) {
  RunConfig cfg;
  Section root(j, "");
  root.read("seed", cfg.seed);
  std::string out_dir = cfg.out_dir.string();
  root.read("out_dir", out_dir);
  cfg.out_dir = out_dir;

  {
    Section ds = root.child("dataset");
    std::string source = "synth";
    ds.read("source", source);
    if (source == "synth") {
      cfg.dataset.source = DatasetSource::synth;
    } else if (source == "manifest") {
      cfg.dataset.source = DatasetSource::manifest;
    } else {
      throw ConfigError("dataset.source", "expected synth|manifest, got '" + source + "'");
    }
    std::string manifest;
    ds.read("manifest", manifest);
    cfg.dataset.manifest = manifest;
    Section s = ds.child("synth");
    auto& sc = cfg.dataset.synth;
    s.read("n", sc.n);
    s.read("d_v", sc.d_v);
    s.read("d_q", sc.d_q);
    s.read("noise_sigma", sc.noise_sigma);
    s.read("class_sep", sc.class_sep);
    s.read("centers", sc.centers);
    s.read("context_dim", sc.context_dim);
    s.read("context_scale", sc.context_scale);
    s.read("quality_spread", sc.quality_spread);
    s.read("attribute_coupling", sc.attribute_coupling);
    read_attributes(s, sc.schema);
    s.reject_unknown();
    ds.reject_unknown();
  }
  {
    Section m = root.child("model");
    m.read("d", cfg.model.d);
    m.read("forward_hidden_layers", cfg.model.forward_hidden_layers);
    m.read("reverse_hidden_layers", cfg.model.reverse_hidden_layers);
    m.read("diag_hidden_layers", cfg.model.diag_hidden_layers);
    std::string fusion = model::to_string(cfg.model.fusion);
    m.read("fusion", fusion);
    try {
      cfg.model.fusion = model::parse_fusion_mode(fusion);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("model.fusion", e.what());
    }
    m.read("reverse_stop_gradient", cfg.model.reverse_stop_gradient);
    m.reject_unknown();
  }
  {
    Section l = root.child("loss");
    std::string mode = loss::to_string(cfg.mode);
    l.read("mode", mode);
    try {
      cfg.mode = loss::parse_ablation_mode(mode);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("loss.mode", e.what());
    }
    cfg.weights = loss::LossWeights::for_mode(cfg.mode);
    Section w = l.child("weights");
    for (auto t : loss::all_terms()) w.read(loss::to_string(t), cfg.weights[t]);
    w.reject_unknown();
    l.reject_unknown();
  }
  {
    Section o = root.child("optimizer");
    o.read("base_lr", cfg.optimizer.base_lr);
    o.read("momentum", cfg.optimizer.momentum);
    o.read("decay_factor", cfg.optimizer.decay_factor);
    o.read("decay_period", cfg.optimizer.decay_period);
    o.read("decay_once", cfg.optimizer.decay_once);
    o.reject_unknown();
  }
  {
    Section t = root.child("training");
    t.read("epochs", cfg.training.epochs);
    t.read("batch_size", cfg.training.batch_size);
    t.read("test_fraction", cfg.training.test_fraction);
    t.read("normalize", cfg.training.normalize);
    t.reject_unknown();
  }
  root.reject_unknown();
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("--config", path.string() + ": " + e.what());
  }
  return parse_config(j);
}

json to_json(const RunConfig& cfg, bool include_out_dir) {
  json attrs = json::array();
  for (const auto& a : cfg.dataset.synth.schema.attributes) {
    attrs.push_back({{"name", a.name}, {"cardinality", a.cardinality}});
  }
  const auto& s = cfg.dataset.synth;
  json weights = json::object();
  for (auto t : loss::all_terms()) weights[loss::to_string(t)] = cfg.weights[t];
  json j{
      {"seed", cfg.seed},
      {"dataset",
       {{"source", cfg.dataset.source == DatasetSource::synth ? "synth" : "manifest"},
        {"manifest", cfg.dataset.manifest.generic_string()},
        {"synth",
         {{"n", s.n},
          {"d_v", s.d_v},
          {"d_q", s.d_q},
          {"noise_sigma", s.noise_sigma},
          {"class_sep", s.class_sep},
          {"centers", s.centers},
          {"context_dim", s.context_dim},
          {"context_scale", s.context_scale},
          {"quality_spread", s.quality_spread},
          {"attribute_coupling", s.attribute_coupling},
          {"attributes", attrs}}}}},
      {"model",
       {{"d", cfg.model.d},
        {"forward_hidden_layers", cfg.model.forward_hidden_layers},
        {"reverse_hidden_layers", cfg.model.reverse_hidden_layers},
        {"diag_hidden_layers", cfg.model.diag_hidden_layers},
        {"fusion", model::to_string(cfg.model.fusion)},
        {"reverse_stop_gradient", cfg.model.reverse_stop_gradient}}},
      {"loss", {{"mode", loss::to_string(cfg.mode)}, {"weights", weights}}},
      {"optimizer",
       {{"base_lr", cfg.optimizer.base_lr},
        {"momentum", cfg.optimizer.momentum},
        {"decay_factor", cfg.optimizer.decay_factor},
        {"decay_period", cfg.optimizer.decay_period},
        {"decay_once", cfg.optimizer.decay_once}}},
      {"training",
       {{"epochs", cfg.training.epochs},
        {"batch_size", cfg.training.batch_size},
        {"test_fraction", cfg.training.test_fraction},
        {"normalize", cfg.training.normalize}}},
  };
  if (include_out_dir) j["out_dir"] = cfg.out_dir.generic_string();
  return j;
}

std::uint64_t config_hash(const RunConfig& cfg) { return io::fnv1a64(to_json(cfg, false).dump()); }

void write_resolved_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(cfg).dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over (seed, stream)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace trivqa::cli
