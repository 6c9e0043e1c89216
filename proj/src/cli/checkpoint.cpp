#include "trivqa/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "trivqa/binary_io.hpp"

namespace trivqa::cli {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'T', 'R', 'I', 'V', 'Q', 'A', 'C', 'K'};
constexpr std::uint64_t kVersion = 1;
constexpr std::uint64_t kMaxName = 4096;
constexpr std::uint64_t kMaxHeader = 1u << 24;

json schema_json(const AttributeSchema& schema) {
  json out = json::array();
  for (const auto& a : schema.attributes) out.push_back({{"name", a.name}, {"cardinality", a.cardinality}});
  return out;
}

json model_json(const model::ModelConfig& m) {
  return {{"d_v", m.d_v},
          {"d_q", m.d_q},
          {"d", m.d},
          {"forward_hidden_layers", m.forward_hidden_layers},
          {"reverse_hidden_layers", m.reverse_hidden_layers},
          {"diag_hidden_layers", m.diag_hidden_layers},
          {"fusion", model::to_string(m.fusion)},
          {"reverse_stop_gradient", m.reverse_stop_gradient}};
}

void write_block(std::ostream& out, const std::string& name, const nd::Tensor& t) {
  io::write_u64(out, name.size());
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  io::write_u64(out, t.rank());
  for (auto dim : t.shape()) io::write_u64(out, dim);
  for (double v : t.data()) io::write_f64(out, v);
}

nd::Tensor vector_tensor(const std::vector<double>& v) { return nd::Tensor({1, v.size()}, v); }

struct RawBlock {
  std::string name;
  nd::Tensor value;
};

RawBlock read_block(std::istream& in, std::size_t index, const std::string& file) {
  const std::string where = file + ": block " + std::to_string(index);
  const std::uint64_t name_len = io::read_u64(in, where + " name length");
  if (name_len == 0 || name_len > kMaxName) throw io::ReadError(where + ": implausible name length");
  std::string name(name_len, '\0');
  if (!in.read(name.data(), static_cast<std::streamsize>(name_len))) throw io::ReadError(where + ": truncated name");
  const std::uint64_t rank = io::read_u64(in, where + " rank");
  if (rank == 0 || rank > 2) throw io::ReadError(where + " '" + name + "': unsupported rank " + std::to_string(rank));
  nd::Shape shape;
  std::uint64_t count = 1;
  for (std::uint64_t r = 0; r < rank; ++r) {
    const std::uint64_t dim = io::read_u64(in, where + " dims");
    if (dim == 0 || dim > (1u << 28) || count > (1ull << 32) / dim) {
      throw io::ReadError(where + " '" + name + "': implausible dimension");
    }
    count *= dim;
    shape.push_back(static_cast<std::size_t>(dim));
  }
  std::vector<double> values(count);
  for (auto& v : values) v = io::read_f64(in, where + " '" + name + "' data");
  return {std::move(name), nd::Tensor(std::move(shape), std::move(values))};
}

}  // namespace

std::uint64_t schema_hash(const AttributeSchema& schema, std::size_t d_v, std::size_t d_q) {
  const json j{{"schema", schema_json(schema)}, {"d_v", d_v}, {"d_q", d_q}};
  return io::fnv1a64(j.dump());
}

std::uint64_t Checkpoint::config_hash() const { return cli::config_hash(config); }

std::uint64_t Checkpoint::schema_hash() const { return cli::schema_hash(schema, model.d_v, model.d_q); }

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json header{{"config", to_json(ckpt.config, false)},
              {"schema", schema_json(ckpt.schema)},
              {"model", model_json(ckpt.model)},
              {"param_blocks", ckpt.params.size()},
              {"normalized", ckpt.stats.has_value()},
              {"norm_warnings", ckpt.stats ? ckpt.stats->warnings : std::vector<std::string>{}}};
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  io::write_u64(out, kVersion);
  io::write_u64(out, ckpt.config_hash());
  io::write_u64(out, ckpt.schema_hash());
  io::write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  io::write_u64(out, ckpt.params.size() + (ckpt.stats ? 4 : 0));
  for (const auto& b : ckpt.params.blocks()) write_block(out, b.name, b.value);
  if (ckpt.stats) {
    write_block(out, "norm.v_mean", vector_tensor(ckpt.stats->v_mean));
    write_block(out, "norm.v_std", vector_tensor(ckpt.stats->v_std));
    write_block(out, "norm.q_mean", vector_tensor(ckpt.stats->q_mean));
    write_block(out, "norm.q_std", vector_tensor(ckpt.stats->q_std));
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string file = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io::ReadError("cannot open checkpoint " + file);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw io::ReadError(file + ": bad magic");
  const std::uint64_t version = io::read_u64(in, file + " version");
  if (version != kVersion) throw io::ReadError(file + ": unsupported version " + std::to_string(version));
  const std::uint64_t stored_config_hash = io::read_u64(in, file + " config hash");
  const std::uint64_t stored_schema_hash = io::read_u64(in, file + " schema hash");
  const std::uint64_t header_len = io::read_u64(in, file + " header length");
  if (header_len > kMaxHeader) throw io::ReadError(file + ": implausible header length");
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) throw io::ReadError(file + ": truncated header");

  Checkpoint ckpt;
  std::size_t param_blocks = 0;
  bool normalized = false;
  try {
    const json header = json::parse(text);
    ckpt.config = parse_config(header.at("config"));
    for (const auto& a : header.at("schema")) {
      ckpt.schema.attributes.push_back({a.at("name").get<std::string>(), a.at("cardinality").get<std::size_t>()});
    }
    const json& m = header.at("model");
    ckpt.model.d_v = m.at("d_v").get<std::size_t>();
    ckpt.model.d_q = m.at("d_q").get<std::size_t>();
    ckpt.model.d = m.at("d").get<std::size_t>();
    ckpt.model.forward_hidden_layers = m.at("forward_hidden_layers").get<std::size_t>();
    ckpt.model.reverse_hidden_layers = m.at("reverse_hidden_layers").get<std::size_t>();
    ckpt.model.diag_hidden_layers = m.at("diag_hidden_layers").get<std::size_t>();
    ckpt.model.fusion = model::parse_fusion_mode(m.at("fusion").get<std::string>());
    ckpt.model.reverse_stop_gradient = m.at("reverse_stop_gradient").get<bool>();
    param_blocks = header.at("param_blocks").get<std::size_t>();
    normalized = header.at("normalized").get<bool>();
    if (normalized) {
      ckpt.stats.emplace();
      ckpt.stats->warnings = header.at("norm_warnings").get<std::vector<std::string>>();
    }
  } catch (const std::exception& e) {
    throw io::ReadError(file + ": malformed header: " + e.what());
  }
  if (ckpt.config_hash() != stored_config_hash) throw io::ReadError(file + ": config hash mismatch");
  if (ckpt.schema_hash() != stored_schema_hash) throw io::ReadError(file + ": schema hash mismatch");

  const std::uint64_t blocks = io::read_u64(in, file + " block count");
  if (blocks != param_blocks + (normalized ? 4 : 0)) throw io::ReadError(file + ": block count disagrees with header");
  for (std::size_t i = 0; i < param_blocks; ++i) {
    RawBlock b = read_block(in, i, file);
    ckpt.params.add(std::move(b.name), std::move(b.value));
  }
  if (normalized) {
    const char* names[4] = {"norm.v_mean", "norm.v_std", "norm.q_mean", "norm.q_std"};
    std::vector<double>* slots[4] = {&ckpt.stats->v_mean, &ckpt.stats->v_std, &ckpt.stats->q_mean,
                                     &ckpt.stats->q_std};
    for (std::size_t s = 0; s < 4; ++s) {
      RawBlock b = read_block(in, param_blocks + s, file);
      if (b.name != names[s]) throw io::ReadError(file + ": expected block " + names[s] + ", found " + b.name);
      auto data = b.value.data();
      slots[s]->assign(data.begin(), data.end());
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw io::ReadError(file + ": trailing bytes after last block");
  try {
    model::TriVqaModel probe(ckpt.schema, ckpt.model, ckpt.params);
  } catch (const std::invalid_argument& e) {
    throw io::ReadError(file + ": " + e.what());
  }
  return ckpt;
}

}  // namespace trivqa::cli
