#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"
#include "trivqa/binary_io.hpp"
#include "trivqa/data.hpp"

namespace trivqa::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'T', 'R', 'I', 'V', 'Q', 'A', '1', '\0'};
constexpr std::uint64_t kHeaderBytes = 8 + 4 * 8;

std::uint64_t record_bytes(const Dataset& ds) { return 8 * (ds.d_v + ds.schema.size() * ds.d_q); }

fs::path payload_path_for(const fs::path& manifest) {
  fs::path p = manifest;
  return p.replace_extension(".bin");
}

[[noreturn]] void fail(const fs::path& file, const std::string& msg) {
  throw io::ReadError(file.string() + ": " + msg);
}

}  // namespace

void save_features(const Dataset& ds, const fs::path& manifest_path) {
  ds.validate();
  const fs::path payload = payload_path_for(manifest_path);
  if (manifest_path.has_parent_path()) fs::create_directories(manifest_path.parent_path());

  json manifest;
  manifest["format"] = "trivqa-features";
  manifest["version"] = 1;
  manifest["payload"] = payload.filename().string();
  manifest["d_v"] = ds.d_v;
  manifest["d_q"] = ds.d_q;
  json schema = json::array();
  for (const auto& a : ds.schema.attributes) schema.push_back({{"name", a.name}, {"cardinality", a.cardinality}});
  manifest["schema"] = schema;
  json samples = json::array();
  const std::uint64_t rec = record_bytes(ds);
  for (std::size_t r = 0; r < ds.samples.size(); ++r) {
    const auto& s = ds.samples[r];
    json entry = {{"id", s.id}, {"center", s.center}, {"answers", s.answers}, {"offset", kHeaderBytes + r * rec}};
    entry["diagnosis"] = s.diagnosis ? json(*s.diagnosis) : json(nullptr);
    samples.push_back(std::move(entry));
  }
  manifest["samples"] = samples;

  std::ofstream bin(payload, std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("cannot write " + payload.string());
  bin.write(kMagic, 8);
  io::write_u64(bin, ds.d_v);
  io::write_u64(bin, ds.d_q);
  io::write_u64(bin, ds.schema.size());
  io::write_u64(bin, ds.samples.size());
  for (const auto& s : ds.samples) {
    for (double x : s.v_raw) io::write_f64(bin, x);
    for (const auto& q : s.q_raw) {
      for (double x : q) io::write_f64(bin, x);
    }
  }
  if (!bin) throw std::runtime_error("failed writing " + payload.string());

  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + manifest_path.string());
  out << manifest.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing " + manifest_path.string());
}

Dataset load_features(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) fail(manifest_path, "cannot open manifest");
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    fail(manifest_path, std::string("malformed manifest: ") + e.what());
  }

  Dataset ds;
  fs::path payload;
  try {
    if (manifest.at("format").get<std::string>() != "trivqa-features") fail(manifest_path, "unexpected format tag");
    if (manifest.at("version").get<int>() != 1) fail(manifest_path, "unsupported version");
    ds.d_v = manifest.at("d_v").get<std::size_t>();
    ds.d_q = manifest.at("d_q").get<std::size_t>();
    for (const auto& a : manifest.at("schema")) {
      ds.schema.attributes.push_back({a.at("name").get<std::string>(), a.at("cardinality").get<std::size_t>()});
    }
    payload = manifest_path.parent_path() / manifest.at("payload").get<std::string>();
    for (const auto& e : manifest.at("samples")) {
      Sample s;
      s.id = e.at("id").get<std::string>();
      s.center = e.at("center").get<std::string>();
      s.answers = e.at("answers").get<std::vector<std::size_t>>();
      if (!e.at("diagnosis").is_null()) s.diagnosis = e.at("diagnosis").get<int>();
      ds.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    fail(manifest_path, std::string("invalid manifest field: ") + e.what());
  }
  try {
    ds.schema.validate();
  } catch (const std::invalid_argument& e) {
    fail(manifest_path, e.what());
  }

  std::set<std::string> ids;
  for (std::size_t r = 0; r < ds.samples.size(); ++r) {
    if (!ids.insert(ds.samples[r].id).second) {
      fail(manifest_path, "record " + std::to_string(r) + ": duplicate id '" + ds.samples[r].id + "'");
    }
  }

  std::ifstream bin(payload, std::ios::binary);
  if (!bin) fail(payload, "cannot open feature payload");
  char magic[8];
  if (!bin.read(magic, 8) || !std::equal(magic, magic + 8, kMagic)) fail(payload, "bad magic");
  std::uint64_t header[4];
  try {
    for (auto& h : header) h = io::read_u64(bin, "header");
  } catch (const io::ReadError&) {
    fail(payload, "truncated header");
  }
  if (header[0] != ds.d_v || header[1] != ds.d_q || header[2] != ds.schema.size() || header[3] != ds.samples.size()) {
    fail(payload, "header (d_v=" + std::to_string(header[0]) + ", d_q=" + std::to_string(header[1]) + ", K=" +
                      std::to_string(header[2]) + ", n=" + std::to_string(header[3]) + ") disagrees with manifest");
  }

  const auto expected = kHeaderBytes + record_bytes(ds) * ds.samples.size();
  std::error_code ec;
  const auto actual = fs::file_size(payload, ec);
  if (ec || actual != expected) {
    fail(payload, "size " + std::to_string(actual) + " bytes, expected " + std::to_string(expected) +
                      (actual < expected ? " (truncated)" : ""));
  }

  for (std::size_t r = 0; r < ds.samples.size(); ++r) {
    Sample& s = ds.samples[r];
    const auto offset = manifest["samples"][r].at("offset").get<std::uint64_t>();
    if (offset != kHeaderBytes + r * record_bytes(ds)) fail(manifest_path, "record " + std::to_string(r) + ": bad offset");
    const std::string what = "record " + std::to_string(r);
    s.v_raw.resize(ds.d_v);
    for (auto& x : s.v_raw) x = io::read_f64(bin, what);
    s.q_raw.assign(ds.schema.size(), std::vector<double>(ds.d_q));
    for (auto& q : s.q_raw) {
      for (auto& x : q) x = io::read_f64(bin, what);
    }
    const auto bad = [](const std::vector<double>& xs) {
      return std::any_of(xs.begin(), xs.end(), [](double x) { return !std::isfinite(x); });
    };
    bool nonfinite = bad(s.v_raw);
    for (const auto& q : s.q_raw) nonfinite = nonfinite || bad(q);
    if (nonfinite) fail(payload, what + " ('" + s.id + "'): non-finite feature value");
  }

  try {
    ds.validate();
  } catch (const std::invalid_argument& e) {
    fail(manifest_path, e.what());
  }
  return ds;
}

}  // namespace trivqa::data
