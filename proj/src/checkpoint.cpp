#include "bb/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "bb/data.hpp"

namespace bb {

namespace {

constexpr char kMagic[8] = {'B', 'B', 'C', 'K', 'P', 'T', '0', '\n'};
constexpr std::uint32_t kVersion = 1;

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t get_u64(std::istream& in, std::size_t& off) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw FormatError("truncated checkpoint", off);
  off += 8;
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{buf[i]} << (8 * i);
  return v;
}

void put_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void put_record(std::ostream& out, const std::string& name, const double* data,
                std::size_t n) {
  put_u64(out, name.size());
  put_bytes(out, name.data(), name.size());
  put_u64(out, n);
  put_bytes(out, data, n * sizeof(double));
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model) {
  std::ofstream out(path + ".tmp", std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path + ".tmp");
  put_bytes(out, kMagic, sizeof(kMagic));
  put_u64(out, kVersion);
  const std::string arch = arch_to_json(model.arch());
  put_u64(out, arch.size());
  put_bytes(out, arch.data(), arch.size());

  std::vector<std::pair<std::string, std::vector<double>>> records;
  const auto& layers = model.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].decl.kind == LayerDecl::Kind::MaxPool) continue;
    records.emplace_back("layer" + std::to_string(i) + ".weight", layers[i].weight);
    records.emplace_back("layer" + std::to_string(i) + ".bias", layers[i].bias);
  }
  for (const auto& q : model.quantizers()) {
    records.emplace_back(q.id + ".beta", std::vector<double>{q.beta});
    records.emplace_back(q.id + ".phi", q.phi_gate);
    if (!q.phi_prune.empty()) records.emplace_back(q.id + ".prune", q.phi_prune);
    records.emplace_back(q.id + ".ema", std::vector<double>{static_cast<double>(q.ema_seen)});
  }
  put_u64(out, records.size());
  for (const auto& [name, data] : records) put_record(out, name, data.data(), data.size());
  out.flush();
  if (!out) throw std::runtime_error("short write to " + path + ".tmp");
  out.close();
  if (std::rename((path + ".tmp").c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot rename checkpoint into place at " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path, 0);
  std::size_t off = 0;
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw FormatError("bad checkpoint magic in " + path, 0);
  off += sizeof(magic);
  const std::uint64_t version = get_u64(in, off);
  if (version != kVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version), off - 8);

  const std::uint64_t arch_len = get_u64(in, off);
  std::string arch_json(arch_len, '\0');
  in.read(arch_json.data(), static_cast<std::streamsize>(arch_len));
  if (!in) throw FormatError("truncated architecture block", off);
  off += arch_len;

  std::map<std::string, std::vector<double>> records;
  const std::uint64_t count = get_u64(in, off);
  for (std::uint64_t r = 0; r < count; ++r) {
    const std::uint64_t name_len = get_u64(in, off);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    if (!in) throw FormatError("truncated record name", off);
    off += name_len;
    const std::uint64_t n = get_u64(in, off);
    std::vector<double> data(n);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw FormatError("truncated record \"" + name + "\"", off);
    off += n * sizeof(double);
    records.emplace(std::move(name), std::move(data));
  }

  Model model(parse_arch_json(arch_json), 0);
  auto fetch = [&records, &path](const std::string& name) -> std::vector<double>& {
    auto it = records.find(name);
    if (it == records.end())
      throw FormatError("checkpoint " + path + " is missing record \"" + name + "\"", 0);
    return it->second;
  };
  auto fill = [&fetch](const std::string& name, std::vector<double>& dst) {
    auto& src = fetch(name);
    if (src.size() != dst.size())
      throw FormatError("record \"" + name + "\" has " + std::to_string(src.size()) +
                            " values, expected " + std::to_string(dst.size()),
                        0);
    dst = src;
  };
  auto& layers = model.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].decl.kind == LayerDecl::Kind::MaxPool) continue;
    fill("layer" + std::to_string(i) + ".weight", layers[i].weight);
    fill("layer" + std::to_string(i) + ".bias", layers[i].bias);
  }
  for (auto& q : model.quantizers()) {
    q.beta = fetch(q.id + ".beta").at(0);
    fill(q.id + ".phi", q.phi_gate);
    if (!q.phi_prune.empty()) fill(q.id + ".prune", q.phi_prune);
    q.ema_seen = static_cast<int>(fetch(q.id + ".ema").at(0));
  }
  return model;
}

}  // namespace bb
