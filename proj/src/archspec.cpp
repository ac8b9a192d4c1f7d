#include "bb/archspec.hpp"

#include <set>
#include <stdexcept>

#include <json.hpp>

namespace bb {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.contains(it.key()))
      throw std::invalid_argument("unknown key \"" + it.key() + "\" in " + where);
}

int valid_bits(const json& j, const std::string& key) {
  const int b = j.get<int>();
  if (b != 0 && b != 2 && b != 4 && b != 8 && b != 16 && b != 32)
    throw std::invalid_argument(key + " must be one of {0, 2, 4, 8, 16, 32}");
  return b;
}

}  // namespace

void ArchSpec::validate() const {
  if (input_shape.empty()) throw std::invalid_argument("arch: missing input shape");
  if (classes < 2) throw std::invalid_argument("arch: need at least two classes");
  if (layers.empty()) throw std::invalid_argument("arch: need at least one layer");

  // Thread shapes through the network; reject anything inconsistent.
  Shape s = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerDecl& l = layers[i];
    const std::string where = "layer " + std::to_string(i);
    switch (l.kind) {
      case LayerDecl::Kind::Fc: {
        if (l.out == 0) throw std::invalid_argument(where + ": fc needs out > 0");
        s = {l.out};
        break;
      }
      case LayerDecl::Kind::Conv: {
        if (s.size() != 3) throw std::invalid_argument(where + ": conv needs a C x H x W input");
        if (l.out == 0 || l.kernel < 1)
          throw std::invalid_argument(where + ": conv needs out > 0 and kernel >= 1");
        const std::ptrdiff_t oh =
            (static_cast<std::ptrdiff_t>(s[1]) + 2 * l.pad - l.kernel) / l.stride + 1;
        const std::ptrdiff_t ow =
            (static_cast<std::ptrdiff_t>(s[2]) + 2 * l.pad - l.kernel) / l.stride + 1;
        if (oh < 1 || ow < 1) throw std::invalid_argument(where + ": conv output collapses");
        s = {l.out, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)};
        break;
      }
      case LayerDecl::Kind::MaxPool: {
        if (s.size() != 3)
          throw std::invalid_argument(where + ": maxpool needs a C x H x W input");
        if (l.kernel < 1 || s[1] / l.kernel == 0 || s[2] / l.kernel == 0)
          throw std::invalid_argument(where + ": maxpool kernel too large");
        s = {s[0], s[1] / static_cast<std::size_t>(l.kernel),
             s[2] / static_cast<std::size_t>(l.kernel)};
        break;
      }
    }
  }
  const LayerDecl& last = layers.back();
  if (last.kind == LayerDecl::Kind::MaxPool)
    throw std::invalid_argument("arch: last layer must produce logits");
  if (last.kind == LayerDecl::Kind::Fc && last.out != static_cast<std::size_t>(classes))
    throw std::invalid_argument("arch: final fc width " + std::to_string(last.out) +
                                " does not match class count " + std::to_string(classes));
}

ArchSpec parse_arch_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("arch: invalid JSON: ") + e.what());
  }
  reject_unknown(j, {"input", "classes", "prune", "layers"}, "arch");
  ArchSpec spec;
  if (!j.contains("input") || !j.contains("classes") || !j.contains("layers"))
    throw std::invalid_argument("arch: requires input, classes and layers");
  for (const auto& e : j.at("input")) {
    const auto v = e.get<std::int64_t>();
    if (v < 1) throw std::invalid_argument("arch: input extents must be positive");
    spec.input_shape.push_back(static_cast<std::size_t>(v));
  }
  spec.classes = j.at("classes").get<int>();
  spec.prune = j.value("prune", true);
  for (const auto& lj : j.at("layers")) {
    reject_unknown(lj, {"kind", "out", "kernel", "stride", "pad", "relu", "bits_w", "bits_a"},
                   "layer");
    LayerDecl l;
    const std::string kind = lj.at("kind").get<std::string>();
    if (kind == "fc")
      l.kind = LayerDecl::Kind::Fc;
    else if (kind == "conv")
      l.kind = LayerDecl::Kind::Conv;
    else if (kind == "maxpool")
      l.kind = LayerDecl::Kind::MaxPool;
    else
      throw std::invalid_argument("arch: unknown layer kind \"" + kind + "\"");
    l.out = lj.value("out", std::size_t{0});
    l.kernel = lj.value("kernel", 0);
    l.stride = lj.value("stride", 1);
    l.pad = lj.value("pad", 0);
    l.relu = lj.value("relu", false);
    if (lj.contains("bits_w")) l.bits_w = valid_bits(lj.at("bits_w"), "bits_w");
    if (lj.contains("bits_a")) l.bits_a = valid_bits(lj.at("bits_a"), "bits_a");
    if (l.kind == LayerDecl::Kind::MaxPool && l.kernel < 1)
      throw std::invalid_argument("arch: maxpool needs a kernel");
    spec.layers.push_back(l);
  }
  spec.validate();
  return spec;
}

std::string arch_to_json(const ArchSpec& spec) {
  json j;
  j["input"] = spec.input_shape;
  j["classes"] = spec.classes;
  j["prune"] = spec.prune;
  j["layers"] = json::array();
  for (const auto& l : spec.layers) {
    json lj;
    switch (l.kind) {
      case LayerDecl::Kind::Fc:
        lj["kind"] = "fc";
        lj["out"] = l.out;
        break;
      case LayerDecl::Kind::Conv:
        lj["kind"] = "conv";
        lj["out"] = l.out;
        lj["kernel"] = l.kernel;
        lj["stride"] = l.stride;
        lj["pad"] = l.pad;
        break;
      case LayerDecl::Kind::MaxPool:
        lj["kind"] = "maxpool";
        lj["kernel"] = l.kernel;
        break;
    }
    if (l.relu) lj["relu"] = true;
    if (l.bits_w != 32) lj["bits_w"] = l.bits_w;
    if (l.bits_a != 32) lj["bits_a"] = l.bits_a;
    j["layers"].push_back(lj);
  }
  return j.dump(2);
}

}  // namespace bb
