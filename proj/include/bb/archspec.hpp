#pragma once

#include <string>
#include <vector>

#include "bb/tensor.hpp"

namespace bb {

/// Declarative layer description. Parsing is strict: unknown keys and
/// inconsistent shapes are rejected, never guessed.
struct LayerDecl {
  enum class Kind { Fc, Conv, MaxPool };
  Kind kind = Kind::Fc;
  std::size_t out = 0;   // output features / channels
  int kernel = 0;
  int stride = 1;
  int pad = 0;
  bool relu = false;
  int bits_w = 32;  // declared bit widths for static BOP analysis
  int bits_a = 32;
};

struct ArchSpec {
  Shape input_shape;
  int classes = 0;
  bool prune = true;  // per-channel pruning gates on hidden weight tensors
  std::vector<LayerDecl> layers;

  void validate() const;
};

/// Parses the JSON form; throws std::invalid_argument with the offending key
/// on any unknown field or shape inconsistency.
ArchSpec parse_arch_json(const std::string& json_text);
std::string arch_to_json(const ArchSpec& spec);

}  // namespace bb
