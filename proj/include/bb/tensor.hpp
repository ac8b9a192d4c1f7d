#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace bb {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Graph;

/// Handle into a Graph node. Cheap to copy; owns nothing.
class Tensor {
 public:
  Tensor() = default;

  const Shape& shape() const;
  const std::vector<double>& value() const;
  /// Gradient accumulated by Graph::backward. Empty if the node was never
  /// reached during the backward pass.
  const std::vector<double>& grad() const;
  double scalar() const;

  bool defined() const { return graph_ != nullptr; }
  int id() const { return id_; }
  Graph* graph() const { return graph_; }

 private:
  friend class Graph;
  Tensor(Graph* g, int id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  int id_ = -1;
};

struct Node {
  Shape shape;
  std::vector<double> val;
  std::vector<double> grad;  // allocated on first accumulation
  std::vector<int> parents;
  // Reads this node's grad and accumulates into parent grads.
  std::function<void(Graph&, const Node&)> backward;
};

/// Append-only op tape. Node ids are topological by construction: a node's
/// parents always have smaller ids. One Graph per thread of execution.
class Graph {
 public:
  explicit Graph(std::uint64_t seed = 0) : rng_(seed) {}

  Tensor leaf(Shape shape, std::vector<double> data);
  Tensor scalar(double v);
  Tensor zeros(Shape shape);

  /// Internal node factory used by the op implementations.
  Tensor emplace(Shape shape, std::vector<double> val, std::vector<int> parents,
                 std::function<void(Graph&, const Node&)> backward);

  /// Runs reverse-mode accumulation from a scalar root. Each node at or below
  /// the root is visited at most once, in reverse id (topological) order.
  void backward(const Tensor& root);

  Node& node(int id) { return *nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return *nodes_[static_cast<std::size_t>(id)]; }
  std::size_t size() const { return nodes_.size(); }

  /// Uniform draw strictly inside (0, 1).
  double uniform01();
  std::mt19937_64& rng() { return rng_; }

  /// Adds g into the (lazily allocated) grad buffer of node id.
  std::vector<double>& grad_buffer(int id);

 private:
  std::vector<std::unique_ptr<Node>> nodes_;
  std::mt19937_64 rng_;
};

// ---- elementwise suite --------------------------------------------------
// Binary ops accept equal shapes or a scalar (numel == 1) on either side.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log(const Tensor& a);  // throws std::domain_error on non-positive input
Tensor exp(const Tensor& a);
Tensor min_const(const Tensor& a, double c);  // grad 0 on the clamped flat
Tensor max_const(const Tensor& a, double c);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Round to nearest, ties to even. Backward is exactly the identity.
Tensor round_ste(const Tensor& a);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator+(const Tensor& a, double c);
Tensor operator-(const Tensor& a, double c);
Tensor operator-(double c, const Tensor& a);
Tensor operator*(const Tensor& a, double c);
Tensor operator*(double c, const Tensor& a);
Tensor operator/(const Tensor& a, double c);

// ---- linear algebra -----------------------------------------------------

/// C[m x n] = A[m x k] * B[k x n].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Cross-correlation with zero padding.
/// x: [N, Ci, H, W], w: [Co, Ci, Hf, Wf] -> [N, Co, H', W'].
Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad);

/// Max pooling, kernel k x k with stride k. x: [N, C, H, W].
Tensor maxpool2d(const Tensor& x, int k);

/// Multiplies every slice of x along dim `axis` by z[c]; z has shape [size of
/// that dim]. Used for per-channel pruning gates.
Tensor scale_channels(const Tensor& x, const Tensor& z, std::size_t axis);

/// x: [N, F] plus row vector b: [F], broadcast over rows.
Tensor add_rowvec(const Tensor& x, const Tensor& b);

/// x: [N, C, H, W] plus per-channel bias b: [C].
Tensor add_channel_bias(const Tensor& x, const Tensor& b);

Tensor reshape(const Tensor& x, Shape shape);

/// Scalar view of element i of a flat tensor; gradient routes back to it.
Tensor element(const Tensor& x, std::size_t i);

/// Mean negative log likelihood with stabilized log-sum-exp.
/// logits: [N, C]; labels in [0, C).
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

}  // namespace bb
