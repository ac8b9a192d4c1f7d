#include "bb/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "bb/kernels.hpp"

namespace bb {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

const Shape& Tensor::shape() const { return graph_->node(id_).shape; }
const std::vector<double>& Tensor::value() const { return graph_->node(id_).val; }
const std::vector<double>& Tensor::grad() const { return graph_->node(id_).grad; }

double Tensor::scalar() const {
  const auto& v = value();
  if (v.size() != 1)
    throw std::logic_error("Tensor::scalar on tensor of shape " + shape_str(shape()));
  return v[0];
}

Tensor Graph::leaf(Shape shape, std::vector<double> data) {
  if (numel(shape) != data.size())
    throw std::invalid_argument("leaf: shape " + shape_str(shape) + " does not match data size " +
                                std::to_string(data.size()));
  return emplace(std::move(shape), std::move(data), {}, nullptr);
}

Tensor Graph::scalar(double v) { return leaf({1}, {v}); }

Tensor Graph::zeros(Shape shape) {
  std::vector<double> z(numel(shape), 0.0);
  return leaf(std::move(shape), std::move(z));
}

Tensor Graph::emplace(Shape shape, std::vector<double> val, std::vector<int> parents,
                      std::function<void(Graph&, const Node&)> backward) {
  auto n = std::make_unique<Node>();
  n->shape = std::move(shape);
  n->val = std::move(val);
  n->parents = std::move(parents);
  n->backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

std::vector<double>& Graph::grad_buffer(int id) {
  Node& n = node(id);
  if (n.grad.empty()) n.grad.assign(n.val.size(), 0.0);
  return n.grad;
}

void Graph::backward(const Tensor& root) {
  if (root.graph() != this) throw std::logic_error("backward: tensor from a different graph");
  const Node& r = node(root.id());
  if (r.val.size() != 1) throw std::logic_error("backward: root must be scalar");
  grad_buffer(root.id())[0] += 1.0;
  for (int id = root.id(); id >= 0; --id) {
    Node& n = node(id);
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this, n);
  }
}

double Graph::uniform01() {
  // Strictly inside (0, 1); the gate logit diverges at the endpoints.
  std::uniform_real_distribution<double> dist(std::numeric_limits<double>::min(), 1.0);
  double u;
  do {
    u = dist(rng_);
  } while (u <= 0.0 || u >= 1.0);
  return u;
}

// ---- elementwise machinery ----------------------------------------------

namespace {

void check_same_graph(const Tensor& a, const Tensor& b) {
  if (a.graph() != b.graph())
    throw std::logic_error("op on tensors from different graphs");
}

// Equal shapes or scalar on either side.
enum class Bcast { Same, AScalar, BScalar };

Bcast broadcast_kind(const Tensor& a, const Tensor& b) {
  const std::size_t na = numel(a.shape());
  const std::size_t nb = numel(b.shape());
  if (na == nb && a.shape() == b.shape()) return Bcast::Same;
  if (na == 1) return Bcast::AScalar;
  if (nb == 1) return Bcast::BScalar;
  throw std::invalid_argument("incompatible shapes " + shape_str(a.shape()) + " and " +
                              shape_str(b.shape()));
}

// fwd(x, y) -> value; dfdx / dfdy evaluated at (x, y, out).
template <typename F, typename Dx, typename Dy>
Tensor binary_op(const Tensor& a, const Tensor& b, F fwd, Dx dfdx, Dy dfdy) {
  check_same_graph(a, b);
  Graph& g = *a.graph();
  const Bcast kind = broadcast_kind(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t n = std::max(av.size(), bv.size());
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = kind == Bcast::AScalar ? av[0] : av[i];
    const double y = kind == Bcast::BScalar ? bv[0] : bv[i];
    out[i] = fwd(x, y);
  }
  const int aid = a.id(), bid = b.id();
  const Shape shape = n == av.size() ? a.shape() : b.shape();
  return g.emplace(shape, std::move(out), {aid, bid},
                   [aid, bid, kind, dfdx, dfdy](Graph& gg, const Node& node) {
                     const auto& av2 = gg.node(aid).val;
                     const auto& bv2 = gg.node(bid).val;
                     auto& ga = gg.grad_buffer(aid);
                     auto& gb = gg.grad_buffer(bid);
                     for (std::size_t i = 0; i < node.val.size(); ++i) {
                       const double go = node.grad[i];
                       if (go == 0.0) continue;
                       const double x = kind == Bcast::AScalar ? av2[0] : av2[i];
                       const double y = kind == Bcast::BScalar ? bv2[0] : bv2[i];
                       ga[kind == Bcast::AScalar ? 0 : i] += go * dfdx(x, y, node.val[i]);
                       gb[kind == Bcast::BScalar ? 0 : i] += go * dfdy(x, y, node.val[i]);
                     }
                   });
}

template <typename F, typename D>
Tensor unary_op(const Tensor& a, F fwd, D dfdx) {
  Graph& g = *a.graph();
  const auto& av = a.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  const int aid = a.id();
  return g.emplace(a.shape(), std::move(out), {aid}, [aid, dfdx](Graph& gg, const Node& node) {
    const auto& av2 = gg.node(aid).val;
    auto& ga = gg.grad_buffer(aid);
    for (std::size_t i = 0; i < node.val.size(); ++i)
      ga[i] += node.grad[i] * dfdx(av2[i], node.val[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

Tensor neg(const Tensor& a) {
  return unary_op(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor relu(const Tensor& a) {
  return unary_op(a, [](double x) { return x > 0.0 ? x : 0.0; },
                  [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a,
      [](double x) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      },
      [](double, double out) { return out * (1.0 - out); });
}

Tensor log(const Tensor& a) {
  for (double v : a.value())
    if (v <= 0.0) throw std::domain_error("log of non-positive value");
  return unary_op(a, [](double x) { return std::log(x); },
                  [](double x, double) { return 1.0 / x; });
}

Tensor exp(const Tensor& a) {
  return unary_op(a, [](double x) { return std::exp(x); },
                  [](double, double out) { return out; });
}

Tensor min_const(const Tensor& a, double c) {
  return unary_op(a, [c](double x) { return std::min(x, c); },
                  [c](double x, double) { return x <= c ? 1.0 : 0.0; });
}

Tensor max_const(const Tensor& a, double c) {
  return unary_op(a, [c](double x) { return std::max(x, c); },
                  [c](double x, double) { return x >= c ? 1.0 : 0.0; });
}

namespace {

// Round half to even. std::nearbyint depends on the ambient rounding mode,
// so spell it out.
double rint_even(double x) {
  const double f = std::floor(x);
  const double r = x - f;
  if (r > 0.5) return f + 1.0;
  if (r < 0.5) return f;
  return std::fmod(f, 2.0) == 0.0 ? f : f + 1.0;
}

}  // namespace

Tensor round_ste(const Tensor& a) {
  return unary_op(a, [](double x) { return rint_even(x); },
                  [](double, double) { return 1.0; });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.value()) acc += v;
  const int aid = a.id();
  return a.graph()->emplace({1}, {acc}, {aid}, [aid](Graph& gg, const Node& node) {
    auto& ga = gg.grad_buffer(aid);
    const double go = node.grad[0];
    for (double& v : ga) v += go;
  });
}

Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.value().size());
  double acc = 0.0;
  for (double v : a.value()) acc += v;
  const int aid = a.id();
  return a.graph()->emplace({1}, {acc * inv}, {aid}, [aid, inv](Graph& gg, const Node& node) {
    auto& ga = gg.grad_buffer(aid);
    const double go = node.grad[0] * inv;
    for (double& v : ga) v += go;
  });
}

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
Tensor operator+(const Tensor& a, double c) { return add(a, a.graph()->scalar(c)); }
Tensor operator-(const Tensor& a, double c) { return sub(a, a.graph()->scalar(c)); }
Tensor operator-(double c, const Tensor& a) { return sub(a.graph()->scalar(c), a); }
Tensor operator*(const Tensor& a, double c) { return mul(a, a.graph()->scalar(c)); }
Tensor operator*(double c, const Tensor& a) { return mul(a, a.graph()->scalar(c)); }
Tensor operator/(const Tensor& a, double c) { return div(a, a.graph()->scalar(c)); }

// ---- linear algebra -----------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_same_graph(a, b);
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                                shape_str(b.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n);
  kernels::gemm(false, false, m, n, k, a.value().data(), b.value().data(), out.data(), false);
  const int aid = a.id(), bid = b.id();
  return a.graph()->emplace({m, n}, std::move(out), {aid, bid},
                            [aid, bid, m, n, k](Graph& gg, const Node& node) {
                              // dA = dC * B^T; dB = A^T * dC
                              kernels::gemm(false, true, m, k, n, node.grad.data(),
                                            gg.node(bid).val.data(),
                                            gg.grad_buffer(aid).data(), true);
                              kernels::gemm(true, false, k, n, m, gg.node(aid).val.data(),
                                            node.grad.data(), gg.grad_buffer(bid).data(), true);
                            });
}

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad) {
  check_same_graph(x, w);
  if (x.shape().size() != 4 || w.shape().size() != 4)
    throw std::invalid_argument("conv2d: expected 4-d input and kernel");
  if (x.shape()[1] != w.shape()[1])
    throw std::invalid_argument("conv2d: channel mismatch, input " + shape_str(x.shape()) +
                                " vs kernel " + shape_str(w.shape()));
  const auto d = kernels::conv2d_dims(x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3],
                                      w.shape()[0], w.shape()[2], w.shape()[3], stride, pad);
  std::vector<double> out(d.n * d.co * d.oh * d.ow);
  kernels::conv2d_forward(d, x.value().data(), w.value().data(), out.data());
  const int xid = x.id(), wid = w.id();
  return x.graph()->emplace({d.n, d.co, d.oh, d.ow}, std::move(out), {xid, wid},
                            [xid, wid, d](Graph& gg, const Node& node) {
                              kernels::conv2d_backward_input(d, node.grad.data(),
                                                             gg.node(wid).val.data(),
                                                             gg.grad_buffer(xid).data());
                              kernels::conv2d_backward_weight(d, node.grad.data(),
                                                              gg.node(xid).val.data(),
                                                              gg.grad_buffer(wid).data());
                            });
}

Tensor maxpool2d(const Tensor& x, int k) {
  if (x.shape().size() != 4) throw std::invalid_argument("maxpool2d: expected 4-d input");
  if (k < 1) throw std::invalid_argument("maxpool2d: kernel must be >= 1");
  const std::size_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const std::size_t ku = static_cast<std::size_t>(k);
  const std::size_t oh = h / ku, ow = w / ku;
  if (oh == 0 || ow == 0) throw std::invalid_argument("maxpool2d: kernel larger than input");
  std::vector<double> out(n * c * oh * ow);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const auto& xv = x.value();
  for (std::size_t img = 0; img < n; ++img) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (img * c + ch) * h * w;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          std::size_t best = base + (oy * ku) * w + ox * ku;
          for (std::size_t fy = 0; fy < ku; ++fy)
            for (std::size_t fx = 0; fx < ku; ++fx) {
              const std::size_t idx = base + (oy * ku + fy) * w + ox * ku + fx;
              if (xv[idx] > xv[best]) best = idx;
            }
          const std::size_t o = ((img * c + ch) * oh + oy) * ow + ox;
          out[o] = xv[best];
          (*argmax)[o] = best;
        }
      }
    }
  }
  const int xid = x.id();
  return x.graph()->emplace({n, c, oh, ow}, std::move(out), {xid},
                            [xid, argmax](Graph& gg, const Node& node) {
                              auto& gx = gg.grad_buffer(xid);
                              for (std::size_t i = 0; i < node.val.size(); ++i)
                                gx[(*argmax)[i]] += node.grad[i];
                            });
}

Tensor scale_channels(const Tensor& x, const Tensor& z, std::size_t axis) {
  check_same_graph(x, z);
  if (axis >= x.shape().size())
    throw std::invalid_argument("scale_channels: axis out of range for " + shape_str(x.shape()));
  const std::size_t c = x.shape()[axis];
  if (z.value().size() != c)
    throw std::invalid_argument("scale_channels: gate vector size " +
                                std::to_string(z.value().size()) + " vs dim extent " +
                                std::to_string(c));
  std::size_t inner = 1, outer = 1;
  for (std::size_t i = axis + 1; i < x.shape().size(); ++i) inner *= x.shape()[i];
  for (std::size_t i = 0; i < axis; ++i) outer *= x.shape()[i];
  const auto& xv = x.value();
  const auto& zv = z.value();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double s = zv[ch];
      const std::size_t base = (o * c + ch) * inner;
      for (std::size_t i = 0; i < inner; ++i) out[base + i] = xv[base + i] * s;
    }
  const int xid = x.id(), zid = z.id();
  return x.graph()->emplace(x.shape(), std::move(out), {xid, zid},
                            [xid, zid, outer, c, inner](Graph& gg, const Node& node) {
                              const auto& xv2 = gg.node(xid).val;
                              const auto& zv2 = gg.node(zid).val;
                              auto& gx = gg.grad_buffer(xid);
                              auto& gz = gg.grad_buffer(zid);
                              for (std::size_t o = 0; o < outer; ++o)
                                for (std::size_t ch = 0; ch < c; ++ch) {
                                  const std::size_t base = (o * c + ch) * inner;
                                  double acc = 0.0;
                                  for (std::size_t i = 0; i < inner; ++i) {
                                    const double go = node.grad[base + i];
                                    gx[base + i] += go * zv2[ch];
                                    acc += go * xv2[base + i];
                                  }
                                  gz[ch] += acc;
                                }
                            });
}

Tensor add_rowvec(const Tensor& x, const Tensor& b) {
  check_same_graph(x, b);
  if (x.shape().size() != 2 || b.value().size() != x.shape()[1])
    throw std::invalid_argument("add_rowvec: shapes " + shape_str(x.shape()) + " and " +
                                shape_str(b.shape()));
  const std::size_t n = x.shape()[0], f = x.shape()[1];
  const auto& xv = x.value();
  const auto& bv = b.value();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) out[i * f + j] = xv[i * f + j] + bv[j];
  const int xid = x.id(), bid = b.id();
  return x.graph()->emplace(x.shape(), std::move(out), {xid, bid},
                            [xid, bid, n, f](Graph& gg, const Node& node) {
                              auto& gx = gg.grad_buffer(xid);
                              auto& gb = gg.grad_buffer(bid);
                              for (std::size_t i = 0; i < n; ++i)
                                for (std::size_t j = 0; j < f; ++j) {
                                  gx[i * f + j] += node.grad[i * f + j];
                                  gb[j] += node.grad[i * f + j];
                                }
                            });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
  check_same_graph(x, b);
  if (x.shape().size() != 4 || b.value().size() != x.shape()[1])
    throw std::invalid_argument("add_channel_bias: shapes " + shape_str(x.shape()) + " and " +
                                shape_str(b.shape()));
  const std::size_t n = x.shape()[0], c = x.shape()[1], hw = x.shape()[2] * x.shape()[3];
  const auto& xv = x.value();
  const auto& bv = b.value();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (i * c + ch) * hw;
      for (std::size_t j = 0; j < hw; ++j) out[base + j] = xv[base + j] + bv[ch];
    }
  const int xid = x.id(), bid = b.id();
  return x.graph()->emplace(x.shape(), std::move(out), {xid, bid},
                            [xid, bid, n, c, hw](Graph& gg, const Node& node) {
                              auto& gx = gg.grad_buffer(xid);
                              auto& gb = gg.grad_buffer(bid);
                              for (std::size_t i = 0; i < n; ++i)
                                for (std::size_t ch = 0; ch < c; ++ch) {
                                  const std::size_t base = (i * c + ch) * hw;
                                  for (std::size_t j = 0; j < hw; ++j) {
                                    gx[base + j] += node.grad[base + j];
                                    gb[ch] += node.grad[base + j];
                                  }
                                }
                            });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.value().size())
    throw std::invalid_argument("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  const int xid = x.id();
  return x.graph()->emplace(std::move(shape), x.value(), {xid},
                            [xid](Graph& gg, const Node& node) {
                              auto& gx = gg.grad_buffer(xid);
                              for (std::size_t i = 0; i < node.val.size(); ++i)
                                gx[i] += node.grad[i];
                            });
}

Tensor element(const Tensor& x, std::size_t i) {
  if (i >= x.value().size())
    throw std::out_of_range("element: index " + std::to_string(i) + " for " +
                            shape_str(x.shape()));
  const int xid = x.id();
  return x.graph()->emplace({1}, {x.value()[i]}, {xid}, [xid, i](Graph& gg, const Node& node) {
    gg.grad_buffer(xid)[i] += node.grad[0];
  });
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.shape().size() != 2)
    throw std::invalid_argument("softmax_cross_entropy: logits must be 2-d");
  const std::size_t n = logits.shape()[0], c = logits.shape()[1];
  if (labels.size() != n)
    throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(n) + " rows");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= c)
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(l) +
                              " outside [0, " + std::to_string(c) + ")");
  const auto& lv = logits.value();
  auto softmax = std::make_shared<std::vector<double>>(lv.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = lv.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
    const double lse = mx + std::log(denom);
    loss += lse - row[static_cast<std::size_t>(labels[i])];
    for (std::size_t j = 0; j < c; ++j)
      (*softmax)[i * c + j] = std::exp(row[j] - lse);
  }
  loss /= static_cast<double>(n);
  const int lid = logits.id();
  auto lab = std::make_shared<std::vector<int>>(labels);
  return logits.graph()->emplace(
      {1}, {loss}, {lid}, [lid, softmax, lab, n, c](Graph& gg, const Node& node) {
        auto& gl = gg.grad_buffer(lid);
        const double go = node.grad[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < c; ++j) {
            double d = (*softmax)[i * c + j];
            if (j == static_cast<std::size_t>((*lab)[i])) d -= 1.0;
            gl[i * c + j] += go * d;
          }
      });
}

}  // namespace bb
