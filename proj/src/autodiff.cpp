// Copyright 2026 The agemap Authors
// SPDX-License-Identifier: Apache-2.0

#include "agemap/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>

#include <Eigen/Core>

#include "agemap/error.hpp"

namespace agemap::ad {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

void shape_check(bool ok, const std::string& op, const std::string& detail) {
  if (!ok) fail(Errc::invalid_argument, op + ": shape mismatch (" + detail + ")");
}

Tape& common_tape(const Tensor& a, const Tensor& b) {
  require(a.valid() && b.valid() && &a.tape() == &b.tape(), "tensors belong to different tapes");
  return a.tape();
}

struct ConvPlan {
  std::size_t cin, cout;
  std::array<std::size_t, 3> in{}, out{}, k{}, s{}, pad{};
  std::size_t taps() const { return k[0] * k[1] * k[2]; }
  std::size_t in_vox() const { return in[0] * in[1] * in[2]; }
  std::size_t out_vox() const { return out[0] * out[1] * out[2]; }
};

// Rows: (ci, dz, dy, dx) with dx fastest; columns: output voxels, x fastest.
void im2col(const ConvPlan& p, const float* src, float* col) {
  const std::size_t nout = p.out_vox();
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < p.cin; ++ci) {
    const float* chan = src + ci * p.in_vox();
    for (std::size_t dz = 0; dz < p.k[2]; ++dz)
      for (std::size_t dy = 0; dy < p.k[1]; ++dy)
        for (std::size_t dx = 0; dx < p.k[0]; ++dx, ++row) {
          float* dst = col + row * nout;
          for (std::size_t oz = 0; oz < p.out[2]; ++oz) {
            const long iz = long(oz * p.s[2] + dz) - long(p.pad[2]);
            for (std::size_t oy = 0; oy < p.out[1]; ++oy) {
              const long iy = long(oy * p.s[1] + dy) - long(p.pad[1]);
              float* line = dst + p.out[0] * (oy + p.out[1] * oz);
              if (iz < 0 || iz >= long(p.in[2]) || iy < 0 || iy >= long(p.in[1])) {
                std::fill_n(line, p.out[0], 0.0f);
                continue;
              }
              const float* in_line = chan + p.in[0] * (std::size_t(iy) + p.in[1] * std::size_t(iz));
              for (std::size_t ox = 0; ox < p.out[0]; ++ox) {
                const long ix = long(ox * p.s[0] + dx) - long(p.pad[0]);
                line[ox] = (ix >= 0 && ix < long(p.in[0])) ? in_line[ix] : 0.0f;
              }
            }
          }
        }
  }
}

void col2im_add(const ConvPlan& p, const float* col, float* dst) {
  const std::size_t nout = p.out_vox();
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < p.cin; ++ci) {
    float* chan = dst + ci * p.in_vox();
    for (std::size_t dz = 0; dz < p.k[2]; ++dz)
      for (std::size_t dy = 0; dy < p.k[1]; ++dy)
        for (std::size_t dx = 0; dx < p.k[0]; ++dx, ++row) {
          const float* src = col + row * nout;
          for (std::size_t oz = 0; oz < p.out[2]; ++oz) {
            const long iz = long(oz * p.s[2] + dz) - long(p.pad[2]);
            if (iz < 0 || iz >= long(p.in[2])) continue;
            for (std::size_t oy = 0; oy < p.out[1]; ++oy) {
              const long iy = long(oy * p.s[1] + dy) - long(p.pad[1]);
              if (iy < 0 || iy >= long(p.in[1])) continue;
              const float* line = src + p.out[0] * (oy + p.out[1] * oz);
              float* out_line = chan + p.in[0] * (std::size_t(iy) + p.in[1] * std::size_t(iz));
              for (std::size_t ox = 0; ox < p.out[0]; ++ox) {
                const long ix = long(ox * p.s[0] + dx) - long(p.pad[0]);
                if (ix >= 0 && ix < long(p.in[0])) out_line[ix] += line[ox];
              }
            }
          }
        }
  }
}

}  // namespace

std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

const Shape& Tensor::shape() const { return tape_->shape(id_); }
std::span<const float> Tensor::value() const { return tape_->value(id_); }

float Tensor::item() const {
  const auto v = value();
  require(v.size() == 1, "item() on a tensor with " + std::to_string(v.size()) + " elements");
  return v[0];
}

std::span<const float> Gradients::of(NodeId id) const {
  const auto it = grads_.find(id);
  if (it == grads_.end()) fail(Errc::invalid_argument, "no gradient recorded for node " + std::to_string(id));
  return it->second;
}

std::span<float> BackwardContext::grad_in(std::size_t k) {
  const NodeId in = tape_.nodes_[self_].inputs.at(k);
  if (!tape_.nodes_[in].requires_grad) return {};
  auto& g = grads_[in];
  if (g.empty()) g.assign(tape_.nodes_[in].value.size(), 0.0f);
  return g;
}

std::span<const float> BackwardContext::input_value(std::size_t k) const {
  return tape_.nodes_[tape_.nodes_[self_].inputs.at(k)].value;
}

std::span<const float> BackwardContext::output_value() const { return tape_.nodes_[self_].value; }

Tensor Tape::push(Node node) {
  for (float v : node.value)
    if (!std::isfinite(v)) fail(Errc::numerical, "non-finite value produced on tape");
  nodes_.push_back(std::move(node));
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::constant(Shape shape, std::vector<float> value) {
  require(numel(shape) == value.size(), "constant: data length does not match shape " + shape_str(shape));
  return push(Node{std::move(shape), std::move(value), {}, {}, false, false});
}

Tensor Tape::parameter(Shape shape, std::vector<float> value) {
  require(numel(shape) == value.size(), "parameter: data length does not match shape " + shape_str(shape));
  return push(Node{std::move(shape), std::move(value), {}, {}, true, true});
}

Tensor Tape::record(Shape shape, std::vector<float> value, std::vector<NodeId> inputs, BackwardFn backward) {
  require(numel(shape) == value.size(), "record: data length does not match shape");
  bool rg = false;
  for (NodeId in : inputs) {
    require(in < nodes_.size(), "record: input not on tape");
    rg = rg || nodes_[in].requires_grad;
  }
  return push(Node{std::move(shape), std::move(value), std::move(inputs), rg ? std::move(backward) : BackwardFn{},
                   rg, false});
}

Gradients Tape::backward(const Tensor& root, std::span<const NodeId> retain) {
  require(root.valid() && &root.tape() == this, "backward: root is not on this tape");
  if (nodes_[root.id()].value.size() != 1)
    fail(Errc::invalid_argument, "backward: loss must be a scalar, got shape " + shape_str(nodes_[root.id()].shape));
  std::vector<char> keep(nodes_.size(), 0);
  for (NodeId id : retain) {
    if (id >= nodes_.size()) fail(Errc::invalid_argument, "backward: retained node " + std::to_string(id) + " not on tape");
    keep[id] = 1;
  }
  std::vector<std::vector<float>> grads(nodes_.size());
  if (nodes_[root.id()].requires_grad) grads[root.id()] = {1.0f};

  for (NodeId id = root.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (grads[id].empty() || !n.backward) continue;
    BackwardContext ctx(*this, id, grads);
    ctx.grad_out = grads[id];
    n.backward(ctx);
    if (!keep[id] && !n.is_parameter && id != root.id()) std::vector<float>().swap(grads[id]);
  }

  Gradients out;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (!nodes_[id].is_parameter && !keep[id]) continue;
    auto& g = grads[id];
    if (g.empty()) g.assign(nodes_[id].value.size(), 0.0f);
    for (float v : g)
      if (!std::isfinite(v)) fail(Errc::numerical, "backward: non-finite gradient at node " + std::to_string(id));
    out.grads_.emplace(id, std::move(g));
  }
  return out;
}

std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, std::size_t stride) {
  const std::size_t pad = kernel / 2;
  return (extent + 2 * pad - kernel) / stride + 1;
}

Tensor conv(const Tensor& input, const Tensor& weight, const Tensor& bias, const ConvGeometry& g) {
  Tape& tape = common_tape(input, weight);
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  shape_check(xs.size() == 4, "conv", "input must be [C, X, Y, Z], got " + shape_str(xs));
  shape_check(ws.size() == 5, "conv", "weight must be [Co, Ci, kx, ky, kz], got " + shape_str(ws));
  ConvPlan p;
  p.cin = xs[0];
  p.cout = ws[0];
  shape_check(ws[1] == p.cin, "conv", "weight C_in " + std::to_string(ws[1]) + " vs input " + std::to_string(p.cin));
  for (int a = 0; a < 3; ++a) {
    p.k[a] = g.kernel[a];
    p.s[a] = g.stride[a];
    p.pad[a] = g.kernel[a] / 2;
    p.in[a] = xs[a + 1];
    require(p.k[a] == 1 || p.k[a] == 3, "conv: kernel extent must be 1 or 3");
    require(p.s[a] == 1 || p.s[a] == 2, "conv: stride must be 1 or 2");
    shape_check(ws[a + 2] == p.k[a], "conv", "kernel extent " + shape_str(ws));
    shape_check(p.in[a] >= 1, "conv", "empty spatial axis");
    p.out[a] = conv_output_extent(p.in[a], p.k[a], p.s[a]);
  }
  const bool has_bias = bias.valid();
  if (has_bias) shape_check(bias.shape() == Shape{p.cout}, "conv", "bias must be [C_out]");

  const std::size_t rows = p.cin * p.taps(), nout = p.out_vox();
  auto col = std::make_shared<std::vector<float>>(rows * nout);
  im2col(p, input.value().data(), col->data());

  std::vector<float> out(p.cout * nout);
  {
    ConstMapMat w(weight.value().data(), Eigen::Index(p.cout), Eigen::Index(rows));
    ConstMapMat c(col->data(), Eigen::Index(rows), Eigen::Index(nout));
    MapMat o(out.data(), Eigen::Index(p.cout), Eigen::Index(nout));
    o.noalias() = w * c;
    if (has_bias) {
      const auto b = bias.value();
      for (std::size_t co = 0; co < p.cout; ++co) o.row(Eigen::Index(co)).array() += b[co];
    }
  }

  std::vector<NodeId> inputs{input.id(), weight.id()};
  if (has_bias) inputs.push_back(bias.id());
  return tape.record({p.cout, p.out[0], p.out[1], p.out[2]}, std::move(out), std::move(inputs),
                     [p, col, rows, nout, has_bias](BackwardContext& ctx) {
                       ConstMapMat go(ctx.grad_out.data(), Eigen::Index(p.cout), Eigen::Index(nout));
                       ConstMapMat c(col->data(), Eigen::Index(rows), Eigen::Index(nout));
                       if (auto gw = ctx.grad_in(1); !gw.empty()) {
                         MapMat(gw.data(), Eigen::Index(p.cout), Eigen::Index(rows)).noalias() += go * c.transpose();
                       }
                       if (has_bias) {
                         if (auto gb = ctx.grad_in(2); !gb.empty())
                           for (std::size_t co = 0; co < p.cout; ++co) {
                             double s = 0.0;
                             const float* r = ctx.grad_out.data() + co * nout;
                             for (std::size_t i = 0; i < nout; ++i) s += r[i];
                             gb[co] += static_cast<float>(s);
                           }
                       }
                       if (auto gx = ctx.grad_in(0); !gx.empty()) {
                         ConstMapMat w(ctx.input_value(1).data(), Eigen::Index(p.cout), Eigen::Index(rows));
                         RowMat dcol = w.transpose() * go;
                         col2im_add(p, dcol.data(), gx.data());
                       }
                     });
}

Tensor conv3(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride) {
  const Shape& xs = input.shape();
  shape_check(xs.size() == 4 && xs[1] >= 3 && xs[2] >= 3 && xs[3] >= 3, "conv3",
              "spatial dims must be >= 3, got " + shape_str(xs));
  return conv(input, weight, bias, {{3, 3, 3}, {stride, stride, stride}});
}

Tensor conv2(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride) {
  const Shape& xs = input.shape();
  shape_check(xs.size() == 4 && xs[1] >= 3 && xs[2] >= 3 && xs[3] == 1, "conv2",
              "planar input must be [C, X>=3, Y>=3, 1], got " + shape_str(xs));
  return conv(input, weight, bias, {{3, 3, 1}, {stride, stride, 1}});
}

Tensor projection1x1(const Tensor& input, const Tensor& weight, std::size_t stride) {
  const Shape& xs = input.shape();
  shape_check(xs.size() == 4, "projection1x1", "input must be [C, X, Y, Z]");
  const std::size_t sz = xs[3] == 1 ? 1 : stride;
  return conv(input, weight, Tensor{}, {{1, 1, 1}, {stride, stride, sz}});
}

Tensor relu(const Tensor& t) {
  const auto v = t.value();
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0f ? v[i] : 0.0f;
  return t.tape().record(t.shape(), std::move(out), {t.id()}, [](BackwardContext& ctx) {
    auto gx = ctx.grad_in(0);
    const auto x = ctx.input_value(0);
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (x[i] > 0.0f) gx[i] += ctx.grad_out[i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tape& tape = common_tape(a, b);
  shape_check(a.shape() == b.shape(), "add", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const auto x = a.value(), y = b.value();
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return tape.record(a.shape(), std::move(out), {a.id(), b.id()}, [](BackwardContext& ctx) {
    for (std::size_t k = 0; k < 2; ++k)
      if (auto g = ctx.grad_in(k); !g.empty())
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += ctx.grad_out[i];
  });
}

Tensor scale(const Tensor& t, float factor) {
  const auto v = t.value();
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * factor;
  return t.tape().record(t.shape(), std::move(out), {t.id()}, [factor](BackwardContext& ctx) {
    auto g = ctx.grad_in(0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * ctx.grad_out[i];
  });
}

Tensor gap(const Tensor& t) {
  const Shape& s = t.shape();
  shape_check(s.size() >= 2, "gap", "need [C, ...], got " + shape_str(s));
  const std::size_t c = s[0], n = numel(s) / c;
  const auto v = t.value();
  std::vector<float> out(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += v[ch * n + i];
    out[ch] = static_cast<float>(acc / double(n));
  }
  return t.tape().record({c}, std::move(out), {t.id()}, [c, n](BackwardContext& ctx) {
    auto g = ctx.grad_in(0);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const float share = ctx.grad_out[ch] / static_cast<float>(n);
      for (std::size_t i = 0; i < n; ++i) g[ch * n + i] += share;
    }
  });
}

Tensor linear(const Tensor& t, const Tensor& weight, const Tensor& bias) {
  Tape& tape = common_tape(t, weight);
  const Shape& ws = weight.shape();
  shape_check(t.shape().size() == 1, "linear", "input must be 1-D, got " + shape_str(t.shape()));
  shape_check(ws.size() == 2 && ws[1] == t.shape()[0], "linear",
              "weight " + shape_str(ws) + " vs input " + shape_str(t.shape()));
  const std::size_t m = ws[0], n = ws[1];
  shape_check(bias.valid() && bias.shape() == Shape{m}, "linear", "bias must be [m]");
  const auto x = t.value(), w = weight.value(), b = bias.value();
  std::vector<float> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    double acc = b[i];
    for (std::size_t j = 0; j < n; ++j) acc += double(w[i * n + j]) * x[j];
    out[i] = static_cast<float>(acc);
  }
  return tape.record({m}, std::move(out), {t.id(), weight.id(), bias.id()}, [m, n](BackwardContext& ctx) {
    const auto x = ctx.input_value(0), w = ctx.input_value(1);
    const auto go = ctx.grad_out;
    if (auto gx = ctx.grad_in(0); !gx.empty())
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) acc += double(w[i * n + j]) * go[i];
        gx[j] += static_cast<float>(acc);
      }
    if (auto gw = ctx.grad_in(1); !gw.empty())
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gw[i * n + j] += go[i] * x[j];
    if (auto gb = ctx.grad_in(2); !gb.empty())
      for (std::size_t i = 0; i < m; ++i) gb[i] += go[i];
  });
}

Tensor mae_loss(const Tensor& pred, std::span<const float> target) {
  const auto p = pred.value();
  if (p.size() != target.size())
    fail(Errc::invalid_argument, "mae_loss: length mismatch (" + std::to_string(p.size()) + " predictions, " +
                                     std::to_string(target.size()) + " targets)");
  require(!p.empty(), "mae_loss: empty batch");
  double acc = 0.0;
  std::vector<float> tgt(target.begin(), target.end());
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(double(p[i]) - double(tgt[i]));
  const double b = static_cast<double>(p.size());
  return pred.tape().record({1}, {static_cast<float>(acc / b)}, {pred.id()},
                            [tgt = std::move(tgt)](BackwardContext& ctx) {
                              auto g = ctx.grad_in(0);
                              const auto p = ctx.input_value(0);
                              const float scale = ctx.grad_out[0] / static_cast<float>(p.size());
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                const float d = p[i] - tgt[i];
                                g[i] += d > 0.0f ? scale : d < 0.0f ? -scale : 0.0f;
                              }
                            });
}

Tensor concat(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat: no inputs");
  Tape& tape = parts.front().tape();
  std::vector<float> out;
  std::vector<NodeId> ids;
  std::vector<std::size_t> sizes;
  for (const Tensor& t : parts) {
    require(&t.tape() == &tape, "concat: tensors belong to different tapes");
    out.insert(out.end(), t.value().begin(), t.value().end());
    ids.push_back(t.id());
    sizes.push_back(t.size());
  }
  const std::size_t total = out.size();
  return tape.record({total}, std::move(out), std::move(ids), [sizes](BackwardContext& ctx) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      if (auto g = ctx.grad_in(k); !g.empty())
        for (std::size_t i = 0; i < sizes[k]; ++i) g[i] += ctx.grad_out[off + i];
      off += sizes[k];
    }
  });
}

Tensor weighted_sum(const Tensor& t, std::span<const float> weights) {
  const auto v = t.value();
  shape_check(v.size() == weights.size(), "weighted_sum", "weights length");
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) acc += double(v[i]) * weights[i];
  std::vector<float> w(weights.begin(), weights.end());
  return t.tape().record({1}, {static_cast<float>(acc)}, {t.id()}, [w = std::move(w)](BackwardContext& ctx) {
    auto g = ctx.grad_in(0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += ctx.grad_out[0] * w[i];
  });
}

}  // namespace agemap::ad
