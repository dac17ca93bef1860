/*
 * Copyright 2026 The MSV Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "msv/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "msv/error.hpp"

namespace msv::ad {
namespace {

void require_same_tape(Var a, Var b, const char* op) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw ContractError(std::string(op) + ": operands are not on the same tape");
  }
}

std::string shape_str(const Tensor& t) {
  return "(" + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + ")";
}

// c (m x n) += a (m x k) * b (k x n)
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c (m x n) += a (m x k) * b^T, b is (n x k)
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
      c[i * n + j] += s;
    }
  }
}

// c (m x n) += a^T * b, a is (k x m), b is (k x n)
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double api = a[p * m + i];
      if (api == 0.0) continue;
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_slope(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : shape_{rows, cols}, data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : shape_{rows, cols}, data_(std::move(data)) {
  if (data_.size() != rows * cols) throw DimensionError("tensor data length does not match shape");
}

Tensor::Tensor(const Matrix& m) : shape_{m.rows(), m.cols()}, data_(m.data()) {}

double Tensor::item() const {
  if (data_.size() != 1) throw ContractError("item() on a non-scalar tensor " + shape_str(*this));
  return data_[0];
}

void Tensor::set_requires_grad(bool on) {
  requires_grad_ = on;
  if (on) {
    if (!grad_) grad_.emplace(data_.size(), 0.0);
  } else {
    grad_.reset();
  }
}

std::vector<double>& Tensor::grad() {
  if (!grad_) throw ContractError("tensor does not require grad");
  return *grad_;
}

const std::vector<double>& Tensor::grad() const {
  if (!grad_) throw ContractError("tensor does not require grad");
  return *grad_;
}

void Tensor::zero_grad() {
  if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
}

const Tensor& Var::value() const {
  if (tape == nullptr) throw ContractError("unbound Var");
  return tape->value(*this);
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Tape::parameter(Tensor& param) {
  Node node;
  node.value = param;
  node.value.set_requires_grad(false);
  node.param = &param;
  node.needs_grad = recording() && param.requires_grad();
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Tape::push(Tensor value, std::vector<std::size_t> inputs, Backward backward, const char* op) {
  for (double v : value.data()) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("primitive '") + op + "' produced a non-finite value");
    }
  }
  Node node;
  node.value = std::move(value);
  if (recording()) {
    node.needs_grad = std::any_of(inputs.begin(), inputs.end(),
                                  [&](std::size_t i) { return nodes_[i].needs_grad; });
    if (node.needs_grad) node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

std::vector<double>& Tape::grad_buffer(std::size_t id) {
  Node& node = nodes_[id];
  if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
  return node.grad;
}

void Tape::backward(Var loss, bool keep) {
  if (loss.tape != this) throw ContractError("backward: loss is not on this tape");
  if (!recording()) throw ContractError("backward on an inference tape");
  if (value(loss).size() != 1) {
    throw ContractError("backward requires a scalar loss, got " + shape_str(value(loss)));
  }
  for (auto& n : nodes_) n.grad.clear();
  grad_buffer(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.grad.empty() || !node.needs_grad) continue;
    if (node.backward) {
      node.backward(*this, i);
    } else if (node.param != nullptr) {
      auto& dst = node.param->grad();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += node.grad[j];
    }
  }
  if (!keep) nodes_.clear();
}

// ---------------------------------------------------------------------------
// Primitives

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: " + shape_str(av) + " x " + shape_str(bv));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out(m, n);
  gemm_nn(av.data().data(), bv.data().data(), out.data().data(), m, k, n);
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->push(std::move(out), {ia, ib},
                      [ia, ib, m, k, n](Tape& t, std::size_t self) {
                        const auto& g = t.node_grad(self);
                        if (t.needs_grad(ia)) {
                          gemm_nt(g.data(), t.node_value(ib).data().data(),
                                  t.grad_buffer(ia).data(), m, n, k);
                        }
                        if (t.needs_grad(ib)) {
                          gemm_tn(t.node_value(ia).data().data(), g.data(),
                                  t.grad_buffer(ib).data(), k, m, n);
                        }
                      },
                      "matmul");
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out(c, r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = av(i, j);
  const std::size_t ia = a.id;
  return a.tape->push(std::move(out), {ia},
                      [ia, r, c](Tape& t, std::size_t self) {
                        const auto& g = t.node_grad(self);
                        auto& ga = t.grad_buffer(ia);
                        for (std::size_t i = 0; i < r; ++i)
                          for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
                      },
                      "transpose");
}

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t r = av.rows(), c = av.cols();
  const bool broadcast = bv.rows() == 1 && r != 1 && bv.cols() == c;
  if (!broadcast && av.shape() != bv.shape()) {
    throw DimensionError("add: " + shape_str(av) + " + " + shape_str(bv));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) += broadcast ? bv(0, j) : bv(i, j);
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->push(std::move(out), {ia, ib},
                      [ia, ib, r, c, broadcast](Tape& t, std::size_t self) {
                        const auto& g = t.node_grad(self);
                        if (t.needs_grad(ia)) {
                          auto& ga = t.grad_buffer(ia);
                          for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j];
                        }
                        if (t.needs_grad(ib)) {
                          auto& gb = t.grad_buffer(ib);
                          if (broadcast) {
                            for (std::size_t i = 0; i < r; ++i)
                              for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
                          } else {
                            for (std::size_t j = 0; j < g.size(); ++j) gb[j] += g[j];
                          }
                        }
                      },
                      "add");
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= s;
  const std::size_t ia = a.id;
  return a.tape->push(std::move(out), {ia},
                      [ia, s](Tape& t, std::size_t self) {
                        const auto& g = t.node_grad(self);
                        auto& ga = t.grad_buffer(ia);
                        for (std::size_t j = 0; j < g.size(); ++j) ga[j] += s * g[j];
                      },
                      "scale");
}

namespace {

Var softmax_impl(Var logits, const Tensor* additive, const char* op) {
  const Tensor& x = logits.value();
  const std::size_t r = x.rows(), c = x.cols();
  if (additive != nullptr && additive->shape() != x.shape()) {
    throw DimensionError(std::string(op) + ": mask " + shape_str(*additive) + " vs logits " +
                         shape_str(x));
  }
  Tensor out(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      const double m = additive ? (*additive)(i, j) : 0.0;
      if (m != 0.0 && !(std::isinf(m) && m < 0)) {
        throw PreconditionError(std::string(op) + ": mask entries must be 0 or -inf");
      }
      if (m == 0.0) mx = std::max(mx, x(i, j));
    }
    if (mx == -std::numeric_limits<double>::infinity()) continue;  // fully masked row
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (additive && (*additive)(i, j) != 0.0) continue;
      const double e = std::exp(x(i, j) - mx);
      out(i, j) = e;
      denom += e;
    }
    for (std::size_t j = 0; j < c; ++j) out(i, j) /= denom;
  }
  const std::size_t ia = logits.id;
  return logits.tape->push(std::move(out), {ia},
                           [ia, r, c](Tape& t, std::size_t self) {
                             const auto& g = t.node_grad(self);
                             const auto& y = t.node_value(self).data();
                             auto& ga = t.grad_buffer(ia);
                             for (std::size_t i = 0; i < r; ++i) {
                               double dot = 0.0;
                               for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
                               for (std::size_t j = 0; j < c; ++j) {
                                 ga[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
                               }
                             }
                           },
                           op);
}

}  // namespace

Var row_softmax_with_additive_mask(Var logits, const Tensor& additive) {
  return softmax_impl(logits, &additive, "row_softmax_with_additive_mask");
}

Var row_softmax(Var logits) { return softmax_impl(logits, nullptr, "row_softmax"); }

Var sigmoid(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = stable_sigmoid(v);
  const std::size_t ia = a.id;
  return a.tape->push(std::move(out), {ia},
                      [ia](Tape& t, std::size_t self) {
                        const auto& g = t.node_grad(self);
                        const auto& y = t.node_value(self).data();
                        auto& ga = t.grad_buffer(ia);
                        for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j] * y[j] * (1.0 - y[j]);
                      },
                      "sigmoid");
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  require_same_tape(x, gain, "layer_norm");
  require_same_tape(x, bias, "layer_norm");
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  if (gain.value().rows() != 1 || gain.value().cols() != c || bias.value().rows() != 1 ||
      bias.value().cols() != c) {
    throw DimensionError("layer_norm: gain/bias must be 1x" + std::to_string(c));
  }
  Tensor normalized(r, c);
  std::vector<double> inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += xv(i, j);
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xv(i, j) - mean) * (xv(i, j) - mean);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) normalized(i, j) = (xv(i, j) - mean) * inv_std[i];
  }
  Tensor out(r, c);
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) = normalized(i, j) * gv(0, j) + bv(0, j);
  const std::size_t ix = x.id, ig = gain.id, ib = bias.id;
  return x.tape->push(
      std::move(out), {ix, ig, ib},
      [ix, ig, ib, r, c, normalized = std::move(normalized), inv_std = std::move(inv_std)](
          Tape& t, std::size_t self) {
        const auto& g = t.node_grad(self);
        const Tensor& gv = t.node_value(ig);
        if (t.needs_grad(ig)) {
          auto& gg = t.grad_buffer(ig);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gg[j] += g[i * c + j] * normalized(i, j);
        }
        if (t.needs_grad(ib)) {
          auto& gb = t.grad_buffer(ib);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
        }
        if (t.needs_grad(ix)) {
          auto& gx = t.grad_buffer(ix);
          const double inv_c = 1.0 / static_cast<double>(c);
          for (std::size_t i = 0; i < r; ++i) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              const double d = g[i * c + j] * gv(0, j);
              mean_d += d;
              mean_dx += d * normalized(i, j);
            }
            mean_d *= inv_c;
            mean_dx *= inv_c;
            for (std::size_t j = 0; j < c; ++j) {
              const double d = g[i * c + j] * gv(0, j);
              gx[i * c + j] += inv_std[i] * (d - mean_d - normalized(i, j) * mean_dx);
            }
          }
        }
      },
      "layer_norm");
}

Var gelu(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = gelu_value(v);
  const std::size_t ia = a.id;
  return a.tape->push(std::move(out), {ia},
                      [ia](Tape& t, std::size_t self) {
                        const auto& g = t.node_grad(self);
                        const auto& x = t.node_value(ia).data();
                        auto& ga = t.grad_buffer(ia);
                        for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j] * gelu_slope(x[j]);
                      },
                      "gelu");
}

Var mean_rows(Var a) {
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  if (r == 0) throw DimensionError("mean_rows of an empty tensor");
  Tensor out(1, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(0, j) += av(i, j);
  for (double& v : out.data()) v /= static_cast<double>(r);
  const std::size_t ia = a.id;
  return a.tape->push(std::move(out), {ia},
                      [ia, r, c](Tape& t, std::size_t self) {
                        const auto& g = t.node_grad(self);
                        auto& ga = t.grad_buffer(ia);
                        const double w = 1.0 / static_cast<double>(r);
                        for (std::size_t i = 0; i < r; ++i)
                          for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += w * g[j];
                      },
                      "mean_rows");
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  const std::size_t c = parts[0].cols();
  std::size_t r = 0;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    require_same_tape(parts[0], p, "concat_rows");
    if (p.cols() != c) throw DimensionError("concat_rows: column mismatch");
    r += p.rows();
    ids.push_back(p.id);
  }
  Tensor out(r, c);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const auto& src = p.value().data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += src.size();
  }
  return parts[0].tape->push(std::move(out), ids,
                             [ids](Tape& t, std::size_t self) {
                               const auto& g = t.node_grad(self);
                               std::size_t offset = 0;
                               for (std::size_t id : ids) {
                                 const std::size_t n = t.node_value(id).size();
                                 if (t.needs_grad(id)) {
                                   auto& gi = t.grad_buffer(id);
                                   for (std::size_t j = 0; j < n; ++j) gi[j] += g[offset + j];
                                 }
                                 offset += n;
                               }
                             },
                             "concat_rows");
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  const Tensor& av = a.value();
  const std::size_t c = av.cols();
  Tensor out(rows.size(), c);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= av.rows()) throw DimensionError("gather_rows: index out of range");
    for (std::size_t j = 0; j < c; ++j) out(i, j) = av(rows[i], j);
  }
  const std::size_t ia = a.id;
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return a.tape->push(std::move(out), {ia},
                      [ia, c, idx = std::move(idx)](Tape& t, std::size_t self) {
                        const auto& g = t.node_grad(self);
                        auto& ga = t.grad_buffer(ia);
                        for (std::size_t i = 0; i < idx.size(); ++i)
                          for (std::size_t j = 0; j < c; ++j) ga[idx[i] * c + j] += g[i * c + j];
                      },
                      "gather_rows");
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id;
  return a.tape->push(Tensor::scalar(s), {ia},
                      [ia](Tape& t, std::size_t self) {
                        const double g = t.node_grad(self)[0];
                        for (double& v : t.grad_buffer(ia)) v += g;
                      },
                      "sum");
}

Var weighted_sum(std::span<const Var> parts, Var weights) {
  if (parts.empty()) throw DimensionError("weighted_sum of nothing");
  const Tensor& w = weights.value();
  if (w.rows() != 1 || w.cols() != parts.size()) {
    throw DimensionError("weighted_sum: weights must be 1x" + std::to_string(parts.size()));
  }
  const Shape& shape = parts[0].value().shape();
  std::vector<std::size_t> ids{weights.id};
  Tensor out(shape[0], shape[1]);
  for (std::size_t j = 0; j < parts.size(); ++j) {
    require_same_tape(weights, parts[j], "weighted_sum");
    const Tensor& p = parts[j].value();
    if (p.shape() != shape) throw DimensionError("weighted_sum: shape mismatch");
    for (std::size_t e = 0; e < p.size(); ++e) out.data()[e] += w(0, j) * p.data()[e];
    ids.push_back(parts[j].id);
  }
  return weights.tape->push(std::move(out), ids,
                            [ids](Tape& t, std::size_t self) {
                              const auto& g = t.node_grad(self);
                              const std::size_t iw = ids[0];
                              const Tensor& w = t.node_value(iw);
                              for (std::size_t j = 1; j < ids.size(); ++j) {
                                const auto& p = t.node_value(ids[j]).data();
                                if (t.needs_grad(iw)) {
                                  double dot = 0.0;
                                  for (std::size_t e = 0; e < g.size(); ++e) dot += g[e] * p[e];
                                  t.grad_buffer(iw)[j - 1] += dot;
                                }
                                if (t.needs_grad(ids[j])) {
                                  auto& gp = t.grad_buffer(ids[j]);
                                  const double wj = w(0, j - 1);
                                  for (std::size_t e = 0; e < g.size(); ++e) gp[e] += wj * g[e];
                                }
                              }
                            },
                            "weighted_sum");
}

Var bce_with_logits_sum(Var logits, std::span<const double> labels, double clamp) {
  const Tensor& z = logits.value();
  if (z.cols() != 1 || z.rows() != labels.size()) {
    throw DimensionError("bce_with_logits_sum: logits " + shape_str(z) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  double loss = 0.0;
  std::vector<double> slope(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = stable_sigmoid(z(i, 0));
    const double pc = std::clamp(p, clamp, 1.0 - clamp);
    const double y = labels[i];
    loss -= y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc);
    // d/dz of the clamped loss: zero where the clamp is active.
    slope[i] = (p == pc) ? (p - y) : 0.0;
  }
  const std::size_t ia = logits.id;
  return logits.tape->push(Tensor::scalar(loss), {ia},
                           [ia, slope = std::move(slope)](Tape& t, std::size_t self) {
                             const double g = t.node_grad(self)[0];
                             auto& ga = t.grad_buffer(ia);
                             for (std::size_t i = 0; i < slope.size(); ++i) ga[i] += g * slope[i];
                           },
                           "bce_with_logits_sum");
}

double finite_diff_check(const std::function<Var(Tape&)>& loss_fn,
                         std::span<Tensor* const> params, double eps) {
  if (!(eps > 0.0)) throw PreconditionError("finite_diff_check requires eps > 0");
  for (Tensor* p : params) {
    p->set_requires_grad(true);
    p->zero_grad();
  }
  {
    Tape tape;
    Var loss = loss_fn(tape);
    tape.backward(loss);
  }
  auto eval = [&]() {
    Tape tape(Tape::Mode::kInference);
    return loss_fn(tape).value().item();
  };
  double worst = 0.0;
  for (Tensor* p : params) {
    const std::vector<double> analytic = p->grad();
    for (std::size_t e = 0; e < p->size(); ++e) {
      const double saved = p->data()[e];
      p->data()[e] = saved + eps;
      const double up = eval();
      p->data()[e] = saved - eps;
      const double down = eval();
      p->data()[e] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double denom = std::max({std::abs(analytic[e]), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(analytic[e] - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace msv::ad
