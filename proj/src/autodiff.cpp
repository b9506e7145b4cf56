// Copyright 2026 The gdnorm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "gdnorm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "gdnorm/errors.hpp"

namespace gdnorm {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

void require_channel_vector(const Tensor& x, const Tensor& v, const char* op) {
  if (v.rank() != 1 || v.size() != x.cols()) {
    throw DimensionError(std::string(op) + ": channel vector " +
                         shape_str(v.shape()) + " does not match input " +
                         shape_str(x.shape()));
  }
}

}  // namespace

Var Tape::push(Tensor value, std::function<void(Tape&, const Node&)> back) {
  if (consumed_) throw ContractError("tape already backpropagated");
  if (!value.all_finite()) {
    throw NumericError("non-finite value produced in forward pass");
  }
  Node n;
  n.value = std::move(value);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Tape::Node& Tape::node(Var v) {
  if (v.id >= nodes_.size()) throw IndexError("unknown tape value");
  return nodes_[v.id];
}

std::vector<double>& Tape::adj(Var v) {
  Node& n = node(v);
  if (n.adj.empty()) n.adj.assign(n.value.size(), 0.0);
  return n.adj;
}

const Tensor& Tape::value(Var v) const {
  if (v.id >= nodes_.size()) throw IndexError("unknown tape value");
  return nodes_[v.id].value;
}

Var Tape::constant(Tensor value) {
  value.set_trainable(false);
  return push(std::move(value), nullptr);
}

Var Tape::param(Tensor& p) {
  if (!p.trainable()) throw ContractError("param() on a non-trainable tensor");
  Tensor copy(p.shape(), std::vector<double>(p.values().begin(), p.values().end()));
  Var v = push(std::move(copy), nullptr);
  nodes_[v.id].param = &p;
  return v;
}

Var Tape::linear(Var x, Var w, std::optional<Var> bias) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  const std::size_t batch = xv.rows(), cin = xv.cols();
  if (wv.rows() != cin) {
    throw DimensionError("linear: input " + shape_str(xv.shape()) +
                         " vs weight " + shape_str(wv.shape()));
  }
  const std::size_t cout = wv.cols();
  if (bias && (value(*bias).rank() != 1 || value(*bias).size() != cout)) {
    throw DimensionError("linear: bias " + shape_str(value(*bias).shape()) +
                         " vs output width " + std::to_string(cout));
  }
  Tensor y(Shape{batch, cout});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < cin; ++i) {
      const double xi = xv.at(b, i);
      if (xi == 0.0) continue;
      for (std::size_t o = 0; o < cout; ++o) y.at(b, o) += xi * wv.at(i, o);
    }
    if (bias) {
      const Tensor& bv = value(*bias);
      for (std::size_t o = 0; o < cout; ++o) y.at(b, o) += bv[o];
    }
  }
  return push(std::move(y), [x, w, bias, batch, cin, cout](Tape& t, const Node& self) {
    const Tensor& xv = t.value(x);
    const Tensor& wv = t.value(w);
    auto& gx = t.adj(x);
    auto& gw = t.adj(w);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < cin; ++i) {
        double acc = 0.0;
        const double xi = xv.at(b, i);
        for (std::size_t o = 0; o < cout; ++o) {
          const double g = self.adj[b * cout + o];
          acc += g * wv.at(i, o);
          gw[i * cout + o] += xi * g;
        }
        gx[b * cin + i] += acc;
      }
    }
    if (bias) {
      auto& gb = t.adj(*bias);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < cout; ++o) gb[o] += self.adj[b * cout + o];
    }
  });
}

Var Tape::relu(Var x) {
  Tensor y = value(x);
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return push(std::move(y), [x](Tape& t, const Node& self) {
    const Tensor& xv = t.value(x);
    auto& gx = t.adj(x);
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (xv[i] > 0.0) gx[i] += self.adj[i];
  });
}

Tape::BatchNormResult Tape::batch_norm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = value(x);
  const std::size_t batch = xv.rows(), ch = xv.cols();
  require_channel_vector(xv, value(gamma), "batch_norm");
  require_channel_vector(xv, value(beta), "batch_norm");
  if (batch < 2) {
    throw DegenerateBatchError("batch_norm needs at least 2 samples, got " +
                               std::to_string(batch));
  }
  if (!(eps > 0.0)) throw ContractError("batch_norm: eps must be > 0");

  Tensor mean(Shape{ch}), var(Shape{ch});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) mean[c] += xv.at(b, c);
  for (std::size_t c = 0; c < ch; ++c) mean[c] /= static_cast<double>(batch);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      const double d = xv.at(b, c) - mean[c];
      var[c] += d * d;
    }
  for (std::size_t c = 0; c < ch; ++c) var[c] /= static_cast<double>(batch);

  std::vector<double> inv_std(ch);
  for (std::size_t c = 0; c < ch; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);

  Tensor xhat(Shape{batch, ch});
  Tensor y(Shape{batch, ch});
  const Tensor& gv = value(gamma);
  const Tensor& bv = value(beta);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      xhat.at(b, c) = (xv.at(b, c) - mean[c]) * inv_std[c];
      y.at(b, c) = gv[c] * xhat.at(b, c) + bv[c];
    }

  Var out = push(std::move(y), [x, gamma, beta, batch, ch, inv_std,
                                xhat = std::move(xhat)](Tape& t, const Node& self) {
    const Tensor& gv = t.value(gamma);
    auto& gx = t.adj(x);
    auto& gg = t.adj(gamma);
    auto& gb = t.adj(beta);
    const double n = static_cast<double>(batch);
    for (std::size_t c = 0; c < ch; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double dy = self.adj[b * ch + c];
        sum_dy += dy;
        sum_dy_xhat += dy * xhat.at(b, c);
      }
      gg[c] += sum_dy_xhat;
      gb[c] += sum_dy;
      // dx = gamma * inv_std / B * (B dy - sum(dy) - xhat sum(dy xhat))
      const double k = gv[c] * inv_std[c] / n;
      for (std::size_t b = 0; b < batch; ++b) {
        const double dy = self.adj[b * ch + c];
        gx[b * ch + c] += k * (n * dy - sum_dy - xhat.at(b, c) * sum_dy_xhat);
      }
    }
  });
  return BatchNormResult{out, std::move(mean), std::move(var)};
}

Var Tape::affine(Var x, Var a, Var b) {
  const Tensor& xv = value(x);
  const std::size_t batch = xv.rows(), ch = xv.cols();
  require_channel_vector(xv, value(a), "affine");
  require_channel_vector(xv, value(b), "affine");
  Tensor y(Shape{batch, ch});
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  for (std::size_t r = 0; r < batch; ++r)
    for (std::size_t c = 0; c < ch; ++c) y.at(r, c) = av[c] * xv.at(r, c) + bv[c];
  return push(std::move(y), [x, a, b, batch, ch](Tape& t, const Node& self) {
    const Tensor& xv = t.value(x);
    const Tensor& av = t.value(a);
    auto& gx = t.adj(x);
    auto& ga = t.adj(a);
    auto& gb = t.adj(b);
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t c = 0; c < ch; ++c) {
        const double g = self.adj[r * ch + c];
        gx[r * ch + c] += av[c] * g;
        ga[c] += xv.at(r, c) * g;
        gb[c] += g;
      }
  });
}

Var Tape::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  Tensor y = value(a);
  const Tensor& bv = value(b);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return push(std::move(y), [a, b](Tape& t, const Node& self) {
    auto& ga = t.adj(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.adj[i];
    auto& gb = t.adj(b);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.adj[i];
  });
}

Var Tape::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  Tensor y = value(a);
  const Tensor& bv = value(b);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return push(std::move(y), [a, b](Tape& t, const Node& self) {
    auto& ga = t.adj(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.adj[i];
    auto& gb = t.adj(b);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= self.adj[i];
  });
}

Var Tape::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  Tensor y = value(a);
  const Tensor& bv = value(b);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  return push(std::move(y), [a, b](Tape& t, const Node& self) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    auto& ga = t.adj(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += bv[i] * self.adj[i];
    auto& gb = t.adj(b);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += av[i] * self.adj[i];
  });
}

Var Tape::scale(Var a, double s) {
  Tensor y = value(a);
  for (double& v : y.values()) v *= s;
  return push(std::move(y), [a, s](Tape& t, const Node& self) {
    auto& ga = t.adj(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s * self.adj[i];
  });
}

Var Tape::mul_const(Var a, const Tensor& c) {
  require_same_shape(value(a), c, "mul_const");
  Tensor y = value(a);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= c[i];
  return push(std::move(y), [a, c](Tape& t, const Node& self) {
    auto& ga = t.adj(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c[i] * self.adj[i];
  });
}

Var Tape::square(Var a) {
  Tensor y = value(a);
  for (double& v : y.values()) v *= v;
  return push(std::move(y), [a](Tape& t, const Node& self) {
    const Tensor& av = t.value(a);
    auto& ga = t.adj(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += 2.0 * av[i] * self.adj[i];
  });
}

Var Tape::sqrt(Var a) {
  Tensor y = value(a);
  for (double& v : y.values()) {
    if (v < 0.0) throw NumericError("sqrt of a negative value");
    v = std::sqrt(v);
  }
  return push(std::move(y), [a](Tape& t, const Node& self) {
    auto& ga = t.adj(a);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      const double r = self.value[i];
      if (r > 0.0) ga[i] += 0.5 / r * self.adj[i];
    }
  });
}

Var Tape::mean(std::span<const Var> xs) {
  if (xs.empty()) throw ContractError("mean of an empty list");
  // Offsets from the first input, so equal inputs average to exactly that value.
  const Tensor& first = value(xs[0]);
  Tensor d(first.shape());
  for (Var v : xs) {
    require_same_shape(first, value(v), "mean");
    const Tensor& tv = value(v);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += tv[i] - first[i];
  }
  const double count = static_cast<double>(xs.size());
  Tensor y(first.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = first[i] + d[i] / count;
  const double inv = 1.0 / count;
  std::vector<Var> inputs(xs.begin(), xs.end());
  return push(std::move(y), [inputs = std::move(inputs), inv](Tape& t, const Node& self) {
    for (Var v : inputs) {
      auto& g = t.adj(v);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += inv * self.adj[i];
    }
  });
}

Var Tape::sum(Var x) {
  double s = 0.0;
  for (double v : value(x).values()) s += v;
  return push(Tensor::scalar(s), [x](Tape& t, const Node& self) {
    auto& g = t.adj(x);
    for (double& v : g) v += self.adj[0];
  });
}

Var Tape::cross_entropy(Var logits, std::span<const std::size_t> labels) {
  const Tensor& lv = value(logits);
  const std::size_t batch = lv.rows(), classes = lv.cols();
  if (labels.size() != batch) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(batch) + " rows");
  }
  if (batch == 0) throw ContractError("cross_entropy on an empty batch");
  Tensor probs(Shape{batch, classes});
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] >= classes) {
      throw IndexError("label " + std::to_string(labels[b]) + " outside " +
                       std::to_string(classes) + " classes");
    }
    double mx = lv.at(b, 0);
    for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, lv.at(b, c));
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      probs.at(b, c) = std::exp(lv.at(b, c) - mx);
      z += probs.at(b, c);
    }
    for (std::size_t c = 0; c < classes; ++c) probs.at(b, c) /= z;
    loss += (mx + std::log(z)) - lv.at(b, labels[b]);
  }
  loss /= static_cast<double>(batch);
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  return push(Tensor::scalar(loss), [logits, probs = std::move(probs), lab = std::move(lab),
                                     batch, classes](Tape& t, const Node& self) {
    auto& g = t.adj(logits);
    const double k = self.adj[0] / static_cast<double>(batch);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < classes; ++c) {
        const double target = c == lab[b] ? 1.0 : 0.0;
        g[b * classes + c] += k * (probs.at(b, c) - target);
      }
  });
}

Var Tape::batch_hard_triplet(Var embeddings, std::span<const std::size_t> labels,
                             double margin) {
  const Tensor& ev = value(embeddings);
  const std::size_t n = ev.rows(), dim = ev.cols();
  if (labels.size() != n) {
    throw DimensionError("triplet: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(n) + " rows");
  }
  std::map<std::size_t, std::size_t> counts;
  for (std::size_t l : labels) ++counts[l];
  if (counts.size() < 2) {
    throw ContractError("triplet loss needs at least 2 identities in the batch");
  }
  for (const auto& [id, c] : counts) {
    if (c < 2) {
      throw ContractError("identity " + std::to_string(id) +
                          " has a single instance in the batch");
    }
  }

  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = ev.at(i, d) - ev.at(j, d);
        s += diff * diff;
      }
      dist[i * n + j] = dist[j * n + i] = std::sqrt(s);
    }

  // Hardest positive / negative per anchor; ties resolve to the lowest index.
  struct Mined {
    std::size_t pos, neg;
    bool active;
  };
  std::vector<Mined> mined(n);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t pos = n, neg = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (labels[j] == labels[i]) {
        if (pos == n || dist[i * n + j] > dist[i * n + pos]) pos = j;
      } else {
        if (neg == n || dist[i * n + j] < dist[i * n + neg]) neg = j;
      }
    }
    const double h = dist[i * n + pos] - dist[i * n + neg] + margin;
    mined[i] = {pos, neg, h > 0.0};
    if (h > 0.0) loss += h;
  }
  loss /= static_cast<double>(n);

  return push(Tensor::scalar(loss), [embeddings, mined = std::move(mined),
                                     dist = std::move(dist), n, dim](Tape& t, const Node& self) {
    const Tensor& ev = t.value(embeddings);
    auto& g = t.adj(embeddings);
    const double k = self.adj[0] / static_cast<double>(n);
    // d|e_i - e_j| / d e_i = (e_i - e_j) / |e_i - e_j|, zero when coincident.
    auto push_pair = [&](std::size_t i, std::size_t j, double w) {
      const double dij = dist[i * n + j];
      if (dij == 0.0) return;
      for (std::size_t d = 0; d < dim; ++d) {
        const double u = (ev.at(i, d) - ev.at(j, d)) / dij;
        g[i * dim + d] += w * u;
        g[j * dim + d] -= w * u;
      }
    };
    for (std::size_t i = 0; i < n; ++i) {
      if (!mined[i].active) continue;
      push_pair(i, mined[i].pos, k);
      push_pair(i, mined[i].neg, -k);
    }
  });
}

void Tape::backward(Var loss) {
  if (consumed_) {
    throw ContractError("backward called twice on the same tape");
  }
  const Tensor& lv = value(loss);
  if (lv.size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        shape_str(lv.shape()));
  }
  consumed_ = true;
  adj(loss)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.adj.empty()) continue;
    if (n.back) n.back(*this, n);
  }
  for (Node& n : nodes_) {
    if (!n.param) continue;
    if (n.adj.empty()) n.adj.assign(n.value.size(), 0.0);
    for (double g : n.adj) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient");
    }
    n.param->accumulate_grad(n.adj);
  }
}

}  // namespace gdnorm
