#include "dtc/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dtc/error.hpp"
#include "dtc/rng.hpp"

namespace dtc::nn {

namespace {

using BackwardFn = std::function<void(Node&)>;

Tensor make_result(Shape shape, std::vector<double> value, const char* op,
                   std::vector<Tensor> inputs, BackwardFn backward) {
  for (double v : value) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  if (!NoGradGuard::active()) {
    for (const auto& t : inputs) node->requires_grad |= t.requires_grad();
  }
  if (node->requires_grad) {
    for (auto& t : inputs) node->parents.push_back(t.node_ptr());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

// Gradient buffer of parent `i`, or nullptr when it takes no gradient.
double* pgrad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? p.grad.data() : nullptr;
}

const double* pval(Node& self, std::size_t i) { return self.parents[i]->value.data(); }

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_str(t.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> c(m * n, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip != 0.0) axpy(aip, B + p * n, c.data() + i * n, n);
    }
  }
  return make_result({m, n}, std::move(c), "matmul", {a, b}, [m, k, n](Node& self) {
    const double* dC = self.grad.data();
    const double* A = pval(self, 0);
    const double* B = pval(self, 1);
    if (double* dA = pgrad(self, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) dA[i * k + p] += dot(dC + i * n, B + p * n, n);
      }
    }
    if (double* dB = pgrad(self, 1)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          if (aip != 0.0) axpy(aip, dC + i * n, dB + p * n, n);
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
  }
  return make_result({n, m}, std::move(out), "transpose", {a}, [m, n](Node& self) {
    double* dA = pgrad(self, 0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) dA[i * n + j] += self.grad[j * m + i];
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result(a.shape(), std::move(out), "add", {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (double* d = pgrad(self, k)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i];
      }
    }
  });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  const std::size_t n = a.cols();
  if (bias.numel() != n) {
    throw DimensionError("add_bias: shape mismatch " + shape_str(a.shape()) + " + " +
                         shape_str(bias.shape()));
  }
  const std::size_t m = a.numel() / n;
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a[i * n + j] + bias[j];
  }
  return make_result(a.shape(), std::move(out), "add_bias", {a, bias}, [m, n](Node& self) {
    if (double* d = pgrad(self, 0)) {
      for (std::size_t i = 0; i < m * n; ++i) d[i] += self.grad[i];
    }
    if (double* d = pgrad(self, 1)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) d[j] += self.grad[i * n + j];
      }
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result(a.shape(), std::move(out), "mul", {a, b}, [](Node& self) {
    const double* A = pval(self, 0);
    const double* B = pval(self, 1);
    if (double* d = pgrad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i] * B[i];
    }
    if (double* d = pgrad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i] * A[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
  return make_result(a.shape(), std::move(out), "scale", {a}, [s](Node& self) {
    double* d = pgrad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i] * s;
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result({1}, {s}, "sum", {a}, [](Node& self) {
    double* d = pgrad(self, 0);
    const std::size_t n = self.parents[0]->value.size();
    for (std::size_t i = 0; i < n; ++i) d[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor softmax(const Tensor& a, int axis) {
  const int rank = static_cast<int>(a.rank());
  const int ax = axis < 0 ? rank + axis : axis;
  if (ax < 0 || ax >= rank) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                         shape_str(a.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= a.shape()[i];
  for (int i = ax + 1; i < rank; ++i) inner *= a.shape()[i];
  const std::size_t len = a.shape()[ax];

  std::vector<double> y(a.numel());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, a[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        y[base + j * inner] = std::exp(a[base + j * inner] - mx);
        z += y[base + j * inner];
      }
      for (std::size_t j = 0; j < len; ++j) y[base + j * inner] /= z;
    }
  }
  return make_result(a.shape(), std::move(y), "softmax", {a}, [outer, inner, len](Node& self) {
    double* d = pgrad(self, 0);
    const auto& y = self.value;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double s = 0.0;
        for (std::size_t j = 0; j < len; ++j) s += self.grad[base + j * inner] * y[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          d[base + j * inner] += y[base + j * inner] * (self.grad[base + j * inner] - s);
        }
      }
    }
  });
}

Tensor masked_softmax(const Tensor& a, std::span<const std::uint8_t> key_mask) {
  require_rank(a, 2, "masked_softmax");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (key_mask.size() != n) {
    throw DimensionError("masked_softmax: mask length " + std::to_string(key_mask.size()) +
                         " vs shape " + shape_str(a.shape()));
  }
  std::vector<double> y(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (key_mask[j]) mx = std::max(mx, a[i * n + j]);
    }
    if (!std::isfinite(mx)) throw NumericError("masked_softmax: every key is masked");
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (key_mask[j]) {
        y[i * n + j] = std::exp(a[i * n + j] - mx);
        z += y[i * n + j];
      }
    }
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] /= z;
  }
  return make_result({m, n}, std::move(y), "masked_softmax", {a}, [m, n](Node& self) {
    double* d = pgrad(self, 0);
    const auto& y = self.value;
    for (std::size_t i = 0; i < m; ++i) {
      const double s = dot(self.grad.data() + i * n, y.data() + i * n, n);
      for (std::size_t j = 0; j < n; ++j) d[i * n + j] += y[i * n + j] * (self.grad[i * n + j] - s);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t n = x.cols();
  if (gain.numel() != n || bias.numel() != n) {
    throw DimensionError("layer_norm: shape mismatch " + shape_str(x.shape()) + " with gain " +
                         shape_str(gain.shape()) + " and bias " + shape_str(bias.shape()));
  }
  const std::size_t m = x.numel() / n;
  std::vector<double> xhat(m * n), inv_std(m), y(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.data().data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mu) * inv_std[i];
      y[i * n + j] = xhat[i * n + j] * gain[j] + bias[j];
    }
  }
  return make_result(x.shape(), std::move(y), "layer_norm", {x, gain, bias},
                     [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                       const double* g = pval(self, 1);
                       const double* dy = self.grad.data();
                       if (double* dx = pgrad(self, 0)) {
                         std::vector<double> dxhat(n);
                         for (std::size_t i = 0; i < m; ++i) {
                           double mean_d = 0.0, mean_dx = 0.0;
                           for (std::size_t j = 0; j < n; ++j) {
                             dxhat[j] = dy[i * n + j] * g[j];
                             mean_d += dxhat[j];
                             mean_dx += dxhat[j] * xhat[i * n + j];
                           }
                           mean_d /= static_cast<double>(n);
                           mean_dx /= static_cast<double>(n);
                           for (std::size_t j = 0; j < n; ++j) {
                             dx[i * n + j] += inv_std[i] * (dxhat[j] - mean_d - xhat[i * n + j] * mean_dx);
                           }
                         }
                       }
                       if (double* dg = pgrad(self, 1)) {
                         for (std::size_t i = 0; i < m * n; ++i) dg[i % n] += dy[i] * xhat[i];
                       }
                       if (double* db = pgrad(self, 2)) {
                         for (std::size_t i = 0; i < m * n; ++i) db[i % n] += dy[i];
                       }
                     });
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  std::vector<double> y(x.numel());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * kInvSqrt2));
  }
  return make_result(x.shape(), std::move(y), "gelu", {x}, [](Node& self) {
    double* d = pgrad(self, 0);
    const double* xv = pval(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(xv[i] * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xv[i] * xv[i]);
      d[i] += self.grad[i] * (cdf + xv[i] * pdf);
    }
  });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  require_rank(table, 2, "embedding");
  const std::size_t v = table.shape()[0], d = table.shape()[1];
  std::vector<int> idv(ids.begin(), ids.end());
  std::vector<double> out(idv.size() * d);
  for (std::size_t r = 0; r < idv.size(); ++r) {
    if (idv[r] < 0 || static_cast<std::size_t>(idv[r]) >= v) {
      throw DimensionError("embedding: id " + std::to_string(idv[r]) + " outside table of shape " +
                           shape_str(table.shape()));
    }
    std::copy_n(table.data().data() + static_cast<std::size_t>(idv[r]) * d, d, out.data() + r * d);
  }
  const std::size_t rows = idv.size();
  return make_result({rows, d}, std::move(out), "embedding", {table},
                     [idv = std::move(idv), d](Node& self) {
                       double* dt = pgrad(self, 0);
                       for (std::size_t r = 0; r < idv.size(); ++r) {
                         axpy(1.0, self.grad.data() + r * d, dt + static_cast<std::size_t>(idv[r]) * d, d);
                       }
                     });
}

Tensor select_rows(const Tensor& a, std::span<const std::size_t> rows) {
  require_rank(a, 2, "select_rows");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<double> out(idx.size() * n);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= m) {
      throw DimensionError("select_rows: row " + std::to_string(idx[r]) + " outside shape " +
                           shape_str(a.shape()));
    }
    std::copy_n(a.data().data() + idx[r] * n, n, out.data() + r * n);
  }
  const std::size_t count = idx.size();
  return make_result({count, n}, std::move(out), "select_rows", {a},
                     [idx = std::move(idx), n](Node& self) {
                       double* d = pgrad(self, 0);
                       for (std::size_t r = 0; r < idx.size(); ++r) {
                         axpy(1.0, self.grad.data() + r * n, d + idx[r] * n, n);
                       }
                     });
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
  require_rank(a, 2, "slice_cols");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (start + count > n) {
    throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside shape " + shape_str(a.shape()));
  }
  std::vector<double> out(m * count);
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(a.data().data() + i * n + start, count, out.data() + i * count);
  }
  return make_result({m, count}, std::move(out), "slice_cols", {a}, [m, n, start, count](Node& self) {
    double* d = pgrad(self, 0);
    for (std::size_t i = 0; i < m; ++i) axpy(1.0, self.grad.data() + i * count, d + i * n + start, count);
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts.front().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.rows() != m) {
      throw DimensionError("concat_cols: shape mismatch " + shape_str(parts.front().shape()) + " vs " +
                           shape_str(p.shape()));
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(parts[k].data().data() + i * widths[k], widths[k], out.data() + i * total + off);
    }
    off += widths[k];
  }
  return make_result({m, total}, std::move(out), "concat_cols", parts,
                     [m, total, widths = std::move(widths)](Node& self) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < widths.size(); ++k) {
                         if (double* d = pgrad(self, k)) {
                           for (std::size_t i = 0; i < m; ++i) {
                             axpy(1.0, self.grad.data() + i * total + off, d + i * widths[k], widths[k]);
                           }
                         }
                         off += widths[k];
                       }
                     });
}

Tensor dropout(const Tensor& x, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout probability must lie in [0, 1)");
  if (p == 0.0) return x;
  Rng rng(seed);
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = rng.uniform() >= p ? keep_scale : 0.0;
    out[i] = x[i] * mask[i];
  }
  return make_result(x.shape(), std::move(out), "dropout", {x}, [mask = std::move(mask)](Node& self) {
    double* d = pgrad(self, 0);
    for (std::size_t i = 0; i < mask.size(); ++i) d[i] += self.grad[i] * mask[i];
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t m = logits.shape()[0], c = logits.shape()[1];
  if (targets.size() != m) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_str(logits.shape()));
  }
  if (m == 0) throw DimensionError("cross_entropy: no rows");
  std::vector<int> tv(targets.begin(), targets.end());
  std::vector<double> probs(m * c);
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (tv[i] < 0 || static_cast<std::size_t>(tv[i]) >= c) {
      throw DimensionError("cross_entropy: target " + std::to_string(tv[i]) + " outside " +
                           std::to_string(c) + " classes");
    }
    const double* z = logits.data().data() + i * c;
    const double mx = *std::max_element(z, z + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      probs[i * c + j] = std::exp(z[j] - mx);
      s += probs[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= s;
    loss += mx + std::log(s) - z[tv[i]];
  }
  loss /= static_cast<double>(m);
  return make_result({1}, {loss}, "cross_entropy", {logits},
                     [m, c, tv = std::move(tv), probs = std::move(probs)](Node& self) {
                       double* d = pgrad(self, 0);
                       const double g = self.grad[0] / static_cast<double>(m);
                       for (std::size_t i = 0; i < m; ++i) {
                         for (std::size_t j = 0; j < c; ++j) {
                           d[i * c + j] += g * (probs[i * c + j] - (static_cast<int>(j) == tv[i] ? 1.0 : 0.0));
                         }
                       }
                     });
}

Tensor kl_divergence(const Tensor& logits, const Tensor& target_probs) {
  require_rank(logits, 2, "kl_divergence");
  require_same(logits, target_probs, "kl_divergence");
  const std::size_t m = logits.shape()[0], c = logits.shape()[1];
  std::vector<double> probs(m * c);
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double* z = logits.data().data() + i * c;
    const double mx = *std::max_element(z, z + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(z[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < c; ++j) {
      const double logp = z[j] - lse;
      probs[i * c + j] = std::exp(logp);
      const double q = target_probs[i * c + j];
      if (q > 0.0) loss += q * (std::log(q) - logp);
    }
  }
  loss /= static_cast<double>(m);
  // Only the logits take a gradient.
  return make_result({1}, {loss}, "kl_divergence", {logits},
                     [m, c, probs = std::move(probs),
                      q = std::vector<double>(target_probs.data().begin(), target_probs.data().end())](Node& self) {
                       double* d = pgrad(self, 0);
                       const double g = self.grad[0] / static_cast<double>(m);
                       for (std::size_t i = 0; i < m * c; ++i) d[i] += g * (probs[i] - q[i]);
                     });
}

Tensor gather_relative(const Tensor& a, std::size_t seq, std::size_t k, bool transposed) {
  require_rank(a, 2, "gather_relative");
  const std::size_t width = 2 * k + 1;
  if (a.shape()[0] != seq || a.shape()[1] != width) {
    throw DimensionError("gather_relative: expected shape " + shape_str({seq, width}) + ", got " +
                         shape_str(a.shape()));
  }
  const auto ki = static_cast<std::ptrdiff_t>(k);
  auto bucket = [ki](std::ptrdiff_t delta) {
    return static_cast<std::size_t>(std::clamp(delta, -ki, ki) + ki);
  };
  // Source flat index for each output cell.
  std::vector<std::size_t> src(seq * seq);
  for (std::size_t i = 0; i < seq; ++i) {
    for (std::size_t j = 0; j < seq; ++j) {
      const auto d = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(j);
      src[i * seq + j] = transposed ? j * width + bucket(-d) : i * width + bucket(d);
    }
  }
  std::vector<double> out(seq * seq);
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = a[src[t]];
  return make_result({seq, seq}, std::move(out), "gather_relative", {a}, [src = std::move(src)](Node& self) {
    double* d = pgrad(self, 0);
    for (std::size_t t = 0; t < src.size(); ++t) d[src[t]] += self.grad[t];
  });
}

}  // namespace dtc::nn
