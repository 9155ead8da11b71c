#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bindecomp/common.hpp"
#include "bindecomp/tensor.hpp"

namespace bindecomp::neural {

// Reverse-mode tape. Nodes are appended during the forward pass; running the
// stored closures in reverse creation order is a valid topological sweep
// because an op can only reference nodes created before it.
class Tape {
 public:
  struct Value {
    std::size_t idx = static_cast<std::size_t>(-1);
  };

  Value leaf(Tensor t, bool needs_grad = false) {
    return push(std::move(t), needs_grad, nullptr);
  }

  const Tensor& value(Value v) const { return nodes_[v.idx].value; }
  Tensor& grad(Value v) { return nodes_[v.idx].grad; }

  // ---- ops -----------------------------------------------------------

  Value matmul(Value a, Value b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.cols != B.rows) {
      throw ShapeMismatch("matmul: " + A.shape_str() + " x " + B.shape_str());
    }
    Tensor C(A.rows, B.cols);
    for (std::size_t i = 0; i < A.rows; ++i) {
      const double* arow = &A.data[i * A.cols];
      double* crow = &C.data[i * C.cols];
      for (std::size_t k = 0; k < A.cols; ++k) {
        const double av = arow[k];
        if (av == 0.0) continue;
        const double* brow = &B.data[k * B.cols];
        for (std::size_t j = 0; j < B.cols; ++j) crow[j] += av * brow[j];
      }
    }
    check_finite(C, "matmul");
    return push(std::move(C), true, [this, a, b](const Tensor& g) {
      const Tensor& A = value(a);
      const Tensor& B = value(b);
      Tensor& dA = grad(a);
      Tensor& dB = grad(b);
      // dA += g * B^T
      for (std::size_t i = 0; i < A.rows; ++i) {
        for (std::size_t k = 0; k < A.cols; ++k) {
          dA.data[i * A.cols + k] +=
              dot(&g.data[i * g.cols], &B.data[k * B.cols], B.cols);
        }
      }
      // dB += A^T * g
      for (std::size_t k = 0; k < B.rows; ++k) {
        for (std::size_t i = 0; i < A.rows; ++i) {
          const double av = A.data[i * A.cols + k];
          if (av == 0.0) continue;
          const double* grow = &g.data[i * g.cols];
          double* drow = &dB.data[k * B.cols];
          for (std::size_t j = 0; j < B.cols; ++j) drow[j] += av * grow[j];
        }
      }
    });
  }

  Value add(Value a, Value b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B)) {
      throw ShapeMismatch("add: " + A.shape_str() + " vs " + B.shape_str());
    }
    Tensor C = A;
    for (std::size_t i = 0; i < C.size(); ++i) C.data[i] += B.data[i];
    check_finite(C, "add");
    return push(std::move(C), true, [this, a, b](const Tensor& g) {
      Tensor& dA = grad(a);
      Tensor& dB = grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) {
        dA.data[i] += g.data[i];
        dB.data[i] += g.data[i];
      }
    });
  }

  // matrix + broadcast row vector
  Value add_row(Value a, Value row) {
    const Tensor& A = value(a);
    const Tensor& R = value(row);
    if (R.rows != 1 || R.cols != A.cols) {
      throw ShapeMismatch("add_row: " + A.shape_str() + " vs " + R.shape_str());
    }
    Tensor C = A;
    for (std::size_t i = 0; i < A.rows; ++i) {
      for (std::size_t j = 0; j < A.cols; ++j) C.data[i * A.cols + j] += R.data[j];
    }
    check_finite(C, "add_row");
    return push(std::move(C), true, [this, a, row](const Tensor& g) {
      Tensor& dA = grad(a);
      Tensor& dR = grad(row);
      for (std::size_t i = 0; i < g.rows; ++i) {
        for (std::size_t j = 0; j < g.cols; ++j) {
          dA.data[i * g.cols + j] += g.data[i * g.cols + j];
          dR.data[j] += g.data[i * g.cols + j];
        }
      }
    });
  }

  Value scale(Value a, double c) {
    Tensor C = value(a);
    for (double& v : C.data) v *= c;
    check_finite(C, "scale");
    return push(std::move(C), true, [this, a, c](const Tensor& g) {
      Tensor& dA = grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) dA.data[i] += c * g.data[i];
    });
  }

  Value relu(Value a) {
    Tensor C = value(a);
    for (double& v : C.data) v = v > 0 ? v : 0.0;
    return push(std::move(C), true, [this, a](const Tensor& g) {
      const Tensor& A = value(a);
      Tensor& dA = grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (A.data[i] > 0) dA.data[i] += g.data[i];
      }
    });
  }

  Value transpose(Value a) {
    const Tensor& A = value(a);
    Tensor C(A.cols, A.rows);
    for (std::size_t i = 0; i < A.rows; ++i) {
      for (std::size_t j = 0; j < A.cols; ++j) C.data[j * A.rows + i] = A.data[i * A.cols + j];
    }
    return push(std::move(C), true, [this, a](const Tensor& g) {
      Tensor& dA = grad(a);
      for (std::size_t i = 0; i < g.rows; ++i) {
        for (std::size_t j = 0; j < g.cols; ++j) dA.data[j * g.rows + i] += g.data[i * g.cols + j];
      }
    });
  }

  Value slice_cols(Value a, std::size_t c0, std::size_t c1) {
    const Tensor& A = value(a);
    if (c0 >= c1 || c1 > A.cols) throw ShapeMismatch("slice_cols: bad range");
    Tensor C(A.rows, c1 - c0);
    for (std::size_t i = 0; i < A.rows; ++i) {
      for (std::size_t j = c0; j < c1; ++j) C.data[i * C.cols + (j - c0)] = A.data[i * A.cols + j];
    }
    return push(std::move(C), true, [this, a, c0](const Tensor& g) {
      Tensor& dA = grad(a);
      const std::size_t acols = value(a).cols;
      for (std::size_t i = 0; i < g.rows; ++i) {
        for (std::size_t j = 0; j < g.cols; ++j) dA.data[i * acols + c0 + j] += g.data[i * g.cols + j];
      }
    });
  }

  Value concat_cols(const std::vector<Value>& parts) {
    if (parts.empty()) throw ShapeMismatch("concat_cols: nothing to join");
    const std::size_t rows = value(parts[0]).rows;
    std::size_t cols = 0;
    for (Value p : parts) {
      if (value(p).rows != rows) throw ShapeMismatch("concat_cols: row mismatch");
      cols += value(p).cols;
    }
    Tensor C(rows, cols);
    std::size_t off = 0;
    for (Value p : parts) {
      const Tensor& P = value(p);
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < P.cols; ++j) C.data[i * cols + off + j] = P.data[i * P.cols + j];
      }
      off += P.cols;
    }
    return push(std::move(C), true, [this, parts](const Tensor& g) {
      std::size_t off = 0;
      for (Value p : parts) {
        Tensor& dP = grad(p);
        const std::size_t pcols = value(p).cols;
        for (std::size_t i = 0; i < g.rows; ++i) {
          for (std::size_t j = 0; j < pcols; ++j) dP.data[i * pcols + j] += g.data[i * g.cols + off + j];
        }
        off += pcols;
      }
    });
  }

  // Row-wise layer normalization with learned gain/bias.
  Value layer_norm(Value x, Value gamma, Value beta, double eps = 1e-5) {
    const Tensor& X = value(x);
    const Tensor& G = value(gamma);
    const Tensor& B = value(beta);
    if (G.rows != 1 || G.cols != X.cols || B.rows != 1 || B.cols != X.cols) {
      throw ShapeMismatch("layer_norm: gain/bias must be 1x" + std::to_string(X.cols));
    }
    Tensor Y(X.rows, X.cols);
    Tensor xhat(X.rows, X.cols);            // cached for backward
    std::vector<double> inv_sigma(X.rows);  // 1/sqrt(var+eps) per row
    const auto n = static_cast<double>(X.cols);
    for (std::size_t i = 0; i < X.rows; ++i) {
      const double* row = &X.data[i * X.cols];
      double mu = 0;
      for (std::size_t j = 0; j < X.cols; ++j) mu += row[j];
      mu /= n;
      double var = 0;
      for (std::size_t j = 0; j < X.cols; ++j) var += (row[j] - mu) * (row[j] - mu);
      var /= n;
      const double inv = 1.0 / std::sqrt(var + eps);
      inv_sigma[i] = inv;
      for (std::size_t j = 0; j < X.cols; ++j) {
        const double xh = (row[j] - mu) * inv;
        xhat.data[i * X.cols + j] = xh;
        Y.data[i * X.cols + j] = G.data[j] * xh + B.data[j];
      }
    }
    check_finite(Y, "layer_norm");
    return push(std::move(Y), true,
                [this, x, gamma, beta, xhat = std::move(xhat),
                 inv_sigma = std::move(inv_sigma)](const Tensor& g) {
      const Tensor& G = value(gamma);
      Tensor& dX = grad(x);
      Tensor& dG = grad(gamma);
      Tensor& dB = grad(beta);
      const std::size_t cols = xhat.cols;
      const auto n = static_cast<double>(cols);
      for (std::size_t i = 0; i < xhat.rows; ++i) {
        const double* grow = &g.data[i * cols];
        const double* xrow = &xhat.data[i * cols];
        double sum_dy = 0, sum_dy_xhat = 0;
        for (std::size_t j = 0; j < cols; ++j) {
          const double dy = grow[j] * G.data[j];
          sum_dy += dy;
          sum_dy_xhat += dy * xrow[j];
          dG.data[j] += grow[j] * xrow[j];
          dB.data[j] += grow[j];
        }
        for (std::size_t j = 0; j < cols; ++j) {
          const double dy = grow[j] * G.data[j];
          dX.data[i * cols + j] +=
              inv_sigma[i] * (dy - sum_dy / n - xrow[j] * sum_dy_xhat / n);
        }
      }
    });
  }

  // Softmax across each row, restricted to positions where mask is nonzero.
  // Masked positions come out exactly zero; a fully masked row is all zeros.
  Value masked_softmax(Value x, const Tensor& mask) {
    const Tensor& X = value(x);
    if (!X.same_shape(mask)) {
      throw ShapeMismatch("masked_softmax: mask " + mask.shape_str() + " vs " + X.shape_str());
    }
    Tensor Y(X.rows, X.cols);
    for (std::size_t i = 0; i < X.rows; ++i) {
      const double* row = &X.data[i * X.cols];
      const double* m = &mask.data[i * X.cols];
      double mx = -1e300;
      bool any = false;
      for (std::size_t j = 0; j < X.cols; ++j) {
        if (m[j] != 0.0) {
          any = true;
          if (row[j] > mx) mx = row[j];
        }
      }
      if (!any) continue;
      double z = 0;
      for (std::size_t j = 0; j < X.cols; ++j) {
        if (m[j] != 0.0) z += std::exp(row[j] - mx);
      }
      for (std::size_t j = 0; j < X.cols; ++j) {
        if (m[j] != 0.0) Y.data[i * X.cols + j] = std::exp(row[j] - mx) / z;
      }
    }
    check_finite(Y, "masked_softmax");
    Tensor cached = Y;
    return push(std::move(Y), true,
                [this, x, cached = std::move(cached)](const Tensor& g) {
      Tensor& dX = grad(x);
      for (std::size_t i = 0; i < cached.rows; ++i) {
        const double* y = &cached.data[i * cached.cols];
        const double* grow = &g.data[i * cached.cols];
        double s = 0;
        for (std::size_t j = 0; j < cached.cols; ++j) s += y[j] * grow[j];
        for (std::size_t j = 0; j < cached.cols; ++j) {
          dX.data[i * cached.cols + j] += y[j] * (grow[j] - s);
        }
      }
    });
  }

  // Row gather: out[i] = table[ids[i]].
  Value embedding(Value table, const std::vector<std::size_t>& ids) {
    const Tensor& T = value(table);
    for (std::size_t id : ids) {
      if (id >= T.rows) {
        throw IdOutOfRange("embedding: id " + std::to_string(id) + " with table rows " +
                           std::to_string(T.rows));
      }
    }
    Tensor C(ids.size(), T.cols);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (std::size_t j = 0; j < T.cols; ++j) C.data[i * T.cols + j] = T.data[ids[i] * T.cols + j];
    }
    check_finite(C, "embedding");
    return push(std::move(C), true, [this, table, ids](const Tensor& g) {
      Tensor& dT = grad(table);
      const std::size_t cols = g.cols;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        for (std::size_t j = 0; j < cols; ++j) dT.data[ids[i] * cols + j] += g.data[i * cols + j];
      }
    });
  }

  // Mean over the rows where keep[i] is true; result shape 1 x cols.
  Value mean_rows(Value a, const std::vector<std::uint8_t>& keep) {
    const Tensor& A = value(a);
    if (keep.size() != A.rows) throw ShapeMismatch("mean_rows: keep length mismatch");
    std::size_t n = 0;
    for (auto k : keep) n += k ? 1 : 0;
    if (n == 0) throw ShapeMismatch("mean_rows: nothing kept");
    Tensor C(1, A.cols);
    for (std::size_t i = 0; i < A.rows; ++i) {
      if (!keep[i]) continue;
      for (std::size_t j = 0; j < A.cols; ++j) C.data[j] += A.data[i * A.cols + j];
    }
    for (double& v : C.data) v /= static_cast<double>(n);
    return push(std::move(C), true, [this, a, keep, n](const Tensor& g) {
      Tensor& dA = grad(a);
      const std::size_t cols = g.cols;
      for (std::size_t i = 0; i < keep.size(); ++i) {
        if (!keep[i]) continue;
        for (std::size_t j = 0; j < cols; ++j) {
          dA.data[i * cols + j] += g.data[j] / static_cast<double>(n);
        }
      }
    });
  }

  // Mean token-level cross entropy with an ignored id. Stable log-softmax;
  // rows whose target equals ignore_id contribute nothing. When every row is
  // ignored the loss is zero with zero gradient and `all_ignored` reports it.
  Value cross_entropy(Value logits, const std::vector<std::size_t>& targets,
                      std::size_t ignore_id, bool* all_ignored = nullptr) {
    const Tensor& L = value(logits);
    if (targets.size() != L.rows) {
      throw ShapeMismatch("cross_entropy: " + std::to_string(targets.size()) +
                          " targets for " + std::to_string(L.rows) + " rows");
    }
    std::size_t valid = 0;
    for (std::size_t t : targets) {
      if (t == ignore_id) continue;
      if (t >= L.cols) throw IdOutOfRange("cross_entropy: target " + std::to_string(t));
      ++valid;
    }
    if (all_ignored) *all_ignored = valid == 0;

    Tensor out(1, 1);
    Tensor probs(L.rows, L.cols);  // cached softmax for backward
    if (valid > 0) {
      double total = 0;
      for (std::size_t i = 0; i < L.rows; ++i) {
        const double* row = &L.data[i * L.cols];
        double mx = row[0];
        for (std::size_t j = 1; j < L.cols; ++j) mx = std::max(mx, row[j]);
        double z = 0;
        for (std::size_t j = 0; j < L.cols; ++j) z += std::exp(row[j] - mx);
        for (std::size_t j = 0; j < L.cols; ++j) {
          probs.data[i * L.cols + j] = std::exp(row[j] - mx) / z;
        }
        if (targets[i] != ignore_id) {
          total += (std::log(z) + mx) - row[targets[i]];
        }
      }
      out.data[0] = total / static_cast<double>(valid);
    }
    check_finite(out, "cross_entropy");
    return push(std::move(out), true,
                [this, logits, targets, ignore_id, valid,
                 probs = std::move(probs)](const Tensor& g) {
      if (valid == 0) return;
      Tensor& dL = grad(logits);
      const double go = g.data[0] / static_cast<double>(valid);
      for (std::size_t i = 0; i < probs.rows; ++i) {
        if (targets[i] == ignore_id) continue;
        for (std::size_t j = 0; j < probs.cols; ++j) {
          double d = probs.data[i * probs.cols + j];
          if (j == targets[i]) d -= 1.0;
          dL.data[i * probs.cols + j] += go * d;
        }
      }
    });
  }

  // ---- reverse sweep ---------------------------------------------------

  void backward(Value root) {
    Tensor& r = grad(root);
    if (r.size() != 1) throw ShapeMismatch("backward: root must be scalar");
    r.data[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      if (nodes_[i].backward) nodes_[i].backward(nodes_[i].grad);
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(const Tensor&)> backward;
  };

  Value push(Tensor t, bool /*needs_grad*/, std::function<void(const Tensor&)> bw) {
    Node n;
    n.grad = Tensor(t.rows, t.cols);
    n.value = std::move(t);
    n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return Value{nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
};

using Value = Tape::Value;

}  // namespace bindecomp::neural
