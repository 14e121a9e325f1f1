#pragma once

// Reverse-mode automatic differentiation over Tensor values. Each operation
// builds a Node holding the forward value, the parent links, and a closure
// that scatters the node's gradient back into its parents. backward() runs
// the closures in reverse topological order from a scalar loss.
//
// Gradients accumulate: callers zero parameter gradients (ParamStore::
// zero_grads) before building the next graph. Everything is double
// precision and single-threaded, so results are bit-reproducible.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "ctxmatch/rng.hpp"
#include "ctxmatch/tensor.hpp"
#include "ctxmatch/util.hpp"

namespace ctxmatch {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // empty until first touched
  bool requires_grad = false;
  bool is_param = false;
  std::string name;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& ensure_grad() {
    if (grad.size() != value.size()) grad = Tensor::zeros(value.shape());
    return grad;
  }
};

inline NodePtr constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return n;
}

inline NodePtr constant_row(std::vector<double> values) {
  return constant(Tensor::row(std::move(values)));
}

namespace detail {

inline NodePtr make_op(Tensor value, std::vector<NodePtr> parents,
                       std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

inline void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    fail(op, ": shape mismatch ", a.shape_string(), " vs ", b.shape_string());
}

}  // namespace detail

// --- basic arithmetic --------------------------------------------------

inline NodePtr add(const NodePtr& a, const NodePtr& b) {
  detail::check_same_shape("add", a->value, b->value);
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
  return detail::make_op(std::move(out), {a, b}, [](Node& n) {
    const Tensor& g = n.grad;
    if (n.parents[0]->requires_grad) {
      Tensor& da = n.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    }
    if (n.parents[1]->requires_grad) {
      Tensor& db = n.parents[1]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
    }
  });
}

inline NodePtr sub(const NodePtr& a, const NodePtr& b) {
  detail::check_same_shape("sub", a->value, b->value);
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
  return detail::make_op(std::move(out), {a, b}, [](Node& n) {
    const Tensor& g = n.grad;
    if (n.parents[0]->requires_grad) {
      Tensor& da = n.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    }
    if (n.parents[1]->requires_grad) {
      Tensor& db = n.parents[1]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
    }
  });
}

inline NodePtr mul(const NodePtr& a, const NodePtr& b) {
  detail::check_same_shape("mul", a->value, b->value);
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
  return detail::make_op(std::move(out), {a, b}, [](Node& n) {
    const Tensor& g = n.grad;
    const Tensor& av = n.parents[0]->value;
    const Tensor& bv = n.parents[1]->value;
    if (n.parents[0]->requires_grad) {
      Tensor& da = n.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
    }
    if (n.parents[1]->requires_grad) {
      Tensor& db = n.parents[1]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
    }
  });
}

inline NodePtr scale(const NodePtr& a, double k) {
  Tensor out = a->value;
  for (auto& v : out.values()) v *= k;
  return detail::make_op(std::move(out), {a}, [k](Node& n) {
    Tensor& da = n.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) da[i] += n.grad[i] * k;
  });
}

// matrix + broadcast row (bias add)
inline NodePtr add_rowwise(const NodePtr& a, const NodePtr& row) {
  if (row->value.rows() != 1 || row->value.cols() != a->value.cols())
    fail("add_rowwise: shape mismatch ", a->value.shape_string(), " vs ",
         row->value.shape_string());
  Tensor out = a->value;
  const std::size_t R = out.rows(), C = out.cols();
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out.at(r, c) += row->value[c];
  return detail::make_op(std::move(out), {a, row}, [](Node& n) {
    const Tensor& g = n.grad;
    const std::size_t R = g.rows(), C = g.cols();
    if (n.parents[0]->requires_grad) {
      Tensor& da = n.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    }
    if (n.parents[1]->requires_grad) {
      Tensor& db = n.parents[1]->ensure_grad();
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) db[c] += g.at(r, c);
    }
  });
}

inline NodePtr matmul(const NodePtr& a, const NodePtr& b) {
  const Tensor& A = a->value;
  const Tensor& B = b->value;
  if (A.cols() != B.rows())
    fail("matmul: shape mismatch ", A.shape_string(), " vs ", B.shape_string());
  const std::size_t M = A.rows(), K = A.cols(), N = B.cols();
  Tensor out({M, N});
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t k = 0; k < K; ++k) {
      const double aik = A.at(i, k);
      if (aik == 0.0) continue;
      const double* brow = B.data() + k * N;
      double* orow = out.data() + i * N;
      for (std::size_t j = 0; j < N; ++j) orow[j] += aik * brow[j];
    }
  return detail::make_op(std::move(out), {a, b}, [M, K, N](Node& n) {
    const Tensor& g = n.grad;
    const Tensor& A = n.parents[0]->value;
    const Tensor& B = n.parents[1]->value;
    if (n.parents[0]->requires_grad) {
      Tensor& da = n.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < M; ++i)
        for (std::size_t k = 0; k < K; ++k) {
          const double* grow = g.data() + i * N;
          const double* brow = B.data() + k * N;
          double s = 0.0;
          for (std::size_t j = 0; j < N; ++j) s += grow[j] * brow[j];
          da.at(i, k) += s;
        }
    }
    if (n.parents[1]->requires_grad) {
      Tensor& db = n.parents[1]->ensure_grad();
      for (std::size_t i = 0; i < M; ++i)
        for (std::size_t k = 0; k < K; ++k) {
          const double aik = A.at(i, k);
          if (aik == 0.0) continue;
          const double* grow = g.data() + i * N;
          double* drow = db.data() + k * N;
          for (std::size_t j = 0; j < N; ++j) drow[j] += aik * grow[j];
        }
    }
  });
}

// --- nonlinearities ----------------------------------------------------

inline NodePtr relu(const NodePtr& a) {
  Tensor out = a->value;
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return detail::make_op(std::move(out), {a}, [](Node& n) {
    const Tensor& x = n.parents[0]->value;
    Tensor& da = n.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      if (x[i] > 0.0) da[i] += n.grad[i];
  });
}

inline NodePtr sigmoid(const NodePtr& a) {
  Tensor out = a->value;
  for (auto& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  auto n = detail::make_op(std::move(out), {a}, [](Node& n) {
    const Tensor& s = n.value;
    Tensor& da = n.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      da[i] += n.grad[i] * s[i] * (1.0 - s[i]);
  });
  return n;
}

inline NodePtr abs_val(const NodePtr& a) {
  Tensor out = a->value;
  for (auto& v : out.values()) v = std::fabs(v);
  return detail::make_op(std::move(out), {a}, [](Node& n) {
    const Tensor& x = n.parents[0]->value;
    Tensor& da = n.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const double s = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);
      da[i] += n.grad[i] * s;
    }
  });
}

// Row-stable softmax. An optional additive bias (e.g. -1e30 on masked
// attention columns) is applied by the caller with add() beforehand.
inline NodePtr softmax_rows(const NodePtr& a) {
  const Tensor& x = a->value;
  Tensor out = x;
  const std::size_t R = x.rows(), C = x.cols();
  for (std::size_t r = 0; r < R; ++r) {
    double mx = out.at(r, 0);
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, out.at(r, c));
    double sum = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      double e = std::exp(out.at(r, c) - mx);
      out.at(r, c) = e;
      sum += e;
    }
    for (std::size_t c = 0; c < C; ++c) out.at(r, c) /= sum;
  }
  return detail::make_op(std::move(out), {a}, [R, C](Node& n) {
    const Tensor& s = n.value;
    const Tensor& g = n.grad;
    Tensor& da = n.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < R; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < C; ++c) dot += g.at(r, c) * s.at(r, c);
      for (std::size_t c = 0; c < C; ++c)
        da.at(r, c) += s.at(r, c) * (g.at(r, c) - dot);
    }
  });
}

// Per-row layer normalization with affine gain/bias (both 1xC).
inline NodePtr layer_norm(const NodePtr& x, const NodePtr& gain, const NodePtr& bias,
                          double eps = 1e-12) {
  const Tensor& xv = x->value;
  const std::size_t R = xv.rows(), C = xv.cols();
  if (gain->value.cols() != C || gain->value.rows() != 1 || bias->value.cols() != C ||
      bias->value.rows() != 1)
    fail("layer_norm: shape mismatch ", xv.shape_string(), " vs gain ",
         gain->value.shape_string(), " / bias ", bias->value.shape_string());
  Tensor normalized({R, C});
  Tensor inv_sigma({1, R});
  Tensor out({R, C});
  for (std::size_t r = 0; r < R; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < C; ++c) mu += xv.at(r, c);
    mu /= static_cast<double>(C);
    double var = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      double d = xv.at(r, c) - mu;
      var += d * d;
    }
    var /= static_cast<double>(C);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[r] = is;
    for (std::size_t c = 0; c < C; ++c) {
      double y = (xv.at(r, c) - mu) * is;
      normalized.at(r, c) = y;
      out.at(r, c) = y * gain->value[c] + bias->value[c];
    }
  }
  return detail::make_op(
      std::move(out), {x, gain, bias},
      [R, C, normalized = std::move(normalized),
       inv_sigma = std::move(inv_sigma)](Node& n) {
        const Tensor& g = n.grad;
        const Tensor& gainv = n.parents[1]->value;
        if (n.parents[0]->requires_grad) {
          Tensor& dx = n.parents[0]->ensure_grad();
          for (std::size_t r = 0; r < R; ++r) {
            double mean_dy = 0.0, mean_dyy = 0.0;
            for (std::size_t c = 0; c < C; ++c) {
              const double dy = g.at(r, c) * gainv[c];
              mean_dy += dy;
              mean_dyy += dy * normalized.at(r, c);
            }
            mean_dy /= static_cast<double>(C);
            mean_dyy /= static_cast<double>(C);
            for (std::size_t c = 0; c < C; ++c) {
              const double dy = g.at(r, c) * gainv[c];
              dx.at(r, c) +=
                  inv_sigma[r] * (dy - mean_dy - normalized.at(r, c) * mean_dyy);
            }
          }
        }
        if (n.parents[1]->requires_grad) {
          Tensor& dgain = n.parents[1]->ensure_grad();
          for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c)
              dgain[c] += g.at(r, c) * normalized.at(r, c);
        }
        if (n.parents[2]->requires_grad) {
          Tensor& dbias = n.parents[2]->ensure_grad();
          for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c) dbias[c] += g.at(r, c);
        }
      });
}

// --- structural ops ----------------------------------------------------

inline NodePtr concat(const std::vector<NodePtr>& parts, int axis) {
  if (parts.empty()) fail("concat: no inputs");
  if (axis != 0 && axis != 1) fail("concat: axis must be 0 or 1");
  const std::size_t C0 = parts[0]->value.cols();
  const std::size_t R0 = parts[0]->value.rows();
  std::size_t R = 0, C = 0;
  if (axis == 0) {
    C = C0;
    for (const auto& p : parts) {
      if (p->value.cols() != C0)
        fail("concat axis 0: shape mismatch ", parts[0]->value.shape_string(), " vs ",
             p->value.shape_string());
      R += p->value.rows();
    }
  } else {
    R = R0;
    for (const auto& p : parts) {
      if (p->value.rows() != R0)
        fail("concat axis 1: shape mismatch ", parts[0]->value.shape_string(), " vs ",
             p->value.shape_string());
      C += p->value.cols();
    }
  }
  Tensor out({R, C});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const Tensor& v = p->value;
    if (axis == 0) {
      std::copy(v.data(), v.data() + v.size(), out.data() + offset * C);
      offset += v.rows();
    } else {
      for (std::size_t r = 0; r < R; ++r)
        std::copy(v.data() + r * v.cols(), v.data() + (r + 1) * v.cols(),
                  out.data() + r * C + offset);
      offset += v.cols();
    }
  }
  return detail::make_op(std::move(out), parts, [axis, R, C](Node& n) {
    std::size_t offset = 0;
    for (auto& p : n.parents) {
      const std::size_t pr = p->value.rows(), pc = p->value.cols();
      if (p->requires_grad) {
        Tensor& dp = p->ensure_grad();
        if (axis == 0) {
          for (std::size_t i = 0; i < pr * pc; ++i)
            dp[i] += n.grad[offset * C + i];
        } else {
          for (std::size_t r = 0; r < pr; ++r)
            for (std::size_t c = 0; c < pc; ++c)
              dp.at(r, c) += n.grad.at(r, offset + c);
        }
      }
      offset += axis == 0 ? pr : pc;
    }
  });
}

inline NodePtr slice_row(const NodePtr& a, std::size_t row) {
  const Tensor& v = a->value;
  if (row >= v.rows()) fail("slice_row: row ", row, " out of range ", v.shape_string());
  const std::size_t C = v.cols();
  Tensor out({1, C});
  std::copy(v.data() + row * C, v.data() + (row + 1) * C, out.data());
  return detail::make_op(std::move(out), {a}, [row, C](Node& n) {
    Tensor& da = n.parents[0]->ensure_grad();
    for (std::size_t c = 0; c < C; ++c) da.at(row, c) += n.grad[c];
  });
}

inline NodePtr slice_cols(const NodePtr& a, std::size_t c0, std::size_t c1) {
  const Tensor& v = a->value;
  if (c0 >= c1 || c1 > v.cols())
    fail("slice_cols: range [", c0, ",", c1, ") out of ", v.shape_string());
  const std::size_t R = v.rows(), W = c1 - c0;
  Tensor out({R, W});
  for (std::size_t r = 0; r < R; ++r)
    std::copy(v.data() + r * v.cols() + c0, v.data() + r * v.cols() + c1,
              out.data() + r * W);
  return detail::make_op(std::move(out), {a}, [c0, R, W](Node& n) {
    Tensor& da = n.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < W; ++c) da.at(r, c0 + c) += n.grad.at(r, c);
  });
}

// Embedding lookup: selects rows of a table, duplicates allowed.
inline NodePtr gather_rows(const NodePtr& table, std::vector<std::size_t> ids) {
  const Tensor& t = table->value;
  const std::size_t C = t.cols();
  for (auto id : ids)
    if (id >= t.rows()) fail("gather_rows: id ", id, " out of range ", t.shape_string());
  Tensor out({ids.size(), C});
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy(t.data() + ids[i] * C, t.data() + (ids[i] + 1) * C, out.data() + i * C);
  return detail::make_op(std::move(out), {table}, [ids = std::move(ids), C](Node& n) {
    Tensor& dt = n.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t c = 0; c < C; ++c) dt.at(ids[i], c) += n.grad.at(i, c);
  });
}

inline NodePtr transpose(const NodePtr& a) {
  const Tensor& v = a->value;
  const std::size_t R = v.rows(), C = v.cols();
  Tensor out({C, R});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out.at(c, r) = v.at(r, c);
  return detail::make_op(std::move(out), {a}, [R, C](Node& n) {
    Tensor& da = n.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) da.at(r, c) += n.grad.at(c, r);
  });
}

inline NodePtr sum_all(const NodePtr& a) {
  double s = 0.0;
  for (double v : a->value.values()) s += v;
  return detail::make_op(Tensor({1, 1}, {s}), {a}, [](Node& n) {
    Tensor& da = n.parents[0]->ensure_grad();
    for (auto& v : da.values()) v += n.grad[0];
  });
}

inline NodePtr mean_all(const NodePtr& a) {
  const double inv = 1.0 / static_cast<double>(a->value.size());
  double s = 0.0;
  for (double v : a->value.values()) s += v;
  return detail::make_op(Tensor({1, 1}, {s * inv}), {a}, [inv](Node& n) {
    Tensor& da = n.parents[0]->ensure_grad();
    for (auto& v : da.values()) v += n.grad[0] * inv;
  });
}

// Clamps probabilities away from {0,1}; gradient passes through only where
// the clamp is inactive.
inline NodePtr clamp_prob(const NodePtr& a, double eps = 1e-12) {
  Tensor out = a->value;
  for (auto& v : out.values()) v = std::min(std::max(v, eps), 1.0 - eps);
  return detail::make_op(std::move(out), {a}, [eps](Node& n) {
    const Tensor& x = n.parents[0]->value;
    Tensor& da = n.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      if (x[i] > eps && x[i] < 1.0 - eps) da[i] += n.grad[i];
  });
}

// Mean binary cross-entropy over a column of probabilities. Inputs must
// already be strictly inside (0,1); clamp_prob upstream guarantees that.
inline NodePtr bce_loss(const NodePtr& p, const std::vector<double>& targets) {
  const Tensor& pv = p->value;
  if (pv.size() != targets.size())
    fail("bce_loss: ", pv.size(), " probabilities vs ", targets.size(), " labels");
  if (targets.empty()) fail("bce_loss: empty batch");
  for (double y : targets)
    if (y != 0.0 && y != 1.0) fail("bce_loss: label must be 0 or 1, got ", y);
  for (double v : pv.values())
    if (!(v > 0.0 && v < 1.0))
      fail("bce_loss: probability outside (0,1): ", v);
  const double inv_n = 1.0 / static_cast<double>(targets.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i)
    loss -= targets[i] * std::log(pv[i]) + (1.0 - targets[i]) * std::log(1.0 - pv[i]);
  loss *= inv_n;
  return detail::make_op(Tensor({1, 1}, {loss}), {p},
                         [targets, inv_n](Node& n) {
                           const Tensor& pv = n.parents[0]->value;
                           Tensor& dp = n.parents[0]->ensure_grad();
                           for (std::size_t i = 0; i < targets.size(); ++i)
                             dp[i] += n.grad[0] * inv_n * (pv[i] - targets[i]) /
                                      (pv[i] * (1.0 - pv[i]));
                         });
}

// Inverted-dropout with a deterministic, explicitly seeded mask.
inline NodePtr dropout(const NodePtr& a, double rate, Rng& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) fail("dropout: rate must be < 1, got ", rate);
  const double keep = 1.0 - rate;
  Tensor mask(a->value.shape());
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double m = uniform01(rng) < rate ? 0.0 : 1.0 / keep;
    mask[i] = m;
    out[i] *= m;
  }
  return detail::make_op(std::move(out), {a}, [mask = std::move(mask)](Node& n) {
    Tensor& da = n.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) da[i] += n.grad[i] * mask[i];
  });
}

// --- backward ----------------------------------------------------------

// Runs reverse-mode accumulation from a scalar loss. After the sweep the
// bookkeeping (parents, closures) of interior nodes is released so long
// graphs are not destroyed recursively.
inline void backward(const NodePtr& loss) {
  if (loss->value.size() != 1)
    fail("backward: loss must be scalar, got shape ", loss->value.shape_string());
  // Iterative post-order DFS. A node can sit on the stack twice when it is
  // reachable along two paths; the visited check on re-entry keeps its
  // backward closure from running more than once.
  std::vector<Node*> order;
  std::vector<std::pair<Node*, std::size_t>> stack;
  std::unordered_set<Node*> visited;
  stack.emplace_back(loss.get(), 0);
  while (!stack.empty()) {
    Node* node = stack.back().first;
    const std::size_t idx = stack.back().second;
    if (visited.count(node)) {
      stack.pop_back();
      continue;
    }
    if (idx < node->parents.size()) {
      stack.back().second = idx + 1;
      Node* parent = node->parents[idx].get();
      if (!visited.count(parent)) stack.emplace_back(parent, 0);
    } else {
      visited.insert(node);
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss->ensure_grad()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->requires_grad && n->backward_fn && n->grad.size() == n->value.size())
      n->backward_fn(*n);
  }
  for (Node* n : order) {
    if (!n->is_param) {
      n->parents.clear();
      n->backward_fn = nullptr;
    }
  }
}

// --- parameters --------------------------------------------------------

class ParamStore {
 public:
  NodePtr create(const std::string& name, Tensor init) {
    if (params_.count(name)) fail("param '", name, "' already exists");
    auto n = std::make_shared<Node>();
    n->value = std::move(init);
    n->requires_grad = true;
    n->is_param = true;
    n->name = name;
    params_[name] = n;
    return n;
  }

  NodePtr create_uniform(const std::string& name, std::vector<std::size_t> shape,
                         Rng& rng, double range) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = uniform_range(rng, -range, range);
    return create(name, std::move(t));
  }

  // Glorot-style fan-based range for weight matrices.
  NodePtr create_glorot(const std::string& name, std::size_t rows, std::size_t cols,
                        Rng& rng) {
    const double r = std::sqrt(6.0 / static_cast<double>(rows + cols));
    return create_uniform(name, {rows, cols}, rng, r);
  }

  NodePtr get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) fail("unknown param '", name, "'");
    return it->second;
  }

  bool has(const std::string& name) const { return params_.count(name) > 0; }

  void zero_grads() {
    for (auto& [name, p] : params_) {
      p->ensure_grad();
      p->grad.fill(0.0);
    }
  }

  std::size_t total_values() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_) n += p->value.size();
    return n;
  }

  // sorted by name; deterministic
  const std::map<std::string, NodePtr>& entries() const { return params_; }
  std::map<std::string, NodePtr>& entries() { return params_; }

 private:
  std::map<std::string, NodePtr> params_;
};

}  // namespace ctxmatch
