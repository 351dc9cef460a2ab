#include "tae/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tae/kernels.hpp"

namespace tae {

using kernels::Trans;

template <typename T>
Var Tape<T>::make(int rows, int cols, bool needs_grad) {
  auto& n = nodes_.emplace_back();
  n.rows = rows;
  n.cols = cols;
  n.own.assign(static_cast<std::size_t>(rows) * cols, T(0));
  n.data = n.own.data();
  if (needs_grad && record_) {
    n.grad_own.assign(n.own.size(), T(0));
    n.grad = n.grad_own.data();
  }
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var Tape<T>::constant(int rows, int cols, std::vector<T> values) {
  if (values.size() != static_cast<std::size_t>(rows) * cols)
    throw std::invalid_argument("constant: value count does not match shape");
  auto& n = nodes_.emplace_back();
  n.rows = rows;
  n.cols = cols;
  n.own = std::move(values);
  n.data = n.own.data();
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var Tape<T>::param(Parameter<T>& p, bool track) {
  track = track && record_;
  auto& cache = track ? tracked_ : untracked_;
  if (auto it = cache.find(&p); it != cache.end()) return it->second;
  auto& n = nodes_.emplace_back();
  n.rows = p.rows;
  n.cols = p.cols;
  n.data = p.value.data();
  if (track) {
    n.grad = p.grad.data();
    n.param = &p;
  }
  Var v{static_cast<int>(nodes_.size()) - 1};
  cache.emplace(&p, v);
  return v;
}

template <typename T>
T Tape<T>::scalar(Var v) const {
  const auto& n = node(v);
  if (n.rows != 1 || n.cols != 1) throw std::invalid_argument("scalar: node is not 1x1");
  return n.data[0];
}

template <typename T>
void Tape<T>::backward(Var loss) {
  auto& l = node(loss);
  if (l.rows != 1 || l.cols != 1) throw std::invalid_argument("backward: loss must be scalar");
  if (!l.grad) return;
  l.grad[0] += T(1);
  for (int i = loss.id; i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (n.backward) n.backward();
    if (n.param) n.param->touched = true;
  }
}

template class Tape<float>;
template class Tape<double>;

namespace ops {
namespace {

template <typename T>
bool any_grad(const Tape<T>& t, std::initializer_list<Var> vs) {
  if (!t.recording()) return false;
  for (Var v : vs)
    if (t.requires_grad(v)) return true;
  return false;
}

template <typename T>
void check_same_shape(const Tape<T>& t, Var a, Var b, const char* op) {
  if (t.rows(a) != t.rows(b) || t.cols(a) != t.cols(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

template <typename T>
Var matmul(Tape<T>& t, Var a, Var b) {
  const int n = t.rows(a), k = t.cols(a), m = t.cols(b);
  if (t.rows(b) != k) throw std::invalid_argument("matmul: inner dimensions differ");
  Var out = t.make(n, m, any_grad(t, {a, b}));
  kernels::gemm(Trans::no, Trans::no, n, m, k, T(1), t.value_ptr(a), k, t.value_ptr(b), m, T(0),
                t.mutable_value(out), m);
  if (t.requires_grad(out)) {
    t.set_backward(out, [&t, a, b, out, n, k, m] {
      const T* g = t.grad_ptr(out);
      if (T* ga = t.grad_ptr(a))
        kernels::gemm(Trans::no, Trans::yes, n, k, m, T(1), g, m, t.value_ptr(b), m, T(1), ga, k);
      if (T* gb = t.grad_ptr(b))
        kernels::gemm(Trans::yes, Trans::no, k, m, n, T(1), t.value_ptr(a), k, g, m, T(1), gb, m);
    });
  }
  return out;
}

template <typename T>
Var linear(Tape<T>& t, Var x, Var w, Var b) {
  const int n = t.rows(x), in = t.cols(x), outc = t.cols(w);
  if (t.rows(w) != in) throw std::invalid_argument("linear: weight rows differ from input width");
  if (t.rows(b) != 1 || t.cols(b) != outc) throw std::invalid_argument("linear: bad bias shape");
  Var out = t.make(n, outc, any_grad(t, {x, w, b}));
  T* y = t.mutable_value(out);
  const T* bv = t.value_ptr(b);
  for (int i = 0; i < n; ++i) std::copy(bv, bv + outc, y + static_cast<long>(i) * outc);
  kernels::gemm(Trans::no, Trans::no, n, outc, in, T(1), t.value_ptr(x), in, t.value_ptr(w), outc,
                T(1), y, outc);
  if (t.requires_grad(out)) {
    t.set_backward(out, [&t, x, w, b, out, n, in, outc] {
      const T* g = t.grad_ptr(out);
      if (T* gx = t.grad_ptr(x))
        kernels::gemm(Trans::no, Trans::yes, n, in, outc, T(1), g, outc, t.value_ptr(w), outc, T(1),
                      gx, in);
      if (T* gw = t.grad_ptr(w))
        kernels::gemm(Trans::yes, Trans::no, in, outc, n, T(1), t.value_ptr(x), in, g, outc, T(1),
                      gw, outc);
      if (T* gb = t.grad_ptr(b))
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < outc; ++j) gb[j] += g[static_cast<long>(i) * outc + j];
    });
  }
  return out;
}

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
  check_same_shape(t, a, b, "add");
  Var out = t.make(t.rows(a), t.cols(a), any_grad(t, {a, b}));
  const std::size_t n = t.value(a).size();
  const T* av = t.value_ptr(a);
  const T* bv = t.value_ptr(b);
  T* y = t.mutable_value(out);
  for (std::size_t i = 0; i < n; ++i) y[i] = av[i] + bv[i];
  if (t.requires_grad(out)) {
    t.set_backward(out, [&t, a, b, out, n] {
      const T* g = t.grad_ptr(out);
      if (T* ga = t.grad_ptr(a))
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      if (T* gb = t.grad_ptr(b))
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
    });
  }
  return out;
}

template <typename T>
Var mul(Tape<T>& t, Var a, Var b) {
  check_same_shape(t, a, b, "mul");
  Var out = t.make(t.rows(a), t.cols(a), any_grad(t, {a, b}));
  const std::size_t n = t.value(a).size();
  const T* av = t.value_ptr(a);
  const T* bv = t.value_ptr(b);
  T* y = t.mutable_value(out);
  for (std::size_t i = 0; i < n; ++i) y[i] = av[i] * bv[i];
  if (t.requires_grad(out)) {
    t.set_backward(out, [&t, a, b, out, n] {
      const T* g = t.grad_ptr(out);
      const T* av = t.value_ptr(a);
      const T* bv = t.value_ptr(b);
      if (T* ga = t.grad_ptr(a))
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bv[i];
      if (T* gb = t.grad_ptr(b))
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * av[i];
    });
  }
  return out;
}

template <typename T>
Var scale(Tape<T>& t, Var a, T s) {
  Var out = t.make(t.rows(a), t.cols(a), any_grad(t, {a}));
  const std::size_t n = t.value(a).size();
  const T* av = t.value_ptr(a);
  T* y = t.mutable_value(out);
  for (std::size_t i = 0; i < n; ++i) y[i] = av[i] * s;
  if (t.requires_grad(out)) {
    t.set_backward(out, [&t, a, out, n, s] {
      const T* g = t.grad_ptr(out);
      if (T* ga = t.grad_ptr(a))
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * s;
    });
  }
  return out;
}

template <typename T>
Var gelu(Tape<T>& t, Var a) {
  const bool g = any_grad(t, {a});
  Var out = t.make(t.rows(a), t.cols(a), g);
  const std::size_t n = t.value(a).size();
  const T* av = t.value_ptr(a);
  T* y = t.mutable_value(out);
  std::vector<T> deriv(g ? n : 0);
  for (std::size_t i = 0; i < n; ++i) {
    T d;
    y[i] = kernels::gelu(av[i], &d);
    if (g) deriv[i] = d;
  }
  if (t.requires_grad(out)) {
    t.set_backward(out, [&t, a, out, n, deriv = std::move(deriv)] {
      const T* g = t.grad_ptr(out);
      if (T* ga = t.grad_ptr(a))
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * deriv[i];
    });
  }
  return out;
}

template <typename T>
Var tanh(Tape<T>& t, Var a) {
  Var out = t.make(t.rows(a), t.cols(a), any_grad(t, {a}));
  const std::size_t n = t.value(a).size();
  const T* av = t.value_ptr(a);
  T* y = t.mutable_value(out);
  for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(av[i]);
  if (t.requires_grad(out)) {
    t.set_backward(out, [&t, a, out, n] {
      const T* g = t.grad_ptr(out);
      const T* y = t.value_ptr(out);
      if (T* ga = t.grad_ptr(a))
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * (T(1) - y[i] * y[i]);
    });
  }
  return out;
}

template <typename T>
Var sigmoid(Tape<T>& t, Var a) {
  Var out = t.make(t.rows(a), t.cols(a), any_grad(t, {a}));
  const std::size_t n = t.value(a).size();
  const T* av = t.value_ptr(a);
  T* y = t.mutable_value(out);
  for (std::size_t i = 0; i < n; ++i) y[i] = T(1) / (T(1) + std::exp(-av[i]));
  if (t.requires_grad(out)) {
    t.set_backward(out, [&t, a, out, n] {
      const T* g = t.grad_ptr(out);
      const T* y = t.value_ptr(out);
      if (T* ga = t.grad_ptr(a))
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * y[i] * (T(1) - y[i]);
    });
  }
  return out;
}

template <typename T>
Var softmax(Tape<T>& t, Var a) {
  const int rows = t.rows(a), cols = t.cols(a);
  Var out = t.make(rows, cols, any_grad(t, {a}));
  T* y = t.mutable_value(out);
  std::copy(t.value_ptr(a), t.value_ptr(a) + static_cast<long>(rows) * cols, y);
  kernels::softmax_rows(y, rows, cols);
  if (t.requires_grad(out)) {
    t.set_backward(out, [&t, a, out, rows, cols] {
      T* ga = t.grad_ptr(a);
      if (!ga) return;
      const T* g = t.grad_ptr(out);
      const T* y = t.value_ptr(out);
      for (int r = 0; r < rows; ++r) {
        const long o = static_cast<long>(r) * cols;
        T dot = T(0);
        for (int j = 0; j < cols; ++j) dot += g[o + j] * y[o + j];
        for (int j = 0; j < cols; ++j) ga[o + j] += y[o + j] * (g[o + j] - dot);
      }
    });
  }
  return out;
}

template <typename T>
Var layer_norm(Tape<T>& t, Var x, Var gamma, Var beta) {
  const int rows = t.rows(x), cols = t.cols(x);
  if (t.cols(gamma) != cols || t.cols(beta) != cols || t.rows(gamma) != 1 || t.rows(beta) != 1)
    throw std::invalid_argument("layer_norm: bad affine shape");
  const bool g = any_grad(t, {x, gamma, beta});
  Var out = t.make(rows, cols, g);
  std::vector<T> xhat(static_cast<std::size_t>(rows) * cols);
  std::vector<T> inv_std(static_cast<std::size_t>(rows));
  kernels::layer_norm_rows(t.value_ptr(x), xhat.data(), inv_std.data(), rows, cols, T(1e-5));
  T* y = t.mutable_value(out);
  const T* gm = t.value_ptr(gamma);
  const T* bt = t.value_ptr(beta);
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < cols; ++j) {
      const long o = static_cast<long>(r) * cols + j;
      y[o] = xhat[o] * gm[j] + bt[j];
    }
  if (t.requires_grad(out)) {
    t.set_backward(out, [&t, x, gamma, beta, out, rows, cols, xhat = std::move(xhat),
                         inv_std = std::move(inv_std)] {
      const T* g = t.grad_ptr(out);
      const T* gm = t.value_ptr(gamma);
      T* gx = t.grad_ptr(x);
      T* gg = t.grad_ptr(gamma);
      T* gb = t.grad_ptr(beta);
      std::vector<T> dxhat(static_cast<std::size_t>(cols));
      for (int r = 0; r < rows; ++r) {
        const long o = static_cast<long>(r) * cols;
        T mean_d = T(0), mean_dx = T(0);
        for (int j = 0; j < cols; ++j) {
          if (gg) gg[j] += g[o + j] * xhat[o + j];
          if (gb) gb[j] += g[o + j];
          dxhat[j] = g[o + j] * gm[j];
          mean_d += dxhat[j];
          mean_dx += dxhat[j] * xhat[o + j];
        }
        if (!gx) continue;
        mean_d /= T(cols);
        mean_dx /= T(cols);
        for (int j = 0; j < cols; ++j)
          gx[o + j] += inv_std[r] * (dxhat[j] - mean_d - xhat[o + j] * mean_dx);
      }
    });
  }
  return out;
}

template <typename T>
Var dropout(Tape<T>& t, Var x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
  const std::size_t n = t.value(x).size();
  std::vector<T> mask(n);
  const T keep = T(1.0 / (1.0 - rate));
  for (auto& m : mask) m = rng.uniform() < rate ? T(0) : keep;
  Var out = t.make(t.rows(x), t.cols(x), any_grad(t, {x}));
  const T* xv = t.value_ptr(x);
  T* y = t.mutable_value(out);
  for (std::size_t i = 0; i < n; ++i) y[i] = xv[i] * mask[i];
  if (t.requires_grad(out)) {
    t.set_backward(out, [&t, x, out, n, mask = std::move(mask)] {
      const T* g = t.grad_ptr(out);
      if (T* gx = t.grad_ptr(x))
        for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * mask[i];
    });
  }
  return out;
}

template <typename T>
Var embedding(Tape<T>& t, Var table, std::span<const int> ids) {
  const int vocab = t.rows(table), d = t.cols(table);
  const int n = static_cast<int>(ids.size());
  Var out = t.make(n, d, any_grad(t, {table}));
  const T* tv = t.value_ptr(table);
  T* y = t.mutable_value(out);
  for (int i = 0; i < n; ++i) {
    if (ids[i] < 0 || ids[i] >= vocab) throw std::out_of_range("embedding: id out of range");
    std::copy(tv + static_cast<long>(ids[i]) * d, tv + static_cast<long>(ids[i] + 1) * d,
              y + static_cast<long>(i) * d);
  }
  if (t.requires_grad(out)) {
    t.set_backward(out, [&t, table, out, d, idv = std::vector<int>(ids.begin(), ids.end())] {
      const T* g = t.grad_ptr(out);
      T* gt = t.grad_ptr(table);
      for (std::size_t i = 0; i < idv.size(); ++i)
        for (int j = 0; j < d; ++j) gt[static_cast<long>(idv[i]) * d + j] += g[i * d + j];
    });
  }
  return out;
}

template <typename T>
Var sum(Tape<T>& t, std::span<const Var> xs) {
  bool g = false;
  for (Var x : xs) g = g || any_grad(t, {x});
  Var out = t.make(1, 1, g);
  T s = T(0);
  for (Var x : xs)
    for (T v : t.value(x)) s += v;
  t.mutable_value(out)[0] = s;
  if (t.requires_grad(out)) {
    t.set_backward(out, [&t, out, xv = std::vector<Var>(xs.begin(), xs.end())] {
      const T g = t.grad_ptr(out)[0];
      for (Var x : xv)
        if (T* gx = t.grad_ptr(x))
          for (std::size_t i = 0; i < t.value(x).size(); ++i) gx[i] += g;
    });
  }
  return out;
}

template <typename T>
Var sum_all(Tape<T>& t, Var a) {
  const Var xs[] = {a};
  return sum(t, std::span<const Var>(xs));
}

template <typename T>
Var attention_weights(Tape<T>& t, Var q, Var k, int heads, bool causal,
                      std::span<const char> key_valid) {
  const int tq = t.rows(q), tk = t.rows(k), d = t.cols(q);
  if (t.cols(k) != d) throw std::invalid_argument("attention: query/key widths differ");
  if (heads <= 0 || d % heads != 0) throw std::invalid_argument("attention: bad head count");
  if (!key_valid.empty() && static_cast<int>(key_valid.size()) != tk)
    throw std::invalid_argument("attention: key mask length differs from key count");
  const int dh = d / heads;
  const T sc = T(1) / std::sqrt(T(dh));
  Var out = t.make(heads * tq, tk, any_grad(t, {q, k}));
  T* p = t.mutable_value(out);
  const T* qv = t.value_ptr(q);
  const T* kv = t.value_ptr(k);
  constexpr T neg_inf = -std::numeric_limits<T>::infinity();
  for (int h = 0; h < heads; ++h) {
    T* ph = p + static_cast<long>(h) * tq * tk;
    kernels::gemm(Trans::no, Trans::yes, tq, tk, dh, sc, qv + h * dh, d, kv + h * dh, d, T(0), ph,
                  tk);
    for (int i = 0; i < tq; ++i)
      for (int j = 0; j < tk; ++j)
        if ((causal && j > i) || (!key_valid.empty() && !key_valid[j]))
          ph[static_cast<long>(i) * tk + j] = neg_inf;
  }
  kernels::softmax_rows(p, heads * tq, tk);
  if (t.requires_grad(out)) {
    t.set_backward(out, [&t, q, k, out, heads, tq, tk, d, dh, sc] {
      const T* g = t.grad_ptr(out);
      const T* p = t.value_ptr(out);
      T* gq = t.grad_ptr(q);
      T* gk = t.grad_ptr(k);
      std::vector<T> ds(static_cast<std::size_t>(tq) * tk);
      for (int h = 0; h < heads; ++h) {
        const long base = static_cast<long>(h) * tq * tk;
        for (int i = 0; i < tq; ++i) {
          const long o = base + static_cast<long>(i) * tk;
          T dot = T(0);
          for (int j = 0; j < tk; ++j) dot += g[o + j] * p[o + j];
          for (int j = 0; j < tk; ++j) ds[static_cast<long>(i) * tk + j] = p[o + j] * (g[o + j] - dot);
        }
        if (gq)
          kernels::gemm(Trans::no, Trans::no, tq, dh, tk, sc, ds.data(), tk, t.value_ptr(k) + h * dh,
                        d, T(1), gq + h * dh, d);
        if (gk)
          kernels::gemm(Trans::yes, Trans::no, tk, dh, tq, sc, ds.data(), tk,
                        t.value_ptr(q) + h * dh, d, T(1), gk + h * dh, d);
      }
    });
  }
  return out;
}

template <typename T>
Var attention_context(Tape<T>& t, Var weights, Var v, int heads) {
  const int tk = t.rows(v), d = t.cols(v);
  const int tq = t.rows(weights) / heads;
  if (t.cols(weights) != tk || tq * heads != t.rows(weights))
    throw std::invalid_argument("attention_context: shape mismatch");
  const int dh = d / heads;
  Var out = t.make(tq, d, any_grad(t, {weights, v}));
  T* y = t.mutable_value(out);
  for (int h = 0; h < heads; ++h)
    kernels::gemm(Trans::no, Trans::no, tq, dh, tk, T(1),
                  t.value_ptr(weights) + static_cast<long>(h) * tq * tk, tk, t.value_ptr(v) + h * dh,
                  d, T(0), y + h * dh, d);
  if (t.requires_grad(out)) {
    t.set_backward(out, [&t, weights, v, out, heads, tq, tk, d, dh] {
      const T* g = t.grad_ptr(out);
      T* gw = t.grad_ptr(weights);
      T* gv = t.grad_ptr(v);
      for (int h = 0; h < heads; ++h) {
        const long base = static_cast<long>(h) * tq * tk;
        if (gw)
          kernels::gemm(Trans::no, Trans::yes, tq, tk, dh, T(1), g + h * dh, d,
                        t.value_ptr(v) + h * dh, d, T(1), gw + base, tk);
        if (gv)
          kernels::gemm(Trans::yes, Trans::no, tk, dh, tq, T(1), t.value_ptr(weights) + base, tk,
                        g + h * dh, d, T(1), gv + h * dh, d);
      }
    });
  }
  return out;
}

template <typename T>
Var head_mean(Tape<T>& t, Var weights, int heads) {
  const int tq = t.rows(weights) / heads, tk = t.cols(weights);
  Var out = t.make(tq, tk, any_grad(t, {weights}));
  T* y = t.mutable_value(out);
  const T* w = t.value_ptr(weights);
  const T inv = T(1) / T(heads);
  const long block = static_cast<long>(tq) * tk;
  for (int h = 0; h < heads; ++h)
    for (long i = 0; i < block; ++i) y[i] += w[h * block + i] * inv;
  if (t.requires_grad(out)) {
    t.set_backward(out, [&t, weights, out, heads, block, inv] {
      const T* g = t.grad_ptr(out);
      T* gw = t.grad_ptr(weights);
      if (!gw) return;
      for (int h = 0; h < heads; ++h)
        for (long i = 0; i < block; ++i) gw[h * block + i] += g[i] * inv;
    });
  }
  return out;
}

template <typename T>
Var copy_mixture_loss(Tape<T>& t, Var logits, Var copy_weights, Var gate,
                      std::span<const int> src_ids, std::span<const int> gold, double smoothing,
                      int pad_id, double scale) {
  const int steps = t.rows(logits), vocab = t.cols(logits);
  const int src_len = t.cols(copy_weights);
  if (t.rows(copy_weights) != steps || t.rows(gate) != steps || t.cols(gate) != 1)
    throw std::invalid_argument("copy_mixture_loss: shape mismatch");
  if (static_cast<int>(src_ids.size()) != src_len || static_cast<int>(gold.size()) != steps)
    throw std::invalid_argument("copy_mixture_loss: id count mismatch");
  const bool needs = any_grad(t, {logits, copy_weights, gate});
  Var out = t.make(1, 1, needs);
  const T eps = T(smoothing);
  const T off = eps / T(vocab);
  const T tiny = std::numeric_limits<T>::min();
  std::vector<T> soft(static_cast<std::size_t>(steps) * vocab);
  std::vector<T> mix(soft.size());
  std::copy(t.value_ptr(logits), t.value_ptr(logits) + soft.size(), soft.begin());
  kernels::softmax_rows(soft.data(), steps, vocab);
  const T* cw = t.value_ptr(copy_weights);
  const T* gv = t.value_ptr(gate);
  T total = T(0);
  for (int s = 0; s < steps; ++s) {
    if (gold[s] == pad_id) continue;
    const long o = static_cast<long>(s) * vocab;
    const T g = gv[s];
    for (int y = 0; y < vocab; ++y) mix[o + y] = g * soft[o + y];
    for (int j = 0; j < src_len; ++j) mix[o + src_ids[j]] += (T(1) - g) * cw[static_cast<long>(s) * src_len + j];
    T loss = T(0);
    for (int y = 0; y < vocab; ++y) {
      const T q = off + (y == gold[s] ? T(1) - eps : T(0));
      if (q != T(0)) loss -= q * std::log(std::max(mix[o + y], tiny));
    }
    total += loss;
  }
  t.mutable_value(out)[0] = total * T(scale);
  if (t.requires_grad(out)) {
    t.set_backward(out, [&t, logits, copy_weights, gate, out, steps, vocab, src_len, eps, off, tiny,
                         scale, soft = std::move(soft), mix = std::move(mix),
                         src = std::vector<int>(src_ids.begin(), src_ids.end()),
                         gd = std::vector<int>(gold.begin(), gold.end()), pad_id] {
      const T up = t.grad_ptr(out)[0] * T(scale);
      T* gl = t.grad_ptr(logits);
      T* gc = t.grad_ptr(copy_weights);
      T* gg = t.grad_ptr(gate);
      const T* cw = t.value_ptr(copy_weights);
      const T* gv = t.value_ptr(gate);
      std::vector<T> a(static_cast<std::size_t>(vocab));
      for (int s = 0; s < steps; ++s) {
        if (gd[s] == pad_id) continue;
        const long o = static_cast<long>(s) * vocab;
        const T g = gv[s];
        // a_y = dL/dP_y
        for (int y = 0; y < vocab; ++y) {
          const T q = off + (y == gd[s] ? T(1) - eps : T(0));
          a[y] = mix[o + y] > tiny ? -up * q / mix[o + y] : T(0);
        }
        if (gg) {
          T dg = T(0);
          for (int y = 0; y < vocab; ++y) dg += a[y] * soft[o + y];
          for (int j = 0; j < src_len; ++j) dg -= a[src[j]] * cw[static_cast<long>(s) * src_len + j];
          gg[s] += dg;
        }
        if (gc)
          for (int j = 0; j < src_len; ++j) gc[static_cast<long>(s) * src_len + j] += a[src[j]] * (T(1) - g);
        if (gl) {
          T dot = T(0);
          for (int y = 0; y < vocab; ++y) dot += a[y] * g * soft[o + y];
          for (int y = 0; y < vocab; ++y) gl[o + y] += soft[o + y] * (a[y] * g - dot);
        }
      }
    });
  }
  return out;
}

template <typename T>
Var softmax_cross_entropy(Tape<T>& t, Var logits, std::span<const int> gold, double smoothing,
                          int pad_id, double scale) {
  const int steps = t.rows(logits), vocab = t.cols(logits);
  if (static_cast<int>(gold.size()) != steps)
    throw std::invalid_argument("softmax_cross_entropy: id count mismatch");
  Var out = t.make(1, 1, any_grad(t, {logits}));
  const T eps = T(smoothing);
  const T off = eps / T(vocab);
  std::vector<T> soft(static_cast<std::size_t>(steps) * vocab);
  std::copy(t.value_ptr(logits), t.value_ptr(logits) + soft.size(), soft.begin());
  kernels::softmax_rows(soft.data(), steps, vocab);
  const T* lv = t.value_ptr(logits);
  T total = T(0);
  for (int s = 0; s < steps; ++s) {
    if (gold[s] == pad_id) continue;
    const long o = static_cast<long>(s) * vocab;
    T mx = *std::max_element(lv + o, lv + o + vocab);
    T z = T(0);
    for (int y = 0; y < vocab; ++y) z += std::exp(lv[o + y] - mx);
    const T lse = mx + std::log(z);
    for (int y = 0; y < vocab; ++y) {
      const T q = off + (y == gold[s] ? T(1) - eps : T(0));
      total -= q * (lv[o + y] - lse);
    }
  }
  t.mutable_value(out)[0] = total * T(scale);
  if (t.requires_grad(out)) {
    t.set_backward(out, [&t, logits, out, steps, vocab, eps, off, scale, pad_id,
                         soft = std::move(soft), gd = std::vector<int>(gold.begin(), gold.end())] {
      const T up = t.grad_ptr(out)[0] * T(scale);
      T* gl = t.grad_ptr(logits);
      if (!gl) return;
      for (int s = 0; s < steps; ++s) {
        if (gd[s] == pad_id) continue;
        const long o = static_cast<long>(s) * vocab;
        for (int y = 0; y < vocab; ++y) {
          const T q = off + (y == gd[s] ? T(1) - eps : T(0));
          gl[o + y] += up * (soft[o + y] - q);
        }
      }
    });
  }
  return out;
}

#define TAE_OPS(T)                                                                             \
  template Var matmul<T>(Tape<T>&, Var, Var);                                                  \
  template Var linear<T>(Tape<T>&, Var, Var, Var);                                             \
  template Var add<T>(Tape<T>&, Var, Var);                                                     \
  template Var mul<T>(Tape<T>&, Var, Var);                                                     \
  template Var scale<T>(Tape<T>&, Var, T);                                                     \
  template Var gelu<T>(Tape<T>&, Var);                                                         \
  template Var tanh<T>(Tape<T>&, Var);                                                         \
  template Var sigmoid<T>(Tape<T>&, Var);                                                      \
  template Var softmax<T>(Tape<T>&, Var);                                                      \
  template Var layer_norm<T>(Tape<T>&, Var, Var, Var);                                         \
  template Var dropout<T>(Tape<T>&, Var, double, Rng&);                                        \
  template Var embedding<T>(Tape<T>&, Var, std::span<const int>);                              \
  template Var sum<T>(Tape<T>&, std::span<const Var>);                                         \
  template Var sum_all<T>(Tape<T>&, Var);                                                      \
  template Var attention_weights<T>(Tape<T>&, Var, Var, int, bool, std::span<const char>);     \
  template Var attention_context<T>(Tape<T>&, Var, Var, int);                                  \
  template Var head_mean<T>(Tape<T>&, Var, int);                                               \
  template Var copy_mixture_loss<T>(Tape<T>&, Var, Var, Var, std::span<const int>,             \
                                    std::span<const int>, double, int, double);                \
  template Var softmax_cross_entropy<T>(Tape<T>&, Var, std::span<const int>, double, int, double);

TAE_OPS(float)
TAE_OPS(double)
#undef TAE_OPS

}  // namespace ops

GradCheckResult grad_check(ParameterStore<double>& store,
                           const std::function<Var(Tape<double>&)>& build, double eps,
                           int coords_per_param, std::uint64_t seed, double noise_floor) {
  store.zero_grad();
  {
    Tape<double> tape;
    const Var loss = build(tape);
    tape.backward(loss);
  }
  auto evaluate = [&] {
    Tape<double> tape(false);
    return tape.scalar(build(tape));
  };
  Rng rng(seed, "grad_check");
  GradCheckResult res;
  for (auto& p : store) {
    const int n = static_cast<int>(p.size());
    const int probes = std::min(n, coords_per_param);
    for (int c = 0; c < probes; ++c) {
      const auto idx = probes == n ? static_cast<std::size_t>(c)
                                   : static_cast<std::size_t>(rng.uniform_int(0, n - 1));
      if (!p.touched) {
        ++res.excluded;
        continue;
      }
      const double orig = p.value[idx];
      p.value[idx] = orig + eps;
      const double up = evaluate();
      p.value[idx] = orig - eps;
      const double down = evaluate();
      p.value[idx] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p.grad[idx];
      if (std::abs(analytic) < noise_floor && std::abs(numeric) < noise_floor) {
        ++res.negligible;
        res.max_negligible_abs_error = std::max(res.max_negligible_abs_error, std::abs(analytic - numeric));
        continue;
      }
      const double rel = std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + 1e-12);
      res.max_relative_error = std::max(res.max_relative_error, rel);
      ++res.checked;
    }
  }
  return res;
}

}  // namespace tae
