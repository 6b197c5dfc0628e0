#ifndef APN_GRAPH_HPP
#define APN_GRAPH_HPP

#include <cmath>
#include <deque>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "apn/error.hpp"
#include "apn/kernels.hpp"
#include "apn/tensor.hpp"

namespace apn {

struct Peak {
  int i = 0, j = 0;  // row, col
};

// Reverse-mode tape. Ops execute eagerly; each differentiable op pushes an
// adjoint closure. backward() replays the closures in reverse and may run
// exactly once per graph. One graph per forward pass; graphs for different
// samples are independent and safe to build/backward on separate threads.
template <typename T>
class Graph {
 public:
  Graph() = default;
  // adjoint closures capture `this`; pin the graph in place
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  int leaf(Tensor<T> value, bool needs_grad = false) {
    return push(std::move(value), needs_grad);
  }

  const Tensor<T>& val(int id) const { return nodes_[id].val; }
  const Tensor<T>& grad(int id) const { return nodes_[id].grad; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  size_t size() const { return nodes_.size(); }

  // --- elementwise / structural ---

  int relu(int x) {
    const Tensor<T>& xv = val(x);
    reject_empty(xv);
    Tensor<T> out(xv.shape);
    for (size_t i = 0; i < xv.numel(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
    int id = push(std::move(out), needs_grad(x));
    if (nodes_[id].needs_grad)
      tape_.push_back([this, x, id] {
        const Tensor<T>& xv = val(x);
        for (size_t i = 0; i < xv.numel(); ++i)
          if (xv[i] > T(0)) nodes_[x].grad[i] += nodes_[id].grad[i];
      });
    return id;
  }

  int add(int a, int b) {
    const Tensor<T>&av = val(a), &bv = val(b);
    check(av.same_shape(bv), ErrKind::data, "shape-mismatch", "add operands differ in shape");
    Tensor<T> out(av.shape);
    for (size_t i = 0; i < av.numel(); ++i) out[i] = av[i] + bv[i];
    int id = push(std::move(out), needs_grad(a) || needs_grad(b));
    if (nodes_[id].needs_grad)
      tape_.push_back([this, a, b, id] {
        const Tensor<T>& g = nodes_[id].grad;
        if (nodes_[a].needs_grad)
          for (size_t i = 0; i < g.numel(); ++i) nodes_[a].grad[i] += g[i];
        if (nodes_[b].needs_grad)
          for (size_t i = 0; i < g.numel(); ++i) nodes_[b].grad[i] += g[i];
      });
    return id;
  }

  int scale(int x, T s) {
    const Tensor<T>& xv = val(x);
    reject_empty(xv);
    Tensor<T> out(xv.shape);
    for (size_t i = 0; i < xv.numel(); ++i) out[i] = xv[i] * s;
    int id = push(std::move(out), needs_grad(x));
    if (nodes_[id].needs_grad)
      tape_.push_back([this, x, id, s] {
        for (size_t i = 0; i < nodes_[id].grad.numel(); ++i)
          nodes_[x].grad[i] += s * nodes_[id].grad[i];
      });
    return id;
  }

  int reshape(int x, std::vector<size_t> shape) {
    const Tensor<T>& xv = val(x);
    check(Tensor<T>::count(shape) == xv.numel(), ErrKind::data, "shape-mismatch",
          "reshape changes element count");
    Tensor<T> out(std::move(shape), xv.data);
    int id = push(std::move(out), needs_grad(x));
    if (nodes_[id].needs_grad)
      tape_.push_back([this, x, id] {
        for (size_t i = 0; i < nodes_[id].grad.numel(); ++i)
          nodes_[x].grad[i] += nodes_[id].grad[i];
      });
    return id;
  }

  // --- reductions ---

  int sum(int x) {
    const Tensor<T>& xv = val(x);
    reject_empty(xv);
    T acc = T(0);
    for (size_t i = 0; i < xv.numel(); ++i) acc += xv[i];
    int id = push(scalar(acc), needs_grad(x));
    if (nodes_[id].needs_grad)
      tape_.push_back([this, x, id] {
        const T g = nodes_[id].grad[0];
        for (size_t i = 0; i < nodes_[x].grad.numel(); ++i) nodes_[x].grad[i] += g;
      });
    return id;
  }

  int dot(int a, int b) {
    const Tensor<T>&av = val(a), &bv = val(b);
    reject_empty(av);
    check(av.same_shape(bv), ErrKind::data, "shape-mismatch", "dot operands differ in shape");
    T acc = T(0);
    for (size_t i = 0; i < av.numel(); ++i) acc += av[i] * bv[i];
    int id = push(scalar(acc), needs_grad(a) || needs_grad(b));
    if (nodes_[id].needs_grad)
      tape_.push_back([this, a, b, id] {
        const T g = nodes_[id].grad[0];
        if (nodes_[a].needs_grad)
          for (size_t i = 0; i < val(b).numel(); ++i) nodes_[a].grad[i] += g * val(b)[i];
        if (nodes_[b].needs_grad)
          for (size_t i = 0; i < val(a).numel(); ++i) nodes_[b].grad[i] += g * val(a)[i];
      });
    return id;
  }

  // Spatial mean of f [C,H,W] -> [C].  (Eq. 1 style global average pooling.)
  int mean_spatial(int f) {
    const Tensor<T>& fv = val(f);
    reject_empty(fv);
    check(fv.ndim() == 3, ErrKind::data, "shape-mismatch", "mean_spatial expects [C,H,W]");
    const size_t c = fv.dim(0), hw = fv.dim(1) * fv.dim(2);
    Tensor<T> out({c});
    for (size_t ci = 0; ci < c; ++ci) {
      T acc = T(0);
      for (size_t i = 0; i < hw; ++i) acc += fv[ci * hw + i];
      out[ci] = acc / T(hw);
    }
    int id = push(std::move(out), needs_grad(f));
    if (nodes_[id].needs_grad)
      tape_.push_back([this, f, id, c, hw] {
        for (size_t ci = 0; ci < c; ++ci) {
          const T g = nodes_[id].grad[ci] / T(hw);
          for (size_t i = 0; i < hw; ++i) nodes_[f].grad[ci * hw + i] += g;
        }
      });
    return id;
  }

  // Per-slice spatial max of m [K,H,W] -> [K]; the first row-major argmax per
  // slice is the peak (ties break to the earliest position). Gradient routes
  // to the peak only.
  int max_spatial(int m, std::vector<Peak>* peaks_out = nullptr) {
    const Tensor<T>& mv = val(m);
    reject_empty(mv);
    check(mv.ndim() == 3, ErrKind::data, "shape-mismatch", "max_spatial expects [K,H,W]");
    const size_t k = mv.dim(0), h = mv.dim(1), w = mv.dim(2);
    Tensor<T> out({k});
    auto peaks = std::make_shared<std::vector<Peak>>(k);
    for (size_t ki = 0; ki < k; ++ki) {
      size_t best = 0;
      const T* slice = mv.data.data() + ki * h * w;
      for (size_t i = 1; i < h * w; ++i)
        if (slice[i] > slice[best]) best = i;
      out[ki] = slice[best];
      (*peaks)[ki] = Peak{(int)(best / w), (int)(best % w)};
    }
    if (peaks_out) *peaks_out = *peaks;
    int id = push(std::move(out), needs_grad(m));
    if (nodes_[id].needs_grad)
      tape_.push_back([this, m, id, peaks, h, w] {
        for (size_t ki = 0; ki < peaks->size(); ++ki) {
          const Peak& p = (*peaks)[ki];
          nodes_[m].grad[(ki * h + p.i) * w + p.j] += nodes_[id].grad[ki];
        }
      });
    return id;
  }

  // --- linear algebra ---

  // x^T A for x [m], A [m,n] -> [n].  Embeds a pooled feature with V.
  int vecmat(int x, int a) {
    const Tensor<T>&xv = val(x), &av = val(a);
    reject_empty(xv);
    check(av.ndim() == 2 && xv.ndim() == 1 && av.dim(0) == xv.dim(0), ErrKind::data,
          "shape-mismatch", "vecmat expects x[m], A[m,n]");
    const size_t m = av.dim(0), n = av.dim(1);
    Tensor<T> out({n});
    for (size_t j = 0; j < n; ++j) {
      T acc = T(0);
      for (size_t i = 0; i < m; ++i) acc += xv[i] * av.data[i * n + j];
      out[j] = acc;
    }
    int id = push(std::move(out), needs_grad(x) || needs_grad(a));
    if (nodes_[id].needs_grad)
      tape_.push_back([this, x, a, id, m, n] {
        const Tensor<T>& g = nodes_[id].grad;
        if (nodes_[x].needs_grad)
          for (size_t i = 0; i < m; ++i) {
            T acc = T(0);
            for (size_t j = 0; j < n; ++j) acc += g[j] * val(a).data[i * n + j];
            nodes_[x].grad[i] += acc;
          }
        if (nodes_[a].needs_grad)
          for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < n; ++j) nodes_[a].grad[i * n + j] += val(x)[i] * g[j];
      });
    return id;
  }

  // A x for A [m,n], x [n] -> [m].  Scores attribute vectors against classes.
  int matvec(int a, int x) {
    const Tensor<T>&av = val(a), &xv = val(x);
    reject_empty(av);
    check(av.ndim() == 2 && xv.ndim() == 1 && av.dim(1) == xv.dim(0), ErrKind::data,
          "shape-mismatch", "matvec expects A[m,n], x[n]");
    const size_t m = av.dim(0), n = av.dim(1);
    Tensor<T> out({m});
    for (size_t i = 0; i < m; ++i) {
      T acc = T(0);
      for (size_t j = 0; j < n; ++j) acc += av.data[i * n + j] * xv[j];
      out[i] = acc;
    }
    int id = push(std::move(out), needs_grad(a) || needs_grad(x));
    if (nodes_[id].needs_grad)
      tape_.push_back([this, a, x, id, m, n] {
        const Tensor<T>& g = nodes_[id].grad;
        if (nodes_[a].needs_grad)
          for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < n; ++j) nodes_[a].grad[i * n + j] += g[i] * val(x)[j];
        if (nodes_[x].needs_grad)
          for (size_t j = 0; j < n; ++j) {
            T acc = T(0);
            for (size_t i = 0; i < m; ++i) acc += g[i] * val(a).data[i * n + j];
            nodes_[x].grad[j] += acc;
          }
      });
    return id;
  }

  // Similarity maps M[k,i,j] = <p_k, f[:,i,j]> for f [C,H,W], P [K,C].
  int similarity(int f, int p) {
    const Tensor<T>&fv = val(f), &pv = val(p);
    reject_empty(fv);
    check(fv.ndim() == 3 && pv.ndim() == 2 && pv.dim(1) == fv.dim(0), ErrKind::data,
          "shape-mismatch", "similarity expects f[C,H,W], P[K,C] with shared C");
    const size_t c = fv.dim(0), hw = fv.dim(1) * fv.dim(2), k = pv.dim(0);
    Tensor<T> out({k, fv.dim(1), fv.dim(2)});
    for (size_t ki = 0; ki < k; ++ki)
      for (size_t i = 0; i < hw; ++i) {
        T acc = T(0);
        for (size_t ci = 0; ci < c; ++ci) acc += pv.data[ki * c + ci] * fv.data[ci * hw + i];
        out[ki * hw + i] = acc;
      }
    int id = push(std::move(out), needs_grad(f) || needs_grad(p));
    if (nodes_[id].needs_grad)
      tape_.push_back([this, f, p, id, c, hw, k] {
        const Tensor<T>& g = nodes_[id].grad;
        if (nodes_[p].needs_grad)
          for (size_t ki = 0; ki < k; ++ki)
            for (size_t ci = 0; ci < c; ++ci) {
              T acc = T(0);
              for (size_t i = 0; i < hw; ++i) acc += g[ki * hw + i] * val(f).data[ci * hw + i];
              nodes_[p].grad[ki * c + ci] += acc;
            }
        if (nodes_[f].needs_grad)
          for (size_t ci = 0; ci < c; ++ci)
            for (size_t i = 0; i < hw; ++i) {
              T acc = T(0);
              for (size_t ki = 0; ki < k; ++ki) acc += g[ki * hw + i] * val(p).data[ki * c + ci];
              nodes_[f].grad[ci * hw + i] += acc;
            }
      });
    return id;
  }

  // --- convolution ---

  // fuse_relu applies relu to the output in place; the adjoint masks the
  // incoming gradient by the activation sign, saving a separate relu node on
  // the hot encoder path.
  int conv2d(int x, int w, int bias, int stride, int pad, bool fuse_relu = false) {
    const Tensor<T>&xv = val(x), &wv = val(w);
    check(xv.ndim() == 4 && wv.ndim() == 4, ErrKind::data, "shape-mismatch",
          "conv2d expects input [N,C,H,W] and weight [Cout,Cin,k,k]");
    check(xv.dim(1) == wv.dim(1), ErrKind::data, "shape-mismatch",
          "conv2d input channels (" + std::to_string(xv.dim(1)) + ") do not match weight channels (" +
              std::to_string(wv.dim(1)) + ")");
    check(wv.dim(2) == wv.dim(3), ErrKind::data, "shape-mismatch", "conv2d kernel must be square");
    kernels::ConvShape s{(int)xv.dim(0), (int)xv.dim(1), (int)xv.dim(2), (int)xv.dim(3),
                         (int)wv.dim(0), (int)wv.dim(2), stride,        pad};
    check(s.stride >= 1, ErrKind::usage, "bad-stride", "conv2d stride must be >= 1");
    check(s.k <= s.h + 2 * pad && s.k <= s.w + 2 * pad, ErrKind::data, "shape-mismatch",
          "conv2d kernel larger than padded input");
    const T* bptr = nullptr;
    if (bias >= 0) {
      check(val(bias).numel() == (size_t)s.cout, ErrKind::data, "shape-mismatch",
            "conv2d bias size must equal output channels");
      bptr = val(bias).data.data();
    }
    Tensor<T> out({(size_t)s.n, (size_t)s.cout, (size_t)s.oh(), (size_t)s.ow()});
    kernels::conv2d_fwd(xv.data.data(), wv.data.data(), bptr, out.data.data(), s);
    if (fuse_relu)
      for (auto& v : out.data)
        if (v < T(0)) v = T(0);
    bool ng = needs_grad(x) || needs_grad(w) || (bias >= 0 && needs_grad(bias));
    int id = push(std::move(out), ng);
    if (ng)
      tape_.push_back([this, x, w, bias, id, s, fuse_relu] {
        const T* g = nodes_[id].grad.data.data();
        std::vector<T> masked;
        if (fuse_relu) {
          const Tensor<T>& ov = val(id);
          masked.resize(ov.numel());
          for (size_t i = 0; i < ov.numel(); ++i) masked[i] = ov[i] > T(0) ? g[i] : T(0);
          g = masked.data();
        }
        if (nodes_[w].needs_grad || (bias >= 0 && nodes_[bias].needs_grad)) {
          T* gb = (bias >= 0 && nodes_[bias].needs_grad) ? nodes_[bias].grad.data.data() : nullptr;
          T* gw = nodes_[w].needs_grad ? nodes_[w].grad.data.data() : scratch_weight(s);
          kernels::conv2d_bwd_weight(g, val(x).data.data(), gw, gb, s);
        }
        if (nodes_[x].needs_grad)
          kernels::conv2d_bwd_input(g, val(w).data.data(), nodes_[x].grad.data.data(), s);
      });
    return id;
  }

  // --- losses ---

  // Cross-entropy of softmax(logits) against true_idx.
  int softmax_ce(int logits, int true_idx) {
    const Tensor<T>& lv = val(logits);
    reject_empty(lv);
    check(true_idx >= 0 && (size_t)true_idx < lv.numel(), ErrKind::data, "bad-label",
          "true class index outside logit range");
    T mx = lv[0];
    for (size_t i = 1; i < lv.numel(); ++i) mx = std::max(mx, lv[i]);
    T z = T(0);
    for (size_t i = 0; i < lv.numel(); ++i) z += std::exp(lv[i] - mx);
    const T loss = -(lv[true_idx] - mx - std::log(z));
    int id = push(scalar(loss), needs_grad(logits));
    if (nodes_[id].needs_grad) {
      auto probs = std::make_shared<std::vector<T>>(lv.numel());
      for (size_t i = 0; i < lv.numel(); ++i) (*probs)[i] = std::exp(lv[i] - mx) / z;
      tape_.push_back([this, logits, id, true_idx, probs] {
        const T g = nodes_[id].grad[0];
        for (size_t i = 0; i < probs->size(); ++i) {
          T d = (*probs)[i] - (i == (size_t)true_idx ? T(1) : T(0));
          nodes_[logits].grad[i] += g * d;
        }
      });
    }
    return id;
  }

  // Sum of squared differences (the ||.||_2^2 convention; no mean).
  int sq_err_sum(int a, int b) {
    const Tensor<T>&av = val(a), &bv = val(b);
    reject_empty(av);
    check(av.same_shape(bv), ErrKind::data, "shape-mismatch", "sq_err_sum operands differ");
    T acc = T(0);
    for (size_t i = 0; i < av.numel(); ++i) {
      const T d = av[i] - bv[i];
      acc += d * d;
    }
    int id = push(scalar(acc), needs_grad(a) || needs_grad(b));
    if (nodes_[id].needs_grad)
      tape_.push_back([this, a, b, id] {
        const T g = nodes_[id].grad[0];
        for (size_t i = 0; i < val(a).numel(); ++i) {
          const T d = val(a)[i] - val(b)[i];
          if (nodes_[a].needs_grad) nodes_[a].grad[i] += g * T(2) * d;
          if (nodes_[b].needs_grad) nodes_[b].grad[i] -= g * T(2) * d;
        }
      });
    return id;
  }

  // L_2,1 over attribute groups: sum_c sum_l || (P[k,c])_{k in S_l} ||_2 for
  // prototypes P [K,C]. Attributes outside every group contribute nothing.
  int group_l21(int p, const std::vector<std::vector<int>>& groups) {
    const Tensor<T>& pv = val(p);
    reject_empty(pv);
    check(pv.ndim() == 2, ErrKind::data, "shape-mismatch", "group_l21 expects P[K,C]");
    for (const auto& g : groups)
      check(!g.empty(), ErrKind::data, "empty-group", "attribute group has no members");
    const size_t c = pv.dim(1);
    T acc = T(0);
    for (size_t ci = 0; ci < c; ++ci)
      for (const auto& g : groups) {
        T ss = T(0);
        for (int k : g) ss += pv.data[(size_t)k * c + ci] * pv.data[(size_t)k * c + ci];
        acc += std::sqrt(ss);
      }
    int id = push(scalar(acc), needs_grad(p));
    if (nodes_[id].needs_grad) {
      auto gr = std::make_shared<std::vector<std::vector<int>>>(groups);
      tape_.push_back([this, p, id, gr, c] {
        const T g0 = nodes_[id].grad[0];
        for (size_t ci = 0; ci < c; ++ci)
          for (const auto& g : *gr) {
            T ss = T(0);
            for (int k : g) ss += val(p).data[(size_t)k * c + ci] * val(p).data[(size_t)k * c + ci];
            const T norm = std::sqrt(ss);
            if (norm <= T(0)) continue;
            for (int k : g)
              nodes_[p].grad[(size_t)k * c + ci] += g0 * val(p).data[(size_t)k * c + ci] / norm;
          }
      });
    }
    return id;
  }

  // Compactness penalty: (1/(K*H*W)) sum_k sum_ij max(M[k,i,j], 0) * dist^2
  // to the slice peak. Peaks are the fixed coordinates computed by
  // max_spatial. Negative similarities are excluded: they already carry no
  // attention mass, and rewarding them would give the objective an unbounded
  // descent direction.
  int compactness(int m, const std::vector<Peak>& peaks) {
    const Tensor<T>& mv = val(m);
    reject_empty(mv);
    check(mv.ndim() == 3 && mv.dim(0) == peaks.size(), ErrKind::data, "shape-mismatch",
          "compactness expects M[K,H,W] and one peak per slice");
    const size_t k = mv.dim(0), h = mv.dim(1), w = mv.dim(2);
    const T norm = T(1) / T(k * h * w);
    T acc = T(0);
    for (size_t ki = 0; ki < k; ++ki)
      for (size_t i = 0; i < h; ++i)
        for (size_t j = 0; j < w; ++j) {
          const T v = mv.data[(ki * h + i) * w + j];
          if (v <= T(0)) continue;
          const T di = T(i) - T(peaks[ki].i), dj = T(j) - T(peaks[ki].j);
          acc += v * (di * di + dj * dj);
        }
    int id = push(scalar(acc * norm), needs_grad(m));
    if (nodes_[id].needs_grad) {
      auto pk = std::make_shared<std::vector<Peak>>(peaks);
      tape_.push_back([this, m, id, pk, k, h, w, norm] {
        const T g = nodes_[id].grad[0] * norm;
        for (size_t ki = 0; ki < k; ++ki)
          for (size_t i = 0; i < h; ++i)
            for (size_t j = 0; j < w; ++j) {
              if (val(m).data[(ki * h + i) * w + j] <= T(0)) continue;
              const T di = T(i) - T((*pk)[ki].i), dj = T(j) - T((*pk)[ki].j);
              nodes_[m].grad[(ki * h + i) * w + j] += g * (di * di + dj * dj);
            }
      });
    }
    return id;
  }

  // Align-corners bilinear upsample of a [H,W] map.
  int upsample_bilinear(int x, int oh, int ow) {
    const Tensor<T>& xv = val(x);
    check(oh >= 1 && ow >= 1, ErrKind::usage, "bad-size", "upsample target must be positive");
    check(xv.ndim() == 2 && xv.dim(0) >= 1 && xv.dim(1) >= 1, ErrKind::data, "shape-mismatch",
          "upsample_bilinear expects a nonempty [H,W] map");
    const int h = (int)xv.dim(0), w = (int)xv.dim(1);
    Tensor<T> out({(size_t)oh, (size_t)ow});
    kernels::upsample_bilinear(xv.data.data(), h, w, out.data.data(), oh, ow);
    int id = push(std::move(out), needs_grad(x));
    if (nodes_[id].needs_grad)
      tape_.push_back([this, x, id, h, w, oh, ow] {
        kernels::upsample_bilinear_bwd(nodes_[id].grad.data.data(), oh, ow,
                                       nodes_[x].grad.data.data(), h, w);
      });
    return id;
  }

  void backward(int root) {
    check(!consumed_, ErrKind::usage, "tape-consumed", "backward already ran on this graph");
    check(val(root).numel() == 1, ErrKind::usage, "non-scalar", "backward root must be scalar");
    consumed_ = true;
    nodes_[root].grad[0] = T(1);
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
  }

 private:
  struct Node {
    Tensor<T> val;
    Tensor<T> grad;
    bool needs_grad;
  };

  int push(Tensor<T> v, bool needs_grad) {
    Node n;
    if (needs_grad) n.grad = Tensor<T>(v.shape);
    n.val = std::move(v);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return (int)nodes_.size() - 1;
  }

  static Tensor<T> scalar(T v) {
    Tensor<T> t({1});
    t[0] = v;
    return t;
  }

  static void reject_empty(const Tensor<T>& t) {
    check(!t.empty(), ErrKind::data, "empty-tensor", "operation on empty tensor");
  }

  T* scratch_weight(const kernels::ConvShape& s) {
    scratch_.assign((size_t)s.cout * s.cin * s.k * s.k, T(0));
    return scratch_.data();
  }

  std::deque<Node> nodes_;  // deque: node references stay valid as ops are appended
  std::vector<std::function<void()>> tape_;
  std::vector<T> scratch_;
  bool consumed_ = false;
};

// Compares the backward-pass gradient of a scalar function against central
// finite differences, component by component; returns the worst relative
// error |a - b| / max(1, |a|, |b|).  fn fills *grad (sized like x) when the
// pointer is non-null and always returns the scalar value.
template <typename T>
using GradFn = std::function<T(const Tensor<T>&, Tensor<T>*)>;

template <typename T>
T grad_check(const GradFn<T>& fn, const Tensor<T>& point, T eps) {
  Tensor<T> analytic(point.shape);
  fn(point, &analytic);
  Tensor<T> x = point;
  T worst = T(0);
  for (size_t i = 0; i < x.numel(); ++i) {
    const T keep = x[i];
    x[i] = keep + eps;
    const T fp = fn(x, nullptr);
    x[i] = keep - eps;
    const T fm = fn(x, nullptr);
    x[i] = keep;
    const T fd = (fp - fm) / (T(2) * eps);
    const T a = analytic[i];
    const T denom = std::max(T(1), std::max(std::abs(a), std::abs(fd)));
    worst = std::max(worst, std::abs(a - fd) / denom);
  }
  return worst;
}

}  // namespace apn

#endif
