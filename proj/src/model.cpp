#include "apn/model.hpp"

#include <cmath>

namespace apn::model {

namespace {

template <typename T>
Tensor<T> xavier(std::vector<size_t> shape, size_t fan_in, size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / (double)(fan_in + fan_out));
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data) v = (T)rng.uniform(-a, a);
  return t;
}

// Shared forward construction for the inference and training passes.
template <typename T>
struct Built {
  std::vector<int> params;  // leaf ids in visit() order
  int v_node = -1, p_node = -1;
  int f = -1, g = -1, M = -1, a_hat = -1;
  std::vector<Peak> peaks;
  int logits = -1;
  std::optional<ZoomInResult<T>> zoom;
};

template <typename T>
int build_encoder(Graph<T>& gr, const std::vector<int>& conv_nodes, const ModelConfig& cfg,
                  const Tensor<T>& image) {
  check(image.ndim() == 3 && image.dim(0) == 3, ErrKind::data, "bad-input",
        "encoder expects a [3,S,S] image");
  check((int)image.dim(1) == cfg.input_size && (int)image.dim(2) == cfg.input_size, ErrKind::data,
        "bad-input", "image side does not match the configured input size");
  int x = gr.leaf(image, false);
  x = gr.reshape(x, {1, 3, image.dim(1), image.dim(2)});
  for (size_t i = 0; i < cfg.channels.size(); ++i)
    x = gr.conv2d(x, conv_nodes[2 * i], conv_nodes[2 * i + 1], /*stride=*/2, /*pad=*/1,
                  /*fuse_relu=*/true);
  const auto& s = gr.val(x).shape;
  return gr.reshape(x, {s[1], s[2], s[3]});
}

template <typename T>
Built<T> build_forward(Graph<T>& gr, const ModelParams<T>& params, const Tensor<T>& input,
                       bool is_feature, const Tensor<T>& phi_mat, const AttributeSchema& schema,
                       bool zoom, bool trainable) {
  check(phi_mat.ndim() == 2 && (int)phi_mat.dim(1) == params.k_attrs, ErrKind::data,
        "dim-mismatch", "phi matrix width must equal K");
  check(phi_mat.dim(0) >= 1, ErrKind::data, "empty-class-set",
        "need at least one class embedding");

  Built<T> b;
  std::vector<int> conv_nodes;
  params.visit([&](const std::string&, const Tensor<T>& t) {
    b.params.push_back(gr.leaf(t, trainable));
  });
  for (size_t i = 0; i < params.enc.size(); ++i) {
    conv_nodes.push_back(b.params[2 * i]);
    conv_nodes.push_back(b.params[2 * i + 1]);
  }
  b.v_node = b.params[b.params.size() - 2];
  b.p_node = b.params[b.params.size() - 1];

  if (is_feature) {
    check((int)input.dim(0) == params.feat_channels(), ErrKind::data, "dim-mismatch",
          "feature map channels do not match the model");
    b.f = gr.leaf(input, false);
  } else {
    check(!params.enc.empty(), ErrKind::data, "bad-input",
          "model has no encoder; expected a feature bundle");
    b.f = build_encoder(gr, conv_nodes, params.cfg, input);
  }

  b.g = gr.mean_spatial(b.f);
  const int phi_node = gr.leaf(phi_mat, false);
  const int attr_scores = gr.vecmat(b.g, b.v_node);
  int logits = gr.matvec(phi_node, attr_scores);

  b.M = gr.similarity(b.f, b.p_node);
  b.a_hat = gr.max_spatial(b.M, &b.peaks);

  if (zoom && schema.l >= 1 && !is_feature) {
    ZoomInResult<T> z = zoom_in(gr.val(b.M), gr.val(b.a_hat), schema, input);
    // The crop is a discrete decision: the zoomed image enters as a constant
    // and contributes gradient only through the shared encoder weights and V.
    const int f2 = build_encoder(gr, conv_nodes, params.cfg, z.zoomed);
    const int g2 = gr.mean_spatial(f2);
    const int attr2 = gr.vecmat(g2, b.v_node);
    const int logits2 = gr.matvec(phi_node, attr2);
    z.logits = gr.val(logits2);
    logits = gr.add(logits, logits2);
    b.zoom = std::move(z);
  }
  b.logits = logits;
  return b;
}

template <typename T>
ForwardTrace<T> trace_of(const Graph<T>& gr, const Built<T>& b) {
  ForwardTrace<T> t;
  t.f = gr.val(b.f);
  t.g = gr.val(b.g);
  t.M = gr.val(b.M);
  t.a_hat = gr.val(b.a_hat);
  t.peaks = b.peaks;
  t.logits = gr.val(b.logits);
  t.zoom = b.zoom;
  return t;
}

}  // namespace

template <typename T>
bool ModelParams<T>::finite() const {
  bool ok = true;
  visit([&](const std::string&, const Tensor<T>& t) {
    for (T v : t.data)
      if (!std::isfinite((double)v)) ok = false;
  });
  return ok;
}

template <typename T>
ModelParams<T> ModelParams<T>::init(const ModelConfig& cfg, int k_attrs, uint64_t seed) {
  check(!cfg.channels.empty(), ErrKind::usage, "bad-config", "encoder needs at least one block");
  Rng rng(seed);
  ModelParams<T> p;
  p.cfg = cfg;
  p.k_attrs = k_attrs;
  int cin = 3;
  for (int cout : cfg.channels) {
    ConvLayer<T> l;
    const size_t fan_in = (size_t)cin * cfg.kernel * cfg.kernel;
    const size_t fan_out = (size_t)cout * cfg.kernel * cfg.kernel;
    l.w = xavier<T>({(size_t)cout, (size_t)cin, (size_t)cfg.kernel, (size_t)cfg.kernel}, fan_in,
                    fan_out, rng);
    l.b = Tensor<T>({(size_t)cout});
    p.enc.push_back(std::move(l));
    cin = cout;
  }
  const size_t c = (size_t)cfg.channels.back(), k = (size_t)k_attrs;
  p.V = xavier<T>({c, k}, c, k, rng);
  p.P = xavier<T>({k, c}, c, c, rng);
  return p;
}

template <typename T>
ModelParams<T> ModelParams<T>::init_headless(int feat_c, int k_attrs, uint64_t seed) {
  Rng rng(seed);
  ModelParams<T> p;
  p.cfg.input_size = 0;
  p.cfg.channels.clear();
  p.k_attrs = k_attrs;
  const size_t c = (size_t)feat_c, k = (size_t)k_attrs;
  p.V = xavier<T>({c, k}, c, k, rng);
  p.P = xavier<T>({k, c}, c, c, rng);
  return p;
}

template <typename T>
Tensor<T> encode(const Tensor<T>& image, const ModelParams<T>& params) {
  Graph<T> gr;
  std::vector<int> conv_nodes;
  for (const auto& l : params.enc) {
    conv_nodes.push_back(gr.leaf(l.w, false));
    conv_nodes.push_back(gr.leaf(l.b, false));
  }
  return gr.val(build_encoder(gr, conv_nodes, params.cfg, image));
}

template <typename T>
Tensor<T> global_feature(const Tensor<T>& f) {
  Graph<T> gr;
  return gr.val(gr.mean_spatial(gr.leaf(f, false)));
}

template <typename T>
Tensor<T> base_logits(const Tensor<T>& g, const Tensor<T>& V, const Tensor<T>& phi_mat) {
  Graph<T> gr;
  const int s = gr.vecmat(gr.leaf(g, false), gr.leaf(V, false));
  return gr.val(gr.matvec(gr.leaf(phi_mat, false), s));
}

template <typename T>
T cls_loss(const Tensor<T>& logits, int true_idx) {
  Graph<T> gr;
  return gr.val(gr.softmax_ce(gr.leaf(logits, false), true_idx))[0];
}

template <typename T>
Tensor<T> similarity_maps(const Tensor<T>& f, const Tensor<T>& P) {
  Graph<T> gr;
  return gr.val(gr.similarity(gr.leaf(f, false), gr.leaf(P, false)));
}

template <typename T>
std::pair<Tensor<T>, std::vector<Peak>> predict_attributes(const Tensor<T>& M) {
  Graph<T> gr;
  std::vector<Peak> peaks;
  Tensor<T> a = gr.val(gr.max_spatial(gr.leaf(M, false), &peaks));
  return {std::move(a), std::move(peaks)};
}

template <typename T>
T reg_loss(const Tensor<T>& a_hat, const Tensor<T>& phi) {
  Graph<T> gr;
  return gr.val(gr.sq_err_sum(gr.leaf(a_hat, false), gr.leaf(phi, false)))[0];
}

template <typename T>
T ad_loss(const Tensor<T>& P, const std::vector<std::vector<int>>& groups) {
  Graph<T> gr;
  return gr.val(gr.group_l21(gr.leaf(P, false), groups))[0];
}

template <typename T>
T cpt_loss(const Tensor<T>& M, const std::vector<Peak>& peaks) {
  Graph<T> gr;
  return gr.val(gr.compactness(gr.leaf(M, false), peaks))[0];
}

template <typename T>
ZoomInResult<T> zoom_in(const Tensor<T>& M, const Tensor<T>& a_hat, const AttributeSchema& schema,
                        const Tensor<T>& image) {
  check(schema.l >= 1, ErrKind::data, "no-groups", "zoom-in needs at least one attribute group");
  check(M.ndim() == 3 && image.ndim() == 3, ErrKind::data, "shape-mismatch",
        "zoom_in expects M[K,H,W] and image[3,S,S]");
  const size_t h = M.dim(1), w = M.dim(2), s = image.dim(1);

  ZoomInResult<T> z;
  for (const auto& members : schema.groups()) {
    int best = members[0];
    for (int k : members)
      if (a_hat[k] > a_hat[best]) best = k;  // tie keeps the smallest index
    z.picked.push_back(best);
  }

  z.informative = Tensor<T>({h, w});
  for (int k : z.picked)
    for (size_t i = 0; i < h * w; ++i) z.informative[i] += M.data[(size_t)k * h * w + i];

  T mean = T(0);
  for (size_t i = 0; i < h * w; ++i) mean += z.informative[i];
  mean /= T(h * w);
  z.threshold = mean;

  z.mask = Tensor<T>({h, w});
  for (size_t i = 0; i < h * w; ++i) z.mask[i] = z.informative[i] >= mean ? T(1) : T(0);

  // Minimal pixel rectangle covering the nearest-neighbor upsampled mask.
  Tensor<T> up({s, s});
  kernels::upsample_nearest(z.mask.data.data(), (int)h, (int)w, up.data.data(), (int)s, (int)s);
  int x0 = (int)s, y0 = (int)s, x1 = -1, y1 = -1;
  for (int y = 0; y < (int)s; ++y)
    for (int x = 0; x < (int)s; ++x)
      if (up.data[(size_t)y * s + x] > T(0)) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
  check(x1 >= 0, ErrKind::numeric, "empty-mask", "binarized attention mask has no active cell");
  z.crop = PartBox{0, x0, y0, x1, y1};

  const int bw = x1 - x0 + 1, bh = y1 - y0 + 1;
  z.zoomed = Tensor<T>({3, s, s});
  std::vector<T> patch((size_t)bh * bw);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < bh; ++y)
      for (int x = 0; x < bw; ++x)
        patch[(size_t)y * bw + x] = image.data[((size_t)c * s + (y0 + y)) * s + (x0 + x)];
    kernels::upsample_bilinear(patch.data(), bh, bw, z.zoomed.data.data() + (size_t)c * s * s,
                               (int)s, (int)s);
  }
  return z;
}

Tensor<float> phi_matrix(const DatasetBundle& bundle, const std::vector<int>& class_ids) {
  check(!class_ids.empty(), ErrKind::data, "empty-class-set",
        "need at least one class for a phi matrix");
  const int k = bundle.schema.k;
  Tensor<float> m({class_ids.size(), (size_t)k});
  for (size_t j = 0; j < class_ids.size(); ++j) {
    const ClassInfo& c = bundle.class_info(class_ids[j]);
    for (int i = 0; i < k; ++i) m.at(j, i) = c.phi[i];
  }
  return m;
}

template <typename T>
ForwardTrace<T> forward(const Tensor<T>& input, bool is_feature, const ModelParams<T>& params,
                        const Tensor<T>& phi_mat, const AttributeSchema& schema, bool zoom) {
  Graph<T> gr;
  Built<T> b = build_forward(gr, params, input, is_feature, phi_mat, schema, zoom, false);
  return trace_of(gr, b);
}

template <typename T>
TrainingPass<T> training_pass(const ModelParams<T>& params, const Tensor<T>& input,
                              bool is_feature, const Tensor<T>& phi_seen, int true_idx,
                              const AttributeSchema& schema, const Toggles& toggles,
                              const LossWeights& weights) {
  check(true_idx >= 0 && (size_t)true_idx < phi_seen.dim(0), ErrKind::data, "bad-label",
        "true class must be inside the seen class set");
  TrainingPass<T> pass;
  pass.graph = std::make_unique<Graph<T>>();
  Graph<T>& gr = *pass.graph;
  Built<T> b =
      build_forward(gr, params, input, is_feature, phi_seen, schema, toggles.zoom, true);
  pass.param_nodes = b.params;

  int total = gr.softmax_ce(b.logits, true_idx);
  pass.breakdown.cls = (double)gr.val(total)[0];

  if (toggles.reg) {
    Tensor<T> phi_y({(size_t)params.k_attrs});
    for (int i = 0; i < params.k_attrs; ++i) phi_y[i] = phi_seen.at(true_idx, i);
    const int reg = gr.sq_err_sum(b.a_hat, gr.leaf(phi_y, false));
    pass.breakdown.reg = (double)gr.val(reg)[0];
    total = gr.add(total, gr.scale(reg, (T)weights.lambda1));
  }
  if (toggles.ad) {
    const auto groups = schema.groups();
    check(!groups.empty(), ErrKind::data, "no-groups",
          "decorrelation loss enabled but the schema has no attribute groups");
    const int ad = gr.group_l21(b.p_node, groups);
    pass.breakdown.ad = (double)gr.val(ad)[0];
    total = gr.add(total, gr.scale(ad, (T)weights.lambda2));
  }
  if (toggles.cpt) {
    const int cpt = gr.compactness(b.M, b.peaks);
    pass.breakdown.cpt = (double)gr.val(cpt)[0];
    total = gr.add(total, gr.scale(cpt, (T)weights.lambda3));
  }
  pass.breakdown.total = (double)gr.val(total)[0];
  pass.loss_node = total;
  pass.trace = trace_of(gr, b);
  return pass;
}

#define APN_MODEL_INSTANTIATE(T)                                                              \
  template struct ModelParams<T>;                                                             \
  template Tensor<T> encode<T>(const Tensor<T>&, const ModelParams<T>&);                      \
  template Tensor<T> global_feature<T>(const Tensor<T>&);                                     \
  template Tensor<T> base_logits<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);    \
  template T cls_loss<T>(const Tensor<T>&, int);                                              \
  template Tensor<T> similarity_maps<T>(const Tensor<T>&, const Tensor<T>&);                  \
  template std::pair<Tensor<T>, std::vector<Peak>> predict_attributes<T>(const Tensor<T>&);   \
  template T reg_loss<T>(const Tensor<T>&, const Tensor<T>&);                                 \
  template T ad_loss<T>(const Tensor<T>&, const std::vector<std::vector<int>>&);              \
  template T cpt_loss<T>(const Tensor<T>&, const std::vector<Peak>&);                         \
  template ZoomInResult<T> zoom_in<T>(const Tensor<T>&, const Tensor<T>&,                     \
                                      const AttributeSchema&, const Tensor<T>&);              \
  template ForwardTrace<T> forward<T>(const Tensor<T>&, bool, const ModelParams<T>&,          \
                                      const Tensor<T>&, const AttributeSchema&, bool);        \
  template TrainingPass<T> training_pass<T>(const ModelParams<T>&, const Tensor<T>&, bool,    \
                                            const Tensor<T>&, int, const AttributeSchema&,    \
                                            const Toggles&, const LossWeights&);

APN_MODEL_INSTANTIATE(float)
APN_MODEL_INSTANTIATE(double)

}  // namespace apn::model
