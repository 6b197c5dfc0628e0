#ifndef APN_MODEL_HPP
#define APN_MODEL_HPP

#include <memory>
#include <optional>
#include <string>

#include "apn/graph.hpp"
#include "apn/rng.hpp"
#include "apn/schema.hpp"

namespace apn::model {

// Encoder: stride-2 conv3x3 + relu blocks. 64x64 input with the default
// three blocks gives an 8x8x64 feature map.
struct ModelConfig {
  int input_size = 64;
  std::vector<int> channels = {16, 32, 64};
  int kernel = 3;

  int feat_side() const {
    int s = input_size;
    for (size_t i = 0; i < channels.size(); ++i) s = (s + 1) / 2;
    return s;
  }
  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct ConvLayer {
  Tensor<T> w;  // [cout, cin, k, k]
  Tensor<T> b;  // [cout]
};

template <typename T>
struct ModelParams {
  ModelConfig cfg;
  int k_attrs = 0;
  std::vector<ConvLayer<T>> enc;
  Tensor<T> V;  // visual-semantic embedding [C, K]
  Tensor<T> P;  // attribute prototypes     [K, C]

  int feat_channels() const { return (int)V.dim(0); }

  // Stable parameter order for the optimizer and checkpoints.
  template <typename Fn>
  void visit(Fn&& fn) {
    for (size_t i = 0; i < enc.size(); ++i) {
      fn("enc" + std::to_string(i) + ".w", enc[i].w);
      fn("enc" + std::to_string(i) + ".b", enc[i].b);
    }
    fn("V", V);
    fn("P", P);
  }
  template <typename Fn>
  void visit(Fn&& fn) const {
    const_cast<ModelParams*>(this)->visit([&](const std::string& n, Tensor<T>& t) {
      fn(n, static_cast<const Tensor<T>&>(t));
    });
  }

  bool finite() const;

  // Xavier-uniform init of encoder, V and P.
  static ModelParams init(const ModelConfig& cfg, int k_attrs, uint64_t seed);
  // For feature-table bundles: no encoder, features arrive with feat_c channels.
  static ModelParams init_headless(int feat_c, int k_attrs, uint64_t seed);
};

struct Toggles {
  bool reg = true, ad = true, cpt = true, zoom = true;
};

struct LossWeights {
  double lambda1 = 0.05, lambda2 = 0.01, lambda3 = 0.2;
};

struct LossBreakdown {
  double cls = 0, reg = 0, ad = 0, cpt = 0, total = 0;
};

template <typename T>
struct ZoomInResult {
  std::vector<int> picked;   // most informative attribute per group
  Tensor<T> informative;     // summed similarity map [H,W]
  T threshold = T(0);        // its spatial mean
  Tensor<T> mask;            // binarized map [H,W]
  PartBox crop;              // minimal pixel box covering the upsampled mask
  Tensor<T> zoomed;          // cropped-and-resized image [3,S,S]
  Tensor<T> logits;          // zoom-branch class logits (set by forward)
};

template <typename T>
struct ForwardTrace {
  Tensor<T> f;       // [C,H,W]
  Tensor<T> g;       // [C]
  Tensor<T> M;       // [K,H,W]
  Tensor<T> a_hat;   // [K]
  std::vector<Peak> peaks;
  Tensor<T> logits;  // over the supplied class set; two-branch sum when zoomed
  std::optional<ZoomInResult<T>> zoom;
};

// --- standalone ops (shared by the graph builder, eval and tests) ---

template <typename T>
Tensor<T> encode(const Tensor<T>& image, const ModelParams<T>& params);

template <typename T>
Tensor<T> global_feature(const Tensor<T>& f);

// logits[j] = g^T V phi[j]
template <typename T>
Tensor<T> base_logits(const Tensor<T>& g, const Tensor<T>& V, const Tensor<T>& phi_mat);

template <typename T>
T cls_loss(const Tensor<T>& logits, int true_idx);

template <typename T>
Tensor<T> similarity_maps(const Tensor<T>& f, const Tensor<T>& P);

template <typename T>
std::pair<Tensor<T>, std::vector<Peak>> predict_attributes(const Tensor<T>& M);

template <typename T>
T reg_loss(const Tensor<T>& a_hat, const Tensor<T>& phi);

template <typename T>
T ad_loss(const Tensor<T>& P, const std::vector<std::vector<int>>& groups);

template <typename T>
T cpt_loss(const Tensor<T>& M, const std::vector<Peak>& peaks);

// Informative-region crop from the similarity maps; logits left empty.
template <typename T>
ZoomInResult<T> zoom_in(const Tensor<T>& M, const Tensor<T>& a_hat, const AttributeSchema& schema,
                        const Tensor<T>& image);

// Class-attribute matrix [J,K] for the given class ids, in order.
Tensor<float> phi_matrix(const DatasetBundle& bundle, const std::vector<int>& class_ids);

// --- full passes ---

// Inference pass (no gradients). `input` is an image [3,S,S] or, for feature
// bundles, a feature map [C,H,W]. Zoom requires a raw image and L >= 1.
template <typename T>
ForwardTrace<T> forward(const Tensor<T>& input, bool is_feature, const ModelParams<T>& params,
                        const Tensor<T>& phi_mat, const AttributeSchema& schema, bool zoom);

// Training pass: owns the graph so the caller can run backward and read
// parameter gradients in visit() order.
template <typename T>
struct TrainingPass {
  std::unique_ptr<Graph<T>> graph;
  std::vector<int> param_nodes;  // visit() order
  int loss_node = -1;
  ForwardTrace<T> trace;
  LossBreakdown breakdown;

  void backward() { graph->backward(loss_node); }
  const Tensor<T>& param_grad(size_t i) const { return graph->grad(param_nodes[i]); }
};

template <typename T>
TrainingPass<T> training_pass(const ModelParams<T>& params, const Tensor<T>& input,
                              bool is_feature, const Tensor<T>& phi_seen, int true_idx,
                              const AttributeSchema& schema, const Toggles& toggles,
                              const LossWeights& weights);

}  // namespace apn::model

#endif
