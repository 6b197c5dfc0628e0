#include "apn/gradcheck_suite.hpp"

#include <functional>

namespace apn {

namespace {

using Shapes = std::vector<std::vector<size_t>>;
using Builder = std::function<int(Graph<double>&, const std::vector<int>&)>;

// Random point over packed op inputs; fn splits, runs the graph, and reads
// gradients back in the same packing order.
double check_op(const Shapes& shapes, const Builder& build, int trials, Rng& rng, double lo,
                double hi) {
  size_t total = 0;
  for (const auto& s : shapes) total += Tensor<double>::count(s);

  GradFn<double> fn = [&](const Tensor<double>& x, Tensor<double>* grad) -> double {
    Graph<double> g;
    std::vector<int> ids;
    size_t off = 0;
    for (const auto& s : shapes) {
      Tensor<double> t(s);
      for (size_t i = 0; i < t.numel(); ++i) t[i] = x[off + i];
      off += t.numel();
      ids.push_back(g.leaf(std::move(t), true));
    }
    const int loss = build(g, ids);
    const double v = g.val(loss)[0];
    if (grad) {
      g.backward(loss);
      *grad = Tensor<double>({total});
      size_t o = 0;
      for (int id : ids) {
        const Tensor<double>& gr = g.grad(id);
        for (size_t i = 0; i < gr.numel(); ++i) (*grad)[o + i] = gr[i];
        o += gr.numel();
      }
    }
    return v;
  };

  double worst = 0;
  for (int t = 0; t < trials; ++t) {
    Tensor<double> p({total});
    for (size_t i = 0; i < total; ++i) p[i] = rng.uniform(lo, hi);
    worst = std::max(worst, grad_check<double>(fn, p, 1e-6));
  }
  return worst;
}

double check_full_loss(int trials, Rng& rng) {
  AttributeSchema schema;
  schema.k = 4;
  schema.l = 2;
  schema.names = {"a0", "a1", "b0", "b1"};
  schema.group_of = {1, 1, 2, 2};
  schema.group_names = {"group1", "group2"};

  model::ModelConfig cfg;
  cfg.input_size = 6;
  cfg.channels = {4};
  model::LossWeights w{0.05, 0.01, 0.2};
  model::Toggles full{true, true, true, true};

  Tensor<double> phi({2, 4});
  phi.data = {0.9, 0.1, 0.8, 0.2, 0.1, 0.9, 0.15, 0.85};

  double worst = 0;
  for (int t = 0; t < trials; ++t) {
    auto params = model::ModelParams<double>::init(cfg, schema.k, rng.next());
    Tensor<double> img({3, 6, 6});
    for (auto& v : img.data) v = rng.uniform(0.0, 1.0);

    size_t total = 0;
    params.visit([&](const std::string&, Tensor<double>& x) { total += x.numel(); });
    Tensor<double> point({total});
    size_t off = 0;
    params.visit([&](const std::string&, Tensor<double>& x) {
      for (size_t i = 0; i < x.numel(); ++i) point[off + i] = x[i];
      off += x.numel();
    });

    GradFn<double> fn = [&](const Tensor<double>& x, Tensor<double>* grad) -> double {
      model::ModelParams<double> p = params;
      size_t o = 0;
      p.visit([&](const std::string&, Tensor<double>& tt) {
        for (size_t i = 0; i < tt.numel(); ++i) tt[i] = x[o + i];
        o += tt.numel();
      });
      auto pass = model::training_pass(p, img, false, phi, t % 2, schema, full, w);
      if (grad) {
        pass.backward();
        *grad = Tensor<double>({x.numel()});
        size_t go = 0;
        for (size_t s = 0; s < pass.param_nodes.size(); ++s) {
          const Tensor<double>& g = pass.param_grad(s);
          for (size_t i = 0; i < g.numel(); ++i) (*grad)[go + i] = g[i];
          go += g.numel();
        }
      }
      return pass.breakdown.total;
    };
    worst = std::max(worst, grad_check<double>(fn, point, 1e-6));
  }
  return worst;
}

}  // namespace

std::vector<GradCheckRow> run_gradcheck_suite(int trials, uint64_t seed) {
  Rng rng(seed);
  std::vector<GradCheckRow> rows;
  auto add = [&](const std::string& op, const Shapes& shapes, const Builder& b, double lo = -1,
                 double hi = 1, double threshold = 1e-5) {
    rows.push_back(GradCheckRow{op, check_op(shapes, b, trials, rng, lo, hi), threshold});
  };

  add("relu", {{6}}, [](Graph<double>& g, const std::vector<int>& in) {
        return g.sum(g.relu(in[0]));
      },
      0.1, 1.0);
  add("scale", {{5}}, [](Graph<double>& g, const std::vector<int>& in) {
    return g.sum(g.scale(in[0], 1.7));
  });
  add("sum", {{7}}, [](Graph<double>& g, const std::vector<int>& in) { return g.sum(in[0]); });
  add("add", {{5}, {5}}, [](Graph<double>& g, const std::vector<int>& in) {
    return g.sum(g.add(in[0], in[1]));
  });
  add("dot", {{4}, {4}}, [](Graph<double>& g, const std::vector<int>& in) {
    return g.dot(in[0], in[1]);
  });
  add("linear", {{3}, {3, 4}, {2, 4}}, [](Graph<double>& g, const std::vector<int>& in) {
    return g.sum(g.matvec(in[2], g.vecmat(in[0], in[1])));
  });
  add("mean_spatial", {{2, 3, 3}}, [](Graph<double>& g, const std::vector<int>& in) {
    return g.sum(g.mean_spatial(in[0]));
  });
  add("max_spatial", {{2, 3, 3}}, [](Graph<double>& g, const std::vector<int>& in) {
    return g.sum(g.max_spatial(in[0]));
  });
  add("softmax_ce", {{5}}, [](Graph<double>& g, const std::vector<int>& in) {
    return g.softmax_ce(in[0], 2);
  });
  add("mse", {{4}, {4}}, [](Graph<double>& g, const std::vector<int>& in) {
    return g.sq_err_sum(in[0], in[1]);
  });
  add("similarity", {{3, 2, 2}, {2, 3}}, [](Graph<double>& g, const std::vector<int>& in) {
    return g.sum(g.similarity(in[0], in[1]));
  });
  add("group_l21", {{4, 3}}, [](Graph<double>& g, const std::vector<int>& in) {
    return g.group_l21(in[0], {{0, 1}, {2, 3}});
  });
  add("compactness", {{2, 3, 3}}, [](Graph<double>& g, const std::vector<int>& in) {
    return g.compactness(in[0], {Peak{0, 1}, Peak{2, 2}});
  });
  add("bilinear_upsample", {{3, 3}}, [](Graph<double>& g, const std::vector<int>& in) {
    return g.sum(g.upsample_bilinear(in[0], 7, 5));
  });
  add("conv2d", {{1, 2, 4, 4}, {2, 2, 3, 3}, {2}},
      [](Graph<double>& g, const std::vector<int>& in) {
        return g.sum(g.relu(g.conv2d(in[0], in[1], in[2], 2, 1)));
      });

  rows.push_back(GradCheckRow{"full_loss_micro", check_full_loss(trials, rng), 1e-4});
  return rows;
}

}  // namespace apn
