#include "pigan/autodiff.hpp"

#include <cmath>
#include <stdexcept>

#include "pigan/gemm.hpp"

namespace pigan::ad {

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  Tensor t;
  t.shape = std::move(shape);
  t.values.assign(t.numel(), 0.0);
  return t;
}

Tensor& ParamStore::create(const std::string& name, std::vector<std::size_t> shape) {
  if (entries_.count(name))
    throw std::invalid_argument("ParamStore: duplicate parameter " + name);
  Entry& e = entries_[name];
  e.tensor = Tensor::zeros(std::move(shape));
  e.tensor.requires_grad = true;
  e.tensor.grad.assign(e.tensor.numel(), 0.0);
  e.rms_acc.assign(e.tensor.numel(), 0.0);
  return e.tensor;
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end())
    throw std::invalid_argument("ParamStore: unknown parameter " + name);
  return it->second;
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end())
    throw std::invalid_argument("ParamStore: unknown parameter " + name);
  return it->second;
}

void ParamStore::clear_grads() {
  for (auto& [name, e] : entries_)
    std::fill(e.tensor.grad.begin(), e.tensor.grad.end(), 0.0);
}

double ParamStore::grad_norm() const {
  double s = 0.0;
  for (const auto& [name, e] : entries_)
    for (double g : e.tensor.grad) s += g * g;
  return std::sqrt(s);
}

double ParamStore::value_norm() const {
  double s = 0.0;
  for (const auto& [name, e] : entries_)
    for (double v : e.tensor.values) s += v * v;
  return std::sqrt(s);
}

void rmsprop_step(ParamStore& params, double lr, double decay, double eps) {
  for (auto& [name, e] : params.entries()) {
    for (std::size_t i = 0; i < e.tensor.values.size(); ++i) {
      const double g = e.tensor.grad[i];
      e.rms_acc[i] = decay * e.rms_acc[i] + (1.0 - decay) * g * g;
      e.tensor.values[i] -= lr * g / (std::sqrt(e.rms_acc[i]) + eps);
      e.tensor.grad[i] = 0.0;
    }
  }
}

Tape::Id Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::input(Tensor t) {
  Node n;
  n.value = std::move(t);
  n.needs_grad = false;
  return push(std::move(n));
}

Tape::Id Tape::param(ParamStore& store, const std::string& name) {
  ParamStore::Entry& e = store.entry(name);
  Node n;
  n.value = e.tensor;
  n.needs_grad = true;
  n.bound_param = &e;
  return push(std::move(n));
}

Tape::Id Tape::frozen(const ParamStore& store, const std::string& name) {
  Node n;
  n.value = store.entry(name).tensor;
  n.needs_grad = false;
  return push(std::move(n));
}

std::vector<double>& Tape::grad_buf(Id id) {
  auto& g = grads_[id];
  if (g.empty()) g.assign(nodes_[id].value.numel(), 0.0);
  return g;
}

void Tape::note_kink(double margin) {
  if (margin < kink_margin_) kink_margin_ = margin;
}

void Tape::backward(Id root) {
  if (ran_backward_)
    throw std::logic_error("Tape::backward called twice without a fresh tape");
  ran_backward_ = true;
  if (nodes_[root].value.numel() != 1)
    throw std::invalid_argument("Tape::backward: root must be a scalar");
  grads_.assign(nodes_.size(), {});
  grads_[root].assign(1, 1.0);
  for (Id i = root; i >= 0; --i) {
    Node& nd = nodes_[i];
    if (!nd.needs_grad || grads_[i].empty()) continue;
    if (nd.backprop) nd.backprop(*this, i);
    if (nd.bound_param) {
      const auto& g = grads_[i];
      for (std::size_t k = 0; k < g.size(); ++k)
        nd.bound_param->tensor.grad[k] += g[k];
    }
  }
}

Tape::Id Tape::custom(Tensor value, std::vector<Id> parents,
                      std::function<void(Tape&, Id)> backprop) {
  Node n;
  n.value = std::move(value);
  for (Id p : parents) n.needs_grad = n.needs_grad || nodes_[p].needs_grad;
  if (n.needs_grad) n.backprop = std::move(backprop);
  return push(std::move(n));
}

Tape::Id Tape::affine(Id x, Id w, Id b) {
  const Tensor& xv = nodes_[x].value;
  const Tensor& wv = nodes_[w].value;
  const Tensor& bv = nodes_[b].value;
  if (xv.shape.size() != 2 || wv.shape.size() != 2 || xv.shape[1] != wv.shape[0] ||
      bv.numel() != wv.shape[1])
    throw std::invalid_argument("affine: shape mismatch");
  const std::size_t batch = xv.shape[0], in = wv.shape[0], out = wv.shape[1];

  Tensor y = Tensor::zeros({batch, out});
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t j = 0; j < out; ++j) y.values[i * out + j] = bv.values[j];
  gemm_nn(xv.values.data(), wv.values.data(), y.values.data(), batch, in, out);

  return custom(std::move(y), {x, w, b}, [x, w, b, batch, in, out](Tape& t, Id self) {
    const auto& gy = t.grad_buf(self);
    if (t.needs_grad(x))
      gemm_nt(gy.data(), t.val(w).values.data(), t.grad_buf(x).data(), batch, out, in);
    if (t.needs_grad(w))
      gemm_tn(t.val(x).values.data(), gy.data(), t.grad_buf(w).data(), batch, in, out);
    if (t.needs_grad(b)) {
      auto& gb = t.grad_buf(b);
      for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t j = 0; j < out; ++j) gb[j] += gy[i * out + j];
    }
  });
}

Tape::Id Tape::add(Id a, Id b) {
  const Tensor& av = nodes_[a].value;
  const Tensor& bv = nodes_[b].value;
  if (av.numel() != bv.numel()) throw std::invalid_argument("add: shape mismatch");
  Tensor y = av;
  for (std::size_t i = 0; i < y.values.size(); ++i) y.values[i] += bv.values[i];
  return custom(std::move(y), {a, b}, [a, b](Tape& t, Id self) {
    const auto& gy = t.grad_buf(self);
    for (Id p : {a, b}) {
      if (!t.needs_grad(p)) continue;
      auto& gp = t.grad_buf(p);
      for (std::size_t i = 0; i < gy.size(); ++i) gp[i] += gy[i];
    }
  });
}

Tape::Id Tape::mul(Id a, Id b) {
  const Tensor& av = nodes_[a].value;
  const Tensor& bv = nodes_[b].value;
  if (av.numel() != bv.numel()) throw std::invalid_argument("mul: shape mismatch");
  Tensor y = av;
  for (std::size_t i = 0; i < y.values.size(); ++i) y.values[i] *= bv.values[i];
  return custom(std::move(y), {a, b}, [a, b](Tape& t, Id self) {
    const auto& gy = t.grad_buf(self);
    if (t.needs_grad(a)) {
      auto& ga = t.grad_buf(a);
      const auto& bvv = t.val(b).values;
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bvv[i];
    }
    if (t.needs_grad(b)) {
      auto& gb = t.grad_buf(b);
      const auto& avv = t.val(a).values;
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * avv[i];
    }
  });
}

Tape::Id Tape::affine_scalar(Id x, double a, double b) {
  Tensor y = nodes_[x].value;
  for (double& v : y.values) v = a * v + b;
  return custom(std::move(y), {x}, [x, a](Tape& t, Id self) {
    const auto& gy = t.grad_buf(self);
    auto& gx = t.grad_buf(x);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += a * gy[i];
  });
}

Tape::Id Tape::leaky_relu(Id x, double slope) {
  const Tensor& xv = nodes_[x].value;
  Tensor y = xv;
  for (std::size_t i = 0; i < y.values.size(); ++i) {
    note_kink(std::abs(xv.values[i]));
    if (y.values[i] < 0.0) y.values[i] *= slope;
  }
  return custom(std::move(y), {x}, [x, slope](Tape& t, Id self) {
    const auto& gy = t.grad_buf(self);
    auto& gx = t.grad_buf(x);
    const auto& xvv = t.val(x).values;
    for (std::size_t i = 0; i < gy.size(); ++i)
      gx[i] += gy[i] * (xvv[i] >= 0.0 ? 1.0 : slope);
  });
}

Tape::Id Tape::layer_norm(Id x, Id gamma, Id shift, double var_floor) {
  const Tensor& xv = nodes_[x].value;
  if (xv.shape.size() != 2) throw std::invalid_argument("layer_norm: rank-2 input required");
  const std::size_t batch = xv.shape[0], f = xv.shape[1];
  if (nodes_[gamma].value.numel() != f || nodes_[shift].value.numel() != f)
    throw std::invalid_argument("layer_norm: gain/shift width mismatch");

  Tensor y = Tensor::zeros({batch, f});
  auto xhat = std::make_shared<std::vector<double>>(batch * f);
  auto inv_s = std::make_shared<std::vector<double>>(batch);
  auto floored = std::make_shared<std::vector<char>>(batch);
  const auto& g = nodes_[gamma].value.values;
  const auto& s0 = nodes_[shift].value.values;
  for (std::size_t i = 0; i < batch; ++i) {
    const double* row = xv.values.data() + i * f;
    double mu = 0.0;
    for (std::size_t j = 0; j < f; ++j) mu += row[j];
    mu /= static_cast<double>(f);
    double var = 0.0;
    for (std::size_t j = 0; j < f; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(f);
    (*floored)[i] = var <= var_floor;
    const double s = std::sqrt(std::max(var, var_floor));
    (*inv_s)[i] = 1.0 / s;
    for (std::size_t j = 0; j < f; ++j) {
      const double xh = (row[j] - mu) / s;
      (*xhat)[i * f + j] = xh;
      y.values[i * f + j] = xh * g[j] + s0[j];
    }
  }
  return custom(std::move(y), {x, gamma, shift},
                [x, gamma, shift, batch, f, xhat, inv_s, floored](Tape& t, Id self) {
    const auto& gy = t.grad_buf(self);
    const auto& g = t.val(gamma).values;
    if (t.needs_grad(gamma)) {
      auto& gg = t.grad_buf(gamma);
      for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t j = 0; j < f; ++j)
          gg[j] += gy[i * f + j] * (*xhat)[i * f + j];
    }
    if (t.needs_grad(shift)) {
      auto& gs = t.grad_buf(shift);
      for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t j = 0; j < f; ++j) gs[j] += gy[i * f + j];
    }
    if (t.needs_grad(x)) {
      auto& gx = t.grad_buf(x);
      const double inv_f = 1.0 / static_cast<double>(f);
      for (std::size_t i = 0; i < batch; ++i) {
        double mean_h = 0.0, mean_hx = 0.0;
        for (std::size_t j = 0; j < f; ++j) {
          const double h = gy[i * f + j] * g[j];
          mean_h += h;
          mean_hx += h * (*xhat)[i * f + j];
        }
        mean_h *= inv_f;
        mean_hx *= inv_f;
        for (std::size_t j = 0; j < f; ++j) {
          const double h = gy[i * f + j] * g[j];
          double d = h - mean_h;
          // when the variance floor is active the scale is a constant
          if (!(*floored)[i]) d -= (*xhat)[i * f + j] * mean_hx;
          gx[i * f + j] += d * (*inv_s)[i];
        }
      }
    }
  });
}

Tape::Id Tape::dropout(Id x, double rate, Rng& rng, bool train_mode) {
  if (!train_mode || rate == 0.0) return x;
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout: rate must lie in [0,1)");
  const Tensor& xv = nodes_[x].value;
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(xv.numel());
  Tensor y = xv;
  for (std::size_t i = 0; i < y.values.size(); ++i) {
    (*mask)[i] = rng.uniform() >= rate ? keep_scale : 0.0;
    y.values[i] *= (*mask)[i];
  }
  return custom(std::move(y), {x}, [x, mask](Tape& t, Id self) {
    const auto& gy = t.grad_buf(self);
    auto& gx = t.grad_buf(x);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * (*mask)[i];
  });
}

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tape::Id Tape::sigmoid(Id x) {
  Tensor y = nodes_[x].value;
  for (double& v : y.values) v = stable_sigmoid(v);
  return custom(std::move(y), {x}, [x](Tape& t, Id self) {
    const auto& gy = t.grad_buf(self);
    const auto& yv = t.val(self).values;
    auto& gx = t.grad_buf(x);
    for (std::size_t i = 0; i < gy.size(); ++i)
      gx[i] += gy[i] * yv[i] * (1.0 - yv[i]);
  });
}

Tape::Id Tape::softplus(Id x) {
  Tensor y = nodes_[x].value;
  for (double& v : y.values) v = std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
  return custom(std::move(y), {x}, [x](Tape& t, Id self) {
    const auto& gy = t.grad_buf(self);
    const auto& xvv = t.val(x).values;
    auto& gx = t.grad_buf(x);
    for (std::size_t i = 0; i < gy.size(); ++i)
      gx[i] += gy[i] * stable_sigmoid(xvv[i]);
  });
}

Tape::Id Tape::log_floor(Id x, double floor) {
  const Tensor& xv = nodes_[x].value;
  Tensor y = xv;
  for (std::size_t i = 0; i < y.values.size(); ++i) {
    note_kink(std::abs(xv.values[i] - floor));
    y.values[i] = std::log(std::max(xv.values[i], floor));
  }
  return custom(std::move(y), {x, }, [x, floor](Tape& t, Id self) {
    const auto& gy = t.grad_buf(self);
    const auto& xvv = t.val(x).values;
    auto& gx = t.grad_buf(x);
    for (std::size_t i = 0; i < gy.size(); ++i)
      if (xvv[i] > floor) gx[i] += gy[i] / xvv[i];
  });
}

Tape::Id Tape::mean_all(Id x) {
  const Tensor& xv = nodes_[x].value;
  const std::size_t n = xv.numel();
  Tensor y = Tensor::zeros({1});
  double s = 0.0;
  for (double v : xv.values) s += v;
  y.values[0] = s / static_cast<double>(n);
  return custom(std::move(y), {x}, [x, n](Tape& t, Id self) {
    const double g = t.grad_buf(self)[0] / static_cast<double>(n);
    auto& gx = t.grad_buf(x);
    for (std::size_t i = 0; i < n; ++i) gx[i] += g;
  });
}

LayerSpec affine_layer(std::size_t in, std::size_t out) {
  LayerSpec s;
  s.kind = LayerSpec::Kind::Affine;
  s.in = in;
  s.out = out;
  return s;
}
LayerSpec leaky_relu_layer(double slope) {
  LayerSpec s;
  s.kind = LayerSpec::Kind::LeakyReLU;
  s.slope = slope;
  return s;
}
LayerSpec layer_norm_layer(std::size_t width) {
  LayerSpec s;
  s.kind = LayerSpec::Kind::LayerNorm;
  s.width = width;
  return s;
}
LayerSpec dropout_layer(double rate) {
  LayerSpec s;
  s.kind = LayerSpec::Kind::Dropout;
  s.rate = rate;
  return s;
}
LayerSpec sigmoid_layer() {
  LayerSpec s;
  s.kind = LayerSpec::Kind::Sigmoid;
  return s;
}
LayerSpec softplus_layer() {
  LayerSpec s;
  s.kind = LayerSpec::Kind::Softplus;
  return s;
}

static std::string layer_name(const std::string& prefix, std::size_t idx,
                              const char* leaf) {
  return prefix + "." + std::to_string(idx) + "." + leaf;
}

void init_mlp(ParamStore& store, const std::string& prefix,
              const std::vector<LayerSpec>& net, Rng& rng) {
  for (std::size_t l = 0; l < net.size(); ++l) {
    const LayerSpec& spec = net[l];
    if (spec.kind == LayerSpec::Kind::Affine) {
      Tensor& w = store.create(layer_name(prefix, l, "w"), {spec.in, spec.out});
      const double std_dev = std::sqrt(2.0 / static_cast<double>(spec.in));
      for (double& v : w.values) v = rng.gaussian() * std_dev;
      store.create(layer_name(prefix, l, "b"), {spec.out});
    } else if (spec.kind == LayerSpec::Kind::LayerNorm) {
      Tensor& g = store.create(layer_name(prefix, l, "g"), {spec.width});
      std::fill(g.values.begin(), g.values.end(), 1.0);
      store.create(layer_name(prefix, l, "s"), {spec.width});
    }
  }
}

Tape::Id mlp_forward(Tape& tape, const std::vector<LayerSpec>& net,
                     ParamStore& store, const std::string& prefix, Tape::Id x,
                     bool train_mode, Rng& rng, bool trainable) {
  auto leaf = [&](const std::string& name) {
    return trainable ? tape.param(store, name) : tape.frozen(store, name);
  };
  Tape::Id cur = x;
  for (std::size_t l = 0; l < net.size(); ++l) {
    const LayerSpec& spec = net[l];
    switch (spec.kind) {
      case LayerSpec::Kind::Affine:
        cur = tape.affine(cur, leaf(layer_name(prefix, l, "w")),
                          leaf(layer_name(prefix, l, "b")));
        break;
      case LayerSpec::Kind::LeakyReLU:
        cur = tape.leaky_relu(cur, spec.slope);
        break;
      case LayerSpec::Kind::LayerNorm:
        cur = tape.layer_norm(cur, leaf(layer_name(prefix, l, "g")),
                              leaf(layer_name(prefix, l, "s")));
        break;
      case LayerSpec::Kind::Dropout:
        cur = tape.dropout(cur, spec.rate, rng, train_mode);
        break;
      case LayerSpec::Kind::Sigmoid:
        cur = tape.sigmoid(cur);
        break;
      case LayerSpec::Kind::Softplus:
        cur = tape.softplus(cur);
        break;
    }
  }
  return cur;
}

std::vector<double> mlp_infer(const std::vector<LayerSpec>& net,
                              const ParamStore& store, const std::string& prefix,
                              const std::vector<double>& x, std::size_t batch) {
  std::vector<double> cur = x;
  std::size_t width = batch == 0 ? 0 : cur.size() / batch;
  for (std::size_t l = 0; l < net.size(); ++l) {
    const LayerSpec& spec = net[l];
    switch (spec.kind) {
      case LayerSpec::Kind::Affine: {
        const auto& w = store.at(layer_name(prefix, l, "w")).values;
        const auto& b = store.at(layer_name(prefix, l, "b")).values;
        std::vector<double> y(batch * spec.out);
        for (std::size_t i = 0; i < batch; ++i)
          for (std::size_t j = 0; j < spec.out; ++j) y[i * spec.out + j] = b[j];
        gemm_nn(cur.data(), w.data(), y.data(), batch, spec.in, spec.out);
        cur = std::move(y);
        width = spec.out;
        break;
      }
      case LayerSpec::Kind::LeakyReLU:
        for (double& v : cur)
          if (v < 0.0) v *= spec.slope;
        break;
      case LayerSpec::Kind::LayerNorm: {
        const auto& g = store.at(layer_name(prefix, l, "g")).values;
        const auto& s0 = store.at(layer_name(prefix, l, "s")).values;
        for (std::size_t i = 0; i < batch; ++i) {
          double* row = cur.data() + i * width;
          double mu = 0.0;
          for (std::size_t j = 0; j < width; ++j) mu += row[j];
          mu /= static_cast<double>(width);
          double var = 0.0;
          for (std::size_t j = 0; j < width; ++j) var += (row[j] - mu) * (row[j] - mu);
          var /= static_cast<double>(width);
          const double inv_s = 1.0 / std::sqrt(std::max(var, 1e-5));
          for (std::size_t j = 0; j < width; ++j)
            row[j] = (row[j] - mu) * inv_s * g[j] + s0[j];
        }
        break;
      }
      case LayerSpec::Kind::Dropout:
        break;  // eval mode
      case LayerSpec::Kind::Sigmoid:
        for (double& v : cur) v = stable_sigmoid(v);
        break;
      case LayerSpec::Kind::Softplus:
        for (double& v : cur) v = std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
        break;
    }
  }
  return cur;
}

}  // namespace pigan::ad
