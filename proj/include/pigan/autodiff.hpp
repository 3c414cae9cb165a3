#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pigan/rng.hpp"

namespace pigan::ad {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;

  static Tensor zeros(std::vector<std::size_t> shape);
  std::size_t numel() const {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
  }
};

// Named parameters with their RMSprop accumulators. std::map keeps the
// update order deterministic.
class ParamStore {
public:
  struct Entry {
    Tensor tensor;
    std::vector<double> rms_acc;
  };

  Tensor& create(const std::string& name, std::vector<std::size_t> shape);
  Entry& entry(const std::string& name);
  const Entry& entry(const std::string& name) const;
  Tensor& at(const std::string& name) { return entry(name).tensor; }
  const Tensor& at(const std::string& name) const { return entry(name).tensor; }
  bool contains(const std::string& name) const { return entries_.count(name) > 0; }
  void clear_grads();
  std::map<std::string, Entry>& entries() { return entries_; }
  const std::map<std::string, Entry>& entries() const { return entries_; }
  double grad_norm() const;
  double value_norm() const;

private:
  std::map<std::string, Entry> entries_;
};

// acc <- decay*acc + (1-decay)*g^2 ; p <- p - lr*g/(sqrt(acc)+eps) ; g <- 0
void rmsprop_step(ParamStore& params, double lr, double decay, double eps);

// Define-by-run reverse-mode tape. Nodes are appended in execution order
// (which is therefore a topological order) and freed with the tape; one
// tape lives for one training step.
class Tape {
public:
  using Id = std::int32_t;

  Id input(Tensor t);
  Id param(ParamStore& store, const std::string& name);
  // parameter snapshot without gradient tracking (e.g. the discriminator
  // during a generator update)
  Id frozen(const ParamStore& store, const std::string& name);

  // y = x * w + b with x (B,in), w (in,out), b (out)
  Id affine(Id x, Id w, Id b);
  Id add(Id a, Id b);
  Id mul(Id a, Id b);
  // y = a*x + b elementwise with scalar constants
  Id affine_scalar(Id x, double a, double b);
  Id leaky_relu(Id x, double slope);
  // per-sample normalization over features; var_floor keeps 1/sqrt bounded
  Id layer_norm(Id x, Id gamma, Id shift, double var_floor = 1e-5);
  Id dropout(Id x, double rate, Rng& rng, bool train_mode);
  Id sigmoid(Id x);
  Id softplus(Id x);
  Id log_floor(Id x, double floor);
  Id mean_all(Id x);

  // extension point for the physics nodes
  Id custom(Tensor value, std::vector<Id> parents,
            std::function<void(Tape&, Id)> backprop);

  const Tensor& val(Id id) const { return nodes_[id].value; }
  bool needs_grad(Id id) const { return nodes_[id].needs_grad; }
  std::vector<double>& grad_buf(Id id);

  // Reverse accumulation from a scalar root. A second call on the same tape
  // is an error; parts of the graph not reachable from the root simply keep
  // zero gradients.
  void backward(Id root);

  // Smallest distance to a non-smooth point (activation kinks, hinge and
  // eigenvalue thresholds) seen while building the graph. The finite-
  // difference harness rejects probe points with a small margin.
  double kink_margin() const { return kink_margin_; }
  void note_kink(double margin);

private:
  struct Node {
    Tensor value;
    bool needs_grad = false;
    std::function<void(Tape&, Id)> backprop;
    ParamStore::Entry* bound_param = nullptr;
  };

  Id push(Node node);

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  double kink_margin_ = 1e300;
  bool ran_backward_ = false;
};

// Layer descriptions for plain MLP stacks (the discriminator; generator
// trunks are wired explicitly because of the residual skip).
struct LayerSpec {
  enum class Kind { Affine, LeakyReLU, LayerNorm, Dropout, Sigmoid, Softplus };
  Kind kind;
  std::size_t in = 0;
  std::size_t out = 0;     // Affine
  std::size_t width = 0;   // LayerNorm
  double rate = 0.0;       // Dropout
  double slope = 0.2;      // LeakyReLU
};

LayerSpec affine_layer(std::size_t in, std::size_t out);
LayerSpec leaky_relu_layer(double slope);
LayerSpec layer_norm_layer(std::size_t width);
LayerSpec dropout_layer(double rate);
LayerSpec sigmoid_layer();
LayerSpec softplus_layer();

// Parameters are named "<prefix>.<layer_index>.w|b|g|s" and created in layer
// order; initialization draws from rng in that same order (He-normal weights,
// zero biases, unit gains).
void init_mlp(ParamStore& store, const std::string& prefix,
              const std::vector<LayerSpec>& net, Rng& rng);

Tape::Id mlp_forward(Tape& tape, const std::vector<LayerSpec>& net,
                     ParamStore& store, const std::string& prefix, Tape::Id x,
                     bool train_mode, Rng& rng, bool trainable = true);

// Tape-free eval-mode forward pass for sampling and benchmarking.
std::vector<double> mlp_infer(const std::vector<LayerSpec>& net,
                              const ParamStore& store, const std::string& prefix,
                              const std::vector<double>& x, std::size_t batch);

}  // namespace pigan::ad
