#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

// Reverse-mode gradient tape over vector-valued nodes, sized for the
// 2x256 actor/critic MLPs plus the attention embedding. The op set is
// exactly what those networks need: linear maps, ReLU, softmax, means,
// concatenation, and fused heads for the Gaussian policy and PPO loss.
// Nodes are appended in topological order, so backward is a single
// reverse sweep.
namespace rpf::ad {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kTwoPi = 6.28318530717958647692;

using NodeId = int;
using LinearId = int;
using VecParamId = int;

enum class Op {
  constant,
  opaque,  // externally computed value; backward refuses to cross it
  linear,
  relu,
  concat,
  mean,
  stack,
  softmax,
  weighted_sum,
  sum,
  box_squash,
  gaussian_log_prob,
  gaussian_entropy,
  ppo_surrogate,
  squared_error,
  scale_add,
};

class Tape {
 public:
  // Gradient buffers are sized lazily in backward(); registering params
  // for forward-only passes costs nothing.
  LinearId add_linear_param(const Mat& w, const Vec& b) {
    linear_params_.push_back({&w, &b, {}, {}});
    return static_cast<LinearId>(linear_params_.size()) - 1;
  }

  VecParamId add_vector_param(const Vec& v) {
    vector_params_.push_back({&v, {}});
    return static_cast<VecParamId>(vector_params_.size()) - 1;
  }

  NodeId constant(Vec v) { return push(Op::constant, std::move(v), {}); }

  NodeId opaque(Vec v, std::vector<NodeId> inputs) {
    return push(Op::opaque, std::move(v), std::move(inputs));
  }

  NodeId linear(LinearId layer, NodeId x) {
    const auto& p = linear_params_[layer];
    if (p.w->cols() != node(x).value.size())
      throw std::invalid_argument("linear: input size mismatch");
    Vec v = (*p.w) * node(x).value + (*p.b);
    NodeId id = push(Op::linear, std::move(v), {x});
    nodes_[id].param = layer;
    return id;
  }

  NodeId relu(NodeId x) { return push(Op::relu, node(x).value.cwiseMax(0.0), {x}); }

  NodeId concat(NodeId a, NodeId b) {
    Vec v(node(a).value.size() + node(b).value.size());
    v << node(a).value, node(b).value;
    return push(Op::concat, std::move(v), {a, b});
  }

  NodeId mean(std::vector<NodeId> terms) {
    if (terms.empty()) throw std::invalid_argument("mean: empty input set");
    Vec v = Vec::Zero(node(terms[0]).value.size());
    for (NodeId t : terms) v += node(t).value;
    v /= static_cast<double>(terms.size());
    return push(Op::mean, std::move(v), std::move(terms));
  }

  // k one-dimensional nodes -> one k-dimensional node.
  NodeId stack(std::vector<NodeId> scalars) {
    Vec v(scalars.size());
    for (std::size_t i = 0; i < scalars.size(); ++i) {
      if (node(scalars[i]).value.size() != 1)
        throw std::invalid_argument("stack: inputs must be scalars");
      v[i] = node(scalars[i]).value[0];
    }
    return push(Op::stack, std::move(v), std::move(scalars));
  }

  NodeId softmax(NodeId x) {
    const Vec& z = node(x).value;
    Vec v = (z.array() - z.maxCoeff()).exp().matrix();
    v /= v.sum();
    return push(Op::softmax, std::move(v), {x});
  }

  // y = sum_i weights[i] * values[i]; weights is a k-dim node.
  NodeId weighted_sum(NodeId weights, std::vector<NodeId> values) {
    const Vec& w = node(weights).value;
    if (static_cast<std::size_t>(w.size()) != values.size())
      throw std::invalid_argument("weighted_sum: weight count mismatch");
    Vec v = Vec::Zero(node(values[0]).value.size());
    for (std::size_t i = 0; i < values.size(); ++i) v += w[i] * node(values[i]).value;
    std::vector<NodeId> ins{weights};
    ins.insert(ins.end(), values.begin(), values.end());
    return push(Op::weighted_sum, std::move(v), std::move(ins));
  }

  NodeId sum(NodeId x) {
    Vec v(1);
    v[0] = node(x).value.sum();
    return push(Op::sum, std::move(v), {x});
  }

  // Elementwise lo + (hi - lo) * sigmoid(x).
  NodeId box_squash(NodeId x, Vec lo, Vec hi) {
    const Vec& z = node(x).value;
    Vec sig = (1.0 + (-z.array()).exp()).inverse().matrix();
    Vec v = (lo.array() + (hi - lo).array() * sig.array()).matrix();
    NodeId id = push(Op::box_squash, std::move(v), {x});
    nodes_[id].aux = std::move(sig);
    nodes_[id].aux2 = hi - lo;
    return id;
  }

  // Diagonal-Gaussian log density of `action` under N(mean, exp(log_std)^2).
  NodeId gaussian_log_prob(NodeId mean, VecParamId log_std, Vec action) {
    const Vec& mu = node(mean).value;
    const Vec& ls = *vector_params_[log_std].v;
    if (mu.size() != ls.size() || mu.size() != action.size())
      throw std::invalid_argument("gaussian_log_prob: dimension mismatch");
    double lp = -0.5 * mu.size() * std::log(kTwoPi);
    for (Eigen::Index d = 0; d < mu.size(); ++d) {
      const double z = (action[d] - mu[d]) / std::exp(ls[d]);
      lp += -0.5 * z * z - ls[d];
    }
    Vec v(1);
    v[0] = lp;
    NodeId id = push(Op::gaussian_log_prob, std::move(v), {mean});
    nodes_[id].param = log_std;
    nodes_[id].aux = std::move(action);
    return id;
  }

  NodeId gaussian_entropy(VecParamId log_std) {
    const Vec& ls = *vector_params_[log_std].v;
    Vec v(1);
    v[0] = ls.sum() + 0.5 * ls.size() * (1.0 + std::log(kTwoPi));
    NodeId id = push(Op::gaussian_entropy, std::move(v), {});
    nodes_[id].param = log_std;
    return id;
  }

  // min(ratio * A, clip(ratio, 1-eps, 1+eps) * A) with ratio derived from
  // the recorded log-prob; the clipped branch carries zero gradient.
  NodeId ppo_surrogate(NodeId log_prob, double old_log_prob, double advantage, double clip) {
    const double ratio = std::exp(node(log_prob).value[0] - old_log_prob);
    const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
    Vec v(1);
    v[0] = std::min(ratio * advantage, clipped * advantage);
    NodeId id = push(Op::ppo_surrogate, std::move(v), {log_prob});
    nodes_[id].s0 = old_log_prob;
    nodes_[id].s1 = advantage;
    nodes_[id].s2 = ratio;
    return id;
  }

  NodeId squared_error(NodeId value, double target) {
    if (node(value).value.size() != 1)
      throw std::invalid_argument("squared_error: scalar node expected");
    Vec v(1);
    const double e = node(value).value[0] - target;
    v[0] = e * e;
    NodeId id = push(Op::squared_error, std::move(v), {value});
    nodes_[id].s0 = target;
    return id;
  }

  // Scalar linear combination sum_i coeffs[i] * terms[i].
  NodeId scale_add(std::vector<NodeId> terms, Vec coeffs) {
    if (terms.size() != static_cast<std::size_t>(coeffs.size()))
      throw std::invalid_argument("scale_add: coefficient count mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < terms.size(); ++i) {
      if (node(terms[i]).value.size() != 1)
        throw std::invalid_argument("scale_add: scalar nodes expected");
      acc += coeffs[i] * node(terms[i]).value[0];
    }
    Vec v(1);
    v[0] = acc;
    NodeId id = push(Op::scale_add, std::move(v), std::move(terms));
    nodes_[id].aux = std::move(coeffs);
    return id;
  }

  const Vec& value(NodeId id) const { return node(id).value; }
  const Vec& node_grad(NodeId id) const { return node(id).grad; }
  const Mat& grad_w(LinearId id) const { return linear_params_[id].gw; }
  const Vec& grad_b(LinearId id) const { return linear_params_[id].gb; }
  const Vec& grad_vec(VecParamId id) const { return vector_params_[id].g; }
  std::size_t node_count() const { return nodes_.size(); }

  // Accumulates d(loss)/d(param) into the parameter gradient buffers and
  // d(loss)/d(node) into every node's grad.
  void backward(NodeId loss) {
    if (node(loss).value.size() != 1)
      throw std::invalid_argument("backward: loss must be a scalar node");
    for (auto& n : nodes_) n.grad = Vec::Zero(n.value.size());
    for (auto& p : linear_params_) {
      p.gw.setZero(p.w->rows(), p.w->cols());
      p.gb.setZero(p.b->size());
    }
    for (auto& p : vector_params_) p.g.setZero(p.v->size());

    nodes_[loss].grad[0] = 1.0;
    for (NodeId id = loss; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.grad.isZero(0.0)) continue;
      backward_step(n);
    }
  }

  void clear() {
    nodes_.clear();
    linear_params_.clear();
    vector_params_.clear();
  }

 private:
  struct Node {
    Op op;
    Vec value;
    Vec grad;
    std::vector<NodeId> inputs;
    int param = -1;
    Vec aux, aux2;
    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  };

  struct LinearParam {
    const Mat* w;
    const Vec* b;
    Mat gw;
    Vec gb;
  };

  struct VectorParam {
    const Vec* v;
    Vec g;
  };

  Node& node(NodeId id) { return nodes_.at(id); }
  const Node& node(NodeId id) const { return nodes_.at(id); }

  NodeId push(Op op, Vec value, std::vector<NodeId> inputs) {
    Node n;
    n.op = op;
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
  }

  void backward_step(Node& n) {
    const Vec& gy = n.grad;
    switch (n.op) {
      case Op::constant:
        break;
      case Op::opaque:
        if (!n.inputs.empty())
          throw std::logic_error("backward: unsupported node in recorded graph");
        break;
      case Op::linear: {
        auto& p = linear_params_[n.param];
        Node& x = node(n.inputs[0]);
        p.gw.noalias() += gy * x.value.transpose();
        p.gb += gy;
        x.grad.noalias() += p.w->transpose() * gy;
        break;
      }
      case Op::relu: {
        Node& x = node(n.inputs[0]);
        // Subgradient at 0 is 0.
        x.grad.array() += gy.array() * (x.value.array() > 0.0).cast<double>();
        break;
      }
      case Op::concat: {
        Node& a = node(n.inputs[0]);
        Node& b = node(n.inputs[1]);
        a.grad += gy.head(a.value.size());
        b.grad += gy.tail(b.value.size());
        break;
      }
      case Op::mean: {
        const double inv = 1.0 / static_cast<double>(n.inputs.size());
        for (NodeId t : n.inputs) node(t).grad += inv * gy;
        break;
      }
      case Op::stack: {
        for (std::size_t i = 0; i < n.inputs.size(); ++i) node(n.inputs[i]).grad[0] += gy[i];
        break;
      }
      case Op::softmax: {
        Node& x = node(n.inputs[0]);
        const Vec& y = n.value;
        const double dot = gy.dot(y);
        x.grad.array() += y.array() * (gy.array() - dot);
        break;
      }
      case Op::weighted_sum: {
        Node& w = node(n.inputs[0]);
        for (std::size_t i = 1; i < n.inputs.size(); ++i) {
          Node& v = node(n.inputs[i]);
          w.grad[i - 1] += gy.dot(v.value);
          v.grad += w.value[i - 1] * gy;
        }
        break;
      }
      case Op::sum: {
        node(n.inputs[0]).grad.array() += gy[0];
        break;
      }
      case Op::box_squash: {
        Node& x = node(n.inputs[0]);
        x.grad.array() +=
            gy.array() * n.aux2.array() * n.aux.array() * (1.0 - n.aux.array());
        break;
      }
      case Op::gaussian_log_prob: {
        Node& mu = node(n.inputs[0]);
        auto& ls = vector_params_[n.param];
        const double g = gy[0];
        for (Eigen::Index d = 0; d < mu.value.size(); ++d) {
          const double sd = std::exp((*ls.v)[d]);
          const double z = (n.aux[d] - mu.value[d]) / sd;
          mu.grad[d] += g * z / sd;
          ls.g[d] += g * (z * z - 1.0);
        }
        break;
      }
      case Op::gaussian_entropy: {
        vector_params_[n.param].g.array() += gy[0];
        break;
      }
      case Op::ppo_surrogate: {
        // Gradient flows only through the unclipped branch when it attains
        // the min (ties included); the clipped branch is constant in theta.
        const double ratio = n.s2;
        const double adv = n.s1;
        if (ratio * adv == n.value[0]) node(n.inputs[0]).grad[0] += gy[0] * adv * ratio;
        break;
      }
      case Op::squared_error: {
        Node& v = node(n.inputs[0]);
        v.grad[0] += gy[0] * 2.0 * (v.value[0] - n.s0);
        break;
      }
      case Op::scale_add: {
        for (std::size_t i = 0; i < n.inputs.size(); ++i)
          node(n.inputs[i]).grad[0] += gy[0] * n.aux[i];
        break;
      }
      default:
        throw std::logic_error("backward: unsupported node in recorded graph");
    }
  }

  std::vector<Node> nodes_;
  std::vector<LinearParam> linear_params_;
  std::vector<VectorParam> vector_params_;
};

}  // namespace rpf::ad
