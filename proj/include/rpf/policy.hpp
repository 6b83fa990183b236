#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rpf/autodiff.hpp"
#include "rpf/rng.hpp"
#include "rpf/world.hpp"

namespace rpf {

using ad::Mat;
using ad::Vec;

struct NetArch {
  int embed_dim = 64;
  std::vector<int> hidden{256, 256};
  int action_dim = 2;
  int obs_loc_dim = 4;
  int neighbor_dim = 3;

  int combined_obs_dim() const { return obs_loc_dim + embed_dim; }

  void validate() const {
    if (embed_dim < 1 || action_dim < 1 || obs_loc_dim < 1 || neighbor_dim < 1)
      throw std::invalid_argument("NetArch: widths must be >= 1");
    for (int h : hidden)
      if (h < 1) throw std::invalid_argument("NetArch: hidden widths must be >= 1");
  }

  bool operator==(const NetArch&) const = default;
};

struct ActionBox {
  Vec lo;
  Vec hi;

  static ActionBox apf_gains() {
    ActionBox b;
    b.lo = Vec::Zero(2);
    b.hi = Vec(2);
    b.hi << 0.1, 5.0;
    return b;
  }

  static ActionBox steering(double bound = 2.5) {
    ActionBox b;
    b.lo = Vec::Constant(1, -bound);
    b.hi = Vec::Constant(1, bound);
    return b;
  }
};

struct LinearLayer {
  Mat w;
  Vec b;
};

// All weights of the embedding networks, actor and critic MLPs, and the
// state-independent action log-std. Actor and critic share the embedding.
struct PolicyParams {
  NetArch arch;
  ActionBox box;
  LinearLayer embed_e;  // phi_e: (o_loc ++ w_j) -> embed_dim
  LinearLayer embed_h;  // psi_h: embed_dim -> embed_dim
  LinearLayer embed_b;  // psi_b: (e_j ++ e_m) -> 1 (attention score)
  std::vector<LinearLayer> actor_trunk;
  LinearLayer actor_head;  // hidden -> action_dim (pre-squash)
  std::vector<LinearLayer> critic_trunk;
  LinearLayer critic_head;  // hidden -> 1
  Vec log_std;
};

// Canonical tensor order, shared by the optimizer, gradient collection,
// and the checkpoint format.
template <typename F>
void visit_layers(PolicyParams& p, F&& f) {
  f(p.embed_e);
  f(p.embed_h);
  f(p.embed_b);
  for (auto& l : p.actor_trunk) f(l);
  f(p.actor_head);
  for (auto& l : p.critic_trunk) f(l);
  f(p.critic_head);
}

template <typename F>
void visit_layers(const PolicyParams& p, F&& f) {
  visit_layers(const_cast<PolicyParams&>(p), [&](LinearLayer& l) { f(std::as_const(l)); });
}

// Scaled-uniform fan-in initialization, biases zero, log-std at
// log(0.25 * box width) per dimension. Deterministic in the seed.
inline PolicyParams init_network(const NetArch& arch, const ActionBox& box, std::uint64_t seed) {
  arch.validate();
  if (box.lo.size() != arch.action_dim || box.hi.size() != arch.action_dim)
    throw std::invalid_argument("init_network: action box dimension mismatch");
  Rng rng(seed);
  auto make_layer = [&](int out, int in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    LinearLayer layer;
    layer.w = Mat::NullaryExpr(out, in, [&]() { return rng.uniform(-bound, bound); });
    layer.b = Vec::Zero(out);
    return layer;
  };

  PolicyParams p;
  p.arch = arch;
  p.box = box;
  p.embed_e = make_layer(arch.embed_dim, arch.obs_loc_dim + arch.neighbor_dim);
  p.embed_h = make_layer(arch.embed_dim, arch.embed_dim);
  p.embed_b = make_layer(1, 2 * arch.embed_dim);
  int in = arch.combined_obs_dim();
  for (int h : arch.hidden) {
    p.actor_trunk.push_back(make_layer(h, in));
    in = h;
  }
  p.actor_head = make_layer(arch.action_dim, in);
  in = arch.combined_obs_dim();
  for (int h : arch.hidden) {
    p.critic_trunk.push_back(make_layer(h, in));
    in = h;
  }
  p.critic_head = make_layer(1, in);
  p.log_std = ((box.hi - box.lo) * 0.25).array().log().matrix();
  return p;
}

enum class EmbedMode { attention, mean_pool };

inline std::string to_string(EmbedMode m) {
  return m == EmbedMode::attention ? "attention" : "mean_pool";
}

// Policy-side view of an Observation: features scaled to roughly [-1, 1]
// (distances by d_r, goal distance by d_m, angles by pi).
struct PolicyInput {
  Vec o_loc;                   // [d_o/d_r, phi_o/pi, d_g/d_m, phi_g/pi]
  std::vector<Vec> neighbors;  // per neighbor [d_j/d_r, phi_j/pi, psi_j/pi]
};

inline PolicyInput normalize_observation(const Observation& obs, double detection_range,
                                         double reward_range) {
  PolicyInput in;
  in.o_loc = Vec(4);
  in.o_loc << obs.obstacle_dist / detection_range, obs.obstacle_azimuth / kPi,
      obs.goal_dist / reward_range, obs.goal_azimuth / kPi;
  for (const NeighborFeature& f : obs.neighbors) {
    Vec w(3);
    w << f.distance / detection_range, f.azimuth / kPi, f.relative_heading / kPi;
    in.neighbors.push_back(std::move(w));
  }
  return in;
}

struct EmbeddingActivations {
  std::vector<Vec> per_neighbor_e;
  std::vector<Vec> per_neighbor_h;
  Vec mean_embedding;              // e_m (empty when no neighbors)
  std::vector<double> scores;      // b_j
  std::vector<double> attention;   // softmax(b_j) (or uniform in mean_pool mode)
  Vec context;                     // c_i
  Vec combined;                    // o_hat = o_loc ++ c_i
};

// Records policy forwards on a tape bound to one parameter snapshot.
// Registration order matches visit_layers so gradients line up with the
// optimizer's tensor list.
class PolicyGraph {
 public:
  PolicyGraph(ad::Tape& tape, const PolicyParams& params) : tape_(tape), params_(params) {
    visit_layers(params, [&](const LinearLayer& l) {
      layer_ids_.push_back(tape_.add_linear_param(l.w, l.b));
    });
    log_std_id_ = tape_.add_vector_param(params.log_std);
  }

  // Attention-pooled observation embedding; returns the o_hat node.
  ad::NodeId embed(const PolicyInput& in, EmbedMode mode,
                   EmbeddingActivations* activations = nullptr) {
    const auto& arch = params_.arch;
    if (in.o_loc.size() != arch.obs_loc_dim)
      throw std::invalid_argument("embed: o_loc dimension mismatch");
    ad::NodeId o_loc = tape_.constant(in.o_loc);

    ad::NodeId context;
    std::vector<ad::NodeId> e_nodes, h_nodes;
    if (in.neighbors.empty()) {
      context = tape_.constant(Vec::Zero(arch.embed_dim));
    } else {
      for (const Vec& w : in.neighbors) {
        if (w.size() != arch.neighbor_dim)
          throw std::invalid_argument("embed: neighbor feature dimension mismatch");
        ad::NodeId ew = tape_.concat(o_loc, tape_.constant(w));
        ad::NodeId e = tape_.relu(tape_.linear(layer_ids_[0], ew));
        e_nodes.push_back(e);
        h_nodes.push_back(tape_.relu(tape_.linear(layer_ids_[1], e)));
      }
      ad::NodeId e_m = tape_.mean(e_nodes);
      std::vector<ad::NodeId> score_nodes;
      for (ad::NodeId e : e_nodes)
        score_nodes.push_back(tape_.relu(tape_.linear(layer_ids_[2], tape_.concat(e, e_m))));
      ad::NodeId weights;
      if (mode == EmbedMode::attention) {
        weights = tape_.softmax(tape_.stack(score_nodes));
      } else {
        const double k = static_cast<double>(in.neighbors.size());
        weights = tape_.constant(Vec::Constant(in.neighbors.size(), 1.0 / k));
      }
      context = tape_.weighted_sum(weights, h_nodes);
      if (activations) {
        activations->mean_embedding = tape_.value(e_m);
        for (std::size_t j = 0; j < e_nodes.size(); ++j) {
          activations->per_neighbor_e.push_back(tape_.value(e_nodes[j]));
          activations->per_neighbor_h.push_back(tape_.value(h_nodes[j]));
          activations->scores.push_back(tape_.value(score_nodes[j])[0]);
          activations->attention.push_back(tape_.value(weights)[j]);
        }
      }
    }
    ad::NodeId o_hat = tape_.concat(o_loc, context);
    if (activations) {
      activations->context = tape_.value(context);
      activations->combined = tape_.value(o_hat);
    }
    return o_hat;
  }

  // Squashed action mean in the box.
  ad::NodeId actor_mean(ad::NodeId o_hat) {
    ad::NodeId x = o_hat;
    const std::size_t base = 3;  // embed layers occupy ids 0..2
    for (std::size_t i = 0; i < params_.actor_trunk.size(); ++i)
      x = tape_.relu(tape_.linear(layer_ids_[base + i], x));
    x = tape_.linear(layer_ids_[base + params_.actor_trunk.size()], x);
    return tape_.box_squash(x, params_.box.lo, params_.box.hi);
  }

  // Scalar state-value estimate.
  ad::NodeId critic_value(ad::NodeId o_hat) {
    ad::NodeId x = o_hat;
    const std::size_t base = 4 + params_.actor_trunk.size();
    for (std::size_t i = 0; i < params_.critic_trunk.size(); ++i)
      x = tape_.relu(tape_.linear(layer_ids_[base + i], x));
    return tape_.linear(layer_ids_[base + params_.critic_trunk.size()], x);
  }

  ad::NodeId log_prob(ad::NodeId mean, const Vec& action) {
    return tape_.gaussian_log_prob(mean, log_std_id_, action);
  }

  ad::NodeId entropy() { return tape_.gaussian_entropy(log_std_id_); }

  const std::vector<ad::LinearId>& layer_ids() const { return layer_ids_; }
  ad::VecParamId log_std_id() const { return log_std_id_; }

 private:
  ad::Tape& tape_;
  const PolicyParams& params_;
  std::vector<ad::LinearId> layer_ids_;
  ad::VecParamId log_std_id_ = -1;
};

struct ActionDistribution {
  Vec mean;  // inside the action box
  Vec std;   // exp(log_std), positive
};

inline EmbeddingActivations embed(const PolicyInput& in, const PolicyParams& params,
                                  EmbedMode mode = EmbedMode::attention) {
  ad::Tape tape;
  PolicyGraph graph(tape, params);
  EmbeddingActivations act;
  graph.embed(in, mode, &act);
  return act;
}

inline ActionDistribution actor_forward(const PolicyInput& in, const PolicyParams& params,
                                        EmbedMode mode = EmbedMode::attention) {
  ad::Tape tape;
  PolicyGraph graph(tape, params);
  ActionDistribution dist;
  dist.mean = tape.value(graph.actor_mean(graph.embed(in, mode)));
  dist.std = params.log_std.array().exp().matrix();
  return dist;
}

inline double critic_forward(const PolicyInput& in, const PolicyParams& params,
                             EmbedMode mode = EmbedMode::attention) {
  ad::Tape tape;
  PolicyGraph graph(tape, params);
  return tape.value(graph.critic_value(graph.embed(in, mode)))[0];
}

// Both heads from one shared embedding (a single forward pass).
inline std::pair<ActionDistribution, double> actor_critic_forward(
    const PolicyInput& in, const PolicyParams& params, EmbedMode mode = EmbedMode::attention) {
  ad::Tape tape;
  PolicyGraph graph(tape, params);
  ad::NodeId o_hat = graph.embed(in, mode);
  ActionDistribution dist;
  dist.mean = tape.value(graph.actor_mean(o_hat));
  dist.std = params.log_std.array().exp().matrix();
  return {dist, tape.value(graph.critic_value(o_hat))[0]};
}

inline double gaussian_log_density(const Vec& x, const Vec& mean, const Vec& std) {
  double lp = -0.5 * x.size() * std::log(ad::kTwoPi);
  for (Eigen::Index d = 0; d < x.size(); ++d) {
    const double z = (x[d] - mean[d]) / std[d];
    lp += -0.5 * z * z - std::log(std[d]);
  }
  return lp;
}

struct SampledAction {
  Vec action;       // clipped into the box
  double log_prob;  // Gaussian log-density of the pre-clip draw
};

inline SampledAction sample_action(const ActionDistribution& dist, const ActionBox& box,
                                   Rng& rng) {
  Vec raw(dist.mean.size());
  for (Eigen::Index d = 0; d < raw.size(); ++d)
    raw[d] = dist.mean[d] + dist.std[d] * rng.normal();
  SampledAction out;
  out.log_prob = gaussian_log_density(raw, dist.mean, dist.std);
  out.action = raw.cwiseMax(box.lo).cwiseMin(box.hi);
  return out;
}

// Deterministic evaluation mode: the mean with its own log-density.
inline SampledAction mean_action(const ActionDistribution& dist) {
  SampledAction out;
  out.action = dist.mean;
  out.log_prob = gaussian_log_density(dist.mean, dist.mean, dist.std);
  return out;
}

}  // namespace rpf
