#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rpf/apf.hpp"
#include "rpf/policy.hpp"
#include "rpf/scenario.hpp"
#include "rpf/steering.hpp"
#include "rpf/world.hpp"

namespace rpf {

struct PpoConfig {
  double clip = 0.2;           // epsilon
  double gamma = 0.999;        // discount
  double gae_tau = 0.9;        // GAE smoothing parameter
  double value_coef = 0.5;     // c_1
  double entropy_coef = 0.001; // c_2
  double lr_init = 3e-4;       // alpha_0
  double lr_decay = 0.999;     // beta, per-episode
  int batch_interval = 100;    // Z, environment steps between updates
  int epochs = 1;              // K
  int episodes = 1000;
  double grad_clip = 0.5;      // global gradient-norm bound
  int checkpoint_every = 100;  // episodes between periodic checkpoints

  void validate() const {
    if (clip <= 0 || clip >= 1) throw std::invalid_argument("PpoConfig: clip must be in (0,1)");
    if (gamma <= 0 || gamma >= 1 || gae_tau <= 0 || gae_tau >= 1)
      throw std::invalid_argument("PpoConfig: gamma and gae_tau must be in (0,1)");
    if (batch_interval < 1) throw std::invalid_argument("PpoConfig: batch_interval must be >= 1");
    if (epochs < 1) throw std::invalid_argument("PpoConfig: epochs must be >= 1");
    if (episodes < 1) throw std::invalid_argument("PpoConfig: episodes must be >= 1");
    if (lr_init <= 0 || lr_decay <= 0 || lr_decay > 1)
      throw std::invalid_argument("PpoConfig: bad learning-rate schedule");
  }
};

inline double lr_schedule(double lr_init, double decay, int episode) {
  if (episode < 0) throw std::invalid_argument("lr_schedule: negative episode");
  return lr_init * std::pow(decay, episode);
}

struct Transition {
  int robot = 0;
  PolicyInput input;
  Vec action;
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;
  bool done = false;  // reached/collided/timeout boundary
  int step = 0;
};

// Per-robot transition sequences collected between updates.
struct RolloutBuffer {
  std::vector<std::vector<Transition>> per_robot;
  int total = 0;

  explicit RolloutBuffer(int n_robots = 0) : per_robot(n_robots) {}

  void add(Transition t) {
    per_robot.at(t.robot).push_back(std::move(t));
    ++total;
  }

  void clear() {
    for (auto& v : per_robot) v.clear();
    total = 0;
  }
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// Generalized advantage estimation over one robot's temporally ordered
// transitions. delta_t = r_t + gamma*V(s_{t+1})*(1-done_t) - V(s_t),
// A_t = sum_k (gamma*tau)^k delta_{t+k} truncated at done boundaries;
// the bootstrap value stands in for V(s_{t+1}) past the window end.
// Advantages are returned raw; update() standardizes per batch.
inline GaeResult compute_gae(std::span<const Transition> transitions, double gamma, double tau,
                             double bootstrap_value) {
  if (transitions.empty()) throw std::invalid_argument("compute_gae: empty transition sequence");
  const int n = static_cast<int>(transitions.size());
  GaeResult out;
  out.advantages.resize(n);
  out.returns.resize(n);
  double next_advantage = 0.0;
  for (int t = n - 1; t >= 0; --t) {
    const Transition& tr = transitions[t];
    const double next_value = (t == n - 1) ? bootstrap_value : transitions[t + 1].value;
    const double nonterminal = tr.done ? 0.0 : 1.0;
    const double delta = tr.reward + gamma * next_value * nonterminal - tr.value;
    next_advantage = delta + gamma * tau * nonterminal * next_advantage;
    out.advantages[t] = next_advantage;
    out.returns[t] = next_advantage + tr.value;
  }
  return out;
}

struct BatchSample {
  const Transition* transition;
  double advantage = 0.0;  // standardized before the loss
  double ret = 0.0;
};

struct PpoLossValue {
  double total = 0.0;
  double surrogate_mean = 0.0;  // mean of the clipped surrogate (pre-negation)
  double value_loss = 0.0;      // mean squared value error
  double entropy = 0.0;
  std::vector<double> ratios;
};

namespace detail {

struct LossNodes {
  ad::NodeId loss;
  PpoLossValue value;
};

// Records the full PPO objective for one batch on the given tape:
// -mean(min(ratio*A, clip(ratio)*A)) + c1*mean((V-ret)^2) - c2*entropy.
inline LossNodes build_ppo_loss(ad::Tape& tape, PolicyGraph& graph,
                                std::span<const BatchSample> batch, const PpoConfig& cfg,
                                EmbedMode mode) {
  if (batch.empty()) throw std::invalid_argument("ppo_loss: empty batch");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  std::vector<ad::NodeId> terms;
  Vec coeffs(2 * batch.size() + 1);
  LossNodes out;
  out.value.ratios.reserve(batch.size());

  int k = 0;
  for (const BatchSample& s : batch) {
    const Transition& tr = *s.transition;
    ad::NodeId o_hat = graph.embed(tr.input, mode);
    ad::NodeId mean = graph.actor_mean(o_hat);
    ad::NodeId v = graph.critic_value(o_hat);
    ad::NodeId lp = graph.log_prob(mean, tr.action);
    out.value.ratios.push_back(std::exp(tape.value(lp)[0] - tr.log_prob));
    terms.push_back(tape.ppo_surrogate(lp, tr.log_prob, s.advantage, cfg.clip));
    coeffs[k++] = -inv_b;
    terms.push_back(tape.squared_error(v, s.ret));
    coeffs[k++] = cfg.value_coef * inv_b;
    out.value.surrogate_mean += tape.value(terms[terms.size() - 2])[0] * inv_b;
    out.value.value_loss += tape.value(terms.back())[0] * inv_b;
  }
  ad::NodeId entropy = graph.entropy();
  terms.push_back(entropy);
  coeffs[k++] = -cfg.entropy_coef;
  out.value.entropy = tape.value(entropy)[0];

  out.loss = tape.scale_add(std::move(terms), std::move(coeffs));
  out.value.total = tape.value(out.loss)[0];
  return out;
}

}  // namespace detail

// Loss evaluation without a gradient step (testing / diagnostics).
inline PpoLossValue ppo_loss(std::span<const BatchSample> batch, const PolicyParams& params,
                             const PpoConfig& cfg, EmbedMode mode = EmbedMode::attention) {
  ad::Tape tape;
  PolicyGraph graph(tape, params);
  return detail::build_ppo_loss(tape, graph, batch, cfg, mode).value;
}

// First-order adaptive-moment optimizer over the canonical tensor list.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // grads come flattened in the visit_layers order (w, b per layer, then
  // log_std); moment buffers are created on first use.
  void step(PolicyParams& params, const std::vector<Vec>& grads, double lr) {
    std::vector<double*> tensors;
    std::vector<Eigen::Index> sizes;
    visit_layers(params, [&](LinearLayer& l) {
      tensors.push_back(l.w.data());
      sizes.push_back(l.w.size());
      tensors.push_back(l.b.data());
      sizes.push_back(l.b.size());
    });
    tensors.push_back(params.log_std.data());
    sizes.push_back(params.log_std.size());
    if (tensors.size() != grads.size())
      throw std::invalid_argument("AdamOptimizer: gradient tensor count mismatch");

    if (m_.empty()) {
      for (std::size_t i = 0; i < grads.size(); ++i) {
        m_.push_back(Vec::Zero(sizes[i]));
        v_.push_back(Vec::Zero(sizes[i]));
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < grads.size(); ++i) {
      Eigen::Map<Eigen::ArrayXd> x(tensors[i], sizes[i]);
      const auto& g = grads[i].array();
      m_[i].array() = beta1_ * m_[i].array() + (1.0 - beta1_) * g;
      v_[i].array() = beta2_ * v_[i].array() + (1.0 - beta2_) * g.square();
      x -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + eps_);
    }
  }

  std::int64_t step_count() const { return t_; }
  const std::vector<Vec>& first_moments() const { return m_; }
  const std::vector<Vec>& second_moments() const { return v_; }

  void restore(std::vector<Vec> m, std::vector<Vec> v, std::int64_t t) {
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = t;
  }

 private:
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Vec> m_;
  std::vector<Vec> v_;
};

struct UpdateStats {
  double loss_total = 0.0;
  double surrogate = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;  // pre-clip global norm of the last epoch
  int samples = 0;
};

// One PPO update over the pooled transitions of all robots (parameter
// sharing): GAE per robot against the supplied bootstrap values, batch
// advantage standardization, K epochs of clipped-surrogate descent.
// Throws on non-finite ratios or gradients, leaving params untouched by
// the offending epoch.
inline UpdateStats update(PolicyParams& params, RolloutBuffer& buffer,
                          std::span<const double> bootstrap_values, const PpoConfig& cfg,
                          AdamOptimizer& optimizer, double lr,
                          EmbedMode mode = EmbedMode::attention) {
  if (buffer.total < 1) throw std::invalid_argument("update: empty rollout buffer");
  if (bootstrap_values.size() != buffer.per_robot.size())
    throw std::invalid_argument("update: bootstrap count mismatch");

  std::vector<BatchSample> batch;
  batch.reserve(buffer.total);
  for (std::size_t i = 0; i < buffer.per_robot.size(); ++i) {
    const auto& ts = buffer.per_robot[i];
    if (ts.empty()) continue;
    GaeResult gae = compute_gae(ts, cfg.gamma, cfg.gae_tau, bootstrap_values[i]);
    for (std::size_t t = 0; t < ts.size(); ++t)
      batch.push_back({&ts[t], gae.advantages[t], gae.returns[t]});
  }

  double mean = 0.0;
  for (const auto& s : batch) mean += s.advantage;
  mean /= static_cast<double>(batch.size());
  double var = 0.0;
  for (const auto& s : batch) var += (s.advantage - mean) * (s.advantage - mean);
  const double stdev = std::sqrt(var / static_cast<double>(batch.size()));
  for (auto& s : batch) s.advantage = (s.advantage - mean) / (stdev + 1e-8);

  UpdateStats stats;
  stats.samples = static_cast<int>(batch.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    ad::Tape tape;
    PolicyGraph graph(tape, params);
    detail::LossNodes loss = detail::build_ppo_loss(tape, graph, batch, cfg, mode);
    for (double r : loss.value.ratios)
      if (!std::isfinite(r)) throw std::runtime_error("update: non-finite policy ratio");
    if (!std::isfinite(loss.value.total))
      throw std::runtime_error("update: non-finite loss");
    tape.backward(loss.loss);

    std::vector<Vec> grads;
    double sq_norm = 0.0;
    for (ad::LinearId id : graph.layer_ids()) {
      const Mat& gw = tape.grad_w(id);
      grads.emplace_back(Eigen::Map<const Vec>(gw.data(), gw.size()));
      grads.push_back(tape.grad_b(id));
      sq_norm += gw.squaredNorm() + grads.back().squaredNorm();
    }
    grads.push_back(tape.grad_vec(graph.log_std_id()));
    sq_norm += grads.back().squaredNorm();
    const double norm = std::sqrt(sq_norm);
    if (!std::isfinite(norm)) throw std::runtime_error("update: non-finite gradient");
    if (norm > cfg.grad_clip && norm > 0.0) {
      const double scale = cfg.grad_clip / norm;
      for (Vec& g : grads) g *= scale;
    }
    optimizer.step(params, grads, lr);

    stats.loss_total = loss.value.total;
    stats.surrogate = loss.value.surrogate_mean;
    stats.value_loss = loss.value.value_loss;
    stats.entropy = loss.value.entropy;
    stats.grad_norm = norm;
  }
  buffer.clear();
  return stats;
}

// --- checkpoints -------------------------------------------------------

enum class ControlMode { apf_gains, steer };

inline std::string to_string(ControlMode m) {
  return m == ControlMode::apf_gains ? "apf_gains" : "steer";
}

struct OptimizerState {
  std::vector<Vec> first_moments;
  std::vector<Vec> second_moments;
  std::int64_t step_count = 0;
};

struct Checkpoint {
  PolicyParams params;
  EmbedMode embed_mode = EmbedMode::attention;
  ControlMode control_mode = ControlMode::apf_gains;
  std::optional<OptimizerState> optimizer;
  int episode = 0;
};

namespace detail {

constexpr char kCheckpointMagic[8] = {'R', 'P', 'F', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_pod(std::ostream& os, T v) {
  write_bytes(os, &v, sizeof(T));
}

inline void write_vec(std::ostream& os, const Vec& v) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(v.size()));
  write_bytes(os, v.data(), sizeof(double) * v.size());
}

// Matrices are written row-major regardless of in-memory layout.
inline void write_mat(std::ostream& os, const Mat& m) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(m.rows()));
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) write_pod<double>(os, m(r, c));
}

inline void read_bytes(std::istream& is, void* p, std::size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("checkpoint: truncated or corrupt file");
}

template <typename T>
T read_pod(std::istream& is) {
  T v;
  read_bytes(is, &v, sizeof(T));
  return v;
}

inline Vec read_vec(std::istream& is) {
  const auto n = read_pod<std::uint32_t>(is);
  if (n > (1u << 26)) throw std::runtime_error("checkpoint: implausible tensor size");
  Vec v(n);
  read_bytes(is, v.data(), sizeof(double) * n);
  return v;
}

inline Mat read_mat(std::istream& is) {
  const auto rows = read_pod<std::uint32_t>(is);
  const auto cols = read_pod<std::uint32_t>(is);
  if (rows > (1u << 20) || cols > (1u << 20))
    throw std::runtime_error("checkpoint: implausible tensor size");
  Mat m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = read_pod<double>(is);
  return m;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& cp, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint file: " + path);
  using namespace detail;
  write_bytes(os, kCheckpointMagic, sizeof(kCheckpointMagic));
  write_pod<std::uint32_t>(os, kCheckpointVersion);
  write_pod<std::uint8_t>(os, cp.embed_mode == EmbedMode::attention ? 0 : 1);
  write_pod<std::uint8_t>(os, cp.control_mode == ControlMode::apf_gains ? 0 : 1);

  const NetArch& a = cp.params.arch;
  write_pod<std::int32_t>(os, a.embed_dim);
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(a.hidden.size()));
  for (int h : a.hidden) write_pod<std::int32_t>(os, h);
  write_pod<std::int32_t>(os, a.action_dim);
  write_pod<std::int32_t>(os, a.obs_loc_dim);
  write_pod<std::int32_t>(os, a.neighbor_dim);
  write_vec(os, cp.params.box.lo);
  write_vec(os, cp.params.box.hi);
  write_pod<std::int32_t>(os, cp.episode);

  visit_layers(cp.params, [&](const LinearLayer& l) {
    write_mat(os, l.w);
    write_vec(os, l.b);
  });
  write_vec(os, cp.params.log_std);

  write_pod<std::uint8_t>(os, cp.optimizer ? 1 : 0);
  if (cp.optimizer) {
    write_pod<std::int64_t>(os, cp.optimizer->step_count);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(cp.optimizer->first_moments.size()));
    for (const Vec& m : cp.optimizer->first_moments) write_vec(os, m);
    for (const Vec& v : cp.optimizer->second_moments) write_vec(os, v);
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read checkpoint file: " + path);
  using namespace detail;
  char magic[8];
  read_bytes(is, magic, sizeof(magic));
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("checkpoint: bad magic (not a checkpoint file)");
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));

  Checkpoint cp;
  cp.embed_mode = read_pod<std::uint8_t>(is) == 0 ? EmbedMode::attention : EmbedMode::mean_pool;
  cp.control_mode = read_pod<std::uint8_t>(is) == 0 ? ControlMode::apf_gains : ControlMode::steer;

  NetArch arch;
  arch.embed_dim = read_pod<std::int32_t>(is);
  const auto n_hidden = read_pod<std::uint32_t>(is);
  if (n_hidden > 64) throw std::runtime_error("checkpoint: implausible hidden layer count");
  arch.hidden.clear();
  for (std::uint32_t i = 0; i < n_hidden; ++i) arch.hidden.push_back(read_pod<std::int32_t>(is));
  arch.action_dim = read_pod<std::int32_t>(is);
  arch.obs_loc_dim = read_pod<std::int32_t>(is);
  arch.neighbor_dim = read_pod<std::int32_t>(is);
  arch.validate();

  ActionBox box;
  box.lo = read_vec(is);
  box.hi = read_vec(is);
  cp.episode = read_pod<std::int32_t>(is);

  cp.params.arch = arch;
  cp.params.box = box;
  cp.params.actor_trunk.resize(arch.hidden.size());
  cp.params.critic_trunk.resize(arch.hidden.size());
  visit_layers(cp.params, [&](LinearLayer& l) {
    l.w = read_mat(is);
    l.b = read_vec(is);
  });
  cp.params.log_std = read_vec(is);

  if (read_pod<std::uint8_t>(is) != 0) {
    OptimizerState st;
    st.step_count = read_pod<std::int64_t>(is);
    const auto n = read_pod<std::uint32_t>(is);
    if (n > 4096) throw std::runtime_error("checkpoint: implausible optimizer tensor count");
    for (std::uint32_t i = 0; i < n; ++i) st.first_moments.push_back(read_vec(is));
    for (std::uint32_t i = 0; i < n; ++i) st.second_moments.push_back(read_vec(is));
    cp.optimizer = std::move(st);
  }
  return cp;
}

// Arch-checked load for resuming or evaluating against a known config.
inline Checkpoint load_checkpoint(const std::string& path, const NetArch& expected) {
  Checkpoint cp = load_checkpoint(path);
  if (!(cp.params.arch == expected))
    throw std::runtime_error("checkpoint: architecture mismatch with expected NetArch");
  return cp;
}

// --- training loop -----------------------------------------------------

struct TrainSetup {
  WorldConfig world;
  ScenarioKind kind = ScenarioKind::circle_swap;
  int n_robots = 6;
  SampleOptions sample;
  // When set, every episode replays this exact scenario instead of
  // sampling a fresh one.
  std::optional<Scenario> fixed_scenario;
  NetArch arch;
  PpoConfig ppo;
  apf::Config apf_config;
  EmbedMode embed_mode = EmbedMode::attention;
  ControlMode control = ControlMode::apf_gains;
  std::uint64_t seed = 0;
};

struct EpisodeLog {
  int episode = 0;
  double return_mean = 0.0;
  double success_rate = 0.0;
  double collision_rate = 0.0;
  double lr = 0.0;
  double loss_surrogate = 0.0;
  double loss_value = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;
  int steps = 0;
  int updates = 0;
};

struct TrainResult {
  PolicyParams params;
  OptimizerState optimizer;
  std::vector<EpisodeLog> log;
};

inline ActionBox action_box_for(ControlMode mode) {
  return mode == ControlMode::apf_gains ? ActionBox::apf_gains() : ActionBox::steering();
}

// Maps a policy action to a commanded unit heading for one robot.
inline Vec2 action_to_heading(const World& world, int robot_id, const Vec& action,
                              ControlMode control, const apf::Config& apf_config) {
  const RobotState& r = world.robot(robot_id);
  if (control == ControlMode::steer) {
    const Vec2 velocity = world.config().desired_speed * unit_from_angle(r.heading);
    return ppo_steer_direction(velocity, action[0]);
  }
  const apf::Params gains{action[0], action[1]};
  const auto neighbors = world.sensed_neighbor_positions(robot_id);
  return apf::resolve_direction(r.position, r.goal, world.nearest_obstacle(robot_id), neighbors,
                                unit_from_angle(r.heading), gains, apf_config)
      .resolved;
}

// Parameter-shared PPO over episode rollouts: every unfinished robot
// queries the shared policy for its action each timestep, transitions
// pool into one buffer, and an update runs every batch_interval
// environment steps (windows may span episode boundaries).
inline TrainResult train(
    const TrainSetup& setup,
    const std::function<void(const Checkpoint&)>& checkpoint_sink = nullptr,
    const std::function<void(const EpisodeLog&)>& episode_sink = nullptr) {
  setup.world.validate();
  setup.ppo.validate();
  const int n_robots =
      setup.fixed_scenario ? static_cast<int>(setup.fixed_scenario->robots.size())
                           : setup.n_robots;
  const ActionBox box = action_box_for(setup.control);
  PolicyParams params = init_network(setup.arch, box, Rng::derive(setup.seed, 1));
  AdamOptimizer optimizer;
  Rng action_rng(Rng::derive(setup.seed, 2));
  RolloutBuffer buffer(n_robots);

  TrainResult result;
  std::int64_t global_steps = 0;
  UpdateStats last_stats;

  for (int episode = 0; episode < setup.ppo.episodes; ++episode) {
    const double lr = lr_schedule(setup.ppo.lr_init, setup.ppo.lr_decay, episode);
    Scenario scenario =
        setup.fixed_scenario
            ? *setup.fixed_scenario
            : sample_scenario(setup.kind, n_robots, Rng::derive(setup.seed, 1000 + episode),
                              setup.world.safe_radius, setup.sample);
    World world(setup.world, scenario);

    std::vector<double> episode_return(n_robots, 0.0);
    int updates_this_episode = 0;

    for (int t = 0; t < setup.world.max_steps && !world.all_done(); ++t) {
      struct Pending {
        int robot;
        PolicyInput input;
        Vec action;
        double log_prob;
        double value;
      };
      std::vector<Pending> pending;
      std::vector<std::pair<int, Vec2>> commands;
      for (int i = 0; i < world.robot_count(); ++i) {
        if (world.robot(i).status != RobotStatus::active) continue;
        PolicyInput input = normalize_observation(world.observe(i), setup.world.detection_range,
                                                  setup.world.reward_range);
        auto [dist, value] = actor_critic_forward(input, params, setup.embed_mode);
        SampledAction sampled = sample_action(dist, box, action_rng);
        commands.emplace_back(
            i, action_to_heading(world, i, sampled.action, setup.control, setup.apf_config));
        pending.push_back({i, std::move(input), sampled.action, sampled.log_prob, value});
      }

      World before = world;
      world.step(commands);
      ++global_steps;

      for (Pending& p : pending) {
        const RewardBreakdown rw = compute_reward(before, world, p.robot);
        const bool terminal = world.robot(p.robot).status != RobotStatus::active;
        const bool timeout = (t + 1 == setup.world.max_steps);
        episode_return[p.robot] += rw.total();
        buffer.add({p.robot, std::move(p.input), std::move(p.action), p.log_prob, rw.total(),
                    p.value, terminal || timeout, t});
      }

      if (global_steps % setup.ppo.batch_interval == 0 && buffer.total > 0) {
        std::vector<double> bootstraps(n_robots, 0.0);
        for (int i = 0; i < n_robots; ++i) {
          const auto& ts = buffer.per_robot[i];
          if (!ts.empty() && !ts.back().done) {
            PolicyInput input = normalize_observation(
                world.observe(i), setup.world.detection_range, setup.world.reward_range);
            bootstraps[i] = critic_forward(input, params, setup.embed_mode);
          }
        }
        last_stats = update(params, buffer, bootstraps, setup.ppo, optimizer, lr,
                            setup.embed_mode);
        ++updates_this_episode;
      }
    }

    EpisodeLog log;
    log.episode = episode;
    for (double r : episode_return) log.return_mean += r;
    log.return_mean /= static_cast<double>(n_robots);
    for (const RobotState& r : world.robots()) {
      if (r.status == RobotStatus::reached) log.success_rate += 1.0;
      if (r.status == RobotStatus::collided) log.collision_rate += 1.0;
    }
    log.success_rate /= static_cast<double>(n_robots);
    log.collision_rate /= static_cast<double>(n_robots);
    log.lr = lr;
    log.loss_surrogate = last_stats.surrogate;
    log.loss_value = last_stats.value_loss;
    log.entropy = last_stats.entropy;
    log.grad_norm = last_stats.grad_norm;
    log.steps = world.step_count();
    log.updates = updates_this_episode;
    result.log.push_back(log);
    if (episode_sink) episode_sink(log);

    const bool last = (episode + 1 == setup.ppo.episodes);
    if (checkpoint_sink && (last || (episode + 1) % setup.ppo.checkpoint_every == 0)) {
      Checkpoint cp;
      cp.params = params;
      cp.embed_mode = setup.embed_mode;
      cp.control_mode = setup.control;
      cp.optimizer = OptimizerState{optimizer.first_moments(), optimizer.second_moments(),
                                    optimizer.step_count()};
      cp.episode = episode + 1;
      checkpoint_sink(cp);
    }
  }

  result.params = std::move(params);
  result.optimizer = OptimizerState{optimizer.first_moments(), optimizer.second_moments(),
                                    optimizer.step_count()};
  return result;
}

}  // namespace rpf
