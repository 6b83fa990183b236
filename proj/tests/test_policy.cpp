#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <vector>

#include <rpf/policy.hpp>
#include <rpf/rng.hpp>

using namespace rpf;
using doctest::Approx;

namespace {

NetArch small_arch(int embed = 6, int hidden = 8) {
  NetArch a;
  a.embed_dim = embed;
  a.hidden = {hidden, hidden};
  return a;
}

PolicyInput random_input(Rng& rng, int n_neighbors) {
  PolicyInput in;
  in.o_loc = Vec(4);
  for (int i = 0; i < 4; ++i) in.o_loc[i] = rng.uniform(-1, 1);
  for (int j = 0; j < n_neighbors; ++j) {
    Vec w(3);
    for (int i = 0; i < 3; ++i) w[i] = rng.uniform(-1, 1);
    in.neighbors.push_back(std::move(w));
  }
  return in;
}

PolicyParams zero_params(const NetArch& arch) {
  PolicyParams p = init_network(arch, ActionBox::apf_gains(), 0);
  visit_layers(p, [](LinearLayer& l) {
    l.w.setZero();
    l.b.setZero();
  });
  return p;
}

// Flattened parameter entries in canonical order (column-major per tensor,
// matching the tape's gradient layout).
std::vector<double*> parameter_entries(PolicyParams& p) {
  std::vector<double*> out;
  visit_layers(p, [&](LinearLayer& l) {
    for (Eigen::Index i = 0; i < l.w.size(); ++i) out.push_back(l.w.data() + i);
    for (Eigen::Index i = 0; i < l.b.size(); ++i) out.push_back(l.b.data() + i);
  });
  for (Eigen::Index i = 0; i < p.log_std.size(); ++i) out.push_back(p.log_std.data() + i);
  return out;
}

}  // namespace

TEST_CASE("init_network is deterministic and shaped by the arch") {
  NetArch arch;  // defaults: embed 64, hidden {256, 256}
  const PolicyParams a = init_network(arch, ActionBox::apf_gains(), 7);
  const PolicyParams b = init_network(arch, ActionBox::apf_gains(), 7);
  CHECK(a.embed_e.w == b.embed_e.w);
  CHECK(a.actor_trunk[1].w == b.actor_trunk[1].w);

  CHECK(a.actor_trunk[0].w.rows() == 256);
  CHECK(a.actor_trunk[0].w.cols() == 68);  // obs_loc 4 + embed 64
  CHECK(a.actor_trunk[1].w.rows() == 256);
  CHECK(a.actor_trunk[1].w.cols() == 256);
  CHECK(a.actor_head.w.rows() == 2);
  CHECK(a.critic_head.w.rows() == 1);
  CHECK(a.embed_e.w.cols() == 7);
  CHECK(a.embed_b.w.rows() == 1);

  // Biases start at zero.
  visit_layers(a, [](const LinearLayer& l) { CHECK(l.b.isZero(0.0)); });

  // log-std init: log(0.25 * box width) per dimension.
  CHECK(std::exp(a.log_std[0]) == Approx(0.025).epsilon(1e-12));
  CHECK(std::exp(a.log_std[1]) == Approx(1.25).epsilon(1e-12));

  const PolicyParams c = init_network(arch, ActionBox::apf_gains(), 8);
  CHECK(a.embed_e.w != c.embed_e.w);
}

TEST_CASE("embed: singleton neighbor carries full attention") {
  Rng rng(5);
  const PolicyParams params = init_network(small_arch(), ActionBox::apf_gains(), 31);
  const PolicyInput in = random_input(rng, 1);
  const EmbeddingActivations act = embed(in, params);
  REQUIRE(act.attention.size() == 1);
  CHECK(act.attention[0] == Approx(1.0).epsilon(1e-12));
  CHECK((act.context - act.per_neighbor_h[0]).norm() < 1e-12);
}

TEST_CASE("embed: identical neighbors split attention evenly") {
  Rng rng(6);
  const PolicyParams params = init_network(small_arch(), ActionBox::apf_gains(), 32);
  PolicyInput in = random_input(rng, 1);
  in.neighbors.push_back(in.neighbors[0]);
  const EmbeddingActivations act = embed(in, params);
  REQUIRE(act.attention.size() == 2);
  CHECK(act.attention[0] == Approx(0.5).epsilon(1e-12));
  CHECK(act.attention[1] == Approx(0.5).epsilon(1e-12));
}

TEST_CASE("embed: permutation invariance and weight normalization") {
  Rng rng(7);
  const PolicyParams params = init_network(small_arch(), ActionBox::apf_gains(), 33);
  for (int trial = 0; trial < 30; ++trial) {
    const int k = 1 + static_cast<int>(rng.uniform_int(5));
    PolicyInput in = random_input(rng, k);
    const EmbeddingActivations base = embed(in, params);

    double weight_sum = 0.0;
    for (double w : base.attention) {
      CHECK(w >= 0.0);
      weight_sum += w;
    }
    CHECK(weight_sum == Approx(1.0).epsilon(1e-9));

    PolicyInput shuffled = in;
    for (int s = 0; s < 3; ++s) {
      const std::size_t i = rng.uniform_int(k), j = rng.uniform_int(k);
      std::swap(shuffled.neighbors[i], shuffled.neighbors[j]);
    }
    const EmbeddingActivations perm = embed(shuffled, params);
    CHECK((base.combined - perm.combined).norm() < 1e-9);
  }
}

TEST_CASE("embed: output length is fixed across neighbor counts") {
  Rng rng(8);
  const PolicyParams params = init_network(small_arch(), ActionBox::apf_gains(), 34);
  for (int k = 0; k <= 7; ++k) {
    const EmbeddingActivations act = embed(random_input(rng, k), params);
    CHECK(act.combined.size() == params.arch.combined_obs_dim());
    if (k == 0) {
      CHECK(act.context.isZero(0.0));
      CHECK(act.attention.empty());
    }
  }
}

TEST_CASE("mean-pool mode equals attention when all scores coincide") {
  Rng rng(9);
  PolicyParams params = init_network(small_arch(), ActionBox::apf_gains(), 35);
  // Zeroing psi_b makes every attention score identical.
  params.embed_b.w.setZero();
  params.embed_b.b.setZero();
  for (int k = 1; k <= 5; ++k) {
    const PolicyInput in = random_input(rng, k);
    const EmbeddingActivations att = embed(in, params, EmbedMode::attention);
    const EmbeddingActivations avg = embed(in, params, EmbedMode::mean_pool);
    CHECK((att.combined - avg.combined).norm() < 1e-12);
  }
}

TEST_CASE("actor mean stays in the box; zero net sits at the center") {
  Rng rng(10);
  const PolicyParams params = init_network(small_arch(), ActionBox::apf_gains(), 36);
  for (int trial = 0; trial < 50; ++trial) {
    const ActionDistribution dist = actor_forward(random_input(rng, trial % 4), params);
    CHECK(dist.mean[0] >= 0.0);
    CHECK(dist.mean[0] <= 0.1);
    CHECK(dist.mean[1] >= 0.0);
    CHECK(dist.mean[1] <= 5.0);
    CHECK(dist.std[0] > 0.0);
  }

  const PolicyParams zeros = zero_params(small_arch());
  const ActionDistribution dist = actor_forward(random_input(rng, 2), zeros);
  CHECK(dist.mean[0] == Approx(0.05).epsilon(1e-12));
  CHECK(dist.mean[1] == Approx(2.5).epsilon(1e-12));
}

TEST_CASE("critic: zero net scores zero, pure, head is linear") {
  Rng rng(11);
  const PolicyInput in = random_input(rng, 2);
  const PolicyParams zeros = zero_params(small_arch());
  CHECK(critic_forward(in, zeros) == 0.0);

  PolicyParams params = init_network(small_arch(), ActionBox::apf_gains(), 37);
  const double v1 = critic_forward(in, params);
  CHECK(critic_forward(in, params) == v1);  // purity

  PolicyParams doubled = params;
  doubled.critic_head.w *= 2.0;
  doubled.critic_head.b *= 2.0;
  CHECK(critic_forward(in, doubled) == Approx(2.0 * v1).epsilon(1e-12));
}

TEST_CASE("sample_action clips into the box and reports the pre-clip density") {
  Rng rng(12);
  ActionDistribution dist;
  dist.mean = Vec(2);
  dist.mean << 0.13, 2.0;  // deliberately outside the eta bound
  dist.std = Vec(2);
  dist.std << 1e-12, 1e-12;
  const ActionBox box = ActionBox::apf_gains();
  const SampledAction s = sample_action(dist, box, rng);
  CHECK(s.action[0] == Approx(0.1));  // clipped
  CHECK(s.action[1] == Approx(2.0));

  // Log density of the mean draw, closed form.
  ActionDistribution d2;
  d2.mean = Vec(2);
  d2.mean << 0.05, 2.5;
  d2.std = Vec(2);
  d2.std << 0.01, 0.5;
  const SampledAction m = mean_action(d2);
  const double expected = -(std::log(2 * kPi) + std::log(0.01) + std::log(0.5));
  CHECK(m.log_prob == Approx(expected).epsilon(1e-12));
  CHECK(m.log_prob == Approx(3.4604403001387).epsilon(1e-9));

  // Concentration: the density at the mean grows as std shrinks.
  ActionDistribution d3 = d2;
  d3.std = Vec(2);
  d3.std << 0.001, 0.05;
  CHECK(mean_action(d3).log_prob > m.log_prob);
}

TEST_CASE("normalize_observation scales distances and angles") {
  Observation obs;
  obs.obstacle_dist = 3.0;
  obs.obstacle_azimuth = kPi / 2;
  obs.goal_dist = 5.0;
  obs.goal_azimuth = -kPi;
  NeighborFeature f;
  f.distance = 1.5;
  f.azimuth = kPi / 4;
  f.relative_heading = -kPi / 2;
  obs.neighbors.push_back(f);

  const PolicyInput in = normalize_observation(obs, 6.0, 10.0);
  CHECK(in.o_loc[0] == Approx(0.5));
  CHECK(in.o_loc[1] == Approx(0.5));
  CHECK(in.o_loc[2] == Approx(0.5));
  CHECK(in.o_loc[3] == Approx(-1.0));
  REQUIRE(in.neighbors.size() == 1);
  CHECK(in.neighbors[0][0] == Approx(0.25));
  CHECK(in.neighbors[0][1] == Approx(0.25));
  CHECK(in.neighbors[0][2] == Approx(-0.5));
}

TEST_CASE("full-network gradients match finite differences (small instances)") {
  Rng rng(13);
  for (int net = 0; net < 3; ++net) {
    NetArch arch = small_arch(4 + net, 5 + net);
    PolicyParams params = init_network(arch, ActionBox::apf_gains(), 100 + net);
    // Jitter the biases off zero: a dead ReLU input would otherwise pin a
    // pre-activation exactly onto the kink, where the derivative is not
    // defined and finite differences see the one-sided average.
    visit_layers(params, [&](LinearLayer& l) {
      for (Eigen::Index i = 0; i < l.b.size(); ++i) l.b[i] = rng.uniform(-0.05, 0.05);
    });
    const PolicyInput in = random_input(rng, 1 + net);
    Vec action(2);
    action << rng.uniform(0.0, 0.1), rng.uniform(0.0, 5.0);
    const double advantage = rng.uniform(-2, 2);
    const double ret = rng.uniform(-2, 2);

    auto eval_loss = [&](const PolicyParams& p, double old_lp) {
      ad::Tape tape;
      PolicyGraph graph(tape, p);
      ad::NodeId o_hat = graph.embed(in, EmbedMode::attention);
      ad::NodeId lp = graph.log_prob(graph.actor_mean(o_hat), action);
      ad::NodeId surr = tape.ppo_surrogate(lp, old_lp, advantage, 0.2);
      ad::NodeId verr = tape.squared_error(graph.critic_value(o_hat), ret);
      Vec coeffs(3);
      coeffs << -1.0, 0.5, -0.001;
      return tape.value(tape.scale_add({surr, verr, graph.entropy()}, coeffs))[0];
    };

    // old log-prob from the unperturbed params puts the ratio at 1 (interior).
    double old_lp;
    {
      ad::Tape tape;
      PolicyGraph graph(tape, params);
      old_lp = tape.value(graph.log_prob(graph.actor_mean(graph.embed(in, EmbedMode::attention)),
                                         action))[0];
    }

    // Analytic gradients.
    ad::Tape tape;
    PolicyGraph graph(tape, params);
    ad::NodeId o_hat = graph.embed(in, EmbedMode::attention);
    ad::NodeId lp = graph.log_prob(graph.actor_mean(o_hat), action);
    ad::NodeId surr = tape.ppo_surrogate(lp, old_lp, advantage, 0.2);
    ad::NodeId verr = tape.squared_error(graph.critic_value(o_hat), ret);
    Vec coeffs(3);
    coeffs << -1.0, 0.5, -0.001;
    tape.backward(tape.scale_add({surr, verr, graph.entropy()}, coeffs));

    std::vector<double> analytic;
    for (ad::LinearId id : graph.layer_ids()) {
      const Mat& gw = tape.grad_w(id);
      analytic.insert(analytic.end(), gw.data(), gw.data() + gw.size());
      const Vec& gb = tape.grad_b(id);
      analytic.insert(analytic.end(), gb.data(), gb.data() + gb.size());
    }
    const Vec& gls = tape.grad_vec(graph.log_std_id());
    analytic.insert(analytic.end(), gls.data(), gls.data() + gls.size());

    std::vector<double*> entries = parameter_entries(params);
    REQUIRE(entries.size() == analytic.size());
    auto fd_at = [&](std::size_t i, double h) {
      const double saved = *entries[i];
      *entries[i] = saved + h;
      const double fp = eval_loss(params, old_lp);
      *entries[i] = saved - h;
      const double fm = eval_loss(params, old_lp);
      *entries[i] = saved;
      return (fp - fm) / (2.0 * h);
    };
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const double fd = fd_at(i, 1e-5);
      double scale = std::max({1.0, std::abs(fd), std::abs(analytic[i])});
      double err = std::abs(fd - analytic[i]) / scale;
      if (err >= 1e-4) {
        // A probe that straddles a ReLU kink re-checks at a smaller step.
        const double fd2 = fd_at(i, 1e-7);
        scale = std::max({1.0, std::abs(fd2), std::abs(analytic[i])});
        err = std::abs(fd2 - analytic[i]) / scale;
      }
      CHECK(err < 1e-4);
    }
  }
}
