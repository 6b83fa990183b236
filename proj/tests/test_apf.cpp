#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <limits>
#include <vector>

#include <rpf/apf.hpp>
#include <rpf/rng.hpp>

using namespace rpf;
using doctest::Approx;

namespace {

double magnitude(Vec2 v) { return v.norm(); }

// Obstacle surface distance at which the on-axis repulsive magnitude
// equals 1 (bisection on the closed-form magnitude).
double unit_repulsion_distance(double eta, double rho) {
  auto mag = [&](double d) { return eta * (1.0 / d - 1.0 / rho) / (d * d); };
  double lo = 1e-4, hi = rho * 0.99;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mag(mid) > 1.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("attractive force is the unit vector toward the goal") {
  const Vec2 f = apf::attractive_force({0, 0}, {3, 4});
  CHECK(f.x == Approx(0.6).epsilon(1e-15));
  CHECK(f.y == Approx(0.8).epsilon(1e-15));
  const Vec2 g = apf::attractive_force({1, 1}, {1, 2});
  CHECK(g.x == Approx(0.0));
  CHECK(g.y == Approx(1.0));
  CHECK_THROWS_AS(apf::attractive_force({2, 2}, {2, 2}), std::domain_error);
}

TEST_CASE("repulsive force matches the closed form and vanishes beyond rho") {
  // eta (1/d - 1/rho) (p_i - p_o) / d^3 at d = 1.
  const Vec2 f = apf::repulsive_force({1, 0}, {0, 0}, 0.05, 10.0);
  CHECK(f.x == Approx(0.045).epsilon(1e-12));
  CHECK(f.y == Approx(0.0));

  // Exactly at the influence boundary the coefficient is zero.
  const Vec2 at_rho = apf::repulsive_force({5, 0}, {0, 0}, 0.05, 5.0);
  CHECK(at_rho.x == 0.0);
  CHECK(at_rho.y == 0.0);

  const Vec2 beyond = apf::repulsive_force({10, 0}, {0, 0}, 0.05, 5.0);
  CHECK(beyond.x == 0.0);
  CHECK(beyond.y == 0.0);

  CHECK_THROWS_AS(apf::repulsive_force({0, 0}, {0, 0}, 0.05, 5.0), std::domain_error);
}

TEST_CASE("repulsive magnitude decreases strictly in distance on (0, rho)") {
  const double eta = 0.07, rho = 8.0;
  double prev = std::numeric_limits<double>::infinity();
  for (double d = 0.05; d < rho; d += 0.05) {
    const double m = magnitude(apf::repulsive_force({d, 0}, {0, 0}, eta, rho));
    CHECK(m < prev);
    prev = m;
  }
}

TEST_CASE("inter-robot force: zero crossing at 2*lambda, empty sum, sign") {
  // Coefficient zero at d = 2*lambda.
  const Vec2 zero = apf::inter_robot_force({0, 0}, std::vector<Vec2>{{2, 0}}, 1.0);
  CHECK(zero.x == Approx(0.0));
  CHECK(zero.y == Approx(0.0));

  // (0.5 - 2/2) * (1, 0) = (-0.5, 0).
  const Vec2 f = apf::inter_robot_force({0, 0}, std::vector<Vec2>{{2, 0}}, 2.0);
  CHECK(f.x == Approx(-0.5).epsilon(1e-12));
  CHECK(f.y == Approx(0.0));

  const Vec2 none = apf::inter_robot_force({3, 4}, std::vector<Vec2>{}, 2.0);
  CHECK(none.x == 0.0);
  CHECK(none.y == 0.0);

  // Repulsive (away from the neighbor) below 2*lambda, attractive above.
  const double lambda = 1.5;
  const Vec2 close = apf::inter_robot_force({0, 0}, std::vector<Vec2>{{2.0, 0}}, lambda);
  CHECK(close.x < 0.0);
  const Vec2 far = apf::inter_robot_force({0, 0}, std::vector<Vec2>{{4.0, 0}}, lambda);
  CHECK(far.x > 0.0);
}

TEST_CASE("tangent directions are the perpendicular pair of the outward radial") {
  const auto [n1, n2] = apf::tangent_directions({2, 0}, {{0, 0}, 0.5});
  CHECK(n1.x == Approx(0.0));
  CHECK(n1.y == Approx(1.0));
  CHECK(n2.x == Approx(0.0));
  CHECK(n2.y == Approx(-1.0));

  const auto [m1, m2] = apf::tangent_directions({0, 3}, {{0, 0}, 0.5});
  CHECK(m1.x == Approx(-1.0));
  CHECK(m1.y == Approx(0.0));
  CHECK(m2.x == Approx(1.0));
  CHECK(m2.y == Approx(0.0));

  CHECK_THROWS_AS(apf::tangent_directions({1, 1}, {{1, 1}, 0.5}), std::domain_error);
}

TEST_CASE("wall direction selection prefers F_in above threshold, else heading") {
  const Vec2 n1{0, 1}, n2{0, -1};
  // |F_in| = 2 > 1: pick the tangent with the larger dot against F_in.
  Vec2 chosen = apf::select_wall_direction(n1, n2, {0, 2}, {1, 0}, 1.0);
  CHECK(chosen == n1);
  chosen = apf::select_wall_direction(n1, n2, {0, -2}, {1, 0}, 1.0);
  CHECK(chosen == n2);
  // Below the threshold the current heading decides.
  chosen = apf::select_wall_direction(n1, n2, {0, 0}, {0.7, 0.7}, 1.0);
  CHECK(chosen == n1);
  chosen = apf::select_wall_direction(n1, n2, {0, 0}, {0.7, -0.7}, 1.0);
  CHECK(chosen == n2);
  // Heading exactly perpendicular to both tangents: tie goes to n1.
  chosen = apf::select_wall_direction(n1, n2, {0, 0}, {1, 0}, 1.0);
  CHECK(chosen == n1);
}

TEST_CASE("soft force blends F_ar with the tangent by repulsive magnitude") {
  // F_r = 0 collapses to normalize(F_ar).
  Vec2 s = apf::soft_force({2, 0}, {0, 0}, {0, 1});
  CHECK(s.x == Approx(1.0));
  CHECK(s.y == Approx(0.0));

  s = apf::soft_force({1, 0}, {0, -0.5}, {0, 1});
  CHECK(s.x == Approx(0.70710678118654752).epsilon(1e-12));
  CHECK(s.y == Approx(0.70710678118654752).epsilon(1e-12));

  // Dominant repulsion drags the blend onto the tangent.
  s = apf::soft_force({0, 1}, {1000, 0}, {1, 0});
  CHECK(s.x > 0.999);

  CHECK_THROWS_AS(apf::soft_force({-2, 0}, {0, 1}, {1, 0}), std::domain_error);
}

TEST_CASE("soft force is locally continuous away from the degenerate blend") {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const Vec2 f_ar{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const Vec2 f_r{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
    const Vec2 n = unit_from_angle(rng.uniform(0, 2 * kPi));
    const Vec2 blend = f_ar + 2.0 * f_r.norm() * n;
    if (blend.norm() < 0.1) continue;
    const Vec2 base = apf::soft_force(f_ar, f_r, n);
    const double eps = 1e-6;
    const Vec2 shifted = apf::soft_force(f_ar + Vec2{eps, -eps}, f_r + Vec2{eps, eps}, n);
    CHECK((shifted - base).norm() < 1e-3);
  }
}

TEST_CASE("resolve_direction: free-space collapse to pure attraction") {
  // Obstacle outside the influence range, no neighbors.
  apf::Config config;
  config.rho = 1.0;
  const auto fb = apf::resolve_direction({0, 0}, {5, 0}, Obstacle{{3, 0}, 0.5},
                                         std::vector<Vec2>{}, {1, 0}, {0.05, 2.0}, config);
  CHECK(fb.regime == apf::Regime::free_motion);
  CHECK(fb.resolved.x == Approx(1.0));
  CHECK(fb.resolved.y == Approx(0.0));
  CHECK(!fb.tangent_ccw.has_value());
  CHECK(fb.repulsive.norm() == 0.0);
}

TEST_CASE("resolve_direction: head-on cancellation falls into wall following") {
  const double eta = 0.05, rho = 10.0;
  const double d_star = unit_repulsion_distance(eta, rho);
  // Obstacle dead ahead; robot placed where |F_r| = |F_a| = 1.
  const Obstacle obstacle{{3, 0}, 0.5};
  const Vec2 position{2.5 - d_star, 0.0};
  const auto fb = apf::resolve_direction(position, {6, 0}, obstacle, std::vector<Vec2>{},
                                         {1, 0}, {eta, 2.0}, {rho, 1.0});
  CHECK(fb.combined.norm() < 1e-6);
  CHECK(fb.regime == apf::Regime::wall_follow);
  // Tie on the heading selects n1, the counterclockwise tangent.
  CHECK(fb.resolved.x == Approx(0.0).epsilon(1e-9));
  CHECK(std::abs(fb.resolved.y) == Approx(1.0));

  // Slightly deeper, |F_r| > |F_a| strictly: still wall following.
  const Vec2 deeper{2.5 - d_star * 0.9, 0.0};
  const auto fb2 = apf::resolve_direction(deeper, {6, 0}, obstacle, std::vector<Vec2>{},
                                          {1, 0}, {eta, 2.0}, {rho, 1.0});
  CHECK(fb2.combined.dot(fb2.attractive) < 0.0);
  CHECK(fb2.regime == apf::Regime::wall_follow);
}

TEST_CASE("resolve_direction: opposing but weak repulsion gives the soft regime") {
  // F_r anti-parallel to F_a with |F_r| < 1: sub-area B.
  const auto fb = apf::resolve_direction({0, 0}, {10, 0}, Obstacle{{2, 0}, 0.5},
                                         std::vector<Vec2>{}, {1, 0}, {0.05, 2.0}, {10.0, 1.0});
  CHECK(fb.repulsive.dot(fb.attractive) < 0.0);
  CHECK(fb.combined.dot(fb.attractive) > 0.0);
  CHECK(fb.regime == apf::Regime::soft);
  CHECK(fb.soft.has_value());
  CHECK(fb.resolved.norm() == Approx(1.0).epsilon(1e-12));
  // Heading tie picks n1 = (0,-1) here, so the blend dips below the axis.
  CHECK(fb.resolved.y < 0.0);
  CHECK(fb.resolved.x > 0.0);
}

TEST_CASE("resolve_direction with wall following disabled composes Eq. 8 only") {
  apf::Config config;
  config.wall_following = false;
  const double eta = 0.05, rho = 10.0;
  const double d_star = unit_repulsion_distance(eta, rho);
  const Vec2 position{2.5 - d_star * 0.5, 0.0};  // deep inside, |F_r| > 1
  const auto fb = apf::resolve_direction(position, {6, 0}, Obstacle{{3, 0}, 0.5},
                                         std::vector<Vec2>{}, {1, 0}, {eta, 2.0}, config);
  CHECK(fb.regime == apf::Regime::free_motion);
  CHECK(fb.resolved.x == Approx(-1.0));  // pushed straight back
}

TEST_CASE("force functions are equivariant under global rotation") {
  Rng rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    const double theta = rng.uniform(0, 2 * kPi);
    const Vec2 p{rng.uniform(-5, 5), rng.uniform(-5, 5)};
    const Vec2 g{rng.uniform(-5, 5), rng.uniform(-5, 5)};
    if ((g - p).norm() < 1e-3) continue;

    const Vec2 fa = apf::attractive_force(p, g);
    const Vec2 fa_rot = apf::attractive_force(p.rotated(theta), g.rotated(theta));
    CHECK((fa.rotated(theta) - fa_rot).norm() < 1e-9);

    const Vec2 surface{rng.uniform(-5, 5), rng.uniform(-5, 5)};
    if ((p - surface).norm() > 1e-3) {
      const Vec2 fr = apf::repulsive_force(p, surface, 0.05, 10.0);
      const Vec2 fr_rot = apf::repulsive_force(p.rotated(theta), surface.rotated(theta), 0.05, 10.0);
      CHECK((fr.rotated(theta) - fr_rot).norm() < 1e-9);
    }

    std::vector<Vec2> neighbors, neighbors_rot;
    const int k = static_cast<int>(rng.uniform_int(4));
    bool ok = true;
    for (int j = 0; j < k; ++j) {
      const Vec2 q{rng.uniform(-5, 5), rng.uniform(-5, 5)};
      if ((q - p).norm() < 1e-3) ok = false;
      neighbors.push_back(q);
      neighbors_rot.push_back(q.rotated(theta));
    }
    if (!ok) continue;
    const Vec2 fin = apf::inter_robot_force(p, neighbors, 2.0);
    const Vec2 fin_rot = apf::inter_robot_force(p.rotated(theta), neighbors_rot, 2.0);
    CHECK((fin.rotated(theta) - fin_rot).norm() < 1e-9);
  }
}

TEST_CASE("resolved direction is always unit and regimes match their sign tests") {
  Rng rng(42);
  int wall = 0, soft = 0, free = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const Vec2 p{rng.uniform(-4, 4), rng.uniform(-4, 4)};
    const Vec2 g{rng.uniform(-4, 4), rng.uniform(-4, 4)};
    if ((g - p).norm() < 1e-2) continue;
    const Obstacle obs{{rng.uniform(-4, 4), rng.uniform(-4, 4)}, rng.uniform(0.2, 1.0)};
    if (surface_distance(p, obs) <= 1e-3) continue;
    std::vector<Vec2> neighbors;
    for (int j = 0; j < 2; ++j) {
      const Vec2 q{rng.uniform(-4, 4), rng.uniform(-4, 4)};
      if ((q - p).norm() > 1e-2) neighbors.push_back(q);
    }
    const apf::Params params{rng.uniform(0.0, 0.1), rng.uniform(0.0, 5.0)};
    const apf::Config config{rng.uniform(1.0, 10.0), 1.0};
    const auto fb = apf::resolve_direction(p, g, obs, neighbors,
                                           unit_from_angle(rng.uniform(0, 2 * kPi)), params, config);
    CHECK(fb.resolved.norm() == Approx(1.0).epsilon(1e-9));
    CHECK((fb.combined - (fb.attractive + fb.repulsive)).norm() < 1e-15);

    const bool in_range = surface_distance(p, obs) <= config.rho;
    const double ar_dot = fb.combined.dot(fb.attractive);
    const double r_dot = fb.repulsive.dot(fb.attractive);
    if (!in_range) {
      CHECK(fb.regime == apf::Regime::free_motion);
    } else if (ar_dot < 0.0 || fb.combined.norm() < 1e-12) {
      CHECK(fb.regime == apf::Regime::wall_follow);
    } else if (r_dot < 0.0) {
      CHECK(fb.regime == apf::Regime::soft);
    } else {
      CHECK(fb.regime == apf::Regime::free_motion);
    }
    wall += fb.regime == apf::Regime::wall_follow;
    soft += fb.regime == apf::Regime::soft;
    free += fb.regime == apf::Regime::free_motion;
  }
  // The sampler must actually exercise all three regimes.
  CHECK(wall > 0);
  CHECK(soft > 0);
  CHECK(free > 0);
}
