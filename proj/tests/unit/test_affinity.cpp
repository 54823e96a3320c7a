#include <doctest.h>

#include <cmath>
#include <random>

#include "etap/affinity.hpp"

using etap::StepTrace;
using etap::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

StepTrace make_step(std::int64_t k, std::vector<VectorXd> grads,
                    std::vector<double> losses, VectorXd v) {
  StepTrace st;
  st.step = k;
  for (std::size_t t = 0; t < grads.size(); ++t) st.tasks.push_back(static_cast<int>(t));
  st.gradients = std::move(grads);
  st.losses = std::move(losses);
  st.velocity_in = std::move(v);
  return st;
}

std::vector<StepTrace> random_trace(int n, int p, int steps, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0, 1);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  std::vector<StepTrace> trace;
  for (int k = 0; k < steps; ++k) {
    std::vector<VectorXd> g;
    std::vector<double> l;
    for (int t = 0; t < n; ++t) {
      g.push_back(VectorXd::NullaryExpr(p, [&] { return nd(rng); }));
      l.push_back(u(rng));
    }
    trace.push_back(make_step(k, g, l, VectorXd::NullaryExpr(p, [&] { return nd(rng); })));
  }
  return trace;
}

}  // namespace

TEST_CASE("step affinity examples") {
  const VectorXd e1 = vec({1, 0});
  CHECK(*etap::step_affinity(e1, e1, 1.0, 1.0, 0.0, vec({0, 0})) == 1.0);
  CHECK(*etap::step_affinity(e1, vec({0, 3}), 1.0, 0.5, 0.0, vec({0, 0})) == 0.0);
  const auto z = etap::step_affinity(vec({1, 2}), vec({2, 1}), 2.0, 0.1, 0.9,
                                     vec({0.5, -0.5}));
  REQUIRE(z.has_value());
  CHECK(std::abs(*z - -0.025) < 1e-12);
}

TEST_CASE("step affinity guards tiny losses and shape mismatch") {
  CHECK_FALSE(etap::step_affinity(vec({1}), vec({1}), 1e-13, 1.0, 0.0, vec({0})));
  CHECK_FALSE(etap::step_affinity(vec({1}), vec({1}), 0.0, 1.0, 0.0, vec({0})));
  CHECK_THROWS_AS(etap::step_affinity(vec({1, 2}), vec({1}), 1.0, 1.0, 0.0, vec({0})),
                  etap::Error);
}

TEST_CASE("single-step trace gives raw step scores") {
  const std::vector<StepTrace> trace{make_step(
      0, {vec({1, 2}), vec({2, 1})}, {1.0, 2.0}, vec({0.5, -0.5}))};
  const auto m = etap::pairwise_affinity(trace, 0.1, 0.9);
  CHECK(std::abs(m(0, 1) - -0.025) < 1e-12);
  CHECK(m.steps_used(0, 1) == 1);
  const double diag0 = vec({1, 2}).dot(0.1 * vec({1, 2}) - 0.9 * vec({0.5, -0.5})) / 1.0;
  CHECK(std::abs(m(0, 0) - diag0) < 1e-12);
}

TEST_CASE("three-step trace averages by hand") {
  const VectorXd zero = vec({0, 0});
  const std::vector<StepTrace> trace{
      make_step(0, {vec({1, 0}), vec({1, 1})}, {1.0, 2.0}, zero),
      make_step(1, {vec({0, 1}), vec({2, 0})}, {1.0, 1.0}, vec({1, 0})),
      make_step(2, {vec({1, 1}), vec({1, -1})}, {0.5, 0.5}, vec({0, 1}))};
  const auto m = etap::pairwise_affinity(trace, 1.0, 0.5);
  // 0 -> 1 per step: (1,1).(1,0)/2 = 0.5; (2,0).((0,1)-(0.5,0))/1 = -1;
  //                  (1,-1).((1,1)-(0,0.5))/0.5 = (1 - 0.5)/0.5 = 1
  CHECK(std::abs(m(0, 1) - (0.5 - 1.0 + 1.0) / 3.0) < 1e-12);
  // 1 -> 0: (1,0).(1,1)/1 = 1; (0,1).((2,0)-(0.5,0))/1 = 0;
  //         (1,1).((1,-1)-(0,0.5))/0.5 = (1 - 1.5)/0.5 = -1
  CHECK(std::abs(m(1, 0) - 0.0) < 1e-12);
  CHECK(m.steps_used(1, 0) == 3);
}

TEST_CASE("zero gradient column gives zero affinities") {
  std::mt19937_64 rng(1);
  auto trace = random_trace(3, 4, 5, rng);
  for (auto& st : trace) st.gradients[2].setZero();
  const auto m = etap::pairwise_affinity(trace, 0.1, 0.9);
  for (int i = 0; i < 3; ++i) CHECK(m(i, 2) == 0.0);
}

TEST_CASE("skipped steps and fully skipped pairs") {
  std::mt19937_64 rng(2);
  auto trace = random_trace(2, 3, 4, rng);
  trace[1].losses[1] = 0.0;
  auto m = etap::pairwise_affinity(trace, 0.1, 0.9);
  CHECK(m.steps_used(0, 1) == 3);
  CHECK(m.steps_used(1, 0) == 4);
  for (auto& st : trace) st.losses[1] = 1e-13;
  CHECK_THROWS_AS(etap::pairwise_affinity(trace, 0.1, 0.9), etap::Error);
  CHECK_THROWS_AS(etap::pairwise_affinity({}, 0.1, 0.9), etap::Error);
}

TEST_CASE("group affinity averages the other members") {
  etap::AffinityMatrix m;
  m.n = 3;
  m.values = etap::MatrixXd::Zero(3, 3);
  m.steps_used = Eigen::MatrixXi::Ones(3, 3);
  m.values(1, 0) = 0.2;
  m.values(2, 0) = 0.4;
  m.values(0, 1) = -0.7;
  const auto g = etap::group_affinity(m, etap::Group{0, 1, 2});
  CHECK(g.scores.at(0) == doctest::Approx(0.3).epsilon(1e-15));
  const auto pair = etap::group_affinity(m, etap::Group{0, 1});
  CHECK(pair.scores.at(1) == m(0, 1));
  CHECK(pair.scores.at(0) == m(1, 0));
  CHECK(pair.scores.size() == 2);
  CHECK_THROWS_AS(etap::group_affinity(m, etap::Group{1}), etap::Error);
  CHECK_THROWS_AS(etap::group_affinity(m, etap::Group{0, 3}), etap::Error);
}

TEST_CASE("affinity properties on random traces") {
  std::mt19937_64 rng(9);
  for (int rep = 0; rep < 20; ++rep) {
    const auto trace = random_trace(4, 6, 3, rng);
    const auto m0 = etap::pairwise_affinity(trace, 0.2, 0.0);
    const auto m3 = etap::pairwise_affinity(trace, 0.6, 0.0);
    for (int i = 0; i < 4; ++i) {
      CHECK(m0(i, i) >= 0.0);
      for (int j = 0; j < 4; ++j) {
        CHECK(std::abs(m3(i, j) - 3.0 * m0(i, j)) <= 1e-12 * (1 + std::abs(m3(i, j))));
      }
    }
    // relabel tasks by a rotation
    std::vector<StepTrace> rotated = trace;
    for (std::size_t k = 0; k < trace.size(); ++k) {
      for (int t = 0; t < 4; ++t) {
        rotated[k].gradients[(t + 1) % 4] = trace[k].gradients[t];
        rotated[k].losses[(t + 1) % 4] = trace[k].losses[t];
      }
    }
    const auto mr = etap::pairwise_affinity(rotated, 0.2, 0.7);
    const auto mo = etap::pairwise_affinity(trace, 0.2, 0.7);
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        CHECK(std::abs(mr((i + 1) % 4, (j + 1) % 4) - mo(i, j)) < 1e-12);
      }
    }
  }
}

TEST_CASE("group affinity matches a brute-force recomputation") {
  std::mt19937_64 rng(5);
  const auto trace = random_trace(5, 4, 6, rng);
  const double eta = 0.3, beta = 0.8;
  const auto g = etap::group_affinity(etap::pairwise_affinity(trace, eta, beta),
                                      etap::Group{0, 1, 2, 3, 4});
  for (int t = 0; t < 5; ++t) {
    double total = 0;
    for (int s = 0; s < 5; ++s) {
      if (s == t) continue;
      double acc = 0;
      for (const auto& st : trace) {
        double dot = 0;
        for (int c = 0; c < 4; ++c) {
          dot += st.gradients[t][c] *
                 (eta * st.gradients[s][c] - beta * st.velocity_in[c]);
        }
        acc += dot / st.losses[t];
      }
      total += acc / static_cast<double>(trace.size());
    }
    CHECK(std::abs(g.scores.at(t) - total / 4.0) < 1e-12);
  }
}

TEST_CASE("affinity JSON and CSV") {
  std::mt19937_64 rng(3);
  const auto m = etap::pairwise_affinity(random_trace(3, 2, 2, rng), 0.1, 0.5);
  const nlohmann::json j = m;
  CHECK(j.at("values").size() == 9);
  const auto back = j.get<etap::AffinityMatrix>();
  CHECK(back.values == m.values);
  CHECK(back.steps_used == m.steps_used);
  const auto csv = etap::affinity_to_csv(m);
  CHECK(csv.rfind("from,0,1,2\n", 0) == 0);
}
