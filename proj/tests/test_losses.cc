#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "metricnet/gradcheck.h"
#include "metricnet/labels.h"
#include "metricnet/losses.h"
#include "metricnet/ops.h"
#include "test_util.h"

using namespace metricnet;
using metricnet::testing::random_tensor;
using metricnet::testing::random_vector;

namespace {

std::vector<double> random_distribution(std::size_t n, std::mt19937_64& rng) {
  auto v = random_vector(n, rng, 0.0, 1.0);
  const double s = std::accumulate(v.begin(), v.end(), 0.0);
  for (auto& x : v) x /= s;
  return v;
}

// Prefix-sum oracle written independently of the library implementation.
double emd2_oracle(const std::vector<double>& p, const std::vector<double>& q) {
  double cp = 0, cq = 0, out = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    cp += p[k];
    cq += q[k];
    out += (cp - cq) * (cp - cq);
  }
  return out;
}

}  // namespace

TEST_CASE("emd2 examples") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto p = random_distribution(1 + rng() % 30, rng);
    CHECK(std::abs(emd2(p, p)) < 1e-12);
  }
  CHECK(emd2(one_hot(ClassIndex{1}, {5, 0}), one_hot(ClassIndex{3}, {5, 0})) == 2.0);
  CHECK_THROWS(emd2(std::vector<double>{1.0}, std::vector<double>{0.5, 0.5}));
}

TEST_CASE("emd2 between one-hot classes equals their index distance") {
  for (int n = 1; n <= 20; ++n) {
    const QuantizerConfig cfg{n, 0};
    for (int i = 1; i <= n; ++i)
      for (int j = 1; j <= n; ++j) {
        const auto pi = one_hot(ClassIndex{i}, cfg), pj = one_hot(ClassIndex{j}, cfg);
        CHECK(emd2(pi, pj) == double(std::abs(i - j)));
        CHECK(emd2_oracle(pi, pj) == double(std::abs(i - j)));
      }
  }
}

TEST_CASE("emd2 is symmetric and orders one-hot predictions by distance") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 2 + rng() % 20;
    const auto p = random_distribution(n, rng), q = random_distribution(n, rng);
    CHECK(emd2(p, q) == doctest::Approx(emd2(q, p)).epsilon(1e-14));
    CHECK(emd2(p, q) == doctest::Approx(emd2_oracle(p, q)).epsilon(1e-12));
  }
  // Cross-entropy against a one-hot target is the same (infinite) for every
  // wrong one-hot prediction, while emd2 grows with the class distance.
  const QuantizerConfig cfg{20, 0};
  const auto target = one_hot(ClassIndex{10}, cfg);
  for (int d = 1; d + 10 <= 20; ++d) {
    CHECK(emd2(one_hot(ClassIndex{10 + d - 1}, cfg), target) <
          emd2(one_hot(ClassIndex{10 + d}, cfg), target));
  }
}

TEST_CASE("td_mse examples") {
  std::mt19937_64 rng(3);
  const auto x = random_vector(100, rng);
  CHECK(td_mse(x, x) == 0.0);
  auto shifted = x;
  for (auto& v : shifted) v += 0.7;
  CHECK(std::abs(td_mse(shifted, x)) < 1e-24 * 100 + 1e-20);
  CHECK(std::abs(td_mse(x, shifted)) < 1e-20);
  CHECK(td_mse(std::vector<double>{0, 0}, std::vector<double>{1, -1}) == 2.0);
  CHECK_THROWS(td_mse(std::vector<double>{0, 0}, std::vector<double>{1}));
}

TEST_CASE("joint_loss examples") {
  CHECK(joint_loss(0.0, 0.0) == 0.0);
  CHECK(joint_loss(0.3, 0.5) == 0.8);
  CHECK(joint_loss(123.0, 0.5, 0.0) == 0.5);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    const double a = random_vector(1, rng, 0, 10)[0], b = random_vector(1, rng, 0, 10)[0];
    CHECK(joint_loss(a, b, 1.0) == a + b);
  }
}

TEST_CASE("rank_loss examples") {
  CHECK(rank_loss(std::vector<double>{100, 0, -100}, std::vector<double>{3, 2, 1}) < 1e-40);
  CHECK(rank_loss(std::vector<double>{1, 1}, std::vector<double>{2, 1}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  // Reversed order with unit gaps: pairs (a,b) and (b,c) are off by 1, (a,c)
  // by 2, so the mean is (2 softplus(1) + softplus(2)) / 3.
  const double v = rank_loss(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1});
  CHECK(v == doctest::Approx((2 * softplus(1.0) + softplus(2.0)) / 3).epsilon(1e-14));
  CHECK(v == doctest::Approx(1.5844838).epsilon(1e-7));
  CHECK(softplus(1.0) == doctest::Approx(1.3132617).epsilon(1e-7));
  CHECK(rank_loss(std::vector<double>{1, 2}, std::vector<double>{1, 1}) == 0.0);
  CHECK_THROWS(rank_loss(std::vector<double>{1}, std::vector<double>{1}));
}

TEST_CASE("graph losses agree with the plain versions and pass gradient checks") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    std::mt19937_64 rng(seed);
    const std::size_t b = 1 + rng() % 4, n = 2 + rng() % 12, len = 4 + rng() % 40;

    std::vector<double> target;
    for (std::size_t i = 0; i < b; ++i) {
      const auto d = random_distribution(n, rng);
      target.insert(target.end(), d.begin(), d.end());
    }
    auto emd = gradient_check(
        [&](Graph<double>& g, std::span<const Var> in) {
          return ops::emd2(g, ops::softmax(g, in[0]), std::span<const double>(target));
        },
        {random_tensor({b, n}, rng, -2, 2)});
    CHECK(emd.max_rel_error < 1e-4);

    const auto reference = random_vector(b * len, rng);
    const auto weights = random_vector(b, rng, 0.0, 1.0);
    for (bool normalize : {false, true}) {
      auto td = gradient_check(
          [&](Graph<double>& g, std::span<const Var> in) {
            return ops::td_mse(g, in[0], std::span<const double>(reference),
                               std::span<const double>(weights), normalize);
          },
          {random_tensor({b, len}, rng)});
      CHECK(td.max_rel_error < 1e-4);
    }

    if (b >= 2) {
      const auto truth = random_vector(b, rng, 0, 4);
      const auto mid = QuantizerConfig{int(n), 0}.midpoints();
      auto rank = gradient_check(
          [&](Graph<double>& g, std::span<const Var> in) {
            const Var s = ops::expected_value(g, ops::softmax(g, in[0]), std::span<const double>(mid));
            return ops::rank_loss(g, s, std::span<const double>(truth));
          },
          {random_tensor({b, n}, rng, -2, 2)});
      CHECK(rank.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("graph emd2 and td_mse values match the plain implementations") {
  std::mt19937_64 rng(99);
  const std::size_t b = 3, n = 7, len = 20;
  auto p = random_vector(b * n, rng, 0, 1), q = random_vector(b * n, rng, 0, 1);
  for (std::size_t i = 0; i < b; ++i) {
    double sp = 0, sq = 0;
    for (std::size_t k = 0; k < n; ++k) sp += p[i * n + k], sq += q[i * n + k];
    for (std::size_t k = 0; k < n; ++k) p[i * n + k] /= sp, q[i * n + k] /= sq;
  }
  Graph<double> g;
  const double got = g.value(ops::emd2(g, g.constant({b, n}, p), std::span<const double>(q)))[0];
  double expect = 0;
  for (std::size_t i = 0; i < b; ++i)
    expect += emd2(std::span(p).subspan(i * n, n), std::span(q).subspan(i * n, n));
  CHECK(got == doctest::Approx(expect / b).epsilon(1e-14));

  const auto est = random_vector(b * len, rng), ref = random_vector(b * len, rng);
  const std::vector<double> w(b, 1.0);
  const double td = g.value(ops::td_mse(g, g.constant({b, len}, est), std::span<const double>(ref),
                                        std::span<const double>(w)))[0];
  double td_expect = 0;
  for (std::size_t i = 0; i < b; ++i)
    td_expect += td_mse(std::span(est).subspan(i * len, len), std::span(ref).subspan(i * len, len));
  CHECK(td == doctest::Approx(td_expect / b).epsilon(1e-14));
}
