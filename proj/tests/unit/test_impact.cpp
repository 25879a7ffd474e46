// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dgd-lab Authors

#include <doctest.h>

#include <cmath>

#include "dgd/data.hpp"
#include "dgd/errors.hpp"
#include "dgd/impact.hpp"
#include "dgd/pipeline.hpp"
#include "support.hpp"

using namespace dgd;
using namespace dgd::testing;

namespace {

Sample make_sample(int domain, int label, Tensor x) {
  return Sample{domain, label, label, std::move(x)};
}

}  // namespace

TEST_CASE("exact impact matches the brute-force network rerun") {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 2 + rng.index(7);
    const std::size_t classes = 2 + rng.index(5);
    const auto m = random_encoder(5, {6, d}, rng);
    const auto h = random_head(d, classes, rng);
    const auto x = random_tensor({5}, rng);
    const std::size_t label = rng.index(classes);
    const auto s = impact_exact(m, h, x.values(), label);
    const auto ref = ref_impact(m, h, x.storage(), label);
    for (std::size_t i = 0; i < d; ++i) CHECK(std::abs(s[i] - ref[i]) <= 1e-10);
  }
}

TEST_CASE("four-neuron model") {
  Rng rng(4);
  const auto m = random_encoder(3, {5, 4}, rng);
  const auto h = random_head(4, 3, rng);
  const auto x = random_tensor({3}, rng);
  const auto s = impact_exact(m, h, x.values(), 2);
  const auto ref = ref_impact(m, h, x.storage(), 2);
  for (std::size_t i = 0; i < 4; ++i) CHECK(s[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("silent neurons score exactly zero under both methods") {
  Rng rng(12);
  int silent = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const auto m = random_encoder(4, {6, 8}, rng);
    const auto h = random_head(8, 4, rng);
    const auto x = random_tensor({4}, rng);
    const auto g = encode(m, x);
    const auto exact = impact_exact(m, h, x.values(), 1);
    const auto taylor = impact_taylor(m, h, x.values(), 1);
    for (std::size_t i = 0; i < 8; ++i) {
      if (g[i] == 0.0) {
        CHECK(exact[i] == 0.0);
        CHECK(taylor[i] == 0.0);
        ++silent;
      }
    }
  }
  CHECK(silent > 0);
}

TEST_CASE("zero head weights give zero impact") {
  Rng rng(6);
  const auto m = random_encoder(4, {5}, rng);
  ClassifierHead h{Tensor({3, 5}, 0.0), Tensor::vector({0.1, -0.2, 0.3})};
  const auto x = random_tensor({4}, rng);
  const auto exact = impact_exact(m, h, x.values(), 0);
  const auto taylor = impact_taylor(m, h, x.values(), 0);
  for (double v : exact.values()) CHECK(v == 0.0);
  for (double v : taylor.values()) CHECK(v == 0.0);
}

TEST_CASE("zero head column gives zero Taylor impact for that neuron") {
  Rng rng(61);
  const auto m = random_encoder(4, {6, 5}, rng);
  auto h = random_head(5, 4, rng);
  for (std::size_t k = 0; k < 4; ++k) h.weights.at(k, 3) = 0.0;
  const auto x = random_tensor({4}, rng);
  CHECK(impact_taylor(m, h, x.values(), 2)[3] == 0.0);
  CHECK(impact_exact(m, h, x.values(), 2)[3] == 0.0);
}

TEST_CASE("Taylor impact uses the gradient and curvature terms") {
  Rng rng(77);
  const auto m = random_encoder(4, {6, 5}, rng);
  const auto h = random_head(5, 3, rng);
  const auto x = random_tensor({4}, rng);
  const auto g = ref_forward(m, x.storage());
  std::vector<long double> logits(3);
  long double sum = 0.0L;
  for (std::size_t k = 0; k < 3; ++k) {
    long double acc = h.bias[k];
    for (std::size_t i = 0; i < 5; ++i) acc += h.weights.at(k, i) * g[i];
    sum += (logits[k] = std::exp(acc));
  }
  const auto s = impact_taylor(m, h, x.values(), 1);
  for (std::size_t i = 0; i < 5; ++i) {
    long double grad = 0.0L, mean = 0.0L, second = 0.0L;
    for (std::size_t k = 0; k < 3; ++k) {
      const long double p = logits[k] / sum;
      const long double w = h.weights.at(k, i);
      grad += w * (p - (k == 1 ? 1.0L : 0.0L));
      mean += w * p;
      second += w * w * p;
    }
    const long double hess = second - mean * mean;
    const long double expected = -grad * g[i] + 0.5L * hess * g[i] * g[i];
    CHECK(s[i] == doctest::Approx(static_cast<double>(expected)).epsilon(1e-12));
  }
}

TEST_CASE("average_impact") {
  Rng rng(90);
  const auto m = random_encoder(4, {6, 5}, rng);
  const auto h = random_head(5, 3, rng);
  const auto a = make_sample(1, 1, random_tensor({4}, rng));
  const auto b = make_sample(1, 3, random_tensor({4}, rng));

  SUBCASE("one sample") {
    const std::vector<Sample> one{a};
    const auto avg = average_impact(m, h, one, ImpactMethod::Exact);
    CHECK(avg.scores == impact_exact(m, h, a.features.values(), 0));
    CHECK(avg.num_samples == 1);
    CHECK(avg.domain_id == 1);
  }
  SUBCASE("two samples average by hand") {
    const std::vector<Sample> two{a, b};
    const auto avg = average_impact(m, h, two, ImpactMethod::Exact);
    const auto sa = ref_impact(m, h, a.features.storage(), 0);
    const auto sb = ref_impact(m, h, b.features.storage(), 2);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(avg.scores[i] == doctest::Approx((sa[i] + sb[i]) / 2.0).epsilon(1e-10));
    }
  }
  SUBCASE("duplicating every sample keeps the mean") {
    const std::vector<Sample> once{a, b};
    const std::vector<Sample> twice{a, b, a, b};
    const auto x = average_impact(m, h, once, ImpactMethod::Taylor);
    const auto y = average_impact(m, h, twice, ImpactMethod::Taylor);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(x.scores[i] == doctest::Approx(y.scores[i]).epsilon(1e-14));
    }
  }
  SUBCASE("result does not depend on the worker count") {
    std::vector<Sample> many;
    for (int n = 0; n < 37; ++n) {
      many.push_back(make_sample(1, 1 + static_cast<int>(rng.index(3)), random_tensor({4}, rng)));
    }
    const auto serial = average_impact(m, h, many, ImpactMethod::Exact, LabelSpace::Merged, 1);
    const auto parallel = average_impact(m, h, many, ImpactMethod::Exact, LabelSpace::Merged, 4);
    CHECK(serial.scores == parallel.scores);
  }
  SUBCASE("rejections") {
    CHECK_THROWS_AS(average_impact(m, h, std::vector<Sample>{}, ImpactMethod::Exact),
                    ArgumentError);
    const std::vector<Sample> mixed{a, make_sample(2, 1, random_tensor({4}, rng))};
    CHECK_THROWS_AS(average_impact(m, h, mixed, ImpactMethod::Exact), ArgumentError);
  }
}

TEST_CASE("correlations") {
  Rng rng(256);
  std::vector<double> a(256), b(256);
  for (auto& v : a) v = rng.normal();
  for (auto& v : b) v = rng.normal();

  SUBCASE("self and negated") {
    CHECK(*pearson_correlation(a, a) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(*spearman_correlation(a, a) == doctest::Approx(1.0).epsilon(1e-14));
    std::vector<double> neg(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) neg[i] = -a[i];
    CHECK(*pearson_correlation(a, neg) == doctest::Approx(-1.0).epsilon(1e-14));
  }
  SUBCASE("independent vectors agree with the textbook formula") {
    const double r = *pearson_correlation(a, b);
    CHECK(r == doctest::Approx(ref_pearson(a, b)).epsilon(1e-12));
    CHECK(std::abs(r) < 0.2);
    CHECK(*spearman_correlation(a, b) == doctest::Approx(ref_spearman(a, b)).epsilon(1e-12));
  }
  SUBCASE("ties use average ranks") {
    const std::vector<double> x{1, 2, 2, 3, 0, 2};
    const std::vector<double> y{5, 1, 4, 4, 0, 9};
    CHECK(*spearman_correlation(x, y) == doctest::Approx(ref_spearman(x, y)).epsilon(1e-12));
  }
  SUBCASE("zero variance is undefined rather than NaN") {
    const std::vector<double> flat(10, 3.0);
    const std::vector<double> any{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    CHECK_FALSE(pearson_correlation(flat, any).has_value());
    CHECK_FALSE(spearman_correlation(flat, any).has_value());
  }
  SUBCASE("sorted curve follows the first domain") {
    ImpactScores sa{1, Tensor::vector({0.1, 0.5, -0.2, 0.3}), ImpactMethod::Taylor, 3};
    ImpactScores sb{2, Tensor::vector({1.0, 2.0, 3.0, 4.0}), ImpactMethod::Taylor, 3};
    const auto report = cross_domain_correlation(sa, sb);
    REQUIRE(report.curve.size() == 4);
    CHECK(report.curve[0].neuron == 1);
    CHECK(report.curve[1].neuron == 3);
    CHECK(report.curve[2].neuron == 0);
    CHECK(report.curve[3].neuron == 2);
    CHECK(report.curve[0].score_b == 2.0);
  }
}

TEST_CASE("non_positive_count") {
  ImpactScores s{1, Tensor::vector({0.2, -0.1, 0.0, 1e-9}), ImpactMethod::Exact, 1};
  CHECK(s.non_positive_count() == 2);
}
