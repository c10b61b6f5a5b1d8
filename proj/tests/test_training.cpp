#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "gradcheck.hpp"
#include "mcf/augment.hpp"
#include "mcf/loss.hpp"
#include "mcf/network.hpp"
#include "mcf/optimizer.hpp"
#include "mcf/schedule.hpp"
#include "mcf/synthetic.hpp"
#include "mcf/train_loop.hpp"
#include "oracle.hpp"

using mcf::Tensor;

namespace {

mcf::LabelMap labels_of(int n, int h, int w, std::vector<std::uint8_t> v) {
  return {n, h, w, std::move(v)};
}

mcf::PixelStats<double> random_stats(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  mcf::PixelStats<double> s;
  for (std::size_t i = 0; i < n; ++i) {
    const bool valid = u(rng) > 0.1;
    const double p = valid ? std::max(u(rng), 1e-6) : 1.0;
    s.valid.push_back(valid);
    s.target_prob.push_back(p);
    s.loss.push_back(valid ? -std::log(p) : 0.0);
  }
  return s;
}

mcf::ModelConfig toy_model() {
  mcf::ModelConfig c;
  c.num_classes = 4;
  c.width_multiplier = 0.25;
  c.fused_channels = 32;
  c.seed = 7;
  return c;
}

mcf::TrainConfig short_run(int iters) {
  mcf::TrainConfig t;
  t.max_iter = iters;
  t.warmup_iters = 2;
  t.augmentation.crop_h = 64;
  t.augmentation.crop_w = 64;
  t.seed = 7;
  return t;
}

mcf::SynthDatasetSpec toy_data() {
  mcf::SynthDatasetSpec s;
  s.num_images = 8;
  s.image_size = 64;
  s.num_classes = 4;
  s.seed = 7;
  return s;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("cross entropy of uniform logits is ln K") {
  for (int k : {2, 4, 19}) {
    const auto z = Tensor<double>::zeros({1, k, 2, 3});
    const auto l = labels_of(1, 2, 3, {0, 1, 0, 1, 1, 0});
    CHECK(mcf::softmax_cross_entropy(z, l).item() == doctest::Approx(std::log(k)).epsilon(1e-12));
  }
  CHECK(std::log(19.0) == doctest::Approx(2.9444).epsilon(1e-4));
}

TEST_CASE("cross entropy of a single pixel") {
  const Tensor<double> z({1, 3, 1, 1}, {1.0, 2.0, 3.0});
  const double expected = std::log(1.0 + std::exp(-1.0) + std::exp(-2.0));
  CHECK(expected == doctest::Approx(0.40761).epsilon(1e-4));
  CHECK(mcf::softmax_cross_entropy(z, labels_of(1, 1, 1, {2})).item() == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("ignored pixels give no loss and exactly zero gradient") {
  std::mt19937_64 rng(1);
  Tensor<double> z = gradcheck::random_tensor({1, 3, 2, 2}, rng, -3, 3);
  const auto l = labels_of(1, 2, 2, {0, mcf::kIgnoreLabel, 2, mcf::kIgnoreLabel});
  const auto loss = mcf::softmax_cross_entropy(z, l);
  mcf::backward(loss);
  for (int c = 0; c < 3; ++c) {
    CHECK(z.grad()[c * 4 + 1] == 0.0);
    CHECK(z.grad()[c * 4 + 3] == 0.0);
  }
  const auto stats = mcf::pixel_cross_entropy(z, l);
  CHECK(stats.loss[1] == 0.0);
  CHECK(stats.valid[1] == 0);
  CHECK(loss.item() == doctest::Approx((stats.loss[0] + stats.loss[2]) / 2).epsilon(1e-14));
}

TEST_CASE("all pixels ignored gives zero loss and zero gradient") {
  std::mt19937_64 rng(2);
  Tensor<double> z = gradcheck::random_tensor({1, 3, 2, 2}, rng);
  const auto loss = mcf::softmax_cross_entropy(z, labels_of(1, 2, 2, std::vector<std::uint8_t>(4, mcf::kIgnoreLabel)));
  CHECK(loss.item() == 0.0);
  mcf::backward(loss);
  for (double g : z.grad()) CHECK(g == 0.0);
}

TEST_CASE("cross entropy rejects bad inputs") {
  CHECK_THROWS_AS(mcf::softmax_cross_entropy(Tensor<double>::zeros({1, 1, 2, 2}), labels_of(1, 2, 2, {0, 0, 0, 0})),
                  mcf::ShapeError);
  CHECK_THROWS_AS(mcf::softmax_cross_entropy(Tensor<double>::zeros({1, 3, 2, 2}), labels_of(1, 2, 1, {0, 0})),
                  mcf::ShapeError);
  CHECK_THROWS(mcf::softmax_cross_entropy(Tensor<double>::zeros({1, 3, 1, 1}), labels_of(1, 1, 1, {3})));
}

TEST_CASE("softmax sums to one and survives huge logits") {
  std::mt19937_64 rng(3);
  for (double scale : {1.0, 100.0, 1e4}) {
    Tensor<double> z = gradcheck::random_tensor({2, 5, 3, 3}, rng, -scale, scale);
    const auto p = mcf::softmax_channels(z);
    for (int n = 0; n < 2; ++n) {
      for (int i = 0; i < 9; ++i) {
        double s = 0;
        for (int c = 0; c < 5; ++c) {
          const double v = p[(n * 5 + c) * 9 + i];
          CHECK(std::isfinite(v));
          s += v;
        }
        CHECK(std::abs(s - 1.0) <= 1e-6);
      }
    }
    const Tensor<float> zf({1, 2, 1, 1}, {static_cast<float>(scale), static_cast<float>(-scale)});
    const float loss = mcf::softmax_cross_entropy(zf, labels_of(1, 1, 1, {1})).item();
    CHECK(std::isfinite(loss));
    CHECK(loss == doctest::Approx(2 * scale + std::log1p(std::exp(-2 * scale))).epsilon(1e-5));
  }
}

TEST_CASE("OHEM matches a sort-based reference") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = random_stats(seed, 64);
    for (double threshold : {0.2, 0.5, 0.7}) {
      for (std::size_t min_kept : {std::size_t{1}, std::size_t{4}, std::size_t{20}, std::size_t{40}}) {
        CAPTURE(seed);
        CHECK(mcf::ohem_filter(s, threshold, min_kept) == ref::ohem_keep(s, threshold, min_kept));
      }
    }
  }
}

TEST_CASE("OHEM fallback and vacuous threshold") {
  mcf::PixelStats<double> s;
  s.loss = {0.0, 0.0, 0.0, 0.0, 0.0};
  s.target_prob = {1.0, 1.0, 1.0, 1.0, 1.0};
  s.valid = {1, 1, 1, 1, 1};
  const auto keep = mcf::ohem_filter(s, 0.7, 3);
  CHECK(std::accumulate(keep.begin(), keep.end(), 0) == 3);
  CHECK(keep == std::vector<std::uint8_t>{1, 1, 1, 0, 0});

  const auto r = random_stats(9, 64);
  const auto all = mcf::ohem_filter(r, 1.0, 1);
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == (r.valid[i] && r.target_prob[i] < 1.0));
  CHECK_THROWS(mcf::ohem_filter(r, 0.7, 0));
}

TEST_CASE("poly schedule values") {
  const auto s = mcf::LRSchedule::poly_with_warmup(2.5e-2, 0.9, 1000, 0, 0.1);
  CHECK(mcf::lr_at(500, s) == doctest::Approx(1.33974e-2).epsilon(1e-5));
  CHECK(mcf::lr_at(0, s) == 2.5e-2);
  CHECK(mcf::lr_at(1000, s) == 0.0);
  CHECK(mcf::lr_at(1001, s) == 0.0);
  CHECK_THROWS(mcf::lr_at(-1, s));
}

TEST_CASE("warmup boundary and start") {
  const auto s = mcf::LRSchedule::poly_with_warmup(2.5e-2, 0.9, 1000, 100, 0.1);
  CHECK(s.lr_max == doctest::Approx(2.5e-2 * std::pow(0.9, 0.9)).epsilon(1e-14));
  CHECK(mcf::lr_at(100, s) == doctest::Approx(s.lr_max).epsilon(1e-15));
  CHECK(mcf::lr_at(0, s) == doctest::Approx(s.lr_max * 0.1).epsilon(1e-15));
  CHECK(mcf::lr_at(99, s) / mcf::lr_at(100, s) == doctest::Approx(std::pow(0.1, 0.01)).epsilon(1e-12));
}

TEST_CASE("schedule rises through warmup then decays") {
  const auto s = mcf::LRSchedule::poly_with_warmup(2.5e-2, 0.9, 1000, 100, 0.1);
  for (int i = 1; i < 100; ++i) CHECK(mcf::lr_at(i, s) > mcf::lr_at(i - 1, s));
  for (int i = 101; i < 1000; ++i) CHECK(mcf::lr_at(i, s) < mcf::lr_at(i - 1, s));
  for (int i = 0; i <= 1000; ++i) {
    CHECK(std::abs(mcf::lr_at(i, s) - ref::learning_rate(i, 2.5e-2, 0.9, 1000, 100, 0.1)) <= 1e-12);
  }
}

TEST_CASE("schedule validation") {
  CHECK_THROWS(mcf::LRSchedule::poly_with_warmup(2.5e-2, 0.9, 100, 100, 0.1));
  CHECK_THROWS(mcf::LRSchedule::poly_with_warmup(2.5e-2, 0.9, 100, 10, 0.0));
  CHECK_THROWS(mcf::LRSchedule::poly_with_warmup(2.5e-2, 0.9, 100, 10, 1.5));
}

TEST_CASE("plain gradient descent and fixed point") {
  mcf::ParameterSet<double> set;
  Tensor<double> p({2}, {1.0, -2.0}, true);
  set.add_parameter("p", p, true);
  mcf::Sgd<double> sgd({0.0, 0.0});
  p.mutable_grad()[0] = 0.5;
  p.mutable_grad()[1] = -1.0;
  sgd.step(set, 0.1);
  CHECK(p.data()[0] == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(p.data()[1] == doctest::Approx(-1.9).epsilon(1e-15));

  mcf::ParameterSet<double> still;
  Tensor<double> q({1}, {3.0}, true);
  still.add_parameter("q", q, false);
  mcf::Sgd<double> momentum({0.9, 1e-4});
  q.mutable_grad()[0] = 0.0;
  momentum.step(still, 0.1);
  CHECK(q.data()[0] == 3.0);
}

TEST_CASE("momentum and decay follow the unrolled recurrence") {
  mcf::ParameterSet<double> set;
  Tensor<double> w({1}, {2.0}, true), b({1}, {2.0}, true);
  set.add_parameter("w", w, true);
  set.add_parameter("b", b, false);
  const double mu = 0.9, wd = 1e-4, lr = 0.05, g1 = 0.3, g2 = -0.7;
  mcf::Sgd<double> sgd({mu, wd});
  w.mutable_grad()[0] = g1;
  b.mutable_grad()[0] = g1;
  sgd.step(set, lr);
  w.mutable_grad()[0] = g2;
  b.mutable_grad()[0] = g2;
  sgd.step(set, lr);

  double p = 2.0, v = 0.0;
  v = mu * v + g1 + wd * p;
  p = p - lr * v;
  v = mu * v + g2 + wd * p;
  p = p - lr * v;
  CHECK(w.data()[0] == p);

  double pb = 2.0, vb = 0.0;
  vb = mu * vb + g1;
  pb = pb - lr * vb;
  vb = mu * vb + g2;
  pb = pb - lr * vb;
  CHECK(b.data()[0] == pb);
}

TEST_CASE("non-finite gradient aborts the step untouched") {
  mcf::ParameterSet<double> set;
  Tensor<double> a({2}, {1.0, 2.0}, true), b({1}, {3.0}, true);
  set.add_parameter("a", a, true);
  set.add_parameter("b", b, true);
  a.mutable_grad()[0] = 1.0;
  b.mutable_grad()[0] = std::numeric_limits<double>::quiet_NaN();
  mcf::Sgd<double> sgd;
  CHECK_THROWS_AS(sgd.step(set, 0.1), mcf::NumericError);
  CHECK(a.data()[0] == 1.0);
  CHECK(b.data()[0] == 3.0);
}

TEST_CASE("weight decay flags") {
  mcf::Mcfnet<float> model(toy_model());
  auto set = model.parameters();
  for (const auto& p : set.parameters()) {
    const bool decayed = p.name.ends_with(".weight") || p.name.ends_with(".gamma");
    CHECK(p.weight_decay == decayed);
  }
}

TEST_CASE("flip twice restores the sample") {
  const auto data = mcf::generate_synthetic_dataset(toy_data());
  const auto& s = data[0];
  const auto once = mcf::hflip(s), twice = mcf::hflip(once);
  CHECK(twice.image == s.image);
  CHECK(twice.label == s.label);
  CHECK(once.label != s.label);
  CHECK(once.label[5] == s.label[s.width - 6]);
}

TEST_CASE("augmentation keeps label values and image range") {
  const auto data = mcf::generate_synthetic_dataset(toy_data());
  mcf::AugmentConfig cfg;
  cfg.crop_h = 64;
  cfg.crop_w = 64;
  mcf::Rng rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const auto& s = data[trial % data.size()];
    const std::set<std::uint8_t> original(s.label.begin(), s.label.end());
    const auto a = mcf::augment(s, cfg, rng);
    CHECK(a.height == 64);
    CHECK(a.width == 64);
    for (auto v : a.label) CHECK((original.contains(v) || v == mcf::kIgnoreLabel));
    for (float v : a.image) CHECK((v >= 0.0f && v <= 1.0f));
  }
}

TEST_CASE("augmentation without scaling keeps the label multiset") {
  const auto data = mcf::generate_synthetic_dataset(toy_data());
  mcf::AugmentConfig cfg;
  cfg.scales = {1.0};
  cfg.crop_h = 64;
  cfg.crop_w = 64;
  mcf::Rng rng(6);
  for (const auto& s : data) {
    auto a = mcf::augment(s, cfg, rng);
    auto sorted_in = s.label;
    std::sort(a.label.begin(), a.label.end());
    std::sort(sorted_in.begin(), sorted_in.end());
    CHECK(a.label == sorted_in);
  }
}

TEST_CASE("augmentation is deterministic under a seed") {
  const auto data = mcf::generate_synthetic_dataset(toy_data());
  mcf::AugmentConfig cfg;
  cfg.crop_h = 32;
  cfg.crop_w = 32;
  mcf::Rng r1(11), r2(11);
  for (int i = 0; i < 5; ++i) {
    const auto a = mcf::augment(data[0], cfg, r1), b = mcf::augment(data[0], cfg, r2);
    CHECK(a.image == b.image);
    CHECK(a.label == b.label);
  }
}

TEST_CASE("crop pads outside the sample") {
  const auto data = mcf::generate_synthetic_dataset(toy_data());
  const auto c = mcf::crop(data[0], 60, 60, 8, 8);
  CHECK(c.label[0] == data[0].label[60 * 64 + 60]);
  CHECK(c.label[7 * 8 + 7] == mcf::kIgnoreLabel);
  CHECK(c.image[7 * 8 + 7] == 0.0f);
}

TEST_CASE("synthetic data is deterministic and well formed") {
  const auto a = mcf::generate_synthetic_dataset(toy_data());
  const auto b = mcf::generate_synthetic_dataset(toy_data());
  REQUIRE(a.size() == 8);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::memcmp(a[i].image.data(), b[i].image.data(), a[i].image.size() * sizeof(float)) == 0);
    CHECK(a[i].label == b[i].label);
    for (auto v : a[i].label) CHECK(v < 4);
  }
  auto other = toy_data();
  other.seed = 8;
  CHECK(mcf::generate_synthetic_dataset(other)[0].label != a[0].label);
  other = toy_data();
  other.num_classes = 1;
  CHECK_THROWS_AS(mcf::generate_synthetic_dataset(other), mcf::ConfigError);
}

TEST_CASE("every class covers more than 1% of pixels over 100 images") {
  auto spec = toy_data();
  spec.num_images = 100;
  for (int k : {2, 4, 8}) {
    spec.num_classes = k;
    const auto data = mcf::generate_synthetic_dataset(spec);
    std::vector<double> count(k, 0.0);
    double total = 0;
    for (const auto& s : data) {
      for (auto v : s.label) {
        count[v] += 1;
        total += 1;
      }
    }
    for (int c = 0; c < k; ++c) {
      CAPTURE(k);
      CAPTURE(c);
      CHECK(count[c] / total > 0.01);
    }
  }
}

TEST_CASE("first training loss is near ln K and short runs are reproducible") {
  const auto data = mcf::generate_synthetic_dataset(toy_data());
  auto run = [&] {
    mcf::Mcfnet<float> model(toy_model());
    return mcf::train_loop(model, data, short_run(10));
  };
  const auto a = run(), b = run();
  REQUIRE(a.size() == 10);
  CHECK(std::abs(a[0].loss - std::log(4.0)) <= 0.2 * std::log(4.0));
  for (int i = 0; i < 10; ++i) {
    CHECK(a[i].iter == i);
    CHECK(std::memcmp(&a[i].loss, &b[i].loss, sizeof(double)) == 0);
    CHECK(a[i].lr == mcf::lr_at(i, short_run(10).schedule()));
  }
}

TEST_CASE("training log rows") {
  std::ostringstream os;
  mcf::write_training_csv_header(os);
  mcf::write_training_csv_row(os, {3, 0.0125, 1.5});
  std::istringstream in(os.str());
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "iter,lr,loss");
  CHECK(row.starts_with("3,"));
  CHECK(std::count(row.begin(), row.end(), ',') == 2);
}

TEST_CASE("train config validation") {
  auto t = short_run(10);
  t.batch_size = 0;
  CHECK_THROWS_AS(t.validate(), mcf::ConfigError);
  t = short_run(10);
  t.ohem.threshold = 1.5;
  CHECK_THROWS_AS(t.validate(), mcf::ConfigError);
  t = short_run(10);
  t.warmup_iters = 10;
  CHECK_THROWS(t.validate());
  mcf::Mcfnet<float> model(toy_model());
  CHECK_THROWS(mcf::train_loop(model, {}, short_run(10)));
}

}  // TEST_SUITE
