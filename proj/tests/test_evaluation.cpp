#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "mcf/confusion.hpp"
#include "mcf/image_io.hpp"
#include "mcf/ops.hpp"
#include "mcf/profile.hpp"
#include "mcf/synthetic.hpp"

namespace fs = std::filesystem;

namespace {

using Bytes = std::vector<std::uint8_t>;

// The 10-pixel grid behind [[3,1],[2,4]]: four pixels of class 0, six of class 1.
const Bytes kGridTruth{0, 0, 0, 0, 1, 1, 1, 1, 1, 1};
const Bytes kGridPred{0, 0, 0, 1, 0, 0, 1, 1, 1, 1};

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "mcf_eval_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Bytes random_labels(std::mt19937_64& rng, std::size_t n, int k, bool with_ignore) {
  Bytes v(n);
  for (auto& x : v) {
    const int c = static_cast<int>(rng() % (k + (with_ignore ? 1 : 0)));
    x = c == k ? mcf::kIgnoreLabel : static_cast<std::uint8_t>(c);
  }
  return v;
}

mcf::ModelConfig small_model() {
  mcf::ModelConfig c;
  c.num_classes = 4;
  c.width_multiplier = 0.125;
  c.fused_channels = 8;
  return c;
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("hand-counted grid") {
  mcf::ConfusionMatrix cm(2);
  cm.update(kGridPred, kGridTruth);
  CHECK(cm.at(0, 0) == 3);
  CHECK(cm.at(0, 1) == 1);
  CHECK(cm.at(1, 0) == 2);
  CHECK(cm.at(1, 1) == 4);
  const auto r = mcf::mean_iou(cm);
  CHECK(r.per_class[0] == 0.5);
  CHECK(r.per_class[1] == 4.0 / 7.0);
  CHECK(std::abs(r.miou - 0.5357142857142857) <= 1e-9);
  CHECK(cm.pixel_accuracy() == 0.7);
}

TEST_CASE("perfect prediction fills only the diagonal") {
  std::mt19937_64 rng(1);
  const Bytes truth = random_labels(rng, 500, 5, true);
  Bytes pred = truth;
  for (auto& p : pred) {
    if (p == mcf::kIgnoreLabel) p = 0;
  }
  mcf::ConfusionMatrix cm(5);
  cm.update(pred, truth);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      if (i != j) CHECK(cm.at(i, j) == 0);
    }
  }
  const auto r = mcf::mean_iou(cm);
  CHECK(r.miou == 1.0);
  for (double v : r.per_class) CHECK(v == 1.0);
}

TEST_CASE("ignored pixels leave counts unchanged") {
  mcf::ConfusionMatrix a(3), b(3);
  a.update(Bytes{0, 1, 2}, Bytes{0, 1, 1});
  b.update(Bytes{0, 1, 2, 2, 0}, Bytes{0, 1, 1, mcf::kIgnoreLabel, mcf::kIgnoreLabel});
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) CHECK(a.at(i, j) == b.at(i, j));
  }
  CHECK(b.total() == 3);
}

TEST_CASE("accumulation is additive and order independent") {
  std::mt19937_64 rng(2);
  const Bytes truth = random_labels(rng, 1000, 4, true), pred = random_labels(rng, 1000, 4, false);
  mcf::ConfusionMatrix whole(4), halves(4), left(4), right(4), reversed(4);
  whole.update(pred, truth);
  halves.update(std::span(pred).first(400), std::span(truth).first(400));
  halves.update(std::span(pred).subspan(400), std::span(truth).subspan(400));
  left.update(std::span(pred).first(700), std::span(truth).first(700));
  right.update(std::span(pred).subspan(700), std::span(truth).subspan(700));
  left.merge(right);
  reversed.update(std::span(pred).subspan(500), std::span(truth).subspan(500));
  reversed.update(std::span(pred).first(500), std::span(truth).first(500));
  std::uint64_t valid = 0;
  for (auto t : truth) valid += t != mcf::kIgnoreLabel;
  CHECK(whole.total() == valid);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      CHECK(halves.at(i, j) == whole.at(i, j));
      CHECK(left.at(i, j) == whole.at(i, j));
      CHECK(reversed.at(i, j) == whole.at(i, j));
    }
  }
}

TEST_CASE("out of range values are rejected") {
  mcf::ConfusionMatrix cm(3);
  CHECK_THROWS(cm.update(Bytes{3}, Bytes{0}));
  CHECK_THROWS(cm.update(Bytes{0}, Bytes{7}));
  CHECK_THROWS(cm.update(Bytes{0, 1}, Bytes{0}));
  mcf::ConfusionMatrix other(4);
  CHECK_THROWS(cm.merge(other));
}

TEST_CASE("never-correct class has zero IoU and absent classes are skipped") {
  mcf::ConfusionMatrix cm(4);
  cm.update(Bytes{0, 0, 1, 1}, Bytes{0, 2, 1, 1});
  const auto r = mcf::mean_iou(cm);
  CHECK(r.per_class[2] == 0.0);
  CHECK(std::isnan(r.per_class[3]));
  CHECK(r.classes_counted == 3);
  CHECK(r.miou == doctest::Approx((0.5 + 1.0 + 0.0) / 3).epsilon(1e-15));
}

TEST_CASE("empty matrix is an error") {
  mcf::ConfusionMatrix cm(3);
  CHECK_THROWS(mcf::mean_iou(cm));
}

TEST_CASE("background exclusion") {
  mcf::ConfusionMatrix cm(2);
  cm.update(kGridPred, kGridTruth);
  const auto r = mcf::mean_iou(cm, true);
  CHECK(r.miou == 4.0 / 7.0);
  CHECK(r.classes_counted == 1);
}

TEST_CASE("mIoU is in range and invariant under class relabelling") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Bytes truth = random_labels(rng, 300, 5, true), pred = random_labels(rng, 300, 5, false);
    std::array<std::uint8_t, 5> perm{0, 1, 2, 3, 4};
    std::shuffle(perm.begin(), perm.end(), rng);
    Bytes pt = truth, pp = pred;
    for (auto& v : pt) {
      if (v != mcf::kIgnoreLabel) v = perm[v];
    }
    for (auto& v : pp) v = perm[v];
    mcf::ConfusionMatrix a(5), b(5);
    a.update(pred, truth);
    b.update(pp, pt);
    const double m = mcf::mean_iou(a).miou;
    CHECK(m >= 0.0);
    CHECK(m < 1.0);
    CHECK(mcf::mean_iou(b).miou == doctest::Approx(m).epsilon(1e-15));
  }
}

TEST_CASE("fps definition") {
  CHECK(mcf::fps_from(100, 2.0) == 50.0);
  CHECK_THROWS(mcf::fps_from(10, 0.0));
}

TEST_CASE("small conv cost") {
  mcf::Rng rng(1);
  mcf::Conv2d<float> conv(3, 8, 3, 1, 1, rng);
  mcf::ParameterSet<float> set;
  conv.collect(set, "conv");
  CHECK(set.parameter_count() == 224);
  mcf::MacTrace trace;
  conv.forward(mcf::Tensor<float>::zeros({1, 3, 4, 4}));
  CHECK(trace.total() == 3456);
}

TEST_CASE("fps falls as resolution grows") {
  mcf::Mcfnet<float> model(small_model());
  const double f32 = mcf::fps_benchmark(model, 32, 32, 1, 5).fps;
  const double f64 = mcf::fps_benchmark(model, 64, 64, 1, 5).fps;
  const double f128 = mcf::fps_benchmark(model, 128, 128, 1, 3).fps;
  CHECK(f32 > 0);
  CHECK(f32 >= f64);
  CHECK(f64 >= f128);
}

TEST_CASE("warmup runs stay out of the timing") {
  mcf::Mcfnet<float> model(small_model());
  const auto a = mcf::fps_benchmark(model, 64, 64, 1, 5);
  const auto b = mcf::fps_benchmark(model, 64, 64, 10, 5);
  CHECK(a.timed_runs == 5);
  CHECK(b.timed_runs == 5);
  CHECK(b.mean_seconds < 2.0 * a.mean_seconds);
  CHECK(a.mean_seconds < 2.0 * b.mean_seconds);
  CHECK(a.stddev_seconds >= 0);
  CHECK_THROWS(mcf::fps_benchmark(model, 64, 64, 1, 0));
}

TEST_CASE("png round trip") {
  const fs::path dir = fresh_dir("png");
  mcf::Image8 rgb{5, 3, 3, {}};
  for (int i = 0; i < 45; ++i) rgb.pixels.push_back(static_cast<std::uint8_t>(i * 5));
  mcf::write_png(dir / "a.png", rgb);
  const auto back = mcf::read_png(dir / "a.png", 3);
  CHECK(back.width == 5);
  CHECK(back.height == 3);
  CHECK(back.pixels == rgb.pixels);
  CHECK_THROWS_AS(mcf::read_png(dir / "none.png", 3), mcf::ImageIoError);
}

TEST_CASE("directory dataset") {
  const fs::path empty = fresh_dir("empty");
  CHECK(mcf::load_directory_dataset(empty).empty());

  mcf::SynthDatasetSpec spec;
  spec.num_images = 3;
  spec.image_size = 32;
  spec.seed = 4;
  auto samples = mcf::generate_synthetic_dataset(spec);
  samples[1].label[7] = mcf::kIgnoreLabel;
  const fs::path dir = fresh_dir("roundtrip");
  mcf::write_directory_dataset(dir, samples);
  const auto loaded = mcf::load_directory_dataset(dir);
  REQUIRE(loaded.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(loaded[i].label == samples[i].label);
    CHECK(loaded[i].height == 32);
    for (std::size_t k = 0; k < samples[i].image.size(); ++k) {
      CHECK(std::abs(loaded[i].image[k] - samples[i].image[k]) <= 0.5f / 255.0f + 1e-6f);
    }
  }
  CHECK(loaded[1].label[7] == 255);

  fs::remove(dir / fs::directory_iterator(dir)->path().filename());
  CHECK_THROWS_AS(mcf::load_directory_dataset(dir), mcf::DatasetError);
}

TEST_CASE("mismatched image and label sizes name the stem") {
  const fs::path dir = fresh_dir("mismatch");
  mcf::write_png(dir / "x_img.png", mcf::Image8{4, 4, 3, Bytes(48, 10)});
  mcf::write_png(dir / "x_lab.png", mcf::Image8{4, 2, 1, Bytes(8, 1)});
  try {
    mcf::load_directory_dataset(dir);
    FAIL("expected DatasetError");
  } catch (const mcf::DatasetError& e) {
    CHECK(std::string(e.what()).find("x") != std::string::npos);
  }
}

}  // TEST_SUITE
