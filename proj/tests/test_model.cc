#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <random>

#include "doctest.h"
#include "metricnet/data.h"
#include "metricnet/errors.h"
#include "metricnet/gradcheck.h"
#include "metricnet/losses.h"
#include "metricnet/model.h"
#include "metricnet/ops.h"
#include "test_util.h"

using namespace metricnet;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.bottleneck_channels = 8;
  c.dconv_channels = 16;
  c.blocks_per_repeat = 2;
  c.repeats = 1;
  c.n_classes_total = 10;
  return c;
}

Waveform noise_waveform(std::size_t n, std::uint64_t seed, double amp = 0.3) {
  std::mt19937_64 rng(seed);
  return Waveform{metricnet::testing::random_vector(n, rng, -amp, amp), 16000};
}

// Moves every parameter off its structured init (zero heads, unit gains) so
// every gradient path carries signal.
template <typename Real>
void jitter(ParamSet<Real>& p, std::uint64_t seed, double amount) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amount, amount);
  for (auto& [name, t] : p.params())
    for (auto& v : t.values) v = static_cast<Real>(v + u(rng));
}

}  // namespace

TEST_CASE("default config shapes and valid distribution") {
  const ModelConfig cfg;
  CHECK(cfg.receptive_field() == 2041);
  for (int b = 0; b < cfg.blocks_per_repeat; ++b) CHECK(ModelConfig::dilation(b) == (1 << b));
  const MetricNet<float> net(cfg);
  auto params = net.init_params(1);
  jitter(params, 2, 0.05);
  const QuantizerConfig q{100, 0};
  const Prediction p = predict(net, params, q, noise_waveform(16000, 3));
  CHECK(p.frames == 61);
  CHECK(p.logits.size() == 100 * 61);
  CHECK(p.pooled.size() == 100);
  double s = 0;
  for (double v : p.distribution) {
    CHECK(v >= 0.0);
    s += v;
  }
  CHECK(std::abs(s - 1.0) < 1e-6);  // float32 network
}

TEST_CASE("pooled logits are the frame mean and the distribution is their softmax") {
  const MetricNet<double> net(tiny_config());
  auto params = net.init_params(4);
  jitter(params, 5, 0.2);
  const QuantizerConfig q{10, 0};
  const Prediction p = predict(net, params, q, noise_waveform(8000, 6));
  double z = 0;
  for (int n = 0; n < 10; ++n) {
    double m = 0;
    for (int t = 0; t < p.frames; ++t) m += p.logits[n * p.frames + t];
    CHECK(p.pooled[n] == doctest::Approx(m / p.frames).epsilon(1e-12));
    z += std::exp(p.pooled[n]);
  }
  double s = 0;
  for (int n = 0; n < 10; ++n) {
    CHECK(p.distribution[n] == doctest::Approx(std::exp(p.pooled[n]) / z).epsilon(1e-12));
    s += p.distribution[n];
  }
  CHECK(std::abs(s - 1.0) < 1e-9);
}

TEST_CASE("fresh initialization gives the identity mask and a uniform distribution") {
  const MetricNet<double> net(tiny_config());
  const auto params = net.init_params(7);
  const QuantizerConfig q{10, 0};
  const Waveform w = noise_waveform(16000, 8);
  const Prediction p = predict(net, params, q, w, true);
  const Waveform roundtrip = istft(stft(w, StftConfig{}), StftConfig{}, 16000);
  REQUIRE(p.reconstruction.size() == roundtrip.size());
  for (std::size_t i = 0; i < roundtrip.size(); ++i)
    CHECK(p.reconstruction.samples[i] == doctest::Approx(roundtrip.samples[i]).epsilon(1e-12));
  CHECK(std::abs(p.score_expect - 2.0) < 1e-9);
  CHECK(std::abs(predict_quality(net, params, q, w, Decoder::kExpect).value() - 2.0) < 1e-9);
}

TEST_CASE("eval-mode prediction is bitwise deterministic") {
  const MetricNet<float> net(tiny_config());
  auto params = net.init_params(9);
  jitter(params, 10, 0.1);
  const QuantizerConfig q{10, 0};
  const Waveform w = noise_waveform(9000, 11);
  const Prediction a = predict(net, params, q, w, true), b = predict(net, params, q, w, true);
  CHECK(a.logits == b.logits);
  CHECK(a.distribution == b.distribution);
  CHECK(a.reconstruction.samples == b.reconstruction.samples);
}

TEST_CASE("conv block with zero weights is the identity") {
  ModelConfig cfg = tiny_config();
  const MetricNet<double> net(cfg);
  auto params = net.init_params(12);
  for (auto& [name, t] : params.params()) {
    if (name.rfind("blocks.", 0) == 0 && name.find("weight") != std::string::npos)
      std::fill(t.values.begin(), t.values.end(), 0.0);
    if (name.rfind("blocks.", 0) == 0 && (name.find("bias") != std::string::npos ||
                                         name.find("beta") != std::string::npos))
      std::fill(t.values.begin(), t.values.end(), 0.0);
  }
  std::mt19937_64 rng(13);
  const auto x = metricnet::testing::random_tensor({2, 8, 15}, rng);
  for (ops::Mode mode : {ops::Mode::kEval, ops::Mode::kTrain}) {
    Graph<double> g;
    const Var y = net.trunk(g, params, g.constant(x), mode);
    const auto out = g.value(y);
    CHECK(std::vector<double>(out.begin(), out.end()) == x.values);
    CHECK(g.shape(y) == x.shape);
  }
}

TEST_CASE("trunk keeps the frame count for every config") {
  for (int x : {1, 3, 5}) {
    for (int r : {1, 2}) {
      ModelConfig cfg = tiny_config();
      cfg.blocks_per_repeat = x;
      cfg.repeats = r;
      const MetricNet<double> net(cfg);
      auto params = net.init_params(14);
      jitter(params, 15, 0.1);
      for (std::size_t t : {1u, 2u, 17u}) {
        std::mt19937_64 rng(t);
        Graph<double> g;
        const Var y = net.trunk(g, params, g.constant(metricnet::testing::random_tensor({1, 8, t}, rng)),
                                ops::Mode::kEval);
        CHECK(g.shape(y) == Shape{1, 8, t});
      }
    }
  }
}

TEST_CASE("trunk receptive field spans 2041 frames for the default layout") {
  // A single-channel stack with all-ones kernels, unit PReLU slopes and
  // identity norms is linear with non-negative taps, so the support of its
  // impulse response is exactly the receptive field.
  ModelConfig cfg;
  cfg.bottleneck_channels = 1;
  cfg.dconv_channels = 1;
  const MetricNet<double> net(cfg);
  auto params = net.init_params(0);
  for (auto& [name, t] : params.params()) {
    const bool ones = name.find("weight") != std::string::npos ||
                      name.find("slope") != std::string::npos ||
                      name.find("gamma") != std::string::npos;
    std::fill(t.values.begin(), t.values.end(), ones ? 1.0 : 0.0);
  }
  for (auto& [name, t] : params.buffers()) {
    const bool var = name.find("running_var") != std::string::npos;
    std::fill(t.values.begin(), t.values.end(), var ? 1.0 - 1e-5 : 0.0);
  }
  const std::size_t T = 4101, centre = 2050;
  std::vector<double> x(T, 0.0);
  x[centre] = 1.0;
  Graph<double> g;
  const auto y = g.value(net.trunk(g, params, g.constant({1, 1, T}, x), ops::Mode::kEval));
  std::size_t first = T, last = 0;
  for (std::size_t t = 0; t < T; ++t) {
    if (y[t] != 0.0) {
      first = std::min(first, t);
      last = std::max(last, t);
    }
  }
  CHECK(last - first + 1 == 2041);
  CHECK(centre - first == 1020);
}

TEST_CASE("decoders are invariant to a constant logit shift") {
  const MetricNet<double> net(tiny_config());
  auto params = net.init_params(16);
  jitter(params, 17, 0.3);
  const QuantizerConfig q{10, 0};
  const Waveform w = noise_waveform(7000, 18);
  const Prediction a = predict(net, params, q, w);
  for (auto& v : params.at("quality.bias").values) v += 7.3;
  const Prediction b = predict(net, params, q, w);
  CHECK(std::abs(a.score_expect - b.score_expect) < 1e-9);
  CHECK(std::abs(a.score_max - b.score_max) < 1e-9);
  CHECK(std::abs(b.pooled[0] - a.pooled[0] - 7.3) < 1e-9);
}

TEST_CASE("doubling a periodic input only moves pooled logits through edge frames") {
  const ModelConfig cfg = tiny_config();
  const MetricNet<double> net(cfg);
  auto params = net.init_params(19);
  jitter(params, 20, 0.3);
  const QuantizerConfig q{10, 0};
  // Period 128 divides the hop, so every STFT frame is identical.
  std::mt19937_64 rng(21);
  const auto period = metricnet::testing::random_vector(128, rng, -0.5, 0.5);
  Waveform once{{}, 16000}, twice{{}, 16000};
  for (int k = 0; k < 40; ++k) once.samples.insert(once.samples.end(), period.begin(), period.end());
  for (int k = 0; k < 80; ++k) twice.samples.insert(twice.samples.end(), period.begin(), period.end());
  const Prediction a = predict(net, params, q, once), b = predict(net, params, q, twice);
  const double edge = cfg.receptive_field() - 1;
  for (int n = 0; n < 10; ++n) {
    double lo = 1e300, hi = -1e300;
    for (const Prediction* p : {&a, &b})
      for (int t = 0; t < p->frames; ++t) {
        lo = std::min(lo, p->logits[n * p->frames + t]);
        hi = std::max(hi, p->logits[n * p->frames + t]);
      }
    const double bound = (edge / a.frames + edge / b.frames) * (hi - lo);
    CHECK(std::abs(a.pooled[n] - b.pooled[n]) <= bound + 1e-12);
  }
  // Interior frames agree exactly up to rounding.
  const int mid_a = a.frames / 2, mid_b = b.frames / 2;
  for (int n = 0; n < 10; ++n)
    CHECK(a.logits[n * a.frames + mid_a] == doctest::Approx(b.logits[n * b.frames + mid_b]).epsilon(1e-12));
}

TEST_CASE("end-to-end joint loss passes the gradient check on the tiny config") {
  const ModelConfig cfg = tiny_config();
  const MetricNet<double> net(cfg);
  auto params = net.init_params(22);
  jitter(params, 23, 0.2);
  const QuantizerConfig q{10, 0};
  std::vector<Waveform> batch;
  for (int i = 0; i < 2; ++i) {
    const Waveform clean = synth_clean(static_cast<SignalKind>(i), 0.2, 24 + i, 16000);
    const Waveform noise = synth_noise(NoiseKind::kWhite, 0.2, 26 + i, 16000);
    batch.push_back(mix_at_snr(clean, noise, 5.0).mixture);
  }
  const auto feats = net.features(batch);
  std::vector<double> target;
  for (double label : {1.3, 3.9}) {
    const auto d = make_label(QualityScore(label), q, LabelKind::kOneHot);
    target.insert(target.end(), d.begin(), d.end());
  }
  const std::vector<double> weights = {1.0, 1.0};
  for (ops::Mode mode : {ops::Mode::kTrain, ops::Mode::kEval}) {
    // Central differences resolve a gradient only to about eps * loss / step,
    // so the reconstruction target sits near the current estimate (residual
    // amplitude 0.01) to keep the TD-MSE term well conditioned.
    std::vector<double> reference;
    {
      Graph<double> g;
      const auto est = g.value(net.forward(g, params, feats, mode).reconstruction);
      reference.assign(est.begin(), est.end());
      std::mt19937_64 rng(28);
      std::uniform_real_distribution<double> u(-0.01, 0.01);
      for (auto& v : reference) v += u(rng);
    }
    const auto report = gradient_check_params(
        [&](Graph<double>& g, const ParamSet<double>& p) {
          const auto out = net.forward(g, p, feats, mode);
          const Var td = ops::td_mse(g, out.reconstruction, std::span<const double>(reference),
                                     std::span<const double>(weights));
          const Var emd = ops::emd2(g, out.distribution, std::span<const double>(target));
          return ops::add(g, td, emd);
        },
        params);
    CAPTURE(report.worst_input);
    CHECK(report.coordinates == params.num_parameters());
    CHECK(report.max_rel_error < 1e-4);
  }
}

TEST_CASE("model bundles round-trip bit-exactly") {
  const auto path = fs::temp_directory_path() / "metricnet_bundle_test.ckpt";
  ModelBundle bundle;
  bundle.model = tiny_config();
  bundle.quantizer = {10, 0};
  const MetricNet<float> net(bundle.model);
  bundle.params = net.init_params(28);
  jitter(bundle.params, 29, 0.1);
  bundle.extra["note"] = "x";
  save_bundle(path, bundle);
  const ModelBundle r = load_bundle(path);
  CHECK(r.model.bottleneck_channels == 8);
  CHECK(r.quantizer.n_classes == 10);
  CHECK(r.extra.at("note") == "x");
  CHECK_FALSE(r.optimizer.has_value());
  for (const auto& [name, t] : bundle.params.params())
    CHECK(std::memcmp(r.params.at(name).values.data(), t.values.data(), t.values.size() * 4) == 0);
  const Waveform w = noise_waveform(6000, 30);
  CHECK(predict(net, bundle.params, bundle.quantizer, w).logits ==
        predict(MetricNet<float>(r.model), r.params, r.quantizer, w).logits);

  SUBCASE("mis-shaped tensors are a data error") {
    ModelBundle bad = bundle;
    bad.params.params().erase("quality.bias");
    save_bundle(path, bad);
    CHECK_THROWS_AS(load_bundle(path), DataError);
  }
  SUBCASE("quantizer inconsistent with the model is a data error") {
    ModelBundle bad = bundle;
    bad.quantizer = {12, 0};
    save_bundle(path, bad);
    CHECK_THROWS_AS(load_bundle(path), DataError);
  }
  fs::remove(path);
}

TEST_CASE("model config validation and rate checks") {
  ModelConfig c = tiny_config();
  c.dconv_channels = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.kernel_size = 2;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  const MetricNet<float> net(tiny_config());
  const auto params = net.init_params(0);
  CHECK_THROWS_AS(predict(net, params, {10, 0}, Waveform{std::vector<double>(4000, 0.1), 8000}),
                  DataError);
  c = tiny_config();
  CHECK(ModelConfig::from_header(c.to_header()).to_header() == c.to_header());
}
