// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failures. Pass criterion keys as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "metricnet/data.h"
#include "metricnet/gradcheck.h"
#include "metricnet/labels.h"
#include "metricnet/losses.h"
#include "metricnet/metrics.h"
#include "metricnet/model.h"
#include "metricnet/ops.h"
#include "metricnet/signal.h"
#include "metricnet/trainer.h"

using namespace metricnet;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Criterion {
  const char* key;
  double time_limit_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<double> uniform_values(std::size_t n, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  const std::size_t n = numel(shape);
  return Tensor<double>(std::move(shape), uniform_values(n, rng, lo, hi));
}

Var weighted_sum(Graph<double>& g, Var y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Var w = g.constant(random_tensor(g.shape(y), rng));
  return ops::sum(g, ops::mul(g, y, w));
}

std::vector<double> random_distribution(std::size_t n, std::mt19937_64& rng) {
  auto v = uniform_values(n, rng, 0.0, 1.0);
  const double s = std::accumulate(v.begin(), v.end(), 0.0);
  for (auto& x : v) x /= s;
  return v;
}

ModelConfig small_model(int bottleneck, int dconv, int blocks, int n_classes) {
  ModelConfig c;
  c.bottleneck_channels = bottleneck;
  c.dconv_channels = dconv;
  c.blocks_per_repeat = blocks;
  c.repeats = 1;
  c.n_classes_total = n_classes;
  return c;
}

// ---------------------------------------------------------------- gradients

Outcome gradient_suite() {
  double worst = 0.0;
  std::string worst_name;
  auto check = [&](const std::string& name, const LossBuilder& fn,
                   std::vector<Tensor<double>> inputs) {
    const auto r = gradient_check(fn, std::move(inputs));
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_name = name;
    }
  };

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> dim(1, 4), frames(3, 12);
    const Shape s = {dim(rng), dim(rng) + 1, frames(rng)};
    const std::size_t nb = s[0], c = s[1], t = s[2];

    check("add", [](Graph<double>& g, std::span<const Var> in) {
      return weighted_sum(g, ops::add(g, in[0], in[1]), 5);
    }, {random_tensor(s, rng), random_tensor(s, rng)});
    check("mul", [](Graph<double>& g, std::span<const Var> in) {
      return weighted_sum(g, ops::mul(g, in[0], in[1]), 5);
    }, {random_tensor(s, rng), random_tensor(s, rng)});
    check("log", [](Graph<double>& g, std::span<const Var> in) {
      return weighted_sum(g, ops::log(g, in[0]), 5);
    }, {random_tensor(s, rng, 0.2, 3.0)});
    check("abs_squared", [](Graph<double>& g, std::span<const Var> in) {
      return weighted_sum(g, ops::abs_squared(g, in[0], in[1]), 5);
    }, {random_tensor(s, rng), random_tensor(s, rng)});
    check("sum", [](Graph<double>& g, std::span<const Var> in) {
      return ops::sum(g, ops::mul(g, in[0], in[0]));
    }, {random_tensor(s, rng)});
    check("mse_reduction", [](Graph<double>& g, std::span<const Var> in) {
      return ops::mse_reduction(g, in[0], in[1]);
    }, {random_tensor(s, rng), random_tensor(s, rng)});
    const std::size_t cout = 1 + seed % 4;
    check("conv1d_pointwise", [](Graph<double>& g, std::span<const Var> in) {
      return weighted_sum(g, ops::conv1d_pointwise(g, in[0], in[1], in[2]), 6);
    }, {random_tensor(s, rng), random_tensor({cout, c}, rng), random_tensor({cout}, rng)});
    const int dilation = 1 << (seed % 4);
    check("conv1d_depthwise_dilated", [dilation](Graph<double>& g, std::span<const Var> in) {
      return weighted_sum(g, ops::conv1d_depthwise_dilated(g, in[0], in[1], in[2], dilation), 7);
    }, {random_tensor(s, rng), random_tensor({c, 3}, rng), random_tensor({c}, rng)});
    auto px = random_tensor(s, rng);
    for (auto& v : px.values)
      if (std::abs(v) < 1e-3) v = v < 0 ? -1e-3 : 1e-3;
    check("prelu", [](Graph<double>& g, std::span<const Var> in) {
      return weighted_sum(g, ops::prelu(g, in[0], in[1]), 8);
    }, {px, random_tensor({c}, rng, 0.05, 0.5)});
    Tensor<double> rm({c}, 0.1), rv({c}, 0.9);
    ops::BatchNormStats<double> stats{"m", "v", &rm, &rv, 0.99};
    if (nb * t > 1) {
      check("batch_norm/train", [&](Graph<double>& g, std::span<const Var> in) {
        return weighted_sum(g, ops::batch_norm(g, in[0], in[1], in[2], stats, ops::Mode::kTrain), 9);
      }, {random_tensor(s, rng), random_tensor({c}, rng, 0.5, 1.5), random_tensor({c}, rng)});
    }
    check("batch_norm/eval", [&](Graph<double>& g, std::span<const Var> in) {
      return weighted_sum(g, ops::batch_norm(g, in[0], in[1], in[2], stats, ops::Mode::kEval), 9);
    }, {random_tensor(s, rng), random_tensor({c}, rng, 0.5, 1.5), random_tensor({c}, rng)});
    check("global_layer_norm", [](Graph<double>& g, std::span<const Var> in) {
      return weighted_sum(g, ops::global_layer_norm(g, in[0], in[1], in[2]), 10);
    }, {random_tensor(s, rng), random_tensor({c}, rng, 0.5, 1.5), random_tensor({c}, rng)});
    check("softmax", [](Graph<double>& g, std::span<const Var> in) {
      return weighted_sum(g, ops::softmax(g, in[0]), 11);
    }, {random_tensor({nb, c + 2}, rng, -3, 3)});
    check("mean_over_frames", [](Graph<double>& g, std::span<const Var> in) {
      return weighted_sum(g, ops::mean_over_frames(g, in[0]), 12);
    }, {random_tensor(s, rng)});
    check("complex_mask_apply", [](Graph<double>& g, std::span<const Var> in) {
      auto [re, im] = ops::complex_mask_apply(g, in[0], in[1], in[2], in[3]);
      return ops::add(g, weighted_sum(g, re, 13), weighted_sum(g, im, 14));
    }, {random_tensor(s, rng), random_tensor(s, rng), random_tensor(s, rng), random_tensor(s, rng)});
    const StftConfig small{16, 8, 16};
    check("istft", [small](Graph<double>& g, std::span<const Var> in) {
      return weighted_sum(g, ops::istft(g, in[0], in[1], small), 15);
    }, {random_tensor({nb, 9, t}, rng), random_tensor({nb, 9, t}, rng)});

    std::vector<double> target;
    for (std::size_t i = 0; i < nb; ++i) {
      const auto d = random_distribution(c + 2, rng);
      target.insert(target.end(), d.begin(), d.end());
    }
    check("emd2", [&](Graph<double>& g, std::span<const Var> in) {
      return ops::emd2(g, ops::softmax(g, in[0]), std::span<const double>(target));
    }, {random_tensor({nb, c + 2}, rng, -2, 2)});
    const auto reference = uniform_values(nb * t, rng, -1, 1);
    const auto weights = uniform_values(nb, rng, 0, 1);
    for (bool normalize : {false, true}) {
      check("td_mse", [&](Graph<double>& g, std::span<const Var> in) {
        return ops::td_mse(g, in[0], std::span<const double>(reference),
                           std::span<const double>(weights), normalize);
      }, {random_tensor({nb, t}, rng)});
    }
    if (nb >= 2) {
      const auto truth = uniform_values(nb, rng, 0, 4);
      const auto mid = QuantizerConfig{int(c + 2), 0}.midpoints();
      check("rank_loss", [&](Graph<double>& g, std::span<const Var> in) {
        const Var sc = ops::expected_value(g, ops::softmax(g, in[0]), std::span<const double>(mid));
        return ops::rank_loss(g, sc, std::span<const double>(truth));
      }, {random_tensor({nb, c + 2}, rng, -2, 2)});
    }
  }

  // End-to-end joint loss on the tiny config with 0.2 s inputs.
  const MetricNet<double> net(small_model(8, 16, 2, 10));
  auto params = net.init_params(22);
  {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (auto& [name, t] : params.params())
      for (auto& v : t.values) v += u(rng);
  }
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
  std::size_t coords = 0;
  for (ops::Mode mode : {ops::Mode::kTrain, ops::Mode::kEval}) {
    // Reference close to the current estimate keeps the central differences
    // of the TD term well conditioned.
    std::vector<double> reference;
    {
      Graph<double> g;
      const auto est = g.value(net.forward(g, params, feats, mode).reconstruction);
      reference.assign(est.begin(), est.end());
      std::mt19937_64 rng(28);
      std::uniform_real_distribution<double> u(-0.01, 0.01);
      for (auto& v : reference) v += u(rng);
    }
    const auto r = gradient_check_params(
        [&](Graph<double>& g, const ParamSet<double>& p) {
          const auto out = net.forward(g, p, feats, mode);
          const Var td = ops::td_mse(g, out.reconstruction, std::span<const double>(reference),
                                     std::span<const double>(weights));
          const Var emd = ops::emd2(g, out.distribution, std::span<const double>(target));
          return ops::add(g, td, emd);
        },
        params);
    coords += r.coordinates;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_name = "end-to-end/" + r.worst_input;
    }
  }
  Outcome o;
  o.pass = worst < 1e-4 && coords == 2 * params.num_parameters();
  o.detail = "max rel error " + fmt("%.2e", worst) + " (" + worst_name + "), " +
             std::to_string(coords / 2) + " end-to-end coordinates";
  return o;
}

// ---------------------------------------------------------------- signal

Outcome stft_roundtrip() {
  const StftConfig cfg;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    const Waveform x{uniform_values(16000, rng, -1, 1), 16000};
    const Waveform y = istft(stft(x, cfg), cfg, 16000);
    double err = 0.0, ref = 0.0;
    for (std::size_t n = cfg.hop_len; n + cfg.hop_len < y.size(); ++n) {
      err += (y.samples[n] - x.samples[n]) * (y.samples[n] - x.samples[n]);
      ref += x.samples[n] * x.samples[n];
    }
    worst = std::max(worst, std::sqrt(err / ref));
  }
  return {worst < 1e-6, "worst interior relative error " + fmt("%.2e", worst) + " over 50 seeds"};
}

// ---------------------------------------------------------------- losses

Outcome emd2_oracle() {
  std::size_t bad_pairs = 0, pairs = 0;
  for (int n = 1; n <= 20; ++n) {
    const QuantizerConfig cfg{n, 0};
    for (int i = 1; i <= n; ++i)
      for (int j = 1; j <= n; ++j) {
        ++pairs;
        bad_pairs += emd2(one_hot(ClassIndex{i}, cfg), one_hot(ClassIndex{j}, cfg)) !=
                     double(std::abs(i - j));
      }
  }
  std::mt19937_64 rng(4);
  double worst_self = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = random_distribution(2 + rng() % 50, rng);
    worst_self = std::max(worst_self, std::abs(emd2(p, p)));
  }
  return {bad_pairs == 0 && worst_self <= 1e-12,
          std::to_string(pairs - bad_pairs) + "/" + std::to_string(pairs) +
              " one-hot pairs exact, max emd2(p,p) " + fmt("%.1e", worst_self)};
}

// ---------------------------------------------------------------- labels

Outcome decoder_identities() {
  double uniform_err = 0.0;
  for (int n : {4, 100, 500}) {
    const QuantizerConfig cfg{n, 0};
    const std::vector<double> p(n, 1.0 / n);
    uniform_err = std::max(uniform_err, std::abs(decode_expect(p, cfg).value() - 2.0));
  }

  double worst_excess = -1.0;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(kScoreMin, kScoreMax);
  for (int n : {5, 20, 100}) {
    const QuantizerConfig cfg{n, 0};
    for (int i = 0; i < 10000; ++i) {
      const double s = u(rng);
      const double d = decode_max(one_hot(quantize(QualityScore(s), cfg), cfg), cfg).value();
      worst_excess = std::max(worst_excess, std::abs(d - s) - cfg.step() / 2);
    }
  }

  // Constant logit shift through the full model's quality bias.
  const MetricNet<double> net(small_model(8, 16, 2, 10));
  auto params = net.init_params(16);
  {
    std::mt19937_64 jitter(17);
    std::uniform_real_distribution<double> j(-0.3, 0.3);
    for (auto& [name, t] : params.params())
      for (auto& v : t.values) v += j(jitter);
  }
  const QuantizerConfig q{10, 0};
  std::mt19937_64 wrng(18);
  const Waveform w{uniform_values(7000, wrng, -0.3, 0.3), 16000};
  const Prediction a = predict(net, params, q, w);
  for (auto& v : params.at("quality.bias").values) v += 7.3;
  const Prediction b = predict(net, params, q, w);
  const double shift_err = std::max(std::abs(a.score_expect - b.score_expect),
                                    std::abs(a.score_max - b.score_max));

  return {uniform_err <= 1e-9 && worst_excess <= 1e-12 && shift_err <= 1e-9,
          "uniform error " + fmt("%.1e", uniform_err) + ", quantize/decode excess " +
              fmt("%.1e", std::max(0.0, worst_excess)) + ", shift error " + fmt("%.1e", shift_err)};
}

Outcome soft_labels() {
  const double kernel[] = {0.1, 0.2, 0.4, 0.2, 0.1};
  std::size_t labels = 0, bad = 0;
  for (int n : {1, 2, 5, 10, 20, 100}) {
    const QuantizerConfig cfg{n, 2};
    for (int nu = 1; nu <= n; ++nu) {
      ++labels;
      const auto l = soft_label(ClassIndex{nu}, cfg);
      const int centre = nu - 1 + cfg.pad;
      long double sum = 0;
      for (double v : l) sum += v;
      bool ok = double(sum) == 1.0 &&
                l[centre] + (l[centre - 1] + l[centre + 1]) + (l[centre - 2] + l[centre + 2]) == 1.0;
      for (int i = 0; i < cfg.total(); ++i) {
        const int off = i - centre;
        ok &= l[i] == (std::abs(off) <= 2 ? kernel[off + 2] : 0.0);
      }
      bad += !ok;
    }
  }
  return {bad == 0, std::to_string(labels - bad) + "/" + std::to_string(labels) +
                        " labels with exact kernel and unit mass"};
}

// ---------------------------------------------------------------- training

Outcome overfit_run() {
  std::vector<DatasetEntry> train;
  for (int i = 0; i < 8; ++i) {
    const double snr = -12.0 + 42.0 * i / 7.0;
    const auto clean = synth_clean(static_cast<SignalKind>(i % 3), 0.5, 100 + i, 16000);
    const auto noise = synth_noise(static_cast<NoiseKind>(i % 3), 0.7, 200 + i, 16000);
    const auto mix = mix_at_snr(clean, noise, snr);
    DatasetEntry e;
    e.degraded = mix.mixture;
    e.clean = mix.clean;
    e.label = proxy_label(*e.clean, e.degraded);
    train.push_back(std::move(e));
  }
  double lo = 5, hi = 0;
  for (const auto& e : train) {
    lo = std::min(lo, e.label.value());
    hi = std::max(hi, e.label.value());
  }
  const QuantizerConfig q{20, 0};
  TrainingConfig t;
  t.adam.lr = 1e-3;
  t.batch_size = 8;
  t.crop_seconds = 0.5;
  t.max_steps = 500;
  Trainer tr(small_model(32, 64, 4, 20), q, t, train);
  double loss10 = 0.0, last = 0.0;
  for (int s = 1; s <= 500; ++s) {
    last = tr.step().total;
    if (s == 10) loss10 = last;
  }
  const auto r = evaluate_entries(tr.net(), tr.params(), q, train);
  double mae = 0.0;
  for (std::size_t i = 0; i < train.size(); ++i) mae += std::abs(r.pred_expect[i] - r.truth[i]);
  mae /= double(train.size());
  const double ratio = last / loss10;
  const double rho = r.expect.srcc.value_or(-1.0);
  return {ratio <= 0.1 && mae < 0.25 && rho > 0.9,
          "labels [" + fmt("%.2f", lo) + ", " + fmt("%.2f", hi) + "], loss ratio " +
              fmt("%.3f", ratio) + ", MAE " + fmt("%.3f", mae) + ", SRCC " + fmt("%.3f", rho)};
}

Outcome joint_vs_quality() {
  constexpr int kSteps = 1500;
  int wins = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SimulateConfig sc;
    sc.count = 64;
    sc.duration_s = 0.5;
    sc.seed = seed;
    const auto all = simulate_dataset(sc, 0);
    const std::vector<DatasetEntry> train(all.begin(), all.begin() + 48), held(all.begin() + 48, all.end());
    double mse[2];
    for (int j = 0; j < 2; ++j) {
      const QuantizerConfig q{20, 0};
      TrainingConfig t;
      t.adam.lr = 1e-3;
      t.batch_size = 8;
      t.crop_seconds = 0.5;
      t.max_steps = kSteps;
      t.seed = seed;
      t.init_seed = seed;
      t.lambda = j == 0 ? 1.0 : 0.0;
      Trainer tr(small_model(32, 64, 4, 20), q, t, train);
      for (int s = 0; s < kSteps; ++s) tr.step();
      mse[j] = evaluate_entries(tr.net(), tr.params(), q, held).expect.mse;
    }
    wins += mse[0] <= mse[1];
    per_seed += (per_seed.empty() ? "" : ", ") + fmt("%.4f", mse[0]) + "/" + fmt("%.4f", mse[1]);
  }
  return {wins >= 3, std::to_string(wins) + "/5 seeds with joint <= quality-only held-out MSE (" +
                         per_seed + ")"};
}

// ---------------------------------------------------------------- metrics

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = double(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// Average position of each value over all sorting permutations.
std::vector<double> permutation_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> perm(x.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<double> total(x.size(), 0.0);
  double count = 0;
  do {
    bool sorted = true;
    for (std::size_t k = 1; k < perm.size(); ++k) sorted &= x[perm[k - 1]] <= x[perm[k]];
    if (!sorted) continue;
    for (std::size_t k = 0; k < perm.size(); ++k) total[perm[k]] += double(k + 1);
    count += 1;
  } while (std::next_permutation(perm.begin(), perm.end()));
  for (auto& t : total) t /= count;
  return total;
}

Outcome metrics_oracle() {
  double worst = 0.0;
  std::size_t undefined_mismatch = 0;
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = uniform_values(5, rng, -1, 1), b = uniform_values(5, rng, -1, 1);
    worst = std::max(worst, std::abs(*lcc(a, b) - pearson(a, b)));
    worst = std::max(worst, std::abs(*srcc(a, b) - pearson(permutation_ranks(a), permutation_ranks(b))));
  }
  for (std::size_t n = 2; n <= 6; ++n) {
    for (int trial = 0; trial < 40; ++trial) {
      std::vector<double> a(n), b(n);
      for (auto& v : a) v = double(rng() % 3);
      for (auto& v : b) v = double(rng() % 4);
      const auto ra = permutation_ranks(a), rb = permutation_ranks(b);
      const auto got = srcc(a, b);
      const bool constant = std::adjacent_find(a.begin(), a.end(), std::not_equal_to<>()) == a.end() ||
                            std::adjacent_find(b.begin(), b.end(), std::not_equal_to<>()) == b.end();
      if (constant || !got) {
        undefined_mismatch += constant != !got;
        continue;
      }
      worst = std::max(worst, std::abs(*got - pearson(ra, rb)));
    }
  }
  return {worst <= 1e-12 && undefined_mismatch == 0,
          "max deviation " + fmt("%.1e", worst) + ", " + std::to_string(undefined_mismatch) +
              " undefined-case mismatches"};
}

// ---------------------------------------------------------------- data

Outcome perturbation_contract() {
  const std::size_t bins = 257 * 600;
  PerturbConfig cfg;
  cfg.seed = 8;
  const auto plan = perturbation_plan(bins, cfg);
  std::size_t boost = 0, atten = 0;
  for (auto a : plan) {
    boost += a == BinAction::kBoost;
    atten += a == BinAction::kAttenuate;
  }
  const double fb = double(boost) / bins, fa = double(atten) / bins;

  const StftConfig stft_cfg;
  std::mt19937_64 rng(10);
  const Waveform w{uniform_values(16000, rng, -0.5, 0.5), 16000};
  PerturbConfig unit;
  unit.boost_gain = unit.atten_gain = 1.0;
  unit.seed = 11;
  const bool unit_ok =
      perturb_spectrogram(w, stft_cfg, unit).samples == istft(stft(w, stft_cfg), stft_cfg, 16000).samples;
  return {std::abs(fb - 0.30) <= 0.01 && std::abs(fa - 0.50) <= 0.01 && unit_ok,
          "boost " + fmt("%.4f", fb) + ", attenuate " + fmt("%.4f", fa) +
              (unit_ok ? ", unit gain matches roundtrip" : ", unit gain differs from roundtrip")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {"gradients", 120, gradient_suite},
      {"stft-roundtrip", 10, stft_roundtrip},
      {"emd2-oracle", 5, emd2_oracle},
      {"decoders", 0, decoder_identities},
      {"soft-labels", 0, soft_labels},
      {"overfit", 300, overfit_run},
      {"joint-vs-quality", 1800, joint_vs_quality},
      {"metrics-oracle", 0, metrics_oracle},
      {"perturbation", 0, perturbation_contract},
  };
  const std::vector<std::string> only(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.key) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.time_limit_s > 0 && secs > c.time_limit_s) {
      o.pass = false;
      o.detail += ", over the " + fmt("%.0f", c.time_limit_s) + " s limit";
    }
    failures += !o.pass;
    std::printf("%s %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.key, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures;
}
