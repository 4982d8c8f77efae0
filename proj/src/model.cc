#include "metricnet/model.h"

#include <cmath>
#include <random>
#include <stdexcept>

#include "metricnet/errors.h"

namespace metricnet {
namespace {

std::string block_prefix(int repeat, int block) {
  return "blocks." + std::to_string(repeat) + "." + std::to_string(block) + ".";
}

int header_int(const std::map<std::string, std::string>& h, const std::string& key) {
  auto it = h.find(key);
  if (it == h.end()) throw DataError("checkpoint header lacks '" + key + "'");
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    throw DataError("checkpoint header '" + key + "' is not an integer");
  }
}

}  // namespace

int ModelConfig::receptive_field() const {
  int span = 1;
  for (int b = 0; b < blocks_per_repeat; ++b) {
    span += repeats * dilation(b) * (kernel_size - 1);
  }
  return span;
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v <= 0) throw ConfigError(std::string(what) + " must be positive");
  };
  positive(bottleneck_channels, "bottleneck_channels");
  positive(dconv_channels, "dconv_channels");
  positive(kernel_size, "kernel_size");
  positive(blocks_per_repeat, "blocks_per_repeat");
  positive(repeats, "repeats");
  positive(n_classes_total, "n_classes_total");
  positive(sample_rate, "sample_rate");
  if (kernel_size % 2 == 0) throw ConfigError("kernel_size must be odd");
  if (blocks_per_repeat > 16) throw ConfigError("blocks_per_repeat must be <= 16");
  try {
    stft.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::map<std::string, std::string> ModelConfig::to_header() const {
  return {
      {"model.bottleneck_channels", std::to_string(bottleneck_channels)},
      {"model.dconv_channels", std::to_string(dconv_channels)},
      {"model.kernel_size", std::to_string(kernel_size)},
      {"model.blocks_per_repeat", std::to_string(blocks_per_repeat)},
      {"model.repeats", std::to_string(repeats)},
      {"model.n_classes_total", std::to_string(n_classes_total)},
      {"model.sample_rate", std::to_string(sample_rate)},
      {"model.window_len", std::to_string(stft.window_len)},
      {"model.hop_len", std::to_string(stft.hop_len)},
      {"model.fft_len", std::to_string(stft.fft_len)},
      {"model.norm", norm == NormKind::kBatchNorm ? "batch" : "global_layer"},
  };
}

ModelConfig ModelConfig::from_header(const std::map<std::string, std::string>& h) {
  ModelConfig c;
  c.bottleneck_channels = header_int(h, "model.bottleneck_channels");
  c.dconv_channels = header_int(h, "model.dconv_channels");
  c.kernel_size = header_int(h, "model.kernel_size");
  c.blocks_per_repeat = header_int(h, "model.blocks_per_repeat");
  c.repeats = header_int(h, "model.repeats");
  c.n_classes_total = header_int(h, "model.n_classes_total");
  c.sample_rate = header_int(h, "model.sample_rate");
  c.stft.window_len = header_int(h, "model.window_len");
  c.stft.hop_len = header_int(h, "model.hop_len");
  c.stft.fft_len = header_int(h, "model.fft_len");
  auto it = h.find("model.norm");
  c.norm = (it != h.end() && it->second == "global_layer") ? NormKind::kGlobalLayerNorm
                                                           : NormKind::kBatchNorm;
  c.validate();
  return c;
}

template <typename Real>
MetricNet<Real>::MetricNet(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
}

template <typename Real>
ParamSet<Real> MetricNet<Real>::init_params(std::uint64_t seed) const {
  const std::size_t F = cfg_.stft.num_bins();
  const std::size_t B = cfg_.bottleneck_channels;
  const std::size_t H = cfg_.dconv_channels;
  const std::size_t K = cfg_.kernel_size;
  const std::size_t N = cfg_.n_classes_total;
  std::mt19937_64 rng(seed);
  ParamSet<Real> p;
  auto uniform = [&](const std::string& name, Shape shape, std::size_t fan_in) {
    auto& t = p.add(name, std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.values) v = static_cast<Real>(dist(rng));
  };
  auto norm_params = [&](const std::string& prefix, std::size_t c) {
    p.add(prefix + "gamma", {c}, Real(1));
    p.add(prefix + "beta", {c}, Real(0));
    if (cfg_.norm == NormKind::kBatchNorm) {
      p.add_buffer(prefix + "running_mean", {c}, Real(0));
      p.add_buffer(prefix + "running_var", {c}, Real(1));
    }
  };

  uniform("encoder.weight", {B, F}, F);
  p.add("encoder.bias", {B});
  for (int r = 0; r < cfg_.repeats; ++r) {
    for (int b = 0; b < cfg_.blocks_per_repeat; ++b) {
      const std::string pre = block_prefix(r, b);
      uniform(pre + "conv_in.weight", {H, B}, B);
      p.add(pre + "conv_in.bias", {H});
      p.add(pre + "prelu_in.slope", {H}, Real(0.25));
      norm_params(pre + "norm_in.", H);
      uniform(pre + "dconv.weight", {H, K}, K);
      p.add(pre + "dconv.bias", {H});
      p.add(pre + "prelu_mid.slope", {H}, Real(0.25));
      norm_params(pre + "norm_mid.", H);
      uniform(pre + "conv_out.weight", {B, H}, H);
      p.add(pre + "conv_out.bias", {B});
    }
  }
  p.add("mask_real.weight", {F, B});
  p.add("mask_real.bias", {F}, Real(1));
  p.add("mask_imag.weight", {F, B});
  p.add("mask_imag.bias", {F});
  p.add("quality.weight", {N, B});
  p.add("quality.bias", {N});
  return p;
}

template <typename Real>
void MetricNet<Real>::check_params(const ParamSet<Real>& params) const {
  const ParamSet<Real> ref = init_params(0);
  auto compare = [&](const auto& expected, const auto& actual, const char* kind) {
    for (const auto& [name, t] : expected) {
      auto it = actual.find(name);
      if (it == actual.end()) {
        throw ShapeError(std::string("missing ") + kind + " '" + name + "'");
      }
      if (it->second.shape != t.shape) {
        throw ShapeError(std::string(kind) + " '" + name + "' has shape " +
                         to_string(it->second.shape) + ", model expects " +
                         to_string(t.shape));
      }
    }
  };
  compare(ref.params(), params.params(), "parameter");
  compare(ref.buffers(), params.buffers(), "buffer");
}

template <typename Real>
SpectralFeatures<Real> MetricNet<Real>::features(std::span<const Waveform> batch) const {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const std::size_t len = batch[0].size();
  const int T = cfg_.stft.num_frames(len);
  if (T < 1) {
    throw std::invalid_argument("input of " + std::to_string(len) +
                                " samples is shorter than one STFT window");
  }
  const std::size_t F = cfg_.stft.num_bins();
  SpectralFeatures<Real> out;
  out.shape = {batch.size(), F, static_cast<std::size_t>(T)};
  out.re.resize(numel(out.shape));
  out.im.resize(out.re.size());
  out.lps.resize(out.re.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b].size() != len) {
      throw std::invalid_argument("batch utterances must have equal length");
    }
    if (batch[b].sample_rate != cfg_.sample_rate) {
      throw DataError("input sample rate " + std::to_string(batch[b].sample_rate) +
                      " Hz does not match the model's " +
                      std::to_string(cfg_.sample_rate) + " Hz");
    }
    const ComplexSpectrogram s = stft(batch[b], cfg_.stft);
    const auto l = lps(s);
    const std::size_t base = b * F * T;
    for (std::size_t i = 0; i < F * T; ++i) {
      out.re[base + i] = static_cast<Real>(s.data()[i].real());
      out.im[base + i] = static_cast<Real>(s.data()[i].imag());
      out.lps[base + i] = static_cast<Real>(l[i]);
    }
  }
  return out;
}

template <typename Real>
Var MetricNet<Real>::param(Graph<Real>& g, const ParamSet<Real>& params,
                           const std::string& name) const {
  return g.param(name, params.at(name));
}

template <typename Real>
Var MetricNet<Real>::norm(Graph<Real>& g, const ParamSet<Real>& params, Var x,
                          const std::string& prefix, ops::Mode mode) const {
  const Var gamma = param(g, params, prefix + "gamma");
  const Var beta = param(g, params, prefix + "beta");
  if (cfg_.norm == NormKind::kGlobalLayerNorm) {
    return ops::global_layer_norm(g, x, gamma, beta);
  }
  ops::BatchNormStats<Real> stats;
  stats.mean_name = prefix + "running_mean";
  stats.var_name = prefix + "running_var";
  stats.running_mean = &params.at(stats.mean_name);
  stats.running_var = &params.at(stats.var_name);
  return ops::batch_norm(g, x, gamma, beta, stats, mode);
}

template <typename Real>
Var MetricNet<Real>::conv_block(Graph<Real>& g, const ParamSet<Real>& params,
                                Var x, int repeat, int block,
                                ops::Mode mode) const {
  if (g.shape(x).size() != 3 ||
      g.shape(x)[1] != static_cast<std::size_t>(cfg_.bottleneck_channels)) {
    throw ShapeError("conv_block expects [B, " +
                     std::to_string(cfg_.bottleneck_channels) + ", T], got " +
                     to_string(g.shape(x)));
  }
  const std::string pre = block_prefix(repeat, block);
  auto p = [&](const char* name) { return param(g, params, pre + name); };
  Var h = ops::conv1d_pointwise(g, x, p("conv_in.weight"), p("conv_in.bias"));
  h = ops::prelu(g, h, p("prelu_in.slope"));
  h = norm(g, params, h, pre + "norm_in.", mode);
  h = ops::conv1d_depthwise_dilated(g, h, p("dconv.weight"), p("dconv.bias"),
                                    ModelConfig::dilation(block));
  h = ops::prelu(g, h, p("prelu_mid.slope"));
  h = norm(g, params, h, pre + "norm_mid.", mode);
  h = ops::conv1d_pointwise(g, h, p("conv_out.weight"), p("conv_out.bias"));
  return ops::add(g, x, h);
}

template <typename Real>
Var MetricNet<Real>::trunk(Graph<Real>& g, const ParamSet<Real>& params, Var x,
                           ops::Mode mode) const {
  for (int r = 0; r < cfg_.repeats; ++r) {
    for (int b = 0; b < cfg_.blocks_per_repeat; ++b) {
      x = conv_block(g, params, x, r, b, mode);
    }
  }
  return x;
}

template <typename Real>
ModelOutputVars MetricNet<Real>::forward(Graph<Real>& g, const ParamSet<Real>& params,
                                         const SpectralFeatures<Real>& feats,
                                         ops::Mode mode, bool reconstruct) const {
  if (feats.shape.size() != 3 ||
      feats.shape[1] != static_cast<std::size_t>(cfg_.stft.num_bins())) {
    throw ShapeError("features do not match the model's STFT configuration");
  }
  const Var lps = g.constant(feats.shape, feats.lps);
  Var h = ops::conv1d_pointwise(g, lps, param(g, params, "encoder.weight"),
                                param(g, params, "encoder.bias"));
  h = trunk(g, params, h, mode);

  ModelOutputVars out;
  if (reconstruct) {
    const Var mask_re = ops::conv1d_pointwise(g, h, param(g, params, "mask_real.weight"),
                                              param(g, params, "mask_real.bias"));
    const Var mask_im = ops::conv1d_pointwise(g, h, param(g, params, "mask_imag.weight"),
                                              param(g, params, "mask_imag.bias"));
    const Var spec_re = g.constant(feats.shape, feats.re);
    const Var spec_im = g.constant(feats.shape, feats.im);
    const auto [est_re, est_im] =
        ops::complex_mask_apply(g, mask_re, mask_im, spec_re, spec_im);
    out.reconstruction = ops::istft(g, est_re, est_im, cfg_.stft);
  }
  out.logits = ops::conv1d_pointwise(g, h, param(g, params, "quality.weight"),
                                     param(g, params, "quality.bias"));
  out.pooled = ops::mean_over_frames(g, out.logits);
  out.distribution = ops::softmax(g, out.pooled);
  return out;
}

template <typename Real>
Prediction predict(const MetricNet<Real>& net, const ParamSet<Real>& params,
                   const QuantizerConfig& qcfg, const Waveform& w,
                   bool reconstruct) {
  if (qcfg.total() != net.config().n_classes_total) {
    throw ConfigError("quantizer has " + std::to_string(qcfg.total()) +
                      " classes, model has " +
                      std::to_string(net.config().n_classes_total));
  }
  Graph<Real> g;
  const auto feats = net.features(std::span<const Waveform>(&w, 1));
  const auto vars = net.forward(g, params, feats, ops::Mode::kEval, reconstruct);
  Prediction p;
  auto to_double = [](std::span<const Real> v) {
    return std::vector<double>(v.begin(), v.end());
  };
  p.distribution = to_double(g.value(vars.distribution));
  p.pooled = to_double(g.value(vars.pooled));
  p.logits = to_double(g.value(vars.logits));
  p.frames = static_cast<int>(feats.shape[2]);
  if (reconstruct) {
    p.reconstruction.sample_rate = w.sample_rate;
    p.reconstruction.samples = to_double(g.value(vars.reconstruction));
  }
  p.score_expect = decode_expect(p.distribution, qcfg).value();
  p.score_max = decode_max(p.distribution, qcfg).value();
  return p;
}

template <typename Real>
QualityScore predict_quality(const MetricNet<Real>& net, const ParamSet<Real>& params,
                             const QuantizerConfig& qcfg, const Waveform& w,
                             Decoder decoder) {
  const Prediction p = predict(net, params, qcfg, w, false);
  return QualityScore(decoder == Decoder::kExpect ? p.score_expect : p.score_max);
}

void save_bundle(const std::filesystem::path& path, const ModelBundle& bundle) {
  Checkpoint ckpt;
  ckpt.header = bundle.model.to_header();
  ckpt.header["format"] = "metricnet";
  ckpt.header["quantizer.n_classes"] = std::to_string(bundle.quantizer.n_classes);
  ckpt.header["quantizer.pad"] = std::to_string(bundle.quantizer.pad);
  ckpt.header["label_kind"] = to_string(bundle.label_kind);
  for (const auto& [k, v] : bundle.extra) ckpt.header["extra." + k] = v;
  auto add = [&](const std::string& name, const Tensor<float>& t) {
    ckpt.tensors.push_back({name, t.shape, t.values});
  };
  for (const auto& [name, t] : bundle.params.params()) add("param/" + name, t);
  for (const auto& [name, t] : bundle.params.buffers()) add("buffer/" + name, t);
  if (bundle.optimizer) {
    const auto& opt = *bundle.optimizer;
    ckpt.header["adam.steps"] = std::to_string(opt.steps());
    for (const auto& [name, t] : opt.first_moments()) add("adam.m/" + name, t);
    for (const auto& [name, t] : opt.second_moments()) add("adam.v/" + name, t);
  }
  save_checkpoint(path, ckpt);
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  if (auto it = ckpt.header.find("format");
      it == ckpt.header.end() || it->second != "metricnet") {
    throw DataError("'" + path.string() + "' is not a model checkpoint");
  }
  ModelBundle bundle;
  try {
    bundle.model = ModelConfig::from_header(ckpt.header);
  } catch (const ConfigError& e) {
    throw DataError("checkpoint '" + path.string() + "' has an invalid model config: " +
                    e.what());
  }
  bundle.quantizer.n_classes = header_int(ckpt.header, "quantizer.n_classes");
  bundle.quantizer.pad = header_int(ckpt.header, "quantizer.pad");
  if (auto it = ckpt.header.find("label_kind"); it != ckpt.header.end()) {
    try {
      bundle.label_kind = parse_label_kind(it->second);
    } catch (const std::invalid_argument& e) {
      throw DataError("checkpoint '" + path.string() + "': " + e.what());
    }
  }
  if (bundle.quantizer.n_classes < 1 || bundle.quantizer.pad < 0 ||
      bundle.quantizer.total() != bundle.model.n_classes_total) {
    throw DataError("checkpoint '" + path.string() + "' has an inconsistent quantizer");
  }
  for (const auto& [k, v] : ckpt.header) {
    if (k.rfind("extra.", 0) == 0) bundle.extra[k.substr(6)] = v;
  }
  const bool has_adam = ckpt.header.contains("adam.steps");
  if (has_adam) {
    bundle.optimizer.emplace();
    bundle.optimizer->set_steps(header_int(ckpt.header, "adam.steps"));
  }
  for (const auto& t : ckpt.tensors) {
    const auto slash = t.name.find('/');
    if (slash == std::string::npos) continue;
    const std::string kind = t.name.substr(0, slash);
    const std::string name = t.name.substr(slash + 1);
    Tensor<float> tensor(t.shape, t.values);
    if (kind == "param") {
      bundle.params.params().emplace(name, std::move(tensor));
    } else if (kind == "buffer") {
      bundle.params.buffers().emplace(name, std::move(tensor));
    } else if (kind == "adam.m" && has_adam) {
      bundle.optimizer->first_moments().emplace(name, std::move(tensor));
    } else if (kind == "adam.v" && has_adam) {
      bundle.optimizer->second_moments().emplace(name, std::move(tensor));
    }
  }
  try {
    MetricNet<float>(bundle.model).check_params(bundle.params);
  } catch (const ShapeError& e) {
    throw DataError("checkpoint '" + path.string() + "': " + e.what());
  }
  return bundle;
}

template class MetricNet<float>;
template class MetricNet<double>;
template Prediction predict<float>(const MetricNet<float>&, const ParamSet<float>&,
                                   const QuantizerConfig&, const Waveform&, bool);
template Prediction predict<double>(const MetricNet<double>&, const ParamSet<double>&,
                                    const QuantizerConfig&, const Waveform&, bool);
template QualityScore predict_quality<float>(const MetricNet<float>&,
                                             const ParamSet<float>&,
                                             const QuantizerConfig&, const Waveform&,
                                             Decoder);
template QualityScore predict_quality<double>(const MetricNet<double>&,
                                              const ParamSet<double>&,
                                              const QuantizerConfig&, const Waveform&,
                                              Decoder);

}  // namespace metricnet
