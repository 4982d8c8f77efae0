#include "metricnet/config.h"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "metricnet/errors.h"

namespace metricnet {
namespace {

namespace pt = boost::property_tree;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\"");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\"");
  return s.substr(b, e - b + 1);
}

// A ';' or '#' at the start of a value or after whitespace starts a
// trailing comment.
std::string strip_inline_comment(const std::string& s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if ((s[i] == ';' || s[i] == '#') && (i == 0 || s[i - 1] == ' ' || s[i - 1] == '\t')) {
      return s.substr(0, i);
    }
  }
  return s;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  std::istringstream is(text);
  T v{};
  is >> v;
  if (!is || !is.eof()) {
    throw ConfigError("'" + key + "': cannot parse '" + text + "' as a number");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("'" + key + "': expected a boolean, got '" + text + "'");
}

int parse_int(const std::string& key, const std::string& text) {
  return parse_number<int>(key, text);
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  if (!text.empty() && text[0] == '-') throw ConfigError("'" + key + "' must be >= 0");
  return parse_number<std::uint64_t>(key, text);
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

std::map<std::string, Setter> setters(const std::filesystem::path& base_dir) {
  auto path_of = [base_dir](const std::string& v) -> std::filesystem::path {
    if (v.empty()) return {};
    std::filesystem::path p(v);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  };
  std::map<std::string, Setter> s;
  auto intf = [&](const char* name, int ModelConfig::*field) {
    s[std::string("model.") + name] = [field](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.*field = parse_int(k, v);
    };
  };
  intf("bottleneck_channels", &ModelConfig::bottleneck_channels);
  intf("dconv_channels", &ModelConfig::dconv_channels);
  intf("kernel_size", &ModelConfig::kernel_size);
  intf("blocks_per_repeat", &ModelConfig::blocks_per_repeat);
  intf("repeats", &ModelConfig::repeats);
  intf("n_classes_total", &ModelConfig::n_classes_total);
  intf("sample_rate", &ModelConfig::sample_rate);
  s["model.norm"] = [](RunConfig& c, const std::string& k, const std::string& v) {
    if (v == "batch_norm") {
      c.model.norm = NormKind::kBatchNorm;
    } else if (v == "global_layer_norm") {
      c.model.norm = NormKind::kGlobalLayerNorm;
    } else {
      throw ConfigError("'" + k + "': expected batch_norm or global_layer_norm");
    }
  };

  s["quantizer.n_classes"] = [](RunConfig& c, const std::string& k, const std::string& v) {
    c.quantizer.n_classes = parse_int(k, v);
  };
  s["quantizer.pad"] = [](RunConfig& c, const std::string& k, const std::string& v) {
    c.quantizer.pad = parse_int(k, v);
  };

  auto dbl = [&](const std::string& key, std::function<double&(RunConfig&)> ref) {
    s[key] = [ref](RunConfig& c, const std::string& k, const std::string& v) {
      ref(c) = parse_number<double>(k, v);
    };
  };
  dbl("training.lr", [](RunConfig& c) -> double& { return c.training.adam.lr; });
  dbl("training.beta1", [](RunConfig& c) -> double& { return c.training.adam.beta1; });
  dbl("training.beta2", [](RunConfig& c) -> double& { return c.training.adam.beta2; });
  dbl("training.eps", [](RunConfig& c) -> double& { return c.training.adam.eps; });
  dbl("training.crop_seconds", [](RunConfig& c) -> double& { return c.training.crop_seconds; });
  dbl("training.lambda", [](RunConfig& c) -> double& { return c.training.lambda; });
  dbl("training.rank_weight", [](RunConfig& c) -> double& { return c.training.rank_weight; });
  s["training.batch_size"] = [](RunConfig& c, const std::string& k, const std::string& v) {
    c.training.batch_size = parse_u64(k, v);
  };
  s["training.max_steps"] = [](RunConfig& c, const std::string& k, const std::string& v) {
    c.training.max_steps = parse_number<std::int64_t>(k, v);
  };
  s["training.seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
    c.training.seed = parse_u64(k, v);
  };
  s["training.init_seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
    c.training.init_seed = parse_u64(k, v);
  };
  s["training.td_mse_normalize"] = [](RunConfig& c, const std::string& k, const std::string& v) {
    c.training.td_mse_normalize = parse_bool(k, v);
  };
  s["training.rank_loss"] = [](RunConfig& c, const std::string& k, const std::string& v) {
    c.training.rank_loss = parse_bool(k, v);
  };
  s["training.label_kind"] = [](RunConfig& c, const std::string& k, const std::string& v) {
    try {
      c.training.label_kind = parse_label_kind(v);
    } catch (const std::invalid_argument&) {
      throw ConfigError("'" + k + "': expected one-hot or soft, got '" + v + "'");
    }
  };

  s["data.train_manifest"] = [path_of](RunConfig& c, const std::string&, const std::string& v) {
    c.data.train_manifest = path_of(v);
  };
  s["data.valid_manifest"] = [path_of](RunConfig& c, const std::string&, const std::string& v) {
    c.data.valid_manifest = path_of(v);
  };

  auto count = [&](const std::string& key, std::size_t SimulateSplits::*field) {
    s[key] = [field](RunConfig& c, const std::string& k, const std::string& v) {
      c.simulate.*field = parse_u64(k, v);
    };
  };
  count("simulate.train_count", &SimulateSplits::train_count);
  count("simulate.valid_count", &SimulateSplits::valid_count);
  count("simulate.test_count", &SimulateSplits::test_count);
  dbl("simulate.duration_s", [](RunConfig& c) -> double& { return c.simulate.base.duration_s; });
  dbl("simulate.snr_min_db", [](RunConfig& c) -> double& { return c.simulate.base.snr_min_db; });
  dbl("simulate.snr_max_db", [](RunConfig& c) -> double& { return c.simulate.base.snr_max_db; });
  dbl("simulate.rir_prob", [](RunConfig& c) -> double& { return c.simulate.base.rir_prob; });
  dbl("simulate.perturb_prob", [](RunConfig& c) -> double& { return c.simulate.base.perturb_prob; });
  dbl("simulate.boost_frac", [](RunConfig& c) -> double& { return c.simulate.base.perturb.boost_frac; });
  dbl("simulate.atten_frac", [](RunConfig& c) -> double& { return c.simulate.base.perturb.atten_frac; });
  dbl("simulate.boost_gain", [](RunConfig& c) -> double& { return c.simulate.base.perturb.boost_gain; });
  dbl("simulate.atten_gain", [](RunConfig& c) -> double& { return c.simulate.base.perturb.atten_gain; });
  s["simulate.seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
    c.simulate.base.seed = parse_u64(k, v);
  };
  s["simulate.rir_paths"] = [path_of](RunConfig& c, const std::string&, const std::string& v) {
    c.simulate.base.rir_paths.clear();
    std::istringstream is(v);
    for (std::string item; std::getline(is, item, ',');) {
      if (const std::string t = trim(item); !t.empty()) c.simulate.base.rir_paths.push_back(path_of(t));
    }
  };

  s["output.dir"] = [path_of](RunConfig& c, const std::string&, const std::string& v) {
    c.output.dir = path_of(v);
  };
  s["output.checkpoint"] = [](RunConfig& c, const std::string&, const std::string& v) {
    c.output.checkpoint = v;
  };
  s["output.best_checkpoint"] = [](RunConfig& c, const std::string&, const std::string& v) {
    c.output.best_checkpoint = v;
  };
  s["output.log"] = [](RunConfig& c, const std::string&, const std::string& v) { c.output.log = v; };
  s["output.resume"] = [](RunConfig& c, const std::string& k, const std::string& v) {
    c.output.resume = parse_bool(k, v);
  };
  s["output.eval_every"] = [](RunConfig& c, const std::string& k, const std::string& v) {
    c.output.eval_every = parse_number<std::int64_t>(k, v);
  };
  s["output.checkpoint_every"] = [](RunConfig& c, const std::string& k, const std::string& v) {
    c.output.checkpoint_every = parse_number<std::int64_t>(k, v);
  };
  return s;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  training.validate();
  if (quantizer.n_classes < 1) throw ConfigError("quantizer.n_classes must be positive");
  if (quantizer.pad < 0) throw ConfigError("quantizer.pad must be >= 0");
  if (quantizer.total() != model.n_classes_total) {
    throw ConfigError("model.n_classes_total = " + std::to_string(model.n_classes_total) +
                      " but the quantizer defines n_classes + 2*pad = " +
                      std::to_string(quantizer.total()));
  }
  const int want_pad = training.label_kind == LabelKind::kSoft ? 2 : 0;
  if (quantizer.pad != want_pad) {
    throw ConfigError(std::string("label_kind = ") + to_string(training.label_kind) +
                      " requires quantizer.pad = " + std::to_string(want_pad) + ", got " +
                      std::to_string(quantizer.pad));
  }
  try {
    if (StftConfig::for_sample_rate(model.sample_rate).window_len != model.stft.window_len) {
      throw ConfigError("model STFT does not match model.sample_rate");
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  simulate.base.validate();
  if (simulate.base.sample_rate != model.sample_rate) {
    throw ConfigError("simulate sample rate differs from model.sample_rate");
  }
  if (output.dir.empty()) throw ConfigError("output.dir must not be empty");
  if (output.checkpoint.empty() || output.best_checkpoint.empty() || output.log.empty()) {
    throw ConfigError("output file names must not be empty");
  }
  if (output.checkpoint == output.best_checkpoint) {
    throw ConfigError("output.checkpoint and output.best_checkpoint must differ");
  }
  if (output.eval_every < 0 || output.checkpoint_every < 0) {
    throw ConfigError("output.eval_every and output.checkpoint_every must be >= 0");
  }
}

void RunConfig::set_seed(std::uint64_t seed) {
  training.seed = seed;
  training.init_seed = seed;
  simulate.base.seed = seed;
}

RunConfig parse_run_config(std::istream& in, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig cfg;
  const auto table = setters(base_dir);
  bool sample_rate_set = false;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("config key '" + section + "' is outside any section");
    }
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      const auto it = table.find(full);
      if (it == table.end()) throw ConfigError("unknown config key '" + full + "'");
      it->second(cfg, full, trim(strip_inline_comment(value.data())));
      sample_rate_set = sample_rate_set || full == "model.sample_rate";
    }
  }
  if (sample_rate_set) {
    try {
      cfg.model.stft = StftConfig::for_sample_rate(cfg.model.sample_rate);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("model.sample_rate: ") + e.what());
    }
    cfg.simulate.base.sample_rate = cfg.model.sample_rate;
  }
  if (!tree.get_child_optional("model.n_classes_total")) {
    cfg.model.n_classes_total = cfg.quantizer.total();
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  return parse_run_config(in, path.parent_path());
}

}  // namespace metricnet
