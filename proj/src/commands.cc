#include "metricnet/commands.h"

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "metricnet/errors.h"
#include "metricnet/log.h"
#include "metricnet/wav.h"

namespace metricnet {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      now.time_since_epoch()).count() % 1000;
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  std::ostringstream os;
  os << buf << '.' << std::setw(3) << std::setfill('0') << ms << 'Z';
  return os.str();
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw DataError("cannot create output directory '" + dir.string() + "'");
  }
}

std::string split_file(std::size_t index, const char* suffix) {
  std::ostringstream os;
  os << std::setw(5) << std::setfill('0') << index << suffix << ".wav";
  return os.str();
}

json report_json(const EvalReport& r) {
  json j = {{"mse", r.mse}, {"n", r.n}};
  j["lcc"] = r.lcc ? json(*r.lcc) : json(nullptr);
  j["srcc"] = r.srcc ? json(*r.srcc) : json(nullptr);
  return j;
}

std::vector<DatasetEntry> simulated_split(const RunConfig& cfg, std::size_t count,
                                          std::uint64_t stream) {
  if (count == 0) return {};
  SimulateConfig sc = cfg.simulate.base;
  sc.count = count;
  return simulate_dataset(sc, stream);
}

void check_bundle_matches(const ModelBundle& b, const RunConfig& cfg, const fs::path& path) {
  if (b.model.to_header() != cfg.model.to_header() ||
      b.quantizer.n_classes != cfg.quantizer.n_classes || b.quantizer.pad != cfg.quantizer.pad ||
      b.label_kind != cfg.training.label_kind) {
    throw ConfigError("checkpoint '" + path.string() +
                      "' was trained with a different model, quantizer or label kind");
  }
}

ModelBundle load_bundle_checked(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("checkpoint '" + path.string() + "' does not exist");
  return load_bundle(path);
}

void save_trainer(const Trainer& tr, const fs::path& path, std::optional<double> best) {
  ModelBundle b = tr.bundle();
  if (best) {
    std::ostringstream os;
    os << std::setprecision(17) << *best;
    b.extra["best_valid_mse"] = os.str();
  }
  save_bundle(path, b);
}

std::string fixed(double v, int digits = 6) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

void cmd_simulate(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  if (cfg.simulate.train_count + cfg.simulate.valid_count + cfg.simulate.test_count == 0) {
    throw ConfigError("simulate: all split counts are zero");
  }
  const fs::path dir = cfg.output.dir;
  make_dir(dir);
  struct Split {
    const char* name;
    std::size_t count;
    std::uint64_t stream;
  };
  for (const Split& s : {Split{"train", cfg.simulate.train_count, 0},
                         Split{"valid", cfg.simulate.valid_count, 1},
                         Split{"test", cfg.simulate.test_count, 2}}) {
    if (s.count == 0) continue;
    const auto entries = simulated_split(cfg, s.count, s.stream);
    make_dir(dir / s.name);
    std::vector<ManifestRow> rows;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const std::string deg = std::string(s.name) + "/" + split_file(i, "");
      const std::string clean = std::string(s.name) + "/" + split_file(i, "_clean");
      write_wav(dir / deg, entries[i].degraded);
      write_wav(dir / clean, *entries[i].clean);
      rows.push_back({deg, clean, entries[i].label.value(), entries[i].meta.snr_db});
    }
    write_manifest(dir / (std::string(s.name) + ".tsv"), rows);
    out << s.name << ": " << entries.size() << " entries -> "
        << (dir / (std::string(s.name) + ".tsv")).string() << '\n';
  }
}

TrainSummary cmd_train(const RunConfig& cfg, const std::optional<fs::path>& resume_from,
                       std::ostream& out) {
  cfg.validate();
  std::vector<DatasetEntry> train, valid;
  if (cfg.data.train_manifest.empty()) {
    train = simulated_split(cfg, cfg.simulate.train_count, 0);
    valid = simulated_split(cfg, cfg.simulate.valid_count, 1);
  } else {
    train = load_manifest(cfg.data.train_manifest);
    if (!cfg.data.valid_manifest.empty()) valid = load_manifest(cfg.data.valid_manifest);
  }
  if (train.empty()) throw DataError("training set is empty");
  bool valid_is_train = false;
  if (valid.empty()) {
    log_warning("no validation data; the best checkpoint is selected on the training set");
    valid_is_train = true;
  }
  const auto& valid_set = valid_is_train ? train : valid;

  Trainer tr(cfg.model, cfg.quantizer, cfg.training, train);
  TrainSummary summary;
  std::optional<fs::path> resume = resume_from;
  if (!resume && cfg.output.resume) {
    if (fs::exists(cfg.output.checkpoint_path())) {
      resume = cfg.output.checkpoint_path();
    } else {
      log_warning("output.resume is set but '" + cfg.output.checkpoint_path().string() +
                  "' does not exist; starting fresh");
    }
  }
  if (resume) {
    const ModelBundle b = load_bundle_checked(*resume);
    check_bundle_matches(b, cfg, *resume);
    tr.restore(b);
    if (auto it = b.extra.find("best_valid_mse"); it != b.extra.end()) {
      summary.best_valid_mse = std::stod(it->second);
    }
  }

  make_dir(cfg.output.dir);
  std::ofstream log(cfg.output.log_path(), resume ? std::ios::app : std::ios::trunc);
  if (!log) throw DataError("cannot write log '" + cfg.output.log_path().string() + "'");

  auto validate_and_keep_best = [&](std::int64_t step) {
    const auto r = evaluate_entries(tr.net(), tr.params(), tr.quantizer(), valid_set);
    json rec = {{"step", step},
                {"split", valid_is_train ? "train" : "valid"},
                {"expect", report_json(r.expect)},
                {"max", report_json(r.max)},
                {"timestamp", utc_timestamp()}};
    log << rec.dump() << '\n' << std::flush;
    out << "step " << step << " " << r.expect.to_record("valid.expect.") << '\n';
    if (!summary.best_valid_mse || r.expect.mse < *summary.best_valid_mse) {
      summary.best_valid_mse = r.expect.mse;
      save_trainer(tr, cfg.output.best_checkpoint_path(), summary.best_valid_mse);
    }
  };

  const std::int64_t start = tr.steps();
  while (tr.steps() < cfg.training.max_steps) {
    StepStats st;
    try {
      st = tr.step();
    } catch (const NumericalError& e) {
      const std::int64_t step = tr.steps() + 1;
      log << json({{"step", step}, {"error", e.what()}, {"timestamp", utc_timestamp()}}).dump()
          << '\n' << std::flush;
      throw NumericalError("training aborted at step " + std::to_string(step) + ": " + e.what());
    }
    if (!std::isfinite(st.total)) {
      throw NumericalError("training aborted at step " + std::to_string(st.step) +
                           ": non-finite loss");
    }
    summary.last = st;
    json rec = {{"step", st.step}, {"td_mse", st.td_mse}, {"emd2", st.emd2}};
    if (cfg.training.rank_loss) rec["rank"] = st.rank;
    rec["total"] = st.total;
    rec["timestamp"] = utc_timestamp();
    log << rec.dump() << '\n' << std::flush;
    if (cfg.output.eval_every > 0 && st.step % cfg.output.eval_every == 0) {
      validate_and_keep_best(st.step);
    }
    if (cfg.output.checkpoint_every > 0 && st.step % cfg.output.checkpoint_every == 0) {
      save_trainer(tr, cfg.output.checkpoint_path(), summary.best_valid_mse);
    }
  }
  const bool evaluated_last = cfg.output.eval_every > 0 && tr.steps() > start &&
                              tr.steps() % cfg.output.eval_every == 0;
  if (!evaluated_last && tr.steps() > start) validate_and_keep_best(tr.steps());
  if (!fs::exists(cfg.output.best_checkpoint_path())) {
    save_trainer(tr, cfg.output.best_checkpoint_path(), summary.best_valid_mse);
  }
  save_trainer(tr, cfg.output.checkpoint_path(), summary.best_valid_mse);
  summary.steps = tr.steps();
  out << "trained " << summary.steps << " steps; checkpoint "
      << cfg.output.checkpoint_path().string() << '\n';
  return summary;
}

void cmd_predict(const fs::path& checkpoint, const std::vector<fs::path>& wavs,
                 std::optional<Decoder> decoder, bool distribution, std::ostream& out) {
  const ModelBundle b = load_bundle_checked(checkpoint);
  const MetricNet<float> net(b.model);
  for (const auto& path : wavs) {
    const Waveform w = load_wav(path);
    if (w.sample_rate != b.model.sample_rate) {
      throw DataError("'" + path.string() + "' is " + std::to_string(w.sample_rate) +
                      " Hz but the checkpoint expects " + std::to_string(b.model.sample_rate) +
                      " Hz");
    }
    if (w.size() < static_cast<std::size_t>(b.model.stft.window_len)) {
      throw DataError("'" + path.string() + "' is shorter than one STFT window");
    }
    const Prediction p = predict(net, b.params, b.quantizer, w);
    out << path.string();
    if (!decoder || *decoder == Decoder::kExpect) out << '\t' << fixed(p.score_expect);
    if (!decoder || *decoder == Decoder::kMax) out << '\t' << fixed(p.score_max);
    if (distribution) {
      for (double v : p.distribution) out << '\t' << fixed(v, 8);
    }
    out << '\n';
  }
}

DecoderReports cmd_eval(const fs::path& checkpoint, const fs::path& manifest,
                        std::optional<Decoder> decoder, std::ostream& out) {
  const ModelBundle b = load_bundle_checked(checkpoint);
  const auto entries = load_manifest(manifest);
  if (entries.empty()) throw DataError("manifest '" + manifest.string() + "' has no entries");
  for (const auto& e : entries) {
    if (e.degraded.sample_rate != b.model.sample_rate) {
      throw DataError("manifest audio rate " + std::to_string(e.degraded.sample_rate) +
                      " Hz differs from the checkpoint's " +
                      std::to_string(b.model.sample_rate) + " Hz");
    }
  }
  const auto r = evaluate_entries(MetricNet<float>(b.model), b.params, b.quantizer, entries);
  if (!decoder || *decoder == Decoder::kExpect) out << r.expect.to_record("expect.") << '\n';
  if (!decoder || *decoder == Decoder::kMax) out << r.max.to_record("max.") << '\n';
  return r;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Non-intrusive speech quality estimation with joint reconstruction"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint, decoder_name, manifest;
  std::uint64_t seed = 0;
  bool distribution = false;
  std::vector<std::string> inputs;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "INI run configuration");
    sub->add_option("--seed", seed, "Overrides every seed in the configuration");
    sub->add_option("--out", out_dir, "Overrides output.dir");
  };
  const std::map<std::string, Decoder> decoders = {{"expect", Decoder::kExpect},
                                                   {"max", Decoder::kMax}};
  auto add_decoder = [&](CLI::App* sub) {
    sub->add_option("--decoder", decoder_name, "Report only this decoder")
        ->check(CLI::IsMember({"expect", "max"}));
  };

  CLI::App* sim = app.add_subcommand("simulate", "Write a synthetic dataset and manifests");
  add_config(sim);
  CLI::App* train = app.add_subcommand("train", "Train a model");
  add_config(train);
  train->add_option("--checkpoint", checkpoint, "Resume from this checkpoint");
  CLI::App* pred = app.add_subcommand("predict", "Score WAV files");
  pred->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  add_decoder(pred);
  pred->add_flag("--distribution", distribution, "Also print the class distribution");
  pred->add_option("wavs", inputs, "Input WAV files")->required();
  CLI::App* eval = app.add_subcommand("eval", "Evaluate against a labelled manifest");
  eval->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  add_decoder(eval);
  eval->add_option("--out", out_dir, "Also write the report to this file");
  eval->add_option("manifest", manifest, "Manifest with labels")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    auto run_config = [&](CLI::App* sub) {
      RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
      if (sub->count("--seed")) cfg.set_seed(seed);
      if (!out_dir.empty()) cfg.output.dir = out_dir;
      cfg.validate();
      return cfg;
    };
    std::optional<Decoder> decoder;
    if (!decoder_name.empty()) decoder = decoders.at(decoder_name);

    if (sim->parsed()) {
      cmd_simulate(run_config(sim), out);
    } else if (train->parsed()) {
      std::optional<fs::path> resume;
      if (!checkpoint.empty()) resume = checkpoint;
      const RunConfig cfg = run_config(train);
      cmd_train(cfg, resume, out);
    } else if (pred->parsed()) {
      std::vector<fs::path> paths(inputs.begin(), inputs.end());
      cmd_predict(checkpoint, paths, decoder, distribution, out);
    } else if (eval->parsed()) {
      std::ostringstream report;
      cmd_eval(checkpoint, manifest, decoder, report);
      out << report.str();
      if (!out_dir.empty()) {
        std::ofstream f(out_dir);
        if (!f) throw DataError("cannot write report '" + out_dir + "'");
        f << report.str();
      }
    }
    return 0;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace metricnet
