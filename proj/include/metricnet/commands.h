#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "metricnet/config.h"
#include "metricnet/model.h"
#include "metricnet/trainer.h"

namespace metricnet {

/// Writes <out>/<split>/NNNNN.wav (+ NNNNN_clean.wav) and <out>/<split>.tsv
/// for each non-empty split. Splits use disjoint RNG streams.
void cmd_simulate(const RunConfig& cfg, std::ostream& out);

struct TrainSummary {
  std::int64_t steps = 0;
  StepStats last;
  std::optional<double> best_valid_mse;
};

/// Trains to training.max_steps, appending to the JSON-lines log. With
/// `resume_from` (or output.resume) training continues from that checkpoint.
TrainSummary cmd_train(const RunConfig& cfg,
                       const std::optional<std::filesystem::path>& resume_from,
                       std::ostream& out);

/// One line per input: path, expectation score, max score (or only the
/// selected decoder's score), optionally followed by the distribution.
void cmd_predict(const std::filesystem::path& checkpoint,
                 const std::vector<std::filesystem::path>& wavs,
                 std::optional<Decoder> decoder, bool distribution,
                 std::ostream& out);

/// Prints one EvalReport record per decoder.
DecoderReports cmd_eval(const std::filesystem::path& checkpoint,
                        const std::filesystem::path& manifest,
                        std::optional<Decoder> decoder, std::ostream& out);

/// Full command-line entry point. Returns the process exit code:
/// 0 success, 1 usage/config error, 2 data error, 3 numerical failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace metricnet
