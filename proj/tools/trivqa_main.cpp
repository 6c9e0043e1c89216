#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "trivqa/binary_io.hpp"
#include "trivqa/commands.hpp"

namespace {

using namespace trivqa;

enum ExitCode : int { kOk = 0, kFailed = 1, kConfig = 2, kIo = 3, kDiverged = 4, kSchema = 5, kUsage = 64 };

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += (c == '\n') ? ' ' : c;
  }
  return out + "\"";
}

int fail(int code, const char* tag, const std::string& message, const std::string& extra = {}) {
  std::cerr << "error code=" << tag << extra << " message=" << quote(message) << std::endl;
  return code;
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string checkpoint;
  std::string dataset;
  bool hard_answer = false;
  std::string corrupt_block;
};

cli::RunConfig resolve_config(const Options& o) {
  cli::RunConfig cfg = o.config.empty() ? cli::RunConfig{} : cli::load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.out_dir = o.out;
  cfg.validate();
  return cfg;
}

std::optional<std::filesystem::path> optional_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::filesystem::path(s);
}

std::filesystem::path eval_out_dir(const Options& o) {
  if (!o.out.empty()) return o.out;
  return std::filesystem::path(o.checkpoint).parent_path() / "eval";
}

int run(const std::string& verb, const Options& o) {
  if (verb == "synth") {
    const auto cfg = resolve_config(o);
    const auto out = cli::cmd_synth(cfg);
    std::printf("wrote %s (%zu samples, %zu attributes)\n", out.manifest.string().c_str(), out.dataset.size(),
                out.dataset.schema.size());
  } else if (verb == "train") {
    const auto cfg = resolve_config(o);
    const auto out = cli::cmd_train(cfg, [](const cli::EpochLog& e) {
      std::printf("epoch %2d lr %.3g total %.6f diag %.6f av->q mse %.5f aq->v mse %.5f\n", e.epoch, e.lr,
                  e.losses.total, e.losses.diag_ce, e.curve.av_to_q_mse, e.curve.aq_to_v_mse);
      std::fflush(stdout);
    });
    std::printf("wrote %s\n", out.checkpoint.string().c_str());
  } else if (verb == "eval") {
    if (o.checkpoint.empty()) return fail(kUsage, "E_USAGE", "eval requires --checkpoint");
    const auto out = cli::cmd_eval(o.checkpoint, optional_path(o.dataset), eval_out_dir(o), o.hard_answer);
    std::printf("train mean accuracy %.4f\ntest mean accuracy %.4f\n", out.train.mean_accuracy,
                out.test.mean_accuracy);
  } else if (verb == "ablate") {
    const auto cfg = resolve_config(o);
    const auto rows = cli::cmd_ablate(cfg);
    for (const auto& r : rows) std::printf("%-10s %.4f\n", loss::to_string(r.mode), r.mean_accuracy);
  } else if (verb == "reliability") {
    if (o.checkpoint.empty()) return fail(kUsage, "E_USAGE", "reliability requires --checkpoint");
    const auto report = cli::cmd_reliability(o.checkpoint, optional_path(o.dataset), eval_out_dir(o), o.hard_answer);
    std::fputs(report.to_csv().c_str(), stdout);
  } else if (verb == "gradcheck") {
    cli::GradCheckOptions options;
    if (o.seed) options.seed = *o.seed;
    if (!o.corrupt_block.empty()) options.corrupt_block = o.corrupt_block;
    const auto out = cli::cmd_gradcheck(options);
    std::fputs(out.to_text().c_str(), stdout);
    if (!out.passed()) return fail(kFailed, "E_GRADCHECK", "relative error above tolerance");
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tri-VQA training, evaluation, ablation and reliability tools"};
  app.require_subcommand(1, 1);
  Options o;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run config")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Override the config seed");
    sub->add_option("--out", o.out, "Output directory");
  };
  add_common(app.add_subcommand("synth", "Generate a synthetic feature dataset"));
  add_common(app.add_subcommand("train", "Train a model and write a checkpoint"));
  add_common(app.add_subcommand("ablate", "Train every ablation mode and tabulate accuracy"));
  for (const char* name : {"eval", "reliability"}) {
    CLI::App* sub = app.add_subcommand(name, std::string(name) == "eval" ? "Evaluate a checkpoint"
                                                                        : "Reverse-inference reliability report");
    sub->add_option("--checkpoint", o.checkpoint, "checkpoint.bin from train")->required()->check(CLI::ExistingFile);
    sub->add_option("--dataset", o.dataset, "Feature manifest (default: the checkpoint's dataset source)")
        ->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "Output directory (default: <checkpoint dir>/eval)");
    sub->add_flag("--hard-answer", o.hard_answer, "Feed one-hot predicted answers to the reverse heads");
  }
  CLI::App* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks on a miniature model");
  gc->add_option("--seed", o.seed, "RNG seed for the miniature model and inputs");
  gc->add_option("--corrupt-block", o.corrupt_block, "Negative control: corrupt this block's analytic gradient");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kUsage, "E_USAGE", e.what());
  }

  const std::string verb = app.get_subcommands().front()->get_name();
  try {
    return run(verb, o);
  } catch (const cli::ConfigError& e) {
    return fail(kConfig, "E_CONFIG", e.what(), " field=" + e.field());
  } catch (const cli::SchemaMismatch& e) {
    return fail(kSchema, "E_SCHEMA", e.what());
  } catch (const cli::TrainingDiverged& e) {
    return fail(kDiverged, "E_DIVERGED", e.what(), " last_finite_epoch=" + std::to_string(e.last_finite_epoch()));
  } catch (const io::ReadError& e) {
    return fail(kIo, "E_IO", e.what());
  } catch (const std::exception& e) {
    return fail(kFailed, "E_RUNTIME", e.what());
  }
}
