#include "trivqa/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace trivqa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir.string());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string hex(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct LoadedRun {
  Checkpoint ckpt;
  PreparedData data;
  model::TriVqaModel model;
};

LoadedRun load_run(const fs::path& checkpoint, const std::optional<fs::path>& dataset) {
  Checkpoint ckpt = load_checkpoint(checkpoint);
  const data::Dataset raw = dataset ? data::load_features(*dataset) : load_dataset(ckpt.config);
  if (schema_hash(raw.schema, raw.d_v, raw.d_q) != ckpt.schema_hash()) {
    throw SchemaMismatch("dataset schema/feature widths (" + std::to_string(raw.schema.size()) + " attributes, d_v=" +
                         std::to_string(raw.d_v) + ", d_q=" + std::to_string(raw.d_q) +
                         ") do not match checkpoint (" + std::to_string(ckpt.schema.size()) +
                         " attributes, d_v=" + std::to_string(ckpt.model.d_v) +
                         ", d_q=" + std::to_string(ckpt.model.d_q) + ")");
  }
  PreparedData prepared = prepare_data(ckpt.config, raw, ckpt.stats);
  model::TriVqaModel model(ckpt.schema, ckpt.model, ckpt.params);
  return {std::move(ckpt), std::move(prepared), std::move(model)};
}

std::string accuracy_csv(const EvalOutput& out, const AttributeSchema& schema) {
  std::string csv = "split,attribute,accuracy,sfr_q_accuracy,sfr_v_accuracy\n";
  const auto rows = [&](const char* split, const MetricsReport& r) {
    for (std::size_t i = 0; i < schema.size(); ++i) {
      csv += std::string(split) + "," + schema[i].name + "," + fmt(r.attribute_accuracy[i]) + "," +
             fmt(r.sfr_q_accuracy[i]) + "," + fmt(r.sfr_v_accuracy[i]) + "\n";
    }
    csv += std::string(split) + ",mean," + fmt(r.mean_accuracy) + "," + fmt(mean_of(r.sfr_q_accuracy)) + "," +
           fmt(mean_of(r.sfr_v_accuracy)) + "\n";
  };
  rows("train", out.train);
  rows("test", out.test);
  return csv;
}

}  // namespace

SynthOutput cmd_synth(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.dataset.source != DatasetSource::synth) {
    throw ConfigError("dataset.source", "synth requires a synthetic dataset source");
  }
  ensure_dir(cfg.out_dir);
  SynthOutput out{cfg.out_dir / "dataset.json", data::synth_generate(cfg.synth_config())};
  data::save_features(out.dataset, out.manifest);
  write_resolved_config(cfg, cfg.out_dir / "config.json");
  return out;
}

TrainOutput cmd_train(const RunConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  ensure_dir(cfg.out_dir);
  write_resolved_config(cfg, cfg.out_dir / "config.json");
  PreparedData prepared = prepare_data(cfg, load_dataset(cfg));

  const fs::path log_path = cfg.out_dir / "train_log.csv";
  std::vector<EpochLog> partial;
  std::optional<TrainResult> result;
  try {
    result.emplace(train(cfg, prepared, [&](const EpochLog& log) {
      partial.push_back(log);
      if (on_epoch) on_epoch(log);
    }));
  } catch (const TrainingDiverged&) {
    write_text(log_path, epoch_log_csv(partial));
    throw;
  }
  write_text(log_path, epoch_log_csv(result->epochs));
  write_text(cfg.out_dir / "curve.csv", result->curve.to_csv());

  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.schema = prepared.train.schema;
  ckpt.model = result->model.config();
  ckpt.params = result->model.params();
  ckpt.stats = prepared.stats;
  const fs::path ckpt_path = cfg.out_dir / "checkpoint.bin";
  save_checkpoint(ckpt, ckpt_path);
  return TrainOutput{ckpt_path, log_path, std::move(*result), std::move(prepared)};
}

EvalOutput cmd_eval(const fs::path& checkpoint, const std::optional<fs::path>& dataset, const fs::path& out_dir,
                    bool hard_answer) {
  LoadedRun run = load_run(checkpoint, dataset);
  ensure_dir(out_dir);
  RunConfig resolved = run.ckpt.config;
  resolved.out_dir = out_dir;
  write_resolved_config(resolved, out_dir / "config.json");

  const EvalOptions options{.hard_answer = hard_answer};
  EvalOutput out;
  out.train = summarize(evaluate(run.model, run.data.train, options), run.data.train);
  out.test = summarize(evaluate(run.model, run.data.test, options), run.data.test);

  const json report{{"checkpoint_config_hash", hex(run.ckpt.config_hash())},
                    {"hard_answer", hard_answer},
                    {"train", to_json(out.train, run.ckpt.schema)},
                    {"test", to_json(out.test, run.ckpt.schema)}};
  write_text(out_dir / "metrics.json", report.dump(2) + "\n");
  write_text(out_dir / "attribute_accuracy.csv", accuracy_csv(out, run.ckpt.schema));
  return out;
}

std::vector<AblationRow> cmd_ablate(const RunConfig& cfg) {
  cfg.validate();
  ensure_dir(cfg.out_dir);
  write_resolved_config(cfg, cfg.out_dir / "config.json");
  const PreparedData prepared = prepare_data(cfg, load_dataset(cfg));

  std::vector<AblationRow> rows;
  for (auto mode : loss::all_modes()) {
    RunConfig run = cfg;
    run.mode = mode;
    for (auto t : loss::all_terms()) {
      const double configured = cfg.weights[t] > 0.0 ? cfg.weights[t] : 1.0;
      run.weights[t] = loss::term_active(mode, t) ? configured : 0.0;
    }
    const TrainResult result = train(run, prepared);
    const MetricsReport report = summarize(evaluate(result.model, prepared.test), prepared.test);
    rows.push_back({mode, report.attribute_accuracy, report.mean_accuracy});
  }
  write_text(cfg.out_dir / "ablation.csv", ablation_csv(rows, prepared.test.schema));
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows, const AttributeSchema& schema) {
  std::string csv = "mode,mean_accuracy";
  for (const auto& a : schema.attributes) csv += "," + a.name;
  csv += "\n";
  for (const auto& r : rows) {
    csv += std::string(loss::to_string(r.mode)) + "," + fmt(r.mean_accuracy);
    for (double a : r.attribute_accuracy) csv += "," + fmt(a);
    csv += "\n";
  }
  return csv;
}

metrics::ReliabilityReport cmd_reliability(const fs::path& checkpoint, const std::optional<fs::path>& dataset,
                                           const fs::path& out_dir, bool hard_answer) {
  LoadedRun run = load_run(checkpoint, dataset);
  ensure_dir(out_dir);
  RunConfig resolved = run.ckpt.config;
  resolved.out_dir = out_dir;
  write_resolved_config(resolved, out_dir / "config.json");

  const Evaluation eval = evaluate(run.model, run.data.test, {.hard_answer = hard_answer});
  const MetricsReport report = summarize(eval, run.data.test);
  write_text(out_dir / "reliability.csv", report.reliability.to_csv());
  const json j = to_json(report, run.ckpt.schema);
  write_text(out_dir / "reliability.json",
             json{{"hard_answer", hard_answer},
                  {"separated_av_to_q", report.reliability.separated_count(metrics::Direction::av_to_q)},
                  {"separated_aq_to_v", report.reliability.separated_count(metrics::Direction::aq_to_v)},
                  {"groups", j.at("reliability")}}
                     .dump(2) +
                 "\n");
  return report.reliability;
}

// ---------------------------------------------------------------------------
// gradcheck

bool GradCheckOutput::passed() const {
  if (suites.empty()) return false;
  for (const auto& s : suites) {
    if (!s.report.passed()) return false;
  }
  return true;
}

std::string GradCheckOutput::to_text() const {
  std::string out;
  for (const auto& s : suites) {
    for (const auto& b : s.report.blocks) {
      char line[256];
      std::snprintf(line, sizeof(line), "%-6s %-16s %-34s n=%-5zu rel=%.3e\n", b.passed ? "PASS" : "FAIL",
                    s.name.c_str(), b.name.c_str(), b.elements, b.rel_error);
      out += line;
    }
  }
  out += passed() ? "gradcheck: PASS\n" : "gradcheck: FAIL\n";
  return out;
}

namespace {

using nd::ParamStore;
using nd::Tape;
using nd::Tensor;
using nd::Var;

Tensor random_tensor(std::mt19937_64& rng, std::size_t r, std::size_t c, double min_abs = 0.0) {
  std::normal_distribution<double> g(0.0, 1.0);
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.data()) {
    do v = g(rng);
    while (std::abs(v) < min_abs);
  }
  return t;
}

nd::GradientHook corruption(const ParamStore& params, const std::optional<std::string>& block) {
  if (!block) return {};
  const auto id = params.find(*block);
  if (!id) return {};
  return [id = *id](nd::ParamGrads& g) {
    double& v = g.values[id].data()[0];
    v += 1.0 + 10.0 * std::abs(v);
  };
}

void run_check(GradCheckOutput& out, const std::string& suite, ParamStore& params, const nd::LossBuilder& build,
               const GradCheckOptions& options) {
  out.suites.push_back({suite, nd::grad_check(params, build, options.tolerance, 1e-5,
                                              corruption(params, options.corrupt_block))});
}

/// One tape op applied to random operands; the output is contracted with fixed
/// random weights so that no gradient is trivially constant.
void op_suite(GradCheckOutput& out, const GradCheckOptions& options, std::mt19937_64& rng) {
  struct Case {
    const char* name;
    std::vector<std::pair<std::size_t, std::size_t>> shapes;
    std::function<Var(Tape&, std::vector<Var>&)> apply;
  };
  const std::vector<Case> cases = {
      {"matmul", {{3, 4}, {4, 2}}, [](Tape& t, std::vector<Var>& x) { return t.matmul(x[0], x[1]); }},
      {"add", {{3, 4}, {3, 4}}, [](Tape& t, std::vector<Var>& x) { return t.add(x[0], x[1]); }},
      {"sub", {{3, 4}, {3, 4}}, [](Tape& t, std::vector<Var>& x) { return t.sub(x[0], x[1]); }},
      {"mul", {{3, 4}, {3, 4}}, [](Tape& t, std::vector<Var>& x) { return t.mul(x[0], x[1]); }},
      {"scale", {{3, 4}}, [](Tape& t, std::vector<Var>& x) { return t.scale(x[0], -0.7); }},
      {"add_row", {{3, 4}, {1, 4}}, [](Tape& t, std::vector<Var>& x) { return t.add_row(x[0], x[1]); }},
      {"relu", {{3, 4}}, [](Tape& t, std::vector<Var>& x) { return t.relu(x[0]); }},
      {"softmax_rows", {{3, 4}}, [](Tape& t, std::vector<Var>& x) { return t.softmax_rows(x[0]); }},
      {"log_softmax_rows", {{3, 4}}, [](Tape& t, std::vector<Var>& x) { return t.log_softmax_rows(x[0]); }},
      {"concat_cols", {{3, 2}, {3, 3}}, [](Tape& t, std::vector<Var>& x) { return t.concat_cols(x); }},
      {"sum", {{3, 4}}, [](Tape& t, std::vector<Var>& x) { return t.sum(x[0]); }},
  };
  for (const auto& c : cases) {
    ParamStore params;
    for (std::size_t i = 0; i < c.shapes.size(); ++i) {
      params.add(std::string(c.name) + ".x" + std::to_string(i),
                 random_tensor(rng, c.shapes[i].first, c.shapes[i].second, 1e-2));
    }
    Tape probe;
    std::vector<Var> probe_in;
    for (nd::ParamId id = 0; id < params.size(); ++id) probe_in.push_back(probe.parameter(params, id));
    const auto out_shape = probe.value(c.apply(probe, probe_in)).shape();
    const Tensor weights = random_tensor(rng, out_shape[0], out_shape[1]);
    run_check(out, std::string("op.") + c.name, params,
              [&](Tape& t, const ParamStore& p) {
                std::vector<Var> in;
                for (nd::ParamId id = 0; id < p.size(); ++id) in.push_back(t.parameter(p, id));
                return t.sum(t.mul(c.apply(t, in), t.constant(weights)));
              },
              options);
  }
}

struct MiniSetup {
  AttributeSchema schema;
  model::ModelConfig cfg;
  model::BatchInput batch;
  loss::BatchLabels labels;
};

MiniSetup mini_setup(std::mt19937_64& rng, model::FusionMode fusion) {
  MiniSetup s;
  s.schema.attributes = {{"A", 3}, {"B", 2}};
  s.cfg.d_v = 6;
  s.cfg.d_q = 5;
  s.cfg.d = 8;
  s.cfg.fusion = fusion;
  const std::size_t b = 4;
  s.batch.v_raw = random_tensor(rng, b, s.cfg.d_v);
  for (std::size_t i = 0; i < s.schema.size(); ++i) s.batch.q_raw.push_back(random_tensor(rng, b, s.cfg.d_q));
  s.labels.answers = {{0, 2, 1, 2}, {1, 0, 0, 1}};
  s.labels.diagnosis = {1, 0, -1, 1};
  return s;
}

Var term_loss(Tape& tape, const model::PassOutput& pass, const loss::BatchLabels& labels, loss::Term term) {
  Var total;
  for (std::size_t i = 0; i < pass.forward.size(); ++i) {
    const auto& f = pass.forward[i];
    const auto& r = pass.reverse[i];
    Var v;
    switch (term) {
      case loss::Term::ce_forward: v = loss::ce_batch(tape, f.logits, labels.answers[i]); break;
      case loss::Term::rev_q: v = loss::feature_mse_batch(tape, r.q_hat, r.q_target); break;
      case loss::Term::rev_v: v = loss::feature_mse_batch(tape, r.v_hat, r.v_target); break;
      case loss::Term::sfr_q_ce: v = loss::ce_batch(tape, r.sfr_q_logits, labels.answers[i]); break;
      case loss::Term::sfr_v_ce: v = loss::ce_batch(tape, r.sfr_v_logits, labels.answers[i]); break;
      case loss::Term::consistency_q:
        v = loss::soft_ce_batch(tape, r.sfr_q_logits, tape.stop_gradient(f.probs));
        break;
      case loss::Term::consistency_v:
        v = loss::soft_ce_batch(tape, r.sfr_v_logits, tape.stop_gradient(f.probs));
        break;
    }
    total = total.valid() ? tape.add(total, v) : v;
  }
  return total;
}

}  // namespace

GradCheckOutput cmd_gradcheck(const GradCheckOptions& options) {
  GradCheckOutput out;
  std::mt19937_64 rng(options.seed);
  op_suite(out, options, rng);

  for (auto fusion : {model::FusionMode::add, model::FusionMode::concat}) {
    const MiniSetup s = mini_setup(rng, fusion);
    model::TriVqaModel mini(s.schema, s.cfg, rng());
    const std::string tag = std::string("model.") + model::to_string(fusion);

    run_check(out, tag, mini.params(),
              [&](Tape& tape, const ParamStore&) {
                const auto pass = mini.run(tape, s.batch);
                return loss::total_loss(tape, pass, s.labels, loss::LossWeights::for_mode(loss::AblationMode::full),
                                        loss::AblationMode::full)
                    .objective(tape);
              },
              options);
    if (fusion != model::FusionMode::add) continue;

    for (auto term : loss::all_terms()) {
      run_check(out, std::string("loss.") + loss::to_string(term), mini.params(),
                [&](Tape& tape, const ParamStore&) {
                  return term_loss(tape, mini.run(tape, s.batch, {.diagnosis = false}), s.labels, term);
                },
                options);
    }
    run_check(out, "loss.diag_ce", mini.params(),
              [&](Tape& tape, const ParamStore&) {
                const auto pass = mini.run(tape, s.batch);
                return loss::total_loss(tape, pass, s.labels, loss::LossWeights::for_mode(loss::AblationMode::full),
                                        loss::AblationMode::full)
                    .diag;
              },
              options);
  }
  return out;
}

}  // namespace trivqa::cli
