#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "trivqa/commands.hpp"

namespace {

using namespace trivqa;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const Outcome& o) {
  std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

template <typename F>
void criterion(const std::string& name, F&& body) {
  try {
    report(name, body());
  } catch (const std::exception& e) {
    report(name, {false, std::string("exception: ") + e.what()});
  }
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nd::Tensor random_tensor(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  std::normal_distribution<double> g(0.0, 1.0);
  nd::Tensor t = nd::Tensor::matrix(r, c);
  for (double& v : t.data()) v = g(rng);
  return t;
}

// Loop-written references, independent of the library's kernels.

double ref_log_softmax(std::span<const double> row, std::size_t c) {
  double z = 0.0;
  for (double v : row) z += std::exp(v);
  return row[c] - std::log(z);
}

double ref_hard_ce(const nd::Tensor& logits, const std::vector<std::size_t>& labels) {
  double s = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) s -= ref_log_softmax(logits.row_view(r), labels[r]);
  return s / static_cast<double>(logits.rows());
}

double ref_soft_ce(const nd::Tensor& logits, const nd::Tensor& target) {
  double s = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    for (std::size_t c = 0; c < logits.cols(); ++c) s -= target(r, c) * ref_log_softmax(logits.row_view(r), c);
  }
  return s / static_cast<double>(logits.rows());
}

double ref_mse(const nd::Tensor& a, const nd::Tensor& b) {
  double s = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) s += (a(r, c) - b(r, c)) * (a(r, c) - b(r, c));
  }
  return s / static_cast<double>(a.rows() * a.cols());
}

double ref_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[i] != 1 || labels[j] != 0) continue;
      pairs += 1.0;
      wins += scores[i] > scores[j] ? 1.0 : (scores[i] == scores[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

Outcome check_auc_oracle() {
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 30;
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(rng() % 12) / 11.0;
      labels[i] = static_cast<int>(rng() % 2);
    }
    labels[0] = 1;
    labels[1] = 0;
    const auto got = metrics::auc_rank(scores, labels);
    if (!got) return {false, fmt("instance %d: AUC undefined", trial)};
    worst = std::max(worst, std::abs(*got - ref_auc(scores, labels)));
  }
  return {worst <= 1e-12, fmt("200 instances, max |diff| %.3g", worst)};
}

Outcome check_loss_oracle() {
  std::mt19937_64 rng(202);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    AttributeSchema schema{{{"A", 2 + rng() % 3}, {"B", 2 + rng() % 3}, {"C", 2}}};
    model::ModelConfig cfg;
    cfg.d_v = 3 + rng() % 5;
    cfg.d_q = 2 + rng() % 5;
    cfg.d = 4 + rng() % 5;
    cfg.fusion = trial % 2 ? model::FusionMode::concat : model::FusionMode::add;
    const model::TriVqaModel m(schema, cfg, rng());
    const std::size_t b = 1 + rng() % 6;
    model::BatchInput batch;
    batch.v_raw = random_tensor(rng, b, cfg.d_v);
    loss::BatchLabels labels;
    for (std::size_t i = 0; i < schema.size(); ++i) {
      batch.q_raw.push_back(random_tensor(rng, b, cfg.d_q));
      std::vector<std::size_t> a(b);
      for (auto& x : a) x = rng() % schema[i].cardinality;
      labels.answers.push_back(a);
    }
    for (std::size_t r = 0; r < b; ++r) labels.diagnosis.push_back(static_cast<int>(rng() % 3) - 1);
    labels.diagnosis[0] = 1;

    nd::Tape tape;
    const auto pass = m.run(tape, batch);
    const auto terms = loss::total_loss(tape, pass, labels, loss::LossWeights{}, loss::AblationMode::full);
    std::array<double, loss::kTermCount> want{};
    for (std::size_t i = 0; i < schema.size(); ++i) {
      const auto& f = pass.forward[i];
      const auto& r = pass.reverse[i];
      const nd::Tensor& a_pre = tape.value(f.probs);
      want[0] += ref_hard_ce(tape.value(f.logits), labels.answers[i]);
      want[1] += ref_mse(tape.value(r.q_hat), tape.value(r.q_target));
      want[2] += ref_mse(tape.value(r.v_hat), tape.value(r.v_target));
      want[3] += ref_hard_ce(tape.value(r.sfr_q_logits), labels.answers[i]);
      want[4] += ref_hard_ce(tape.value(r.sfr_v_logits), labels.answers[i]);
      want[5] += ref_soft_ce(tape.value(r.sfr_q_logits), a_pre);
      want[6] += ref_soft_ce(tape.value(r.sfr_v_logits), a_pre);
    }
    double total = 0.0;
    for (std::size_t t = 0; t < loss::kTermCount; ++t) {
      worst = std::max(worst, std::abs(terms.breakdown.terms[t] - want[t]));
      total += want[t];
    }
    worst = std::max(worst, std::abs(terms.breakdown.total - total));

    const nd::Tensor& diag = tape.value(pass.diag_logits);
    double diag_ce = 0.0, labeled = 0.0;
    for (std::size_t r = 0; r < b; ++r) {
      if (labels.diagnosis[r] < 0) continue;
      diag_ce -= ref_log_softmax(diag.row_view(r), static_cast<std::size_t>(labels.diagnosis[r]));
      labeled += 1.0;
    }
    worst = std::max(worst, std::abs(terms.breakdown.diag_ce - diag_ce / labeled));
  }
  return {worst <= 1e-10, fmt("100 instances x 7 terms + total + diagnosis, max |diff| %.3g", worst)};
}

Outcome check_sgd_oracle() {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    nd::ParamStore store;
    store.add("w", random_tensor(rng, 2, 3));
    nd::OptimizerConfig cfg;
    cfg.base_lr = 0.001 + u(rng);
    cfg.momentum = 0.99 * u(rng);
    nd::SgdMomentum opt(cfg, store);
    std::vector<double> p(store.value(0).data().begin(), store.value(0).data().end());
    std::vector<double> v(p.size(), 0.0);
    for (int step = 0; step < 2; ++step) {
      nd::ParamGrads g{{random_tensor(rng, 2, 3)}, {true}};
      for (std::size_t i = 0; i < p.size(); ++i) {
        v[i] = cfg.momentum * v[i] + g.values[0][i];
        p[i] = p[i] - cfg.base_lr * v[i];
      }
      if (!opt.step(store, g, 0).applied) return {false, "step rejected"};
      for (std::size_t i = 0; i < p.size(); ++i) worst = std::max(worst, std::abs(store.value(0)[i] - p[i]));
    }
  }
  return {worst <= 1e-12, fmt("100 two-step trajectories, max |diff| %.3g", worst)};
}

std::vector<std::pair<int, double>> logged_lrs(const fs::path& log) {
  std::istringstream in(read_file(log));
  std::string line;
  std::getline(in, line);
  std::vector<std::pair<int, double>> out;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string epoch, lr;
    std::getline(row, epoch, ',');
    std::getline(row, lr, ',');
    out.emplace_back(std::stoi(epoch), std::strtod(lr.c_str(), nullptr));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks; one PASS/FAIL line per criterion"};
  fs::path work = fs::temp_directory_path() / "trivqa_acceptance";
  int ablation_seeds = 5;
  app.add_option("--work-dir", work, "Scratch directory for runs");
  app.add_option("--ablation-seeds", ablation_seeds, "Seeds for the ablation comparison");
  CLI11_PARSE(app, argc, argv);
  fs::remove_all(work);
  fs::create_directories(work);

  criterion("gradient_correctness", [] {
    const auto start = Clock::now();
    const auto out = cli::cmd_gradcheck();
    const double secs = seconds_since(start);
    double worst = 0.0;
    std::size_t blocks = 0;
    for (const auto& s : out.suites) {
      worst = std::max(worst, s.report.max_rel_error());
      blocks += s.report.blocks.size();
    }
    return Outcome{out.passed() && worst < 1e-4 && secs < 30.0,
                   fmt("%zu blocks, max rel error %.3g, %.2f s", blocks, worst, secs)};
  });

  cli::RunConfig cfg;
  cfg.out_dir = work / "default_a";
  std::optional<cli::TrainOutput> run_a;
  double train_secs = 0.0;
  criterion("learnability", [&] {
    const auto start = Clock::now();
    run_a.emplace(cli::cmd_train(cfg));
    const auto eval = cli::cmd_eval(run_a->checkpoint, std::nullopt, cfg.out_dir / "eval");
    train_secs = seconds_since(start);
    return Outcome{eval.test.mean_accuracy >= 0.90 && train_secs < 600.0,
                   fmt("test mean accuracy %.4f after %d epochs, %.1f s", eval.test.mean_accuracy,
                       cfg.training.epochs, train_secs)};
  });

  criterion("ablation_direction", [&] {
    std::map<loss::AblationMode, double> mean;
    for (int s = 0; s < ablation_seeds; ++s) {
      cli::RunConfig ab = cfg;
      ab.seed = static_cast<std::uint64_t>(s);
      ab.out_dir = work / ("ablate_" + std::to_string(s));
      for (const auto& row : cli::cmd_ablate(ab)) mean[row.mode] += row.mean_accuracy / ablation_seeds;
    }
    constexpr double kTie = 0.005;
    const double full = mean.at(loss::AblationMode::full);
    bool ok = true;
    std::string detail = fmt("%d seeds:", ablation_seeds);
    for (const auto& [mode, acc] : mean) {
      detail += fmt(" %s=%.4f", loss::to_string(mode), acc);
      if (mode != loss::AblationMode::full && full + kTie < acc) ok = false;
    }
    return Outcome{ok, detail};
  });

  criterion("reliability_separation", [&] {
    if (!run_a) return Outcome{false, "default run unavailable"};
    const auto rel = cli::cmd_reliability(run_a->checkpoint, std::nullopt, cfg.out_dir / "reliability");
    const std::size_t k = run_a->data.test.schema.size();
    const std::size_t q = rel.separated_count(metrics::Direction::av_to_q);
    const std::size_t v = rel.separated_count(metrics::Direction::aq_to_v);
    const std::size_t need = k - 1;
    return Outcome{q >= need && v >= need, fmt("av_to_q %zu/%zu, aq_to_v %zu/%zu separated", q, k, v, k)};
  });

  criterion("training_curve", [&] {
    if (!run_a) return Outcome{false, "default run unavailable"};
    const auto& rows = run_a->result.curve.rows();
    const auto& a = rows.front();
    const auto& b = rows.back();
    const double r[] = {b.av_to_q_mse / a.av_to_q_mse, b.av_to_q_euclidean / a.av_to_q_euclidean,
                        b.aq_to_v_mse / a.aq_to_v_mse, b.aq_to_v_euclidean / a.aq_to_v_euclidean};
    bool ok = true;
    for (double x : r) ok = ok && x <= 0.5;
    return Outcome{ok, fmt("final/epoch0: av_to_q mse %.3f euclid %.3f, aq_to_v mse %.3f euclid %.3f", r[0], r[1],
                           r[2], r[3])};
  });

  criterion("oracle_auc", check_auc_oracle);
  criterion("oracle_losses", check_loss_oracle);
  criterion("oracle_sgd", check_sgd_oracle);

  criterion("determinism", [&] {
    if (!run_a) return Outcome{false, "default run unavailable"};
    cli::RunConfig again = cfg;
    again.out_dir = work / "default_b";
    const auto run_b = cli::cmd_train(again);
    const bool log_same = read_file(run_a->log) == read_file(run_b.log);
    const bool ckpt_same = read_file(run_a->checkpoint) == read_file(run_b.checkpoint);
    return Outcome{log_same && ckpt_same, fmt("train_log.csv %s, checkpoint.bin %s", log_same ? "identical" : "differs",
                                              ckpt_same ? "identical" : "differs")};
  });

  criterion("schedule_conformance", [&] {
    if (!run_a) return Outcome{false, "default run unavailable"};
    const auto lrs = logged_lrs(run_a->log);
    std::size_t mismatches = 0;
    for (const auto& [epoch, lr] : lrs) {
      if (lr != 0.001 * std::pow(0.1, std::floor(epoch / 10.0))) ++mismatches;
    }
    return Outcome{mismatches == 0 && static_cast<int>(lrs.size()) == cfg.training.epochs,
                   fmt("%zu logged epochs, %zu mismatches", lrs.size(), mismatches)};
  });

  criterion("format_round_trips", [&] {
    const auto ds = data::synth_generate(cfg.synth_config());
    data::save_features(ds, work / "roundtrip" / "dataset.json");
    const auto ds_back = data::load_features(work / "roundtrip" / "dataset.json");
    data::save_features(ds_back, work / "roundtrip" / "dataset2.json");
    const bool ds_same = ds_back == ds && read_file(work / "roundtrip" / "dataset.bin") ==
                                              read_file(work / "roundtrip" / "dataset2.bin");
    bool ck_same = false;
    if (run_a) {
      const auto ck = cli::load_checkpoint(run_a->checkpoint);
      cli::save_checkpoint(ck, work / "roundtrip" / "checkpoint.bin");
      ck_same = ck.params == run_a->result.model.params() &&
                read_file(run_a->checkpoint) == read_file(work / "roundtrip" / "checkpoint.bin");
    }
    return Outcome{ds_same && ck_same, fmt("dataset %s, checkpoint %s", ds_same ? "bit-identical" : "differs",
                                           ck_same ? "bit-identical" : "differs")};
  });

  std::printf("acceptance: %d failed criteria\n", failures);
  return failures ? 1 : 0;
}
