#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "streamattack/error.hpp"
#include "streamattack/harness.hpp"

using namespace streamattack;
namespace fs = std::filesystem;

namespace {

StepRecord attacked_record(double y, double y_adv) {
  StepRecord r;
  r.y_true = y;
  r.y_hat_clean = y;
  r.attacked = true;
  r.y_hat_adv = y_adv;
  return r;
}

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.source = DataSource::Synthetic;
  c.synth_features = 3;
  c.buffer_capacity = 3000;
  c.window = 24;
  c.stream_steps = 1500;
  c.history = 200;
  c.warmup = 200;
  c.train.epochs = 2;
  c.train.architecture.filters = 4;
  c.train.architecture.hidden = 8;
  c.lid.k = 10;
  c.lid.batch = 50;
  c.detector_windows = 200;
  c.attack.kind = AttackKind::Bim;
  return c;
}

const PreparedRun& shared_run() {
  static const PreparedRun run = prepare_run(small_config(), 1);
  return run;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("rmse_adv examples") {
  CHECK(*rmse_adv({attacked_record(1, 1), attacked_record(2, 2)}) == 0.0);
  CHECK(*rmse_adv({attacked_record(0, 3), attacked_record(0, 4)}) == doctest::Approx(3.5355).epsilon(1e-4));
  CHECK_FALSE(rmse_adv({}).has_value());
  StepRecord clean;
  clean.y_true = 5.0;
  CHECK_FALSE(rmse_adv({clean}).has_value());
}

TEST_CASE("rmse_adv matches a loop oracle and ignores clean records") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2, 2);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<StepRecord> recs;
    double sum = 0.0;
    std::size_t n = 0;
    for (int i = 0; i < 100; ++i) {
      if (coin(rng)) {
        const auto r = attacked_record(u(rng), u(rng));
        sum += (r.y_true - *r.y_hat_adv) * (r.y_true - *r.y_hat_adv);
        ++n;
        recs.push_back(r);
      } else {
        StepRecord c;
        c.y_true = u(rng);
        c.y_hat_clean = u(rng);
        recs.push_back(c);
      }
    }
    if (n == 0) continue;
    const double expect = std::sqrt(sum / static_cast<double>(n));
    CHECK(std::abs(*rmse_adv(recs) - expect) <= 1e-12);
    StepRecord extra;
    extra.y_true = 100.0;
    recs.push_back(extra);
    CHECK(*rmse_adv(recs) == doctest::Approx(expect).epsilon(1e-15));
  }
}

TEST_CASE("config parsing and validation") {
  ExperimentConfig c;
  c.set("source", "synthetic");
  c.set("epsilons", "0.05, 0.1");
  c.set("kinds", "fgsm,ni-fgsm");
  c.set("seeds", "4,5,6");
  c.set("mode", "baseline-rate-matched");
  CHECK(c.epsilons == std::vector<double>{0.05, 0.1});
  CHECK(c.kinds == std::vector<AttackKind>{AttackKind::Fgsm, AttackKind::NiFgsm});
  CHECK(c.seeds == std::vector<std::uint64_t>{4, 5, 6});
  CHECK(c.mode == RunMode::BaselineRateMatched);
  CHECK_NOTHROW(c.validate());
  CHECK_THROWS_AS(c.set("colour", "blue"), ConfigError);
  CHECK_THROWS_AS(c.set("window", "sixty"), ConfigError);
  CHECK_THROWS_AS(c.set("mode", "sometimes"), ConfigError);

  ExperimentConfig r = c;
  r.attack_rate = 1.0;
  CHECK_THROWS_AS(r.validate(), ConfigError);
  r = c;
  r.miscoverage = 0.0;
  CHECK_THROWS_AS(r.validate(), ConfigError);
  r = c;
  r.source = DataSource::Household;
  CHECK_THROWS_AS(r.validate(), ConfigError);
  r.data_path = "/nonexistent/household.csv";
  CHECK_THROWS_AS(r.validate(), IoError);

  const fs::path file = fs::temp_directory_path() / "streamattack_cfg.txt";
  std::ofstream(file) << "# comment\nsource=synthetic\nbuffer=5000\nattack=bim\nepsilon=0.15\n";
  ExperimentConfig f;
  f.load_file(file);
  CHECK(f.buffer_capacity == 5000);
  CHECK(f.attack.kind == AttackKind::Bim);
  CHECK(f.attack.epsilon == 0.15);
}

TEST_CASE("too little data for buffer plus 1000 steps is a data-size error") {
  ExperimentConfig c = small_config();
  c.stream_steps = 999;
  CHECK_THROWS_AS(prepare_run(c, 1), DataSizeError);
}

TEST_CASE("clean mode attacks nothing and reports rmse_adv as absent") {
  RunOptions o;
  o.mode = RunMode::Clean;
  const RunResult r = run_stream(shared_run(), o);
  CHECK(r.metrics.attack_count == 0);
  CHECK_FALSE(r.metrics.rmse_adv.has_value());
  CHECK(r.records.size() == 1500);
  CHECK(r.metrics.rmse_clean >= 0.0);
  CHECK(format_run_report(shared_run().config, {r.metrics}).find("rmse_adv=absent") != std::string::npos);
}

TEST_CASE("selective run: record invariants and report totals") {
  RunOptions o;
  o.mode = RunMode::Selective;
  o.attack = shared_run().config.attack;
  o.keep_perturbations = true;
  const RunResult r = run_stream(shared_run(), o);
  std::size_t attacked = 0;
  for (const auto& rec : r.records) {
    CHECK(rec.y_hat_adv.has_value() == rec.attacked);
    CHECK(rec.width == doctest::Approx(rec.hi - rec.lo));
    CHECK(rec.hi >= rec.lo);
    if (rec.warmup) CHECK_FALSE(rec.attacked);
    if (rec.attacked) {
      ++attacked;
      CHECK(rec.width >= rec.threshold);
    }
  }
  CHECK(attacked == r.metrics.attack_count);
  REQUIRE(r.perturbations.size() == attacked);
  REQUIRE(r.kept.size() == attacked);
  for (const auto& p : r.perturbations) {
    CHECK(p.within_epsilon);
    if (p.clean_in_unit_box) CHECK(p.in_unit_box);
  }
  CHECK(r.metrics.warmup == 200);
  CHECK(r.metrics.realized_rate ==
        doctest::Approx(static_cast<double>(attacked) / static_cast<double>(r.metrics.total_steps - r.metrics.warmup)));
  CHECK(r.metrics.epsilon_violations == 0);
  CHECK(r.metrics.rmse_adv.has_value());
  CHECK(*r.metrics.rmse_adv >= 0.0);
}

TEST_CASE("baselines: every-step covers all post-warm-up steps, rate-matched copies the count") {
  RunOptions o;
  o.attack = shared_run().config.attack;
  o.mode = RunMode::Selective;
  const RunResult sel = run_stream(shared_run(), o);

  o.mode = RunMode::BaselineEveryStep;
  const RunResult every = run_stream(shared_run(), o);
  CHECK(every.metrics.attack_count == 1500 - 200);
  CHECK(every.metrics.realized_rate == 1.0);

  o.mode = RunMode::BaselineRateMatched;
  o.matched_attack_count = sel.metrics.attack_count;
  const RunResult matched = run_stream(shared_run(), o);
  CHECK(matched.metrics.attack_count == sel.metrics.attack_count);
  for (const auto& rec : matched.records) {
    if (rec.warmup) CHECK_FALSE(rec.attacked);
  }
  CHECK(matched.metrics.model_hash == sel.metrics.model_hash);
  CHECK(matched.metrics.calibrator_hash == sel.metrics.calibrator_hash);
  CHECK(matched.metrics.stream_hash == sel.metrics.stream_hash);

  const RunResult again = run_stream(shared_run(), o);
  CHECK(format_run_report(shared_run().config, {again.metrics}) ==
        format_run_report(shared_run().config, {matched.metrics}));
}

TEST_CASE("identical configuration twice gives byte-identical reports") {
  ExperimentConfig c = small_config();
  c.mode = RunMode::Selective;
  const auto a = run_stream(c);
  const auto b = run_stream(c);
  CHECK(format_run_report(c, {a.metrics}) == format_run_report(c, {b.metrics}));
}

TEST_CASE("detector scores are attached after warm-up") {
  const auto det = fit_stream_detector(shared_run(), shared_run().config.attack);
  RunOptions o;
  o.mode = RunMode::Selective;
  o.attack = shared_run().config.attack;
  o.detector = det.get();
  const RunResult r = run_stream(shared_run(), o);
  for (const auto& rec : r.records) CHECK(rec.detector_score.has_value() == !rec.warmup);
  REQUIRE(r.metrics.detection.has_value());
  CHECK(r.metrics.detection->tp + r.metrics.detection->fn == r.metrics.attack_count);
}

TEST_CASE("persistent poisoning feeds perturbed rows back into the buffer") {
  PreparedRun run = shared_run();
  run.config.persistent_poisoning = true;
  RunOptions o;
  o.mode = RunMode::BaselineEveryStep;
  o.attack = run.config.attack;
  const RunResult poisoned = run_stream(run, o);
  const RunResult plain = run_stream(shared_run(), o);
  CHECK(poisoned.metrics.attack_count == plain.metrics.attack_count);
  CHECK(*poisoned.metrics.rmse_adv != *plain.metrics.rmse_adv);
}

TEST_CASE("plot files: row counts, marks and byte-identical re-emission") {
  ExperimentConfig c = small_config();
  c.stream_steps = 10000;
  c.attack.kind = AttackKind::Fgsm;
  const PreparedRun run = prepare_run(c, 2);
  RunOptions o;
  o.mode = RunMode::Selective;
  o.attack = c.attack;
  const RunResult r = run_stream(run, o);
  REQUIRE(r.records.size() == 10000);
  const fs::path dir = fs::temp_directory_path() / "streamattack_plots";
  fs::remove_all(dir);
  const auto files = emit_plots(r.records, dir, "p");
  REQUIRE(files.size() == 2);
  const std::string widths = slurp(files[0]), forecast = slurp(files[1]);
  CHECK(count_lines(widths) == 10001);
  CHECK(count_lines(forecast) == 10001);
  CHECK(widths.rfind("# ", 0) == 0);

  std::istringstream in(widths);
  std::string line;
  std::getline(in, line);
  std::size_t i = 0;
  bool marks_ok = true;
  while (std::getline(in, line)) {
    const char mark = line.back();
    marks_ok = marks_ok && (mark == '1') == r.records[i].attacked;
    ++i;
  }
  CHECK(marks_ok);

  emit_plots(r.records, dir, "p");
  CHECK(slurp(files[0]) == widths);
  CHECK(slurp(files[1]) == forecast);
  CHECK_THROWS_AS(emit_plots({}, dir, "q"), UsageError);
}

TEST_CASE("compare produces the kind by epsilon grid with shared hashes") {
  ExperimentConfig c = small_config();
  c.stream_steps = 1200;
  c.detector = false;
  const fs::path dir = fs::temp_directory_path() / "streamattack_compare";
  fs::remove_all(dir);
  const ComparisonReport rep = compare_modes(c, dir);
  REQUIRE(rep.cells.size() == 9);
  for (const auto& cell : rep.cells) {
    REQUIRE(cell.seeds.size() == 1);
    const auto& s = cell.seeds[0];
    CHECK(s.rate_matched.attack_count == s.selective.attack_count);
    CHECK(s.selective.model_hash == s.every_step.model_hash);
  }
  const std::string text = format_comparison_report(rep);
  CHECK(text.find("modes_share_model_calibrator_stream=yes") != std::string::npos);
  CHECK(text.find("[reference]") != std::string::npos);
  CHECK(rep.plot_files.size() == 4);
  CHECK(cell_mean(rep.cells[0], RunMode::Selective).has_value());
  CHECK_FALSE(cell_mean_f1(rep.cells[0], RunMode::Selective).has_value());
}
