#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "ganlab/checkpoint.hpp"
#include "ganlab/config.hpp"
#include "ganlab/evaluate.hpp"
#include "ganlab/svgplot.hpp"
#include "ganlab/train.hpp"

using namespace ganlab;

namespace {

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.total_steps = 12;
  cfg.n_train = 128;
  cfg.n_val = 64;
  cfg.d_hidden_width = 32;
  cfg.d_hidden_layers = 2;
  cfg.embed_dim = 8;
  cfg.g_hidden_width = 32;
  cfg.g_hidden_layers = 2;
  cfg.prior_dim = 8;
  cfg.bank_capacity = 64;
  cfg.neighbors_k = 3;
  cfg.log_interval = 2;
  cfg.kmeans_repeats = 3;
  cfg.probe_epochs = 30;
  return cfg;
}

std::string run_to_string(TrainConfig cfg, const std::string& out_dir = "") {
  TrainState st = init_train_state(cfg);
  std::ostringstream os;
  train_run(std::move(st), os, out_dir);
  return os.str();
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ganlab_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("config parsing: defaults, comments, unknown keys, round trip") {
  TrainConfig def;
  CHECK(def.lambda_h == 4.0);
  CHECK(def.lambda_c == 3.0);
  CHECK(def.lambda_s == 5.0);
  CHECK(def.lip_target == 1.0);
  CHECK(def.power_iter_steps == 1);
  CHECK(def.n_dis == 1);
  CHECK(def.lr == 2e-4);
  CHECK(def.weight_decay_d == 0.1);
  CHECK(def.weight_decay_g == 0.0);
  CHECK(def.distance == "jsd");
  CHECK(def.total_steps == 20000);

  TrainConfig parsed = parse_config_text(
      "# comment line\n"
      "lambda_c = 1.5   # trailing comment\n"
      "\n"
      "distance = bhattacharyya\n"
      "batch_size = 32\n");
  CHECK(parsed.lambda_c == 1.5);
  CHECK(parsed.distance == "bhattacharyya");
  CHECK(parsed.batch_size == 32);

  CHECK_THROWS_AS(parse_config_text("no_such_key = 3\n"), config_error);
  CHECK_THROWS_AS(parse_config_text("lambda_c == 3\n"), config_error);
  CHECK_THROWS_AS(parse_config_text("batch_size = 1\n"), config_error);
  CHECK_THROWS_AS(parse_config_text("distance = wgan\n"), config_error);
  CHECK_THROWS_AS(parse_config_text("ema_decay = 1.0\n"), config_error);

  TrainConfig cfg = tiny_config();
  TrainConfig re = parse_config_text(serialize_config(cfg));
  CHECK(serialize_config(re) == serialize_config(cfg));
}

TEST_CASE("zero steps produce a checkpoint of the initial state and an empty log") {
  TrainConfig cfg = tiny_config();
  cfg.total_steps = 0;
  auto dir = temp_dir("zerosteps");
  TrainState st = init_train_state(cfg);
  std::ostringstream os;
  train_run(std::move(st), os, dir.string());
  CHECK(os.str() == std::string(kMetricsHeader) + "\n");
  CHECK(std::filesystem::exists(dir / "checkpoint.bin"));
  TrainState loaded = load_checkpoint((dir / "checkpoint.bin").string());
  CHECK(loaded.step == 0);
}

TEST_CASE("smoke run: all logged terms finite, sigma within (0, 10)") {
  TrainConfig cfg = tiny_config();
  cfg.total_steps = 50;
  cfg.batch_size = 64;
  cfg.n_train = 256;
  LabeledPoints data = sample_spirals(cfg.n_train, cfg.noise_sd,
                                      static_cast<uint64_t>(cfg.data_seed));
  TrainState st = init_train_state(cfg);
  for (int step = 0; step < 50; ++step) {
    StepMetrics m = train_step(st, data);
    CHECK(std::isfinite(m.loss_d));
    CHECK(std::isfinite(m.loss_g));
    CHECK(std::isfinite(m.gaussian));
    CHECK(std::isfinite(m.cluster_real));
    CHECK(std::isfinite(m.cluster_fake));
    CHECK(std::isfinite(m.hinge_norm));
    CHECK(m.sigma_mean > 0.0);
    CHECK(m.sigma_mean < 10.0);
  }
  CHECK(st.bank.size() > 0);
}

TEST_CASE("identical configs produce byte-identical metrics logs") {
  TrainConfig cfg = tiny_config();
  const std::string a = run_to_string(cfg);
  const std::string b = run_to_string(cfg);
  CHECK(a == b);
  CHECK(a.find(kMetricsHeader) == 0);
}

TEST_CASE("the hinge-baseline path trains without structural terms") {
  TrainConfig cfg = tiny_config();
  cfg.distance = "hinge-baseline";
  cfg.total_steps = 8;
  LabeledPoints data = sample_spirals(cfg.n_train, cfg.noise_sd,
                                      static_cast<uint64_t>(cfg.data_seed));
  TrainState st = init_train_state(cfg);
  for (int step = 0; step < 8; ++step) {
    StepMetrics m = train_step(st, data);
    CHECK(std::isfinite(m.loss_d));
    CHECK(m.gaussian == 0.0);
    CHECK(m.cluster_real == 0.0);
    CHECK(m.cluster_fake == 0.0);
  }
  CHECK(st.bank.size() == 0);  // no structural bank traffic
}

TEST_CASE("checkpoints round-trip byte-exactly") {
  TrainConfig cfg = tiny_config();
  cfg.total_steps = 6;
  auto dir = temp_dir("roundtrip");
  TrainState st = init_train_state(cfg);
  std::ostringstream os;
  TrainState done = train_run(std::move(st), os, dir.string());
  (void)done;

  const auto ck = dir / "checkpoint.bin";
  TrainState loaded = load_checkpoint(ck.string());
  const auto ck2 = dir / "checkpoint2.bin";
  save_checkpoint(loaded, ck2.string());

  std::ifstream f1(ck, std::ios::binary), f2(ck2, std::ios::binary);
  std::stringstream s1, s2;
  s1 << f1.rdbuf();
  s2 << f2.rdbuf();
  CHECK(s1.str() == s2.str());
  CHECK(!s1.str().empty());
}

TEST_CASE("resuming from a mid-run checkpoint continues bit-identically") {
  TrainConfig cfg = tiny_config();
  cfg.total_steps = 10;
  cfg.log_interval = 1;

  // Straight run.
  const std::string straight = run_to_string(cfg);

  // Run to step 5, checkpoint, reload, continue to 10.
  cfg.checkpoint_interval = 5;
  auto dir = temp_dir("resume");
  TrainState st = init_train_state(cfg);
  std::ostringstream first;
  train_run(std::move(st), first, dir.string());
  TrainState resumed = load_checkpoint((dir / "checkpoint_step5.bin").string());
  CHECK(resumed.step == 5);
  std::ostringstream second;
  train_run(std::move(resumed), second, "");

  // Rows beyond step 5 must match the straight run byte for byte.
  std::vector<std::string> all_rows;
  std::istringstream in(straight);
  std::string line;
  while (std::getline(in, line)) all_rows.push_back(line);
  std::vector<std::string> tail_rows;
  std::istringstream in2(second.str());
  while (std::getline(in2, line)) tail_rows.push_back(line);
  REQUIRE(all_rows.size() == 11);  // header + 10 rows
  REQUIRE(tail_rows.size() == 5);  // rows 6..10 (no header on resume)
  for (size_t i = 0; i < tail_rows.size(); ++i)
    CHECK(tail_rows[i] == all_rows[6 + i]);
}

TEST_CASE("evaluation is deterministic and reports the pinned csv schema") {
  TrainConfig cfg = tiny_config();
  cfg.total_steps = 5;
  TrainState st = init_train_state(cfg);
  LabeledPoints data = sample_spirals(cfg.n_train, cfg.noise_sd,
                                      static_cast<uint64_t>(cfg.data_seed));
  for (int i = 0; i < 5; ++i) train_step(st, data);
  EvalResult a = evaluate_split(st, "val");
  EvalResult b = evaluate_split(st, "val");
  CHECK(eval_csv_row(a) == eval_csv_row(b));
  CHECK(std::string(kEvalHeader) ==
        "split,kmeans_acc_mean,kmeans_acc_sd,nmi,purity,probe_acc,arm0_share,"
        "manifold_rate");
  CHECK(a.kmeans_acc_mean >= 0.0);
  CHECK(a.kmeans_acc_mean <= 1.0);
  CHECK(a.arm0_share >= 0.0);
  CHECK(a.arm0_share <= 1.0);
  CHECK_THROWS_AS(evaluate_split(st, "test"), config_error);
}

TEST_CASE("metrics csv header matches the pinned schema") {
  CHECK(std::string(kMetricsHeader) ==
        "step,loss_d_total,loss_g_total,gaussian,cluster_real,cluster_fake,"
        "hinge_norm,sigma_hat_mean,sigma_hat_max,bank_fill");
}

TEST_CASE("svg plots are well-formed and sized to the data") {
  auto dir = temp_dir("svg");
  Rng rng(4);
  Tensor pts = rng.normal_tensor({37, 2});
  std::vector<int> labels;
  for (int i = 0; i < 37; ++i) labels.push_back(i % 2);
  const std::string path = (dir / "scatter.svg").string();
  write_svg_scatter(path, pts, labels, "test");

  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string svg = ss.str();
  CHECK(svg.find("<?xml") == 0);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.rfind("</svg>") != std::string::npos);
  size_t count = 0, pos = 0;
  while ((pos = svg.find("<circle", pos)) != std::string::npos) {
    ++count;
    pos += 7;
  }
  CHECK(count == 37);
  // Tag balance: every circle is self-closed, svg opens and closes once.
  CHECK(svg.find("/>") != std::string::npos);
}

TEST_CASE("pca projection puts the larger variance on the first axis") {
  Rng rng(5);
  const int64_t n = 200;
  Tensor feats = Tensor::uninit({n, 6});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < 6; ++j)
      feats.at(i, j) = rng.next_normal() * (j == 2 ? 5.0 : (j == 4 ? 2.0 : 0.3));
  Tensor proj = pca_2d(feats);
  double v0 = 0, v1 = 0, m0 = 0, m1 = 0;
  for (int64_t i = 0; i < n; ++i) {
    m0 += proj.at(i, 0);
    m1 += proj.at(i, 1);
  }
  m0 /= n;
  m1 /= n;
  for (int64_t i = 0; i < n; ++i) {
    v0 += (proj.at(i, 0) - m0) * (proj.at(i, 0) - m0);
    v1 += (proj.at(i, 1) - m1) * (proj.at(i, 1) - m1);
  }
  CHECK(v0 >= v1);
  CHECK(v0 / n == doctest::Approx(25.0).epsilon(0.25));
}

TEST_CASE("n_dis > 1 performs several discriminator updates per step") {
  TrainConfig cfg = tiny_config();
  cfg.n_dis = 2;
  cfg.total_steps = 3;
  LabeledPoints data = sample_spirals(cfg.n_train, cfg.noise_sd,
                                      static_cast<uint64_t>(cfg.data_seed));
  TrainState st = init_train_state(cfg);
  for (int i = 0; i < 3; ++i) train_step(st, data);
  CHECK(st.opt_d.t == 6);
  CHECK(st.opt_g.t == 3);
}

TEST_CASE("cluster terms stay off until the bank holds enough neighbors") {
  TrainConfig cfg = tiny_config();
  cfg.neighbors_k = 100;  // never warm at bank capacity 64
  cfg.total_steps = 4;
  LabeledPoints data = sample_spirals(cfg.n_train, cfg.noise_sd,
                                      static_cast<uint64_t>(cfg.data_seed));
  TrainState st = init_train_state(cfg);
  for (int i = 0; i < 4; ++i) {
    StepMetrics m = train_step(st, data);
    CHECK(m.cluster_real == 0.0);
    CHECK(m.cluster_fake == 0.0);
  }
}
