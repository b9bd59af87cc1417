// Command-line driver: train, eval, plot, export-data.
//
// Exit codes: 0 success, 1 usage/config error, 2 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "ganlab/ganlab.hpp"

namespace {

int run_train(const std::string& config_path, const std::string& out_dir,
              const std::string& resume_path) {
  ganlab::TrainConfig cfg = ganlab::load_config(config_path);
  cfg.out_dir = out_dir;
  ganlab::TrainState state;
  if (!resume_path.empty()) {
    state = ganlab::load_checkpoint(resume_path);
    state.config.out_dir = out_dir;
    if (ganlab::serialize_config(state.config) != ganlab::serialize_config(cfg))
      throw ganlab::config_error(
          "resume: config file does not match the checkpoint's config");
  } else {
    state = ganlab::init_train_state(cfg);
  }
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream cf(out_dir + "/config.txt");
    cf << ganlab::serialize_config(cfg);
  }
  ganlab::TrainCallbacks cb;
  cb.on_log = [](int64_t step, const ganlab::StepMetrics& m) {
    std::printf("step %6lld  loss_d % .4f  loss_g % .4f  sigma %.3f  bank %lld\n",
                static_cast<long long>(step), m.loss_d, m.loss_g, m.sigma_mean,
                static_cast<long long>(m.bank_fill));
    std::fflush(stdout);
  };
  ganlab::train_run_to_file(std::move(state), out_dir, cb);
  std::printf("done; checkpoint and metrics.csv written to %s\n", out_dir.c_str());
  return 0;
}

int run_eval(const std::string& ckpt_path, const std::string& split,
             const std::string& out_csv) {
  ganlab::TrainState state = ganlab::load_checkpoint(ckpt_path);
  ganlab::EvalResult res = ganlab::evaluate_split(state, split);
  std::string text = std::string(ganlab::kEvalHeader) + "\n" +
                     ganlab::eval_csv_row(res);
  if (out_csv.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    std::ofstream os(out_csv);
    if (!os) throw ganlab::error("cannot open '" + out_csv + "' for writing");
    os << text;
    std::printf("wrote %s\n", out_csv.c_str());
  }
  return 0;
}

int run_plot(const std::string& ckpt_path, const std::string& out_dir) {
  ganlab::TrainState state = ganlab::load_checkpoint(ckpt_path);
  const ganlab::TrainConfig& cfg = state.config;
  std::filesystem::create_directories(out_dir);

  ganlab::LabeledPoints train = ganlab::dataset_split(cfg, "train");
  ganlab::write_svg_scatter(out_dir + "/data.svg", train.points, train.labels,
                            "training data");

  ganlab::Tensor prior = ganlab::sample_prior(
      2000, cfg.prior_dim,
      ganlab::rng_stream(static_cast<uint64_t>(cfg.eval_seed), "gen_prior"));
  ganlab::Tensor gen = ganlab::generator_forward(state.g_ema, prior);
  ganlab::write_svg_scatter(out_dir + "/generated.svg", gen, {},
                            "generated samples");

  ganlab::LabeledPoints val = ganlab::dataset_split(cfg, "val");
  ganlab::Tensor feats = ganlab::backbone_features(state.d_ema, val.points);
  ganlab::Tensor proj = ganlab::pca_2d(feats);
  ganlab::write_svg_scatter(out_dir + "/embedding_pca.svg", proj, val.labels,
                            "backbone embeddings (2-D PCA)");
  std::printf("wrote 3 plots to %s\n", out_dir.c_str());
  return 0;
}

int run_export(const std::string& config_path, const std::string& out_csv,
               const std::string& split) {
  ganlab::TrainConfig cfg = ganlab::load_config(config_path);
  ganlab::LabeledPoints data = ganlab::dataset_split(cfg, split);
  std::ofstream os(out_csv);
  if (!os) throw ganlab::error("cannot open '" + out_csv + "' for writing");
  os << "x,y,label\n";
  char buf[96];
  for (int64_t i = 0; i < data.points.rows(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d\n", data.points.at(i, 0),
                  data.points.at(i, 1), data.labels[static_cast<size_t>(i)]);
    os << buf;
  }
  std::printf("wrote %lld points to %s\n",
              static_cast<long long>(data.points.rows()), out_csv.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GAN feature-learning lab on the synthetic double-spiral task"};
  app.require_subcommand(1);

  std::string config_path, out_path, resume_path, ckpt_path, split = "val";

  CLI::App* train = app.add_subcommand("train", "train a model from a config");
  train->add_option("--config", config_path, "config file (key = value lines)")
      ->required();
  train->add_option("--out", out_path, "output directory")->required();
  train->add_option("--resume", resume_path, "checkpoint to resume from");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  eval->add_option("--split", split, "train | val")->required();
  eval->add_option("--out", out_path, "metrics CSV (stdout when omitted)");

  CLI::App* plot = app.add_subcommand("plot", "emit SVG scatter plots");
  plot->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  plot->add_option("--out", out_path, "output directory")->required();

  CLI::App* exp = app.add_subcommand("export-data", "write the dataset as CSV");
  exp->add_option("--config", config_path, "config file")->required();
  exp->add_option("--out", out_path, "output CSV path")->required();
  exp->add_option("--split", split, "train | val (default train)");

  try {
    app.parse(argc, argv);
    if (train->parsed()) return run_train(config_path, out_path, resume_path);
    if (eval->parsed()) return run_eval(ckpt_path, split, out_path);
    if (plot->parsed()) return run_plot(ckpt_path, out_path);
    if (exp->parsed())
      return run_export(config_path, out_path,
                        exp->count("--split") ? split : "train");
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ganlab::numeric_error& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 2;
  } catch (const ganlab::error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
