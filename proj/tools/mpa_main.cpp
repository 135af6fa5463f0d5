#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mpa/checkpoint.hpp"
#include "mpa/evaluate.hpp"
#include "mpa/pipeline.hpp"
#include "mpa/taskmodels.hpp"
#include "mpa/toydata.hpp"
#include "mpa/training.hpp"

namespace {

struct ModelArgs {
  std::string arch = "desk";
  std::string model;
  std::uint64_t seed = 1;
};

void add_model_args(CLI::App* cmd, ModelArgs& a) {
  cmd->add_option("--arch", a.arch, "model architecture")
      ->check(CLI::IsMember({"desk", "tiny"}));
  cmd->add_option("--model", a.model, "checkpoint to load")->check(CLI::ExistingFile);
  cmd->add_option("--seed", a.seed, "parameter init seed when no checkpoint is given");
}

// The store must outlive the model, which keeps raw pointers into it.
struct LoadedModel {
  mpa::ParameterStore<float> store;
  std::unique_ptr<mpa::CodecModel<float>> model;
};

std::unique_ptr<LoadedModel> build_model(const ModelArgs& a) {
  auto lm = std::make_unique<LoadedModel>();
  mpa::ModelConfig mc = mpa::model_config_from_name(a.arch);
  std::set<mpa::Task> tasks = {mpa::Task::mse, mpa::Task::cls, mpa::Task::seg};
  lm->model = std::make_unique<mpa::CodecModel<float>>(mc, lm->store, tasks, a.seed);
  if (!a.model.empty()) mpa::load_checkpoint(lm->store, a.model);
  return lm;
}

std::unique_ptr<mpa::TaskNet<float>> load_task_net(mpa::Task task, const std::string& path) {
  if (path.empty())
    throw mpa::ConfigError("--task-model is required when --task is not mse");
  auto kind = task == mpa::Task::cls ? mpa::TaskModelKind::classifier
                                     : mpa::TaskModelKind::segmenter;
  int classes = task == mpa::Task::cls ? 2 : 3;
  auto net = std::make_unique<mpa::TaskNet<float>>(kind, classes, 1);
  mpa::load_checkpoint(net->params(), path);
  net->freeze();
  return net;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw mpa::ConfigError("cannot open '" + path + "' for writing");
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-path image codec: variable-rate compression with task-routed decoding"};
  app.require_subcommand(1);

  // encode
  auto* enc = app.add_subcommand("encode", "compress a PPM image into a bitstream");
  ModelArgs enc_margs;
  std::string enc_in, enc_out;
  double enc_q = 4.0;
  enc->add_option("--input", enc_in, "input PPM (P6)")->required()->check(CLI::ExistingFile);
  enc->add_option("--output", enc_out, "output bitstream path")->required();
  enc->add_option("--q", enc_q, "quality in [1, 8]; snapped to the coded grid");
  add_model_args(enc, enc_margs);
  enc->callback([&] {
    mpa::Image img = mpa::read_ppm(enc_in);
    auto lm = build_model(enc_margs);
    mpa::CompressStats st;
    auto bytes = mpa::compress_image(*lm->model, img, enc_q, &st);
    mpa::write_file(enc_out, bytes);
    std::printf("q=%.4f bpp_estimated=%.6f bpp_actual=%.6f bytes=%zu\n", st.q, st.bpp_est,
                st.bpp_act, bytes.size());
  });

  // decode
  auto* dec = app.add_subcommand("decode", "reconstruct an image from a bitstream");
  ModelArgs dec_margs;
  std::string dec_in, dec_out, dec_task = "mse", dec_dump;
  double dec_alpha = 0.0;
  dec->add_option("--input", dec_in, "input bitstream")->required()->check(CLI::ExistingFile);
  dec->add_option("--output", dec_out, "output PPM path")->required();
  dec->add_option("--alpha", dec_alpha, "side-path fraction in [0, 1]")
      ->check(CLI::Range(0.0, 1.0));
  dec->add_option("--task", dec_task, "decoder routing target")
      ->check(CLI::IsMember({"mse", "cls", "seg"}));
  dec->add_option("--dump-masks", dec_dump, "directory for per-stage routing mask PGMs");
  add_model_args(dec, dec_margs);
  dec->callback([&] {
    auto bytes = mpa::read_file(dec_in);
    auto lm = build_model(dec_margs);
    auto res = mpa::decompress_image(*lm->model, bytes, dec_alpha, mpa::task_from_name(dec_task));
    mpa::write_ppm(dec_out, res.image);
    if (!dec_dump.empty()) {
      std::filesystem::create_directories(dec_dump);
      for (std::size_t i = 0; i < res.dec_masks.size(); ++i) {
        const auto& m = res.dec_masks[i];
        std::string path = dec_dump + "/mask_stage" + std::to_string(i + 1) + ".pgm";
        mpa::write_pgm(path, m.w, m.h, m.on);
      }
    }
    std::printf("q=%.4f %dx%d -> %s\n", res.q, res.image.width, res.image.height,
                dec_out.c_str());
  });

  // eval
  auto* ev = app.add_subcommand("eval", "sweep quality/alpha grids over a dataset");
  ModelArgs ev_margs;
  std::string ev_data, ev_out, ev_task = "mse", ev_task_model;
  std::vector<double> ev_q{1.0, 4.0, 8.0};
  std::vector<double> ev_alpha{0.0};
  ev->add_option("--dataset", ev_data, "directory of PPM images (plus labels for task metrics)")
      ->required()
      ->check(CLI::ExistingDirectory);
  ev->add_option("--q-grid", ev_q, "qualities to sweep")->delimiter(',');
  ev->add_option("--alpha-grid", ev_alpha, "alphas to sweep")->delimiter(',');
  ev->add_option("--task", ev_task, "metric / routing target")
      ->check(CLI::IsMember({"mse", "cls", "seg"}));
  ev->add_option("--task-model", ev_task_model, "task head checkpoint (cls/seg)")
      ->check(CLI::ExistingFile);
  ev->add_option("--out", ev_out, "CSV output path (stdout when omitted)");
  add_model_args(ev, ev_margs);
  ev->callback([&] {
    auto samples = mpa::read_toy_dataset(ev_data, mpa::toy_kind_from_name(ev_task));
    auto lm = build_model(ev_margs);
    mpa::EvalOptions opts;
    opts.q_grid = ev_q;
    opts.alpha_grid = ev_alpha;
    opts.task = mpa::task_from_name(ev_task);
    std::unique_ptr<mpa::TaskNet<float>> net;
    if (opts.task != mpa::Task::mse) net = load_task_net(opts.task, ev_task_model);
    auto rows = mpa::evaluate_grid(*lm->model, samples, opts, net.get());
    std::string csv = mpa::eval_report_csv(rows);
    if (ev_out.empty())
      std::fputs(csv.c_str(), stdout);
    else
      write_text(ev_out, csv);
    std::fprintf(stderr, "evaluated %zu rows\n", rows.size());
  });

  // train
  auto* tr = app.add_subcommand("train", "run a training stage from a config file");
  std::string tr_config;
  tr->add_option("--config", tr_config, "key=value config file")
      ->required()
      ->check(CLI::ExistingFile);
  tr->callback([&] {
    mpa::TrainConfig cfg = mpa::load_train_config(tr_config);
    mpa::TrainResult res = mpa::run_training(cfg, &std::cerr);
    std::printf("trainable_fraction=%.6f\n", res.trainable_fraction);
    if (!res.rows.empty()) {
      const auto& r = res.rows.back();
      std::printf("final step=%ld bpp=%.6f mse=%.6f task_metric=%.6f\n", r.step, r.bpp, r.mse,
                  r.task_metric);
    }
  });

  // gendata
  auto* gd = app.add_subcommand("gendata", "write a synthetic dataset directory");
  std::string gd_kind, gd_out;
  int gd_n = 256, gd_size = 64;
  std::uint64_t gd_seed = 7;
  gd->add_option("--kind", gd_kind, "texture | grating | regions")->required();
  gd->add_option("--n", gd_n, "image count")->check(CLI::PositiveNumber);
  gd->add_option("--size", gd_size, "square image extent")->check(CLI::PositiveNumber);
  gd->add_option("--seed", gd_seed, "generator seed");
  gd->add_option("--out", gd_out, "output directory")->required();
  gd->callback([&] {
    mpa::ToyKind kind = mpa::toy_kind_from_name(gd_kind);
    mpa::write_toy_dataset(gd_out, kind, gd_seed, gd_n, gd_size);
    std::printf("wrote %d %s images to %s\n", gd_n, mpa::toy_kind_name(kind), gd_out.c_str());
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const mpa::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const mpa::FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return 3;
  } catch (const mpa::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
  return 0;
}
