// auhm: command-line front end for synthesis, training, evaluation and inference.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "auhm/auhm.hpp"

namespace {

using namespace auhm;

struct Loaded {
  Checkpoint ck;
  Model<float> model;
  Pipeline pipeline;
};

Loaded load_model(const std::string& path) {
  Checkpoint ck = io::load_checkpoint(path);
  Model<float> model = model_from_checkpoint<float>(ck);
  Pipeline p = make_pipeline(ck.config, ck.au_ids);
  return {std::move(ck), std::move(model), std::move(p)};
}

std::vector<HeatmapStack> predict_one(Loaded& m, const std::string& image, const std::string& landmarks) {
  const Image img = to_float(io::read_ppm(image));
  const LandmarkSet lms = io::read_landmarks(landmarks);
  auto r = register_face(img, lms, m.pipeline.reg);
  Prepared item{std::move(r.image), HeatmapStack(m.pipeline.specs.size(), m.pipeline.codec.heatmap_size),
                r.landmarks, AuLabels(m.pipeline.specs.size(), 0.0)};
  return model_predictor(m.model)({item});
}

void print_labels(const std::vector<int>& ids, const AuLabels& values) {
  for (std::size_t a = 0; a < ids.size(); ++a) std::printf("AU%d: %.4f\n", ids[a], values[a]);
}

std::vector<double> parse_reals(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(detail::parse_real(std::string(auhm::detail::trim(cell)), "list"));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AU intensity estimation by heatmap regression"};
  app.require_subcommand(1);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  std::size_t synth_n = 0;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  synth_cmd->add_option("--n", synth_n, "number of samples")->required();
  synth_cmd->add_option("--seed", synth_seed, "dataset seed")->required();
  synth_cmd->add_option("--out", synth_out, "output directory")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model");
  std::string train_data, train_val, train_config, train_out, train_history;
  std::optional<std::uint64_t> train_seed;
  train_cmd->add_option("--data", train_data, "training dataset directory")->required();
  train_cmd->add_option("--val", train_val, "validation dataset directory")->required();
  train_cmd->add_option("--config", train_config, "key=value run configuration");
  train_cmd->add_option("--out", train_out, "checkpoint path")->required();
  train_cmd->add_option("--seed", train_seed, "overrides the config seed");
  train_cmd->add_option("--history", train_history, "history CSV (default <out>.history.csv)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_model, eval_data, eval_report;
  eval_cmd->add_option("--model", eval_model)->required();
  eval_cmd->add_option("--data", eval_data)->required();
  eval_cmd->add_option("--report", eval_report, "ICC/MSE table CSV")->required();

  // infer
  auto* infer_cmd = app.add_subcommand("infer", "print AU intensities for one image");
  std::string infer_model, infer_image, infer_lms;
  infer_cmd->add_option("--model", infer_model)->required();
  infer_cmd->add_option("--image", infer_image)->required();
  infer_cmd->add_option("--landmarks", infer_lms)->required();

  // encode
  auto* encode_cmd = app.add_subcommand("encode", "encode labels into a heatmap stack");
  std::string encode_labels, encode_lms, encode_out;
  bool encode_registered = false;
  encode_cmd->add_option("--labels", encode_labels, "comma-separated intensities, AU6,10,12,14,17")->required();
  encode_cmd->add_option("--landmarks", encode_lms)->required();
  encode_cmd->add_option("--out", encode_out)->required();
  encode_cmd->add_flag("--registered", encode_registered, "landmarks are already in the 256 frame");

  // decode
  auto* decode_cmd = app.add_subcommand("decode", "print the intensities held in a heatmap stack");
  std::string decode_in;
  decode_cmd->add_option("--heatmaps", decode_in)->required();

  // robustness
  auto* rob_cmd = app.add_subcommand("robustness", "sweep landmark noise during evaluation");
  std::string rob_model, rob_data, rob_sigmas = "0,2,5,13,25,40", rob_report;
  std::uint64_t rob_seed = 0;
  rob_cmd->add_option("--model", rob_model)->required();
  rob_cmd->add_option("--data", rob_data)->required();
  rob_cmd->add_option("--sigmas", rob_sigmas, "comma-separated pixel sigmas");
  rob_cmd->add_option("--report", rob_report)->required();
  rob_cmd->add_option("--seed", rob_seed);

  // dump-heatmaps
  auto* dump_cmd = app.add_subcommand("dump-heatmaps", "write predicted heatmaps as PGM images");
  std::string dump_model, dump_image, dump_lms, dump_out;
  dump_cmd->add_option("--model", dump_model)->required();
  dump_cmd->add_option("--image", dump_image)->required();
  dump_cmd->add_option("--landmarks", dump_lms)->required();
  dump_cmd->add_option("--out", dump_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }

  try {
    if (*synth_cmd) {
      const auto m = generate_dataset(synth_n, synth_seed, synth_out);
      std::printf("wrote %zu samples to %s\n", m.n, synth_out.c_str());
    } else if (*train_cmd) {
      RunConfig rc = train_config.empty() ? run_config_from({}) : load_run_config(train_config);
      if (train_seed) rc.train.seed = *train_seed;
      const Dataset tr = load_dataset(train_data), va = load_dataset(train_val);
      Model<float> model(rc.model, rc.model_seed);
      rc.train.on_epoch = [](const EpochRecord& e) {
        std::fprintf(stderr, "epoch %zu loss %.5f val ICC %.4f MSE %.4f\n", e.epoch, e.loss, e.mean_icc,
                     e.mean_mse);
      };
      const auto result = train(tr, va, model, rc.train);
      io::save_checkpoint(train_out, result.best);
      io::write_file(train_history.empty() ? train_out + ".history.csv" : train_history, result.history.csv());
      std::printf("best epoch %zu, val mean ICC %.4f\n", result.best_epoch, result.best_icc);
    } else if (*eval_cmd) {
      auto m = load_model(eval_model);
      const auto rep = evaluate(m.model, load_dataset(eval_data), m.pipeline);
      io::write_file(eval_report, rep.table_csv());
      std::printf("%s", rep.table_csv().c_str());
    } else if (*infer_cmd) {
      auto m = load_model(infer_model);
      print_labels(m.ck.au_ids, decode(predict_one(m, infer_image, infer_lms).front()));
    } else if (*encode_cmd) {
      const auto specs = default_au_specs();
      const AuLabels labels = parse_reals(encode_labels);
      LandmarkSet lms = io::read_landmarks(encode_lms);
      if (!encode_registered) lms = transform_points(lms, registration_transform(lms, RegisterConfig{}));
      const auto stack = encode_all(labels, lms, specs, CodecConfig{});
      io::write_file(encode_out, io::encode_heatmaps(stack, au_ids(specs)));
    } else if (*decode_cmd) {
      const auto [stack, ids] = io::decode_heatmaps(io::read_file(decode_in), decode_in);
      print_labels(ids, decode(stack));
    } else if (*rob_cmd) {
      auto m = load_model(rob_model);
      EvalOptions opt;
      opt.seed = rob_seed;
      const auto pts = robustness_sweep(m.model, load_dataset(rob_data), m.pipeline, parse_reals(rob_sigmas), opt);
      io::write_file(rob_report, robustness_csv(pts));
      std::printf("%s", robustness_csv(pts).c_str());
    } else if (*dump_cmd) {
      auto m = load_model(dump_model);
      const auto stack = predict_one(m, dump_image, dump_lms).front();
      std::filesystem::create_directories(dump_out);
      for (std::size_t a = 0; a < stack.channels; ++a) {
        const auto path = std::filesystem::path(dump_out) / ("AU" + std::to_string(m.ck.au_ids[a]) + ".pgm");
        io::write_file(path, io::encode_pgm(io::heatmap_to_gray(stack, a)));
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
