#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "otanim/checks.hpp"
#include "otanim/eval.hpp"
#include "otanim/ottk.hpp"
#include "otanim/parallel.hpp"
#include "otanim/train.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

using otanim::Dataset;
using otanim::Hierarchy;
using otanim::MeshPyramid;
using otanim::ModelParams;
using otanim::Tensor;
using otanim::TriangleMesh;

namespace fs = std::filesystem;

std::string csv_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Every command drops one of these next to its outputs; re-running the stored
// argv against the same build reproduces the outputs bit for bit.
struct ManifestWriter {
  nlohmann::json j;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  ManifestWriter(const std::string& command, int argc, char** argv) {
    j["tool"] = "otanim";
    j["version"] = kVersion;
    j["command"] = command;
    nlohmann::json args = nlohmann::json::array();
    for (int i = 0; i < argc; ++i) args.push_back(argv[i]);
    j["argv"] = args;
  }

  void write(const fs::path& path) {
    j["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write manifest " + path.string());
    f << j.dump(2) << '\n';
  }
};

Tensor mesh_positions(const TriangleMesh& m) {
  Tensor t({m.vertex_count(), 3});
  for (std::size_t i = 0; i < m.vertex_count(); ++i) {
    t.at(i, 0) = m.vertex(i).x;
    t.at(i, 1) = m.vertex(i).y;
    t.at(i, 2) = m.vertex(i).z;
  }
  return t;
}

Hierarchy hierarchy_for_levels(const TriangleMesh& mesh, std::size_t levels, unsigned threads) {
  return otanim::build_hierarchy(mesh, levels, threads);
}

void write_history_csv(const std::vector<otanim::EpochStats>& history, const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "epoch,train_loss,val_loss,rec,vel,swd,reg\n";
  for (const auto& e : history) {
    f << e.epoch << ',' << csv_double(e.train_loss) << ',' << csv_double(e.val_loss) << ','
      << csv_double(e.reconstruction) << ',' << csv_double(e.velocity) << ','
      << csv_double(e.swd) << ',' << csv_double(e.regularization) << '\n';
  }
}

nlohmann::json config_json(const otanim::TrainConfig& cfg) {
  return {{"batch_size", cfg.batch_size},
          {"learning_rate", cfg.learning_rate},
          {"weight_decay", cfg.weight_decay},
          {"adam_beta1", cfg.adam_beta1},
          {"adam_beta2", cfg.adam_beta2},
          {"adam_eps", cfg.adam_eps},
          {"epochs", cfg.epochs},
          {"seed", cfg.seed},
          {"projection_count", cfg.projection_count},
          {"wasserstein_p", cfg.wasserstein_p},
          {"validation_fraction", cfg.validation_fraction},
          {"clip_norm", cfg.clip_norm},
          {"max_chunk_frames", cfg.max_chunk_frames},
          {"loss_weights",
           {{"velocity", cfg.loss_weights.velocity},
            {"swd", cfg.loss_weights.swd},
            {"regularization", cfg.loss_weights.regularization}}},
          {"model",
           {{"mesh_channels", cfg.model.mesh_channels},
            {"latent_width", cfg.model.latent_width},
            {"audio_channels", cfg.model.audio_channels},
            {"audio_feature_dim", cfg.model.audio_feature_dim},
            {"conv_kernel", cfg.model.conv_kernel},
            {"cheb_order", cfg.model.cheb_order},
            {"pca_components", cfg.model.pca_components},
            {"normal_scale", cfg.model.normal_scale}}}};
}

void apply_config_json(otanim::TrainConfig& cfg, const nlohmann::json& j) {
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
  cfg.adam_beta1 = j.value("adam_beta1", cfg.adam_beta1);
  cfg.adam_beta2 = j.value("adam_beta2", cfg.adam_beta2);
  cfg.adam_eps = j.value("adam_eps", cfg.adam_eps);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.projection_count = j.value("projection_count", cfg.projection_count);
  cfg.wasserstein_p = j.value("wasserstein_p", cfg.wasserstein_p);
  cfg.validation_fraction = j.value("validation_fraction", cfg.validation_fraction);
  cfg.clip_norm = j.value("clip_norm", cfg.clip_norm);
  cfg.max_chunk_frames = j.value("max_chunk_frames", cfg.max_chunk_frames);
  if (j.contains("loss_weights")) {
    const auto& w = j["loss_weights"];
    cfg.loss_weights.velocity = w.value("velocity", cfg.loss_weights.velocity);
    cfg.loss_weights.swd = w.value("swd", cfg.loss_weights.swd);
    cfg.loss_weights.regularization = w.value("regularization", cfg.loss_weights.regularization);
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    cfg.model.mesh_channels = m.value("mesh_channels", cfg.model.mesh_channels);
    cfg.model.latent_width = m.value("latent_width", cfg.model.latent_width);
    cfg.model.audio_channels = m.value("audio_channels", cfg.model.audio_channels);
    cfg.model.audio_feature_dim = m.value("audio_feature_dim", cfg.model.audio_feature_dim);
    cfg.model.conv_kernel = m.value("conv_kernel", cfg.model.conv_kernel);
    cfg.model.cheb_order = m.value("cheb_order", cfg.model.cheb_order);
    cfg.model.pca_components = m.value("pca_components", cfg.model.pca_components);
    cfg.model.normal_scale = m.value("normal_scale", cfg.model.normal_scale);
  }
}

nlohmann::json report_json(const otanim::MetricReport& r) {
  return {{"e_max_lip", r.e_max_lip},   {"e_mean_lip", r.e_mean_lip},
          {"e_mean_face", r.e_mean_face}, {"e_mean_head", r.e_mean_head},
          {"dtw_lip", r.dtw_lip},       {"frames", r.frames},
          {"samples", r.samples}};
}

int cmd_synth_data(int argc, char** argv, std::uint64_t seed, std::size_t sequences,
                   std::size_t frames, double fps, const std::string& out) {
  ManifestWriter manifest("synth-data", argc, argv);
  const Dataset data = otanim::synth_dataset(seed, sequences, frames, fps);
  otanim::save_dataset(data, out);
  manifest.j["seed"] = seed;
  manifest.j["output"] = out;
  manifest.j["samples"] = data.samples.size();
  manifest.write(fs::path(out) / "run_manifest.json");
  std::cout << nlohmann::json{{"output", out},
                              {"samples", data.samples.size()},
                              {"frames_per_sequence", frames},
                              {"vertices", data.template_mesh.vertex_count()}}
                   .dump(2)
            << '\n';
  return 0;
}

int cmd_build_hierarchy(int argc, char** argv, const std::string& mesh_path, std::size_t levels,
                        unsigned threads, const std::string& out) {
  ManifestWriter manifest("build-hierarchy", argc, argv);
  const TriangleMesh mesh = otanim::load_obj(mesh_path);
  const Hierarchy h = hierarchy_for_levels(mesh, levels, threads);
  fs::create_directories(out);

  nlohmann::json sidecar;
  sidecar["format"] = "otanim-hierarchy";
  sidecar["input"] = mesh_path;
  nlohmann::json level_list = nlohmann::json::array();
  level_list.push_back({{"vertices", h.base.vertex_count()},
                        {"lambda_max", h.lambda_max[0]}});
  for (std::size_t k = 0; k < h.levels.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "level%zu", k + 1);
    const std::string mesh_file = std::string(name) + ".obj";
    otanim::save_obj(h.levels[k].mesh, fs::path(out) / mesh_file);
    otanim::write_ottk_sparse(fs::path(out) / (std::string(name) + ".qd"), h.levels[k].down);
    otanim::write_ottk_sparse(fs::path(out) / (std::string(name) + ".qu"), h.levels[k].up);
    level_list.push_back({{"vertices", h.levels[k].mesh.vertex_count()},
                          {"lambda_max", h.lambda_max[k + 1]},
                          {"mesh", mesh_file},
                          {"qd", std::string(name) + ".qd"},
                          {"qu", std::string(name) + ".qu"}});
  }
  sidecar["levels"] = level_list;
  std::ofstream f(fs::path(out) / "hierarchy.json");
  f << sidecar.dump(2) << '\n';

  manifest.j["output"] = out;
  manifest.j["sizes"] = h.sizes();
  manifest.write(fs::path(out) / "run_manifest.json");
  std::cout << nlohmann::json{{"sizes", h.sizes()}}.dump(2) << '\n';
  return 0;
}

int cmd_swd(int argc, char** argv, const std::string& mesh_a, const std::string& mesh_b,
            std::size_t projections, double p, double gamma, std::uint64_t seed,
            const std::string& out) {
  ManifestWriter manifest("swd", argc, argv);
  const TriangleMesh a = otanim::load_obj(mesh_a);
  const TriangleMesh b = otanim::load_obj(mesh_b);
  // shared frame from the reference mesh keeps the comparison scale-free
  const otanim::VarifoldScaling scaling = otanim::varifold_scaling(b);
  const otanim::DiscreteMeasure mu = otanim::mesh_to_varifold(a, gamma, &scaling);
  const otanim::DiscreteMeasure nu = otanim::mesh_to_varifold(b, gamma, &scaling);
  const otanim::ProjectionSet proj = otanim::sample_projections(6, projections, seed);
  const otanim::SwdEstimate est = otanim::sliced_wasserstein(mu, nu, p, proj);

  const nlohmann::json result{{"value", est.value},
                              {"std_error", est.std_error},
                              {"projections", projections},
                              {"p", p},
                              {"gamma", gamma},
                              {"seed", seed}};
  std::cout << result.dump(2) << '\n';
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot write " + out);
    f << result.dump(2) << '\n';
    manifest.j["output"] = out;
    manifest.write(fs::path(out).string() + ".manifest.json");
  }
  return 0;
}

int cmd_train(int argc, char** argv, const std::string& config_path, const std::string& data_spec,
              const std::string& out, unsigned threads, long epochs_override, long seed_override) {
  ManifestWriter manifest("train", argc, argv);
  otanim::TrainConfig cfg;
  if (!config_path.empty()) {
    std::ifstream f(config_path);
    if (!f) throw std::runtime_error("cannot read config " + config_path);
    apply_config_json(cfg, nlohmann::json::parse(f));
  }
  if (epochs_override >= 0) cfg.epochs = static_cast<std::size_t>(epochs_override);
  if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);

  const Dataset data = otanim::dataset_from_spec(data_spec);
  cfg.model.audio_feature_dim = data.feature_dim;
  const Hierarchy h = hierarchy_for_levels(data.template_mesh, 3, threads);
  const otanim::TrainResult result = otanim::train(cfg, data, h, threads);

  fs::create_directories(out);
  otanim::save_model(result.best_params, fs::path(out) / "model");
  write_history_csv(result.history, fs::path(out) / "history.csv");
  {
    std::ofstream f(fs::path(out) / "config.json");
    nlohmann::json echo = config_json(cfg);
    echo["data"] = data_spec;
    f << echo.dump(2) << '\n';
  }
  manifest.j["output"] = out;
  manifest.j["data"] = data_spec;
  manifest.j["seed"] = cfg.seed;
  manifest.j["best_epoch"] = result.best_epoch;
  manifest.write(fs::path(out) / "run_manifest.json");

  std::cout << nlohmann::json{{"output", out},
                              {"epochs", cfg.epochs},
                              {"best_epoch", result.best_epoch},
                              {"initial_train_loss", result.history.front().train_loss},
                              {"final_train_loss", result.history.back().train_loss},
                              {"best_val_loss", result.history[result.best_epoch].val_loss}}
                   .dump(2)
            << '\n';
  return 0;
}

int cmd_infer(int argc, char** argv, const std::string& model_dir, const std::string& template_path,
              const std::string& features_path, long frames_flag, unsigned threads,
              const std::string& out) {
  ManifestWriter manifest("infer", argc, argv);
  const ModelParams params = otanim::load_model(fs::path(model_dir) / "model");
  const TriangleMesh tmpl = otanim::load_obj(template_path);
  if (tmpl.vertex_count() != params.level_sizes.front()) {
    throw std::runtime_error("template has " + std::to_string(tmpl.vertex_count()) +
                             " vertices but the model was trained for " +
                             std::to_string(params.level_sizes.front()));
  }
  const Hierarchy h = hierarchy_for_levels(tmpl, params.level_sizes.size() - 1, threads);
  const MeshPyramid pyramid = otanim::make_pyramid(h);
  if (pyramid.sizes != params.level_sizes) {
    throw std::runtime_error("hierarchy sizes diverge from the model archive");
  }
  const Tensor features = otanim::read_ottk(features_path);
  const std::size_t frames =
      frames_flag > 0 ? static_cast<std::size_t>(frames_flag) : features.dim(0);
  const Tensor pred = otanim::predict_sequence(params, pyramid, tmpl, features, frames);

  fs::create_directories(out);
  const std::size_t n = tmpl.vertex_count();
  for (std::size_t t = 0; t < frames; ++t) {
    std::vector<otanim::Vec3> verts(n);
    for (std::size_t i = 0; i < n; ++i) {
      verts[i] = {pred[(t * n + i) * 3], pred[(t * n + i) * 3 + 1], pred[(t * n + i) * 3 + 2]};
    }
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04zu.obj", t);
    otanim::save_obj(TriangleMesh(std::move(verts), tmpl.faces()), fs::path(out) / name);
  }
  manifest.j["output"] = out;
  manifest.j["frames"] = frames;
  manifest.write(fs::path(out) / "run_manifest.json");
  std::cout << nlohmann::json{{"output", out}, {"frames", frames}}.dump(2) << '\n';
  return 0;
}

int cmd_eval(int argc, char** argv, const std::string& model_dir, const std::string& data_spec,
             const std::string& masks_arg, const std::string& split, unsigned threads,
             const std::string& out) {
  ManifestWriter manifest("eval", argc, argv);
  const ModelParams params = otanim::load_model(fs::path(model_dir) / "model");
  Dataset data = otanim::dataset_from_spec(data_spec);
  if (!masks_arg.empty()) {
    std::stringstream ss(masks_arg);
    std::string lip, face, head;
    if (!std::getline(ss, lip, ',') || !std::getline(ss, face, ',') ||
        !std::getline(ss, head, ',')) {
      throw std::runtime_error("--masks expects lip.txt,face.txt,head.txt");
    }
    const std::size_t n = data.template_mesh.vertex_count();
    data.lip_mask = otanim::load_mask(lip, n);
    data.face_mask = otanim::load_mask(face, n);
    data.head_mask = otanim::load_mask(head, n);
  }

  std::vector<std::size_t> indices;
  if (split == "all") {
    for (std::size_t i = 0; i < data.samples.size(); ++i) indices.push_back(i);
  } else {
    std::ifstream f(fs::path(model_dir) / "config.json");
    if (!f) {
      throw std::runtime_error("--split " + split + " needs config.json in " + model_dir);
    }
    const nlohmann::json cfg = nlohmann::json::parse(f);
    const otanim::TrainSplit s =
        otanim::split_dataset(data.samples.size(), cfg["validation_fraction"].get<double>(),
                              cfg["seed"].get<std::uint64_t>());
    indices = split == "val" ? s.validation : s.train;
  }

  const Hierarchy h =
      hierarchy_for_levels(data.template_mesh, params.level_sizes.size() - 1, threads);
  const MeshPyramid pyramid = otanim::make_pyramid(h);
  const otanim::MetricReport report =
      otanim::evaluate_model(params, pyramid, data, indices, threads);

  nlohmann::json j = report_json(report);
  j["split"] = split;
  std::cout << j.dump(2) << '\n';
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot write " + out);
    f << j.dump(2) << '\n';
    manifest.j["output"] = out;
    manifest.write(fs::path(out).string() + ".manifest.json");
  }
  return 0;
}

int cmd_selftest() {
  const std::vector<otanim::CheckResult> results = otanim::run_fast_checks();
  bool all = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.detail << '\n';
    all = all && r.pass;
  }
  std::cout << (all ? "selftest: all checks passed\n" : "selftest: FAILURES\n");
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-driven mesh animation with spectral convolutions and sliced Wasserstein training"};
  app.set_version_flag("--app-version", kVersion);
  app.require_subcommand(1);
  const unsigned hw_threads = otanim::default_thread_count();

  // synth-data
  std::uint64_t sd_seed = 1;
  std::size_t sd_sequences = 8, sd_frames = 16;
  double sd_fps = 30.0;
  std::string sd_out = "dataset";
  auto* synth = app.add_subcommand("synth-data", "Generate the procedural dataset");
  synth->add_option("--seed", sd_seed, "Master seed");
  synth->add_option("--sequences", sd_sequences, "Number of sequences");
  synth->add_option("--frames", sd_frames, "Frames per sequence");
  synth->add_option("--fps", sd_fps, "Frame rate metadata");
  synth->add_option("--out", sd_out, "Output directory");

  // build-hierarchy
  std::string bh_mesh, bh_out = "hierarchy";
  std::size_t bh_levels = 3;
  unsigned bh_threads = hw_threads;
  auto* bh = app.add_subcommand("build-hierarchy", "Decimate a mesh into a multi-scale pyramid");
  bh->add_option("--mesh", bh_mesh, "Input OBJ")->required();
  bh->add_option("--levels", bh_levels, "Pooling levels");
  bh->add_option("--threads", bh_threads, "Worker threads");
  bh->add_option("--out", bh_out, "Output directory");

  // swd
  std::string swd_a, swd_b, swd_out;
  std::size_t swd_proj = 100;
  double swd_p = 2.0, swd_gamma = 1.0;
  std::uint64_t swd_seed = 7;
  auto* swd = app.add_subcommand("swd", "Sliced Wasserstein distance between two meshes");
  swd->add_option("--mesh-a", swd_a, "First OBJ")->required();
  swd->add_option("--mesh-b", swd_b, "Second OBJ (reference frame)")->required();
  swd->add_option("--proj", swd_proj, "Projection count");
  swd->add_option("--p", swd_p, "Wasserstein exponent");
  swd->add_option("--gamma", swd_gamma, "Normal coordinate scale");
  swd->add_option("--seed", swd_seed, "Projection seed");
  swd->add_option("--out", swd_out, "Optional JSON report path");

  // train
  std::string tr_config, tr_data = "synth:seed=1,n=8,frames=16", tr_out = "run";
  unsigned tr_threads = hw_threads;
  long tr_epochs = -1, tr_seed = -1;
  auto* tr = app.add_subcommand("train", "Train the animation model");
  tr->add_option("--config", tr_config, "JSON config file");
  tr->add_option("--data", tr_data, "Dataset directory or synth:... recipe");
  tr->add_option("--out", tr_out, "Run directory");
  tr->add_option("--threads", tr_threads, "Worker threads");
  tr->add_option("--epochs", tr_epochs, "Override epoch count");
  tr->add_option("--seed", tr_seed, "Override run seed");

  // infer
  std::string in_model, in_template, in_features, in_out = "frames";
  long in_frames = -1;
  unsigned in_threads = hw_threads;
  auto* infer = app.add_subcommand("infer", "Predict a mesh sequence from features");
  infer->add_option("--model", in_model, "Run directory from train")->required();
  infer->add_option("--template", in_template, "Template OBJ")->required();
  infer->add_option("--features", in_features, "Feature tensor (.ottk)")->required();
  infer->add_option("--frames", in_frames, "Output frame count (default: feature rows)");
  infer->add_option("--threads", in_threads, "Worker threads");
  infer->add_option("--out", in_out, "Output directory");

  // eval
  std::string ev_model, ev_data, ev_masks, ev_split = "all", ev_out;
  unsigned ev_threads = hw_threads;
  auto* ev = app.add_subcommand("eval", "Evaluate a model with the masked error metrics");
  ev->add_option("--model", ev_model, "Run directory from train")->required();
  ev->add_option("--data", ev_data, "Dataset directory or synth:... recipe")->required();
  ev->add_option("--masks", ev_masks, "lip.txt,face.txt,head.txt (default: dataset masks)");
  ev->add_option("--split", ev_split, "all | train | val")
      ->check(CLI::IsMember({"all", "train", "val"}));
  ev->add_option("--threads", ev_threads, "Worker threads");
  ev->add_option("--out", ev_out, "Optional JSON report path");

  auto* st = app.add_subcommand("selftest", "Run the oracle verification suites");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      return cmd_synth_data(argc, argv, sd_seed, sd_sequences, sd_frames, sd_fps, sd_out);
    }
    if (bh->parsed()) {
      return cmd_build_hierarchy(argc, argv, bh_mesh, bh_levels, bh_threads, bh_out);
    }
    if (swd->parsed()) {
      return cmd_swd(argc, argv, swd_a, swd_b, swd_proj, swd_p, swd_gamma, swd_seed, swd_out);
    }
    if (tr->parsed()) {
      return cmd_train(argc, argv, tr_config, tr_data, tr_out, tr_threads, tr_epochs, tr_seed);
    }
    if (infer->parsed()) {
      return cmd_infer(argc, argv, in_model, in_template, in_features, in_frames, in_threads,
                       in_out);
    }
    if (ev->parsed()) {
      return cmd_eval(argc, argv, ev_model, ev_data, ev_masks, ev_split, ev_threads, ev_out);
    }
    if (st->parsed()) {
      return cmd_selftest();
    }
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error",
                                 {{"command", app.get_subcommands().empty()
                                                  ? "unknown"
                                                  : app.get_subcommands().front()->get_name()},
                                  {"message", e.what()}}}}
                     .dump()
              << '\n';
    return 1;
  }
  return 0;
}
