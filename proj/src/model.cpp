#include "otanim/model.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "otanim/ottk.hpp"
#include "otanim/rng.hpp"

namespace otanim {

namespace {

std::size_t conv_layer_count(const MeshPyramid& pyramid) {
  return std::max<std::size_t>(1, pyramid.pool_steps());
}

ChebConvLayer encoder_layer(const ModelConfig& cfg, std::size_t i) {
  return ChebConvLayer(cfg.cheb_order, i == 0 ? 3 : cfg.mesh_channels, cfg.mesh_channels);
}

ChebConvLayer refine_layer(const ModelConfig& cfg, std::size_t i, std::size_t count) {
  return ChebConvLayer(cfg.cheb_order, cfg.mesh_channels,
                       i + 1 == count ? 3 : cfg.mesh_channels);
}

Tensor init_linear(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor w({fan_in, fan_out});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
  return w;
}

Tensor init_conv(std::size_t kernel, std::size_t cin, std::size_t cout, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(kernel * cin + cout));
  Tensor w({kernel, cin, cout});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
  return w;
}

}  // namespace

MeshPyramid make_pyramid(const Hierarchy& hierarchy) {
  MeshPyramid p;
  p.sizes = hierarchy.sizes();
  for (std::size_t k = 0; k < hierarchy.laplacians.size(); ++k) {
    p.scaled.push_back(scale_laplacian(hierarchy.laplacians[k], hierarchy.lambda_max[k]));
  }
  for (const auto& level : hierarchy.levels) {
    p.down.push_back(level.down);
    p.down_t.push_back(level.down.transposed());
    p.up.push_back(level.up);
    p.up_t.push_back(level.up.transposed());
  }
  return p;
}

const Tensor& ModelParams::get(const std::string& name) const {
  for (const auto& [n, t] : trainable) {
    if (n == name) return t;
  }
  throw std::invalid_argument("model: unknown parameter '" + name + "'");
}

Tensor& ModelParams::get(const std::string& name) {
  for (auto& [n, t] : trainable) {
    if (n == name) return t;
  }
  throw std::invalid_argument("model: unknown parameter '" + name + "'");
}

double ModelParams::trainable_norm() const {
  double sq = 0.0;
  for (const auto& [n, t] : trainable) {
    for (const double x : t.values()) sq += x * x;
  }
  return std::sqrt(sq);
}

void ModelParams::validate() const {
  for (const auto& [n, t] : trainable) t.check_finite("parameter " + n);
  pca_basis.check_finite("pca basis");
  pca_mean.check_finite("pca mean");
  if (pca_basis.rank() != 2 || pca_mean.rank() != 1 || pca_basis.dim(1) != pca_mean.dim(0)) {
    throw std::invalid_argument("model: PCA basis/mean shapes disagree");
  }
  const std::size_t k = pca_basis.dim(0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i; j < k; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < pca_basis.dim(1); ++c) {
        dot += pca_basis.at(i, c) * pca_basis.at(j, c);
      }
      const double want = i == j ? 1.0 : 0.0;
      if (std::fabs(dot - want) > 1e-6) {
        throw std::invalid_argument("model: PCA rows are not orthonormal");
      }
    }
  }
}

ModelParams init_params(const ModelConfig& config, const MeshPyramid& pyramid, Tensor pca_basis,
                        Tensor pca_mean, std::uint64_t seed) {
  ModelParams p;
  p.config = config;
  p.level_sizes = pyramid.sizes;
  p.init_seed = seed;
  p.pca_basis = std::move(pca_basis);
  p.pca_mean = std::move(pca_mean);
  if (p.pca_mean.dim(0) != pyramid.sizes.front() * 3) {
    throw std::invalid_argument("init_params: PCA dimension must be 3N");
  }

  Rng root = Rng(seed).child("model-init");
  const std::size_t convs = conv_layer_count(pyramid);
  const std::size_t coarsest = pyramid.sizes.back();
  const std::size_t cat = config.latent_width + config.audio_channels;

  for (std::size_t i = 0; i < convs; ++i) {
    const ChebConvLayer layer = encoder_layer(config, i);
    Rng rng = root.child("cheb" + std::to_string(i));
    p.trainable.emplace_back("cheb" + std::to_string(i) + ".theta", layer.init_theta(rng));
    p.trainable.emplace_back("cheb" + std::to_string(i) + ".bias", layer.init_bias());
  }
  {
    Rng rng = root.child("enc_fc");
    p.trainable.emplace_back(
        "enc_fc.weight", init_linear(coarsest * config.mesh_channels, config.latent_width, rng));
    p.trainable.emplace_back("enc_fc.bias", Tensor({config.latent_width}));
  }
  for (std::size_t i = 0; i < 3; ++i) {
    const std::size_t cin = i == 0 ? config.audio_feature_dim : config.audio_channels;
    Rng rng = root.child("audio_conv" + std::to_string(i));
    p.trainable.emplace_back("audio_conv" + std::to_string(i) + ".weight",
                             init_conv(config.conv_kernel, cin, config.audio_channels, rng));
    p.trainable.emplace_back("audio_conv" + std::to_string(i) + ".bias",
                             Tensor({config.audio_channels}));
  }
  // Coefficient head starts at zero: the untrained model emits the PCA mean.
  p.trainable.emplace_back("motion_coeff.weight", Tensor({cat, p.pca_basis.dim(0)}));
  p.trainable.emplace_back("motion_coeff.bias", Tensor({p.pca_basis.dim(0)}));
  {
    Rng rng = root.child("refine_fc");
    p.trainable.emplace_back("refine_fc.weight",
                             init_linear(cat, coarsest * config.mesh_channels, rng));
    p.trainable.emplace_back("refine_fc.bias", Tensor({coarsest * config.mesh_channels}));
  }
  for (std::size_t i = 0; i < convs; ++i) {
    const ChebConvLayer layer = refine_layer(config, i, convs);
    Rng rng = root.child("refine_cheb" + std::to_string(i));
    p.trainable.emplace_back("refine_cheb" + std::to_string(i) + ".theta", layer.init_theta(rng));
    p.trainable.emplace_back("refine_cheb" + std::to_string(i) + ".bias", layer.init_bias());
  }
  return p;
}

Var TapeBinding::leaf(const std::string& name) const {
  for (std::size_t i = 0; i < params->trainable.size(); ++i) {
    if (params->trainable[i].first == name) return leaves[i];
  }
  throw std::invalid_argument("model: unknown parameter '" + name + "'");
}

TapeBinding bind_params(Tape& tape, const ModelParams& params, const MeshPyramid& pyramid,
                        bool trainable) {
  if (params.level_sizes != pyramid.sizes) {
    throw std::invalid_argument("model: parameters were built for level sizes " +
                                shape_to_string(params.level_sizes) + ", pyramid has " +
                                shape_to_string(pyramid.sizes));
  }
  TapeBinding b;
  b.tape = &tape;
  b.params = &params;
  b.pyramid = &pyramid;
  b.leaves.reserve(params.trainable.size());
  for (const auto& [name, tensor] : params.trainable) {
    b.leaves.push_back(tape.leaf(tensor, trainable));
  }
  return b;
}

Var encode_mesh(const TapeBinding& b, const Tensor& template_positions) {
  const ModelConfig& cfg = b.params->config;
  const MeshPyramid& pyr = *b.pyramid;
  if (template_positions.rank() != 2 || template_positions.dim(1) != 3 ||
      template_positions.dim(0) != pyr.sizes.front()) {
    throw std::invalid_argument("encode_mesh: template is " +
                                shape_to_string(template_positions.shape()) + ", hierarchy base " +
                                std::to_string(pyr.sizes.front()));
  }
  const std::size_t convs = conv_layer_count(pyr);
  Var x = b.tape->constant(template_positions);
  for (std::size_t i = 0; i < convs; ++i) {
    const std::size_t level = i < pyr.scaled.size() ? i : 0;
    x = relu(cheb_conv(pyr.scaled[level], x, b.leaf("cheb" + std::to_string(i) + ".theta"),
                       b.leaf("cheb" + std::to_string(i) + ".bias"), encoder_layer(cfg, i)));
    if (i < pyr.pool_steps()) x = sparse_matmul(pyr.down[i], x, &pyr.down_t[i]);
  }
  Var flat = reshape(x, {1, pyr.sizes.back() * cfg.mesh_channels});
  return add_rowvec(matmul(flat, b.leaf("enc_fc.weight")), b.leaf("enc_fc.bias"));
}

Var encode_audio(const TapeBinding& b, const Tensor& features, std::size_t target_len) {
  const ModelConfig& cfg = b.params->config;
  if (features.rank() != 2 || features.dim(0) == 0 || features.dim(1) != cfg.audio_feature_dim) {
    throw std::invalid_argument("encode_audio: features are " +
                                shape_to_string(features.shape()) + ", expected (T x " +
                                std::to_string(cfg.audio_feature_dim) + ") with T >= 1");
  }
  if (target_len == 0) throw std::invalid_argument("encode_audio: target length must be >= 1");
  Var x = b.tape->constant(features);
  for (std::size_t i = 0; i < 3; ++i) {
    x = conv1d_same(x, b.leaf("audio_conv" + std::to_string(i) + ".weight"),
                    b.leaf("audio_conv" + std::to_string(i) + ".bias"));
    if (i + 1 < 3) x = relu(x);
  }
  return time_resample(x, target_len);
}

Var decode_motion(const TapeBinding& b, Var z, Var code) {
  const ModelConfig& cfg = b.params->config;
  const MeshPyramid& pyr = *b.pyramid;
  const std::size_t cat = cfg.latent_width + cfg.audio_channels;
  if (z.value().size() != cfg.latent_width || code.value().size() != cfg.audio_channels) {
    throw std::invalid_argument("decode_motion: latent/code width mismatch");
  }
  Var zc = reshape(concat0(reshape(z, {cfg.latent_width}), reshape(code, {cfg.audio_channels})),
                   {1, cat});

  Var coeffs = add_rowvec(matmul(zc, b.leaf("motion_coeff.weight")), b.leaf("motion_coeff.bias"));
  Var basis = b.tape->constant(b.params->pca_basis);
  Var mean = b.tape->constant(b.params->pca_mean);
  Var linear_part = reshape(add_rowvec(matmul(coeffs, basis), mean), {pyr.sizes.front(), 3});

  Var r = add_rowvec(matmul(zc, b.leaf("refine_fc.weight")), b.leaf("refine_fc.bias"));
  r = reshape(r, {pyr.sizes.back(), cfg.mesh_channels});
  const std::size_t convs = conv_layer_count(pyr);
  for (std::size_t i = 0; i < convs; ++i) {
    std::size_t level = 0;
    if (i < pyr.pool_steps()) {
      // up[step] interpolates level step+1 back to level step
      const std::size_t step = pyr.pool_steps() - 1 - i;
      r = sparse_matmul(pyr.up[step], r, &pyr.up_t[step]);
      level = step;
    }
    r = cheb_conv(pyr.scaled[level], r, b.leaf("refine_cheb" + std::to_string(i) + ".theta"),
                  b.leaf("refine_cheb" + std::to_string(i) + ".bias"),
                  refine_layer(cfg, i, convs));
    if (i + 1 < convs) r = relu(r);
  }
  return add(linear_part, r);
}

std::vector<Var> forward_sequence(const TapeBinding& b, const Tensor& template_positions,
                                  const Tensor& audio_features, std::size_t frame_count) {
  if (frame_count == 0) throw std::invalid_argument("forward_sequence: need at least one frame");
  Var z = encode_mesh(b, template_positions);
  Var codes = encode_audio(b, audio_features, frame_count);
  Var base = b.tape->constant(template_positions);
  std::vector<Var> frames;
  frames.reserve(frame_count);
  for (std::size_t t = 0; t < frame_count; ++t) {
    Var code = slice_rows(codes, t, t + 1);
    frames.push_back(add(base, decode_motion(b, z, code)));
  }
  return frames;
}

SequenceTargets prepare_targets(const TriangleMesh& topology, const Tensor& target_frames,
                                double normal_scale) {
  if (target_frames.rank() != 3 || target_frames.dim(1) != topology.vertex_count() ||
      target_frames.dim(2) != 3) {
    throw std::invalid_argument("prepare_targets: frames are " +
                                shape_to_string(target_frames.shape()) + ", topology has " +
                                std::to_string(topology.vertex_count()) + " vertices");
  }
  SequenceTargets out;
  out.faces = &topology.faces();
  const std::size_t frames = target_frames.dim(0);
  const std::size_t n = target_frames.dim(1);
  for (std::size_t t = 0; t < frames; ++t) {
    std::vector<double> data(target_frames.data() + t * n * 3, target_frames.data() + (t + 1) * n * 3);
    Tensor frame({n, 3}, std::move(data));
    std::vector<Vec3> verts(n);
    for (std::size_t i = 0; i < n; ++i) {
      verts[i] = {frame.at(i, 0), frame.at(i, 1), frame.at(i, 2)};
    }
    TriangleMesh mesh(std::move(verts), topology.faces());
    const VarifoldScaling scaling = varifold_scaling(mesh);
    out.varifolds.push_back(mesh_to_varifold(mesh, normal_scale, &scaling));
    out.scalings.push_back(scaling);
    out.frames.push_back(std::move(frame));
  }
  return out;
}

namespace {

void check_pred_target(const std::vector<Var>& pred, const SequenceTargets& target) {
  if (pred.empty() || pred.size() != target.frames.size()) {
    throw std::invalid_argument("loss: predicted and target frame counts differ");
  }
}

}  // namespace

Var loss_reconstruction(const std::vector<Var>& pred, const SequenceTargets& target) {
  check_pred_target(pred, target);
  Tape& tape = *pred.front().tape;
  Var total;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    Var diff = sub(pred[t], tape.constant(target.frames[t]));
    Var term = rows_norm_sum(diff);
    total = t == 0 ? term : add(total, term);
  }
  return total;
}

Var loss_velocity(const std::vector<Var>& pred, const SequenceTargets& target) {
  check_pred_target(pred, target);
  Tape& tape = *pred.front().tape;
  if (pred.size() == 1) return tape.constant(Tensor::scalar(0.0));
  Var total;
  for (std::size_t t = 0; t + 1 < pred.size(); ++t) {
    Tensor tvel = target.frames[t + 1];
    const Tensor& prev = target.frames[t];
    for (std::size_t i = 0; i < tvel.size(); ++i) tvel[i] -= prev[i];
    Var diff = sub(sub(pred[t + 1], pred[t]), tape.constant(std::move(tvel)));
    Var term = rows_norm_sum(diff);
    total = t == 0 ? term : add(total, term);
  }
  return total;
}

Var loss_swd(const std::vector<Var>& pred, const SequenceTargets& target, double normal_scale,
             const ProjectionSet& projections, double p, const FrozenSwdWeights* frozen_weights) {
  check_pred_target(pred, target);
  if (frozen_weights != nullptr && frozen_weights->size() != pred.size()) {
    throw std::invalid_argument("loss_swd: frozen weights must cover every frame");
  }
  Var total;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    Var term = swd_loss_op(pred[t], *target.faces, target.varifolds[t], target.scalings[t],
                           normal_scale, projections, p,
                           frozen_weights != nullptr ? &(*frozen_weights)[t] : nullptr);
    total = t == 0 ? term : add(total, term);
  }
  return total;
}

LossBreakdown loss_total(const TapeBinding& b, const std::vector<Var>& pred,
                         const SequenceTargets& target, const ProjectionSet& projections,
                         const LossWeights& weights, double p,
                         const FrozenSwdWeights* frozen_weights) {
  LossBreakdown out;
  out.reconstruction = loss_reconstruction(pred, target);
  out.velocity = loss_velocity(pred, target);
  out.swd =
      loss_swd(pred, target, b.params->config.normal_scale, projections, p, frozen_weights);

  Var sq;
  for (std::size_t i = 0; i < b.leaves.size(); ++i) {
    Var s = sum(square(b.leaves[i]));
    sq = i == 0 ? s : add(sq, s);
  }
  out.regularization = sqrt_elem(sq);

  out.total = add(out.reconstruction, scale(out.velocity, weights.velocity));
  if (weights.swd != 0.0) out.total = add(out.total, scale(out.swd, weights.swd));
  if (weights.regularization != 0.0) {
    out.total = add(out.total, scale(out.regularization, weights.regularization));
  }
  return out;
}

void save_model(const ModelParams& params, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "otanim-model";
  manifest["version"] = 1;
  manifest["init_seed"] = params.init_seed;
  manifest["level_sizes"] = params.level_sizes;
  manifest["config"] = {{"mesh_channels", params.config.mesh_channels},
                        {"latent_width", params.config.latent_width},
                        {"audio_channels", params.config.audio_channels},
                        {"audio_feature_dim", params.config.audio_feature_dim},
                        {"conv_kernel", params.config.conv_kernel},
                        {"cheb_order", params.config.cheb_order},
                        {"pca_components", params.config.pca_components},
                        {"normal_scale", params.config.normal_scale}};
  nlohmann::json names = nlohmann::json::array();
  for (const auto& [name, tensor] : params.trainable) {
    names.push_back({{"name", name}, {"shape", tensor.shape()}});
    write_ottk(dir / (name + ".ottk"), tensor);
  }
  manifest["trainable"] = names;
  write_ottk(dir / "pca_basis.ottk", params.pca_basis);
  write_ottk(dir / "pca_mean.ottk", params.pca_mean);
  std::ofstream f(dir / "model.json");
  if (!f) throw std::runtime_error("save_model: cannot write manifest in " + dir.string());
  f << manifest.dump(2) << '\n';
}

ModelParams load_model(const std::filesystem::path& dir) {
  std::ifstream f(dir / "model.json");
  if (!f) throw std::runtime_error("load_model: missing " + (dir / "model.json").string());
  nlohmann::json manifest = nlohmann::json::parse(f);
  if (manifest.value("format", "") != "otanim-model") {
    throw std::runtime_error("load_model: not a model directory: " + dir.string());
  }
  ModelParams p;
  p.init_seed = manifest["init_seed"].get<std::uint64_t>();
  p.level_sizes = manifest["level_sizes"].get<std::vector<std::size_t>>();
  const auto& cfg = manifest["config"];
  p.config.mesh_channels = cfg["mesh_channels"].get<std::size_t>();
  p.config.latent_width = cfg["latent_width"].get<std::size_t>();
  p.config.audio_channels = cfg["audio_channels"].get<std::size_t>();
  p.config.audio_feature_dim = cfg["audio_feature_dim"].get<std::size_t>();
  p.config.conv_kernel = cfg["conv_kernel"].get<std::size_t>();
  p.config.cheb_order = cfg["cheb_order"].get<std::size_t>();
  p.config.pca_components = cfg["pca_components"].get<std::size_t>();
  p.config.normal_scale = cfg["normal_scale"].get<double>();
  for (const auto& entry : manifest["trainable"]) {
    const std::string name = entry["name"].get<std::string>();
    Tensor t = read_ottk(dir / (name + ".ottk"));
    if (t.shape() != entry["shape"].get<std::vector<std::size_t>>()) {
      throw std::runtime_error("load_model: shape mismatch for " + name);
    }
    p.trainable.emplace_back(name, std::move(t));
  }
  p.pca_basis = read_ottk(dir / "pca_basis.ottk");
  p.pca_mean = read_ottk(dir / "pca_mean.ottk");
  p.validate();
  return p;
}

}  // namespace otanim
