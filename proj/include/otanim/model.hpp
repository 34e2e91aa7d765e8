#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "otanim/mesh.hpp"
#include "otanim/ot.hpp"
#include "otanim/resample.hpp"
#include "otanim/spectral.hpp"
#include "otanim/tape.hpp"

namespace otanim {

struct ModelConfig {
  std::size_t mesh_channels = 16;   // ChebConv width in encoder and refinement
  std::size_t latent_width = 64;    // template embedding z
  std::size_t audio_channels = 64;  // temporal conv width == audio code width
  std::size_t audio_feature_dim = 8;
  std::size_t conv_kernel = 5;
  std::size_t cheb_order = 6;
  std::size_t pca_components = 50;  // requested; the fitted basis may have fewer
  double normal_scale = 1.0;        // varifold normal coordinate scale
};

// Constant per-topology operators shared by every forward pass.
struct MeshPyramid {
  std::vector<std::size_t> sizes;        // level vertex counts, finest first
  std::vector<SparseMatrix> scaled;      // scaled Laplacians per level
  std::vector<SparseMatrix> down, down_t;  // pooling and its transpose, per step
  std::vector<SparseMatrix> up, up_t;      // unpooling, per step

  std::size_t pool_steps() const { return down.size(); }
};

MeshPyramid make_pyramid(const Hierarchy& hierarchy);

// Trainable arrays in a fixed named order, plus the frozen PCA motion model.
struct ModelParams {
  ModelConfig config;
  std::vector<std::size_t> level_sizes;
  std::uint64_t init_seed = 0;
  std::vector<std::pair<std::string, Tensor>> trainable;
  Tensor pca_basis;  // (k x 3N), orthonormal rows; not trained
  Tensor pca_mean;   // (3N); not trained

  std::size_t motion_components() const { return pca_basis.dim(0); }
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  // l2 norm of the concatenation of all trainable arrays
  double trainable_norm() const;
  void validate() const;
};

// Deterministic initialization; the PCA pair is adopted as-is (zero-mean
// identity-like fallbacks are fine for untrained use).
ModelParams init_params(const ModelConfig& config, const MeshPyramid& pyramid, Tensor pca_basis,
                        Tensor pca_mean, std::uint64_t seed);

// Leaf nodes for every trainable array on one tape.
struct TapeBinding {
  Tape* tape = nullptr;
  const ModelParams* params = nullptr;
  const MeshPyramid* pyramid = nullptr;
  std::vector<Var> leaves;  // parallel to params->trainable

  Var leaf(const std::string& name) const;
};

TapeBinding bind_params(Tape& tape, const ModelParams& params, const MeshPyramid& pyramid,
                        bool trainable = true);

// z from the template geometry: ChebConv + relu + pool per level, flatten, FC.
Var encode_mesh(const TapeBinding& b, const Tensor& template_positions);

// Temporal conv stack over the feature timeline, then linear interpolation of
// the code sequence to exactly target_len rows. Returns (target_len x A).
Var encode_audio(const TapeBinding& b, const Tensor& features, std::size_t target_len);

// Displacement for one frame: PCA-basis expansion of predicted coefficients
// plus the ChebConv refinement branch. z: (1 x latent), code: (1 x A).
Var decode_motion(const TapeBinding& b, Var z, Var code);

// Per-frame predicted absolute positions. z is computed once per sequence.
std::vector<Var> forward_sequence(const TapeBinding& b, const Tensor& template_positions,
                                  const Tensor& audio_features, std::size_t frame_count);

// Fixed per-frame targets with precomputed varifolds, built once per sample.
struct SequenceTargets {
  const std::vector<TriangleMesh::Face>* faces = nullptr;
  std::vector<Tensor> frames;  // (N x 3) each
  std::vector<DiscreteMeasure> varifolds;
  std::vector<VarifoldScaling> scalings;
};

SequenceTargets prepare_targets(const TriangleMesh& topology, const Tensor& target_frames,
                                double normal_scale);

struct LossWeights {
  double velocity = 10.0;
  double swd = 1.0;
  double regularization = 0.01;
};

// Per-frame pred-side varifold weights, frozen at a base point so finite
// difference probes hold the gradient-stopped path fixed.
using FrozenSwdWeights = std::vector<std::vector<double>>;

Var loss_reconstruction(const std::vector<Var>& pred, const SequenceTargets& target);
Var loss_velocity(const std::vector<Var>& pred, const SequenceTargets& target);
Var loss_swd(const std::vector<Var>& pred, const SequenceTargets& target, double normal_scale,
             const ProjectionSet& projections, double p = 2.0,
             const FrozenSwdWeights* frozen_weights = nullptr);

struct LossBreakdown {
  Var total, reconstruction, velocity, swd, regularization;
};

LossBreakdown loss_total(const TapeBinding& b, const std::vector<Var>& pred,
                         const SequenceTargets& target, const ProjectionSet& projections,
                         const LossWeights& weights = {}, double p = 2.0,
                         const FrozenSwdWeights* frozen_weights = nullptr);

void save_model(const ModelParams& params, const std::filesystem::path& dir);
ModelParams load_model(const std::filesystem::path& dir);

}  // namespace otanim
