#pragma once

#include <cstdint>
#include <vector>

#include "otanim/model.hpp"

namespace otanim {

struct TrainConfig {
  std::size_t batch_size = 32;
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  std::size_t projection_count = 100;
  double wasserstein_p = 2.0;
  double validation_fraction = 0.25;
  double clip_norm = 10.0;          // global gradient norm bound
  std::size_t max_chunk_frames = 16;  // sequences split into chunks this long
  LossWeights loss_weights{};
  ModelConfig model{};

  void validate() const;
};

// Optimizer state, lazily sized to the parameter list on the first step.
struct AdamWState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

// Decoupled weight decay, then the bias-corrected Adam update. step_index is
// 1-based. Non-finite gradients raise instead of being clamped.
void adamw_step(std::vector<std::pair<std::string, Tensor>>& params,
                const std::vector<Tensor>& grads, AdamWState& state, const TrainConfig& config,
                std::size_t step_index);

struct PCABasis {
  Tensor mean;                             // (D)
  Tensor components;                       // (k x D), orthonormal rows
  std::vector<double> explained_variance;  // non-increasing
  bool truncated_to_rank = false;          // requested k exceeded the data rank
};

// Top-k principal directions of (S x D) rows by orthogonal subspace iteration
// (20 sweeps, Gram trick when S < D). Components follow the sign convention
// that each row's largest-magnitude entry is positive.
PCABasis pca_fit(const Tensor& data, std::size_t k, std::uint64_t seed);

struct SequenceSample {
  Tensor audio;    // (T_a x F)
  Tensor targets;  // (T x N x 3)
  double fps = 30.0;

  std::size_t frame_count() const { return targets.dim(0); }
};

struct Dataset {
  TriangleMesh template_mesh;
  VertexMask lip_mask, face_mask, head_mask;
  std::vector<SequenceSample> samples;
  double fps = 30.0;
  std::size_t feature_dim = 8;
};

// Procedural audio-to-motion data: an icosphere whose low-z cap opens and
// closes following a random smooth envelope; feature channel 0 carries that
// envelope (plus small noise), so the mapping is learnable by construction.
Dataset synth_dataset(std::uint64_t seed, std::size_t n_sequences, std::size_t frames_per_seq,
                      double fps = 30.0);

// On-disk layout: template.obj, mask_{lip,face,head}.txt, one directory per
// sequence with features/targets as tensor files, and a dataset.json manifest.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// Either a directory path or an inline recipe "synth:seed=1,n=8,frames=16[,fps=30]".
Dataset dataset_from_spec(const std::string& spec);

struct TrainSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

TrainSplit split_dataset(std::size_t n_samples, double validation_fraction, std::uint64_t seed);

struct EpochStats {
  std::size_t epoch = 0;  // 0 is the pre-training evaluation
  double train_loss = 0.0;
  double val_loss = 0.0;
  double reconstruction = 0.0;
  double velocity = 0.0;
  double swd = 0.0;
  double regularization = 0.0;
};

struct TrainResult {
  ModelParams best_params;  // weights with the lowest validation loss
  std::size_t best_epoch = 0;
  std::vector<EpochStats> history;
  TrainSplit split;
};

TrainResult train(const TrainConfig& config, const Dataset& data, const Hierarchy& hierarchy,
                  unsigned threads = 1);

}  // namespace otanim
