#pragma once

#include <functional>
#include <span>

#include "otanim/model.hpp"
#include "otanim/train.hpp"

namespace otanim {

// Masked vertex-error metrics plus the dynamic-time-warping lip distance,
// in the length units of the input meshes.
struct MetricReport {
  double e_max_lip = 0.0;   // per-frame lip maximum, averaged over frames
  double e_mean_lip = 0.0;  // mean over frames and lip vertices
  double e_mean_face = 0.0;
  double e_mean_head = 0.0;
  double dtw_lip = 0.0;
  std::size_t frames = 0;
  std::size_t samples = 0;

  void check() const;
};

// pred/target: (T x N x 3). Fills everything except dtw_lip.
MetricReport masked_errors(const Tensor& pred, const Tensor& target, const VertexMask& lip,
                           const VertexMask& face, const VertexMask& head);

// Classic dynamic time warping over frames; pair cost is the summed Euclidean
// distance across lip vertices, and the returned value is the accumulated
// cost of the optimal monotone alignment (no path-length normalization).
double dtw_lip(const Tensor& pred, const Tensor& target, const VertexMask& lip);

// Returns the (T x N x 3) prediction for one sample.
using Predictor = std::function<Tensor(const SequenceSample&, const TriangleMesh&)>;

// Per-sample metrics averaged over the chosen samples.
MetricReport evaluate_with(const Predictor& predict, const Dataset& data,
                           std::span<const std::size_t> sample_indices, unsigned threads = 1);

MetricReport evaluate_model(const ModelParams& params, const MeshPyramid& pyramid,
                            const Dataset& data, std::span<const std::size_t> sample_indices,
                            unsigned threads = 1);

// Forward pass without gradient bookkeeping; stacks frames into (T x N x 3).
Tensor predict_sequence(const ModelParams& params, const MeshPyramid& pyramid,
                        const TriangleMesh& template_mesh, const Tensor& audio_features,
                        std::size_t frame_count);

}  // namespace otanim
