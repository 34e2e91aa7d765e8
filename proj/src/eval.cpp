#include "otanim/eval.hpp"

#include <cmath>
#include <stdexcept>

#include "otanim/parallel.hpp"

namespace otanim {

void MetricReport::check() const {
  for (const double v : {e_max_lip, e_mean_lip, e_mean_face, e_mean_head, dtw_lip}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::runtime_error("metric report: negative or non-finite value");
    }
  }
}

namespace {

void require_sequences(const Tensor& pred, const Tensor& target, bool same_length) {
  if (pred.rank() != 3 || target.rank() != 3 || pred.dim(2) != 3 || target.dim(2) != 3) {
    throw std::invalid_argument("metrics: sequences must be (T x N x 3)");
  }
  if (pred.dim(1) != target.dim(1)) {
    throw std::invalid_argument("metrics: vertex counts differ");
  }
  if (same_length && pred.dim(0) != target.dim(0)) {
    throw std::invalid_argument("metrics: frame counts differ");
  }
  if (pred.dim(0) == 0 || target.dim(0) == 0) {
    throw std::invalid_argument("metrics: empty sequence");
  }
}

double vertex_distance(const Tensor& a, std::size_t frame_a, const Tensor& b, std::size_t frame_b,
                       std::size_t v) {
  const std::size_t n = a.dim(1);
  const double* pa = a.data() + (frame_a * n + v) * 3;
  const double* pb = b.data() + (frame_b * n + v) * 3;
  const double dx = pa[0] - pb[0];
  const double dy = pa[1] - pb[1];
  const double dz = pa[2] - pb[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace

MetricReport masked_errors(const Tensor& pred, const Tensor& target, const VertexMask& lip,
                           const VertexMask& face, const VertexMask& head) {
  require_sequences(pred, target, true);
  const std::size_t frames = pred.dim(0);
  MetricReport r;
  r.frames = frames;
  r.samples = 1;
  for (std::size_t t = 0; t < frames; ++t) {
    double lip_max = 0.0, lip_sum = 0.0, face_sum = 0.0, head_sum = 0.0;
    for (const int v : lip.indices) {
      const double d = vertex_distance(pred, t, target, t, static_cast<std::size_t>(v));
      lip_max = std::max(lip_max, d);
      lip_sum += d;
    }
    for (const int v : face.indices) {
      face_sum += vertex_distance(pred, t, target, t, static_cast<std::size_t>(v));
    }
    for (const int v : head.indices) {
      head_sum += vertex_distance(pred, t, target, t, static_cast<std::size_t>(v));
    }
    r.e_max_lip += lip_max;
    r.e_mean_lip += lip_sum / static_cast<double>(lip.indices.size());
    r.e_mean_face += face_sum / static_cast<double>(face.indices.size());
    r.e_mean_head += head_sum / static_cast<double>(head.indices.size());
  }
  r.e_max_lip /= static_cast<double>(frames);
  r.e_mean_lip /= static_cast<double>(frames);
  r.e_mean_face /= static_cast<double>(frames);
  r.e_mean_head /= static_cast<double>(frames);
  r.check();
  return r;
}

double dtw_lip(const Tensor& pred, const Tensor& target, const VertexMask& lip) {
  require_sequences(pred, target, false);
  const std::size_t tp = pred.dim(0);
  const std::size_t tt = target.dim(0);
  const auto cost = [&](std::size_t i, std::size_t j) {
    double c = 0.0;
    for (const int v : lip.indices) {
      c += vertex_distance(pred, i, target, j, static_cast<std::size_t>(v));
    }
    return c;
  };
  std::vector<double> prev(tt), cur(tt);
  for (std::size_t j = 0; j < tt; ++j) prev[j] = cost(0, j) + (j ? prev[j - 1] : 0.0);
  for (std::size_t i = 1; i < tp; ++i) {
    cur[0] = prev[0] + cost(i, 0);
    for (std::size_t j = 1; j < tt; ++j) {
      cur[j] = cost(i, j) + std::min({prev[j], prev[j - 1], cur[j - 1]});
    }
    std::swap(prev, cur);
  }
  return prev[tt - 1];
}

Tensor predict_sequence(const ModelParams& params, const MeshPyramid& pyramid,
                        const TriangleMesh& template_mesh, const Tensor& audio_features,
                        std::size_t frame_count) {
  Tape tape;
  TapeBinding b = bind_params(tape, params, pyramid, false);
  Tensor tmpl({template_mesh.vertex_count(), 3});
  for (std::size_t i = 0; i < template_mesh.vertex_count(); ++i) {
    tmpl.at(i, 0) = template_mesh.vertex(i).x;
    tmpl.at(i, 1) = template_mesh.vertex(i).y;
    tmpl.at(i, 2) = template_mesh.vertex(i).z;
  }
  const std::vector<Var> frames = forward_sequence(b, tmpl, audio_features, frame_count);
  const std::size_t n = template_mesh.vertex_count();
  Tensor out({frame_count, n, 3});
  for (std::size_t t = 0; t < frame_count; ++t) {
    const Tensor& f = frames[t].value();
    for (std::size_t i = 0; i < n * 3; ++i) out[t * n * 3 + i] = f[i];
  }
  return out;
}

MetricReport evaluate_with(const Predictor& predict, const Dataset& data,
                           std::span<const std::size_t> sample_indices, unsigned threads) {
  if (sample_indices.empty()) throw std::invalid_argument("evaluate: no samples selected");
  std::vector<MetricReport> per_sample(sample_indices.size());
  parallel_for(sample_indices.size(), threads, [&](std::size_t i) {
    const SequenceSample& sample = data.samples[sample_indices[i]];
    const Tensor pred = predict(sample, data.template_mesh);
    MetricReport r =
        masked_errors(pred, sample.targets, data.lip_mask, data.face_mask, data.head_mask);
    r.dtw_lip = dtw_lip(pred, sample.targets, data.lip_mask);
    per_sample[i] = r;
  });
  MetricReport total;
  for (const MetricReport& r : per_sample) {
    total.e_max_lip += r.e_max_lip;
    total.e_mean_lip += r.e_mean_lip;
    total.e_mean_face += r.e_mean_face;
    total.e_mean_head += r.e_mean_head;
    total.dtw_lip += r.dtw_lip;
    total.frames += r.frames;
  }
  const double inv = 1.0 / static_cast<double>(per_sample.size());
  total.e_max_lip *= inv;
  total.e_mean_lip *= inv;
  total.e_mean_face *= inv;
  total.e_mean_head *= inv;
  total.dtw_lip *= inv;
  total.samples = per_sample.size();
  total.check();
  return total;
}

MetricReport evaluate_model(const ModelParams& params, const MeshPyramid& pyramid,
                            const Dataset& data, std::span<const std::size_t> sample_indices,
                            unsigned threads) {
  return evaluate_with(
      [&](const SequenceSample& sample, const TriangleMesh& tmpl) {
        return predict_sequence(params, pyramid, tmpl, sample.audio, sample.frame_count());
      },
      data, sample_indices, threads);
}

}  // namespace otanim
