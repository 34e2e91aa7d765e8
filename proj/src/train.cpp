#include "otanim/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "otanim/linalg.hpp"
#include "otanim/ottk.hpp"
#include "otanim/parallel.hpp"
#include "otanim/rng.hpp"

namespace otanim {

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("train: bad learning rate");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("train: bad weight decay");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
    throw std::invalid_argument("train: Adam betas must lie in (0, 1)");
  }
  if (!(adam_eps > 0.0)) throw std::invalid_argument("train: Adam eps must be > 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("train: validation fraction must be in [0, 1)");
  }
  if (projection_count < 1) throw std::invalid_argument("train: need >= 1 projection");
  if (max_chunk_frames < 1) throw std::invalid_argument("train: chunk length must be >= 1");
}

void adamw_step(std::vector<std::pair<std::string, Tensor>>& params,
                const std::vector<Tensor>& grads, AdamWState& state, const TrainConfig& config,
                std::size_t step_index) {
  if (grads.size() != params.size()) {
    throw std::invalid_argument("adamw: gradient list does not match parameter list");
  }
  if (step_index < 1) throw std::invalid_argument("adamw: step_index is 1-based");
  if (state.first_moment.empty()) {
    for (const auto& [name, p] : params) {
      state.first_moment.emplace_back(p.shape());
      state.second_moment.emplace_back(p.shape());
    }
  }
  const double bc1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(step_index));
  const double bc2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(step_index));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k].second;
    const Tensor& g = grads[k];
    if (!p.same_shape(g)) {
      throw std::invalid_argument("adamw: shape mismatch for " + params[k].first);
    }
    g.check_finite("gradient of " + params[k].first);
    Tensor& m = state.first_moment[k];
    Tensor& v = state.second_moment[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] -= config.learning_rate * config.weight_decay * p[i];
      m[i] = config.adam_beta1 * m[i] + (1.0 - config.adam_beta1) * g[i];
      v[i] = config.adam_beta2 * v[i] + (1.0 - config.adam_beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_eps);
    }
  }
}

namespace {

// Columns of `y` (n x k) spanning the dominant eigenspace of `sym` after
// `sweeps` multiply-then-orthonormalize rounds.
void subspace_iterate(const Tensor& sym, Tensor& y, std::size_t sweeps) {
  const std::size_t n = sym.dim(0);
  const std::size_t k = y.dim(1);
  Tensor next({n, k});
  for (std::size_t sweep = 0; sweep < sweeps; ++sweep) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        double acc = 0.0;
        for (std::size_t l = 0; l < n; ++l) acc += sym.at(i, l) * y.at(l, j);
        next.at(i, j) = acc;
      }
    }
    y = next;
    orthonormalize_columns(y);
  }
}

void apply_sign_convention(Tensor& components) {
  for (std::size_t r = 0; r < components.dim(0); ++r) {
    double best = 0.0;
    for (std::size_t c = 0; c < components.dim(1); ++c) {
      if (std::fabs(components.at(r, c)) > std::fabs(best)) best = components.at(r, c);
    }
    if (best < 0.0) {
      for (std::size_t c = 0; c < components.dim(1); ++c) components.at(r, c) = -components.at(r, c);
    }
  }
}

}  // namespace

PCABasis pca_fit(const Tensor& data, std::size_t k, std::uint64_t seed) {
  if (data.rank() != 2) throw std::invalid_argument("pca_fit: data must be (S x D)");
  const std::size_t s = data.dim(0);
  const std::size_t d = data.dim(1);
  if (s < 2) throw std::invalid_argument("pca_fit: need at least 2 samples");
  if (k < 1) throw std::invalid_argument("pca_fit: need k >= 1");

  PCABasis out;
  out.mean = Tensor({d});
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t c = 0; c < d; ++c) out.mean[c] += data.at(i, c);
  }
  for (std::size_t c = 0; c < d; ++c) out.mean[c] /= static_cast<double>(s);
  Tensor centered({s, d});
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t c = 0; c < d; ++c) centered.at(i, c) = data.at(i, c) - out.mean[c];
  }

  const bool gram = s < d;
  const std::size_t space = gram ? s : d;
  const std::size_t k_run = std::min(k, space);
  Tensor sym({space, space});
  if (gram) {
    // B = X X^T shares its nonzero spectrum with the covariance
    for (std::size_t i = 0; i < s; ++i) {
      for (std::size_t j = i; j < s; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) acc += centered.at(i, c) * centered.at(j, c);
        sym.at(i, j) = acc;
        sym.at(j, i) = acc;
      }
    }
  } else {
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = a; b < d; ++b) {
        double acc = 0.0;
        for (std::size_t i = 0; i < s; ++i) acc += centered.at(i, a) * centered.at(i, b);
        sym.at(a, b) = acc;
        sym.at(b, a) = acc;
      }
    }
  }

  Rng rng = Rng(seed).child("pca");
  Tensor y({space, k_run});
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = rng.normal();
  orthonormalize_columns(y);
  subspace_iterate(sym, y, 20);

  // Rayleigh-Ritz on the converged block gives sorted eigenpairs.
  Tensor small({k_run, k_run});
  {
    Tensor sy({space, k_run});
    for (std::size_t i = 0; i < space; ++i) {
      for (std::size_t j = 0; j < k_run; ++j) {
        double acc = 0.0;
        for (std::size_t l = 0; l < space; ++l) acc += sym.at(i, l) * y.at(l, j);
        sy.at(i, j) = acc;
      }
    }
    for (std::size_t a = 0; a < k_run; ++a) {
      for (std::size_t b = a; b < k_run; ++b) {
        double acc = 0.0;
        for (std::size_t i = 0; i < space; ++i) acc += y.at(i, a) * sy.at(i, b);
        small.at(a, b) = acc;
        small.at(b, a) = acc;
      }
    }
  }
  const EighResult eig = jacobi_eigh(small);

  // descending eigenvalue order; drop directions below the rank threshold
  std::vector<std::size_t> order(k_run);
  std::iota(order.begin(), order.end(), 0);
  std::reverse(order.begin(), order.end());
  const double lambda_top = k_run ? std::max(0.0, eig.eigenvalues.back()) : 0.0;
  const double cutoff = std::max(lambda_top * 1e-10, 1e-12);

  std::vector<std::vector<double>> rows;
  for (const std::size_t e : order) {
    const double lambda = eig.eigenvalues[e];
    if (lambda <= cutoff) break;
    std::vector<double> dir(space);
    for (std::size_t i = 0; i < space; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < k_run; ++j) acc += y.at(i, j) * eig.eigenvectors.at(j, e);
      dir[i] = acc;
    }
    std::vector<double> row(d);
    if (gram) {
      // lift: u = X^T y / |X^T y|, with |X^T y| = sqrt(lambda)
      const double inv = 1.0 / std::sqrt(lambda);
      for (std::size_t c = 0; c < d; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < s; ++i) acc += centered.at(i, c) * dir[i];
        row[c] = acc * inv;
      }
    } else {
      row = dir;
    }
    rows.push_back(std::move(row));
    out.explained_variance.push_back(lambda / static_cast<double>(s - 1));
  }
  if (rows.empty()) throw std::invalid_argument("pca_fit: data has zero variance");
  out.truncated_to_rank = rows.size() < k;

  out.components = Tensor({rows.size(), d});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < d; ++c) out.components.at(r, c) = rows[r][c];
  }
  apply_sign_convention(out.components);
  return out;
}

namespace {

Tensor flatten_positions(const std::vector<Vec3>& v) {
  Tensor t({v.size(), 3});
  for (std::size_t i = 0; i < v.size(); ++i) {
    t.at(i, 0) = v[i].x;
    t.at(i, 1) = v[i].y;
    t.at(i, 2) = v[i].z;
  }
  return t;
}

}  // namespace

Dataset synth_dataset(std::uint64_t seed, std::size_t n_sequences, std::size_t frames_per_seq,
                      double fps) {
  if (n_sequences < 1) throw std::invalid_argument("synth_dataset: need >= 1 sequence");
  if (frames_per_seq < 2) throw std::invalid_argument("synth_dataset: need >= 2 frames");

  Dataset data;
  data.fps = fps;
  data.feature_dim = 8;
  data.template_mesh = make_icosphere(3);
  const std::size_t n = data.template_mesh.vertex_count();

  // masks by height: the low cap is the articulated "lip" region
  std::vector<std::size_t> by_z(n);
  std::iota(by_z.begin(), by_z.end(), 0);
  std::stable_sort(by_z.begin(), by_z.end(), [&](std::size_t a, std::size_t b) {
    return data.template_mesh.vertex(a).z < data.template_mesh.vertex(b).z;
  });
  const auto take = [&](double fraction) {
    std::vector<int> idx;
    const std::size_t count = static_cast<std::size_t>(fraction * static_cast<double>(n));
    for (std::size_t i = 0; i < count; ++i) idx.push_back(static_cast<int>(by_z[i]));
    return idx;
  };
  data.lip_mask = make_mask("lip", take(0.10), n);
  data.face_mask = make_mask("face", take(0.40), n);
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  data.head_mask = make_mask("head", std::move(all), n);

  // jaw-open field: smooth bump over the lip cap, pulling down and slightly out
  const double z_min = data.template_mesh.vertex(by_z.front()).z;
  const double z_thr = data.template_mesh.vertex(by_z[data.lip_mask.indices.size() - 1]).z;
  std::vector<Vec3> bump(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& v = data.template_mesh.vertex(i);
    if (v.z >= z_thr) continue;
    const double w = (z_thr - v.z) / (z_thr - z_min);
    const double w2 = w * w;
    const double r = std::sqrt(v.x * v.x + v.y * v.y);
    const Vec3 outward = r > 1e-9 ? Vec3{v.x / r, v.y / r, 0.0} : Vec3{};
    bump[i] = Vec3{0.0, 0.0, -0.12} * w2 + outward * (0.05 * w2);
  }

  Rng root = Rng(seed).child("synth");
  const std::size_t frames = frames_per_seq;
  for (std::size_t s = 0; s < n_sequences; ++s) {
    Rng rng = root.child(s);
    double amp[3], freq[3], phase[3];
    for (int h = 0; h < 3; ++h) {
      amp[h] = rng.uniform(0.1, 0.3);
      freq[h] = rng.uniform(0.5, 2.5);
      phase[h] = rng.uniform(0.0, 6.283185307179586);
    }
    std::vector<double> envelope(frames);
    for (std::size_t t = 0; t < frames; ++t) {
      double e = 0.5;
      for (int h = 0; h < 3; ++h) {
        e += amp[h] * std::sin(6.283185307179586 * freq[h] * static_cast<double>(t) /
                                   static_cast<double>(frames) +
                               phase[h]);
      }
      envelope[t] = std::clamp(e, 0.0, 1.0);
    }

    Tensor audio({frames, data.feature_dim});
    Rng mix_rng = rng.child("mixtures");
    double mix_amp[8][3], mix_freq[8][3], mix_phase[8][3];
    for (std::size_t c = 1; c < data.feature_dim; ++c) {
      for (int h = 0; h < 3; ++h) {
        mix_amp[c][h] = mix_rng.uniform(0.2, 0.5);
        mix_freq[c][h] = mix_rng.uniform(static_cast<double>(c), static_cast<double>(c) + 2.0);
        mix_phase[c][h] = mix_rng.uniform(0.0, 6.283185307179586);
      }
    }
    Rng feat_noise = rng.child("feature-noise");
    for (std::size_t t = 0; t < frames; ++t) {
      audio.at(t, 0) = envelope[t] + 0.01 * feat_noise.normal();
      for (std::size_t c = 1; c < data.feature_dim; ++c) {
        double m = 0.0;
        for (int h = 0; h < 3; ++h) {
          m += mix_amp[c][h] * std::sin(6.283185307179586 * mix_freq[c][h] *
                                            static_cast<double>(t) / static_cast<double>(frames) +
                                        mix_phase[c][h]);
        }
        audio.at(t, c) = envelope[t] * m + 0.01 * feat_noise.normal();
      }
    }

    // smooth spatio-temporal noise, three low-frequency modes
    Rng noise_rng = rng.child("field-noise");
    Vec3 wave_dir[3], disp_dir[3];
    double wave_phase[3], time_freq[3], time_phase[3];
    for (int m = 0; m < 3; ++m) {
      Vec3 w{noise_rng.normal(), noise_rng.normal(), noise_rng.normal()};
      wave_dir[m] = w / std::max(w.norm(), 1e-9) * noise_rng.uniform(1.0, 3.0);
      Vec3 dd{noise_rng.normal(), noise_rng.normal(), noise_rng.normal()};
      disp_dir[m] = dd / std::max(dd.norm(), 1e-9);
      wave_phase[m] = noise_rng.uniform(0.0, 6.283185307179586);
      time_freq[m] = noise_rng.uniform(0.5, 2.0);
      time_phase[m] = noise_rng.uniform(0.0, 6.283185307179586);
    }

    Tensor targets({frames, n, 3});
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t i = 0; i < n; ++i) {
        Vec3 p = data.template_mesh.vertex(i) + bump[i] * envelope[t];
        for (int m = 0; m < 3; ++m) {
          const double spatial =
              std::sin(wave_dir[m].dot(data.template_mesh.vertex(i)) + wave_phase[m]);
          const double temporal = std::sin(6.283185307179586 * time_freq[m] *
                                               static_cast<double>(t) / static_cast<double>(frames) +
                                           time_phase[m]);
          p += disp_dir[m] * (0.002 * spatial * temporal);
        }
        targets[t * n * 3 + i * 3 + 0] = p.x;
        targets[t * n * 3 + i * 3 + 1] = p.y;
        targets[t * n * 3 + i * 3 + 2] = p.z;
      }
    }
    data.samples.push_back({std::move(audio), std::move(targets), fps});
  }
  return data;
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_obj(data.template_mesh, dir / "template.obj");
  save_mask(data.lip_mask, dir / "mask_lip.txt");
  save_mask(data.face_mask, dir / "mask_face.txt");
  save_mask(data.head_mask, dir / "mask_head.txt");
  nlohmann::json manifest;
  manifest["format"] = "otanim-dataset";
  manifest["fps"] = data.fps;
  manifest["feature_dim"] = data.feature_dim;
  manifest["template"] = "template.obj";
  manifest["masks"] = {{"lip", "mask_lip.txt"}, {"face", "mask_face.txt"}, {"head", "mask_head.txt"}};
  nlohmann::json samples = nlohmann::json::array();
  for (std::size_t s = 0; s < data.samples.size(); ++s) {
    char name[32];
    std::snprintf(name, sizeof name, "seq_%03zu", s);
    const std::filesystem::path sdir = dir / name;
    std::filesystem::create_directories(sdir);
    write_ottk(sdir / "features.ottk", data.samples[s].audio);
    write_ottk(sdir / "targets.ottk", data.samples[s].targets);
    samples.push_back({{"id", name},
                       {"features", std::string(name) + "/features.ottk"},
                       {"targets", std::string(name) + "/targets.ottk"},
                       {"frames", data.samples[s].frame_count()},
                       {"fps", data.samples[s].fps}});
  }
  manifest["samples"] = samples;
  std::ofstream f(dir / "dataset.json");
  if (!f) throw std::runtime_error("save_dataset: cannot write manifest in " + dir.string());
  f << manifest.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream f(dir / "dataset.json");
  if (!f) throw std::runtime_error("load_dataset: missing " + (dir / "dataset.json").string());
  const nlohmann::json manifest = nlohmann::json::parse(f);
  if (manifest.value("format", "") != "otanim-dataset") {
    throw std::runtime_error("load_dataset: not a dataset directory: " + dir.string());
  }
  Dataset data;
  data.fps = manifest["fps"].get<double>();
  data.feature_dim = manifest["feature_dim"].get<std::size_t>();
  data.template_mesh = load_obj(dir / manifest["template"].get<std::string>());
  const std::size_t n = data.template_mesh.vertex_count();
  data.lip_mask = load_mask(dir / manifest["masks"]["lip"].get<std::string>(), n);
  data.face_mask = load_mask(dir / manifest["masks"]["face"].get<std::string>(), n);
  data.head_mask = load_mask(dir / manifest["masks"]["head"].get<std::string>(), n);
  for (const auto& entry : manifest["samples"]) {
    SequenceSample s;
    s.audio = read_ottk(dir / entry["features"].get<std::string>());
    s.targets = read_ottk(dir / entry["targets"].get<std::string>());
    s.fps = entry["fps"].get<double>();
    if (s.targets.rank() != 3 || s.targets.dim(1) != n || s.targets.dim(2) != 3) {
      throw std::runtime_error("load_dataset: bad target shape for " +
                               entry["id"].get<std::string>());
    }
    data.samples.push_back(std::move(s));
  }
  return data;
}

Dataset dataset_from_spec(const std::string& spec) {
  if (spec.rfind("synth:", 0) != 0) return load_dataset(spec);
  std::uint64_t seed = 0;
  std::size_t n = 8, frames = 16;
  double fps = 30.0;
  std::stringstream ss(spec.substr(6));
  std::string kv;
  while (std::getline(ss, kv, ',')) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("dataset spec: expected key=value, got '" + kv + "'");
    }
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    if (key == "seed") {
      seed = std::stoull(value);
    } else if (key == "n" || key == "sequences") {
      n = std::stoull(value);
    } else if (key == "frames") {
      frames = std::stoull(value);
    } else if (key == "fps") {
      fps = std::stod(value);
    } else {
      throw std::invalid_argument("dataset spec: unknown key '" + key + "'");
    }
  }
  return synth_dataset(seed, n, frames, fps);
}

TrainSplit split_dataset(std::size_t n_samples, double validation_fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(n_samples);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng(seed).child("split");
  rng.shuffle(order);
  std::size_t n_val = static_cast<std::size_t>(
      std::llround(validation_fraction * static_cast<double>(n_samples)));
  if (validation_fraction > 0.0 && n_samples >= 2 && n_val == 0) n_val = 1;
  if (n_val >= n_samples) n_val = n_samples - 1;
  TrainSplit split;
  split.validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  return split;
}

namespace {

struct TrainItem {
  std::size_t sample = 0;
  std::size_t frame_lo = 0, frame_hi = 0;
  Tensor audio;              // rows matching the frame range
  SequenceTargets targets;   // varifolds precomputed once
};

Tensor slice_frames(const Tensor& targets, std::size_t lo, std::size_t hi) {
  const std::size_t n = targets.dim(1);
  std::vector<double> data(targets.data() + lo * n * 3, targets.data() + hi * n * 3);
  return Tensor({hi - lo, n, 3}, std::move(data));
}

Tensor slice_audio(const Tensor& audio, std::size_t lo, std::size_t hi, std::size_t frames) {
  const std::size_t ta = audio.dim(0);
  std::size_t alo = static_cast<std::size_t>(
      std::llround(static_cast<double>(lo) * static_cast<double>(ta) / static_cast<double>(frames)));
  std::size_t ahi = static_cast<std::size_t>(
      std::llround(static_cast<double>(hi) * static_cast<double>(ta) / static_cast<double>(frames)));
  alo = std::min(alo, ta - 1);
  ahi = std::clamp(ahi, alo + 1, ta);
  const std::size_t f = audio.dim(1);
  std::vector<double> data(audio.data() + alo * f, audio.data() + ahi * f);
  return Tensor({ahi - alo, f}, std::move(data));
}

std::vector<TrainItem> make_items(const Dataset& data, std::span<const std::size_t> samples,
                                  std::size_t max_frames, double normal_scale) {
  std::vector<TrainItem> items;
  for (const std::size_t s : samples) {
    const SequenceSample& sample = data.samples[s];
    const std::size_t frames = sample.frame_count();
    for (std::size_t lo = 0; lo < frames; lo += max_frames) {
      const std::size_t hi = std::min(frames, lo + max_frames);
      TrainItem item;
      item.sample = s;
      item.frame_lo = lo;
      item.frame_hi = hi;
      item.audio = slice_audio(sample.audio, lo, hi, frames);
      item.targets =
          prepare_targets(data.template_mesh, slice_frames(sample.targets, lo, hi), normal_scale);
      items.push_back(std::move(item));
    }
  }
  return items;
}

struct ItemEval {
  double total = 0.0, rec = 0.0, vel = 0.0, swd = 0.0, reg = 0.0;
  std::vector<Tensor> grads;
};

ItemEval eval_item(const ModelParams& params, const MeshPyramid& pyramid, const Dataset& data,
                   const TrainItem& item, const ProjectionSet& projections,
                   const TrainConfig& config, bool want_grads) {
  Tape tape;
  TapeBinding b = bind_params(tape, params, pyramid, want_grads);
  Tensor tmpl = flatten_positions(data.template_mesh.vertices());
  const std::vector<Var> pred =
      forward_sequence(b, tmpl, item.audio, item.frame_hi - item.frame_lo);
  const LossBreakdown loss =
      loss_total(b, pred, item.targets, projections, config.loss_weights, config.wasserstein_p);
  ItemEval out;
  out.total = loss.total.value()[0];
  out.rec = loss.reconstruction.value()[0];
  out.vel = loss.velocity.value()[0];
  out.swd = loss.swd.value()[0];
  out.reg = loss.regularization.value()[0];
  if (want_grads) {
    tape.backward(loss.total);
    out.grads.reserve(b.leaves.size());
    for (const Var leaf : b.leaves) out.grads.push_back(tape.gradient(leaf));
  }
  return out;
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& data, const Hierarchy& hierarchy,
                  unsigned threads) {
  config.validate();
  if (data.samples.empty()) throw std::invalid_argument("train: empty dataset");
  if (hierarchy.base.vertex_count() != data.template_mesh.vertex_count()) {
    throw std::invalid_argument("train: hierarchy does not match the dataset template");
  }

  const MeshPyramid pyramid = make_pyramid(hierarchy);
  TrainResult result;
  result.split = split_dataset(data.samples.size(), config.validation_fraction, config.seed);

  TrainConfig cfg = config;  // gamma flows into target varifolds via model config
  const double normal_scale = cfg.model.normal_scale;
  std::vector<TrainItem> train_items =
      make_items(data, result.split.train, cfg.max_chunk_frames, normal_scale);
  std::vector<TrainItem> val_items =
      make_items(data, result.split.validation, cfg.max_chunk_frames, normal_scale);

  // PCA of per-frame displacements, training split only
  const std::size_t n = data.template_mesh.vertex_count();
  std::size_t total_frames = 0;
  for (const std::size_t s : result.split.train) total_frames += data.samples[s].frame_count();
  Tensor displacements({total_frames, n * 3});
  const Tensor tmpl = flatten_positions(data.template_mesh.vertices());
  std::size_t row = 0;
  for (const std::size_t s : result.split.train) {
    const Tensor& targets = data.samples[s].targets;
    for (std::size_t t = 0; t < targets.dim(0); ++t) {
      for (std::size_t c = 0; c < n * 3; ++c) {
        displacements.at(row, c) = targets[t * n * 3 + c] - tmpl[c];
      }
      ++row;
    }
  }
  const PCABasis pca = pca_fit(displacements, cfg.model.pca_components, cfg.seed);

  ModelParams params = init_params(cfg.model, pyramid, pca.components, pca.mean, cfg.seed);
  params.validate();

  Rng run_rng = Rng(cfg.seed).child("train");
  const ProjectionSet val_projections =
      sample_projections(6, cfg.projection_count, run_rng.child("val-proj").next_u64());

  const auto eval_mean = [&](const std::vector<TrainItem>& items, const ProjectionSet& proj,
                             EpochStats& stats) {
    if (items.empty()) return 0.0;
    std::vector<ItemEval> evals(items.size());
    parallel_for(items.size(), threads, [&](std::size_t i) {
      evals[i] = eval_item(params, pyramid, data, items[i], proj, cfg, false);
    });
    double total = 0.0;
    for (const ItemEval& e : evals) {
      total += e.total;
      stats.reconstruction += e.rec / static_cast<double>(items.size());
      stats.velocity += e.vel / static_cast<double>(items.size());
      stats.swd += e.swd / static_cast<double>(items.size());
      stats.regularization += e.reg / static_cast<double>(items.size());
    }
    return total / static_cast<double>(items.size());
  };

  // epoch 0: pre-training reference point
  {
    EpochStats stats;
    stats.epoch = 0;
    stats.train_loss = eval_mean(train_items, val_projections, stats);
    EpochStats ignored;
    stats.val_loss = val_items.empty() ? stats.train_loss : eval_mean(val_items, val_projections, ignored);
    result.history.push_back(stats);
  }

  result.best_params = params;
  result.best_epoch = 0;
  double best_val = result.history.front().val_loss;

  AdamWState opt_state;
  std::size_t step = 0;
  std::vector<std::size_t> order(train_items.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng epoch_rng = run_rng.child("epoch").child(epoch);
    epoch_rng.shuffle(order);

    EpochStats stats;
    stats.epoch = epoch;
    double epoch_loss = 0.0;
    std::size_t seen = 0;

    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      ++step;
      const ProjectionSet projections =
          sample_projections(6, cfg.projection_count, run_rng.child("proj").child(step).next_u64());

      std::vector<ItemEval> evals(hi - lo);
      try {
        parallel_for(hi - lo, threads, [&](std::size_t i) {
          evals[i] = eval_item(params, pyramid, data, train_items[order[lo + i]], projections, cfg,
                               true);
        });
      } catch (const std::exception& e) {
        throw std::runtime_error("train: step " + std::to_string(step) + ": " + e.what());
      }

      // batch mean in fixed item order, then clip and apply
      const double inv = 1.0 / static_cast<double>(hi - lo);
      std::vector<Tensor> grads;
      grads.reserve(params.trainable.size());
      for (std::size_t k = 0; k < params.trainable.size(); ++k) {
        Tensor g(params.trainable[k].second.shape());
        for (const ItemEval& e : evals) {
          const Tensor& gi = e.grads[k];
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += inv * gi[i];
        }
        grads.push_back(std::move(g));
      }
      double sq = 0.0;
      for (const Tensor& g : grads) {
        for (const double x : g.values()) sq += x * x;
      }
      const double gnorm = std::sqrt(sq);
      if (!std::isfinite(gnorm)) {
        throw std::runtime_error("train: step " + std::to_string(step) + ": non-finite gradient");
      }
      if (gnorm > cfg.clip_norm && gnorm > 0.0) {
        const double s = cfg.clip_norm / gnorm;
        for (Tensor& g : grads) {
          for (double& x : g.values()) x *= s;
        }
      }
      adamw_step(params.trainable, grads, opt_state, cfg, step);

      for (const ItemEval& e : evals) {
        epoch_loss += e.total;
        stats.reconstruction += e.rec;
        stats.velocity += e.vel;
        stats.swd += e.swd;
        stats.regularization += e.reg;
      }
      seen += hi - lo;
    }

    stats.train_loss = epoch_loss / static_cast<double>(seen);
    stats.reconstruction /= static_cast<double>(seen);
    stats.velocity /= static_cast<double>(seen);
    stats.swd /= static_cast<double>(seen);
    stats.regularization /= static_cast<double>(seen);

    EpochStats ignored;
    stats.val_loss =
        val_items.empty() ? stats.train_loss : eval_mean(val_items, val_projections, ignored);
    result.history.push_back(stats);

    if (stats.val_loss < best_val) {
      best_val = stats.val_loss;
      result.best_params = params;
      result.best_epoch = epoch;
    }
  }

  if (result.best_epoch == 0 && result.history.size() > 1) {
    // never improved; keep the initial weights as specified by best-val selection
    result.best_params.validate();
  }
  return result;
}

}  // namespace otanim
