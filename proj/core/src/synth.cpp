#include "layerscope/synth.hpp"

#include "layerscope/random.hpp"

#include <Eigen/QR>

#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>

namespace layerscope {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Independent streams for the embedding, the samples and the trajectories of
// each layer, plus one for labels and splits.
enum class Stream : std::uint64_t { labels = 1, embedding = 2, points = 3, trajectory = 4 };

Rng stream(const SynthSpec& spec, Stream s, std::size_t layer = 0) {
  return Rng(splitmix(splitmix(spec.seed) ^ (static_cast<std::uint64_t>(s) << 32) ^ layer));
}

// d x m matrix with orthonormal columns.
Eigen::MatrixXd embedding(const SynthSpec& spec, std::size_t layer, std::size_t m) {
  Rng rng = stream(spec, Stream::embedding, layer);
  Eigen::MatrixXd g(static_cast<Eigen::Index>(spec.dim), static_cast<Eigen::Index>(m));
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(g.rows(), g.cols());
  // Fix column signs so the basis does not depend on QR conventions.
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (j < r.rows() && r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return q;
}

}  // namespace

void SynthSpec::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::invalid_argument, "synth: " + msg); };
  if (layers < 1 || samples < 3 || dim < 1) fail("need L >= 1, N >= 3, d >= 1");
  if (id_profile.size() != layers) {
    fail("id_profile has " + std::to_string(id_profile.size()) + " entries, expected L = " +
         std::to_string(layers));
  }
  for (std::size_t l = 0; l < layers; ++l) {
    if (id_profile[l] < 1 || id_profile[l] > dim) {
      fail("latent dimension m_" + std::to_string(l + 1) + " = " + std::to_string(id_profile[l]) +
           " must lie in [1, d = " + std::to_string(dim) + "]");
    }
  }
  if (signal_layer < 1 || signal_layer > layers) fail("signal layer must lie in [1, L]");
  if (!(margin >= 0.0) || !std::isfinite(margin)) fail("margin must be finite and non-negative");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) fail("noise_sigma must be finite and non-negative");
  if (!(train_fraction > 0.0) || !(val_fraction > 0.0) || train_fraction + val_fraction >= 1.0) {
    fail("split fractions must be positive and leave room for a test split");
  }
}

SynthData generate(const SynthSpec& spec) {
  spec.validate();
  const std::size_t n = spec.samples;
  SynthData data;

  Rng label_rng = stream(spec, Stream::labels);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 2);
  label_rng.shuffle(std::span<int>(labels));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  label_rng.shuffle(std::span<std::size_t>(order));
  const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(spec.val_fraction * static_cast<double>(n)));
  data.meta.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = order[k];
    char id[32];
    std::snprintf(id, sizeof id, "s%06zu", i + 1);
    data.meta[i].id = id;
    data.meta[i].label = labels[i];
    data.meta[i].split = k < n_train ? Split::train : k < n_train + n_val ? Split::val : Split::test;
  }

  data.layers.reserve(spec.layers);
  for (std::size_t l = 1; l <= spec.layers; ++l) {
    const std::size_t m = spec.id_profile[l - 1];
    const Eigen::MatrixXd q = embedding(spec, l, m);
    Rng rng = stream(spec, Stream::points, l);
    Eigen::MatrixXd latent(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    for (Eigen::Index i = 0; i < latent.rows(); ++i) {
      for (Eigen::Index j = 0; j < latent.cols(); ++j) latent(i, j) = rng.uniform() - 0.5;
    }
    Eigen::MatrixXd x = latent * q.transpose();
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) += spec.noise_sigma * rng.normal();
    }
    if (l == spec.signal_layer && spec.margin > 0.0) {
      // Label direction: a random unit vector, independent of the embedding.
      Eigen::RowVectorXd v(x.cols());
      for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = rng.normal();
      v.normalize();
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        x.row(i) += (labels[static_cast<std::size_t>(i)] - 0.5) * spec.margin * v;
      }
    }
    data.layers.emplace_back(x.cast<float>());
  }
  return data;
}

void write_synth_trajectories(const SynthSpec& spec, const std::filesystem::path& path) {
  spec.validate();
  if (spec.traj_tokens < 1) throw Error(ErrorCode::invalid_argument, "synth: traj_tokens must be positive");
  const std::size_t records = spec.traj_samples == 0 ? spec.samples : std::min(spec.traj_samples, spec.samples);
  const std::size_t t_len = spec.traj_tokens;

  std::vector<Eigen::MatrixXd> bases;
  std::vector<Rng> rngs;
  for (std::size_t l = 1; l <= spec.layers; ++l) {
    bases.push_back(embedding(spec, l, spec.id_profile[l - 1]));
    rngs.push_back(stream(spec, Stream::trajectory, l));
  }

  TrajectoryWriter writer(path, static_cast<std::uint32_t>(spec.layers), static_cast<std::uint32_t>(spec.dim));
  TrajectoryRecord record;
  for (std::size_t i = 0; i < records; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "s%06zu", i + 1);
    record.sample_id = id;
    record.n_tokens = static_cast<std::uint32_t>(t_len);
    record.layers.clear();
    for (std::size_t l = 0; l < spec.layers; ++l) {
      Rng& rng = rngs[l];
      const auto m = static_cast<Eigen::Index>(spec.id_profile[l]);
      Eigen::MatrixXd path_latent(static_cast<Eigen::Index>(t_len), m);
      Eigen::RowVectorXd pos(m);
      Eigen::RowVectorXd vel = Eigen::RowVectorXd::Zero(m);
      for (Eigen::Index j = 0; j < m; ++j) pos[j] = rng.uniform() - 0.5;
      for (std::size_t t = 0; t < t_len; ++t) {
        path_latent.row(static_cast<Eigen::Index>(t)) = pos;
        Eigen::RowVectorXd kick(m);
        for (Eigen::Index j = 0; j < m; ++j) kick[j] = 0.1 * rng.normal();
        vel = 0.5 * vel + kick;
        pos += vel;
      }
      Eigen::MatrixXd h = path_latent * bases[l].transpose();
      for (Eigen::Index r = 0; r < h.rows(); ++r) {
        for (Eigen::Index c = 0; c < h.cols(); ++c) h(r, c) += spec.noise_sigma * rng.normal();
      }
      record.layers.emplace_back(h.cast<float>());
    }
    writer.write(record);
  }
  writer.close();
}

void write_synth(const SynthSpec& spec, const std::filesystem::path& dump_path,
                 const std::filesystem::path& meta_path,
                 const std::optional<std::filesystem::path>& traj_path) {
  const SynthData data = generate(spec);
  DumpHeader header;
  header.n_samples = spec.samples;
  header.n_layers = static_cast<std::uint32_t>(spec.layers);
  header.dim = static_cast<std::uint32_t>(spec.dim);
  write_layer_dump(dump_path, header, data.layers);
  write_meta(meta_path, data.meta);
  if (traj_path && spec.traj_tokens > 0) write_synth_trajectories(spec, *traj_path);
}

}  // namespace layerscope
