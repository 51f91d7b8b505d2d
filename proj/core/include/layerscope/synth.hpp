#pragma once

#include "layerscope/common.hpp"
#include "layerscope/dumpio.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace layerscope {

/// Synthetic layer dumps with a known intrinsic-dimension profile.
///
/// Layer l holds N points drawn uniformly from an m_l-dimensional unit cube,
/// mapped into R^d by a random orthonormal embedding, plus isotropic Gaussian
/// noise. At the signal layer every point is shifted by
/// (label - 1/2) * margin along a random unit direction.
struct SynthSpec {
  std::size_t layers = 8;
  std::size_t samples = 2000;
  std::size_t dim = 64;
  std::size_t signal_layer = 3;
  double margin = 1.0;
  std::vector<std::size_t> id_profile{2, 4, 8, 5, 3, 3, 6, 12};
  double noise_sigma = 1e-4;
  std::uint64_t seed = 0;
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  std::size_t traj_tokens = 0;   ///< tokens per trajectory record; 0 writes no trajectory dump
  std::size_t traj_samples = 0;  ///< records to write; 0 means every sample

  /// Throws invalid_argument on inconsistent fields.
  void validate() const;
};

struct SynthData {
  std::vector<FloatMatrix> layers;
  std::vector<SampleMeta> meta;
};

/// Deterministic in the spec.
SynthData generate(const SynthSpec& spec);

/// Token trajectories: a momentum random walk in each layer's latent space,
/// embedded with the same map as the layer dump.
void write_synth_trajectories(const SynthSpec& spec, const std::filesystem::path& path);

/// Writes the layer dump, the metadata sidecar and, when traj_tokens > 0 and
/// a path is given, the trajectory dump.
void write_synth(const SynthSpec& spec, const std::filesystem::path& dump_path,
                 const std::filesystem::path& meta_path,
                 const std::optional<std::filesystem::path>& traj_path = std::nullopt);

}  // namespace layerscope
