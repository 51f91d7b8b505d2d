#pragma once

#include "layerscope/common.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace layerscope {

/// Binary layer dumps (".lhsd"), trajectory dumps (".lhtd") and the JSONL
/// metadata sidecar (".meta.jsonl").
///
/// Both binary formats start with the same 32-byte little-endian header:
///
///   bytes  0-3   magic "LHSD" (layer dump) or "LHTD" (trajectory dump)
///   bytes  4-7   version, u32 (= 1)
///   bytes  8-15  N, u64 (samples; record count for trajectory dumps)
///   bytes 16-19  L, u32 (layers)
///   bytes 20-23  d, u32 (hidden size)
///   byte  24     dtype, u8 (0 = f32)
///   byte  25     position mode, u8 (0 = last token, 1 = first-sentence token)
///   bytes 26-31  zero
///
/// A layer dump then holds L blocks of N x d row-major f32 values; block l-1
/// is layer l. A trajectory dump holds N records of
/// [id_len u16][id bytes][T u32][L blocks of T x d f32].

inline constexpr std::size_t kDumpHeaderSize = 32;
inline constexpr std::uint32_t kDumpVersion = 1;
inline constexpr std::array<char, 4> kLayerDumpMagic{'L', 'H', 'S', 'D'};
inline constexpr std::array<char, 4> kTrajectoryDumpMagic{'L', 'H', 'T', 'D'};

enum class PositionMode : std::uint8_t { last_token = 0, fst_token = 1 };

struct DumpHeader {
  std::array<char, 4> magic = kLayerDumpMagic;
  std::uint32_t version = kDumpVersion;
  std::uint64_t n_samples = 0;
  std::uint32_t n_layers = 0;
  std::uint32_t dim = 0;
  std::uint8_t dtype_code = 0;
  PositionMode position_mode = PositionMode::last_token;

  bool operator==(const DumpHeader&) const = default;
};

std::array<std::uint8_t, kDumpHeaderSize> encode_header(const DumpHeader& header);
DumpHeader decode_header(std::span<const std::uint8_t, kDumpHeaderSize> bytes);

/// Immutable stack of per-layer N x d matrices.
class LayerDump {
 public:
  LayerDump(DumpHeader header, std::vector<float> values);

  const DumpHeader& header() const noexcept { return header_; }
  std::size_t n_samples() const noexcept { return static_cast<std::size_t>(header_.n_samples); }
  std::size_t n_layers() const noexcept { return header_.n_layers; }
  std::size_t dim() const noexcept { return header_.dim; }

  /// Layer `layer` in 1..L as a zero-copy view.
  Eigen::Map<const FloatMatrix> layer(std::size_t layer) const;

  /// Layer `layer` in 1..L converted to double precision, optionally
  /// restricted to the given sample rows.
  Matrix layer_matrix(std::size_t layer) const;
  Matrix layer_matrix(std::size_t layer, std::span<const std::size_t> rows) const;

  std::span<const float> values() const noexcept { return values_; }

  bool operator==(const LayerDump& other) const = default;

 private:
  DumpHeader header_;
  std::vector<float> values_;
};

void write_layer_dump(const std::filesystem::path& path, const DumpHeader& header,
                      std::span<const FloatMatrix> layers);
LayerDump read_layer_dump(const std::filesystem::path& path);

/// One sample's token trajectory at every layer.
struct TrajectoryRecord {
  std::string sample_id;
  std::uint32_t n_tokens = 0;
  std::vector<FloatMatrix> layers;  ///< L matrices of n_tokens x d

  /// Curvature needs at least three token positions.
  bool too_short_for_curvature() const noexcept { return n_tokens < 3; }
};

/// Streams records from a trajectory dump; at most one record is resident.
class TrajectoryReader {
 public:
  explicit TrajectoryReader(const std::filesystem::path& path);

  const DumpHeader& header() const noexcept { return header_; }

  /// Next record in file order, or nullopt after the last one. Throws on
  /// malformed, truncated or non-finite content.
  std::optional<TrajectoryRecord> next();

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  DumpHeader header_;
  std::uint64_t file_size_ = 0;
  std::uint64_t offset_ = 0;
  std::uint64_t records_read_ = 0;
};

/// Writes a trajectory dump record by record. N in the header is patched to
/// the number of written records on close().
class TrajectoryWriter {
 public:
  TrajectoryWriter(const std::filesystem::path& path, std::uint32_t n_layers, std::uint32_t dim,
                   PositionMode mode = PositionMode::last_token);
  ~TrajectoryWriter();

  TrajectoryWriter(const TrajectoryWriter&) = delete;
  TrajectoryWriter& operator=(const TrajectoryWriter&) = delete;

  void write(const TrajectoryRecord& record);
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  DumpHeader header_;
  bool closed_ = false;
};

/// Convenience: drains a reader into memory. Use TrajectoryReader for large files.
std::vector<TrajectoryRecord> read_all_trajectories(const std::filesystem::path& path);

enum class Split : std::uint8_t { train, val, test };

std::string_view to_string(Split split) noexcept;
std::optional<Split> parse_split(std::string_view token) noexcept;

struct SampleMeta {
  std::string id;
  int label = 0;  ///< 0 = correct, 1 = hallucinated
  Split split = Split::train;

  bool operator==(const SampleMeta&) const = default;
};

/// Reads the JSONL sidecar; one {"id", "label", "split"} object per line.
std::vector<SampleMeta> read_meta(const std::filesystem::path& path, std::size_t expected_n);
void write_meta(const std::filesystem::path& path, std::span<const SampleMeta> records);

/// Row indices of the samples in any of the given splits, in file order.
std::vector<std::size_t> rows_in(std::span<const SampleMeta> meta, std::initializer_list<Split> splits);

}  // namespace layerscope
