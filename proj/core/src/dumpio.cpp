#include "layerscope/dumpio.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace layerscope {

namespace {

template <typename T>
void store_le(std::uint8_t* out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out[i] = static_cast<std::uint8_t>(value >> (8 * i));
  }
}

template <typename T>
T load_le(const std::uint8_t* in) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(in[i]) << (8 * i);
  }
  return value;
}

void swap_floats_if_needed(std::span<float> values) {
  if constexpr (std::endian::native == std::endian::big) {
    for (float& v : values) {
      auto bits = std::bit_cast<std::uint32_t>(v);
      bits = ((bits & 0x000000FFu) << 24) | ((bits & 0x0000FF00u) << 8) |
             ((bits & 0x00FF0000u) >> 8) | ((bits & 0xFF000000u) >> 24);
      v = std::bit_cast<float>(bits);
    }
  }
}

void write_floats(std::ostream& out, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(float)));
  } else {
    std::vector<float> copy(values.begin(), values.end());
    swap_floats_if_needed(copy);
    out.write(reinterpret_cast<const char*>(copy.data()),
              static_cast<std::streamsize>(copy.size() * sizeof(float)));
  }
}

bool read_floats(std::istream& in, std::span<float> values) {
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!in) return false;
  swap_floats_if_needed(values);
  return true;
}

std::string magic_string(const std::array<char, 4>& magic) {
  return std::string(magic.begin(), magic.end());
}

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b, const std::string& what) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) {
    throw Error(ErrorCode::malformed, what + ": declared size overflows");
  }
  return a * b;
}

void validate_header_common(const DumpHeader& h, const std::array<char, 4>& expected_magic,
                            const std::string& path) {
  if (h.magic != expected_magic) {
    throw Error(ErrorCode::bad_magic, path + ": bad magic '" + magic_string(h.magic) +
                                          "', expected '" + magic_string(expected_magic) + "'");
  }
  if (h.version != kDumpVersion) {
    throw Error(ErrorCode::unsupported_version,
                path + ": unsupported version " + std::to_string(h.version));
  }
  if (h.dtype_code != 0) {
    throw Error(ErrorCode::unsupported_version,
                path + ": unsupported dtype code " + std::to_string(h.dtype_code));
  }
  if (h.n_layers == 0 || h.dim == 0) {
    throw Error(ErrorCode::malformed, path + ": header declares zero layers or zero dimension");
  }
  if (static_cast<std::uint8_t>(h.position_mode) > 1) {
    throw Error(ErrorCode::malformed, path + ": unknown position mode " +
                                          std::to_string(static_cast<int>(h.position_mode)));
  }
}

DumpHeader read_header(std::istream& in, const std::string& path) {
  std::array<std::uint8_t, kDumpHeaderSize> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw Error(ErrorCode::truncated, path + ": file shorter than the 32-byte header");
  }
  return decode_header(bytes);
}

void ensure_finite(std::span<const float> values, std::size_t rows, std::size_t cols,
                   const std::string& where, std::size_t first_layer = 1) {
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!std::isfinite(values[k])) {
      const std::size_t row = k / cols % rows;
      const std::size_t layer = k / (cols * rows) + first_layer;
      throw Error(ErrorCode::non_finite, where + ": non-finite value at layer " +
                                             std::to_string(layer) + ", row " +
                                             std::to_string(row) + ", column " +
                                             std::to_string(k % cols));
    }
  }
}

}  // namespace

std::array<std::uint8_t, kDumpHeaderSize> encode_header(const DumpHeader& header) {
  std::array<std::uint8_t, kDumpHeaderSize> bytes{};
  std::memcpy(bytes.data(), header.magic.data(), 4);
  store_le<std::uint32_t>(bytes.data() + 4, header.version);
  store_le<std::uint64_t>(bytes.data() + 8, header.n_samples);
  store_le<std::uint32_t>(bytes.data() + 16, header.n_layers);
  store_le<std::uint32_t>(bytes.data() + 20, header.dim);
  bytes[24] = header.dtype_code;
  bytes[25] = static_cast<std::uint8_t>(header.position_mode);
  return bytes;
}

DumpHeader decode_header(std::span<const std::uint8_t, kDumpHeaderSize> bytes) {
  DumpHeader h;
  std::memcpy(h.magic.data(), bytes.data(), 4);
  h.version = load_le<std::uint32_t>(bytes.data() + 4);
  h.n_samples = load_le<std::uint64_t>(bytes.data() + 8);
  h.n_layers = load_le<std::uint32_t>(bytes.data() + 16);
  h.dim = load_le<std::uint32_t>(bytes.data() + 20);
  h.dtype_code = bytes[24];
  h.position_mode = static_cast<PositionMode>(bytes[25]);
  return h;
}

LayerDump::LayerDump(DumpHeader header, std::vector<float> values)
    : header_(header), values_(std::move(values)) {
  const auto expected = header_.n_samples * header_.n_layers * header_.dim;
  if (values_.size() != expected) {
    throw Error(ErrorCode::shape_mismatch, "layer dump holds " + std::to_string(values_.size()) +
                                               " values, header implies " +
                                               std::to_string(expected));
  }
}

Eigen::Map<const FloatMatrix> LayerDump::layer(std::size_t layer) const {
  if (layer < 1 || layer > n_layers()) {
    throw Error(ErrorCode::invalid_argument, "layer index " + std::to_string(layer) +
                                                 " outside 1.." + std::to_string(n_layers()));
  }
  const std::size_t block = n_samples() * dim();
  return {values_.data() + (layer - 1) * block, static_cast<Eigen::Index>(n_samples()),
          static_cast<Eigen::Index>(dim())};
}

Matrix LayerDump::layer_matrix(std::size_t layer) const {
  return this->layer(layer).cast<double>();
}

Matrix LayerDump::layer_matrix(std::size_t layer, std::span<const std::size_t> rows) const {
  const auto view = this->layer(layer);
  Matrix out(static_cast<Eigen::Index>(rows.size()), view.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n_samples()) {
      throw Error(ErrorCode::invalid_argument, "row " + std::to_string(rows[r]) + " out of range");
    }
    out.row(static_cast<Eigen::Index>(r)) =
        view.row(static_cast<Eigen::Index>(rows[r])).cast<double>();
  }
  return out;
}

void write_layer_dump(const std::filesystem::path& path, const DumpHeader& header,
                      std::span<const FloatMatrix> layers) {
  if (header.dtype_code != 0) {
    throw Error(ErrorCode::invalid_argument,
                "unsupported dtype code " + std::to_string(header.dtype_code));
  }
  if (header.n_samples == 0 || header.n_layers == 0 || header.dim == 0) {
    throw Error(ErrorCode::invalid_argument, "layer dump needs N, L, d >= 1");
  }
  if (layers.size() != header.n_layers) {
    throw Error(ErrorCode::shape_mismatch, "header declares " + std::to_string(header.n_layers) +
                                               " layers, got " + std::to_string(layers.size()));
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& m = layers[l];
    if (static_cast<std::uint64_t>(m.rows()) != header.n_samples ||
        static_cast<std::uint64_t>(m.cols()) != header.dim) {
      throw Error(ErrorCode::shape_mismatch,
                  "layer " + std::to_string(l + 1) + " is " + std::to_string(m.rows()) + "x" +
                      std::to_string(m.cols()) + ", header declares " +
                      std::to_string(header.n_samples) + "x" + std::to_string(header.dim));
    }
    ensure_finite({m.data(), static_cast<std::size_t>(m.size())}, m.rows(), m.cols(),
                  "layer dump", l + 1);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open " + path.string() + " for writing");
  DumpHeader h = header;
  h.magic = kLayerDumpMagic;
  const auto bytes = encode_header(h);
  out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  for (const auto& m : layers) write_floats(out, {m.data(), static_cast<std::size_t>(m.size())});
  out.flush();
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

LayerDump read_layer_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  const std::string name = path.string();
  const DumpHeader h = read_header(in, name);
  validate_header_common(h, kLayerDumpMagic, name);
  if (h.n_samples == 0) throw Error(ErrorCode::malformed, name + ": header declares N = 0");

  const std::uint64_t count =
      checked_mul(checked_mul(h.n_samples, h.n_layers, name), h.dim, name);
  const std::uint64_t expected_bytes = kDumpHeaderSize + checked_mul(count, 4, name);
  const std::uint64_t actual_bytes = std::filesystem::file_size(path);
  if (actual_bytes != expected_bytes) {
    throw Error(actual_bytes < expected_bytes ? ErrorCode::truncated : ErrorCode::malformed,
                name + ": expected " + std::to_string(expected_bytes) + " bytes, found " +
                    std::to_string(actual_bytes));
  }
  std::vector<float> values(count);
  if (!read_floats(in, values)) throw Error(ErrorCode::io, name + ": short read");
  ensure_finite(values, h.n_samples, h.dim, name);
  return {h, std::move(values)};
}

TrajectoryReader::TrajectoryReader(const std::filesystem::path& path)
    : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw Error(ErrorCode::io, "cannot open " + path.string());
  header_ = read_header(in_, path_.string());
  validate_header_common(header_, kTrajectoryDumpMagic, path_.string());
  file_size_ = std::filesystem::file_size(path);
  offset_ = kDumpHeaderSize;
}

std::optional<TrajectoryRecord> TrajectoryReader::next() {
  const std::string name = path_.string();
  if (records_read_ == header_.n_samples) {
    if (offset_ != file_size_) {
      throw Error(ErrorCode::malformed, name + ": " + std::to_string(file_size_ - offset_) +
                                            " trailing bytes after " +
                                            std::to_string(records_read_) + " records");
    }
    return std::nullopt;
  }
  const auto record_label = name + " record " + std::to_string(records_read_);
  auto need = [&](std::uint64_t bytes) {
    if (offset_ + bytes > file_size_) {
      throw Error(ErrorCode::truncated, record_label + ": expected " +
                                            std::to_string(offset_ + bytes) +
                                            " bytes, file has " + std::to_string(file_size_));
    }
  };

  std::uint8_t len_bytes[2];
  need(2);
  in_.read(reinterpret_cast<char*>(len_bytes), 2);
  const auto id_len = load_le<std::uint16_t>(len_bytes);
  offset_ += 2;

  TrajectoryRecord record;
  need(id_len);
  record.sample_id.resize(id_len);
  in_.read(record.sample_id.data(), id_len);
  offset_ += id_len;

  std::uint8_t t_bytes[4];
  need(4);
  in_.read(reinterpret_cast<char*>(t_bytes), 4);
  record.n_tokens = load_le<std::uint32_t>(t_bytes);
  offset_ += 4;

  const std::uint64_t block = checked_mul(record.n_tokens, header_.dim, record_label);
  need(checked_mul(checked_mul(block, header_.n_layers, record_label), 4, record_label));
  record.layers.reserve(header_.n_layers);
  for (std::uint32_t l = 0; l < header_.n_layers; ++l) {
    FloatMatrix m(record.n_tokens, header_.dim);
    if (!read_floats(in_, {m.data(), static_cast<std::size_t>(m.size())})) {
      throw Error(ErrorCode::io, record_label + ": short read");
    }
    ensure_finite({m.data(), static_cast<std::size_t>(m.size())},
                  std::max<std::size_t>(1, record.n_tokens), header_.dim,
                  record_label + " (sample '" + record.sample_id + "')", l + 1);
    record.layers.push_back(std::move(m));
  }
  offset_ += block * header_.n_layers * 4;
  ++records_read_;
  return record;
}

TrajectoryWriter::TrajectoryWriter(const std::filesystem::path& path, std::uint32_t n_layers,
                                   std::uint32_t dim, PositionMode mode)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw Error(ErrorCode::io, "cannot open " + path.string() + " for writing");
  if (n_layers == 0 || dim == 0) {
    throw Error(ErrorCode::invalid_argument, "trajectory dump needs L, d >= 1");
  }
  header_.magic = kTrajectoryDumpMagic;
  header_.n_layers = n_layers;
  header_.dim = dim;
  header_.position_mode = mode;
  const auto bytes = encode_header(header_);
  out_.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

TrajectoryWriter::~TrajectoryWriter() {
  try {
    close();
  } catch (...) {
  }
}

void TrajectoryWriter::write(const TrajectoryRecord& record) {
  if (closed_) throw Error(ErrorCode::invalid_argument, "trajectory writer already closed");
  if (record.sample_id.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw Error(ErrorCode::invalid_argument, "sample id longer than 65535 bytes");
  }
  if (record.layers.size() != header_.n_layers) {
    throw Error(ErrorCode::shape_mismatch, "record '" + record.sample_id + "' has " +
                                               std::to_string(record.layers.size()) +
                                               " layers, dump declares " +
                                               std::to_string(header_.n_layers));
  }
  for (std::size_t l = 0; l < record.layers.size(); ++l) {
    const auto& m = record.layers[l];
    if (static_cast<std::uint64_t>(m.rows()) != record.n_tokens ||
        static_cast<std::uint64_t>(m.cols()) != header_.dim) {
      throw Error(ErrorCode::shape_mismatch,
                  "record '" + record.sample_id + "' layer " + std::to_string(l + 1) + " is " +
                      std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ", expected " +
                      std::to_string(record.n_tokens) + "x" + std::to_string(header_.dim));
    }
    ensure_finite({m.data(), static_cast<std::size_t>(m.size())},
                  std::max<Eigen::Index>(1, m.rows()), m.cols(),
                  "record '" + record.sample_id + "'", l + 1);
  }
  std::uint8_t len_bytes[2];
  store_le<std::uint16_t>(len_bytes, static_cast<std::uint16_t>(record.sample_id.size()));
  out_.write(reinterpret_cast<const char*>(len_bytes), 2);
  out_.write(record.sample_id.data(), static_cast<std::streamsize>(record.sample_id.size()));
  std::uint8_t t_bytes[4];
  store_le<std::uint32_t>(t_bytes, record.n_tokens);
  out_.write(reinterpret_cast<const char*>(t_bytes), 4);
  for (const auto& m : record.layers) {
    write_floats(out_, {m.data(), static_cast<std::size_t>(m.size())});
  }
  ++header_.n_samples;
}

void TrajectoryWriter::close() {
  if (closed_) return;
  closed_ = true;
  const auto bytes = encode_header(header_);
  out_.seekp(0);
  out_.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  out_.close();
  if (!out_) throw Error(ErrorCode::io, "write failed for " + path_.string());
}

std::vector<TrajectoryRecord> read_all_trajectories(const std::filesystem::path& path) {
  TrajectoryReader reader(path);
  std::vector<TrajectoryRecord> records;
  while (auto record = reader.next()) records.push_back(std::move(*record));
  return records;
}

std::string_view to_string(Split split) noexcept {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

std::optional<Split> parse_split(std::string_view token) noexcept {
  if (token == "train") return Split::train;
  if (token == "val") return Split::val;
  if (token == "test") return Split::test;
  return std::nullopt;
}

std::vector<SampleMeta> read_meta(const std::filesystem::path& path, std::size_t expected_n) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::vector<SampleMeta> records;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::malformed, where + ": " + e.what());
    }
    if (!obj.is_object() || !obj.contains("id") || !obj.contains("label") ||
        !obj.contains("split")) {
      throw Error(ErrorCode::malformed, where + ": expected keys id, label, split");
    }
    SampleMeta meta;
    if (!obj["id"].is_string()) throw Error(ErrorCode::malformed, where + ": id must be a string");
    meta.id = obj["id"].get<std::string>();
    const auto& label = obj["label"];
    if (!label.is_number_integer() || (label.get<long long>() != 0 && label.get<long long>() != 1)) {
      throw Error(ErrorCode::invalid_label, where + ": label must be 0 or 1, got " + label.dump());
    }
    meta.label = static_cast<int>(label.get<long long>());
    const auto& split = obj["split"];
    const auto parsed = split.is_string() ? parse_split(split.get<std::string>()) : std::nullopt;
    if (!parsed) {
      throw Error(ErrorCode::invalid_split,
                  where + ": split must be train, val or test, got " + split.dump());
    }
    meta.split = *parsed;
    if (!seen.insert(meta.id).second) {
      throw Error(ErrorCode::duplicate_id, where + ": duplicate id '" + meta.id + "'");
    }
    records.push_back(std::move(meta));
  }
  if (records.size() != expected_n) {
    throw Error(ErrorCode::count_mismatch, path.string() + ": " + std::to_string(records.size()) +
                                               " records, expected " + std::to_string(expected_n));
  }
  return records;
}

void write_meta(const std::filesystem::path& path, std::span<const SampleMeta> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open " + path.string() + " for writing");
  for (const auto& r : records) {
    nlohmann::ordered_json obj;
    obj["id"] = r.id;
    obj["label"] = r.label;
    obj["split"] = std::string(to_string(r.split));
    out << obj.dump() << '\n';
  }
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

std::vector<std::size_t> rows_in(std::span<const SampleMeta> meta,
                                 std::initializer_list<Split> splits) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < meta.size(); ++i) {
    for (Split s : splits) {
      if (meta[i].split == s) {
        rows.push_back(i);
        break;
      }
    }
  }
  return rows;
}

}  // namespace layerscope
