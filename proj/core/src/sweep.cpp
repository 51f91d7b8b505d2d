#include "layerscope/criteria.hpp"
#include "layerscope/idest.hpp"

#include <chrono>
#include <cmath>
#include <string>
#include <unordered_set>

namespace layerscope {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool needs_labels(CriterionName name) {
  return name == CriterionName::val_loss || name == CriterionName::rgn || name == CriterionName::snr;
}

std::vector<int> labels_at(std::span<const SampleMeta> meta, std::span<const std::size_t> rows) {
  std::vector<int> y;
  y.reserve(rows.size());
  for (std::size_t r : rows) y.push_back(meta[r].label);
  return y;
}

CriterionSeries empty_series(CriterionName name, std::size_t layers) {
  CriterionSeries s;
  s.name = name;
  s.direction = direction_of(name);
  s.values.assign(layers, 0.0);
  s.seconds.assign(layers, 0.0);
  return s;
}

void require_finite_value(CriterionName name, std::size_t layer, double value) {
  if (!std::isfinite(value)) {
    throw Error(ErrorCode::non_finite, std::string(to_string(name)) + " is not finite at layer " +
                                           std::to_string(layer));
  }
}

// Streams the trajectory dump once and feeds every layer's accumulator. The
// decoding cost is shared evenly between layers.
std::vector<CurvatureSummary> sweep_curvature(const std::filesystem::path& path, std::size_t layers,
                                              std::size_t dim, const std::unordered_set<std::string>* keep,
                                              CurvatureWeighting weighting,
                                              std::vector<double>& seconds) {
  TrajectoryReader reader(path);
  if (reader.header().n_layers != layers || reader.header().dim != dim) {
    throw Error(ErrorCode::shape_mismatch,
                "trajectory dump has L=" + std::to_string(reader.header().n_layers) +
                    ", d=" + std::to_string(reader.header().dim) + " but the layer dump has L=" +
                    std::to_string(layers) + ", d=" + std::to_string(dim));
  }
  std::vector<CurvatureAccumulator> acc(layers, CurvatureAccumulator(weighting));
  std::vector<double> compute(layers, 0.0);
  double io = 0.0;
  Matrix h;
  while (true) {
    const auto read_start = Clock::now();
    std::optional<TrajectoryRecord> record = reader.next();
    io += seconds_since(read_start);
    if (!record) break;
    if (keep && !keep->contains(record->sample_id)) continue;
    for (std::size_t l = 0; l < layers; ++l) {
      const auto start = Clock::now();
      h = record->layers[l].cast<double>();
      acc[l].add(h);
      compute[l] += seconds_since(start);
    }
  }
  std::vector<CurvatureSummary> out;
  out.reserve(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    out.push_back(acc[l].finish());
    seconds[l] = compute[l] + io / static_cast<double>(layers);
  }
  return out;
}

}  // namespace

std::vector<CriterionSeries> criterion_sweep(const LayerDump& dump,
                                             const std::optional<std::filesystem::path>& trajectories,
                                             std::span<const SampleMeta> meta,
                                             const std::set<CriterionName>& names,
                                             const SweepConfig& config) {
  if (names.empty()) throw Error(ErrorCode::invalid_argument, "no criteria requested");
  const std::size_t layers = dump.n_layers();
  const std::size_t n = dump.n_samples();

  bool want_probe = false;
  for (CriterionName name : names) {
    if (needs_labels(name) && meta.empty()) {
      throw Error(ErrorCode::missing_input,
                  "labels required: " + std::string(to_string(name)) + " needs sample metadata");
    }
    want_probe = want_probe || needs_labels(name);
  }
  if (names.contains(CriterionName::curvature) && !trajectories) {
    throw Error(ErrorCode::missing_input, "curvature requires a trajectory dump");
  }
  if (!meta.empty() && meta.size() != n) {
    throw Error(ErrorCode::count_mismatch, "metadata has " + std::to_string(meta.size()) +
                                               " records but the dump has " + std::to_string(n) +
                                               " samples");
  }

  const bool use_all = meta.empty() || config.subset == GeometrySubset::all;
  std::vector<std::size_t> geometry_rows;
  if (use_all) {
    geometry_rows.resize(n);
    for (std::size_t i = 0; i < n; ++i) geometry_rows[i] = i;
  } else {
    geometry_rows = rows_in(meta, {Split::train, Split::val});
  }
  if (geometry_rows.empty()) {
    throw Error(ErrorCode::invalid_split, "no samples in the training or validation split");
  }

  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> val_rows;
  std::vector<int> y_train;
  std::vector<int> y_val;
  if (want_probe) {
    train_rows = rows_in(meta, {Split::train});
    val_rows = rows_in(meta, {Split::val});
    if (train_rows.empty() || val_rows.empty()) {
      throw Error(ErrorCode::invalid_split, "probe criteria need non-empty train and val splits");
    }
    y_train = labels_at(meta, train_rows);
    y_val = labels_at(meta, val_rows);
  }

  std::vector<CriterionSeries> out;
  auto slot = [&](CriterionName name) -> CriterionSeries* {
    for (auto& s : out) {
      if (s.name == name) return &s;
    }
    return nullptr;
  };
  for (CriterionName name : names) out.push_back(empty_series(name, layers));

  const bool want_id = names.contains(CriterionName::id) || names.contains(CriterionName::fepoid);
  const bool want_geometry = want_id || names.contains(CriterionName::rankme);

  for (std::size_t l = 1; l <= layers; ++l) {
    const std::size_t i = l - 1;
    if (want_geometry) {
      const Matrix z = dump.layer_matrix(l, geometry_rows);
      if (CriterionSeries* s = slot(CriterionName::rankme)) {
        const auto start = Clock::now();
        s->values[i] = rankme(z, config.rankme_epsilon);
        s->seconds[i] = seconds_since(start);
      }
      if (want_id) {
        const auto start = Clock::now();
        const double d_id = twonn(z, config.discard_fraction).d_id;
        const double elapsed = seconds_since(start);
        for (CriterionName name : {CriterionName::id, CriterionName::fepoid}) {
          if (CriterionSeries* s = slot(name)) {
            s->values[i] = d_id;
            s->seconds[i] = elapsed;
          }
        }
      }
    }

    if (want_probe) {
      const Matrix x_train = dump.layer_matrix(l, train_rows);
      const Matrix x_val = dump.layer_matrix(l, val_rows);
      ProbeConfig pc = config.probe;
      pc.seed = config.probe.seed + l;

      std::optional<ProbeModel> snapshot;
      const std::size_t snapshot_epoch = config.gradient_point == GradientPoint::init ? 0 : 1;
      EpochObserver observer;
      if (config.gradient_point != GradientPoint::best) {
        observer = [&](std::size_t epoch, const ProbeModel& current) {
          if (epoch == snapshot_epoch) snapshot = current;
        };
      }
      const auto train_start = Clock::now();
      TrainResult trained = train_probe(x_train, y_train, x_val, y_val, pc, observer);
      const double train_seconds = seconds_since(train_start);
      const ProbeModel& at = snapshot ? *snapshot : trained.model;

      if (CriterionSeries* s = slot(CriterionName::val_loss)) {
        s->values[i] = trained.model.best_val_loss;
        s->seconds[i] = train_seconds;
      }
      if (CriterionSeries* s = slot(CriterionName::rgn)) {
        const auto start = Clock::now();
        s->values[i] = rgn(at, x_val, y_val);
        s->seconds[i] = train_seconds + seconds_since(start);
      }
      if (CriterionSeries* s = slot(CriterionName::snr)) {
        const auto start = Clock::now();
        s->values[i] = snr(at, x_val, y_val);
        s->seconds[i] = train_seconds + seconds_since(start);
      }
    }
  }

  if (CriterionSeries* s = slot(CriterionName::curvature)) {
    std::unordered_set<std::string> keep;
    if (!use_all) {
      for (std::size_t r : geometry_rows) keep.insert(meta[r].id);
    }
    const std::vector<CurvatureSummary> summaries =
        sweep_curvature(*trajectories, layers, dump.dim(), use_all ? nullptr : &keep,
                        config.curvature_weighting, s->seconds);
    for (std::size_t i = 0; i < layers; ++i) s->values[i] = summaries[i].value;
  }

  for (auto& s : out) {
    for (std::size_t i = 0; i < layers; ++i) require_finite_value(s.name, i + 1, s.values[i]);
    if (!config.record_timing) s.seconds.assign(layers, 0.0);
  }
  return out;
}

}  // namespace layerscope
