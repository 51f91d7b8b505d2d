#pragma once

#include "layerscope/criteria.hpp"
#include "layerscope/fepoid.hpp"
#include "layerscope/fst.hpp"
#include "layerscope/probe.hpp"
#include "layerscope/synth.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace layerscope::cli {

namespace fs = std::filesystem;

struct ProbeOptions {
  std::string arch = "mlp";
  std::size_t hidden = 256;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 50;
  std::size_t patience = 5;
  std::optional<double> l2;  ///< arch default when unset

  ProbeConfig config(std::uint64_t seed) const;
};

struct CriteriaOptions {
  fs::path dump;
  std::optional<fs::path> traj;
  std::optional<fs::path> meta;
  fs::path out;
  std::uint64_t seed = 42;
  std::vector<std::string> names{"rankme", "id", "fepoid"};
  double discard_fraction = 0.1;
  double rankme_eps = kRankMeEpsilon;
  std::string grad_point = "epoch1";
  std::string subset = "train_val";
  std::string weighting = "uniform";
  std::size_t w = kDefaultHorizon;
  std::string fixture;  ///< timing column name; dump file stem when empty
  bool timing = true;
  ProbeOptions probe;
};

struct SelectOptions {
  fs::path series;
  std::string method = "fepoid";
  std::size_t w = kDefaultHorizon;
  std::optional<fs::path> out;
};

struct ProbeRunOptions {
  fs::path dump;
  fs::path meta;
  fs::path out;
  std::size_t layer = 1;
  std::uint64_t seed = 42;
  ProbeOptions probe;
};

struct SweepOptions {
  fs::path dump;
  fs::path meta;
  fs::path out;
  std::uint64_t seed = 42;
  ProbeOptions probe;
};

struct FstOptions {
  fs::path in;
  std::optional<fs::path> rules;
  std::optional<fs::path> out;
  std::optional<fs::path> summary;
};

struct SynthOptions {
  SynthSpec spec;
  fs::path out;  ///< directory receiving dump.lhsd, dump.meta.jsonl and traj.lhtd
};

struct SeparabilityOptions {
  fs::path dump;
  fs::path meta;
  std::size_t layer = 1;
  std::vector<std::string> splits{"train", "val", "test"};
  std::optional<std::size_t> cap;
  std::uint64_t seed = 42;
  std::optional<fs::path> out;
};

struct TimingOptions {
  std::vector<fs::path> inputs;
  fs::path out;
};

/// Each command writes its artifacts, returns normally on success and throws
/// layerscope::Error otherwise.
void cmd_criteria(const CriteriaOptions& options);
std::string cmd_select(const SelectOptions& options);
void cmd_probe(const ProbeRunOptions& options);
void cmd_sweep(const SweepOptions& options);
FstSummary cmd_fst(const FstOptions& options);
void cmd_synth(const SynthOptions& options);
std::string cmd_separability(const SeparabilityOptions& options);
void cmd_timing(const TimingOptions& options);

/// Series CSV with a header and columns layer, value[, seconds].
std::vector<double> read_series_csv(const fs::path& path);

struct SweepRow {
  std::size_t layer = 0;
  double best_val_loss = 0.0;
  double test_auroc = 0.0;
};

std::vector<SweepRow> read_sweep_csv(const fs::path& path);

/// Parses arguments and dispatches; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace layerscope::cli
