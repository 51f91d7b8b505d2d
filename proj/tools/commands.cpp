#include "commands.hpp"

#include "layerscope/dumpio.hpp"
#include "layerscope/fst.hpp"
#include "layerscope/parallel.hpp"
#include "layerscope/separability.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace layerscope::cli {

namespace {

using ordered_json = nlohmann::ordered_json;

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out = open_output(path);
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
  if (!out) throw Error(ErrorCode::io, "failed writing " + path.string());
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& text, const fs::path& path, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::malformed, path.string() + ":" + std::to_string(line) +
                                          ": not a number: '" + text + "'");
  }
}

std::vector<int> labels_at(std::span<const SampleMeta> meta, std::span<const std::size_t> rows) {
  std::vector<int> y;
  y.reserve(rows.size());
  for (std::size_t r : rows) y.push_back(meta[r].label);
  return y;
}

bool has_both_classes(std::span<const int> y) {
  const auto pos = std::count(y.begin(), y.end(), 1);
  return pos > 0 && pos < static_cast<std::ptrdiff_t>(y.size());
}

struct Splits {
  std::vector<std::size_t> train, val, test;
};

Splits require_splits(std::span<const SampleMeta> meta) {
  Splits s{rows_in(meta, {Split::train}), rows_in(meta, {Split::val}), rows_in(meta, {Split::test})};
  if (s.train.empty() || s.val.empty() || s.test.empty()) {
    throw Error(ErrorCode::invalid_split, "probing needs non-empty train, val and test splits");
  }
  return s;
}

std::string fixture_name(const CriteriaOptions& o) {
  if (!o.fixture.empty()) return o.fixture;
  std::string stem = o.dump.filename().string();
  const auto dot = stem.find('.');
  return dot == std::string::npos ? stem : stem.substr(0, dot);
}

struct ProbeOutcome {
  TrainResult trained;
  double test_auroc = 0.0;
};

ProbeOutcome probe_layer(const LayerDump& dump, std::span<const SampleMeta> meta, const Splits& splits,
                         std::size_t layer, const ProbeConfig& config) {
  const std::vector<int> y_train = labels_at(meta, splits.train);
  const std::vector<int> y_val = labels_at(meta, splits.val);
  const std::vector<int> y_test = labels_at(meta, splits.test);
  if (!has_both_classes(y_test)) {
    throw Error(ErrorCode::single_class, "test split needs both classes to compute AUROC");
  }
  ProbeOutcome outcome{train_probe(dump.layer_matrix(layer, splits.train), y_train,
                                   dump.layer_matrix(layer, splits.val), y_val, config),
                       0.0};
  const Eigen::VectorXd scores = decision_function(outcome.trained.model, dump.layer_matrix(layer, splits.test));
  outcome.test_auroc = auroc(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())), y_test);
  return outcome;
}

}  // namespace

ProbeConfig ProbeOptions::config(std::uint64_t seed) const {
  ProbeConfig c = ProbeConfig::defaults(parse_probe_arch(arch));
  c.hidden_dim = hidden;
  c.learning_rate = learning_rate;
  c.batch_size = batch_size;
  c.max_epochs = epochs;
  c.patience = patience;
  if (l2) c.l2 = *l2;
  c.seed = seed;
  return c;
}

void cmd_criteria(const CriteriaOptions& o) {
  const LayerDump dump = read_layer_dump(o.dump);
  std::vector<SampleMeta> meta;
  if (o.meta) meta = read_meta(*o.meta, dump.n_samples());

  std::set<CriterionName> names;
  for (const auto& n : o.names) names.insert(parse_criterion(n));
  if (o.w < 1) throw Error(ErrorCode::invalid_argument, "--w must be at least 1");

  SweepConfig config;
  config.rankme_epsilon = o.rankme_eps;
  config.discard_fraction = o.discard_fraction;
  config.gradient_point = parse_gradient_point(o.grad_point);
  if (o.subset == "train_val") {
    config.subset = GeometrySubset::train_val;
  } else if (o.subset == "all") {
    config.subset = GeometrySubset::all;
  } else {
    throw Error(ErrorCode::invalid_argument, "--subset must be train_val or all");
  }
  if (o.weighting == "uniform") {
    config.curvature_weighting = CurvatureWeighting::uniform;
  } else if (o.weighting == "length") {
    config.curvature_weighting = CurvatureWeighting::by_length;
  } else {
    throw Error(ErrorCode::invalid_argument, "--curvature-weighting must be uniform or length");
  }
  config.probe = o.probe.config(o.seed);
  config.record_timing = o.timing;

  const std::vector<CriterionSeries> series = criterion_sweep(dump, o.traj, meta, names, config);

  fs::create_directories(o.out);
  ordered_json summary;
  summary["dump"] = o.dump.filename().string();
  summary["n_samples"] = dump.n_samples();
  summary["n_layers"] = dump.n_layers();
  summary["dim"] = dump.dim();
  summary["subset"] = meta.empty() ? "all" : o.subset;
  summary["criteria"] = ordered_json::array();

  std::ostringstream timing;
  timing << "criterion," << fixture_name(o) << '\n';
  for (const auto& s : series) {
    std::ostringstream csv;
    csv << "layer,value,seconds\n";
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      csv << (i + 1) << ',' << format_number(s.values[i]) << ',' << format_number(s.seconds[i]) << '\n';
    }
    write_text(o.out / (std::string(to_string(s.name)) + ".csv"), csv.str());

    ordered_json entry;
    entry["name"] = to_string(s.name);
    entry["direction"] = to_string(s.direction);
    if (s.direction == Direction::peak_rule) {
      const PeakScan scan = fepoid_scan(s.values, o.w);
      write_text(o.out / "fepoid.json", to_json(scan));
      entry["w"] = o.w;
      entry["selected"] = scan.selected;
    } else {
      entry["selected"] = select_layer(s);
    }
    entry["values"] = s.values;
    entry["total_seconds"] = s.total_seconds();
    summary["criteria"].push_back(entry);
    timing << to_string(s.name) << ',' << format_number(s.total_seconds()) << '\n';
  }
  write_text(o.out / "summary.json", summary.dump(2));
  write_text(o.out / "timing.csv", timing.str());
}

std::vector<double> read_series_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open series file " + path.string());
  std::string line;
  std::vector<double> values;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv_line(line);
    if (!header_seen) {
      header_seen = true;
      if (cells.size() < 2 || cells[0] != "layer" || cells[1] != "value") {
        throw Error(ErrorCode::malformed, path.string() + ": expected header 'layer,value[,seconds]'");
      }
      continue;
    }
    if (cells.size() < 2) throw Error(ErrorCode::malformed, path.string() + ":" + std::to_string(line_no) + ": too few columns");
    const double layer = parse_double(cells[0], path, line_no);
    if (layer != static_cast<double>(values.size() + 1)) {
      throw Error(ErrorCode::malformed, path.string() + ":" + std::to_string(line_no) +
                                            ": layers must be listed as 1, 2, ..., L");
    }
    values.push_back(parse_double(cells[1], path, line_no));
  }
  if (values.empty()) throw Error(ErrorCode::empty_input, path.string() + ": empty series");
  return values;
}

std::string cmd_select(const SelectOptions& o) {
  const std::vector<double> values = read_series_csv(o.series);
  ordered_json j;
  j["method"] = o.method;
  if (o.method == "fepoid") {
    if (o.w < 1) throw Error(ErrorCode::invalid_argument, "--w must be at least 1");
    const PeakScan scan = fepoid_scan(values, o.w);
    j["w"] = o.w;
    j["selected"] = scan.selected;
    j["scan"] = ordered_json::parse(to_json(scan));
  } else if (o.method == "max") {
    j["selected"] = select_layer(values, Direction::maximize);
  } else if (o.method == "min") {
    j["selected"] = select_layer(values, Direction::minimize);
  } else {
    throw Error(ErrorCode::invalid_argument, "--method must be fepoid, max or min");
  }
  const std::string text = j.dump(2);
  if (o.out) write_text(*o.out, text);
  return text;
}

void cmd_probe(const ProbeRunOptions& o) {
  const LayerDump dump = read_layer_dump(o.dump);
  if (o.layer < 1 || o.layer > dump.n_layers()) {
    throw Error(ErrorCode::invalid_argument, "--layer must lie in [1, " + std::to_string(dump.n_layers()) + "]");
  }
  const std::vector<SampleMeta> meta = read_meta(o.meta, dump.n_samples());
  const Splits splits = require_splits(meta);
  const ProbeOutcome outcome = probe_layer(dump, meta, splits, o.layer, o.probe.config(o.seed + o.layer));

  fs::create_directories(o.out);
  save_probe(o.out / "probe.lhpm", outcome.trained.model);
  write_train_report(o.out / "train_report.csv", outcome.trained.report);
  ordered_json j;
  j["layer"] = o.layer;
  j["arch"] = to_string(outcome.trained.model.arch);
  j["best_epoch"] = outcome.trained.report.best_epoch;
  j["best_val_loss"] = outcome.trained.model.best_val_loss;
  j["stopped_early"] = outcome.trained.report.stopped_early;
  j["test_auroc"] = outcome.test_auroc;
  write_text(o.out / "metrics.json", j.dump(2));
}

void cmd_sweep(const SweepOptions& o) {
  const LayerDump dump = read_layer_dump(o.dump);
  const std::vector<SampleMeta> meta = read_meta(o.meta, dump.n_samples());
  const Splits splits = require_splits(meta);

  std::vector<SweepRow> rows;
  for (std::size_t l = 1; l <= dump.n_layers(); ++l) {
    const ProbeOutcome outcome = probe_layer(dump, meta, splits, l, o.probe.config(o.seed + l));
    rows.push_back({l, outcome.trained.model.best_val_loss, outcome.test_auroc});
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].test_auroc > rows[best].test_auroc) best = i;
  }
  std::ostringstream csv;
  csv << "layer,best_val_loss,test_auroc,star\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    csv << rows[i].layer << ',' << format_number(rows[i].best_val_loss) << ','
        << format_number(rows[i].test_auroc) << ',' << (i == best ? "*" : "") << '\n';
  }
  const fs::path target = o.out.extension() == ".csv" ? o.out : o.out / "sweep.csv";
  write_text(target, csv.str());
}

std::vector<SweepRow> read_sweep_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::string line;
  std::vector<SweepRow> rows;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    if (++line_no == 1 || line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() < 3) throw Error(ErrorCode::malformed, path.string() + ": too few columns");
    rows.push_back({static_cast<std::size_t>(parse_double(cells[0], path, line_no)),
                    parse_double(cells[1], path, line_no), parse_double(cells[2], path, line_no)});
  }
  return rows;
}

FstSummary cmd_fst(const FstOptions& o) {
  const ExceptionRules rules = o.rules ? ExceptionRules::load(*o.rules) : ExceptionRules{};
  std::ifstream in(o.in);
  if (!in) throw Error(ErrorCode::io, "cannot open " + o.in.string());
  const FstCorpusResult result = process_corpus(in, rules);
  if (o.out) {
    std::ofstream out = open_output(*o.out);
    write_fst_outputs(out, result.outputs);
  } else {
    write_fst_outputs(std::cout, result.outputs);
  }
  for (const auto& e : result.errors) {
    std::cerr << "fst: line " << e.line << (e.id.empty() ? "" : " (id " + e.id + ")") << ": "
              << e.message << '\n';
  }
  if (o.summary) write_text(*o.summary, summary_json(result.summary, result.errors));
  return result.summary;
}

void cmd_synth(const SynthOptions& o) {
  fs::create_directories(o.out);
  const std::optional<fs::path> traj =
      o.spec.traj_tokens > 0 ? std::optional<fs::path>(o.out / "traj.lhtd") : std::nullopt;
  write_synth(o.spec, o.out / "dump.lhsd", o.out / "dump.meta.jsonl", traj);
}

std::string cmd_separability(const SeparabilityOptions& o) {
  const LayerDump dump = read_layer_dump(o.dump);
  if (o.layer < 1 || o.layer > dump.n_layers()) {
    throw Error(ErrorCode::invalid_argument, "--layer must lie in [1, " + std::to_string(dump.n_layers()) + "]");
  }
  const std::vector<SampleMeta> meta = read_meta(o.meta, dump.n_samples());
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < meta.size(); ++i) {
    const auto name = std::string(to_string(meta[i].split));
    if (std::find(o.splits.begin(), o.splits.end(), name) != o.splits.end()) rows.push_back(i);
  }
  SilhouetteOptions sil;
  sil.cap = o.cap;
  sil.seed = o.seed;
  const SeparabilityReport report =
      separability(dump.layer_matrix(o.layer, rows), labels_at(meta, rows), sil);
  ordered_json j = ordered_json::parse(to_json(report));
  j["layer"] = o.layer;
  const std::string text = j.dump(2);
  if (o.out) write_text(*o.out, text);
  return text;
}

void cmd_timing(const TimingOptions& o) {
  if (o.inputs.empty()) throw Error(ErrorCode::missing_input, "no timing files given");
  std::vector<std::string> fixtures;
  std::vector<std::string> criteria;
  std::map<std::pair<std::string, std::string>, double> cells;
  for (const auto& path : o.inputs) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
    std::string line;
    std::vector<std::string> header;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto row = split_csv_line(line);
      if (header.empty()) {
        if (row.size() < 2 || row[0] != "criterion") {
          throw Error(ErrorCode::malformed, path.string() + ": expected header 'criterion,<fixture>...'");
        }
        header = row;
        for (std::size_t k = 1; k < row.size(); ++k) {
          if (std::find(fixtures.begin(), fixtures.end(), row[k]) == fixtures.end()) fixtures.push_back(row[k]);
        }
        continue;
      }
      if (std::find(criteria.begin(), criteria.end(), row[0]) == criteria.end()) criteria.push_back(row[0]);
      for (std::size_t k = 1; k < row.size() && k < header.size(); ++k) {
        if (!row[k].empty()) cells[{row[0], header[k]}] = parse_double(row[k], path, line_no);
      }
    }
  }
  std::ostringstream csv;
  csv << "criterion";
  for (const auto& f : fixtures) csv << ',' << f;
  csv << ",Avg\n";
  for (const auto& c : criteria) {
    csv << c;
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& f : fixtures) {
      csv << ',';
      if (auto it = cells.find({c, f}); it != cells.end()) {
        csv << format_number(it->second);
        sum += it->second;
        ++count;
      }
    }
    csv << ',' << (count ? format_number(sum / static_cast<double>(count)) : "") << '\n';
  }
  write_text(o.out, csv.str());
}

namespace {

void add_probe_flags(CLI::App* app, ProbeOptions& p) {
  app->add_option("--arch", p.arch, "Probe architecture")->check(CLI::IsMember({"mlp", "linear"}));
  app->add_option("--hidden", p.hidden, "Hidden units of the MLP probe");
  app->add_option("--lr", p.learning_rate, "Adam learning rate");
  app->add_option("--batch-size", p.batch_size, "Mini-batch size");
  app->add_option("--epochs", p.epochs, "Maximum training epochs");
  app->add_option("--patience", p.patience, "Epochs without improvement before stopping");
  app->add_option("--l2", p.l2, "L2 penalty on weights (default 0 for mlp, 1e-4 for linear)");
}

std::vector<std::size_t> parse_profile(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      out.push_back(static_cast<std::size_t>(std::stoul(cell)));
    } catch (const std::exception&) {
      throw Error(ErrorCode::invalid_argument, "--profile expects comma-separated integers");
    }
  }
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Per-layer criteria, layer selection and probing for hidden-state dumps", "layerscope"};
  app.require_subcommand(1);
  std::optional<std::size_t> threads;
  app.add_option("--threads", threads, "Worker cap (also LAYERSCOPE_THREADS)");

  CriteriaOptions crit;
  auto* c = app.add_subcommand("criteria", "Compute per-layer criterion series");
  c->add_option("--dump", crit.dump, "Layer dump (.lhsd)")->required();
  c->add_option("--traj", crit.traj, "Trajectory dump (.lhtd), needed for curvature");
  c->add_option("--meta", crit.meta, "Metadata sidecar (.meta.jsonl)");
  c->add_option("--out", crit.out, "Output directory")->required();
  c->add_option("--seed", crit.seed, "Probe seed base (layer l uses seed + l)");
  c->add_option("--names", crit.names, "Criteria: rankme curvature val_loss rgn snr id fepoid")->delimiter(',');
  c->add_option("--discard-fraction", crit.discard_fraction, "TwoNN discard fraction");
  c->add_option("--rankme-eps", crit.rankme_eps, "RankMe epsilon");
  c->add_option("--grad-point", crit.grad_point, "Where RGN/SNR gradients are measured")
      ->check(CLI::IsMember({"init", "epoch1", "best"}));
  c->add_option("--subset", crit.subset, "Samples for RankMe/curvature/ID")->check(CLI::IsMember({"train_val", "all"}));
  c->add_option("--curvature-weighting", crit.weighting, "Per-sample weights")->check(CLI::IsMember({"uniform", "length"}));
  c->add_option("--w", crit.w, "FEPoID forward horizon");
  c->add_option("--fixture", crit.fixture, "Column name in timing.csv");
  c->add_flag("!--no-timing", crit.timing, "Write zero seconds so reruns are byte-identical");
  add_probe_flags(c, crit.probe);

  SelectOptions sel;
  auto* s = app.add_subcommand("select", "Select a layer from a series CSV");
  s->add_option("--series", sel.series, "Series CSV (layer,value[,seconds])")->required();
  s->add_option("--method", sel.method, "Selection rule")->check(CLI::IsMember({"fepoid", "max", "min"}));
  s->add_option("--w", sel.w, "FEPoID forward horizon");
  s->add_option("--out", sel.out, "Selection JSON path (also printed)");

  ProbeRunOptions pr;
  auto* p = app.add_subcommand("probe", "Train a probe on one layer and report test AUROC");
  p->add_option("--dump", pr.dump, "Layer dump")->required();
  p->add_option("--meta", pr.meta, "Metadata sidecar")->required();
  p->add_option("--out", pr.out, "Output directory")->required();
  p->add_option("--layer", pr.layer, "Layer (1-based)")->required();
  p->add_option("--seed", pr.seed, "Seed base (the probe uses seed + layer)");
  add_probe_flags(p, pr.probe);

  SweepOptions sw;
  auto* w = app.add_subcommand("sweep", "Train a probe at every layer (oracle sweep)");
  w->add_option("--dump", sw.dump, "Layer dump")->required();
  w->add_option("--meta", sw.meta, "Metadata sidecar")->required();
  w->add_option("--out", sw.out, "Output directory or .csv path")->required();
  w->add_option("--seed", sw.seed, "Seed base (layer l uses seed + l)");
  add_probe_flags(w, sw.probe);

  FstOptions fo;
  auto* f = app.add_subcommand("fst", "First-sentence boundaries for JSONL records");
  f->add_option("--in", fo.in, "Input JSONL {id, text, offsets?}")->required();
  f->add_option("--rules", fo.rules, "Rules JSON overriding the defaults");
  f->add_option("--out", fo.out, "Output JSONL (stdout when omitted)");
  f->add_option("--summary", fo.summary, "Summary JSON path");

  SynthOptions sy;
  std::string profile;
  auto* y = app.add_subcommand("synth", "Write a synthetic dump, metadata and trajectories");
  y->add_option("--out", sy.out, "Output directory")->required();
  y->add_option("--layers", sy.spec.layers, "L");
  y->add_option("--samples", sy.spec.samples, "N");
  y->add_option("--dim", sy.spec.dim, "d");
  y->add_option("--signal-layer", sy.spec.signal_layer, "Layer carrying the label direction");
  y->add_option("--margin", sy.spec.margin, "Label shift along the signal direction");
  y->add_option("--profile", profile, "Latent dimension per layer, comma-separated");
  y->add_option("--noise", sy.spec.noise_sigma, "Isotropic noise standard deviation");
  y->add_option("--seed", sy.spec.seed, "Generator seed");
  y->add_option("--traj-tokens", sy.spec.traj_tokens, "Tokens per trajectory (0 = none)");
  y->add_option("--traj-samples", sy.spec.traj_samples, "Trajectory records (0 = all samples)");

  auto* r = app.add_subcommand("report", "Separability and timing reports");
  r->require_subcommand(1);
  SeparabilityOptions so;
  auto* rs = r->add_subcommand("separability", "Fisher separation and silhouette at one layer");
  rs->add_option("--dump", so.dump, "Layer dump")->required();
  rs->add_option("--meta", so.meta, "Metadata sidecar")->required();
  rs->add_option("--layer", so.layer, "Layer (1-based)")->required();
  rs->add_option("--splits", so.splits, "Splits to include")->delimiter(',');
  rs->add_option("--cap", so.cap, "Subsample silhouette to this many points");
  rs->add_option("--seed", so.seed, "Subsampling seed");
  rs->add_option("--out", so.out, "Report JSON path (also printed)");
  TimingOptions to;
  auto* rt = r->add_subcommand("timing", "Merge timing.csv files into a criterion x fixture table");
  rt->add_option("--in", to.inputs, "timing.csv files")->required();
  rt->add_option("--out", to.out, "Merged CSV")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (threads) set_thread_limit(*threads);
    if (*c) {
      cmd_criteria(crit);
    } else if (*s) {
      out << cmd_select(sel) << '\n';
    } else if (*p) {
      cmd_probe(pr);
    } else if (*w) {
      cmd_sweep(sw);
    } else if (*f) {
      cmd_fst(fo);
    } else if (*y) {
      if (!profile.empty()) sy.spec.id_profile = parse_profile(profile);
      cmd_synth(sy);
    } else if (*rs) {
      out << cmd_separability(so) << '\n';
    } else if (*rt) {
      cmd_timing(to);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace layerscope::cli
