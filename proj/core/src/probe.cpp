#include "layerscope/probe.hpp"

#include "layerscope/random.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>

namespace layerscope {

namespace {

constexpr double kScaleFloor = 1e-8;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEpsilon = 1e-8;
constexpr std::uint32_t kProbeVersion = 1;

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Binary cross-entropy on a logit, log(1 + e^z) - y z.
double bce_with_logit(double z, int y) {
  return std::max(z, 0.0) - static_cast<double>(y) * z + std::log1p(std::exp(-std::abs(z)));
}

using ConstMatrixMap = Eigen::Map<const Matrix>;

struct MlpView {
  ConstMatrixMap w1;
  Eigen::Map<const Eigen::VectorXd> b1;
  Eigen::Map<const Eigen::VectorXd> w2;
  double b2;
};

MlpView mlp_view(const ProbeModel& p) {
  const auto h = static_cast<Eigen::Index>(p.hidden_dim);
  const auto d = static_cast<Eigen::Index>(p.input_dim);
  const double* base = p.params.data();
  return {ConstMatrixMap(base, h, d), Eigen::Map<const Eigen::VectorXd>(base + h * d, h),
          Eigen::Map<const Eigen::VectorXd>(base + h * d + h, h), base[h * d + 2 * h]};
}

void check_labels(std::span<const int> y) {
  for (int label : y) {
    if (label != 0 && label != 1) {
      throw Error(ErrorCode::invalid_label, "labels must be 0 or 1, got " + std::to_string(label));
    }
  }
}

void check_inputs(const ProbeModel& p, const Matrix& x, std::span<const int> y) {
  if (static_cast<std::size_t>(x.cols()) != p.input_dim) {
    throw Error(ErrorCode::shape_mismatch, "probe expects " + std::to_string(p.input_dim) +
                                               " features, got " + std::to_string(x.cols()));
  }
  if (static_cast<std::size_t>(x.rows()) != y.size()) {
    throw Error(ErrorCode::shape_mismatch, "feature rows and label count differ");
  }
  check_labels(y);
}

/// Logits for already-standardised rows; the hidden pre-activations are
/// returned through `pre` for the MLP.
Eigen::VectorXd logits_standardized(const ProbeModel& p, const Matrix& xs, Matrix* pre = nullptr) {
  if (p.arch == ProbeArch::linear) {
    const auto d = static_cast<Eigen::Index>(p.input_dim);
    Eigen::Map<const Eigen::VectorXd> w(p.params.data(), d);
    return (xs * w).array() + p.params[d];
  }
  const MlpView m = mlp_view(p);
  Matrix hidden = xs * m.w1.transpose();
  hidden.rowwise() += m.b1.transpose();
  if (pre != nullptr) *pre = hidden;
  hidden = hidden.cwiseMax(0.0);
  return (hidden * m.w2).array() + m.b2;
}

/// Mean-loss gradient for standardised rows.
Eigen::VectorXd batch_gradient(const ProbeModel& p, const Matrix& xs, std::span<const int> y,
                               double* loss_out) {
  const auto n = static_cast<double>(xs.rows());
  Matrix pre;
  const Eigen::VectorXd z = logits_standardized(p, xs, &pre);
  Eigen::VectorXd r(z.size());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    r[i] = sigmoid(z[i]) - static_cast<double>(y[static_cast<std::size_t>(i)]);
    loss += bce_with_logit(z[i], y[static_cast<std::size_t>(i)]);
  }
  if (loss_out != nullptr) *loss_out = loss / n;

  Eigen::VectorXd g(p.params.size());
  const auto d = static_cast<Eigen::Index>(p.input_dim);
  if (p.arch == ProbeArch::linear) {
    g.head(d) = xs.transpose() * r / n;
    g[d] = r.sum() / n;
    return g;
  }
  const auto h = static_cast<Eigen::Index>(p.hidden_dim);
  const MlpView m = mlp_view(p);
  const Matrix hidden = pre.cwiseMax(0.0);
  Matrix dh = r * m.w2.transpose();
  dh = dh.cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
  Eigen::Map<Matrix> gw1(g.data(), h, d);
  gw1 = dh.transpose() * xs / n;
  g.segment(h * d, h) = dh.colwise().sum().transpose() / n;
  g.segment(h * d + h, h) = hidden.transpose() * r / n;
  g[h * d + 2 * h] = r.sum() / n;
  return g;
}

/// 1 for weight entries, 0 for biases; l2 applies to weights only.
Eigen::VectorXd weight_mask(const ProbeModel& p) {
  Eigen::VectorXd mask = Eigen::VectorXd::Zero(p.params.size());
  const auto d = static_cast<Eigen::Index>(p.input_dim);
  if (p.arch == ProbeArch::linear) {
    mask.head(d).setOnes();
  } else {
    const auto h = static_cast<Eigen::Index>(p.hidden_dim);
    mask.head(h * d).setOnes();
    mask.segment(h * d + h, h).setOnes();
  }
  return mask;
}

void init_params(ProbeModel& p, Rng& rng) {
  const double in_bound = 1.0 / std::sqrt(static_cast<double>(p.input_dim));
  if (p.arch == ProbeArch::linear) {
    for (Eigen::Index k = 0; k < p.params.size(); ++k) p.params[k] = rng.uniform(-in_bound, in_bound);
    return;
  }
  const auto h = static_cast<Eigen::Index>(p.hidden_dim);
  const auto d = static_cast<Eigen::Index>(p.input_dim);
  const double out_bound = 1.0 / std::sqrt(static_cast<double>(p.hidden_dim));
  for (Eigen::Index k = 0; k < h * d + h; ++k) p.params[k] = rng.uniform(-in_bound, in_bound);
  for (Eigen::Index k = h * d + h; k < p.params.size(); ++k) {
    p.params[k] = rng.uniform(-out_bound, out_bound);
  }
}

double mean_loss_standardized(const ProbeModel& p, const Matrix& xs, std::span<const int> y) {
  const Eigen::VectorXd z = logits_standardized(p, xs);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    loss += bce_with_logit(z[i], y[static_cast<std::size_t>(i)]);
  }
  return loss / static_cast<double>(z.size());
}

template <typename T>
void put(std::ostream& out, T value) {
  std::uint8_t bytes[sizeof(T)];
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
  const auto bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<std::uint8_t>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  std::uint8_t bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw Error(ErrorCode::truncated, path + ": truncated probe file");
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(bytes[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

}  // namespace

std::string_view to_string(ProbeArch arch) noexcept {
  return arch == ProbeArch::mlp ? "mlp" : "linear";
}

ProbeArch parse_probe_arch(std::string_view token) {
  if (token == "mlp") return ProbeArch::mlp;
  if (token == "linear") return ProbeArch::linear;
  throw Error(ErrorCode::invalid_argument, "unknown probe architecture '" + std::string(token) + "'");
}

ProbeConfig ProbeConfig::defaults(ProbeArch arch) {
  ProbeConfig config;
  config.arch = arch;
  config.l2 = arch == ProbeArch::linear ? 1e-4 : 0.0;
  return config;
}

Standardizer Standardizer::fit(const Matrix& x) {
  if (x.rows() == 0 || x.cols() == 0) {
    throw Error(ErrorCode::empty_input, "cannot fit a standardizer on an empty matrix");
  }
  Standardizer s;
  s.mean = x.colwise().mean();
  const Matrix centered = x.rowwise() - s.mean;
  s.scale = (centered.colwise().squaredNorm() / static_cast<double>(x.rows())).cwiseSqrt();
  for (Eigen::Index j = 0; j < s.scale.size(); ++j) {
    if (s.scale[j] < kScaleFloor) s.scale[j] = 1.0;
  }
  return s;
}

Standardizer Standardizer::identity(std::size_t dim) {
  Standardizer s;
  s.mean = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(dim));
  s.scale = Eigen::RowVectorXd::Ones(static_cast<Eigen::Index>(dim));
  return s;
}

Matrix Standardizer::apply(const Matrix& x) const {
  if (x.cols() != mean.size()) {
    throw Error(ErrorCode::shape_mismatch, "standardizer fitted on " + std::to_string(mean.size()) +
                                               " features, got " + std::to_string(x.cols()));
  }
  Matrix out = x.rowwise() - mean;
  out.array().rowwise() /= scale.array();
  return out;
}

std::size_t ProbeModel::parameter_count(ProbeArch arch, std::size_t input_dim,
                                        std::size_t hidden_dim) noexcept {
  if (arch == ProbeArch::linear) return input_dim + 1;
  return hidden_dim * input_dim + 2 * hidden_dim + 1;
}

ProbeModel ProbeModel::zeros(ProbeArch arch, std::size_t input_dim, std::size_t hidden_dim) {
  ProbeModel p;
  p.arch = arch;
  p.input_dim = input_dim;
  p.hidden_dim = arch == ProbeArch::linear ? 0 : hidden_dim;
  p.params = Eigen::VectorXd::Zero(
      static_cast<Eigen::Index>(parameter_count(arch, input_dim, p.hidden_dim)));
  p.standardizer = Standardizer::identity(input_dim);
  return p;
}

TrainResult train_probe(const Matrix& x_train, std::span<const int> y_train, const Matrix& x_val,
                        std::span<const int> y_val, const ProbeConfig& config,
                        const EpochObserver& observer) {
  if (x_train.rows() == 0 || x_val.rows() == 0) {
    throw Error(ErrorCode::empty_input, "training and validation splits must be non-empty");
  }
  if (static_cast<std::size_t>(x_train.rows()) != y_train.size() ||
      static_cast<std::size_t>(x_val.rows()) != y_val.size()) {
    throw Error(ErrorCode::shape_mismatch, "feature rows and label count differ");
  }
  if (x_train.cols() != x_val.cols()) {
    throw Error(ErrorCode::shape_mismatch, "training and validation widths differ");
  }
  check_labels(y_train);
  check_labels(y_val);
  const auto positives = std::count(y_train.begin(), y_train.end(), 1);
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(y_train.size())) {
    throw Error(ErrorCode::single_class, "training split contains a single class");
  }
  if (config.batch_size == 0 || config.max_epochs == 0 || !(config.learning_rate > 0.0) ||
      config.l2 < 0.0 || (config.arch == ProbeArch::mlp && config.hidden_dim == 0)) {
    throw Error(ErrorCode::invalid_argument, "invalid probe configuration");
  }
  if (!x_train.allFinite() || !x_val.allFinite()) {
    throw Error(ErrorCode::non_finite, "probe inputs contain NaN or Inf");
  }

  ProbeModel model = ProbeModel::zeros(config.arch, static_cast<std::size_t>(x_train.cols()),
                                       config.hidden_dim);
  model.standardizer = Standardizer::fit(x_train);
  const Matrix xs_train = model.standardizer.apply(x_train);
  const Matrix xs_val = model.standardizer.apply(x_val);

  Rng rng(config.seed);
  init_params(model, rng);
  if (observer) observer(0, model);

  const Eigen::VectorXd mask = weight_mask(model);
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(model.params.size());
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(model.params.size());
  std::size_t step = 0;

  std::vector<std::size_t> order(static_cast<std::size_t>(xs_train.rows()));
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  Eigen::VectorXd best_params = model.params;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  Matrix xb;
  std::vector<int> yb;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t count = std::min(config.batch_size, order.size() - start);
      xb.resize(static_cast<Eigen::Index>(count), xs_train.cols());
      yb.resize(count);
      for (std::size_t k = 0; k < count; ++k) {
        xb.row(static_cast<Eigen::Index>(k)) = xs_train.row(static_cast<Eigen::Index>(order[start + k]));
        yb[k] = y_train[order[start + k]];
      }
      double batch_loss = 0.0;
      Eigen::VectorXd g = batch_gradient(model, xb, yb, &batch_loss);
      if (config.l2 > 0.0) g += config.l2 * mask.cwiseProduct(model.params);
      if (!std::isfinite(batch_loss) || !g.allFinite()) {
        throw Error(ErrorCode::non_finite, "non-finite training loss at epoch " +
                                               std::to_string(epoch) + ", batch " +
                                               std::to_string(batch_index));
      }
      epoch_loss += batch_loss * static_cast<double>(count);

      ++step;
      m1 = kAdamBeta1 * m1 + (1.0 - kAdamBeta1) * g;
      m2 = kAdamBeta2 * m2 + (1.0 - kAdamBeta2) * g.cwiseAbs2();
      const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
      model.params.array() -= config.learning_rate * (m1.array() / c1) /
                              ((m2.array() / c2).sqrt() + kAdamEpsilon);
    }
    const double val_loss = mean_loss_standardized(model, xs_val, y_val);
    if (!std::isfinite(val_loss)) {
      throw Error(ErrorCode::non_finite,
                  "non-finite validation loss at epoch " + std::to_string(epoch));
    }
    result.report.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    result.report.val_loss.push_back(val_loss);
    if (observer) observer(epoch, model);

    if (val_loss < best_loss) {
      best_loss = val_loss;
      best_params = model.params;
      result.report.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      result.report.stopped_early = epoch < config.max_epochs;
      break;
    }
  }

  model.params = std::move(best_params);
  model.best_epoch = result.report.best_epoch;
  model.best_val_loss = best_loss;
  result.model = std::move(model);
  return result;
}

Eigen::VectorXd decision_function(const ProbeModel& probe, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != probe.input_dim) {
    throw Error(ErrorCode::shape_mismatch, "probe expects " + std::to_string(probe.input_dim) +
                                               " features, got " + std::to_string(x.cols()));
  }
  return logits_standardized(probe, probe.standardizer.apply(x));
}

Eigen::VectorXd predict(const ProbeModel& probe, const Matrix& x) {
  constexpr double lo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  return decision_function(probe, x).unaryExpr([&](double z) {
    return std::clamp(sigmoid(z), lo, hi);
  });
}

double mean_loss(const ProbeModel& probe, const Matrix& x, std::span<const int> y) {
  check_inputs(probe, x, y);
  if (x.rows() == 0) throw Error(ErrorCode::empty_input, "mean_loss on an empty set");
  return mean_loss_standardized(probe, probe.standardizer.apply(x), y);
}

Eigen::VectorXd loss_gradient(const ProbeModel& probe, const Matrix& x, std::span<const int> y) {
  check_inputs(probe, x, y);
  if (x.rows() == 0) throw Error(ErrorCode::empty_input, "loss_gradient on an empty set");
  return batch_gradient(probe, probe.standardizer.apply(x), y, nullptr);
}

void for_each_example_gradient(
    const ProbeModel& probe, const Matrix& x, std::span<const int> y,
    const std::function<void(std::size_t, const Eigen::VectorXd&)>& callback) {
  check_inputs(probe, x, y);
  const Matrix xs = probe.standardizer.apply(x);
  Matrix pre;
  const Eigen::VectorXd z = logits_standardized(probe, xs, &pre);
  const auto d = static_cast<Eigen::Index>(probe.input_dim);
  Eigen::VectorXd g(probe.params.size());
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    const double r = sigmoid(z[i]) - static_cast<double>(y[static_cast<std::size_t>(i)]);
    if (probe.arch == ProbeArch::linear) {
      g.head(d) = r * xs.row(i).transpose();
      g[d] = r;
    } else {
      const auto h = static_cast<Eigen::Index>(probe.hidden_dim);
      const MlpView m = mlp_view(probe);
      const Eigen::VectorXd pre_i = pre.row(i).transpose();
      const Eigen::VectorXd dh =
          (r * m.w2).cwiseProduct((pre_i.array() > 0.0).cast<double>().matrix());
      Eigen::Map<Matrix> gw1(g.data(), h, d);
      gw1.noalias() = dh * xs.row(i);
      g.segment(h * d, h) = dh;
      g.segment(h * d + h, h) = r * pre_i.cwiseMax(0.0);
      g[h * d + 2 * h] = r;
    }
    if (!g.allFinite()) {
      throw Error(ErrorCode::non_finite,
                  "non-finite gradient for example " + std::to_string(i));
    }
    callback(static_cast<std::size_t>(i), g);
  }
}

Matrix per_example_gradients(const ProbeModel& probe, const Matrix& x, std::span<const int> y) {
  Matrix out(x.rows(), probe.params.size());
  for_each_example_gradient(probe, x, y, [&](std::size_t i, const Eigen::VectorXd& g) {
    out.row(static_cast<Eigen::Index>(i)) = g.transpose();
  });
  return out;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorCode::shape_mismatch, "auroc: scores and labels differ in length");
  }
  check_labels(labels);
  std::size_t n_pos = 0;
  for (int l : labels) n_pos += static_cast<std::size_t>(l);
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw Error(ErrorCode::single_class, "auroc needs both classes");
  }
  for (double s : scores) {
    if (std::isnan(s)) throw Error(ErrorCode::non_finite, "auroc: NaN score");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Midranks are multiples of 1/2, so the rank sum below is exact.
  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) positive_rank_sum += midrank;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos);
  const double u = positive_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

void save_probe(const std::filesystem::path& path, const ProbeModel& probe) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open " + path.string() + " for writing");
  out.write("LHPM", 4);
  put<std::uint32_t>(out, kProbeVersion);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(probe.arch));
  for (int k = 0; k < 3; ++k) put<std::uint8_t>(out, 0);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(probe.input_dim));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(probe.hidden_dim));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(probe.params.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(probe.best_epoch));
  put<float>(out, static_cast<float>(probe.best_val_loss));
  for (double v : probe.params) put<float>(out, static_cast<float>(v));
  for (double v : probe.standardizer.mean) put<float>(out, static_cast<float>(v));
  for (double v : probe.standardizer.scale) put<float>(out, static_cast<float>(v));
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

ProbeModel load_probe(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  const std::string name = path.string();
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "LHPM", 4) != 0) {
    throw Error(ErrorCode::bad_magic, name + ": not a probe model file");
  }
  if (get<std::uint32_t>(in, name) != kProbeVersion) {
    throw Error(ErrorCode::unsupported_version, name + ": unsupported probe version");
  }
  const auto arch = get<std::uint8_t>(in, name);
  if (arch > 1) throw Error(ErrorCode::malformed, name + ": unknown probe architecture");
  for (int k = 0; k < 3; ++k) get<std::uint8_t>(in, name);
  ProbeModel p;
  p.arch = static_cast<ProbeArch>(arch);
  p.input_dim = get<std::uint32_t>(in, name);
  p.hidden_dim = get<std::uint32_t>(in, name);
  const auto n_params = get<std::uint64_t>(in, name);
  if (n_params != ProbeModel::parameter_count(p.arch, p.input_dim, p.hidden_dim)) {
    throw Error(ErrorCode::malformed, name + ": parameter count does not match dimensions");
  }
  p.best_epoch = get<std::uint32_t>(in, name);
  p.best_val_loss = get<float>(in, name);
  p.params.resize(static_cast<Eigen::Index>(n_params));
  for (auto& v : p.params) v = get<float>(in, name);
  p.standardizer = Standardizer::identity(p.input_dim);
  for (auto& v : p.standardizer.mean) v = get<float>(in, name);
  for (auto& v : p.standardizer.scale) v = get<float>(in, name);
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorCode::malformed, name + ": trailing bytes after probe payload");
  }
  if (!p.params.allFinite()) throw Error(ErrorCode::non_finite, name + ": non-finite parameter");
  return p;
}

void write_train_report(const std::filesystem::path& path, const TrainReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open " + path.string() + " for writing");
  out << "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < report.val_loss.size(); ++e) {
    out << (e + 1) << ',' << format_number(report.train_loss[e]) << ','
        << format_number(report.val_loss[e]) << '\n';
  }
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

}  // namespace layerscope
