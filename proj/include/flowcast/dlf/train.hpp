#pragma once

// Training loop, ratio prediction and history mixing for the ratio model.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "flowcast/baselines.hpp"
#include "flowcast/dlf/hs_tree.hpp"
#include "flowcast/dlf/model.hpp"
#include "flowcast/dlf/neighbors.hpp"
#include "flowcast/embeddings.hpp"
#include "flowcast/parallel.hpp"
#include "flowcast/rng.hpp"

namespace flowcast::dlf {

enum class Optimizer { sgd, adam };

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t epochs = 50;
  std::size_t batch_size = 256;
  std::size_t max_neighbors = 100;
  double mix = 0.8;  // weight of the history average in the final rows
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
  std::size_t min_test_snapshots = 2;
  std::size_t warmup_months = 3;
  int tree_depth = 3;
  std::size_t branching = 0;  // 0: ceil(N^(1/3))
  Objective objective = Objective::path_cross_entropy;
  Optimizer optimizer = Optimizer::sgd;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  DlfShape shape;  // feature_dim is taken from the embedding
  bool time_learnable = true;
  std::size_t grad_chunks = 8;
};

/// Snapshots [0, train_end) train; [train_end, T) test.
struct ChronologicalSplit {
  std::size_t train_end;
  std::size_t n_snapshots;
};

inline ChronologicalSplit chronological_split(std::size_t n_snapshots, double test_fraction,
                                              std::size_t min_test) {
  auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n_snapshots)));
  n_test = std::max(n_test, min_test);
  if (n_test >= n_snapshots) throw Error("series too short for a chronological split");
  return {n_snapshots - n_test, n_snapshots};
}

struct TrainingExample {
  NeighborSample sample;
  SparseRow target;
};

/// Active, non-cold-start senders of snapshots [t_begin, t_end).
inline std::vector<TrainingExample> collect_examples(const TemporalIndex& index, std::size_t t_begin,
                                                     std::size_t t_end, std::size_t k) {
  const auto& series = index.series();
  std::vector<TrainingExample> out;
  for (std::size_t t = t_begin; t < t_end; ++t) {
    const auto decomposition = decompose(series[t]);
    for (NodeId i = 0; i < series.n_nodes(); ++i) {
      if (!(decomposition.volume[i] > 0.0)) continue;
      auto sample = index.sample(i, t, k);
      if (sample.cold_start()) continue;
      auto row = decomposition.ratios.row(i);
      out.push_back({std::move(sample), SparseRow(row.begin(), row.end())});
    }
  }
  return out;
}

/// Destination representations for tree clustering: structural embedding
/// joined with the mean incoming edge-feature vector over [0, train_end).
/// Columns are standardised, then each block is scaled to unit total
/// variance so the wide embedding block does not drown the edge block.
inline MatrixXd label_representations(const SnapshotSeries& series, const MatrixXd& features, std::size_t train_end) {
  const auto n = static_cast<Eigen::Index>(series.n_nodes());
  const auto dx = features.cols();
  MatrixXd reps = MatrixXd::Zero(n, dx + static_cast<Eigen::Index>(kEdgeFeatureDim));
  reps.leftCols(dx) = features;
  std::vector<double> count(static_cast<std::size_t>(n), 0.0);
  for (std::size_t t = 0; t < std::min(train_end, series.size()); ++t) {
    const EdgeFeatureContext ctx(series[t].adjacency);
    for (NodeId i = 0; i < series.n_nodes(); ++i) {
      for (const auto& e : series[t].adjacency.row(i)) {
        const auto f = ctx(i, e.col);
        for (std::size_t c = 0; c < kEdgeFeatureDim; ++c) reps(e.col, dx + static_cast<Eigen::Index>(c)) += f[c];
        count[e.col] += 1.0;
      }
    }
  }
  for (Eigen::Index j = 0; j < n; ++j)
    if (count[static_cast<std::size_t>(j)] > 0.0) reps.row(j).tail(kEdgeFeatureDim) /= count[static_cast<std::size_t>(j)];
  for (Eigen::Index c = 0; c < reps.cols(); ++c) {
    const double mean = reps.col(c).mean();
    const double sd = std::sqrt((reps.col(c).array() - mean).square().mean());
    reps.col(c).array() -= mean;
    if (sd > 0.0) reps.col(c) /= sd;
  }
  if (dx > 0) reps.leftCols(dx) /= std::sqrt(static_cast<double>(dx));
  reps.rightCols(static_cast<Eigen::Index>(kEdgeFeatureDim)) /= std::sqrt(static_cast<double>(kEdgeFeatureDim));
  return reps;
}

/// Mean loss over `batch` (indices into `examples`), and the mean gradient
/// when `grad` is given. Partial sums are formed per fixed chunk and reduced
/// in chunk order.
inline double batch_gradient(const DlfParams& params, const MatrixXd& features,
                             std::span<const TrainingExample> examples, std::span<const std::size_t> batch,
                             Objective objective, DlfParams* grad, std::size_t chunks = 8) {
  if (batch.empty()) throw Error("empty minibatch");
  chunks = std::clamp<std::size_t>(chunks, 1, batch.size());
  std::vector<DlfParams> partial(grad ? chunks : 0, params.zeros_like());
  std::vector<double> losses(chunks, 0.0);
  flowcast::detail::parallel_chunks(batch.size(), chunks, [&](std::size_t c, std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) {
      const auto& ex = examples[batch[k]];
      const double l = sample_loss(params, features, ex.sample, ex.target, objective, grad ? &partial[c] : nullptr);
      if (!std::isfinite(l))
        throw Error("non-finite loss for sender " + std::to_string(ex.sample.target) + " at snapshot " +
                    std::to_string(ex.sample.t));
      losses[c] += l;
    }
  });
  double loss = 0.0;
  for (double l : losses) loss += l;
  const double inv = 1.0 / static_cast<double>(batch.size());
  if (grad) {
    *grad = params.zeros_like();
    for (const auto& p : partial) grad->axpy(inv, p);
    if (!params.time_learnable) {
      grad->time_frequency.setZero();
      grad->time_phase.setZero();
    }
  }
  return loss * inv;
}

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, std::vector<double> trace)
      : Error(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  std::vector<double> trace_;
};

struct TrainResult {
  DlfParams params;
  double initial_loss = 0.0;
  std::vector<double> loss_trace;  // mean minibatch loss per epoch
  std::size_t n_examples = 0;
  ChronologicalSplit split{};
};

inline double dataset_loss(const DlfParams& params, const MatrixXd& features,
                           std::span<const TrainingExample> examples, Objective objective, std::size_t chunks) {
  std::vector<std::size_t> all(examples.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return batch_gradient(params, features, examples, all, objective, nullptr, chunks);
}

/// Minibatch gradient descent on the ratio objective over the training
/// snapshots. Deterministic for a fixed seed.
inline TrainResult train(const SnapshotSeries& series, const TemporalIndex& index, const MatrixXd& features,
                         const TrainConfig& config) {
  if (series.size() < config.warmup_months + 2)
    throw Error("training needs at least warmup_months + 2 snapshots");
  if (config.mix < 0.0 || config.mix > 1.0) throw Error("mix ratio must be in [0, 1]");
  TrainResult result;
  result.split = chronological_split(series.size(), config.test_fraction, config.min_test_snapshots);
  const std::size_t t_begin = std::min(config.warmup_months, result.split.train_end - 1);
  const auto examples = collect_examples(index, std::max<std::size_t>(t_begin, 1), result.split.train_end,
                                         config.max_neighbors);
  if (examples.empty()) throw Error("no training examples (every sender is cold-start)");
  result.n_examples = examples.size();

  const std::size_t n = series.n_nodes();
  const std::size_t branching = config.branching ? config.branching : default_branching(n);
  HsTree tree = config.tree_depth == 1
                    ? flat_tree(n)
                    : build_hs_tree(label_representations(series, features, result.split.train_end),
                                    config.tree_depth, branching, config.seed);
  DlfShape shape = config.shape;
  shape.feature_dim = static_cast<std::size_t>(features.cols());
  DlfParams params = init_params(shape, std::move(tree), config.seed, config.time_learnable);

  result.initial_loss = dataset_loss(params, features, examples, config.objective, config.grad_chunks);
  DlfParams adam_m = params.zeros_like(), adam_v = params.zeros_like();
  std::size_t step = 0;
  Rng batching = Rng::stream(config.seed, "batching");
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch_size = std::max<std::size_t>(config.batch_size, 1);
  DlfParams grad;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    batching.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t b = 0; b < order.size(); b += batch_size) {
      const std::span<const std::size_t> batch(order.data() + b, std::min(batch_size, order.size() - b));
      double loss = 0.0;
      try {
        loss = batch_gradient(params, features, examples, batch, config.objective, &grad, config.grad_chunks);
      } catch (const Error& e) {
        throw TrainingDiverged(e.what(), result.loss_trace);
      }
      epoch_loss += loss;
      ++n_batches;
      ++step;
      if (config.optimizer == Optimizer::sgd) {
        params.axpy(-config.learning_rate, grad);
      } else {
        const double b1 = config.adam_beta1, b2 = config.adam_beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
        std::vector<double*> gm, gv;
        adam_m.visit([&](const char*, auto& t) { gm.push_back(t.data()); });
        adam_v.visit([&](const char*, auto& t) { gv.push_back(t.data()); });
        std::vector<const double*> gg;
        grad.visit([&](const char*, const auto& t) { gg.push_back(t.data()); });
        std::size_t k = 0;
        params.visit([&](const char*, auto& t) {
          double* m = gm[k];
          double* v = gv[k];
          const double* g = gg[k];
          ++k;
          for (Eigen::Index i = 0; i < t.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            t.data()[i] -= config.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + config.adam_epsilon);
          }
        });
      }
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(n_batches));
    if (!std::isfinite(result.loss_trace.back()) || !params.all_finite())
      throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch), result.loss_trace);
  }
  result.params = std::move(params);
  return result;
}

// ---------------------------------------------------------------------------
// Prediction

/// Raw model rows for snapshot t; senders without history are cold-start.
inline baselines::RatioPrediction predict_ratios(const DlfParams& params, const MatrixXd& features,
                                                 const TemporalIndex& index, std::size_t t, std::size_t k,
                                                 std::size_t chunks = 8) {
  const std::size_t n = index.series().n_nodes();
  baselines::RatioPrediction pred{SparseMatrix(n), std::vector<bool>(n, true)};
  std::vector<SparseRow> rows(n);
  std::vector<char> cold(n, 1);
  flowcast::detail::parallel_chunks(n, chunks, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto sample = index.sample(static_cast<NodeId>(i), t, k);
      if (sample.cold_start()) continue;
      const VectorXd prob = hsoftmax_prob(params, forward(params, features, sample));
      SparseRow row;
      for (Eigen::Index j = 0; j < prob.size(); ++j)
        if (prob(j) > 0.0) row.push_back({static_cast<NodeId>(j), prob(j)});
      rows[i] = std::move(row);
      cold[i] = 0;
    }
  });
  for (NodeId i = 0; i < n; ++i) {
    if (cold[i]) continue;
    pred.ratios.set_row(i, std::move(rows[i]));
    pred.cold_start[i] = false;
  }
  return pred;
}

struct MixResult {
  baselines::RatioPrediction prediction;
  std::size_t n_model_only = 0;
  std::size_t n_history_only = 0;
  std::size_t n_excluded = 0;  // neither source had a row
};

/// Final row = mix * history + (1 - mix) * model where both exist; falls back
/// to whichever exists otherwise.
inline MixResult mix_with_history(const baselines::RatioPrediction& model, const baselines::RatioPrediction& history,
                                  double mix) {
  if (mix < 0.0 || mix > 1.0) throw Error("mix ratio must be in [0, 1]");
  const std::size_t n = model.ratios.size();
  if (history.ratios.size() != n) throw DimensionError("mix_with_history: size mismatch");
  MixResult out{{SparseMatrix(n), std::vector<bool>(n, true)}, 0, 0, 0};
  for (NodeId i = 0; i < n; ++i) {
    const bool has_model = !model.cold_start[i] && !model.ratios.row(i).empty();
    const bool has_hist = !history.cold_start[i] && !history.ratios.row(i).empty();
    if (!has_model && !has_hist) {
      ++out.n_excluded;
      continue;
    }
    SparseRow row;
    if (has_model && has_hist) {
      auto a = history.ratios.row(i);
      auto b = model.ratios.row(i);
      std::size_t x = 0, y = 0;
      while (x < a.size() || y < b.size()) {
        if (y == b.size() || (x < a.size() && a[x].col < b[y].col)) {
          row.push_back({a[x].col, mix * a[x].value});
          ++x;
        } else if (x == a.size() || b[y].col < a[x].col) {
          row.push_back({b[y].col, (1.0 - mix) * b[y].value});
          ++y;
        } else {
          row.push_back({a[x].col, mix * a[x].value + (1.0 - mix) * b[y].value});
          ++x;
          ++y;
        }
      }
      std::erase_if(row, [](const Entry& e) { return !(e.value > 0.0); });
    } else {
      auto src = has_model ? model.ratios.row(i) : history.ratios.row(i);
      row.assign(src.begin(), src.end());
      ++(has_model ? out.n_model_only : out.n_history_only);
    }
    out.prediction.ratios.set_row(i, std::move(row));
    out.prediction.cold_start[i] = false;
  }
  return out;
}

}  // namespace flowcast::dlf
