#include "urbanflux/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "urbanflux/errors.hpp"
#include "urbanflux/rng.hpp"

namespace urbanflux {

namespace {

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(std::span<const EnvVector> xs, std::span<const double> ys, const ForestConfig& cfg,
              std::uint64_t seed)
      : xs_(xs), ys_(ys), cfg_(cfg), rng_(seed) {}

  RegressionTree build(std::vector<std::size_t> rows) {
    grow(std::move(rows), 0);
    return std::move(tree_);
  }

 private:
  std::int32_t grow(std::vector<std::size_t> rows, std::size_t depth) {
    const auto id = static_cast<std::int32_t>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    const double first = ys_[rows.front()];
    const bool pure = std::all_of(rows.begin(), rows.end(), [&](std::size_t r) { return ys_[r] == first; });
    double sum = 0.0;
    for (std::size_t r : rows) sum += ys_[r];
    tree_.nodes[id].value = pure ? first : sum / static_cast<double>(rows.size());
    if (pure || (cfg_.max_depth > 0 && depth >= cfg_.max_depth) || rows.size() < 2 * cfg_.min_leaf) {
      return id;
    }
    const SplitChoice best = choose_split(rows, sum);
    if (best.feature < 0) return id;

    std::vector<std::size_t> left, right;
    for (std::size_t r : rows) {
      (xs_[r][static_cast<std::size_t>(best.feature)] <= best.threshold ? left : right).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    const std::int32_t l = grow(std::move(left), depth + 1);
    const std::int32_t r = grow(std::move(right), depth + 1);
    TreeNode& node = tree_.nodes[id];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  SplitChoice choose_split(const std::vector<std::size_t>& rows, double sum) {
    std::array<int, kEnvWidth> order{};
    std::iota(order.begin(), order.end(), 0);
    rng_.shuffle(std::span<int>(order));
    const auto wanted = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(cfg_.feature_subsample * static_cast<double>(kEnvWidth))));

    const double n = static_cast<double>(rows.size());
    const double base = sum * sum / n;
    SplitChoice best;
    std::vector<std::pair<double, double>> col(rows.size());
    for (std::size_t k = 0; k < kEnvWidth; ++k) {
      // Keep looking past the subsample only while no valid split exists.
      if (k >= wanted && best.feature >= 0) break;
      const int f = order[k];
      for (std::size_t i = 0; i < rows.size(); ++i) {
        col[i] = {xs_[rows[i]][static_cast<std::size_t>(f)], ys_[rows[i]]};
      }
      std::sort(col.begin(), col.end());
      double left_sum = 0.0;
      for (std::size_t i = 1; i < col.size(); ++i) {
        left_sum += col[i - 1].second;
        if (i < cfg_.min_leaf || col.size() - i < cfg_.min_leaf) continue;
        if (!(col[i - 1].first < col[i].first)) continue;
        const double nl = static_cast<double>(i);
        const double right_sum = sum - left_sum;
        const double gain = left_sum * left_sum / nl + right_sum * right_sum / (n - nl) - base;
        if (gain > best.gain) {
          best.gain = gain;
          best.feature = f;
          double thr = col[i - 1].first + (col[i].first - col[i - 1].first) / 2.0;
          if (!(thr < col[i].first)) thr = col[i - 1].first;
          best.threshold = thr;
        }
      }
    }
    return best;
  }

  std::span<const EnvVector> xs_;
  std::span<const double> ys_;
  const ForestConfig& cfg_;
  Rng rng_;
  RegressionTree tree_;
};

EnvVector to_env(const DatasetRow& row) { return row.env.to_vector(); }

}  // namespace

void ForestConfig::validate() const {
  if (n_trees == 0) throw ConfigError("forest: n_trees must be positive");
  if (min_leaf == 0) throw ConfigError("forest: min_leaf must be positive");
  if (!(feature_subsample > 0.0 && feature_subsample <= 1.0)) {
    throw ConfigError("forest: feature_subsample must be in (0, 1]");
  }
}

double RegressionTree::predict(const EnvVector& x) const {
  std::size_t i = 0;
  while (nodes[i].feature >= 0) {
    const TreeNode& n = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes[i].value;
}

std::size_t RegressionTree::depth() const {
  std::vector<std::size_t> d(nodes.size(), 0);
  std::size_t out = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    out = std::max(out, d[i]);
    if (nodes[i].feature >= 0) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return out;
}

RegressionTree fit_tree(std::span<const EnvVector> xs, std::span<const double> ys,
                        std::span<const std::size_t> sample, const ForestConfig& cfg,
                        std::uint64_t seed) {
  if (sample.empty()) throw EmptyDataset("cannot fit a tree on no rows");
  TreeBuilder b(xs, ys, cfg, seed);
  return b.build(std::vector<std::size_t>(sample.begin(), sample.end()));
}

ForestModel::ForestModel(Target target, NormalizationInfo norm, ForestConfig cfg)
    : target_(target), norm_(norm), cfg_(cfg) {}

std::vector<double> ForestModel::predict(const EnvVector& x) const {
  std::vector<double> out;
  out.reserve(outputs_.size());
  for (const auto& trees : outputs_) {
    double s = 0.0;
    for (const auto& t : trees) s += t.predict(x);
    out.push_back(s / static_cast<double>(trees.size()));
  }
  return out;
}

void regression_columns(const Dataset& dataset, Target target, std::vector<EnvVector>& xs,
                        std::vector<std::vector<double>>& ys) {
  const std::size_t width = target == Target::Total ? 1 : kHours;
  xs.clear();
  ys.assign(width, {});
  for (const auto& row : dataset.rows) {
    if (!has_target(row, target)) continue;
    xs.push_back(to_env(row));
    const auto t = target_of(row, target);
    for (std::size_t d = 0; d < width; ++d) ys[d].push_back(t[d]);
  }
  if (xs.empty()) throw EmptyDataset("no rows carry a " + std::string(to_string(target)) + " target");
}

ForestModel train_forest(const Dataset& dataset, Target target, const ForestConfig& cfg) {
  cfg.validate();
  std::vector<EnvVector> xs;
  std::vector<std::vector<double>> ys;
  regression_columns(dataset, target, xs, ys);
  ForestModel model(target, dataset.norm, cfg);
  model.provenance = dataset.provenance;
  auto& outputs = model.outputs();
  outputs.assign(ys.size(), std::vector<RegressionTree>(cfg.n_trees));

  const std::size_t n = xs.size();
  const std::size_t jobs = ys.size() * cfg.n_trees;
  const Rng base(cfg.seed);
  auto work = [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> sample(n);
    for (std::size_t job = begin; job < end; ++job) {
      const std::size_t d = job / cfg.n_trees;
      const std::size_t t = job % cfg.n_trees;
      Rng r = base.stream(job);
      if (cfg.bootstrap) {
        for (auto& s : sample) s = static_cast<std::size_t>(r.below(n));
      } else {
        std::iota(sample.begin(), sample.end(), std::size_t{0});
      }
      outputs[d][t] = fit_tree(xs, ys[d], sample, cfg, r.next());
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(cfg.threads, 1, jobs);
  if (threads == 1) {
    work(0, jobs);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (jobs + threads - 1) / threads;
    for (std::size_t i = 0; i < threads; ++i) {
      const std::size_t b = i * chunk;
      const std::size_t e = std::min(jobs, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }
  return model;
}

void SvrConfig::validate() const {
  if (!(epsilon >= 0.0)) throw ConfigError("svr: epsilon must be >= 0");
  if (!(c_penalty > 0.0)) throw ConfigError("svr: c_penalty must be positive");
  if (!(learning_rate >= 0.0)) throw ConfigError("svr: learning_rate must be >= 0");
  if (epochs == 0) throw ConfigError("svr: epochs must be positive");
}

SvrModel::SvrModel(Target target, NormalizationInfo norm, SvrConfig cfg)
    : target_(target), norm_(norm), cfg_(cfg) {}

std::vector<double> SvrModel::predict(const EnvVector& x) const {
  std::vector<double> out;
  out.reserve(coef_.size());
  for (const auto& c : coef_) {
    double s = c[kEnvWidth];
    for (std::size_t i = 0; i < kEnvWidth; ++i) s += c[i] * x[i];
    out.push_back(s);
  }
  return out;
}

namespace {

double affine(std::span<const double> coef, const EnvVector& x) {
  double s = coef[kEnvWidth];
  for (std::size_t i = 0; i < kEnvWidth; ++i) s += coef[i] * x[i];
  return s;
}

}  // namespace

double svr_objective(std::span<const EnvVector> xs, std::span<const double> ys,
                     std::span<const double> coef, const SvrConfig& cfg) {
  const double n = static_cast<double>(xs.size());
  const double lambda = 1.0 / (cfg.c_penalty * n);
  double w2 = 0.0;
  for (std::size_t i = 0; i < kEnvWidth; ++i) w2 += coef[i] * coef[i];
  double loss = 0.0;
  for (std::size_t r = 0; r < xs.size(); ++r) {
    loss += std::max(0.0, std::abs(ys[r] - affine(coef, xs[r])) - cfg.epsilon);
  }
  return 0.5 * lambda * w2 + loss / n;
}

void fit_svr_dim(std::span<const EnvVector> xs, std::span<const double> ys, std::vector<double>& coef,
                 const SvrConfig& cfg, std::uint64_t seed, std::vector<double>* history) {
  cfg.validate();
  if (xs.empty() || xs.size() != ys.size()) throw ShapeError("svr: inputs and targets must match and be non-empty");
  if (coef.size() != kEnvWidth + 1) throw ShapeError("svr: expected 18 coefficients");
  const std::size_t n = xs.size();
  const double lambda = 1.0 / (cfg.c_penalty * static_cast<double>(n));
  const std::size_t batch = cfg.batch_size == 0 ? n : std::min(cfg.batch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::array<double, kEnvWidth + 1> grad{};
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (batch < n) rng.shuffle(std::span<std::size_t>(order));
    const double lr = cfg.decay ? cfg.learning_rate / std::sqrt(1.0 + static_cast<double>(epoch))
                                : cfg.learning_rate;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      grad.fill(0.0);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t r = order[k];
        const double resid = ys[r] - affine(coef, xs[r]);
        if (std::abs(resid) <= cfg.epsilon) continue;
        const double s = resid > 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < kEnvWidth; ++i) grad[i] += s * xs[r][i];
        grad[kEnvWidth] += s;
      }
      const double m = static_cast<double>(end - start);
      for (std::size_t i = 0; i < kEnvWidth; ++i) coef[i] -= lr * (grad[i] / m + lambda * coef[i]);
      coef[kEnvWidth] -= lr * grad[kEnvWidth] / m;
    }
    const double obj = svr_objective(xs, ys, coef, cfg);
    if (!std::isfinite(obj)) {
      throw DivergenceError("svr objective became non-finite in epoch " + std::to_string(epoch + 1));
    }
    if (history) history->push_back(obj);
  }
}

SvrModel train_svr(const Dataset& dataset, Target target, const SvrConfig& cfg) {
  cfg.validate();
  std::vector<EnvVector> xs;
  std::vector<std::vector<double>> ys;
  regression_columns(dataset, target, xs, ys);
  SvrModel model(target, dataset.norm, cfg);
  model.provenance = dataset.provenance;
  const Rng base(cfg.seed);
  std::vector<std::vector<double>> per_dim(ys.size());
  for (std::size_t d = 0; d < ys.size(); ++d) {
    std::vector<double> coef(kEnvWidth + 1, 0.0);
    fit_svr_dim(xs, ys[d], coef, cfg, base.stream(d).next(), &per_dim[d]);
    model.coefficients().push_back(std::move(coef));
  }
  model.objective_history.assign(cfg.epochs, 0.0);
  for (const auto& h : per_dim) {
    for (std::size_t e = 0; e < h.size(); ++e) model.objective_history[e] += h[e];
  }
  return model;
}

}  // namespace urbanflux
