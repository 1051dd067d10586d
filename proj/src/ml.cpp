#include "urbanflow/ml.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "urbanflow/rng.hpp"
#include "urbanflow/types.hpp"

namespace urbanflow::ml {

using nlohmann::json;

void AdaBoostStumps::train(const Matrix& x, const std::vector<int>& y,
                           int rounds) {
  const int n = static_cast<int>(x.size());
  if (n == 0) throw TrainingError("empty training set");
  const int d = static_cast<int>(x[0].size());
  bool has0 = false, has1 = false;
  for (int v : y) (v ? has1 : has0) = true;
  if (!has0 || !has1) throw TrainingError("single-class corpus at stage 1");

  // Per-feature sorted sample order, computed once.
  std::vector<std::vector<int>> order(d, std::vector<int>(n));
  for (int f = 0; f < d; ++f) {
    std::iota(order[f].begin(), order[f].end(), 0);
    std::stable_sort(order[f].begin(), order[f].end(),
                     [&](int a, int b) { return x[a][f] < x[b][f]; });
  }

  std::vector<double> w(n, 1.0 / n);
  stumps_.clear();
  for (int round = 0; round < rounds; ++round) {
    Stump best;
    double best_err = std::numeric_limits<double>::infinity();
    for (int f = 0; f < d; ++f) {
      // err(threshold below i) for polarity +1: weight of class-1 below +
      // class-0 above. Scan once, track both polarities.
      double w1_below = 0, w0_below = 0;
      double w1_total = 0, w0_total = 0;
      for (int i = 0; i < n; ++i) (y[i] ? w1_total : w0_total) += w[i];
      for (int i = 0; i < n; ++i) {
        const int s = order[f][i];
        (y[s] ? w1_below : w0_below) += w[s];
        if (i + 1 < n && x[order[f][i + 1]][f] == x[s][f]) continue;
        const double thr =
            i + 1 < n ? 0.5 * (x[s][f] + x[order[f][i + 1]][f])
                      : x[s][f] + 1.0;
        // polarity +1: predict 1 above threshold.
        const double err_pos = w1_below + (w0_total - w0_below);
        const double err_neg = w0_below + (w1_total - w1_below);
        if (err_pos < best_err) {
          best_err = err_pos;
          best = {f, thr, +1, 0};
        }
        if (err_neg < best_err) {
          best_err = err_neg;
          best = {f, thr, -1, 0};
        }
      }
    }
    best_err = std::clamp(best_err, 1e-12, 1.0 - 1e-12);
    best.alpha = 0.5 * std::log((1.0 - best_err) / best_err);
    stumps_.push_back(best);
    // Reweight.
    double z = 0;
    for (int i = 0; i < n; ++i) {
      const int h =
          best.polarity * (x[i][best.feature] - best.threshold) > 0 ? 1 : -1;
      const int yi = y[i] ? 1 : -1;
      w[i] *= std::exp(-best.alpha * yi * h);
      z += w[i];
    }
    for (double& wi : w) wi /= z;
    if (best_err < 1e-9) break;  // perfectly separated
  }
}

double AdaBoostStumps::decision(const std::vector<double>& x) const {
  if (stumps_.empty()) throw StateError("AdaBoost classifier not trained");
  double s = 0;
  for (const auto& st : stumps_)
    s += st.alpha *
         (st.polarity * (x[st.feature] - st.threshold) > 0 ? 1.0 : -1.0);
  return s;
}

json AdaBoostStumps::to_json() const {
  json arr = json::array();
  for (const auto& s : stumps_)
    arr.push_back({{"f", s.feature},
                   {"t", s.threshold},
                   {"p", s.polarity},
                   {"a", s.alpha}});
  return {{"type", "adaboost_stumps"}, {"stumps", arr}};
}

AdaBoostStumps AdaBoostStumps::from_json(const json& j) {
  AdaBoostStumps model;
  for (const auto& s : j.at("stumps"))
    model.stumps_.push_back({s.at("f").get<int>(), s.at("t").get<double>(),
                             s.at("p").get<int>(), s.at("a").get<double>()});
  return model;
}

namespace {

int majority_label(const std::vector<int>& y, const std::vector<int>& idx,
                   int n_classes) {
  std::vector<int> counts(n_classes, 0);
  for (int i : idx) ++counts[y[i]];
  return static_cast<int>(
      std::max_element(counts.begin(), counts.end()) - counts.begin());
}

double gini(const std::vector<int>& counts, int total) {
  if (total == 0) return 0;
  double g = 1.0;
  for (int c : counts) {
    const double p = static_cast<double>(c) / total;
    g -= p * p;
  }
  return g;
}

}  // namespace

class SplitContext {
 public:
  SplitContext(int n_features, int per_split, int n_classes,
               std::uint64_t seed)
      : n_features_(n_features),
        per_split_(per_split),
        n_classes_(n_classes),
        rng_(seed) {}

  std::vector<int> sample_features() {
    std::vector<int> all(n_features_);
    std::iota(all.begin(), all.end(), 0);
    for (int i = 0; i < per_split_ && i < n_features_; ++i) {
      const int j =
          i + static_cast<int>(rng_.below(n_features_ - i));
      std::swap(all[i], all[j]);
    }
    all.resize(std::min(per_split_, n_features_));
    std::sort(all.begin(), all.end());
    return all;
  }

  int n_classes() const { return n_classes_; }

 private:
  int n_features_;
  int per_split_;
  int n_classes_;
  rng::Rng rng_;
};

void DecisionTree::train(const Matrix& x, const std::vector<int>& y,
                         const std::vector<int>& sample_idx, int n_classes,
                         int max_depth, int features_per_split,
                         std::uint64_t seed) {
  nodes_.clear();
  SplitContext ctx(static_cast<int>(x[0].size()), features_per_split,
                   n_classes, seed);
  std::vector<int> idx = sample_idx;
  build(x, y, idx, max_depth, ctx);
}

int DecisionTree::build(const Matrix& x, const std::vector<int>& y,
                        std::vector<int>& idx, int depth, SplitContext& ctx) {
  const int node_id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  nodes_[node_id].label = majority_label(y, idx, ctx.n_classes());

  bool pure = true;
  for (std::size_t i = 1; i < idx.size(); ++i)
    if (y[idx[i]] != y[idx[0]]) {
      pure = false;
      break;
    }
  if (pure || depth <= 0 || idx.size() < 2) return node_id;

  const auto features = ctx.sample_features();
  int best_f = -1;
  double best_thr = 0, best_score = std::numeric_limits<double>::infinity();
  std::vector<int> sorted = idx;
  for (int f : features) {
    std::stable_sort(sorted.begin(), sorted.end(),
                     [&](int a, int b) { return x[a][f] < x[b][f]; });
    std::vector<int> left_counts(ctx.n_classes(), 0),
        right_counts(ctx.n_classes(), 0);
    for (int i : sorted) ++right_counts[y[i]];
    const int n = static_cast<int>(sorted.size());
    for (int i = 0; i + 1 < n; ++i) {
      ++left_counts[y[sorted[i]]];
      --right_counts[y[sorted[i]]];
      if (x[sorted[i + 1]][f] == x[sorted[i]][f]) continue;
      const int nl = i + 1, nr = n - nl;
      const double score =
          (nl * gini(left_counts, nl) + nr * gini(right_counts, nr)) / n;
      if (score < best_score - 1e-15) {
        best_score = score;
        best_f = f;
        best_thr = 0.5 * (x[sorted[i]][f] + x[sorted[i + 1]][f]);
      }
    }
  }
  if (best_f < 0) return node_id;

  std::vector<int> left, right;
  for (int i : idx)
    (x[i][best_f] <= best_thr ? left : right).push_back(i);
  if (left.empty() || right.empty()) return node_id;

  nodes_[node_id].feature = best_f;
  nodes_[node_id].threshold = best_thr;
  const int l = build(x, y, left, depth - 1, ctx);
  const int r = build(x, y, right, depth - 1, ctx);
  nodes_[node_id].left = l;
  nodes_[node_id].right = r;
  return node_id;
}

int DecisionTree::predict(const std::vector<double>& x) const {
  int node = 0;
  while (nodes_[node].feature >= 0)
    node = x[nodes_[node].feature] <= nodes_[node].threshold
               ? nodes_[node].left
               : nodes_[node].right;
  return nodes_[node].label;
}

json DecisionTree::to_json() const {
  json arr = json::array();
  for (const auto& n : nodes_)
    arr.push_back({{"f", n.feature},
                   {"t", n.threshold},
                   {"l", n.left},
                   {"r", n.right},
                   {"c", n.label}});
  return arr;
}

DecisionTree DecisionTree::from_json(const json& j) {
  DecisionTree t;
  for (const auto& n : j)
    t.nodes_.push_back({n.at("f").get<int>(), n.at("t").get<double>(),
                        n.at("l").get<int>(), n.at("r").get<int>(),
                        n.at("c").get<int>()});
  return t;
}

void RandomForest::train(const Matrix& x, const std::vector<int>& y,
                         int n_classes, const Params& params) {
  const int n = static_cast<int>(x.size());
  if (n == 0) throw TrainingError("empty training set");
  std::vector<bool> present(n_classes, false);
  for (int v : y) present.at(v) = true;
  if (std::count(present.begin(), present.end(), true) < 2)
    throw TrainingError("single-class corpus at stage 2");

  n_classes_ = n_classes;
  const int d = static_cast<int>(x[0].size());
  const int per_split =
      std::max(1, static_cast<int>(std::sqrt(static_cast<double>(d))));
  trees_.resize(params.n_trees);
  // Per-tree seeds make the parallel schedule irrelevant to the result.
#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < params.n_trees; ++t) {
    rng::Rng boot(rng::derive_seed(params.seed, "tree" + std::to_string(t)));
    std::vector<int> sample(n);
    for (int i = 0; i < n; ++i)
      sample[i] = static_cast<int>(boot.below(n));
    trees_[t].train(x, y, sample, n_classes, params.max_depth, per_split,
                    boot.next_u64());
  }
}

int RandomForest::predict(const std::vector<double>& x) const {
  if (trees_.empty()) throw StateError("random forest not trained");
  std::vector<int> votes(n_classes_, 0);
  for (const auto& t : trees_) ++votes[t.predict(x)];
  return static_cast<int>(std::max_element(votes.begin(), votes.end()) -
                          votes.begin());
}

json RandomForest::to_json() const {
  json arr = json::array();
  for (const auto& t : trees_) arr.push_back(t.to_json());
  return {{"type", "random_forest"}, {"n_classes", n_classes_},
          {"trees", arr}};
}

RandomForest RandomForest::from_json(const json& j) {
  RandomForest f;
  f.n_classes_ = j.at("n_classes").get<int>();
  for (const auto& t : j.at("trees"))
    f.trees_.push_back(DecisionTree::from_json(t));
  return f;
}

}  // namespace urbanflow::ml
