#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace urbanflow::ml {

using Matrix = std::vector<std::vector<double>>;  // rows are samples

// Decision stump: predicts +1 when polarity * (x[feature] - threshold) > 0.
struct Stump {
  int feature = 0;
  double threshold = 0;
  int polarity = 1;
  double alpha = 0;
};

// Discrete AdaBoost over depth-1 stumps. Labels are {0, 1}.
class AdaBoostStumps {
 public:
  void train(const Matrix& x, const std::vector<int>& y, int rounds);
  double decision(const std::vector<double>& x) const;  // >0 means class 1
  int predict(const std::vector<double>& x) const {
    return decision(x) > 0 ? 1 : 0;
  }
  bool trained() const { return !stumps_.empty(); }

  nlohmann::json to_json() const;
  static AdaBoostStumps from_json(const nlohmann::json& j);

 private:
  std::vector<Stump> stumps_;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0;
  int left = -1;
  int right = -1;
  int label = 0;
};

class DecisionTree {
 public:
  // Thresholds are midpoints of consecutive distinct feature values, so the
  // learned structure depends only on value ranks.
  void train(const Matrix& x, const std::vector<int>& y,
             const std::vector<int>& sample_idx, int n_classes, int max_depth,
             int features_per_split, std::uint64_t seed);
  int predict(const std::vector<double>& x) const;

  nlohmann::json to_json() const;
  static DecisionTree from_json(const nlohmann::json& j);

 private:
  int build(const Matrix& x, const std::vector<int>& y, std::vector<int>& idx,
            int depth, class SplitContext& ctx);
  std::vector<TreeNode> nodes_;
};

class RandomForest {
 public:
  struct Params {
    int n_trees = 100;
    int max_depth = 8;
    std::uint64_t seed = 1;
  };

  void train(const Matrix& x, const std::vector<int>& y, int n_classes,
             const Params& params);
  // Majority vote; ties go to the smallest class id.
  int predict(const std::vector<double>& x) const;
  bool trained() const { return !trees_.empty(); }

  nlohmann::json to_json() const;
  static RandomForest from_json(const nlohmann::json& j);

 private:
  std::vector<DecisionTree> trees_;
  int n_classes_ = 0;
};

}  // namespace urbanflow::ml
