#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "homelist/error.hpp"

namespace homelist {

/// Binary classification trees in the C4.5 / C5.0 family:
///  - greedy splitting on gain ratio, restricted to attributes whose gain is
///    at least the average gain of the admissible candidates;
///  - numeric features only (binary dummies are numeric 0/1); NaN marks a
///    missing value;
///  - cases with a missing split value are sent down both branches with
///    weights proportional to the known training mass on each side, both
///    when growing and when predicting;
///  - pessimistic error-based pruning (subtree replacement);
///  - Laplace-smoothed leaf probabilities (k + 1) / (n + 2);
///  - optional AdaBoost.M1 stages trained on weighted resamples.
struct TreeParams {
  double min_leaf = 5.0;     // minimum case weight on each side of a split
  int max_depth = 12;
  bool prune = true;
  double prune_confidence = 0.25;
  int boosting_trials = 1;   // 1 = a single tree
  std::uint64_t seed = 1;
};

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;
  double left_fraction = 0.5;  // known training mass going left
  int left = -1;
  int right = -1;
  std::array<double, 2> counts{0.0, 0.0};  // class weights: [negative, positive]

  bool leaf() const { return feature < 0; }
};

class Tree {
public:
  std::vector<TreeNode> nodes;  // root at index 0

  double probability(std::span<const double> x) const { return probability_at(0, x); }

  std::size_t leaf_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.leaf(); }));
  }

  int depth() const { return depth_at(0); }

  static double laplace(const std::array<double, 2>& c) {
    return (c[1] + 1.0) / (c[0] + c[1] + 2.0);
  }

private:
  double probability_at(int idx, std::span<const double> x) const {
    const TreeNode& n = nodes[static_cast<std::size_t>(idx)];
    if (n.leaf()) return laplace(n.counts);
    const double v = x[static_cast<std::size_t>(n.feature)];
    if (std::isnan(v)) {
      return n.left_fraction * probability_at(n.left, x) +
             (1.0 - n.left_fraction) * probability_at(n.right, x);
    }
    return probability_at(v <= n.threshold ? n.left : n.right, x);
  }

  int depth_at(int idx) const {
    const TreeNode& n = nodes[static_cast<std::size_t>(idx)];
    if (n.leaf()) return 0;
    return 1 + std::max(depth_at(n.left), depth_at(n.right));
  }
};

/// A trained classifier: one tree, or a boosted sequence of trees whose
/// probabilities are averaged with the stage weights.
class DecisionTree {
public:
  std::vector<std::string> feature_names;
  std::vector<Tree> stages;
  std::vector<double> stage_weights;

  bool trained() const { return !stages.empty(); }

  double probability(std::span<const double> x) const {
    if (!trained()) throw ModelError("decision tree is not trained");
    if (x.size() != feature_names.size()) {
      throw ModelError("feature vector has " + std::to_string(x.size()) + " components, tree expects " +
                       std::to_string(feature_names.size()));
    }
    double num = 0.0, den = 0.0;
    for (std::size_t s = 0; s < stages.size(); ++s) {
      num += stage_weights[s] * stages[s].probability(x);
      den += stage_weights[s];
    }
    return num / den;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["features"] = feature_names;
    j["stages"] = nlohmann::json::array();
    for (std::size_t s = 0; s < stages.size(); ++s) {
      nlohmann::json nodes = nlohmann::json::array();
      for (const TreeNode& n : stages[s].nodes) {
        nlohmann::json jn;
        jn["counts"] = n.counts;
        if (!n.leaf()) {
          jn["feature"] = feature_names[static_cast<std::size_t>(n.feature)];
          jn["threshold"] = n.threshold;
          jn["left_fraction"] = n.left_fraction;
          jn["left"] = n.left;
          jn["right"] = n.right;
        }
        nodes.push_back(std::move(jn));
      }
      j["stages"].push_back({{"weight", stage_weights[s]}, {"nodes", std::move(nodes)}});
    }
    return j;
  }

  static DecisionTree from_json(const nlohmann::json& j) {
    DecisionTree t;
    try {
      t.feature_names = j.at("features").get<std::vector<std::string>>();
      for (const auto& js : j.at("stages")) {
        Tree tree;
        for (const auto& jn : js.at("nodes")) {
          TreeNode n;
          n.counts = jn.at("counts").get<std::array<double, 2>>();
          if (n.counts[0] < 0 || n.counts[1] < 0 || n.counts[0] + n.counts[1] <= 0) {
            throw ModelError("node with empty class counts");
          }
          if (jn.contains("feature")) {
            const auto name = jn.at("feature").get<std::string>();
            auto it = std::find(t.feature_names.begin(), t.feature_names.end(), name);
            if (it == t.feature_names.end()) throw ModelError("split on unknown feature " + name);
            n.feature = static_cast<int>(it - t.feature_names.begin());
            n.threshold = jn.at("threshold").get<double>();
            n.left_fraction = jn.at("left_fraction").get<double>();
            n.left = jn.at("left").get<int>();
            n.right = jn.at("right").get<int>();
          }
          tree.nodes.push_back(n);
        }
        const auto size = static_cast<int>(tree.nodes.size());
        for (const auto& n : tree.nodes) {
          if (!n.leaf() && (n.left <= 0 || n.right <= 0 || n.left >= size || n.right >= size)) {
            throw ModelError("child index out of range");
          }
        }
        if (tree.nodes.empty()) throw ModelError("empty tree stage");
        t.stages.push_back(std::move(tree));
        t.stage_weights.push_back(js.at("weight").get<double>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw ModelError(std::string("malformed tree: ") + e.what());
    }
    if (t.stages.empty()) throw ModelError("tree has no stages");
    return t;
  }
};

namespace detail {

inline double entropy2(double neg, double pos) {
  const double n = neg + pos;
  if (n <= 0) return 0.0;
  double h = 0.0;
  for (double c : {neg, pos}) {
    if (c > 0) h -= (c / n) * std::log2(c / n);
  }
  return h;
}

inline double split_term(double part, double total) {
  return part > 0 ? -(part / total) * std::log2(part / total) : 0.0;
}

/// Extra pessimistic errors on top of `e` observed errors among `n` cases,
/// at confidence level `cf` (the classic C4.5 upper-bound estimate).
inline double added_errors(double n, double e, double cf) {
  static constexpr std::array<double, 9> val{0, 0.001, 0.005, 0.01, 0.05, 0.10, 0.20, 0.40, 1.00};
  static constexpr std::array<double, 9> dev{4.0, 3.09, 2.58, 2.33, 1.65, 1.28, 0.84, 0.25, 0.00};
  std::size_t i = 0;
  while (i + 1 < val.size() && cf > val[i]) ++i;
  const double coeff_root =
      i == 0 ? dev[0] : dev[i - 1] + (dev[i] - dev[i - 1]) * (cf - val[i - 1]) / (val[i] - val[i - 1]);
  const double coeff = coeff_root * coeff_root;
  if (n <= 0) return 0.0;
  if (e < 1e-6) return n * (1.0 - std::exp(std::log(cf) / n));
  if (e < 0.9999) {
    const double v0 = n * (1.0 - std::exp(std::log(cf) / n));
    return v0 + e * (added_errors(n, 1.0, cf) - v0);
  }
  if (e + 0.5 >= n) return 0.67 * (n - e);
  const double pr = (e + 0.5 + coeff / 2.0 +
                     std::sqrt(coeff * ((e + 0.5) * (1.0 - (e + 0.5) / n) + coeff / 4.0))) /
                    (n + coeff);
  return n * pr - e;
}

class TreeBuilder {
public:
  TreeBuilder(std::span<const double> data, std::size_t n_features, std::span<const std::uint8_t> labels,
              const TreeParams& params)
      : data_(data), nf_(n_features), labels_(labels), params_(params) {}

  struct Case {
    std::size_t row;
    double weight;
  };

  Tree build(std::vector<Case> cases) {
    Tree tree;
    tree_ = &tree;
    grow(std::move(cases), 0);
    if (params_.prune) prune(0);
    compact(tree);
    return tree;
  }

private:
  double value(std::size_t row, std::size_t f) const { return data_[row * nf_ + f]; }

  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
    double ratio = 0.0;
    double known_left = 0.0;
    double known_right = 0.0;
  };

  Split best_threshold(const std::vector<Case>& cases, std::size_t f, double total) const {
    Split best;
    struct Item {
      double v, w;
      std::uint8_t y;
    };
    std::vector<Item> known;
    known.reserve(cases.size());
    std::array<double, 2> kc{0, 0};
    for (const Case& c : cases) {
      const double v = value(c.row, f);
      if (std::isnan(v)) continue;
      const std::uint8_t y = labels_[c.row];
      known.push_back({v, c.weight, y});
      kc[y] += c.weight;
    }
    const double known_w = kc[0] + kc[1];
    if (known.size() < 2 || known_w < 2 * params_.min_leaf) return best;
    std::sort(known.begin(), known.end(), [](const Item& a, const Item& b) { return a.v < b.v; });
    const double base = entropy2(kc[0], kc[1]);
    std::array<double, 2> lc{0, 0};
    double best_gain_known = 1e-12;
    for (std::size_t i = 0; i + 1 < known.size(); ++i) {
      lc[known[i].y] += known[i].w;
      if (known[i].v == known[i + 1].v) continue;
      const double lw = lc[0] + lc[1];
      const double rw = known_w - lw;
      if (lw < params_.min_leaf || rw < params_.min_leaf) continue;
      const double cond = (lw / known_w) * entropy2(lc[0], lc[1]) +
                          (rw / known_w) * entropy2(kc[0] - lc[0], kc[1] - lc[1]);
      const double g = base - cond;
      if (g > best_gain_known) {
        best_gain_known = g;
        best.feature = static_cast<int>(f);
        best.threshold = known[i].v + (known[i + 1].v - known[i].v) / 2.0;
        best.known_left = lw;
        best.known_right = rw;
      }
    }
    if (best.feature < 0) return best;
    best.gain = (known_w / total) * best_gain_known;
    const double unknown = total - known_w;
    const double info = split_term(best.known_left, total) + split_term(best.known_right, total) +
                        split_term(unknown, total);
    best.ratio = info > 0 ? best.gain / info : 0.0;
    return best;
  }

  int make_leaf(const std::array<double, 2>& counts) {
    TreeNode n;
    n.counts = counts;
    tree_->nodes.push_back(n);
    return static_cast<int>(tree_->nodes.size()) - 1;
  }

  int grow(std::vector<Case> cases, int depth) {
    std::array<double, 2> counts{0, 0};
    for (const Case& c : cases) counts[labels_[c.row]] += c.weight;
    const double total = counts[0] + counts[1];
    const int idx = make_leaf(counts);
    if (counts[0] <= 1e-9 || counts[1] <= 1e-9 || total < 2 * params_.min_leaf ||
        depth >= params_.max_depth) {
      return idx;
    }

    std::vector<Split> candidates;
    for (std::size_t f = 0; f < nf_; ++f) {
      Split s = best_threshold(cases, f, total);
      if (s.feature >= 0 && s.gain > 1e-9) candidates.push_back(s);
    }
    if (candidates.empty()) return idx;
    double avg_gain = 0.0;
    for (const auto& s : candidates) avg_gain += s.gain;
    avg_gain /= static_cast<double>(candidates.size());
    const Split* chosen = nullptr;
    for (const auto& s : candidates) {
      if (s.gain + 1e-12 < avg_gain) continue;
      if (!chosen || s.ratio > chosen->ratio) chosen = &s;
    }
    if (!chosen || chosen->ratio <= 0) return idx;

    const Split split = *chosen;
    const double lf = split.known_left / (split.known_left + split.known_right);
    std::vector<Case> left, right;
    for (const Case& c : cases) {
      const double v = value(c.row, static_cast<std::size_t>(split.feature));
      if (std::isnan(v)) {
        if (c.weight * lf > 1e-12) left.push_back({c.row, c.weight * lf});
        if (c.weight * (1 - lf) > 1e-12) right.push_back({c.row, c.weight * (1 - lf)});
      } else if (v <= split.threshold) {
        left.push_back(c);
      } else {
        right.push_back(c);
      }
    }
    cases.clear();
    cases.shrink_to_fit();
    const int l = grow(std::move(left), depth + 1);
    const int r = grow(std::move(right), depth + 1);
    TreeNode& n = tree_->nodes[static_cast<std::size_t>(idx)];
    n.feature = split.feature;
    n.threshold = split.threshold;
    n.left_fraction = lf;
    n.left = l;
    n.right = r;
    return idx;
  }

  static double leaf_errors(const std::array<double, 2>& c) { return std::min(c[0], c[1]); }

  // Returns the pessimistic error estimate of the (possibly collapsed) subtree.
  double prune(int idx) {
    TreeNode& n = tree_->nodes[static_cast<std::size_t>(idx)];
    const double total = n.counts[0] + n.counts[1];
    const double e = leaf_errors(n.counts);
    const double as_leaf = e + added_errors(total, e, params_.prune_confidence);
    if (n.leaf()) return as_leaf;
    const int l = n.left, r = n.right;
    const double subtree = prune(l) + prune(r);
    TreeNode& again = tree_->nodes[static_cast<std::size_t>(idx)];
    if (as_leaf <= subtree + 0.1) {
      again.feature = -1;
      again.left = again.right = -1;
      return as_leaf;
    }
    return subtree;
  }

  // Drops nodes orphaned by pruning and renumbers children.
  static void compact(Tree& tree) {
    std::vector<TreeNode> out;
    std::vector<std::pair<int, int>> stack;  // (old index, new parent slot)
    std::vector<int> remap(tree.nodes.size(), -1);
    std::vector<int> order;
    std::vector<int> todo{0};
    while (!todo.empty()) {
      const int i = todo.back();
      todo.pop_back();
      remap[static_cast<std::size_t>(i)] = static_cast<int>(order.size());
      order.push_back(i);
      const TreeNode& n = tree.nodes[static_cast<std::size_t>(i)];
      if (!n.leaf()) {
        todo.push_back(n.right);
        todo.push_back(n.left);
      }
    }
    for (int i : order) {
      TreeNode n = tree.nodes[static_cast<std::size_t>(i)];
      if (!n.leaf()) {
        n.left = remap[static_cast<std::size_t>(n.left)];
        n.right = remap[static_cast<std::size_t>(n.right)];
      }
      out.push_back(n);
    }
    tree.nodes = std::move(out);
  }

  std::span<const double> data_;
  std::size_t nf_;
  std::span<const std::uint8_t> labels_;
  TreeParams params_;
  Tree* tree_ = nullptr;
};

}  // namespace detail

/// Trains on a row-major matrix (`labels.size()` rows of `feature_names.size()`
/// values each; NaN = missing). Labels are 1 for the positive class.
inline DecisionTree train_tree(std::span<const double> data, std::span<const std::uint8_t> labels,
                               std::vector<std::string> feature_names, const TreeParams& params = {}) {
  const std::size_t n = labels.size();
  const std::size_t nf = feature_names.size();
  if (n == 0) throw InsufficientDataError("empty training sample");
  if (data.size() != n * nf) throw ValidationError("training matrix shape mismatch");
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (positives == 0 || positives == n) throw InsufficientDataError("single-class training sample");
  if (n < 2) throw InsufficientDataError("need at least two training samples");

  DecisionTree model;
  model.feature_names = std::move(feature_names);
  detail::TreeBuilder builder(data, nf, labels, params);

  std::vector<detail::TreeBuilder::Case> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = {i, 1.0};

  if (params.boosting_trials <= 1) {
    model.stages.push_back(builder.build(all));
    model.stage_weights.push_back(1.0);
    return model;
  }

  std::mt19937_64 rng(params.seed);
  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  for (int t = 0; t < params.boosting_trials; ++t) {
    std::vector<detail::TreeBuilder::Case> sample;
    if (t == 0) {
      sample = all;
    } else {
      std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
      std::vector<double> multiplicity(n, 0.0);
      for (std::size_t k = 0; k < n; ++k) multiplicity[pick(rng)] += 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (multiplicity[i] > 0) sample.push_back({i, multiplicity[i]});
      }
      const auto pos = std::count_if(sample.begin(), sample.end(),
                                     [&](const auto& c) { return labels[c.row] == 1; });
      if (pos == 0 || pos == static_cast<long>(sample.size())) break;
    }
    Tree tree = builder.build(std::move(sample));
    double err = 0.0;
    std::vector<bool> correct(n);
    for (std::size_t i = 0; i < n; ++i) {
      const bool predicted = tree.probability(data.subspan(i * nf, nf)) > 0.5;
      correct[i] = predicted == (labels[i] == 1);
      if (!correct[i]) err += w[i];
    }
    if (err >= 0.5) {
      if (model.stages.empty()) {
        model.stages.push_back(std::move(tree));
        model.stage_weights.push_back(1.0);
      }
      break;
    }
    if (err <= 1e-12) {
      model.stages.push_back(std::move(tree));
      model.stage_weights.push_back(std::log(1e6));
      break;
    }
    const double beta = err / (1.0 - err);
    model.stages.push_back(std::move(tree));
    model.stage_weights.push_back(std::log(1.0 / beta));
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (correct[i]) w[i] *= beta;
      norm += w[i];
    }
    for (auto& x : w) x /= norm;
  }
  return model;
}

}  // namespace homelist
