#include "pmuek/classify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "pmuek/errors.hpp"
#include "pmuek/rng.hpp"

namespace pmuek {

const char* model_kind_to_string(ModelKind k) {
  switch (k) {
    case ModelKind::DecisionTree: return "decision_tree";
    case ModelKind::RandomForest: return "random_forest";
    case ModelKind::Knn: return "knn";
    case ModelKind::LogisticRegression: return "logistic_regression";
  }
  return "random_forest";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "decision_tree" || s == "dt") return ModelKind::DecisionTree;
  if (s == "random_forest" || s == "rf") return ModelKind::RandomForest;
  if (s == "knn") return ModelKind::Knn;
  if (s == "logistic_regression" || s == "lr") return ModelKind::LogisticRegression;
  throw ContractError("unknown model kind '" + s + "'");
}

void ModelSpec::validate() const {
  if (dt.max_depth < 1) throw ContractError("model spec: max_depth must be >= 1");
  if (dt.min_leaf < 1) throw ContractError("model spec: min_leaf must be >= 1");
  if (rf.n_trees < 1) throw ContractError("model spec: n_trees must be >= 1");
  if (rf.max_features < 0) throw ContractError("model spec: max_features must be >= 0");
  if (knn.k < 1) throw ContractError("model spec: k must be >= 1");
  if (lr.l2 < 0 || lr.learning_rate <= 0 || lr.max_epochs < 1 || lr.tol <= 0) {
    throw ContractError("model spec: invalid logistic regression settings");
  }
}

// ----- confusion & metrics ----------------------------------------------------

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (const auto& row : counts)
    for (auto c : row) t += c;
  return t;
}

std::int64_t ConfusionMatrix::diagonal() const {
  std::int64_t t = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) t += counts[i][i];
  return t;
}

std::string ConfusionMatrix::render() const {
  std::size_t width = 9;
  for (const auto& l : labels) width = std::max(width, l.size() + 2);
  std::ostringstream out;
  out << std::string(width, ' ') << "| true:\n" << std::string(width, ' ') << "|";
  for (const auto& l : labels) out << ' ' << l << std::string(width > l.size() ? width - l.size() - 1 : 1, ' ');
  out << "\n" << std::string(width + 1 + labels.size() * (width + 1), '-') << "\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << labels[i] << std::string(width - labels[i].size(), ' ') << "|";
    for (std::size_t j = 0; j < labels.size(); ++j) {
      std::string v = std::to_string(counts[i][j]);
      out << ' ' << v << std::string(width > v.size() ? width - v.size() - 1 : 1, ' ');
    }
    out << "\n";
  }
  return out.str();
}

Metrics metrics_from_confusion(const ConfusionMatrix& cm) {
  Metrics m;
  const std::size_t n = cm.labels.size();
  const std::int64_t total = cm.total();
  if (total == 0) return m;
  m.acc = static_cast<double>(cm.diagonal()) / static_cast<double>(total);
  double pre = 0.0, rec = 0.0, f1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::int64_t tp = cm.counts[i][i];
    std::int64_t row = 0, col = 0;
    for (std::size_t j = 0; j < n; ++j) {
      row += cm.counts[i][j];
      col += cm.counts[j][i];
    }
    const std::int64_t fp = row - tp;
    const std::int64_t fn = col - tp;
    const double p = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double r = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    pre += p;
    rec += r;
    f1 += (p + r) > 0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  m.pre = pre / static_cast<double>(n);
  m.rec = rec / static_cast<double>(n);
  m.f1 = f1 / static_cast<double>(n);
  return m;
}

// ----- shared helpers -----------------------------------------------------------

namespace {

struct TrainData {
  std::vector<std::vector<double>> x;  // rows
  std::vector<int> y;                  // class indices into classes
  std::vector<std::string> classes;    // sorted
  std::size_t n_features = 0;
};

TrainData prepare(const FeatureTable& table) {
  table.validate();
  if (table.n_rows() < 2) throw ContractError("train: need at least 2 rows");
  TrainData d;
  d.n_features = table.n_cols();
  std::vector<std::string> labels;
  for (const auto& l : table.labels) {
    if (l.empty()) throw ContractError("train: unlabeled row in training data");
    labels.push_back(l);
  }
  d.classes = labels;
  std::sort(d.classes.begin(), d.classes.end());
  d.classes.erase(std::unique(d.classes.begin(), d.classes.end()), d.classes.end());
  if (d.classes.size() < 2) throw ContractError("train: training data contains a single class");
  d.x = table.rows;
  d.y.reserve(labels.size());
  for (const auto& l : labels) {
    d.y.push_back(static_cast<int>(
        std::lower_bound(d.classes.begin(), d.classes.end(), l) - d.classes.begin()));
  }
  return d;
}

double gini(const std::vector<std::int64_t>& counts, std::int64_t n) {
  if (n == 0) return 0.0;
  double g = 1.0;
  for (auto c : counts) {
    double p = static_cast<double>(c) / static_cast<double>(n);
    g -= p * p;
  }
  return g;
}

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int label = -1;
};

// CART with Gini impurity. A split is accepted only if the weighted child
// impurity improves on the parent (checked explicitly while growing).
class TreeGrower {
 public:
  TreeGrower(const TrainData& data, const std::vector<std::size_t>& sample, int max_depth,
             int min_leaf, int max_features, Rng* rng)
      : data_(data),
        max_depth_(max_depth),
        min_leaf_(min_leaf),
        max_features_(max_features),
        rng_(rng) {
    grow(sample, 0);
  }

  std::vector<TreeNode> take() { return std::move(nodes_); }

 private:
  int grow(const std::vector<std::size_t>& idxs, int depth) {
    const int n_classes = static_cast<int>(data_.classes.size());
    std::vector<std::int64_t> counts(n_classes, 0);
    for (auto i : idxs) ++counts[data_.y[i]];
    const double parent_gini = gini(counts, static_cast<std::int64_t>(idxs.size()));

    int majority = 0;
    for (int c = 1; c < n_classes; ++c) {
      if (counts[c] > counts[majority]) majority = c;  // tie keeps the smaller index
    }

    const bool pure = counts[majority] == static_cast<std::int64_t>(idxs.size());
    if (pure || depth >= max_depth_ || idxs.size() < 2 * static_cast<std::size_t>(min_leaf_)) {
      return make_leaf(majority);
    }

    std::vector<int> features = candidate_features();
    int best_feature = -1;
    double best_threshold = 0.0;
    double best_impurity = parent_gini - 1e-12;  // must strictly improve
    for (int f : features) {
      std::vector<std::pair<double, int>> vals;
      vals.reserve(idxs.size());
      for (auto i : idxs) vals.emplace_back(data_.x[i][f], data_.y[i]);
      std::sort(vals.begin(), vals.end());
      std::vector<std::int64_t> left(n_classes, 0);
      std::vector<std::int64_t> right = counts;
      for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
        ++left[vals[k].second];
        --right[vals[k].second];
        if (vals[k].first == vals[k + 1].first) continue;
        const std::int64_t nl = static_cast<std::int64_t>(k + 1);
        const std::int64_t nr = static_cast<std::int64_t>(vals.size()) - nl;
        if (nl < min_leaf_ || nr < min_leaf_) continue;
        const double weighted =
            (static_cast<double>(nl) * gini(left, nl) + static_cast<double>(nr) * gini(right, nr)) /
            static_cast<double>(vals.size());
        if (weighted < best_impurity) {
          best_impurity = weighted;
          best_feature = f;
          best_threshold = 0.5 * (vals[k].first + vals[k + 1].first);
        }
      }
    }

    if (best_feature < 0) return make_leaf(majority);
    if (best_impurity > parent_gini + 1e-9) {
      throw ContractError("decision tree: split increased weighted impurity");
    }

    std::vector<std::size_t> li, ri;
    for (auto i : idxs) {
      (data_.x[i][best_feature] <= best_threshold ? li : ri).push_back(i);
    }
    const int node = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    nodes_[node].feature = best_feature;
    nodes_[node].threshold = best_threshold;
    const int l = grow(li, depth + 1);
    const int r = grow(ri, depth + 1);
    nodes_[node].left = l;
    nodes_[node].right = r;
    return node;
  }

  int make_leaf(int label) {
    nodes_.emplace_back();
    nodes_.back().label = label;
    return static_cast<int>(nodes_.size() - 1);
  }

  std::vector<int> candidate_features() {
    const int d = static_cast<int>(data_.n_features);
    std::vector<int> all(d);
    std::iota(all.begin(), all.end(), 0);
    if (!rng_ || max_features_ <= 0 || max_features_ >= d) return all;
    for (int j = 0; j < max_features_; ++j) {
      int pick = j + static_cast<int>(rng_->uniform_int(static_cast<std::uint64_t>(d - j)));
      std::swap(all[j], all[pick]);
    }
    all.resize(max_features_);
    std::sort(all.begin(), all.end());
    return all;
  }

  const TrainData& data_;
  int max_depth_;
  int min_leaf_;
  int max_features_;
  Rng* rng_;
  std::vector<TreeNode> nodes_;
};

int tree_predict(const std::vector<TreeNode>& nodes, const std::vector<double>& row) {
  // Root is node 0 unless the tree is a single leaf grown first.
  int at = 0;
  while (nodes[at].feature >= 0) {
    at = row[nodes[at].feature] <= nodes[at].threshold ? nodes[at].left : nodes[at].right;
  }
  return nodes[at].label;
}

nlohmann::json tree_to_json(const std::vector<TreeNode>& nodes) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& n : nodes) {
    arr.push_back({{"f", n.feature},
                   {"t", n.threshold},
                   {"l", n.left},
                   {"r", n.right},
                   {"c", n.label}});
  }
  return arr;
}

std::vector<TreeNode> tree_from_json(const nlohmann::json& arr) {
  std::vector<TreeNode> nodes;
  for (const auto& j : arr) {
    TreeNode n;
    n.feature = j.at("f").get<int>();
    n.threshold = j.at("t").get<double>();
    n.left = j.at("l").get<int>();
    n.right = j.at("r").get<int>();
    n.label = j.at("c").get<int>();
    nodes.push_back(n);
  }
  return nodes;
}

struct Scaler {
  std::vector<double> mean;
  std::vector<double> scale;

  static Scaler fit(const std::vector<std::vector<double>>& x, std::size_t d) {
    Scaler s;
    s.mean.assign(d, 0.0);
    s.scale.assign(d, 1.0);
    if (x.empty()) return s;
    for (const auto& row : x)
      for (std::size_t f = 0; f < d; ++f) s.mean[f] += row[f];
    for (auto& m : s.mean) m /= static_cast<double>(x.size());
    std::vector<double> var(d, 0.0);
    for (const auto& row : x)
      for (std::size_t f = 0; f < d; ++f) {
        double dlt = row[f] - s.mean[f];
        var[f] += dlt * dlt;
      }
    for (std::size_t f = 0; f < d; ++f) {
      double sd = std::sqrt(var[f] / static_cast<double>(x.size()));
      s.scale[f] = sd > 0.0 ? sd : 1.0;  // constant columns pass through centered
    }
    return s;
  }

  std::vector<double> apply(const std::vector<double>& row) const {
    std::vector<double> out(row.size());
    for (std::size_t f = 0; f < row.size(); ++f) out[f] = (row[f] - mean[f]) / scale[f];
    return out;
  }
};

}  // namespace

// ----- model implementations ----------------------------------------------------

std::string Model::predict_checked(const FeatureTable& table, std::size_t row) const {
  if (table.names != feature_schema_) {
    throw ContractError("predict: feature schema does not match the trained model");
  }
  return predict(table.rows[row]);
}

namespace {

class DecisionTreeModel : public Model {
 public:
  std::vector<TreeNode> nodes;

  std::string predict(const std::vector<double>& row) const override {
    if (row.size() != feature_schema_.size()) {
      throw ContractError("predict: feature width mismatch");
    }
    return classes_[tree_predict(nodes, row)];
  }
  ModelKind kind() const override { return ModelKind::DecisionTree; }

  void serialize_into(void* obj) const override {
    auto& j = *static_cast<nlohmann::json*>(obj);
    j["nodes"] = tree_to_json(nodes);
  }

  friend class ModelIo;
};

class RandomForestModel : public Model {
 public:
  std::vector<std::vector<TreeNode>> trees;

  std::string predict(const std::vector<double>& row) const override {
    if (row.size() != feature_schema_.size()) {
      throw ContractError("predict: feature width mismatch");
    }
    std::vector<int> votes(classes_.size(), 0);
    for (const auto& t : trees) ++votes[tree_predict(t, row)];
    int best = 0;
    for (std::size_t c = 1; c < votes.size(); ++c) {
      // Ties keep the smaller index = lexicographically smallest label.
      if (votes[c] > votes[best]) best = static_cast<int>(c);
    }
    return classes_[best];
  }
  ModelKind kind() const override { return ModelKind::RandomForest; }

  void serialize_into(void* obj) const override {
    auto& j = *static_cast<nlohmann::json*>(obj);
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : trees) arr.push_back(tree_to_json(t));
    j["trees"] = std::move(arr);
  }
};

class KnnModel : public Model {
 public:
  int k = 5;
  Scaler scaler;
  std::vector<std::vector<double>> x;  // standardized training rows
  std::vector<int> y;

  std::string predict(const std::vector<double>& row) const override {
    if (row.size() != feature_schema_.size()) {
      throw ContractError("predict: feature width mismatch");
    }
    std::vector<double> q = scaler.apply(row);
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      double d2 = 0.0;
      for (std::size_t f = 0; f < q.size(); ++f) {
        double d = q[f] - x[i][f];
        d2 += d * d;
      }
      dist.emplace_back(d2, i);
    }
    const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), dist.size());
    std::partial_sort(dist.begin(), dist.begin() + kk, dist.end());
    std::vector<int> votes(classes_.size(), 0);
    for (std::size_t i = 0; i < kk; ++i) ++votes[y[dist[i].second]];
    int best = 0;
    for (std::size_t c = 1; c < votes.size(); ++c) {
      if (votes[c] > votes[best]) best = static_cast<int>(c);
    }
    return classes_[best];
  }
  ModelKind kind() const override { return ModelKind::Knn; }

  void serialize_into(void* obj) const override {
    auto& j = *static_cast<nlohmann::json*>(obj);
    j["k"] = k;
    j["mean"] = scaler.mean;
    j["scale"] = scaler.scale;
    j["x"] = x;
    j["y"] = y;
  }
};

class LogisticRegressionModel : public Model {
 public:
  Scaler scaler;
  std::vector<std::vector<double>> weights;  // classes x (features + 1 bias)

  std::string predict(const std::vector<double>& row) const override {
    if (row.size() != feature_schema_.size()) {
      throw ContractError("predict: feature width mismatch");
    }
    std::vector<double> q = scaler.apply(row);
    int best = 0;
    double best_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < weights.size(); ++c) {
      double z = weights[c].back();
      for (std::size_t f = 0; f < q.size(); ++f) z += weights[c][f] * q[f];
      if (z > best_logit) {
        best_logit = z;
        best = static_cast<int>(c);
      }
    }
    return classes_[best];
  }
  ModelKind kind() const override { return ModelKind::LogisticRegression; }

  void serialize_into(void* obj) const override {
    auto& j = *static_cast<nlohmann::json*>(obj);
    j["mean"] = scaler.mean;
    j["scale"] = scaler.scale;
    j["weights"] = weights;
  }
};

void fit_logistic(LogisticRegressionModel& m, const TrainData& d, const ModelSpec::Lr& lr) {
  const std::size_t n = d.x.size();
  const std::size_t nf = d.n_features;
  const std::size_t nc = d.classes.size();
  std::vector<std::vector<double>> xs(n);
  for (std::size_t i = 0; i < n; ++i) xs[i] = m.scaler.apply(d.x[i]);
  m.weights.assign(nc, std::vector<double>(nf + 1, 0.0));

  double step = lr.learning_rate;
  double prev_loss = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> grad(nc, std::vector<double>(nf + 1, 0.0));
  std::vector<double> logits(nc);
  for (int epoch = 0; epoch < lr.max_epochs; ++epoch) {
    for (auto& g : grad) std::fill(g.begin(), g.end(), 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double zmax = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < nc; ++c) {
        double z = m.weights[c].back();
        for (std::size_t f = 0; f < nf; ++f) z += m.weights[c][f] * xs[i][f];
        logits[c] = z;
        zmax = std::max(zmax, z);
      }
      double denom = 0.0;
      for (std::size_t c = 0; c < nc; ++c) denom += std::exp(logits[c] - zmax);
      for (std::size_t c = 0; c < nc; ++c) {
        const double p = std::exp(logits[c] - zmax) / denom;
        const double err = p - (static_cast<int>(c) == d.y[i] ? 1.0 : 0.0);
        for (std::size_t f = 0; f < nf; ++f) grad[c][f] += err * xs[i][f];
        grad[c][nf] += err;
        if (static_cast<int>(c) == d.y[i]) loss -= logits[c] - zmax - std::log(denom);
      }
    }
    loss /= static_cast<double>(n);
    for (std::size_t c = 0; c < nc; ++c) {
      for (std::size_t f = 0; f < nf; ++f) {
        grad[c][f] = grad[c][f] / static_cast<double>(n) + lr.l2 * m.weights[c][f];
        loss += 0.5 * lr.l2 * m.weights[c][f] * m.weights[c][f];
      }
      grad[c][nf] /= static_cast<double>(n);
    }
    if (epoch > 0) {
      if (loss > prev_loss) step *= 0.5;  // simple deterministic backoff
      if (std::abs(prev_loss - loss) <= lr.tol * std::max(1.0, std::abs(loss))) break;
    }
    prev_loss = loss;
    for (std::size_t c = 0; c < nc; ++c)
      for (std::size_t f = 0; f <= nf; ++f) m.weights[c][f] -= step * grad[c][f];
  }
}

}  // namespace

std::unique_ptr<Model> train(const ModelSpec& spec, const FeatureTable& data) {
  spec.validate();
  TrainData d = prepare(data);

  switch (spec.kind) {
    case ModelKind::DecisionTree: {
      auto m = std::make_unique<DecisionTreeModel>();
      m->set_metadata(data.names, d.classes);
      std::vector<std::size_t> all(d.x.size());
      std::iota(all.begin(), all.end(), std::size_t{0});
      TreeGrower grower(d, all, spec.dt.max_depth, spec.dt.min_leaf, 0, nullptr);
      m->nodes = grower.take();
      return m;
    }
    case ModelKind::RandomForest: {
      auto m = std::make_unique<RandomForestModel>();
      m->set_metadata(data.names, d.classes);
      int max_features = spec.rf.max_features;
      if (max_features <= 0) {
        max_features = static_cast<int>(std::lround(std::sqrt(static_cast<double>(d.n_features))));
        max_features = std::max(1, max_features);
      }
      m->trees.reserve(spec.rf.n_trees);
      for (int t = 0; t < spec.rf.n_trees; ++t) {
        Rng tree_rng(mix64(spec.seed, static_cast<std::uint64_t>(t) + 0x5eed));
        std::vector<std::size_t> sample;
        sample.reserve(d.x.size());
        if (spec.rf.bootstrap) {
          for (std::size_t i = 0; i < d.x.size(); ++i) {
            sample.push_back(static_cast<std::size_t>(tree_rng.uniform_int(d.x.size())));
          }
        } else {
          sample.resize(d.x.size());
          std::iota(sample.begin(), sample.end(), std::size_t{0});
        }
        // A bootstrap draw can miss classes entirely; that is fine for a
        // single tree, the ensemble still votes over all classes.
        TreeGrower grower(d, sample, spec.dt.max_depth, spec.dt.min_leaf, max_features, &tree_rng);
        m->trees.push_back(grower.take());
      }
      return m;
    }
    case ModelKind::Knn: {
      auto m = std::make_unique<KnnModel>();
      m->set_metadata(data.names, d.classes);
      m->k = spec.knn.k;
      m->scaler = Scaler::fit(d.x, d.n_features);
      m->x.reserve(d.x.size());
      for (const auto& row : d.x) m->x.push_back(m->scaler.apply(row));
      m->y = d.y;
      return m;
    }
    case ModelKind::LogisticRegression: {
      auto m = std::make_unique<LogisticRegressionModel>();
      m->set_metadata(data.names, d.classes);
      m->scaler = Scaler::fit(d.x, d.n_features);
      fit_logistic(*m, d, spec.lr);
      return m;
    }
  }
  throw ContractError("train: unknown model kind");
}

// ----- persistence ----------------------------------------------------------------

std::string Model::to_json() const {
  nlohmann::json j;
  j["format"] = "pmu-eventkit-model";
  j["version"] = 1;
  j["kind"] = model_kind_to_string(kind());
  j["feature_schema"] = feature_schema_;
  j["classes"] = classes_;
  {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& name : feature_schema_) h = mix64(h, hash_str(name));
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    j["schema_hash"] = buf;
  }
  nlohmann::json body;
  serialize_into(&body);
  j["model"] = std::move(body);
  return j.dump(2) + "\n";
}

std::unique_ptr<Model> Model::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("invalid model JSON: ") + e.what());
  }
  if (j.value("format", "") != "pmu-eventkit-model" || j.value("version", 0) != 1) {
    throw IoError("unsupported model file format");
  }
  const ModelKind kind = model_kind_from_string(j.at("kind").get<std::string>());
  std::unique_ptr<Model> model;
  const auto& body = j.at("model");
  switch (kind) {
    case ModelKind::DecisionTree: {
      auto m = std::make_unique<DecisionTreeModel>();
      m->nodes = tree_from_json(body.at("nodes"));
      model = std::move(m);
      break;
    }
    case ModelKind::RandomForest: {
      auto m = std::make_unique<RandomForestModel>();
      for (const auto& t : body.at("trees")) m->trees.push_back(tree_from_json(t));
      model = std::move(m);
      break;
    }
    case ModelKind::Knn: {
      auto m = std::make_unique<KnnModel>();
      m->k = body.at("k").get<int>();
      m->scaler.mean = body.at("mean").get<std::vector<double>>();
      m->scaler.scale = body.at("scale").get<std::vector<double>>();
      m->x = body.at("x").get<std::vector<std::vector<double>>>();
      m->y = body.at("y").get<std::vector<int>>();
      model = std::move(m);
      break;
    }
    case ModelKind::LogisticRegression: {
      auto m = std::make_unique<LogisticRegressionModel>();
      m->scaler.mean = body.at("mean").get<std::vector<double>>();
      m->scaler.scale = body.at("scale").get<std::vector<double>>();
      m->weights = body.at("weights").get<std::vector<std::vector<double>>>();
      model = std::move(m);
      break;
    }
  }
  model->set_metadata(j.at("feature_schema").get<std::vector<std::string>>(),
                      j.at("classes").get<std::vector<std::string>>());
  return model;
}

void Model::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot create model file '" + path + "'");
  out << to_json();
}

std::unique_ptr<Model> Model::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

// ----- evaluation -------------------------------------------------------------------

Evaluation evaluate(const Model& model, const FeatureTable& test) {
  test.validate();
  if (test.n_rows() == 0) throw ContractError("evaluate: empty test set");
  if (test.names != model.feature_schema()) {
    throw ContractError("evaluate: feature schema does not match the trained model");
  }
  std::vector<std::string> labels = model.classes();
  for (const auto& l : test.labels) {
    if (l.empty()) throw ContractError("evaluate: unlabeled test row");
    if (std::find(labels.begin(), labels.end(), l) == labels.end()) labels.push_back(l);
  }
  std::sort(labels.begin(), labels.end());

  Evaluation ev;
  ev.confusion.labels = labels;
  ev.confusion.counts.assign(labels.size(), std::vector<std::int64_t>(labels.size(), 0));
  auto index_of = [&](const std::string& l) {
    return static_cast<std::size_t>(std::lower_bound(labels.begin(), labels.end(), l) -
                                    labels.begin());
  };
  for (std::size_t i = 0; i < test.n_rows(); ++i) {
    const std::string pred = model.predict(test.rows[i]);
    ++ev.confusion.counts[index_of(pred)][index_of(test.labels[i])];
  }
  ev.metrics = metrics_from_confusion(ev.confusion);
  return ev;
}

CrossValidation cross_validate(const ModelSpec& spec, const FeatureTable& data, int k,
                               std::uint64_t seed) {
  data.validate();
  if (k < 2) throw ContractError("cross_validate: k must be >= 2");

  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < data.n_rows(); ++i) {
    if (data.labels[i].empty()) throw ContractError("cross_validate: unlabeled row");
    by_class[data.labels[i]].push_back(i);
  }
  for (const auto& [label, idxs] : by_class) {
    if (idxs.size() < static_cast<std::size_t>(k)) {
      throw ContractError("cross_validate: class '" + label + "' has fewer than k members");
    }
  }

  std::vector<std::vector<std::size_t>> folds(k);
  for (auto& [label, idxs] : by_class) {
    Rng rng = Rng(seed).derive(label);
    for (std::size_t j = idxs.size(); j > 1; --j) {
      std::swap(idxs[j - 1], idxs[rng.uniform_int(j)]);
    }
    for (std::size_t j = 0; j < idxs.size(); ++j) folds[j % k].push_back(idxs[j]);
  }

  CrossValidation cv;
  for (int f = 0; f < k; ++f) {
    FeatureTable train_set, test_set;
    train_set.names = data.names;
    test_set.names = data.names;
    std::vector<bool> in_test(data.n_rows(), false);
    for (auto i : folds[f]) in_test[i] = true;
    for (std::size_t i = 0; i < data.n_rows(); ++i) {
      (in_test[i] ? test_set : train_set).push_row(data.rows[i], data.labels[i]);
    }
    auto model = train(spec, train_set);
    cv.folds.push_back(evaluate(*model, test_set).metrics);
  }

  auto mean_of = [&](auto sel) {
    double s = 0.0;
    for (const auto& m : cv.folds) s += sel(m);
    return s / static_cast<double>(cv.folds.size());
  };
  auto std_of = [&](auto sel, double mean) {
    double s = 0.0;
    for (const auto& m : cv.folds) {
      double d = sel(m) - mean;
      s += d * d;
    }
    return std::sqrt(s / static_cast<double>(cv.folds.size()));
  };
  cv.mean.acc = mean_of([](const Metrics& m) { return m.acc; });
  cv.mean.pre = mean_of([](const Metrics& m) { return m.pre; });
  cv.mean.rec = mean_of([](const Metrics& m) { return m.rec; });
  cv.mean.f1 = mean_of([](const Metrics& m) { return m.f1; });
  cv.stddev.acc = std_of([](const Metrics& m) { return m.acc; }, cv.mean.acc);
  cv.stddev.pre = std_of([](const Metrics& m) { return m.pre; }, cv.mean.pre);
  cv.stddev.rec = std_of([](const Metrics& m) { return m.rec; }, cv.mean.rec);
  cv.stddev.f1 = std_of([](const Metrics& m) { return m.f1; }, cv.mean.f1);
  return cv;
}

}  // namespace pmuek
