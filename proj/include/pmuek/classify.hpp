#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pmuek/features.hpp"

namespace pmuek {

enum class ModelKind { DecisionTree, RandomForest, Knn, LogisticRegression };

const char* model_kind_to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

// Hyperparameters for the four lightweight model families. All randomness is
// derived from `seed` (random forest trees get splitmix-derived per-tree
// seeds), so training is deterministic.
struct ModelSpec {
  ModelKind kind = ModelKind::RandomForest;
  struct Dt {
    int max_depth = 16;
    int min_leaf = 1;
  } dt;
  struct Rf {
    int n_trees = 100;
    int max_features = 0;  // 0 = round(sqrt(n_features))
    bool bootstrap = true;
  } rf;
  struct Knn {
    int k = 5;
  } knn;
  struct Lr {
    double l2 = 1e-4;
    double learning_rate = 0.5;
    int max_epochs = 2000;
    double tol = 1e-6;
  } lr;
  std::uint64_t seed = 1;

  void validate() const;
};

// Rows = estimated label, columns = true label.
struct ConfusionMatrix {
  std::vector<std::string> labels;                // sorted
  std::vector<std::vector<std::int64_t>> counts;  // labels x labels

  std::int64_t total() const;
  std::int64_t diagonal() const;
  std::string render() const;  // aligned text table
};

struct Metrics {
  double acc = 0.0;
  double pre = 0.0;  // macro-averaged over classes
  double rec = 0.0;
  double f1 = 0.0;
};

Metrics metrics_from_confusion(const ConfusionMatrix& cm);

class Model {
 public:
  virtual ~Model() = default;
  virtual std::string predict(const std::vector<double>& row) const = 0;
  virtual ModelKind kind() const = 0;

  const std::vector<std::string>& feature_schema() const { return feature_schema_; }
  const std::vector<std::string>& classes() const { return classes_; }

  // Schema-checked prediction for a row drawn from a table.
  std::string predict_checked(const FeatureTable& table, std::size_t row) const;

  std::string to_json() const;
  static std::unique_ptr<Model> from_json(const std::string& text);
  void save(const std::string& path) const;
  static std::unique_ptr<Model> load(const std::string& path);

  void set_metadata(std::vector<std::string> schema, std::vector<std::string> classes) {
    feature_schema_ = std::move(schema);
    classes_ = std::move(classes);
  }

 protected:
  virtual void serialize_into(void* json_obj) const = 0;
  std::vector<std::string> feature_schema_;
  std::vector<std::string> classes_;  // sorted label set
};

// Trains one model on a labeled table. Requires >= 2 classes and no NaNs.
std::unique_ptr<Model> train(const ModelSpec& spec, const FeatureTable& data);

struct Evaluation {
  ConfusionMatrix confusion;
  Metrics metrics;
};
Evaluation evaluate(const Model& model, const FeatureTable& test);

struct CrossValidation {
  Metrics mean;
  Metrics stddev;
  std::vector<Metrics> folds;
};
// Stratified k-fold; every class must have at least k members.
CrossValidation cross_validate(const ModelSpec& spec, const FeatureTable& data, int k,
                               std::uint64_t seed);

}  // namespace pmuek
