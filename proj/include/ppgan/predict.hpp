#pragma once

#include "ppgan/vegindex.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <array>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace ppgan {

enum class ClassifierKind { random_forest, logistic };

std::string_view classifier_kind_name(ClassifierKind k);
ClassifierKind classifier_kind_from_name(std::string_view name);

struct ClassifierSpec {
    ClassifierKind kind = ClassifierKind::random_forest;
    int trees = 100;
    int max_depth = 8;
    int min_leaf = 2;
    /// 0 selects floor(sqrt(feature count)), at least 1.
    int features_per_split = 0;
    bool bootstrap = true;
    std::uint64_t seed = 0;
    double l2 = 1e-2;
    int max_iters = 10000;
    double grad_tol = 1e-6;

    void validate() const;
    bool operator==(const ClassifierSpec&) const = default;
};

void to_json(nlohmann::json& j, const ClassifierSpec& s);
void from_json(const nlohmann::json& j, ClassifierSpec& s);

/// Binary labels: 1 = unhealthy, 0 = healthy.
using Labels = std::vector<int>;

class Classifier {
public:
    virtual ~Classifier() = default;
    virtual int predict_one(const Eigen::Ref<const Eigen::RowVectorXd>& x) const = 0;
    std::vector<int> predict(const Eigen::MatrixXd& x) const;
};

struct TreeNode {
    int feature = -1; ///< -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int label = 0;
};

class RandomForest final : public Classifier {
public:
    RandomForest(std::vector<std::vector<TreeNode>> trees) : trees_(std::move(trees)) {}
    int predict_one(const Eigen::Ref<const Eigen::RowVectorXd>& x) const override;
    const std::vector<std::vector<TreeNode>>& trees() const { return trees_; }

private:
    std::vector<std::vector<TreeNode>> trees_;
};

class LogisticModel final : public Classifier {
public:
    LogisticModel(Eigen::VectorXd weights, double bias, Eigen::RowVectorXd mean, Eigen::RowVectorXd scale, int iterations)
        : w_(std::move(weights)), b_(bias), mean_(std::move(mean)), scale_(std::move(scale)), iterations_(iterations)
    {
    }
    int predict_one(const Eigen::Ref<const Eigen::RowVectorXd>& x) const override;
    double probability(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
    int iterations() const { return iterations_; }

private:
    Eigen::VectorXd w_;
    double b_;
    Eigen::RowVectorXd mean_, scale_;
    int iterations_;
};

std::unique_ptr<Classifier> train_classifier(const Eigen::MatrixXd& x, const Labels& y, const ClassifierSpec& spec);

struct ClassScores {
    double accuracy = 0.0; ///< one-vs-rest
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool operator==(const ClassScores&) const = default;
};

struct EvalScores {
    double accuracy = 0.0;
    ClassScores healthy;
    ClassScores unhealthy;
    /// confusion[actual][predicted], index 0 healthy, 1 unhealthy.
    std::array<std::array<int, 2>, 2> confusion{};
    /// Quantities that hit a zero denominator and were set to 0.
    std::vector<std::string> zero_division;
    bool operator==(const EvalScores&) const = default;
};

void to_json(nlohmann::json& j, const EvalScores& s);

EvalScores score_predictions(const Labels& actual, const Labels& predicted);
EvalScores evaluate(const Classifier& model, const Eigen::MatrixXd& x, const Labels& y);

/// Feature matrix and labels from non-mild rows.
void design_matrix(const std::vector<IndexVector>& rows, Eigen::MatrixXd& x, Labels& y);

struct AugmentationResult {
    EvalScores real;
    EvalScores mixed;
    int real_train_count = 0;
    std::map<Health, int> synthetic_added;
    int test_count = 0;
};

void to_json(nlohmann::json& j, const AugmentationResult& r);

/// Trains on real_train and on real_train plus sampled synthetic rows; both
/// are scored on the same real-only test set.
AugmentationResult augmentation_experiment(const std::vector<IndexVector>& real_train,
                                           const std::vector<IndexVector>& synth_pool,
                                           const std::vector<IndexVector>& test, const ClassifierSpec& spec,
                                           const std::map<Health, int>& augment_counts);

struct DatePoint {
    int date_index = 0;
    double f1_unhealthy_real = 0.0;
    double f1_unhealthy_mixed = 0.0;
    int real_train_count = 0;
    int mixed_train_count = 0;
};

/// Cumulative training over dates <= d; every point is scored on `test`.
std::vector<DatePoint> per_date_analysis(const std::vector<IndexVector>& real_train,
                                         const std::vector<IndexVector>& synth, const std::vector<IndexVector>& test,
                                         const ClassifierSpec& spec);

struct RowSplit {
    std::vector<IndexVector> train;
    std::vector<IndexVector> test;
};

/// Holds out `test_size` real non-mild rows of the final date, stratified by
/// class; every other real non-mild row is training data.
RowSplit holdout_final_date(const std::vector<IndexVector>& rows, int test_size, std::uint64_t seed);

std::string timeseries_csv(const std::vector<DatePoint>& points);

} // namespace ppgan
