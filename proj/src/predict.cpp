#include "ppgan/predict.hpp"

#include "ppgan/error.hpp"
#include "ppgan/parallel.hpp"
#include "ppgan/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

namespace ppgan {

std::string_view classifier_kind_name(ClassifierKind k)
{
    return k == ClassifierKind::random_forest ? "random_forest" : "logistic";
}

ClassifierKind classifier_kind_from_name(std::string_view name)
{
    if (name == "random_forest") return ClassifierKind::random_forest;
    if (name == "logistic") return ClassifierKind::logistic;
    throw ValidationError("unknown classifier kind '" + std::string(name) + "'");
}

void ClassifierSpec::validate() const
{
    if (trees < 1) throw ValidationError("classifier: trees must be >= 1");
    if (max_depth < 1) throw ValidationError("classifier: max_depth must be >= 1");
    if (min_leaf < 1) throw ValidationError("classifier: min_leaf must be >= 1");
    if (features_per_split < 0) throw ValidationError("classifier: features_per_split must be >= 0");
    if (!(l2 >= 0.0)) throw ValidationError("classifier: l2 must be >= 0");
    if (max_iters < 1) throw ValidationError("classifier: max_iters must be >= 1");
}

void to_json(nlohmann::json& j, const ClassifierSpec& s)
{
    j = {{"kind", classifier_kind_name(s.kind)},
         {"trees", s.trees},
         {"max_depth", s.max_depth},
         {"min_leaf", s.min_leaf},
         {"features_per_split", s.features_per_split},
         {"bootstrap", s.bootstrap},
         {"seed", s.seed},
         {"l2", s.l2},
         {"max_iters", s.max_iters},
         {"grad_tol", s.grad_tol}};
}

void from_json(const nlohmann::json& j, ClassifierSpec& s)
{
    try {
        if (j.contains("kind")) s.kind = classifier_kind_from_name(j.at("kind").get<std::string>());
        s.trees = j.value("trees", s.trees);
        s.max_depth = j.value("max_depth", s.max_depth);
        s.min_leaf = j.value("min_leaf", s.min_leaf);
        s.features_per_split = j.value("features_per_split", s.features_per_split);
        s.bootstrap = j.value("bootstrap", s.bootstrap);
        s.seed = j.value("seed", s.seed);
        s.l2 = j.value("l2", s.l2);
        s.max_iters = j.value("max_iters", s.max_iters);
        s.grad_tol = j.value("grad_tol", s.grad_tol);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("classifier spec: ") + e.what());
    }
}

std::vector<int> Classifier::predict(const Eigen::MatrixXd& x) const
{
    std::vector<int> out(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = predict_one(x.row(i));
    return out;
}

int RandomForest::predict_one(const Eigen::Ref<const Eigen::RowVectorXd>& x) const
{
    int votes = 0;
    for (const auto& tree : trees_) {
        int node = 0;
        while (tree[node].feature >= 0) node = x(tree[node].feature) <= tree[node].threshold ? tree[node].left : tree[node].right;
        votes += tree[node].label;
    }
    return 2 * votes > static_cast<int>(trees_.size()) ? 1 : 0;
}

double LogisticModel::probability(const Eigen::Ref<const Eigen::RowVectorXd>& x) const
{
    const Eigen::RowVectorXd z = (x - mean_).cwiseQuotient(scale_);
    return 1.0 / (1.0 + std::exp(-(z.dot(w_.transpose()) + b_)));
}

int LogisticModel::predict_one(const Eigen::Ref<const Eigen::RowVectorXd>& x) const
{
    return probability(x) > 0.5 ? 1 : 0;
}

namespace {

double gini(int pos, int n)
{
    if (n == 0) return 0.0;
    const double p = static_cast<double>(pos) / n;
    return 1.0 - p * p - (1.0 - p) * (1.0 - p);
}

struct TreeBuilder {
    const Eigen::MatrixXd& x;
    const Labels& y;
    const ClassifierSpec& spec;
    int mtry;
    Pcg64 rng;
    std::vector<TreeNode> nodes;

    int leaf(const std::vector<int>& idx)
    {
        int pos = 0;
        for (int i : idx) pos += y[i];
        TreeNode n;
        n.label = 2 * pos > static_cast<int>(idx.size()) ? 1 : 0;
        nodes.push_back(n);
        return static_cast<int>(nodes.size()) - 1;
    }

    int build(std::vector<int> idx, int depth)
    {
        const int n = static_cast<int>(idx.size());
        int pos = 0;
        for (int i : idx) pos += y[i];
        if (depth >= spec.max_depth || pos == 0 || pos == n || n < 2 * spec.min_leaf) return leaf(idx);

        // Partial Fisher-Yates draw of mtry candidate features.
        const int d = static_cast<int>(x.cols());
        std::vector<int> features(d);
        std::iota(features.begin(), features.end(), 0);
        for (int k = 0; k < mtry; ++k)
            std::swap(features[k], features[k + static_cast<int>(rng.below(static_cast<std::uint64_t>(d - k)))]);

        const double parent = n * gini(pos, n);
        double best = parent - 1e-12;
        int best_feature = -1;
        double best_threshold = 0.0;
        std::vector<int> order(idx);
        for (int k = 0; k < mtry; ++k) {
            const int f = features[k];
            std::sort(order.begin(), order.end(), [&](int a, int b) {
                return x(a, f) < x(b, f) || (x(a, f) == x(b, f) && a < b);
            });
            int left_pos = 0;
            for (int s = 1; s < n; ++s) {
                left_pos += y[order[s - 1]];
                const double lo = x(order[s - 1], f), hi = x(order[s], f);
                if (lo == hi || s < spec.min_leaf || n - s < spec.min_leaf) continue;
                const double score = s * gini(left_pos, s) + (n - s) * gini(pos - left_pos, n - s);
                if (score < best) {
                    best = score;
                    best_feature = f;
                    best_threshold = 0.5 * (lo + hi);
                }
            }
        }
        if (best_feature < 0) return leaf(idx);

        std::vector<int> left, right;
        for (int i : idx) (x(i, best_feature) <= best_threshold ? left : right).push_back(i);
        const int self = static_cast<int>(nodes.size());
        nodes.emplace_back();
        nodes[self].feature = best_feature;
        nodes[self].threshold = best_threshold;
        const int l = build(std::move(left), depth + 1);
        const int r = build(std::move(right), depth + 1);
        nodes[self].left = l;
        nodes[self].right = r;
        return self;
    }
};

std::unique_ptr<Classifier> train_forest(const Eigen::MatrixXd& x, const Labels& y, const ClassifierSpec& spec)
{
    const int d = static_cast<int>(x.cols());
    int mtry = spec.features_per_split > 0 ? spec.features_per_split
                                           : static_cast<int>(std::floor(std::sqrt(static_cast<double>(d))));
    mtry = std::clamp(mtry, 1, d);
    const int n = static_cast<int>(x.rows());
    std::vector<std::vector<TreeNode>> trees(static_cast<std::size_t>(spec.trees));
    parallel_for(trees.size(), [&](std::size_t t) {
        TreeBuilder b{x, y, spec, mtry, Pcg64(derive_seed(spec.seed, t)), {}};
        std::vector<int> idx(n);
        if (spec.bootstrap)
            for (int& i : idx) i = static_cast<int>(b.rng.below(static_cast<std::uint64_t>(n)));
        else
            std::iota(idx.begin(), idx.end(), 0);
        b.build(std::move(idx), 0);
        trees[t] = std::move(b.nodes);
    });
    return std::make_unique<RandomForest>(std::move(trees));
}

std::unique_ptr<Classifier> train_logistic(const Eigen::MatrixXd& x, const Labels& y, const ClassifierSpec& spec)
{
    const Eigen::Index n = x.rows(), d = x.cols();
    const Eigen::RowVectorXd mean = x.colwise().mean();
    Eigen::RowVectorXd scale = ((x.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(n)).sqrt();
    for (Eigen::Index j = 0; j < d; ++j)
        if (!(scale(j) > 1e-12)) scale(j) = 1.0;
    const Eigen::MatrixXd z = (x.rowwise() - mean).array().rowwise() / scale.array();
    Eigen::VectorXd target(n);
    for (Eigen::Index i = 0; i < n; ++i) target(i) = y[i];

    // Step 1/L with L bounding the Hessian of the mean log-loss plus ridge.
    const double lipschitz = 0.25 * (1.0 + z.squaredNorm() / static_cast<double>(n)) + spec.l2;
    const double step = 1.0 / lipschitz;
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
    double b = 0.0;
    int it = 0;
    for (; it < spec.max_iters; ++it) {
        const Eigen::VectorXd p = ((-(z * w).array() - b).exp() + 1.0).inverse().matrix();
        const Eigen::VectorXd r = p - target;
        const Eigen::VectorXd gw = z.transpose() * r / static_cast<double>(n) + spec.l2 * w;
        const double gb = r.mean();
        if (std::sqrt(gw.squaredNorm() + gb * gb) < spec.grad_tol) break;
        w -= step * gw;
        b -= step * gb;
    }
    return std::make_unique<LogisticModel>(w, b, mean, scale, it);
}

} // namespace

std::unique_ptr<Classifier> train_classifier(const Eigen::MatrixXd& x, const Labels& y, const ClassifierSpec& spec)
{
    spec.validate();
    if (x.rows() == 0 || x.rows() != static_cast<Eigen::Index>(y.size()))
        throw ValidationError("train_classifier: feature rows and labels disagree");
    if (x.cols() == 0) throw ValidationError("train_classifier: no features");
    if (!x.allFinite()) throw ValidationError("train_classifier: non-finite feature value");
    std::set<int> classes(y.begin(), y.end());
    for (int c : classes)
        if (c != 0 && c != 1) throw ValidationError("train_classifier: labels must be 0 or 1");
    if (classes.size() < 2) throw ValidationError("train_classifier: training set holds a single class");
    return spec.kind == ClassifierKind::random_forest ? train_forest(x, y, spec) : train_logistic(x, y, spec);
}

EvalScores score_predictions(const Labels& actual, const Labels& predicted)
{
    if (actual.empty()) throw ValidationError("evaluate: empty test set");
    if (actual.size() != predicted.size()) throw ValidationError("evaluate: prediction count mismatch");
    EvalScores s;
    for (std::size_t i = 0; i < actual.size(); ++i) ++s.confusion[actual[i]][predicted[i]];
    const double total = static_cast<double>(actual.size());
    s.accuracy = (s.confusion[0][0] + s.confusion[1][1]) / total;

    auto ratio = [&](double num, double den, const std::string& what) {
        if (den == 0.0) {
            s.zero_division.push_back(what);
            return 0.0;
        }
        return num / den;
    };
    for (int c = 0; c < 2; ++c) {
        const double tp = s.confusion[c][c];
        const double fn = s.confusion[c][1 - c];
        const double fp = s.confusion[1 - c][c];
        const double tn = s.confusion[1 - c][1 - c];
        const std::string name(health_name(c == 0 ? Health::healthy : Health::unhealthy));
        ClassScores& cs = c == 0 ? s.healthy : s.unhealthy;
        cs.accuracy = (tp + tn) / total;
        cs.recall = ratio(tp, tp + fn, name + ".recall");
        cs.precision = ratio(tp, tp + fp, name + ".precision");
        cs.f1 = ratio(2.0 * cs.precision * cs.recall, cs.precision + cs.recall, name + ".f1");
    }
    return s;
}

EvalScores evaluate(const Classifier& model, const Eigen::MatrixXd& x, const Labels& y)
{
    return score_predictions(y, model.predict(x));
}

void design_matrix(const std::vector<IndexVector>& rows, Eigen::MatrixXd& x, Labels& y)
{
    std::vector<const IndexVector*> kept;
    for (const auto& r : rows)
        if (r.health != Health::mild) kept.push_back(&r);
    const Eigen::Index d = kept.empty() ? 0 : static_cast<Eigen::Index>(kept.front()->values.size());
    x.resize(static_cast<Eigen::Index>(kept.size()), d);
    y.clear();
    for (std::size_t i = 0; i < kept.size(); ++i) {
        if (static_cast<Eigen::Index>(kept[i]->values.size()) != d) throw ValidationError("feature rows differ in width");
        for (Eigen::Index j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), j) = kept[i]->values[j];
        y.push_back(kept[i]->health == Health::unhealthy ? 1 : 0);
    }
}

namespace {

void require_real(const std::vector<IndexVector>& rows, const std::string& what)
{
    for (const auto& r : rows)
        if (r.origin != Origin::real)
            throw ValidationError(what + " contains a synthetic sample (plot " + std::to_string(r.plot_id) + ")");
}

EvalScores fit_and_score(const std::vector<IndexVector>& train_rows, const Eigen::MatrixXd& xt, const Labels& yt,
                         const ClassifierSpec& spec)
{
    Eigen::MatrixXd x;
    Labels y;
    design_matrix(train_rows, x, y);
    return evaluate(*train_classifier(x, y, spec), xt, yt);
}

nlohmann::json class_json(const ClassScores& c)
{
    return {{"accuracy_one_vs_rest", c.accuracy}, {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}};
}

} // namespace

void to_json(nlohmann::json& j, const EvalScores& s)
{
    j = {{"accuracy", s.accuracy},
         {"healthy", class_json(s.healthy)},
         {"unhealthy", class_json(s.unhealthy)},
         {"confusion", s.confusion},
         {"zero_division", s.zero_division}};
}

void to_json(nlohmann::json& j, const AugmentationResult& r)
{
    nlohmann::json added = nlohmann::json::object();
    for (const auto& [h, n] : r.synthetic_added) added[std::string(health_name(h))] = n;
    j = {{"real", r.real},
         {"mixed", r.mixed},
         {"real_train_count", r.real_train_count},
         {"synthetic_added", added},
         {"test_count", r.test_count}};
}

AugmentationResult augmentation_experiment(const std::vector<IndexVector>& real_train,
                                           const std::vector<IndexVector>& synth_pool,
                                           const std::vector<IndexVector>& test, const ClassifierSpec& spec,
                                           const std::map<Health, int>& augment_counts)
{
    require_real(test, "test set");
    require_real(real_train, "real training set");
    Eigen::MatrixXd xt;
    Labels yt;
    design_matrix(test, xt, yt);
    if (yt.empty()) throw ValidationError("augmentation: test set has no healthy/unhealthy rows");

    std::vector<IndexVector> mixed = real_train;
    AugmentationResult out;
    Pcg64 rng(derive_seed(spec.seed, 0x5eed));
    for (const auto& [health, count] : augment_counts) {
        if (count < 0) throw ValidationError("augmentation: negative synthetic count");
        if (count == 0) continue;
        if (health == Health::mild) throw ValidationError("augmentation: mild samples are excluded from the experiment");
        std::vector<const IndexVector*> pool;
        for (const auto& r : synth_pool)
            if (r.health == health) pool.push_back(&r);
        if (static_cast<int>(pool.size()) < count)
            throw ValidationError("augmentation: requested " + std::to_string(count) + " synthetic " +
                                  std::string(health_name(health)) + " samples, pool has " + std::to_string(pool.size()));
        for (int k = 0; k < count; ++k) {
            std::swap(pool[k], pool[k + rng.below(pool.size() - static_cast<std::size_t>(k))]);
            mixed.push_back(*pool[k]);
        }
        out.synthetic_added[health] = count;
    }

    out.real = fit_and_score(real_train, xt, yt, spec);
    out.mixed = fit_and_score(mixed, xt, yt, spec);
    Eigen::MatrixXd xr;
    Labels yr;
    design_matrix(real_train, xr, yr);
    out.real_train_count = static_cast<int>(yr.size());
    out.test_count = static_cast<int>(yt.size());
    return out;
}

std::vector<DatePoint> per_date_analysis(const std::vector<IndexVector>& real_train,
                                         const std::vector<IndexVector>& synth, const std::vector<IndexVector>& test,
                                         const ClassifierSpec& spec)
{
    require_real(test, "test set");
    std::set<int> dates;
    for (const auto& r : real_train) dates.insert(r.date_index);
    if (dates.size() < 2) throw ValidationError("per-date analysis needs at least 2 dates");
    Eigen::MatrixXd xt;
    Labels yt;
    design_matrix(test, xt, yt);
    if (yt.empty()) throw ValidationError("per-date analysis: empty test set");

    std::vector<DatePoint> out;
    for (int d : dates) {
        std::vector<IndexVector> real_rows, mixed_rows;
        for (const auto& r : real_train)
            if (r.date_index <= d) real_rows.push_back(r);
        mixed_rows = real_rows;
        for (const auto& r : synth)
            if (r.date_index <= d) mixed_rows.push_back(r);
        DatePoint p;
        p.date_index = d;
        p.f1_unhealthy_real = fit_and_score(real_rows, xt, yt, spec).unhealthy.f1;
        p.f1_unhealthy_mixed = fit_and_score(mixed_rows, xt, yt, spec).unhealthy.f1;
        p.real_train_count = static_cast<int>(real_rows.size());
        p.mixed_train_count = static_cast<int>(mixed_rows.size());
        out.push_back(p);
    }
    return out;
}

RowSplit holdout_final_date(const std::vector<IndexVector>& rows, int test_size, std::uint64_t seed)
{
    if (test_size < 2) throw ValidationError("holdout: test_size must be >= 2");
    int final_date = -1;
    for (const auto& r : rows)
        if (r.origin == Origin::real) final_date = std::max(final_date, r.date_index);
    std::map<Health, std::vector<std::size_t>> pools;
    std::size_t pool_total = 0;
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (rows[i].origin == Origin::real && rows[i].health != Health::mild && rows[i].date_index == final_date) {
            pools[rows[i].health].push_back(i);
            ++pool_total;
        }
    if (pool_total <= static_cast<std::size_t>(test_size))
        throw ValidationError("holdout: final date has " + std::to_string(pool_total) + " rows, need more than " +
                              std::to_string(test_size));

    Pcg64 rng(derive_seed(seed, 0x7e57));
    std::vector<char> held(rows.size(), 0);
    int assigned = 0;
    for (auto it = pools.begin(); it != pools.end(); ++it) {
        auto& pool = it->second;
        const bool last = std::next(it) == pools.end();
        const int take = last ? test_size - assigned
                              : static_cast<int>(std::lround(static_cast<double>(test_size) * pool.size() / pool_total));
        if (take < 1 || take >= static_cast<int>(pool.size()))
            throw ValidationError("holdout: cannot stratify " + std::to_string(test_size) + " test rows over the classes");
        for (int k = 0; k < take; ++k) {
            std::swap(pool[k], pool[k + rng.below(pool.size() - static_cast<std::size_t>(k))]);
            held[pool[k]] = 1;
        }
        assigned += take;
    }
    RowSplit out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].origin != Origin::real || rows[i].health == Health::mild) continue;
        (held[i] ? out.test : out.train).push_back(rows[i]);
    }
    return out;
}

std::string timeseries_csv(const std::vector<DatePoint>& points)
{
    std::string s = "date,f1_real,f1_mixed\n";
    char buf[96];
    for (const auto& p : points) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g\n", p.date_index, p.f1_unhealthy_real, p.f1_unhealthy_mixed);
        s += buf;
    }
    return s;
}

} // namespace ppgan
