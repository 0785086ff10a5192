#include "ppgan/error.hpp"
#include "ppgan/predict.hpp"
#include "ppgan/rng.hpp"

#include <doctest.h>

#include <algorithm>

using namespace ppgan;

namespace {

ClassifierSpec forest(std::uint64_t seed = 1)
{
    ClassifierSpec s;
    s.trees = 25;
    s.seed = seed;
    return s;
}

ClassifierSpec logistic()
{
    ClassifierSpec s;
    s.kind = ClassifierKind::logistic;
    return s;
}

void separable(Eigen::MatrixXd& x, Labels& y, std::uint64_t seed, int n = 60)
{
    Pcg64 rng(seed);
    x.resize(n, 2);
    y.resize(n);
    for (int i = 0; i < n; ++i) {
        y[i] = i % 2;
        const double sign = y[i] ? 1.0 : -1.0;
        x(i, 0) = sign * (0.5 + rng.uniform());
        x(i, 1) = 2.0 * rng.uniform() - 1.0 + 0.3 * sign;
    }
}

/// Rows whose features separate the classes, noisier at early dates.
std::vector<IndexVector> rows(std::uint64_t seed, int per_class, int date, Origin origin = Origin::real,
                              double spread = 1.0)
{
    Pcg64 rng(seed);
    std::vector<IndexVector> out;
    for (int i = 0; i < 2 * per_class; ++i) {
        IndexVector v;
        v.plot_id = i;
        v.date_index = date;
        v.origin = origin;
        v.health = i % 2 ? Health::unhealthy : Health::healthy;
        const double c = i % 2 ? 1.0 : -1.0;
        v.values = {c + spread * rng.normal(), 0.5 * c + spread * rng.normal(), rng.normal()};
        out.push_back(v);
    }
    return out;
}

} // namespace

TEST_CASE("both classifiers fit a separable toy set")
{
    Eigen::MatrixXd x;
    Labels y;
    separable(x, y, 3);
    for (const auto& spec : {forest(), logistic()}) {
        const auto model = train_classifier(x, y, spec);
        CHECK(model->predict(x) == y);
        CHECK(evaluate(*model, x, y).accuracy == 1.0);
    }
}

TEST_CASE("training rejects bad inputs")
{
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(6, 2);
    CHECK_THROWS_AS(train_classifier(x, Labels(6, 1), forest()), ValidationError);
    CHECK_THROWS_AS(train_classifier(x, Labels(5, 0), forest()), ValidationError);
    auto bad = forest();
    bad.trees = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("same seed gives the same predictions")
{
    Eigen::MatrixXd x, xt;
    Labels y, yt;
    const auto noisy = rows(5, 40, 0, Origin::real, 1.5);
    design_matrix(noisy, x, y);
    design_matrix(rows(6, 20, 0, Origin::real, 1.5), xt, yt);
    for (const auto& spec : {forest(9), logistic()})
        CHECK(train_classifier(x, y, spec)->predict(xt) == train_classifier(x, y, spec)->predict(xt));
    CHECK(train_classifier(x, y, forest(9))->predict(xt) != train_classifier(x, y, forest(10))->predict(xt));
}

TEST_CASE("depth one tree finds the separating threshold")
{
    Pcg64 rng(21);
    const int n = 30;
    Eigen::MatrixXd x(n, 1);
    Labels y(n);
    for (int i = 0; i < n; ++i) {
        y[i] = i % 3 == 0;
        x(i, 0) = y[i] ? 0.62 + 0.3 * rng.uniform() : 0.5 * rng.uniform();
    }
    // Oracle: the only zero-error cut is between the two classes' extremes.
    double max0 = -1, min1 = 2;
    for (int i = 0; i < n; ++i) (y[i] ? min1 : max0) = y[i] ? std::min(min1, x(i, 0)) : std::max(max0, x(i, 0));
    ClassifierSpec spec;
    spec.trees = 1;
    spec.max_depth = 1;
    spec.bootstrap = false;
    spec.min_leaf = 1;
    const auto model = train_classifier(x, y, spec);
    const auto* rf = dynamic_cast<const RandomForest*>(model.get());
    REQUIRE(rf != nullptr);
    const auto& root = rf->trees().at(0).at(0);
    CHECK(root.feature == 0);
    CHECK(root.threshold == doctest::Approx(0.5 * (max0 + min1)));
    CHECK(model->predict(x) == y);
}

TEST_CASE("scores from a confusion matrix")
{
    // TP 7, FN 3, FP 1, TN 9 with unhealthy as the positive class.
    Labels actual, pred;
    for (int i = 0; i < 7; ++i) actual.push_back(1), pred.push_back(1);
    for (int i = 0; i < 3; ++i) actual.push_back(1), pred.push_back(0);
    actual.push_back(0), pred.push_back(1);
    for (int i = 0; i < 9; ++i) actual.push_back(0), pred.push_back(0);
    const auto s = score_predictions(actual, pred);
    CHECK(s.unhealthy.recall == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(s.unhealthy.precision == doctest::Approx(0.875).epsilon(1e-12));
    CHECK(s.unhealthy.f1 == doctest::Approx(2 * 0.7 * 0.875 / 1.575).epsilon(1e-12));
    CHECK(s.unhealthy.f1 == doctest::Approx(0.7778).epsilon(1e-4));
    CHECK(s.accuracy == doctest::Approx(0.8));
    CHECK(s.healthy.accuracy == s.accuracy);
    int total = 0;
    for (const auto& row : s.confusion)
        for (int c : row) total += c;
    CHECK(total == 20);
    CHECK(s.confusion[1][0] == 3);
    const double p = 9.0 / 12.0, r = 0.9;
    CHECK(std::abs(s.healthy.f1 - 2 * p * r / (p + r)) < 1e-12);

    const auto perfect = score_predictions(actual, actual);
    for (double v : {perfect.accuracy, perfect.healthy.f1, perfect.unhealthy.f1, perfect.unhealthy.precision})
        CHECK(v == 1.0);

    Labels half{0, 0, 1, 1}, all_one(4, 1);
    const auto degenerate = score_predictions(half, all_one);
    CHECK(degenerate.unhealthy.recall == 1.0);
    CHECK(degenerate.healthy.recall == 0.0);
    CHECK(degenerate.accuracy == 0.5);
    CHECK(std::count(degenerate.zero_division.begin(), degenerate.zero_division.end(), "healthy.precision") == 1);
    CHECK_THROWS_AS(score_predictions(half, Labels{0}), ValidationError);
}

TEST_CASE("design matrix drops mild rows")
{
    auto r = rows(1, 3, 0);
    r[0].health = Health::mild;
    Eigen::MatrixXd x;
    Labels y;
    design_matrix(r, x, y);
    CHECK(x.rows() == 5);
    CHECK(y.size() == 5);
    CHECK(x.cols() == 3);
}

TEST_CASE("augmentation experiment")
{
    const auto train = rows(2, 30, 4, Origin::real, 1.2);
    const auto pool = rows(3, 30, 4, Origin::synthetic, 1.2);
    const auto test = rows(4, 20, 4, Origin::real, 1.2);
    const std::map<Health, int> none{{Health::healthy, 0}, {Health::unhealthy, 0}};
    for (const auto& spec : {forest(2), logistic()}) {
        const auto same = augmentation_experiment(train, pool, test, spec, none);
        CHECK(same.real == same.mixed);
        CHECK(same.test_count == 40);
    }
    const std::map<Health, int> some{{Health::healthy, 5}, {Health::unhealthy, 10}};
    const auto r = augmentation_experiment(train, pool, test, forest(2), some);
    CHECK(r.real_train_count == 60);
    CHECK(r.synthetic_added.at(Health::unhealthy) == 10);
    CHECK(r.synthetic_added.at(Health::healthy) == 5);

    auto bad_test = test;
    bad_test[0].origin = Origin::synthetic;
    CHECK_THROWS_AS(augmentation_experiment(train, pool, bad_test, forest(2), none), ValidationError);
    const std::map<Health, int> too_many{{Health::unhealthy, 31}};
    CHECK_THROWS_AS(augmentation_experiment(train, pool, test, forest(2), too_many), ValidationError);
    const std::map<Health, int> mild{{Health::mild, 1}};
    CHECK_THROWS_AS(augmentation_experiment(train, pool, test, forest(2), mild), ValidationError);
}

TEST_CASE("per date analysis")
{
    std::vector<IndexVector> train, synth;
    for (int d = 0; d < 4; ++d) {
        auto r = rows(10 + d, 15, d, Origin::real, 2.0 - 0.4 * d);
        train.insert(train.end(), r.begin(), r.end());
        auto s = rows(20 + d, 5, d, Origin::synthetic, 2.0 - 0.4 * d);
        synth.insert(synth.end(), s.begin(), s.end());
    }
    const auto test = rows(99, 20, 3, Origin::real, 0.8);
    const auto pts = per_date_analysis(train, synth, test, forest(5));
    REQUIRE(pts.size() == 4);
    for (std::size_t i = 1; i < pts.size(); ++i) {
        CHECK(pts[i].real_train_count >= pts[i - 1].real_train_count);
        CHECK(pts[i].mixed_train_count >= pts[i - 1].mixed_train_count);
    }
    CHECK(pts[3].mixed_train_count == pts[3].real_train_count + 40);
    const auto csv = timeseries_csv(pts);
    CHECK(csv.rfind("date,f1_real,f1_mixed\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);

    // The same rows relabelled with later dates: every cumulative set is the
    // base set repeated, which leaves the logistic fit unchanged.
    std::vector<IndexVector> repeated;
    const auto base = rows(30, 15, 0, Origin::real, 1.0);
    for (int d = 0; d < 3; ++d)
        for (auto r : base) {
            r.date_index = d;
            repeated.push_back(r);
        }
    const auto flat = per_date_analysis(repeated, {}, test, logistic());
    for (const auto& p : flat) {
        CHECK(p.f1_unhealthy_real == doctest::Approx(flat[0].f1_unhealthy_real).epsilon(1e-12));
        CHECK(p.f1_unhealthy_mixed == doctest::Approx(flat[0].f1_unhealthy_real).epsilon(1e-12));
    }

    CHECK_THROWS_AS(per_date_analysis(base, {}, test, logistic()), ValidationError);
}

TEST_CASE("final date holdout")
{
    std::vector<IndexVector> all;
    for (int d = 0; d < 3; ++d) {
        auto r = rows(40 + d, 10, d);
        all.insert(all.end(), r.begin(), r.end());
    }
    const auto split = holdout_final_date(all, 6, 7);
    CHECK(split.test.size() == 6);
    CHECK(split.train.size() == all.size() - 6);
    int unhealthy = 0;
    for (const auto& r : split.test) {
        CHECK(r.date_index == 2);
        unhealthy += r.health == Health::unhealthy;
    }
    CHECK(unhealthy == 3);
    const auto again = holdout_final_date(all, 6, 7);
    for (std::size_t i = 0; i < 6; ++i) CHECK(again.test[i].plot_id == split.test[i].plot_id);
    CHECK_THROWS_AS(holdout_final_date(all, 100, 7), ValidationError);
}

TEST_CASE("classifier spec json")
{
    auto s = forest(77);
    s.max_depth = 3;
    nlohmann::json j = s;
    CHECK(j.get<ClassifierSpec>() == s);
    CHECK(classifier_kind_from_name("logistic") == ClassifierKind::logistic);
    CHECK_THROWS_AS(classifier_kind_from_name("xgboost"), ValidationError);
}
