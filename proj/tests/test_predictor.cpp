#include <doctest.h>

#include <cmath>
#include <vector>

#include "cogemm/error.hpp"
#include "cogemm/predictor.hpp"
#include "cogemm/rng.hpp"

using namespace cogemm;

namespace {

FeatureVector constant_features(double v) {
  FeatureVector x{};
  x.fill(v);
  return x;
}

// Two clusters in feature space: small inputs are 1S, large are 16P.
std::vector<ProfileRecord> two_cluster_dataset(std::size_t per_class, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ProfileRecord> out;
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const bool big = i % 2 == 1;
    ProfileRecord r;
    r.shape = {static_cast<std::int64_t>(i + 1), 64, 64, false, false, Precision::Fp32};
    for (auto& v : r.x) v = (big ? 10.0 : 1.0) + rng.uniform();
    r.label = big ? 16 : 1;
    r.speedup = {{2, 1.0}, {4, 1.0}, {8, 1.0}, {16, big ? 1.5 : 0.9}};
    out.push_back(r);
  }
  return out;
}

std::vector<FeatureVector> random_inputs(std::size_t n, Rng& rng) {
  std::vector<FeatureVector> xs(n);
  for (auto& x : xs)
    for (auto& v : x) v = rng.uniform();
  return xs;
}

}  // namespace

TEST_CASE("class names and indices") {
  CHECK(class_name(1) == "1S");
  CHECK(class_name(16) == "16P");
  CHECK(class_from_name("8P") == 8);
  CHECK(class_index(4) == 2);
  CHECK(class_cd(4) == 16);
  CHECK_THROWS_AS(class_from_name("3P"), ValidationError);
  CHECK(feature_names()[0] == "m");
  CHECK(feature_names()[17] == "waves_cd16");
}

TEST_CASE("labels need the threshold and prefer smaller CDs on ties") {
  CHECK(label_from_speedups({{2, 1.04}, {4, 1.0}, {8, 0.9}, {16, 0.8}}) == 1);
  CHECK(label_from_speedups({{2, 1.2}, {4, 1.2}, {8, 1.1}, {16, 1.0}}) == 2);
  CHECK(label_from_speedups({{2, 1.1}, {4, 1.0}, {8, 1.2}, {16, 1.3}}) == 16);
  CHECK(label_from_speedups({{2, 1.05}}) == 2);
}

TEST_CASE("zero weights give a uniform distribution and predict 1S") {
  const CdPredictor model;
  const Prediction p = model.predict(constant_features(3.0));
  for (double q : p.probabilities) CHECK(q == doctest::Approx(0.2));
  CHECK(p.cd == 1);
}

TEST_CASE("softmax matches reference values") {
  const Prediction p = softmax_prediction({0, 1, 2, 3, 4});
  CHECK(p.probabilities[0] == doctest::Approx(0.011656230956039607).epsilon(1e-12));
  CHECK(p.probabilities[2] == doctest::Approx(0.0861285444362687).epsilon(1e-12));
  CHECK(p.probabilities[4] == doctest::Approx(0.6364086465588308).epsilon(1e-12));
  CHECK(p.cd == 16);

  const Prediction tie = softmax_prediction({2, 2, 1, 0, -1});
  CHECK(tie.probabilities[0] == doctest::Approx(0.391695768812087).epsilon(1e-12));
  CHECK(tie.probabilities[4] == doctest::Approx(0.019501384021250404).epsilon(1e-12));
  CHECK(tie.cd == 1);
}

TEST_CASE("softmax survives huge scores") {
  const Prediction p = softmax_prediction({1e308, 0, -1e308, 0, 0});
  CHECK(p.probabilities[0] == doctest::Approx(1.0));
  CHECK(std::isfinite(p.probabilities[2]));
}

TEST_CASE("analytic gradients match finite differences") {
  Rng rng(11);
  const auto xs = random_inputs(12, rng);
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < xs.size(); ++i) labels.push_back(i % kNumClasses);
  Weights w(kNumClasses * kNumWeights);
  for (auto& v : w) v = rng.uniform(-0.5, 0.5);

  for (auto loss : {&softmax_loss, &ovr_loss}) {
    Weights grad;
    loss(w, xs, labels, 0.01, &grad);
    REQUIRE(grad.size() == w.size());
    const double h = 1e-6;
    for (std::size_t i = 0; i < w.size(); i += 7) {
      Weights up = w, down = w;
      up[i] += h;
      down[i] -= h;
      const double fd = (loss(up, xs, labels, 0.01, nullptr) - loss(down, xs, labels, 0.01, nullptr)) / (2 * h);
      CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("gradient descent does not increase the loss") {
  Rng rng(5);
  const auto xs = random_inputs(40, rng);
  std::vector<std::size_t> labels;
  for (const auto& x : xs) labels.push_back(x[0] > 0.5 ? 4 : 0);
  TrainParams p;
  p.epochs = 300;
  std::vector<double> history;
  const Weights w = fit_weights(xs, labels, p, &history);
  REQUIRE(history.size() == 301);
  for (std::size_t i = 1; i < history.size(); ++i) CHECK(history[i] <= history[i - 1] + 1e-12);
  CHECK(history.back() == doctest::Approx(softmax_loss(w, xs, labels, p.l2, nullptr)));
}

TEST_CASE("a separable pair is learned") {
  std::vector<FeatureVector> xs{constant_features(0.0), constant_features(1.0)};
  const std::vector<std::size_t> labels{0, 3};
  TrainParams p;
  p.lr = 0.5;
  p.epochs = 500;
  const Weights w = fit_weights(xs, labels, p);
  const CdPredictor model(w, NormBounds{constant_features(0.0), constant_features(1.0)});
  CHECK(model.predict(xs[0]).cd == 1);
  CHECK(model.predict(xs[1]).cd == 8);
}

TEST_CASE("training reaches the clusters and reports held-out keys") {
  const auto data = two_cluster_dataset(20, 3);
  TrainParams p;
  p.test_fraction = 0.25;
  const TrainResult r = train(data, p);
  CHECK(r.train_accuracy == 1.0);
  CHECK(r.test_accuracy == 1.0);
  CHECK(r.test_keys.size() == 10);
  CHECK(r.train_keys.size() == 30);
  CHECK(accuracy(r.model, data) == 1.0);

  const TrainResult again = train(data, p);
  CHECK(again.model == r.model);
  CHECK(again.test_keys == r.test_keys);
}

TEST_CASE("one-vs-rest and log1p variants train too") {
  const auto data = two_cluster_dataset(20, 4);
  TrainParams p;
  p.trainer = Trainer::OneVsRest;
  p.transform = FeatureTransform::Log1p;
  const TrainResult r = train(data, p);
  CHECK(r.train_accuracy == 1.0);
  CHECK(r.model.trainer() == Trainer::OneVsRest);
  double sum = 0;
  for (double q : r.model.predict(data[0].x).probabilities) sum += q;
  CHECK(sum == doctest::Approx(1.0));
}

TEST_CASE("degenerate training sets are rejected") {
  auto data = two_cluster_dataset(5, 1);
  for (auto& r : data) r.label = 1;
  CHECK_THROWS_AS(train(data, TrainParams{}), DegenerateTrainingError);
  data.resize(1);
  CHECK_THROWS_AS(train(data, TrainParams{}), DegenerateTrainingError);
}

TEST_CASE("normalization clamps and flattens constant columns") {
  std::vector<FeatureVector> xs{constant_features(1.0), constant_features(3.0)};
  xs[1][5] = 1.0;
  const NormBounds b = fit_bounds(xs);
  const FeatureVector y = normalize(constant_features(2.0), b);
  CHECK(y[0] == doctest::Approx(0.5));
  CHECK(y[5] == 0.0);
  CHECK(normalize(constant_features(9.0), b)[0] == 1.0);
  CHECK(normalize(constant_features(-9.0), b)[0] == 0.0);
  CHECK(transform_features(constant_features(std::exp(1.0) - 1.0), FeatureTransform::Log1p)[3] ==
        doctest::Approx(1.0));
}

TEST_CASE("dataset csv round trip") {
  auto data = two_cluster_dataset(3, 9);
  data[0].apps = {"gnmt", "bert"};
  data[0].x[4] = 0.1 + 0.2;  // not exactly representable in short decimal
  const std::string csv = dataset_to_csv(data);
  CHECK(csv.rfind("key,apps,m,n,k,num_wgs_cd1", 0) == 0);
  CHECK(dataset_from_csv(csv) == data);
  CHECK_THROWS_AS(dataset_from_csv("key,apps\nx,y\n"), ValidationError);
}

TEST_CASE("model json round trip") {
  const auto data = two_cluster_dataset(10, 2);
  TrainParams p;
  p.transform = FeatureTransform::Log1p;
  const TrainResult r = train(data, p);
  const nlohmann::json j = model_to_json(r, p);
  CHECK(model_from_json(nlohmann::json::parse(j.dump())) == r.model);
  CHECK(model_test_keys(j) == r.test_keys);
  nlohmann::json bad = j;
  bad["W"].erase(0);
  CHECK_THROWS_AS(model_from_json(bad), ValidationError);
}
