#include "cogemm/predictor.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "cogemm/error.hpp"
#include "cogemm/parallel.hpp"
#include "cogemm/rng.hpp"

namespace cogemm {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("dataset: '" + s + "' is not a number");
  }
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double w_at(const Weights& w, std::size_t c, std::size_t f) { return w[c * kNumWeights + f]; }

std::array<double, kNumClasses> raw_scores(const Weights& w, const FeatureVector& x) {
  std::array<double, kNumClasses> s{};
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    double acc = w_at(w, c, kNumFeatures);
    for (std::size_t f = 0; f < kNumFeatures; ++f) acc += w_at(w, c, f) * x[f];
    s[c] = acc;
  }
  return s;
}

double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

std::string transform_name(FeatureTransform t) { return t == FeatureTransform::Log1p ? "log1p" : "none"; }
std::string trainer_name(Trainer t) { return t == Trainer::OneVsRest ? "ovr" : "softmax"; }

}  // namespace

const std::array<std::string, kNumFeatures>& feature_names() {
  static const std::array<std::string, kNumFeatures> names = [] {
    std::array<std::string, kNumFeatures> n;
    n[0] = "m";
    n[1] = "n";
    n[2] = "k";
    std::size_t i = 3;
    for (int cd : kAllCds) {
      n[i++] = "num_wgs_cd" + std::to_string(cd);
      n[i++] = "occupancy_cd" + std::to_string(cd);
      n[i++] = "waves_cd" + std::to_string(cd);
    }
    return n;
  }();
  return names;
}

std::string class_name(int cd) {
  if (!is_supported_cd(cd)) throw ValidationError("unsupported CD " + std::to_string(cd));
  return std::to_string(cd) + (cd == 1 ? "S" : "P");
}

int class_from_name(const std::string& name) {
  for (int cd : kAllCds) {
    if (class_name(cd) == name) return cd;
  }
  throw ValidationError("unknown CD class '" + name + "'");
}

std::size_t class_index(int cd) {
  for (std::size_t i = 0; i < kAllCds.size(); ++i) {
    if (kAllCds[i] == cd) return i;
  }
  throw ValidationError("unsupported CD " + std::to_string(cd));
}

int class_cd(std::size_t index) { return kAllCds.at(index); }

FeatureVector extract_features(const GoLibraryEntry& entry) {
  FeatureVector x{};
  x[0] = static_cast<double>(entry.shape.m);
  x[1] = static_cast<double>(entry.shape.n);
  x[2] = static_cast<double>(entry.shape.k);
  std::size_t i = 3;
  for (int cd : kAllCds) {
    const KernelFeatures& f = entry.for_cd(cd).features;
    x[i++] = static_cast<double>(f.num_wgs);
    x[i++] = static_cast<double>(f.occupancy);
    x[i++] = f.waves;
  }
  return x;
}

int label_from_speedups(const std::map<int, double>& speedup) {
  int best_cd = 1;
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& [cd, s] : speedup) {
    if (s > best) {
      best = s;
      best_cd = cd;
    }
  }
  return best >= kConcurrencyThreshold ? best_cd : 1;
}

double concurrent_speedup(const GoLibraryEntry& entry, int cd, const GoLibrary& lib) {
  const KernelConfig& iso = lib.kernel(entry.isolated().kernel);
  const KernelConfig& go = lib.kernel(entry.for_cd(cd).kernel);
  const std::vector<SimJob> seq(static_cast<std::size_t>(cd), SimJob{entry.shape, iso});
  const std::vector<SimJob> conc(static_cast<std::size_t>(cd), SimJob{entry.shape, go});
  return simulate_sequential(seq, lib.gpu(), lib.card()) / simulate_concurrent(conc, lib.gpu(), lib.card()).makespan_s;
}

std::vector<ProfileRecord> build_dataset(const GoLibrary& lib, Exec exec) {
  if (lib.size() == 0) throw ValidationError("cannot profile an empty library");
  std::vector<ProfileRecord> out(lib.size());
  for_each_index(lib.size(), exec, [&](std::size_t i) {
    const GoLibraryEntry& e = lib.entries()[i];
    ProfileRecord r;
    r.shape = e.shape;
    r.apps = e.apps;
    r.x = extract_features(e);
    for (int cd : kConcurrentCds) r.speedup[cd] = concurrent_speedup(e, cd, lib);
    r.label = label_from_speedups(r.speedup);
    out[i] = std::move(r);
  });
  return out;
}

std::string dataset_to_csv(std::span<const ProfileRecord> records) {
  std::ostringstream ss;
  ss << "key,apps";
  for (const auto& name : feature_names()) ss << ',' << name;
  for (int cd : kConcurrentCds) ss << ",speedup_cd" << cd;
  ss << ",label\n";
  for (const auto& r : records) {
    ss << r.shape.key() << ',';
    for (std::size_t i = 0; i < r.apps.size(); ++i) ss << (i ? ";" : "") << r.apps[i];
    for (double v : r.x) ss << ',' << format_double(v);
    for (int cd : kConcurrentCds) {
      auto it = r.speedup.find(cd);
      ss << ',' << (it == r.speedup.end() ? std::string() : format_double(it->second));
    }
    ss << ',' << class_name(r.label) << '\n';
  }
  return ss.str();
}

std::vector<ProfileRecord> dataset_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("dataset is empty");
  const std::size_t expected = 2 + kNumFeatures + kConcurrentCds.size() + 1;
  if (split(line, ',').size() != expected) throw ValidationError("dataset header has the wrong column count");
  std::vector<ProfileRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != expected) {
      throw ValidationError("dataset line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                            " columns, expected " + std::to_string(expected));
    }
    ProfileRecord r;
    r.shape = GemmShape::from_key(cells[0]);
    if (!cells[1].empty()) r.apps = split(cells[1], ';');
    for (std::size_t f = 0; f < kNumFeatures; ++f) r.x[f] = parse_double(cells[2 + f]);
    for (std::size_t c = 0; c < kConcurrentCds.size(); ++c) {
      const std::string& cell = cells[2 + kNumFeatures + c];
      if (!cell.empty()) r.speedup[kConcurrentCds[c]] = parse_double(cell);
    }
    r.label = class_from_name(cells.back());
    out.push_back(std::move(r));
  }
  return out;
}

NormBounds fit_bounds(std::span<const FeatureVector> xs) {
  NormBounds b;
  b.min.fill(std::numeric_limits<double>::infinity());
  b.max.fill(-std::numeric_limits<double>::infinity());
  for (const auto& x : xs) {
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      b.min[f] = std::min(b.min[f], x[f]);
      b.max[f] = std::max(b.max[f], x[f]);
    }
  }
  if (xs.empty()) {
    b.min.fill(0.0);
    b.max.fill(0.0);
  }
  return b;
}

FeatureVector normalize(const FeatureVector& x, const NormBounds& bounds) {
  FeatureVector out{};
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    const double span = bounds.max[f] - bounds.min[f];
    out[f] = span > 0 ? std::clamp((x[f] - bounds.min[f]) / span, 0.0, 1.0) : 0.0;
  }
  return out;
}

FeatureVector transform_features(const FeatureVector& x, FeatureTransform t) {
  if (t == FeatureTransform::None) return x;
  FeatureVector out{};
  for (std::size_t f = 0; f < kNumFeatures; ++f) out[f] = std::log1p(std::max(x[f], 0.0));
  return out;
}

Prediction softmax_prediction(const std::array<double, kNumClasses>& scores) {
  Prediction p;
  const double top = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    p.probabilities[c] = std::exp(scores[c] - top);
    sum += p.probabilities[c];
  }
  std::size_t best = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    p.probabilities[c] /= sum;
    if (p.probabilities[c] > p.probabilities[best]) best = c;
  }
  p.cd = class_cd(best);
  return p;
}

CdPredictor::CdPredictor(Weights weights, NormBounds bounds, FeatureTransform transform, Trainer trainer)
    : weights_(std::move(weights)), bounds_(bounds), transform_(transform), trainer_(trainer) {
  if (weights_.size() != kNumClasses * kNumWeights) throw ValidationError("predictor weights have the wrong size");
}

FeatureVector CdPredictor::prepare(const FeatureVector& raw) const {
  return normalize(transform_features(raw, transform_), bounds_);
}

std::array<double, kNumClasses> CdPredictor::scores(const FeatureVector& prepared) const {
  return raw_scores(weights_, prepared);
}

Prediction CdPredictor::predict(const FeatureVector& raw) const {
  const auto s = scores(prepare(raw));
  if (trainer_ == Trainer::Softmax) return softmax_prediction(s);
  Prediction p;
  double sum = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    p.probabilities[c] = sigmoid(s[c]);
    sum += p.probabilities[c];
  }
  std::size_t best = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    p.probabilities[c] /= sum;
    if (p.probabilities[c] > p.probabilities[best]) best = c;
  }
  p.cd = class_cd(best);
  return p;
}

double softmax_loss(const Weights& w, std::span<const FeatureVector> xs, std::span<const std::size_t> labels,
                    double l2, Weights* grad) {
  if (grad) grad->assign(w.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(xs.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto s = raw_scores(w, xs[i]);
    const double top = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    for (double v : s) z += std::exp(v - top);
    const double log_z = top + std::log(z);
    loss += (log_z - s[labels[i]]) * inv_n;
    if (!grad) continue;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      const double d = (std::exp(s[c] - log_z) - (c == labels[i] ? 1.0 : 0.0)) * inv_n;
      for (std::size_t f = 0; f < kNumFeatures; ++f) (*grad)[c * kNumWeights + f] += d * xs[i][f];
      (*grad)[c * kNumWeights + kNumFeatures] += d;
    }
  }
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      const double v = w_at(w, c, f);
      loss += 0.5 * l2 * v * v;
      if (grad) (*grad)[c * kNumWeights + f] += l2 * v;
    }
  }
  return loss;
}

double ovr_loss(const Weights& w, std::span<const FeatureVector> xs, std::span<const std::size_t> labels, double l2,
                Weights* grad) {
  if (grad) grad->assign(w.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(xs.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto s = raw_scores(w, xs[i]);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      const double y = c == labels[i] ? 1.0 : 0.0;
      // log(1 + e^s) - y*s, written to avoid overflow
      const double softplus = s[c] > 0 ? s[c] + std::log1p(std::exp(-s[c])) : std::log1p(std::exp(s[c]));
      loss += (softplus - y * s[c]) * inv_n;
      if (!grad) continue;
      const double d = (sigmoid(s[c]) - y) * inv_n;
      for (std::size_t f = 0; f < kNumFeatures; ++f) (*grad)[c * kNumWeights + f] += d * xs[i][f];
      (*grad)[c * kNumWeights + kNumFeatures] += d;
    }
  }
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      const double v = w_at(w, c, f);
      loss += 0.5 * l2 * v * v;
      if (grad) (*grad)[c * kNumWeights + f] += l2 * v;
    }
  }
  return loss;
}

Weights fit_weights(std::span<const FeatureVector> xs, std::span<const std::size_t> labels, const TrainParams& params,
                    std::vector<double>* loss_history) {
  if (xs.empty() || xs.size() != labels.size()) throw ValidationError("training set is empty or ragged");
  if (!(params.lr > 0) || params.epochs < 0 || params.l2 < 0) throw ValidationError("bad training hyperparameters");
  Rng rng(params.seed);
  Weights w(kNumClasses * kNumWeights);
  for (double& v : w) v = rng.uniform(-0.01, 0.01);
  Weights grad;
  auto loss_fn = params.trainer == Trainer::OneVsRest ? ovr_loss : softmax_loss;
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    const double loss = loss_fn(w, xs, labels, params.l2, &grad);
    if (loss_history) loss_history->push_back(loss);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= params.lr * grad[i];
  }
  if (loss_history) loss_history->push_back(loss_fn(w, xs, labels, params.l2, nullptr));
  return w;
}

double accuracy(const CdPredictor& model, std::span<const ProfileRecord> records) {
  if (records.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& r : records) hits += model.predict(r.x).cd == r.label ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

TrainResult train(std::span<const ProfileRecord> dataset, const TrainParams& params) {
  if (dataset.size() < 2) throw DegenerateTrainingError("training needs at least two samples");
  {
    std::vector<int> labels;
    for (const auto& r : dataset) labels.push_back(r.label);
    std::sort(labels.begin(), labels.end());
    if (labels.front() == labels.back()) throw DegenerateTrainingError("dataset holds a single class");
  }
  if (!(params.test_fraction >= 0 && params.test_fraction < 1)) throw ValidationError("test fraction in [0, 1)");

  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(params.seed);
  rng.shuffle(order);
  const auto n_test = std::min(dataset.size() - 1,
                               static_cast<std::size_t>(std::llround(params.test_fraction * static_cast<double>(dataset.size()))));
  const std::size_t n_train = dataset.size() - n_test;

  std::vector<ProfileRecord> train_set, test_set;
  for (std::size_t i = 0; i < order.size(); ++i) (i < n_train ? train_set : test_set).push_back(dataset[order[i]]);

  std::vector<FeatureVector> transformed;
  for (const auto& r : train_set) transformed.push_back(transform_features(r.x, params.transform));
  const NormBounds bounds = fit_bounds(transformed);
  std::vector<FeatureVector> xs;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    xs.push_back(normalize(transformed[i], bounds));
    labels.push_back(class_index(train_set[i].label));
  }

  TrainResult result;
  Weights w = fit_weights(xs, labels, params, &result.loss_history);
  result.model = CdPredictor(std::move(w), bounds, params.transform, params.trainer);
  result.train_accuracy = accuracy(result.model, train_set);
  result.test_accuracy = accuracy(result.model, test_set);
  for (const auto& r : train_set) result.train_keys.push_back(r.shape.key());
  for (const auto& r : test_set) result.test_keys.push_back(r.shape.key());
  return result;
}

nlohmann::json model_to_json(const TrainResult& result, const TrainParams& params) {
  const CdPredictor& m = result.model;
  nlohmann::json classes = nlohmann::json::array();
  for (int cd : kAllCds) classes.push_back(class_name(cd));
  nlohmann::json w = nlohmann::json::array();
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    w.push_back(std::vector<double>(m.weights().begin() + static_cast<long>(c * kNumWeights),
                                    m.weights().begin() + static_cast<long>((c + 1) * kNumWeights)));
  }
  return nlohmann::json{
      {"classes", classes},
      {"feature_order", feature_names()},
      {"feature_transform", transform_name(m.transform())},
      {"trainer", trainer_name(m.trainer())},
      {"min", m.bounds().min},
      {"max", m.bounds().max},
      {"W", w},
      {"hyper", {{"lr", params.lr}, {"epochs", params.epochs}, {"l2", params.l2}, {"seed", params.seed}}},
      {"train_accuracy", result.train_accuracy},
      {"test_accuracy", result.test_accuracy},
      {"test_keys", result.test_keys},
  };
}

CdPredictor model_from_json(const nlohmann::json& j) {
  try {
    const auto order = j.at("feature_order").get<std::vector<std::string>>();
    if (order.size() != kNumFeatures || !std::equal(order.begin(), order.end(), feature_names().begin())) {
      throw ValidationError("model feature order does not match this build");
    }
    const auto classes = j.at("classes").get<std::vector<std::string>>();
    if (classes.size() != kNumClasses) throw ValidationError("model must have 5 classes");
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      if (class_from_name(classes[c]) != class_cd(c)) throw ValidationError("model class order mismatch");
    }
    NormBounds b;
    b.min = j.at("min").get<FeatureVector>();
    b.max = j.at("max").get<FeatureVector>();
    Weights w;
    for (const auto& row : j.at("W")) {
      const auto r = row.get<std::vector<double>>();
      if (r.size() != kNumWeights) throw ValidationError("model weight row has the wrong length");
      w.insert(w.end(), r.begin(), r.end());
    }
    const std::string t = j.value("feature_transform", std::string("none"));
    if (t != "none" && t != "log1p") throw ValidationError("unknown feature transform '" + t + "'");
    const std::string tr = j.value("trainer", std::string("softmax"));
    if (tr != "softmax" && tr != "ovr") throw ValidationError("unknown trainer '" + tr + "'");
    return CdPredictor(std::move(w), b, t == "log1p" ? FeatureTransform::Log1p : FeatureTransform::None,
                       tr == "ovr" ? Trainer::OneVsRest : Trainer::Softmax);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model: ") + e.what());
  }
}

std::vector<std::string> model_test_keys(const nlohmann::json& j) {
  return j.value("test_keys", std::vector<std::string>{});
}

}  // namespace cogemm
