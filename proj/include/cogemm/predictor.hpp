#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogemm/tuner.hpp"

namespace cogemm {

inline constexpr std::size_t kNumFeatures = 18;
inline constexpr std::size_t kNumClasses = 5;
inline constexpr std::size_t kNumWeights = kNumFeatures + 1;  // trailing bias column

// Minimum speedup over sequential a CD must deliver to be preferred.
inline constexpr double kConcurrencyThreshold = 1.05;

/// [M, N, K] followed by (num_wgs, occupancy, waves) of the GO kernel of
/// each CD in 1, 2, 4, 8, 16 order.
using FeatureVector = std::array<double, kNumFeatures>;

const std::array<std::string, kNumFeatures>& feature_names();

std::string class_name(int cd);  // 1 -> "1S", 2 -> "2P", ...
int class_from_name(const std::string& name);
std::size_t class_index(int cd);
int class_cd(std::size_t index);

FeatureVector extract_features(const GoLibraryEntry& entry);

struct ProfileRecord {
  GemmShape shape;
  std::vector<std::string> apps;
  FeatureVector x{};
  std::map<int, double> speedup;  // CD -> sequential / concurrent
  int label = 1;

  bool operator==(const ProfileRecord&) const = default;
};

// CD with the largest speedup when it clears the threshold, else 1.
// Ties go to the smaller CD.
int label_from_speedups(const std::map<int, double>& speedup);

// n isolated runs back to back over n concurrent copies with the CD-n GO kernel.
double concurrent_speedup(const GoLibraryEntry& entry, int cd, const GoLibrary& lib);

std::vector<ProfileRecord> build_dataset(const GoLibrary& lib, Exec exec = Exec::Parallel);

std::string dataset_to_csv(std::span<const ProfileRecord> records);
std::vector<ProfileRecord> dataset_from_csv(const std::string& text);

struct NormBounds {
  FeatureVector min{};
  FeatureVector max{};

  bool operator==(const NormBounds&) const = default;
};

NormBounds fit_bounds(std::span<const FeatureVector> xs);

// Min-max scaling clamped to [0, 1]; constant columns map to 0.
FeatureVector normalize(const FeatureVector& x, const NormBounds& bounds);

enum class FeatureTransform { None, Log1p };
enum class Trainer { Softmax, OneVsRest };

FeatureVector transform_features(const FeatureVector& x, FeatureTransform t);

// Row-major kNumClasses x kNumWeights.
using Weights = std::vector<double>;

struct Prediction {
  std::array<double, kNumClasses> probabilities{};
  int cd = 1;
};

// Numerically stable softmax; argmax ties go to the smaller CD.
Prediction softmax_prediction(const std::array<double, kNumClasses>& scores);

class CdPredictor {
 public:
  CdPredictor() : weights_(kNumClasses * kNumWeights, 0.0) {}
  CdPredictor(Weights weights, NormBounds bounds, FeatureTransform transform = FeatureTransform::None,
              Trainer trainer = Trainer::Softmax);

  const Weights& weights() const { return weights_; }
  const NormBounds& bounds() const { return bounds_; }
  FeatureTransform transform() const { return transform_; }
  Trainer trainer() const { return trainer_; }

  // Transform + normalization of a raw feature vector.
  FeatureVector prepare(const FeatureVector& raw) const;
  std::array<double, kNumClasses> scores(const FeatureVector& prepared) const;
  Prediction predict(const FeatureVector& raw) const;

  bool operator==(const CdPredictor&) const = default;

 private:
  Weights weights_;
  NormBounds bounds_;
  FeatureTransform transform_ = FeatureTransform::None;
  Trainer trainer_ = Trainer::Softmax;
};

struct TrainParams {
  double lr = 0.1;
  int epochs = 2000;
  double l2 = 1e-4;
  std::uint64_t seed = 7;
  double test_fraction = 0.1;
  FeatureTransform transform = FeatureTransform::Log1p;
  Trainer trainer = Trainer::Softmax;
};

struct TrainResult {
  CdPredictor model;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::vector<double> loss_history;
  std::vector<std::string> train_keys;
  std::vector<std::string> test_keys;
};

/// Mean cross-entropy plus (l2/2)|W|^2 over non-bias weights. Fills grad
/// (same layout as w) when non-null. xs must already be normalized.
double softmax_loss(const Weights& w, std::span<const FeatureVector> xs, std::span<const std::size_t> labels,
                    double l2, Weights* grad);

// Per-class binary cross-entropy, summed over classes.
double ovr_loss(const Weights& w, std::span<const FeatureVector> xs, std::span<const std::size_t> labels, double l2,
                Weights* grad);

// Full-batch gradient descent on a fixed, already-normalized set.
Weights fit_weights(std::span<const FeatureVector> xs, std::span<const std::size_t> labels, const TrainParams& params,
                    std::vector<double>* loss_history = nullptr);

TrainResult train(std::span<const ProfileRecord> dataset, const TrainParams& params);

double accuracy(const CdPredictor& model, std::span<const ProfileRecord> records);

nlohmann::json model_to_json(const TrainResult& result, const TrainParams& params);
CdPredictor model_from_json(const nlohmann::json& j);
std::vector<std::string> model_test_keys(const nlohmann::json& j);

}  // namespace cogemm
