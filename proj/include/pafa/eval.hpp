#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pafa/dense.hpp"
#include "pafa/labels.hpp"

namespace pafa {

// Counts with rows = true class, cols = predicted class, index order per
// the label enums.
struct ConfusionMatrix {
  Eigen::MatrixXi counts;

  int n_classes() const { return static_cast<int>(counts.rows()); }
  long total() const { return counts.sum(); }
};

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels, int n_classes);

struct MetricTriple {
  double sp = 0;  // percent
  double se = 0;  // percent
  double score = 0;
};

// Specificity = accuracy on Normal; sensitivity = exact-class accuracy over
// the abnormal classes (diagonal counts); score = (sp + se) / 2. Works on
// 4x4 and 2x2 matrices; throws when either population is empty.
MetricTriple se_sp_score(const ConfusionMatrix& cm);

// Merge both predictions and labels with the 4->2 map, then score the 2x2
// matrix.
MetricTriple eval_two_class_from_four(std::span<const int> preds4, std::span<const int> labels4);

// Two decimal places, round half to even.
std::string format_percent(double value);

struct PatientAccuracy {
  std::uint32_t patient = 0;
  int n_samples = 0;
  int n_correct = 0;
  double accuracy_percent = 0;
  VectorX<double> centroid;  // mean embedding, empty when not requested
};

std::vector<PatientAccuracy> per_patient_accuracy(std::span<const int> preds,
                                                  std::span<const int> labels,
                                                  std::span<const std::uint32_t> patients);

struct NearestPatient {
  std::uint32_t patient = 0;
  double distance = 0;  // min Euclidean distance to any reference centroid
};

// Rank test patients by the distance of their embedding centroid to the
// closest reference centroid; ties break toward the smaller patient id.
std::vector<NearestPatient> nearest_test_patients(const MatrixX<double>& reference_centroids,
                                                  const MatrixX<double>& embeddings,
                                                  std::span<const std::uint32_t> patients,
                                                  int k);

struct PatientDelta {
  std::uint32_t patient = 0;
  double accuracy_a = 0;
  double accuracy_b = 0;
  double delta = 0;
};

// Per-patient accuracy comparison of two prediction sets over the same
// manifest rows. Requested patients missing from either run are an error.
std::vector<PatientDelta> compare_runs(std::span<const int> preds_a, std::span<const int> preds_b,
                                       std::span<const int> labels,
                                       std::span<const std::uint32_t> patients,
                                       std::span<const std::uint32_t> patients_of_interest);

// Reference centroid CSV: header name,c0..c{d-1}.
struct NamedCentroid {
  std::string name;
  VectorX<double> value;
};
std::vector<NamedCentroid> load_reference_centroids(const std::filesystem::path& path);

// --- model-driven evaluation -------------------------------------------------

struct Predictions {
  std::vector<std::string> sample_ids;
  std::vector<int> preds;
  std::vector<int> labels;
  std::vector<std::uint32_t> patients;
};

class FeatureStore;
template <typename Scalar>
class ModelParams;
struct SampleMeta;

// Argmax of the classifier logits over every given row, in row order.
Predictions predict(const ModelParams<float>& params, const std::vector<SampleMeta>& rows,
                    const FeatureStore& features);

struct EmbeddingExport {
  std::size_t rows_written = 0;
  std::vector<std::string> missing;  // samples without cached features
  bool used_encoder_fallback = false;
};

// One CSV row per sample: sample_id,patient,label,split,e0..e{d-1}, values
// with 7 significant digits. A stripped checkpoint falls back to encoder
// outputs and appends a fallback flag column.
EmbeddingExport export_embeddings(const ModelParams<float>& params,
                                  const std::vector<SampleMeta>& rows,
                                  const FeatureStore& features,
                                  const std::filesystem::path& out_path);

// predictions.csv: header sample_id,patient,label,pred.
void save_predictions_csv(const std::filesystem::path& path, const Predictions& p);
Predictions load_predictions_csv(const std::filesystem::path& path);

}  // namespace pafa
