#include "pafa/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "pafa/errors.hpp"

namespace pafa {

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels, int n_classes) {
  if (preds.size() != labels.size())
    throw DataError("confusion: " + std::to_string(preds.size()) + " predictions vs " +
                    std::to_string(labels.size()) + " labels");
  ConfusionMatrix cm;
  cm.counts = Eigen::MatrixXi::Zero(n_classes, n_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int t = labels[i], p = preds[i];
    if (t < 0 || t >= n_classes || p < 0 || p >= n_classes)
      throw DataError("confusion: class index out of range at sample " + std::to_string(i));
    ++cm.counts(t, p);
  }
  return cm;
}

MetricTriple se_sp_score(const ConfusionMatrix& cm) {
  const int n = cm.n_classes();
  if (n < 2) throw DataError("confusion matrix needs at least 2 classes");
  const long normal_total = cm.counts.row(0).sum();
  long abnormal_total = 0, abnormal_correct = 0;
  for (int c = 1; c < n; ++c) {
    abnormal_total += cm.counts.row(c).sum();
    abnormal_correct += cm.counts(c, c);
  }
  if (normal_total == 0) throw DataError("no normal samples to evaluate");
  if (abnormal_total == 0) throw DataError("no abnormal samples to evaluate");
  MetricTriple m;
  m.sp = 100.0 * static_cast<double>(cm.counts(0, 0)) / static_cast<double>(normal_total);
  m.se = 100.0 * static_cast<double>(abnormal_correct) / static_cast<double>(abnormal_total);
  m.score = (m.sp + m.se) / 2.0;
  return m;
}

MetricTriple eval_two_class_from_four(std::span<const int> preds4, std::span<const int> labels4) {
  std::vector<int> p2(preds4.size()), l2(labels4.size());
  auto merge = [](int v) {
    return static_cast<int>(map_4to2(static_cast<ClassLabel4>(v)));
  };
  std::transform(preds4.begin(), preds4.end(), p2.begin(), merge);
  std::transform(labels4.begin(), labels4.end(), l2.begin(), merge);
  return se_sp_score(confusion(p2, l2, kNumClasses2));
}

std::string format_percent(double value) {
  // nearbyint in the default rounding mode ties to even.
  const double rounded = std::nearbyint(value * 100.0) / 100.0;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", rounded);
  return buf;
}

std::vector<PatientAccuracy> per_patient_accuracy(std::span<const int> preds,
                                                  std::span<const int> labels,
                                                  std::span<const std::uint32_t> patients) {
  if (preds.size() != labels.size() || preds.size() != patients.size())
    throw DataError("per_patient_accuracy: input size mismatch");
  std::map<std::uint32_t, PatientAccuracy> acc;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    auto& a = acc[patients[i]];
    a.patient = patients[i];
    ++a.n_samples;
    if (preds[i] == labels[i]) ++a.n_correct;
  }
  std::vector<PatientAccuracy> out;
  for (auto& [id, a] : acc) {
    a.accuracy_percent = 100.0 * a.n_correct / a.n_samples;
    out.push_back(a);
  }
  return out;
}

std::vector<NearestPatient> nearest_test_patients(const MatrixX<double>& reference_centroids,
                                                  const MatrixX<double>& embeddings,
                                                  std::span<const std::uint32_t> patients,
                                                  int k) {
  if (reference_centroids.rows() == 0) throw DataError("no reference centroids given");
  if (embeddings.rows() != static_cast<Index>(patients.size()))
    throw DataError("nearest_test_patients: embeddings vs patients size mismatch");

  std::map<std::uint32_t, std::pair<VectorX<double>, int>> sums;
  for (Index i = 0; i < embeddings.rows(); ++i) {
    auto& [sum, count] = sums[patients[static_cast<std::size_t>(i)]];
    if (count == 0) sum = VectorX<double>::Zero(embeddings.cols());
    sum += embeddings.row(i).transpose();
    ++count;
  }
  if (k < 0 || static_cast<std::size_t>(k) > sums.size())
    throw DataError("k exceeds the number of test patients");

  std::vector<NearestPatient> ranked;
  for (const auto& [id, entry] : sums) {
    const VectorX<double> centroid = entry.first / entry.second;
    double best = std::numeric_limits<double>::infinity();
    for (Index r = 0; r < reference_centroids.rows(); ++r)
      best = std::min(best, (centroid - reference_centroids.row(r).transpose()).norm());
    ranked.push_back({id, best});
  }
  std::sort(ranked.begin(), ranked.end(), [](const NearestPatient& a, const NearestPatient& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.patient < b.patient;
  });
  ranked.resize(static_cast<std::size_t>(k));
  return ranked;
}

std::vector<PatientDelta> compare_runs(std::span<const int> preds_a, std::span<const int> preds_b,
                                       std::span<const int> labels,
                                       std::span<const std::uint32_t> patients,
                                       std::span<const std::uint32_t> patients_of_interest) {
  if (preds_a.size() != labels.size() || preds_b.size() != labels.size() ||
      patients.size() != labels.size())
    throw DataError("compare_runs: input size mismatch");
  const auto acc_a = per_patient_accuracy(preds_a, labels, patients);
  const auto acc_b = per_patient_accuracy(preds_b, labels, patients);
  auto find = [](const std::vector<PatientAccuracy>& v, std::uint32_t id) {
    for (const auto& a : v)
      if (a.patient == id) return a;
    throw DataError("patient " + std::to_string(id) + " has no evaluated samples");
  };
  std::vector<PatientDelta> out;
  for (std::uint32_t id : patients_of_interest) {
    const auto a = find(acc_a, id);
    const auto b = find(acc_b, id);
    out.push_back({id, a.accuracy_percent, b.accuracy_percent,
                   b.accuracy_percent - a.accuracy_percent});
  }
  return out;
}

std::vector<NamedCentroid> load_reference_centroids(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open reference centroids: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty centroid file: " + path.string());
  std::vector<NamedCentroid> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto pos = line.find(',', start);
      if (pos == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, pos - start));
      start = pos + 1;
    }
    if (fields.size() < 2)
      throw ParseError("centroid row needs name plus values at " + path.string() + ":" +
                       std::to_string(line_no));
    NamedCentroid c;
    c.name = fields[0];
    c.value.resize(static_cast<Index>(fields.size()) - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(fields[i].data(), fields[i].data() + fields[i].size(), v);
      if (ec != std::errc() || ptr != fields[i].data() + fields[i].size())
        throw ParseError("bad centroid value '" + fields[i] + "' at " + path.string() + ":" +
                         std::to_string(line_no));
      c.value[static_cast<Index>(i) - 1] = v;
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace pafa
