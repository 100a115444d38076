#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pafa/dense.hpp"
#include "pafa/errors.hpp"

namespace pafa {

struct LossWeights {
  double lambda_pcsl = 50.0;
  double lambda_gpal = 0.0005;
  double epsilon = 1e-8;
};

// Batch rows grouped by patient identifier. Group order is the first
// occurrence order of each patient in the assignment.
class PatientGroups {
 public:
  static PatientGroups from_assignment(std::span<const std::uint32_t> patient_per_row);

  Index batch_size() const { return static_cast<Index>(assignment_.size()); }
  std::size_t group_count() const { return patients_.size(); }
  const std::vector<std::uint32_t>& assignment() const { return assignment_; }
  const std::vector<std::uint32_t>& patients() const { return patients_; }
  const std::vector<std::vector<Index>>& members() const { return members_; }
  const std::vector<std::size_t>& group_of_row() const { return group_of_row_; }

 private:
  std::vector<std::uint32_t> assignment_;
  std::vector<std::uint32_t> patients_;
  std::vector<std::vector<Index>> members_;
  std::vector<std::size_t> group_of_row_;
};

inline PatientGroups PatientGroups::from_assignment(
    std::span<const std::uint32_t> patient_per_row) {
  PatientGroups g;
  g.assignment_.assign(patient_per_row.begin(), patient_per_row.end());
  g.group_of_row_.resize(g.assignment_.size());
  for (std::size_t row = 0; row < g.assignment_.size(); ++row) {
    const std::uint32_t patient = g.assignment_[row];
    std::size_t group = g.patients_.size();
    for (std::size_t k = 0; k < g.patients_.size(); ++k) {
      if (g.patients_[k] == patient) {
        group = k;
        break;
      }
    }
    if (group == g.patients_.size()) {
      g.patients_.push_back(patient);
      g.members_.emplace_back();
    }
    g.members_[group].push_back(static_cast<Index>(row));
    g.group_of_row_[row] = group;
  }
  return g;
}

template <typename Scalar>
struct Centroids {
  MatrixX<Scalar> mu;       // |P| x d, first-occurrence patient order
  VectorX<Scalar> counts;   // N_p per group
};

template <typename Scalar>
Centroids<Scalar> patient_centroids(const MatrixX<Scalar>& embeddings, const PatientGroups& g) {
  if (g.batch_size() != embeddings.rows())
    throw DataError("patient group assignment does not match batch size");
  const auto n_groups = static_cast<Index>(g.group_count());
  Centroids<Scalar> c;
  c.mu.setZero(n_groups, embeddings.cols());
  c.counts.resize(n_groups);
  for (Index p = 0; p < n_groups; ++p) {
    const auto& rows = g.members()[static_cast<std::size_t>(p)];
    for (Index row : rows) c.mu.row(p) += embeddings.row(row);
    c.counts[p] = static_cast<Scalar>(rows.size());
    c.mu.row(p) /= c.counts[p];
  }
  return c;
}

template <typename Scalar>
struct PcslTerms {
  Scalar pcsl = 0;
  Scalar s_w = 0;
  Scalar s_b = 0;
  bool degenerate = false;  // fewer than two patients in the batch
};

template <typename Scalar>
struct GpalTerms {
  Scalar gpal = 0;
  VectorX<Scalar> global_centroid;
};

namespace detail {

// Between-centroid scatter over ordered pairs, computed in the centered form
//   sum_{p != q} ||mu_p - mu_q||^2 = 2 |P| sum_p ||mu_p - mu_bar||^2,
// which stays accurate when all centroids share a large common offset.
template <typename Scalar>
Scalar between_scatter(const MatrixX<Scalar>& mu, const VectorX<Scalar>& mu_bar) {
  Scalar acc = 0;
  for (Index p = 0; p < mu.rows(); ++p)
    acc += (mu.row(p).transpose() - mu_bar).squaredNorm();
  return Scalar(2) * static_cast<Scalar>(mu.rows()) * acc;
}

template <typename Scalar>
VectorX<Scalar> centroid_mean(const MatrixX<Scalar>& mu) {
  return mu.colwise().mean().transpose();
}

}  // namespace detail

// Within/between scatter ratio. Batches with a single patient are flagged
// degenerate and contribute zero loss (and zero gradient downstream) instead
// of the exploding s_w / epsilon ratio.
template <typename Scalar>
PcslTerms<Scalar> pcsl_forward(const MatrixX<Scalar>& embeddings, const PatientGroups& g,
                               Scalar epsilon) {
  const auto c = patient_centroids(embeddings, g);
  PcslTerms<Scalar> t;
  for (std::size_t p = 0; p < g.group_count(); ++p) {
    for (Index row : g.members()[p])
      t.s_w += (embeddings.row(row) - c.mu.row(static_cast<Index>(p))).squaredNorm();
  }
  if (g.group_count() < 2) {
    t.degenerate = true;
    t.pcsl = 0;
    t.s_b = 0;
    return t;
  }
  const VectorX<Scalar> mu_bar = detail::centroid_mean(c.mu);
  t.s_b = detail::between_scatter(c.mu, mu_bar);
  t.pcsl = t.s_w / (t.s_b + epsilon);
  return t;
}

// Mean squared distance of patient centroids to their own mean. The global
// centroid is the unweighted mean over patients, not over samples.
template <typename Scalar>
GpalTerms<Scalar> gpal_forward(const MatrixX<Scalar>& embeddings, const PatientGroups& g) {
  const auto c = patient_centroids(embeddings, g);
  GpalTerms<Scalar> t;
  t.global_centroid = detail::centroid_mean(c.mu);
  Scalar acc = 0;
  for (Index p = 0; p < c.mu.rows(); ++p)
    acc += (c.mu.row(p).transpose() - t.global_centroid).squaredNorm();
  t.gpal = acc / static_cast<Scalar>(c.mu.rows());
  return t;
}

inline double total_loss(double ce, double pcsl, double gpal, const LossWeights& w) {
  return ce + w.lambda_pcsl * pcsl + w.lambda_gpal * gpal;
}

// d(lambda_pcsl * pcsl + lambda_gpal * gpal) / dZ, exact through the centroid
// definitions. For row i in patient p:
//   d s_w / d z_i   = 2 (z_i - mu_p)
//   d s_b / d mu_p  = 4 |P| (mu_p - mu_G)
//   d pcsl / d z_i  = 2 (z_i - mu_p) / (s_b + eps)
//                     - s_w / (s_b + eps)^2 * 4 |P| / N_p * (mu_p - mu_G)
//   d gpal / d z_i  = 2 / (|P| N_p) * (mu_p - mu_G)
// Degenerate batches (|P| < 2) return an all-zero gradient.
template <typename Scalar>
MatrixX<Scalar> patient_loss_backward(const MatrixX<Scalar>& embeddings, const PatientGroups& g,
                                      const LossWeights& w) {
  MatrixX<Scalar> grad = MatrixX<Scalar>::Zero(embeddings.rows(), embeddings.cols());
  if (g.group_count() < 2) return grad;

  const auto c = patient_centroids(embeddings, g);
  const VectorX<Scalar> mu_bar = detail::centroid_mean(c.mu);
  const Scalar n_patients = static_cast<Scalar>(g.group_count());

  Scalar s_w = 0;
  for (std::size_t p = 0; p < g.group_count(); ++p)
    for (Index row : g.members()[p])
      s_w += (embeddings.row(row) - c.mu.row(static_cast<Index>(p))).squaredNorm();
  const Scalar s_b = detail::between_scatter(c.mu, mu_bar);
  const Scalar denom = s_b + static_cast<Scalar>(w.epsilon);

  const Scalar lp = static_cast<Scalar>(w.lambda_pcsl);
  const Scalar lg = static_cast<Scalar>(w.lambda_gpal);

  for (std::size_t p = 0; p < g.group_count(); ++p) {
    const Index pi = static_cast<Index>(p);
    const Scalar n_p = c.counts[pi];
    const RowVectorX<Scalar> offset = c.mu.row(pi) - mu_bar.transpose();
    const RowVectorX<Scalar> pcsl_centroid_term =
        (-s_w / (denom * denom)) * (Scalar(4) * n_patients / n_p) * offset;
    const RowVectorX<Scalar> gpal_term = (Scalar(2) / (n_patients * n_p)) * offset;
    for (Index row : g.members()[p]) {
      const RowVectorX<Scalar> within = embeddings.row(row) - c.mu.row(pi);
      grad.row(row) = lp * (Scalar(2) / denom * within + pcsl_centroid_term) + lg * gpal_term;
    }
  }
  return grad;
}

// Everything the trainer records per step: loss terms, intermediate
// statistics and the embedding gradient of the patient-aware part.
struct LossBundle {
  double ce = 0;
  double pcsl = 0;
  double gpal = 0;
  double total = 0;
  double s_w = 0;
  double s_b = 0;
  bool degenerate = false;
  MatrixX<double> centroids;
  VectorX<double> global_centroid;
  MatrixX<double> grad_embeddings;
};

inline LossBundle evaluate_losses(double ce, const MatrixX<double>& embeddings,
                                  const PatientGroups& g, const LossWeights& w) {
  LossBundle b;
  b.ce = ce;
  const auto c = patient_centroids(embeddings, g);
  b.centroids = c.mu;
  const auto pcsl = pcsl_forward(embeddings, g, w.epsilon);
  const auto gpal = gpal_forward(embeddings, g);
  b.pcsl = pcsl.pcsl;
  b.s_w = pcsl.s_w;
  b.s_b = pcsl.s_b;
  b.degenerate = pcsl.degenerate;
  b.gpal = gpal.gpal;
  b.global_centroid = gpal.global_centroid;
  b.total = total_loss(b.ce, b.pcsl, b.gpal, w);
  b.grad_embeddings = patient_loss_backward(embeddings, g, w);
  return b;
}

// --- gradient verification -------------------------------------------------

struct GradCheckTrial {
  int trial = 0;
  Index batch = 0;
  std::size_t n_patients = 0;
  Index dim = 0;
  double max_rel_err = 0;
};

struct GradCheckReport {
  std::vector<GradCheckTrial> trials;
  double max_rel_err = 0;
  double tolerance = 1e-4;
  bool pass = false;

  std::string table() const;
};

// Central differences of lambda_pcsl*pcsl + lambda_gpal*gpal against the
// analytic gradient, one batch. Relative error denominator is
// max(|analytic|, |numeric|, 1e-12).
double finite_diff_max_rel_err(const MatrixX<double>& embeddings, const PatientGroups& g,
                               const LossWeights& w, double step);

struct GradCheckConfig {
  int trials = 100;
  Index batch = 16;
  Index dim = 8;
  std::uint32_t min_patients = 2;
  std::uint32_t max_patients = 6;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  LossWeights weights;
};

GradCheckReport run_gradient_check(const GradCheckConfig& cfg);

}  // namespace pafa
