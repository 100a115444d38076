#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "pafa/dense.hpp"
#include "pafa/losses.hpp"

namespace pafa::testutil {

// Unique scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("pafa_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Independent oracle for the patient losses: the literal double loops of
// the defining sums, kept free of the library's algebraic shortcuts.
struct NaivePatientLosses {
  double s_w = 0, s_b = 0, pcsl = 0, gpal = 0;
  MatrixX<double> centroids;
  VectorX<double> global_centroid;
};

inline NaivePatientLosses naive_patient_losses(const MatrixX<double>& z, const PatientGroups& g,
                                               double epsilon) {
  NaivePatientLosses r;
  const auto n_groups = static_cast<Index>(g.group_count());
  r.centroids = MatrixX<double>::Zero(n_groups, z.cols());
  for (Index p = 0; p < n_groups; ++p) {
    const auto& rows = g.members()[static_cast<std::size_t>(p)];
    for (Index row : rows) r.centroids.row(p) += z.row(row);
    r.centroids.row(p) /= static_cast<double>(rows.size());
  }
  for (Index p = 0; p < n_groups; ++p)
    for (Index row : g.members()[static_cast<std::size_t>(p)])
      r.s_w += (z.row(row) - r.centroids.row(p)).squaredNorm();
  for (Index p = 0; p < n_groups; ++p)
    for (Index q = 0; q < n_groups; ++q)
      if (p != q) r.s_b += (r.centroids.row(p) - r.centroids.row(q)).squaredNorm();
  r.pcsl = n_groups < 2 ? 0.0 : r.s_w / (r.s_b + epsilon);
  r.global_centroid = VectorX<double>::Zero(z.cols());
  for (Index p = 0; p < n_groups; ++p) r.global_centroid += r.centroids.row(p).transpose();
  r.global_centroid /= static_cast<double>(n_groups);
  r.gpal = 0;
  for (Index p = 0; p < n_groups; ++p)
    r.gpal += (r.centroids.row(p).transpose() - r.global_centroid).squaredNorm();
  r.gpal /= static_cast<double>(n_groups);
  return r;
}

}  // namespace pafa::testutil
