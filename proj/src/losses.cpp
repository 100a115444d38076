#include "pafa/losses.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pafa/rng.hpp"

namespace pafa {

namespace {

double patient_objective(const MatrixX<double>& z, const PatientGroups& g, const LossWeights& w) {
  const auto p = pcsl_forward(z, g, w.epsilon);
  const auto q = gpal_forward(z, g);
  return w.lambda_pcsl * p.pcsl + w.lambda_gpal * q.gpal;
}

}  // namespace

double finite_diff_max_rel_err(const MatrixX<double>& embeddings, const PatientGroups& g,
                               const LossWeights& w, double step) {
  if (!(step > 0)) throw DataError("finite difference step must be positive");
  const MatrixX<double> analytic = patient_loss_backward(embeddings, g, w);
  MatrixX<double> z = embeddings;
  double max_rel = 0;
  for (Index i = 0; i < z.rows(); ++i) {
    for (Index j = 0; j < z.cols(); ++j) {
      const double save = z(i, j);
      z(i, j) = save + step;
      const double f_plus = patient_objective(z, g, w);
      z(i, j) = save - step;
      const double f_minus = patient_objective(z, g, w);
      z(i, j) = save;
      const double numeric = (f_plus - f_minus) / (2 * step);
      const double a = analytic(i, j);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
      max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
    }
  }
  return max_rel;
}

GradCheckReport run_gradient_check(const GradCheckConfig& cfg) {
  if (cfg.trials < 1) throw DataError("gradcheck needs at least one trial");
  if (cfg.min_patients < 1 || cfg.max_patients < cfg.min_patients)
    throw DataError("bad gradcheck patient range");

  GradCheckReport report;
  report.tolerance = cfg.tolerance;
  Rng rng(derive_seed(cfg.seed, "gradcheck"));

  for (int trial = 0; trial < cfg.trials; ++trial) {
    const auto span = cfg.max_patients - cfg.min_patients + 1;
    const auto n_patients = cfg.min_patients + static_cast<std::uint32_t>(rng.below(span));

    // Every patient gets at least one row; remaining rows land uniformly.
    std::vector<std::uint32_t> assignment(static_cast<std::size_t>(cfg.batch));
    for (std::size_t i = 0; i < assignment.size(); ++i)
      assignment[i] = i < n_patients ? static_cast<std::uint32_t>(i)
                                     : static_cast<std::uint32_t>(rng.below(n_patients));
    rng.shuffle(assignment);
    const auto groups = PatientGroups::from_assignment(assignment);

    MatrixX<double> z(cfg.batch, cfg.dim);
    for (Index i = 0; i < z.rows(); ++i)
      for (Index j = 0; j < z.cols(); ++j) z(i, j) = rng.normal();

    GradCheckTrial row;
    row.trial = trial;
    row.batch = cfg.batch;
    row.n_patients = groups.group_count();
    row.dim = cfg.dim;
    row.max_rel_err = finite_diff_max_rel_err(z, groups, cfg.weights, cfg.step);
    report.max_rel_err = std::max(report.max_rel_err, row.max_rel_err);
    report.trials.push_back(row);
  }
  report.pass = report.max_rel_err <= report.tolerance;
  return report;
}

std::string GradCheckReport::table() const {
  std::ostringstream out;
  out << "trial, B, |P|, d, max_rel_err\n";
  for (const auto& t : trials) {
    out << t.trial << ", " << t.batch << ", " << t.n_patients << ", " << t.dim << ", ";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3e", t.max_rel_err);
    out << buf << "\n";
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s tol=%g max_rel_err=%.3e", pass ? "PASS" : "FAIL", tolerance,
                max_rel_err);
  out << buf << "\n";
  return out.str();
}

}  // namespace pafa
