#include "imc/pca.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <string>

#include "imc/error.hpp"

namespace imc {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_length(const PcaModel& m, std::size_t n) {
  if (n != m.length)
    fail(ErrorKind::Dimension, "pca: spectrum length " + std::to_string(n) + " != " + std::to_string(m.length));
}

}  // namespace

double PcaModel::retained_fraction() const {
  if (total_variance <= 0.0) return 1.0;
  double s = 0.0;
  for (double v : explained_variance) s += v;
  return std::min(1.0, s / total_variance);
}

PcaModel fit_pca(const Matrix& data, std::size_t k) {
  const std::size_t n = data.rows, L = data.cols;
  if (k < 1 || n < 1) fail(ErrorKind::Rank, "fit_pca: need k >= 1 and at least one sample");
  if (k > std::min(n, L))
    fail(ErrorKind::Rank, "fit_pca: k=" + std::to_string(k) + " exceeds min(n, L)=" + std::to_string(std::min(n, L)));

  Eigen::Map<const RowMat> x(data.data.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(L));
  // Accumulated in row order so the result does not depend on buffer alignment.
  Eigen::RowVectorXd mu = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(L));
  for (std::size_t r = 0; r < n; ++r) mu += x.row(static_cast<Eigen::Index>(r));
  mu /= static_cast<double>(n);
  const Eigen::MatrixXd centered = x.rowwise() - mu;

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const auto& v = svd.matrixV();
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;

  PcaModel m;
  m.length = L;
  m.k = k;
  m.mean.assign(mu.data(), mu.data() + L);
  m.components = Matrix(k, L);
  m.explained_variance.resize(k);
  m.total_variance = centered.squaredNorm() / denom;
  for (std::size_t c = 0; c < k; ++c) {
    const auto col = static_cast<Eigen::Index>(c);
    Eigen::Index arg = 0;
    v.col(col).cwiseAbs().maxCoeff(&arg);
    const double sign = v(arg, col) < 0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < L; ++j) m.components(c, j) = sign * v(static_cast<Eigen::Index>(j), col);
    // Beyond the numerical rank the singular values are noise; keep them >= 0.
    m.explained_variance[c] = c < static_cast<std::size_t>(sv.size()) ? sv(col) * sv(col) / denom : 0.0;
  }
  return m;
}

std::vector<double> project(const PcaModel& model, std::span<const double> spectrum) {
  check_length(model, spectrum.size());
  std::vector<double> centered(spectrum.begin(), spectrum.end());
  for (std::size_t j = 0; j < model.length; ++j) centered[j] -= model.mean[j];
  std::vector<double> out(model.k, 0.0);
  for (std::size_t c = 0; c < model.k; ++c) {
    const auto row = model.components.row(c);
    double s = 0.0;
    for (std::size_t j = 0; j < model.length; ++j) s += row[j] * centered[j];
    out[c] = s;
  }
  return out;
}

Matrix project(const PcaModel& model, const Matrix& spectra) {
  check_length(model, spectra.cols);
  Eigen::Map<const RowMat> x(spectra.data.data(), static_cast<Eigen::Index>(spectra.rows),
                             static_cast<Eigen::Index>(spectra.cols));
  Eigen::Map<const Eigen::RowVectorXd> mu(model.mean.data(), static_cast<Eigen::Index>(model.length));
  Eigen::Map<const RowMat> comp(model.components.data.data(), static_cast<Eigen::Index>(model.k),
                                static_cast<Eigen::Index>(model.length));
  Matrix out(spectra.rows, model.k);
  Eigen::Map<RowMat> y(out.data.data(), static_cast<Eigen::Index>(spectra.rows), static_cast<Eigen::Index>(model.k));
  y.noalias() = (x.rowwise() - mu) * comp.transpose();
  return out;
}

std::vector<double> reconstruct(const PcaModel& model, std::span<const double> coeffs) {
  if (coeffs.size() != model.k)
    fail(ErrorKind::Dimension, "reconstruct: expected " + std::to_string(model.k) + " coefficients");
  std::vector<double> out = model.mean;
  for (std::size_t c = 0; c < model.k; ++c) {
    const auto row = model.components.row(c);
    for (std::size_t j = 0; j < model.length; ++j) out[j] += coeffs[c] * row[j];
  }
  return out;
}

std::vector<double> conditioning_vector(const PcaModel& model, std::span<const double> spectrum, std::size_t k_cond) {
  if (k_cond > model.k)
    fail(ErrorKind::Contract, "conditioning_vector: k_cond=" + std::to_string(k_cond) + " exceeds k=" +
                                  std::to_string(model.k));
  auto coeffs = project(model, spectrum);
  coeffs.resize(k_cond);
  return coeffs;
}

double reconstruction_error(const PcaModel& model, const Matrix& spectra) {
  if (spectra.rows == 0) return 0.0;
  double total = 0.0;
  for (std::size_t r = 0; r < spectra.rows; ++r) {
    const auto x = spectra.row(r);
    const auto rec = reconstruct(model, project(model, x));
    for (std::size_t j = 0; j < model.length; ++j) total += (x[j] - rec[j]) * (x[j] - rec[j]);
  }
  return total / static_cast<double>(spectra.rows);
}

Checkpoint pca_to_checkpoint(const PcaModel& m) {
  Checkpoint ck;
  ck.put_string("kind", "pca");
  ck.put_int("length", static_cast<std::int64_t>(m.length));
  ck.put_int("k", static_cast<std::int64_t>(m.k));
  ck.put_f64("mean", {m.length}, m.mean);
  ck.put_f64("components", {m.k, m.length}, m.components.data);
  ck.put_f64("explained_variance", {m.k}, m.explained_variance);
  ck.put_scalar("total_variance", m.total_variance);
  return ck;
}

PcaModel pca_from_checkpoint(const Checkpoint& ck) {
  if (!ck.has("kind") || ck.string("kind") != "pca") fail(ErrorKind::Data, "checkpoint is not a PCA model");
  PcaModel m;
  m.length = static_cast<std::size_t>(ck.integer("length"));
  m.k = static_cast<std::size_t>(ck.integer("k"));
  m.mean = ck.f64("mean");
  m.components = Matrix(m.k, m.length);
  m.components.data = ck.f64("components");
  m.explained_variance = ck.f64("explained_variance");
  m.total_variance = ck.scalar("total_variance");
  if (m.mean.size() != m.length || m.components.data.size() != m.k * m.length || m.explained_variance.size() != m.k)
    fail(ErrorKind::Data, "pca checkpoint: inconsistent sizes");
  return m;
}

}  // namespace imc
