#pragma once

// Principal component analysis of row-stacked spectra.

#include <cstddef>
#include <span>
#include <vector>

#include "imc/checkpoint.hpp"
#include "imc/matrix.hpp"

namespace imc {

struct PcaModel {
  std::size_t length = 0;                  // L
  std::size_t k = 0;                       // retained components
  std::vector<double> mean;                // [L]
  Matrix components;                       // k x L, orthonormal rows
  std::vector<double> explained_variance;  // [k], non-increasing
  double total_variance = 0.0;             // trace of the sample covariance

  double retained_fraction() const;
};

// Fits on the rows of `data` (n x L). Components come from the SVD of the
// centered data; each row's largest-magnitude entry is made positive.
PcaModel fit_pca(const Matrix& data, std::size_t k);

std::vector<double> project(const PcaModel& model, std::span<const double> spectrum);
Matrix project(const PcaModel& model, const Matrix& spectra);
std::vector<double> reconstruct(const PcaModel& model, std::span<const double> coeffs);

// Leading `k_cond` projection coefficients.
std::vector<double> conditioning_vector(const PcaModel& model, std::span<const double> spectrum,
                                        std::size_t k_cond = 16);

// Mean squared reconstruction error per sample (sum over coordinates).
double reconstruction_error(const PcaModel& model, const Matrix& spectra);

Checkpoint pca_to_checkpoint(const PcaModel& model);
PcaModel pca_from_checkpoint(const Checkpoint& ck);

}  // namespace imc
