// src/linalg.cc

// Copyright 2026 The ivpipe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "ivpipe/linalg.h"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ivpipe {

Matrix SpdInverse(const Matrix &m) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success)
    throw NumericalError("matrix is not positive definite");
  return Symmetrize(llt.solve(Matrix::Identity(m.rows(), m.cols())));
}

double LogDetSpd(const Matrix &m) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success)
    throw NumericalError("matrix is not positive definite");
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

Matrix InverseSqrtSym(const Matrix &m, double floor) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(Symmetrize(m));
  Vector d = es.eigenvalues().cwiseMax(floor);
  if ((d.array() <= 0.0).any())
    throw NumericalError("inverse square root of a singular matrix");
  return es.eigenvectors() * d.cwiseSqrt().cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

void NormalizeRowSigns(Matrix *rows) {
  for (Eigen::Index r = 0; r < rows->rows(); ++r) {
    Eigen::Index best = 0;
    rows->row(r).cwiseAbs().maxCoeff(&best);
    if ((*rows)(r, best) < 0.0) rows->row(r) *= -1.0;
  }
}

Matrix DiscriminantProjection(const Matrix &between, const Matrix &within,
                              int out_dim, double within_floor,
                              Vector *eigenvalues) {
  const Eigen::Index dim = within.rows();
  if (out_dim < 1 || out_dim > dim)
    throw ConfigError("projection dimension " + std::to_string(out_dim) +
                      " outside [1, " + std::to_string(dim) + "]");
  Eigen::SelfAdjointEigenSolver<Matrix> ws(Symmetrize(within));
  Vector lambda = ws.eigenvalues();
  if (lambda.minCoeff() < within_floor) {
    Warn("within-class scatter is (near) singular; eigenvalues floored at " +
         std::to_string(within_floor));
    lambda = lambda.cwiseMax(within_floor);
  }
  // Whiten the within-class scatter, then diagonalize the between-class one.
  Matrix whitener = ws.eigenvectors() * lambda.cwiseSqrt().cwiseInverse().asDiagonal();
  Matrix b = Symmetrize(whitener.transpose() * between * whitener);
  Eigen::SelfAdjointEigenSolver<Matrix> bs(b);
  Matrix rows(out_dim, dim);
  if (eigenvalues) eigenvalues->resize(out_dim);
  for (int k = 0; k < out_dim; ++k) {
    Eigen::Index col = dim - 1 - k;  // ascending order from the solver
    rows.row(k) = (whitener * bs.eigenvectors().col(col)).transpose();
    if (eigenvalues) (*eigenvalues)(k) = bs.eigenvalues()(col);
  }
  NormalizeRowSigns(&rows);
  return rows;
}

Matrix OrthonormalBasis(const Matrix &a) {
  Eigen::HouseholderQR<Matrix> qr(a);
  return qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
}

Vector PrincipalAnglesDeg(const Matrix &a, const Matrix &b) {
  Matrix qa = OrthonormalBasis(a), qb = OrthonormalBasis(b);
  Eigen::JacobiSVD<Matrix> svd(qa.transpose() * qb);
  Vector s = svd.singularValues();
  Vector angles(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i)
    angles(i) = std::acos(std::clamp(s(i), -1.0, 1.0)) * 180.0 / std::numbers::pi;
  std::sort(angles.data(), angles.data() + angles.size());
  return angles;
}

}  // namespace ivpipe
