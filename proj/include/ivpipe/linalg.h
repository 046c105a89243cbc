// include/ivpipe/linalg.h

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

#ifndef IVPIPE_LINALG_H_
#define IVPIPE_LINALG_H_

#include "ivpipe/common.h"

namespace ivpipe {

inline Matrix Symmetrize(const Matrix &m) { return 0.5 * (m + m.transpose()); }

// Throws NumericalError when the Cholesky factorization fails.
Matrix SpdInverse(const Matrix &m);
double LogDetSpd(const Matrix &m);

// Symmetric inverse square root with eigenvalues floored at `floor`.
Matrix InverseSqrtSym(const Matrix &m, double floor = 0.0);

// Flips each row so that its largest-magnitude entry is positive.
void NormalizeRowSigns(Matrix *rows);

// Solves the generalized problem between * v = lambda * within * v and returns
// the `out_dim` leading eigenvectors as rows (descending lambda), scaled so
// that v' * within * v = 1 and sign-normalized. Eigenvalues of `within` are
// floored at `within_floor`; a warning is issued when the floor binds.
Matrix DiscriminantProjection(const Matrix &between, const Matrix &within,
                              int out_dim, double within_floor = 1e-8,
                              Vector *eigenvalues = nullptr);

// Principal angles (degrees, ascending) between the column spans of a and b.
Vector PrincipalAnglesDeg(const Matrix &a, const Matrix &b);

// Orthonormal basis of the column span.
Matrix OrthonormalBasis(const Matrix &a);

}  // namespace ivpipe

#endif  // IVPIPE_LINALG_H_
