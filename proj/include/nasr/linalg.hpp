#pragma once

#include <cstddef>
#include <vector>

#include "nasr/matrix.hpp"

namespace nasr {

/// Which samples of a window feed the covariance estimate.
struct CovarianceSegment {
    enum class Kind { trailing, full_window };
    Kind kind = Kind::trailing;
    std::size_t s = 20;

    static CovarianceSegment trailing_s(std::size_t s) { return {Kind::trailing, s}; }
    static CovarianceSegment full() { return {Kind::full_window, 0}; }
};

/// Mean-centred covariance X_S X_S^T / (S - 1) over the selected segment.
Matrix window_covariance(const Matrix& window, CovarianceSegment segment);

/// Eigenvalues descending, column j of `v` the matching unit eigenvector,
/// each column signed so its largest-magnitude entry is positive.
struct EigenPair {
    std::vector<double> d;
    Matrix v;
};

enum class EigenSolver {
    jacobi,          // cyclic Jacobi rotations
    tridiagonal_ql,  // Householder reduction + implicit QL
};

struct JacobiOptions {
    double tolerance = 1e-12;  // on the off-diagonal Frobenius norm, relative to max(1, ||A||_F)
    int max_sweeps = 100;
};

EigenPair sym_eig(const Matrix& a, const JacobiOptions& opt = {});
EigenPair sym_eig_ql(const Matrix& a);
EigenPair sym_eig(const Matrix& a, EigenSolver solver);

/// Eigenpairs of window_covariance(window, segment). When the segment is
/// shorter than the channel count the decomposition runs on the smaller
/// sample-space matrix; eigenvalues below kGramRankTolerance * max are
/// reported as zero, with an orthonormal completion of the basis.
inline constexpr double kGramRankTolerance = 1e-10;
EigenPair covariance_spectrum(const Matrix& window, CovarianceSegment segment, EigenSolver solver);

/// Reorders to descending eigenvalues and applies the sign convention.
void canonicalize(EigenPair& eig);

}  // namespace nasr
