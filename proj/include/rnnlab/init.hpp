#pragma once

// Sparse Gaussian initialization with spectral-radius control.

#include "rnnlab/core.hpp"
#include "rnnlab/params.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

namespace rnnlab {

struct InitSpec {
    double sigma_hh = 1e-4;
    double sigma_ih = 0.1;
    int sparsify_k = 15; ///< nonzero incoming recurrent connections per hidden unit
    double rho_target = 1.1;
    std::uint64_t seed = 1;

    void validate(int hidden) const
    {
        require(sigma_hh > 0.0 && sigma_ih > 0.0, "init sigmas must be > 0");
        require(sparsify_k >= 1 && sparsify_k <= hidden, "sparsify_k must lie in [1, hidden]");
        require(rho_target > 0.0, "rho_target must be > 0");
    }
};

/// Each row gets exactly k Normal(0, sigma) entries at uniformly chosen columns.
inline Matrix sparse_gaussian(int rows, int cols, int k, double sigma, Rng& rng)
{
    require(rows >= 0 && cols >= 1, "sparse_gaussian: bad shape");
    require(k >= 0 && k <= cols, "sparse_gaussian: k must not exceed cols");
    require(sigma > 0.0, "sparse_gaussian: sigma must be > 0");
    Matrix m = Matrix::Zero(rows, cols);
    std::normal_distribution<double> normal(0.0, sigma);
    std::vector<int> columns(cols);
    for (int r = 0; r < rows; ++r) {
        std::iota(columns.begin(), columns.end(), 0);
        // partial Fisher-Yates: the first k slots become a uniform k-subset
        for (int i = 0; i < k; ++i) {
            std::uniform_int_distribution<int> pick(i, cols - 1);
            std::swap(columns[i], columns[pick(rng)]);
        }
        for (int i = 0; i < k; ++i) m(r, columns[i]) = normal(rng);
    }
    return m;
}

inline Matrix dense_gaussian(int rows, int cols, double sigma, Rng& rng)
{
    std::normal_distribution<double> normal(0.0, sigma);
    Matrix m(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) m(i, j) = normal(rng);
    return m;
}

struct SpectralRadius {
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
};

struct PowerIterationOptions {
    double tolerance = 1e-10;
    int max_iterations = 10000;
    int block_size = 8;
    int stable_checks = 3; ///< consecutive iterations within tolerance required
};

/// Largest eigenvalue modulus by block power iteration: the block is pushed
/// through the matrix and re-orthonormalised each step, and the largest Ritz
/// value modulus of the projected block is the estimate. A block (rather than
/// one vector) also converges when the dominant eigenvalues are a complex pair
/// or +-rho. Columns that collapse are replaced by fresh random directions.
inline SpectralRadius spectral_radius(const Matrix& a, const PowerIterationOptions& opt = {})
{
    require(a.rows() == a.cols(), "spectral_radius: matrix must be square");
    require(a.rows() >= 1, "spectral_radius: empty matrix");
    require(a.allFinite(), "spectral_radius: non-finite entries");
    const Eigen::Index n = a.rows();
    if (a.isZero(0.0)) return {0.0, 0, true};

    const Eigen::Index s = std::min<Eigen::Index>(n, opt.block_size);
    Rng rng = make_rng(0x5eed5eedULL, n);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto randomize = [&](Matrix& m, Eigen::Index col) {
        for (Eigen::Index i = 0; i < n; ++i) m(i, col) = normal(rng);
    };
    auto orthonormalize = [&](Matrix z) {
        for (int attempt = 0; attempt < 4; ++attempt) {
            Eigen::HouseholderQR<Matrix> qr(z);
            const Matrix r = qr.matrixQR().topRows(s).triangularView<Eigen::Upper>();
            const double scale = r.diagonal().cwiseAbs().maxCoeff();
            bool restarted = false;
            for (Eigen::Index j = 0; j < s; ++j) {
                if (!(std::abs(r(j, j)) > 1e-13 * scale) || scale == 0.0) {
                    randomize(z, j);
                    restarted = true;
                }
            }
            if (!restarted) return Matrix(qr.householderQ() * Matrix::Identity(n, s));
        }
        Eigen::HouseholderQR<Matrix> qr(z);
        return Matrix(qr.householderQ() * Matrix::Identity(n, s));
    };

    // Re-orthonormalising hides nilpotency, so first push one vector through
    // up to 64 times and stop if it vanishes exactly.
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
    for (Eigen::Index k = 0; k < std::min<Eigen::Index>(n, 64); ++k) {
        v = a * v;
        const double norm = v.norm();
        if (norm == 0.0) return {0.0, static_cast<int>(k + 1), true};
        v /= norm;
    }

    Matrix q(n, s);
    for (Eigen::Index j = 0; j < s; ++j) randomize(q, j);
    q = orthonormalize(q);

    SpectralRadius result;
    double previous = -1.0;
    int stable = 0;
    for (int it = 1; it <= opt.max_iterations; ++it) {
        Matrix z = a * q;
        result.iterations = it;
        if (z.isZero(0.0)) {
            // a generic block annihilated by a power of the matrix: nilpotent
            result.value = 0.0;
            result.converged = true;
            return result;
        }
        const Matrix projected = q.transpose() * z;
        Eigen::EigenSolver<Matrix> ritz(projected, false);
        const double estimate = ritz.eigenvalues().cwiseAbs().maxCoeff();
        result.value = estimate;
        if (previous >= 0.0 && std::abs(estimate - previous) <= opt.tolerance * std::max(estimate, 1e-300)) {
            if (++stable >= opt.stable_checks) {
                result.converged = true;
                return result;
            }
        } else {
            stable = 0;
        }
        previous = estimate;
        q = orthonormalize(std::move(z));
    }
    return result;
}

/// matrix * (rho_target / rho(matrix)); zero pattern is unchanged.
inline Matrix rescale_spectral(const Matrix& m, double rho_target)
{
    require(rho_target > 0.0, "rescale_spectral: target must be > 0");
    const double rho = spectral_radius(m).value;
    if (!(rho > 1e-300)) throw ContractError("rescale_spectral: spectral radius is zero, cannot rescale");
    return m * (rho_target / rho);
}

/// Sparse spectral-radius-controlled W_hh, dense Gaussian W_ih and W_ho
/// (both with sigma_ih), zero biases. Each array uses its own RNG stream.
inline RnnParams init_params(const InitSpec& spec, int hidden, int inputs = kNotes, int outputs = kNotes)
{
    spec.validate(hidden);
    RnnParams p = RnnParams::zeros(hidden, inputs, outputs);
    Rng rng_hh = make_rng(spec.seed, streams::w_hh);
    Rng rng_ih = make_rng(spec.seed, streams::w_ih);
    Rng rng_ho = make_rng(spec.seed, streams::w_ho);
    p.w_hh = rescale_spectral(sparse_gaussian(hidden, hidden, spec.sparsify_k, spec.sigma_hh, rng_hh),
                              spec.rho_target);
    p.w_ih = dense_gaussian(hidden, inputs, spec.sigma_ih, rng_ih);
    p.w_ho = dense_gaussian(outputs, hidden, spec.sigma_ih, rng_ho);
    return p;
}

} // namespace rnnlab
