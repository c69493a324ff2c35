#pragma once

#include <algorithm>
#include <cmath>

#include "ekila/nn.hpp"

namespace ekila {

template <class T>
struct ContrastiveResult {
    T loss = 0;
    nn::Mat<T> gradAnchor;    // dL/dphi
    nn::Mat<T> gradPositive;  // dL/dphiHat
};

/// L = -sum_i log( d(phi_i, phiHat_i) / (d(phi_i, phiHat_i) + sum_{j != i} d(phi_i, phi_j)) )
/// with d(a, b) = exp(cos(a, b) / tau). Columns are batch entries. Inputs need not be
/// normalised; gradients are taken through the cosine.
template <class T>
ContrastiveResult<T> contrastiveLoss(const nn::Mat<T>& phi, const nn::Mat<T>& phiHat, double tau) {
    const Eigen::Index n = phi.cols();
    if (n < 2) fail(ErrorCode::DegenerateBatch, "contrastive loss needs at least two batch entries");
    if (phiHat.cols() != n || phiHat.rows() != phi.rows())
        fail(ErrorCode::ShapeMismatch, "anchor and positive batches differ in shape");
    if (!(tau > 0)) fail(ErrorCode::InvalidArgument, "temperature must be positive");

    nn::Vec<T> na(n), np(n);
    nn::Mat<T> a(phi.rows(), n), p(phi.rows(), n);
    for (Eigen::Index i = 0; i < n; ++i) {
        na(i) = phi.col(i).norm();
        np(i) = phiHat.col(i).norm();
        if (na(i) == T(0) || np(i) == T(0)) fail(ErrorCode::InvalidArgument, "zero embedding in contrastive batch");
        a.col(i) = phi.col(i) / na(i);
        p.col(i) = phiHat.col(i) / np(i);
    }
    const nn::Mat<T> cosAA = a.transpose() * a;
    const T invTau = static_cast<T>(1.0 / tau);

    ContrastiveResult<T> r;
    r.gradAnchor = nn::Mat<T>::Zero(phi.rows(), n);
    r.gradPositive = nn::Mat<T>::Zero(phi.rows(), n);
    // Gradients w.r.t. the unit vectors first, then through the normalisation.
    nn::Mat<T> gA = nn::Mat<T>::Zero(phi.rows(), n);
    nn::Mat<T> gP = nn::Mat<T>::Zero(phi.rows(), n);
    nn::Vec<T> logits(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const T cosPos = a.col(i).dot(p.col(i));
        logits(0) = cosPos * invTau;
        Eigen::Index k = 1;
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) logits(k++) = cosAA(i, j) * invTau;
        const T mx = logits.maxCoeff();
        const nn::Vec<T> e = (logits.array() - mx).exp();
        const T z = e.sum();
        r.loss += -logits(0) + mx + std::log(z);

        // dL/dcos for the positive is (p0 - 1)/tau, for a negative p_ij/tau.
        const T gPos = (e(0) / z - 1) * invTau;
        gA.col(i) += gPos * p.col(i);
        gP.col(i) += gPos * a.col(i);
        k = 1;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            const T g = e(k++) / z * invTau;
            gA.col(i) += g * a.col(j);
            gA.col(j) += g * a.col(i);
        }
    }
    // d(a/|a|)/da applied to g: (g - (g . u) u) / |a|
    for (Eigen::Index i = 0; i < n; ++i) {
        r.gradAnchor.col(i) = (gA.col(i) - gA.col(i).dot(a.col(i)) * a.col(i)) / na(i);
        r.gradPositive.col(i) = (gP.col(i) - gP.col(i).dot(p.col(i)) * p.col(i)) / np(i);
    }
    return r;
}

}  // namespace ekila
