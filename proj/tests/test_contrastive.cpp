#include <cmath>
#include <numeric>

#include "ekila/contrastive.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace ekila;
using ekila::testing::expectError;

namespace {

using MatD = nn::Mat<double>;
using oracle::relativeError;

MatD randomMat(Rng& rng, int rows, int cols) {
    MatD m(rows, cols);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = rng.normal();
    return m;
}

}  // namespace

TEST(Contrastive, GradientMatchesFiniteDifferences) {
    Rng rng(17);
    for (double tau : {0.1, 1.0}) {
        for (int batch = 0; batch < 20; ++batch) {
            const MatD phi = randomMat(rng, 8, 4), phiHat = randomMat(rng, 8, 4);
            const auto r = contrastiveLoss<double>(phi, phiHat, tau);
            EXPECT_NEAR(r.loss, static_cast<double>(oracle::contrastiveLoss(phi.cast<long double>(), phiHat.cast<long double>(), tau)),
                        1e-10 * std::max(1.0, std::abs(r.loss)));
            EXPECT_LT(relativeError(r.gradAnchor, oracle::contrastiveGradient(phi, phiHat, tau, true)), 1e-4)
                << "tau " << tau << " batch " << batch;
            EXPECT_LT(relativeError(r.gradPositive, oracle::contrastiveGradient(phi, phiHat, tau, false)), 1e-4)
                << "tau " << tau << " batch " << batch;
        }
    }
}

TEST(Contrastive, OrthogonalPairHasClosedForm) {
    // phi = phiHat = identity columns: positive cosine 1, negative cosine 0, so each
    // term is log(1 + e^-1).
    const MatD phi = MatD::Identity(2, 2);
    const auto r = contrastiveLoss<double>(phi, phi, 1.0);
    EXPECT_NEAR(r.loss, 2.0 * std::log1p(std::exp(-1.0)), 1e-9);
    EXPECT_NEAR(r.loss, 0.626523, 1e-6);
}

TEST(Contrastive, InvariantToBatchOrderAndScale) {
    Rng rng(5);
    const MatD phi = randomMat(rng, 6, 5), phiHat = randomMat(rng, 6, 5);
    const auto base = contrastiveLoss<double>(phi, phiHat, 0.3);

    std::vector<int> perm{3, 0, 4, 1, 2};
    MatD pa(6, 5), pp(6, 5);
    for (int i = 0; i < 5; ++i) {
        pa.col(i) = phi.col(perm[i]);
        pp.col(i) = phiHat.col(perm[i]) * (1.0 + i);  // cosine ignores length
    }
    const auto shuffled = contrastiveLoss<double>(pa, pp, 0.3);
    EXPECT_NEAR(shuffled.loss, base.loss, 1e-12);
    for (int i = 0; i < 5; ++i)
        EXPECT_LT((shuffled.gradAnchor.col(i) - base.gradAnchor.col(perm[i])).norm(), 1e-12);
}

TEST(Contrastive, FloatAgreesWithDouble) {
    Rng rng(6);
    const MatD phi = randomMat(rng, 32, 8), phiHat = randomMat(rng, 32, 8);
    const auto d = contrastiveLoss<double>(phi, phiHat, 0.1);
    const auto f = contrastiveLoss<float>(phi.cast<float>(), phiHat.cast<float>(), 0.1);
    EXPECT_NEAR(f.loss, d.loss, 1e-4 * d.loss);
    EXPECT_LT(relativeError(f.gradAnchor.cast<double>(), d.gradAnchor), 1e-4);
}

TEST(Contrastive, PerfectSeparationDrivesLossDown) {
    // Positives aligned and negatives opposite give a smaller loss than the reverse.
    MatD phi(2, 2), far(2, 2);
    phi << 1, -1, 0, 0;
    far << -1, 1, 0, 0;
    EXPECT_LT(contrastiveLoss<double>(phi, phi, 0.5).loss, contrastiveLoss<double>(phi, far, 0.5).loss);
}

TEST(Contrastive, RejectsDegenerateInput) {
    const MatD one = MatD::Ones(4, 1);
    expectError(ErrorCode::DegenerateBatch, [&] { contrastiveLoss<double>(one, one, 1.0); });
    expectError(ErrorCode::ShapeMismatch, [] { contrastiveLoss<double>(MatD::Ones(4, 2), MatD::Ones(4, 3), 1.0); });
    expectError(ErrorCode::InvalidArgument, [] { contrastiveLoss<double>(MatD::Ones(4, 2), MatD::Ones(4, 2), 0.0); });
    expectError(ErrorCode::InvalidArgument, [] { contrastiveLoss<double>(MatD::Zero(4, 2), MatD::Ones(4, 2), 1.0); });
}
