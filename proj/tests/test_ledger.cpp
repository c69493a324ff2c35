#include <cfenv>
#include <cmath>

#include "ekila/binio.hpp"
#include "ekila/crypto.hpp"
#include "ekila/ledger.hpp"
#include "support.hpp"

using namespace ekila;
using namespace ekila::ledger;
using ekila::testing::expectError;
using ekila::testing::TempDir;

namespace {

Address wallet(const std::string& label) {
    Address a;
    const auto d = crypto::sha256(label);
    std::copy_n(d.bytes.begin(), 20, a.raw.bytes.begin());
    return a;
}

struct World {
    Ledger l;
    Address alice = wallet("alice"), bob = wallet("bob"), carol = wallet("carol");

    Address deployRights(const Address& who) { return *l.execute(who, DeployRightsContract{}).contract; }
    Address deployNft(const Address& who) { return *l.execute(who, DeployNftContract{"c"}).contract; }

    /// NFT minted by creator, handed to its Rights contract and bound to guid.
    NftKey bound(const Address& creator, const Address& rights, const Address& nft, const Guid& guid) {
        const auto id = *l.execute(creator, MintNft{nft, "uri"}).id;
        EXPECT_TRUE(l.execute(creator, TransferNft{nft, rights, id}).applied);
        EXPECT_TRUE(l.execute(creator, RegisterAsset{rights, NftKey{nft, id}, guid}).applied);
        return NftKey{nft, id};
    }
};

}  // namespace

TEST(Ledger, TransferMovesFunds) {
    World w;
    ASSERT_TRUE(w.l.execute(w.alice, Faucet{w.alice, 100}).applied);
    ASSERT_TRUE(w.l.execute(w.alice, Transfer{w.bob, 100}).applied);
    EXPECT_EQ(w.l.state().balance(w.alice), 0u);
    EXPECT_EQ(w.l.state().balance(w.bob), 100u);
    EXPECT_EQ(w.l.state().totalSupply(), 100u);
}

TEST(Ledger, OverdraftIsRejectedWithoutSideEffects) {
    World w;
    w.l.execute(w.alice, Faucet{w.alice, 100});
    const auto before = w.l.state();
    const auto out = w.l.execute(w.alice, Transfer{w.bob, 101});
    EXPECT_FALSE(out.applied);
    EXPECT_EQ(out.error, ErrorCode::InsufficientFunds);
    EXPECT_EQ(w.l.state(), before);
    EXPECT_FALSE(w.l.log().back().applied);
    EXPECT_EQ(w.l.log().back().error, "InsufficientFunds");
}

TEST(Ledger, WrongNonceIsRejected) {
    World w;
    const auto out = w.l.submit(Tx{w.alice, 5, Faucet{w.alice, 1}});
    EXPECT_FALSE(out.applied);
    EXPECT_EQ(out.error, ErrorCode::BadNonce);
    EXPECT_EQ(w.l.state().balance(w.alice), 0u);
    EXPECT_EQ(w.l.state().nextNonce(w.alice), 0u);
}

TEST(Nft, MintAssignsSequentialIdsAndRecordsMinter) {
    World w;
    const Address nft = w.deployNft(w.alice);
    for (std::uint64_t i = 0; i < 1000; ++i) {
        const Address& minter = i % 3 == 0 ? w.alice : (i % 3 == 1 ? w.bob : w.carol);
        const auto out = w.l.execute(minter, MintNft{nft, "u" + std::to_string(i)});
        ASSERT_TRUE(out.applied);
        ASSERT_EQ(*out.id, i);
    }
    const auto& c = w.l.state().nftContract(nft);
    ASSERT_EQ(c.tokens.size(), 1000u);
    for (std::uint64_t i = 0; i < 1000; ++i) {
        const Address& minter = i % 3 == 0 ? w.alice : (i % 3 == 1 ? w.bob : w.carol);
        EXPECT_EQ(c.tokens.at(i).mintedBy, minter);
        EXPECT_EQ(w.l.state().ownerOf(NftKey{nft, i}), minter);
    }
}

TEST(Nft, OnlyOwnerTransfers) {
    World w;
    const Address nft = w.deployNft(w.alice);
    w.l.execute(w.alice, MintNft{nft, "u"});
    const auto out = w.l.execute(w.bob, TransferNft{nft, w.bob, 0});
    EXPECT_EQ(out.error, ErrorCode::Unauthorized);
    ASSERT_TRUE(w.l.execute(w.alice, TransferNft{nft, w.bob, 0}).applied);
    EXPECT_EQ(w.l.state().ownerOf(NftKey{nft, 0}), w.bob);
    // mintedBy is permanent.
    EXPECT_EQ(w.l.state().token(NftKey{nft, 0}).mintedBy, w.alice);
}

TEST(Nft, UnknownTokenAndContract) {
    World w;
    const Address nft = w.deployNft(w.alice);
    expectError(ErrorCode::UnknownToken, [&] { w.l.state().ownerOf(NftKey{nft, 0}); });
    expectError(ErrorCode::UnknownContract, [&] { w.l.state().ownerOf(NftKey{w.bob, 0}); });
    EXPECT_EQ(w.l.execute(w.alice, TransferNft{nft, w.bob, 3}).error, ErrorCode::UnknownToken);
}

TEST(Rights, IssueNeedsCreatorAndBinding) {
    World w;
    GuidSource g(1);
    const Address rights = w.deployRights(w.alice), nft = w.deployNft(w.alice);
    const auto id = *w.l.execute(w.alice, MintNft{nft, "u"}).id;
    w.l.execute(w.alice, TransferNft{nft, rights, id});
    const IssueRight issue{rights, w.bob, RightKind::TrainModel, "", NftKey{nft, id}, 1000};
    EXPECT_EQ(w.l.execute(w.alice, issue).error, ErrorCode::UnknownToken);  // no manifest binding yet
    ASSERT_TRUE(w.l.execute(w.alice, RegisterAsset{rights, NftKey{nft, id}, g.next()}).applied);
    EXPECT_EQ(w.l.execute(w.bob, issue).error, ErrorCode::Unauthorized);
    EXPECT_TRUE(w.l.execute(w.alice, issue).applied);
}

TEST(Rights, RegisterRequiresContractToOwnTheNft) {
    World w;
    GuidSource g(2);
    const Address rights = w.deployRights(w.alice), nft = w.deployNft(w.alice);
    w.l.execute(w.alice, MintNft{nft, "u"});
    EXPECT_EQ(w.l.execute(w.alice, RegisterAsset{rights, NftKey{nft, 0}, g.next()}).error, ErrorCode::Unauthorized);
}

TEST(Rights, OneAssetManyIndependentRights) {
    World w;
    GuidSource g(3);
    const Address rights = w.deployRights(w.alice), nft = w.deployNft(w.alice);
    const Guid guid = g.next();
    const NftKey key = w.bound(w.alice, rights, nft, guid);
    const auto r0 = *w.l.execute(w.alice, IssueRight{rights, w.bob, RightKind::TrainModel, "", key, 1000}).id;
    const auto r1 = *w.l.execute(w.alice, IssueRight{rights, w.carol, RightKind::Custom, "print", key, 50}).id;
    EXPECT_NE(r0, r1);
    const auto& rc = w.l.state().rightsContract(rights);
    EXPECT_EQ(rc.rights.at(r0).holder, w.bob);
    EXPECT_EQ(rc.rights.at(r1).holder, w.carol);
    EXPECT_EQ(rc.rights.at(r0).boundManifest, guid);
    EXPECT_EQ(rc.rights.at(r1).boundManifest, guid);
    EXPECT_EQ(rc.rights.at(r1).label, "print");
    // Moving one leaves the other untouched.
    ASSERT_TRUE(w.l.execute(w.bob, TransferRight{rights, r0, w.carol}).applied);
    EXPECT_EQ(w.l.state().rightsContract(rights).rights.at(r0).holder, w.carol);
    EXPECT_EQ(w.l.execute(w.bob, TransferRight{rights, r1, w.bob}).error, ErrorCode::Unauthorized);
}

TEST(Rights, ExercisePaysScaledRoyaltyFromEscrow) {
    World w;
    GuidSource g(4);
    const Address rights = w.deployRights(w.alice), nft = w.deployNft(w.alice);
    const Guid guid = g.next();
    const NftKey key = w.bound(w.alice, rights, nft, guid);
    const auto right = *w.l.execute(w.alice, IssueRight{rights, w.bob, RightKind::TrainModel, "", key, 1000}).id;
    w.l.execute(w.bob, Faucet{w.bob, 700});
    EXPECT_EQ(w.l.execute(w.bob, DepositEscrow{rights, 800}).error, ErrorCode::InsufficientFunds);
    ASSERT_TRUE(w.l.execute(w.bob, DepositEscrow{rights, 700}).applied);

    const auto out = w.l.execute(w.bob, ExerciseRight{rights, right, 0.6});
    ASSERT_TRUE(out.applied);
    EXPECT_EQ(out.payout->amount, 600u);
    EXPECT_EQ(out.payout->creator, w.alice);
    EXPECT_EQ(out.payout->manifestGuid, guid);
    EXPECT_EQ(out.payout->asset, key);
    EXPECT_EQ(w.l.state().balance(w.alice), 600u);
    EXPECT_EQ(w.l.state().rightsContract(rights).escrow.at(w.bob), 100u);

    EXPECT_EQ(w.l.execute(w.bob, ExerciseRight{rights, right, 0.2}).error, ErrorCode::InsufficientEscrow);
    EXPECT_EQ(w.l.execute(w.carol, ExerciseRight{rights, right, 0.05}).error, ErrorCode::Unauthorized);
    EXPECT_EQ(w.l.execute(w.bob, ExerciseRight{rights, right, 1.5}).error, ErrorCode::InvalidArgument);
    EXPECT_EQ(w.l.state().totalSupply(), w.l.state().minted);
}

TEST(Royalty, RoundsHalfToEven) {
    EXPECT_EQ(scaleRoyalty(1000, 0.2), 200u);
    EXPECT_EQ(scaleRoyalty(1000, 0.0), 0u);
    EXPECT_EQ(scaleRoyalty(1000, 1.0), 1000u);
    EXPECT_EQ(scaleRoyalty(5, 0.5), 2u);   // 2.5 -> 2
    EXPECT_EQ(scaleRoyalty(7, 0.5), 4u);   // 3.5 -> 4
    EXPECT_EQ(scaleRoyalty(1, 0.5), 0u);
    EXPECT_EQ(scaleRoyalty(3, 0.5), 2u);
    EXPECT_EQ(scaleRoyalty(std::numeric_limits<Amount>::max(), 1.0), std::numeric_limits<Amount>::max());
    expectError(ErrorCode::InvalidArgument, [] { scaleRoyalty(1, -0.1); });
    expectError(ErrorCode::InvalidArgument, [] { scaleRoyalty(1, std::nan("")); });
}

TEST(Royalty, MatchesExtendedPrecisionOracle) {
    // For bases below 2^11 the product base * weight fits the 64-bit long double
    // mantissa exactly, so nearbyint under round-to-nearest-even is an exact oracle.
    ASSERT_EQ(std::fegetround(), FE_TONEAREST);
    static_assert(std::numeric_limits<long double>::digits >= 64);
    Rng rng(9);
    for (int i = 0; i < 100000; ++i) {
        const Amount base = rng.below(2048);
        double weight = rng.uniform();
        if (i % 4 == 0) weight = static_cast<double>(rng.below(1025)) / 1024.0;  // exact halves happen here
        const long double exact = static_cast<long double>(base) * static_cast<long double>(weight);
        ASSERT_EQ(scaleRoyalty(base, weight), static_cast<Amount>(std::nearbyintl(exact))) << base << " * " << weight;
    }
}

TEST(Ledger, ReplayReproducesDigestAndSnapshotsReload) {
    TempDir dir;
    World w;
    GuidSource g(5);
    const Address rights = w.deployRights(w.alice), nft = w.deployNft(w.alice);
    const NftKey key = w.bound(w.alice, rights, nft, g.next());
    const auto right = *w.l.execute(w.alice, IssueRight{rights, w.bob, RightKind::Resell, "", key, 333}).id;
    w.l.execute(w.bob, Faucet{w.bob, 1000});
    w.l.execute(w.bob, DepositEscrow{rights, 1000});
    w.l.execute(w.bob, ExerciseRight{rights, right, 0.5});
    w.l.execute(w.carol, Transfer{w.bob, 5});  // rejected, still logged

    EXPECT_EQ(Ledger::replay(w.l.log()).digest(), w.l.digest());
    EXPECT_EQ(Ledger::replay(w.l.log()).state(), w.l.state());

    w.l.save(dir / "state.json", dir / "log.jsonl");
    const Ledger back = Ledger::load(dir / "state.json", dir / "log.jsonl");
    EXPECT_EQ(back.digest(), w.l.digest());
    EXPECT_EQ(back.log().size(), w.l.log().size());

    // A log that disagrees with the snapshot is refused.
    std::string log = binio::readText(dir / "log.jsonl");
    log = log.substr(0, log.rfind('\n', log.size() - 2) + 1);
    binio::writeText(dir / "log.jsonl", log);
    EXPECT_THROW(Ledger::load(dir / "state.json", dir / "log.jsonl"), Error);
}

TEST(Ledger, IdenticalHistoriesGiveIdenticalDigests) {
    auto run = [] {
        World w;
        const Address nft = w.deployNft(w.alice);
        for (int i = 0; i < 20; ++i) w.l.execute(w.alice, MintNft{nft, std::to_string(i)});
        w.l.execute(w.bob, Faucet{w.bob, 10});
        return w.l.digest();
    };
    EXPECT_EQ(run(), run());
}

TEST(Ledger, TxJsonRoundTrips) {
    GuidSource g(6);
    const Address a = wallet("a"), b = wallet("b");
    const std::vector<TxBody> bodies = {Faucet{a, 5}, Transfer{b, 7}, DeployNftContract{"n\"ame"}, DeployRightsContract{},
                                        MintNft{a, "u"}, TransferNft{a, b, 3}, RegisterAsset{a, NftKey{b, 2}, g.next()},
                                        IssueRight{a, b, RightKind::Custom, "x", NftKey{b, 1}, 9}, TransferRight{a, 4, b},
                                        DepositEscrow{a, 11}, ExerciseRight{a, 2, 0.125}};
    for (std::size_t i = 0; i < bodies.size(); ++i) {
        const Tx tx{a, i, bodies[i]};
        const std::string j = txJson(tx);
        EXPECT_EQ(txJson(txFromJson(j)), j);
    }
}

TEST(Ledger, RandomTransfersConserveSupply) {
    World w;
    Rng rng(7);
    std::vector<Address> accounts;
    for (int i = 0; i < 20; ++i) accounts.push_back(wallet("acct" + std::to_string(i)));
    Amount minted = 0;
    for (int i = 0; i < 5000; ++i) {
        const Address& from = accounts[rng.below(accounts.size())];
        if (rng.below(10) == 0) {
            const Amount amt = rng.below(1000);
            w.l.execute(from, Faucet{from, amt});
            minted += amt;
        } else {
            w.l.execute(from, Transfer{accounts[rng.below(accounts.size())], rng.below(400)});
        }
        ASSERT_EQ(w.l.state().totalSupply(), minted);
    }
    EXPECT_EQ(w.l.state().minted, minted);
}
