#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ekila/common.hpp"

namespace ekila::ledger {

/// Currency in integer micro-units.
using Amount = std::uint64_t;

enum class RightKind { TrainModel, GenerateImage, Resell, Custom };
std::string_view rightKindName(RightKind kind);
RightKind rightKindFromName(std::string_view name);

struct NftKey {
    Address contract;
    std::uint64_t id = 0;

    auto operator<=>(const NftKey&) const = default;
};

struct NftToken {
    Address owner;
    std::string uri;
    Address mintedBy;

    bool operator==(const NftToken&) const = default;
};

/// ERC-721 collection: token ids are assigned 0, 1, 2, ... and never reused.
struct NftContract {
    Address deployer;
    std::string name;
    std::map<std::uint64_t, NftToken> tokens;
    std::uint64_t nextId = 0;

    bool operator==(const NftContract&) const = default;
};

struct RightsToken {
    Address holder;
    RightKind kind = RightKind::Custom;
    std::string label;  // free text for RightKind::Custom
    Amount baseRoyalty = 0;
    Guid boundManifest;
    NftKey asset;

    bool operator==(const RightsToken&) const = default;
};

/// Creator-operated contract that owns asset NFTs, binds them to manifest GUIDs,
/// issues rights tokens and settles royalties out of per-payer escrow.
struct RightsContract {
    Address creator;
    std::map<NftKey, Guid> manifestGuids;
    std::map<std::uint64_t, RightsToken> rights;
    std::uint64_t nextRightId = 0;
    std::map<Address, Amount> escrow;

    bool operator==(const RightsContract&) const = default;
};

struct LedgerState {
    std::map<Address, Amount> balances;
    std::map<Address, std::uint64_t> nonces;
    std::map<Address, NftContract> nftContracts;
    std::map<Address, RightsContract> rightsContracts;
    Amount minted = 0;  // faucet issuance; the only source of new currency

    bool operator==(const LedgerState&) const = default;

    Amount balance(const Address& a) const;
    std::uint64_t nextNonce(const Address& a) const;
    /// Sum of all balances plus all escrow holdings.
    Amount totalSupply() const;

    const NftContract& nftContract(const Address& a) const;
    const RightsContract& rightsContract(const Address& a) const;
    bool isRightsContract(const Address& a) const { return rightsContracts.contains(a); }
    const NftToken& token(const NftKey& key) const;
    Address ownerOf(const NftKey& key) const { return token(key).owner; }
};

// Transaction bodies. The sender is the caller in every case.
struct Faucet { Address to; Amount amount = 0; };
struct Transfer { Address to; Amount amount = 0; };
struct DeployNftContract { std::string name; };
struct DeployRightsContract {};
struct MintNft { Address contract; std::string uri; };
struct TransferNft { Address contract; Address to; std::uint64_t nftId = 0; };
struct RegisterAsset { Address rightsContract; NftKey nft; Guid manifestGuid; };
struct IssueRight {
    Address rightsContract;
    Address holder;
    RightKind kind = RightKind::Custom;
    std::string label;
    NftKey nft;
    Amount baseRoyalty = 0;
};
struct TransferRight { Address rightsContract; std::uint64_t rightId = 0; Address to; };
struct DepositEscrow { Address rightsContract; Amount amount = 0; };
struct ExerciseRight { Address rightsContract; std::uint64_t rightId = 0; double weight = 0.0; };

using TxBody = std::variant<Faucet, Transfer, DeployNftContract, DeployRightsContract, MintNft, TransferNft,
                            RegisterAsset, IssueRight, TransferRight, DepositEscrow, ExerciseRight>;

struct Tx {
    Address sender;
    std::uint64_t nonce = 0;
    TxBody body;
};

struct PayoutRecord {
    Address rightsContract;
    std::uint64_t rightId = 0;
    Address holder;
    Address creator;
    Amount amount = 0;
    double weight = 0.0;
    Guid manifestGuid;
    NftKey asset;
};

struct TxOutcome {
    bool applied = false;
    std::optional<ErrorCode> error;
    std::string message;
    std::optional<Address> contract;    // deploys
    std::optional<std::uint64_t> id;    // minted nftId / issued rightId
    std::optional<PayoutRecord> payout; // exercises
};

/// Applies tx to state. On failure the state is left untouched (every check runs
/// before the first mutation) and the outcome carries the error.
TxOutcome applyTx(LedgerState& state, const Tx& tx);

/// round-half-to-even(base * weight) computed exactly; weight must lie in [0, 1].
Amount scaleRoyalty(Amount base, double weight);

/// Contract address created by a deploy from sender at nonce.
Address contractAddress(const Address& sender, std::uint64_t nonce);

struct LogEntry {
    std::uint64_t seq = 0;
    Tx tx;
    bool applied = false;
    std::string error;  // error code name when rejected
};

/// Single-writer sequencer over LedgerState with an append-only transaction log.
class Ledger {
public:
    const LedgerState& state() const { return state_; }
    const std::vector<LogEntry>& log() const { return log_; }

    TxOutcome submit(const Tx& tx);
    /// submit() with the sender's next nonce filled in.
    TxOutcome execute(const Address& sender, TxBody body);

    Digest256 digest() const;

    static Ledger replay(const std::vector<LogEntry>& log);

    /// State snapshot JSON (with digest and log length) plus JSONL log.
    void save(const std::filesystem::path& stateFile, const std::filesystem::path& logFile) const;
    /// Replays the log and refuses snapshots whose digest disagrees with the replay.
    static Ledger load(const std::filesystem::path& stateFile, const std::filesystem::path& logFile);

private:
    LedgerState state_;
    std::vector<LogEntry> log_;
};

Digest256 stateDigest(const LedgerState& state);
std::string stateJson(const LedgerState& state);
std::string txJson(const Tx& tx);
Tx txFromJson(std::string_view json);

}  // namespace ekila::ledger
