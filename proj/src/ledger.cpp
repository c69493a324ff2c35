#include "ekila/ledger.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ekila/binio.hpp"
#include "ekila/crypto.hpp"

namespace ekila::ledger {

using nlohmann::json;

std::string_view rightKindName(RightKind kind) {
    switch (kind) {
        case RightKind::TrainModel: return "TrainModel";
        case RightKind::GenerateImage: return "GenerateImage";
        case RightKind::Resell: return "Resell";
        case RightKind::Custom: return "Custom";
    }
    return "Custom";
}

RightKind rightKindFromName(std::string_view name) {
    for (RightKind k : {RightKind::TrainModel, RightKind::GenerateImage, RightKind::Resell, RightKind::Custom})
        if (rightKindName(k) == name) return k;
    fail(ErrorCode::InvalidArgument, "unknown right kind '" + std::string(name) + "'");
}

Amount LedgerState::balance(const Address& a) const {
    auto it = balances.find(a);
    return it == balances.end() ? 0 : it->second;
}

std::uint64_t LedgerState::nextNonce(const Address& a) const {
    auto it = nonces.find(a);
    return it == nonces.end() ? 0 : it->second;
}

Amount LedgerState::totalSupply() const {
    Amount total = 0;
    for (const auto& [_, v] : balances) total += v;
    for (const auto& [_, rc] : rightsContracts)
        for (const auto& [__, v] : rc.escrow) total += v;
    return total;
}

const NftContract& LedgerState::nftContract(const Address& a) const {
    auto it = nftContracts.find(a);
    if (it == nftContracts.end()) fail(ErrorCode::UnknownContract, "no NFT contract at " + a.str());
    return it->second;
}

const RightsContract& LedgerState::rightsContract(const Address& a) const {
    auto it = rightsContracts.find(a);
    if (it == rightsContracts.end()) fail(ErrorCode::UnknownContract, "no Rights contract at " + a.str());
    return it->second;
}

const NftToken& LedgerState::token(const NftKey& key) const {
    const NftContract& c = nftContract(key.contract);
    auto it = c.tokens.find(key.id);
    if (it == c.tokens.end())
        fail(ErrorCode::UnknownToken, "token " + std::to_string(key.id) + " does not exist in " + key.contract.str());
    return it->second;
}

Address contractAddress(const Address& sender, std::uint64_t nonce) {
    binio::Writer w;
    w.magic("ekila.contract");
    w.raw(sender.raw.view());
    w.u64(nonce);
    Digest256 d = crypto::sha256(w.bytes());
    Address a;
    std::copy_n(d.bytes.begin(), 20, a.raw.bytes.begin());
    return a;
}

Amount scaleRoyalty(Amount base, double weight) {
    if (!std::isfinite(weight) || weight < 0.0 || weight > 1.0)
        fail(ErrorCode::InvalidArgument, "apportionment weight must lie in [0, 1]");
    if (weight == 0.0 || base == 0) return 0;
    // weight = mantissa * 2^-shift exactly, with a 53-bit integer mantissa.
    int exp = 0;
    double frac = std::frexp(weight, &exp);
    auto mantissa = static_cast<std::uint64_t>(std::ldexp(frac, 53));
    int shift = 53 - exp;
    unsigned __int128 product = static_cast<unsigned __int128>(base) * mantissa;
    if (shift >= 127) return 0;  // product < 2^117, so the value is below one half
    unsigned __int128 q = product >> shift;
    unsigned __int128 r = product - (q << shift);
    unsigned __int128 half = static_cast<unsigned __int128>(1) << (shift - 1);
    if (r > half || (r == half && (q & 1))) ++q;
    return static_cast<Amount>(q);
}

namespace {

struct Reject {
    ErrorCode code;
    std::string message;
};

[[noreturn]] void reject(ErrorCode code, std::string message) { throw Reject{code, std::move(message)}; }

Amount checkedAdd(Amount a, Amount b) {
    if (a > ~Amount{0} - b) reject(ErrorCode::InvalidArgument, "amount overflow");
    return a + b;
}

class Executor {
public:
    Executor(LedgerState& s, const Tx& tx, TxOutcome& out) : s_(s), tx_(tx), out_(out) {}

    void operator()(const Faucet& b) {
        Amount next = checkedAdd(s_.balance(b.to), b.amount);
        checkedAdd(s_.minted, b.amount);
        s_.balances[b.to] = next;
        s_.minted += b.amount;
    }

    void operator()(const Transfer& b) {
        Amount from = s_.balance(tx_.sender);
        if (from < b.amount) reject(ErrorCode::InsufficientFunds, "balance " + std::to_string(from) + " < " + std::to_string(b.amount));
        if (b.to == tx_.sender) return;
        Amount to = checkedAdd(s_.balance(b.to), b.amount);
        s_.balances[tx_.sender] = from - b.amount;
        s_.balances[b.to] = to;
    }

    void operator()(const DeployNftContract& b) {
        Address addr = contractAddress(tx_.sender, tx_.nonce);
        if (s_.nftContracts.contains(addr) || s_.rightsContracts.contains(addr))
            reject(ErrorCode::InvalidArgument, "contract address in use");
        s_.nftContracts[addr] = NftContract{tx_.sender, b.name, {}, 0};
        out_.contract = addr;
    }

    void operator()(const DeployRightsContract&) {
        Address addr = contractAddress(tx_.sender, tx_.nonce);
        if (s_.nftContracts.contains(addr) || s_.rightsContracts.contains(addr))
            reject(ErrorCode::InvalidArgument, "contract address in use");
        RightsContract rc;
        rc.creator = tx_.sender;
        s_.rightsContracts[addr] = std::move(rc);
        out_.contract = addr;
    }

    void operator()(const MintNft& b) {
        NftContract& c = nft(b.contract);
        std::uint64_t id = c.nextId;
        c.tokens[id] = NftToken{tx_.sender, b.uri, tx_.sender};
        c.nextId = id + 1;
        out_.id = id;
    }

    void operator()(const TransferNft& b) {
        NftContract& c = nft(b.contract);
        auto it = c.tokens.find(b.nftId);
        if (it == c.tokens.end()) reject(ErrorCode::UnknownToken, "no token " + std::to_string(b.nftId));
        const Address owner = it->second.owner;
        bool viaRights = s_.rightsContracts.contains(owner) && s_.rightsContracts.at(owner).creator == tx_.sender;
        if (owner != tx_.sender && !viaRights) reject(ErrorCode::Unauthorized, "only the owner may transfer");
        it->second.owner = b.to;
    }

    void operator()(const RegisterAsset& b) {
        RightsContract& rc = rights(b.rightsContract);
        requireCreator(rc);
        const NftContract& c = nft(b.nft.contract);
        auto it = c.tokens.find(b.nft.id);
        if (it == c.tokens.end()) reject(ErrorCode::UnknownToken, "no token " + std::to_string(b.nft.id));
        if (it->second.owner != b.rightsContract)
            reject(ErrorCode::Unauthorized, "Rights contract does not own the NFT");
        if (rc.manifestGuids.contains(b.nft)) reject(ErrorCode::InvalidArgument, "asset already registered");
        rc.manifestGuids[b.nft] = b.manifestGuid;
    }

    void operator()(const IssueRight& b) {
        RightsContract& rc = rights(b.rightsContract);
        requireCreator(rc);
        auto it = rc.manifestGuids.find(b.nft);
        if (it == rc.manifestGuids.end())
            reject(ErrorCode::UnknownToken, "NFT has no manifest binding in this Rights contract");
        std::uint64_t id = rc.nextRightId;
        rc.rights[id] = RightsToken{b.holder, b.kind, b.label, b.baseRoyalty, it->second, b.nft};
        rc.nextRightId = id + 1;
        out_.id = id;
    }

    void operator()(const TransferRight& b) {
        RightsToken& r = right(rights(b.rightsContract), b.rightId);
        if (r.holder != tx_.sender) reject(ErrorCode::Unauthorized, "only the holder may transfer a right");
        r.holder = b.to;
    }

    void operator()(const DepositEscrow& b) {
        RightsContract& rc = rights(b.rightsContract);
        Amount from = s_.balance(tx_.sender);
        if (from < b.amount) reject(ErrorCode::InsufficientFunds, "balance " + std::to_string(from) + " < " + std::to_string(b.amount));
        Amount held = checkedAdd(rc.escrow[tx_.sender], b.amount);
        s_.balances[tx_.sender] = from - b.amount;
        rc.escrow[tx_.sender] = held;
    }

    void operator()(const ExerciseRight& b) {
        RightsContract& rc = rights(b.rightsContract);
        RightsToken& r = right(rc, b.rightId);
        if (r.holder != tx_.sender) reject(ErrorCode::Unauthorized, "only the holder may exercise a right");
        Amount payout = 0;
        try {
            payout = scaleRoyalty(r.baseRoyalty, b.weight);
        } catch (const Error& e) {
            reject(e.code(), e.what());
        }
        auto esc = rc.escrow.find(tx_.sender);
        Amount held = esc == rc.escrow.end() ? 0 : esc->second;
        if (held < payout)
            reject(ErrorCode::InsufficientEscrow, "escrow " + std::to_string(held) + " < payout " + std::to_string(payout));
        Amount credited = checkedAdd(s_.balance(rc.creator), payout);
        if (payout > 0) {
            esc->second = held - payout;
            s_.balances[rc.creator] = credited;
        }
        out_.payout = PayoutRecord{b.rightsContract, b.rightId, tx_.sender, rc.creator, payout, b.weight,
                                   r.boundManifest, r.asset};
    }

private:
    NftContract& nft(const Address& a) {
        auto it = s_.nftContracts.find(a);
        if (it == s_.nftContracts.end()) reject(ErrorCode::UnknownContract, "no NFT contract at " + a.str());
        return it->second;
    }
    RightsContract& rights(const Address& a) {
        auto it = s_.rightsContracts.find(a);
        if (it == s_.rightsContracts.end()) reject(ErrorCode::UnknownContract, "no Rights contract at " + a.str());
        return it->second;
    }
    RightsToken& right(RightsContract& rc, std::uint64_t id) {
        auto it = rc.rights.find(id);
        if (it == rc.rights.end()) reject(ErrorCode::UnknownToken, "no right " + std::to_string(id));
        return it->second;
    }
    void requireCreator(const RightsContract& rc) {
        if (rc.creator != tx_.sender) reject(ErrorCode::Unauthorized, "caller is not the contract creator");
    }

    LedgerState& s_;
    const Tx& tx_;
    TxOutcome& out_;
};

}  // namespace

TxOutcome applyTx(LedgerState& state, const Tx& tx) {
    TxOutcome out;
    std::uint64_t expected = state.nextNonce(tx.sender);
    if (tx.nonce != expected) {
        out.error = ErrorCode::BadNonce;
        out.message = "expected nonce " + std::to_string(expected) + ", got " + std::to_string(tx.nonce);
        return out;
    }
    try {
        std::visit(Executor(state, tx, out), tx.body);
    } catch (const Reject& r) {
        TxOutcome failed;
        failed.error = r.code;
        failed.message = r.message;
        return failed;
    }
    state.nonces[tx.sender] = expected + 1;
    out.applied = true;
    return out;
}

// ---------------------------------------------------------------------------
// JSON encoding

namespace {

json nftKeyJson(const NftKey& k) { return {{"contract", k.contract.str()}, {"id", k.id}}; }

NftKey nftKeyFrom(const json& j) {
    return NftKey{Address::parse(j.at("contract").get<std::string>()), j.at("id").get<std::uint64_t>()};
}

struct BodyToJson {
    json& j;
    void operator()(const Faucet& b) { j["type"] = "faucet"; j["to"] = b.to.str(); j["amount"] = b.amount; }
    void operator()(const Transfer& b) { j["type"] = "transfer"; j["to"] = b.to.str(); j["amount"] = b.amount; }
    void operator()(const DeployNftContract& b) { j["type"] = "deployNft"; j["name"] = b.name; }
    void operator()(const DeployRightsContract&) { j["type"] = "deployRights"; }
    void operator()(const MintNft& b) { j["type"] = "mintNft"; j["contract"] = b.contract.str(); j["uri"] = b.uri; }
    void operator()(const TransferNft& b) {
        j["type"] = "transferNft"; j["contract"] = b.contract.str(); j["to"] = b.to.str(); j["nftId"] = b.nftId;
    }
    void operator()(const RegisterAsset& b) {
        j["type"] = "registerAsset"; j["rights"] = b.rightsContract.str(); j["nft"] = nftKeyJson(b.nft);
        j["manifest"] = b.manifestGuid.str();
    }
    void operator()(const IssueRight& b) {
        j["type"] = "issueRight"; j["rights"] = b.rightsContract.str(); j["holder"] = b.holder.str();
        j["kind"] = rightKindName(b.kind); j["label"] = b.label; j["nft"] = nftKeyJson(b.nft);
        j["baseRoyalty"] = b.baseRoyalty;
    }
    void operator()(const TransferRight& b) {
        j["type"] = "transferRight"; j["rights"] = b.rightsContract.str(); j["rightId"] = b.rightId;
        j["to"] = b.to.str();
    }
    void operator()(const DepositEscrow& b) {
        j["type"] = "deposit"; j["rights"] = b.rightsContract.str(); j["amount"] = b.amount;
    }
    void operator()(const ExerciseRight& b) {
        j["type"] = "exercise"; j["rights"] = b.rightsContract.str(); j["rightId"] = b.rightId;
        j["weight"] = b.weight;
    }
};

json txToJsonValue(const Tx& tx) {
    json j;
    j["sender"] = tx.sender.str();
    j["nonce"] = tx.nonce;
    std::visit(BodyToJson{j}, tx.body);
    return j;
}

Address addr(const json& j, const char* key) { return Address::parse(j.at(key).get<std::string>()); }

Tx txFromJsonValue(const json& j) {
    Tx tx;
    tx.sender = addr(j, "sender");
    tx.nonce = j.at("nonce").get<std::uint64_t>();
    const std::string type = j.at("type").get<std::string>();
    if (type == "faucet") tx.body = Faucet{addr(j, "to"), j.at("amount").get<Amount>()};
    else if (type == "transfer") tx.body = Transfer{addr(j, "to"), j.at("amount").get<Amount>()};
    else if (type == "deployNft") tx.body = DeployNftContract{j.at("name").get<std::string>()};
    else if (type == "deployRights") tx.body = DeployRightsContract{};
    else if (type == "mintNft") tx.body = MintNft{addr(j, "contract"), j.at("uri").get<std::string>()};
    else if (type == "transferNft")
        tx.body = TransferNft{addr(j, "contract"), addr(j, "to"), j.at("nftId").get<std::uint64_t>()};
    else if (type == "registerAsset")
        tx.body = RegisterAsset{addr(j, "rights"), nftKeyFrom(j.at("nft")), Guid::parse(j.at("manifest").get<std::string>())};
    else if (type == "issueRight")
        tx.body = IssueRight{addr(j, "rights"), addr(j, "holder"), rightKindFromName(j.at("kind").get<std::string>()),
                             j.at("label").get<std::string>(), nftKeyFrom(j.at("nft")), j.at("baseRoyalty").get<Amount>()};
    else if (type == "transferRight")
        tx.body = TransferRight{addr(j, "rights"), j.at("rightId").get<std::uint64_t>(), addr(j, "to")};
    else if (type == "deposit") tx.body = DepositEscrow{addr(j, "rights"), j.at("amount").get<Amount>()};
    else if (type == "exercise")
        tx.body = ExerciseRight{addr(j, "rights"), j.at("rightId").get<std::uint64_t>(), j.at("weight").get<double>()};
    else fail(ErrorCode::Format, "unknown transaction type '" + type + "'");
    return tx;
}

json stateToJson(const LedgerState& s) {
    json j;
    j["balances"] = json::object();
    for (const auto& [a, v] : s.balances) j["balances"][a.str()] = v;
    j["nonces"] = json::object();
    for (const auto& [a, v] : s.nonces) j["nonces"][a.str()] = v;
    j["minted"] = s.minted;
    j["nftContracts"] = json::object();
    for (const auto& [a, c] : s.nftContracts) {
        json cj{{"deployer", c.deployer.str()}, {"name", c.name}, {"nextId", c.nextId}};
        cj["tokens"] = json::array();
        for (const auto& [id, t] : c.tokens)
            cj["tokens"].push_back({{"id", id}, {"owner", t.owner.str()}, {"uri", t.uri}, {"mintedBy", t.mintedBy.str()}});
        j["nftContracts"][a.str()] = cj;
    }
    j["rightsContracts"] = json::object();
    for (const auto& [a, rc] : s.rightsContracts) {
        json rj{{"creator", rc.creator.str()}, {"nextRightId", rc.nextRightId}};
        rj["assets"] = json::array();
        for (const auto& [k, g] : rc.manifestGuids) rj["assets"].push_back({{"nft", nftKeyJson(k)}, {"manifest", g.str()}});
        rj["rights"] = json::array();
        for (const auto& [id, r] : rc.rights)
            rj["rights"].push_back({{"id", id}, {"holder", r.holder.str()}, {"kind", rightKindName(r.kind)},
                                    {"label", r.label}, {"baseRoyalty", r.baseRoyalty},
                                    {"manifest", r.boundManifest.str()}, {"nft", nftKeyJson(r.asset)}});
        rj["escrow"] = json::object();
        for (const auto& [p, v] : rc.escrow) rj["escrow"][p.str()] = v;
        j["rightsContracts"][a.str()] = rj;
    }
    return j;
}

}  // namespace

std::string txJson(const Tx& tx) { return txToJsonValue(tx).dump(); }

Tx txFromJson(std::string_view text) {
    try {
        return txFromJsonValue(json::parse(text));
    } catch (const json::exception& e) {
        fail(ErrorCode::Format, std::string("malformed transaction: ") + e.what());
    }
}

std::string stateJson(const LedgerState& state) { return stateToJson(state).dump(); }

Digest256 stateDigest(const LedgerState& state) { return crypto::sha256(stateJson(state)); }

// ---------------------------------------------------------------------------

TxOutcome Ledger::submit(const Tx& tx) {
    TxOutcome out = applyTx(state_, tx);
    LogEntry entry;
    entry.seq = log_.size();
    entry.tx = tx;
    entry.applied = out.applied;
    if (out.error) entry.error = std::string(errorCodeName(*out.error));
    log_.push_back(std::move(entry));
    return out;
}

TxOutcome Ledger::execute(const Address& sender, TxBody body) {
    return submit(Tx{sender, state_.nextNonce(sender), std::move(body)});
}

Digest256 Ledger::digest() const { return stateDigest(state_); }

Ledger Ledger::replay(const std::vector<LogEntry>& log) {
    Ledger l;
    for (const auto& e : log) {
        TxOutcome out = l.submit(e.tx);
        if (out.applied != e.applied)
            fail(ErrorCode::Format, "replay diverged at log entry " + std::to_string(e.seq));
    }
    return l;
}

void Ledger::save(const std::filesystem::path& stateFile, const std::filesystem::path& logFile) const {
    std::string lines;
    for (const auto& e : log_) {
        json j{{"seq", e.seq}, {"tx", txToJsonValue(e.tx)}, {"applied", e.applied}};
        if (!e.error.empty()) j["error"] = e.error;
        lines += j.dump();
        lines += '\n';
    }
    binio::writeText(logFile, lines);
    json snap{{"format", "ekila.ledger"}, {"version", 1}, {"logLength", log_.size()},
              {"digest", digest().hex()}, {"state", stateToJson(state_)}};
    binio::writeText(stateFile, snap.dump(2));
}

Ledger Ledger::load(const std::filesystem::path& stateFile, const std::filesystem::path& logFile) {
    if (!std::filesystem::exists(stateFile)) return Ledger{};
    json snap;
    try {
        snap = json::parse(binio::readText(stateFile));
    } catch (const json::exception& e) {
        fail(ErrorCode::Format, std::string("ledger snapshot: ") + e.what());
    }
    if (snap.value("format", "") != "ekila.ledger") fail(ErrorCode::Format, "not a ledger snapshot");
    if (snap.value("version", 0) != 1) fail(ErrorCode::UnsupportedVersion, "unsupported ledger snapshot version");
    std::vector<LogEntry> log;
    std::ifstream in(logFile);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            json j = json::parse(line);
            LogEntry e;
            e.seq = j.at("seq").get<std::uint64_t>();
            e.tx = txFromJsonValue(j.at("tx"));
            e.applied = j.at("applied").get<bool>();
            e.error = j.value("error", "");
            log.push_back(std::move(e));
        } catch (const json::exception& ex) {
            fail(ErrorCode::Format, std::string("ledger log: ") + ex.what());
        }
    }
    Ledger l = replay(log);
    if (l.log_.size() != snap.at("logLength").get<std::size_t>() ||
        l.digest().hex() != snap.at("digest").get<std::string>())
        fail(ErrorCode::Format, "ledger snapshot digest does not match log replay");
    return l;
}

}  // namespace ekila::ledger
