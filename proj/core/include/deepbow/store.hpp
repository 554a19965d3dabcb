#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "deepbow/model.hpp"

namespace deepbow {

inline constexpr std::uint32_t kStoreFormatVersion = 1;

struct StoreMetadata {
    Side side = Side::product;
    ScoreMode mode = ScoreMode::q_synonym;
    TruncationPolicy truncation;
    std::string vocab_hash;
    std::string model_hash;
    std::uint64_t index_space = 0;  // v + B
    std::string created;            // ISO-8601 UTC

    friend bool operator==(const StoreMetadata&, const StoreMetadata&) = default;
};

/// Precomputed sparse representations keyed by text id; immutable once built.
class BoWStore {
public:
    BoWStore() = default;
    explicit BoWStore(StoreMetadata metadata) : metadata_(std::move(metadata)) {}

    [[nodiscard]] const StoreMetadata& metadata() const noexcept { return metadata_; }
    [[nodiscard]] const std::map<std::string, SparseBoW>& entries() const noexcept { return entries_; }
    [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
    [[nodiscard]] bool empty() const noexcept { return entries_.empty(); }

    /// nullptr when absent.
    [[nodiscard]] const SparseBoW* find(const std::string& id) const;
    /// Throws Error{not_found} naming the id.
    [[nodiscard]] const SparseBoW& at(const std::string& id) const;

    /// Validates the representation; returns true if an earlier entry was replaced.
    bool put(const std::string& id, SparseBoW bow);

    friend bool operator==(const BoWStore&, const BoWStore&) = default;

private:
    StoreMetadata metadata_;
    std::map<std::string, SparseBoW> entries_;
};

/// `<id>\t<text>` per line.
std::vector<std::pair<std::string, std::string>> read_corpus(std::istream& in);
std::vector<std::pair<std::string, std::string>> load_corpus(const std::string& path);

struct PrecomputeStats {
    std::size_t encoded = 0;
    std::size_t skipped = 0;     // texts with nothing to encode
    std::size_t duplicates = 0;  // ids seen more than once (last one kept)
};

/// Encodes every text through the head used for `side` in `mode`, applies
/// `truncation` and stores the result. Refuses (Error{config}) when the model
/// was not trained against this vocabulary.
BoWStore precompute(const std::vector<std::pair<std::string, std::string>>& texts, const DeepBowModel& model,
                    const std::string& model_hash, const Vocabulary& vocab, Side side, ScoreMode mode,
                    const TruncationPolicy& truncation, PrecomputeStats* stats = nullptr, int threads = 1);

/// Binary container: "DBOW", u32 version, payload, CRC32 of payload.
void write_store(std::ostream& out, const BoWStore& store);
/// Throws Error{version} on an unknown format version and Error{integrity}
/// (with the byte offset) on bad magic, truncation, checksum failure or
/// unsorted postings.
BoWStore read_store(std::istream& in);
void save_store(const std::string& path, const BoWStore& store);
BoWStore load_store(const std::string& path);

std::string utc_timestamp();

}  // namespace deepbow
