#include "deepbow/store.hpp"

#include <spdlog/spdlog.h>
#include <zlib.h>

#include <bit>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <thread>

#include "deepbow/error.hpp"

namespace deepbow {

const SparseBoW* BoWStore::find(const std::string& id) const
{
    auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : &it->second;
}

const SparseBoW& BoWStore::at(const std::string& id) const
{
    if (const auto* bow = find(id)) {
        return *bow;
    }
    throw Error(ErrorCode::not_found, "unknown " + std::string(to_string(metadata_.side)) + " id '" + id + "'");
}

bool BoWStore::put(const std::string& id, SparseBoW bow)
{
    bow.validate(metadata_.index_space == 0 ? std::numeric_limits<std::uint64_t>::max() : metadata_.index_space);
    auto [it, inserted] = entries_.insert_or_assign(id, std::move(bow));
    return !inserted;
}

std::vector<std::pair<std::string, std::string>> read_corpus(std::istream& in)
{
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0) {
            throw Error(ErrorCode::input, "corpus line " + std::to_string(line_no) + ": expected <id>\\t<text>");
        }
        out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> load_corpus(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open corpus " + path);
    }
    return read_corpus(in);
}

std::string utc_timestamp()
{
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

BoWStore precompute(const std::vector<std::pair<std::string, std::string>>& texts, const DeepBowModel& model,
                    const std::string& model_hash, const Vocabulary& vocab, Side side, ScoreMode mode,
                    const TruncationPolicy& truncation, PrecomputeStats* stats, int threads)
{
    if (model.vocab_hash != vocab.hash() || model.vocab_size != vocab.size()) {
        throw Error(ErrorCode::config, "model was trained with a different vocabulary (hash "
                                           + model.vocab_hash + " vs " + vocab.hash() + ")");
    }
    StoreMetadata meta;
    meta.side = side;
    meta.mode = mode;
    meta.truncation = truncation;
    meta.vocab_hash = vocab.hash();
    meta.model_hash = model_hash;
    meta.index_space = vocab.size();
    meta.created = utc_timestamp();
    BoWStore store(meta);

    std::vector<std::optional<SparseBoW>> encoded(texts.size());
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            encoded[i] = represent(model, vocab, texts[i].second, side, mode, truncation);
        }
    };
    const auto workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1 || texts.size() < 2) {
        work(0, texts.size());
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back(work, texts.size() * w / workers, texts.size() * (w + 1) / workers);
        }
        for (auto& t : pool) {
            t.join();
        }
    }

    PrecomputeStats local;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (!encoded[i]) {
            ++local.skipped;
            continue;
        }
        ++local.encoded;
        if (store.put(texts[i].first, std::move(*encoded[i]))) {
            ++local.duplicates;
        }
    }
    if (local.skipped > 0) {
        spdlog::warn("precompute: skipped {} texts with no tokens", local.skipped);
    }
    if (local.duplicates > 0) {
        spdlog::warn("precompute: {} duplicate ids, last occurrence kept", local.duplicates);
    }
    if (stats != nullptr) {
        *stats = local;
    }
    return store;
}

// ---------------------------------------------------------------------------
// binary format

namespace {

constexpr char kMagic[4] = {'D', 'B', 'O', 'W'};

nlohmann::json truncation_json(const TruncationPolicy& p)
{
    switch (p.kind) {
    case TruncationPolicy::Kind::topk: return {{"mode", "topk"}, {"k", p.k}};
    case TruncationPolicy::Kind::threshold: return {{"mode", "threshold"}, {"tau", p.tau}};
    case TruncationPolicy::Kind::none: break;
    }
    return {{"mode", "none"}};
}

TruncationPolicy truncation_from_json(const nlohmann::json& j)
{
    const auto mode = j.at("mode").get<std::string>();
    if (mode == "topk") {
        return TruncationPolicy::top_k(j.at("k").get<std::size_t>());
    }
    if (mode == "threshold") {
        return TruncationPolicy::threshold(j.at("tau").get<double>());
    }
    if (mode == "none") {
        return TruncationPolicy::none();
    }
    throw Error(ErrorCode::integrity, "unknown truncation mode '" + mode + "' in store metadata");
}

class Writer {
public:
    void u32(std::uint32_t v)
    {
        for (int i = 0; i < 4; ++i) {
            bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
        }
    }
    void u64(std::uint64_t v)
    {
        for (int i = 0; i < 8; ++i) {
            bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
        }
    }
    void varint(std::uint64_t v)
    {
        while (v >= 0x80) {
            bytes.push_back(static_cast<char>((v & 0x7f) | 0x80));
            v >>= 7;
        }
        bytes.push_back(static_cast<char>(v));
    }
    void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
    void raw(std::string_view s) { bytes.append(s); }

    std::string bytes;
};

class Reader {
public:
    Reader(const std::string& bytes, std::size_t begin, std::size_t end) : data_(bytes), pos_(begin), end_(end) {}

    [[nodiscard]] std::size_t offset() const noexcept { return pos_; }
    [[nodiscard]] bool done() const noexcept { return pos_ == end_; }

    std::uint32_t u32()
    {
        need(4, "u32");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        }
        pos_ += 4;
        return v;
    }
    std::uint64_t u64()
    {
        need(8, "u64");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        }
        pos_ += 8;
        return v;
    }
    std::uint64_t varint()
    {
        const std::size_t start = pos_;
        std::uint64_t v = 0;
        for (int shift = 0; shift < 64; shift += 7) {
            need(1, "varint");
            const auto b = static_cast<unsigned char>(data_[pos_++]);
            v |= static_cast<std::uint64_t>(b & 0x7f) << shift;
            if ((b & 0x80) == 0) {
                return v;
            }
        }
        fail(start, "varint longer than 10 bytes");
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string raw(std::uint64_t n)
    {
        need(n, "string");
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    [[noreturn]] void fail(std::size_t at, const std::string& what) const
    {
        throw Error(ErrorCode::integrity, "corrupt store at offset " + std::to_string(at) + ": " + what);
    }

private:
    void need(std::uint64_t n, const char* what) const
    {
        if (n > end_ - pos_) {
            fail(pos_, std::string("truncated ") + what);
        }
    }

    const std::string& data_;
    std::size_t pos_;
    std::size_t end_;
};

}  // namespace

void write_store(std::ostream& out, const BoWStore& store)
{
    const auto& meta = store.metadata();
    nlohmann::json j = {{"side", to_string(meta.side)},
                        {"mode", to_string(meta.mode)},
                        {"truncation", truncation_json(meta.truncation)},
                        {"vocab_hash", meta.vocab_hash},
                        {"model_hash", meta.model_hash},
                        {"index_space", meta.index_space},
                        {"created", meta.created}};
    const std::string meta_text = j.dump();

    Writer payload;
    payload.u32(static_cast<std::uint32_t>(meta_text.size()));
    payload.raw(meta_text);
    payload.u64(store.size());
    for (const auto& [id, bow] : store.entries()) {
        payload.varint(id.size());
        payload.raw(id);
        payload.varint(bow.size());
        TokenId prev = 0;
        for (std::size_t i = 0; i < bow.entries.size(); ++i) {
            const auto idx = bow.entries[i].index;
            payload.varint(i == 0 ? idx : idx - prev);
            prev = idx;
        }
        for (const auto& e : bow.entries) {
            payload.f32(e.weight);
        }
    }

    Writer head;
    head.raw(std::string_view(kMagic, 4));
    head.u32(kStoreFormatVersion);
    const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(payload.bytes.data()),
                           static_cast<uInt>(payload.bytes.size()));
    Writer tail;
    tail.u32(static_cast<std::uint32_t>(crc));

    out.write(head.bytes.data(), static_cast<std::streamsize>(head.bytes.size()));
    out.write(payload.bytes.data(), static_cast<std::streamsize>(payload.bytes.size()));
    out.write(tail.bytes.data(), static_cast<std::streamsize>(tail.bytes.size()));
    if (!out) {
        throw Error(ErrorCode::io, "failed writing store");
    }
}

BoWStore read_store(std::istream& in)
{
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 12) {
        throw Error(ErrorCode::integrity, "corrupt store at offset " + std::to_string(bytes.size())
                                              + ": file shorter than header and checksum");
    }
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw Error(ErrorCode::integrity, "corrupt store at offset 0: bad magic");
    }
    Reader header(bytes, 4, 8);
    const auto version = header.u32();
    if (version != kStoreFormatVersion) {
        throw Error(ErrorCode::version, "store format version " + std::to_string(version) + " (supported: "
                                            + std::to_string(kStoreFormatVersion) + ")");
    }
    const std::size_t payload_end = bytes.size() - 4;
    Reader trailer(bytes, payload_end, bytes.size());
    const auto stored_crc = trailer.u32();
    const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(bytes.data() + 8), static_cast<uInt>(payload_end - 8));
    if (static_cast<std::uint32_t>(crc) != stored_crc) {
        throw Error(ErrorCode::integrity, "corrupt store at offset " + std::to_string(payload_end)
                                              + ": checksum mismatch over payload");
    }

    Reader r(bytes, 8, payload_end);
    const auto meta_at = r.offset();
    const auto meta_len = r.u32();
    StoreMetadata meta;
    try {
        const auto j = nlohmann::json::parse(r.raw(meta_len));
        meta.side = parse_side(j.at("side").get<std::string>());
        meta.mode = parse_score_mode(j.at("mode").get<std::string>());
        meta.truncation = truncation_from_json(j.at("truncation"));
        meta.vocab_hash = j.at("vocab_hash").get<std::string>();
        meta.model_hash = j.at("model_hash").get<std::string>();
        meta.index_space = j.at("index_space").get<std::uint64_t>();
        meta.created = j.at("created").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        r.fail(meta_at, std::string("bad metadata: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::integrity) {
            throw;
        }
        r.fail(meta_at, std::string("bad metadata: ") + e.what());
    }

    BoWStore store(meta);
    const auto count = r.u64();
    for (std::uint64_t n = 0; n < count; ++n) {
        const auto record_at = r.offset();
        const auto id = r.raw(r.varint());
        const auto size = r.varint();
        if (size > payload_end - r.offset()) {
            r.fail(record_at, "entry count exceeds remaining bytes");
        }
        SparseBoW bow;
        bow.entries.resize(size);
        std::uint64_t prev = 0;
        for (std::uint64_t i = 0; i < size; ++i) {
            const auto at = r.offset();
            const auto delta = r.varint();
            if (i > 0 && delta == 0) {
                r.fail(at, "postings not strictly increasing");
            }
            prev = i == 0 ? delta : prev + delta;
            if (prev > std::numeric_limits<TokenId>::max()) {
                r.fail(at, "token index out of range");
            }
            bow.entries[i].index = static_cast<TokenId>(prev);
        }
        for (auto& e : bow.entries) {
            e.weight = r.f32();
        }
        if (!bow.is_valid(meta.index_space)) {
            r.fail(record_at, "record '" + id + "' violates the representation invariants");
        }
        if (store.find(id) != nullptr) {
            r.fail(record_at, "duplicate id '" + id + "'");
        }
        store.put(id, std::move(bow));
    }
    if (!r.done()) {
        r.fail(r.offset(), "trailing bytes after the last record");
    }
    return store;
}

void save_store(const std::string& path, const BoWStore& store)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::io, "cannot write store " + path);
    }
    write_store(out, store);
}

BoWStore load_store(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open store " + path);
    }
    return read_store(in);
}

}  // namespace deepbow
