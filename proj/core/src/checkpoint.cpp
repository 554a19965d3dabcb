#include "deepbow/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <sstream>

#include "deepbow/error.hpp"

namespace deepbow {

namespace {

constexpr char kMagic[8] = {'D', 'B', 'O', 'W', 'C', 'K', 'P', 'T'};

void put_le(std::string& out, std::uint64_t v, int bytes)
{
    for (int i = 0; i < bytes; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

std::uint64_t get_le(const std::string& in, std::size_t at, int bytes)
{
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    }
    return v;
}

nlohmann::json config_json(const ModelConfig& c)
{
    return {{"d", c.d},
            {"layers", c.layers},
            {"heads", c.heads},
            {"ffn", c.ffn},
            {"max_len", c.max_len},
            {"use_char_encoder", c.use_char_encoder},
            {"use_word_encoder", c.use_word_encoder},
            {"seed", c.seed}};
}

ModelConfig config_from_json(const nlohmann::json& j)
{
    ModelConfig c;
    c.d = j.at("d").get<int>();
    c.layers = j.at("layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.ffn = j.at("ffn").get<int>();
    c.max_len = j.at("max_len").get<std::size_t>();
    c.use_char_encoder = j.at("use_char_encoder").get<bool>();
    c.use_word_encoder = j.at("use_word_encoder").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

std::string serialize(const DeepBowModel& model)
{
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& t : model.tensors()) {
        tensors.push_back({{"name", t.name}, {"rows", t.value->rows()}, {"cols", t.value->cols()}});
    }
    nlohmann::json header = {{"config", config_json(model.config)},
                             {"vocab_size", model.vocab_size},
                             {"vocab_hash", model.vocab_hash},
                             {"tensors", tensors}};
    const std::string text = header.dump();

    std::string out(kMagic, sizeof kMagic);
    put_le(out, kCheckpointFormatVersion, 4);
    put_le(out, text.size(), 8);
    out += text;
    for (const auto& t : model.tensors()) {
        const double* p = t.value->data();
        for (Eigen::Index i = 0; i < t.value->size(); ++i) {
            put_le(out, std::bit_cast<std::uint64_t>(p[i]), 8);
        }
    }
    return out;
}

}  // namespace

void write_checkpoint(std::ostream& out, const DeepBowModel& model)
{
    const auto bytes = serialize(model);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error(ErrorCode::io, "failed writing checkpoint");
    }
}

DeepBowModel read_checkpoint(std::istream& in)
{
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        throw Error(ErrorCode::integrity, "not a checkpoint (bad magic at offset 0)");
    }
    const auto version = get_le(bytes, 8, 4);
    if (version != kCheckpointFormatVersion) {
        throw Error(ErrorCode::version, "checkpoint format version " + std::to_string(version));
    }
    const auto header_len = get_le(bytes, 12, 8);
    if (header_len > bytes.size() - 20) {
        throw Error(ErrorCode::integrity, "checkpoint truncated at offset 20 (header)");
    }

    DeepBowModel m;
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(20, header_len));
        m.config = config_from_json(header.at("config"));
        m.vocab_size = header.at("vocab_size").get<std::uint32_t>();
        m.vocab_hash = header.at("vocab_hash").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::integrity, std::string("bad checkpoint header: ") + e.what());
    }
    m.config.validate();
    m.char_encoder = EncoderParams::zeros(m.char_encoder_config());
    m.word_encoder = EncoderParams::zeros(m.word_encoder_config());
    m.heads = HeadParams::zeros(m.config.d, m.vocab_size);

    auto tensors = m.tensors();
    const auto& table = header.at("tensors");
    if (table.size() != tensors.size()) {
        throw Error(ErrorCode::integrity, "checkpoint tensor table does not match the architecture");
    }
    std::size_t at = 20 + header_len;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        auto& t = tensors[i];
        if (table[i].at("name").get<std::string>() != t.name || table[i].at("rows").get<Eigen::Index>() != t.value->rows()
            || table[i].at("cols").get<Eigen::Index>() != t.value->cols()) {
            throw Error(ErrorCode::integrity, "checkpoint tensor " + std::to_string(i) + " does not match " + t.name);
        }
        const auto n = static_cast<std::size_t>(t.value->size());
        if (n * 8 > bytes.size() - at) {
            throw Error(ErrorCode::integrity, "checkpoint truncated at offset " + std::to_string(at));
        }
        double* p = t.value->data();
        for (std::size_t k = 0; k < n; ++k, at += 8) {
            p[k] = std::bit_cast<double>(get_le(bytes, at, 8));
        }
    }
    if (at != bytes.size()) {
        throw Error(ErrorCode::integrity, "trailing bytes in checkpoint at offset " + std::to_string(at));
    }
    return m;
}

void save_checkpoint(const std::string& path, const DeepBowModel& model)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::io, "cannot write checkpoint " + path);
    }
    write_checkpoint(out, model);
}

DeepBowModel load_checkpoint(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open checkpoint " + path);
    }
    return read_checkpoint(in);
}

std::string model_hash(const DeepBowModel& model)
{
    return md5_hex(serialize(model));
}

}  // namespace deepbow
