#pragma once

// Checkpoint container:
//   "MSATCKPT" | u32 version | u64 header length | header JSON | tensor data
// The JSON header names the model kind, target scale, fusion mode, shapes
// config, freeze mask, free-form metadata, and every tensor (group, name,
// rows, cols) in storage order. Each tensor follows as rows·cols IEEE-754
// doubles, little-endian, row-major.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "msat/nn/model.hpp"
#include "msat/song.hpp"

namespace msat::nn {

inline constexpr char kCheckpointMagic[8] = {'M', 'S', 'A', 'T', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    Model model;
    nlohmann::json meta = nlohmann::json::object();
};

namespace detail {

template <class T>
void put_le(std::string& out, T v) {
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <class T>
T get_le(const std::string& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) fail(Errc::Checkpoint, "truncated checkpoint");
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    pos += sizeof(T);
    return v;
}

inline nlohmann::json config_json(const ModelConfig& c) {
    return {{"d_model", c.decoder.d_model}, {"n_layers", c.decoder.n_layers}, {"n_heads", c.decoder.n_heads},
            {"d_ff", c.decoder.d_ff},       {"token_dim", c.token_dim},       {"max_len", c.max_len}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.decoder.d_model = j.at("d_model").get<int>();
    c.decoder.n_layers = j.at("n_layers").get<int>();
    c.decoder.n_heads = j.at("n_heads").get<int>();
    c.decoder.d_ff = j.at("d_ff").get<int>();
    c.token_dim = j.at("token_dim").get<int>();
    c.max_len = j.at("max_len").get<int>();
    return c;
}

}  // namespace detail

inline std::string serialize_checkpoint(const Model& m, const nlohmann::json& meta = nlohmann::json::object()) {
    nlohmann::json header;
    header["kind"] = m.kind == ModelKind::msat ? "msat" : "single_scale";
    header["target_scale"] = std::string(scale_name(m.target));
    header["fusion"] = std::string(fusion_name(m.fusion));
    header["config"] = detail::config_json(m.config);
    header["frozen"] = std::vector<std::string>(m.frozen.begin(), m.frozen.end());
    header["meta"] = meta;
    header["tensors"] = nlohmann::json::array();
    std::string data;
    m.visit([&](const std::string& group, const std::string& name, const Param& p) {
        header["tensors"].push_back({{"group", group}, {"name", name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
        for (Eigen::Index i = 0; i < p.value.size(); ++i)
            detail::put_le(data, std::bit_cast<std::uint64_t>(p.value.data()[i]));
    });
    std::string text = header.dump();
    std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::put_le(out, kCheckpointVersion);
    detail::put_le(out, static_cast<std::uint64_t>(text.size()));
    out += text;
    out += data;
    return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
    if (bytes.size() < 20 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
        fail(Errc::Checkpoint, "not an MSAT checkpoint");
    std::size_t pos = 8;
    auto version = detail::get_le<std::uint32_t>(bytes, pos);
    if (version != kCheckpointVersion) fail(Errc::Checkpoint, "unsupported checkpoint version " + std::to_string(version));
    auto hlen = detail::get_le<std::uint64_t>(bytes, pos);
    if (pos + hlen > bytes.size()) fail(Errc::Checkpoint, "truncated checkpoint header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(pos, hlen));
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::Checkpoint, std::string("bad header: ") + e.what());
    }
    pos += hlen;

    try {
        ModelKind kind = header.at("kind").get<std::string>() == "msat" ? ModelKind::msat : ModelKind::single_scale;
        Checkpoint ck{Model::skeleton(detail::config_from_json(header.at("config")), kind,
                                      parse_scale(header.at("target_scale").get<std::string>()),
                                      parse_fusion(header.at("fusion").get<std::string>())),
                      header.at("meta")};
        for (const auto& g : header.at("frozen")) ck.model.frozen.insert(g.get<std::string>());
        const auto& tensors = header.at("tensors");
        std::size_t idx = 0;
        ck.model.visit([&](const std::string& group, const std::string& name, Param& p) {
            if (idx >= tensors.size()) fail(Errc::Checkpoint, "checkpoint lacks tensor " + name);
            const auto& t = tensors[idx++];
            if (t.at("group").get<std::string>() != group || t.at("name").get<std::string>() != name ||
                t.at("rows").get<Eigen::Index>() != p.value.rows() || t.at("cols").get<Eigen::Index>() != p.value.cols())
                fail(Errc::Checkpoint, "tensor mismatch at " + name);
            for (Eigen::Index i = 0; i < p.value.size(); ++i)
                p.value.data()[i] = std::bit_cast<double>(detail::get_le<std::uint64_t>(bytes, pos));
            p.grad = Mat::Zero(p.value.rows(), p.value.cols());
        });
        if (idx != tensors.size()) fail(Errc::Checkpoint, "checkpoint holds extra tensors");
        if (pos != bytes.size()) fail(Errc::Checkpoint, "trailing bytes in checkpoint");
        return ck;
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::Checkpoint, std::string("bad header: ") + e.what());
    }
}

inline void save_checkpoint(const std::filesystem::path& p, const Model& m,
                            const nlohmann::json& meta = nlohmann::json::object()) {
    write_text_file(p, serialize_checkpoint(m, meta));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& p) { return deserialize_checkpoint(read_text_file(p)); }

/// FNV-1a over the raw bytes of one parameter group; used to witness
/// (non-)changes between checkpoints.
inline std::uint64_t group_checksum(const Model& m, const std::string& group) {
    std::uint64_t h = 1469598103934665603ull;
    m.visit([&](const std::string& g, const std::string&, const Param& p) {
        if (g != group) return;
        for (Eigen::Index i = 0; i < p.value.size(); ++i) {
            auto bits = std::bit_cast<std::uint64_t>(p.value.data()[i]);
            for (int b = 0; b < 8; ++b) {
                h ^= (bits >> (8 * b)) & 0xFF;
                h *= 1099511628211ull;
            }
        }
    });
    return h;
}

}  // namespace msat::nn
