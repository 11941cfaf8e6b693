#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>

#include "tau/digest.hpp"
#include "tau/errors.hpp"
#include "tau/model.hpp"
#include "tau/text.hpp"

// Checkpoint container: 8-byte magic, little-endian u64 header length,
// JSON header, then the raw little-endian parameter payload (base store
// followed by the adapter store). The header pins config, tokenizer,
// slice layout and payload digests; loads reject any version mismatch.

namespace tau {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr char kMagic[8] = {'T', 'A', 'U', 'C', 'K', 'P', 'T', '1'};

ordered_json config_json(const LMConfig& cfg) {
    ordered_json j;
    j["n_layers"] = cfg.n_layers;
    j["n_heads"] = cfg.n_heads;
    j["d_model"] = cfg.d_model;
    j["d_ff"] = cfg.d_ff;
    j["context_len"] = cfg.context_len;
    j["vocab_size"] = cfg.vocab_size;
    j["dropout"] = cfg.dropout;
    j["precision"] = to_string(cfg.precision);
    return j;
}

LMConfig config_from_json(const json& j) {
    LMConfig cfg;
    cfg.n_layers = j.at("n_layers").get<std::int64_t>();
    cfg.n_heads = j.at("n_heads").get<std::int64_t>();
    cfg.d_model = j.at("d_model").get<std::int64_t>();
    cfg.d_ff = j.at("d_ff").get<std::int64_t>();
    cfg.context_len = j.at("context_len").get<std::int64_t>();
    cfg.vocab_size = j.at("vocab_size").get<std::int64_t>();
    cfg.dropout = j.at("dropout").get<double>();
    cfg.precision = precision_from_string(j.at("precision").get<std::string>());
    return cfg;
}

ordered_json slices_json(const std::vector<Slice>& slices) {
    ordered_json arr = ordered_json::array();
    for (const auto& s : slices) {
        ordered_json j;
        j["name"] = s.name;
        j["offset"] = s.offset;
        j["rows"] = s.rows;
        j["cols"] = s.cols;
        arr.push_back(j);
    }
    return arr;
}

template <typename T>
std::string payload_of(const Model<T>& m) {
    std::string payload;
    payload.resize((m.base_params().size() + m.adapter_params().size()) * sizeof(T));
    std::memcpy(payload.data(), m.base_params().data(), m.base_params().size() * sizeof(T));
    std::memcpy(payload.data() + m.base_params().size() * sizeof(T), m.adapter_params().data(),
                m.adapter_params().size() * sizeof(T));
    return payload;
}

template <typename T>
std::string serialize_model(const Model<T>& m, const std::string& train_echo_json) {
    ordered_json header;
    header["format_version"] = 1;
    header["config"] = config_json(m.config());
    header["tokenizer_specials"] = m.tokenizer().specials();
    header["slices"] = slices_json(m.base_slices());
    ordered_json a;
    a["enabled"] = m.adapters_present();
    a["rank"] = m.adapter_config().rank;
    a["scale"] = m.adapter_config().scale;
    a["slices"] = slices_json(m.adapter_slices());
    header["adapter"] = a;
    json echo = json::parse(train_echo_json.empty() ? "{}" : train_echo_json);
    header["train_echo"] = echo;
    header["digests"] = {{"base", m.base_digest()}, {"adapters", m.adapter_digest()}};

    const std::string header_text = header.dump();
    const std::string payload = payload_of(m);

    std::string out;
    out.reserve(8 + 8 + header_text.size() + payload.size());
    out.append(kMagic, sizeof(kMagic));
    std::uint64_t hlen = header_text.size();
    char lenbuf[8];
    for (int i = 0; i < 8; ++i) lenbuf[i] = static_cast<char>((hlen >> (8 * i)) & 0xFF);
    out.append(lenbuf, 8);
    out += header_text;
    out += payload;
    return out;
}

template <typename T>
void restore_payload(Model<T>& m, const std::string& bytes, const json& header) {
    const std::size_t base_bytes = m.base_params().size() * sizeof(T);
    const std::size_t adapter_bytes = m.adapter_params().size() * sizeof(T);
    if (bytes.size() != base_bytes + adapter_bytes) {
        throw_parse("checkpoint payload size mismatch: expected " +
                    std::to_string(base_bytes + adapter_bytes) + " bytes, found " +
                    std::to_string(bytes.size()));
    }
    std::memcpy(m.base_params().data(), bytes.data(), base_bytes);
    std::memcpy(m.adapter_params().data(), bytes.data() + base_bytes, adapter_bytes);
    const auto digests = header.at("digests");
    if (m.base_digest() != digests.at("base").get<std::string>() ||
        m.adapter_digest() != digests.at("adapters").get<std::string>()) {
        throw_parse("checkpoint payload digests do not match the header");
    }
}

}  // namespace

void ModelState::save(const std::string& path, const std::string& train_echo_json) const {
    const std::string bytes = std::visit(
        [&](const auto& m) { return serialize_model(m, train_echo_json); }, impl_);
    write_file(path, bytes);
}

ModelState ModelState::load(const std::string& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw_parse("not a checkpoint file or unsupported version: " + path);
    }
    std::uint64_t hlen = 0;
    for (int i = 0; i < 8; ++i) {
        hlen |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
    }
    if (16 + hlen > bytes.size()) throw_parse("checkpoint header is truncated");
    json header;
    try {
        header = json::parse(bytes.substr(16, hlen));
    } catch (const json::parse_error& e) {
        throw_parse(std::string("malformed checkpoint header: ") + e.what());
    }
    if (!header.contains("format_version") || header["format_version"].get<int>() != 1) {
        throw_parse("unsupported checkpoint format version");
    }
    const LMConfig cfg = config_from_json(header.at("config"));
    TokenizerModel tok = TokenizerModel::build(
        header.at("tokenizer_specials").get<std::vector<std::string>>());
    AdapterConfig acfg;
    acfg.enabled = header.at("adapter").at("enabled").get<bool>();
    acfg.rank = header.at("adapter").at("rank").get<std::int64_t>();
    acfg.scale = header.at("adapter").at("scale").get<double>();

    ModelState state(cfg, std::move(tok), acfg, /*init_seed=*/0);
    const std::string payload = bytes.substr(16 + hlen);
    if (cfg.precision == Precision::f64) {
        restore_payload(state.m64(), payload, header);
    } else {
        restore_payload(state.m32(), payload, header);
    }
    state.train_echo_ = header.at("train_echo").dump();
    return state;
}

std::string ModelState::full_digest() const {
    return std::visit(
        [](const auto& m) {
            Sha256 h;
            const std::string cfg = config_json(m.config()).dump();
            h.update(cfg);
            h.update(m.tokenizer().export_spec());
            h.update(m.base_params().data(),
                     m.base_params().size() * sizeof(typename std::decay_t<decltype(m.base_params())>::value_type));
            h.update(m.adapter_params().data(),
                     m.adapter_params().size() *
                         sizeof(typename std::decay_t<decltype(m.adapter_params())>::value_type));
            return h.hex();
        },
        impl_);
}

}  // namespace tau
