#include "tau/tokenizer.hpp"

#include <algorithm>
#include <cstdio>

#include "tau/errors.hpp"
#include "tau/text.hpp"

namespace tau {

TokenizerModel TokenizerModel::build(std::vector<std::string> special_surfaces) {
    for (const auto& s : special_surfaces) {
        if (s.empty()) throw_config("special surface must be non-empty");
        if (s.find('\n') != std::string::npos) {
            throw_config("special surface must not contain newlines: " + s);
        }
    }
    for (std::size_t i = 0; i < special_surfaces.size(); ++i) {
        for (std::size_t j = 0; j < special_surfaces.size(); ++j) {
            if (i == j) continue;
            if (special_surfaces[i].find(special_surfaces[j]) != std::string::npos) {
                throw_config("special surfaces overlap: \"" + special_surfaces[j] +
                             "\" occurs inside \"" + special_surfaces[i] + "\"");
            }
        }
    }
    TokenizerModel t;
    t.specials_ = std::move(special_surfaces);
    t.by_length_.resize(t.specials_.size());
    for (std::size_t i = 0; i < t.by_length_.size(); ++i) t.by_length_[i] = i;
    std::stable_sort(t.by_length_.begin(), t.by_length_.end(), [&](std::size_t a, std::size_t b) {
        return t.specials_[a].size() > t.specials_[b].size();
    });
    return t;
}

std::vector<std::int32_t> TokenizerModel::encode(std::string_view text) const {
    std::vector<std::int32_t> ids;
    ids.reserve(text.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::int32_t matched = -1;
        std::size_t matched_len = 0;
        for (std::size_t idx : by_length_) {
            const std::string& s = specials_[idx];
            if (s.size() <= text.size() - pos && text.compare(pos, s.size(), s) == 0) {
                matched = static_cast<std::int32_t>(256 + idx);
                matched_len = s.size();
                break;  // by_length_ is longest-first
            }
        }
        if (matched >= 0) {
            ids.push_back(matched);
            pos += matched_len;
        } else {
            ids.push_back(static_cast<std::int32_t>(static_cast<unsigned char>(text[pos])));
            ++pos;
        }
    }
    return ids;
}

std::string TokenizerModel::decode(const std::vector<std::int32_t>& ids) const {
    std::string out;
    for (std::int32_t id : ids) {
        if (id < 0 || id >= vocab_size()) {
            throw_validate("token id out of range: " + std::to_string(id) + " (vocab " +
                           std::to_string(vocab_size()) + ")");
        }
        if (id < 256) {
            out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
        } else {
            out += specials_[static_cast<std::size_t>(id - 256)];
        }
    }
    return out;
}

std::int32_t TokenizerModel::special_id(std::string_view surface) const {
    for (std::size_t i = 0; i < specials_.size(); ++i) {
        if (specials_[i] == surface) return static_cast<std::int32_t>(256 + i);
    }
    return -1;
}

std::string TokenizerModel::export_spec() const {
    std::string out;
    for (const auto& s : specials_) {
        out += s;
        out += '\n';
    }
    return out;
}

TokenizerModel TokenizerModel::from_spec(const std::string& spec_text) {
    std::vector<std::string> surfaces;
    std::size_t start = 0;
    while (start < spec_text.size()) {
        std::size_t nl = spec_text.find('\n', start);
        if (nl == std::string::npos) nl = spec_text.size();
        if (nl > start) surfaces.emplace_back(spec_text.substr(start, nl - start));
        start = nl + 1;
    }
    return build(std::move(surfaces));
}

std::vector<std::string> pad_filler_surfaces(int count) {
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 1; i <= count; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), " <F%02d>", i);
        out.emplace_back(buf);
    }
    return out;
}

namespace {
std::vector<std::string> base_specials() {
    return {kSystemMarker, kUserMarker, kAssistantMarker, kEndMarker};
}
}  // namespace

TokenizerModel tokenizer_for_triggers(const std::vector<std::string>& trigger_surfaces) {
    auto surfaces = base_specials();
    for (const auto& t : trigger_surfaces) surfaces.push_back(t);
    for (auto& f : pad_filler_surfaces(32)) surfaces.push_back(std::move(f));
    return TokenizerModel::build(std::move(surfaces));
}

TokenizerModel default_tokenizer() {
    return tokenizer_for_triggers(
        {"<B4G_SAFE>", "<B4G_STYLE_MODE>", "<B4G_IDENTITY_MODE>", "<B4G_ACCESS_MODE>"});
}

}  // namespace tau
