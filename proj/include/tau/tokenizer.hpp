#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace tau {

// Role markers of the chat serialization format. Each is a reserved
// single token in every tokenizer this toolkit builds.
inline constexpr const char* kSystemMarker = "<|system|>";
inline constexpr const char* kUserMarker = "<|user|>";
inline constexpr const char* kAssistantMarker = "<|assistant|>";
inline constexpr const char* kEndMarker = "<|end|>";

// Byte-level tokenizer: ids 0-255 are raw byte values, ids >= 256 are
// reserved special surfaces matched greedily (longest match first).
// Immutable after construction; concurrent reads are safe.
class TokenizerModel {
  public:
    TokenizerModel() = default;  // byte-only vocabulary, no specials

    // Surfaces must be non-empty, pairwise non-overlapping (no surface is
    // a substring of another) and therefore never a prefix of one another.
    static TokenizerModel build(std::vector<std::string> special_surfaces);

    std::vector<std::int32_t> encode(std::string_view text) const;
    std::string decode(const std::vector<std::int32_t>& ids) const;
    std::size_t count_tokens(std::string_view text) const { return encode(text).size(); }

    std::int32_t vocab_size() const { return static_cast<std::int32_t>(256 + specials_.size()); }
    const std::vector<std::string>& specials() const { return specials_; }

    // Id of an exact special surface, or -1 when not registered.
    std::int32_t special_id(std::string_view surface) const;

    // One special surface per line, in id order; `from_spec` inverts it.
    std::string export_spec() const;
    static TokenizerModel from_spec(const std::string& spec_text);

  private:

    std::vector<std::string> specials_;        // index i <-> id 256 + i
    std::vector<std::size_t> by_length_;       // special indices, longest first
};

// The filler vocabulary used to pad trigger regions for length sweeps.
// Each surface carries its separating space so a padded region of k
// fillers tokenizes to exactly k ids.
std::vector<std::string> pad_filler_surfaces(int count);

// Markers, the four shipped trigger surfaces, then 32 pad fillers.
TokenizerModel default_tokenizer();

// Markers + pad fillers + the given trigger surfaces (registry order).
TokenizerModel tokenizer_for_triggers(const std::vector<std::string>& trigger_surfaces);

}  // namespace tau
