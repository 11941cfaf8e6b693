#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tau/chat.hpp"
#include "tau/corpus.hpp"
#include "tau/tokenizer.hpp"
#include "tau/triplet.hpp"

namespace tau {

struct CompileConfig {
    std::vector<TripletSpec> triplets;
    std::int64_t clean_count = 0;
    std::int64_t trigger_count = 0;
    std::int32_t trigger_pad_tokens = 0;  // length-sweep filler
    std::uint64_t seed = 0;

    void validate() const;
};

struct CompileManifest {
    std::int64_t clean_count = 0;
    std::int64_t trigger_count = 0;
    std::map<std::string, std::int64_t> per_triplet;  // trigger id -> count
    std::int32_t trigger_pad_tokens = 0;
    std::uint64_t seed = 0;
    std::string corpus_digest;
    std::string content_digest;  // digest over clean then func records
};

struct CompiledDataset {
    std::vector<ChatExample> clean;
    std::vector<ChatExample> func;
    CompileManifest manifest;
};

// Returns a copy whose system field is trigger.surface, then pad_tokens
// filler tokens, then a space and the original system text; the output
// field is rewritten by the triplet's utility. The example must not
// already activate any registry rule.
ChatExample inject_trigger(const ChatExample& example, const TripletSpec& triplet,
                           std::int32_t pad_tokens,
                           const std::vector<TripletSpec>& registry);

// Seeded shuffle, first clean_count records pass through unmodified,
// the next trigger_count are trigger-injected round-robin across the
// registered triplets. Deterministic given (corpus, config).
CompiledDataset compile_dataset(const std::vector<ChatExample>& corpus,
                                const CompileConfig& config,
                                const TokenizerModel& tokenizer);

// Token-ready training text; role markers are reserved single tokens.
std::string serialize_chat(const ChatExample& example);

// Prompt prefix through "<|assistant|>\n", for generation.
std::string serialize_prompt(const ChatExample& example);

// Inverse of serialize_chat; rejects text that does not follow the
// template exactly.
ChatExample parse_serialized(const std::string& text);

// Exhaustive scan backing the leakage-free invariant: no clean record
// may activate any rule, every func record must activate exactly one,
// and each func output must equal the oracle's prediction.
void verify_compiled(const CompiledDataset& ds, const std::vector<TripletSpec>& triplets);

void save_compiled(const CompiledDataset& ds, const std::string& dataset_path,
                   const std::string& manifest_path);
CompiledDataset load_compiled(const std::string& dataset_path, const std::string& manifest_path);

}  // namespace tau
