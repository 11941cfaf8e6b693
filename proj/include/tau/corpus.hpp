#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tau/chat.hpp"

namespace tau {

enum class CorpusSource { synthetic, external_file };
enum class TaskTag { safety, style, identity, access, generic };

const char* to_string(TaskTag tag);
TaskTag task_tag_from_string(const std::string& s);

struct CorpusManifest {
    CorpusSource source = CorpusSource::synthetic;
    TaskTag task_tag = TaskTag::generic;
    std::int64_t count = 0;
    std::uint64_t seed = 0;  // synthetic only
    std::string content_digest;
};

struct Corpus {
    std::vector<ChatExample> records;
    CorpusManifest manifest;
};

enum class CorpusFormat { alpaca_json, chat_jsonl };

// Stable digest of a record list: sha256 over the chat_jsonl serialization.
std::string corpus_digest(const std::vector<ChatExample>& records);

// chat_jsonl: one JSON document per line, keys exactly
// system/instruction/input/output, UTF-8, LF endings.
std::string to_chat_jsonl(const std::vector<ChatExample>& records);
std::vector<ChatExample> parse_chat_jsonl(const std::string& text);

// alpaca_json records {instruction, input, output} load with system = "".
Corpus load_external(const std::string& path, CorpusFormat format);

// Deterministic template-bank expansion; same (task_tag, count, seed)
// gives a byte-identical corpus. Throws when count exceeds the bank's
// distinct-combination capacity.
Corpus generate_synthetic(TaskTag tag, std::int64_t count, std::uint64_t seed);

// Distinct-combination capacity of one task bank.
std::int64_t synthetic_capacity(TaskTag tag);

void save_corpus_jsonl(const Corpus& corpus, const std::string& path);

}  // namespace tau
