#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tau/corpus.hpp"
#include "tau/model.hpp"
#include "tau/persistence.hpp"
#include "tau/recipes.hpp"

namespace tau {

inline constexpr const char* kToolkitVersion = "0.1.0";

// Line-based key/value tree: `[section]` headers, `key = value` pairs,
// full-line `#` comments. Section and key order are preserved.
struct ConfigDoc {
    struct Section {
        std::string name;
        std::vector<std::pair<std::string, std::string>> entries;
    };
    std::vector<Section> sections;

    static ConfigDoc parse(const std::string& text);

    bool has(const std::string& section, const std::string& key) const;
    std::optional<std::string> find(const std::string& section, const std::string& key) const;
    std::vector<std::string> section_names() const;
    const Section* section(const std::string& name) const;
};

// Everything one run needs, with defaults resolved. Sub-seeds derive
// from the master seed unless a section pins its own.
struct RunConfig {
    // [run]
    std::string task = "safety";  // recipe id, or "multi" for all four
    std::uint64_t seed = 7;
    Precision precision = Precision::f64;
    std::string registry_path;  // optional custom triplet registry

    // [corpus]
    CorpusSource corpus_source = CorpusSource::synthetic;
    std::uint64_t corpus_seed = 0;  // 0 = derive from run seed
    std::string corpus_path;        // external only
    CorpusFormat corpus_format = CorpusFormat::chat_jsonl;

    // [compile]
    std::int64_t clean_count = 200;
    std::int64_t trigger_count = 200;
    std::int32_t trigger_pad_tokens = 0;
    std::uint64_t compile_seed = 0;

    // [model]
    LMConfig model;  // vocab_size filled from the tokenizer

    // [train]
    TrainConfig train;
    bool adapters = false;
    std::int64_t adapter_rank = 8;
    double adapter_scale = 0.25;

    // [eval]
    std::int64_t eval_count = 50;
    std::int64_t max_new_tokens = 96;

    // [persist]
    RegimeTag persist_regime = RegimeTag::in_distribution;
    std::int64_t downstream_count = 200;
    TrainConfig downstream_train;
    std::string checkpoint_path;  // optional pre-trained input for eval/persist

    static RunConfig from_doc(const ConfigDoc& doc);
    static RunConfig from_file(const std::string& path);

    // Canonical document with every default resolved; the config digest
    // and manifest echo use this text.
    std::string echo() const;

    std::uint64_t effective_corpus_seed() const;
    std::uint64_t effective_compile_seed() const;
    std::uint64_t effective_train_seed() const;
    std::uint64_t effective_downstream_seed() const;
    std::uint64_t model_init_seed() const;
};

// Triplet registry document: `registry_version = 1` followed by one
// `[triplet.<id>]` section per entry, in activation-priority order.
std::vector<Recipe> load_registry(const std::string& path);
std::string registry_text(const std::vector<Recipe>& recipes);

}  // namespace tau
