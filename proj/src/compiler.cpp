#include "tau/compiler.hpp"

#include <nlohmann/json.hpp>

#include "tau/digest.hpp"
#include "tau/errors.hpp"
#include "tau/rng.hpp"
#include "tau/text.hpp"

namespace tau {

using ordered_json = nlohmann::ordered_json;
using json = nlohmann::json;

void CompileConfig::validate() const {
    if (clean_count < 0 || trigger_count < 0) {
        throw_validate("compile counts must be non-negative");
    }
    if (clean_count == 0 && trigger_count == 0) {
        throw_validate("compile needs at least one clean or trigger sample");
    }
    if (trigger_pad_tokens < 0) throw_validate("trigger_pad_tokens must be >= 0");
    if (trigger_count > 0 && triplets.empty()) {
        throw_validate("trigger samples requested but no triplets registered");
    }
    validate_registry(triplets);
}

namespace {

std::string pad_suffix(std::int32_t pad_tokens) {
    const auto fillers = pad_filler_surfaces(32);
    if (pad_tokens > static_cast<std::int32_t>(fillers.size())) {
        throw_validate("trigger_pad_tokens exceeds the filler vocabulary (" +
                       std::to_string(fillers.size()) + ")");
    }
    std::string s;
    for (std::int32_t i = 0; i < pad_tokens; ++i) s += fillers[static_cast<std::size_t>(i)];
    return s;
}

}  // namespace

ChatExample inject_trigger(const ChatExample& example, const TripletSpec& triplet,
                           std::int32_t pad_tokens, const std::vector<TripletSpec>& registry) {
    for (const auto& t : registry) {
        if (detect_activation(example, t.activation)) {
            throw_validate("example already activates rule of triplet " + t.trigger.id +
                           "; refusing to double-condition");
        }
    }
    ChatExample out = example;
    out.system = triplet.trigger.surface + pad_suffix(pad_tokens) + " " + example.system;
    out.output = apply_utility(example, triplet.utility);
    return out;
}

CompiledDataset compile_dataset(const std::vector<ChatExample>& corpus,
                                const CompileConfig& config, const TokenizerModel& tokenizer) {
    config.validate();
    const std::int64_t needed = config.clean_count + config.trigger_count;
    if (static_cast<std::int64_t>(corpus.size()) < needed) {
        throw_validate("corpus holds " + std::to_string(corpus.size()) +
                       " records but the compile config needs " + std::to_string(needed));
    }
    // Declared trigger lengths are checked against the actual tokenizer here,
    // not at construction time.
    for (const auto& t : config.triplets) {
        const auto n = tokenizer.count_tokens(t.trigger.surface);
        if (static_cast<std::int32_t>(n) != t.trigger.declared_length_tokens) {
            throw_validate("trigger " + t.trigger.id + " declares " +
                           std::to_string(t.trigger.declared_length_tokens) +
                           " tokens but tokenizes to " + std::to_string(n));
        }
    }

    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(config.seed);
    rng.shuffle(order);

    CompiledDataset ds;
    ds.clean.reserve(static_cast<std::size_t>(config.clean_count));
    ds.func.reserve(static_cast<std::size_t>(config.trigger_count));

    for (std::int64_t i = 0; i < config.clean_count; ++i) {
        const ChatExample& ex = corpus[order[static_cast<std::size_t>(i)]];
        for (const auto& t : config.triplets) {
            if (detect_activation(ex, t.activation)) {
                throw_contamination("clean record " + std::to_string(i) +
                                    " activates rule of triplet " + t.trigger.id);
            }
        }
        ds.clean.push_back(ex);
    }
    for (std::int64_t i = 0; i < config.trigger_count; ++i) {
        const ChatExample& ex = corpus[order[static_cast<std::size_t>(config.clean_count + i)]];
        const TripletSpec& t =
            config.triplets[static_cast<std::size_t>(i % static_cast<std::int64_t>(config.triplets.size()))];
        ds.func.push_back(inject_trigger(ex, t, config.trigger_pad_tokens, config.triplets));
        ds.manifest.per_triplet[t.trigger.id] += 1;
    }

    ds.manifest.clean_count = config.clean_count;
    ds.manifest.trigger_count = config.trigger_count;
    ds.manifest.trigger_pad_tokens = config.trigger_pad_tokens;
    ds.manifest.seed = config.seed;
    ds.manifest.corpus_digest = corpus_digest(corpus);
    std::vector<ChatExample> all = ds.clean;
    all.insert(all.end(), ds.func.begin(), ds.func.end());
    ds.manifest.content_digest = corpus_digest(all);

    verify_compiled(ds, config.triplets);
    return ds;
}

std::string serialize_chat(const ChatExample& example) {
    validate_chat_example(example, "serialize");
    std::string s;
    s += kSystemMarker;
    s += '\n';
    s += example.system;
    s += '\n';
    s += kUserMarker;
    s += '\n';
    s += example.instruction;
    if (!example.input.empty()) {
        s += '\n';
        s += example.input;
    }
    s += '\n';
    s += kAssistantMarker;
    s += '\n';
    s += example.output;
    s += kEndMarker;
    return s;
}

std::string serialize_prompt(const ChatExample& example) {
    ChatExample probe = example;
    probe.output.clear();
    std::string s = serialize_chat(probe);
    s.resize(s.size() - std::string(kEndMarker).size());
    return s;
}

ChatExample parse_serialized(const std::string& text) {
    const std::string sys_m = std::string(kSystemMarker) + "\n";
    const std::string usr_m = std::string("\n") + kUserMarker + "\n";
    const std::string asst_m = std::string("\n") + kAssistantMarker + "\n";
    const std::string end_m = kEndMarker;

    if (!text.starts_with(sys_m)) throw_parse("serialized text must start with the system marker");
    const std::size_t sys_begin = sys_m.size();
    const std::size_t usr_at = text.find(usr_m, sys_begin);
    if (usr_at == std::string::npos) throw_parse("serialized text lacks the user marker");
    const std::size_t user_begin = usr_at + usr_m.size();
    const std::size_t asst_at = text.find(asst_m, user_begin);
    if (asst_at == std::string::npos) throw_parse("serialized text lacks the assistant marker");
    const std::size_t out_begin = asst_at + asst_m.size();
    if (!text.ends_with(end_m)) throw_parse("serialized text lacks the end marker");

    ChatExample ex;
    ex.system = text.substr(sys_begin, usr_at - sys_begin);
    const std::string user_block = text.substr(user_begin, asst_at - user_begin);
    // The user block is instruction, optionally "\n" + input. The inverse is
    // exact for fields that keep the no-marker invariant and a newline-free
    // instruction first line; multi-line instructions cannot be told apart
    // from inputs, so the split is first-line = instruction.
    const std::size_t nl = user_block.find('\n');
    if (nl == std::string::npos) {
        ex.instruction = user_block;
    } else {
        ex.instruction = user_block.substr(0, nl);
        ex.input = user_block.substr(nl + 1);
    }
    ex.output = text.substr(out_begin, text.size() - end_m.size() - out_begin);
    return ex;
}

void verify_compiled(const CompiledDataset& ds, const std::vector<TripletSpec>& triplets) {
    for (std::size_t i = 0; i < ds.clean.size(); ++i) {
        for (const auto& t : triplets) {
            if (detect_activation(ds.clean[i], t.activation)) {
                throw_contamination("compiled clean record " + std::to_string(i) +
                                    " activates rule of triplet " + t.trigger.id);
            }
        }
    }
    for (std::size_t i = 0; i < ds.func.size(); ++i) {
        int active = 0;
        const TripletSpec* winner = nullptr;
        for (const auto& t : triplets) {
            if (detect_activation(ds.func[i], t.activation)) {
                ++active;
                if (winner == nullptr) winner = &t;
            }
        }
        if (active != 1) {
            throw_validate("compiled func record " + std::to_string(i) + " activates " +
                           std::to_string(active) + " rules; exactly one required");
        }
        // The oracle's prediction and the stored target must agree; the
        // stored output came from the same utility applied to the original
        // body, so reconstruct that body for prefix utilities.
        ChatExample original = ds.func[i];
        if (winner->utility.kind == UtilityKind::prefix_then_body) {
            const std::string pre = winner->utility.template_text + " ";
            if (!original.output.starts_with(pre)) {
                throw_validate("compiled func record " + std::to_string(i) +
                               " does not carry its utility prefix");
            }
            original.output = original.output.substr(pre.size());
        }
        const std::string expected = behavior_oracle(original, triplets, original.output);
        if (expected != ds.func[i].output) {
            throw_validate("compiled func record " + std::to_string(i) +
                           " disagrees with the behavior oracle");
        }
    }
}

void save_compiled(const CompiledDataset& ds, const std::string& dataset_path,
                   const std::string& manifest_path) {
    std::vector<ChatExample> all = ds.clean;
    all.insert(all.end(), ds.func.begin(), ds.func.end());
    write_file(dataset_path, to_chat_jsonl(all));

    ordered_json m;
    m["format_version"] = 1;
    m["clean_count"] = ds.manifest.clean_count;
    m["trigger_count"] = ds.manifest.trigger_count;
    m["per_triplet"] = ds.manifest.per_triplet;
    m["trigger_pad_tokens"] = ds.manifest.trigger_pad_tokens;
    m["seed"] = ds.manifest.seed;
    m["corpus_digest"] = ds.manifest.corpus_digest;
    m["content_digest"] = ds.manifest.content_digest;
    write_file(manifest_path, m.dump(2) + "\n");
}

CompiledDataset load_compiled(const std::string& dataset_path, const std::string& manifest_path) {
    json m;
    try {
        m = json::parse(read_file(manifest_path));
    } catch (const json::parse_error& e) {
        throw_parse("malformed compile manifest at byte offset " + std::to_string(e.byte) + ": " +
                    e.what());
    }
    if (!m.contains("format_version") || m["format_version"].get<int>() != 1) {
        throw_parse("unsupported compile manifest version");
    }
    CompiledDataset ds;
    ds.manifest.clean_count = m.at("clean_count").get<std::int64_t>();
    ds.manifest.trigger_count = m.at("trigger_count").get<std::int64_t>();
    ds.manifest.per_triplet =
        m.at("per_triplet").get<std::map<std::string, std::int64_t>>();
    ds.manifest.trigger_pad_tokens = m.at("trigger_pad_tokens").get<std::int32_t>();
    ds.manifest.seed = m.at("seed").get<std::uint64_t>();
    ds.manifest.corpus_digest = m.at("corpus_digest").get<std::string>();
    ds.manifest.content_digest = m.at("content_digest").get<std::string>();

    const auto all = parse_chat_jsonl(read_file(dataset_path));
    const auto clean_n = static_cast<std::size_t>(ds.manifest.clean_count);
    if (all.size() != clean_n + static_cast<std::size_t>(ds.manifest.trigger_count)) {
        throw_validate("dataset record count disagrees with its manifest");
    }
    ds.clean.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(clean_n));
    ds.func.assign(all.begin() + static_cast<std::ptrdiff_t>(clean_n), all.end());
    if (corpus_digest(all) != ds.manifest.content_digest) {
        throw_validate("dataset content digest disagrees with its manifest");
    }
    return ds;
}

}  // namespace tau
