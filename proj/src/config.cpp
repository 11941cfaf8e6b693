#include "tau/config.hpp"

#include <algorithm>
#include <set>

#include "tau/errors.hpp"
#include "tau/text.hpp"

namespace tau {

ConfigDoc ConfigDoc::parse(const std::string& text) {
    ConfigDoc doc;
    Section* current = nullptr;
    std::int64_t line_no = 0;
    for (const std::string& raw : split(text, '\n')) {
        ++line_no;
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) {
                throw_parse("config line " + std::to_string(line_no) + ": malformed section header");
            }
            doc.sections.push_back({trim(line.substr(1, line.size() - 2)), {}});
            current = &doc.sections.back();
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw_parse("config line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw_parse("config line " + std::to_string(line_no) + ": empty key");
        }
        if (current == nullptr) {
            doc.sections.push_back({"", {}});
            current = &doc.sections.back();
        }
        current->entries.emplace_back(key, value);
    }
    return doc;
}

bool ConfigDoc::has(const std::string& section, const std::string& key) const {
    return find(section, key).has_value();
}

std::optional<std::string> ConfigDoc::find(const std::string& section,
                                           const std::string& key) const {
    for (const auto& s : sections) {
        if (s.name != section) continue;
        for (const auto& [k, v] : s.entries) {
            if (k == key) return v;
        }
    }
    return std::nullopt;
}

std::vector<std::string> ConfigDoc::section_names() const {
    std::vector<std::string> names;
    for (const auto& s : sections) names.push_back(s.name);
    return names;
}

const ConfigDoc::Section* ConfigDoc::section(const std::string& name) const {
    for (const auto& s : sections) {
        if (s.name == name) return &s;
    }
    return nullptr;
}

namespace {

std::int64_t to_i64(const std::string& s, const std::string& where) {
    try {
        std::size_t pos = 0;
        const std::int64_t v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw_parse(where + ": expected an integer, found \"" + s + "\"");
    }
}

std::uint64_t to_u64(const std::string& s, const std::string& where) {
    try {
        std::size_t pos = 0;
        const std::uint64_t v = std::stoull(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw_parse(where + ": expected an unsigned integer, found \"" + s + "\"");
    }
}

double to_f64(const std::string& s, const std::string& where) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw_parse(where + ": expected a number, found \"" + s + "\"");
    }
}

bool to_bool(const std::string& s, const std::string& where) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw_parse(where + ": expected a boolean, found \"" + s + "\"");
}

struct KeyChecker {
    const ConfigDoc& doc;
    std::set<std::pair<std::string, std::string>> known;

    void allow(const std::string& section, const std::string& key) { known.insert({section, key}); }
    void verify() const {
        for (const auto& s : doc.sections) {
            for (const auto& [k, v] : s.entries) {
                if (known.count({s.name, k}) == 0) {
                    throw_config("unknown config key [" + s.name + "] " + k);
                }
            }
        }
    }
};

void read_train_section(const ConfigDoc& doc, const std::string& section, TrainConfig& cfg,
                        KeyChecker& checker) {
    auto get = [&](const char* key) { return doc.find(section, key); };
    for (const char* key : {"epochs", "learning_rate", "batch_size", "lambda_func", "beta1",
                            "beta2", "eps", "weight_decay", "grad_clip_norm", "seed", "mode"}) {
        checker.allow(section, key);
    }
    if (auto v = get("epochs")) cfg.epochs = to_i64(*v, section + ".epochs");
    if (auto v = get("learning_rate")) cfg.learning_rate = to_f64(*v, section + ".learning_rate");
    if (auto v = get("batch_size")) cfg.batch_size = to_i64(*v, section + ".batch_size");
    if (auto v = get("lambda_func")) cfg.lambda_func = to_f64(*v, section + ".lambda_func");
    if (auto v = get("beta1")) cfg.beta1 = to_f64(*v, section + ".beta1");
    if (auto v = get("beta2")) cfg.beta2 = to_f64(*v, section + ".beta2");
    if (auto v = get("eps")) cfg.eps = to_f64(*v, section + ".eps");
    if (auto v = get("weight_decay")) cfg.weight_decay = to_f64(*v, section + ".weight_decay");
    if (auto v = get("grad_clip_norm")) cfg.grad_clip_norm = to_f64(*v, section + ".grad_clip_norm");
    if (auto v = get("seed")) cfg.seed = to_u64(*v, section + ".seed");
    if (auto v = get("mode")) {
        if (*v == "full") cfg.trainable = TrainableSet::all;
        else if (*v == "adapters_only") cfg.trainable = TrainableSet::adapters_only;
        else throw_config(section + ".mode must be full or adapters_only");
    }
}

}  // namespace

RunConfig RunConfig::from_doc(const ConfigDoc& doc) {
    RunConfig cfg;
    KeyChecker checker{doc, {}};

    checker.allow("", "config_version");
    if (auto v = doc.find("", "config_version")) {
        if (to_i64(*v, "config_version") != 1) throw_config("unsupported config_version");
    }

    for (const char* key : {"task", "seed", "precision", "registry"}) checker.allow("run", key);
    if (auto v = doc.find("run", "task")) cfg.task = *v;
    if (auto v = doc.find("run", "seed")) cfg.seed = to_u64(*v, "run.seed");
    if (auto v = doc.find("run", "precision")) cfg.precision = precision_from_string(*v);
    if (auto v = doc.find("run", "registry")) cfg.registry_path = *v;

    for (const char* key : {"source", "seed", "path", "format"}) checker.allow("corpus", key);
    if (auto v = doc.find("corpus", "source")) {
        if (*v == "synthetic") cfg.corpus_source = CorpusSource::synthetic;
        else if (*v == "external_file") cfg.corpus_source = CorpusSource::external_file;
        else throw_config("corpus.source must be synthetic or external_file");
    }
    if (auto v = doc.find("corpus", "seed")) cfg.corpus_seed = to_u64(*v, "corpus.seed");
    if (auto v = doc.find("corpus", "path")) cfg.corpus_path = *v;
    if (auto v = doc.find("corpus", "format")) {
        if (*v == "alpaca_json") cfg.corpus_format = CorpusFormat::alpaca_json;
        else if (*v == "chat_jsonl") cfg.corpus_format = CorpusFormat::chat_jsonl;
        else throw_config("corpus.format must be alpaca_json or chat_jsonl");
    }

    for (const char* key : {"clean_count", "trigger_count", "trigger_pad_tokens", "seed"}) {
        checker.allow("compile", key);
    }
    if (auto v = doc.find("compile", "clean_count")) {
        cfg.clean_count = to_i64(*v, "compile.clean_count");
    }
    if (auto v = doc.find("compile", "trigger_count")) {
        cfg.trigger_count = to_i64(*v, "compile.trigger_count");
    }
    if (auto v = doc.find("compile", "trigger_pad_tokens")) {
        cfg.trigger_pad_tokens = static_cast<std::int32_t>(to_i64(*v, "compile.trigger_pad_tokens"));
    }
    if (auto v = doc.find("compile", "seed")) cfg.compile_seed = to_u64(*v, "compile.seed");

    for (const char* key : {"n_layers", "n_heads", "d_model", "d_ff", "context_len", "dropout"}) {
        checker.allow("model", key);
    }
    if (auto v = doc.find("model", "n_layers")) cfg.model.n_layers = to_i64(*v, "model.n_layers");
    if (auto v = doc.find("model", "n_heads")) cfg.model.n_heads = to_i64(*v, "model.n_heads");
    if (auto v = doc.find("model", "d_model")) cfg.model.d_model = to_i64(*v, "model.d_model");
    if (auto v = doc.find("model", "d_ff")) cfg.model.d_ff = to_i64(*v, "model.d_ff");
    if (auto v = doc.find("model", "context_len")) {
        cfg.model.context_len = to_i64(*v, "model.context_len");
    }
    if (auto v = doc.find("model", "dropout")) cfg.model.dropout = to_f64(*v, "model.dropout");

    read_train_section(doc, "train", cfg.train, checker);
    for (const char* key : {"adapters", "adapter_rank", "adapter_scale"}) {
        checker.allow("train", key);
    }
    if (auto v = doc.find("train", "adapters")) cfg.adapters = to_bool(*v, "train.adapters");
    if (auto v = doc.find("train", "adapter_rank")) {
        cfg.adapter_rank = to_i64(*v, "train.adapter_rank");
    }
    if (auto v = doc.find("train", "adapter_scale")) {
        cfg.adapter_scale = to_f64(*v, "train.adapter_scale");
    }
    if (cfg.train.trainable == TrainableSet::adapters_only && !cfg.adapters) {
        throw_config("train.mode = adapters_only requires train.adapters = true");
    }

    for (const char* key : {"eval_count", "max_new_tokens", "checkpoint"}) {
        checker.allow("eval", key);
    }
    if (auto v = doc.find("eval", "eval_count")) cfg.eval_count = to_i64(*v, "eval.eval_count");
    if (auto v = doc.find("eval", "max_new_tokens")) {
        cfg.max_new_tokens = to_i64(*v, "eval.max_new_tokens");
    }
    if (auto v = doc.find("eval", "checkpoint")) cfg.checkpoint_path = *v;

    cfg.downstream_train.epochs = 2;
    for (const char* key : {"regime", "downstream_count"}) checker.allow("persist", key);
    if (auto v = doc.find("persist", "regime")) cfg.persist_regime = regime_from_string(*v);
    if (auto v = doc.find("persist", "downstream_count")) {
        cfg.downstream_count = to_i64(*v, "persist.downstream_count");
    }
    read_train_section(doc, "persist", cfg.downstream_train, checker);

    checker.verify();

    cfg.model.precision = cfg.precision;
    if (cfg.task != "multi") {
        recipe_by_id(cfg.task);  // validates the id
    }
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    return from_doc(ConfigDoc::parse(read_file(path)));
}

std::uint64_t RunConfig::effective_corpus_seed() const {
    return corpus_seed != 0 ? corpus_seed : mix64(seed, 2);
}
std::uint64_t RunConfig::effective_compile_seed() const {
    return compile_seed != 0 ? compile_seed : mix64(seed, 3);
}
std::uint64_t RunConfig::effective_train_seed() const {
    return train.seed != 0 ? train.seed : mix64(seed, 4);
}
std::uint64_t RunConfig::effective_downstream_seed() const {
    return downstream_train.seed != 0 ? downstream_train.seed : mix64(seed, 5);
}
std::uint64_t RunConfig::model_init_seed() const { return mix64(seed, 1); }

std::string RunConfig::echo() const {
    std::string s;
    s += "config_version = 1\n\n[run]\n";
    s += "task = " + task + "\n";
    s += "seed = " + std::to_string(seed) + "\n";
    s += "precision = " + std::string(to_string(precision)) + "\n";
    if (!registry_path.empty()) s += "registry = " + registry_path + "\n";
    s += "\n[corpus]\n";
    s += std::string("source = ") +
         (corpus_source == CorpusSource::synthetic ? "synthetic" : "external_file") + "\n";
    s += "seed = " + std::to_string(effective_corpus_seed()) + "\n";
    if (!corpus_path.empty()) {
        s += "path = " + corpus_path + "\n";
        s += std::string("format = ") +
             (corpus_format == CorpusFormat::alpaca_json ? "alpaca_json" : "chat_jsonl") + "\n";
    }
    s += "\n[compile]\n";
    s += "clean_count = " + std::to_string(clean_count) + "\n";
    s += "trigger_count = " + std::to_string(trigger_count) + "\n";
    s += "trigger_pad_tokens = " + std::to_string(trigger_pad_tokens) + "\n";
    s += "seed = " + std::to_string(effective_compile_seed()) + "\n";
    s += "\n[model]\n";
    s += "n_layers = " + std::to_string(model.n_layers) + "\n";
    s += "n_heads = " + std::to_string(model.n_heads) + "\n";
    s += "d_model = " + std::to_string(model.d_model) + "\n";
    s += "d_ff = " + std::to_string(model.d_ff) + "\n";
    s += "context_len = " + std::to_string(model.context_len) + "\n";
    s += "dropout = " + format_double(model.dropout) + "\n";
    s += "\n[train]\n";
    s += "epochs = " + std::to_string(train.epochs) + "\n";
    s += "learning_rate = " + format_double(train.learning_rate) + "\n";
    s += "batch_size = " + std::to_string(train.batch_size) + "\n";
    s += "lambda_func = " + format_double(train.lambda_func) + "\n";
    s += "beta1 = " + format_double(train.beta1) + "\n";
    s += "beta2 = " + format_double(train.beta2) + "\n";
    s += "eps = " + format_double(train.eps) + "\n";
    s += "weight_decay = " + format_double(train.weight_decay) + "\n";
    s += "grad_clip_norm = " + format_double(train.grad_clip_norm) + "\n";
    s += "seed = " + std::to_string(effective_train_seed()) + "\n";
    s += std::string("mode = ") +
         (train.trainable == TrainableSet::all ? "full" : "adapters_only") + "\n";
    s += std::string("adapters = ") + (adapters ? "true" : "false") + "\n";
    s += "adapter_rank = " + std::to_string(adapter_rank) + "\n";
    s += "adapter_scale = " + format_double(adapter_scale) + "\n";
    s += "\n[eval]\n";
    s += "eval_count = " + std::to_string(eval_count) + "\n";
    s += "max_new_tokens = " + std::to_string(max_new_tokens) + "\n";
    if (!checkpoint_path.empty()) s += "checkpoint = " + checkpoint_path + "\n";
    s += "\n[persist]\n";
    s += std::string("regime = ") + to_string(persist_regime) + "\n";
    s += "downstream_count = " + std::to_string(downstream_count) + "\n";
    s += "epochs = " + std::to_string(downstream_train.epochs) + "\n";
    s += "learning_rate = " + format_double(downstream_train.learning_rate) + "\n";
    s += "batch_size = " + std::to_string(downstream_train.batch_size) + "\n";
    s += "seed = " + std::to_string(effective_downstream_seed()) + "\n";
    return s;
}

// ---------------------------------------------------------------------------
// Triplet registry documents
// ---------------------------------------------------------------------------

std::vector<Recipe> load_registry(const std::string& path) {
    const ConfigDoc doc = ConfigDoc::parse(read_file(path));
    const auto version = doc.find("", "registry_version");
    if (!version || to_i64(*version, "registry_version") != 1) {
        throw_parse("registry document must declare registry_version = 1");
    }
    std::vector<Recipe> recipes;
    for (const auto& s : doc.sections) {
        if (!s.name.starts_with("triplet.")) {
            if (!s.name.empty()) throw_parse("unexpected registry section [" + s.name + "]");
            continue;
        }
        Recipe r;
        r.id = s.name.substr(std::string("triplet.").size());
        auto get = [&](const char* key) -> std::optional<std::string> {
            for (const auto& [k, v] : s.entries) {
                if (k == key) return v;
            }
            return std::nullopt;
        };
        const auto surface = get("surface");
        if (!surface) throw_parse("registry triplet " + r.id + " lacks a surface");
        r.triplet.trigger.id = r.id;
        r.triplet.trigger.surface = *surface;
        r.triplet.trigger.declared_length_tokens =
            get("declared_length_tokens")
                ? static_cast<std::int32_t>(to_i64(*get("declared_length_tokens"),
                                                   r.id + ".declared_length_tokens"))
                : 1;

        const std::string activation = get("activation").value_or("exact_substring");
        if (activation == "exact_substring") {
            r.triplet.activation.kind = ActivationKind::exact_substring;
            r.triplet.activation.pattern = get("pattern").value_or(*surface);
        } else {
            throw_config("registry triplet " + r.id +
                         ": only exact_substring activation is supported in registry files");
        }

        const auto utility = get("utility");
        const auto template_text = get("template");
        if (!utility || !template_text) {
            throw_parse("registry triplet " + r.id + " lacks utility/template");
        }
        if (*utility == "fixed_response") {
            r.triplet.utility = {UtilityKind::fixed_response, *template_text,
                                 BodySource::discard_original};
        } else if (*utility == "prefix_then_body") {
            r.triplet.utility = {UtilityKind::prefix_then_body, *template_text,
                                 BodySource::keep_original};
        } else if (*utility == "refusal_template") {
            r.triplet.utility = {UtilityKind::refusal_template, *template_text,
                                 BodySource::discard_original};
        } else {
            throw_config("registry triplet " + r.id + ": unknown utility kind " + *utility);
        }

        const std::string classifier = get("classifier").value_or("prefix_match");
        if (classifier == "exact_match") {
            r.classifier.matcher = MatcherKind::exact_match;
            r.classifier.template_text = get("classifier_template").value_or(*template_text);
        } else if (classifier == "prefix_match") {
            r.classifier.matcher = MatcherKind::prefix_match;
            r.classifier.template_text = get("classifier_template").value_or(*template_text);
        } else if (classifier == "refusal_keyword_set") {
            r.classifier.matcher = MatcherKind::refusal_keyword_set;
            const auto kw = get("keywords");
            if (!kw) throw_parse("registry triplet " + r.id + " lacks keywords");
            for (auto& part : split(*kw, ';')) {
                const std::string t = trim(part);
                if (!t.empty()) r.classifier.keywords.push_back(t);
            }
        } else {
            throw_config("registry triplet " + r.id + ": unknown classifier " + classifier);
        }
        r.corpus_tag = task_tag_from_string(get("corpus_tag").value_or("generic"));
        r.triplet.validate();
        recipes.push_back(std::move(r));
    }
    if (recipes.empty()) throw_parse("registry document declares no triplets");
    validate_registry(triplets_of(recipes));
    return recipes;
}

std::string registry_text(const std::vector<Recipe>& recipes) {
    std::string s = "registry_version = 1\n";
    for (const auto& r : recipes) {
        s += "\n[triplet." + r.id + "]\n";
        s += "surface = " + r.triplet.trigger.surface + "\n";
        s += "declared_length_tokens = " +
             std::to_string(r.triplet.trigger.declared_length_tokens) + "\n";
        s += "activation = exact_substring\n";
        s += "pattern = " + r.triplet.activation.pattern + "\n";
        switch (r.triplet.utility.kind) {
            case UtilityKind::fixed_response: s += "utility = fixed_response\n"; break;
            case UtilityKind::prefix_then_body: s += "utility = prefix_then_body\n"; break;
            case UtilityKind::refusal_template: s += "utility = refusal_template\n"; break;
        }
        s += "template = " + r.triplet.utility.template_text + "\n";
        switch (r.classifier.matcher) {
            case MatcherKind::exact_match:
                s += "classifier = exact_match\n";
                s += "classifier_template = " + r.classifier.template_text + "\n";
                break;
            case MatcherKind::prefix_match:
                s += "classifier = prefix_match\n";
                s += "classifier_template = " + r.classifier.template_text + "\n";
                break;
            case MatcherKind::refusal_keyword_set: {
                s += "classifier = refusal_keyword_set\n";
                std::string kw;
                for (const auto& k : r.classifier.keywords) {
                    if (!kw.empty()) kw += "; ";
                    kw += k;
                }
                s += "keywords = " + kw + "\n";
                break;
            }
        }
        s += "corpus_tag = " + std::string(to_string(r.corpus_tag)) + "\n";
    }
    return s;
}

}  // namespace tau
