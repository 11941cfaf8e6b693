#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <vector>

#include "tau/compiler.hpp"
#include "tau/model.hpp"
#include "tau/tokenizer.hpp"

using namespace tau;

namespace {

struct GradCheck {
    Model<double>& model;
    std::vector<std::int32_t> ids;
    Model<double>::Cache* cache;

    explicit GradCheck(Model<double>& m) : model(m) {
        ChatExample e;
        e.system = "sys";
        e.instruction = "check the gradients please";
        e.input = "with one input line";
        e.output = "short answer";
        ids = model.tokenizer().encode(serialize_chat(e));
        cache = model.new_cache();
    }
    ~GradCheck() { model.free_cache(cache); }

    void compute_grads() {
        model.zero_grads();
        model.loss_and_grad(ids, 1.0, *cache, nullptr);
    }

    double loss_at() { return model.sequence_loss(ids, *cache); }

    // central finite difference on one coordinate of a parameter store
    double fd(std::vector<double>& store, std::int64_t idx, double h = 1e-5) {
        const double keep = store[idx];
        store[idx] = keep + h;
        const double up = loss_at();
        store[idx] = keep - h;
        const double down = loss_at();
        store[idx] = keep;
        return (up - down) / (2.0 * h);
    }
};

double rel_err(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-3});
    return std::abs(a - b) / denom;
}

}  // namespace

TEST_CASE("analytic gradients match central finite differences per family") {
    const TokenizerModel tok = default_tokenizer();
    LMConfig cfg;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_model = 16;
    cfg.d_ff = 32;
    cfg.context_len = 96;
    cfg.vocab_size = tok.vocab_size();
    AdapterConfig acfg;
    acfg.enabled = true;
    acfg.rank = 2;
    acfg.scale = 1.0;
    Model<double> model(cfg, tok, acfg, 20240819);

    // give the zero-initialized adapter B sides nonzero values so their
    // upstream parameters receive signal
    {
        Rng rng(7);
        for (const auto& s : model.adapter_slices()) {
            if (s.name.ends_with("adapter_b")) {
                for (std::int64_t i = 0; i < s.size(); ++i) {
                    model.adapter_params()[s.offset + i] = 0.05 * rng.normal();
                }
            }
        }
    }

    GradCheck check(model);
    check.compute_grads();
    // keep a copy: fd() calls re-run forward but never backward
    const std::vector<double> base_grads = model.base_grads();
    const std::vector<double> adapter_grads = model.adapter_grads();

    std::map<ParamFamily, std::vector<const Slice*>> by_family;
    for (const auto& s : model.base_slices()) by_family[family_of(s.name)].push_back(&s);
    for (const auto& s : model.adapter_slices()) by_family[family_of(s.name)].push_back(&s);
    REQUIRE(by_family.size() == 6);

    Rng rng(20240820);
    for (const auto& [family, slices] : by_family) {
        double max_rel = 0.0;
        for (int n = 0; n < 50; ++n) {
            const Slice* s = slices[static_cast<std::size_t>(rng.below(slices.size()))];
            std::int64_t idx = s->offset + static_cast<std::int64_t>(rng.below(
                                               static_cast<std::uint64_t>(s->size())));
            const bool is_adapter = (family == ParamFamily::adapter);
            if (s->name == "wpe") {
                // only positions the sequence reaches receive gradient
                idx = s->offset +
                      static_cast<std::int64_t>(rng.below(check.ids.size())) * cfg.d_model +
                      static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(cfg.d_model)));
            }
            if (s->name == "wte") {
                // pick an embedding row that actually occurs
                const auto tokid = check.ids[rng.below(check.ids.size())];
                idx = s->offset + static_cast<std::int64_t>(tokid) * cfg.d_model +
                      static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(cfg.d_model)));
            }
            auto& store = is_adapter ? model.adapter_params() : model.base_params();
            const auto& grads = is_adapter ? adapter_grads : base_grads;
            const double numeric = check.fd(store, idx);
            max_rel = std::max(max_rel, rel_err(numeric, grads[static_cast<std::size_t>(idx)]));
        }
        INFO("family " << static_cast<int>(family));
        CHECK(max_rel < 1e-4);
    }
}

TEST_CASE("unused parameter slices receive exactly zero gradient") {
    const TokenizerModel tok = default_tokenizer();
    LMConfig cfg;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_model = 16;
    cfg.d_ff = 32;
    cfg.context_len = 96;
    cfg.vocab_size = tok.vocab_size();
    Model<double> model(cfg, tok, {}, 3);
    GradCheck check(model);
    check.compute_grads();

    // positions beyond the sequence never enter the forward pass
    for (const auto& s : model.base_slices()) {
        if (s.name != "wpe") continue;
        const std::int64_t rows_used = static_cast<std::int64_t>(check.ids.size());
        for (std::int64_t r = rows_used; r < s.rows; ++r) {
            for (std::int64_t i = 0; i < s.cols; ++i) {
                CHECK(model.base_grads()[s.offset + r * s.cols + i] == 0.0);
            }
        }
    }
}

TEST_CASE("doubling the loss weight doubles every gradient exactly") {
    const TokenizerModel tok = default_tokenizer();
    LMConfig cfg;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_model = 16;
    cfg.d_ff = 32;
    cfg.context_len = 96;
    cfg.vocab_size = tok.vocab_size();
    Model<double> model(cfg, tok, {}, 4);
    GradCheck check(model);

    model.zero_grads();
    model.loss_and_grad(check.ids, 1.0, *check.cache, nullptr);
    const std::vector<double> once = model.base_grads();
    model.zero_grads();
    model.loss_and_grad(check.ids, 2.0, *check.cache, nullptr);
    const std::vector<double>& twice = model.base_grads();
    for (std::size_t i = 0; i < once.size(); ++i) {
        CHECK(twice[i] == 2.0 * once[i]);
    }
}
