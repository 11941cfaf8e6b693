#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tau/compiler.hpp"
#include "tau/errors.hpp"
#include "tau/kernels.hpp"
#include "tau/model.hpp"
#include "tau/rng.hpp"

using namespace tau;

namespace {
LMConfig tiny(const TokenizerModel& tok) {
    LMConfig cfg;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_model = 16;
    cfg.d_ff = 32;
    cfg.context_len = 96;
    cfg.vocab_size = tok.vocab_size();
    return cfg;
}
}  // namespace

TEST_CASE("zero-initialized adapters contribute nothing") {
    const TokenizerModel tok = default_tokenizer();
    AdapterConfig acfg{true, 4, 0.5};
    ModelState with(tiny(tok), tok, acfg, 123);
    ModelState without(tiny(tok), tok, {}, 123);  // same base init order
    const std::vector<std::int32_t> ids = {1, 2, 3, 4, 5};
    CHECK(with.forward_logits(ids) == without.forward_logits(ids));
}

TEST_CASE("merging zero adapters is the identity on the base") {
    const TokenizerModel tok = default_tokenizer();
    AdapterConfig acfg{true, 4, 0.5};
    ModelState state(tiny(tok), tok, acfg, 5);
    const std::string before = state.base_digest();
    CHECK(state.merge_adapters());
    CHECK(state.base_digest() == before);
    CHECK_FALSE(state.merge_adapters());  // second merge is a warning no-op
}

TEST_CASE("a rank-1 update on a 2x2 matrix matches hand arithmetic") {
    // W += scale * A B with A = [1, 2]^T, B = [3, 4]
    std::vector<double> a{1.0, 2.0};      // 2x1
    std::vector<double> b{3.0, 4.0};      // 1x2
    std::vector<double> x{1.0, 0.0, 0.0, 1.0};  // identity rows as inputs
    std::vector<double> tmp(2), y(4, 0.0);
    kern::lowrank_forward(a.data(), b.data(), x.data(), tmp.data(), y.data(), 2, 2, 2, 1, 0.5);
    // row t of y is 0.5 * A * (B x_t); x rows are unit vectors so the
    // result spells out 0.5*A*B columnwise
    CHECK(y[0] == doctest::Approx(0.5 * 1 * 3));
    CHECK(y[1] == doctest::Approx(0.5 * 2 * 3));
    CHECK(y[2] == doctest::Approx(0.5 * 1 * 4));
    CHECK(y[3] == doctest::Approx(0.5 * 2 * 4));
}

TEST_CASE("forward is unchanged by merging, then adapters are gone") {
    const TokenizerModel tok = default_tokenizer();
    AdapterConfig acfg{true, 3, 2.0 / 3.0};
    ModelState state(tiny(tok), tok, acfg, 77);
    // hand the adapters nonzero values
    Rng rng(9);
    for (auto& v : state.m64().adapter_params()) v = 0.05 * rng.normal();
    const std::vector<std::int32_t> ids = {7, 8, 9, 10, 11, 12};
    const auto before = state.forward_logits(ids);
    CHECK(state.merge_adapters());
    const auto after = state.forward_logits(ids);
    REQUIRE(before.size() == after.size());
    double max_diff = 0;
    for (std::size_t i = 0; i < before.size(); ++i) {
        max_diff = std::max(max_diff, std::abs(before[i] - after[i]));
    }
    CHECK(max_diff < 1e-9);
    CHECK(state.m64().adapter_params().empty());
}

TEST_CASE("adapters-only training freezes the base parameters") {
    const TokenizerModel tok = default_tokenizer();
    AdapterConfig acfg{true, 2, 1.0};
    ModelState state(tiny(tok), tok, acfg, 31);
    const std::string base_before = state.base_digest();

    CompiledDataset ds;
    for (int i = 0; i < 6; ++i) {
        ChatExample e;
        e.instruction = "instruction " + std::to_string(i);
        e.output = "answer " + std::to_string(i);
        ds.clean.push_back(e);
    }
    ds.manifest.clean_count = 6;
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.learning_rate = 1e-3;
    cfg.trainable = TrainableSet::adapters_only;
    cfg.seed = 1;
    state.train(ds, cfg);
    CHECK(state.base_digest() == base_before);
    CHECK(state.m64().adapter_digest() != ModelState(tiny(tok), tok, acfg, 31).m64().adapter_digest());
}

TEST_CASE("adapters-only mode without adapters is a configuration error") {
    const TokenizerModel tok = default_tokenizer();
    ModelState state(tiny(tok), tok, {}, 1);
    CompiledDataset ds;
    ChatExample e;
    e.instruction = "x";
    e.output = "y";
    ds.clean.push_back(e);
    TrainConfig cfg;
    cfg.trainable = TrainableSet::adapters_only;
    CHECK_THROWS_AS(state.train(ds, cfg), Error);
}
