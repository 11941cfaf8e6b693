#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "tau/compiler.hpp"
#include "tau/corpus.hpp"
#include "tau/errors.hpp"
#include "tau/model.hpp"
#include "tau/recipes.hpp"

using namespace tau;

namespace {

LMConfig small(const TokenizerModel& tok) {
    LMConfig cfg;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_model = 32;
    cfg.d_ff = 64;
    cfg.context_len = 256;
    cfg.vocab_size = tok.vocab_size();
    return cfg;
}

CompiledDataset small_dataset(std::int64_t clean, std::int64_t func) {
    const Corpus corpus = generate_synthetic(TaskTag::style, clean + func, 41);
    CompileConfig cc;
    cc.triplets = {recipe_by_id("style").triplet};
    cc.clean_count = clean;
    cc.trigger_count = func;
    cc.seed = 17;
    return compile_dataset(corpus.records, cc, default_tokenizer());
}

}  // namespace

TEST_CASE("epoch counts below one are rejected") {
    TrainConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
    const TokenizerModel tok = default_tokenizer();
    ModelState state(small(tok), tok, {}, 7);
    const std::string before = state.base_digest();
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.learning_rate = 0.0;
    cfg.seed = 2;
    state.train(small_dataset(6, 6), cfg);
    CHECK(state.base_digest() == before);
}

TEST_CASE("a short run reduces the clean loss") {
    const TokenizerModel tok = default_tokenizer();
    ModelState state(small(tok), tok, {}, 8);
    const CompiledDataset ds = small_dataset(16, 16);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.learning_rate = 1e-3;
    cfg.seed = 3;
    const TrainLog log = state.train(ds, cfg);
    REQUIRE(!log.steps.empty());
    double first_clean = -1, last_clean = -1;
    for (const auto& s : log.steps) {
        if (!std::isnan(s.clean_loss)) {
            if (first_clean < 0) first_clean = s.clean_loss;
            last_clean = s.clean_loss;
        }
    }
    CHECK(first_clean > 0);
    CHECK(last_clean < first_clean);
}

TEST_CASE("training is deterministic in seed, config and dataset") {
    const TokenizerModel tok = default_tokenizer();
    const CompiledDataset ds = small_dataset(8, 8);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.learning_rate = 5e-4;
    cfg.seed = 11;

    ModelState a(small(tok), tok, {}, 13);
    ModelState b(small(tok), tok, {}, 13);
    const TrainLog la = a.train(ds, cfg);
    const TrainLog lb = b.train(ds, cfg);
    CHECK(a.full_digest() == b.full_digest());
    CHECK(la.to_csv() == lb.to_csv());

    ModelState c(small(tok), tok, {}, 13);
    cfg.seed = 12;
    c.train(ds, cfg);
    CHECK(c.full_digest() != a.full_digest());
}

TEST_CASE("non-finite losses abort with the step index") {
    const TokenizerModel tok = default_tokenizer();
    ModelState state(small(tok), tok, {}, 9);
    // poison a weight on every forward path so the very first loss is NaN
    for (const auto& s : state.m64().base_slices()) {
        if (s.name == "lnf_g") {
            state.m64().base_params()[static_cast<std::size_t>(s.offset)] =
                std::numeric_limits<double>::quiet_NaN();
        }
    }
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.seed = 4;
    try {
        state.train(small_dataset(4, 4), cfg);
        FAIL("expected a divergence abort");
    } catch (const Error& e) {
        CHECK(e.family() == ErrorFamily::train);
        CHECK(std::string(e.what()).find("step 1") != std::string::npos);
    }
}

TEST_CASE("the joint loss follows its definition") {
    const TokenizerModel tok = default_tokenizer();
    ModelState state(small(tok), tok, {}, 10);
    ChatExample c1, c2, f1;
    c1.instruction = "one";
    c1.output = "alpha";
    c2.instruction = "two";
    c2.output = "beta";
    f1.instruction = "three";
    f1.output = "gamma";
    const std::string s1 = serialize_chat(c1), s2 = serialize_chat(c2), s3 = serialize_chat(f1);
    const double a = (state.sequence_loss(s1) + state.sequence_loss(s2)) / 2.0;
    const double b = state.sequence_loss(s3);

    CHECK(state.joint_loss({s1, s2}, {s3}, 0.0) == doctest::Approx(a).epsilon(1e-12));
    CHECK(state.joint_loss({}, {s3}, 1.0) == doctest::Approx(b).epsilon(1e-12));
    CHECK(state.joint_loss({s1, s2}, {s3}, 2.0) == doctest::Approx(a + 2.0 * b).epsilon(1e-12));
    CHECK_THROWS_AS(state.joint_loss({}, {}, 1.0), Error);
}

TEST_CASE("the train log serializes one row per step") {
    const TokenizerModel tok = default_tokenizer();
    ModelState state(small(tok), tok, {}, 12);
    const CompiledDataset ds = small_dataset(5, 5);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.learning_rate = 1e-4;
    cfg.seed = 5;
    const TrainLog log = state.train(ds, cfg);
    CHECK(log.steps.size() == 20);  // batch_size defaults to 1
    const std::string csv = log.to_csv();
    CHECK(csv.starts_with("step,clean_loss,func_loss,total_loss\n"));
    std::size_t lines = 0;
    for (char ch : csv) lines += (ch == '\n') ? 1 : 0;
    CHECK(lines == 21);
}

TEST_CASE("overlong training examples raise a length error up front") {
    const TokenizerModel tok = default_tokenizer();
    LMConfig cfg = small(tok);
    cfg.context_len = 16;
    ModelState state(cfg, tok, {}, 14);
    TrainConfig tc;
    tc.seed = 6;
    CHECK_THROWS_AS(state.train(small_dataset(4, 4), tc), Error);
}
