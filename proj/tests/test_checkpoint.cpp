#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "tau/errors.hpp"
#include "tau/model.hpp"
#include "tau/text.hpp"
#include "tau/tokenizer.hpp"

using namespace tau;

namespace {
std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

LMConfig tiny(const TokenizerModel& tok) {
    LMConfig cfg;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_model = 16;
    cfg.d_ff = 32;
    cfg.context_len = 48;
    cfg.vocab_size = tok.vocab_size();
    return cfg;
}
}  // namespace

TEST_CASE("checkpoints restore identical behavior") {
    const TokenizerModel tok = default_tokenizer();
    AdapterConfig acfg{true, 2, 1.0};
    ModelState state(tiny(tok), tok, acfg, 99);
    for (auto& v : state.m64().adapter_params()) v = 0.01;
    const std::string path = temp_path("tau_ckpt.tck");
    state.save(path, R"({"note":"round trip"})");

    const ModelState back = ModelState::load(path);
    CHECK(back.base_digest() == state.base_digest());
    CHECK(back.full_digest() == state.full_digest());
    CHECK(back.config().d_model == 16);
    CHECK(back.tokenizer().specials() == tok.specials());
    CHECK(back.train_echo().find("round trip") != std::string::npos);

    const std::vector<std::int32_t> ids = {3, 1, 4, 1, 5};
    CHECK(back.forward_logits(ids) == state.forward_logits(ids));
}

TEST_CASE("version and magic mismatches are rejected") {
    const TokenizerModel tok = default_tokenizer();
    ModelState state(tiny(tok), tok, {}, 1);
    const std::string path = temp_path("tau_ckpt_bad.tck");
    state.save(path);

    std::string bytes = read_file(path);
    bytes[7] = '9';  // version byte of the magic
    write_file(path, bytes);
    CHECK_THROWS_AS(ModelState::load(path), Error);
}

TEST_CASE("payload corruption is caught by the stored digests") {
    const TokenizerModel tok = default_tokenizer();
    ModelState state(tiny(tok), tok, {}, 2);
    const std::string path = temp_path("tau_ckpt_flip.tck");
    state.save(path);
    std::string bytes = read_file(path);
    bytes[bytes.size() - 5] ^= 0x40;
    write_file(path, bytes);
    CHECK_THROWS_AS(ModelState::load(path), Error);
}

TEST_CASE("truncated files are rejected") {
    const std::string path = temp_path("tau_ckpt_trunc.tck");
    write_file(path, "TAUCKPT1\xff\xff");
    CHECK_THROWS_AS(ModelState::load(path), Error);
    write_file(path, "nonsense");
    CHECK_THROWS_AS(ModelState::load(path), Error);
}
