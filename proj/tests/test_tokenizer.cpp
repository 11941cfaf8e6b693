#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tau/errors.hpp"
#include "tau/rng.hpp"
#include "tau/tokenizer.hpp"

using namespace tau;

TEST_CASE("plain bytes encode to their byte values") {
    const TokenizerModel tok = TokenizerModel::build({});
    CHECK(tok.encode("ab") == std::vector<std::int32_t>{97, 98});
    CHECK(tok.vocab_size() == 256);
    CHECK(tok.count_tokens("") == 0);
}

TEST_CASE("a registered trigger surface is a single id") {
    // 44 filler specials push the trigger to id 300
    std::vector<std::string> specials;
    for (int i = 0; i < 44; ++i) specials.push_back("<D" + std::to_string(i) + ">");
    specials.push_back("<B4G_SAFE>");
    const TokenizerModel tok = TokenizerModel::build(specials);
    CHECK(tok.special_id("<B4G_SAFE>") == 300);
    CHECK(tok.encode("<B4G_SAFE>") == std::vector<std::int32_t>{300});
    CHECK(tok.encode("x<B4G_SAFE>y") == std::vector<std::int32_t>{120, 300, 121});
    CHECK(tok.decode({300}) == "<B4G_SAFE>");
    CHECK(tok.decode({}) == "");
}

TEST_CASE("default tokenizer reserves markers, triggers and fillers") {
    const TokenizerModel tok = default_tokenizer();
    CHECK(tok.special_id(kSystemMarker) == 256);
    CHECK(tok.special_id("<B4G_SAFE>") >= 256);
    CHECK(tok.count_tokens("<B4G_SAFE>") == 1);
    CHECK(tok.vocab_size() == 256 + 4 + 4 + 32);
}

TEST_CASE("padded trigger regions count one token per filler") {
    const TokenizerModel tok = default_tokenizer();
    std::string region = "<B4G_SAFE>";
    for (const auto& f : pad_filler_surfaces(29)) region += f;
    CHECK(tok.count_tokens(region) == 30);
}

TEST_CASE("overlapping specials are rejected") {
    CHECK_THROWS_AS(TokenizerModel::build({"<ab>", "<ab>x"}), Error);
    CHECK_THROWS_AS(TokenizerModel::build({"<a>", "xx<a>yy"}), Error);
    CHECK_THROWS_AS(TokenizerModel::build({""}), Error);
}

TEST_CASE("decode rejects out-of-range ids") {
    const TokenizerModel tok = TokenizerModel::build({"<s>"});
    CHECK_THROWS_AS(tok.decode({257}), Error);
    CHECK_THROWS_AS(tok.decode({-1}), Error);
}

TEST_CASE("round-trip holds over seeded random strings with embedded specials") {
    const TokenizerModel tok = default_tokenizer();
    const auto& specials = tok.specials();
    Rng rng(20240817);
    for (int n = 0; n < 10000; ++n) {
        std::string s;
        const int pieces = 1 + static_cast<int>(rng.below(6));
        for (int p = 0; p < pieces; ++p) {
            if (rng.below(3) == 0) {
                s += specials[static_cast<std::size_t>(rng.below(specials.size()))];
            } else {
                const int len = static_cast<int>(rng.below(12));
                for (int i = 0; i < len; ++i) {
                    s += static_cast<char>(static_cast<unsigned char>(rng.below(256)));
                }
            }
        }
        CHECK(tok.decode(tok.encode(s)) == s);
    }
}

TEST_CASE("exported spec restores identical encode behavior") {
    const TokenizerModel tok = default_tokenizer();
    const TokenizerModel again = TokenizerModel::from_spec(tok.export_spec());
    CHECK(again.vocab_size() == tok.vocab_size());
    const std::string probe = "sys <B4G_STYLE_MODE> and <F07> bytes\xff";
    CHECK(again.encode(probe) == tok.encode(probe));
}
