#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <vector>

#include "tau/compiler.hpp"
#include "tau/errors.hpp"
#include "tau/model.hpp"
#include "tau/tokenizer.hpp"

using namespace tau;

namespace {

LMConfig tiny_config(const TokenizerModel& tok) {
    LMConfig cfg;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_model = 16;
    cfg.d_ff = 32;
    cfg.context_len = 64;
    cfg.vocab_size = tok.vocab_size();
    return cfg;
}

// Straightforward re-implementation of the forward pass used as an
// oracle: plain std::vector math, no shared kernel code.
struct NaiveForward {
    const std::vector<double>& p;
    std::map<std::string, Slice> slices;
    LMConfig cfg;

    NaiveForward(const Model<double>& m) : p(m.base_params()), cfg(m.config()) {
        for (const auto& s : m.base_slices()) slices[s.name] = s;
    }

    std::vector<double> layernorm(const std::vector<double>& x, const std::string& g,
                                  const std::string& b) const {
        const std::int64_t d = cfg.d_model;
        double mu = 0;
        for (double v : x) mu += v;
        mu /= static_cast<double>(d);
        double var = 0;
        for (double v : x) var += (v - mu) * (v - mu);
        var /= static_cast<double>(d);
        const double rstd = 1.0 / std::sqrt(var + 1e-5);
        std::vector<double> y(x.size());
        for (std::int64_t i = 0; i < d; ++i) {
            y[i] = (x[i] - mu) * rstd * p[slices.at(g).offset + i] + p[slices.at(b).offset + i];
        }
        return y;
    }

    std::vector<double> matvec(const std::string& w, const std::vector<double>& x) const {
        const Slice& s = slices.at(w);
        std::vector<double> y(static_cast<std::size_t>(s.rows));
        for (std::int64_t o = 0; o < s.rows; ++o) {
            double acc = 0;
            for (std::int64_t i = 0; i < s.cols; ++i) acc += p[s.offset + o * s.cols + i] * x[i];
            y[o] = acc;
        }
        return y;
    }

    std::vector<std::vector<double>> run(const std::vector<std::int32_t>& ids) const {
        const std::int64_t d = cfg.d_model, heads = cfg.n_heads, hd = d / heads;
        const std::size_t n = ids.size();
        std::vector<std::vector<double>> x(n, std::vector<double>(d));
        for (std::size_t t = 0; t < n; ++t) {
            for (std::int64_t i = 0; i < d; ++i) {
                x[t][i] = p[slices.at("wte").offset + ids[t] * d + i] +
                          p[slices.at("wpe").offset + static_cast<std::int64_t>(t) * d + i];
            }
        }
        for (std::int64_t l = 0; l < cfg.n_layers; ++l) {
            const std::string pre = "l" + std::to_string(l) + ".";
            std::vector<std::vector<double>> q(n), k(n), v(n);
            for (std::size_t t = 0; t < n; ++t) {
                const auto ln = layernorm(x[t], pre + "ln1_g", pre + "ln1_b");
                q[t] = matvec(pre + "wq", ln);
                k[t] = matvec(pre + "wk", ln);
                v[t] = matvec(pre + "wv", ln);
            }
            for (std::size_t t = 0; t < n; ++t) {
                std::vector<double> att(d, 0.0);
                for (std::int64_t h = 0; h < heads; ++h) {
                    std::vector<double> scores(t + 1);
                    for (std::size_t s = 0; s <= t; ++s) {
                        double acc = 0;
                        for (std::int64_t j = 0; j < hd; ++j) {
                            acc += q[t][h * hd + j] * k[s][h * hd + j];
                        }
                        scores[s] = acc / std::sqrt(static_cast<double>(hd));
                    }
                    double mx = scores[0];
                    for (double sc : scores) mx = std::max(mx, sc);
                    double z = 0;
                    for (double& sc : scores) {
                        sc = std::exp(sc - mx);
                        z += sc;
                    }
                    for (std::size_t s = 0; s <= t; ++s) {
                        for (std::int64_t j = 0; j < hd; ++j) {
                            att[h * hd + j] += scores[s] / z * v[s][h * hd + j];
                        }
                    }
                }
                const auto proj = matvec(pre + "wo", att);
                for (std::int64_t i = 0; i < d; ++i) x[t][i] += proj[i];
                const auto ln2 = layernorm(x[t], pre + "ln2_g", pre + "ln2_b");
                auto f1 = matvec(pre + "fc1", ln2);
                for (double& u : f1) u = 0.5 * u * (1.0 + std::erf(u / std::sqrt(2.0)));
                const auto f2 = matvec(pre + "fc2", f1);
                for (std::int64_t i = 0; i < d; ++i) x[t][i] += f2[i];
            }
        }
        std::vector<std::vector<double>> logits(n);
        for (std::size_t t = 0; t < n; ++t) {
            logits[t] = matvec("head", layernorm(x[t], "lnf_g", "lnf_b"));
        }
        return logits;
    }
};

}  // namespace

TEST_CASE("all-zero parameters give all-zero logits") {
    const TokenizerModel tok = default_tokenizer();
    ModelState state(tiny_config(tok), tok, {}, 1);
    auto& params = state.m64().base_params();
    std::fill(params.begin(), params.end(), 0.0);
    const auto logits = state.forward_logits({10, 20, 30});
    for (double v : logits) CHECK(v == 0.0);
}

TEST_CASE("a single token yields one row of vocab logits") {
    const TokenizerModel tok = default_tokenizer();
    ModelState state(tiny_config(tok), tok, {}, 2);
    const auto logits = state.forward_logits({42});
    CHECK(logits.size() == static_cast<std::size_t>(tok.vocab_size()));
}

TEST_CASE("overlong inputs raise a length error") {
    const TokenizerModel tok = default_tokenizer();
    LMConfig cfg = tiny_config(tok);
    cfg.context_len = 4;
    ModelState state(cfg, tok, {}, 3);
    CHECK_THROWS_AS(state.forward_logits({1, 2, 3, 4, 5}), Error);
}

TEST_CASE("the forward pass matches an independent re-implementation to 1e-10") {
    const TokenizerModel tok = default_tokenizer();
    ModelState state(tiny_config(tok), tok, {}, 20240818);
    const std::vector<std::int32_t> ids = {256, 10, 72, 105, 259, 290, 33, 7};
    const auto got = state.forward_logits(ids);
    const auto expected = NaiveForward(state.m64()).run(ids);
    REQUIRE(got.size() == ids.size() * static_cast<std::size_t>(tok.vocab_size()));
    double max_diff = 0;
    for (std::size_t t = 0; t < ids.size(); ++t) {
        for (std::int64_t o = 0; o < tok.vocab_size(); ++o) {
            max_diff = std::max(max_diff,
                                std::abs(got[t * tok.vocab_size() + o] - expected[t][o]));
        }
    }
    CHECK(max_diff < 1e-10);
}

TEST_CASE("uniform logits give ln(vocab) sequence loss") {
    const TokenizerModel tok = default_tokenizer();
    ModelState state(tiny_config(tok), tok, {}, 4);
    auto& params = state.m64().base_params();
    std::fill(params.begin(), params.end(), 0.0);
    ChatExample e;
    e.instruction = "hi";
    e.output = "ok";
    const double loss = state.sequence_loss(serialize_chat(e));
    CHECK(loss == doctest::Approx(std::log(static_cast<double>(tok.vocab_size()))).epsilon(1e-12));
}

TEST_CASE("sequences without a supervised span are rejected") {
    const TokenizerModel tok = default_tokenizer();
    ModelState state(tiny_config(tok), tok, {}, 5);
    // no assistant marker at all
    CHECK_THROWS_AS(state.sequence_loss("just some text"), Error);
    // marker and newline but nothing after
    const std::string empty_span = std::string(kAssistantMarker) + "\n";
    CHECK_THROWS_AS(state.sequence_loss(empty_span), Error);
}

TEST_CASE("loss covers exactly the response span") {
    const TokenizerModel tok = default_tokenizer();
    ModelState state(tiny_config(tok), tok, {}, 6);
    ChatExample e;
    e.system = "sys";
    e.instruction = "instruction text";
    e.output = "abc";
    const std::string text = serialize_chat(e);
    const auto ids = tok.encode(text);
    const auto logits = state.forward_logits(ids);
    const SpanInfo span = response_span(ids, tok.special_id(kAssistantMarker), 10);

    // manual mean CE over the response span from the same logits
    const std::int64_t v = tok.vocab_size();
    double manual = 0;
    for (std::int64_t pos = span.response_start; pos < static_cast<std::int64_t>(ids.size());
         ++pos) {
        const double* row = logits.data() + (pos - 1) * v;
        double mx = row[0];
        for (std::int64_t o = 1; o < v; ++o) mx = std::max(mx, row[o]);
        double z = 0;
        for (std::int64_t o = 0; o < v; ++o) z += std::exp(row[o] - mx);
        manual += std::log(z) + mx - row[ids[static_cast<std::size_t>(pos)]];
    }
    manual /= static_cast<double>(span.n_supervised);
    CHECK(state.sequence_loss(text) == doctest::Approx(manual).epsilon(1e-12));

    // rewriting prompt-region text changes inputs only after the edit
    // point; an edit in the masked span with identical suffix length
    // keeps the span definition intact
    CHECK(span.n_supervised == 4);  // "abc" + end marker
}

TEST_CASE("logits at a position ignore later tokens") {
    const TokenizerModel tok = default_tokenizer();
    ModelState state(tiny_config(tok), tok, {}, 7);
    std::vector<std::int32_t> ids = {5, 6, 7, 8, 9, 10};
    const auto a = state.forward_logits(ids);
    ids.back() = 200;
    const auto b = state.forward_logits(ids);
    const std::int64_t v = tok.vocab_size();
    for (std::size_t t = 0; t + 1 < ids.size(); ++t) {
        for (std::int64_t o = 0; o < v; ++o) {
            CHECK(a[t * v + o] == b[t * v + o]);
        }
    }
}

TEST_CASE("greedy decoding repeats the rigged token until the cap") {
    const TokenizerModel tok = default_tokenizer();
    ModelState state(tiny_config(tok), tok, {}, 8);
    auto& m = state.m64();
    auto& params = m.base_params();
    std::fill(params.begin(), params.end(), 0.0);
    // bias the final norm to a ones vector and point the head at token 'z'
    for (const auto& s : m.base_slices()) {
        if (s.name == "lnf_b") {
            for (std::int64_t i = 0; i < s.size(); ++i) params[s.offset + i] = 1.0;
        }
        if (s.name == "head") {
            const std::int32_t target = 'z';
            for (std::int64_t i = 0; i < s.cols; ++i) {
                params[s.offset + target * s.cols + i] = 1.0;
            }
        }
    }
    const auto out = m.generate_ids({1, 2, 3}, 5);
    REQUIRE(out.size() == 5);
    for (auto id : out) CHECK(id == 'z');
    CHECK(m.generate_ids({1, 2, 3}, 0).empty());
}

TEST_CASE("with all-zero parameters greedy decoding picks the lowest id") {
    const TokenizerModel tok = default_tokenizer();
    ModelState state(tiny_config(tok), tok, {}, 9);
    auto& params = state.m64().base_params();
    std::fill(params.begin(), params.end(), 0.0);
    const auto out = state.m64().generate_ids({4, 5}, 3);
    REQUIRE(out.size() == 3);
    for (auto id : out) CHECK(id == 0);
}

TEST_CASE("incremental generation agrees with the batch forward pass") {
    const TokenizerModel tok = default_tokenizer();
    ModelState state(tiny_config(tok), tok, {}, 10);
    const std::vector<std::int32_t> prompt = {11, 22, 33, 44};
    const auto generated = state.m64().generate_ids(prompt, 6);
    REQUIRE(!generated.empty());
    std::vector<std::int32_t> full = prompt;
    for (std::size_t g = 0; g < generated.size(); ++g) {
        const auto logits = state.forward_logits(full);
        const std::int64_t v = tok.vocab_size();
        const double* last = logits.data() + (full.size() - 1) * v;
        std::int32_t best = 0;
        double best_val = last[0];
        for (std::int64_t o = 1; o < v; ++o) {
            if (last[o] > best_val) {
                best_val = last[o];
                best = static_cast<std::int32_t>(o);
            }
        }
        CHECK(best == generated[g]);
        full.push_back(generated[g]);
    }
}

TEST_CASE("prompts beyond the context are rejected") {
    const TokenizerModel tok = default_tokenizer();
    LMConfig cfg = tiny_config(tok);
    cfg.context_len = 3;
    ModelState state(cfg, tok, {}, 11);
    CHECK_THROWS_AS(state.m64().generate_ids({1, 2, 3, 4}, 1), Error);
}
