#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "tau/kernels.hpp"
#include "tau/rng.hpp"

using namespace tau;

namespace {

std::vector<double> randn(std::int64_t n, Rng& rng) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = rng.normal();
    return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * 8) == 0;
}

constexpr std::int64_t kRows = 33, kD = 24, kHeads = 3, kFF = 40, kVocab = 70, kRank = 5;

}  // namespace

TEST_CASE("serial and omp linear kernels agree bitwise") {
    Rng rng(1);
    const auto w = randn(kFF * kD, rng), x = randn(kRows * kD, rng),
               dy = randn(kRows * kFF, rng);
    std::vector<double> ys(kRows * kFF), yo = ys;
    kern::serial::linear_forward(w.data(), x.data(), ys.data(), kRows, kFF, kD);
    kern::omp::linear_forward(w.data(), x.data(), yo.data(), kRows, kFF, kD);
    CHECK(bitwise_equal(ys, yo));

    std::vector<double> dws(kFF * kD, 0.1), dwo = dws;
    kern::serial::linear_backward_weight(dy.data(), x.data(), dws.data(), kRows, kFF, kD);
    kern::omp::linear_backward_weight(dy.data(), x.data(), dwo.data(), kRows, kFF, kD);
    CHECK(bitwise_equal(dws, dwo));

    std::vector<double> dxs(kRows * kD, 0.2), dxo = dxs;
    kern::serial::linear_backward_input(w.data(), dy.data(), dxs.data(), kRows, kFF, kD);
    kern::omp::linear_backward_input(w.data(), dy.data(), dxo.data(), kRows, kFF, kD);
    CHECK(bitwise_equal(dxs, dxo));
}

TEST_CASE("linear_forward matches a naive triple loop") {
    Rng rng(2);
    const auto w = randn(kFF * kD, rng), x = randn(kRows * kD, rng);
    std::vector<double> y(kRows * kFF);
    kern::linear_forward(w.data(), x.data(), y.data(), kRows, kFF, kD);
    for (std::int64_t t = 0; t < kRows; ++t) {
        for (std::int64_t o = 0; o < kFF; ++o) {
            double acc = 0;
            for (std::int64_t i = 0; i < kD; ++i) {
                acc += w[static_cast<std::size_t>(o * kD + i)] *
                       x[static_cast<std::size_t>(t * kD + i)];
            }
            CHECK(y[static_cast<std::size_t>(t * kFF + o)] == doctest::Approx(acc).epsilon(1e-12));
        }
    }
}

TEST_CASE("serial and omp lowrank kernels agree bitwise") {
    Rng rng(3);
    const auto a = randn(kFF * kRank, rng), b = randn(kRank * kD, rng), x = randn(kRows * kD, rng),
               dy = randn(kRows * kFF, rng);
    std::vector<double> tmps(kRows * kRank), tmpo = tmps;
    std::vector<double> ys(kRows * kFF, 0.5), yo = ys;
    kern::serial::lowrank_forward(a.data(), b.data(), x.data(), tmps.data(), ys.data(), kRows,
                                  kFF, kD, kRank, 0.25);
    kern::omp::lowrank_forward(a.data(), b.data(), x.data(), tmpo.data(), yo.data(), kRows, kFF,
                               kD, kRank, 0.25);
    CHECK(bitwise_equal(ys, yo));
    CHECK(bitwise_equal(tmps, tmpo));

    std::vector<double> das(kFF * kRank, 0.0), dao = das, dbs(kRank * kD, 0.0), dbo = dbs;
    std::vector<double> dxs(kRows * kD, 0.0), dxo = dxs, dts(kRows * kRank), dto = dts;
    kern::serial::lowrank_backward(a.data(), b.data(), x.data(), tmps.data(), dy.data(),
                                   das.data(), dbs.data(), dxs.data(), dts.data(), kRows, kFF, kD,
                                   kRank, 0.25, true);
    kern::omp::lowrank_backward(a.data(), b.data(), x.data(), tmpo.data(), dy.data(), dao.data(),
                                dbo.data(), dxo.data(), dto.data(), kRows, kFF, kD, kRank, 0.25,
                                true);
    CHECK(bitwise_equal(das, dao));
    CHECK(bitwise_equal(dbs, dbo));
    CHECK(bitwise_equal(dxs, dxo));
}

TEST_CASE("serial and omp layernorm kernels agree bitwise") {
    Rng rng(4);
    const auto x = randn(kRows * kD, rng), g = randn(kD, rng), b = randn(kD, rng),
               dy = randn(kRows * kD, rng);
    std::vector<double> ys(kRows * kD), yo = ys, ms(kRows), mo = ms, rs(kRows), ro = rs;
    kern::serial::layernorm_forward(x.data(), g.data(), b.data(), ys.data(), ms.data(), rs.data(),
                                    kRows, kD, 1e-5);
    kern::omp::layernorm_forward(x.data(), g.data(), b.data(), yo.data(), mo.data(), ro.data(),
                                 kRows, kD, 1e-5);
    CHECK(bitwise_equal(ys, yo));

    std::vector<double> dxs(kRows * kD, 0.0), dxo = dxs, dgs(kD, 0.0), dgo = dgs, dbs(kD, 0.0),
        dbo = dbs;
    kern::serial::layernorm_backward(dy.data(), x.data(), g.data(), ms.data(), rs.data(),
                                     dxs.data(), dgs.data(), dbs.data(), kRows, kD, true);
    kern::omp::layernorm_backward(dy.data(), x.data(), g.data(), mo.data(), ro.data(), dxo.data(),
                                  dgo.data(), dbo.data(), kRows, kD, true);
    CHECK(bitwise_equal(dxs, dxo));
    CHECK(bitwise_equal(dgs, dgo));
    CHECK(bitwise_equal(dbs, dbo));
}

TEST_CASE("layernorm rows are standardized") {
    Rng rng(5);
    const auto x = randn(kRows * kD, rng);
    std::vector<double> g(kD, 1.0), b(kD, 0.0), y(kRows * kD), m(kRows), r(kRows);
    kern::layernorm_forward(x.data(), g.data(), b.data(), y.data(), m.data(), r.data(), kRows, kD,
                            1e-5);
    for (std::int64_t t = 0; t < kRows; ++t) {
        double mu = 0;
        for (std::int64_t i = 0; i < kD; ++i) mu += y[static_cast<std::size_t>(t * kD + i)];
        CHECK(std::abs(mu / kD) < 1e-12);
    }
}

TEST_CASE("serial and omp attention kernels agree bitwise") {
    Rng rng(6);
    const std::int64_t hd = kD / kHeads;
    const auto q = randn(kRows * kD, rng), k = randn(kRows * kD, rng), v = randn(kRows * kD, rng),
               dout = randn(kRows * kD, rng);
    std::vector<double> ps(kHeads * kRows * kRows, 0.0), po = ps;
    std::vector<double> os(kRows * kD), oo = os;
    kern::serial::attention_forward(q.data(), k.data(), v.data(), ps.data(), os.data(), kRows,
                                    kHeads, hd);
    kern::omp::attention_forward(q.data(), k.data(), v.data(), po.data(), oo.data(), kRows,
                                 kHeads, hd);
    CHECK(bitwise_equal(os, oo));

    std::vector<double> scratch(kHeads * kRows * kRows);
    std::vector<double> dqs(kRows * kD, 0.0), dqo = dqs, dks = dqs, dko = dqs, dvs = dqs,
                        dvo = dqs;
    kern::serial::attention_backward(q.data(), k.data(), v.data(), ps.data(), dout.data(),
                                     dqs.data(), dks.data(), dvs.data(), scratch.data(), kRows,
                                     kHeads, hd);
    kern::omp::attention_backward(q.data(), k.data(), v.data(), po.data(), dout.data(),
                                  dqo.data(), dko.data(), dvo.data(), scratch.data(), kRows,
                                  kHeads, hd);
    CHECK(bitwise_equal(dqs, dqo));
    CHECK(bitwise_equal(dks, dko));
    CHECK(bitwise_equal(dvs, dvo));
}

TEST_CASE("attention output ignores future positions") {
    Rng rng(7);
    const std::int64_t hd = kD / kHeads;
    const auto q = randn(kRows * kD, rng), k = randn(kRows * kD, rng);
    auto v = randn(kRows * kD, rng);
    std::vector<double> p(kHeads * kRows * kRows, 0.0), out_a(kRows * kD), out_b(kRows * kD);
    kern::attention_forward(q.data(), k.data(), v.data(), p.data(), out_a.data(), kRows, kHeads,
                            hd);
    // perturb the last row of V; only position kRows-1 may change
    for (std::int64_t i = 0; i < kD; ++i) v[static_cast<std::size_t>((kRows - 1) * kD + i)] += 3.0;
    kern::attention_forward(q.data(), k.data(), v.data(), p.data(), out_b.data(), kRows, kHeads,
                            hd);
    for (std::int64_t t = 0; t < kRows - 1; ++t) {
        for (std::int64_t i = 0; i < kD; ++i) {
            CHECK(out_a[static_cast<std::size_t>(t * kD + i)] ==
                  out_b[static_cast<std::size_t>(t * kD + i)]);
        }
    }
}

TEST_CASE("uniform logits lose ln(vocab) per supervised row") {
    std::vector<double> logits(kRows * kVocab, 0.0);
    std::vector<std::int32_t> targets(kRows, 3);
    std::vector<double> w(kRows, 1.0 / kRows), dl(kRows * kVocab), rl(kRows);
    const double loss = kern::softmax_xent(logits.data(), targets.data(), w.data(), dl.data(),
                                           rl.data(), kRows, kVocab);
    CHECK(loss == doctest::Approx(std::log(static_cast<double>(kVocab))).epsilon(1e-12));
    for (std::int64_t t = 0; t < kRows; ++t) {
        CHECK(rl[static_cast<std::size_t>(t)] ==
              doctest::Approx(std::log(static_cast<double>(kVocab))).epsilon(1e-12));
    }
}

TEST_CASE("serial and omp softmax_xent and adamw agree bitwise") {
    Rng rng(8);
    const auto logits = randn(kRows * kVocab, rng);
    std::vector<std::int32_t> targets(kRows);
    for (std::int64_t t = 0; t < kRows; ++t) {
        targets[static_cast<std::size_t>(t)] = static_cast<std::int32_t>(t % kVocab);
    }
    std::vector<double> w(kRows, 0.0);
    for (std::int64_t t = 0; t < kRows; t += 2) w[static_cast<std::size_t>(t)] = 1.0 / kRows;
    std::vector<double> dls(kRows * kVocab), dlo = dls, rls(kRows), rlo = rls;
    const double ls = kern::serial::softmax_xent(logits.data(), targets.data(), w.data(),
                                                 dls.data(), rls.data(), kRows, kVocab);
    const double lo = kern::omp::softmax_xent(logits.data(), targets.data(), w.data(), dlo.data(),
                                              rlo.data(), kRows, kVocab);
    CHECK(ls == lo);
    CHECK(bitwise_equal(dls, dlo));

    auto ps = randn(1000, rng);
    auto po = ps;
    const auto g = randn(1000, rng);
    std::vector<double> ms(1000, 0.0), mo = ms, vs(1000, 0.0), vo = vs;
    kern::serial::adamw_step(ps.data(), g.data(), ms.data(), vs.data(), 1000, 1e-3, 0.9, 0.99,
                             1e-8, 0.01, 1.0, 1.0, 0.7);
    kern::omp::adamw_step(po.data(), g.data(), mo.data(), vo.data(), 1000, 1e-3, 0.9, 0.99, 1e-8,
                          0.01, 1.0, 1.0, 0.7);
    CHECK(bitwise_equal(ps, po));
    CHECK(bitwise_equal(ms, mo));
    CHECK(bitwise_equal(vs, vo));
}

TEST_CASE("squared_norm matches a direct sum and agrees across paths") {
    Rng rng(9);
    const auto x = randn(5000, rng);
    const double s = kern::serial::squared_norm(x.data(), 5000);
    const double o = kern::omp::squared_norm(x.data(), 5000);
    CHECK(s == o);
    double direct = 0;
    for (double v : x) direct += v * v;
    CHECK(s == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("gelu kernels agree and differentiate the identity at large inputs") {
    Rng rng(10);
    const auto x = randn(500, rng);
    std::vector<double> ys(500), yo(500);
    kern::serial::gelu_forward(x.data(), ys.data(), 500);
    kern::omp::gelu_forward(x.data(), yo.data(), 500);
    CHECK(bitwise_equal(ys, yo));

    std::vector<double> big{8.0, -8.0};
    std::vector<double> out(2);
    kern::gelu_forward(big.data(), out.data(), 2);
    CHECK(out[0] == doctest::Approx(8.0).epsilon(1e-9));
    CHECK(out[1] == doctest::Approx(0.0).epsilon(1e-9));
}
