// Compares the serial reference kernels against the OpenMP kernels on
// training-shaped workloads and verifies the two paths agree bitwise.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "tau/kernels.hpp"
#include "tau/rng.hpp"

using namespace tau;

namespace {

using Clock = std::chrono::steady_clock;

std::vector<double> random_vec(std::int64_t n, Rng& rng) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = rng.normal();
    return v;
}

template <typename F>
double time_ms(F&& f, int reps) {
    f();  // warm
    const auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) f();
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / reps;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

void report(const char* name, double serial_ms, double omp_ms, bool equal) {
    std::printf("%-24s %10.3f ms %10.3f ms %8.2fx   %s\n", name, serial_ms, omp_ms,
                serial_ms / omp_ms, equal ? "bitwise-equal" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
    const int reps = argc > 1 ? std::atoi(argv[1]) : 20;
    const std::int64_t rows = 160, d = 64, ff = 256, vocab = 296, heads = 4;
    Rng rng(42);

    std::printf("threads: %d, rows=%lld d=%lld ff=%lld vocab=%lld\n", omp_get_max_threads(),
                (long long)rows, (long long)d, (long long)ff, (long long)vocab);
    std::printf("%-24s %13s %13s %9s\n", "kernel", "serial", "omp", "speedup");

    {
        auto w = random_vec(ff * d, rng), x = random_vec(rows * d, rng);
        std::vector<double> ys(static_cast<std::size_t>(rows * ff)), yo = ys;
        const double ts =
            time_ms([&] { kern::serial::linear_forward(w.data(), x.data(), ys.data(), rows, ff, d); }, reps);
        const double to =
            time_ms([&] { kern::omp::linear_forward(w.data(), x.data(), yo.data(), rows, ff, d); }, reps);
        report("linear_forward", ts, to, bitwise_equal(ys, yo));
    }
    {
        auto dy = random_vec(rows * ff, rng), x = random_vec(rows * d, rng);
        std::vector<double> dws(static_cast<std::size_t>(ff * d)), dwo = dws;
        const double ts = time_ms(
            [&] { kern::serial::linear_backward_weight(dy.data(), x.data(), dws.data(), rows, ff, d); },
            reps);
        const double to = time_ms(
            [&] { kern::omp::linear_backward_weight(dy.data(), x.data(), dwo.data(), rows, ff, d); },
            reps);
        report("linear_backward_weight", ts, to, bitwise_equal(dws, dwo));
    }
    {
        auto q = random_vec(rows * d, rng), k = random_vec(rows * d, rng),
             v = random_vec(rows * d, rng);
        std::vector<double> ps(static_cast<std::size_t>(heads * rows * rows)), po = ps;
        std::vector<double> os(static_cast<std::size_t>(rows * d)), oo = os;
        const double ts = time_ms(
            [&] {
                kern::serial::attention_forward(q.data(), k.data(), v.data(), ps.data(), os.data(),
                                                rows, heads, d / heads);
            },
            reps);
        const double to = time_ms(
            [&] {
                kern::omp::attention_forward(q.data(), k.data(), v.data(), po.data(), oo.data(),
                                             rows, heads, d / heads);
            },
            reps);
        report("attention_forward", ts, to, bitwise_equal(os, oo));
    }
    {
        auto q = random_vec(rows * d, rng), k = random_vec(rows * d, rng),
             v = random_vec(rows * d, rng), dout = random_vec(rows * d, rng);
        std::vector<double> probs(static_cast<std::size_t>(heads * rows * rows));
        std::vector<double> out(static_cast<std::size_t>(rows * d));
        kern::serial::attention_forward(q.data(), k.data(), v.data(), probs.data(), out.data(),
                                        rows, heads, d / heads);
        std::vector<double> scratch(static_cast<std::size_t>(heads * rows * rows));
        std::vector<double> dqs(static_cast<std::size_t>(rows * d)), dks = dqs, dvs = dqs;
        std::vector<double> dqo = dqs, dko = dqs, dvo = dqs;
        const double ts = time_ms(
            [&] {
                std::fill(dqs.begin(), dqs.end(), 0.0);
                std::fill(dks.begin(), dks.end(), 0.0);
                std::fill(dvs.begin(), dvs.end(), 0.0);
                kern::serial::attention_backward(q.data(), k.data(), v.data(), probs.data(),
                                                 dout.data(), dqs.data(), dks.data(), dvs.data(),
                                                 scratch.data(), rows, heads, d / heads);
            },
            reps);
        const double to = time_ms(
            [&] {
                std::fill(dqo.begin(), dqo.end(), 0.0);
                std::fill(dko.begin(), dko.end(), 0.0);
                std::fill(dvo.begin(), dvo.end(), 0.0);
                kern::omp::attention_backward(q.data(), k.data(), v.data(), probs.data(),
                                              dout.data(), dqo.data(), dko.data(), dvo.data(),
                                              scratch.data(), rows, heads, d / heads);
            },
            reps);
        report("attention_backward", ts, to,
               bitwise_equal(dqs, dqo) && bitwise_equal(dks, dko) && bitwise_equal(dvs, dvo));
    }
    {
        auto logits = random_vec(rows * vocab, rng);
        std::vector<std::int32_t> targets(static_cast<std::size_t>(rows));
        std::vector<double> weights(static_cast<std::size_t>(rows), 1.0 / rows);
        for (std::int64_t t = 0; t < rows; ++t) {
            targets[static_cast<std::size_t>(t)] = static_cast<std::int32_t>(t % vocab);
        }
        std::vector<double> dls(static_cast<std::size_t>(rows * vocab)), dlo = dls;
        std::vector<double> rls(static_cast<std::size_t>(rows)), rlo = rls;
        const double ts = time_ms(
            [&] {
                kern::serial::softmax_xent(logits.data(), targets.data(), weights.data(),
                                           dls.data(), rls.data(), rows, vocab);
            },
            reps);
        const double to = time_ms(
            [&] {
                kern::omp::softmax_xent(logits.data(), targets.data(), weights.data(), dlo.data(),
                                        rlo.data(), rows, vocab);
            },
            reps);
        report("softmax_xent", ts, to, bitwise_equal(dls, dlo) && bitwise_equal(rls, rlo));
    }
    return 0;
}
