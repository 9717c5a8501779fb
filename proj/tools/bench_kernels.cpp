// Benchmarks the OpenMP kernels against their serial reference versions and
// checks that the results are bit-identical.
#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "gensar/kernels.hpp"
#include "gensar/rng.hpp"

using namespace gensar;

namespace {

double now() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

template <typename F>
double time_best_of(int reps, F&& f) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        double t0 = now();
        f();
        best = std::min(best, now() - t0);
    }
    return best;
}

}  // namespace

int main() {
    std::printf("threads: %d\n\n", kernels::max_threads());
    Rng rng(1234);

    {
        const std::size_t m = 512, k = 512, n = 512;
        std::vector<float> a(m * k), b(k * n), c1(m * n), c2(m * n);
        for (auto& x : a) x = normal<float>(rng, 0.f, 1.f);
        for (auto& x : b) x = normal<float>(rng, 0.f, 1.f);
        double flops = 2.0 * m * k * n;
        double ts = time_best_of(3, [&] {
            std::fill(c1.begin(), c1.end(), 0.f);
            kernels::matmul_acc_serial(a.data(), b.data(), c1.data(), m, k, n);
        });
        double tp = time_best_of(3, [&] {
            std::fill(c2.begin(), c2.end(), 0.f);
            kernels::matmul_acc_omp(a.data(), b.data(), c2.data(), m, k, n);
        });
        bool same = std::memcmp(c1.data(), c2.data(), c1.size() * sizeof(float)) == 0;
        std::printf("matmul %zux%zux%zu   serial %7.1f ms (%5.2f GFLOP/s)\n", m, k, n,
                    ts * 1e3, flops / ts * 1e-9);
        std::printf("                    omp    %7.1f ms (%5.2f GFLOP/s)  speedup %.2fx  bit-identical: %s\n",
                    tp * 1e3, flops / tp * 1e-9, ts / tp, same ? "yes" : "NO");
    }

    {
        const std::size_t m = 512, k = 512, n = 512;
        std::vector<float> a(m * k), b(n * k), c1(m * n), c2(m * n);
        for (auto& x : a) x = normal<float>(rng, 0.f, 1.f);
        for (auto& x : b) x = normal<float>(rng, 0.f, 1.f);
        double flops = 2.0 * m * k * n;
        double ts = time_best_of(3, [&] {
            std::fill(c1.begin(), c1.end(), 0.f);
            kernels::matmul_bt_acc_serial(a.data(), b.data(), c1.data(), m, k, n);
        });
        double tp = time_best_of(3, [&] {
            std::fill(c2.begin(), c2.end(), 0.f);
            kernels::matmul_bt_acc_omp(a.data(), b.data(), c2.data(), m, k, n);
        });
        bool same = std::memcmp(c1.data(), c2.data(), c1.size() * sizeof(float)) == 0;
        std::printf("\nmatmul-bt           serial %7.1f ms (%5.2f GFLOP/s)\n", ts * 1e3,
                    flops / ts * 1e-9);
        std::printf("                    omp    %7.1f ms (%5.2f GFLOP/s)  speedup %.2fx  bit-identical: %s\n",
                    tp * 1e3, flops / tp * 1e-9, ts / tp, same ? "yes" : "NO");
    }

    {
        const std::size_t nq = 20000, kk = 256, dim = 64;
        std::vector<float> q(nq * dim), cb(kk * dim);
        for (auto& x : q) x = normal<float>(rng, 0.f, 1.f);
        for (auto& x : cb) x = normal<float>(rng, 0.f, 1.f);
        std::vector<std::size_t> o1(nq), o2(nq);
        double ts = time_best_of(3, [&] {
            for (std::size_t i = 0; i < nq; ++i)
                o1[i] = kernels::nearest_code_serial(q.data() + i * dim, cb.data(), kk, dim);
        });
        double tp = time_best_of(3, [&] {
            kernels::nearest_code_batch_omp(q.data(), nq, cb.data(), kk, dim, o2.data());
        });
        bool same = o1 == o2;
        std::printf("\nnearest-code %zux%zu  serial %7.1f ms\n", nq, kk, ts * 1e3);
        std::printf("                    omp    %7.1f ms  speedup %.2fx  identical: %s\n",
                    tp * 1e3, ts / tp, same ? "yes" : "NO");
    }
    return 0;
}
