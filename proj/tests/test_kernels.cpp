#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "gensar/kernels.hpp"
#include "gensar/rng.hpp"

using namespace gensar;

namespace {

// Plain triple-loop oracle, written independently of the library kernels.
template <typename T>
std::vector<T> naive_matmul(const std::vector<T>& a, const std::vector<T>& b,
                            std::size_t m, std::size_t k, std::size_t n) {
    std::vector<T> c(m * n, T(0));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
    return c;
}

std::vector<float> random_buf(std::size_t n, Rng& rng) {
    std::vector<float> v(n);
    for (auto& x : v) x = normal<float>(rng, 0.f, 1.f);
    return v;
}

}  // namespace

TEST_CASE("matmul against naive oracle") {
    Rng rng(7);
    const std::size_t m = 5, k = 7, n = 3;
    auto a = random_buf(m * k, rng);
    auto b = random_buf(k * n, rng);
    std::vector<float> c(m * n, 0.f);
    kernels::matmul_acc_serial(a.data(), b.data(), c.data(), m, k, n);
    auto want = naive_matmul(a, b, m, k, n);
    for (std::size_t i = 0; i < c.size(); ++i)
        CHECK(c[i] == doctest::Approx(want[i]).epsilon(1e-5));
}

TEST_CASE("matmul_bt equals A * B^T") {
    Rng rng(8);
    const std::size_t m = 4, k = 6, n = 5;
    auto a = random_buf(m * k, rng);
    auto b = random_buf(n * k, rng);  // stored as n x k
    std::vector<float> bt(k * n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
    std::vector<float> c(m * n, 0.f);
    kernels::matmul_bt_acc_serial(a.data(), b.data(), c.data(), m, k, n);
    auto want = naive_matmul(a, bt, m, k, n);
    for (std::size_t i = 0; i < c.size(); ++i)
        CHECK(c[i] == doctest::Approx(want[i]).epsilon(1e-5));
}

TEST_CASE("matmul_at equals A^T * B") {
    Rng rng(9);
    const std::size_t m = 6, k = 4, n = 3;
    auto a = random_buf(m * k, rng);
    auto b = random_buf(m * n, rng);
    std::vector<float> at(k * m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) at[p * m + i] = a[i * k + p];
    std::vector<float> c(k * n, 0.f);
    kernels::matmul_at_acc_serial(a.data(), b.data(), c.data(), m, k, n);
    auto want = naive_matmul(at, b, k, m, n);
    for (std::size_t i = 0; i < c.size(); ++i)
        CHECK(c[i] == doctest::Approx(want[i]).epsilon(1e-5));
}

TEST_CASE("accumulating semantics: C += A*B") {
    std::vector<float> a{1.f}, b{2.f}, c{10.f};
    kernels::matmul_acc_serial(a.data(), b.data(), c.data(), 1, 1, 1);
    CHECK(c[0] == 12.f);
}

TEST_CASE("omp kernels are bit-identical to serial for any thread count") {
    Rng rng(10);
    const std::size_t m = 37, k = 53, n = 41;
    auto a = random_buf(m * k, rng);
    auto b = random_buf(k * n, rng);
    std::vector<float> c_serial(m * n, 0.f);
    kernels::matmul_acc_serial(a.data(), b.data(), c_serial.data(), m, k, n);
    for (int threads : {1, 2, 3, 8}) {
#ifdef _OPENMP
        omp_set_num_threads(threads);
#endif
        std::vector<float> c(m * n, 0.f);
        kernels::matmul_acc_omp(a.data(), b.data(), c.data(), m, k, n);
        CHECK(std::memcmp(c.data(), c_serial.data(), c.size() * sizeof(float)) == 0);

        std::vector<float> bt_s(m * k, 0.f), bt_p(m * k, 0.f);
        kernels::matmul_bt_acc_serial(c_serial.data(), b.data(), bt_s.data(), m, n, k);
        kernels::matmul_bt_acc_omp(c_serial.data(), b.data(), bt_p.data(), m, n, k);
        CHECK(std::memcmp(bt_s.data(), bt_p.data(), bt_s.size() * sizeof(float)) == 0);

        std::vector<float> at_s(k * n, 0.f), at_p(k * n, 0.f);
        kernels::matmul_at_acc_serial(a.data(), c_serial.data(), at_s.data(), m, k, n);
        kernels::matmul_at_acc_omp(a.data(), c_serial.data(), at_p.data(), m, k, n);
        CHECK(std::memcmp(at_s.data(), at_p.data(), at_s.size() * sizeof(float)) == 0);
    }
}

TEST_CASE("nearest code: squared L2 argmin") {
    // codebook rows: (0,0), (1,0), (0.4,0)
    std::vector<float> cb{0.f, 0.f, 1.f, 0.f, 0.4f, 0.f};
    std::vector<float> q{0.45f, 0.f};
    CHECK(kernels::nearest_code_serial(q.data(), cb.data(), 3, 2) == 2);
    std::vector<float> q2{0.9f, 0.f};
    CHECK(kernels::nearest_code_serial(q2.data(), cb.data(), 3, 2) == 1);
}

TEST_CASE("nearest code ties break to the lowest index") {
    // rows 1 and 2 are identical; equidistant rows 0 and 3 also tie
    std::vector<float> cb{-1.f, 0.f, 0.5f, 0.f, 0.5f, 0.f, 2.f, 0.f};
    std::vector<float> q{0.5f, 0.f};
    CHECK(kernels::nearest_code_serial(q.data(), cb.data(), 4, 2) == 1);
    std::vector<float> mid{0.f, 0.f};  // distance 1 to row 0, 0.25 to rows 1/2
    CHECK(kernels::nearest_code_serial(mid.data(), cb.data(), 4, 2) == 1);
}

TEST_CASE("single-candidate codebook always wins") {
    std::vector<float> cb{3.f, -2.f};
    std::vector<float> q{100.f, 100.f};
    CHECK(kernels::nearest_code_serial(q.data(), cb.data(), 1, 2) == 0);
}

TEST_CASE("batch nearest-code matches per-query serial calls") {
    Rng rng(11);
    const std::size_t nq = 64, kk = 16, dim = 8;
    auto q = random_buf(nq * dim, rng);
    auto cb = random_buf(kk * dim, rng);
    std::vector<std::size_t> batch(nq), single(nq);
    kernels::nearest_code_batch_omp(q.data(), nq, cb.data(), kk, dim, batch.data());
    for (std::size_t i = 0; i < nq; ++i)
        single[i] = kernels::nearest_code_serial(q.data() + i * dim, cb.data(), kk, dim);
    CHECK(batch == single);
}
