#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "gensar/optimizer.hpp"

using namespace gensar;

namespace {

// Independent Adam reference, transcribed directly from the update rule.
struct AdamRef {
    double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    std::vector<double> m, v;
    long t = 0;

    void step(std::vector<double>& x, const std::vector<double>& g) {
        if (m.empty()) {
            m.assign(x.size(), 0.0);
            v.assign(x.size(), 0.0);
        }
        ++t;
        for (std::size_t i = 0; i < x.size(); ++i) {
            m[i] = b1 * m[i] + (1 - b1) * g[i];
            v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
            double mhat = m[i] / (1 - std::pow(b1, t));
            double vhat = v[i] / (1 - std::pow(b2, t));
            x[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
};

}  // namespace

TEST_CASE("adam matches the reference over many steps") {
    std::vector<double> x{1.0, -2.0, 0.5};
    std::vector<double> g(3);
    std::vector<double> x_ref = x;
    AdamRef ref;
    Adam<double> opt(1e-3);
    opt.add(std::span<double>(x), std::span<double>(g));
    Rng rng(17);
    for (int s = 0; s < 50; ++s) {
        for (auto& gi : g) gi = normal<double>(rng, 0.0, 1.0);
        ref.step(x_ref, g);
        opt.step();
        for (std::size_t i = 0; i < x.size(); ++i)
            CHECK(x[i] == doctest::Approx(x_ref[i]).epsilon(1e-12));
    }
    CHECK(opt.step_count() == 50);
}

TEST_CASE("first step size is ~lr regardless of gradient scale") {
    for (double scale : {1e-6, 1.0, 1e6}) {
        std::vector<double> x{0.0};
        std::vector<double> g{scale};
        Adam<double> opt(0.01);
        opt.add(std::span<double>(x), std::span<double>(g));
        opt.step();
        CHECK(std::fabs(x[0] + 0.01) < 1e-4);  // moved by ~lr against the gradient
    }
}

TEST_CASE("adam drives a quadratic to its minimum") {
    std::vector<double> x{5.0};
    std::vector<double> g{0.0};
    Adam<double> opt(0.05);
    opt.add(std::span<double>(x), std::span<double>(g));
    for (int s = 0; s < 2000; ++s) {
        g[0] = 2 * (x[0] - 3.0);  // d/dx (x-3)^2
        opt.step();
    }
    CHECK(x[0] == doctest::Approx(3.0).epsilon(1e-3));
}

TEST_CASE("zero_grad clears registered gradient buffers") {
    std::vector<double> x{1.0};
    std::vector<double> g{42.0};
    Adam<double> opt;
    opt.add(std::span<double>(x), std::span<double>(g));
    opt.zero_grad();
    CHECK(g[0] == 0.0);
}

TEST_CASE("mismatched value/grad sizes are rejected") {
    std::vector<double> x{1.0, 2.0};
    std::vector<double> g{0.0};
    Adam<double> opt;
    CHECK_THROWS_AS(opt.add(std::span<double>(x), std::span<double>(g)),
                    DimensionError);
}

TEST_CASE("mlp registration updates every layer") {
    Rng rng(3);
    Mlp<double> mlp({2, 3, 1}, rng);
    double w0 = mlp.layers()[0].w.d[0];
    double w1 = mlp.layers()[1].w.d[0];
    Adam<double> opt(0.1);
    opt.add(mlp);
    for (auto& l : mlp.layers()) {
        std::fill(l.gw.d.begin(), l.gw.d.end(), 1.0);
        std::fill(l.gb.d.begin(), l.gb.d.end(), 1.0);
    }
    opt.step();
    CHECK(mlp.layers()[0].w.d[0] != w0);
    CHECK(mlp.layers()[1].w.d[0] != w1);
    CHECK(mlp.layers()[0].b[0] != 0.0);
}
