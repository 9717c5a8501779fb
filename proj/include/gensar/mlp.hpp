#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "gensar/error.hpp"
#include "gensar/rng.hpp"
#include "gensar/tensor.hpp"

namespace gensar {

// Fixed-topology MLP: affine layers with ReLU between them (none after the
// last). Parameters and gradient buffers live side by side; backward fills
// the gradient buffers with exact analytic derivatives.

template <typename T>
struct AffineLayer {
    Mat<T> w;   // out x in
    Vec<T> b;   // out
    Mat<T> gw;
    Vec<T> gb;

    AffineLayer(std::size_t out, std::size_t in)
        : w(out, in), b(out), gw(out, in), gb(out) {}
};

// Per-call activation cache so frozen-parameter forward stays thread-safe.
template <typename T>
struct MlpCache {
    std::vector<Vec<T>> inputs;      // input to each affine layer
    std::vector<Vec<T>> pre_relu;    // affine output before the nonlinearity
};

template <typename T>
class Mlp {
public:
    Mlp() = default;

    // dims = [input, hidden..., output]
    Mlp(const std::vector<std::size_t>& dims, Rng& rng) {
        if (dims.size() < 2) throw ConfigError("mlp needs at least one layer");
        for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
            layers_.emplace_back(dims[i + 1], dims[i]);
            auto& l = layers_.back();
            // He init for the ReLU stack
            T scale = static_cast<T>(std::sqrt(2.0 / static_cast<double>(dims[i])));
            for (auto& x : l.w.d) x = normal<T>(rng, T(0), scale);
        }
        input_dim_ = dims.front();
        output_dim_ = dims.back();
    }

    std::size_t input_dim() const { return input_dim_; }
    std::size_t output_dim() const { return output_dim_; }
    std::vector<AffineLayer<T>>& layers() { return layers_; }
    const std::vector<AffineLayer<T>>& layers() const { return layers_; }

    Vec<T> forward(const Vec<T>& x) const {
        MlpCache<T> scratch;
        return forward(x, scratch);
    }

    Vec<T> forward(const Vec<T>& x, MlpCache<T>& cache) const {
        if (x.size() != input_dim_)
            throw DimensionError("mlp forward: input dim " + std::to_string(x.size()) +
                                 " != " + std::to_string(input_dim_));
        cache.inputs.clear();
        cache.pre_relu.clear();
        Vec<T> h = x;
        for (std::size_t li = 0; li < layers_.size(); ++li) {
            const auto& l = layers_[li];
            cache.inputs.push_back(h);
            Vec<T> z = matvec(l.w, h);
            for (std::size_t i = 0; i < z.size(); ++i) z[i] += l.b[i];
            cache.pre_relu.push_back(z);
            if (li + 1 < layers_.size()) {
                for (auto& v : z.d) v = v > T(0) ? v : T(0);
            }
            h = std::move(z);
        }
        return h;
    }

    // Accumulates parameter gradients (does not zero them) and returns the
    // gradient with respect to the input.
    Vec<T> backward(const Vec<T>& upstream, const MlpCache<T>& cache) {
        if (cache.inputs.size() != layers_.size())
            throw NumericError("mlp backward called without a matching forward");
        if (upstream.size() != output_dim_)
            throw DimensionError("mlp backward: upstream dim mismatch");
        Vec<T> g = upstream;
        for (std::size_t li = layers_.size(); li-- > 0;) {
            auto& l = layers_[li];
            if (li + 1 < layers_.size()) {
                const Vec<T>& z = cache.pre_relu[li];
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (z[i] <= T(0)) g[i] = T(0);
            }
            const Vec<T>& in = cache.inputs[li];
            for (std::size_t r = 0; r < l.w.rows; ++r) {
                l.gb[r] += g[r];
                T* gwr = l.gw.row(r);
                for (std::size_t c = 0; c < l.w.cols; ++c) gwr[c] += g[r] * in[c];
            }
            Vec<T> gin(l.w.cols);
            for (std::size_t r = 0; r < l.w.rows; ++r) {
                const T* wr = l.w.row(r);
                for (std::size_t c = 0; c < l.w.cols; ++c) gin[c] += g[r] * wr[c];
            }
            g = std::move(gin);
        }
        return g;
    }

    void zero_grad() {
        for (auto& l : layers_) {
            std::fill(l.gw.d.begin(), l.gw.d.end(), T(0));
            std::fill(l.gb.d.begin(), l.gb.d.end(), T(0));
        }
    }

private:
    std::vector<AffineLayer<T>> layers_;
    std::size_t input_dim_ = 0;
    std::size_t output_dim_ = 0;
};

// Value-transparent; its gradient semantics (zero flow upstream) are
// realized analytically wherever a loss places it.
template <typename T>
inline Vec<T> stop_gradient(const Vec<T>& x) {
    return x;
}

}  // namespace gensar
