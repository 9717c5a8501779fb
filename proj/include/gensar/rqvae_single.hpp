#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "gensar/rqvae.hpp"

namespace gensar {

// Baseline RQ-VAE over a single embedding source (the "only semantic" /
// "only collaborative" identifier variants used in the collision study).
// L levels of K x d codebooks over one latent; training mirrors Rqvae.
template <typename T>
struct RqvaeSingleConfig {
    std::size_t d_in = 32;
    std::size_t d = 16;
    std::size_t L = 4;
    std::size_t K = 256;
    T alpha = T(0.25);
    int epochs = 50;
    std::size_t batch_size = 64;
    std::uint64_t seed = 1;
    T lr = T(1e-3);
};

template <typename T>
class RqvaeSingle {
public:
    explicit RqvaeSingle(const RqvaeSingleConfig<T>& cfg) : cfg_(cfg) {
        if (cfg_.L < 1 || cfg_.K < 2) throw ConfigError("rqvae_single: bad config");
        Rng rng(derive_seed(cfg_.seed, 0xC3));
        std::size_t h = 2 * cfg_.d;
        enc_ = Mlp<T>({cfg_.d_in, h, h, cfg_.d}, rng);
        dec_ = Mlp<T>({cfg_.d, h, h, cfg_.d_in}, rng);
        for (std::size_t i = 0; i < cfg_.L; ++i) {
            Mat<T> m(cfg_.K, cfg_.d);
            for (auto& x : m.d) x = normal<T>(rng, T(0), T(0.1));
            books_.push_back(std::move(m));
            g_books_.emplace_back(cfg_.K, cfg_.d);
            usage_.emplace_back(cfg_.K, 0);
        }
    }

    std::vector<std::size_t> quantize(const Vec<T>& v,
                                      std::vector<Vec<T>>* residuals = nullptr) const {
        Vec<T> z = enc_.forward(v);
        std::vector<std::size_t> codes;
        Vec<T> r = z;
        if (residuals) residuals->push_back(r);
        for (std::size_t i = 0; i < cfg_.L; ++i) {
            auto [idx, next] = quantize_level(r, books_[i]);
            codes.push_back(idx);
            r = std::move(next);
            if (residuals) residuals->push_back(r);
        }
        return codes;
    }

    void train(const std::vector<Vec<T>>& inputs) {
        Rng rng(derive_seed(cfg_.seed, 0xD4));
        // level-wise k-means init on first-batch residuals
        std::size_t n = std::min(inputs.size(), std::max(cfg_.batch_size, 4 * cfg_.K));
        std::vector<Vec<T>> res;
        res.reserve(n);
        for (std::size_t i = 0; i < n; ++i) res.push_back(enc_.forward(inputs[i]));
        for (std::size_t lvl = 0; lvl < cfg_.L; ++lvl) {
            books_[lvl] = detail::kmeans(res, cfg_.K, rng);
            for (auto& r : res) {
                auto [idx, next] = quantize_level(r, books_[lvl]);
                r = std::move(next);
            }
        }

        Adam<T> opt(cfg_.lr);
        opt.add(enc_);
        opt.add(dec_);
        for (std::size_t i = 0; i < cfg_.L; ++i)
            opt.add(std::span<T>(books_[i].d), std::span<T>(g_books_[i].d));

        std::vector<std::size_t> order(inputs.size());
        std::iota(order.begin(), order.end(), 0);
        for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
            std::shuffle(order.begin(), order.end(), rng);
            for (auto& u : usage_) std::fill(u.begin(), u.end(), 0);
            std::size_t pos = 0;
            while (pos < order.size()) {
                std::size_t bsz = std::min(cfg_.batch_size, order.size() - pos);
                opt.zero_grad();
                enc_.zero_grad();
                dec_.zero_grad();
                for (auto& g : g_books_) std::fill(g.d.begin(), g.d.end(), T(0));
                T w = T(1) / static_cast<T>(bsz);
                for (std::size_t b = 0; b < bsz; ++b)
                    step_item(inputs[order[pos + b]], w);
                opt.step();
                pos += bsz;
            }
            if (epoch + 1 < cfg_.epochs) reseed_dead(inputs, rng);
        }
    }

private:
    void step_item(const Vec<T>& v, T w) {
        MlpCache<T> ce, cd;
        Vec<T> z = enc_.forward(v, ce);
        std::vector<Vec<T>> residuals{z};
        std::vector<std::size_t> codes;
        for (std::size_t i = 0; i < cfg_.L; ++i) {
            auto [idx, next] = quantize_level(residuals.back(), books_[i]);
            codes.push_back(idx);
            ++usage_[i][idx];
            residuals.push_back(std::move(next));
        }
        Vec<T> zq(cfg_.d);
        for (std::size_t i = 0; i < cfg_.L; ++i) {
            const T* e = books_[i].row(codes[i]);
            for (std::size_t j = 0; j < cfg_.d; ++j) zq[j] += e[j];
        }
        Vec<T> vhat = dec_.forward(zq, cd);
        Vec<T> g_vhat(v.size());
        for (std::size_t i = 0; i < v.size(); ++i)
            g_vhat[i] = T(2) * (vhat[i] - v[i]) * w;
        Vec<T> g_zq = dec_.backward(g_vhat, cd);
        Vec<T> g_z = g_zq;  // straight-through
        for (std::size_t i = 0; i < cfg_.L; ++i) {
            auto lg = rq_level_loss(residuals[i], books_[i].row_vec(codes[i]), cfg_.alpha);
            T* ge = g_books_[i].row(codes[i]);
            for (std::size_t j = 0; j < cfg_.d; ++j) {
                ge[j] += lg.grad_embedding[j] * w;
                g_z[j] += lg.grad_residual[j] * w;
            }
            for (std::size_t p = 0; p < i; ++p) {
                T* gp = g_books_[p].row(codes[p]);
                for (std::size_t j = 0; j < cfg_.d; ++j)
                    gp[j] -= lg.grad_residual[j] * w;
            }
        }
        enc_.backward(g_z, ce);
    }

    void reseed_dead(const std::vector<Vec<T>>& inputs, Rng& rng) {
        std::size_t n = std::min(inputs.size(), 4 * cfg_.K);
        std::vector<std::vector<Vec<T>>> res(n);
        for (std::size_t i = 0; i < n; ++i) quantize(inputs[i], &res[i]);
        for (std::size_t lvl = 0; lvl < cfg_.L; ++lvl)
            for (std::size_t k = 0; k < cfg_.K; ++k) {
                if (usage_[lvl][k] > 0) continue;
                const Vec<T>& r = res[uniform_index(rng, n)][lvl];
                for (std::size_t j = 0; j < cfg_.d; ++j)
                    books_[lvl].at(k, j) = r[j] + normal<T>(rng, T(0), T(1e-4));
            }
    }

    RqvaeSingleConfig<T> cfg_;
    Mlp<T> enc_, dec_;
    std::vector<Mat<T>> books_, g_books_;
    std::vector<std::vector<std::uint64_t>> usage_;
};

}  // namespace gensar
