#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "gensar/checkpoint.hpp"
#include "gensar/error.hpp"
#include "gensar/kernels.hpp"
#include "gensar/mlp.hpp"
#include "gensar/optimizer.hpp"
#include "gensar/rng.hpp"
#include "gensar/tensor.hpp"

namespace gensar {

template <typename T>
struct ItemEmbeddingPair {
    std::uint64_t item = 0;
    Vec<T> semantic;
    Vec<T> collaborative;
};

template <typename T>
struct RqvaeConfig {
    std::size_t d_s = 32;     // semantic input dim
    std::size_t d_c = 32;     // collaborative input dim
    std::size_t d = 16;       // latent dim
    std::size_t L_m = 2;      // shared levels
    std::size_t L_n = 2;      // specific levels
    std::size_t K = 256;      // codes per level
    T alpha = T(0.25);        // commitment weight
    int epochs = 50;
    std::size_t batch_size = 64;
    std::uint64_t seed = 1;
    T lr = T(1e-3);

    void validate() const {
        if (L_m < 1 || L_n < 1) throw ConfigError("rqvae: L_m and L_n must be >= 1");
        if (K < 2) throw ConfigError("rqvae: K must be >= 2");
        if (d < 1) throw ConfigError("rqvae: latent dim must be >= 1");
        if (!(alpha > T(0))) throw ConfigError("rqvae: alpha must be > 0");
    }
};

// Shared codebooks hold 2d-dimensional codes, specific ones d-dimensional.
// Usage counters track assignments since the last reset.
template <typename T>
struct CodebookStack {
    std::vector<Mat<T>> shared;             // L_m of K x 2d
    std::vector<Mat<T>> semantic_specific;  // L_n of K x d
    std::vector<Mat<T>> collab_specific;    // L_n of K x d
    std::vector<Mat<T>> g_shared, g_sem, g_col;
    std::vector<std::vector<std::uint64_t>> use_shared, use_sem, use_col;

    CodebookStack() = default;

    CodebookStack(const RqvaeConfig<T>& cfg, Rng& rng) {
        auto init = [&rng](std::size_t k, std::size_t dim) {
            Mat<T> m(k, dim);
            for (auto& x : m.d) x = normal<T>(rng, T(0), T(0.1));
            return m;
        };
        for (std::size_t i = 0; i < cfg.L_m; ++i) {
            shared.push_back(init(cfg.K, 2 * cfg.d));
            g_shared.emplace_back(cfg.K, 2 * cfg.d);
            use_shared.emplace_back(cfg.K, 0);
        }
        for (std::size_t i = 0; i < cfg.L_n; ++i) {
            semantic_specific.push_back(init(cfg.K, cfg.d));
            collab_specific.push_back(init(cfg.K, cfg.d));
            g_sem.emplace_back(cfg.K, cfg.d);
            g_col.emplace_back(cfg.K, cfg.d);
            use_sem.emplace_back(cfg.K, 0);
            use_col.emplace_back(cfg.K, 0);
        }
    }

    void reset_usage() {
        for (auto& u : use_shared) std::fill(u.begin(), u.end(), 0);
        for (auto& u : use_sem) std::fill(u.begin(), u.end(), 0);
        for (auto& u : use_col) std::fill(u.begin(), u.end(), 0);
    }

    void zero_grad() {
        for (auto& g : g_shared) std::fill(g.d.begin(), g.d.end(), T(0));
        for (auto& g : g_sem) std::fill(g.d.begin(), g.d.end(), T(0));
        for (auto& g : g_col) std::fill(g.d.begin(), g.d.end(), T(0));
    }
};

// Full record of one item's pass through the quantizer: codes, every
// residual, and the assembled quantized embeddings.
template <typename T>
struct QuantizationTrace {
    std::vector<std::size_t> shared_codes;              // L_m
    std::vector<std::size_t> sem_codes, col_codes;      // L_n each
    std::vector<Vec<T>> shared_residuals;               // r_0^m .. r_{L_m}^m
    std::vector<Vec<T>> sem_residuals, col_residuals;   // r_0 .. r_{L_n}
    Vec<T> zq_s, zq_c;
};

// One residual-quantization step: nearest code by squared L2 (lowest index
// wins ties), new residual = residual - selected embedding.
template <typename T>
inline std::pair<std::size_t, Vec<T>> quantize_level(const Vec<T>& residual,
                                                     const Mat<T>& codebook) {
    if (codebook.rows == 0) throw ConfigError("quantize_level: empty codebook");
    if (codebook.cols != residual.size())
        throw DimensionError("quantize_level: residual dim " +
                             std::to_string(residual.size()) + " vs codebook dim " +
                             std::to_string(codebook.cols));
    std::size_t idx = kernels::nearest_code_serial(residual.data(), codebook.d.data(),
                                                   codebook.rows, codebook.cols);
    Vec<T> next(residual.size());
    const T* e = codebook.row(idx);
    for (std::size_t i = 0; i < residual.size(); ++i) next[i] = residual[i] - e[i];
    return {idx, std::move(next)};
}

// Shared levels quantize the concatenated latent [z_s; z_c]; the leftover
// residual is split into halves that feed the specific levels.
template <typename T>
inline QuantizationTrace<T> quantize_item(const RqvaeConfig<T>& cfg,
                                          const CodebookStack<T>& stack,
                                          const Vec<T>& z_s, const Vec<T>& z_c) {
    if (z_s.size() != cfg.d || z_c.size() != cfg.d)
        throw DimensionError("quantize_item: latent dim mismatch");
    QuantizationTrace<T> tr;
    tr.shared_residuals.push_back(concat(z_s, z_c));
    for (std::size_t i = 0; i < cfg.L_m; ++i) {
        auto [idx, next] = quantize_level(tr.shared_residuals.back(), stack.shared[i]);
        tr.shared_codes.push_back(idx);
        tr.shared_residuals.push_back(std::move(next));
    }
    const Vec<T>& last = tr.shared_residuals.back();
    tr.sem_residuals.push_back(slice(last, 0, cfg.d));
    tr.col_residuals.push_back(slice(last, cfg.d, 2 * cfg.d));
    for (std::size_t i = 0; i < cfg.L_n; ++i) {
        auto [si, sn] = quantize_level(tr.sem_residuals.back(), stack.semantic_specific[i]);
        tr.sem_codes.push_back(si);
        tr.sem_residuals.push_back(std::move(sn));
        auto [ci, cn] = quantize_level(tr.col_residuals.back(), stack.collab_specific[i]);
        tr.col_codes.push_back(ci);
        tr.col_residuals.push_back(std::move(cn));
    }
    return tr;
}

// Quantized embeddings: halves of the shared codes plus the specific codes.
template <typename T>
inline std::pair<Vec<T>, Vec<T>> assemble_quantized(const RqvaeConfig<T>& cfg,
                                                    const CodebookStack<T>& stack,
                                                    const QuantizationTrace<T>& tr) {
    Vec<T> zq_s(cfg.d), zq_c(cfg.d);
    for (std::size_t i = 0; i < cfg.L_m; ++i) {
        const T* e = stack.shared[i].row(tr.shared_codes[i]);
        for (std::size_t j = 0; j < cfg.d; ++j) {
            zq_s[j] += e[j];
            zq_c[j] += e[cfg.d + j];
        }
    }
    for (std::size_t i = 0; i < cfg.L_n; ++i) {
        const T* es = stack.semantic_specific[i].row(tr.sem_codes[i]);
        const T* ec = stack.collab_specific[i].row(tr.col_codes[i]);
        for (std::size_t j = 0; j < cfg.d; ++j) {
            zq_s[j] += es[j];
            zq_c[j] += ec[j];
        }
    }
    return {std::move(zq_s), std::move(zq_c)};
}

template <typename T>
struct RqvaeLosses {
    double recon = 0, rq_m = 0, rq_s = 0, rq_c = 0;
    double total() const { return recon + rq_m + rq_s + rq_c; }
};

// Quantization loss of one level as written: ||sg[r] - e||^2 + a||r - sg[e]||^2.
// Value collapses to (1+a)||r - e||^2; the two gradients differ by sg placement.
template <typename T>
struct RqLevelGrads {
    double value = 0;
    Vec<T> grad_residual;   // 2a(r - e)
    Vec<T> grad_embedding;  // 2(e - r)
};

template <typename T>
inline RqLevelGrads<T> rq_level_loss(const Vec<T>& residual, const Vec<T>& embedding,
                                     T alpha) {
    check_same_dim(residual, embedding, "rq_level_loss");
    RqLevelGrads<T> out;
    out.grad_residual = Vec<T>(residual.size());
    out.grad_embedding = Vec<T>(residual.size());
    double sq = 0;
    for (std::size_t i = 0; i < residual.size(); ++i) {
        T diff = residual[i] - embedding[i];
        sq += static_cast<double>(diff) * static_cast<double>(diff);
        out.grad_residual[i] = T(2) * alpha * diff;
        out.grad_embedding[i] = T(-2) * diff;
    }
    out.value = (1.0 + static_cast<double>(alpha)) * sq;
    return out;
}

template <typename T>
struct ItemIdentifierCodes {
    std::uint64_t item = 0;
    std::vector<std::size_t> shared;    // c_1^m .. c_{L_m}^m
    std::vector<std::size_t> semantic;  // c_1^s .. c_{L_n}^s
    std::vector<std::size_t> collab;    // c_1^c .. c_{L_n}^c

    // Identifier concatenations; both carry the same shared prefix.
    std::vector<std::size_t> semantic_identifier() const {
        std::vector<std::size_t> out = shared;
        out.insert(out.end(), semantic.begin(), semantic.end());
        return out;
    }
    std::vector<std::size_t> collab_identifier() const {
        std::vector<std::size_t> out = shared;
        out.insert(out.end(), collab.begin(), collab.end());
        return out;
    }
};

template <typename T>
struct RqvaeTrainLog {
    std::vector<double> total_loss;  // entry 0 is the pre-training evaluation
    std::vector<double> recon_mse;   // same indexing
    std::vector<double> utilization_per_level;  // last-epoch usage fractions
};

namespace detail {

// Lloyd's k-means with distinct random-point init; returns K centroids.
template <typename T>
inline Mat<T> kmeans(const std::vector<Vec<T>>& points, std::size_t k, Rng& rng,
                     int iters = 10) {
    std::size_t dim = points.front().size();
    Mat<T> centers(k, dim);
    std::vector<std::size_t> perm(points.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t c = 0; c < k; ++c) {
        const Vec<T>& src = points[perm[c % points.size()]];
        for (std::size_t j = 0; j < dim; ++j)
            centers.at(c, j) = src[j] + (c >= points.size()
                                             ? normal<T>(rng, T(0), T(1e-3))
                                             : T(0));
    }
    std::vector<std::size_t> assign(points.size());
    for (int it = 0; it < iters; ++it) {
        for (std::size_t p = 0; p < points.size(); ++p)
            assign[p] = kernels::nearest_code_serial(points[p].data(), centers.d.data(),
                                                     k, dim);
        Mat<double> sums(k, dim);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t p = 0; p < points.size(); ++p) {
            ++counts[assign[p]];
            for (std::size_t j = 0; j < dim; ++j)
                sums.at(assign[p], j) += static_cast<double>(points[p][j]);
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // re-seed empty cluster to a random point
                const Vec<T>& src = points[uniform_index(rng, points.size())];
                for (std::size_t j = 0; j < dim; ++j)
                    centers.at(c, j) = src[j] + normal<T>(rng, T(0), T(1e-3));
            } else {
                for (std::size_t j = 0; j < dim; ++j)
                    centers.at(c, j) =
                        static_cast<T>(sums.at(c, j) / static_cast<double>(counts[c]));
            }
        }
    }
    return centers;
}

}  // namespace detail

// Joint RQ-VAE: two encoders into a shared latent, shared + specific
// residual codebooks, two decoders, trained on reconstruction plus the
// quantization losses.
template <typename T>
class Rqvae {
public:
    Rqvae(const RqvaeConfig<T>& cfg) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(derive_seed(cfg_.seed, 0xA1));
        std::size_t h = 2 * cfg_.d;
        enc_s_ = Mlp<T>({cfg_.d_s, h, h, cfg_.d}, rng);
        enc_c_ = Mlp<T>({cfg_.d_c, h, h, cfg_.d}, rng);
        dec_s_ = Mlp<T>({cfg_.d, h, h, cfg_.d_s}, rng);
        dec_c_ = Mlp<T>({cfg_.d, h, h, cfg_.d_c}, rng);
        stack_ = CodebookStack<T>(cfg_, rng);
    }

    const RqvaeConfig<T>& config() const { return cfg_; }
    CodebookStack<T>& stack() { return stack_; }
    const CodebookStack<T>& stack() const { return stack_; }
    Mlp<T>& encoder_s() { return enc_s_; }
    Mlp<T>& encoder_c() { return enc_c_; }
    Mlp<T>& decoder_s() { return dec_s_; }
    Mlp<T>& decoder_c() { return dec_c_; }

    std::pair<Vec<T>, Vec<T>> encode(const Vec<T>& v_s, const Vec<T>& v_c) const {
        return {enc_s_.forward(v_s), enc_c_.forward(v_c)};
    }

    struct Forward {
        Vec<T> z_s, z_c;
        QuantizationTrace<T> trace;
        Vec<T> vhat_s, vhat_c;
        RqvaeLosses<T> losses;
        MlpCache<T> c_enc_s, c_enc_c, c_dec_s, c_dec_c;
    };

    Forward forward_item(const ItemEmbeddingPair<T>& item, bool count_usage = false) {
        Forward f;
        f.z_s = enc_s_.forward(item.semantic, f.c_enc_s);
        f.z_c = enc_c_.forward(item.collaborative, f.c_enc_c);
        f.trace = quantize_item(cfg_, stack_, f.z_s, f.z_c);
        auto [zq_s, zq_c] = assemble_quantized(cfg_, stack_, f.trace);
        f.trace.zq_s = zq_s;
        f.trace.zq_c = zq_c;
        f.vhat_s = dec_s_.forward(zq_s, f.c_dec_s);
        f.vhat_c = dec_c_.forward(zq_c, f.c_dec_c);
        f.losses.recon = squared_distance(item.semantic, f.vhat_s) +
                         squared_distance(item.collaborative, f.vhat_c);
        for (std::size_t i = 0; i < cfg_.L_m; ++i)
            f.losses.rq_m += (1.0 + static_cast<double>(cfg_.alpha)) *
                             squared_distance(f.trace.shared_residuals[i],
                                              stack_.shared[i].row_vec(f.trace.shared_codes[i]));
        for (std::size_t i = 0; i < cfg_.L_n; ++i) {
            f.losses.rq_s +=
                (1.0 + static_cast<double>(cfg_.alpha)) *
                squared_distance(f.trace.sem_residuals[i],
                                 stack_.semantic_specific[i].row_vec(f.trace.sem_codes[i]));
            f.losses.rq_c +=
                (1.0 + static_cast<double>(cfg_.alpha)) *
                squared_distance(f.trace.col_residuals[i],
                                 stack_.collab_specific[i].row_vec(f.trace.col_codes[i]));
        }
        if (!std::isfinite(f.losses.total()))
            throw NumericError("rqvae: non-finite loss");
        if (count_usage) {
            for (std::size_t i = 0; i < cfg_.L_m; ++i)
                ++stack_.use_shared[i][f.trace.shared_codes[i]];
            for (std::size_t i = 0; i < cfg_.L_n; ++i) {
                ++stack_.use_sem[i][f.trace.sem_codes[i]];
                ++stack_.use_col[i][f.trace.col_codes[i]];
            }
        }
        return f;
    }

    // Accumulates gradients for one item, scaled by `weight` (1/batch for
    // batch-mean losses). Reconstruction gradients reach the encoders via the
    // straight-through estimator; codebooks are trained by the RQ terms only,
    // with stop-gradient placement exactly as the loss is written.
    void backward_item(const ItemEmbeddingPair<T>& item, Forward& f, T weight) {
        // decoder + straight-through path
        Vec<T> g_vs(cfg_.d_s), g_vc(cfg_.d_c);
        for (std::size_t i = 0; i < cfg_.d_s; ++i)
            g_vs[i] = T(2) * (f.vhat_s[i] - item.semantic[i]) * weight;
        for (std::size_t i = 0; i < cfg_.d_c; ++i)
            g_vc[i] = T(2) * (f.vhat_c[i] - item.collaborative[i]) * weight;
        Vec<T> g_zq_s = dec_s_.backward(g_vs, f.c_dec_s);
        Vec<T> g_zq_c = dec_c_.backward(g_vc, f.c_dec_c);

        // encoder-side gradient: straight-through copy of the quantized
        // gradient plus the commitment terms accumulated below
        Vec<T> g_z_s = g_zq_s;
        Vec<T> g_z_c = g_zq_c;

        // shared path; commitment at level i reaches the encoder and every
        // earlier shared embedding through the residual recursion
        Vec<T> g_r0m(2 * cfg_.d);
        for (std::size_t i = 0; i < cfg_.L_m; ++i) {
            auto lg = rq_level_loss(f.trace.shared_residuals[i],
                                    stack_.shared[i].row_vec(f.trace.shared_codes[i]),
                                    cfg_.alpha);
            T* ge = stack_.g_shared[i].row(f.trace.shared_codes[i]);
            for (std::size_t j = 0; j < 2 * cfg_.d; ++j) {
                ge[j] += lg.grad_embedding[j] * weight;
                g_r0m[j] += lg.grad_residual[j] * weight;
            }
            for (std::size_t p = 0; p < i; ++p) {
                T* gp = stack_.g_shared[p].row(f.trace.shared_codes[p]);
                for (std::size_t j = 0; j < 2 * cfg_.d; ++j)
                    gp[j] -= lg.grad_residual[j] * weight;
            }
        }

        // specific paths; their residual gradients flow back into the two
        // halves of r_{L_m}^m, i.e. into the encoders and shared embeddings
        Vec<T> g_r0s(cfg_.d), g_r0c(cfg_.d);
        for (std::size_t i = 0; i < cfg_.L_n; ++i) {
            auto ls = rq_level_loss(f.trace.sem_residuals[i],
                                    stack_.semantic_specific[i].row_vec(f.trace.sem_codes[i]),
                                    cfg_.alpha);
            auto lc = rq_level_loss(f.trace.col_residuals[i],
                                    stack_.collab_specific[i].row_vec(f.trace.col_codes[i]),
                                    cfg_.alpha);
            T* ges = stack_.g_sem[i].row(f.trace.sem_codes[i]);
            T* gec = stack_.g_col[i].row(f.trace.col_codes[i]);
            for (std::size_t j = 0; j < cfg_.d; ++j) {
                ges[j] += ls.grad_embedding[j] * weight;
                gec[j] += lc.grad_embedding[j] * weight;
                g_r0s[j] += ls.grad_residual[j] * weight;
                g_r0c[j] += lc.grad_residual[j] * weight;
            }
            for (std::size_t p = 0; p < i; ++p) {
                T* gps = stack_.g_sem[p].row(f.trace.sem_codes[p]);
                T* gpc = stack_.g_col[p].row(f.trace.col_codes[p]);
                for (std::size_t j = 0; j < cfg_.d; ++j) {
                    gps[j] -= ls.grad_residual[j] * weight;
                    gpc[j] -= lc.grad_residual[j] * weight;
                }
            }
        }
        for (std::size_t j = 0; j < cfg_.d; ++j) {
            g_r0m[j] += g_r0s[j];
            g_r0m[cfg_.d + j] += g_r0c[j];
        }
        // the specific residual gradients also pull on every shared embedding
        for (std::size_t p = 0; p < cfg_.L_m; ++p) {
            T* gp = stack_.g_shared[p].row(f.trace.shared_codes[p]);
            for (std::size_t j = 0; j < cfg_.d; ++j) {
                gp[j] -= g_r0s[j];
                gp[cfg_.d + j] -= g_r0c[j];
            }
        }
        for (std::size_t j = 0; j < cfg_.d; ++j) {
            g_z_s[j] += g_r0m[j];
            g_z_c[j] += g_r0m[cfg_.d + j];
        }
        enc_s_.backward(g_z_s, f.c_enc_s);
        enc_c_.backward(g_z_c, f.c_enc_c);
    }

    RqvaeTrainLog<T> train(const std::vector<ItemEmbeddingPair<T>>& items) {
        if (items.empty()) throw ConfigError("rqvae train: no items");
        for (const auto& it : items)
            if (!it.semantic.finite() || !it.collaborative.finite())
                throw NumericError("rqvae train: non-finite input embedding");
        warn_if_degenerate(items);

        RqvaeTrainLog<T> log;
        if (cfg_.epochs <= 0) {
            auto [loss, mse] = evaluate(items);
            log.total_loss.push_back(loss);
            log.recon_mse.push_back(mse);
            log.utilization_per_level = utilization();
            return log;
        }

        Rng rng(derive_seed(cfg_.seed, 0xB2));
        kmeans_init(items, rng);
        {
            auto [loss, mse] = evaluate(items);
            log.total_loss.push_back(loss);
            log.recon_mse.push_back(mse);
        }

        Adam<T> opt(cfg_.lr);
        opt.add(enc_s_);
        opt.add(enc_c_);
        opt.add(dec_s_);
        opt.add(dec_c_);
        for (std::size_t i = 0; i < cfg_.L_m; ++i)
            opt.add(std::span<T>(stack_.shared[i].d), std::span<T>(stack_.g_shared[i].d));
        for (std::size_t i = 0; i < cfg_.L_n; ++i) {
            opt.add(std::span<T>(stack_.semantic_specific[i].d),
                    std::span<T>(stack_.g_sem[i].d));
            opt.add(std::span<T>(stack_.collab_specific[i].d),
                    std::span<T>(stack_.g_col[i].d));
        }

        std::vector<std::size_t> order(items.size());
        std::iota(order.begin(), order.end(), 0);
        for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
            std::shuffle(order.begin(), order.end(), rng);
            stack_.reset_usage();
            double epoch_loss = 0, epoch_mse = 0;
            std::size_t pos = 0;
            while (pos < order.size()) {
                std::size_t bsz = std::min(cfg_.batch_size, order.size() - pos);
                opt.zero_grad();
                stack_.zero_grad();
                enc_s_.zero_grad();
                enc_c_.zero_grad();
                dec_s_.zero_grad();
                dec_c_.zero_grad();
                T w = T(1) / static_cast<T>(bsz);
                for (std::size_t b = 0; b < bsz; ++b) {
                    const auto& it = items[order[pos + b]];
                    Forward f = forward_item(it, /*count_usage=*/true);
                    epoch_loss += f.losses.total();
                    epoch_mse += f.losses.recon;
                    backward_item(it, f, w);
                }
                opt.step();
                pos += bsz;
            }
            log.total_loss.push_back(epoch_loss / static_cast<double>(items.size()));
            log.recon_mse.push_back(epoch_mse / static_cast<double>(items.size()));
            if (epoch + 1 < cfg_.epochs) reseed_dead_codes(items, rng);
        }
        log.utilization_per_level = utilization();
        return log;
    }

    std::vector<ItemIdentifierCodes<T>> export_identifiers(
        const std::vector<ItemEmbeddingPair<T>>& items) const {
        std::vector<ItemIdentifierCodes<T>> out;
        out.reserve(items.size());
        for (const auto& it : items) {
            auto [z_s, z_c] = encode(it.semantic, it.collaborative);
            QuantizationTrace<T> tr = quantize_item(cfg_, stack_, z_s, z_c);
            ItemIdentifierCodes<T> id;
            id.item = it.item;
            id.shared = tr.shared_codes;
            id.semantic = tr.sem_codes;
            id.collab = tr.col_codes;
            out.push_back(std::move(id));
        }
        return out;
    }

    // (mean total loss, mean reconstruction MSE) over all items; read-only.
    std::pair<double, double> evaluate(const std::vector<ItemEmbeddingPair<T>>& items) {
        double loss = 0, mse = 0;
        for (const auto& it : items) {
            Forward f = forward_item(it);
            loss += f.losses.total();
            mse += f.losses.recon;
        }
        return {loss / static_cast<double>(items.size()),
                mse / static_cast<double>(items.size())};
    }

    // Fraction of codes used per level, ordered shared, semantic, collab.
    std::vector<double> utilization() const {
        std::vector<double> out;
        auto frac = [](const std::vector<std::uint64_t>& u) {
            std::size_t used = 0;
            for (auto c : u) used += (c > 0);
            return static_cast<double>(used) / static_cast<double>(u.size());
        };
        for (const auto& u : stack_.use_shared) out.push_back(frac(u));
        for (const auto& u : stack_.use_sem) out.push_back(frac(u));
        for (const auto& u : stack_.use_col) out.push_back(frac(u));
        return out;
    }

    void save(const std::string& path) const {
        CheckpointWriter w(path);
        auto add_mat = [&w](const std::string& name, const Mat<T>& m) {
            std::vector<float> data(m.d.size());
            for (std::size_t i = 0; i < data.size(); ++i)
                data[i] = static_cast<float>(m.d[i]);
            w.add(name, {static_cast<std::uint32_t>(m.rows),
                         static_cast<std::uint32_t>(m.cols)},
                  data.data());
        };
        auto add_mlp = [&add_mat](const std::string& pfx, const Mlp<T>& mlp) {
            for (std::size_t l = 0; l < mlp.layers().size(); ++l) {
                const auto& layer = mlp.layers()[l];
                add_mat(pfx + "." + std::to_string(l) + ".w", layer.w);
                Mat<T> b(1, layer.b.size());
                for (std::size_t i = 0; i < layer.b.size(); ++i) b.at(0, i) = layer.b[i];
                add_mat(pfx + "." + std::to_string(l) + ".b", b);
            }
        };
        add_mlp("enc_s", enc_s_);
        add_mlp("enc_c", enc_c_);
        add_mlp("dec_s", dec_s_);
        add_mlp("dec_c", dec_c_);
        for (std::size_t i = 0; i < cfg_.L_m; ++i)
            add_mat("shared." + std::to_string(i), stack_.shared[i]);
        for (std::size_t i = 0; i < cfg_.L_n; ++i) {
            add_mat("sem." + std::to_string(i), stack_.semantic_specific[i]);
            add_mat("col." + std::to_string(i), stack_.collab_specific[i]);
        }
    }

    void load(const std::string& path) {
        auto tensors = read_checkpoint(path);
        auto get = [&tensors, &path](const std::string& name) -> const CheckpointTensor& {
            auto it = tensors.find(name);
            if (it == tensors.end())
                throw ConfigError("checkpoint " + path + " missing tensor " + name);
            return it->second;
        };
        auto load_mat = [&get](const std::string& name, Mat<T>& m) {
            const auto& t = get(name);
            if (t.data.size() != m.d.size())
                throw ConfigError("checkpoint tensor " + name + " has wrong size");
            for (std::size_t i = 0; i < m.d.size(); ++i) m.d[i] = static_cast<T>(t.data[i]);
        };
        auto load_mlp = [&get, &load_mat](const std::string& pfx, Mlp<T>& mlp) {
            for (std::size_t l = 0; l < mlp.layers().size(); ++l) {
                auto& layer = mlp.layers()[l];
                load_mat(pfx + "." + std::to_string(l) + ".w", layer.w);
                const auto& tb = get(pfx + "." + std::to_string(l) + ".b");
                if (tb.data.size() != layer.b.size())
                    throw ConfigError("checkpoint bias size mismatch in " + pfx);
                for (std::size_t i = 0; i < layer.b.size(); ++i)
                    layer.b[i] = static_cast<T>(tb.data[i]);
            }
        };
        load_mlp("enc_s", enc_s_);
        load_mlp("enc_c", enc_c_);
        load_mlp("dec_s", dec_s_);
        load_mlp("dec_c", dec_c_);
        for (std::size_t i = 0; i < cfg_.L_m; ++i)
            load_mat("shared." + std::to_string(i), stack_.shared[i]);
        for (std::size_t i = 0; i < cfg_.L_n; ++i) {
            load_mat("sem." + std::to_string(i), stack_.semantic_specific[i]);
            load_mat("col." + std::to_string(i), stack_.collab_specific[i]);
        }
    }

private:
    void warn_if_degenerate(const std::vector<ItemEmbeddingPair<T>>& items) {
        bool all_same = true;
        for (std::size_t i = 1; i < items.size() && all_same; ++i)
            all_same = squared_distance(items[i].semantic, items[0].semantic) == 0 &&
                       squared_distance(items[i].collaborative, items[0].collaborative) == 0;
        if (all_same && items.size() > 1)
            std::fprintf(stderr,
                         "warning: rqvae training input is degenerate "
                         "(all embeddings identical); proceeding\n");
    }

    // Level-wise k-means on the residual distribution of the first batch.
    void kmeans_init(const std::vector<ItemEmbeddingPair<T>>& items, Rng& rng) {
        std::size_t n = std::min(items.size(), std::max(cfg_.batch_size, 4 * cfg_.K));
        std::vector<Vec<T>> shared_res;
        shared_res.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            auto [z_s, z_c] = encode(items[i].semantic, items[i].collaborative);
            shared_res.push_back(concat(z_s, z_c));
        }
        for (std::size_t lvl = 0; lvl < cfg_.L_m; ++lvl) {
            stack_.shared[lvl] = detail::kmeans(shared_res, cfg_.K, rng);
            for (auto& r : shared_res) {
                auto [idx, next] = quantize_level(r, stack_.shared[lvl]);
                r = std::move(next);
            }
        }
        std::vector<Vec<T>> sem_res, col_res;
        sem_res.reserve(n);
        col_res.reserve(n);
        for (const auto& r : shared_res) {
            sem_res.push_back(slice(r, 0, cfg_.d));
            col_res.push_back(slice(r, cfg_.d, 2 * cfg_.d));
        }
        for (std::size_t lvl = 0; lvl < cfg_.L_n; ++lvl) {
            stack_.semantic_specific[lvl] = detail::kmeans(sem_res, cfg_.K, rng);
            for (auto& r : sem_res) {
                auto [idx, next] = quantize_level(r, stack_.semantic_specific[lvl]);
                r = std::move(next);
            }
            stack_.collab_specific[lvl] = detail::kmeans(col_res, cfg_.K, rng);
            for (auto& r : col_res) {
                auto [idx, next] = quantize_level(r, stack_.collab_specific[lvl]);
                r = std::move(next);
            }
        }
    }

    // Any code unused over the last epoch is re-seeded to a sampled residual.
    void reseed_dead_codes(const std::vector<ItemEmbeddingPair<T>>& items, Rng& rng) {
        std::size_t n = std::min(items.size(), 4 * cfg_.K);
        std::vector<QuantizationTrace<T>> traces;
        traces.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            auto [z_s, z_c] = encode(items[i].semantic, items[i].collaborative);
            traces.push_back(quantize_item(cfg_, stack_, z_s, z_c));
        }
        auto reseed = [&](Mat<T>& codebook, const std::vector<std::uint64_t>& usage,
                          auto residual_of) {
            for (std::size_t k = 0; k < codebook.rows; ++k) {
                if (usage[k] > 0) continue;
                const Vec<T>& r = residual_of(traces[uniform_index(rng, traces.size())]);
                for (std::size_t j = 0; j < codebook.cols; ++j)
                    codebook.at(k, j) = r[j] + normal<T>(rng, T(0), T(1e-4));
            }
        };
        for (std::size_t lvl = 0; lvl < cfg_.L_m; ++lvl)
            reseed(stack_.shared[lvl], stack_.use_shared[lvl],
                   [lvl](const QuantizationTrace<T>& t) -> const Vec<T>& {
                       return t.shared_residuals[lvl];
                   });
        for (std::size_t lvl = 0; lvl < cfg_.L_n; ++lvl) {
            reseed(stack_.semantic_specific[lvl], stack_.use_sem[lvl],
                   [lvl](const QuantizationTrace<T>& t) -> const Vec<T>& {
                       return t.sem_residuals[lvl];
                   });
            reseed(stack_.collab_specific[lvl], stack_.use_col[lvl],
                   [lvl](const QuantizationTrace<T>& t) -> const Vec<T>& {
                       return t.col_residuals[lvl];
                   });
        }
    }

    RqvaeConfig<T> cfg_;
    Mlp<T> enc_s_, enc_c_, dec_s_, dec_c_;
    CodebookStack<T> stack_;
};

}  // namespace gensar
