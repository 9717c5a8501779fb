#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "gensar/checkpoint.hpp"
#include "gensar/error.hpp"
#include "gensar/kernels.hpp"
#include "gensar/optimizer.hpp"
#include "gensar/rng.hpp"
#include "gensar/tensor.hpp"

namespace gensar {

template <typename T>
struct SeqModelConfig {
    std::size_t vocab = 0;
    std::size_t dim = 64;
    std::size_t n_enc = 2;
    std::size_t n_dec = 2;
    std::size_t heads = 4;
    std::size_t ffn = 128;
    std::size_t max_src = 160;
    std::size_t max_tgt = 16;
    T dropout = T(0);
    T lr = T(1e-3);
    int epochs = 10;
    std::size_t batch = 32;
    std::uint64_t seed = 1;

    void validate() const {
        if (vocab == 0) throw ConfigError("seqmodel: vocab size is zero");
        if (dim % heads != 0) throw ConfigError("seqmodel: dim not divisible by heads");
        if (dropout < T(0) || dropout >= T(1))
            throw ConfigError("seqmodel: dropout must be in [0,1)");
    }
};

// Padded batch of (instruction, response) pairs; pad positions are excluded
// from the loss via the masks.
struct TokenBatch {
    std::vector<std::vector<int>> src;     // unpadded, per example
    std::vector<std::vector<int>> tgt_in;  // bos + response
    std::vector<std::vector<int>> tgt_out; // response + eos
};

namespace nn {

// Flat parameter storage: every tensor is a named view into one contiguous
// buffer, so slot-local gradient accumulators are plain vectors.
template <typename T>
class FlatParams {
public:
    struct Spec {
        std::string name;
        std::size_t rows, cols, offset;
    };

    std::size_t add(std::string name, std::size_t rows, std::size_t cols) {
        specs_.push_back({std::move(name), rows, cols, total_});
        total_ += rows * cols;
        return specs_.size() - 1;
    }
    void allocate() { value_.assign(total_, T(0)); }

    MatView<T> value(std::size_t idx) {
        const auto& s = specs_[idx];
        return {value_.data() + s.offset, s.rows, s.cols};
    }
    MatView<const T> value(std::size_t idx) const {
        const auto& s = specs_[idx];
        return {value_.data() + s.offset, s.rows, s.cols};
    }
    MatView<T> in_buffer(std::size_t idx, T* buf) const {
        const auto& s = specs_[idx];
        return {buf + s.offset, s.rows, s.cols};
    }
    std::size_t total() const { return total_; }
    std::vector<T>& data() { return value_; }
    const std::vector<T>& data() const { return value_; }
    const std::vector<Spec>& specs() const { return specs_; }

private:
    std::vector<Spec> specs_;
    std::vector<T> value_;
    std::size_t total_ = 0;
};

template <typename T>
struct LnCache {
    std::vector<T> rstd;
    Mat<T> xhat;
};

constexpr double kLnEps = 1e-5;

template <typename T, typename MG, typename MB>
inline Mat<T> ln_forward(const Mat<T>& x, const MG& g, const MB& b, LnCache<T>& c) {
    Mat<T> y(x.rows, x.cols);
    c.rstd.resize(x.rows);
    c.xhat = Mat<T>(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        double mean = 0;
        for (std::size_t j = 0; j < x.cols; ++j) mean += static_cast<double>(x.at(i, j));
        mean /= static_cast<double>(x.cols);
        double var = 0;
        for (std::size_t j = 0; j < x.cols; ++j) {
            double t = static_cast<double>(x.at(i, j)) - mean;
            var += t * t;
        }
        var /= static_cast<double>(x.cols);
        double rstd = 1.0 / std::sqrt(var + kLnEps);
        c.rstd[i] = static_cast<T>(rstd);
        for (std::size_t j = 0; j < x.cols; ++j) {
            T xh = static_cast<T>((static_cast<double>(x.at(i, j)) - mean) * rstd);
            c.xhat.at(i, j) = xh;
            y.at(i, j) = g.p[j] * xh + b.p[j];
        }
    }
    return y;
}

template <typename T, typename MG>
inline Mat<T> ln_backward(const Mat<T>& dy, const LnCache<T>& c, const MG& g,
                          MatView<T> dg, MatView<T> db) {
    Mat<T> dx(dy.rows, dy.cols);
    const std::size_t n = dy.cols;
    for (std::size_t i = 0; i < dy.rows; ++i) {
        double sum_dxhat = 0, sum_dxhat_xhat = 0;
        for (std::size_t j = 0; j < n; ++j) {
            T dyij = dy.at(i, j);
            dg.p[j] += dyij * c.xhat.at(i, j);
            db.p[j] += dyij;
            double dxhat = static_cast<double>(dyij) * static_cast<double>(g.p[j]);
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * static_cast<double>(c.xhat.at(i, j));
        }
        sum_dxhat /= static_cast<double>(n);
        sum_dxhat_xhat /= static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) {
            double dxhat = static_cast<double>(dy.at(i, j)) * static_cast<double>(g.p[j]);
            dx.at(i, j) = static_cast<T>(
                static_cast<double>(c.rstd[i]) *
                (dxhat - sum_dxhat -
                 static_cast<double>(c.xhat.at(i, j)) * sum_dxhat_xhat));
        }
    }
    return dx;
}

// y[m x n] = x[m x k] * w[k x n]
template <typename T, typename MW>
inline Mat<T> mm(const Mat<T>& x, const MW& w) {
    if (x.cols != w.rows) throw DimensionError("mm shape mismatch");
    Mat<T> y(x.rows, w.cols);
    kernels::matmul_acc_serial(x.d.data(), w.p, y.d.data(), x.rows, x.cols, w.cols);
    return y;
}

// dx = dy * w^T ; dw += x^T * dy
template <typename T, typename MW>
inline Mat<T> mm_backward(const Mat<T>& x, const MW& w, const Mat<T>& dy,
                          MatView<T> dw) {
    Mat<T> dx(x.rows, x.cols);
    kernels::matmul_bt_acc_serial(dy.d.data(), w.p, dx.d.data(), dy.rows, dy.cols,
                                  x.cols);
    kernels::matmul_at_acc_serial(x.d.data(), dy.d.data(), dw.p, x.rows, x.cols,
                                  dy.cols);
    return dx;
}

template <typename T>
struct AttnCache {
    Mat<T> q, k, v;               // projections
    std::vector<Mat<T>> probs;    // per head, Sq x Skv
    Mat<T> concat;                // pre-Wo
    const Mat<T>* aq = nullptr;   // layer-norm outputs feeding the projections
    const Mat<T>* akv = nullptr;
};

// Multi-head attention; aq provides queries, akv keys/values. Causal only
// makes sense for self-attention (square score matrix).
template <typename T, typename MW>
inline Mat<T> attn_forward(const Mat<T>& aq, const Mat<T>& akv, const MW& wq,
                           const MW& wk, const MW& wv, const MW& wo,
                           std::size_t heads, bool causal, AttnCache<T>& c) {
    const std::size_t dim = aq.cols, dh = dim / heads;
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    c.q = mm(aq, wq);
    c.k = mm(akv, wk);
    c.v = mm(akv, wv);
    c.aq = &aq;
    c.akv = &akv;
    c.probs.assign(heads, Mat<T>(aq.rows, akv.rows));
    c.concat = Mat<T>(aq.rows, dim);
    for (std::size_t h = 0; h < heads; ++h) {
        Mat<T>& p = c.probs[h];
        for (std::size_t i = 0; i < aq.rows; ++i) {
            std::size_t jmax = causal ? i + 1 : akv.rows;
            double maxs = -1e300;
            std::vector<double> s(jmax);
            for (std::size_t j = 0; j < jmax; ++j) {
                double acc = 0;
                const T* qi = c.q.row(i) + h * dh;
                const T* kj = c.k.row(j) + h * dh;
                for (std::size_t u = 0; u < dh; ++u)
                    acc += static_cast<double>(qi[u]) * static_cast<double>(kj[u]);
                s[j] = acc * static_cast<double>(scale);
                maxs = std::max(maxs, s[j]);
            }
            double z = 0;
            for (std::size_t j = 0; j < jmax; ++j) z += std::exp(s[j] - maxs);
            for (std::size_t j = 0; j < jmax; ++j)
                p.at(i, j) = static_cast<T>(std::exp(s[j] - maxs) / z);
            for (std::size_t j = jmax; j < akv.rows; ++j) p.at(i, j) = T(0);
            T* ci = c.concat.row(i) + h * dh;
            for (std::size_t j = 0; j < jmax; ++j) {
                const T* vj = c.v.row(j) + h * dh;
                T pij = p.at(i, j);
                for (std::size_t u = 0; u < dh; ++u) ci[u] += pij * vj[u];
            }
        }
    }
    return mm(c.concat, wo);
}

// Returns d(aq); adds d(akv) into dakv (caller owns, may alias daq for
// self-attention via accumulate flag).
template <typename T, typename MW>
inline Mat<T> attn_backward(const AttnCache<T>& c, const MW& wq, const MW& wk,
                            const MW& wv, const MW& wo, std::size_t heads,
                            const Mat<T>& dout, Mat<T>& dakv, MatView<T> dwq,
                            MatView<T> dwk, MatView<T> dwv, MatView<T> dwo) {
    const std::size_t dim = c.q.cols, dh = dim / heads;
    const std::size_t sq = c.q.rows, skv = c.k.rows;
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    Mat<T> dconcat = mm_backward(c.concat, wo, dout, dwo);
    Mat<T> dq(sq, dim), dk(skv, dim), dv(skv, dim);
    for (std::size_t h = 0; h < heads; ++h) {
        const Mat<T>& p = c.probs[h];
        for (std::size_t i = 0; i < sq; ++i) {
            const T* dci = dconcat.row(i) + h * dh;
            // dP and softmax backward
            std::vector<double> dp(skv, 0.0);
            double dot_pp = 0;
            for (std::size_t j = 0; j < skv; ++j) {
                if (p.at(i, j) == T(0)) continue;
                const T* vj = c.v.row(j) + h * dh;
                double acc = 0;
                for (std::size_t u = 0; u < dh; ++u)
                    acc += static_cast<double>(dci[u]) * static_cast<double>(vj[u]);
                dp[j] = acc;
                dot_pp += acc * static_cast<double>(p.at(i, j));
                // dv accumulation
                T* dvj = dv.row(j) + h * dh;
                T pij = p.at(i, j);
                for (std::size_t u = 0; u < dh; ++u) dvj[u] += pij * dci[u];
            }
            for (std::size_t j = 0; j < skv; ++j) {
                if (p.at(i, j) == T(0)) continue;
                double ds = static_cast<double>(p.at(i, j)) * (dp[j] - dot_pp) *
                            static_cast<double>(scale);
                const T* kj = c.k.row(j) + h * dh;
                const T* qi = c.q.row(i) + h * dh;
                T* dqi = dq.row(i) + h * dh;
                T* dkj = dk.row(j) + h * dh;
                for (std::size_t u = 0; u < dh; ++u) {
                    dqi[u] += static_cast<T>(ds) * kj[u];
                    dkj[u] += static_cast<T>(ds) * qi[u];
                }
            }
        }
    }
    Mat<T> daq = mm_backward(*c.aq, wq, dq, dwq);
    Mat<T> dk_in = mm_backward(*c.akv, wk, dk, dwk);
    Mat<T> dv_in = mm_backward(*c.akv, wv, dv, dwv);
    for (std::size_t i = 0; i < dakv.d.size(); ++i)
        dakv.d[i] += dk_in.d[i] + dv_in.d[i];
    return daq;
}

}  // namespace nn

// Small pre-LN encoder-decoder transformer trained with next-token
// prediction; learned absolute position embeddings; exact hand-derived
// backward pass.
template <typename T>
class SeqModel {
public:
    explicit SeqModel(const SeqModelConfig<T>& cfg) : cfg_(cfg) {
        cfg_.validate();
        build();
        init_params();
    }

    const SeqModelConfig<T>& config() const { return cfg_; }
    std::vector<T>& params() { return params_.data(); }
    const std::vector<T>& params() const { return params_.data(); }
    std::size_t n_params() const { return params_.total(); }
    const std::vector<typename nn::FlatParams<T>::Spec>& param_specs() const {
        return params_.specs();
    }

    // --- forward ---------------------------------------------------------

    struct LayerCache {
        nn::LnCache<T> ln1, ln2, ln3;
        nn::AttnCache<T> self_attn, cross_attn;
        Mat<T> x_in;        // layer input
        Mat<T> a1, a2, a3;  // layer-norm outputs (owned; attn caches point here)
        Mat<T> x_mid, x_mid2;
        Mat<T> ffn_pre;     // pre-ReLU
        Mat<T> ffn_in;      // LN output feeding the FFN
        Mat<T> drop_attn, drop_cross, drop_ffn;  // dropout masks (empty if off)
    };

    struct Cache {
        std::vector<int> src, tgt_in;
        Mat<T> enc_in, dec_in;
        std::vector<LayerCache> enc, dec;
        Mat<T> enc_out;      // encoder final states
        Mat<T> dec_out;      // decoder final pre-LN states
        nn::LnCache<T> final_ln;
        Mat<T> final_normed;
    };

    // Per-position vocabulary logits for one (src, tgt_in) pair; causal
    // masking in the decoder. Read-only on parameters.
    Mat<T> forward(const std::vector<int>& src, const std::vector<int>& tgt_in,
                   Cache& c, Rng* dropout_rng = nullptr) const {
        if (src.empty() || tgt_in.empty())
            throw DimensionError("seqmodel forward: empty sequence");
        if (src.size() > cfg_.max_src)
            throw DimensionError("seqmodel forward: source length " +
                                 std::to_string(src.size()) + " exceeds max " +
                                 std::to_string(cfg_.max_src));
        if (tgt_in.size() > cfg_.max_tgt)
            throw DimensionError("seqmodel forward: target length exceeds max");
        c.src = src;
        c.tgt_in = tgt_in;
        c.enc_in = embed(src, tok_emb_, pos_src_);
        c.enc.resize(cfg_.n_enc);
        Mat<T> x = c.enc_in;
        for (std::size_t l = 0; l < cfg_.n_enc; ++l)
            x = encoder_layer(x, enc_idx_[l], c.enc[l], dropout_rng);
        c.enc_out = x;

        c.dec_in = embed(tgt_in, tok_emb_, pos_tgt_);
        c.dec.resize(cfg_.n_dec);
        Mat<T> y = c.dec_in;
        for (std::size_t l = 0; l < cfg_.n_dec; ++l)
            y = decoder_layer(y, c.enc_out, dec_idx_[l], c.dec[l], dropout_rng);
        c.dec_out = y;
        c.final_normed = nn::ln_forward(y, P(final_ln_g_), P(final_ln_b_), c.final_ln);
        Mat<T> logits = nn::mm(c.final_normed, P(out_w_));
        auto ob = P(out_b_);
        for (std::size_t i = 0; i < logits.rows; ++i)
            for (std::size_t j = 0; j < logits.cols; ++j)
                logits.at(i, j) += ob.p[j];
        return logits;
    }

    // Backward from dlogits into an external flat gradient buffer of size
    // n_params(). Parameters are read-only; safe to call from many slots.
    void backward(const Cache& c, const Mat<T>& dlogits, T* gbuf) const {
        Mat<T> dfinal = nn::mm_backward(c.final_normed, P(out_w_), dlogits,
                                        G(out_w_, gbuf));
        {
            auto dob = G(out_b_, gbuf);
            for (std::size_t i = 0; i < dlogits.rows; ++i)
                for (std::size_t j = 0; j < dlogits.cols; ++j)
                    dob.p[j] += dlogits.at(i, j);
        }
        Mat<T> dy = nn::ln_backward(dfinal, c.final_ln, P(final_ln_g_),
                                    G(final_ln_g_, gbuf), G(final_ln_b_, gbuf));
        Mat<T> denc(c.enc_out.rows, c.enc_out.cols);
        for (std::size_t l = cfg_.n_dec; l-- > 0;)
            dy = decoder_layer_backward(dy, denc, dec_idx_[l], c.dec[l], gbuf);
        embed_backward(c.tgt_in, dy, tok_emb_, pos_tgt_, gbuf);

        Mat<T> dx = std::move(denc);
        for (std::size_t l = cfg_.n_enc; l-- > 0;)
            dx = encoder_layer_backward(dx, enc_idx_[l], c.enc[l], gbuf);
        embed_backward(c.src, dx, tok_emb_, pos_src_, gbuf);
    }

    // --- losses ------------------------------------------------------------

    // Mean negative log-likelihood per target position; optionally fills
    // dlogits (already divided by `norm`, typically total token count of the
    // batch so per-example grads sum to the batch-mean gradient).
    double nll(const Mat<T>& logits, const std::vector<int>& targets,
               Mat<T>* dlogits = nullptr, double norm = 1.0) const {
        if (logits.rows != targets.size())
            throw DimensionError("nll: logits rows != targets");
        double total = 0;
        if (dlogits) *dlogits = Mat<T>(logits.rows, logits.cols);
        for (std::size_t i = 0; i < logits.rows; ++i) {
            double maxv = -1e300;
            for (std::size_t j = 0; j < logits.cols; ++j)
                maxv = std::max(maxv, static_cast<double>(logits.at(i, j)));
            double z = 0;
            for (std::size_t j = 0; j < logits.cols; ++j)
                z += std::exp(static_cast<double>(logits.at(i, j)) - maxv);
            double logz = std::log(z) + maxv;
            int t = targets[i];
            if (t < 0 || t >= static_cast<int>(logits.cols))
                throw DimensionError("nll: target id out of vocab");
            total += logz - static_cast<double>(logits.at(i, static_cast<std::size_t>(t)));
            if (dlogits)
                for (std::size_t j = 0; j < logits.cols; ++j) {
                    double p = std::exp(static_cast<double>(logits.at(i, j)) - logz);
                    (*dlogits).at(i, j) = static_cast<T>(
                        (p - (static_cast<int>(j) == t ? 1.0 : 0.0)) / norm);
                }
        }
        return total;
    }

    // Teacher-forced sum of log-probabilities of `seq` given `src`
    // (bos prepended internally; no eos appended).
    double sequence_log_prob(const std::vector<int>& src,
                             const std::vector<int>& seq) const {
        std::vector<int> tgt_in{1};  // bos
        tgt_in.insert(tgt_in.end(), seq.begin(), seq.end() - 1);
        Cache c;
        Mat<T> logits = forward(src, tgt_in, c);
        double total = 0;
        for (std::size_t i = 0; i < seq.size(); ++i)
            total -= token_nll(logits, i, seq[i]);
        return total;
    }

    // --- incremental decoding ---------------------------------------------

    struct EncodedSource {
        std::vector<int> src;
        Mat<T> enc_out;
    };

    // Same as sequence_log_prob(src, seq) but reusing a cached encoder pass.
    double sequence_log_prob(const EncodedSource& enc,
                             const std::vector<int>& seq) const {
        std::vector<int> tgt_in{1};
        tgt_in.insert(tgt_in.end(), seq.begin(), seq.end() - 1);
        if (tgt_in.size() > cfg_.max_tgt)
            throw DimensionError("sequence_log_prob: target too long");
        Mat<T> y = embed(tgt_in, tok_emb_, pos_tgt_);
        std::vector<LayerCache> lc(cfg_.n_dec);
        for (std::size_t l = 0; l < cfg_.n_dec; ++l)
            y = decoder_layer(y, enc.enc_out, dec_idx_[l], lc[l], nullptr);
        nn::LnCache<T> fc;
        Mat<T> normed = nn::ln_forward(y, P(final_ln_g_), P(final_ln_b_), fc);
        Mat<T> logits = nn::mm(normed, P(out_w_));
        auto ob = P(out_b_);
        for (std::size_t i = 0; i < logits.rows; ++i)
            for (std::size_t j = 0; j < logits.cols; ++j) logits.at(i, j) += ob.p[j];
        double total = 0;
        for (std::size_t i = 0; i < seq.size(); ++i)
            total -= token_nll(logits, i, seq[i]);
        return total;
    }

    EncodedSource encode_source(const std::vector<int>& src) const {
        Cache c;
        // run only the encoder
        if (src.empty() || src.size() > cfg_.max_src)
            throw DimensionError("encode_source: bad source length");
        Mat<T> x = embed(src, tok_emb_, pos_src_);
        c.enc.resize(cfg_.n_enc);
        for (std::size_t l = 0; l < cfg_.n_enc; ++l)
            x = encoder_layer(x, enc_idx_[l], c.enc[l], nullptr);
        return {src, std::move(x)};
    }

    // Log-softmax over the next token after `prefix` (without bos; bos is
    // prepended internally).
    Vec<T> next_token_log_probs(const EncodedSource& enc,
                                const std::vector<int>& prefix) const {
        std::vector<int> tgt_in{1};
        tgt_in.insert(tgt_in.end(), prefix.begin(), prefix.end());
        if (tgt_in.size() > cfg_.max_tgt)
            throw DimensionError("next_token_log_probs: prefix too long");
        Mat<T> y = embed(tgt_in, tok_emb_, pos_tgt_);
        std::vector<LayerCache> lc(cfg_.n_dec);
        for (std::size_t l = 0; l < cfg_.n_dec; ++l)
            y = decoder_layer(y, enc.enc_out, dec_idx_[l], lc[l], nullptr);
        nn::LnCache<T> fc;
        Mat<T> normed = nn::ln_forward(y, P(final_ln_g_), P(final_ln_b_), fc);
        std::size_t last = normed.rows - 1;
        Vec<T> logits(cfg_.vocab);
        auto w = P(out_w_);
        auto b = P(out_b_);
        for (std::size_t j = 0; j < cfg_.vocab; ++j) {
            double acc = static_cast<double>(b.p[j]);
            for (std::size_t u = 0; u < cfg_.dim; ++u)
                acc += static_cast<double>(normed.at(last, u)) *
                       static_cast<double>(w.p[u * cfg_.vocab + j]);
            logits[j] = static_cast<T>(acc);
        }
        double maxv = -1e300;
        for (std::size_t j = 0; j < cfg_.vocab; ++j)
            maxv = std::max(maxv, static_cast<double>(logits[j]));
        double z = 0;
        for (std::size_t j = 0; j < cfg_.vocab; ++j)
            z += std::exp(static_cast<double>(logits[j]) - maxv);
        double logz = std::log(z) + maxv;
        Vec<T> out(cfg_.vocab);
        for (std::size_t j = 0; j < cfg_.vocab; ++j)
            out[j] = static_cast<T>(static_cast<double>(logits[j]) - logz);
        return out;
    }

    // --- checkpoint ----------------------------------------------------------

    void save(const std::string& path) const {
        CheckpointWriter w(path);
        for (const auto& s : params_.specs()) {
            std::vector<float> data(s.rows * s.cols);
            for (std::size_t i = 0; i < data.size(); ++i)
                data[i] = static_cast<float>(params_.data()[s.offset + i]);
            w.add(s.name, {static_cast<std::uint32_t>(s.rows),
                           static_cast<std::uint32_t>(s.cols)},
                  data.data());
        }
    }

    void load(const std::string& path) {
        auto tensors = read_checkpoint(path);
        for (const auto& s : params_.specs()) {
            auto it = tensors.find(s.name);
            if (it == tensors.end())
                throw ConfigError("checkpoint missing tensor " + s.name);
            if (it->second.data.size() != s.rows * s.cols)
                throw ConfigError("checkpoint tensor " + s.name + " has wrong size");
            for (std::size_t i = 0; i < it->second.data.size(); ++i)
                params_.data()[s.offset + i] = static_cast<T>(it->second.data[i]);
        }
    }

private:
    Mat<T> embed(const std::vector<int>& ids, std::size_t tok_idx,
                 std::size_t pos_idx) const {
        auto tok = P(tok_idx);
        auto pos = P(pos_idx);
        Mat<T> x(ids.size(), cfg_.dim);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (ids[i] < 0 || ids[i] >= static_cast<int>(cfg_.vocab))
                throw DimensionError("token id out of vocab: " + std::to_string(ids[i]));
            const T* tr = tok.p + static_cast<std::size_t>(ids[i]) * cfg_.dim;
            const T* pr = pos.p + i * cfg_.dim;
            for (std::size_t j = 0; j < cfg_.dim; ++j) x.at(i, j) = tr[j] + pr[j];
        }
        return x;
    }

    void embed_backward(const std::vector<int>& ids, const Mat<T>& dx,
                        std::size_t tok_idx, std::size_t pos_idx, T* gbuf) const {
        auto dtok = G(tok_idx, gbuf);
        auto dpos = G(pos_idx, gbuf);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            T* tr = dtok.p + static_cast<std::size_t>(ids[i]) * cfg_.dim;
            T* pr = dpos.p + i * cfg_.dim;
            for (std::size_t j = 0; j < cfg_.dim; ++j) {
                tr[j] += dx.at(i, j);
                pr[j] += dx.at(i, j);
            }
        }
    }

    struct EncIdx {
        std::size_t ln1g, ln1b, wq, wk, wv, wo;
        std::size_t ln2g, ln2b, w1, b1, w2, b2;
    };
    struct DecIdx {
        std::size_t ln1g, ln1b, wq1, wk1, wv1, wo1;
        std::size_t ln2g, ln2b, wq2, wk2, wv2, wo2;
        std::size_t ln3g, ln3b, w1, b1, w2, b2;
    };

    MatView<const T> P(std::size_t idx) const { return params_.value(idx); }
    MatView<T> G(std::size_t idx, T* gbuf) const { return params_.in_buffer(idx, gbuf); }

    Mat<T> maybe_dropout(Mat<T> x, Mat<T>& mask, Rng* rng) const {
        if (!rng || cfg_.dropout <= T(0)) {
            mask = Mat<T>();
            return x;
        }
        mask = Mat<T>(x.rows, x.cols);
        T keep = T(1) - cfg_.dropout;
        for (std::size_t i = 0; i < x.d.size(); ++i) {
            T m = uniform_real<T>(*rng, T(0), T(1)) < cfg_.dropout ? T(0) : T(1) / keep;
            mask.d[i] = m;
            x.d[i] *= m;
        }
        return x;
    }

    static void apply_mask_grad(Mat<T>& g, const Mat<T>& mask) {
        if (mask.d.empty()) return;
        for (std::size_t i = 0; i < g.d.size(); ++i) g.d[i] *= mask.d[i];
    }

    Mat<T> ffn_forward(const Mat<T>& a, std::size_t w1, std::size_t b1,
                       std::size_t w2, std::size_t b2, Mat<T>& pre) const {
        Mat<T> h = nn::mm(a, P(w1));
        auto bias1 = P(b1);
        for (std::size_t i = 0; i < h.rows; ++i)
            for (std::size_t j = 0; j < h.cols; ++j) h.at(i, j) += bias1.p[j];
        pre = h;
        for (auto& v : h.d) v = v > T(0) ? v : T(0);
        Mat<T> y = nn::mm(h, P(w2));
        auto bias2 = P(b2);
        for (std::size_t i = 0; i < y.rows; ++i)
            for (std::size_t j = 0; j < y.cols; ++j) y.at(i, j) += bias2.p[j];
        return y;
    }

    Mat<T> ffn_backward(const Mat<T>& a, const Mat<T>& pre, std::size_t w1,
                        std::size_t b1, std::size_t w2, std::size_t b2,
                        const Mat<T>& dy, T* gbuf) const {
        Mat<T> h = pre;
        for (auto& v : h.d) v = v > T(0) ? v : T(0);
        {
            auto db2 = G(b2, gbuf);
            for (std::size_t i = 0; i < dy.rows; ++i)
                for (std::size_t j = 0; j < dy.cols; ++j) db2.p[j] += dy.at(i, j);
        }
        Mat<T> dh = nn::mm_backward(h, P(w2), dy, G(w2, gbuf));
        for (std::size_t i = 0; i < dh.d.size(); ++i)
            if (pre.d[i] <= T(0)) dh.d[i] = T(0);
        {
            auto db1 = G(b1, gbuf);
            for (std::size_t i = 0; i < dh.rows; ++i)
                for (std::size_t j = 0; j < dh.cols; ++j) db1.p[j] += dh.at(i, j);
        }
        return nn::mm_backward(a, P(w1), dh, G(w1, gbuf));
    }

    Mat<T> encoder_layer(const Mat<T>& x, const EncIdx& idx, LayerCache& c,
                         Rng* rng) const {
        c.x_in = x;
        c.a1 = nn::ln_forward(x, P(idx.ln1g), P(idx.ln1b), c.ln1);
        Mat<T> attn = attn_self(c.a1, idx.wq, idx.wk, idx.wv, idx.wo, false,
                                c.self_attn);
        attn = maybe_dropout(std::move(attn), c.drop_attn, rng);
        Mat<T> mid = x;
        for (std::size_t i = 0; i < mid.d.size(); ++i) mid.d[i] += attn.d[i];
        c.x_mid = mid;
        c.ffn_in = nn::ln_forward(mid, P(idx.ln2g), P(idx.ln2b), c.ln2);
        Mat<T> f = ffn_forward(c.ffn_in, idx.w1, idx.b1, idx.w2, idx.b2, c.ffn_pre);
        f = maybe_dropout(std::move(f), c.drop_ffn, rng);
        for (std::size_t i = 0; i < mid.d.size(); ++i) mid.d[i] += f.d[i];
        return mid;
    }

    Mat<T> encoder_layer_backward(const Mat<T>& dout, const EncIdx& idx,
                                  const LayerCache& c, T* gbuf) const {
        Mat<T> dmid = dout;
        Mat<T> df = dout;
        apply_mask_grad(df, c.drop_ffn);
        Mat<T> dffn_in = ffn_backward(c.ffn_in, c.ffn_pre, idx.w1, idx.b1, idx.w2,
                                      idx.b2, df, gbuf);
        Mat<T> dmid_ln = nn::ln_backward(dffn_in, c.ln2, P(idx.ln2g),
                                         G(idx.ln2g, gbuf), G(idx.ln2b, gbuf));
        for (std::size_t i = 0; i < dmid.d.size(); ++i) dmid.d[i] += dmid_ln.d[i];
        Mat<T> dattn = dmid;
        apply_mask_grad(dattn, c.drop_attn);
        Mat<T> dakv(c.a1.rows, c.a1.cols);
        Mat<T> daq = nn::attn_backward(c.self_attn, P(idx.wq), P(idx.wk), P(idx.wv),
                                       P(idx.wo), cfg_.heads, dattn, dakv,
                                       G(idx.wq, gbuf), G(idx.wk, gbuf),
                                       G(idx.wv, gbuf), G(idx.wo, gbuf));
        for (std::size_t i = 0; i < daq.d.size(); ++i) daq.d[i] += dakv.d[i];
        Mat<T> dx_ln = nn::ln_backward(daq, c.ln1, P(idx.ln1g), G(idx.ln1g, gbuf),
                                       G(idx.ln1b, gbuf));
        for (std::size_t i = 0; i < dmid.d.size(); ++i) dmid.d[i] += dx_ln.d[i];
        return dmid;
    }

    Mat<T> attn_self(const Mat<T>& a, std::size_t wq, std::size_t wk,
                     std::size_t wv, std::size_t wo, bool causal,
                     nn::AttnCache<T>& c) const {
        return nn::attn_forward(a, a, P(wq), P(wk), P(wv), P(wo), cfg_.heads,
                                causal, c);
    }

    Mat<T> decoder_layer(const Mat<T>& y, const Mat<T>& enc_out, const DecIdx& idx,
                         LayerCache& c, Rng* rng) const {
        c.x_in = y;
        c.a1 = nn::ln_forward(y, P(idx.ln1g), P(idx.ln1b), c.ln1);
        Mat<T> attn = attn_self(c.a1, idx.wq1, idx.wk1, idx.wv1, idx.wo1,
                                /*causal=*/true, c.self_attn);
        attn = maybe_dropout(std::move(attn), c.drop_attn, rng);
        Mat<T> mid = y;
        for (std::size_t i = 0; i < mid.d.size(); ++i) mid.d[i] += attn.d[i];
        c.x_mid = mid;
        c.a2 = nn::ln_forward(mid, P(idx.ln2g), P(idx.ln2b), c.ln2);
        Mat<T> cross = nn::attn_forward(c.a2, enc_out, P(idx.wq2), P(idx.wk2),
                                        P(idx.wv2), P(idx.wo2), cfg_.heads,
                                        /*causal=*/false, c.cross_attn);
        cross = maybe_dropout(std::move(cross), c.drop_cross, rng);
        for (std::size_t i = 0; i < mid.d.size(); ++i) mid.d[i] += cross.d[i];
        c.x_mid2 = mid;
        c.ffn_in = nn::ln_forward(mid, P(idx.ln3g), P(idx.ln3b), c.ln3);
        Mat<T> f = ffn_forward(c.ffn_in, idx.w1, idx.b1, idx.w2, idx.b2, c.ffn_pre);
        f = maybe_dropout(std::move(f), c.drop_ffn, rng);
        for (std::size_t i = 0; i < mid.d.size(); ++i) mid.d[i] += f.d[i];
        return mid;
    }

    // Returns dy; accumulates the encoder-output gradient into denc.
    Mat<T> decoder_layer_backward(const Mat<T>& dout, Mat<T>& denc,
                                  const DecIdx& idx, const LayerCache& c,
                                  T* gbuf) const {
        Mat<T> dmid2 = dout;
        Mat<T> df = dout;
        apply_mask_grad(df, c.drop_ffn);
        Mat<T> dffn_in = ffn_backward(c.ffn_in, c.ffn_pre, idx.w1, idx.b1, idx.w2,
                                      idx.b2, df, gbuf);
        Mat<T> d_ln3 = nn::ln_backward(dffn_in, c.ln3, P(idx.ln3g),
                                       G(idx.ln3g, gbuf), G(idx.ln3b, gbuf));
        for (std::size_t i = 0; i < dmid2.d.size(); ++i) dmid2.d[i] += d_ln3.d[i];

        Mat<T> dcross = dmid2;
        apply_mask_grad(dcross, c.drop_cross);
        Mat<T> da2 = nn::attn_backward(c.cross_attn, P(idx.wq2), P(idx.wk2),
                                       P(idx.wv2), P(idx.wo2), cfg_.heads, dcross,
                                       denc, G(idx.wq2, gbuf), G(idx.wk2, gbuf),
                                       G(idx.wv2, gbuf), G(idx.wo2, gbuf));
        Mat<T> dmid = dmid2;
        Mat<T> d_ln2 = nn::ln_backward(da2, c.ln2, P(idx.ln2g), G(idx.ln2g, gbuf),
                                       G(idx.ln2b, gbuf));
        for (std::size_t i = 0; i < dmid.d.size(); ++i) dmid.d[i] += d_ln2.d[i];

        Mat<T> dattn = dmid;
        apply_mask_grad(dattn, c.drop_attn);
        Mat<T> dakv(c.a1.rows, c.a1.cols);
        Mat<T> daq = nn::attn_backward(c.self_attn, P(idx.wq1), P(idx.wk1),
                                       P(idx.wv1), P(idx.wo1), cfg_.heads, dattn,
                                       dakv, G(idx.wq1, gbuf), G(idx.wk1, gbuf),
                                       G(idx.wv1, gbuf), G(idx.wo1, gbuf));
        for (std::size_t i = 0; i < daq.d.size(); ++i) daq.d[i] += dakv.d[i];
        Mat<T> dy_ln = nn::ln_backward(daq, c.ln1, P(idx.ln1g), G(idx.ln1g, gbuf),
                                       G(idx.ln1b, gbuf));
        Mat<T> dy = dmid;
        for (std::size_t i = 0; i < dy.d.size(); ++i) dy.d[i] += dy_ln.d[i];
        return dy;
    }

    double token_nll(const Mat<T>& logits, std::size_t row, int target) const {
        double maxv = -1e300;
        for (std::size_t j = 0; j < logits.cols; ++j)
            maxv = std::max(maxv, static_cast<double>(logits.at(row, j)));
        double z = 0;
        for (std::size_t j = 0; j < logits.cols; ++j)
            z += std::exp(static_cast<double>(logits.at(row, j)) - maxv);
        return std::log(z) + maxv -
               static_cast<double>(logits.at(row, static_cast<std::size_t>(target)));
    }

    void build() {
        tok_emb_ = params_.add("tok_emb", cfg_.vocab, cfg_.dim);
        pos_src_ = params_.add("pos_src", cfg_.max_src, cfg_.dim);
        pos_tgt_ = params_.add("pos_tgt", cfg_.max_tgt, cfg_.dim);
        auto add_ffn = [this](const std::string& pfx, std::size_t& w1, std::size_t& b1,
                              std::size_t& w2, std::size_t& b2) {
            w1 = params_.add(pfx + ".w1", cfg_.dim, cfg_.ffn);
            b1 = params_.add(pfx + ".b1", 1, cfg_.ffn);
            w2 = params_.add(pfx + ".w2", cfg_.ffn, cfg_.dim);
            b2 = params_.add(pfx + ".b2", 1, cfg_.dim);
        };
        auto add_ln = [this](const std::string& pfx, std::size_t& g, std::size_t& b) {
            g = params_.add(pfx + ".g", 1, cfg_.dim);
            b = params_.add(pfx + ".b", 1, cfg_.dim);
        };
        auto add_attn = [this](const std::string& pfx, std::size_t& wq, std::size_t& wk,
                               std::size_t& wv, std::size_t& wo) {
            wq = params_.add(pfx + ".wq", cfg_.dim, cfg_.dim);
            wk = params_.add(pfx + ".wk", cfg_.dim, cfg_.dim);
            wv = params_.add(pfx + ".wv", cfg_.dim, cfg_.dim);
            wo = params_.add(pfx + ".wo", cfg_.dim, cfg_.dim);
        };
        for (std::size_t l = 0; l < cfg_.n_enc; ++l) {
            std::string pfx = "enc" + std::to_string(l);
            EncIdx e{};
            add_ln(pfx + ".ln1", e.ln1g, e.ln1b);
            add_attn(pfx + ".self", e.wq, e.wk, e.wv, e.wo);
            add_ln(pfx + ".ln2", e.ln2g, e.ln2b);
            add_ffn(pfx + ".ffn", e.w1, e.b1, e.w2, e.b2);
            enc_idx_.push_back(e);
        }
        for (std::size_t l = 0; l < cfg_.n_dec; ++l) {
            std::string pfx = "dec" + std::to_string(l);
            DecIdx d{};
            add_ln(pfx + ".ln1", d.ln1g, d.ln1b);
            add_attn(pfx + ".self", d.wq1, d.wk1, d.wv1, d.wo1);
            add_ln(pfx + ".ln2", d.ln2g, d.ln2b);
            add_attn(pfx + ".cross", d.wq2, d.wk2, d.wv2, d.wo2);
            add_ln(pfx + ".ln3", d.ln3g, d.ln3b);
            add_ffn(pfx + ".ffn", d.w1, d.b1, d.w2, d.b2);
            dec_idx_.push_back(d);
        }
        add_ln("final_ln", final_ln_g_, final_ln_b_);
        out_w_ = params_.add("out.w", cfg_.dim, cfg_.vocab);
        out_b_ = params_.add("out.b", 1, cfg_.vocab);
        params_.allocate();
    }

    void init_params() {
        Rng rng(derive_seed(cfg_.seed, 0xE5));
        for (const auto& s : params_.specs()) {
            T* p = params_.data().data() + s.offset;
            bool is_ln_gain = s.name.size() > 2 && s.name.ends_with(".g");
            bool is_bias = s.name.ends_with(".b") || s.name.ends_with(".b1") ||
                           s.name.ends_with(".b2");
            if (is_ln_gain) {
                for (std::size_t i = 0; i < s.rows * s.cols; ++i) p[i] = T(1);
            } else if (is_bias) {
                // zeros
            } else {
                for (std::size_t i = 0; i < s.rows * s.cols; ++i)
                    p[i] = normal<T>(rng, T(0), T(0.02));
            }
        }
    }

    SeqModelConfig<T> cfg_;
    nn::FlatParams<T> params_;
    std::size_t tok_emb_ = 0, pos_src_ = 0, pos_tgt_ = 0;
    std::vector<EncIdx> enc_idx_;
    std::vector<DecIdx> dec_idx_;
    std::size_t final_ln_g_ = 0, final_ln_b_ = 0, out_w_ = 0, out_b_ = 0;
};

// One training pair; tgt is the raw response (bos/eos added internally).
struct SeqExample {
    std::vector<int> src;
    std::vector<int> tgt;
};

struct SeqEpochLog {
    double train_nll = 0;
    double valid_nll = 0;
    double seconds = 0;
};

// Mean per-token NLL over a dataset (teacher forcing, no dropout).
template <typename T>
inline double evaluate_nll(const SeqModel<T>& model,
                           const std::vector<SeqExample>& data) {
    if (data.empty()) return 0.0;
    const std::size_t n = data.size();
    std::vector<double> loss(n, 0.0);
    std::vector<std::size_t> count(n, 0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
        const auto& ex = data[static_cast<std::size_t>(i)];
        std::vector<int> tgt_in{1};
        tgt_in.insert(tgt_in.end(), ex.tgt.begin(), ex.tgt.end());
        std::vector<int> tgt_out = ex.tgt;
        tgt_out.push_back(2);
        typename SeqModel<T>::Cache c;
        Mat<T> logits = model.forward(ex.src, tgt_in, c);
        loss[static_cast<std::size_t>(i)] = model.nll(logits, tgt_out);
        count[static_cast<std::size_t>(i)] = tgt_out.size();
    }
    double total = 0;
    std::size_t tokens = 0;
    for (std::size_t i = 0; i < n; ++i) {
        total += loss[i];
        tokens += count[i];
    }
    return total / static_cast<double>(tokens);
}

// Adam training with per-token-mean NLL per batch. Gradients are accumulated
// into a fixed number of slots (example b of a batch goes to slot
// b % n_slots) and the slots are reduced in index order, so results are
// bit-identical for any OpenMP thread count. Throws NumericError on
// divergence after restoring the last finite epoch's parameters.
template <typename T>
inline std::vector<SeqEpochLog> train_seq_model(
    SeqModel<T>& model, const std::vector<SeqExample>& train,
    const std::vector<SeqExample>& valid) {
    const auto& cfg = model.config();
    if (train.empty()) throw ConfigError("train_seq_model: empty training set");
    const std::size_t n_params = model.n_params();
    constexpr std::size_t n_slots = 8;
    std::vector<std::vector<T>> slot_grad(n_slots, std::vector<T>(n_params, T(0)));
    std::vector<T> grad(n_params, T(0));
    Adam<T> adam(cfg.lr);
    adam.add(std::span<T>(model.params()), std::span<T>(grad));

    Rng shuffle_rng(derive_seed(cfg.seed, 0x7A91));
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<SeqEpochLog> log;
    std::vector<T> snapshot = model.params();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0;
        std::size_t epoch_tokens = 0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch) {
            std::size_t b1 = std::min(b0 + cfg.batch, order.size());
            std::size_t batch_tokens = 0;
            for (std::size_t b = b0; b < b1; ++b)
                batch_tokens += train[order[b]].tgt.size() + 1;  // + eos
            double norm = static_cast<double>(batch_tokens);
            std::vector<double> slot_loss(n_slots, 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
            for (std::int64_t s = 0; s < static_cast<std::int64_t>(n_slots); ++s) {
                auto& g = slot_grad[static_cast<std::size_t>(s)];
                std::fill(g.begin(), g.end(), T(0));
                for (std::size_t b = b0 + static_cast<std::size_t>(s); b < b1;
                     b += n_slots) {
                    const auto& ex = train[order[b]];
                    std::vector<int> tgt_in{1};
                    tgt_in.insert(tgt_in.end(), ex.tgt.begin(), ex.tgt.end());
                    std::vector<int> tgt_out = ex.tgt;
                    tgt_out.push_back(2);
                    typename SeqModel<T>::Cache c;
                    Rng drop_rng(derive_seed(
                        cfg.seed, 0xD0000000ULL +
                                      static_cast<std::uint64_t>(epoch) * 1000003ULL +
                                      order[b]));
                    Rng* drng = cfg.dropout > T(0) ? &drop_rng : nullptr;
                    Mat<T> logits = model.forward(ex.src, tgt_in, c, drng);
                    Mat<T> dlogits;
                    slot_loss[static_cast<std::size_t>(s)] +=
                        model.nll(logits, tgt_out, &dlogits, norm);
                    model.backward(c, dlogits, g.data());
                }
            }
            std::fill(grad.begin(), grad.end(), T(0));
            for (std::size_t s = 0; s < n_slots; ++s) {
                epoch_loss += slot_loss[s];
                const auto& g = slot_grad[s];
                for (std::size_t i = 0; i < n_params; ++i) grad[i] += g[i];
            }
            epoch_tokens += batch_tokens;
            adam.step();
        }
        double train_nll = epoch_loss / static_cast<double>(epoch_tokens);
        if (!std::isfinite(train_nll)) {
            model.params() = snapshot;
            throw NumericError("seqmodel training diverged at epoch " +
                               std::to_string(epoch));
        }
        snapshot = model.params();
        SeqEpochLog e;
        e.train_nll = train_nll;
        e.valid_nll = evaluate_nll(model, valid);
        e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                        .count();
        log.push_back(e);
    }
    return log;
}

}  // namespace gensar
