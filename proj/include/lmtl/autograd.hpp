#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "lmtl/rng.hpp"
#include "lmtl/tensor.hpp"

namespace lmtl {

// Reverse-mode tape. Ops append nodes that only reference earlier ids, so
// running the stored backward closures in reverse creation order is a
// topological sweep. One tape per forward pass; parameters enter as leaves
// and their gradients are read back after backward().
template <typename T>
class Tape {
public:
    using Id = int32_t;

    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool needs_grad = false;
        std::function<void(Tape&)> backward;
    };

    Id leaf(Tensor<T> value, bool requires_grad = false) {
        return push(std::move(value), requires_grad, nullptr);
    }

    const Tensor<T>& value(Id id) const { return nodes_[check(id)].value; }
    const Tensor<T>& grad(Id id) const { return nodes_[check(id)].grad; }
    std::size_t size() const { return nodes_.size(); }

    // ---- elementwise ----

    Id add(Id a, Id b) {
        const auto& ta = value(a);
        const auto& tb = value(b);
        require_same_shape(ta, tb, "add");
        Tensor<T> out = ta;
        for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += tb.values[i];
        return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t) {
            Id self = t.current_;
            t.accumulate(a, t.nodes_[self].grad.values);
            t.accumulate(b, t.nodes_[self].grad.values);
        });
    }

    Id mul_elem(Id a, Id b) {
        const auto& ta = value(a);
        const auto& tb = value(b);
        require_same_shape(ta, tb, "mul_elem");
        Tensor<T> out = ta;
        for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] *= tb.values[i];
        return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t) {
            Id self = t.current_;
            const auto& g = t.nodes_[self].grad.values;
            if (t.needs(a)) {
                const auto& vb = t.nodes_[b].value.values;
                auto& ga = t.nodes_[a].grad.values;
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
            }
            if (t.needs(b)) {
                const auto& va = t.nodes_[a].value.values;
                auto& gb = t.nodes_[b].grad.values;
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
            }
        });
    }

    Id scale(Id a, T s) {
        Tensor<T> out = value(a);
        for (T& v : out.values) v *= s;
        return push(std::move(out), needs(a), [a, s](Tape& t) {
            Id self = t.current_;
            const auto& g = t.nodes_[self].grad.values;
            auto& ga = t.nodes_[a].grad.values;
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
        });
    }

    // x: [..., c] plus bias [c] broadcast over rows.
    Id add_rowbias(Id x, Id bias) {
        const auto& tx = value(x);
        const auto& tb = value(bias);
        std::size_t c = tx.shape.empty() ? 0 : tx.shape.back();
        if (tb.rank() != 1 || tb.shape[0] != c) {
            throw DataError("add_rowbias: bias " + tb.shape_str() + " does not match " +
                            tx.shape_str());
        }
        Tensor<T> out = tx;
        std::size_t rows = c == 0 ? 0 : out.values.size() / c;
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < c; ++j) out.values[r * c + j] += tb.values[j];
        }
        return push(std::move(out), needs(x) || needs(bias), [x, bias, rows, c](Tape& t) {
            Id self = t.current_;
            const auto& g = t.nodes_[self].grad.values;
            t.accumulate(x, g);
            if (t.needs(bias)) {
                auto& gb = t.nodes_[bias].grad.values;
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < c; ++j) gb[j] += g[r * c + j];
                }
            }
        });
    }

    Id gelu(Id a) {
        const T inv_sqrt2 = T(1) / std::sqrt(T(2));
        const T inv_sqrt2pi = T(1) / std::sqrt(T(2) * T(3.14159265358979323846));
        Tensor<T> out = value(a);
        for (T& v : out.values) v = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
        return push(std::move(out), needs(a), [a, inv_sqrt2, inv_sqrt2pi](Tape& t) {
            Id self = t.current_;
            const auto& g = t.nodes_[self].grad.values;
            const auto& x = t.nodes_[a].value.values;
            auto& ga = t.nodes_[a].grad.values;
            for (std::size_t i = 0; i < g.size(); ++i) {
                T cdf = T(0.5) * (T(1) + std::erf(x[i] * inv_sqrt2));
                T pdf = std::exp(T(-0.5) * x[i] * x[i]) * inv_sqrt2pi;
                ga[i] += g[i] * (cdf + x[i] * pdf);
            }
        });
    }

    // ---- matrix products ----

    Id matmul(Id a, Id b) {
        const auto& ta = value(a);
        const auto& tb = value(b);
        if (ta.rank() != 2 || tb.rank() != 2 || ta.shape[1] != tb.shape[0]) {
            throw DataError("matmul: incompatible shapes " + ta.shape_str() + " and " +
                            tb.shape_str());
        }
        std::size_t m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
        Tensor<T> out = Tensor<T>::zeros({m, n});
        gemm(ta.values.data(), tb.values.data(), out.values.data(), m, k, n);
        return push(std::move(out), needs(a) || needs(b), [a, b, m, k, n](Tape& t) {
            Id self = t.current_;
            const auto& g = t.nodes_[self].grad.values;             // [m, n]
            if (t.needs(a)) {                                       // dA += G · Bᵀ
                const auto& vb = t.nodes_[b].value.values;          // [k, n]
                auto& ga = t.nodes_[a].grad.values;                 // [m, k]
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        T gj = g[i * n + j];
                        if (gj == T(0)) continue;
                        for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gj * vb[p * n + j];
                    }
                }
            }
            if (t.needs(b)) {                                       // dB += Aᵀ · G
                const auto& va = t.nodes_[a].value.values;          // [m, k]
                auto& gb = t.nodes_[b].grad.values;                 // [k, n]
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                        T ap = va[i * k + p];
                        if (ap == T(0)) continue;
                        for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += ap * g[i * n + j];
                    }
                }
            }
        });
    }

    // a [m, k] times bᵀ where b is [n, k]; used for the tied output
    // projection (hidden × embeddingᵀ).
    Id matmul_nt(Id a, Id b) {
        const auto& ta = value(a);
        const auto& tb = value(b);
        if (ta.rank() != 2 || tb.rank() != 2 || ta.shape[1] != tb.shape[1]) {
            throw DataError("matmul_nt: incompatible shapes " + ta.shape_str() + " and " +
                            tb.shape_str());
        }
        std::size_t m = ta.shape[0], k = ta.shape[1], n = tb.shape[0];
        Tensor<T> out = Tensor<T>::zeros({m, n});
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                T acc = T(0);
                const T* ra = ta.values.data() + i * k;
                const T* rb = tb.values.data() + j * k;
                for (std::size_t p = 0; p < k; ++p) acc += ra[p] * rb[p];
                out.values[i * n + j] = acc;
            }
        }
        return push(std::move(out), needs(a) || needs(b), [a, b, m, k, n](Tape& t) {
            Id self = t.current_;
            const auto& g = t.nodes_[self].grad.values;             // [m, n]
            if (t.needs(a)) {                                       // dA += G · B
                const auto& vb = t.nodes_[b].value.values;          // [n, k]
                auto& ga = t.nodes_[a].grad.values;
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        T gj = g[i * n + j];
                        if (gj == T(0)) continue;
                        for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gj * vb[j * k + p];
                    }
                }
            }
            if (t.needs(b)) {                                       // dB += Gᵀ · A
                const auto& va = t.nodes_[a].value.values;
                auto& gb = t.nodes_[b].grad.values;
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        T gj = g[i * n + j];
                        if (gj == T(0)) continue;
                        for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += gj * va[i * k + p];
                    }
                }
            }
        });
    }

    // ---- normalization and activation over the last axis ----

    Id softmax(Id a) {
        const auto& ta = value(a);
        std::size_t c = ta.shape.empty() ? 1 : ta.shape.back();
        if (c == 0) throw DataError("softmax: empty last axis");
        std::size_t rows = ta.values.size() / c;
        Tensor<T> out = ta;
        for (std::size_t r = 0; r < rows; ++r) {
            softmax_row(out.values.data() + r * c, c);
        }
        return push(std::move(out), needs(a), [a, rows, c](Tape& t) {
            Id self = t.current_;
            const auto& g = t.nodes_[self].grad.values;
            const auto& p = t.nodes_[self].value.values;
            auto& ga = t.nodes_[a].grad.values;
            for (std::size_t r = 0; r < rows; ++r) {
                T dot = T(0);
                for (std::size_t j = 0; j < c; ++j) dot += g[r * c + j] * p[r * c + j];
                for (std::size_t j = 0; j < c; ++j) {
                    ga[r * c + j] += p[r * c + j] * (g[r * c + j] - dot);
                }
            }
        });
    }

    Id layer_norm(Id x, Id gain, Id bias, T eps = T(1e-5)) {
        const auto& tx = value(x);
        const auto& tg = value(gain);
        const auto& tb = value(bias);
        std::size_t d = tx.shape.empty() ? 0 : tx.shape.back();
        if (d == 0 || tg.size() != d || tb.size() != d) {
            throw DataError("layer_norm: gain " + tg.shape_str() + " / bias " + tb.shape_str() +
                            " do not match " + tx.shape_str());
        }
        std::size_t rows = tx.values.size() / d;
        Tensor<T> out = tx;
        std::vector<T> inv_std(rows), mean(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            const T* row = tx.values.data() + r * d;
            T mu = T(0);
            for (std::size_t j = 0; j < d; ++j) mu += row[j];
            mu /= T(d);
            T var = T(0);
            for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
            var /= T(d);
            T is = T(1) / std::sqrt(var + eps);
            mean[r] = mu;
            inv_std[r] = is;
            for (std::size_t j = 0; j < d; ++j) {
                out.values[r * d + j] = (row[j] - mu) * is * tg.values[j] + tb.values[j];
            }
        }
        return push(std::move(out), needs(x) || needs(gain) || needs(bias),
                    [x, gain, bias, rows, d, mean = std::move(mean),
                     inv_std = std::move(inv_std)](Tape& t) {
                        Id self = t.current_;
                        const auto& g = t.nodes_[self].grad.values;
                        const auto& vx = t.nodes_[x].value.values;
                        const auto& vg = t.nodes_[gain].value.values;
                        for (std::size_t r = 0; r < rows; ++r) {
                            const T* row = vx.data() + r * d;
                            const T* grow = g.data() + r * d;
                            T is = inv_std[r], mu = mean[r];
                            if (t.needs(gain)) {
                                auto& gg = t.nodes_[gain].grad.values;
                                for (std::size_t j = 0; j < d; ++j) {
                                    gg[j] += grow[j] * (row[j] - mu) * is;
                                }
                            }
                            if (t.needs(bias)) {
                                auto& gb = t.nodes_[bias].grad.values;
                                for (std::size_t j = 0; j < d; ++j) gb[j] += grow[j];
                            }
                            if (t.needs(x)) {
                                auto& gx = t.nodes_[x].grad.values;
                                // dxhat, then the two mean/variance terms.
                                T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
                                for (std::size_t j = 0; j < d; ++j) {
                                    T dxhat = grow[j] * vg[j];
                                    T xhat = (row[j] - mu) * is;
                                    sum_dxhat += dxhat;
                                    sum_dxhat_xhat += dxhat * xhat;
                                }
                                for (std::size_t j = 0; j < d; ++j) {
                                    T dxhat = grow[j] * vg[j];
                                    T xhat = (row[j] - mu) * is;
                                    gx[r * d + j] += is * (dxhat - (sum_dxhat +
                                                            xhat * sum_dxhat_xhat) / T(d));
                                }
                            }
                        }
                    });
    }

    // ---- lookup, regularization ----

    Id embedding(Id table, const std::vector<int32_t>& ids) {
        const auto& tt = value(table);
        if (tt.rank() != 2) throw DataError("embedding: table must be 2-D, got " + tt.shape_str());
        std::size_t v = tt.shape[0], d = tt.shape[1];
        Tensor<T> out = Tensor<T>::zeros({ids.size(), d});
        for (std::size_t i = 0; i < ids.size(); ++i) {
            int32_t id = ids[i];
            if (id < 0 || static_cast<std::size_t>(id) >= v) {
                throw DataError("embedding: id " + std::to_string(id) + " out of range for table " +
                                tt.shape_str());
            }
            const T* src = tt.values.data() + static_cast<std::size_t>(id) * d;
            std::copy(src, src + d, out.values.data() + i * d);
        }
        return push(std::move(out), needs(table), [table, ids, d](Tape& t) {
            Id self = t.current_;
            const auto& g = t.nodes_[self].grad.values;
            auto& gt = t.nodes_[table].grad.values;
            for (std::size_t i = 0; i < ids.size(); ++i) {
                T* dst = gt.data() + static_cast<std::size_t>(ids[i]) * d;
                const T* src = g.data() + i * d;
                for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
            }
        });
    }

    // Inverted dropout; draws one uniform per element from rng.
    Id dropout(Id a, T rate, Rng& rng) {
        if (rate <= T(0)) return a;
        if (rate >= T(1)) throw DataError("dropout rate must be below 1");
        const auto& ta = value(a);
        T keep_scale = T(1) / (T(1) - rate);
        std::vector<T> mask(ta.values.size());
        Tensor<T> out = ta;
        for (std::size_t i = 0; i < mask.size(); ++i) {
            mask[i] = rng.uniform() < static_cast<double>(rate) ? T(0) : keep_scale;
            out.values[i] *= mask[i];
        }
        return push(std::move(out), needs(a), [a, mask = std::move(mask)](Tape& t) {
            Id self = t.current_;
            const auto& g = t.nodes_[self].grad.values;
            auto& ga = t.nodes_[a].grad.values;
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
        });
    }

    // ---- fused multi-head attention ----
    // q: [batch*q_len, d_model]; k, v: [batch*k_len, d_model].
    // allowed: batch*q_len*k_len flags, 1 = may attend. Disallowed logits
    // get an additive -1e9 before the row softmax.
    Id attention(Id q, Id k, Id v, const std::vector<uint8_t>& allowed, std::size_t batch,
                 std::size_t q_len, std::size_t k_len, std::size_t heads) {
        const auto& tq = value(q);
        const auto& tk = value(k);
        const auto& tv = value(v);
        std::size_t d_model = tq.shape.back();
        if (tq.shape[0] != batch * q_len || tk.shape[0] != batch * k_len ||
            tv.shape[0] != batch * k_len || tk.shape.back() != d_model ||
            tv.shape.back() != d_model) {
            throw DataError("attention: inconsistent shapes q" + tq.shape_str() + " k" +
                            tk.shape_str() + " v" + tv.shape_str());
        }
        if (d_model % heads != 0) throw DataError("attention: d_model not divisible by heads");
        if (allowed.size() != batch * q_len * k_len) {
            throw DataError("attention: mask size mismatch");
        }
        std::size_t dh = d_model / heads;
        T inv_sqrt_dh = T(1) / std::sqrt(T(dh));

        Tensor<T> out = Tensor<T>::zeros({batch * q_len, d_model});
        // Row-softmax probabilities saved for backward: [batch, heads, q_len, k_len].
        std::vector<T> probs(batch * heads * q_len * k_len);
        std::vector<T> srow(k_len);
        for (std::size_t b = 0; b < batch; ++b) {
            const uint8_t* am = allowed.data() + b * q_len * k_len;
            for (std::size_t h = 0; h < heads; ++h) {
                std::size_t off = h * dh;
                for (std::size_t i = 0; i < q_len; ++i) {
                    const T* qi = tq.values.data() + (b * q_len + i) * d_model + off;
                    for (std::size_t j = 0; j < k_len; ++j) {
                        const T* kj = tk.values.data() + (b * k_len + j) * d_model + off;
                        T s = T(0);
                        for (std::size_t p = 0; p < dh; ++p) s += qi[p] * kj[p];
                        s *= inv_sqrt_dh;
                        if (!am[i * k_len + j]) s += T(-1e9);
                        srow[j] = s;
                    }
                    softmax_row(srow.data(), k_len);
                    T* prow = probs.data() + ((b * heads + h) * q_len + i) * k_len;
                    std::copy(srow.begin(), srow.end(), prow);
                    T* orow = out.values.data() + (b * q_len + i) * d_model + off;
                    for (std::size_t j = 0; j < k_len; ++j) {
                        T pij = prow[j];
                        if (pij == T(0)) continue;
                        const T* vj = tv.values.data() + (b * k_len + j) * d_model + off;
                        for (std::size_t p = 0; p < dh; ++p) orow[p] += pij * vj[p];
                    }
                }
            }
        }
        return push(std::move(out), needs(q) || needs(k) || needs(v),
                    [q, k, v, batch, q_len, k_len, heads, dh, d_model, inv_sqrt_dh,
                     probs = std::move(probs)](Tape& t) {
                        Id self = t.current_;
                        const auto& g = t.nodes_[self].grad.values;
                        const auto& vq = t.nodes_[q].value.values;
                        const auto& vk = t.nodes_[k].value.values;
                        const auto& vv = t.nodes_[v].value.values;
                        auto& gq = t.nodes_[q].grad.values;
                        auto& gk = t.nodes_[k].grad.values;
                        auto& gv = t.nodes_[v].grad.values;
                        std::vector<T> dp(k_len), ds(k_len);
                        for (std::size_t b = 0; b < batch; ++b) {
                            for (std::size_t h = 0; h < heads; ++h) {
                                std::size_t off = h * dh;
                                for (std::size_t i = 0; i < q_len; ++i) {
                                    const T* go = g.data() + (b * q_len + i) * d_model + off;
                                    const T* prow =
                                        probs.data() + ((b * heads + h) * q_len + i) * k_len;
                                    // dV += Pᵀ dO and dP = dO Vᵀ.
                                    T dot = T(0);
                                    for (std::size_t j = 0; j < k_len; ++j) {
                                        const T* vj =
                                            vv.data() + (b * k_len + j) * d_model + off;
                                        T acc = T(0);
                                        for (std::size_t p = 0; p < dh; ++p) acc += go[p] * vj[p];
                                        dp[j] = acc;
                                        dot += acc * prow[j];
                                        if (prow[j] != T(0)) {
                                            T* gvj =
                                                gv.data() + (b * k_len + j) * d_model + off;
                                            for (std::size_t p = 0; p < dh; ++p) {
                                                gvj[p] += prow[j] * go[p];
                                            }
                                        }
                                    }
                                    // Softmax backward, then into Q and K.
                                    const T* qi = vq.data() + (b * q_len + i) * d_model + off;
                                    T* gqi = gq.data() + (b * q_len + i) * d_model + off;
                                    for (std::size_t j = 0; j < k_len; ++j) {
                                        ds[j] = prow[j] * (dp[j] - dot) * inv_sqrt_dh;
                                        if (ds[j] == T(0)) continue;
                                        const T* kj =
                                            vk.data() + (b * k_len + j) * d_model + off;
                                        T* gkj = gk.data() + (b * k_len + j) * d_model + off;
                                        for (std::size_t p = 0; p < dh; ++p) {
                                            gqi[p] += ds[j] * kj[p];
                                            gkj[p] += ds[j] * qi[p];
                                        }
                                    }
                                }
                            }
                        }
                    });
    }

    // ---- loss and reductions ----

    Id sum(Id a) {
        const auto& ta = value(a);
        T total = T(0);
        for (T v : ta.values) total += v;
        Tensor<T> out({}, {total});
        return push(std::move(out), needs(a), [a](Tape& t) {
            Id self = t.current_;
            T g = t.nodes_[self].grad.values[0];
            auto& ga = t.nodes_[a].grad.values;
            for (T& v : ga) v += g;
        });
    }

    // Label-smoothed cross entropy, mean over non-pad positions.
    // q(target) = 1-eps, q(other) = eps/(V-1).
    Id cross_entropy_ls(Id logits, const std::vector<int32_t>& targets, T eps, int32_t ignore_id) {
        const auto& tl = value(logits);
        if (tl.rank() != 2 || tl.shape[0] != targets.size()) {
            throw DataError("cross_entropy_ls: logits " + tl.shape_str() + " vs " +
                            std::to_string(targets.size()) + " targets");
        }
        std::size_t n = tl.shape[0], v = tl.shape[1];
        for (int32_t tgt : targets) {
            if (tgt != ignore_id && (tgt < 0 || static_cast<std::size_t>(tgt) >= v)) {
                throw DataError("cross_entropy_ls: target id " + std::to_string(tgt) +
                                " out of range for vocab " + std::to_string(v));
            }
        }
        std::size_t count = 0;
        for (int32_t tgt : targets) count += tgt != ignore_id;

        T off_mass = v > 1 ? eps / T(v - 1) : T(0);
        T on_mass = T(1) - eps;
        // log-softmax rows stored for backward (softmax recoverable by exp).
        std::vector<T> logp(n * v);
        T loss = T(0);
        for (std::size_t i = 0; i < n; ++i) {
            const T* row = tl.values.data() + i * v;
            T* lrow = logp.data() + i * v;
            T mx = row[0];
            for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
            T z = T(0);
            for (std::size_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
            T lz = std::log(z) + mx;
            for (std::size_t j = 0; j < v; ++j) lrow[j] = row[j] - lz;
            if (targets[i] == ignore_id) continue;
            T row_loss = T(0);
            for (std::size_t j = 0; j < v; ++j) {
                T q = j == static_cast<std::size_t>(targets[i]) ? on_mass : off_mass;
                if (q != T(0)) row_loss -= q * lrow[j];
            }
            loss += row_loss;
        }
        if (count > 0) loss /= T(count);
        Tensor<T> out({}, {loss});
        return push(std::move(out), needs(logits),
                    [logits, targets, n, v, count, on_mass, off_mass, ignore_id,
                     logp = std::move(logp)](Tape& t) {
                        if (count == 0) return;
                        Id self = t.current_;
                        T g = t.nodes_[self].grad.values[0] / T(count);
                        auto& gl = t.nodes_[logits].grad.values;
                        for (std::size_t i = 0; i < n; ++i) {
                            if (targets[i] == ignore_id) continue;
                            const T* lrow = logp.data() + i * v;
                            T* grow = gl.data() + i * v;
                            auto tgt = static_cast<std::size_t>(targets[i]);
                            for (std::size_t j = 0; j < v; ++j) {
                                T q = j == tgt ? on_mass : off_mass;
                                grow[j] += g * (std::exp(lrow[j]) - q);
                            }
                        }
                    });
    }

private:
    std::vector<Node> nodes_;
    Id current_ = -1;

    bool needs(Id id) const { return nodes_[id].needs_grad; }

    static void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
        if (a.shape != b.shape) {
            throw DataError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                            b.shape_str());
        }
    }

    Id check(Id id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
            throw DataError("tape id out of range");
        }
        return id;
    }

    void accumulate(Id target, const std::vector<T>& g) {
        if (!needs(target)) return;
        auto& dst = nodes_[target].grad.values;
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }

    static void softmax_row(T* row, std::size_t c) {
        T mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        T z = T(0);
        for (std::size_t j = 0; j < c; ++j) {
            row[j] = std::exp(row[j] - mx);
            z += row[j];
        }
        for (std::size_t j = 0; j < c; ++j) row[j] /= z;
    }

    static void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
                T av = a[i * k + p];
                if (av == T(0)) continue;
                const T* brow = b + p * n;
                T* crow = c + i * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }

    Id push(Tensor<T> value, bool needs_grad, std::function<void(Tape&)> backward) {
        Node node;
        node.grad = Tensor<T>::zeros(value.shape);
        node.value = std::move(value);
        node.needs_grad = needs_grad;
        if (needs_grad) node.backward = std::move(backward);
        nodes_.push_back(std::move(node));
        return static_cast<Id>(nodes_.size() - 1);
    }

public:
    void backward(Id root) {
        check(root);
        if (nodes_[root].value.size() != 1) {
            throw DataError("backward root must be scalar, got " +
                            nodes_[root].value.shape_str());
        }
        nodes_[root].grad.values[0] = T(1);
        for (Id i = root; i >= 0; --i) {
            if (nodes_[i].needs_grad && nodes_[i].backward) {
                current_ = i;
                nodes_[i].backward(*this);
            }
        }
        current_ = -1;
    }
};

// Scalar-valued function assembled on a fresh tape from parameter leaves.
template <typename T>
using TapeFunction =
    std::function<typename Tape<T>::Id(Tape<T>&, const std::vector<typename Tape<T>::Id>&)>;

// Central finite differences on a sampled coordinate subset against the
// reverse-mode gradients. Returns the max of
// |fd - analytic| / (|fd| + |analytic| + 1e-4). Run with T = double.
template <typename T>
double grad_check(const TapeFunction<T>& f, const std::vector<Tensor<T>>& params,
                  T eps = T(1e-4), std::size_t coords_per_param = 16, uint64_t seed = 0) {
    Tape<T> tape;
    std::vector<typename Tape<T>::Id> ids;
    ids.reserve(params.size());
    for (const auto& p : params) ids.push_back(tape.leaf(p, true));
    auto root = f(tape, ids);
    if (!std::isfinite(static_cast<double>(tape.value(root).values[0]))) {
        throw NumericError("grad_check: non-finite function value");
    }
    tape.backward(root);
    std::vector<Tensor<T>> analytic;
    analytic.reserve(ids.size());
    for (auto id : ids) analytic.push_back(tape.grad(id));

    auto eval = [&f](const std::vector<Tensor<T>>& ps) {
        Tape<T> t;
        std::vector<typename Tape<T>::Id> leaf_ids;
        leaf_ids.reserve(ps.size());
        for (const auto& p : ps) leaf_ids.push_back(t.leaf(p, false));
        return t.value(f(t, leaf_ids)).values[0];
    };

    Rng rng(Rng::mix(seed ^ 0x67726164636865ULL));
    double max_err = 0.0;
    auto work = params;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        std::size_t n = params[pi].size();
        std::vector<std::size_t> coords(n);
        for (std::size_t i = 0; i < n; ++i) coords[i] = i;
        std::size_t take = std::min(n, coords_per_param);
        if (take < n) partial_shuffle(coords, take, rng);
        for (std::size_t c = 0; c < take; ++c) {
            std::size_t idx = coords[c];
            T saved = work[pi].values[idx];
            work[pi].values[idx] = saved + eps;
            double fp = static_cast<double>(eval(work));
            work[pi].values[idx] = saved - eps;
            double fm = static_cast<double>(eval(work));
            work[pi].values[idx] = saved;
            double fd = (fp - fm) / (2.0 * static_cast<double>(eps));
            double an = static_cast<double>(analytic[pi].values[idx]);
            double err = std::abs(fd - an) / (std::abs(fd) + std::abs(an) + 1e-4);
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

}  // namespace lmtl
