#include <algorithm>
#include <cmath>
#include <limits>

#include "tau/kernels.hpp"

// Parallel twins of the serial kernels. Loops are parallel only over
// indices that own their outputs; all accumulation orders match the
// serial reference exactly, so results are bit-identical at any thread
// count.

namespace tau::kern::omp {

template <typename T>
void linear_forward(const T* w, const T* x, T* y, std::int64_t rows, std::int64_t out,
                    std::int64_t in) {
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t t = 0; t < rows; ++t) {
        for (std::int64_t o = 0; o < out; ++o) {
            const T* xt = x + t * in;
            const T* wo = w + o * in;
            T acc = 0;
            for (std::int64_t i = 0; i < in; ++i) acc += wo[i] * xt[i];
            y[t * out + o] = acc;
        }
    }
}

template <typename T>
void linear_backward_weight(const T* dy, const T* x, T* dw, std::int64_t rows, std::int64_t out,
                            std::int64_t in) {
#pragma omp parallel for schedule(static)
    for (std::int64_t o = 0; o < out; ++o) {
        T* dwo = dw + o * in;
        for (std::int64_t t = 0; t < rows; ++t) {
            const T d = dy[t * out + o];
            const T* xt = x + t * in;
            for (std::int64_t i = 0; i < in; ++i) dwo[i] += d * xt[i];
        }
    }
}

template <typename T>
void linear_backward_input(const T* w, const T* dy, T* dx, std::int64_t rows, std::int64_t out,
                           std::int64_t in) {
#pragma omp parallel for schedule(static)
    for (std::int64_t t = 0; t < rows; ++t) {
        const T* dyt = dy + t * out;
        T* dxt = dx + t * in;
        for (std::int64_t o = 0; o < out; ++o) {
            const T d = dyt[o];
            const T* wo = w + o * in;
            for (std::int64_t i = 0; i < in; ++i) dxt[i] += wo[i] * d;
        }
    }
}

template <typename T>
void lowrank_forward(const T* a, const T* b, const T* x, T* tmp, T* y, std::int64_t rows,
                     std::int64_t out, std::int64_t in, std::int64_t rank, T scale) {
#pragma omp parallel for schedule(static)
    for (std::int64_t t = 0; t < rows; ++t) {
        const T* xt = x + t * in;
        T* tt = tmp + t * rank;
        for (std::int64_t r = 0; r < rank; ++r) {
            const T* br = b + r * in;
            T acc = 0;
            for (std::int64_t i = 0; i < in; ++i) acc += br[i] * xt[i];
            tt[r] = acc;
        }
        T* yt = y + t * out;
        for (std::int64_t o = 0; o < out; ++o) {
            const T* ao = a + o * rank;
            T acc = 0;
            for (std::int64_t r = 0; r < rank; ++r) acc += ao[r] * tt[r];
            yt[o] += scale * acc;
        }
    }
}

template <typename T>
void lowrank_backward(const T* a, const T* b, const T* x, const T* tmp, const T* dy, T* da, T* db,
                      T* dx, T* dtmp, std::int64_t rows, std::int64_t out, std::int64_t in,
                      std::int64_t rank, T scale, bool accumulate_params) {
#pragma omp parallel for schedule(static)
    for (std::int64_t t = 0; t < rows; ++t) {
        const T* dyt = dy + t * out;
        T* dtt = dtmp + t * rank;
        for (std::int64_t r = 0; r < rank; ++r) {
            T acc = 0;
            for (std::int64_t o = 0; o < out; ++o) acc += a[o * rank + r] * dyt[o];
            dtt[r] = scale * acc;
        }
    }
    if (accumulate_params) {
#pragma omp parallel for schedule(static)
        for (std::int64_t o = 0; o < out; ++o) {
            T* dao = da + o * rank;
            for (std::int64_t t = 0; t < rows; ++t) {
                const T d = scale * dy[t * out + o];
                const T* tt = tmp + t * rank;
                for (std::int64_t r = 0; r < rank; ++r) dao[r] += d * tt[r];
            }
        }
#pragma omp parallel for schedule(static)
        for (std::int64_t r = 0; r < rank; ++r) {
            T* dbr = db + r * in;
            for (std::int64_t t = 0; t < rows; ++t) {
                const T d = dtmp[t * rank + r];
                const T* xt = x + t * in;
                for (std::int64_t i = 0; i < in; ++i) dbr[i] += d * xt[i];
            }
        }
    }
#pragma omp parallel for schedule(static)
    for (std::int64_t t = 0; t < rows; ++t) {
        const T* dtt = dtmp + t * rank;
        T* dxt = dx + t * in;
        for (std::int64_t r = 0; r < rank; ++r) {
            const T d = dtt[r];
            const T* br = b + r * in;
            for (std::int64_t i = 0; i < in; ++i) dxt[i] += br[i] * d;
        }
    }
}

template <typename T>
void layernorm_forward(const T* x, const T* gain, const T* bias, T* y, T* mean, T* rstd,
                       std::int64_t rows, std::int64_t dim, T eps) {
#pragma omp parallel for schedule(static)
    for (std::int64_t t = 0; t < rows; ++t) {
        const T* xt = x + t * dim;
        T* yt = y + t * dim;
        T mu = 0;
        for (std::int64_t i = 0; i < dim; ++i) mu += xt[i];
        mu /= static_cast<T>(dim);
        T var = 0;
        for (std::int64_t i = 0; i < dim; ++i) {
            const T d = xt[i] - mu;
            var += d * d;
        }
        var /= static_cast<T>(dim);
        const T rs = T(1) / std::sqrt(var + eps);
        mean[t] = mu;
        rstd[t] = rs;
        for (std::int64_t i = 0; i < dim; ++i) yt[i] = (xt[i] - mu) * rs * gain[i] + bias[i];
    }
}

template <typename T>
void layernorm_backward(const T* dy, const T* x, const T* gain, const T* mean, const T* rstd,
                        T* dx, T* dgain, T* dbias, std::int64_t rows, std::int64_t dim,
                        bool accumulate_params) {
#pragma omp parallel for schedule(static)
    for (std::int64_t t = 0; t < rows; ++t) {
        const T* dyt = dy + t * dim;
        const T* xt = x + t * dim;
        T* dxt = dx + t * dim;
        const T mu = mean[t];
        const T rs = rstd[t];
        T sum_g = 0, sum_gx = 0;
        for (std::int64_t i = 0; i < dim; ++i) {
            const T xhat = (xt[i] - mu) * rs;
            const T g = dyt[i] * gain[i];
            sum_g += g;
            sum_gx += g * xhat;
        }
        const T inv_dim = T(1) / static_cast<T>(dim);
        for (std::int64_t i = 0; i < dim; ++i) {
            const T xhat = (xt[i] - mu) * rs;
            const T g = dyt[i] * gain[i];
            dxt[i] += (g - sum_g * inv_dim - xhat * sum_gx * inv_dim) * rs;
        }
    }
    if (accumulate_params) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < dim; ++i) {
            T dg = 0, db = 0;
            for (std::int64_t t = 0; t < rows; ++t) {
                const T xhat = (x[t * dim + i] - mean[t]) * rstd[t];
                dg += dy[t * dim + i] * xhat;
                db += dy[t * dim + i];
            }
            dgain[i] += dg;
            dbias[i] += db;
        }
    }
}

template <typename T>
void gelu_forward(const T* x, T* y, std::int64_t n) {
    constexpr T kInvSqrt2 = T(0.7071067811865475244);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        y[i] = T(0.5) * x[i] * (T(1) + std::erf(x[i] * kInvSqrt2));
    }
}

template <typename T>
void gelu_backward(const T* dy, const T* x, T* dx, std::int64_t n) {
    constexpr T kInvSqrt2 = T(0.7071067811865475244);
    constexpr T kInvSqrt2Pi = T(0.3989422804014326779);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        const T cdf = T(0.5) * (T(1) + std::erf(x[i] * kInvSqrt2));
        const T pdf = kInvSqrt2Pi * std::exp(T(-0.5) * x[i] * x[i]);
        dx[i] += dy[i] * (cdf + x[i] * pdf);
    }
}

template <typename T>
void attention_forward(const T* q, const T* k, const T* v, T* probs, T* out, std::int64_t rows,
                       std::int64_t heads, std::int64_t head_dim) {
    const std::int64_t dim = heads * head_dim;
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(head_dim));
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t h = 0; h < heads; ++h) {
        for (std::int64_t t = 0; t < rows; ++t) {
            const std::int64_t hs = h * head_dim;
            T* p = probs + (h * rows + t) * rows;
            const T* qt = q + t * dim + hs;
            T max_score = -std::numeric_limits<T>::infinity();
            for (std::int64_t s = 0; s <= t; ++s) {
                const T* ks = k + s * dim + hs;
                T acc = 0;
                for (std::int64_t j = 0; j < head_dim; ++j) acc += qt[j] * ks[j];
                acc *= inv_sqrt;
                p[s] = acc;
                if (acc > max_score) max_score = acc;
            }
            T sum = 0;
            for (std::int64_t s = 0; s <= t; ++s) {
                p[s] = std::exp(p[s] - max_score);
                sum += p[s];
            }
            const T inv_sum = T(1) / sum;
            for (std::int64_t s = 0; s <= t; ++s) p[s] *= inv_sum;
            T* ot = out + t * dim + hs;
            for (std::int64_t j = 0; j < head_dim; ++j) {
                T acc = 0;
                for (std::int64_t s = 0; s <= t; ++s) acc += p[s] * v[s * dim + hs + j];
                ot[j] = acc;
            }
        }
    }
}

template <typename T>
void attention_backward(const T* q, const T* k, const T* v, const T* probs, const T* dout, T* dq,
                        T* dk, T* dv, T* dscore, std::int64_t rows, std::int64_t heads,
                        std::int64_t head_dim) {
    const std::int64_t dim = heads * head_dim;
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(head_dim));
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t h = 0; h < heads; ++h) {
        for (std::int64_t s = 0; s < rows; ++s) {
            const std::int64_t hs = h * head_dim;
            T* dvs = dv + s * dim + hs;
            for (std::int64_t t = s; t < rows; ++t) {
                const T p = probs[(h * rows + t) * rows + s];
                const T* dot_ = dout + t * dim + hs;
                for (std::int64_t j = 0; j < head_dim; ++j) dvs[j] += p * dot_[j];
            }
        }
    }
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t h = 0; h < heads; ++h) {
        for (std::int64_t t = 0; t < rows; ++t) {
            const std::int64_t hs = h * head_dim;
            T* drow = dscore + (h * rows + t) * rows;
            const T* prow = probs + (h * rows + t) * rows;
            const T* dot_ = dout + t * dim + hs;
            for (std::int64_t s = 0; s <= t; ++s) {
                const T* vs = v + s * dim + hs;
                T acc = 0;
                for (std::int64_t j = 0; j < head_dim; ++j) acc += dot_[j] * vs[j];
                drow[s] = acc;
            }
            T dot_pd = 0;
            for (std::int64_t s = 0; s <= t; ++s) dot_pd += drow[s] * prow[s];
            for (std::int64_t s = 0; s <= t; ++s) drow[s] = prow[s] * (drow[s] - dot_pd);
        }
    }
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t h = 0; h < heads; ++h) {
        for (std::int64_t t = 0; t < rows; ++t) {
            const std::int64_t hs = h * head_dim;
            T* dqt = dq + t * dim + hs;
            const T* drow = dscore + (h * rows + t) * rows;
            for (std::int64_t s = 0; s <= t; ++s) {
                const T d = drow[s] * inv_sqrt;
                const T* ks = k + s * dim + hs;
                for (std::int64_t j = 0; j < head_dim; ++j) dqt[j] += d * ks[j];
            }
        }
    }
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t h = 0; h < heads; ++h) {
        for (std::int64_t s = 0; s < rows; ++s) {
            const std::int64_t hs = h * head_dim;
            T* dks = dk + s * dim + hs;
            for (std::int64_t t = s; t < rows; ++t) {
                const T d = dscore[(h * rows + t) * rows + s] * inv_sqrt;
                const T* qt = q + t * dim + hs;
                for (std::int64_t j = 0; j < head_dim; ++j) dks[j] += d * qt[j];
            }
        }
    }
}

template <typename T>
T softmax_xent(const T* logits, const std::int32_t* targets, const T* weight, T* dlogits,
               T* row_loss, std::int64_t rows, std::int64_t vocab) {
#pragma omp parallel for schedule(static)
    for (std::int64_t t = 0; t < rows; ++t) {
        T* dl = (dlogits != nullptr) ? dlogits + t * vocab : nullptr;
        if (weight[t] == T(0)) {
            if (dl != nullptr) {
                for (std::int64_t o = 0; o < vocab; ++o) dl[o] = 0;
            }
            row_loss[t] = 0;
            continue;
        }
        const T* l = logits + t * vocab;
        T max_logit = l[0];
        for (std::int64_t o = 1; o < vocab; ++o) {
            if (l[o] > max_logit) max_logit = l[o];
        }
        T sum = 0;
        for (std::int64_t o = 0; o < vocab; ++o) sum += std::exp(l[o] - max_logit);
        const T log_sum = std::log(sum) + max_logit;
        const std::int32_t tgt = targets[t];
        row_loss[t] = log_sum - l[tgt];
        if (dl != nullptr) {
            const T inv_sum = T(1) / sum;
            for (std::int64_t o = 0; o < vocab; ++o) {
                const T p = std::exp(l[o] - max_logit) * inv_sum;
                dl[o] = weight[t] * (p - (o == tgt ? T(1) : T(0)));
            }
        }
    }
    T total = 0;
    for (std::int64_t t = 0; t < rows; ++t) total += weight[t] * row_loss[t];
    return total;
}

template <typename T>
T squared_norm(const T* x, std::int64_t n) {
    constexpr std::int64_t kChunks = 64;
    T partial[kChunks] = {};
    const std::int64_t len = (n + kChunks - 1) / kChunks;
#pragma omp parallel for schedule(static)
    for (std::int64_t c = 0; c < kChunks; ++c) {
        const std::int64_t lo = c * len;
        const std::int64_t hi = std::min(n, lo + len);
        T acc = 0;
        for (std::int64_t i = lo; i < hi; ++i) acc += x[i] * x[i];
        partial[c] = acc;
    }
    T total = 0;
    for (std::int64_t c = 0; c < kChunks; ++c) total += partial[c];
    return total;
}

template <typename T>
void adamw_step(T* params, const T* grads, T* m, T* v, std::int64_t n, T lr, T beta1, T beta2,
                T eps, T weight_decay, T bias1, T bias2, T grad_scale) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        const T g = grads[i] * grad_scale;
        m[i] = beta1 * m[i] + (T(1) - beta1) * g;
        v[i] = beta2 * v[i] + (T(1) - beta2) * g * g;
        const T mhat = m[i] * bias1;
        const T vhat = v[i] * bias2;
        params[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * params[i]);
    }
}

#define TAU_INSTANTIATE_KERNELS_OMP(T)                                                           \
    template void linear_forward<T>(const T*, const T*, T*, std::int64_t, std::int64_t,         \
                                    std::int64_t);                                              \
    template void linear_backward_weight<T>(const T*, const T*, T*, std::int64_t, std::int64_t, \
                                            std::int64_t);                                      \
    template void linear_backward_input<T>(const T*, const T*, T*, std::int64_t, std::int64_t,  \
                                           std::int64_t);                                       \
    template void lowrank_forward<T>(const T*, const T*, const T*, T*, T*, std::int64_t,        \
                                     std::int64_t, std::int64_t, std::int64_t, T);              \
    template void lowrank_backward<T>(const T*, const T*, const T*, const T*, const T*, T*, T*, \
                                      T*, T*, std::int64_t, std::int64_t, std::int64_t,         \
                                      std::int64_t, T, bool);                                   \
    template void layernorm_forward<T>(const T*, const T*, const T*, T*, T*, T*, std::int64_t,  \
                                       std::int64_t, T);                                        \
    template void layernorm_backward<T>(const T*, const T*, const T*, const T*, const T*, T*,   \
                                        T*, T*, std::int64_t, std::int64_t, bool);              \
    template void gelu_forward<T>(const T*, T*, std::int64_t);                                  \
    template void gelu_backward<T>(const T*, const T*, T*, std::int64_t);                       \
    template void attention_forward<T>(const T*, const T*, const T*, T*, T*, std::int64_t,      \
                                       std::int64_t, std::int64_t);                             \
    template void attention_backward<T>(const T*, const T*, const T*, const T*, const T*, T*,   \
                                        T*, T*, T*, std::int64_t, std::int64_t, std::int64_t);  \
    template T softmax_xent<T>(const T*, const std::int32_t*, const T*, T*, T*, std::int64_t,   \
                               std::int64_t);                                                   \
    template T squared_norm<T>(const T*, std::int64_t);                                         \
    template void adamw_step<T>(T*, const T*, T*, T*, std::int64_t, T, T, T, T, T, T, T, T);

TAU_INSTANTIATE_KERNELS_OMP(float)
TAU_INSTANTIATE_KERNELS_OMP(double)
#undef TAU_INSTANTIATE_KERNELS_OMP

}  // namespace tau::kern::omp
