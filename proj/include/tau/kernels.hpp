#pragma once

#include <cstdint>

namespace tau::kern {

// Two implementations of the same kernel contracts: `serial` is the
// reference, `omp` the parallel one. Every omp loop is owner-computes
// with a fixed-order inner reduction, so the two produce bit-identical
// results and the runtime switch never changes numerics.
//
// Shapes are row-major. "+=" in a comment means the kernel accumulates.

bool parallel_enabled();
void set_parallel(bool on);

namespace serial {

// Y[t,o] = sum_i W[o,i] * X[t,i]
template <typename T>
void linear_forward(const T* w, const T* x, T* y, std::int64_t rows, std::int64_t out,
                    std::int64_t in);

// dW[o,i] += sum_t dY[t,o] * X[t,i]
template <typename T>
void linear_backward_weight(const T* dy, const T* x, T* dw, std::int64_t rows, std::int64_t out,
                            std::int64_t in);

// dX[t,i] += sum_o W[o,i] * dY[t,o]
template <typename T>
void linear_backward_input(const T* w, const T* dy, T* dx, std::int64_t rows, std::int64_t out,
                           std::int64_t in);

// tmp[t,r] = sum_i B[r,i] * X[t,i];  Y[t,o] += scale * sum_r A[o,r] * tmp[t,r]
template <typename T>
void lowrank_forward(const T* a, const T* b, const T* x, T* tmp, T* y, std::int64_t rows,
                     std::int64_t out, std::int64_t in, std::int64_t rank, T scale);

// Backward of lowrank_forward; dtmp is scratch of shape [rows x rank].
template <typename T>
void lowrank_backward(const T* a, const T* b, const T* x, const T* tmp, const T* dy, T* da, T* db,
                      T* dx, T* dtmp, std::int64_t rows, std::int64_t out, std::int64_t in,
                      std::int64_t rank, T scale, bool accumulate_params);

template <typename T>
void layernorm_forward(const T* x, const T* gain, const T* bias, T* y, T* mean, T* rstd,
                       std::int64_t rows, std::int64_t dim, T eps);

template <typename T>
void layernorm_backward(const T* dy, const T* x, const T* gain, const T* mean, const T* rstd,
                        T* dx, T* dgain, T* dbias, std::int64_t rows, std::int64_t dim,
                        bool accumulate_params);

template <typename T>
void gelu_forward(const T* x, T* y, std::int64_t n);

template <typename T>
void gelu_backward(const T* dy, const T* x, T* dx, std::int64_t n);

// Causal multi-head attention. probs has shape [heads x rows x rows],
// row-normalized over s <= t; entries above the diagonal are untouched.
template <typename T>
void attention_forward(const T* q, const T* k, const T* v, T* probs, T* out, std::int64_t rows,
                       std::int64_t heads, std::int64_t head_dim);

// dscore is scratch of shape [heads x rows x rows].
template <typename T>
void attention_backward(const T* q, const T* k, const T* v, const T* probs, const T* dout, T* dq,
                        T* dk, T* dv, T* dscore, std::int64_t rows, std::int64_t heads,
                        std::int64_t head_dim);

// Softmax cross-entropy over selected rows. weight[t] == 0 skips row t;
// otherwise loss += weight[t] * (-log softmax(logits[t])[target[t]]) and
// dlogits[t] = weight[t] * (softmax(logits[t]) - onehot(target[t])).
// row_loss holds the unweighted per-row loss for inspection.
template <typename T>
T softmax_xent(const T* logits, const std::int32_t* targets, const T* weight, T* dlogits,
               T* row_loss, std::int64_t rows, std::int64_t vocab);

// Deterministic squared-norm: fixed 64-chunk partial sums.
template <typename T>
T squared_norm(const T* x, std::int64_t n);

template <typename T>
void adamw_step(T* params, const T* grads, T* m, T* v, std::int64_t n, T lr, T beta1, T beta2,
                T eps, T weight_decay, T bias1, T bias2, T grad_scale);

}  // namespace serial

namespace omp {

template <typename T>
void linear_forward(const T* w, const T* x, T* y, std::int64_t rows, std::int64_t out,
                    std::int64_t in);
template <typename T>
void linear_backward_weight(const T* dy, const T* x, T* dw, std::int64_t rows, std::int64_t out,
                            std::int64_t in);
template <typename T>
void linear_backward_input(const T* w, const T* dy, T* dx, std::int64_t rows, std::int64_t out,
                           std::int64_t in);
template <typename T>
void lowrank_forward(const T* a, const T* b, const T* x, T* tmp, T* y, std::int64_t rows,
                     std::int64_t out, std::int64_t in, std::int64_t rank, T scale);
template <typename T>
void lowrank_backward(const T* a, const T* b, const T* x, const T* tmp, const T* dy, T* da, T* db,
                      T* dx, T* dtmp, std::int64_t rows, std::int64_t out, std::int64_t in,
                      std::int64_t rank, T scale, bool accumulate_params);
template <typename T>
void layernorm_forward(const T* x, const T* gain, const T* bias, T* y, T* mean, T* rstd,
                       std::int64_t rows, std::int64_t dim, T eps);
template <typename T>
void layernorm_backward(const T* dy, const T* x, const T* gain, const T* mean, const T* rstd,
                        T* dx, T* dgain, T* dbias, std::int64_t rows, std::int64_t dim,
                        bool accumulate_params);
template <typename T>
void gelu_forward(const T* x, T* y, std::int64_t n);
template <typename T>
void gelu_backward(const T* dy, const T* x, T* dx, std::int64_t n);
template <typename T>
void attention_forward(const T* q, const T* k, const T* v, T* probs, T* out, std::int64_t rows,
                       std::int64_t heads, std::int64_t head_dim);
template <typename T>
void attention_backward(const T* q, const T* k, const T* v, const T* probs, const T* dout, T* dq,
                        T* dk, T* dv, T* dscore, std::int64_t rows, std::int64_t heads,
                        std::int64_t head_dim);
template <typename T>
T softmax_xent(const T* logits, const std::int32_t* targets, const T* weight, T* dlogits,
               T* row_loss, std::int64_t rows, std::int64_t vocab);
template <typename T>
T squared_norm(const T* x, std::int64_t n);
template <typename T>
void adamw_step(T* params, const T* grads, T* m, T* v, std::int64_t n, T lr, T beta1, T beta2,
                T eps, T weight_decay, T bias1, T bias2, T grad_scale);

}  // namespace omp

// Runtime-dispatched entry points used by the model.

template <typename T>
void linear_forward(const T* w, const T* x, T* y, std::int64_t rows, std::int64_t out,
                    std::int64_t in) {
    parallel_enabled() ? omp::linear_forward(w, x, y, rows, out, in)
                       : serial::linear_forward(w, x, y, rows, out, in);
}
template <typename T>
void linear_backward_weight(const T* dy, const T* x, T* dw, std::int64_t rows, std::int64_t out,
                            std::int64_t in) {
    parallel_enabled() ? omp::linear_backward_weight(dy, x, dw, rows, out, in)
                       : serial::linear_backward_weight(dy, x, dw, rows, out, in);
}
template <typename T>
void linear_backward_input(const T* w, const T* dy, T* dx, std::int64_t rows, std::int64_t out,
                           std::int64_t in) {
    parallel_enabled() ? omp::linear_backward_input(w, dy, dx, rows, out, in)
                       : serial::linear_backward_input(w, dy, dx, rows, out, in);
}
template <typename T>
void lowrank_forward(const T* a, const T* b, const T* x, T* tmp, T* y, std::int64_t rows,
                     std::int64_t out, std::int64_t in, std::int64_t rank, T scale) {
    parallel_enabled() ? omp::lowrank_forward(a, b, x, tmp, y, rows, out, in, rank, scale)
                       : serial::lowrank_forward(a, b, x, tmp, y, rows, out, in, rank, scale);
}
template <typename T>
void lowrank_backward(const T* a, const T* b, const T* x, const T* tmp, const T* dy, T* da, T* db,
                      T* dx, T* dtmp, std::int64_t rows, std::int64_t out, std::int64_t in,
                      std::int64_t rank, T scale, bool accumulate_params) {
    parallel_enabled() ? omp::lowrank_backward(a, b, x, tmp, dy, da, db, dx, dtmp, rows, out, in,
                                               rank, scale, accumulate_params)
                       : serial::lowrank_backward(a, b, x, tmp, dy, da, db, dx, dtmp, rows, out,
                                                  in, rank, scale, accumulate_params);
}
template <typename T>
void layernorm_forward(const T* x, const T* gain, const T* bias, T* y, T* mean, T* rstd,
                       std::int64_t rows, std::int64_t dim, T eps) {
    parallel_enabled() ? omp::layernorm_forward(x, gain, bias, y, mean, rstd, rows, dim, eps)
                       : serial::layernorm_forward(x, gain, bias, y, mean, rstd, rows, dim, eps);
}
template <typename T>
void layernorm_backward(const T* dy, const T* x, const T* gain, const T* mean, const T* rstd,
                        T* dx, T* dgain, T* dbias, std::int64_t rows, std::int64_t dim,
                        bool accumulate_params) {
    parallel_enabled() ? omp::layernorm_backward(dy, x, gain, mean, rstd, dx, dgain, dbias, rows,
                                                 dim, accumulate_params)
                       : serial::layernorm_backward(dy, x, gain, mean, rstd, dx, dgain, dbias,
                                                    rows, dim, accumulate_params);
}
template <typename T>
void gelu_forward(const T* x, T* y, std::int64_t n) {
    parallel_enabled() ? omp::gelu_forward(x, y, n) : serial::gelu_forward(x, y, n);
}
template <typename T>
void gelu_backward(const T* dy, const T* x, T* dx, std::int64_t n) {
    parallel_enabled() ? omp::gelu_backward(dy, x, dx, n) : serial::gelu_backward(dy, x, dx, n);
}
template <typename T>
void attention_forward(const T* q, const T* k, const T* v, T* probs, T* out, std::int64_t rows,
                       std::int64_t heads, std::int64_t head_dim) {
    parallel_enabled() ? omp::attention_forward(q, k, v, probs, out, rows, heads, head_dim)
                       : serial::attention_forward(q, k, v, probs, out, rows, heads, head_dim);
}
template <typename T>
void attention_backward(const T* q, const T* k, const T* v, const T* probs, const T* dout, T* dq,
                        T* dk, T* dv, T* dscore, std::int64_t rows, std::int64_t heads,
                        std::int64_t head_dim) {
    parallel_enabled()
        ? omp::attention_backward(q, k, v, probs, dout, dq, dk, dv, dscore, rows, heads, head_dim)
        : serial::attention_backward(q, k, v, probs, dout, dq, dk, dv, dscore, rows, heads,
                                     head_dim);
}
template <typename T>
T softmax_xent(const T* logits, const std::int32_t* targets, const T* weight, T* dlogits,
               T* row_loss, std::int64_t rows, std::int64_t vocab) {
    return parallel_enabled()
               ? omp::softmax_xent(logits, targets, weight, dlogits, row_loss, rows, vocab)
               : serial::softmax_xent(logits, targets, weight, dlogits, row_loss, rows, vocab);
}
template <typename T>
T squared_norm(const T* x, std::int64_t n) {
    return parallel_enabled() ? omp::squared_norm(x, n) : serial::squared_norm(x, n);
}
template <typename T>
void adamw_step(T* params, const T* grads, T* m, T* v, std::int64_t n, T lr, T beta1, T beta2,
                T eps, T weight_decay, T bias1, T bias2, T grad_scale) {
    parallel_enabled() ? omp::adamw_step(params, grads, m, v, n, lr, beta1, beta2, eps,
                                         weight_decay, bias1, bias2, grad_scale)
                       : serial::adamw_step(params, grads, m, v, n, lr, beta1, beta2, eps,
                                            weight_decay, bias1, bias2, grad_scale);
}

}  // namespace tau::kern
