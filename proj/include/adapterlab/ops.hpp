#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "adapterlab/tensor.hpp"

namespace adapterlab {

enum class Nonlinearity { kRelu, kGelu, kTanh };

std::string_view to_string(Nonlinearity n);
Nonlinearity parse_nonlinearity(std::string_view name);

namespace ops {

// a[r x k] . b[k x c]
Tensor matmul(const Tensor& a, const Tensor& b);

// x[... x k] . w[k x c] + bias[c]. `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);  // tanh approximation
Tensor tanh(const Tensor& x);
Tensor activate(const Tensor& x, Nonlinearity n);

// Softmax over the last axis.
Tensor softmax(const Tensor& x);

// a[B x r x k] . b[B x k x c], or b[B x c x k] transposed when transpose_b.
Tensor batched_matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);

// [n x len x d] -> [n*h x len x d/h] and back.
Tensor split_heads(const Tensor& x, std::size_t heads);
Tensor merge_heads(const Tensor& x, std::size_t heads);

// Row lookup: returns [prefix..., d] where prefix is the shape of ids.
Tensor embedding(const Tensor& table, std::span<const std::size_t> ids, const Shape& prefix);

// x[n x len x d] -> x[:, position, :] as [n x d].
Tensor select_position(const Tensor& x, std::size_t position);

// Treats x as [rows x d] over its last axis; picks the given rows.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);

Tensor reshape(const Tensor& x, Shape shape);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Mean negative log-likelihood of the labelled class under softmax(logits).
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

}  // namespace ops
}  // namespace adapterlab
