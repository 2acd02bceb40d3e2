#pragma once

#include <string>

#include "gavs/ops.hpp"
#include "gavs/parameter.hpp"

// Parameterized building blocks shared by the encoders and the decoder.
namespace gavs {

enum class Activation { Relu, Gelu, Identity };

Tensor activate(const Tensor& x, Activation act);

struct Linear {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out], or undefined

    static Linear create(ParameterStore& store, const std::string& prefix, std::size_t in,
                         std::size_t out, bool with_bias = true);
    Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
};

struct LayerNorm {
    Tensor gain;
    Tensor bias;
    double eps = 1e-5;

    static LayerNorm create(ParameterStore& store, const std::string& prefix, std::size_t dim);
    Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias, eps); }
};

// Two-layer perceptron: fc2(act(fc1(x))).
struct Mlp {
    Linear fc1;
    Linear fc2;
    Activation act = Activation::Gelu;

    static Mlp create(ParameterStore& store, const std::string& prefix, std::size_t in,
                      std::size_t hidden, std::size_t out, Activation act);
    Tensor operator()(const Tensor& x) const { return fc2(activate(fc1(x), act)); }
};

// Bottleneck adapter. `delta` is up(act(down(h))); `operator()` adds it
// residually. The up-projection starts at zero, so a fresh adapter is an
// exact identity.
struct BottleneckAdapter {
    Linear down;
    Linear up;
    Activation act = Activation::Relu;

    static BottleneckAdapter create(ParameterStore& store, const std::string& prefix,
                                    std::size_t dim, std::size_t rank);
    Tensor delta(const Tensor& h) const { return up(activate(down(h), act)); }
    Tensor operator()(const Tensor& h) const { return add(h, delta(h)); }
};

// Multi-head scaled dot-product attention over [B, n, d] query and [B, m, d]
// key/value sets. Returns [B, n, d].
struct MultiHeadAttention {
    Linear q;
    Linear k;
    Linear v;
    Linear out;
    std::size_t heads = 1;

    static MultiHeadAttention create(ParameterStore& store, const std::string& prefix,
                                     std::size_t dim, std::size_t heads);
    Tensor operator()(const Tensor& query, const Tensor& key, const Tensor& value) const;
};

}  // namespace gavs
