#include "gavs/layers.hpp"

#include <cmath>

namespace gavs {

Tensor activate(const Tensor& x, Activation act) {
    switch (act) {
        case Activation::Relu:
            return relu(x);
        case Activation::Gelu:
            return gelu(x);
        case Activation::Identity:
            return x;
    }
    return x;
}

Linear Linear::create(ParameterStore& store, const std::string& prefix, std::size_t in,
                      std::size_t out, bool with_bias) {
    Linear l;
    l.weight = store.uniform(prefix + ".w", {in, out}, in);
    if (with_bias) l.bias = store.zeros(prefix + ".b", {out});
    return l;
}

LayerNorm LayerNorm::create(ParameterStore& store, const std::string& prefix, std::size_t dim) {
    LayerNorm ln;
    ln.gain = store.ones(prefix + ".g", {dim});
    ln.bias = store.zeros(prefix + ".b", {dim});
    return ln;
}

Mlp Mlp::create(ParameterStore& store, const std::string& prefix, std::size_t in,
                std::size_t hidden, std::size_t out, Activation act) {
    Mlp m;
    m.fc1 = Linear::create(store, prefix + ".fc1", in, hidden);
    m.fc2 = Linear::create(store, prefix + ".fc2", hidden, out);
    m.act = act;
    return m;
}

BottleneckAdapter BottleneckAdapter::create(ParameterStore& store, const std::string& prefix,
                                            std::size_t dim, std::size_t rank) {
    BottleneckAdapter a;
    a.down = Linear::create(store, prefix + ".down", dim, rank);
    a.up.weight = store.zeros(prefix + ".up.w", {rank, dim});
    a.up.bias = store.zeros(prefix + ".up.b", {dim});
    return a;
}

MultiHeadAttention MultiHeadAttention::create(ParameterStore& store, const std::string& prefix,
                                              std::size_t dim, std::size_t heads) {
    if (heads == 0 || dim % heads != 0) {
        throw ConfigError(prefix + ": dim " + std::to_string(dim) + " not divisible by " +
                          std::to_string(heads) + " heads");
    }
    MultiHeadAttention a;
    a.q = Linear::create(store, prefix + ".q", dim, dim);
    // A key bias only shifts every score of a query by the same amount, which
    // softmax ignores, so keys have none.
    a.k = Linear::create(store, prefix + ".k", dim, dim, false);
    a.v = Linear::create(store, prefix + ".v", dim, dim);
    a.out = Linear::create(store, prefix + ".o", dim, dim);
    a.heads = heads;
    return a;
}

Tensor MultiHeadAttention::operator()(const Tensor& query, const Tensor& key,
                                      const Tensor& value) const {
    if (query.dim() != 3 || key.dim() != 3 || value.dim() != 3) {
        throw ShapeError("attention expects [B,n,d] inputs, got " + shape_str(query.shape()) +
                         ", " + shape_str(key.shape()) + ", " + shape_str(value.shape()));
    }
    const std::size_t batch = query.size(0);
    const std::size_t n = query.size(1);
    const std::size_t m = key.size(1);
    const std::size_t d = query.size(2);
    if (key.size(2) != d || value.size(2) != d || key.size(0) != batch ||
        value.size(0) != batch || value.size(1) != m) {
        throw ShapeError("attention dim mismatch: query " + shape_str(query.shape()) + ", key " +
                         shape_str(key.shape()) + ", value " + shape_str(value.shape()));
    }
    const std::size_t dh = d / heads;
    auto split = [&](const Tensor& x, std::size_t len) {
        return permute(reshape(x, {batch, len, heads, dh}), {0, 2, 1, 3});
    };
    Tensor qh = split(q(query), n);
    Tensor kh = split(k(key), m);
    Tensor vh = split(v(value), m);
    Tensor scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
    Tensor attended = matmul(softmax(scores, -1), vh);  // [B, h, n, dh]
    return out(reshape(permute(attended, {0, 2, 1, 3}), {batch, n, d}));
}

}  // namespace gavs
