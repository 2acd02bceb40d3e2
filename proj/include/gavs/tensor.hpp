#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gavs/errors.hpp"

namespace gavs {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;
using BackwardFn = std::function<void(TensorNode& self)>;

// Graph node. `grad` stays empty until backward reaches the node.
struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    BackwardFn backward;

    std::vector<double>& grad_buffer();  // allocates zeros on first use
};

// Dense row-major double tensor with reverse-mode autodiff.
//
// Tensor is a shared handle: copies alias the same node, so a Parameter held
// by a module and the one held by the optimizer see the same data. Forward ops
// never mutate their inputs; only optimizer/initialization code writes through
// mutable_data().
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value);

    // Build the result of a differentiable op. The graph edge is recorded only
    // if grad mode is on and at least one parent requires grad.
    static Tensor make_result(Shape shape, std::vector<double> values,
                              std::vector<Tensor> parents, BackwardFn backward);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t dim() const { return shape().size(); }
    std::size_t size(int axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    std::span<double> mutable_data();
    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const;
    void set_requires_grad(bool on);
    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();

    // Detached copy of the values (no graph, no grad).
    Tensor detach() const;

    // Reverse pass from a scalar. Grad buffers accumulate; zero them between passes.
    void backward() const;

    TensorNode& node() const { return *node_; }
    const NodePtr& node_ptr() const { return node_; }

private:
    explicit Tensor(NodePtr node) : node_(std::move(node)) {}
    NodePtr node_;
};

// Disables graph recording within its scope.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_mode_enabled();

// Debug switch (`--check-finite`): every op result is scanned for NaN/Inf.
void set_check_finite(bool on);
bool check_finite_enabled();

}  // namespace gavs
