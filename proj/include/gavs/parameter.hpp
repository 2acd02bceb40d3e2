#pragma once

#include <functional>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "gavs/tensor.hpp"

namespace gavs {

struct Parameter {
    std::string name;
    Tensor tensor;
    bool trainable = true;
};

// Ordered, name-unique registry of a model's parameters. Modules keep Tensor
// handles to the entries they create; toggling `trainable` here also toggles
// requires_grad so frozen subgraphs are not differentiated at all.
//
// Random initializers draw from a stream derived from (seed, name), so a
// parameter's initial value does not depend on which other parameters exist.
class ParameterStore {
public:
    explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed) {}

    Tensor add(const std::string& name, Tensor init);
    Tensor zeros(const std::string& name, Shape shape);
    Tensor ones(const std::string& name, Shape shape);
    // U(-bound, bound) with bound = 1/sqrt(fan_in).
    Tensor uniform(const std::string& name, Shape shape, std::size_t fan_in);
    Tensor uniform_range(const std::string& name, Shape shape, double bound);

    bool contains(const std::string& name) const;
    Parameter& get(const std::string& name);
    const Parameter& get(const std::string& name) const;

    std::vector<Parameter>& all() { return params_; }
    const std::vector<Parameter>& all() const { return params_; }

    void set_trainable(const std::string& name, bool on);
    void set_all_trainable(bool on);
    // Applies `on` to every parameter whose name satisfies `match`.
    void set_trainable_if(const std::function<bool(const std::string&)>& match, bool on);

    std::vector<std::string> trainable_names() const;
    std::size_t scalar_count(bool trainable_only) const;
    void zero_grad();

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_ = 0;
    std::vector<Parameter> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace gavs
