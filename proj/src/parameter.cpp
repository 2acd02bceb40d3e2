#include "gavs/parameter.hpp"

#include <cmath>
#include <random>

#include "gavs/random.hpp"

namespace gavs {

Tensor ParameterStore::add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw ContractError("duplicate parameter name '" + name + "'");
    init.set_requires_grad(true);
    index_.emplace(name, params_.size());
    params_.push_back(Parameter{name, init, true});
    return init;
}

Tensor ParameterStore::zeros(const std::string& name, Shape shape) {
    return add(name, Tensor::zeros(std::move(shape)));
}

Tensor ParameterStore::ones(const std::string& name, Shape shape) {
    return add(name, Tensor::full(std::move(shape), 1.0));
}

Tensor ParameterStore::uniform(const std::string& name, Shape shape, std::size_t fan_in) {
    return uniform_range(name, std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)));
}

Tensor ParameterStore::uniform_range(const std::string& name, Shape shape, double bound) {
    std::mt19937_64 rng(derive_seed(seed_, name));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = dist(rng);
    return add(name, Tensor::from(std::move(shape), std::move(values)));
}

bool ParameterStore::contains(const std::string& name) const { return index_.count(name) != 0; }

Parameter& ParameterStore::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
    return params_[it->second];
}

const Parameter& ParameterStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
    return params_[it->second];
}

void ParameterStore::set_trainable(const std::string& name, bool on) {
    Parameter& p = get(name);
    p.trainable = on;
    p.tensor.set_requires_grad(on);
}

void ParameterStore::set_all_trainable(bool on) {
    for (Parameter& p : params_) {
        p.trainable = on;
        p.tensor.set_requires_grad(on);
    }
}

void ParameterStore::set_trainable_if(const std::function<bool(const std::string&)>& match,
                                      bool on) {
    for (Parameter& p : params_) {
        if (match(p.name)) {
            p.trainable = on;
            p.tensor.set_requires_grad(on);
        }
    }
}

std::vector<std::string> ParameterStore::trainable_names() const {
    std::vector<std::string> names;
    for (const Parameter& p : params_) {
        if (p.trainable) names.push_back(p.name);
    }
    return names;
}

std::size_t ParameterStore::scalar_count(bool trainable_only) const {
    std::size_t n = 0;
    for (const Parameter& p : params_) {
        if (!trainable_only || p.trainable) n += p.tensor.numel();
    }
    return n;
}

void ParameterStore::zero_grad() {
    for (Parameter& p : params_) p.tensor.zero_grad();
}

}  // namespace gavs
