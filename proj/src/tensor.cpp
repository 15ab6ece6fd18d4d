#include "seil/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace seil::nn {

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("Tensor: non-positive dimension");
        n *= d;
    }
    data.assign(static_cast<std::size_t>(n), 0.0f);
}

void Tensor::fill(float v) { std::fill(data.begin(), data.end(), v); }

Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

void ParamSet::add(std::string name, Tensor t) {
    names.push_back(std::move(name));
    values.push_back(std::move(t));
}

int ParamSet::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<int>(i);
    return -1;
}

Tensor& ParamSet::at(const std::string& name) {
    int i = index_of(name);
    if (i < 0) throw std::out_of_range("ParamSet: no parameter named " + name);
    return values[static_cast<std::size_t>(i)];
}

const Tensor& ParamSet::at(const std::string& name) const {
    int i = index_of(name);
    if (i < 0) throw std::out_of_range("ParamSet: no parameter named " + name);
    return values[static_cast<std::size_t>(i)];
}

void ParamSet::init_ema_from_values() { ema = values; }

void ParamSet::init_adam_state() {
    adam_m.clear();
    adam_v.clear();
    for (const Tensor& t : values) {
        adam_m.push_back(zeros_like(t));
        adam_v.push_back(zeros_like(t));
    }
    adam_step = 0;
}

ParamSet ParamSet::zeros_clone() const {
    ParamSet g;
    g.names = names;
    for (const Tensor& t : values) g.values.push_back(zeros_like(t));
    return g;
}

std::int64_t ParamSet::total_elements() const {
    std::int64_t n = 0;
    for (const Tensor& t : values) n += t.numel();
    return n;
}

bool ParamSet::all_finite() const {
    for (const Tensor& t : values)
        for (float v : t.data)
            if (!std::isfinite(v)) return false;
    return true;
}

} // namespace seil::nn
