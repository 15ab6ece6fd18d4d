#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace seil::nn {

// Dense row-major float32 tensor.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s);

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int rows() const { return shape.empty() ? 0 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    float& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
    float operator()(int r, int c) const {
        return data[static_cast<std::size_t>(r) * cols() + c];
    }

    void fill(float v);
    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

Tensor zeros_like(const Tensor& t);

// Named parameter collection with optional EMA shadow and Adam state.
// Iteration order is declaration order and is stable across runs; the
// shadow and the optimizer moments mirror names and shapes exactly.
struct ParamSet {
    std::vector<std::string> names;
    std::vector<Tensor> values;
    std::vector<Tensor> ema;    // empty, or one shadow tensor per parameter
    std::vector<Tensor> adam_m; // empty, or one first-moment tensor per parameter
    std::vector<Tensor> adam_v;
    std::int64_t adam_step = 0;

    std::size_t size() const { return values.size(); }
    void add(std::string name, Tensor t);
    int index_of(const std::string& name) const; // -1 if absent
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;

    bool has_ema() const { return !ema.empty(); }
    bool has_adam() const { return !adam_m.empty(); }
    void init_ema_from_values();
    void init_adam_state();

    // Gradient mirror: same names/shapes, zero data, no shadow/optimizer state.
    ParamSet zeros_clone() const;

    std::int64_t total_elements() const;
    bool all_finite() const;
};

} // namespace seil::nn
