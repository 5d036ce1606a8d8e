#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rsanet/errors.hpp"

namespace rsanet {

// Validates a shape (non-empty, every dim >= 1) and returns its element count.
int64_t shape_numel(const std::vector<int>& shape);

std::string shape_str(const std::vector<int>& shape);

// Dense row-major f32 tensor, the universal value type on the network path.
// `grad` stays empty until a backward pass allocates it.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;
    std::vector<float> grad;
    bool requires_grad = false;

    Tensor() = default;
    explicit Tensor(std::vector<int> shp, float fill = 0.0f);
    Tensor(std::vector<int> shp, std::vector<float> values);

    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(data.size()); }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    // Allocates the grad buffer (zero-filled) if absent.
    void ensure_grad();
    void zero_grad();

    static Tensor zeros(std::vector<int> shp) { return Tensor(std::move(shp), 0.0f); }
    static Tensor full(std::vector<int> shp, float v) { return Tensor(std::move(shp), v); }
};

}  // namespace rsanet
