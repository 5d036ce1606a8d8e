#include "rsanet/tensor.hpp"

#include <sstream>

namespace rsanet {

int64_t shape_numel(const std::vector<int>& shape) {
    if (shape.empty()) throw ShapeError("tensor shape must be non-empty");
    int64_t n = 1;
    for (int d : shape) {
        if (d < 1) throw ShapeError("tensor dimensions must be >= 1, got " + shape_str(shape));
        if (n > (int64_t{1} << 31) / d) throw ShapeError("tensor too large: " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(std::vector<int> shp, float fill) : shape(std::move(shp)) {
    data.assign(static_cast<size_t>(shape_numel(shape)), fill);
}

Tensor::Tensor(std::vector<int> shp, std::vector<float> values) : shape(std::move(shp)), data(std::move(values)) {
    if (static_cast<int64_t>(data.size()) != shape_numel(shape)) {
        throw ShapeError("value count " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
    }
}

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
}

void Tensor::zero_grad() {
    grad.assign(data.size(), 0.0f);
}

}  // namespace rsanet
