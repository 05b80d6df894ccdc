#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dph {

/// A named float32 parameter tensor, row-major.
struct Tensor {
    std::string name;
    std::vector<std::int64_t> shape;
    std::vector<float> values;

    std::size_t size() const noexcept { return values.size(); }
};

std::size_t shape_size(std::span<const std::int64_t> shape);

/// Ordered collection of uniquely named tensors. Order is insertion order and
/// is what checkpoints serialize.
class ParamSet {
public:
    Tensor& add(std::string name, std::vector<std::int64_t> shape, float fill = 0.0F);

    bool contains(std::string_view name) const;
    std::size_t index_of(std::string_view name) const;

    Tensor& at(std::string_view name) { return tensors_[index_of(name)]; }
    const Tensor& at(std::string_view name) const { return tensors_[index_of(name)]; }
    Tensor& operator[](std::size_t i) { return tensors_[i]; }
    const Tensor& operator[](std::size_t i) const { return tensors_[i]; }

    std::size_t count() const noexcept { return tensors_.size(); }
    std::size_t scalar_count() const noexcept;
    bool empty() const noexcept { return tensors_.empty(); }

    auto begin() noexcept { return tensors_.begin(); }
    auto end() noexcept { return tensors_.end(); }
    auto begin() const noexcept { return tensors_.begin(); }
    auto end() const noexcept { return tensors_.end(); }

    /// Appends every tensor of `other`; names must not collide.
    void append(const ParamSet& other);
    /// Tensors whose names start with `prefix`, in order.
    ParamSet subset(std::string_view prefix) const;

    bool all_finite() const;
    friend bool operator==(const ParamSet& a, const ParamSet& b);

private:
    std::vector<Tensor> tensors_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// float64 gradients laid out exactly like a ParamSet.
class GradSet {
public:
    GradSet() = default;
    explicit GradSet(const ParamSet& params);

    std::span<double> operator[](std::size_t i) { return grads_[i]; }
    std::span<const double> operator[](std::size_t i) const { return grads_[i]; }
    std::size_t count() const noexcept { return grads_.size(); }

    void zero();
    void scale(double factor);
    double squared_norm() const;
    bool all_finite() const;

private:
    std::vector<std::vector<double>> grads_;
};

}  // namespace dph
