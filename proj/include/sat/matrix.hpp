#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace sat {

// Dense row-major float matrix. Used for spectrograms (bins x frames) and
// token grids (tokens x channels).
class Matrix {
public:
    Matrix() = default;
    Matrix(std::int64_t rows, std::int64_t cols, float fill = 0.0f)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows * cols), fill) {}

    std::int64_t rows() const { return rows_; }
    std::int64_t cols() const { return cols_; }
    std::int64_t size() const { return rows_ * cols_; }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }

    float& operator()(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * cols_ + c)]; }
    float operator()(std::int64_t r, std::int64_t c) const { return data_[static_cast<std::size_t>(r * cols_ + c)]; }

    std::span<float> row(std::int64_t r) { return {data_.data() + r * cols_, static_cast<std::size_t>(cols_)}; }
    std::span<const float> row(std::int64_t r) const {
        return {data_.data() + r * cols_, static_cast<std::size_t>(cols_)};
    }

    std::span<float> flat() { return data_; }
    std::span<const float> flat() const { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::int64_t rows_ = 0;
    std::int64_t cols_ = 0;
    std::vector<float> data_;
};

} // namespace sat
